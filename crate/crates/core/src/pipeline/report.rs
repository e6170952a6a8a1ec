//! Markdown and CSV summaries over one or more run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{FeatureChoice, PipelineConfig, Protocol};
use crate::error::{Error, Result};
use crate::gnn::{Backbone, MetricsReport};

/// Metrics files of one run plus the orderings its config implies.
#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub name: String,
    pub datasets: Vec<String>,
    pub backbones: Vec<Backbone>,
    pub features: Vec<String>,
    pub reports: Vec<MetricsReport>,
}

pub fn load_metrics(run_dir: &Path) -> Result<RunMetrics> {
    let metrics_dir = run_dir.join("metrics");
    let mut files: Vec<PathBuf> = match fs::read_dir(&metrics_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if files.is_empty() {
        return Err(Error::Config(format!("no metrics found in {}", run_dir.display())));
    }
    files.sort();
    let reports = files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str::<MetricsReport>(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let cfg_path = run_dir.join("config.json");
    let cfg: Option<PipelineConfig> = fs::read_to_string(&cfg_path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());
    let mut datasets: Vec<String> = cfg
        .as_ref()
        .map(|c| c.datasets.iter().map(|d| d.name.clone()).collect())
        .unwrap_or_default();
    let mut backbones = cfg.as_ref().map(|c| c.backbones.clone()).unwrap_or_default();
    let mut features: Vec<String> = cfg
        .as_ref()
        .map(|c| c.features.iter().map(|f| f.key().to_string()).collect())
        .unwrap_or_default();
    for r in &reports {
        for ds in r.dataset.split("->") {
            push_new(&mut datasets, ds.to_string());
        }
        if !backbones.contains(&r.backbone) {
            backbones.push(r.backbone);
        }
        push_new(&mut features, r.feature_kind.clone());
    }
    let name = run_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| run_dir.display().to_string());
    Ok(RunMetrics {
        name,
        datasets,
        backbones,
        features,
        reports,
    })
}

fn push_new(v: &mut Vec<String>, s: String) {
    if !v.contains(&s) {
        v.push(s);
    }
}

fn backbone_name(b: Backbone) -> &'static str {
    match b {
        Backbone::Gcn => "GCN",
        Backbone::Mlp => "MLP",
    }
}

fn protocol_title(p: &str) -> &str {
    match p {
        "single" => "Node classification",
        "da" => "Domain adaptation (source → target)",
        "pt" => "Pretrain on source, finetune on target",
        other => other,
    }
}

/// Column keys for one protocol: dataset names, or `src->tgt` grouped by
/// source in dataset order.
fn columns(runs: &[RunMetrics], protocol: &str) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for run in runs {
        for ds in &run.datasets {
            push_new(&mut order, ds.clone());
        }
    }
    let present = |key: &str| {
        runs.iter()
            .any(|r| r.reports.iter().any(|m| m.protocol == protocol && m.dataset == key))
    };
    if protocol == Protocol::Single.as_str() {
        return order.into_iter().filter(|d| present(d)).collect();
    }
    let mut out = Vec::new();
    for s in &order {
        for t in &order {
            let key = format!("{s}->{t}");
            if s != t && present(&key) {
                out.push(key);
            }
        }
    }
    out
}

struct Row<'a> {
    label: String,
    run: &'a RunMetrics,
    backbone: Backbone,
    feature: &'a str,
}

fn rows<'a>(runs: &'a [RunMetrics], protocol: &str) -> Vec<Row<'a>> {
    let mut out = Vec::new();
    for run in runs {
        for &backbone in &run.backbones {
            for feature in &run.features {
                let any = run
                    .reports
                    .iter()
                    .any(|m| m.protocol == protocol && m.backbone == backbone && &m.feature_kind == feature);
                if !any {
                    continue;
                }
                let mut label = format!("{} + {}", backbone_name(backbone), FeatureChoice::display_name_of(feature));
                if runs.len() > 1 {
                    label = format!("[{}] {label}", run.name);
                }
                out.push(Row {
                    label,
                    run,
                    backbone,
                    feature,
                });
            }
        }
    }
    out
}

fn cell<'a>(row: &Row<'a>, protocol: &str, column: &str) -> Option<&'a MetricsReport> {
    row.run.reports.iter().find(|m| {
        m.protocol == protocol && m.dataset == column && m.backbone == row.backbone && m.feature_kind == row.feature
    })
}

fn protocols(runs: &[RunMetrics]) -> Vec<String> {
    let mut out = Vec::new();
    for p in [Protocol::Single, Protocol::Da, Protocol::Pt] {
        if runs.iter().any(|r| r.reports.iter().any(|m| m.protocol == p.as_str())) {
            out.push(p.as_str().to_string());
        }
    }
    out
}

/// One table per protocol. Cells are `mean ± std` in percent with two
/// decimals; `Avg` is the mean of a row's cell means and needs every cell.
pub fn render_markdown(runs: &[RunMetrics]) -> String {
    let mut out = String::new();
    for protocol in protocols(runs) {
        let cols = columns(runs, &protocol);
        let header: Vec<String> = cols.iter().map(|c| c.replace("->", " → ")).collect();
        writeln!(out, "## {}\n", protocol_title(&protocol)).unwrap();
        writeln!(out, "| Method | {} | Avg |", header.join(" | ")).unwrap();
        writeln!(out, "|---|{}---|", "---|".repeat(cols.len())).unwrap();
        for row in rows(runs, &protocol) {
            let cells: Vec<Option<&MetricsReport>> = cols.iter().map(|c| cell(&row, &protocol, c)).collect();
            let text: Vec<String> = cells
                .iter()
                .map(|c| c.map_or("-".into(), |m| m.metrics().summary()))
                .collect();
            let avg = if cells.iter().all(Option::is_some) {
                let sum: f64 = cells.iter().map(|c| c.unwrap().mean).sum();
                format!("{:.2}", 100.0 * sum / cells.len() as f64)
            } else {
                "-".into()
            };
            writeln!(out, "| {} | {} | {avg} |", row.label, text.join(" | ")).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Long format, one line per metrics file; accuracies in percent.
pub fn render_csv(runs: &[RunMetrics]) -> String {
    let mut out = String::from("run,protocol,dataset,backbone,feature,seeds,mean,std\n");
    for run in runs {
        for m in &run.reports {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.4},{:.4}",
                run.name,
                m.protocol,
                m.dataset,
                backbone_name(m.backbone).to_lowercase(),
                m.feature_kind,
                m.seeds.len(),
                100.0 * m.mean,
                100.0 * m.std
            )
            .unwrap();
        }
    }
    out
}

/// Writes `report.md` and `report.csv` into `out_dir`.
pub fn write_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<()> {
    if run_dirs.is_empty() {
        return Err(Error::Config("no run directories given".into()));
    }
    let runs = run_dirs.iter().map(|d| load_metrics(d)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (file, body) in [("report.md", render_markdown(&runs)), ("report.csv", render_csv(&runs))] {
        let p = out_dir.join(file);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}
