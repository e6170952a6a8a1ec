//! End-to-end runs driven by a TOML config.
//!
//! A run lives in `<output_dir>/<name>-<hash8>`, where the hash covers the
//! normalized config and the bytes of every input file, so two different
//! experiments never share a directory. Stage outputs:
//!
//! ```text
//! props/<ds>.csv, props/<ds>.json   node properties (json is full precision)
//! prompts/<ds>.jsonl                one prompt per node
//! synth/<ds>.jsonl                  generated and final node texts
//! embed/<ds>-tans.bin               encoded final texts
//! embed/<ds>-text.bin               encoded original texts
//! features/<ds>-<kind>.bin          baselines and raw feature tables
//! metrics/<protocol>-...json        per-seed accuracies
//! report.md, report.csv
//! ```
//!
//! Each stage reuses its output file when present. Freshly computed outputs
//! are written and read back before use, so a cached rerun sees exactly the
//! values a cold run saw.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::encoder::{encode_hashed_with, encode_remote, EmbeddingMatrix, FeatureSource};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSpec};
use crate::gnn::{
    evaluate_seeds, presets, run_domain_adaptation, run_pretrain_finetune, train, Backbone, Metrics, MetricsReport,
    TrainConfig,
};
use crate::graph::{attach_node_table, load_edge_list, EdgeListFormat, Graph, TextRegime};
use crate::llm::{
    read_records, synthesize_node_texts, write_records, Backend, LlmClient, ResponseCache, SynthOptions, TextRecord,
};
use crate::par::Execution;
use crate::prompt::{build_prompts_with, read_jsonl, write_jsonl, PromptBundle};
use crate::split::{make_da_split, make_high_label_split, make_low_label_split, SplitSpec};
use crate::topo::{compute_all_with, NodeProperties};

pub use config::{
    parse_seed_list, DatasetConfig, EncoderBackendKind, EncoderSettings, FeatureChoice, LlmBackendKind, LlmSettings,
    PipelineConfig, Protocol, SplitConfig, SplitKind,
};
pub use report::{load_metrics, render_csv, render_markdown, write_report, RunMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Props,
    Prompts,
    Synth,
    Embed,
    Features,
    Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Computed,
    Cached,
    /// Transfer cell left out because feature widths differ.
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageEvent {
    pub stage: Stage,
    pub key: String,
    pub status: Status,
}

/// Removes the lock file when dropped.
#[derive(Debug)]
struct RunLock {
    path: PathBuf,
}

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Reads a numeric feature table. Each line holds a node id followed by
/// its values; a trailing non-numeric token (a class label) is ignored.
/// Whitespace and comma separated tables are accepted. Every graph node
/// must have a row.
pub fn load_feature_table(path: &Path, g: &Graph) -> Result<EmbeddingMatrix> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let index: BTreeMap<&str, usize> = g.external_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let n = g.num_nodes();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut dim = None;
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let mut tokens: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let id = tokens.remove(0);
        if tokens.last().is_some_and(|t| t.parse::<f64>().is_err()) {
            tokens.pop();
        }
        let values = tokens
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(format!("'{t}' is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        if *dim.get_or_insert(values.len()) != values.len() {
            return Err(parse_err(format!("expected {} values, got {}", dim.unwrap(), values.len())));
        }
        // Rows for nodes outside the edge list are dropped, as they are when
        // loading the graph itself.
        if let Some(&v) = index.get(id) {
            rows[v] = Some(values);
        }
    }
    let dim = dim.ok_or_else(|| Error::MatrixFormat {
        path: path.to_path_buf(),
        message: "no rows".into(),
    })?;
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(v, r)| r.ok_or_else(|| Error::UnknownNode(format!("{} has no feature row", g.external_ids()[v]))))
        .collect::<Result<Vec<_>>>()?;
    let name = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    EmbeddingMatrix::from_rows(rows, dim, FeatureSource::Baseline, format!("raw:{name}"))
}

pub struct Pipeline {
    config: PipelineConfig,
    run_dir: PathBuf,
    exec: Execution,
    graphs: BTreeMap<String, Graph>,
    props: BTreeMap<String, NodeProperties>,
    events: Vec<StageEvent>,
    remote_calls: usize,
    _lock: RunLock,
}

impl Pipeline {
    /// Validates the config, creates and locks the run directory, and loads
    /// every dataset.
    pub fn open(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.content_hash()?;
        let run_dir = config.resolve(&config.output_dir).join(format!("{}-{}", config.name, &hash[..8]));
        fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
        let lock = RunLock::acquire(&run_dir)?;
        let cfg_path = run_dir.join("config.json");
        fs::write(&cfg_path, serde_json::to_string_pretty(&config.normalized())?).map_err(|e| Error::io(&cfg_path, e))?;
        let mut graphs = BTreeMap::new();
        for d in &config.datasets {
            graphs.insert(d.name.clone(), load_dataset(&config, d)?);
        }
        let exec = if config.parallel { Execution::Parallel } else { Execution::Sequential };
        log::info!("run directory {}", run_dir.display());
        Ok(Pipeline {
            config,
            run_dir,
            exec,
            graphs,
            props: BTreeMap::new(),
            events: Vec::new(),
            remote_calls: 0,
            _lock: lock,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn graph(&self, ds: &str) -> Result<&Graph> {
        self.graphs
            .get(ds)
            .ok_or_else(|| Error::Config(format!("no dataset named '{ds}'")))
    }

    /// Every stage outcome so far, in execution order.
    pub fn events(&self) -> &[StageEvent] {
        &self.events
    }

    /// Requests that reached a remote LLM service.
    pub fn remote_calls(&self) -> usize {
        self.remote_calls
    }

    fn dataset_names(&self) -> Vec<String> {
        self.config.datasets.iter().map(|d| d.name.clone()).collect()
    }

    fn stage_path(&self, dir: &str, file: &str) -> Result<PathBuf> {
        let d = self.run_dir.join(dir);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d.join(file))
    }

    fn record(&mut self, stage: Stage, key: impl Into<String>, status: Status) {
        let key = key.into();
        log::info!("{stage:?} {key}: {status:?}");
        self.events.push(StageEvent { stage, key, status });
    }

    pub fn props(&mut self, ds: &str) -> Result<NodeProperties> {
        if let Some(p) = self.props.get(ds) {
            return Ok(p.clone());
        }
        let json = self.stage_path("props", &format!("{ds}.json"))?;
        if json.exists() {
            self.record(Stage::Props, ds, Status::Cached);
        } else {
            let props = compute_all_with(self.graph(ds)?, self.exec)?;
            props.write_csv(&json.with_extension("csv"))?;
            fs::write(&json, serde_json::to_string(&props)?).map_err(|e| Error::io(&json, e))?;
            self.record(Stage::Props, ds, Status::Computed);
        }
        let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let props: NodeProperties = serde_json::from_str(&text)?;
        self.props.insert(ds.to_string(), props.clone());
        Ok(props)
    }

    pub fn prompts(&mut self, ds: &str) -> Result<Vec<PromptBundle>> {
        let path = self.stage_path("prompts", &format!("{ds}.jsonl"))?;
        if path.exists() {
            self.record(Stage::Prompts, ds, Status::Cached);
        } else {
            let props = self.props(ds)?;
            let bundles = build_prompts_with(self.graph(ds)?, &props, &self.config.prompt, self.exec)?;
            write_jsonl(&bundles, &path)?;
            self.record(Stage::Prompts, ds, Status::Computed);
        }
        read_jsonl(&path)
    }

    pub fn synth(&mut self, ds: &str) -> Result<Vec<TextRecord>> {
        let path = self.stage_path("synth", &format!("{ds}.jsonl"))?;
        if path.exists() {
            self.record(Stage::Synth, ds, Status::Cached);
        } else {
            let bundles = self.prompts(ds)?;
            let llm = &self.config.llm;
            let (backend, cache) = match llm.backend {
                LlmBackendKind::Mock => (Backend::Mock, None),
                LlmBackendKind::Remote => (
                    Backend::Remote(llm.remote.clone()),
                    Some(ResponseCache::new(self.config.cache_dir().join("llm"))?),
                ),
            };
            let client = LlmClient::new(backend, cache);
            let opts = SynthOptions {
                concurrency: llm.concurrency,
                model: llm.model.clone(),
                max_tokens: llm.max_tokens,
                temperature: llm.temperature,
            };
            let records = synthesize_node_texts(self.graph(ds)?, &bundles, &client, &opts)?;
            self.remote_calls += client.remote_calls();
            write_records(&records, &path)?;
            self.record(Stage::Synth, ds, Status::Computed);
        }
        read_records(&path)
    }

    fn encode(&self, texts: &[String]) -> Result<EmbeddingMatrix> {
        let enc = &self.config.encoder;
        match enc.backend {
            EncoderBackendKind::Hashed => encode_hashed_with(texts, enc.dim, enc.seed, self.exec),
            EncoderBackendKind::Remote => encode_remote(texts, &enc.remote),
        }
    }

    fn cached_matrix(
        &mut self,
        stage: Stage,
        dir: &str,
        file: String,
        compute: impl FnOnce(&mut Self) -> Result<EmbeddingMatrix>,
    ) -> Result<EmbeddingMatrix> {
        let path = self.stage_path(dir, &file)?;
        if path.exists() {
            self.record(stage, file, Status::Cached);
        } else {
            compute(self)?.save(&path)?;
            self.record(stage, file, Status::Computed);
        }
        EmbeddingMatrix::load(&path)
    }

    /// Encoded final texts.
    pub fn tans_embedding(&mut self, ds: &str) -> Result<EmbeddingMatrix> {
        self.cached_matrix(Stage::Embed, "embed", format!("{ds}-tans.bin"), |p| {
            let texts: Vec<String> = p.synth(ds)?.into_iter().map(|r| r.final_text).collect();
            p.encode(&texts)
        })
    }

    /// Encoded original node texts; fails on text-free graphs.
    pub fn text_embedding(&mut self, ds: &str) -> Result<EmbeddingMatrix> {
        self.cached_matrix(Stage::Embed, "embed", format!("{ds}-text.bin"), |p| {
            let g = p.graph(ds)?;
            let texts = match g.texts() {
                Some(t) if g.meta.text_regime.has_text() => t.to_vec(),
                _ => return Err(Error::Config(format!("dataset '{ds}' has no node text"))),
            };
            p.encode(&texts)
        })
    }

    fn raw_features(&mut self, ds: &str) -> Result<EmbeddingMatrix> {
        self.cached_matrix(Stage::Features, "features", format!("{ds}-raw.bin"), |p| {
            let d = p.config.dataset(ds)?;
            let path = d
                .raw_features
                .as_ref()
                .ok_or_else(|| Error::Config(format!("dataset '{ds}' has no raw_features table")))?;
            load_feature_table(&p.config.resolve(path), p.graph(ds)?)
        })
    }

    /// Node features for one dataset and feature choice.
    pub fn features(&mut self, ds: &str, choice: FeatureChoice) -> Result<EmbeddingMatrix> {
        match choice {
            FeatureChoice::Tans => self.tans_embedding(ds),
            FeatureChoice::OriginalText => self.text_embedding(ds),
            FeatureChoice::Raw => self.raw_features(ds),
            FeatureChoice::Baseline(kind) => {
                self.cached_matrix(Stage::Features, "features", format!("{ds}-{choice}.bin"), |p| {
                    let spec = FeatureSpec {
                        dim: p.config.feature_dim,
                        ..FeatureSpec::new(kind)
                    };
                    let props = if kind == FeatureKind::Tpf { Some(p.props(ds)?) } else { None };
                    // SVD alignment projects the raw table, or the encoded
                    // original text when there is no table.
                    let base = match kind {
                        FeatureKind::SvdAligned if p.config.dataset(ds)?.raw_features.is_some() => Some(p.raw_features(ds)?),
                        FeatureKind::SvdAligned => Some(p.text_embedding(ds)?),
                        _ => None,
                    };
                    spec.build(p.graph(ds)?, props.as_ref(), base.as_ref())
                })
            }
        }
    }

    pub fn run_props(&mut self) -> Result<()> {
        for ds in self.dataset_names() {
            self.props(ds.as_str())?;
        }
        Ok(())
    }

    pub fn run_synth(&mut self) -> Result<()> {
        for ds in self.dataset_names() {
            self.synth(&ds)?;
        }
        Ok(())
    }

    /// Encodes every dataset whose text features are requested.
    pub fn run_embed(&mut self) -> Result<()> {
        for ds in self.dataset_names() {
            for choice in self.config.features.clone() {
                if matches!(choice, FeatureChoice::Tans | FeatureChoice::OriginalText) {
                    self.features(&ds, choice)?;
                }
            }
        }
        self.check_text_widths()
    }

    /// One encoder gives one width for every graph.
    fn check_text_widths(&mut self) -> Result<()> {
        if !self.config.features.contains(&FeatureChoice::Tans) {
            return Ok(());
        }
        let mut widths = Vec::new();
        for ds in self.dataset_names() {
            widths.push(self.tans_embedding(&ds)?.dim);
        }
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "one encoder produced widths {widths:?}");
        Ok(())
    }

    pub fn run_features(&mut self) -> Result<()> {
        for ds in self.dataset_names() {
            for choice in self.config.features.clone() {
                self.features(&ds, choice)?;
            }
        }
        Ok(())
    }

    fn train_config(&self, src: &str, tgt: Option<&str>, backbone: Backbone) -> Result<TrainConfig> {
        let regime = |ds: &str| self.graph(ds).map(|g| g.meta.text_regime);
        let preset = match (self.config.protocol, tgt) {
            _ if self.config.train.is_some() => self.config.train.clone(),
            (Protocol::Single, _) => presets::basic(src, regime(src)?),
            (Protocol::Da, Some(t)) => presets::domain_adaptation(src, t),
            (Protocol::Pt, Some(t)) => presets::pretrain_finetune(src, t, regime(t)?),
            _ => None,
        };
        let cfg = preset.unwrap_or_else(|| {
            log::info!("no tuned preset for {src}{}; using defaults", tgt.map(|t| format!(" -> {t}")).unwrap_or_default());
            TrainConfig::default()
        });
        Ok(TrainConfig { backbone, ..cfg })
    }

    fn split(&self, ds: &str, seed: u64) -> Result<SplitSpec> {
        let g = self.graph(ds)?;
        let s = &self.config.dataset(ds)?.split;
        match s.kind {
            SplitKind::Low => make_low_label_split(g, s.train_per_class, s.val_per_class, seed),
            SplitKind::High => make_high_label_split(g, s.ratios, seed),
        }
    }

    fn evaluate_cell(
        &mut self,
        file: String,
        dataset_label: String,
        backbone: Backbone,
        choice: FeatureChoice,
        run: impl FnOnce(&Self) -> Result<Option<Metrics>>,
    ) -> Result<Option<MetricsReport>> {
        let path = self.stage_path("metrics", &file)?;
        if path.exists() {
            self.record(Stage::Metrics, file, Status::Cached);
        } else {
            let Some(m) = run(self)? else {
                self.record(Stage::Metrics, file, Status::Skipped);
                return Ok(None);
            };
            let report = MetricsReport::new(self.config.protocol.as_str(), &dataset_label, backbone, choice.key(), &m);
            fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(|e| Error::io(&path, e))?;
            self.record(Stage::Metrics, file, Status::Computed);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Runs the configured protocol over every dataset (or pair), backbone
    /// and feature choice, then writes the run report.
    pub fn run_protocol(&mut self) -> Result<Vec<MetricsReport>> {
        if self.config.features.contains(&FeatureChoice::Tans) {
            self.run_embed()?;
        }
        let mut out = Vec::new();
        let backbones = self.config.backbones.clone();
        let choices = self.config.features.clone();
        let protocol = self.config.protocol;
        match protocol {
            Protocol::Single => {
                for ds in self.dataset_names() {
                    for &backbone in &backbones {
                        for &choice in &choices {
                            let x = self.features(&ds, choice)?;
                            let cfg = self.train_config(&ds, None, backbone)?;
                            let file = format!("single-{ds}-{}-{choice}.json", backbone_key(backbone));
                            let seeds = self.config.seeds.clone();
                            let cell = self.evaluate_cell(file, ds.clone(), backbone, choice, |p| {
                                let g = p.graph(&ds)?;
                                evaluate_seeds(&seeds, p.exec, |seed| {
                                    let split = p.split(&ds, seed)?;
                                    Ok(train(g, &x, &split, &cfg.with_seed(seed))?.accuracy)
                                })
                                .map(Some)
                            })?;
                            out.extend(cell);
                        }
                    }
                }
            }
            Protocol::Da | Protocol::Pt => {
                for (src, tgt) in self.config.transfer_pairs() {
                    for &backbone in &backbones {
                        for &choice in &choices {
                            let xs = self.features(&src, choice)?;
                            let xt = self.features(&tgt, choice)?;
                            let cfg = self.train_config(&src, Some(&tgt), backbone)?;
                            let file = format!(
                                "{}-{src}-{tgt}-{}-{choice}.json",
                                protocol.as_str(),
                                backbone_key(backbone)
                            );
                            let seeds = self.config.seeds.clone();
                            let skip = self.config.skip_unaligned && xs.dim != xt.dim;
                            let label = format!("{src}->{tgt}");
                            let cell = self.evaluate_cell(file, label, backbone, choice, |p| {
                                if skip {
                                    log::warn!("{choice}: {src} has {} dims, {tgt} has {}; skipped", xs.dim, xt.dim);
                                    return Ok(None);
                                }
                                let (gs, gt) = (p.graph(&src)?, p.graph(&tgt)?);
                                let da_frac = p.config.dataset(&tgt)?.split.da_val_frac;
                                evaluate_seeds(&seeds, p.exec, |seed| {
                                    let cfg = cfg.with_seed(seed);
                                    if protocol == Protocol::Da {
                                        let split = make_da_split(gt, da_frac, seed)?;
                                        Ok(run_domain_adaptation(gs, &xs, gt, &xt, &split, &cfg)?.accuracy)
                                    } else {
                                        let split = p.split(&tgt, seed)?;
                                        Ok(run_pretrain_finetune(gs, &xs, gt, &xt, &split, &cfg)?.finetune.accuracy)
                                    }
                                })
                                .map(Some)
                            })?;
                            out.extend(cell);
                        }
                    }
                }
            }
        }
        write_report(std::slice::from_ref(&self.run_dir), &self.run_dir)?;
        Ok(out)
    }
}

fn backbone_key(b: Backbone) -> &'static str {
    match b {
        Backbone::Gcn => "gcn",
        Backbone::Mlp => "mlp",
    }
}

fn load_dataset(cfg: &PipelineConfig, d: &DatasetConfig) -> Result<Graph> {
    let edges = cfg.resolve(&d.edges);
    let mut g = load_edge_list(&edges, EdgeListFormat::from_path(&edges))?;
    g.meta.graph_type = d.graph_type.clone();
    g.meta.node_type = d.node_type.clone();
    g.meta.edge_type = d.edge_type.clone();
    g.meta.class_names = d.class_names.clone();
    if let Some(nodes) = &d.nodes {
        g = attach_node_table(g, &cfg.resolve(nodes))?;
    }
    if let Some(regime) = d.text_regime {
        if regime.has_text() && g.texts().is_none() {
            return Err(Error::Config(format!("dataset '{}' is {regime:?} but has no text column", d.name)));
        }
        g.meta.text_regime = regime;
    }
    if g.meta.text_regime == TextRegime::TextFree {
        g.clear_texts();
    }
    let report = g.validate()?;
    if !report.isolated_nodes.is_empty() {
        log::warn!("{}: {} isolated node(s)", d.name, report.isolated_nodes.len());
    }
    Ok(g)
}

/// The run directory [`Pipeline::open`] would use, without creating it.
pub fn run_dir_for(config: &PipelineConfig) -> Result<PathBuf> {
    config.validate()?;
    let hash = config.content_hash()?;
    Ok(config.resolve(&config.output_dir).join(format!("{}-{}", config.name, &hash[..8])))
}
