use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mat::Mat;
use super::model::{Backbone, BatchNorm, GnnModel, Layer};
use super::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TANSGNN1";

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: TrainConfig,
    backbone: Backbone,
    dims: Vec<usize>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Little-endian layout: magic, backbone (u8), dropout (f64), layer count
/// (u64), then per layer `d_in, d_out` (u64), `has_w2, has_bn` (u8) and the
/// f64 values of W1, W2, bias and batchnorm scale/shift/mean/var.
/// The training config goes to `<path>.json`.
pub fn save_checkpoint(model: &GnnModel, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(matches!(model.backbone, Backbone::Mlp) as u8);
    buf.extend_from_slice(&model.dropout.to_le_bytes());
    buf.extend_from_slice(&(model.layers.len() as u64).to_le_bytes());
    let put = |buf: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
    for l in &model.layers {
        buf.extend_from_slice(&(l.d_in() as u64).to_le_bytes());
        buf.extend_from_slice(&(l.d_out() as u64).to_le_bytes());
        buf.push(l.w2.is_some() as u8);
        buf.push(l.bn.is_some() as u8);
        put(&mut buf, &l.w1.data);
        if let Some(w2) = &l.w2 {
            put(&mut buf, &w2.data);
        }
        put(&mut buf, &l.bias);
        if let Some(bn) = &l.bn {
            for xs in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                put(&mut buf, xs);
            }
        }
    }
    fs::write(path, &buf).map_err(|e| Error::io(path, e))?;
    let mut dims = vec![model.input_dim()];
    dims.extend(model.layers.iter().map(Layer::d_out));
    let sidecar = Sidecar {
        config: cfg.clone(),
        backbone: model.backbone,
        dims,
    };
    let sc = sidecar_path(path);
    fs::write(&sc, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&sc, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::MatrixFormat {
            path: self.path.to_path_buf(),
            message: "truncated checkpoint".into(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::MatrixFormat {
            path: self.path.to_path_buf(),
            message: "layer size overflows".into(),
        })?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(GnnModel, TrainConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::MatrixFormat {
            path: path.to_path_buf(),
            message: "not a checkpoint".into(),
        });
    }
    let backbone = if r.u8()? == 1 { Backbone::Mlp } else { Backbone::Gcn };
    let dropout = r.f64s(1)?[0];
    let num_layers = r.u64()?;
    let mut layers = Vec::new();
    for _ in 0..num_layers {
        let (d_in, d_out) = (r.u64()?, r.u64()?);
        let (has_w2, has_bn) = (r.u8()? == 1, r.u8()? == 1);
        let w1 = Mat::from_vec(d_in, d_out, r.f64s(d_in * d_out)?);
        let w2 = if has_w2 {
            Some(Mat::from_vec(d_in, d_out, r.f64s(d_in * d_out)?))
        } else {
            None
        };
        let bias = r.f64s(d_out)?;
        let bn = if has_bn {
            Some(BatchNorm {
                gamma: r.f64s(d_out)?,
                beta: r.f64s(d_out)?,
                running_mean: r.f64s(d_out)?,
                running_var: r.f64s(d_out)?,
            })
        } else {
            None
        };
        layers.push(Layer { w1, w2, bias, bn });
    }
    if r.pos != bytes.len() {
        return Err(Error::MatrixFormat {
            path: path.to_path_buf(),
            message: "trailing bytes after last layer".into(),
        });
    }
    let sc = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(&sc).map_err(|e| Error::io(&sc, e))?)?;
    Ok((
        GnnModel {
            backbone,
            layers,
            dropout,
        },
        sidecar.config,
    ))
}
