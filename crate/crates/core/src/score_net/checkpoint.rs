//! Binary checkpoints: fixed header, then named `f64` arrays in little-endian
//! order, plus a JSON sidecar describing the array shapes.
//!
//! Header layout (all little-endian):
//! `b"SGLCKPT\0"`, version `u32`, kind `u32` (0 random-feature, 1 Swish),
//! `d u32`, `width u32`, `d_e u32`, `seed u64`, `horizon f64`, `n_arrays u32`,
//! then per array `len u64` followed by `len` values.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelKind, RandomFeatureNet, ScoreModel, SwishMlp, TimeEmbedding};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SGLCKPT\0";
const VERSION: u32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub d: usize,
    pub width: usize,
    pub d_e: usize,
    pub seed: u64,
    pub horizon: f64,
    pub arrays: Vec<ArrayShape>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

fn arrays_of(model: &ScoreModel) -> Vec<(ArrayShape, &[f64])> {
    let (d, w, de) = (model.dim(), model.width(), model.embedding().dim);
    match model {
        ScoreModel::RandomFeature(n) => vec![
            (
                ArrayShape {
                    name: "W".into(),
                    shape: vec![w, d],
                },
                n.w(),
            ),
            (
                ArrayShape {
                    name: "U".into(),
                    shape: vec![w, de],
                },
                n.u(),
            ),
            (
                ArrayShape {
                    name: "A".into(),
                    shape: vec![d, w],
                },
                n.a(),
            ),
        ],
        ScoreModel::Swish(n) => vec![
            (
                ArrayShape {
                    name: "params".into(),
                    shape: vec![n.params().len()],
                },
                n.params(),
            ),
            (
                ArrayShape {
                    name: "readout_scale".into(),
                    shape: vec![1],
                },
                std::slice::from_ref(n.readout_scale_ref()),
            ),
        ],
    }
}

/// Writes `path` and its `<path>.json` sidecar; returns both paths.
pub fn save_checkpoint(model: &ScoreModel, path: &Path) -> Result<Vec<PathBuf>> {
    let arrays = arrays_of(model);
    let emb = model.embedding();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let kind: u32 = match model.kind() {
        ModelKind::RandomFeature => 0,
        ModelKind::Swish => 1,
    };
    for v in [
        kind,
        model.dim() as u32,
        model.width() as u32,
        emb.dim as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&model.init_seed().to_le_bytes());
    buf.extend_from_slice(&emb.horizon.to_le_bytes());
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (_, values) in &arrays {
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in *values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    let meta = CheckpointMeta {
        kind: model.kind(),
        d: model.dim(),
        width: model.width(),
        d_e: emb.dim,
        seed: model.init_seed(),
        horizon: emb.horizon,
        arrays: arrays.into_iter().map(|(s, _)| s).collect(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&meta)?)?;
    Ok(vec![path.to_path_buf(), side])
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

/// Reads a checkpoint written by [`save_checkpoint`]; the sidecar is not required.
pub fn load_checkpoint(path: &Path) -> Result<ScoreModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if &c.take::<8>()? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let kind = c.u32()?;
    let (d, width, de) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let seed = c.u64()?;
    let horizon = c.f64()?;
    let n_arrays = c.u32()? as usize;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let len = c.u64()? as usize;
        if len > bytes.len() / 8 {
            return Err(Error::Checkpoint("array length exceeds file size".into()));
        }
        arrays.push((0..len).map(|_| c.f64()).collect::<Result<Vec<f64>>>()?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let emb = TimeEmbedding::new(de, horizon);
    let bad_shape = || Error::Checkpoint("array shapes do not match header".into());
    match (kind, arrays.as_mut_slice()) {
        (0, [w, u, a]) => {
            if w.len() != width * d || u.len() != width * de || a.len() != d * width {
                return Err(bad_shape());
            }
            let (w, u, a) = (std::mem::take(w), std::mem::take(u), std::mem::take(a));
            Ok(ScoreModel::RandomFeature(RandomFeatureNet::from_parts(
                d, width, emb, w, u, a, seed,
            )))
        }
        (1, [p, scale]) => {
            if p.len() != SwishMlp::param_count(d, width, de) || scale.len() != 1 {
                return Err(bad_shape());
            }
            let net = SwishMlp::from_parts(d, width, emb, std::mem::take(p), seed);
            Ok(ScoreModel::Swish(net.with_readout_scale(scale[0])))
        }
        _ => Err(Error::Checkpoint(format!(
            "unknown model kind {kind} with {n_arrays} arrays"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = crate::seed::rng_from_seed(3);
        let mut rf = ScoreModel::random_feature(2, 7, 4, 2.5, 11);
        rf.params_mut()
            .iter_mut()
            .for_each(|a| *a = rng.random::<f64>() * 1e-7 - 3.0);
        let sw = ScoreModel::swish(1, 9, 3, 1.0, 12);
        let ScoreModel::Swish(net) = sw else {
            unreachable!()
        };
        let sw = ScoreModel::Swish(net.with_readout_scale(0.3));
        for (i, model) in [rf, sw].into_iter().enumerate() {
            let path = dir.path().join(format!("m{i}.bin"));
            let written = save_checkpoint(&model, &path).unwrap();
            assert_eq!(written.len(), 2);
            let back = load_checkpoint(&path).unwrap();
            assert_eq!(back, model);
            let meta: CheckpointMeta =
                serde_json::from_str(&std::fs::read_to_string(&written[1]).unwrap()).unwrap();
            assert_eq!(meta.kind, model.kind());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&ScoreModel::random_feature(1, 3, 4, 1.0, 0), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
