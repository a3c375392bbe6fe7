//! Binary model checkpoints with a JSON sidecar.
//!
//! Layout (little-endian): magic `SGCK`, u16 version, u16 reserved,
//! u32-prefixed model kind, u32-prefixed config JSON, u64 Adam step,
//! u32 tensor count `k`, then `3k` tensors (parameters, first moments,
//! second moments). Each tensor is u32 rank (always 2), u64 per dimension,
//! then row-major f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::gcn::GcnConfig;
use super::logreg::LogRegConfig;
use super::mlp::MlpConfig;
use super::model::ModelState;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Model configs that can be written to a checkpoint.
pub trait Checkpointable: Serialize + DeserializeOwned + Sized {
    const KIND: &'static str;

    /// Shapes of a fresh model's parameters, used to validate loaded files.
    fn param_shapes(&self) -> Result<Vec<(usize, usize)>>;
}

impl Checkpointable for MlpConfig {
    const KIND: &'static str = "mlp";

    fn param_shapes(&self) -> Result<Vec<(usize, usize)>> {
        Ok(ModelState::<MlpConfig>::new(self.clone())?.params.iter().map(|p| p.dim()).collect())
    }
}

impl Checkpointable for GcnConfig {
    const KIND: &'static str = "gcn";

    fn param_shapes(&self) -> Result<Vec<(usize, usize)>> {
        Ok(ModelState::<GcnConfig>::new(self.clone())?.params.iter().map(|p| p.dim()).collect())
    }
}

impl Checkpointable for LogRegConfig {
    const KIND: &'static str = "logreg";

    fn param_shapes(&self) -> Result<Vec<(usize, usize)>> {
        Ok(vec![(self.input_dim, 1), (1, 1)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u16,
    pub kind: String,
    pub step: u64,
    pub n_parameters: usize,
    pub shapes: Vec<(usize, usize)>,
    pub config: serde_json::Value,
    /// Free-form run information supplied by the caller.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub run: serde_json::Value,
}

fn write_tensor<W: Write>(w: &mut W, t: &Array2<f64>) -> std::io::Result<()> {
    w.write_u32::<LE>(2)?;
    w.write_u64::<LE>(t.nrows() as u64)?;
    w.write_u64::<LE>(t.ncols() as u64)?;
    for &v in t.iter() {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write, C: Checkpointable>(w: &mut W, state: &ModelState<C>) -> Result<()> {
    let cfg = serde_json::to_vec(&state.config)?;
    let io = |e| Error::io(Path::new("<checkpoint>"), e);
    w.write_all(CHECKPOINT_MAGIC).map_err(io)?;
    w.write_u16::<LE>(CHECKPOINT_VERSION).map_err(io)?;
    w.write_u16::<LE>(0).map_err(io)?;
    w.write_u32::<LE>(C::KIND.len() as u32).map_err(io)?;
    w.write_all(C::KIND.as_bytes()).map_err(io)?;
    w.write_u32::<LE>(cfg.len() as u32).map_err(io)?;
    w.write_all(&cfg).map_err(io)?;
    w.write_u64::<LE>(state.adam.step).map_err(io)?;
    w.write_u32::<LE>(state.params.len() as u32).map_err(io)?;
    for t in state.params.iter().chain(&state.adam.m).chain(&state.adam.v) {
        write_tensor(w, t).map_err(io)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read, C: Checkpointable>(r: &mut R, path: &Path) -> Result<ModelState<C>> {
    let bad = |msg: String| Error::format(path, msg);
    let io = |e: std::io::Error| Error::format(path, format!("truncated checkpoint: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let version = r.read_u16::<LE>().map_err(io)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    r.read_u16::<LE>().map_err(io)?;
    let kind = read_string(r, 64).map_err(&bad)?;
    if kind != C::KIND {
        return Err(bad(format!("checkpoint holds a {kind} model, expected {}", C::KIND)));
    }
    let cfg_text = read_string(r, 1 << 20).map_err(&bad)?;
    let config: C = serde_json::from_str(&cfg_text).map_err(|e| bad(format!("config: {e}")))?;
    let step = r.read_u64::<LE>().map_err(io)?;
    let k = r.read_u32::<LE>().map_err(io)? as usize;
    let shapes = config.param_shapes().map_err(|e| bad(e.to_string()))?;
    if k != shapes.len() {
        return Err(bad(format!("expected {} tensors, found {k}", shapes.len())));
    }
    let mut tensors = Vec::with_capacity(3 * k);
    for i in 0..3 * k {
        let rank = r.read_u32::<LE>().map_err(io)?;
        let rows = r.read_u64::<LE>().map_err(io)? as usize;
        let cols = r.read_u64::<LE>().map_err(io)? as usize;
        if rank != 2 || (rows, cols) != shapes[i % k] {
            return Err(bad(format!(
                "tensor {i} has shape {rows}×{cols}, expected {:?}",
                shapes[i % k]
            )));
        }
        let mut values = vec![0.0; rows * cols];
        r.read_f64_into::<LE>(&mut values).map_err(io)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("tensor {i} holds non-finite values")));
        }
        tensors.push(Array2::from_shape_vec((rows, cols), values).expect("length matches"));
    }
    let v = tensors.split_off(2 * k);
    let m = tensors.split_off(k);
    ModelState::from_parts(config, tensors, AdamState { m, v, step })
}

fn read_string<R: Read>(r: &mut R, limit: usize) -> std::result::Result<String, String> {
    let len = r.read_u32::<LE>().map_err(|e| e.to_string())? as usize;
    if len > limit {
        return Err(format!("string field of {len} bytes is too long"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|_| "string field is not UTF-8".to_string())
}

/// `model.ckpt` → `model.ckpt.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the checkpoint and its JSON sidecar.
pub fn save_checkpoint<C: Checkpointable>(
    path: &Path,
    state: &ModelState<C>,
    run: serde_json::Value,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_checkpoint(&mut w, state)?;
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        kind: C::KIND.into(),
        step: state.adam.step,
        n_parameters: state.n_parameters(),
        shapes: state.params.iter().map(|p| p.dim()).collect(),
        config: serde_json::to_value(&state.config)?,
        run,
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

pub fn load_checkpoint<C: Checkpointable>(path: &Path) -> Result<ModelState<C>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(file), path)
}
