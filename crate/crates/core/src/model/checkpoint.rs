//! Versioned binary checkpoints: config, vocabulary table, weights and
//! optimizer state, with bit-exact reload.

use super::{AdamState, ModelConfig, ModelError, ModelParams, TrainConfig};
use crate::tensor::Tensor;
use crate::token::Vocab;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"LSRCKPT1";
const VERSION: u32 = 1;

/// Full training state persisted to disk.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub train_cfg: TrainConfig,
    pub params: ModelParams,
    pub opt: AdamState,
    pub step: u64,
}

fn io_err<E: std::fmt::Display>(e: E) -> ModelError {
    ModelError::Checkpoint(e.to_string())
}

fn write_bytes<W: Write>(w: &mut W, b: &[u8]) -> Result<(), ModelError> {
    w.write_all(&(b.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(b).map_err(io_err)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_bytes<R: Read>(r: &mut R) -> Result<Vec<u8>, ModelError> {
    let len = read_u64(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<(), ModelError> {
    write_bytes(w, name.as_bytes())?;
    w.write_all(&(t.shape.len() as u64).to_le_bytes()).map_err(io_err)?;
    for &d in &t.shape {
        w.write_all(&(d as u64).to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&(t.data.len() as u64).to_le_bytes()).map_err(io_err)?;
    for &v in &t.data {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor), ModelError> {
    let name = String::from_utf8(read_bytes(r)?).map_err(io_err)?;
    let ndim = read_u64(r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(read_u64(r)? as usize);
    }
    let n = read_u64(r)? as usize;
    if shape.iter().product::<usize>() != n {
        return Err(ModelError::Checkpoint(format!(
            "tensor {name}: shape/data mismatch"
        )));
    }
    let mut data = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf).map_err(io_err)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok((name, Tensor::new(shape, data)))
}

fn write_tensor_map<W: Write>(
    w: &mut W,
    map: impl Iterator<Item = (String, Tensor)>,
) -> Result<(), ModelError> {
    let entries: Vec<(String, Tensor)> = map.collect();
    w.write_all(&(entries.len() as u64).to_le_bytes()).map_err(io_err)?;
    for (name, t) in &entries {
        write_tensor(w, name, t)?;
    }
    Ok(())
}

fn read_tensor_map<R: Read>(r: &mut R) -> Result<BTreeMap<String, Tensor>, ModelError> {
    let count = read_u64(r)? as usize;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let (name, t) = read_tensor(r)?;
        map.insert(name, t);
    }
    Ok(map)
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), ModelError> {
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    write_bytes(&mut w, &serde_json::to_vec(&ck.train_cfg).map_err(io_err)?)?;
    write_bytes(&mut w, &serde_json::to_vec(&ck.params.cfg).map_err(io_err)?)?;
    let table = Vocab.table();
    w.write_all(&(table.len() as u64).to_le_bytes()).map_err(io_err)?;
    for entry in &table {
        write_bytes(&mut w, entry.as_bytes())?;
    }
    w.write_all(&ck.step.to_le_bytes()).map_err(io_err)?;
    w.write_all(&ck.opt.t.to_le_bytes()).map_err(io_err)?;
    write_tensor_map(&mut w, ck.params.iter().map(|(n, t)| (n.clone(), t.clone())))?;
    write_tensor_map(&mut w, ck.opt.m.iter().map(|(n, t)| (n.clone(), t.clone())))?;
    write_tensor_map(&mut w, ck.opt.v.iter().map(|(n, t)| (n.clone(), t.clone())))?;
    w.flush().map_err(io_err)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let file = std::fs::File::open(path).map_err(io_err)?;
    let mut r = std::io::BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf).map_err(io_err)?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let train_cfg: TrainConfig =
        serde_json::from_slice(&read_bytes(&mut r)?).map_err(io_err)?;
    let model_cfg: ModelConfig =
        serde_json::from_slice(&read_bytes(&mut r)?).map_err(io_err)?;
    let table_len = read_u64(&mut r)? as usize;
    let mut table = Vec::with_capacity(table_len);
    for _ in 0..table_len {
        table.push(String::from_utf8(read_bytes(&mut r)?).map_err(io_err)?);
    }
    if !Vocab.matches_table(&table) {
        return Err(ModelError::Checkpoint(
            "vocabulary table does not match this build".into(),
        ));
    }
    let step = read_u64(&mut r)?;
    let adam_t = read_u64(&mut r)?;
    let tensors = read_tensor_map(&mut r)?;
    let m = read_tensor_map(&mut r)?;
    let v = read_tensor_map(&mut r)?;

    // Validate against a freshly initialized parameter set: same names,
    // same shapes.
    let reference = ModelParams::init(model_cfg.clone(), 0)?;
    if reference.names() != tensors.keys().cloned().collect::<Vec<_>>() {
        return Err(ModelError::Checkpoint("parameter names mismatch".into()));
    }
    for (name, t) in &tensors {
        if reference.get(name).shape != t.shape {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name} has unexpected shape"
            )));
        }
    }
    let mut params = reference;
    for (name, t) in tensors {
        params.insert(name, t);
    }
    Ok(Checkpoint {
        train_cfg,
        params,
        opt: AdamState { m, v, t: adam_t },
        step,
    })
}
