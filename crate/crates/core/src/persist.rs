//! Model file persistence.
//!
//! Binary little-endian layout: magic `TFD1`, format version u32, tensor
//! count u32, then per tensor {name length u16, name UTF-8, rank u8, dims
//! u32 x rank, values f64 row-major}; followed by a length-prefixed (u32)
//! UTF-8 JSON trailer holding thresholds, normalization stats, training
//! seed and hyperparameters. Round-trips are bit exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::NormalizationStats;
use crate::nn::{Matrix, Param};
use crate::pipeline::{Hyperparams, Thresholds};
use crate::reconstructor::{
    init_freq, init_time, FreqReconstructor, ReconstructorModel, TimeReconstructor,
};

pub const MAGIC: &[u8; 4] = b"TFD1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model file shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Trailer metadata stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub thresholds: Thresholds,
    pub norm_stats: NormalizationStats,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Everything needed to run detection.
pub struct ModelBundle {
    pub time: TimeReconstructor,
    pub freq: FreqReconstructor,
    pub meta: ModelMeta,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, m: &Matrix) -> Result<(), ModelFileError> {
    let name_bytes = name.as_bytes();
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    w.write_all(&[2u8])?; // rank
    w.write_all(&(m.rows() as u32).to_le_bytes())?;
    w.write_all(&(m.cols() as u32).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Save both reconstructors and the trailer metadata into one file.
pub fn save_model(
    path: &Path,
    time: &TimeReconstructor,
    freq: &FreqReconstructor,
    meta: &ModelMeta,
) -> Result<(), ModelFileError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let params: Vec<&Param> = time.params().into_iter().chain(freq.params()).collect();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        write_tensor(&mut w, &p.name, &p.value)?;
    }
    let trailer = serde_json::to_vec(meta)
        .map_err(|e| ModelFileError::CorruptFile(format!("trailer encode: {e}")))?;
    w.write_all(&(trailer.len() as u32).to_le_bytes())?;
    w.write_all(&trailer)?;
    w.flush()?;
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>, ModelFileError> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| ModelFileError::CorruptFile(format!("truncated reading {what}")))?;
        Ok(buf)
    }

    fn u16(&mut self, what: &str) -> Result<u16, ModelFileError> {
        Ok(u16::from_le_bytes(self.bytes(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }
}

/// Load a model file, verifying magic, version and tensor shapes.
pub fn load_model(path: &Path) -> Result<ModelBundle, ModelFileError> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let magic = r.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(ModelFileError::CorruptFile(format!("bad magic {magic:02x?}")));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::CorruptFile(format!(
            "unsupported format version {version}"
        )));
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u16("tensor name length")? as usize;
        let name = String::from_utf8(r.bytes(name_len, "tensor name")?)
            .map_err(|_| ModelFileError::CorruptFile("tensor name not UTF-8".into()))?;
        let rank = r.bytes(1, "tensor rank")?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("tensor dim")? as usize);
        }
        if rank != 2 {
            return Err(ModelFileError::CorruptFile(format!(
                "tensor {name}: unsupported rank {rank}"
            )));
        }
        let n = dims.iter().product::<usize>();
        let raw = r.bytes(n * 8, "tensor values")?;
        let mut data = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        tensors.push((name, Matrix::from_vec(dims[0], dims[1], data)));
    }
    let trailer_len = r.u32("trailer length")? as usize;
    let trailer = r.bytes(trailer_len, "trailer")?;
    let meta: ModelMeta = serde_json::from_slice(&trailer)
        .map_err(|e| ModelFileError::CorruptFile(format!("trailer decode: {e}")))?;

    // Rebuild the fixed graphs and overwrite every parameter by name.
    let mut time = init_time(0);
    let mut freq = init_freq(0);
    let mut assigned = 0usize;
    for p in time.params_mut().into_iter().chain(freq.params_mut()) {
        let (name, value) = tensors
            .iter()
            .find(|(n, _)| n == &p.name)
            .ok_or_else(|| ModelFileError::CorruptFile(format!("missing tensor {}", p.name)))?;
        if value.shape() != p.value.shape() {
            return Err(ModelFileError::ShapeMismatch(format!(
                "tensor {name}: file has {:?}, model expects {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value.clone();
        p.zero_grad();
        assigned += 1;
    }
    if assigned != tensors.len() {
        return Err(ModelFileError::CorruptFile(format!(
            "file has {} tensors, model consumed {assigned}",
            tensors.len()
        )));
    }
    Ok(ModelBundle { time, freq, meta })
}
