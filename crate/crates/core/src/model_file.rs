//! Fitted model container.
//!
//! Layout: the 8 magic bytes `SSGLIMC\0`, a little-endian `u32` header
//! length, a UTF-8 JSON header, then `A` and `B` in row-major order as
//! little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{HyperParams, LatentFactors};
use crate::error::{Error, Result};
use crate::optimizer::{FitOutcome, RowPenalty};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"SSGLIMC\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub penalty: RowPenalty,
    pub hyper: HyperParams,
    pub theta_a: Vec<f64>,
    pub theta_b: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Original feature counts when the side features were identity-augmented.
    pub u_original_d: Option<usize>,
    pub v_original_d: Option<usize>,
}

impl ModelHeader {
    pub fn from_outcome<F: Scalar>(outcome: &FitOutcome<F>, hyper: &HyperParams, penalty: RowPenalty) -> Self {
        let f = &outcome.factors;
        Self {
            format_version: FORMAT_VERSION,
            d1: f.a.nrows(),
            d2: f.b.nrows(),
            r: f.rank(),
            penalty,
            hyper: hyper.clone(),
            theta_a: outcome.state.theta_a.iter().map(|t| t.to_f64_lossy()).collect(),
            theta_b: outcome.state.theta_b.iter().map(|t| t.to_f64_lossy()).collect(),
            converged: outcome.state.converged,
            sweeps: outcome.state.sweeps(),
            u_original_d: None,
            v_original_d: None,
        }
    }
}

pub fn write_model<W: Write, F: Scalar>(mut out: W, header: &ModelHeader, factors: &LatentFactors<F>) -> Result<()> {
    if factors.a.dim() != (header.d1, header.r) || factors.b.dim() != (header.d2, header.r) {
        return Err(Error::ModelFile("header dimensions disagree with the factors".into()));
    }
    let json = serde_json::to_vec(header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::ModelFile("header too large".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&json)?;
    for v in factors.a.iter().chain(factors.b.iter()) {
        out.write_all(&v.to_f64_lossy().to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_block<R: Read, F: Scalar>(input: &mut R, rows: usize, cols: usize) -> Result<Array2<F>> {
    let mut buf = vec![0u8; rows * cols * 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::ModelFile(format!("truncated factor block: {e}")))?;
    let values = buf
        .chunks_exact(8)
        .map(|c| F::lit(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::ModelFile(e.to_string()))
}

pub fn read_model<R: Read, F: Scalar>(mut input: R) -> Result<(ModelHeader, LatentFactors<F>)> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::ModelFile("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::ModelFile("not a model file (bad magic bytes)".into()));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input
        .read_exact(&mut json)
        .map_err(|_| Error::ModelFile("truncated header".into()))?;
    let header: ModelHeader = serde_json::from_slice(&json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let a = read_block(&mut input, header.d1, header.r)?;
    let b = read_block(&mut input, header.d2, header.r)?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::ModelFile(format!("{} trailing bytes", rest.len())));
    }
    Ok((header, LatentFactors::new(a, b)?))
}

pub fn save_model<F: Scalar>(path: &Path, header: &ModelHeader, factors: &LatentFactors<F>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_model(std::io::BufWriter::new(file), header, factors)
}

pub fn load_model<F: Scalar>(path: &Path) -> Result<(ModelHeader, LatentFactors<F>)> {
    let file = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn header() -> ModelHeader {
        ModelHeader {
            format_version: FORMAT_VERSION,
            d1: 2,
            d2: 1,
            r: 2,
            penalty: RowPenalty::Ssgl,
            hyper: HyperParams::default(),
            theta_a: vec![0.3, 0.3],
            theta_b: vec![0.6],
            converged: true,
            sweeps: 12,
            u_original_d: None,
            v_original_d: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let f = LatentFactors::new(array![[0.1, -2.5e-300], [0.0, 1.0 / 3.0]], array![[f64::MIN_POSITIVE, 7.0]]).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &header(), &f).unwrap();
        let (h, g) = read_model::<_, f64>(buf.as_slice()).unwrap();
        assert_eq!(h, header());
        assert_eq!(g, f);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_model::<_, f64>(&b"not a model"[..]), Err(Error::ModelFile(_))));
        let f = LatentFactors::new(array![[0.1, 0.2], [0.3, 0.4]], array![[0.5, 0.6]]).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &header(), &f).unwrap();
        buf.pop();
        assert!(matches!(read_model::<_, f64>(buf.as_slice()), Err(Error::ModelFile(_))));
    }
}
