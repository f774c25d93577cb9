//! Checkpoint layout: 8-byte magic, u64 LE header length, JSON header, then
//! every parameter as f64 LE in [`Params::slices`] order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NeuroError, Params};

const MAGIC: &[u8; 8] = b"GFCKPT01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: String,
    /// One entry per parameter slice.
    pub shapes: Vec<Vec<usize>>,
    pub config: serde_json::Value,
    pub seed: u64,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn err(path: &Path, message: impl ToString) -> NeuroError {
    NeuroError::Checkpoint { path: path.display().to_string(), message: message.to_string() }
}

fn expected_len(shapes: &[Vec<usize>]) -> usize {
    shapes.iter().map(|s| s.iter().product::<usize>()).sum()
}

pub fn save_checkpoint<P: Params>(path: &Path, header: &CheckpointHeader, params: &P) -> Result<(), NeuroError> {
    let slices = params.slices();
    let lens: Vec<usize> = slices.iter().map(|s| s.len()).collect();
    let declared: Vec<usize> = header.shapes.iter().map(|s| s.iter().product()).collect();
    if lens != declared {
        return Err(err(path, format!("header shapes {:?} do not match parameter slices {lens:?}", header.shapes)));
    }
    let json = serde_json::to_vec(header).map_err(|e| err(path, e))?;
    let mut bytes = Vec::with_capacity(16 + json.len() + 8 * lens.iter().sum::<usize>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for s in slices {
        for v in s {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| err(path, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<f64>), NeuroError> {
    let bytes = std::fs::read(path).map_err(|e| err(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(err(path, "not a checkpoint file"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| err(path, "truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| err(path, e))?;
    let data = &bytes[16 + hlen..];
    let n = expected_len(&header.shapes);
    if data.len() != 8 * n {
        return Err(err(path, format!("expected {n} parameters, found {} bytes", data.len())));
    }
    let values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::{Activation, DenseLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn header() -> CheckpointHeader {
        CheckpointHeader {
            architecture: "dense".into(),
            shapes: vec![vec![2, 3], vec![2]],
            config: serde_json::json!({"lr": 0.001}),
            seed: 7,
            meta: serde_json::Value::Null,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let layer = DenseLayer::new(3, 2, Activation::Relu, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        save_checkpoint(&path, &header(), &layer).unwrap();
        let (h, values) = load_checkpoint(&path).unwrap();
        assert_eq!(h, header());
        let mut other = DenseLayer::new(3, 2, Activation::Relu, 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        other.set_flat(&values).unwrap();
        assert_eq!(other, layer);
    }

    #[test]
    fn rejects_mismatch_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let layer = DenseLayer::new(4, 2, Activation::Relu, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(save_checkpoint(&path, &header(), &layer).is_err());
        std::fs::write(&path, b"hello").unwrap();
        let e = load_checkpoint(&path).unwrap_err().to_string();
        assert!(e.contains("m.ckpt"), "{e}");
    }
}
