//! Binary checkpoint format, all fields little-endian:
//!
//! ```text
//! magic "SAEB" | version u16 | kind u8 | window u16 | filters u16 | kernel u8 | depth u8
//! followed by every parameter as f32, in build order
//! ```

use std::fs;
use std::path::Path;

use super::{Kind, Model, TopologySpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SAEB";
pub const CHECKPOINT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 13;

pub fn save_checkpoint(model: &Model) -> Vec<u8> {
    let spec = model.spec();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.parameter_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(spec.kind.code());
    out.extend_from_slice(&(spec.window_side as u16).to_le_bytes());
    out.extend_from_slice(&(spec.filters as u16).to_le_bytes());
    out.push(spec.kernel as u8);
    out.push(spec.depth as u8);
    for p in model.params() {
        for v in p.tensor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
    }
    if bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let version = u16_at(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let kind =
        Kind::from_code(bytes[6]).ok_or_else(|| Error::Checkpoint(format!("unknown topology code {}", bytes[6])))?;
    let spec = TopologySpec {
        kind,
        window_side: u16_at(7) as usize,
        filters: u16_at(9) as usize,
        kernel: bytes[11] as usize,
        depth: bytes[12] as usize,
    };
    spec.validate()
        .map_err(|e| Error::Checkpoint(format!("inconsistent topology: {e}")))?;

    let expected = HEADER_LEN + 4 * spec.parameter_count();
    if bytes.len() < expected {
        return Err(Error::Checkpoint(format!(
            "truncated payload ({} of {expected} bytes)",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after parameters",
            bytes.len() - expected
        )));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let tensors = spec
        .parameter_layout()
        .into_iter()
        .map(|(_, shape)| {
            let n = shape.iter().product();
            Tensor::new(shape, floats.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Model::from_parts(spec, tensors)
}

pub fn write_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, save_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    load_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        Model::build(TopologySpec::with_depth(Kind::Swwae, 16, 3, 3, 2).unwrap(), 1).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = save_checkpoint(&model());
        assert_eq!(&bytes[..4], b"SAEB");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..9], &[16, 0]);
        assert_eq!(&bytes[9..11], &[3, 0]);
        assert_eq!(bytes[11], 3);
        assert_eq!(bytes[12], 2);
    }

    #[test]
    fn round_trip() {
        let m = model();
        assert_eq!(load_checkpoint(&save_checkpoint(&m)).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs() {
        let good = save_checkpoint(&model());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(load_checkpoint(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(load_checkpoint(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(load_checkpoint(&good[..good.len() - 1]).is_err());
        assert!(load_checkpoint(&good[..7]).is_err());
        let mut bad = good.clone();
        bad.push(0);
        assert!(load_checkpoint(&bad).is_err());
        let mut bad = good;
        bad[11] = 4; // even kernel
        assert!(matches!(load_checkpoint(&bad), Err(Error::Checkpoint(m)) if m.contains("inconsistent")));
    }
}
