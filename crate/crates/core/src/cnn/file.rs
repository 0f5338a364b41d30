//! Model files (`LYNN`), little-endian:
//!
//! ```text
//! magic "LYNN" | version u32 | n_outputs u32
//! in_len | conv1 channels kernel dilation | conv2 channels kernel dilation   (u32 each)
//! conv1_w conv1_b conv2_w conv2_b out_w out_b                              (f64)
//! ```

use std::path::Path;

use super::params::{Architecture, ConvSpec, ModelParams};
use crate::error::{Error, Result};
use crate::fsutil::{write_atomic, ByteReader};

pub const MODEL_MAGIC: &[u8; 4] = b"LYNN";
pub const MODEL_VERSION: u32 = 1;
const MAX_DIM: usize = 1 << 20;

pub fn encode_model(p: &ModelParams) -> Result<Vec<u8>> {
    if !p.shapes_match() {
        return Err(Error::contract("parameter shapes do not match the architecture"));
    }
    let a = p.arch;
    let mut buf = Vec::with_capacity(40 + 8 * p.len());
    buf.extend_from_slice(MODEL_MAGIC);
    let header = [
        MODEL_VERSION as usize,
        a.n_outputs,
        a.in_len,
        a.conv1.out_channels,
        a.conv1.kernel,
        a.conv1.dilation,
        a.conv2.out_channels,
        a.conv2.kernel,
        a.conv2.dilation,
    ];
    for v in header {
        let v = u32::try_from(v).map_err(|_| Error::contract("architecture dimension exceeds u32"))?;
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in p.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = ByteReader::new(bytes, path);
    if r.take(4)? != MODEL_MAGIC {
        return Err(bad("bad magic, not a model file".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(bad(format!("unsupported model version {version}")));
    }
    let mut dims = [0usize; 8];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    if dims.iter().any(|&d| d > MAX_DIM) {
        return Err(bad(format!("implausible architecture dimensions {dims:?}")));
    }
    let [n_outputs, in_len, c1, k1, d1, c2, k2, d2] = dims;
    let arch = Architecture {
        in_len,
        conv1: ConvSpec {
            out_channels: c1,
            kernel: k1,
            dilation: d1,
        },
        conv2: ConvSpec {
            out_channels: c2,
            kernel: k2,
            dilation: d2,
        },
        n_outputs,
    };
    arch.validate().map_err(|e| bad(e.to_string()))?;
    let n = arch
        .conv2_w_len()
        .checked_add(arch.conv1_w_len() + arch.out_w_len() + c1 + c2 + n_outputs)
        .filter(|n| n.checked_mul(8) == Some(r.remaining()))
        .ok_or_else(|| {
            bad(format!(
                "payload of {} bytes does not match the architecture",
                r.remaining()
            ))
        })?;
    let mut p = ModelParams::zeros(arch);
    debug_assert_eq!(n, p.len());
    for block in p.blocks_mut() {
        let len = block.len();
        *block = r.f64s(len)?;
    }
    if !p.all_finite() {
        return Err(bad("non-finite parameter".into()));
    }
    Ok(p)
}

pub fn save_model(path: &Path, p: &ModelParams) -> Result<()> {
    write_atomic(path, &encode_model(p)?)
}

/// Loads a model; with `n_outputs` set, a model for the other system is an error.
pub fn load_model(path: &Path, n_outputs: Option<usize>) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let p = decode_model(&bytes, path)?;
    if let Some(n) = n_outputs {
        if p.arch.n_outputs != n {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("model predicts {} exponents, {n} requested", p.arch.n_outputs),
            });
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::params::init_params;

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lynn");
        let p = init_params(Architecture::paper(6), 4);
        save_model(&path, &p).unwrap();
        assert_eq!(load_model(&path, Some(6)).unwrap(), p);
        assert!(load_model(&path, Some(3)).is_err());

        let bytes = encode_model(&p).unwrap();
        let mem = Path::new("mem");
        for cut in [0, 4, 20, 40, bytes.len() - 8, bytes.len() - 1] {
            assert!(decode_model(&bytes[..cut], mem).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(decode_model(&bad, mem).is_err());
        let mut bad = bytes.clone();
        bad[16..20].copy_from_slice(&0u32.to_le_bytes());
        assert!(decode_model(&bad, mem).is_err());
        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(&u32::MAX.to_le_bytes()); // n_outputs
        assert!(decode_model(&bad, mem).is_err());
        let mut bad = bytes;
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_model(&bad, mem).is_err());
    }
}
