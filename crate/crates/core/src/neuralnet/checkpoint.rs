//! Versioned binary checkpoint: a text header with a shape manifest followed
//! by every tensor as little-endian floats.
//!
//! ```text
//! CCRLCKPT 1
//! dtype=f64
//! state_len=220
//! ...
//! tensor=fc1_w 512 220
//! ...
//! end
//! <raw data>
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::RunError;
use crate::scalar::Scalar;

use super::params::{ModelParams, ModelShape, TENSOR_NAMES};

const MAGIC: &str = "CCRLCKPT";
const FORMAT_VERSION: u32 = 1;

/// Parameters plus the environment settings they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub history_len: usize,
    pub action_space: String,
    pub snapshot_version: u64,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.params.shape;
        let mut header = format!("{MAGIC} {FORMAT_VERSION}\n");
        header += &format!("dtype={}\n", T::DTYPE);
        header += &format!(
            "state_len={}\ntrunk={}\nhidden={}\nactions={}\n",
            s.state_len, s.trunk, s.hidden, s.actions
        );
        header += &format!("recurrent={}\n", u8::from(s.recurrent));
        header += &format!(
            "k={}\naction_space={}\n",
            self.history_len, self.action_space
        );
        header += &format!("snapshot_version={}\n", self.snapshot_version);
        for (name, (rows, cols)) in TENSOR_NAMES.iter().zip(self.params.tensor_dims()) {
            header += &format!("tensor={name} {rows} {cols}\n");
        }
        header += "end\n";
        let mut out = header.into_bytes();
        out.reserve(self.params.num_params() * T::BYTES);
        for (_, t) in self.params.tensors() {
            for &v in t {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RunError> {
        let err = |m: String| RunError::Checkpoint(m);
        let end = find_header_end(bytes).ok_or_else(|| err("missing header terminator".into()))?;
        let header =
            std::str::from_utf8(&bytes[..end]).map_err(|_| err("header is not UTF-8".into()))?;
        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        if first != format!("{MAGIC} {FORMAT_VERSION}") {
            return Err(err(format!("unsupported format line {first:?}")));
        }
        let mut kv = BTreeMap::new();
        let mut dims = Vec::new();
        for line in lines {
            if line == "end" {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("bad header line {line:?}")))?;
            if k == "tensor" {
                let parts: Vec<&str> = v.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(err(format!("bad tensor line {line:?}")));
                }
                let r: usize = parts[1]
                    .parse()
                    .map_err(|_| err(format!("bad dims {line:?}")))?;
                let c: usize = parts[2]
                    .parse()
                    .map_err(|_| err(format!("bad dims {line:?}")))?;
                dims.push((parts[0].to_string(), (r, c)));
            } else {
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| {
            kv.get(k)
                .cloned()
                .ok_or_else(|| err(format!("header lacks {k}")))
        };
        let num = |k: &str| -> Result<u64, RunError> {
            get(k)?.parse().map_err(|_| err(format!("bad {k}")))
        };
        let dtype = get("dtype")?;
        if dtype != T::DTYPE {
            return Err(err(format!(
                "checkpoint holds {dtype}, requested {}",
                T::DTYPE
            )));
        }
        let shape = ModelShape {
            state_len: num("state_len")? as usize,
            trunk: num("trunk")? as usize,
            hidden: num("hidden")? as usize,
            actions: num("actions")? as usize,
            recurrent: num("recurrent")? != 0,
        };
        let mut params = ModelParams::<T>::zeros(shape);
        let expected: Vec<(String, (usize, usize))> = TENSOR_NAMES
            .iter()
            .map(|n| n.to_string())
            .zip(params.tensor_dims())
            .collect();
        if dims != expected {
            return Err(err(format!(
                "tensor manifest {dims:?} does not match shape {shape:?}"
            )));
        }
        let mut data = &bytes[end + "end\n".len()..];
        if data.len() != params.num_params() * T::BYTES {
            return Err(err(format!(
                "payload has {} bytes, manifest needs {}",
                data.len(),
                params.num_params() * T::BYTES
            )));
        }
        for (_, t) in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = T::read_le(&data[..T::BYTES]);
                data = &data[T::BYTES..];
            }
        }
        Ok(Self {
            params,
            history_len: num("k")? as usize,
            action_space: get("action_space")?,
            snapshot_version: num("snapshot_version")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| RunError::Checkpoint(format!("{}: {e}", path.display())))?
            .read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let pat = b"\nend\n";
    bytes
        .windows(pat.len())
        .position(|w| w == pat)
        .map(|p| p + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape {
            state_len: 12,
            trunk: 16,
            hidden: 8,
            actions: 5,
            recurrent: true,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = Checkpoint {
            params: ModelParams::<f64>::init(shape(), 77),
            history_len: 20,
            action_space: "0,/2,-10,+10,*2".into(),
            snapshot_version: 3,
        };
        let bytes = ck.to_bytes();
        let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_roundtrip_and_dtype_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut s = shape();
        s.recurrent = false;
        let ck = Checkpoint {
            params: ModelParams::<f32>::init(s, 1),
            history_len: 0,
            action_space: "0".into(),
            snapshot_version: 0,
        };
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::<f32>::load(&path).unwrap(), ck);
        assert!(Checkpoint::<f64>::load(&path).is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let ck = Checkpoint {
            params: ModelParams::<f64>::init(shape(), 1),
            history_len: 1,
            action_space: "0".into(),
            snapshot_version: 0,
        };
        let mut bytes = ck.to_bytes();
        bytes.truncate(bytes.len() - 8);
        assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
    }
}
