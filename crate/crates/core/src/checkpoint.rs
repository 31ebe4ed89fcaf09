//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                              |
//! |--------------|------------------------------------------------------|
//! | 4            | magic `IRN1`                                         |
//! | 4            | `u32` format version                                 |
//! | 8            | `u64` header length `H`                              |
//! | `H`          | UTF-8 JSON [`CheckpointHeader`]                      |
//! | rest         | every tensor in manifest order as `f64` LE values    |
//!
//! The file must end exactly after the last tensor.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"IRN1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Exact position of a ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: Vec<u8>,
    pub stream: u64,
    /// Decimal `u128` word position.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().to_vec(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let seed: [u8; 32] = self
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| Error::Format(format!("rng seed has {} bytes, expected 32", self.seed.len())))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Format(format!("bad rng word position `{}`", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Model family, e.g. `kbc` or `paths`.
    pub kind: String,
    pub model_config: serde_json::Value,
    pub train_config: Option<serde_json::Value>,
    pub epoch: usize,
    pub rng: Option<RngState>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(
        kind: &str,
        model_config: serde_json::Value,
        train_config: Option<serde_json::Value>,
        epoch: usize,
        rng: Option<RngState>,
        params: ParamStore,
    ) -> Self {
        let tensors = params
            .iter()
            .map(|(_, p)| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                kind: kind.to_owned(),
                model_config,
                train_config,
                epoch,
                rng,
                tensors,
            },
            params,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)
            .map_err(|e| Error::Format(format!("cannot encode header: {e}")))?;
        let mut out = Vec::with_capacity(16 + header.len() + self.params.num_scalars() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, p) in self.params.iter() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                std::str::from_utf8(MAGIC).unwrap()
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(Error::Format("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Format(format!("cannot decode header: {e}")))?;
        let mut payload = &body[hlen..];
        let mut params = ParamStore::new();
        for entry in &header.tensors {
            let n: usize = entry.shape.iter().product();
            if payload.len() < n * 8 {
                return Err(Error::Format(format!(
                    "truncated payload in tensor `{}`",
                    entry.name
                )));
            }
            let data = payload[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            payload = &payload[n * 8..];
            let t = Tensor::new(entry.shape.clone(), data)
                .map_err(|e| Error::Format(format!("tensor `{}`: {e}", entry.name)))?;
            if params.find(&entry.name).is_some() {
                return Err(Error::Format(format!("duplicate tensor `{}`", entry.name)));
            }
            params.add(entry.name.clone(), t);
        }
        if !payload.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", payload.len())));
        }
        Ok(Checkpoint { header, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.header.kind != kind {
            return Err(Error::Format(format!(
                "checkpoint holds a `{}` model, expected `{kind}`",
                self.header.kind
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample() -> Checkpoint {
        let mut store = ParamStore::new();
        store.add("a", Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]));
        store.add("b", Tensor::scalar(std::f64::consts::PI));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let _: u64 = rng.random();
        Checkpoint::new(
            "test",
            serde_json::json!({"dim": 2}),
            None,
            7,
            Some(RngState::capture(&rng)),
            store,
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert!(back.params.same_values(&c.params));
        assert_eq!(back.header, c.header);
    }

    #[test]
    fn rng_state_resumes_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let _: [u64; 5] = rng.random();
        let state = RngState::capture(&rng);
        let mut resumed = state.restore().unwrap();
        let a: [u64; 4] = rng.random();
        let b: [u64; 4] = resumed.random();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_magic_is_format_error() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        match Checkpoint::from_bytes(&bytes) {
            Err(e @ Error::Version { found: 9, expected: 1 }) => {
                let msg = e.to_string();
                assert!(msg.contains('9') && msg.contains('1'));
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_bytes_detected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }
}
