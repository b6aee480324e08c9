//! Checkpoint container.
//!
//! Layout: the 8-byte magic `ADSPOICK`, a little-endian `u32` version, a
//! `u64` length followed by that many bytes of JSON metadata (config, config
//! hash, shape table, history, counters), then four `f64` arrays of length
//! P (current parameters, best parameters, Adam first and second moments),
//! and finally the SHA-256 of everything before it.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::write_atomic;
use crate::params::{Layout, ParameterSet};

use super::adam::AdamState;
use super::fit::{EpochRecord, TrainState};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ADSPOICK";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    /// Fingerprint of the dataset the run trained on, when known.
    pub dataset_fingerprint: Option<String>,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn config_hash(&self) -> String {
        self.config.hash()
    }
}

#[derive(Serialize, Deserialize)]
struct ShapeEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config_hash: String,
    config: String,
    dataset_fingerprint: Option<String>,
    n_pois: usize,
    n_params: usize,
    shapes: Vec<ShapeEntry>,
    seed: u64,
    epoch: usize,
    adam_t: u64,
    /// Absent before the first validation.
    best_mrr: Option<f64>,
    best_epoch: usize,
    since_improvement: usize,
    stopped: bool,
    history: Vec<EpochRecord>,
}

fn shape_table(layout: &Layout) -> Vec<ShapeEntry> {
    layout
        .blocks
        .iter()
        .map(|b| ShapeEntry {
            name: b.name.clone(),
            shape: b.shape.clone(),
            offset: b.offset,
        })
        .collect()
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let s = &ckpt.state;
    let layout = s.params.layout();
    let meta = Meta {
        config_hash: ckpt.config.hash(),
        config: ckpt.config.to_toml_string(),
        dataset_fingerprint: ckpt.dataset_fingerprint.clone(),
        n_pois: layout.dims.n_pois,
        n_params: layout.len,
        shapes: shape_table(layout),
        seed: s.seed,
        epoch: s.epoch,
        adam_t: s.adam.t,
        best_mrr: s.best_mrr.is_finite().then_some(s.best_mrr),
        best_epoch: s.best_epoch,
        since_improvement: s.since_improvement,
        stopped: s.stopped,
        history: s.history.clone(),
    };
    let json = serde_json::to_vec(&meta)?;
    let mut buf = Vec::with_capacity(json.len() + 32 * layout.len + 64);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for arr in [s.params.as_slice(), s.best.as_slice(), &s.adam.m, &s.adam.v] {
        for v in arr {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(format!("checkpoint: {}", msg.into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| bad("array too large"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

/// Parses a checkpoint. With `expected_hash`, a checkpoint trained under a
/// different config is rejected.
pub fn decode_checkpoint(bytes: &[u8], expected_hash: Option<&str>) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("checksum mismatch"));
    }
    let mut r = Reader {
        bytes: body,
        pos: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let meta_len = usize::try_from(r.u64()?).map_err(|_| bad("metadata too large"))?;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| bad(e.to_string()))?;
    if let Some(expected) = expected_hash {
        if meta.config_hash != expected {
            return Err(Error::HashMismatch {
                expected: expected.to_string(),
                found: meta.config_hash,
            });
        }
    }
    let config = RunConfig::from_toml_str(&meta.config)?;
    if config.hash() != meta.config_hash {
        return Err(bad("stored config does not match its hash"));
    }
    let layout = Arc::new(Layout::from_config(&config, meta.n_pois));
    let table = shape_table(&layout);
    let same_shapes = table.len() == meta.shapes.len()
        && table
            .iter()
            .zip(&meta.shapes)
            .all(|(a, b)| a.name == b.name && a.shape == b.shape && a.offset == b.offset);
    if layout.len != meta.n_params || !same_shapes {
        return Err(bad("shape table does not match the stored config"));
    }
    let n = layout.len;
    let params = ParameterSet::from_flat(layout.clone(), r.f64s(n)?).expect("length checked");
    let best = ParameterSet::from_flat(layout, r.f64s(n)?).expect("length checked");
    let m = r.f64s(n)?;
    let v = r.f64s(n)?;
    if r.pos != body.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Checkpoint {
        config,
        dataset_fingerprint: meta.dataset_fingerprint,
        state: TrainState {
            params,
            best,
            adam: AdamState { m, v, t: meta.adam_t },
            seed: meta.seed,
            epoch: meta.epoch,
            best_mrr: meta.best_mrr.unwrap_or(f64::NEG_INFINITY),
            best_epoch: meta.best_epoch,
            since_improvement: meta.since_improvement,
            stopped: meta.stopped,
            history: meta.history,
        },
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt)?)
}

pub fn load_checkpoint(path: &Path, expected_hash: Option<&str>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|source| Error::Input {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes, expected_hash)
}
