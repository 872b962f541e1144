//! Versioned JSON persistence for [`BanditModel`].
//!
//! ```text
//! {"format":"sleepcoach.bandit","version":1,"checksum":"<sha256 of payload>","payload":{...}}
//! ```
//!
//! The checksum covers the exact payload bytes as written. Floats are
//! written with shortest round-trip formatting, so save → load is lossless.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use super::{BanditError, BanditModel};

pub const STATE_FORMAT: &str = "sleepcoach.bandit";
pub const STATE_VERSION: u32 = 1;

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    format: &'a str,
    version: u32,
    checksum: String,
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn<'a> {
    format: String,
    version: u32,
    checksum: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn save_state(model: &BanditModel) -> Vec<u8> {
    let payload = serde_json::to_string(model).expect("bandit model serializes");
    let raw = RawValue::from_string(payload).expect("serializer emits valid JSON");
    let envelope = EnvelopeOut {
        format: STATE_FORMAT,
        version: STATE_VERSION,
        checksum: digest(raw.get().as_bytes()),
        payload: &raw,
    };
    serde_json::to_vec(&envelope).expect("envelope serializes")
}

/// Parses and verifies a saved model. With `expected_dim` set, a model of any
/// other dimension is rejected.
pub fn load_state(bytes: &[u8], expected_dim: Option<usize>) -> Result<BanditModel, BanditError> {
    let corrupt = |msg: String| BanditError::CorruptState(msg);
    let envelope: EnvelopeIn<'_> = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
    if envelope.format != STATE_FORMAT {
        return Err(corrupt(format!("unexpected format `{}`", envelope.format)));
    }
    if envelope.version != STATE_VERSION {
        return Err(corrupt(format!("unsupported version {}", envelope.version)));
    }
    if digest(envelope.payload.get().as_bytes()) != envelope.checksum {
        return Err(corrupt("checksum mismatch".into()));
    }
    let mut model: BanditModel =
        serde_json::from_str(envelope.payload.get()).map_err(|e| corrupt(e.to_string()))?;
    if let Some(dim) = expected_dim {
        if model.dim != dim {
            return Err(BanditError::DimensionMismatch {
                expected: dim,
                got: model.dim,
            });
        }
    }
    if model.arms.is_empty() {
        return Err(corrupt("no arms".into()));
    }
    for (i, arm) in model.arms.iter().enumerate() {
        if arm.id.index != i {
            return Err(corrupt(format!("arm `{}` has index {} at position {i}", arm.id.name, arm.id.index)));
        }
    }
    model.rebuild_factors()?;
    Ok(model)
}
