use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framing::{self, PAYLOAD_DTYPE};
use crate::nn::{Module, ParamId};
use crate::scalar::Scalar;

const MAGIC: &str = "ADVOP-CHECKPOINT/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub id: u32,
    pub name: String,
    pub shape: Vec<usize>,
}

/// Structured-text part of a checkpoint. Payloads follow in `params` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub seed: u64,
    pub dtype: String,
    /// Widths of every sub-network, keyed by role.
    pub layer_sizes: BTreeMap<String, Vec<usize>>,
    pub params: Vec<ParamEntry>,
}

/// Models that can be rebuilt from their checkpoint header.
pub trait Checkpointable<T: Scalar>: Module<T> + Sized {
    const KIND: &'static str;

    fn layer_sizes(&self) -> BTreeMap<String, Vec<usize>>;

    /// Builds a model with the recorded architecture; values are overwritten
    /// by the payload afterwards.
    fn from_layer_sizes(sizes: &BTreeMap<String, Vec<usize>>) -> Result<Self>;

    fn to_checkpoint_bytes(&self, seed: u64) -> Result<Vec<u8>> {
        let params = self.parameters();
        let header = CheckpointHeader {
            kind: Self::KIND.to_string(),
            seed,
            dtype: PAYLOAD_DTYPE.to_string(),
            layer_sizes: self.layer_sizes(),
            params: params
                .iter()
                .map(|p| ParamEntry { id: p.id().0, name: p.name().to_string(), shape: p.shape().to_vec() })
                .collect(),
        };
        let payload: Vec<f64> = params.iter().flat_map(|p| p.data().iter().map(|x| x.to_f64_lossy())).collect();
        framing::encode(MAGIC, &header, &payload)
    }

    /// Returns the model and the seed recorded with it.
    fn from_checkpoint_bytes(bytes: &[u8]) -> Result<(Self, u64)> {
        let (header, payload): (CheckpointHeader, _) = framing::decode(MAGIC, bytes)?;
        framing::check_dtype(&header.dtype)?;
        if header.kind != Self::KIND {
            return Err(Error::Format(format!("checkpoint holds `{}`, expected `{}`", header.kind, Self::KIND)));
        }
        let count: usize = header.params.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        let values = framing::read_floats(payload, count)?;
        let mut model = Self::from_layer_sizes(&header.layer_sizes)?;
        {
            let mut params = model.parameters_mut();
            if params.len() != header.params.len() {
                return Err(Error::Format(format!(
                    "header lists {} parameters, architecture has {}",
                    header.params.len(),
                    params.len()
                )));
            }
            let mut off = 0;
            for (p, e) in params.iter_mut().zip(&header.params) {
                if p.id() != ParamId(e.id) || p.shape() != e.shape.as_slice() {
                    return Err(Error::Format(format!(
                        "parameter {} ({:?}) does not match header entry {} ({:?})",
                        p.id(),
                        p.shape(),
                        e.id,
                        e.shape
                    )));
                }
                let n = p.data().len();
                for (x, &v) in p.data_mut().iter_mut().zip(&values[off..off + n]) {
                    *x = T::lit(v);
                }
                off += n;
            }
        }
        Ok((model, header.seed))
    }

    fn save_checkpoint(&self, path: &Path, seed: u64) -> Result<()> {
        framing::write_file(path, &self.to_checkpoint_bytes(seed)?)
    }

    fn load_checkpoint(path: &Path) -> Result<(Self, u64)> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?)
    }
}
