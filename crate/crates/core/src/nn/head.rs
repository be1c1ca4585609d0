//! Wire format for an FC head exchanged between peers.
//!
//! ```text
//! bytes 0..4    magic "FCH1"
//! bytes 4..8    hidden size H, u32 little-endian
//! bytes 8..12   output size O, u32 little-endian
//! bytes 12..    H*O + O values, f64 little-endian, in fc-block order
//!               (weights hidden-major, then biases)
//! ```

use crate::error::{Error, Result};
use crate::nn::params::{Dims, ParamSet};

pub const HEAD_MAGIC: &[u8; 4] = b"FCH1";
const HEADER_LEN: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct FcHead {
    pub hidden: usize,
    pub output: usize,
    pub values: Vec<f64>,
}

impl FcHead {
    pub fn from_model(model: &ParamSet) -> Self {
        let d = model.dims();
        FcHead { hidden: d.hidden, output: d.output, values: model.fc_extract() }
    }

    /// Number of values carried by a head of this shape.
    pub fn payload_len(&self) -> usize {
        self.values.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(HEAD_MAGIC);
        out.extend_from_slice(&(self.hidden as u32).to_le_bytes());
        out.extend_from_slice(&(self.output as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != HEAD_MAGIC {
            return Err(Error::invalid("not an FC head: bad magic or truncated header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
        let (hidden, output) = (word(4), word(8));
        let n = hidden * output + output;
        if bytes.len() != HEADER_LEN + 8 * n {
            return Err(Error::dim(format!(
                "FC head {hidden}x{output} needs {} payload bytes, got {}",
                8 * n,
                bytes.len() - HEADER_LEN
            )));
        }
        let values =
            bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(FcHead { hidden, output, values })
    }

    /// Checks the head fits a model of `dims`.
    pub fn check(&self, dims: Dims) -> Result<()> {
        if self.hidden != dims.hidden || self.output != dims.output || self.values.len() != dims.fc_len() {
            return Err(Error::dim(format!("head {}x{} does not fit model dims {:?}", self.hidden, self.output, dims)));
        }
        Ok(())
    }
}
