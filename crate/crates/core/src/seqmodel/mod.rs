//! Recurrent density model over serializations.
//!
//! `h⁰ = 0` and `hᵗ = σ(W_hh hᵗ⁻¹ + W_hi xᵗ)` where `xᵗ` is the one-hot symbol of the
//! t-th element followed by one real channel carrying its (standardized) value. The
//! next element is predicted from `hᵗ⁻¹`: a softmax over symbols and, for value-carrying
//! symbols, a Gaussian mixture over the value conditioned on `[hᵗ⁻¹; onehot(symbol)]`.
//! An optional discriminative head reads the final state `hᵀ`.
//!
//! All parameters live in one flat vector; [`Layout`] names the blocks in storage order.

mod adam;
mod checkpoint;
mod forward;
mod loss;
mod standardize;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Serialization;
use crate::rng;

pub use adam::Adam;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{Encoded, Trace};
pub use loss::{discriminative_loss, loss, loss_grad, normalized_distance, regularizer, Objective};
pub use standardize::Standardizer;
pub use train::{
    train, write_metrics_csv, MetricsRow, TrainConfig, TrainOutcome, TrainState, METRICS_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// Logistic-sigmoid recurrence without bias.
    Vanilla,
    /// Gated recurrent unit (update, reset and candidate gates, no bias).
    Gru,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    None,
    /// Softmax over classes `1..=c`.
    Classes(u32),
    /// Gaussian mixture over a scalar target with this many components.
    Regression(u32),
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::None => 0,
            HeadKind::Classes(c) => c as usize,
            HeadKind::Regression(m) => 3 * m as usize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub hidden: usize,
    pub mixture: usize,
    pub cell: CellKind,
    pub head: HeadKind,
}

impl ModelDims {
    pub fn input_dim(&self) -> usize {
        self.vocab + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 1 || self.hidden < 1 || self.mixture < 1 {
            return Err(Error::InvalidConfig(
                "vocabulary, hidden and mixture sizes must be at least 1".into(),
            ));
        }
        match self.head {
            HeadKind::Classes(0) | HeadKind::Regression(0) => {
                Err(Error::InvalidConfig("discriminative head needs at least 1 output".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of every parameter block. A recurrent gate is a pair of blocks: the
/// hidden-to-hidden matrix and the input matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub blocks: Vec<Block>,
    pub gates: Vec<(usize, usize)>,
    pub cat_w: usize,
    pub cat_b: usize,
    pub mix_w: usize,
    pub mix_b: usize,
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(d: &ModelDims) -> Self {
        let (h, v, m) = (d.hidden, d.vocab, d.mixture);
        let mut blocks = Vec::new();
        let mut push = |name: &'static str, rows: usize, cols: usize| {
            let offset = blocks.last().map_or(0, |b: &Block| b.offset + b.len());
            blocks.push(Block { name, rows, cols, offset });
            offset
        };
        let gate_names: &[(&str, &str)] = match d.cell {
            CellKind::Vanilla => &[("w_hh", "w_hi")],
            CellKind::Gru => &[("w_hz", "w_iz"), ("w_hr", "w_ir"), ("w_hn", "w_in")],
        };
        let gates = gate_names
            .iter()
            .map(|(a, b)| (push(a, h, h), push(b, h, d.input_dim())))
            .collect();
        let cat_w = push("cat_w", v, h);
        let cat_b = push("cat_b", v, 1);
        let mix_w = push("mix_w", 3 * m, h + v);
        let mix_b = push("mix_b", 3 * m, 1);
        let out = d.head.outputs();
        let head_w = push("head_w", out, h);
        let head_b = push("head_b", out, 1);
        let total = head_b + out;
        Layout { blocks, gates, cat_w, cat_b, mix_w, mix_b, head_w, head_b, total }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqModel {
    pub dims: ModelDims,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub standardizer: Standardizer,
}

impl SeqModel {
    /// All-zero parameters.
    pub fn zeros(dims: ModelDims, standardizer: Standardizer) -> Result<Self> {
        dims.validate()?;
        if standardizer.len() != dims.vocab {
            return Err(Error::InvalidConfig("standardizer does not match the vocabulary".into()));
        }
        let layout = Layout::new(&dims);
        let params = vec![0.0; layout.total];
        Ok(SeqModel { dims, layout, params, standardizer })
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(dims: ModelDims, standardizer: Standardizer, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(dims, standardizer)?;
        let mut r = rng::stream(seed, rng::domain::INIT, 0, 0);
        for b in &m.layout.blocks {
            if b.cols == 1 {
                continue;
            }
            let a = 1.0 / (b.cols as f64).sqrt();
            for p in &mut m.params[b.range()] {
                *p = r.gen_range(-a..a);
            }
        }
        Ok(m)
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.layout.total {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameters, got {}",
                self.layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite parameter".into()));
        }
        Ok(SeqModel { params, ..self.clone() })
    }

    pub fn encode(&self, a: &Serialization) -> Result<Encoded> {
        Encoded::new(a, &self.standardizer, self.dims.vocab)
    }

    /// −log P(a) in the original value units.
    pub fn sequence_nll(&self, a: &Serialization) -> Result<f64> {
        let e = self.encode(a)?;
        let t = self.forward(&e)?;
        Ok(t.nll + e.log_jacobian)
    }

    /// log P(a) in the original value units.
    pub fn log_prob(&self, a: &Serialization) -> Result<f64> {
        Ok(-self.sequence_nll(a)?)
    }

    /// `h⁰ … hᵀ`.
    pub fn hidden_states(&self, a: &Serialization) -> Result<Vec<Vec<f64>>> {
        Ok(self.forward(&self.encode(a)?)?.h)
    }

    /// Class probabilities `P(y = c | hᵀ)` for `c = 1..=classes`.
    pub fn class_probs(&self, a: &Serialization) -> Result<Vec<f64>> {
        let HeadKind::Classes(_) = self.dims.head else {
            return Err(Error::MissingHead);
        };
        let t = self.forward(&self.encode(a)?)?;
        let logits = self.head_outputs(t.h.last().unwrap());
        Ok(forward::log_softmax(&logits).into_iter().map(f64::exp).collect())
    }

    /// Mean of the regression mixture at `hᵀ`.
    pub fn regression_mean(&self, a: &Serialization) -> Result<f64> {
        let HeadKind::Regression(m) = self.dims.head else {
            return Err(Error::MissingHead);
        };
        let t = self.forward(&self.encode(a)?)?;
        let o = self.head_outputs(t.h.last().unwrap());
        let m = m as usize;
        let w = forward::log_softmax(&o[2 * m..]);
        Ok((0..m).map(|i| w[i].exp() * o[i]).sum())
    }
}

#[cfg(test)]
mod tests;
