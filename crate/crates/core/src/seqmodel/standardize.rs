use serde::{Deserialize, Serialize};

use crate::backend::{canonical_serialization, StructureBackend};
use crate::error::Result;
use crate::lexicon::Symbol;
use crate::structures::StructureInstance;

/// Per-symbol affine map `v ↦ (v − shift) / scale` applied to values before they reach
/// the model. Densities in original units pick up `−ln scale` per value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(vocab: usize) -> Self {
        Standardizer { shift: vec![0.0; vocab], scale: vec![1.0; vocab] }
    }

    /// Mean and standard deviation of every value-carrying symbol over the dataset.
    /// Symbols seen fewer than twice, or with (near) constant values, keep scale 1.
    pub fn fit(backend: &dyn StructureBackend, data: &[StructureInstance]) -> Result<Self> {
        let v = backend.alphabet().len();
        let mut sum = vec![0.0; v];
        let mut sq = vec![0.0; v];
        let mut n = vec![0usize; v];
        for x in data {
            for e in canonical_serialization(backend, x)?.elements {
                if let Some(val) = e.value {
                    let i = e.symbol.index();
                    sum[i] += val;
                    sq[i] += val * val;
                    n[i] += 1;
                }
            }
        }
        let mut s = Self::identity(v);
        for i in 0..v {
            if n[i] == 0 {
                continue;
            }
            let mean = sum[i] / n[i] as f64;
            s.shift[i] = mean;
            if n[i] >= 2 {
                let var = (sq[i] / n[i] as f64 - mean * mean).max(0.0);
                if var.sqrt() > 1e-9 {
                    s.scale[i] = var.sqrt();
                }
            }
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shift.is_empty()
    }

    pub fn apply(&self, s: Symbol, v: f64) -> f64 {
        (v - self.shift[s.index()]) / self.scale[s.index()]
    }

    pub fn log_scale(&self, s: Symbol) -> f64 {
        self.scale[s.index()].ln()
    }
}
