//! Sampling measures μ over (state, symbol) pairs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::lexicon::Symbol;
use crate::state::StateKey;

/// Which default measure a backend should hand out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureMode {
    Unconditional,
    Conditional,
}

/// Strictly positive weighting of candidate next elements.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplingMeasure {
    /// Identical weight for every candidate.
    Uniform,
    /// Explicit weights per `(state, symbol)`.
    Table(WeightTable),
    /// Mixture of two uniform regimes: with probability `front_fraction` every
    /// conditioning element (input feature) is emitted before any other element,
    /// otherwise candidates interleave uniformly. `drop_probability` is the chance that
    /// each input feature is removed from an instance before it is serialized during
    /// training.
    BiasedFront { front_fraction: f64, drop_probability: f64 },
    /// Always takes the smallest candidate in canonical symbol order (q = 1).
    Canonical,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightTable {
    weights: HashMap<(StateKey, Symbol), f64>,
}

impl WeightTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a weight; zero, negative and non-finite weights are rejected.
    pub fn insert(&mut self, state: StateKey, symbol: Symbol, weight: f64) -> Result<()> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "weight {weight} for symbol #{} is not strictly positive",
                symbol.0
            )));
        }
        self.weights.insert((state, symbol), weight);
        Ok(())
    }

    pub fn get(&self, state: &StateKey, symbol: Symbol) -> Option<f64> {
        self.weights.get(&(state.clone(), symbol)).copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl SamplingMeasure {
    pub fn biased_front(front_fraction: f64) -> Result<Self> {
        Self::biased_front_with_drop(front_fraction, 0.0)
    }

    pub fn biased_front_with_drop(front_fraction: f64, drop_probability: f64) -> Result<Self> {
        if !(front_fraction > 0.0 && front_fraction <= 1.0) {
            return Err(Error::InvalidMeasure(format!(
                "front_fraction {front_fraction} outside (0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&drop_probability) {
            return Err(Error::InvalidMeasure(format!(
                "drop_probability {drop_probability} outside [0, 1)"
            )));
        }
        Ok(SamplingMeasure::BiasedFront { front_fraction, drop_probability })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingMeasure::Uniform => "uniform",
            SamplingMeasure::Table(_) => "table",
            SamplingMeasure::BiasedFront { .. } => "biased-front",
            SamplingMeasure::Canonical => "canonical",
        }
    }
}

/// μ(state, symbol). Within each regime of a biased-front or canonical measure the
/// weights are uniform; the regime itself restricts the candidate pool.
pub fn measure_weight(mu: &SamplingMeasure, state: &StateKey, symbol: Symbol) -> Result<f64> {
    match mu {
        SamplingMeasure::Table(t) => t.get(state, symbol).ok_or_else(|| Error::MissingWeight {
            symbol: format!("#{}", symbol.0),
        }),
        _ => Ok(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::BackendTag;

    fn s() -> StateKey {
        StateKey::new(BackendTag::Set, vec![1, 2, 3])
    }

    #[test]
    fn uniform_is_one() {
        assert_eq!(measure_weight(&SamplingMeasure::Uniform, &s(), Symbol(4)).unwrap(), 1.0);
    }

    #[test]
    fn table_lookup_and_missing() {
        let mut t = WeightTable::new();
        t.insert(s(), Symbol(0), 2.0).unwrap();
        let mu = SamplingMeasure::Table(t);
        assert_eq!(measure_weight(&mu, &s(), Symbol(0)).unwrap(), 2.0);
        assert!(matches!(
            measure_weight(&mu, &s(), Symbol(1)),
            Err(Error::MissingWeight { .. })
        ));
    }

    #[test]
    fn nonpositive_weights_rejected() {
        let mut t = WeightTable::new();
        assert!(t.insert(s(), Symbol(0), 0.0).is_err());
        assert!(t.insert(s(), Symbol(0), -1.0).is_err());
        assert!(t.insert(s(), Symbol(0), f64::INFINITY).is_err());
    }

    #[test]
    fn front_fraction_range() {
        assert!(SamplingMeasure::biased_front(0.0).is_err());
        assert!(SamplingMeasure::biased_front(1.0).is_ok());
        assert!(SamplingMeasure::biased_front(1.5).is_err());
    }
}
