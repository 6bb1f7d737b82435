//! Probabilities of instances recovered from a model over serializations.
//!
//! The push-forward probability of `x` sums model mass over its fiber. When the fiber
//! is too large, [`recover_density`] averages `P(a) / q(a|x)` over serializations drawn
//! by the sampler, which is unbiased for the same sum.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::backend::StructureBackend;
use crate::error::{Error, Result};
use crate::lexicon::{LexiconElement, Serialization};
use crate::par;
use crate::rng::{self, domain};
use crate::sampler::{path_log_prob, sample_serialization, SamplerConfig};
use crate::seqmodel::SeqModel;
use crate::structures::StructureInstance;

/// Anything that assigns a log-probability to a serialization.
pub trait SequenceScorer: Sync {
    fn log_prob(&self, a: &Serialization) -> Result<f64>;
}

impl SequenceScorer for SeqModel {
    fn log_prob(&self, a: &Serialization) -> Result<f64> {
        SeqModel::log_prob(self, a)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Explicit sequence distribution keyed by exact prefix. Each stored conditional is a
/// normalized distribution over the elements that follow the prefix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TabularSeqModel {
    conditionals: HashMap<Vec<LexiconElement>, BTreeMap<LexiconElement, f64>>,
}

impl TabularSeqModel {
    /// Normalizes non-negative sequence masses into prefix conditionals. Sequences with
    /// zero mass are dropped.
    pub fn from_weighted_sequences<I>(seqs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Serialization, f64)>,
    {
        let mut child_mass: HashMap<Vec<LexiconElement>, BTreeMap<LexiconElement, f64>> = HashMap::new();
        let mut any = false;
        for (a, w) in seqs {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("sequence mass {w}")));
            }
            if w == 0.0 {
                continue;
            }
            any = true;
            for t in 0..a.elements.len() {
                *child_mass
                    .entry(a.elements[..t].to_vec())
                    .or_default()
                    .entry(a.elements[t])
                    .or_insert(0.0) += w;
            }
        }
        if !any {
            return Err(Error::InvalidMeasure("no sequence with positive mass".into()));
        }
        for dist in child_mass.values_mut() {
            let total: f64 = dist.values().sum();
            dist.values_mut().for_each(|p| *p /= total);
        }
        Ok(TabularSeqModel { conditionals: child_mass })
    }

    /// Next-element distribution after `prefix`, if the prefix is reachable.
    pub fn conditional(&self, prefix: &[LexiconElement]) -> Option<&BTreeMap<LexiconElement, f64>> {
        self.conditionals.get(prefix)
    }

    pub fn prefix_count(&self) -> usize {
        self.conditionals.len()
    }
}

impl SequenceScorer for TabularSeqModel {
    fn log_prob(&self, a: &Serialization) -> Result<f64> {
        let mut lp = 0.0;
        for t in 0..a.elements.len() {
            match self.conditionals.get(&a.elements[..t]).and_then(|d| d.get(&a.elements[t])) {
                Some(p) => lp += p.ln(),
                None => return Ok(f64::NEG_INFINITY),
            }
        }
        Ok(lp)
    }
}

/// The exact sequence distribution of "pick an instance uniformly from the dataset,
/// then run the sampler": mass `q(a|x) / N` on every serialization `a` of every `x`.
pub fn build_tabular_oracle(
    dataset: &[StructureInstance],
    backend: &dyn StructureBackend,
    cfg: &SamplerConfig,
    bound: usize,
) -> Result<TabularSeqModel> {
    if dataset.is_empty() {
        return Err(Error::InvalidInstance("empty dataset".into()));
    }
    let n = dataset.len() as f64;
    let per = par::try_map_indexed(dataset.len(), |i| {
        let x = &dataset[i];
        backend
            .enumerate_serializations(x, bound)?
            .into_iter()
            .map(|a| Ok((path_log_prob(backend, x, &a, cfg)?.exp() / n, a)))
            .collect::<Result<Vec<_>>>()
    })?;
    TabularSeqModel::from_weighted_sequences(per.into_iter().flatten().map(|(w, a)| (a, w)))
}

/// Σ over the fiber of `P(a)`.
pub fn pushforward_prob(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    model: &dyn SequenceScorer,
    bound: usize,
) -> Result<f64> {
    Ok(log_pushforward_prob(backend, x, model, bound)?.exp())
}

pub fn log_pushforward_prob(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    model: &dyn SequenceScorer,
    bound: usize,
) -> Result<f64> {
    let fiber = backend.enumerate_serializations(x, bound)?;
    let lps = par::try_map_slice(&fiber, |_, a| model.log_prob(a))?;
    Ok(log_sum_exp(&lps))
}

/// A property of a serialization.
#[derive(Clone, Debug, PartialEq)]
pub enum Property {
    /// The serialization itself.
    Sequence(Serialization),
    /// The value of a custom property function.
    Key(String),
}

pub type PropertyFn<'a> = &'a (dyn Fn(&Serialization) -> String + Sync);
pub type PropertyMassFn<'a> = &'a (dyn Fn(&StructureInstance, &str) -> Result<f64> + Sync);

/// How serializations are grouped into properties.
#[derive(Clone, Copy)]
pub enum PropertyView<'a> {
    Singleton,
    /// `mass(x, o)` returns P(o|x) directly; without it, P(o|x) is summed over the
    /// enumerated fiber.
    Custom { property: PropertyFn<'a>, mass: Option<PropertyMassFn<'a>> },
}

impl PropertyView<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            PropertyView::Singleton => "singleton",
            PropertyView::Custom { .. } => "custom",
        }
    }
}

/// P(o|x): the probability that the sampler emits a serialization with property `o`.
/// For singleton properties this is the path probability q(o|x).
pub fn property_normalizer(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    o: &Property,
    view: PropertyView<'_>,
    cfg: &SamplerConfig,
    bound: usize,
) -> Result<f64> {
    match (view, o) {
        (PropertyView::Singleton, Property::Sequence(a)) => match path_log_prob(backend, x, a, cfg) {
            Ok(lq) => Ok(lq.exp()),
            Err(Error::NotASerializationOf) => Err(Error::UnrealizableProperty),
            Err(e) => Err(e),
        },
        (PropertyView::Custom { property, mass }, Property::Key(k)) => {
            let fiber = backend.enumerate_serializations(x, bound)?;
            if !fiber.iter().any(|a| property(a) == *k) {
                return Err(Error::UnrealizableProperty);
            }
            if let Some(mass) = mass {
                return mass(x, k);
            }
            let mut total = 0.0;
            for a in fiber.iter().filter(|a| property(a) == *k) {
                total += path_log_prob(backend, x, a, cfg)?.exp();
            }
            Ok(total)
        }
        _ => Err(Error::InvalidConfig("property does not match the property view".into())),
    }
}

/// [Σ over the fiber ∩ property class of P(a)] / P(o|x).
pub fn frac_prob(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    o: &Property,
    model: &dyn SequenceScorer,
    view: PropertyView<'_>,
    cfg: &SamplerConfig,
    bound: usize,
) -> Result<f64> {
    let denom = property_normalizer(backend, x, o, view, cfg, bound)?;
    if denom == 0.0 {
        return Err(Error::DivisionUndefined);
    }
    let numer = match (view, o) {
        (PropertyView::Singleton, Property::Sequence(a)) => model.log_prob(a)?.exp(),
        (PropertyView::Custom { property, .. }, Property::Key(k)) => {
            let mut lps = Vec::new();
            for a in backend.enumerate_serializations(x, bound)? {
                if property(&a) == *k {
                    lps.push(model.log_prob(&a)?);
                }
            }
            log_sum_exp(&lps).exp()
        }
        _ => unreachable!("checked by property_normalizer"),
    };
    Ok(numer / denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEstimate {
    pub estimate: f64,
    /// Standard error of the mean; NaN for a single draw.
    pub stderr: f64,
    /// Natural log of the estimate, accurate even when the estimate underflows.
    pub log_estimate: f64,
    pub m: usize,
}

/// Importance-sampling estimate of the push-forward probability from `m` sampler draws.
/// Draw `j` uses the stream `(cfg.seed, stream_key, j)`.
pub fn recover_density(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    model: &dyn SequenceScorer,
    m: usize,
    cfg: &SamplerConfig,
    stream_key: u64,
) -> Result<RecoveryEstimate> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be at least 1".into()));
    }
    let log_w = par::try_map_indexed(m, |j| {
        let mut r = rng::stream(cfg.seed, domain::RECOVER, stream_key, j as u64);
        let a = sample_serialization(backend, x, cfg, &mut r)?;
        let lq = a.log_q().expect("sampler records step log-probabilities");
        if lq == f64::NEG_INFINITY {
            return Err(Error::InternalInconsistency("sampled a path of probability 0".into()));
        }
        Ok(model.log_prob(&a)? - lq)
    })?;
    let mx = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return Ok(RecoveryEstimate { estimate: 0.0, stderr: 0.0, log_estimate: mx, m });
    }
    let scaled: Vec<f64> = log_w.iter().map(|l| (l - mx).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / m as f64;
    let stderr = if m > 1 {
        let var = scaled.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt() * mx.exp()
    } else {
        f64::NAN
    };
    Ok(RecoveryEstimate { estimate: mean * mx.exp(), stderr, log_estimate: mean.ln() + mx, m })
}

/// One line of a recovery report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub instance_id: u64,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub log_estimate: f64,
    pub m: usize,
    pub mode: String,
    /// Exact push-forward probability when the fiber was enumerable.
    pub exact: Option<f64>,
    /// "ok", "unavailable" when the fiber exceeded the enumeration bound, or "skipped"
    /// when no exact value was requested.
    pub exact_status: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SamplingMeasure;
    use crate::sampler::SamplerMode;
    use crate::structures::{SetBackend, SetInstance, TreeBackend, TreeInstance, TreeNode};

    fn set(xs: &[&str]) -> StructureInstance {
        StructureInstance::Set(SetInstance::new(xs.iter().copied()).unwrap())
    }

    fn seq(b: &dyn StructureBackend, names: &[&str]) -> Serialization {
        Serialization::new(names.iter().map(|n| b.alphabet().element(n, None).unwrap()).collect())
    }

    fn uniform() -> SamplerConfig {
        SamplerConfig::streaming(SamplingMeasure::Uniform)
    }

    #[test]
    fn oracle_examples() {
        let b = SetBackend::new(["A", "B", "C"]).unwrap();
        let o = build_tabular_oracle(&[set(&["A", "B"])], &b, &uniform(), 100).unwrap();
        for a in [seq(&b, &["A", "B", "<eos>"]), seq(&b, &["B", "A", "<eos>"])] {
            assert!((o.log_prob(&a).unwrap().exp() - 0.5).abs() < 1e-15);
        }
        let o = build_tabular_oracle(&[set(&["A", "B", "C"])], &b, &uniform(), 100).unwrap();
        let after_a = o.conditional(&seq(&b, &["A"]).elements).unwrap();
        assert_eq!(after_a.len(), 2);
        assert!(after_a.values().all(|p| (p - 0.5).abs() < 1e-15));
        assert!((pushforward_prob(&b, &set(&["A", "B", "C"]), &o, 100).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(pushforward_prob(&b, &set(&["A"]), &o, 100).unwrap(), 0.0);

        let data = [set(&["A", "B"]), set(&["C"])];
        let o = build_tabular_oracle(&data, &b, &uniform(), 100).unwrap();
        for x in &data {
            assert!((pushforward_prob(&b, x, &o, 100).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn normalizer_examples() {
        let b = SetBackend::new(["A", "B", "C"]).unwrap();
        let bac = Property::Sequence(seq(&b, &["B", "A", "C", "<eos>"]));
        let p = property_normalizer(&b, &set(&["A", "B", "C"]), &bac, PropertyView::Singleton, &uniform(), 100);
        assert!((p.unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let ab = Property::Sequence(seq(&b, &["A", "B", "<eos>"]));
        let p = property_normalizer(&b, &set(&["A", "B"]), &ab, PropertyView::Singleton, &uniform(), 100);
        assert!((p.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(
            property_normalizer(&b, &set(&["A"]), &ab, PropertyView::Singleton, &uniform(), 100),
            Err(Error::UnrealizableProperty)
        );

        let t = TreeBackend::new(["A", "B"], true).unwrap();
        let x = StructureInstance::Tree(TreeInstance::new(Some(TreeNode::node("A", vec![TreeNode::leaf("B")])), true));
        let a = crate::backend::canonical_serialization(&t, &x).unwrap();
        let p = property_normalizer(&t, &x, &Property::Sequence(a), PropertyView::Singleton, &uniform(), 100);
        assert_eq!(p.unwrap(), 1.0);
    }

    #[test]
    fn frac_prob_is_property_independent() {
        let b = SetBackend::new(["A", "B", "C"]).unwrap();
        let data = [set(&["A", "B", "C"]), set(&["A", "C"]), set(&["A", "C"])];
        let o = build_tabular_oracle(&data, &b, &uniform(), 100).unwrap();
        let x = &data[0];
        let push = pushforward_prob(&b, x, &o, 100).unwrap();
        for a in b.enumerate_serializations(x, 100).unwrap() {
            let f = frac_prob(&b, x, &Property::Sequence(a), &o, PropertyView::Singleton, &uniform(), 100).unwrap();
            assert!((f - push).abs() < 1e-12);
        }

        // first element as a custom property
        let first = |a: &Serialization| format!("{}", a.elements[0].symbol.0);
        let view = PropertyView::Custom { property: &first, mass: None };
        for k in ["0", "1", "2"] {
            let f = frac_prob(&b, x, &Property::Key(k.into()), &o, view, &uniform(), 100).unwrap();
            assert!((f - push).abs() < 1e-12);
        }
        assert_eq!(
            frac_prob(&b, x, &Property::Key("9".into()), &o, view, &uniform(), 100),
            Err(Error::UnrealizableProperty)
        );
        let canon = SamplerConfig::streaming(SamplingMeasure::Canonical);
        let late = Property::Sequence(seq(&b, &["C", "B", "A", "<eos>"]));
        assert_eq!(
            frac_prob(&b, x, &late, &o, PropertyView::Singleton, &canon, 100),
            Err(Error::DivisionUndefined)
        );
    }

    struct Flat(f64);

    impl SequenceScorer for Flat {
        fn log_prob(&self, _: &Serialization) -> Result<f64> {
            Ok(self.0.ln())
        }
    }

    #[test]
    fn recovery_examples() {
        let b = SetBackend::new(["A", "B", "C"]).unwrap();
        let x = set(&["A", "B", "C"]);
        let est = recover_density(&b, &x, &Flat(0.01), 50, &uniform(), 0).unwrap();
        assert!((est.estimate - 0.06).abs() < 1e-15);
        assert!(est.stderr.abs() < 1e-15);

        let data = [x.clone(), set(&["B"])];
        for mode in [SamplerMode::Streaming, SamplerMode::Enumerating] {
            let cfg = SamplerConfig::new(mode, SamplingMeasure::Uniform);
            let o = build_tabular_oracle(&data, &b, &cfg, 100).unwrap();
            let est = recover_density(&b, &x, &o, 20, &cfg, 3).unwrap();
            assert!((est.estimate - 0.5).abs() < 1e-12);
            assert!((est.log_estimate - 0.5f64.ln()).abs() < 1e-12);
        }
        assert!(recover_density(&b, &x, &Flat(0.5), 1, &uniform(), 0).unwrap().stderr.is_nan());
    }
}
