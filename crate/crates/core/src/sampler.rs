//! Element-wise sampling of a serialization of an instance.
//!
//! At every step the admissible next elements form a pool (a set, so automorphic
//! choices collapse), one element is drawn with probability proportional to μ, and the
//! pool shrinks to the serializations that agree with the prefix. The enumerating mode
//! filters the explicit fiber; the streaming mode asks a backend cursor instead. Both
//! produce the same pools, hence the same distribution.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::backend::{Cursor, StructureBackend};
use crate::error::{Error, Result};
use crate::lexicon::{Alphabet, LexiconElement, Serialization};
use crate::measure::{measure_weight, SamplingMeasure};
use crate::rng::{self, Rng};
use crate::state::StateKey;
use crate::structures::StructureInstance;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMode {
    Enumerating,
    Streaming,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub measure: SamplingMeasure,
    pub enumeration_bound: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub const DEFAULT_BOUND: usize = 100_000;

    pub fn new(mode: SamplerMode, measure: SamplingMeasure) -> Self {
        SamplerConfig { mode, measure, enumeration_bound: Self::DEFAULT_BOUND, seed: 0 }
    }

    pub fn streaming(measure: SamplingMeasure) -> Self {
        Self::new(SamplerMode::Streaming, measure)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.enumeration_bound == 0 {
            return Err(Error::InvalidConfig("enumeration_bound must be at least 1".into()));
        }
        Ok(())
    }
}

/// Distinct elements found at `position` (0-based) across the candidates, in canonical
/// order.
pub fn possible_elements(position: usize, candidates: &[Serialization]) -> Result<Vec<LexiconElement>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut set = BTreeSet::new();
    for c in candidates {
        let e = c.elements.get(position).ok_or_else(|| {
            Error::InternalInconsistency(format!("candidate shorter than position {position}"))
        })?;
        set.insert(*e);
    }
    Ok(set.into_iter().collect())
}

/// Candidates whose element at `position` equals `chosen`.
pub fn update_list(
    candidates: Vec<Serialization>,
    chosen: &LexiconElement,
    position: usize,
) -> Result<Vec<Serialization>> {
    let kept: Vec<Serialization> = candidates
        .into_iter()
        .filter(|c| c.elements.get(position) == Some(chosen))
        .collect();
    if kept.is_empty() {
        return Err(Error::InternalInconsistency(format!(
            "no candidate has the chosen element at position {position}"
        )));
    }
    Ok(kept)
}

/// Draws from `pool` with probability μ(state, ·) normalized over the pool, by
/// cumulative-weight inversion in pool order. Returns the element and the log of its
/// normalized mass.
pub fn sample_next(
    mu: &SamplingMeasure,
    state: &StateKey,
    pool: &[LexiconElement],
    rng: &mut Rng,
) -> Result<(LexiconElement, f64)> {
    if pool.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let weights = pool
        .iter()
        .map(|e| measure_weight(mu, state, e.symbol))
        .collect::<Result<Vec<f64>>>()?;
    let i = invert(&weights, rng);
    let total: f64 = weights.iter().sum();
    Ok((pool[i], (weights[i] / total).ln()))
}

fn invert(weights: &[f64], rng: &mut Rng) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Source of candidate pools along one path.
enum Pools<'a> {
    /// Indices into an explicit fiber that still agree with the prefix.
    Listed { fiber: std::borrow::Cow<'a, [Serialization]>, alive: Vec<usize>, position: usize },
    Streamed(Box<dyn Cursor + 'a>),
}

impl<'a> Pools<'a> {
    fn open(
        backend: &'a dyn StructureBackend,
        x: &'a StructureInstance,
        cfg: &SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.mode {
            SamplerMode::Enumerating => {
                let fiber = backend.enumerate_serializations(x, cfg.enumeration_bound)?;
                Self::listed(std::borrow::Cow::Owned(fiber))
            }
            SamplerMode::Streaming => Pools::Streamed(backend.cursor(x)?),
        })
    }

    fn listed(fiber: std::borrow::Cow<'a, [Serialization]>) -> Self {
        let alive = (0..fiber.len()).collect();
        Pools::Listed { fiber, alive, position: 0 }
    }

    fn pool(&self) -> Result<Vec<LexiconElement>> {
        match self {
            Pools::Listed { fiber, alive, position } => {
                if alive.is_empty() {
                    return Err(Error::EmptyCandidates);
                }
                let mut set = BTreeSet::new();
                for &i in alive {
                    let e = fiber[i].elements.get(*position).ok_or_else(|| {
                        Error::InternalInconsistency(format!("candidate shorter than position {position}"))
                    })?;
                    set.insert(*e);
                }
                Ok(set.into_iter().collect())
            }
            Pools::Streamed(c) => {
                let p = c.candidates();
                if p.is_empty() {
                    return Err(Error::EmptyCandidates);
                }
                Ok(p)
            }
        }
    }

    fn advance(&mut self, e: &LexiconElement) -> Result<()> {
        match self {
            Pools::Listed { fiber, alive, position } => {
                alive.retain(|&i| fiber[i].elements.get(*position) == Some(e));
                if alive.is_empty() {
                    return Err(Error::InternalInconsistency(format!(
                        "no candidate has the chosen element at position {position}"
                    )));
                }
                *position += 1;
                Ok(())
            }
            Pools::Streamed(c) => c.advance(e),
        }
    }
}

/// Regime of a biased-front measure. Other measures have a single regime.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Regime {
    Front,
    Interleaved,
}

/// Pool restricted by the regime: under `Front`, conditioning elements go first.
fn regime_pool(
    backend: &dyn StructureBackend,
    pool: &[LexiconElement],
    regime: Regime,
) -> Vec<LexiconElement> {
    if regime == Regime::Front {
        let front: Vec<LexiconElement> =
            pool.iter().copied().filter(|e| backend.is_conditioning(e)).collect();
        if !front.is_empty() {
            return front;
        }
    }
    pool.to_vec()
}

fn log_mass(
    backend: &dyn StructureBackend,
    mu: &SamplingMeasure,
    state: Option<&StateKey>,
    pool: &[LexiconElement],
    chosen: &LexiconElement,
    regime: Regime,
) -> Result<f64> {
    Ok(match mu {
        SamplingMeasure::Uniform => -(pool.len() as f64).ln(),
        SamplingMeasure::Canonical => {
            if pool.first() == Some(chosen) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        SamplingMeasure::BiasedFront { .. } => {
            let sub = regime_pool(backend, pool, regime);
            if sub.contains(chosen) {
                -(sub.len() as f64).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
        SamplingMeasure::Table(_) => {
            let state = state.expect("table measures track states");
            let mut total = 0.0;
            let mut own = 0.0;
            for e in pool {
                let w = measure_weight(mu, state, e.symbol)?;
                total += w;
                if e == chosen {
                    own = w;
                }
            }
            (own / total).ln()
        }
    })
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-step marginal log conditionals log q(a^t | a^{<t}, x) for a path, given the pool
/// seen before each step. For the biased-front mixture these are differences of the
/// mixture's cumulative prefix log-probabilities.
fn step_log_probs(
    backend: &dyn StructureBackend,
    mu: &SamplingMeasure,
    states: Option<&[StateKey]>,
    pools: &[Vec<LexiconElement>],
    path: &[LexiconElement],
) -> Result<Vec<f64>> {
    let state = |t: usize| states.map(|s| &s[t]);
    match mu {
        SamplingMeasure::BiasedFront { front_fraction, .. } => {
            let (lf, li) = (front_fraction.ln(), (1.0 - front_fraction).ln());
            let (mut cf, mut ci, mut prev) = (lf, li, 0.0);
            let mut out = Vec::with_capacity(path.len());
            for (t, e) in path.iter().enumerate() {
                cf += log_mass(backend, mu, None, &pools[t], e, Regime::Front)?;
                ci += log_mass(backend, mu, None, &pools[t], e, Regime::Interleaved)?;
                let cum = log_add(cf, ci);
                out.push(cum - prev);
                prev = cum;
            }
            Ok(out)
        }
        _ => path
            .iter()
            .enumerate()
            .map(|(t, e)| log_mass(backend, mu, state(t), &pools[t], e, Regime::Interleaved))
            .collect(),
    }
}

fn needs_states(mu: &SamplingMeasure) -> bool {
    matches!(mu, SamplingMeasure::Table(_))
}

/// Samples one serialization of `x`, with `step_log_probs` filled in.
pub fn sample_serialization(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    cfg: &SamplerConfig,
    rng: &mut Rng,
) -> Result<Serialization> {
    sample_with(backend, Pools::open(backend, x, cfg)?, &cfg.measure, rng)
}

/// Enumerating-mode sampling from an already enumerated fiber, which must be exactly
/// the distinct serializations of one instance. Saves re-enumerating on every draw.
pub fn sample_from_fiber(
    backend: &dyn StructureBackend,
    fiber: &[Serialization],
    measure: &SamplingMeasure,
    rng: &mut Rng,
) -> Result<Serialization> {
    sample_with(backend, Pools::listed(std::borrow::Cow::Borrowed(fiber)), measure, rng)
}

fn sample_with(
    backend: &dyn StructureBackend,
    mut pools: Pools<'_>,
    mu: &SamplingMeasure,
    rng: &mut Rng,
) -> Result<Serialization> {
    let regime = match mu {
        SamplingMeasure::BiasedFront { front_fraction, .. } => {
            if rng.gen::<f64>() < *front_fraction {
                Regime::Front
            } else {
                Regime::Interleaved
            }
        }
        _ => Regime::Interleaved,
    };
    let track = needs_states(mu);
    let mut states = vec![backend.initial_state()];
    let mut seen_pools = Vec::new();
    let mut path = Vec::new();
    let eos = backend.alphabet().eos();
    loop {
        let pool = pools.pool()?;
        let e = match mu {
            SamplingMeasure::Canonical => pool[0],
            SamplingMeasure::Table(_) => sample_next(mu, states.last().unwrap(), &pool, rng)?.0,
            _ => {
                let sub = regime_pool(backend, &pool, regime);
                sub[invert(&vec![1.0; sub.len()], rng)]
            }
        };
        pools.advance(&e)?;
        if track {
            let next = backend.transition(states.last().unwrap(), &e)?;
            states.push(next);
        }
        seen_pools.push(pool);
        path.push(e);
        if e.symbol == eos {
            break;
        }
    }
    let lp = step_log_probs(backend, mu, track.then_some(&states[..]), &seen_pools, &path)?;
    Ok(Serialization { elements: path, step_log_probs: Some(lp) })
}

/// Per-step log q for an existing serialization of `x`, replaying the same pools the
/// sampler would have seen.
pub fn path_step_log_probs(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    a: &Serialization,
    cfg: &SamplerConfig,
) -> Result<Vec<f64>> {
    let y = backend.deserialize(a).map_err(|_| Error::NotASerializationOf)?;
    if &y != x {
        return Err(Error::NotASerializationOf);
    }
    let mut pools = Pools::open(backend, x, cfg)?;
    let mut seen = Vec::with_capacity(a.len());
    for e in &a.elements {
        let pool = pools.pool()?;
        if !pool.contains(e) {
            return Err(Error::NotASerializationOf);
        }
        pools.advance(e)?;
        seen.push(pool);
    }
    let states = if needs_states(&cfg.measure) {
        Some(backend.replay_states(&a.elements)?)
    } else {
        None
    };
    step_log_probs(backend, &cfg.measure, states.as_deref(), &seen, &a.elements)
}

/// log q(a|x).
pub fn path_log_prob(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
    a: &Serialization,
    cfg: &SamplerConfig,
) -> Result<f64> {
    Ok(path_step_log_probs(backend, x, a, cfg)?.iter().sum())
}

/// Removes each conditioning feature of a series or propositional instance
/// independently with probability `p`. Other kinds are returned unchanged.
pub fn drop_features(x: &StructureInstance, p: f64, rng: &mut Rng) -> StructureInstance {
    if p <= 0.0 {
        return x.clone();
    }
    let mut keep = || rng.gen::<f64>() >= p;
    match x {
        StructureInstance::Series(s) => {
            let features = s.features().iter().filter(|_| keep()).map(|(k, v)| (k.clone(), *v)).collect();
            StructureInstance::Series(
                crate::structures::SeriesInstance::new(features, s.variables().to_vec(), s.values().to_vec())
                    .expect("subset of a valid series"),
            )
        }
        StructureInstance::Propositional(r) => {
            let mut r = r.clone();
            r.numeric.retain(|_, _| keep());
            r.categorical.retain(|_, _| keep());
            StructureInstance::Propositional(r)
        }
        other => other.clone(),
    }
}

/// `per_instance` serializations of every instance, drawn in parallel. Draw `j` of
/// instance `i` uses its own stream, so the corpus does not depend on thread count.
pub fn sample_corpus(
    backend: &dyn StructureBackend,
    instances: &[StructureInstance],
    cfg: &SamplerConfig,
    per_instance: usize,
) -> Result<Vec<(usize, Serialization)>> {
    let n = instances.len() * per_instance;
    let draws = par::try_map_indexed(n, |k| {
        let (i, j) = (k / per_instance, k % per_instance);
        let mut r = rng::stream(cfg.seed, rng::domain::SAMPLE, i as u64, j as u64);
        sample_serialization(backend, &instances[i], cfg, &mut r).map(|a| (i, a))
    })?;
    Ok(draws)
}

#[derive(Serialize, Deserialize)]
struct CorpusElement {
    sym: String,
    val: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    v: u64,
    instance_id: u64,
    elements: Vec<CorpusElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_log_probs: Option<Vec<f64>>,
}

pub const CORPUS_FORMAT_VERSION: u64 = 1;

/// One corpus JSONL line (no trailing newline).
pub fn corpus_line(alphabet: &Alphabet, instance_id: u64, a: &Serialization) -> Result<String> {
    let rec = CorpusRecord {
        v: CORPUS_FORMAT_VERSION,
        instance_id,
        elements: a
            .elements
            .iter()
            .map(|e| CorpusElement { sym: alphabet.name(e.symbol).to_string(), val: e.value })
            .collect(),
        step_log_probs: a.step_log_probs.clone(),
    };
    Ok(serde_json::to_string(&rec)?)
}

pub fn parse_corpus_line(alphabet: &Alphabet, line: &str) -> Result<(u64, Serialization)> {
    let rec: CorpusRecord = serde_json::from_str(line)?;
    if rec.v != CORPUS_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported corpus format version {}", rec.v)));
    }
    let elements = rec
        .elements
        .iter()
        .map(|e| alphabet.element(&e.sym, e.val))
        .collect::<Result<Vec<_>>>()?;
    let a = Serialization { elements, step_log_probs: rec.step_log_probs };
    a.check(alphabet)?;
    Ok((rec.instance_id, a))
}
