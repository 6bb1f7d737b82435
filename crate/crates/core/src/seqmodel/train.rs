use std::io::Write;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::backend::StructureBackend;
use crate::constraints::{build_constraint_matrix, ConstraintMatrix};
use crate::error::{Error, Result};
use crate::lexicon::Serialization;
use crate::measure::SamplingMeasure;
use crate::par;
use crate::rng::{self, domain};
use crate::sampler::{drop_features, sample_serialization, SamplerConfig};
use crate::structures::{LabeledInstance, Target};

use super::loss::{batch_terms, Objective};
use super::{Adam, SeqModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Instances drawn (with replacement) per step.
    pub batch: usize,
    pub serializations_per_instance: usize,
    pub max_steps: u64,
    pub clip: f64,
    /// A metrics row is produced every this many steps and after the last step.
    pub eval_every: u64,
    /// Fixed serializations per validation instance.
    pub valid_serializations: usize,
    pub seed: u64,
    /// Train the discriminative head instead of the sequence likelihood.
    pub discriminative: bool,
    /// Record elapsed seconds in the metrics (otherwise 0, keeping output reproducible).
    pub record_wall_time: bool,
    pub max_wall_seconds: Option<f64>,
    /// Consecutive skipped non-finite steps tolerated before aborting.
    pub max_nonfinite_steps: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.0,
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch: 32,
            serializations_per_instance: 2,
            max_steps: 1000,
            clip: 5.0,
            eval_every: 100,
            valid_serializations: 4,
            seed: 0,
            discriminative: false,
            record_wall_time: false,
            max_wall_seconds: None,
            max_nonfinite_steps: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) || !(self.clip > 0.0) {
            return bad("epsilon and clip must be positive");
        }
        if self.batch == 0 || self.serializations_per_instance == 0 || self.eval_every == 0 {
            return bad("batch, serializations_per_instance and eval_every must be at least 1");
        }
        if self.lambda > 0.0 && self.serializations_per_instance < 2 {
            return bad("serializations_per_instance must be at least 2 when lambda > 0");
        }
        Ok(())
    }
}

/// Model, optimizer moments and the number of completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: SeqModel,
    pub adam: Adam,
    pub step: u64,
}

impl TrainState {
    pub fn new(model: SeqModel, cfg: &TrainConfig) -> Self {
        let adam = Adam::new(
            model.layout.total,
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
            cfg.clip,
        );
        TrainState { model, adam, step: 0 }
    }
}

/// One metrics row. NLLs are per serialization (original value units); `reg_value` is
/// the batch regularizer divided by the number of serializations.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub train_nll: f64,
    pub valid_nll: f64,
    pub reg_value: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "step,train_nll,valid_nll,reg_value,wall_seconds";

pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.step, r.train_nll, r.valid_nll, r.reg_value, r.wall_seconds)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<MetricsRow>,
    /// The wall-clock budget ran out before `max_steps`.
    pub stopped_early: bool,
}

fn targets_of(data: &[&LabeledInstance]) -> Result<Vec<Target>> {
    data.iter()
        .map(|x| x.target.ok_or_else(|| Error::InvalidInstance("unlabeled instance".into())))
        .collect()
}

struct Sampled {
    batch: Vec<Serialization>,
    targets: Vec<Target>,
    constraints: ConstraintMatrix,
}

fn sample_step(
    backend: &dyn StructureBackend,
    data: &[LabeledInstance],
    cfg: &TrainConfig,
    sampler: &SamplerConfig,
    step: u64,
) -> Result<Sampled> {
    let mut pick = rng::stream(cfg.seed, domain::TRAIN_BATCH, step, 0);
    let slots: Vec<usize> = (0..cfg.batch).map(|_| pick.gen_range(0..data.len())).collect();
    let drop = match sampler.measure {
        SamplingMeasure::BiasedFront { drop_probability, .. } => drop_probability,
        _ => 0.0,
    };
    let s = cfg.serializations_per_instance;
    let batch = par::try_map_indexed(slots.len() * s, |k| {
        let slot = k / s;
        let x = &data[slots[slot]].instance;
        let x = drop_features(x, drop, &mut rng::stream(cfg.seed, domain::DROP, step, slot as u64));
        let mut r = rng::stream(cfg.seed, domain::TRAIN_SERIALIZE, step, k as u64);
        sample_serialization(backend, &x, sampler, &mut r)
    })?;
    let targets = if cfg.discriminative {
        targets_of(&(0..batch.len()).map(|k| &data[slots[k / s]]).collect::<Vec<_>>())?
    } else {
        Vec::new()
    };
    let constraints = if cfg.lambda > 0.0 {
        build_constraint_matrix(&batch, backend)?
    } else {
        ConstraintMatrix::default()
    };
    Ok(Sampled { batch, targets, constraints })
}

/// Mean objective over a fixed set of serializations.
fn mean_objective(model: &SeqModel, batch: &[Serialization], targets: &[Target], disc: bool) -> Result<f64> {
    if batch.is_empty() {
        return Ok(f64::NAN);
    }
    let encs = batch.iter().map(|a| model.encode(a)).collect::<Result<Vec<_>>>()?;
    let obj = if disc { Objective::Discriminative(targets) } else { Objective::Generative };
    let t = batch_terms(model, &encs, obj, &ConstraintMatrix::default(), 0.0, false)?;
    Ok((t.data + t.log_jacobian) / batch.len() as f64)
}

/// Runs Adam from `state.step` up to `cfg.max_steps`. Fresh serializations are drawn at
/// every step from streams keyed by the step number, so a resumed run reproduces an
/// uninterrupted one exactly.
pub fn train(
    backend: &dyn StructureBackend,
    data: &[LabeledInstance],
    valid: &[LabeledInstance],
    cfg: &TrainConfig,
    sampler: &SamplerConfig,
    mut state: TrainState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInstance("empty dataset".into()));
    }
    if cfg.discriminative && state.model.dims.head == super::HeadKind::None {
        return Err(Error::MissingHead);
    }
    let vs = cfg.valid_serializations;
    let valid_batch = par::try_map_indexed(valid.len() * vs, |k| {
        let mut r = rng::stream(cfg.seed, domain::VALID, (k / vs) as u64, (k % vs) as u64);
        sample_serialization(backend, &valid[k / vs].instance, sampler, &mut r)
    })?;
    let valid_targets = if cfg.discriminative {
        targets_of(&(0..valid_batch.len()).map(|k| &valid[k / vs]).collect::<Vec<_>>())?
    } else {
        Vec::new()
    };

    let start = Instant::now();
    let mut metrics = Vec::new();
    let mut skipped = 0u32;
    let mut last_finite = state.step;
    let mut stopped_early = false;
    while state.step < cfg.max_steps {
        let step = state.step;
        let s = sample_step(backend, data, cfg, sampler, step)?;
        let n = s.batch.len() as f64;
        let encs = s.batch.iter().map(|a| state.model.encode(a)).collect::<Result<Vec<_>>>()?;
        let obj = if cfg.discriminative {
            Objective::Discriminative(&s.targets)
        } else {
            Objective::Generative
        };
        let terms = match batch_terms(&state.model, &encs, obj, &s.constraints, cfg.lambda, true) {
            Ok(t) if t.grad.as_ref().unwrap().iter().all(|g| g.is_finite()) => Some(t),
            Ok(_) | Err(Error::NonFiniteActivation { .. }) => None,
            Err(e) => return Err(e),
        };
        state.step += 1;
        let Some(terms) = terms else {
            skipped += 1;
            if skipped > cfg.max_nonfinite_steps {
                return Err(Error::Diverged { last_finite_step: last_finite });
            }
            continue;
        };
        skipped = 0;
        last_finite = state.step;
        let grad: Vec<f64> = terms.grad.unwrap().iter().map(|g| g / n).collect();
        state.adam.step(&mut state.model.params, &grad);

        let elapsed = start.elapsed().as_secs_f64();
        let out_of_time = cfg.max_wall_seconds.is_some_and(|m| elapsed >= m);
        if state.step.is_multiple_of(cfg.eval_every) || state.step == cfg.max_steps || out_of_time {
            metrics.push(MetricsRow {
                step: state.step,
                train_nll: (terms.data + terms.log_jacobian) / n,
                valid_nll: mean_objective(&state.model, &valid_batch, &valid_targets, cfg.discriminative)?,
                reg_value: terms.reg / n,
                wall_seconds: if cfg.record_wall_time { elapsed } else { 0.0 },
            });
        }
        if out_of_time && state.step < cfg.max_steps {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome { state, metrics, stopped_early })
}
