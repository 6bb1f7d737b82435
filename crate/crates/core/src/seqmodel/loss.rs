use crate::constraints::ConstraintMatrix;
use crate::error::{Error, Result};
use crate::lexicon::Serialization;
use crate::par;
use crate::structures::Target;

use super::{Encoded, SeqModel};

const NORM_FLOOR: f64 = 1e-12;

/// Which data term the batch loss uses.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    /// Summed sequence NLL.
    Generative,
    /// Summed `−log P(y | hᵀ)`, one target per serialization.
    Discriminative(&'a [Target]),
}

fn unit(h: &[f64]) -> (Vec<f64>, f64) {
    let n = h.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_FLOOR);
    (h.iter().map(|x| x / n).collect(), n)
}

/// `‖a/‖a‖ − b/‖b‖‖` with norms floored at 1e−12.
pub fn normalized_distance(a: &[f64], b: &[f64]) -> f64 {
    let (ua, _) = unit(a);
    let (ub, _) = unit(b);
    ua.iter().zip(&ub).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Σ over constraint entries `(j, k, t)` of the distance between normalized hidden
/// states. `hidden[j][t]` is `hᵗ` of serialization `j`.
pub fn regularizer(hidden: &[Vec<Vec<f64>>], c: &ConstraintMatrix) -> f64 {
    c.entries
        .iter()
        .map(|e| normalized_distance(&hidden[e.j][e.t], &hidden[e.k][e.t]))
        .fold(0.0, |a, b| a + b)
}

/// Regularizer value and ∂/∂hᵗ for every serialization. A zero difference contributes
/// the zero subgradient.
fn regularizer_grad(hidden: &[Vec<Vec<f64>>], c: &ConstraintMatrix) -> (f64, Vec<Vec<Vec<f64>>>) {
    let mut dh: Vec<Vec<Vec<f64>>> = hidden
        .iter()
        .map(|s| vec![vec![0.0; s[0].len()]; s.len()])
        .collect();
    let mut total = 0.0;
    for e in &c.entries {
        let (uj, nj) = unit(&hidden[e.j][e.t]);
        let (uk, nk) = unit(&hidden[e.k][e.t]);
        let diff: Vec<f64> = uj.iter().zip(&uk).map(|(a, b)| a - b).collect();
        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        total += dist;
        if dist == 0.0 {
            continue;
        }
        let g: Vec<f64> = diff.iter().map(|d| d / dist).collect();
        for (idx, u, n, sign) in [(e.j, &uj, nj, 1.0), (e.k, &uk, nk, -1.0)] {
            // d(h/‖h‖) = (I − u uᵀ)/‖h‖ when ‖h‖ exceeds the floor, else I/floor
            let dot: f64 = if n > NORM_FLOOR { u.iter().zip(&g).map(|(a, b)| a * b).sum() } else { 0.0 };
            for (i, d) in dh[idx][e.t].iter_mut().enumerate() {
                *d += sign * (g[i] - u[i] * dot) / n;
            }
        }
    }
    (total, dh)
}

/// Pieces of a batch objective, all summed over the batch.
pub(crate) struct BatchTerms {
    /// Data term in standardized units.
    pub data: f64,
    /// Σ ln scale, turning generative NLLs into original units.
    pub log_jacobian: f64,
    pub reg: f64,
    pub grad: Option<Vec<f64>>,
}

pub(crate) fn batch_terms(
    model: &SeqModel,
    encs: &[Encoded],
    objective: Objective<'_>,
    c: &ConstraintMatrix,
    lambda: f64,
    with_grad: bool,
) -> Result<BatchTerms> {
    if let Objective::Discriminative(ys) = objective {
        if ys.len() != encs.len() {
            return Err(Error::InvalidConfig("one target per serialization required".into()));
        }
    }
    let traces = par::try_map_indexed(encs.len(), |j| model.forward(&encs[j]))?;
    let use_reg = lambda != 0.0 && !c.is_empty();
    let hidden: Vec<Vec<Vec<f64>>>;
    let (reg, dh) = if use_reg {
        hidden = traces.iter().map(|t| t.h.clone()).collect();
        let (r, mut d) = regularizer_grad(&hidden, c);
        d.iter_mut().flatten().flatten().for_each(|x| *x *= lambda);
        (r, Some(d))
    } else {
        (0.0, None)
    };
    let log_jacobian = match objective {
        Objective::Generative => encs.iter().map(|e| e.log_jacobian).sum(),
        Objective::Discriminative(_) => 0.0,
    };
    let target = |j: usize| match objective {
        Objective::Generative => None,
        Objective::Discriminative(ys) => Some(ys[j]),
    };
    if !with_grad {
        let data = match objective {
            Objective::Generative => traces.iter().map(|t| t.nll).sum(),
            Objective::Discriminative(ys) => {
                let mut s = 0.0;
                for (t, y) in traces.iter().zip(ys) {
                    s += model.head_loss(t.h.last().unwrap(), *y)?.0;
                }
                s
            }
        };
        return Ok(BatchTerms { data, log_jacobian, reg, grad: None });
    }
    let parts = par::try_map_indexed(encs.len(), |j| {
        let mut g = vec![0.0; model.layout.total];
        let extra = dh.as_ref().map(|d| d[j].as_slice());
        let v = model.backward(&encs[j], &traces[j], target(j), extra, &mut g)?;
        Ok::<_, Error>((v, g))
    })?;
    let mut grad = vec![0.0; model.layout.total];
    let mut data = 0.0;
    for (v, g) in parts {
        data += v;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok(BatchTerms { data, log_jacobian, reg, grad: Some(grad) })
}

fn encode_all(model: &SeqModel, batch: &[Serialization]) -> Result<Vec<Encoded>> {
    batch.iter().map(|a| model.encode(a)).collect()
}

/// Σ data term + λ · regularizer. Generative NLLs are in original value units.
pub fn loss(
    model: &SeqModel,
    batch: &[Serialization],
    objective: Objective<'_>,
    c: &ConstraintMatrix,
    lambda: f64,
) -> Result<f64> {
    let encs = encode_all(model, batch)?;
    let t = batch_terms(model, &encs, objective, c, lambda, false)?;
    Ok(t.data + t.log_jacobian + lambda * t.reg)
}

/// [`loss`] and its exact gradient, in parameter layout order.
pub fn loss_grad(
    model: &SeqModel,
    batch: &[Serialization],
    objective: Objective<'_>,
    c: &ConstraintMatrix,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let encs = encode_all(model, batch)?;
    let t = batch_terms(model, &encs, objective, c, lambda, true)?;
    Ok((t.data + t.log_jacobian + lambda * t.reg, t.grad.unwrap()))
}

/// `−log P(y | hᵀ)` for one serialization.
pub fn discriminative_loss(model: &SeqModel, a: &Serialization, y: Target) -> Result<f64> {
    let t = model.forward(&model.encode(a)?)?;
    Ok(model.head_loss(t.h.last().unwrap(), y)?.0)
}
