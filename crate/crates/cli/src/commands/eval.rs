use std::fmt::Write as _;

use seqstruct::density::log_sum_exp;
use seqstruct::rng::{self, domain};
use seqstruct::seqmodel::{discriminative_loss, HeadKind};
use seqstruct::{par, sample_serialization, Target};

use super::common::{build, check_covered, load_checkpoint, load_dataset};
use crate::config::{Reader, SamplerKeys};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

pub fn run(mut r: Reader) -> CliResult<()> {
    let ckpt_path = r.path("checkpoint")?;
    let test_path = r.path("test")?;
    let reps: usize = r.get("r", 1)?;
    let seed: u64 = r.get("seed", 0)?;
    let out = r.get("out", "out".to_string())?;
    let sk = SamplerKeys::read(&mut r)?;
    let config = r.finish()?;
    if reps == 0 {
        return Err(CliError::config("r", "must be at least 1"));
    }

    let l = load_checkpoint(&ckpt_path, "checkpoint")?;
    if l.model.dims.head == HeadKind::None {
        return Err(CliError::from(seqstruct::Error::MissingHead).at("checkpoint"));
    }
    let test = load_dataset(&test_path, "test")?;
    if let Some(i) = test.iter().position(|x| x.target.is_none()) {
        return Err(CliError::data(format!("line {}: instance has no target", i + 1)).at("test"));
    }
    check_covered(&l.spec, &test, "test")?;
    let backend = build(&l.spec)?;
    let cfg = sk.build(backend.as_ref(), seed);
    let model = &l.model;

    // Per instance: averaged class probabilities (or regression means) and the NLL of the
    // target under the averaged predictive distribution.
    let rows = par::try_map_slice(&test, |i, x| -> seqstruct::Result<(Vec<f64>, f64)> {
        let target = x.target.expect("checked above");
        let mut acc: Vec<f64> = Vec::new();
        let mut neg_losses = Vec::with_capacity(reps);
        for j in 0..reps {
            let mut g = rng::stream(seed, domain::EVAL, i as u64, j as u64);
            let a = sample_serialization(backend.as_ref(), &x.instance, &cfg, &mut g)?;
            let pred = match model.dims.head {
                HeadKind::Classes(_) => model.class_probs(&a)?,
                _ => vec![model.regression_mean(&a)?],
            };
            if acc.is_empty() {
                acc = vec![0.0; pred.len()];
            }
            acc.iter_mut().zip(&pred).for_each(|(s, p)| *s += p / reps as f64);
            neg_losses.push(-discriminative_loss(model, &a, target)?);
        }
        Ok((acc, -(log_sum_exp(&neg_losses) - (reps as f64).ln())))
    })?;

    let mut csv = String::new();
    let mut summary = String::from("metric,value\n");
    match model.dims.head {
        HeadKind::Classes(_) => {
            csv.push_str("instance_id,target,predicted,nll\n");
            let mut correct = 0usize;
            for (i, ((probs, nll), x)) in rows.iter().zip(&test).enumerate() {
                let Some(Target::Class(y)) = x.target else {
                    return Err(CliError::data(format!("line {}: expected target_class", i + 1)).at("test"));
                };
                let best = argmax(probs) as u32 + 1;
                correct += usize::from(best == y);
                writeln!(csv, "{i},{y},{best},{nll}").unwrap();
            }
            let n = rows.len() as f64;
            writeln!(summary, "accuracy,{}", correct as f64 / n).unwrap();
            writeln!(summary, "mean_nll,{}", rows.iter().map(|r| r.1).sum::<f64>() / n).unwrap();
        }
        _ => {
            csv.push_str("instance_id,target,predicted_mean,nll\n");
            let mut pairs = Vec::new();
            for (i, ((mean, nll), x)) in rows.iter().zip(&test).enumerate() {
                let Some(Target::Value(y)) = x.target else {
                    return Err(CliError::data(format!("line {}: expected target_value", i + 1)).at("test"));
                };
                pairs.push((mean[0], y));
                writeln!(csv, "{i},{y},{},{nll}", mean[0]).unwrap();
            }
            let n = rows.len() as f64;
            writeln!(summary, "mean_nll,{}", rows.iter().map(|r| r.1).sum::<f64>() / n).unwrap();
            writeln!(summary, "correlation,{}", correlation(&pairs)).unwrap();
        }
    }
    print!("{summary}");
    let mut outputs = Outputs::new(out.into());
    outputs.add("eval.csv", csv.into_bytes());
    outputs.add("eval_summary.csv", summary.into_bytes());
    outputs.commit("eval", &config)
}

/// Index of the largest entry; ties go to the smallest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Pearson correlation; NaN when either side is constant.
fn correlation(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
