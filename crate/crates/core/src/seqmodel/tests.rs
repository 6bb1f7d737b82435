use std::f64::consts::PI;

use rand::Rng as _;

use super::*;
use crate::backend::StructureBackend;
use crate::constraints::{build_constraint_matrix, Constraint, ConstraintMatrix};
use crate::lexicon::Serialization;
use crate::measure::SamplingMeasure;
use crate::rng;
use crate::sampler::{sample_serialization, SamplerConfig};
use crate::structures::{
    LabeledInstance, SeriesBackend, SeriesInstance, SetBackend, SetInstance, StructureInstance, Target,
};

fn dims(vocab: usize, hidden: usize, mixture: usize, cell: CellKind, head: HeadKind) -> ModelDims {
    ModelDims { vocab, hidden, mixture, cell, head }
}

fn set_seq(b: &SetBackend, names: &[&str]) -> Serialization {
    Serialization::new(names.iter().map(|n| b.alphabet().element(n, None).unwrap()).collect())
}

fn random_model(d: ModelDims, seed: u64, scale: f64) -> SeqModel {
    let mut m = SeqModel::zeros(d, Standardizer::identity(d.vocab)).unwrap();
    let mut r = rng::stream(seed, 99, 0, 0);
    for p in &mut m.params {
        *p = r.gen_range(-scale..scale);
    }
    m
}

#[test]
fn zero_weights_give_half_states_and_uniform_head() {
    let b = SetBackend::new(["A", "B"]).unwrap();
    let m = SeqModel::zeros(dims(3, 4, 1, CellKind::Vanilla, HeadKind::None), Standardizer::identity(3)).unwrap();
    let a = set_seq(&b, &["B", "A", "<eos>"]);
    let h = m.hidden_states(&a).unwrap();
    assert_eq!(h.len(), 4);
    assert!(h[0].iter().all(|&x| x == 0.0));
    assert!(h[1..].iter().flatten().all(|&x| x == 0.5));
    let lp = forward::log_softmax(&m.cat_logits(&h[2]));
    assert!(lp.iter().all(|l| (l + 3f64.ln()).abs() < 1e-15));
}

#[test]
fn nll_examples() {
    let b = SetBackend::new(["A"]).unwrap();
    let m = SeqModel::zeros(dims(2, 3, 1, CellKind::Vanilla, HeadKind::None), Standardizer::identity(2)).unwrap();
    let nll = m.sequence_nll(&set_seq(&b, &["A", "<eos>"])).unwrap();
    assert!((nll - 2.0 * 2f64.ln()).abs() < 1e-12);

    // value 0 under a unit Gaussian costs ½ln(2π) on top of the categorical part
    let sb = SeriesBackend::new(vec!["v".into()], vec![]).unwrap();
    let v = sb.alphabet().len();
    let m = SeqModel::zeros(dims(v, 3, 1, CellKind::Vanilla, HeadKind::None), Standardizer::identity(v)).unwrap();
    let a = Serialization::new(vec![
        sb.alphabet().element("AddTS(v)", Some(0.0)).unwrap(),
        sb.alphabet().element("<eos>", None).unwrap(),
    ]);
    let nll = m.sequence_nll(&a).unwrap();
    let expect = 2.0 * (v as f64).ln() + 0.5 * (2.0 * PI).ln();
    assert!((nll - expect).abs() < 1e-12);
}

/// Straightforward re-implementation with explicit matrices, used as an oracle.
fn oracle_log_prob(m: &SeqModel, a: &Serialization) -> f64 {
    let (h_dim, v, k) = (m.dims.hidden, m.dims.vocab, m.dims.mixture);
    let blk = |name: &str| m.layout.blocks.iter().find(|b| b.name == name).unwrap().clone();
    let mat = |name: &str| {
        let b = blk(name);
        (0..b.rows)
            .map(|r| m.params[b.offset + r * b.cols..b.offset + (r + 1) * b.cols].to_vec())
            .collect::<Vec<_>>()
    };
    let (whh, whi, cw, cb, mw, mb) = (mat("w_hh"), mat("w_hi"), mat("cat_w"), mat("cat_b"), mat("mix_w"), mat("mix_b"));
    let mut h = vec![0.0; h_dim];
    let mut total = 0.0;
    for e in &a.elements {
        let s = e.symbol.index();
        let logits: Vec<f64> = (0..v).map(|i| cb[i][0] + (0..h_dim).map(|j| cw[i][j] * h[j]).sum::<f64>()).collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        total += logits[s] - z.ln();
        if let Some(val) = e.value {
            let mut u = h.clone();
            u.extend((0..v).map(|i| if i == s { 1.0 } else { 0.0 }));
            let o: Vec<f64> = (0..3 * k).map(|r| mb[r][0] + (0..h_dim + v).map(|c| mw[r][c] * u[c]).sum::<f64>()).collect();
            let wz: f64 = (0..k).map(|i| o[2 * k + i].exp()).sum();
            let mut dens = 0.0;
            for i in 0..k {
                let var = o[k + i].clamp(-10.0, 10.0).exp();
                dens += o[2 * k + i].exp() / wz * (-(val - o[i]).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            }
            total += dens.ln();
        }
        let mut x = vec![0.0; v + 1];
        x[s] = 1.0;
        x[v] = e.value.unwrap_or(0.0);
        h = (0..h_dim)
            .map(|i| {
                let pre: f64 = (0..h_dim).map(|j| whh[i][j] * h[j]).sum::<f64>()
                    + (0..=v).map(|j| whi[i][j] * x[j]).sum::<f64>();
                1.0 / (1.0 + (-pre).exp())
            })
            .collect();
    }
    total
}

fn series_data() -> (SeriesBackend, Vec<StructureInstance>) {
    let b = SeriesBackend::new(vec!["a".into(), "b".into()], vec!["f".into()]).unwrap();
    let xs = (0..3)
        .map(|i| {
            let i = i as f64;
            StructureInstance::Series(
                SeriesInstance::new(
                    [("f".to_string(), 0.3 * i - 0.2)].into_iter().collect(),
                    vec!["a".into(), "b".into()],
                    vec![vec![0.5 + i, -0.25 * i], vec![1.5, 0.1 * i]],
                )
                .unwrap(),
            )
        })
        .collect();
    (b, xs)
}

#[test]
fn log_likelihood_matches_independent_recomputation() {
    let (b, xs) = series_data();
    let cfg = SamplerConfig::streaming(SamplingMeasure::Uniform);
    for seed in 0..5 {
        let m = random_model(dims(b.alphabet().len(), 5, 2, CellKind::Vanilla, HeadKind::None), seed, 0.8);
        let a = sample_serialization(&b, &xs[seed as usize % 3], &cfg, &mut rng::stream(seed, 0, 0, 0)).unwrap();
        let ours = m.log_prob(&a).unwrap();
        assert!((ours - oracle_log_prob(&m, &a)).abs() < 1e-10, "seed {seed}");
    }
}

/// Max relative error between the analytic gradient and central differences.
fn fd_check(m: &SeqModel, batch: &[Serialization], obj: Objective<'_>, c: &ConstraintMatrix, lambda: f64) -> f64 {
    let (_, g) = loss_grad(m, batch, obj, c, lambda).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..m.params.len() {
        let mut p = m.params.clone();
        p[i] += h;
        let up = loss(&m.with_params(p.clone()).unwrap(), batch, obj, c, lambda).unwrap();
        p[i] -= 2.0 * h;
        let down = loss(&m.with_params(p).unwrap(), batch, obj, c, lambda).unwrap();
        let num = (up - down) / (2.0 * h);
        let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let (b, xs) = series_data();
    let cfg = SamplerConfig::streaming(SamplingMeasure::Uniform);
    for seed in 0..6u64 {
        let mut r = rng::stream(seed, 50, 0, 0);
        let cell = if seed % 2 == 0 { CellKind::Vanilla } else { CellKind::Gru };
        let d = dims(b.alphabet().len(), r.gen_range(1..=6), r.gen_range(1..=3), cell, HeadKind::None);
        let m = random_model(d, seed, 0.7);
        let x = &xs[seed as usize % 3];
        let batch: Vec<Serialization> = (0..3)
            .map(|j| sample_serialization(&b, x, &cfg, &mut rng::stream(seed, 1, j, 0)).unwrap())
            .collect();
        let c = build_constraint_matrix(&batch, &b).unwrap();
        let err = fd_check(&m, &batch, Objective::Generative, &c, 0.7);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn discriminative_head_gradients_and_values() {
    let b = SetBackend::new(["A", "B", "C"]).unwrap();
    let batch = vec![set_seq(&b, &["A", "C", "<eos>"]), set_seq(&b, &["B", "<eos>"])];
    let zero = SeqModel::zeros(dims(4, 3, 1, CellKind::Vanilla, HeadKind::Classes(2)), Standardizer::identity(4)).unwrap();
    let l = discriminative_loss(&zero, &batch[0], Target::Class(2)).unwrap();
    assert!((l - 2f64.ln()).abs() < 1e-15);
    let ys = [Target::Class(1), Target::Class(2)];
    for (cell, head, ys) in [
        (CellKind::Vanilla, HeadKind::Classes(2), ys.to_vec()),
        (CellKind::Gru, HeadKind::Regression(2), vec![Target::Value(0.3), Target::Value(-1.2)]),
    ] {
        let m = random_model(dims(4, 4, 1, cell, head), 11, 0.9);
        let c = build_constraint_matrix(&batch, &b).unwrap();
        let err = fd_check(&m, &batch, Objective::Discriminative(&ys), &c, 0.5);
        assert!(err < 1e-4, "{head:?}: {err}");
    }
    let plain = SeqModel::zeros(dims(4, 3, 1, CellKind::Vanilla, HeadKind::None), Standardizer::identity(4)).unwrap();
    assert_eq!(discriminative_loss(&plain, &batch[0], Target::Class(1)), Err(crate::Error::MissingHead));
}

#[test]
fn regularizer_examples() {
    let c = ConstraintMatrix {
        entries: vec![Constraint { j: 0, k: 1, t: 0 }],
        batch_size: 2,
        max_t: 0,
    };
    let orth = vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]];
    assert!((regularizer(&orth, &c) - 2f64.sqrt()).abs() < 1e-15);
    let same = vec![vec![vec![0.3, 0.4]], vec![vec![0.3, 0.4]]];
    assert_eq!(regularizer(&same, &c), 0.0);
    let scaled = vec![vec![vec![3.0, 4.0]], vec![vec![0.3, 0.4]]];
    assert!(regularizer(&scaled, &c).abs() < 1e-15);
    assert_eq!(regularizer(&orth, &ConstraintMatrix::default()), 0.0);
}

#[test]
fn loss_is_linear_in_lambda() {
    let b = SetBackend::new(["A", "B"]).unwrap();
    let batch = vec![set_seq(&b, &["A", "B", "<eos>"]), set_seq(&b, &["B", "A", "<eos>"])];
    let c = build_constraint_matrix(&batch, &b).unwrap();
    let m = random_model(dims(3, 4, 1, CellKind::Vanilla, HeadKind::None), 3, 1.0);
    let base = loss(&m, &batch, Objective::Generative, &c, 0.0).unwrap();
    let plain: f64 = batch.iter().map(|a| m.sequence_nll(a).unwrap()).sum();
    assert!((base - plain).abs() < 1e-12);
    let l1 = loss(&m, &batch, Objective::Generative, &c, 1.0).unwrap();
    let l2 = loss(&m, &batch, Objective::Generative, &c, 2.0).unwrap();
    let hidden: Vec<_> = batch.iter().map(|a| m.hidden_states(a).unwrap()).collect();
    let reg = regularizer(&hidden, &c);
    assert!(reg > 0.0);
    assert!((l2 - l1 - reg).abs() < 1e-12);
}

#[test]
fn regularizer_gradient_pulls_constrained_states_together() {
    let b = SetBackend::new(["A", "B"]).unwrap();
    let batch = vec![set_seq(&b, &["A", "B", "<eos>"]), set_seq(&b, &["B", "A", "<eos>"])];
    let c = build_constraint_matrix(&batch, &b).unwrap();
    let m = random_model(dims(3, 4, 1, CellKind::Vanilla, HeadKind::None), 8, 1.5);
    let reg_only = |m: &SeqModel| loss(m, &batch, Objective::Generative, &c, 1.0).unwrap()
        - loss(m, &batch, Objective::Generative, &c, 0.0).unwrap();
    let g_full = loss_grad(&m, &batch, Objective::Generative, &c, 1.0).unwrap().1;
    let g_data = loss_grad(&m, &batch, Objective::Generative, &c, 0.0).unwrap().1;
    let step: Vec<f64> = m.params.iter().zip(g_full.iter().zip(&g_data)).map(|(p, (a, b))| p - 1e-3 * (a - b)).collect();
    let moved = m.with_params(step).unwrap();
    assert!(reg_only(&moved) < reg_only(&m));
}

#[test]
fn checkpoint_round_trip() {
    let m = random_model(dims(5, 3, 2, CellKind::Gru, HeadKind::Classes(3)), 1, 0.5);
    let mut adam = Adam::new(m.layout.total, 0.01, 0.9, 0.999, 1e-8, 5.0);
    adam.step(&mut m.params.clone(), &vec![0.1; m.layout.total]);
    let meta = serde_json::json!({"backend": "set"});
    let bytes = encode_checkpoint(&m, Some(&adam), &meta).unwrap();
    let ck = decode_checkpoint(&bytes).unwrap();
    assert_eq!(ck.model, m);
    assert_eq!(ck.metadata, meta);
    assert_eq!(ck.adam, Some((1, adam.m.clone(), adam.v.clone())));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_checkpoint(&bad).is_err());
    let mut newer = bytes.clone();
    newer[8] = 2;
    assert!(decode_checkpoint(&newer).unwrap_err().to_string().contains("version"));
    assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
}

fn pair_dataset() -> (SetBackend, Vec<LabeledInstance>) {
    let b = SetBackend::new(["A", "B", "C"]).unwrap();
    let data = [vec!["A", "B"], vec!["B", "C"], vec!["A"]]
        .into_iter()
        .map(|s| LabeledInstance::unlabeled(StructureInstance::Set(SetInstance::new(s).unwrap())))
        .collect();
    (b, data)
}

#[test]
fn training_is_deterministic_and_resumable() {
    let (b, data) = pair_dataset();
    let cfg = TrainConfig { max_steps: 30, eval_every: 10, batch: 4, lambda: 0.5, seed: 4, ..Default::default() };
    let sampler = SamplerConfig::streaming(SamplingMeasure::Uniform);
    let d = dims(b.alphabet().len(), 6, 1, CellKind::Vanilla, HeadKind::None);
    let fresh = || TrainState::new(SeqModel::init(d, Standardizer::identity(d.vocab), 4).unwrap(), &cfg);
    let run = train(&b, &data, &data, &cfg, &sampler, fresh()).unwrap();
    let again = train(&b, &data, &data, &cfg, &sampler, fresh()).unwrap();
    assert_eq!(run.metrics, again.metrics);
    assert_eq!(run.metrics.len(), 3);
    assert!(run.metrics.iter().all(|r| r.reg_value > 0.0));

    let half = TrainConfig { max_steps: 17, ..cfg.clone() };
    let first = train(&b, &data, &data, &half, &sampler, fresh()).unwrap();
    let resumed = train(&b, &data, &data, &cfg, &sampler, first.state).unwrap();
    assert_eq!(resumed.state.model.params, run.state.model.params);
    assert_eq!(resumed.metrics, run.metrics[1..].to_vec());
}

#[test]
fn training_lowers_nll() {
    let (b, data) = pair_dataset();
    let cfg = TrainConfig { max_steps: 300, eval_every: 300, batch: 8, learning_rate: 0.05, ..Default::default() };
    let sampler = SamplerConfig::streaming(SamplingMeasure::Uniform);
    let d = dims(b.alphabet().len(), 8, 1, CellKind::Gru, HeadKind::None);
    let m = SeqModel::init(d, Standardizer::identity(d.vocab), 0).unwrap();
    let before: f64 = data
        .iter()
        .map(|x| {
            let a = crate::backend::canonical_serialization(&b, &x.instance).unwrap();
            m.sequence_nll(&a).unwrap()
        })
        .sum();
    let out = train(&b, &data, &data, &cfg, &sampler, TrainState::new(m, &cfg)).unwrap();
    assert!(out.metrics[0].valid_nll < before / 3.0 * 0.8);
}

#[test]
fn config_validation() {
    let bad = TrainConfig { lambda: 1.0, serializations_per_instance: 1, ..Default::default() };
    assert!(bad.validate().is_err());
    assert!(TrainConfig::default().validate().is_ok());
}
