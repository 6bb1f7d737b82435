use proptest::prelude::*;

use seqstruct::datagen::{generate_random_sets, generate_random_trees};
use seqstruct::density::log_sum_exp;
use seqstruct::rng::stream;
use seqstruct::sampler::{corpus_line, parse_corpus_line};
use seqstruct::structures::{SeriesBackend, SeriesInstance, SetBackend, TreeBackend};
use seqstruct::{
    build_constraint_matrix, path_log_prob, sample_serialization, SamplerConfig, SamplingMeasure, StructureBackend,
    StructureInstance,
};

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn tree(seed: u64, ordered: bool) -> (TreeBackend, StructureInstance) {
    let labels = names(&["A", "B", "C"]);
    let t = generate_random_trees(&labels, 1, 9, ordered, seed).unwrap().remove(0);
    (TreeBackend::new(labels, ordered).unwrap(), StructureInstance::Tree(t))
}

fn set(seed: u64) -> (SetBackend, StructureInstance) {
    let symbols = names(&["A", "B", "C", "D", "E", "F"]);
    let s = generate_random_sets(&symbols, 1, 6, seed).unwrap().remove(0);
    (SetBackend::new(symbols).unwrap(), StructureInstance::Set(s))
}

fn series(values: Vec<Vec<f64>>, feature: Option<f64>) -> (SeriesBackend, StructureInstance) {
    let backend = SeriesBackend::new(names(&["u", "w"]), names(&["f"])).unwrap();
    let features = feature.map(|v| ("f".to_string(), v)).into_iter().collect();
    let x = SeriesInstance::new(features, names(&["u", "w"]), values).unwrap();
    (backend, StructureInstance::Series(x))
}

fn series_values() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|l| prop::collection::vec(prop::collection::vec(-5.0f64..5.0, l), 2))
}

fn measures() -> impl Strategy<Value = SamplingMeasure> {
    prop_oneof![
        Just(SamplingMeasure::Uniform),
        (0.05f64..0.95).prop_map(|f| SamplingMeasure::BiasedFront { front_fraction: f, drop_probability: 0.0 }),
    ]
}

/// Round trip, recorded path probability and membership in the enumerated fiber.
fn check_draw(b: &dyn StructureBackend, x: &StructureInstance, measure: SamplingMeasure, seed: u64) {
    let cfg = SamplerConfig::streaming(measure);
    let a = sample_serialization(b, x, &cfg, &mut stream(seed, 0, 0, 0)).unwrap();
    assert_eq!(&b.deserialize(&a).unwrap(), x);
    let lq = a.log_q().unwrap();
    assert!(lq <= 1e-12);
    assert!((lq - path_log_prob(b, x, &a, &cfg).unwrap()).abs() < 1e-12);
    if b.serialization_count(x).unwrap() <= 5000 {
        let fiber = b.enumerate_serializations(x, 5000).unwrap();
        assert_eq!(fiber.len() as u128, b.serialization_count(x).unwrap());
        assert!(fiber.iter().any(|f| f.elements == a.elements));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trees_round_trip(seed in any::<u64>(), draw in any::<u64>(), ordered in any::<bool>(), mu in measures()) {
        let (b, x) = tree(seed, ordered);
        check_draw(&b, &x, mu, draw);
    }

    #[test]
    fn sets_round_trip(seed in any::<u64>(), draw in any::<u64>(), mu in measures()) {
        let (b, x) = set(seed);
        check_draw(&b, &x, mu, draw);
    }

    #[test]
    fn series_round_trip(values in series_values(), feature in prop::option::of(-2.0f64..2.0), draw in any::<u64>(), mu in measures()) {
        let (b, x) = series(values, feature);
        check_draw(&b, &x, mu, draw);
    }

    #[test]
    fn uniform_set_paths_have_probability_one_over_n_factorial(seed in any::<u64>(), draw in any::<u64>()) {
        let (b, x) = set(seed);
        let StructureInstance::Set(s) = &x else { unreachable!() };
        let n = s.elements.len();
        let cfg = SamplerConfig::streaming(SamplingMeasure::Uniform);
        let a = sample_serialization(&b, &x, &cfg, &mut stream(draw, 0, 0, 0)).unwrap();
        let want: f64 = -(1..=n).map(|i| (i as f64).ln()).sum::<f64>();
        prop_assert!((a.log_q().unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn corpus_lines_round_trip(seed in any::<u64>(), draw in any::<u64>(), id in any::<u64>()) {
        let (b, x) = tree(seed, false);
        let cfg = SamplerConfig::streaming(SamplingMeasure::Uniform);
        let a = sample_serialization(&b, &x, &cfg, &mut stream(draw, 0, 0, 0)).unwrap();
        let line = corpus_line(b.alphabet(), id, &a).unwrap();
        let (id2, back) = parse_corpus_line(b.alphabet(), &line).unwrap();
        prop_assert_eq!(id2, id);
        prop_assert_eq!(back, a);
    }

    /// Every constraint joins two distinct sequences whose replayed states agree at t,
    /// and every agreeing pair is listed.
    #[test]
    fn constraints_are_exactly_the_state_matches(seeds in prop::collection::vec(any::<u64>(), 2..8), draw in any::<u64>()) {
        let labels = names(&["A", "B"]);
        let b = TreeBackend::new(labels.clone(), false).unwrap();
        let cfg = SamplerConfig::streaming(SamplingMeasure::Uniform);
        let batch: Vec<_> = seeds
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let t = generate_random_trees(&labels, 1, 5, false, s).unwrap().remove(0);
                sample_serialization(&b, &StructureInstance::Tree(t), &cfg, &mut stream(draw, 0, i as u64, 0)).unwrap()
            })
            .collect();
        let c = build_constraint_matrix(&batch, &b).unwrap();
        let states: Vec<_> = batch.iter().map(|a| b.replay_states(&a.elements).unwrap()).collect();
        let mut want = Vec::new();
        for j in 0..batch.len() {
            for k in j + 1..batch.len() {
                for t in 0..=batch[j].len().min(batch[k].len()) {
                    if states[j][t] == states[k][t] {
                        want.push((t, j, k));
                    }
                }
            }
        }
        want.sort();
        let got: Vec<_> = c.entries.iter().map(|e| (e.t, e.j, e.k)).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn log_sum_exp_bounds(xs in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let l = log_sum_exp(&xs);
        prop_assert!(l >= m - 1e-12);
        prop_assert!(l <= m + (xs.len() as f64).ln() + 1e-12);
        let mut rev = xs.clone();
        rev.reverse();
        prop_assert!((log_sum_exp(&rev) - l).abs() < 1e-9);
    }
}
