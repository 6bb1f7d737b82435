//! Synthetic datasets: a harmonic oscillator driving two coupled Van der Pol
//! oscillators, random labelled trees, random sets and toy tabular records.
//! Instance `i` of every generator draws from its own stream, so datasets are
//! reproducible and can be generated in parallel.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{self, domain, Rng};
use crate::structures::{PropositionalInstance, SeriesInstance, SetInstance, TreeInstance, TreeNode};

pub const VDP_VARIABLES: [&str; 3] = ["y1", "y2", "y3"];
pub const VDP_FEATURES: [&str; 9] = ["y1_0", "y2_0", "y3_0", "dy1_0", "dy2_0", "dy3_0", "k", "mu_y2", "mu_y3"];

/// Initial conditions and parameters of one trajectory. `length` samples are taken
/// `step` time units apart; each sampling interval is integrated with `substeps`
/// classical Runge-Kutta steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdpParams {
    pub y0: [f64; 3],
    pub dy0: [f64; 3],
    pub k: f64,
    pub mu_y2: f64,
    pub mu_y3: f64,
    pub length: usize,
    pub step: f64,
    pub substeps: usize,
}

impl VdpParams {
    pub fn validate(&self) -> Result<()> {
        let all = self.y0.iter().chain(&self.dy0).chain([&self.k, &self.mu_y2, &self.mu_y3, &self.step]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite dynamical-system parameter".into()));
        }
        if self.length < 2 {
            return Err(Error::InvalidConfig("length must be at least 2".into()));
        }
        if self.step <= 0.0 || self.substeps == 0 {
            return Err(Error::InvalidConfig("step must be positive and substeps at least 1".into()));
        }
        Ok(())
    }

    /// Input features: initial state, then the parameters offset by 3.
    pub fn features(&self) -> BTreeMap<String, f64> {
        let vals = [
            self.y0[0], self.y0[1], self.y0[2], self.dy0[0], self.dy0[1], self.dy0[2],
            self.k - 3.0, self.mu_y2 - 3.0, self.mu_y3 - 3.0,
        ];
        VDP_FEATURES.iter().map(|n| n.to_string()).zip(vals).collect()
    }
}

type State = [f64; 6];

fn vdp_rhs(p: &VdpParams, s: &State) -> State {
    let [y1, y2, y3, v1, v2, v3] = *s;
    let pos = |x: f64| x.max(0.0);
    [
        v1,
        v2,
        v3,
        -pos(p.k) * y1,
        pos(p.mu_y2) * (1.0 - y2 * y2) * v2 - y2 - y1,
        pos(p.mu_y3) * (1.0 - y3 * y3) * v3 - y3 - y2,
    ]
}

fn rk4(p: &VdpParams, s: &State, h: f64) -> State {
    let add = |a: &State, b: &State, c: f64| -> State { std::array::from_fn(|i| a[i] + c * b[i]) };
    let k1 = vdp_rhs(p, s);
    let k2 = vdp_rhs(p, &add(s, &k1, h / 2.0));
    let k3 = vdp_rhs(p, &add(s, &k2, h / 2.0));
    let k4 = vdp_rhs(p, &add(s, &k3, h));
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// `[y1, y2, y3, y1', y2', y3']` at each of the `length` sampling times.
pub fn integrate_vdp(p: &VdpParams) -> Result<Vec<[f64; 6]>> {
    p.validate()?;
    let h = p.step / p.substeps as f64;
    let mut s: State = [p.y0[0], p.y0[1], p.y0[2], p.dy0[0], p.dy0[1], p.dy0[2]];
    let mut out = vec![s];
    for t in 1..p.length {
        for _ in 0..p.substeps {
            s = rk4(p, &s, h);
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteTrajectory { step: t });
        }
        out.push(s);
    }
    Ok(out)
}

/// A 3 × `length` series of positions with the nine input features.
pub fn generate_vdp(p: &VdpParams) -> Result<SeriesInstance> {
    let traj = integrate_vdp(p)?;
    let values = (0..3).map(|v| traj.iter().map(|s| s[v]).collect()).collect();
    SeriesInstance::new(p.features(), VDP_VARIABLES.iter().map(|s| s.to_string()).collect(), values)
}

/// Ranges for random dynamical systems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdpRanges {
    pub initial: (f64, f64),
    pub k: (f64, f64),
    pub mu: (f64, f64),
}

impl Default for VdpRanges {
    fn default() -> Self {
        VdpRanges { initial: (-1.0, 1.0), k: (2.0, 4.0), mu: (2.0, 4.0) }
    }
}

pub fn sample_vdp_params(r: &mut Rng, ranges: &VdpRanges, length: usize, step: f64, substeps: usize) -> VdpParams {
    let mut u = |(a, b): (f64, f64)| r.gen_range(a..=b);
    VdpParams {
        y0: [u(ranges.initial), u(ranges.initial), u(ranges.initial)],
        dy0: [u(ranges.initial), u(ranges.initial), u(ranges.initial)],
        k: u(ranges.k),
        mu_y2: u(ranges.mu),
        mu_y3: u(ranges.mu),
        length,
        step,
        substeps,
    }
}

pub fn generate_vdp_dataset(
    count: usize,
    ranges: &VdpRanges,
    length: usize,
    step: f64,
    substeps: usize,
    seed: u64,
) -> Result<Vec<SeriesInstance>> {
    par::try_map_indexed(count, |i| {
        let mut r = rng::stream(seed, domain::DATAGEN, i as u64, 0);
        generate_vdp(&sample_vdp_params(&mut r, ranges, length, step, substeps))
    })
}

fn random_tree(labels: &[String], max_nodes: usize, ordered: bool, r: &mut Rng) -> TreeInstance {
    let n = r.gen_range(1..=max_nodes);
    let names: Vec<String> = (0..n).map(|_| labels.choose(r).unwrap().clone()).collect();
    let parents: Vec<usize> = (1..n).map(|i| r.gen_range(0..i)).collect();
    let mut children: Vec<Vec<usize>> = vec![vec![]; n];
    for (i, &p) in parents.iter().enumerate() {
        children[p].push(i + 1);
    }
    fn build(i: usize, names: &[String], children: &[Vec<usize>]) -> TreeNode {
        TreeNode::node(names[i].clone(), children[i].iter().map(|&c| build(c, names, children)).collect())
    }
    TreeInstance::new(Some(build(0, &names, &children)), ordered)
}

/// Trees with a node count uniform in `1..=max_nodes`; node `i` attaches to a parent
/// drawn uniformly from the earlier nodes and every label is uniform.
pub fn generate_random_trees(
    labels: &[String],
    count: usize,
    max_nodes: usize,
    ordered: bool,
    seed: u64,
) -> Result<Vec<TreeInstance>> {
    if max_nodes == 0 || labels.is_empty() {
        return Err(Error::InvalidConfig("max_nodes and the label set must be non-empty".into()));
    }
    Ok(par::map_indexed(count, |i| {
        random_tree(labels, max_nodes, ordered, &mut rng::stream(seed, domain::DATAGEN, i as u64, 0))
    }))
}

/// Sets of distinct symbols with size uniform in `1..=max_size`.
pub fn generate_random_sets(symbols: &[String], count: usize, max_size: usize, seed: u64) -> Result<Vec<SetInstance>> {
    if max_size == 0 || max_size > symbols.len() {
        return Err(Error::InvalidConfig("max_size must lie in 1..=number of symbols".into()));
    }
    par::try_map_indexed(count, |i| {
        let mut r = rng::stream(seed, domain::DATAGEN, i as u64, 0);
        let n = r.gen_range(1..=max_size);
        SetInstance::new(symbols.choose_multiple(&mut r, n).cloned())
    })
}

/// Shape of the toy tabular generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionalShape {
    pub numeric: usize,
    /// Number of values of each categorical feature.
    pub categorical: Vec<usize>,
    pub classes: u32,
}

impl Default for PropositionalShape {
    fn default() -> Self {
        PropositionalShape { numeric: 2, categorical: vec![3, 2], classes: 2 }
    }
}

/// Records with numeric features `x1…` uniform on a grid of step 0.25 in [−1, 1],
/// categorical features `c1…` with values `v0…`, and a class determined by the sign
/// of the numeric sum shifted by the categorical indices.
pub fn generate_propositional(shape: &PropositionalShape, count: usize, seed: u64) -> Result<Vec<PropositionalInstance>> {
    if shape.classes == 0 || shape.categorical.contains(&0) {
        return Err(Error::InvalidConfig("classes and categorical cardinalities must be positive".into()));
    }
    par::try_map_indexed(count, |i| {
        let mut r = rng::stream(seed, domain::DATAGEN, i as u64, 0);
        let numeric: BTreeMap<String, f64> = (0..shape.numeric)
            .map(|j| (format!("x{}", j + 1), r.gen_range(-4..=4) as f64 * 0.25))
            .collect();
        let mut score = usize::from(numeric.values().sum::<f64>() > 0.0);
        let mut categorical = BTreeMap::new();
        for (j, &card) in shape.categorical.iter().enumerate() {
            let v = r.gen_range(0..card);
            score += v;
            categorical.insert(format!("c{}", j + 1), format!("v{v}"));
        }
        let label = Some(score as u32 % shape.classes + 1);
        PropositionalInstance::new(numeric, categorical, label)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::StructureBackend;
    use crate::structures::{SeriesBackend, StructureInstance, ADVANCE_TIME};

    fn harmonic(step: f64, length: usize) -> VdpParams {
        VdpParams { y0: [1.0, 0.0, 0.0], dy0: [0.0; 3], k: 1.0, mu_y2: 0.0, mu_y3: 0.0, length, step, substeps: 1 }
    }

    #[test]
    fn harmonic_amplitude_is_preserved() {
        let traj = integrate_vdp(&harmonic(0.1, 21)).unwrap();
        for (i, s) in traj.iter().enumerate() {
            let amp = (s[0] * s[0] + s[3] * s[3]).sqrt();
            assert!((amp - 1.0).abs() < 1e-6);
            assert!((s[0] - (0.1 * i as f64).cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let p = VdpParams {
            y0: [0.5, -0.3, 0.8],
            dy0: [0.1, 0.4, -0.6],
            k: 3.2,
            mu_y2: 2.5,
            mu_y3: 3.5,
            length: 21,
            step: 0.1,
            substeps: 1,
        };
        let at = |substeps| integrate_vdp(&VdpParams { substeps, ..p.clone() }).unwrap();
        let reference = at(64);
        let err = |t: &[State]| {
            t.iter()
                .zip(&reference)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        };
        let ratio = err(&at(1)) / err(&at(2));
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn length_21_series_has_20_time_advances() {
        let x = generate_vdp(&harmonic(0.1, 21)).unwrap();
        assert_eq!(x.features().len(), 9);
        assert_eq!(x.features()["k"], -2.0);
        let b = SeriesBackend::new(x.variables().to_vec(), x.features().keys().cloned().collect()).unwrap();
        let a = crate::backend::canonical_serialization(&b, &StructureInstance::Series(x)).unwrap();
        let adv = b.alphabet().symbol(ADVANCE_TIME).unwrap();
        assert_eq!(a.elements.iter().filter(|e| e.symbol == adv).count(), 20);
    }

    #[test]
    fn invalid_params_and_blow_up() {
        assert!(integrate_vdp(&harmonic(0.1, 1)).is_err());
        assert!(integrate_vdp(&harmonic(-0.1, 5)).is_err());
        let wild = VdpParams { y0: [0.0, 50.0, 50.0], mu_y2: 1e6, mu_y3: 1e6, ..harmonic(10.0, 50) };
        assert!(matches!(integrate_vdp(&wild), Err(Error::NonFiniteTrajectory { .. })));
    }

    #[test]
    fn random_trees() {
        let labels: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let single = generate_random_trees(&labels, 50, 1, false, 1).unwrap();
        assert!(single.iter().all(|t| t.size() == 1));
        let trees = generate_random_trees(&labels, 1000, 20, false, 2).unwrap();
        let mean = trees.iter().map(TreeInstance::size).sum::<usize>() as f64 / 1000.0;
        assert!((1.0..=20.0).contains(&mean));
        assert!(trees.iter().all(|t| (1..=20).contains(&t.size())));
        assert_eq!(trees, generate_random_trees(&labels, 1000, 20, false, 2).unwrap());
    }

    #[test]
    fn toy_generators() {
        let syms: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let sets = generate_random_sets(&syms, 100, 3, 5).unwrap();
        assert!(sets.iter().all(|s| (1..=3).contains(&s.elements.len())));
        let recs = generate_propositional(&PropositionalShape::default(), 60, 5).unwrap();
        assert_eq!(recs.len(), 60);
        assert!(recs.iter().all(|r| r.item_count() == 5));
        assert_eq!(recs, generate_propositional(&PropositionalShape::default(), 60, 5).unwrap());
    }
}
