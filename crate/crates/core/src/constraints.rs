//! Sparse state-equivalence constraints over a batch of serializations.
//!
//! Entry `(j, k, t)` with `j < k` says that the length-`t` prefixes of serializations
//! `j` and `k` reach the same state. Built by grouping `(t, state)` pairs in a hash
//! map, so the cost is linear in the number of replayed states plus the output size.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backend::StructureBackend;
use crate::error::{Error, Result};
use crate::lexicon::Serialization;
use crate::par;
use crate::state::StateKey;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Constraint {
    pub j: usize,
    pub k: usize,
    pub t: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintMatrix {
    /// Sorted by `t`, then `(j, k)`.
    pub entries: Vec<Constraint>,
    pub batch_size: usize,
    pub max_t: usize,
}

impl ConstraintMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, j: usize, k: usize, t: usize) -> bool {
        let c = if j < k { Constraint { j, k, t } } else { Constraint { j: k, k: j, t } };
        self.entries
            .binary_search_by(|e| (e.t, e.j, e.k).cmp(&(c.t, c.j, c.k)))
            .is_ok()
    }

    /// Builds the matrix from replayed states; `states[j][t]` is the state after `t`
    /// elements of serialization `j`.
    pub fn from_states(states: &[Vec<StateKey>]) -> Self {
        let mut groups: HashMap<(usize, &StateKey), Vec<usize>> = HashMap::new();
        for (j, seq) in states.iter().enumerate() {
            for (t, s) in seq.iter().enumerate() {
                groups.entry((t, s)).or_default().push(j);
            }
        }
        let mut entries = Vec::new();
        for ((t, _), members) in groups {
            for (a, &j) in members.iter().enumerate() {
                for &k in &members[a + 1..] {
                    entries.push(Constraint { j, k, t });
                }
            }
        }
        entries.sort_by_key(|c| (c.t, c.j, c.k));
        let max_t = states.iter().map(|s| s.len().saturating_sub(1)).max().unwrap_or(0);
        ConstraintMatrix { entries, batch_size: states.len(), max_t }
    }

    /// Dense `[t][j][k]` view, refused when it would exceed `budget` cells.
    pub fn to_dense(&self, budget: usize) -> Result<Vec<Vec<Vec<bool>>>> {
        let n = self.batch_size as u128;
        let required = n * n * (self.max_t as u128 + 1);
        if required > budget as u128 {
            return Err(Error::BudgetExceeded { required, budget });
        }
        let mut d = vec![vec![vec![false; self.batch_size]; self.batch_size]; self.max_t + 1];
        for c in &self.entries {
            d[c.t][c.j][c.k] = true;
            d[c.t][c.k][c.j] = true;
        }
        Ok(d)
    }

    /// One `{"j":…,"k":…,"t":…}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.entries {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Replays every serialization (in parallel) and groups equal states.
pub fn build_constraint_matrix(
    batch: &[Serialization],
    backend: &dyn StructureBackend,
) -> Result<ConstraintMatrix> {
    let states = par::try_map_indexed(batch.len(), |j| backend.replay_states(&batch[j].elements))?;
    Ok(ConstraintMatrix::from_states(&states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::canonical_serialization;
    use crate::structures::{SetBackend, StructureInstance, TreeBackend, TreeInstance, TreeNode};

    fn seq(b: &dyn StructureBackend, names: &[&str]) -> Serialization {
        Serialization::new(names.iter().map(|n| b.alphabet().element(n, None).unwrap()).collect())
    }

    #[test]
    fn two_orders_of_a_pair() {
        let b = SetBackend::new(["A", "B"]).unwrap();
        let batch = [seq(&b, &["A", "B", "<eos>"]), seq(&b, &["B", "A", "<eos>"])];
        let c = build_constraint_matrix(&batch, &b).unwrap();
        assert!(c.contains(0, 1, 0));
        assert!(!c.contains(0, 1, 1));
        assert!(c.contains(0, 1, 2));
        assert!(c.contains(1, 0, 3));
        assert_eq!(c.len(), 3);
        assert_eq!(c.max_t, 3);
    }

    #[test]
    fn single_serialization_has_no_pairs() {
        let b = SetBackend::new(["A", "B"]).unwrap();
        let c = build_constraint_matrix(&[seq(&b, &["A", "B", "<eos>"])], &b).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn ordered_trees_share_only_the_root_label() {
        let b = TreeBackend::new(["A", "B", "C"], true).unwrap();
        let t1 = StructureInstance::Tree(TreeInstance::new(Some(TreeNode::leaf("A")), true));
        let t2 = StructureInstance::Tree(TreeInstance::new(
            Some(TreeNode::node("A", vec![TreeNode::leaf("C")])),
            true,
        ));
        let batch = [canonical_serialization(&b, &t1).unwrap(), canonical_serialization(&b, &t2).unwrap()];
        let c = build_constraint_matrix(&batch, &b).unwrap();
        let ts: Vec<usize> = c.entries.iter().map(|e| e.t).collect();
        // the shared root label, plus the empty prefix every pair shares
        assert_eq!(ts, vec![0, 1]);
    }

    #[test]
    fn dense_budget_and_export() {
        let b = SetBackend::new(["A", "B"]).unwrap();
        let batch = [seq(&b, &["A", "B", "<eos>"]), seq(&b, &["B", "A", "<eos>"])];
        let c = build_constraint_matrix(&batch, &b).unwrap();
        assert!(matches!(c.to_dense(10), Err(Error::BudgetExceeded { required: 16, budget: 10 })));
        let d = c.to_dense(16).unwrap();
        assert!(d[2][1][0] && d[2][0][1] && !d[1][0][1]);
        let mut out = Vec::new();
        c.write_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"j":0,"k":1,"t":0}"#);
        assert_eq!(text.lines().count(), 3);
    }
}
