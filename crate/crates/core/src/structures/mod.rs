//! Concrete structure backends and the instance types they serialize.

mod io;
mod propositional;
mod series;
mod set;
mod tree;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backend::StructureBackend;
use crate::error::{Error, Result};
use crate::lexicon::EOS;

pub use io::{read_instances, read_instances_str, write_instance_line, LabeledInstance, Target};
pub use propositional::{PropositionalBackend, LABEL_NAME};
pub use series::{series_alphabet, SeriesBackend, ADVANCE_TIME};
pub use set::SetBackend;
pub use tree::{TreeBackend, CLOSE, OPEN};

/// A finite set of distinct symbols.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SetInstance {
    pub elements: BTreeSet<String>,
}

impl SetInstance {
    /// Fails on duplicate elements.
    pub fn new<I, S>(elements: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = BTreeSet::new();
        for e in elements {
            let e = e.into();
            if !set.insert(e.clone()) {
                return Err(Error::InvalidInstance(format!("duplicate set element `{e}`")));
            }
        }
        Ok(SetInstance { elements: set })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn leaf(label: impl Into<String>) -> Self {
        TreeNode { label: label.into(), children: Vec::new() }
    }

    pub fn node(label: impl Into<String>, children: Vec<TreeNode>) -> Self {
        TreeNode { label: label.into(), children }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TreeNode::size).sum::<usize>()
    }

    fn canonicalize(&mut self) {
        for c in &mut self.children {
            c.canonicalize();
        }
        self.children.sort();
    }
}

/// A labelled rooted tree. Unordered trees are stored with siblings in canonical order,
/// so structural equality is plain equality.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeInstance {
    root: Option<TreeNode>,
    ordered: bool,
}

impl TreeInstance {
    pub fn new(root: Option<TreeNode>, ordered: bool) -> Self {
        let mut root = root;
        if !ordered {
            if let Some(r) = &mut root {
                r.canonicalize();
            }
        }
        TreeInstance { root, ordered }
    }

    pub fn root(&self) -> Option<&TreeNode> {
        self.root.as_ref()
    }

    pub fn ordered(&self) -> bool {
        self.ordered
    }

    pub fn size(&self) -> usize {
        self.root.as_ref().map_or(0, TreeNode::size)
    }
}

/// Input features plus a k×l real matrix (rows are named variables, columns time steps).
/// Rows are kept sorted by variable name.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesInstance {
    features: BTreeMap<String, f64>,
    variables: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl SeriesInstance {
    pub fn new(
        features: BTreeMap<String, f64>,
        variables: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidInstance("series needs at least one variable".into()));
        }
        if variables.len() != values.len() {
            return Err(Error::InvalidInstance(format!(
                "{} variables but {} value rows",
                variables.len(),
                values.len()
            )));
        }
        let l = values[0].len();
        if l == 0 {
            return Err(Error::InvalidInstance("series needs at least one time step".into()));
        }
        if values.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidInstance("ragged value matrix".into()));
        }
        if values.iter().flatten().chain(features.values()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite series value".into()));
        }
        let mut rows: Vec<(String, Vec<f64>)> = variables.into_iter().zip(values).collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateName(
                rows.windows(2).find(|w| w[0].0 == w[1].0).unwrap()[0].0.clone(),
            ));
        }
        if let Some(f) = features.keys().find(|f| rows.iter().any(|(v, _)| v == *f)) {
            return Err(Error::DuplicateName(f.clone()));
        }
        let (variables, values) = rows.into_iter().unzip();
        Ok(SeriesInstance { features, variables, values })
    }

    pub fn features(&self) -> &BTreeMap<String, f64> {
        &self.features
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    /// Row-major values, variables × time.
    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.variables.len()
    }

    pub fn l(&self) -> usize {
        self.values[0].len()
    }

    /// Same series without its input features.
    pub fn without_features(&self) -> Self {
        SeriesInstance { features: BTreeMap::new(), ..self.clone() }
    }
}

/// A tabular record: numeric features, categorical features and an optional class label
/// in `1..=c`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropositionalInstance {
    pub numeric: BTreeMap<String, f64>,
    pub categorical: BTreeMap<String, String>,
    pub label: Option<u32>,
}

impl PropositionalInstance {
    pub fn new(
        numeric: BTreeMap<String, f64>,
        categorical: BTreeMap<String, String>,
        label: Option<u32>,
    ) -> Result<Self> {
        if let Some(n) = numeric.keys().find(|n| categorical.contains_key(*n)) {
            return Err(Error::DuplicateName(n.clone()));
        }
        if let Some(n) = numeric
            .keys()
            .chain(categorical.keys())
            .find(|n| n.as_str() == LABEL_NAME || n.contains('=') || n.as_str() == EOS)
        {
            return Err(Error::InvalidInstance(format!("reserved feature name `{n}`")));
        }
        if numeric.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite numeric feature".into()));
        }
        if label == Some(0) {
            return Err(Error::InvalidInstance("labels are numbered from 1".into()));
        }
        Ok(PropositionalInstance { numeric, categorical, label })
    }

    pub fn item_count(&self) -> usize {
        self.numeric.len() + self.categorical.len() + usize::from(self.label.is_some())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StructureInstance {
    Set(SetInstance),
    Tree(TreeInstance),
    Series(SeriesInstance),
    Propositional(PropositionalInstance),
}

impl StructureInstance {
    pub fn kind(&self) -> &'static str {
        match self {
            StructureInstance::Set(_) => "set",
            StructureInstance::Tree(_) => "tree",
            StructureInstance::Series(_) => "series",
            StructureInstance::Propositional(_) => "propositional",
        }
    }
}

/// Declarative description of a backend (its alphabet), as stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Set { symbols: Vec<String> },
    Tree { labels: Vec<String>, ordered: bool },
    Series { variables: Vec<String>, features: Vec<String> },
    Propositional {
        numeric: Vec<String>,
        categorical: Vec<(String, Vec<String>)>,
        classes: u32,
    },
}

impl BackendSpec {
    /// The smallest backend covering every instance. All instances must share a kind.
    pub fn infer<'a, I>(instances: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a StructureInstance>,
    {
        let mut it = instances.into_iter().peekable();
        let first = it.peek().ok_or_else(|| Error::InvalidInstance("empty dataset".into()))?;
        let mut spec = match first {
            StructureInstance::Set(_) => BackendSpec::Set { symbols: vec![] },
            StructureInstance::Tree(t) => BackendSpec::Tree { labels: vec![], ordered: t.ordered() },
            StructureInstance::Series(s) => BackendSpec::Series {
                variables: s.variables().to_vec(),
                features: vec![],
            },
            StructureInstance::Propositional(_) => BackendSpec::Propositional {
                numeric: vec![],
                categorical: vec![],
                classes: 0,
            },
        };
        for x in it {
            spec.absorb(x)?;
        }
        spec.normalize();
        Ok(spec)
    }

    fn absorb(&mut self, x: &StructureInstance) -> Result<()> {
        match (self, x) {
            (BackendSpec::Set { symbols }, StructureInstance::Set(s)) => {
                symbols.extend(s.elements.iter().cloned());
            }
            (BackendSpec::Tree { labels, ordered }, StructureInstance::Tree(t)) => {
                if t.ordered() != *ordered {
                    return Err(Error::InvalidInstance("mixed ordered and unordered trees".into()));
                }
                fn walk(n: &TreeNode, out: &mut Vec<String>) {
                    out.push(n.label.clone());
                    n.children.iter().for_each(|c| walk(c, out));
                }
                if let Some(r) = t.root() {
                    walk(r, labels);
                }
            }
            (BackendSpec::Series { variables, features }, StructureInstance::Series(s)) => {
                if s.variables() != variables.as_slice() {
                    return Err(Error::InvalidInstance("series with differing variables".into()));
                }
                features.extend(s.features().keys().cloned());
            }
            (
                BackendSpec::Propositional { numeric, categorical, classes },
                StructureInstance::Propositional(p),
            ) => {
                numeric.extend(p.numeric.keys().cloned());
                for (k, v) in &p.categorical {
                    match categorical.iter_mut().find(|(n, _)| n == k) {
                        Some((_, vals)) => vals.push(v.clone()),
                        None => categorical.push((k.clone(), vec![v.clone()])),
                    }
                }
                *classes = (*classes).max(p.label.unwrap_or(0));
            }
            (spec, x) => {
                return Err(Error::InvalidInstance(format!(
                    "instance of kind `{}` in a {:?} dataset",
                    x.kind(),
                    spec.kind_name()
                )))
            }
        }
        Ok(())
    }

    fn normalize(&mut self) {
        fn sort_dedup(v: &mut Vec<String>) {
            v.sort();
            v.dedup();
        }
        match self {
            BackendSpec::Set { symbols } => sort_dedup(symbols),
            BackendSpec::Tree { labels, .. } => sort_dedup(labels),
            BackendSpec::Series { features, .. } => sort_dedup(features),
            BackendSpec::Propositional { numeric, categorical, .. } => {
                sort_dedup(numeric);
                categorical.sort_by(|a, b| a.0.cmp(&b.0));
                categorical.iter_mut().for_each(|(_, v)| sort_dedup(v));
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BackendSpec::Set { .. } => "set",
            BackendSpec::Tree { .. } => "tree",
            BackendSpec::Series { .. } => "series",
            BackendSpec::Propositional { .. } => "propositional",
        }
    }

    /// Extends this spec so it also covers `other` (same kind required).
    pub fn union(&self, other: &BackendSpec) -> Result<BackendSpec> {
        let mut out = self.clone();
        match (&mut out, other) {
            (BackendSpec::Set { symbols }, BackendSpec::Set { symbols: o }) => symbols.extend(o.iter().cloned()),
            (BackendSpec::Tree { labels, ordered }, BackendSpec::Tree { labels: o, ordered: oo })
                if ordered == oo =>
            {
                labels.extend(o.iter().cloned())
            }
            (
                BackendSpec::Series { variables, features },
                BackendSpec::Series { variables: ov, features: of },
            ) if variables == ov => features.extend(of.iter().cloned()),
            (
                BackendSpec::Propositional { numeric, categorical, classes },
                BackendSpec::Propositional { numeric: on, categorical: oc, classes: ocl },
            ) => {
                numeric.extend(on.iter().cloned());
                for (k, vals) in oc {
                    match categorical.iter_mut().find(|(n, _)| n == k) {
                        Some((_, v)) => v.extend(vals.iter().cloned()),
                        None => categorical.push((k.clone(), vals.clone())),
                    }
                }
                *classes = (*classes).max(*ocl);
            }
            _ => return Err(Error::InvalidInstance("incompatible backend specs".into())),
        }
        out.normalize();
        Ok(out)
    }

    pub fn build(&self) -> Result<Box<dyn StructureBackend>> {
        Ok(match self {
            BackendSpec::Set { symbols } => Box::new(SetBackend::new(symbols.iter().cloned())?),
            BackendSpec::Tree { labels, ordered } => {
                Box::new(TreeBackend::new(labels.iter().cloned(), *ordered)?)
            }
            BackendSpec::Series { variables, features } => {
                Box::new(SeriesBackend::new(variables.clone(), features.clone())?)
            }
            BackendSpec::Propositional { numeric, categorical, classes } => Box::new(
                PropositionalBackend::new(numeric.clone(), categorical.clone(), *classes)?,
            ),
        })
    }
}

pub(crate) fn mismatch(expected: &str, x: &StructureInstance) -> Error {
    Error::InvalidInstance(format!("expected a {expected} instance, got `{}`", x.kind()))
}
