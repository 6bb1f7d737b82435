//! JSON Lines instance files. One object per line with a `kind` tag, an optional format
//! version `"v": 1` and optional supervised targets.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

use super::{
    PropositionalInstance, SeriesInstance, SetInstance, StructureInstance, TreeInstance, TreeNode,
};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Class(u32),
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledInstance {
    pub instance: StructureInstance,
    pub target: Option<Target>,
}

impl LabeledInstance {
    pub fn unlabeled(instance: StructureInstance) -> Self {
        LabeledInstance { instance, target: None }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Raw {
    Set {
        elements: Vec<String>,
    },
    Tree {
        ordered: bool,
        root: Option<TreeNode>,
    },
    Series {
        #[serde(default)]
        features: BTreeMap<String, f64>,
        variables: Vec<String>,
        values: Vec<Vec<f64>>,
    },
    Propositional {
        #[serde(default)]
        numeric: BTreeMap<String, f64>,
        #[serde(default)]
        categorical: BTreeMap<String, String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<u32>,
    },
}

impl Raw {
    fn from_instance(x: &StructureInstance) -> Raw {
        match x {
            StructureInstance::Set(s) => Raw::Set { elements: s.elements.iter().cloned().collect() },
            StructureInstance::Tree(t) => Raw::Tree { ordered: t.ordered(), root: t.root().cloned() },
            StructureInstance::Series(s) => Raw::Series {
                features: s.features().clone(),
                variables: s.variables().to_vec(),
                values: s.values().to_vec(),
            },
            StructureInstance::Propositional(p) => Raw::Propositional {
                numeric: p.numeric.clone(),
                categorical: p.categorical.clone(),
                label: p.label,
            },
        }
    }

    fn into_instance(self) -> Result<StructureInstance> {
        Ok(match self {
            Raw::Set { elements } => StructureInstance::Set(SetInstance::new(elements)?),
            Raw::Tree { ordered, root } => StructureInstance::Tree(TreeInstance::new(root, ordered)),
            Raw::Series { features, variables, values } => {
                StructureInstance::Series(SeriesInstance::new(features, variables, values)?)
            }
            Raw::Propositional { numeric, categorical, label } => StructureInstance::Propositional(
                PropositionalInstance::new(numeric, categorical, label)?,
            ),
        })
    }
}

fn parse_line(line: &str) -> Result<LabeledInstance> {
    let mut obj: Map<String, Value> = serde_json::from_str(line)?;
    if let Some(v) = obj.remove("v") {
        if v.as_u64() != Some(FORMAT_VERSION) {
            return Err(Error::Format(format!("unsupported format version {v}")));
        }
    }
    let class = obj.remove("target_class");
    let value = obj.remove("target_value");
    let target = match (class, value) {
        (Some(_), Some(_)) => {
            return Err(Error::Format("both target_class and target_value given".into()))
        }
        (Some(c), None) => Some(Target::Class(
            c.as_u64()
                .and_then(|c| u32::try_from(c).ok())
                .filter(|&c| c >= 1)
                .ok_or_else(|| Error::Format("target_class must be an integer >= 1".into()))?,
        )),
        (None, Some(v)) => Some(Target::Value(
            v.as_f64()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Format("target_value must be a finite number".into()))?,
        )),
        (None, None) => None,
    };
    let raw: Raw = serde_json::from_value(Value::Object(obj))?;
    Ok(LabeledInstance { instance: raw.into_instance()?, target })
}

fn with_line(n: usize, e: Error) -> Error {
    Error::Format(format!("line {n}: {e}"))
}

/// Parses JSONL text. Blank lines are skipped; errors carry the 1-based line number.
pub fn read_instances_str(text: &str) -> Result<Vec<LabeledInstance>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(l).map_err(|e| with_line(i + 1, e)))
        .collect()
}

pub fn read_instances(path: &Path) -> Result<Vec<LabeledInstance>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line).map_err(|e| with_line(i + 1, e))?);
    }
    Ok(out)
}

/// One JSONL line (no trailing newline) carrying the format version.
pub fn write_instance_line(x: &LabeledInstance) -> Result<String> {
    let Value::Object(body) = serde_json::to_value(Raw::from_instance(&x.instance))? else {
        unreachable!("instances serialize as objects")
    };
    let mut obj = Map::new();
    obj.insert("v".into(), FORMAT_VERSION.into());
    obj.extend(body);
    match x.target {
        Some(Target::Class(c)) => {
            obj.insert("target_class".into(), c.into());
        }
        Some(Target::Value(v)) => {
            obj.insert("target_value".into(), v.into());
        }
        None => {}
    }
    Ok(serde_json::to_string(&obj)?)
}
