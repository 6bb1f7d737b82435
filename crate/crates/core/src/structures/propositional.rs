//! Tabular records.
//!
//! A numeric feature is one token (its name, carrying the value). A categorical feature is
//! two tokens: its value-free name, then the value token `name=value`. The class label is
//! the value-free `label` token followed by `label=c`. Items appear in any order; the
//! two tokens of a categorical feature or of the label are always adjacent.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::backend::{check_bound, factorial, permutations, Cursor, StateMachine, StructureBackend};
use crate::error::{Error, Result};
use crate::lexicon::{Alphabet, LexiconElement, Serialization, Symbol};
use crate::measure::{MeasureMode, SamplingMeasure};
use crate::state::{BackendTag, StateKey, StateReader, StateWriter};

use super::{mismatch, PropositionalInstance, StructureInstance};

pub const LABEL_NAME: &str = "label";

fn value_token(name: &str, value: &str) -> String {
    format!("{name}={value}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Numeric,
    CategoricalName,
    /// Value token owned by the given categorical name (or the label token).
    Value(Symbol),
    Label,
    Eos,
}

pub struct PropositionalBackend {
    alphabet: Alphabet,
    roles: Vec<Role>,
    classes: u32,
    label: Option<Symbol>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Item {
    Numeric(Symbol, u64),
    Pair(Symbol, Symbol),
}

impl Item {
    fn first(&self) -> LexiconElement {
        match *self {
            Item::Numeric(s, bits) => LexiconElement::valued(s, f64::from_bits(bits)),
            Item::Pair(s, _) => LexiconElement::bare(s),
        }
    }
}

/// Emitted `(name, value)` pairs and a name still waiting for its value token.
#[derive(Clone, Debug)]
pub(crate) struct PropState {
    emitted: BTreeMap<Symbol, u64>,
    pending: Option<Symbol>,
    ended: bool,
}

impl PropositionalBackend {
    pub fn new(
        mut numeric: Vec<String>,
        mut categorical: Vec<(String, Vec<String>)>,
        classes: u32,
    ) -> Result<Self> {
        numeric.sort();
        categorical.sort_by(|a, b| a.0.cmp(&b.0));
        let mut entries: Vec<(String, bool)> = Vec::new();
        let mut roles = Vec::new();
        for n in &numeric {
            entries.push((n.clone(), true));
            roles.push(Role::Numeric);
        }
        let first_cat = entries.len();
        for (n, _) in &categorical {
            entries.push((n.clone(), false));
            roles.push(Role::CategoricalName);
        }
        for (i, (n, vals)) in categorical.iter().enumerate() {
            let owner = Symbol((first_cat + i) as u32);
            let mut vals = vals.clone();
            vals.sort();
            vals.dedup();
            for v in vals {
                entries.push((value_token(n, &v), false));
                roles.push(Role::Value(owner));
            }
        }
        let mut label = None;
        if classes > 0 {
            let l = Symbol(entries.len() as u32);
            label = Some(l);
            entries.push((LABEL_NAME.into(), false));
            roles.push(Role::Label);
            for c in 1..=classes {
                entries.push((value_token(LABEL_NAME, &c.to_string()), false));
                roles.push(Role::Value(l));
            }
        }
        roles.push(Role::Eos);
        let alphabet = Alphabet::new(entries)?;
        Ok(PropositionalBackend { alphabet, roles, classes, label })
    }

    pub fn classes(&self) -> u32 {
        self.classes
    }

    fn role(&self, s: Symbol) -> Role {
        self.roles[s.index()]
    }

    fn instance<'a>(&self, x: &'a StructureInstance) -> Result<&'a PropositionalInstance> {
        match x {
            StructureInstance::Propositional(p) => Ok(p),
            other => Err(mismatch("propositional", other)),
        }
    }

    fn items(&self, p: &PropositionalInstance) -> Result<Vec<Item>> {
        let mut items = Vec::new();
        for (n, &v) in &p.numeric {
            let s = self.alphabet.symbol(n)?;
            if self.role(s) != Role::Numeric {
                return Err(Error::InvalidInstance(format!("`{n}` is not a numeric feature")));
            }
            items.push(Item::Numeric(s, v.to_bits()));
        }
        for (n, v) in &p.categorical {
            let s = self.alphabet.symbol(n)?;
            if self.role(s) != Role::CategoricalName {
                return Err(Error::InvalidInstance(format!("`{n}` is not a categorical feature")));
            }
            items.push(Item::Pair(s, self.alphabet.symbol(&value_token(n, v))?));
        }
        if let Some(c) = p.label {
            let l = self
                .label
                .ok_or_else(|| Error::InvalidInstance("backend declares no label".into()))?;
            items.push(Item::Pair(l, self.alphabet.symbol(&value_token(LABEL_NAME, &c.to_string()))?));
        }
        Ok(items)
    }
}

impl StateMachine for PropositionalBackend {
    type State = PropState;

    fn tag(&self) -> BackendTag {
        BackendTag::Propositional
    }

    fn init(&self) -> PropState {
        PropState { emitted: BTreeMap::new(), pending: None, ended: false }
    }

    fn step(&self, s: &mut PropState, e: &LexiconElement) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTransition(m));
        if s.ended {
            return bad("element after eos".into());
        }
        let name = self.alphabet.name(e.symbol);
        match (s.pending, self.role(e.symbol)) {
            (Some(p), Role::Value(owner)) if owner == p => {
                s.emitted.insert(p, e.symbol.0 as u64);
                s.pending = None;
            }
            (Some(p), _) => {
                return bad(format!("`{}` must be followed by its value", self.alphabet.name(p)))
            }
            (None, Role::Numeric) => {
                if s.emitted.insert(e.symbol, e.embedded_value().to_bits()).is_some() {
                    return bad(format!("feature `{name}` repeated"));
                }
            }
            (None, Role::CategoricalName | Role::Label) => {
                if s.emitted.contains_key(&e.symbol) {
                    return bad(format!("feature `{name}` repeated"));
                }
                s.pending = Some(e.symbol);
            }
            (None, Role::Value(_)) => return bad(format!("value `{name}` without its feature name")),
            (None, Role::Eos) => s.ended = true,
        }
        Ok(())
    }

    fn encode(&self, s: &PropState) -> Vec<u8> {
        let mut w = StateWriter::new();
        w.u8(s.ended as u8)
            .u32(s.pending.map_or(u32::MAX, |p| p.0))
            .u32(s.emitted.len() as u32);
        for (k, v) in &s.emitted {
            w.u32(k.0).f64(f64::from_bits(*v));
        }
        w.finish()
    }

    fn decode(&self, payload: &[u8]) -> Result<PropState> {
        let mut r = StateReader::new(payload);
        let ended = r.u8()? != 0;
        let p = r.u32()?;
        let n = r.u32()?;
        let emitted = (0..n)
            .map(|_| Ok((Symbol(r.u32()?), r.f64()?.to_bits())))
            .collect::<Result<_>>()?;
        r.finish()?;
        Ok(PropState { emitted, pending: (p != u32::MAX).then_some(Symbol(p)), ended })
    }
}

struct PropCursor {
    remaining: Vec<Item>,
    pending: Option<Symbol>,
    eos: Symbol,
    ended: bool,
    position: usize,
}

impl Cursor for PropCursor {
    fn candidates(&self) -> Vec<LexiconElement> {
        if self.ended {
            return vec![];
        }
        if let Some(v) = self.pending {
            return vec![LexiconElement::bare(v)];
        }
        if self.remaining.is_empty() {
            return vec![LexiconElement::bare(self.eos)];
        }
        let set: BTreeSet<LexiconElement> = self.remaining.iter().map(Item::first).collect();
        set.into_iter().collect()
    }

    fn advance(&mut self, e: &LexiconElement) -> Result<()> {
        let dead = Error::DeadEnd { position: self.position };
        if self.ended {
            return Err(dead);
        }
        if let Some(v) = self.pending {
            if *e != LexiconElement::bare(v) {
                return Err(dead);
            }
            self.pending = None;
        } else if e.symbol == self.eos {
            if !self.remaining.is_empty() {
                return Err(dead);
            }
            self.ended = true;
        } else {
            let i = self.remaining.iter().position(|it| it.first() == *e).ok_or(dead)?;
            if let Item::Pair(_, v) = self.remaining.remove(i) {
                self.pending = Some(v);
            }
        }
        self.position += 1;
        Ok(())
    }
}

impl StructureBackend for PropositionalBackend {
    fn tag(&self) -> BackendTag {
        BackendTag::Propositional
    }

    fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    fn initial_state(&self) -> StateKey {
        self.key(&self.init())
    }

    fn transition(&self, state: &StateKey, element: &LexiconElement) -> Result<StateKey> {
        self.transition_key(&self.alphabet, state, element)
    }

    fn replay_states(&self, elements: &[LexiconElement]) -> Result<Vec<StateKey>> {
        self.replay(&self.alphabet, elements)
    }

    fn deserialize(&self, a: &Serialization) -> Result<StructureInstance> {
        a.check(&self.alphabet)?;
        let mut numeric = BTreeMap::new();
        let mut categorical = BTreeMap::new();
        let mut label = None;
        let mut seen: HashMap<Symbol, usize> = HashMap::new();
        let toks = &a.elements;
        let mut i = 0;
        while i + 1 < toks.len() {
            let e = toks[i];
            let name = self.alphabet.name(e.symbol).to_string();
            let malformed = |position, reason: String| Error::MalformedSerialization { position, reason };
            if seen.insert(e.symbol, i).is_some() {
                return Err(malformed(i, format!("feature `{name}` repeated")));
            }
            match self.role(e.symbol) {
                Role::Numeric => {
                    numeric.insert(name, e.value.unwrap());
                    i += 1;
                }
                Role::CategoricalName | Role::Label => {
                    let v = toks[i + 1];
                    if self.role(v.symbol) != Role::Value(e.symbol) {
                        return Err(malformed(i + 1, format!("`{name}` must be followed by its value")));
                    }
                    let vname = &self.alphabet.name(v.symbol)[name.len() + 1..];
                    if self.role(e.symbol) == Role::Label {
                        label = Some(vname.parse::<u32>().map_err(|_| malformed(i + 1, "bad class token".into()))?);
                    } else {
                        categorical.insert(name, vname.to_string());
                    }
                    i += 2;
                }
                Role::Value(_) => return Err(malformed(i, format!("value `{name}` without its feature name"))),
                Role::Eos => unreachable!("eos only at the end"),
            }
        }
        if i + 1 != toks.len() {
            return Err(Error::MalformedSerialization {
                position: toks.len() - 1,
                reason: "feature name without its value".into(),
            });
        }
        Ok(StructureInstance::Propositional(PropositionalInstance::new(numeric, categorical, label)?))
    }

    fn serialization_count(&self, x: &StructureInstance) -> Result<u128> {
        Ok(factorial(self.instance(x)?.item_count()))
    }

    fn enumerate_serializations(
        &self,
        x: &StructureInstance,
        bound: usize,
    ) -> Result<Vec<Serialization>> {
        let items = self.items(self.instance(x)?)?;
        check_bound(factorial(items.len()), bound)?;
        let eos = LexiconElement::bare(self.alphabet.eos());
        Ok(permutations(&items)
            .into_iter()
            .map(|order| {
                let mut seq = Vec::new();
                for it in order {
                    seq.push(it.first());
                    if let Item::Pair(_, v) = it {
                        seq.push(LexiconElement::bare(v));
                    }
                }
                seq.push(eos);
                Serialization::new(seq)
            })
            .collect())
    }

    fn cursor<'a>(&'a self, x: &'a StructureInstance) -> Result<Box<dyn Cursor + 'a>> {
        let mut remaining = self.items(self.instance(x)?)?;
        remaining.sort();
        Ok(Box::new(PropCursor {
            remaining,
            pending: None,
            eos: self.alphabet.eos(),
            ended: false,
            position: 0,
        }))
    }

    fn is_conditioning(&self, e: &LexiconElement) -> bool {
        match self.role(e.symbol) {
            Role::Numeric | Role::CategoricalName => true,
            Role::Value(owner) => Some(owner) != self.label,
            Role::Label | Role::Eos => false,
        }
    }

    fn default_measure(&self, mode: MeasureMode) -> SamplingMeasure {
        match mode {
            MeasureMode::Unconditional => SamplingMeasure::Uniform,
            MeasureMode::Conditional => SamplingMeasure::BiasedFront {
                front_fraction: 0.5,
                drop_probability: 0.0,
            },
        }
    }
}
