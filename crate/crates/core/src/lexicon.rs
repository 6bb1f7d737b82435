//! Lexicon elements, alphabets and serializations.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};

/// Reserved end-of-sequence symbol name, present in every alphabet.
pub const EOS: &str = "<eos>";

/// Index of a symbol inside its [`Alphabet`]. Index order is the canonical symbol order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol(pub u32);

impl Symbol {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Finite symbol set of a structure backend. `eos` is always the last symbol.
#[derive(Clone, Debug)]
pub struct Alphabet {
    names: Vec<String>,
    valued: Vec<bool>,
    index: HashMap<String, Symbol>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.valued == other.valued
    }
}

impl Alphabet {
    /// Builds an alphabet from `(name, value_carrying)` entries; `eos` is appended.
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        let mut names = Vec::new();
        let mut valued = Vec::new();
        let mut index = HashMap::new();
        for (name, v) in entries
            .into_iter()
            .map(|(n, v)| (n.into(), v))
            .chain(std::iter::once((EOS.to_string(), false)))
        {
            if index.insert(name.clone(), Symbol(names.len() as u32)).is_some() {
                return Err(Error::DuplicateName(name));
            }
            names.push(name);
            valued.push(v);
        }
        Ok(Alphabet { names, valued, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn eos(&self) -> Symbol {
        Symbol(self.names.len() as u32 - 1)
    }

    pub fn symbol(&self, name: &str) -> Result<Symbol> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownSymbol(name.to_string()))
    }

    pub fn name(&self, s: Symbol) -> &str {
        &self.names[s.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, s: Symbol) -> bool {
        s.index() < self.names.len()
    }

    pub fn is_valued(&self, s: Symbol) -> bool {
        self.valued[s.index()]
    }

    pub fn symbols(&self) -> impl Iterator<Item = Symbol> {
        (0..self.names.len() as u32).map(Symbol)
    }

    /// Checks symbol membership and the value-presence invariant.
    pub fn check(&self, e: &LexiconElement) -> Result<()> {
        if !self.contains(e.symbol) {
            return Err(Error::UnknownSymbol(format!("#{}", e.symbol.0)));
        }
        match (self.is_valued(e.symbol), e.value) {
            (true, Some(v)) if v.is_finite() => Ok(()),
            (true, Some(_)) => Err(Error::InvalidInstance(format!(
                "non-finite value for `{}`",
                self.name(e.symbol)
            ))),
            (true, None) => Err(Error::InvalidInstance(format!(
                "symbol `{}` requires a value",
                self.name(e.symbol)
            ))),
            (false, Some(_)) => Err(Error::InvalidInstance(format!(
                "symbol `{}` carries no value",
                self.name(e.symbol)
            ))),
            (false, None) => Ok(()),
        }
    }

    pub fn element(&self, name: &str, value: Option<f64>) -> Result<LexiconElement> {
        let e = LexiconElement { symbol: self.symbol(name)?, value };
        self.check(&e)?;
        Ok(e)
    }

    pub fn display(&self, e: &LexiconElement) -> String {
        match e.value {
            Some(v) => format!("{}:{}", self.name(e.symbol), v),
            None => self.name(e.symbol).to_string(),
        }
    }
}

/// One token of a serialization: a symbol, optionally paired with a real value.
///
/// Equality, hashing and ordering use the exact bit pattern of the value.
#[derive(Clone, Copy, Debug)]
pub struct LexiconElement {
    pub symbol: Symbol,
    pub value: Option<f64>,
}

impl LexiconElement {
    pub fn bare(symbol: Symbol) -> Self {
        LexiconElement { symbol, value: None }
    }

    pub fn valued(symbol: Symbol, value: f64) -> Self {
        LexiconElement { symbol, value: Some(value) }
    }

    /// The value channel as fed to a model: value-free symbols embed as zero.
    pub fn embedded_value(&self) -> f64 {
        self.value.unwrap_or(0.0)
    }

    fn key(&self) -> (u32, Option<u64>) {
        (self.symbol.0, self.value.map(f64::to_bits))
    }
}

impl PartialEq for LexiconElement {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for LexiconElement {}

impl Hash for LexiconElement {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

impl PartialOrd for LexiconElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LexiconElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// A complete serialization, terminated by `eos`, with the per-step log-probabilities
/// recorded by the sampler when it produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Serialization {
    pub elements: Vec<LexiconElement>,
    pub step_log_probs: Option<Vec<f64>>,
}

impl Serialization {
    pub fn new(elements: Vec<LexiconElement>) -> Self {
        Serialization { elements, step_log_probs: None }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Log of the sampler path probability q(a|x), if it was recorded.
    pub fn log_q(&self) -> Option<f64> {
        self.step_log_probs.as_ref().map(|v| v.iter().sum())
    }

    /// Verifies non-emptiness, alphabet membership and the single trailing `eos`.
    pub fn check(&self, alphabet: &Alphabet) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::MalformedSerialization {
                position: 0,
                reason: "empty serialization".into(),
            });
        }
        let eos = alphabet.eos();
        let last = self.elements.len() - 1;
        for (i, e) in self.elements.iter().enumerate() {
            alphabet.check(e).map_err(|err| Error::MalformedSerialization {
                position: i,
                reason: err.to_string(),
            })?;
            if (e.symbol == eos) != (i == last) {
                return Err(Error::MalformedSerialization {
                    position: i,
                    reason: if i == last {
                        "missing trailing eos".into()
                    } else {
                        "eos before the end".into()
                    },
                });
            }
        }
        if let Some(lp) = &self.step_log_probs {
            if lp.len() != self.elements.len() {
                return Err(Error::MalformedSerialization {
                    position: lp.len().min(last),
                    reason: "step_log_probs length mismatch".into(),
                });
            }
        }
        Ok(())
    }

    pub fn display(&self, alphabet: &Alphabet) -> String {
        let parts: Vec<String> = self.elements.iter().map(|e| alphabet.display(e)).collect();
        format!("[{}]", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> Alphabet {
        Alphabet::new([("A", false), ("B", false), ("x", true)]).unwrap()
    }

    #[test]
    fn eos_is_last_and_value_free() {
        let a = abc();
        assert_eq!(a.len(), 4);
        assert_eq!(a.name(a.eos()), EOS);
        assert!(!a.is_valued(a.eos()));
    }

    #[test]
    fn duplicate_names_rejected() {
        assert_eq!(
            Alphabet::new([("A", false), ("A", true)]).unwrap_err(),
            Error::DuplicateName("A".into())
        );
        assert!(Alphabet::new([(EOS, false)]).is_err());
    }

    #[test]
    fn value_presence_follows_declaration() {
        let a = abc();
        assert!(a.element("A", None).is_ok());
        assert!(a.element("A", Some(0.0)).is_err());
        assert!(a.element("x", None).is_err());
        assert!(a.element("x", Some(f64::NAN)).is_err());
        assert!(a.element("x", Some(1.5)).is_ok());
        assert!(matches!(a.element("Z", None), Err(Error::UnknownSymbol(_))));
    }

    #[test]
    fn equality_is_bitwise() {
        let s = Symbol(2);
        assert_ne!(LexiconElement::valued(s, 0.0), LexiconElement::valued(s, -0.0));
        assert_eq!(LexiconElement::valued(s, 0.25), LexiconElement::valued(s, 0.25));
    }

    #[test]
    fn eos_must_terminate_exactly_once() {
        let a = abc();
        let e = |n: &str| a.element(n, None).unwrap();
        assert!(Serialization::new(vec![e("A"), e(EOS)]).check(&a).is_ok());
        assert!(Serialization::new(vec![e("A")]).check(&a).is_err());
        assert!(Serialization::new(vec![e(EOS), e(EOS)]).check(&a).is_err());
        assert!(Serialization::new(vec![]).check(&a).is_err());
    }
}
