//! Sets: any ordering of the elements, then `eos`.

use std::collections::BTreeSet;

use crate::backend::{check_bound, factorial, permutations, Cursor, StateMachine, StructureBackend};
use crate::error::{Error, Result};
use crate::lexicon::{Alphabet, LexiconElement, Serialization, Symbol, EOS};
use crate::measure::{MeasureMode, SamplingMeasure};
use crate::state::{BackendTag, StateKey, StateReader, StateWriter};

use super::{mismatch, SetInstance, StructureInstance};

pub struct SetBackend {
    alphabet: Alphabet,
}

/// Emitted elements (sorted) plus the terminal flag.
#[derive(Clone)]
pub(crate) struct SetState {
    seen: BTreeSet<Symbol>,
    ended: bool,
}

impl SetBackend {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Ok(SetBackend {
            alphabet: Alphabet::new(symbols.into_iter().map(|s| (s, false)))?,
        })
    }

    fn instance<'a>(&self, x: &'a StructureInstance) -> Result<&'a SetInstance> {
        match x {
            StructureInstance::Set(s) => Ok(s),
            other => Err(mismatch("set", other)),
        }
    }

    fn symbols(&self, x: &SetInstance) -> Result<Vec<Symbol>> {
        x.elements
            .iter()
            .map(|n| {
                if n == EOS {
                    Err(Error::InvalidInstance("`<eos>` cannot be a set element".into()))
                } else {
                    self.alphabet.symbol(n)
                }
            })
            .collect()
    }
}

impl StateMachine for SetBackend {
    type State = SetState;

    fn tag(&self) -> BackendTag {
        BackendTag::Set
    }

    fn init(&self) -> SetState {
        SetState { seen: BTreeSet::new(), ended: false }
    }

    fn step(&self, s: &mut SetState, e: &LexiconElement) -> Result<()> {
        if s.ended {
            return Err(Error::InvalidTransition("element after eos".into()));
        }
        if e.symbol == self.alphabet.eos() {
            s.ended = true;
        } else if !s.seen.insert(e.symbol) {
            return Err(Error::InvalidTransition(format!(
                "repeated set element `{}`",
                self.alphabet.name(e.symbol)
            )));
        }
        Ok(())
    }

    fn encode(&self, s: &SetState) -> Vec<u8> {
        let mut w = StateWriter::new();
        w.u8(s.ended as u8).u32(s.seen.len() as u32);
        for sym in &s.seen {
            w.u32(sym.0);
        }
        w.finish()
    }

    fn decode(&self, payload: &[u8]) -> Result<SetState> {
        let mut r = StateReader::new(payload);
        let ended = r.u8()? != 0;
        let n = r.u32()?;
        let seen = (0..n).map(|_| r.u32().map(Symbol)).collect::<Result<_>>()?;
        r.finish()?;
        Ok(SetState { seen, ended })
    }
}

struct SetCursor {
    remaining: BTreeSet<Symbol>,
    eos: Symbol,
    ended: bool,
    position: usize,
}

impl Cursor for SetCursor {
    fn candidates(&self) -> Vec<LexiconElement> {
        if self.ended {
            vec![]
        } else if self.remaining.is_empty() {
            vec![LexiconElement::bare(self.eos)]
        } else {
            self.remaining.iter().map(|&s| LexiconElement::bare(s)).collect()
        }
    }

    fn advance(&mut self, e: &LexiconElement) -> Result<()> {
        let ok = !self.ended
            && e.value.is_none()
            && if e.symbol == self.eos {
                self.remaining.is_empty()
            } else {
                self.remaining.remove(&e.symbol)
            };
        if !ok {
            return Err(Error::DeadEnd { position: self.position });
        }
        self.ended = e.symbol == self.eos;
        self.position += 1;
        Ok(())
    }
}

impl StructureBackend for SetBackend {
    fn tag(&self) -> BackendTag {
        BackendTag::Set
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
        let mut seen = BTreeSet::new();
        for (i, e) in a.elements[..a.len() - 1].iter().enumerate() {
            if !seen.insert(e.symbol) {
                return Err(Error::MalformedSerialization {
                    position: i,
                    reason: format!("duplicate element `{}`", self.alphabet.name(e.symbol)),
                });
            }
        }
        Ok(StructureInstance::Set(SetInstance {
            elements: seen.into_iter().map(|s| self.alphabet.name(s).to_string()).collect(),
        }))
    }

    fn serialization_count(&self, x: &StructureInstance) -> Result<u128> {
        Ok(factorial(self.instance(x)?.elements.len()))
    }

    fn enumerate_serializations(
        &self,
        x: &StructureInstance,
        bound: usize,
    ) -> Result<Vec<Serialization>> {
        let syms = self.symbols(self.instance(x)?)?;
        check_bound(factorial(syms.len()), bound)?;
        let eos = LexiconElement::bare(self.alphabet.eos());
        Ok(permutations(&syms)
            .into_iter()
            .map(|p| {
                let mut v: Vec<LexiconElement> = p.into_iter().map(LexiconElement::bare).collect();
                v.push(eos);
                Serialization::new(v)
            })
            .collect())
    }

    fn cursor<'a>(&'a self, x: &'a StructureInstance) -> Result<Box<dyn Cursor + 'a>> {
        let remaining = self.symbols(self.instance(x)?)?.into_iter().collect();
        Ok(Box::new(SetCursor {
            remaining,
            eos: self.alphabet.eos(),
            ended: false,
            position: 0,
        }))
    }

    fn default_measure(&self, _mode: MeasureMode) -> SamplingMeasure {
        SamplingMeasure::Uniform
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend() -> SetBackend {
        SetBackend::new(["A", "B", "C"]).unwrap()
    }

    fn seq(b: &SetBackend, names: &[&str]) -> Serialization {
        Serialization::new(names.iter().map(|n| b.alphabet.element(n, None).unwrap()).collect())
    }

    fn set(names: &[&str]) -> StructureInstance {
        StructureInstance::Set(SetInstance::new(names.iter().copied()).unwrap())
    }

    #[test]
    fn transition_from_empty() {
        let b = backend();
        let a = b.alphabet.element("A", None).unwrap();
        let s1 = b.transition(&b.initial_state(), &a).unwrap();
        let decoded = b.decode(&s1.payload).unwrap();
        assert_eq!(decoded.seen.into_iter().collect::<Vec<_>>(), vec![a.symbol]);
    }

    #[test]
    fn transitions_commute() {
        let b = backend();
        let e = |n| b.alphabet.element(n, None).unwrap();
        let s0 = b.initial_state();
        let bc = b.transition(&b.transition(&s0, &e("B")).unwrap(), &e("C")).unwrap();
        let cb = b.transition(&b.transition(&s0, &e("C")).unwrap(), &e("B")).unwrap();
        assert_eq!(bc, cb);
    }

    #[test]
    fn backend_mismatch() {
        let b = backend();
        let k = StateKey::new(BackendTag::Series, vec![]);
        let e = b.alphabet.element("A", None).unwrap();
        assert!(matches!(b.transition(&k, &e), Err(Error::BackendMismatch { .. })));
        assert!(matches!(
            b.transition(&b.initial_state(), &LexiconElement::bare(Symbol(99))),
            Err(Error::UnknownSymbol(_))
        ));
    }

    #[test]
    fn replay_agrees_on_equivalent_prefixes() {
        let b = backend();
        let r1 = b.replay_states(&seq(&b, &["A", "B", EOS]).elements).unwrap();
        let r2 = b.replay_states(&seq(&b, &["B", "A", EOS]).elements).unwrap();
        assert_eq!(r1.len(), 4);
        assert_eq!(r1[0], b.initial_state());
        assert_eq!(r1[2], r2[2]);
        assert_ne!(r1[1], r2[1]);
        assert_eq!(b.replay_states(&[]).unwrap(), vec![b.initial_state()]);
    }

    #[test]
    fn deserialize_examples() {
        let b = backend();
        assert_eq!(b.deserialize(&seq(&b, &["A", "C", "B", EOS])).unwrap(), set(&["A", "B", "C"]));
        assert!(matches!(
            b.deserialize(&seq(&b, &["A", "A", EOS])),
            Err(Error::MalformedSerialization { position: 1, .. })
        ));
    }

    #[test]
    fn enumeration_sizes() {
        let b = backend();
        assert_eq!(b.enumerate_serializations(&set(&["A", "B", "C"]), 100).unwrap().len(), 6);
        let empty = b.enumerate_serializations(&set(&[]), 1).unwrap();
        assert_eq!(empty, vec![seq(&b, &[EOS])]);
        assert_eq!(
            b.enumerate_serializations(&set(&["A", "B", "C"]), 5).unwrap_err(),
            Error::EnumerationTooLarge { count: 6, bound: 5 }
        );
    }

    #[test]
    fn streaming_candidates() {
        let b = backend();
        let x = set(&["A", "B", "C"]);
        let pre = seq(&b, &["A"]).elements;
        let st = b.replay_states(&pre).unwrap();
        let c = b.candidate_next_elements(&x, st.last().unwrap(), &pre).unwrap();
        assert_eq!(c, seq(&b, &["B", "C"]).elements);
        let pre = seq(&b, &["A", "B", "C"]).elements;
        let st = b.replay_states(&pre).unwrap();
        let c = b.candidate_next_elements(&x, st.last().unwrap(), &pre).unwrap();
        assert_eq!(c, seq(&b, &[EOS]).elements);
        let bad = seq(&b, &["A", "A"]).elements;
        assert!(matches!(
            b.candidate_next_elements(&x, &b.initial_state(), &bad),
            Err(Error::DeadEnd { .. })
        ));
    }
}
