//! The contract every structure backend satisfies.

use crate::error::{Error, Result};
use crate::lexicon::{Alphabet, LexiconElement, Serialization};
use crate::measure::{MeasureMode, SamplingMeasure};
use crate::state::{BackendTag, StateKey};
use crate::structures::StructureInstance;

/// Incremental view of the serializations of one instance that share the prefix
/// emitted so far. This is the streaming counterpart of filtering the full fiber.
pub trait Cursor {
    /// Distinct admissible next elements, sorted in canonical order. Empty once `eos`
    /// has been consumed.
    fn candidates(&self) -> Vec<LexiconElement>;

    /// Consumes one element; fails with [`Error::DeadEnd`] if it is not admissible.
    fn advance(&mut self, e: &LexiconElement) -> Result<()>;
}

pub trait StructureBackend: Send + Sync {
    fn tag(&self) -> BackendTag;

    fn alphabet(&self) -> &Alphabet;

    /// Encoding of s⁰, the state of the empty partial serialization.
    fn initial_state(&self) -> StateKey;

    /// s^{t+1} = f(s^t, a^{t+1}).
    fn transition(&self, state: &StateKey, element: &LexiconElement) -> Result<StateKey>;

    /// `[s⁰, s¹, …, s^T]` for the given element sequence (length `elements.len() + 1`).
    fn replay_states(&self, elements: &[LexiconElement]) -> Result<Vec<StateKey>> {
        let mut out = Vec::with_capacity(elements.len() + 1);
        out.push(self.initial_state());
        for e in elements {
            let next = self.transition(out.last().unwrap(), e)?;
            out.push(next);
        }
        Ok(out)
    }

    fn deserialize(&self, a: &Serialization) -> Result<StructureInstance>;

    /// Exact size of the fiber X⁻¹(x).
    fn serialization_count(&self, x: &StructureInstance) -> Result<u128>;

    /// Every distinct serialization of `x`, refusing when there are more than `bound`.
    fn enumerate_serializations(
        &self,
        x: &StructureInstance,
        bound: usize,
    ) -> Result<Vec<Serialization>>;

    fn cursor<'a>(&'a self, x: &'a StructureInstance) -> Result<Box<dyn Cursor + 'a>>;

    /// Whether a symbol belongs to the conditioning part of an instance (input features).
    fn is_conditioning(&self, _element: &LexiconElement) -> bool {
        false
    }

    fn default_measure(&self, mode: MeasureMode) -> SamplingMeasure;

    /// Streaming candidate set after `prefix`. `state` must be the replayed state of the
    /// prefix; it is checked for the backend tag only.
    fn candidate_next_elements(
        &self,
        x: &StructureInstance,
        state: &StateKey,
        prefix: &[LexiconElement],
    ) -> Result<Vec<LexiconElement>> {
        state.expect_tag(self.tag())?;
        let mut c = self.cursor(x)?;
        for (i, e) in prefix.iter().enumerate() {
            c.advance(e).map_err(|_| Error::DeadEnd { position: i })?;
        }
        let cands = c.candidates();
        if cands.is_empty() {
            return Err(Error::DeadEnd { position: prefix.len() });
        }
        Ok(cands)
    }
}

/// Typed state machine behind a backend's [`StateKey`] encoding.
pub(crate) trait StateMachine {
    type State: Clone;

    fn tag(&self) -> BackendTag;
    fn init(&self) -> Self::State;
    fn step(&self, s: &mut Self::State, e: &LexiconElement) -> Result<()>;
    fn encode(&self, s: &Self::State) -> Vec<u8>;
    fn decode(&self, payload: &[u8]) -> Result<Self::State>;

    fn key(&self, s: &Self::State) -> StateKey {
        StateKey::new(self.tag(), self.encode(s))
    }

    fn transition_key(&self, alphabet: &Alphabet, state: &StateKey, e: &LexiconElement) -> Result<StateKey> {
        state.expect_tag(self.tag())?;
        alphabet.check(e)?;
        let mut s = self.decode(&state.payload)?;
        self.step(&mut s, e)?;
        Ok(self.key(&s))
    }

    fn replay(&self, alphabet: &Alphabet, elements: &[LexiconElement]) -> Result<Vec<StateKey>> {
        let mut s = self.init();
        let mut out = Vec::with_capacity(elements.len() + 1);
        out.push(self.key(&s));
        for e in elements {
            alphabet.check(e)?;
            self.step(&mut s, e)?;
            out.push(self.key(&s));
        }
        Ok(out)
    }
}

/// The serialization obtained by always taking the first candidate in canonical order.
pub fn canonical_serialization(
    backend: &dyn StructureBackend,
    x: &StructureInstance,
) -> Result<Serialization> {
    let mut c = backend.cursor(x)?;
    let eos = backend.alphabet().eos();
    let mut out = Vec::new();
    loop {
        let cands = c.candidates();
        let next = *cands
            .first()
            .ok_or(Error::DeadEnd { position: out.len() })?;
        c.advance(&next)?;
        out.push(next);
        if next.symbol == eos {
            return Ok(Serialization::new(out));
        }
    }
}

/// Checks `bound` against an exact fiber size before enumerating.
pub(crate) fn check_bound(count: u128, bound: usize) -> Result<()> {
    if count > bound as u128 {
        Err(Error::EnumerationTooLarge { count, bound })
    } else {
        Ok(())
    }
}

pub(crate) fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |acc, k| acc.saturating_mul(k))
}

/// All permutations of `items` in lexicographic index order.
pub(crate) fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    fn rec<T: Clone>(rest: &mut Vec<T>, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            cur.push(x.clone());
            rec(rest, cur, out);
            cur.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    rec(&mut items.to_vec(), &mut Vec::new(), &mut out);
    out
}
