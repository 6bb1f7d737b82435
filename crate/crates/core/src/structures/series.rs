//! Multivariate time series with optional input features.
//!
//! Lexicon: `AdvanceTime` (seals the current column), `AddTS(v)` carrying the value of
//! variable `v` in the current column, `AddFeature(f)` carrying input feature `f`, and
//! `eos`. Within a column the variables come in any order; `AdvanceTime` is admissible
//! only once the column is complete. Input features may be interleaved anywhere.

use std::collections::{BTreeMap, BTreeSet};

use crate::backend::{check_bound, factorial, permutations, Cursor, StateMachine, StructureBackend};
use crate::error::{Error, Result};
use crate::lexicon::{Alphabet, LexiconElement, Serialization, Symbol};
use crate::measure::{MeasureMode, SamplingMeasure};
use crate::state::{BackendTag, StateKey, StateReader, StateWriter};

use super::{mismatch, SeriesInstance, StructureInstance};

pub const ADVANCE_TIME: &str = "AdvanceTime";

pub fn ts_name(variable: &str) -> String {
    format!("AddTS({variable})")
}

pub fn feature_name(feature: &str) -> String {
    format!("AddFeature({feature})")
}

/// `{AdvanceTime} ∪ {AddTS(v)} ∪ {AddFeature(f)} ∪ {eos}`.
pub fn series_alphabet(variables: &[String], features: &[String]) -> Result<Alphabet> {
    let mut seen = BTreeSet::new();
    for n in variables {
        if !seen.insert(n) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    let mut seen = BTreeSet::new();
    for n in features {
        if !seen.insert(n) {
            return Err(Error::DuplicateName(n.clone()));
        }
    }
    let entries = std::iter::once((ADVANCE_TIME.to_string(), false))
        .chain(variables.iter().map(|v| (ts_name(v), true)))
        .chain(features.iter().map(|f| (feature_name(f), true)));
    Alphabet::new(entries)
}

pub struct SeriesBackend {
    alphabet: Alphabet,
    variables: Vec<String>,
    features: Vec<String>,
    advance: Symbol,
}

type Entry = (Symbol, u64);

#[derive(Clone, Debug)]
pub(crate) struct SeriesState {
    features: BTreeMap<Symbol, u64>,
    sealed: Vec<Vec<Entry>>,
    current: BTreeMap<Symbol, u64>,
    ended: bool,
}

impl SeriesBackend {
    pub fn new(mut variables: Vec<String>, mut features: Vec<String>) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidInstance("series needs at least one variable".into()));
        }
        variables.sort();
        features.sort();
        let alphabet = series_alphabet(&variables, &features)?;
        let advance = alphabet.symbol(ADVANCE_TIME)?;
        Ok(SeriesBackend { alphabet, variables, features, advance })
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    fn k(&self) -> usize {
        self.variables.len()
    }

    fn is_ts(&self, s: Symbol) -> bool {
        (1..=self.k()).contains(&s.index())
    }

    fn is_feature(&self, s: Symbol) -> bool {
        s.index() > self.k() && s != self.alphabet.eos()
    }

    fn instance<'a>(&self, x: &'a StructureInstance) -> Result<&'a SeriesInstance> {
        let s = match x {
            StructureInstance::Series(s) => s,
            other => return Err(mismatch("series", other)),
        };
        if s.variables() != self.variables.as_slice() {
            return Err(Error::InvalidInstance("series variables differ from the backend".into()));
        }
        Ok(s)
    }

    fn feature_elements(&self, s: &SeriesInstance) -> Result<Vec<LexiconElement>> {
        s.features()
            .iter()
            .map(|(f, &v)| Ok(LexiconElement::valued(self.alphabet.symbol(&feature_name(f))?, v)))
            .collect()
    }

    fn ts(&self, row: usize, value: f64) -> LexiconElement {
        LexiconElement::valued(Symbol(row as u32 + 1), value)
    }
}

impl StateMachine for SeriesBackend {
    type State = SeriesState;

    fn tag(&self) -> BackendTag {
        BackendTag::Series
    }

    fn init(&self) -> SeriesState {
        SeriesState {
            features: BTreeMap::new(),
            sealed: Vec::new(),
            current: BTreeMap::new(),
            ended: false,
        }
    }

    fn step(&self, s: &mut SeriesState, e: &LexiconElement) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTransition(m));
        if s.ended {
            return bad("element after eos".into());
        }
        let sym = e.symbol;
        let bits = e.embedded_value().to_bits();
        if self.is_ts(sym) {
            if s.current.insert(sym, bits).is_some() {
                return bad(format!("`{}` repeated within a time step", self.alphabet.name(sym)));
            }
        } else if self.is_feature(sym) {
            if s.features.insert(sym, bits).is_some() {
                return bad(format!("feature `{}` repeated", self.alphabet.name(sym)));
            }
        } else if s.current.len() != self.k() {
            return bad("time step closed before all variables were emitted".into());
        } else if sym == self.advance {
            s.sealed.push(std::mem::take(&mut s.current).into_iter().collect());
        } else {
            s.ended = true;
        }
        Ok(())
    }

    fn encode(&self, s: &SeriesState) -> Vec<u8> {
        let mut w = StateWriter::new();
        let put = |w: &mut StateWriter, m: &mut dyn Iterator<Item = Entry>, n: usize| {
            w.u32(n as u32);
            for (sym, bits) in m {
                w.u32(sym.0).f64(f64::from_bits(bits));
            }
        };
        w.u8(s.ended as u8);
        put(&mut w, &mut s.features.iter().map(|(a, b)| (*a, *b)), s.features.len());
        w.u32(s.sealed.len() as u32);
        for col in &s.sealed {
            put(&mut w, &mut col.iter().copied(), col.len());
        }
        put(&mut w, &mut s.current.iter().map(|(a, b)| (*a, *b)), s.current.len());
        w.finish()
    }

    fn decode(&self, payload: &[u8]) -> Result<SeriesState> {
        let mut r = StateReader::new(payload);
        fn entries(r: &mut StateReader) -> Result<Vec<Entry>> {
            let n = r.u32()?;
            (0..n).map(|_| Ok((Symbol(r.u32()?), r.f64()?.to_bits()))).collect()
        }
        let ended = r.u8()? != 0;
        let features = entries(&mut r)?.into_iter().collect();
        let n = r.u32()?;
        let sealed = (0..n).map(|_| entries(&mut r)).collect::<Result<_>>()?;
        let current = entries(&mut r)?.into_iter().collect();
        r.finish()?;
        Ok(SeriesState { features, sealed, current, ended })
    }
}

struct SeriesCursor<'a> {
    backend: &'a SeriesBackend,
    x: &'a SeriesInstance,
    features: BTreeSet<LexiconElement>,
    col: usize,
    col_remaining: BTreeSet<usize>,
    ended: bool,
    position: usize,
}

impl Cursor for SeriesCursor<'_> {
    fn candidates(&self) -> Vec<LexiconElement> {
        if self.ended {
            return vec![];
        }
        let b = self.backend;
        let mut out: Vec<LexiconElement> = Vec::new();
        if !self.col_remaining.is_empty() {
            out.extend(self.col_remaining.iter().map(|&r| b.ts(r, self.x.values()[r][self.col])));
        } else if self.col + 1 < self.x.l() {
            out.push(LexiconElement::bare(b.advance));
        }
        out.extend(self.features.iter().copied());
        if out.is_empty() {
            out.push(LexiconElement::bare(b.alphabet.eos()));
        }
        out.sort();
        out
    }

    fn advance(&mut self, e: &LexiconElement) -> Result<()> {
        if !self.candidates().contains(e) {
            return Err(Error::DeadEnd { position: self.position });
        }
        let b = self.backend;
        if b.is_ts(e.symbol) {
            self.col_remaining.remove(&(e.symbol.index() - 1));
        } else if b.is_feature(e.symbol) {
            self.features.remove(e);
        } else if e.symbol == b.advance {
            self.col += 1;
            self.col_remaining = (0..self.x.k()).collect();
        } else {
            self.ended = true;
        }
        self.position += 1;
        Ok(())
    }
}

impl StructureBackend for SeriesBackend {
    fn tag(&self) -> BackendTag {
        BackendTag::Series
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
        let malformed = |position: usize, reason: String| Error::MalformedSerialization { position, reason };
        let mut features = BTreeMap::new();
        let mut columns: Vec<Vec<Option<f64>>> = vec![vec![None; self.k()]];
        for (i, e) in a.elements.iter().enumerate() {
            let col = columns.last_mut().unwrap();
            if self.is_ts(e.symbol) {
                let slot = &mut col[e.symbol.index() - 1];
                if slot.is_some() {
                    return Err(malformed(i, format!("`{}` repeated within a time step", self.alphabet.name(e.symbol))));
                }
                *slot = e.value;
            } else if self.is_feature(e.symbol) {
                let name = self.alphabet.name(e.symbol);
                let f = name["AddFeature(".len()..name.len() - 1].to_string();
                if features.insert(f, e.value.unwrap()).is_some() {
                    return Err(malformed(i, format!("feature `{name}` repeated")));
                }
            } else if col.iter().any(Option::is_none) {
                return Err(malformed(i, "time step closed before all variables were emitted".into()));
            } else if e.symbol == self.advance {
                columns.push(vec![None; self.k()]);
            }
        }
        let values: Vec<Vec<f64>> = (0..self.k())
            .map(|r| columns.iter().map(|c| c[r].unwrap()).collect())
            .collect();
        Ok(StructureInstance::Series(SeriesInstance::new(features, self.variables.clone(), values)?))
    }

    fn serialization_count(&self, x: &StructureInstance) -> Result<u128> {
        let s = self.instance(x)?;
        let (k, l, d) = (s.k(), s.l(), s.features().len());
        let y_len = (l * k + l - 1) as u128;
        let mut count = factorial(k);
        for _ in 1..l {
            count = count.saturating_mul(factorial(k));
        }
        // interleavings of d ordered features with the Y stream: (L+d)!/L!
        for i in 1..=d as u128 {
            count = count.saturating_mul(y_len + i);
        }
        Ok(count)
    }

    fn enumerate_serializations(
        &self,
        x: &StructureInstance,
        bound: usize,
    ) -> Result<Vec<Serialization>> {
        check_bound(self.serialization_count(x)?, bound)?;
        let s = self.instance(x)?;
        let rows: Vec<usize> = (0..s.k()).collect();
        let row_orders = permutations(&rows);
        let mut ys: Vec<Vec<LexiconElement>> = vec![vec![]];
        for col in 0..s.l() {
            let mut next = Vec::new();
            for y in &ys {
                for order in &row_orders {
                    let mut y = y.clone();
                    if col > 0 {
                        y.push(LexiconElement::bare(self.advance));
                    }
                    y.extend(order.iter().map(|&r| self.ts(r, s.values()[r][col])));
                    next.push(y);
                }
            }
            ys = next;
        }
        let feats = permutations(&self.feature_elements(s)?);
        let d = s.features().len();
        let total = ys[0].len() + d;
        let slots = combinations(total, d);
        let eos = LexiconElement::bare(self.alphabet.eos());
        let mut out = Vec::new();
        for y in &ys {
            for f in &feats {
                for positions in &slots {
                    let mut seq = Vec::with_capacity(total + 1);
                    let (mut yi, mut fi) = (0, 0);
                    for p in 0..total {
                        if fi < d && positions[fi] == p {
                            seq.push(f[fi]);
                            fi += 1;
                        } else {
                            seq.push(y[yi]);
                            yi += 1;
                        }
                    }
                    seq.push(eos);
                    out.push(Serialization::new(seq));
                }
            }
        }
        Ok(out)
    }

    fn cursor<'a>(&'a self, x: &'a StructureInstance) -> Result<Box<dyn Cursor + 'a>> {
        let s = self.instance(x)?;
        Ok(Box::new(SeriesCursor {
            backend: self,
            x: s,
            features: self.feature_elements(s)?.into_iter().collect(),
            col: 0,
            col_remaining: (0..s.k()).collect(),
            ended: false,
            position: 0,
        }))
    }

    fn is_conditioning(&self, e: &LexiconElement) -> bool {
        self.is_feature(e.symbol)
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

/// All increasing `r`-subsets of `0..n`.
fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, r, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn series(features: &[(&str, f64)], values: Vec<Vec<f64>>) -> StructureInstance {
        let vars = (1..=values.len()).map(|i| format!("v{i}")).collect();
        StructureInstance::Series(
            SeriesInstance::new(
                features.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                vars,
                values,
            )
            .unwrap(),
        )
    }

    #[test]
    fn alphabet_sizes() {
        assert_eq!(series_alphabet(&names(&["v1", "v2"]), &[]).unwrap().len(), 4);
        let f: Vec<String> = (0..9).map(|i| format!("x{i}")).collect();
        assert_eq!(series_alphabet(&names(&["y1", "y2", "y3"]), &f).unwrap().len(), 14);
        assert_eq!(
            series_alphabet(&names(&["v", "v"]), &[]).unwrap_err(),
            Error::DuplicateName("v".into())
        );
        let a = series_alphabet(&names(&["v1"]), &names(&["f"])).unwrap();
        assert!(!a.is_valued(a.symbol(ADVANCE_TIME).unwrap()));
        assert!(a.is_valued(a.symbol("AddTS(v1)").unwrap()));
        assert!(a.is_valued(a.symbol("AddFeature(f)").unwrap()));
        assert!(!a.is_valued(a.eos()));
    }

    #[test]
    fn advance_time_waits_for_complete_column() {
        let b = SeriesBackend::new(names(&["v1", "v2"]), vec![]).unwrap();
        let x = series(&[], vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut c = b.cursor(&x).unwrap();
        let v1 = b.ts(0, 1.0);
        c.advance(&v1).unwrap();
        assert_eq!(c.candidates(), vec![b.ts(1, 3.0)]);
        c.advance(&b.ts(1, 3.0)).unwrap();
        assert_eq!(c.candidates(), vec![LexiconElement::bare(b.advance)]);
    }

    #[test]
    fn enumeration_matches_count_and_round_trips() {
        let b = SeriesBackend::new(names(&["v1", "v2"]), names(&["f"])).unwrap();
        let x = series(&[("f", 0.5)], vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let all = b.enumerate_serializations(&x, 10_000).unwrap();
        // (2!)^2 column orders, 5 Y tokens, one feature in 6 slots
        assert_eq!(all.len(), 24);
        assert_eq!(b.serialization_count(&x).unwrap(), 24);
        for a in &all {
            assert_eq!(b.deserialize(a).unwrap(), x);
            let adv = a.elements.iter().filter(|e| e.symbol == b.advance).count();
            assert_eq!(adv, 1);
        }
        let distinct: BTreeSet<_> = all.iter().map(|a| a.elements.clone()).collect();
        assert_eq!(distinct.len(), all.len());
    }

    #[test]
    fn interleaved_columns_share_state() {
        let b = SeriesBackend::new(names(&["v1", "v2"]), vec![]).unwrap();
        let s1 = b.replay_states(&[b.ts(0, 1.0), b.ts(1, 3.0)]).unwrap();
        let s2 = b.replay_states(&[b.ts(1, 3.0), b.ts(0, 1.0)]).unwrap();
        assert_eq!(s1[2], s2[2]);
        let s3 = b.replay_states(&[b.ts(1, 3.0), b.ts(0, 1.5)]).unwrap();
        assert_ne!(s1[2], s3[2]);
    }

    #[test]
    fn malformed_series() {
        let b = SeriesBackend::new(names(&["v1", "v2"]), vec![]).unwrap();
        let eos = LexiconElement::bare(b.alphabet.eos());
        let adv = LexiconElement::bare(b.advance);
        for bad in [
            vec![b.ts(0, 1.0), eos],
            vec![b.ts(0, 1.0), b.ts(0, 1.0), b.ts(1, 1.0), eos],
            vec![b.ts(0, 1.0), adv, b.ts(1, 1.0), eos],
            vec![eos],
        ] {
            assert!(matches!(
                b.deserialize(&Serialization::new(bad)),
                Err(Error::MalformedSerialization { .. })
            ));
        }
    }
}
