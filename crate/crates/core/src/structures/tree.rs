//! Rooted labelled trees, serialized depth first: a node label, then, for internal
//! nodes, `(`, the children, `)`. Leaves carry no parentheses, so the tree `A(B, C)`
//! serializes as `[A, (, B, C, ), eos]`. Ordered trees have exactly one serialization;
//! unordered trees have one per distinct sibling ordering.

use std::collections::{BTreeSet, HashMap};

use crate::backend::{check_bound, factorial, permutations, Cursor, StateMachine, StructureBackend};
use crate::error::{Error, Result};
use crate::lexicon::{Alphabet, LexiconElement, Serialization, Symbol};
use crate::measure::{MeasureMode, SamplingMeasure};
use crate::state::{BackendTag, StateKey, StateReader, StateWriter};

use super::{mismatch, StructureInstance, TreeInstance, TreeNode};

pub const OPEN: &str = "(";
pub const CLOSE: &str = ")";

pub struct TreeBackend {
    alphabet: Alphabet,
    ordered: bool,
    open: Symbol,
    close: Symbol,
}

/// One node under construction. The outermost frame is a virtual root holding at most
/// one child (the tree root).
#[derive(Clone, Debug)]
pub(crate) struct Frame {
    label: Option<Symbol>,
    opened: bool,
    children: Vec<Vec<u8>>,
}

/// Partial tree: the path of open nodes, each with the canonical encodings of its
/// completed children. A frame that is not yet opened is the last emitted label, whose
/// leaf/internal status is decided by the next token.
#[derive(Clone, Debug)]
pub(crate) struct TreeState {
    frames: Vec<Frame>,
    ended: bool,
}

fn leaf_code(label: Symbol) -> Vec<u8> {
    let mut w = StateWriter::new();
    w.u8(0).u32(label.0);
    w.finish()
}

fn node_code(label: Symbol, children: &[Vec<u8>]) -> Vec<u8> {
    let mut w = StateWriter::new();
    w.u8(1).u32(label.0).u32(children.len() as u32);
    for c in children {
        w.bytes(c);
    }
    w.finish()
}

impl TreeBackend {
    pub fn new<I, S>(labels: I, ordered: bool) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut entries: Vec<(String, bool)> = Vec::new();
        for l in labels {
            let l = l.into();
            if l == OPEN || l == CLOSE {
                return Err(Error::InvalidInstance(format!("reserved tree label `{l}`")));
            }
            entries.push((l, false));
        }
        entries.push((OPEN.into(), false));
        entries.push((CLOSE.into(), false));
        let alphabet = Alphabet::new(entries)?;
        let open = alphabet.symbol(OPEN)?;
        let close = alphabet.symbol(CLOSE)?;
        Ok(TreeBackend { alphabet, ordered, open, close })
    }

    pub fn ordered(&self) -> bool {
        self.ordered
    }

    fn instance<'a>(&self, x: &'a StructureInstance) -> Result<&'a TreeInstance> {
        match x {
            StructureInstance::Tree(t) if t.ordered() == self.ordered => Ok(t),
            StructureInstance::Tree(_) => Err(Error::InvalidInstance(
                "tree ordering flag differs from the backend".into(),
            )),
            other => Err(mismatch("tree", other)),
        }
    }

    fn label(&self, name: &str) -> Result<Symbol> {
        let s = self.alphabet.symbol(name)?;
        if s == self.open || s == self.close || s == self.alphabet.eos() {
            return Err(Error::InvalidInstance(format!("reserved tree label `{name}`")));
        }
        Ok(s)
    }

    fn is_label(&self, s: Symbol) -> bool {
        s != self.open && s != self.close && s != self.alphabet.eos()
    }

    fn push_child(&self, frame: &mut Frame, code: Vec<u8>) {
        if self.ordered {
            frame.children.push(code);
        } else {
            let at = frame.children.partition_point(|c| c <= &code);
            frame.children.insert(at, code);
        }
    }

    /// Finalizes a pending (unopened) top frame as a leaf.
    fn close_pending(&self, s: &mut TreeState) {
        if let Some(top) = s.frames.last() {
            if !top.opened {
                let label = top.label.expect("virtual root is always opened");
                s.frames.pop();
                let parent = s.frames.last_mut().expect("virtual root present");
                self.push_child(parent, leaf_code(label));
            }
        }
    }

    fn count(&self, n: &TreeNode) -> u128 {
        let mut c = n.children.iter().map(|c| self.count(c)).fold(1u128, u128::saturating_mul);
        if !self.ordered && !n.children.is_empty() {
            let mut arrangements = factorial(n.children.len());
            // children are sorted, so identical subtrees are adjacent
            let mut run = 1;
            for w in n.children.windows(2) {
                if w[0] == w[1] {
                    run += 1;
                } else {
                    arrangements /= factorial(run);
                    run = 1;
                }
            }
            arrangements /= factorial(run);
            c = c.saturating_mul(arrangements);
        }
        c
    }

    fn enumerate_node(&self, n: &TreeNode) -> Result<BTreeSet<Vec<LexiconElement>>> {
        let label = LexiconElement::bare(self.label(&n.label)?);
        let mut out = BTreeSet::new();
        if n.children.is_empty() {
            out.insert(vec![label]);
            return Ok(out);
        }
        let child_sets: Vec<Vec<Vec<LexiconElement>>> = n
            .children
            .iter()
            .map(|c| self.enumerate_node(c).map(|s| s.into_iter().collect()))
            .collect::<Result<_>>()?;
        let idx: Vec<usize> = (0..n.children.len()).collect();
        let orders = if self.ordered { vec![idx] } else { permutations(&idx) };
        for order in orders {
            let mut partial: Vec<Vec<LexiconElement>> =
                vec![vec![label, LexiconElement::bare(self.open)]];
            for &ci in &order {
                let mut next = Vec::with_capacity(partial.len() * child_sets[ci].len());
                for p in &partial {
                    for s in &child_sets[ci] {
                        let mut q = p.clone();
                        q.extend_from_slice(s);
                        next.push(q);
                    }
                }
                partial = next;
            }
            for mut p in partial {
                p.push(LexiconElement::bare(self.close));
                out.insert(p);
            }
        }
        Ok(out)
    }
}

impl StateMachine for TreeBackend {
    type State = TreeState;

    fn tag(&self) -> BackendTag {
        if self.ordered {
            BackendTag::OrderedTree
        } else {
            BackendTag::UnorderedTree
        }
    }

    fn init(&self) -> TreeState {
        TreeState {
            frames: vec![Frame { label: None, opened: true, children: vec![] }],
            ended: false,
        }
    }

    fn step(&self, s: &mut TreeState, e: &LexiconElement) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTransition(m.to_string()));
        if s.ended {
            return bad("element after eos");
        }
        let sym = e.symbol;
        if sym == self.open {
            match s.frames.last_mut() {
                Some(top) if !top.opened => top.opened = true,
                _ => return bad("`(` must follow a node label"),
            }
        } else if sym == self.close {
            self.close_pending(s);
            if s.frames.len() < 2 {
                return bad("unbalanced `)`");
            }
            let top = s.frames.pop().unwrap();
            if top.children.is_empty() {
                return bad("empty child list");
            }
            let code = node_code(top.label.unwrap(), &top.children);
            let parent = s.frames.last_mut().unwrap();
            self.push_child(parent, code);
        } else if sym == self.alphabet.eos() {
            self.close_pending(s);
            if s.frames.len() != 1 {
                return bad("eos with open nodes");
            }
            s.ended = true;
        } else {
            self.close_pending(s);
            if s.frames.len() == 1 && !s.frames[0].children.is_empty() {
                return bad("second root");
            }
            s.frames.push(Frame { label: Some(sym), opened: false, children: vec![] });
        }
        Ok(())
    }

    fn encode(&self, s: &TreeState) -> Vec<u8> {
        let mut w = StateWriter::new();
        w.u8(s.ended as u8).u32(s.frames.len() as u32);
        for f in &s.frames {
            w.u32(f.label.map_or(u32::MAX, |l| l.0))
                .u8(f.opened as u8)
                .u32(f.children.len() as u32);
            for c in &f.children {
                w.bytes(c);
            }
        }
        w.finish()
    }

    fn decode(&self, payload: &[u8]) -> Result<TreeState> {
        let mut r = StateReader::new(payload);
        let ended = r.u8()? != 0;
        let n = r.u32()?;
        let mut frames = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let l = r.u32()?;
            let opened = r.u8()? != 0;
            let k = r.u32()?;
            let children = (0..k).map(|_| r.bytes()).collect::<Result<_>>()?;
            frames.push(Frame { label: (l != u32::MAX).then_some(Symbol(l)), opened, children });
        }
        r.finish()?;
        if frames.is_empty() {
            return Err(Error::Format("tree state without root frame".into()));
        }
        Ok(TreeState { frames, ended })
    }
}

/// Interned subtree shape: label plus child shape ids (sorted when unordered).
struct Shape {
    label: Symbol,
    children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Level {
    /// `None` is the virtual root.
    shape: Option<usize>,
    opened: bool,
    remaining: Vec<usize>,
}

/// Nondeterministic matcher of a prefix against the instance. Identical sibling
/// subtrees share a shape id, so equivalent matches collapse in the position set.
struct TreeCursor<'a> {
    backend: &'a TreeBackend,
    shapes: Vec<Shape>,
    positions: BTreeSet<Vec<Level>>,
    ended: bool,
    position: usize,
}

impl<'a> TreeCursor<'a> {
    fn new(backend: &'a TreeBackend, x: &TreeInstance) -> Result<Self> {
        let mut shapes = Vec::new();
        let mut intern: HashMap<(Symbol, Vec<usize>), usize> = HashMap::new();
        fn visit(
            b: &TreeBackend,
            n: &TreeNode,
            shapes: &mut Vec<Shape>,
            intern: &mut HashMap<(Symbol, Vec<usize>), usize>,
        ) -> Result<usize> {
            let label = b.label(&n.label)?;
            let mut children = n
                .children
                .iter()
                .map(|c| visit(b, c, shapes, intern))
                .collect::<Result<Vec<_>>>()?;
            if !b.ordered {
                children.sort();
            }
            let key = (label, children.clone());
            Ok(*intern.entry(key).or_insert_with(|| {
                shapes.push(Shape { label, children });
                shapes.len() - 1
            }))
        }
        let root: Vec<usize> = match x.root() {
            Some(r) => vec![visit(backend, r, &mut shapes, &mut intern)?],
            None => vec![],
        };
        let start = vec![Level { shape: None, opened: true, remaining: root }];
        Ok(TreeCursor {
            backend,
            shapes,
            positions: std::iter::once(start).collect(),
            ended: false,
            position: 0,
        })
    }

    fn next_of(&self, pos: &[Level], out: &mut BTreeSet<LexiconElement>) {
        let b = self.backend;
        let top = pos.last().unwrap();
        if !top.opened {
            out.insert(LexiconElement::bare(b.open));
        } else if !top.remaining.is_empty() {
            if b.ordered {
                out.insert(LexiconElement::bare(self.shapes[top.remaining[0]].label));
            } else {
                for &c in &top.remaining {
                    out.insert(LexiconElement::bare(self.shapes[c].label));
                }
            }
        } else if top.shape.is_none() {
            out.insert(LexiconElement::bare(b.alphabet.eos()));
        } else {
            out.insert(LexiconElement::bare(b.close));
        }
    }

    fn step_position(&self, pos: &[Level], sym: Symbol, out: &mut BTreeSet<Vec<Level>>) {
        let b = self.backend;
        let top = pos.last().unwrap();
        if sym == b.open {
            if !top.opened {
                let mut p = pos.to_vec();
                let t = p.last_mut().unwrap();
                t.opened = true;
                t.remaining = self.shapes[t.shape.unwrap()].children.clone();
                out.insert(p);
            }
        } else if sym == b.close {
            if top.opened && top.remaining.is_empty() && top.shape.is_some() {
                out.insert(pos[..pos.len() - 1].to_vec());
            }
        } else if sym == b.alphabet.eos() {
            if pos.len() == 1 && top.remaining.is_empty() {
                out.insert(pos.to_vec());
            }
        } else if top.opened {
            let choices: Vec<usize> = if b.ordered {
                top.remaining.first().copied().into_iter().collect()
            } else {
                let mut v = top.remaining.clone();
                v.dedup();
                v
            };
            for c in choices.into_iter().filter(|&c| self.shapes[c].label == sym) {
                let mut p = pos.to_vec();
                let t = p.last_mut().unwrap();
                let i = t.remaining.iter().position(|&r| r == c).unwrap();
                t.remaining.remove(i);
                if !self.shapes[c].children.is_empty() {
                    p.push(Level { shape: Some(c), opened: false, remaining: vec![] });
                }
                out.insert(p);
            }
        }
    }
}

impl Cursor for TreeCursor<'_> {
    fn candidates(&self) -> Vec<LexiconElement> {
        if self.ended {
            return vec![];
        }
        let mut out = BTreeSet::new();
        for p in &self.positions {
            self.next_of(p, &mut out);
        }
        out.into_iter().collect()
    }

    fn advance(&mut self, e: &LexiconElement) -> Result<()> {
        if self.ended || e.value.is_some() {
            return Err(Error::DeadEnd { position: self.position });
        }
        let mut next = BTreeSet::new();
        for p in &self.positions {
            self.step_position(p, e.symbol, &mut next);
        }
        if next.is_empty() {
            return Err(Error::DeadEnd { position: self.position });
        }
        self.positions = next;
        self.ended = e.symbol == self.backend.alphabet.eos();
        self.position += 1;
        Ok(())
    }
}

impl StructureBackend for TreeBackend {
    fn tag(&self) -> BackendTag {
        StateMachine::tag(self)
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
        let toks = &a.elements;
        let malformed = |position: usize, reason: &str| Error::MalformedSerialization {
            position,
            reason: reason.to_string(),
        };
        fn parse(
            b: &TreeBackend,
            toks: &[LexiconElement],
            pos: &mut usize,
        ) -> std::result::Result<TreeNode, (usize, &'static str)> {
            let t = toks[*pos].symbol;
            if !b.is_label(t) {
                return Err((*pos, "expected a node label"));
            }
            *pos += 1;
            let mut node = TreeNode::leaf(b.alphabet.name(t));
            if toks[*pos].symbol == b.open {
                *pos += 1;
                loop {
                    let s = toks[*pos].symbol;
                    if s == b.close {
                        if node.children.is_empty() {
                            return Err((*pos, "empty child list"));
                        }
                        *pos += 1;
                        break;
                    }
                    if s == b.alphabet.eos() {
                        return Err((*pos, "unbalanced parentheses"));
                    }
                    node.children.push(parse(b, toks, pos)?);
                }
            }
            Ok(node)
        }
        let mut pos = 0;
        let root = if toks[0].symbol == self.alphabet.eos() {
            None
        } else {
            Some(parse(self, toks, &mut pos).map_err(|(p, r)| malformed(p, r))?)
        };
        if toks[pos].symbol != self.alphabet.eos() {
            return Err(malformed(pos, "trailing tokens after the root"));
        }
        Ok(StructureInstance::Tree(TreeInstance::new(root, self.ordered)))
    }

    fn serialization_count(&self, x: &StructureInstance) -> Result<u128> {
        Ok(self.instance(x)?.root().map_or(1, |r| self.count(r)))
    }

    fn enumerate_serializations(
        &self,
        x: &StructureInstance,
        bound: usize,
    ) -> Result<Vec<Serialization>> {
        check_bound(self.serialization_count(x)?, bound)?;
        let eos = LexiconElement::bare(self.alphabet.eos());
        let seqs = match self.instance(x)?.root() {
            None => vec![vec![eos]],
            Some(r) => self
                .enumerate_node(r)?
                .into_iter()
                .map(|mut s| {
                    s.push(eos);
                    s
                })
                .collect(),
        };
        Ok(seqs.into_iter().map(Serialization::new).collect())
    }

    fn cursor<'a>(&'a self, x: &'a StructureInstance) -> Result<Box<dyn Cursor + 'a>> {
        Ok(Box::new(TreeCursor::new(self, self.instance(x)?)?))
    }

    fn default_measure(&self, _mode: MeasureMode) -> SamplingMeasure {
        // ordered trees have a single candidate at every step, so uniform is exact
        SamplingMeasure::Uniform
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backend(ordered: bool) -> TreeBackend {
        TreeBackend::new(["A", "B", "C", "D"], ordered).unwrap()
    }

    fn toks(b: &TreeBackend, s: &str) -> Vec<LexiconElement> {
        s.split_whitespace().map(|n| b.alphabet.element(n, None).unwrap()).collect()
    }

    fn abc(ordered: bool) -> StructureInstance {
        StructureInstance::Tree(TreeInstance::new(
            Some(TreeNode::node("A", vec![TreeNode::leaf("B"), TreeNode::leaf("C")])),
            ordered,
        ))
    }

    #[test]
    fn deserialize_simple_tree() {
        for ordered in [true, false] {
            let b = backend(ordered);
            let a = Serialization::new(toks(&b, "A ( B C ) <eos>"));
            assert_eq!(b.deserialize(&a).unwrap(), abc(ordered));
        }
    }

    #[test]
    fn deserialize_errors() {
        let b = backend(true);
        for bad in ["( A ) <eos>", "A ( ) <eos>", "A ( B <eos>", "A B <eos>", "A ) <eos>"] {
            let a = Serialization::new(toks(&b, bad));
            assert!(
                matches!(b.deserialize(&a), Err(Error::MalformedSerialization { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(backend(false).enumerate_serializations(&abc(false), 10).unwrap().len(), 2);
        assert_eq!(backend(true).enumerate_serializations(&abc(true), 10).unwrap().len(), 1);
        let empty = StructureInstance::Tree(TreeInstance::new(None, false));
        assert_eq!(backend(false).enumerate_serializations(&empty, 1).unwrap().len(), 1);
    }

    #[test]
    fn duplicate_siblings_collapse() {
        let b = backend(false);
        let x = StructureInstance::Tree(TreeInstance::new(
            Some(TreeNode::node(
                "A",
                vec![
                    TreeNode::node("B", vec![TreeNode::leaf("C"), TreeNode::leaf("D")]),
                    TreeNode::node("B", vec![TreeNode::leaf("C"), TreeNode::leaf("D")]),
                ],
            )),
            false,
        ));
        let all = b.enumerate_serializations(&x, 100).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(b.serialization_count(&x).unwrap(), 4);
    }

    #[test]
    fn state_before_sibling_holds_parent_and_seen_siblings() {
        let b = backend(true);
        let states = b.replay_states(&toks(&b, "A ( B C ) <eos>")).unwrap();
        // before emitting C: three elements consumed
        let s = b.decode(&states[3].payload).unwrap();
        assert_eq!(s.frames.len(), 3);
        assert_eq!(s.frames[1].label, Some(b.alphabet.symbol("A").unwrap()));
        assert!(s.frames[1].opened);
        assert_eq!(s.frames[2].label, Some(b.alphabet.symbol("B").unwrap()));
        // after C, B has been sealed as a completed sibling
        let s = b.decode(&states[4].payload).unwrap();
        assert_eq!(s.frames[1].children, vec![leaf_code(b.alphabet.symbol("B").unwrap())]);
    }

    #[test]
    fn ordered_siblings_do_not_commute() {
        let b = backend(true);
        let s = b.replay_states(&toks(&b, "A (")).unwrap().pop().unwrap();
        let e = |n| b.alphabet.element(n, None).unwrap();
        let bc = b.transition(&b.transition(&s, &e("B")).unwrap(), &e("C")).unwrap();
        let cb = b.transition(&b.transition(&s, &e("C")).unwrap(), &e("B")).unwrap();
        assert_ne!(bc, cb);
        let u = backend(false);
        let s = u.replay_states(&toks(&u, "A (")).unwrap().pop().unwrap();
        let bcd = u.replay_states(&toks(&u, "A ( B C D")).unwrap();
        let cbd = u.replay_states(&toks(&u, "A ( C B D")).unwrap();
        assert_ne!(s, bcd[4]);
        assert_eq!(bcd[5], cbd[5]);
    }

    #[test]
    fn cursor_candidates() {
        let b = backend(false);
        let x = abc(false);
        let mut c = b.cursor(&x).unwrap();
        assert_eq!(c.candidates(), toks(&b, "A"));
        for t in toks(&b, "A (") {
            c.advance(&t).unwrap();
        }
        assert_eq!(c.candidates(), toks(&b, "B C"));
        c.advance(&toks(&b, "C")[0]).unwrap();
        assert_eq!(c.candidates(), toks(&b, "B"));
        assert!(c.advance(&toks(&b, ")")[0]).is_err());
    }
}
