//! Simple cycles, the residuum `(d, r)`, the infinitary test with its pump
//! cycle, the constants `A, C, D, D'` and Bezout combinations of effects.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::derivation::{required_input, terminals_of, Cycle, Derivation, IdGen, Tree};
use crate::grammar::{component_dag, Class, Gvas, Nt, Symbol};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CycleError {
    SearchCapExceeded(usize),
    NoCompleteDerivation(Nt),
    EmptyEffects,
    NotInfinitary,
    NotTopBranching,
}

impl fmt::Display for CycleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CycleError::SearchCapExceeded(c) => write!(f, "search cap {c} exceeded"),
            CycleError::NoCompleteDerivation(x) => write!(f, "nonterminal #{} has no complete derivation", x.0),
            CycleError::EmptyEffects => write!(f, "no effects given"),
            CycleError::NotInfinitary => write!(f, "grammar is not infinitary"),
            CycleError::NotTopBranching => write!(f, "top component is not branching"),
        }
    }
}

/// Search limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Caps {
    pub nodes: usize,
    pub values: usize,
}

impl Default for Caps {
    fn default() -> Caps {
        Caps { nodes: 64, values: 1 << 16 }
    }
}

/// Replaces the `k`-th leaf (left to right, counting only leaves labelled
/// `hole`) by `with`.
pub fn plug(t: &Tree, hole: Nt, k: usize, with: &Tree) -> Tree {
    fn go(t: &Tree, hole: Nt, k: &mut isize, with: &Tree) -> Tree {
        match t {
            Tree::Leaf(Symbol::Nt(x)) if *x == hole => {
                *k -= 1;
                if *k == -1 {
                    with.clone()
                } else {
                    t.clone()
                }
            }
            Tree::Leaf(_) => t.clone(),
            Tree::Node(x, l, r) => {
                if *k < 0 {
                    return t.clone();
                }
                let l2 = go(l, hole, k, with);
                let r2 = go(r, hole, k, with);
                Tree::Node(*x, Rc::new(l2), Rc::new(r2))
            }
        }
    }
    go(t, hole, &mut (k as isize), with)
}

/// `cycle` plugged into itself `n` times, then `inner` at the bottom.
pub fn pump(cycle: &Tree, hole: Nt, n: usize, inner: &Tree) -> Tree {
    let mut t = inner.clone();
    for _ in 0..n {
        t = plug(cycle, hole, 0, &t);
    }
    t
}

/// Terminal runs left and right of the unique nonterminal leaf `hole`.
pub fn sides(t: &Tree, hole: Nt) -> (Vec<i64>, Vec<i64>) {
    let y = t.yield_symbols();
    let pos = y.iter().position(|s| *s == Symbol::Nt(hole)).expect("hole present");
    (terminals_of(&y[..pos]), terminals_of(&y[pos + 1..]))
}

/// Smallest complete derivation of every nonterminal (by node count, ties by
/// rule order).
pub fn smallest_complete(g: &Gvas) -> Vec<Option<Rc<Tree>>> {
    let n = g.nt_count();
    let mut best: Vec<Option<(usize, Rc<Tree>)>> = vec![None; n];
    loop {
        let mut changed = false;
        for r in g.rules() {
            let part = |s: Symbol, best: &Vec<Option<(usize, Rc<Tree>)>>| match s {
                Symbol::T(_) => Some((1, Rc::new(Tree::Leaf(s)))),
                Symbol::Nt(y) => best[y.index()].clone(),
            };
            let (Some((sa, ta)), Some((sb, tb))) = (part(r.rhs[0], &best), part(r.rhs[1], &best)) else {
                continue;
            };
            let size = 1 + sa + sb;
            let x = r.lhs.index();
            if best[x].as_ref().is_none_or(|(s, _)| size < *s) {
                best[x] = Some((size, Rc::new(Tree::Node(r.lhs, ta, tb))));
                changed = true;
            }
        }
        if !changed {
            return best.into_iter().map(|b| b.map(|(_, t)| t)).collect();
        }
    }
}

/// Smallest `from`-derivation with exactly one nonterminal leaf, labelled
/// `to`, after at least one rule application; all other leaves terminal.
pub fn context(g: &Gvas, from: Nt, to: Nt) -> Option<Tree> {
    let small = smallest_complete(g);
    // ctx[y]: smallest y-tree whose single nonterminal leaf is `to`
    let n = g.nt_count();
    let mut ctx: Vec<Option<(usize, Rc<Tree>)>> = vec![None; n];
    let size_of = |t: &Rc<Tree>| t.size();
    loop {
        let mut changed = false;
        for r in g.rules() {
            for side in 0..2 {
                let (hole_sym, other) = (r.rhs[side], r.rhs[1 - side]);
                let Symbol::Nt(h) = hole_sym else { continue };
                let hole_tree = if h == to {
                    Some((1, Rc::new(Tree::Leaf(Symbol::Nt(to)))))
                } else {
                    ctx[h.index()].clone()
                };
                let Some((sh, th)) = hole_tree else { continue };
                let other_tree = match other {
                    Symbol::T(_) => Some(Rc::new(Tree::Leaf(other))),
                    Symbol::Nt(y) => small[y.index()].clone(),
                };
                let Some(to_tree) = other_tree else { continue };
                let size = 1 + sh + size_of(&to_tree);
                let x = r.lhs.index();
                if ctx[x].as_ref().is_none_or(|(s, _)| size < *s) {
                    let t = if side == 0 { Tree::Node(r.lhs, th, to_tree) } else { Tree::Node(r.lhs, to_tree, th) };
                    ctx[x] = Some((size, Rc::new(t)));
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    ctx[from.index()].as_ref().map(|(_, t)| (**t).clone())
}

/// Smallest `x`-derivation with exactly two nonterminal leaves, both `x`.
pub fn two_holes(g: &Gvas, x: Nt) -> Option<Tree> {
    let small = smallest_complete(g);
    let mut best: Option<Tree> = None;
    let hole = |y: Nt| -> Option<Tree> {
        if y == x {
            Some(Tree::Leaf(Symbol::Nt(x)))
        } else {
            context(g, y, x)
        }
    };
    // a rule z -> a b with both sides reaching x, entered from x by a context
    for r in g.rules() {
        let (Symbol::Nt(a), Symbol::Nt(b)) = (r.rhs[0], r.rhs[1]) else { continue };
        let (Some(ta), Some(tb)) = (hole(a), hole(b)) else { continue };
        let inner = Tree::Node(r.lhs, Rc::new(ta), Rc::new(tb));
        let outer = if r.lhs == x { Some(Tree::Leaf(Symbol::Nt(x))) } else { context(g, x, r.lhs) };
        let Some(outer) = outer else { continue };
        let t = plug(&outer, r.lhs, 0, &inner);
        let _ = &small;
        if best.as_ref().is_none_or(|b| t.size() < b.size()) {
            best = Some(t);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleSummary {
    pub nonterminal: Nt,
    pub left: i64,
    pub right: i64,
    pub global: i64,
    /// Smallest required input of the left part among the witnesses found.
    pub left_requirement: i64,
    pub witness: Cycle,
}

/// Per-key best witness: minimal required input, then size.
#[derive(Clone, Debug)]
struct Entry {
    req: i64,
    tree: Rc<Tree>,
}

fn better(a: &Entry, b: &Entry) -> bool {
    (a.req, a.tree.size()) < (b.req, b.tree.size())
}

struct SimpleSearch<'g> {
    g: &'g Gvas,
    caps: Caps,
    complete: BTreeMap<(Nt, u64), Rc<BTreeMap<i64, Entry>>>,
    partial: BTreeMap<(Nt, u64, Nt), Rc<BTreeMap<(i64, i64), Entry>>>,
}

impl<'g> SimpleSearch<'g> {
    fn new(g: &'g Gvas, caps: Caps) -> Self {
        SimpleSearch { g, caps, complete: BTreeMap::new(), partial: BTreeMap::new() }
    }

    fn insert<K: Ord>(&self, map: &mut BTreeMap<K, Entry>, k: K, e: Entry) -> Result<(), CycleError> {
        match map.get(&k) {
            Some(old) if !better(&e, old) => {}
            _ => {
                map.insert(k, e);
            }
        }
        if map.len() > self.caps.values {
            return Err(CycleError::SearchCapExceeded(self.caps.values));
        }
        Ok(())
    }

    fn sym_complete(&mut self, s: Symbol, forbid: u64) -> Result<Rc<BTreeMap<i64, Entry>>, CycleError> {
        match s {
            Symbol::T(t) => {
                let mut m = BTreeMap::new();
                m.insert(t, Entry { req: (-t).max(0), tree: Rc::new(Tree::Leaf(s)) });
                Ok(Rc::new(m))
            }
            Symbol::Nt(y) => self.complete(y, forbid),
        }
    }

    /// Simple complete `y`-derivations avoiding the labels in `forbid` on
    /// every path, one witness per effect.
    fn complete(&mut self, y: Nt, forbid: u64) -> Result<Rc<BTreeMap<i64, Entry>>, CycleError> {
        if forbid >> y.0 & 1 == 1 {
            return Ok(Rc::new(BTreeMap::new()));
        }
        if let Some(v) = self.complete.get(&(y, forbid)) {
            return Ok(v.clone());
        }
        let inner = forbid | 1 << y.0;
        let mut out = BTreeMap::new();
        let rules: Vec<usize> = self.g.rules_of(y).collect();
        for ri in rules {
            let (a, b) = (self.g.rules()[ri].rhs[0], self.g.rules()[ri].rhs[1]);
            let la = self.sym_complete(a, inner)?;
            if la.is_empty() {
                continue;
            }
            let lb = self.sym_complete(b, inner)?;
            for (&ea, xa) in la.iter() {
                for (&eb, xb) in lb.iter() {
                    let req = xa.req.max(xb.req - ea);
                    let tree = Rc::new(Tree::Node(y, xa.tree.clone(), xb.tree.clone()));
                    if tree.size() > self.caps.nodes {
                        return Err(CycleError::SearchCapExceeded(self.caps.nodes));
                    }
                    self.insert(&mut out, ea + eb, Entry { req, tree })?;
                }
            }
        }
        let v = Rc::new(out);
        self.complete.insert((y, forbid), v.clone());
        Ok(v)
    }

    /// Simple `y`-derivations whose only nonterminal leaf is `hole`, keyed by
    /// (left, right) effect; `req` is the left part's requirement.
    fn partial(&mut self, s: Symbol, forbid: u64, hole: Nt) -> Result<Rc<BTreeMap<(i64, i64), Entry>>, CycleError> {
        let Symbol::Nt(y) = s else { return Ok(Rc::new(BTreeMap::new())) };
        if forbid >> y.0 & 1 == 1 {
            return Ok(Rc::new(BTreeMap::new()));
        }
        if let Some(v) = self.partial.get(&(y, forbid, hole)) {
            return Ok(v.clone());
        }
        let mut out = BTreeMap::new();
        if y == hole {
            out.insert((0, 0), Entry { req: 0, tree: Rc::new(Tree::Leaf(Symbol::Nt(hole))) });
        } else {
            let inner = forbid | 1 << y.0;
            let rules: Vec<usize> = self.g.rules_of(y).collect();
            for ri in rules {
                let (a, b) = (self.g.rules()[ri].rhs[0], self.g.rules()[ri].rhs[1]);
                let pa = self.partial(a, inner, hole)?;
                if !pa.is_empty() {
                    let cb = self.sym_complete(b, inner)?;
                    for (&(l, r), xa) in pa.iter() {
                        for (&e, xb) in cb.iter() {
                            let tree = Rc::new(Tree::Node(y, xa.tree.clone(), xb.tree.clone()));
                            if tree.size() > self.caps.nodes {
                                return Err(CycleError::SearchCapExceeded(self.caps.nodes));
                            }
                            self.insert(&mut out, (l, r + e), Entry { req: xa.req, tree })?;
                        }
                    }
                }
                let ca = self.sym_complete(a, inner)?;
                if !ca.is_empty() {
                    let pb = self.partial(b, inner, hole)?;
                    for (&e, xa) in ca.iter() {
                        for (&(l, r), xb) in pb.iter() {
                            let tree = Rc::new(Tree::Node(y, xa.tree.clone(), xb.tree.clone()));
                            if tree.size() > self.caps.nodes {
                                return Err(CycleError::SearchCapExceeded(self.caps.nodes));
                            }
                            let req = xa.req.max(xb.req - e);
                            self.insert(&mut out, (e + l, r), Entry { req, tree })?;
                        }
                    }
                }
            }
        }
        let v = Rc::new(out);
        self.partial.insert((y, forbid, hole), v.clone());
        Ok(v)
    }

    /// Simple `x`-cycles: each subtree below the root is a simple
    /// derivation, the root label may recur in the sibling subtree.
    fn cycles(&mut self, x: Nt) -> Result<BTreeMap<(i64, i64), Entry>, CycleError> {
        let mut out = BTreeMap::new();
        let rules: Vec<usize> = self.g.rules_of(x).collect();
        for ri in rules {
            let (a, b) = (self.g.rules()[ri].rhs[0], self.g.rules()[ri].rhs[1]);
            let pa = self.partial(a, 0, x)?;
            if !pa.is_empty() {
                let cb = self.sym_complete(b, 0)?;
                for (&(l, r), xa) in pa.iter() {
                    for (&e, xb) in cb.iter() {
                        let tree = Rc::new(Tree::Node(x, xa.tree.clone(), xb.tree.clone()));
                        self.insert(&mut out, (l, r + e), Entry { req: xa.req, tree })?;
                    }
                }
            }
            let ca = self.sym_complete(a, 0)?;
            if !ca.is_empty() {
                let pb = self.partial(b, 0, x)?;
                for (&e, xa) in ca.iter() {
                    for (&(l, r), xb) in pb.iter() {
                        let tree = Rc::new(Tree::Node(x, xa.tree.clone(), xb.tree.clone()));
                        let req = xa.req.max(xb.req - e);
                        self.insert(&mut out, (e + l, r), Entry { req, tree })?;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Cycle value with the distinguished leaf located.
pub fn cycle_from_tree(t: &Tree, ids: &mut IdGen) -> Cycle {
    let d = Derivation::from_tree(t, ids);
    let x = t.label();
    let distinguished = d.leaves().into_iter().find(|&n| d.label(n) == x).expect("distinguished leaf");
    Cycle { derivation: d, distinguished }
}

/// Every simple cycle up to equal (nonterminal, left, right) effects.
pub fn simple_cycles(g: &Gvas) -> Result<Vec<CycleSummary>, CycleError> {
    simple_cycles_with(g, Caps::default())
}

pub fn simple_cycles_with(g: &Gvas, caps: Caps) -> Result<Vec<CycleSummary>, CycleError> {
    let mut s = SimpleSearch::new(g, caps);
    let mut out = Vec::new();
    let mut ids = IdGen::new();
    for x in g.nonterminals() {
        for ((l, r), e) in s.cycles(x)? {
            out.push(CycleSummary {
                nonterminal: x,
                left: l,
                right: r,
                global: l + r,
                left_requirement: e.req,
                witness: cycle_from_tree(&e.tree, &mut ids),
            });
        }
    }
    Ok(out)
}

/// Simple complete derivations of `x`, one per effect (minimal requirement).
pub fn simple_derivations(g: &Gvas, x: Nt, caps: Caps) -> Result<Vec<(i64, i64, Rc<Tree>)>, CycleError> {
    let mut s = SimpleSearch::new(g, caps);
    Ok(s.complete(x, 0)?.iter().map(|(&e, en)| (e, en.req, en.tree.clone())).collect())
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResiduumInfo {
    pub d: i64,
    /// Residue modulo `d`, or the exact effect when `d = 0`.
    pub r: BTreeMap<Nt, i64>,
}

impl ResiduumInfo {
    pub fn residue(&self, x: Nt) -> i64 {
        self.r[&x]
    }

    /// True when effect `e` is allowed for `x`.
    pub fn admits(&self, x: Nt, e: i64) -> bool {
        if self.d == 0 {
            e == self.r[&x]
        } else {
            (e - self.r[&x]).rem_euclid(self.d) == 0
        }
    }
}

pub fn residuum(g: &Gvas) -> Result<ResiduumInfo, CycleError> {
    let cycles = simple_cycles(g)?;
    let d = cycles.iter().fold(0, |acc, c| gcd(acc, c.global));
    let small = smallest_complete(g);
    let mut r = BTreeMap::new();
    for x in g.nonterminals() {
        let t = small[x.index()].as_ref().ok_or(CycleError::NoCompleteDerivation(x))?;
        let e = t.effect();
        r.insert(x, if d == 0 { e } else { e.rem_euclid(d) });
    }
    Ok(ResiduumInfo { d, r })
}

/// An `x`-cycle with positive left and global effect.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pump {
    pub nonterminal: Nt,
    pub tree: Tree,
    pub left: i64,
    pub right: i64,
    /// Smallest input at which the left part is valid.
    pub requirement: i64,
}

impl Pump {
    fn of(x: Nt, tree: Tree) -> Pump {
        let (l, r) = sides(&tree, x);
        Pump {
            nonterminal: x,
            left: l.iter().sum(),
            right: r.iter().sum(),
            requirement: required_input(&l),
            tree,
        }
    }

    pub fn global(&self) -> i64 {
        self.left + self.right
    }

    pub fn cycle(&self, ids: &mut IdGen) -> Cycle {
        cycle_from_tree(&self.tree, ids)
    }
}

pub fn is_top_branching(g: &Gvas) -> bool {
    let dag = component_dag(g);
    dag.class[dag.top] == Class::Branching
}

/// Candidate pumps for `x`: simple cycles with positive left and global
/// effect, and the block construction (a positive cycle pumped `n` times
/// inside a context, placed into one slot of a two-hole derivation).
pub fn pump_candidates(g: &Gvas, x: Nt, cycles: &[CycleSummary]) -> Vec<Pump> {
    let mut out = Vec::new();
    for c in cycles.iter().filter(|c| c.nonterminal == x && c.left > 0 && c.global > 0) {
        out.push(Pump::of(x, c.witness.derivation.to_tree()));
    }
    let Some(d2) = two_holes(g, x) else { return out };
    let small = smallest_complete(g);
    for c in cycles.iter().filter(|c| c.global > 0) {
        let v = c.nonterminal;
        let Some(d4) = small[v.index()].as_ref() else { continue };
        let d3 = if v == x { Some(Tree::Leaf(Symbol::Nt(x))) } else { context(g, x, v) };
        let Some(d3) = d3 else { continue };
        let d1 = c.witness.derivation.to_tree();
        for slot in 0..2 {
            for n in 0..=4096usize {
                let block = plug(&d3, v, 0, &pump(&d1, v, n, d4));
                let t = plug(&d2, x, slot, &block);
                let p = Pump::of(x, t);
                if p.left > 0 && p.global() > 0 {
                    out.push(p);
                    break;
                }
                // the block's effect grows by c.global per copy; give up when
                // the other slot alone keeps the left side from growing
                if slot == 1 && n > 0 {
                    break;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Infinitary {
    pub positive_simple_cycle: Option<CycleSummary>,
    pub pump: Option<Pump>,
}

impl Infinitary {
    pub fn holds(&self) -> bool {
        self.positive_simple_cycle.is_some()
    }
}

/// Whether some simple cycle has positive effect; if so and the top
/// component branches, also an initial cycle with positive left and global
/// effect.
pub fn is_infinitary(g: &Gvas) -> Result<Infinitary, CycleError> {
    let cycles = simple_cycles(g)?;
    let positive = cycles.iter().find(|c| c.global > 0).cloned();
    let pump = if positive.is_some() && is_top_branching(g) {
        pump_candidates(g, g.start(), &cycles).into_iter().min_by_key(|p| (p.requirement, p.tree.size()))
    } else {
        None
    };
    Ok(Infinitary { positive_simple_cycle: positive, pump })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constants {
    pub a: i64,
    pub c: i64,
    pub d: i64,
    pub dp: i64,
    /// The pump chosen for each top nonterminal.
    pub pumps: BTreeMap<Nt, Pump>,
    /// For each nonterminal a complete derivation of effect `>= -C` valid at `C`.
    pub c_witness: BTreeMap<Nt, Rc<Tree>>,
}

pub fn constants_from(a: i64, top: usize) -> (i64, i64) {
    let d = a * top as i64;
    (d, d + d * d)
}

/// Minimal `A` and `C` over the candidates found by bounded search.
pub fn constants_of(g: &Gvas) -> Result<Constants, CycleError> {
    if !is_top_branching(g) {
        return Err(CycleError::NotTopBranching);
    }
    let cycles = simple_cycles(g)?;
    if !cycles.iter().any(|c| c.global > 0) {
        return Err(CycleError::NotInfinitary);
    }
    let dag = component_dag(g);
    let top = dag.top_nts().to_vec();
    let mut pumps = BTreeMap::new();
    let mut a = 0;
    for &x in &top {
        let p = pump_candidates(g, x, &cycles)
            .into_iter()
            .min_by_key(|p| (p.requirement, p.tree.size()))
            .ok_or(CycleError::SearchCapExceeded(Caps::default().nodes))?;
        a = a.max(p.requirement);
        pumps.insert(x, p);
    }
    let min_t = g.terminals().min().unwrap_or(0);
    let mut c = (1 - min_t).max(0);
    let mut c_witness = BTreeMap::new();
    let caps = Caps::default();
    for x in g.nonterminals() {
        let ds = simple_derivations(g, x, caps)?;
        let (need, tree) = ds
            .iter()
            .map(|(e, req, t)| ((*req).max(-e), t.clone()))
            .min_by_key(|(need, t)| (*need, t.size()))
            .ok_or(CycleError::NoCompleteDerivation(x))?;
        c = c.max(need);
        c_witness.insert(x, tree);
    }
    let (d, dp) = constants_from(a, top.len());
    Ok(Constants { a, c, d, dp, pumps, c_witness })
}

/// `(g, x, y)` with `a*x + b*y = g = gcd(a, b) >= 0`.
pub fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i64, 0i64);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

/// Nonnegative `k` with `sum k_j * c_j == gcd(effects) (mod p)`.
pub fn bezout_combination(effects: &[i64], p: i64) -> Result<Vec<i64>, CycleError> {
    if effects.is_empty() {
        return Err(CycleError::EmptyEffects);
    }
    let mut g = effects[0];
    let mut ks = vec![1i64];
    for &c in &effects[1..] {
        let (h, s, t) = ext_gcd(g, c);
        for k in &mut ks {
            *k *= s;
        }
        ks.push(t);
        g = h;
    }
    if g < 0 {
        for k in &mut ks {
            *k = -*k;
        }
    }
    Ok(ks.into_iter().map(|k| k.rem_euclid(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivation::{cycle_effects, enumerate_complete, Effects};
    use crate::fixtures;

    fn triples(g: &Gvas) -> Vec<(Nt, i64, i64)> {
        simple_cycles(g).unwrap().iter().map(|c| (c.nonterminal, c.left, c.right)).collect()
    }

    #[test]
    fn g1_cycles() {
        let g = fixtures::g1();
        let (x, y) = (g.lookup("X").unwrap(), g.lookup("Y").unwrap());
        let t = triples(&g);
        assert!(t.contains(&(x, -1, 0)));
        assert!(t.contains(&(y, -1, 2)));
        for c in simple_cycles(&g).unwrap() {
            let e = cycle_effects(&c.witness).unwrap();
            assert_eq!(e, Effects { left: c.left, right: c.right, global: c.global });
            assert!(c.witness.derivation.produced_by(&g));
        }
        assert_eq!(residuum(&g).unwrap().d, 1);
    }

    #[test]
    fn trivial_has_no_cycles() {
        let g = fixtures::trivial();
        assert!(simple_cycles(&g).unwrap().is_empty());
        let r = residuum(&g).unwrap();
        assert_eq!((r.d, r.r[&g.start()]), (0, 0));
    }

    #[test]
    fn g2_residuum() {
        let g = fixtures::g2();
        assert!(simple_cycles(&g).unwrap().iter().all(|c| c.global % 2 == 0));
        let r = residuum(&g).unwrap();
        assert_eq!(r.d, 2);
        assert_eq!(r.r[&g.lookup("X").unwrap()], 0);
        assert_eq!(r.r[&g.lookup("Y").unwrap()], 1);
    }

    #[test]
    fn claim_same_residue() {
        for g in [fixtures::g2(), fixtures::g4(), fixtures::g6()] {
            let r = residuum(&g).unwrap();
            if r.d == 0 {
                continue;
            }
            for x in g.nonterminals() {
                for t in enumerate_complete(&g, x, 30) {
                    assert!(r.admits(x, t.effect()));
                }
            }
        }
    }

    #[test]
    fn infinitary_fixtures() {
        let g2 = fixtures::g2();
        let inf = is_infinitary(&g2).unwrap();
        assert!(inf.holds());
        let p = inf.pump.unwrap();
        assert!(p.left > 0 && p.global() > 0);
        let c = p.cycle(&mut IdGen::new());
        assert!(c.derivation.produced_by(&g2));
        let e = cycle_effects(&c).unwrap();
        assert_eq!((e.left, e.global), (p.left, p.global()));

        assert!(!is_infinitary(&fixtures::g4()).unwrap().holds());
        let g6 = fixtures::g6();
        let inf = is_infinitary(&g6).unwrap();
        assert!(inf.holds());
        assert!(triples(&g6).contains(&(g6.start(), 1, 0)));
    }

    #[test]
    fn g6_constants() {
        let k = constants_of(&fixtures::g6()).unwrap();
        assert_eq!((k.a, k.c, k.d, k.dp), (0, 1, 0, 0));
        assert_eq!(constants_from(2, 3), (6, 42));
    }

    #[test]
    fn g2_constants_reverify() {
        let g = fixtures::g2();
        let k = constants_of(&g).unwrap();
        for p in k.pumps.values() {
            let (l, _) = sides(&p.tree, p.nonterminal);
            assert!(required_input(&l) <= k.a);
            assert!(p.left > 0 && p.global() > 0);
        }
        for t in k.c_witness.values() {
            assert!(t.effect() >= -k.c);
            assert!(t.required_input() <= k.c);
        }
        assert!(g.terminals().all(|t| t > -k.c));
    }

    #[test]
    fn bezout_examples() {
        assert_eq!(bezout_combination(&[2], 2).unwrap(), vec![1]);
        let k = bezout_combination(&[4, 6], 12).unwrap();
        assert!(k.iter().all(|&v| v >= 0));
        assert_eq!((4 * k[0] + 6 * k[1]).rem_euclid(12), 2);
        assert_eq!(bezout_combination(&[3], 3).unwrap(), vec![1]);
        assert_eq!(bezout_combination(&[], 3), Err(CycleError::EmptyEffects));
        assert_eq!(ext_gcd(240, 46), (2, -9, 47));
    }
}
