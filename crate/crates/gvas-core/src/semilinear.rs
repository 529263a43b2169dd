//! Semilinear relations over `N^2`, their conversion into thin grammars, and
//! the threshold above which a vertical line of the reachability relation is
//! a residue class.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cycles::{bezout_combination, context, gcd, plug, pump, simple_cycles, smallest_complete, two_holes, CycleError};
use crate::derivation::{annotate, cycle_effects, terminals_of, Derivation, NodeId, Tree};
use crate::grammar::{Gvas, Nt, Origin, Symbol};
use crate::oracle::{Saturation, Steps};

pub type Point = (i64, i64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SemilinearError {
    NonDiagonalDetected(Point),
    NotDiagonal,
    NegativeCoordinate,
    PreconditionViolation(&'static str),
    SearchCapExceeded,
}

impl fmt::Display for SemilinearError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemilinearError::NonDiagonalDetected((x, y)) => {
                write!(f, "relation is not diagonal: ({x},{y}) is in but ({},{}) is not", x + 1, y + 1)
            }
            SemilinearError::NotDiagonal => write!(f, "some part lacks the period (1,1)"),
            SemilinearError::NegativeCoordinate => write!(f, "negative coordinate"),
            SemilinearError::PreconditionViolation(m) => write!(f, "precondition violated: {m}"),
            SemilinearError::SearchCapExceeded => write!(f, "search cap exceeded"),
        }
    }
}

impl From<CycleError> for SemilinearError {
    fn from(_: CycleError) -> Self {
        SemilinearError::SearchCapExceeded
    }
}

/// `base + periods*`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinearSet2 {
    pub base: Point,
    pub periods: Vec<Point>,
}

impl LinearSet2 {
    pub fn new(base: Point, periods: Vec<Point>) -> Result<LinearSet2, SemilinearError> {
        if base.0 < 0 || base.1 < 0 || periods.iter().any(|p| p.0 < 0 || p.1 < 0) {
            return Err(SemilinearError::NegativeCoordinate);
        }
        let mut ps: Vec<Point> = periods.into_iter().filter(|&p| p != (0, 0)).collect();
        ps.sort();
        ps.dedup();
        Ok(LinearSet2 { base, periods: ps })
    }

    pub fn point(p: Point) -> LinearSet2 {
        LinearSet2 { base: p, periods: Vec::new() }
    }

    pub fn is_diagonal(&self) -> bool {
        self.periods.contains(&(1, 1))
    }

    pub fn member(&self, p: Point) -> bool {
        fn go(ps: &[Point], rest: Point) -> bool {
            if rest == (0, 0) {
                return true;
            }
            let Some((&q, tail)) = ps.split_first() else { return false };
            let mut r = rest;
            loop {
                if go(tail, r) {
                    return true;
                }
                r = (r.0 - q.0, r.1 - q.1);
                if r.0 < 0 || r.1 < 0 {
                    return false;
                }
            }
        }
        let rest = (p.0 - self.base.0, p.1 - self.base.1);
        rest.0 >= 0 && rest.1 >= 0 && go(&self.periods, rest)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SemilinearRelation {
    pub parts: Vec<LinearSet2>,
    pub diagonalized: bool,
}

impl SemilinearRelation {
    pub fn empty() -> SemilinearRelation {
        SemilinearRelation { parts: Vec::new(), diagonalized: true }
    }

    pub fn from_parts(parts: Vec<LinearSet2>) -> SemilinearRelation {
        let diagonalized = parts.iter().all(LinearSet2::is_diagonal);
        SemilinearRelation { parts, diagonalized }
    }

    pub fn member(&self, p: Point) -> bool {
        self.parts.iter().any(|l| l.member(p))
    }

    /// Points of the denotation inside `[0, w]^2`.
    pub fn window(&self, w: i64) -> BTreeSet<Point> {
        let mut out = BTreeSet::new();
        for x in 0..=w {
            for y in 0..=w {
                if self.member((x, y)) {
                    out.insert((x, y));
                }
            }
        }
        out
    }

    pub fn union(&self, t: &SemilinearRelation) -> SemilinearRelation {
        let mut parts = self.parts.clone();
        parts.extend(t.parts.iter().cloned());
        SemilinearRelation { parts, diagonalized: self.diagonalized && t.diagonalized }
    }

    /// Adds `(1,1)` to every part. The denotation must already be diagonal;
    /// this is spot-checked on `[0, 16]^2`.
    pub fn diagonalize(&self) -> Result<SemilinearRelation, SemilinearError> {
        for p in self.window(16) {
            if !self.member((p.0 + 1, p.1 + 1)) {
                return Err(SemilinearError::NonDiagonalDetected(p));
            }
        }
        let parts = self
            .parts
            .iter()
            .map(|l| {
                let mut ps = l.periods.clone();
                ps.push((1, 1));
                LinearSet2::new(l.base, ps).unwrap()
            })
            .collect();
        Ok(SemilinearRelation { parts, diagonalized: true })
    }

    /// Exact representation of the intersection with `region`.
    pub fn restrict(&self, region: Region) -> Result<SemilinearRelation, SemilinearError> {
        let mut parts = Vec::new();
        for l in &self.parts {
            parts.extend(restrict_linear(l, region)?);
        }
        parts.sort();
        parts.dedup();
        Ok(SemilinearRelation::from_parts(parts))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `[x0, x1] x [y0, y1]`.
    Rect { x0: i64, x1: i64, y0: i64, y1: i64 },
    /// `{a} x [t, oo)`.
    Vertical { a: i64, t: i64 },
    /// `[t, oo) x {b}`.
    Horizontal { b: i64, t: i64 },
    /// `x >= a`.
    XAtLeast(i64),
    /// `x >= a` and `y >= x + delta`.
    Upper { a: i64, delta: i64 },
    /// `y >= a` and `x >= y + delta`.
    Lower { a: i64, delta: i64 },
    /// `[b, oo)^2`.
    Quadrant(i64),
}

impl Region {
    pub fn contains(&self, (x, y): Point) -> bool {
        match *self {
            Region::Rect { x0, x1, y0, y1 } => (x0..=x1).contains(&x) && (y0..=y1).contains(&y),
            Region::Vertical { a, t } => x == a && y >= t,
            Region::Horizontal { b, t } => y == b && x >= t,
            Region::XAtLeast(a) => x >= a,
            Region::Upper { a, delta } => x >= a && y >= x + delta,
            Region::Lower { a, delta } => y >= a && x >= y + delta,
            Region::Quadrant(b) => x >= b && y >= b,
        }
    }

    /// `(fx, fy, c)` meaning `fx*x + fy*y >= c`.
    fn constraints(&self) -> Vec<(i64, i64, i64)> {
        match *self {
            Region::XAtLeast(a) => vec![(1, 0, a)],
            Region::Upper { a, delta } => vec![(1, 0, a), (-1, 1, delta)],
            Region::Lower { a, delta } => vec![(0, 1, a), (1, -1, delta)],
            Region::Quadrant(b) => vec![(1, 0, b), (0, 1, b)],
            _ => unreachable!("bounded regions are handled separately"),
        }
    }
}

const ENUM_CAP: u64 = 4_000_000;

fn restrict_linear(l: &LinearSet2, region: Region) -> Result<Vec<LinearSet2>, SemilinearError> {
    match region {
        Region::Rect { x0, x1, y0, y1 } => {
            let mut out = Vec::new();
            for x in x0.max(0)..=x1 {
                for y in y0.max(0)..=y1 {
                    if l.member((x, y)) {
                        out.push(LinearSet2::point((x, y)));
                    }
                }
            }
            Ok(out)
        }
        Region::Vertical { a, t } => Ok(restrict_line(l, a, t, false)),
        Region::Horizontal { b, t } => Ok(restrict_line(l, b, t, true)),
        _ => restrict_halfplanes(l, &region.constraints()),
    }
}

/// Intersection with a vertical (or, swapped, horizontal) half-line.
fn restrict_line(l: &LinearSet2, a: i64, t: i64, swap: bool) -> Vec<LinearSet2> {
    let sw = |p: Point| if swap { (p.1, p.0) } else { p };
    let base = sw(l.base);
    let (flat, free): (Vec<Point>, Vec<Point>) = l.periods.iter().map(|&p| sw(p)).partition(|p| p.0 > 0);
    let free: Vec<i64> = free.into_iter().map(|p| p.1).collect();
    // every combination of the periods moving x that lands on x = a
    let mut starts = BTreeSet::new();
    fn land(ps: &[Point], cur: Point, a: i64, out: &mut BTreeSet<i64>) {
        if cur.0 > a {
            return;
        }
        match ps.split_first() {
            None => {
                if cur.0 == a {
                    out.insert(cur.1);
                }
            }
            Some((&q, tail)) => {
                let mut c = cur;
                while c.0 <= a {
                    land(tail, c, a, out);
                    c = (c.0 + q.0, c.1 + q.1);
                }
            }
        }
    }
    land(&flat, base, a, &mut starts);
    let step = free.iter().copied().max().unwrap_or(0);
    // every y >= t reduces, by removing used free periods while staying
    // >= t, to y0 itself or to a value below t + step
    let mut bases = BTreeSet::new();
    for &y0 in &starts {
        if y0 >= t {
            bases.insert(y0);
        }
        let limit = t + step;
        let mut frontier = vec![y0];
        let mut seen = BTreeSet::new();
        while let Some(y) = frontier.pop() {
            if y >= limit || !seen.insert(y) {
                continue;
            }
            if y >= t {
                bases.insert(y);
            }
            for &v in &free {
                frontier.push(y + v);
            }
        }
    }
    bases
        .into_iter()
        .map(|y| LinearSet2::new(sw((a, y)), free.iter().map(|&v| sw((0, v))).collect()).unwrap())
        .collect()
}

/// Minimal nonnegative solutions of `sum k_i f_j(p_i) - s_j = c_j`, by brute
/// force inside the norm bound for minimal solutions.
fn minimal_solutions(fs: &[Vec<i64>], cs: &[i64], n: usize, nonzero: bool) -> Result<Vec<Vec<i64>>, SemilinearError> {
    let row = fs
        .iter()
        .zip(cs)
        .map(|(f, c)| f.iter().map(|v| v.abs()).sum::<i64>() + 1 + c.abs())
        .max()
        .unwrap_or(0);
    let mut bound: i64 = 1;
    for _ in 0..fs.len() {
        bound = bound.saturating_mul(1 + row);
    }
    let mut count: u64 = 1;
    for i in 0..n as u64 {
        count = count.saturating_mul(bound as u64 + 1 + i) / (i + 1);
    }
    if count > ENUM_CAP {
        return Err(SemilinearError::SearchCapExceeded);
    }
    let mut sols: Vec<Vec<i64>> = Vec::new();
    let mut k = vec![0i64; n];
    fn rec(i: usize, left: i64, k: &mut Vec<i64>, fs: &[Vec<i64>], cs: &[i64], nonzero: bool, sols: &mut Vec<Vec<i64>>) {
        if i == k.len() {
            let mut full = k.clone();
            for (f, c) in fs.iter().zip(cs) {
                let s: i64 = f.iter().zip(k.iter()).map(|(a, b)| a * b).sum::<i64>() - c;
                if s < 0 {
                    return;
                }
                full.push(s);
            }
            if nonzero && full.iter().all(|&v| v == 0) {
                return;
            }
            sols.push(full);
            return;
        }
        for v in 0..=left {
            k[i] = v;
            rec(i + 1, left - v, k, fs, cs, nonzero, sols);
        }
        k[i] = 0;
    }
    rec(0, bound, &mut k, fs, cs, nonzero, &mut sols);
    let le = |a: &Vec<i64>, b: &Vec<i64>| a.iter().zip(b).all(|(x, y)| x <= y);
    let minimal: Vec<Vec<i64>> = sols
        .iter()
        .filter(|s| !sols.iter().any(|t| t != *s && le(t, s)))
        .map(|s| s[..n].to_vec())
        .collect();
    Ok(minimal)
}

fn restrict_halfplanes(l: &LinearSet2, cons: &[(i64, i64, i64)]) -> Result<Vec<LinearSet2>, SemilinearError> {
    let n = l.periods.len();
    let fs: Vec<Vec<i64>> = cons.iter().map(|&(fx, fy, _)| l.periods.iter().map(|p| fx * p.0 + fy * p.1).collect()).collect();
    let cs: Vec<i64> = cons.iter().map(|&(fx, fy, c)| c - fx * l.base.0 - fy * l.base.1).collect();
    let comb = |k: &[i64]| {
        l.periods.iter().zip(k).fold((0, 0), |acc, (p, &m)| (acc.0 + m * p.0, acc.1 + m * p.1))
    };
    let inhom = minimal_solutions(&fs, &cs, n, false)?;
    let zero = vec![0; cons.len()];
    let hom = minimal_solutions(&fs, &zero, n, true)?;
    let periods: Vec<Point> = hom.iter().map(|h| comb(h)).collect();
    Ok(inhom
        .iter()
        .map(|m| {
            let off = comb(m);
            LinearSet2::new((l.base.0 + off.0, l.base.1 + off.1), periods.clone()).unwrap()
        })
        .collect())
}

/// Thin grammar whose reachability relation is the denotation of `s`: one
/// pair `X -> -l Y r`, `Y -> 0 | -l_i Y r_i` per part, joined under a fresh
/// start.
pub fn semilin_to_thin(s: &SemilinearRelation) -> Result<Gvas, SemilinearError> {
    if s.parts.iter().any(|l| !l.is_diagonal()) {
        return Err(SemilinearError::NotDiagonal);
    }
    let mut h = Gvas::empty("S");
    let start = h.start();
    for l in &s.parts {
        let x = h.add_fresh("X", 1, Origin::Pipeline);
        let y = h.add_fresh("Y", 1, Origin::Pipeline);
        h.add_rule(start, vec![Symbol::Nt(x), Symbol::T(0)]);
        h.add_rule_binarized(x, &[Symbol::T(-l.base.0), Symbol::Nt(y), Symbol::T(l.base.1)]);
        h.add_rule(y, vec![Symbol::T(0), Symbol::T(0)]);
        for p in &l.periods {
            h.add_rule_binarized(y, &[Symbol::T(-p.0), Symbol::Nt(y), Symbol::T(p.1)]);
        }
    }
    Ok(h)
}

/// `{a} x {b >= t : b = a + r (mod d)}`.
pub fn vertical_class(a: i64, t: i64, r: i64, d: i64) -> SemilinearRelation {
    let target = (a + r).rem_euclid(d.max(1));
    let mut b0 = t.max(0);
    if d > 0 {
        b0 += (target - b0).rem_euclid(d);
    }
    let periods = if d > 0 { vec![(0, d)] } else { Vec::new() };
    SemilinearRelation::from_parts(vec![LinearSet2::new((a, b0), periods).unwrap()])
}

/// Replaces the first node labelled `x` (preorder) by `cycle` with the old
/// subtree hung at its hole.
pub fn insert_at_first(t: &Tree, x: Nt, cycle: &Tree) -> Option<Tree> {
    match t {
        Tree::Node(y, l, r) => {
            if *y == x {
                return Some(plug(cycle, x, 0, t));
            }
            if let Some(l2) = insert_at_first(l, x, cycle) {
                return Some(Tree::Node(*y, Rc::new(l2), r.clone()));
            }
            insert_at_first(r, x, cycle).map(|r2| Tree::Node(*y, l.clone(), Rc::new(r2)))
        }
        Tree::Leaf(_) => None,
    }
}

pub fn reachable_from(g: &Gvas, x: Nt) -> Vec<bool> {
    let mut seen = vec![false; g.nt_count()];
    let mut stack = vec![x];
    seen[x.index()] = true;
    while let Some(y) = stack.pop() {
        for ri in g.rules_of(y) {
            for s in &g.rules()[ri].rhs {
                if let Symbol::Nt(z) = *s {
                    if !seen[z.index()] {
                        seen[z.index()] = true;
                        stack.push(z);
                    }
                }
            }
        }
    }
    seen
}

/// A complete `x`-tree containing every productive nonterminal reachable
/// from `x`: complete trees through each missing nonterminal are joined
/// under a derivation with two `x` leaves.
pub fn covering_tree(g: &Gvas, x: Nt) -> Option<Tree> {
    let small = smallest_complete(g);
    let reach = reachable_from(g, x);
    let mut sigma = (*small[x.index()].clone()?).clone();
    let mut have = BTreeSet::new();
    sigma.nonterminals(&mut have);
    let mut two = None;
    for y in g.nonterminals() {
        if !reach[y.index()] || small[y.index()].is_none() || have.contains(&y) {
            continue;
        }
        let through = plug(&context(g, x, y)?, y, 0, small[y.index()].as_ref()?);
        if two.is_none() {
            two = Some(two_holes(g, x)?);
        }
        let joined = plug(two.as_ref().unwrap(), x, 0, &sigma);
        sigma = plug(&joined, x, 0, &through);
        have.clear();
        sigma.nonterminals(&mut have);
    }
    Some(sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ThresholdOptions {
    /// Lower `T` while every class member below it is confirmed by the
    /// counter-bounded oracle.
    pub tighten: bool,
    pub oracle_cap: i64,
    pub oracle_steps: u64,
    pub max_copies: usize,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { tighten: true, oracle_cap: 256, oracle_steps: 50_000_000, max_copies: 1 << 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Threshold {
    pub a: i64,
    pub t: i64,
    /// `T` before tightening.
    pub t_raw: i64,
    pub d: i64,
    pub r: i64,
    pub p: i64,
    pub k: i64,
    pub rep: SemilinearRelation,
    /// Copies of the pump inserted into each `tau_i`.
    pub copies: Vec<usize>,
    pub outputs: Vec<i64>,
    pub s_left: i64,
    pub s_right: i64,
    pub witnesses: Vec<Tree>,
}

fn run_valid_at(parts: &[&[i64]], reps: &[(usize, usize)], a: i64) -> bool {
    let mut c = a;
    for (i, p) in parts.iter().enumerate() {
        let times = reps.iter().find(|(j, _)| *j == i).map_or(1, |r| r.1);
        for _ in 0..times {
            for &v in p.iter() {
                c += v;
                if c < 0 {
                    return false;
                }
            }
        }
    }
    true
}

/// Threshold from a derivation `outer` with an `x` hole, a pump `gamma`
/// (an `x`-cycle with positive left and global effect) and input `a`.
pub fn threshold_from_parts(
    g: &Gvas,
    a: i64,
    outer: &Tree,
    gamma: &Tree,
    opts: ThresholdOptions,
) -> Result<Threshold, SemilinearError> {
    let Symbol::Nt(x) = gamma.label() else { return Err(SemilinearError::PreconditionViolation("cycle root")) };
    let (gl, gr) = crate::cycles::sides(gamma, x);
    let (left, right): (i64, i64) = (gl.iter().sum(), gr.iter().sum());
    let p = left + right;
    if left <= 0 || p <= 0 {
        return Err(SemilinearError::PreconditionViolation("cycle needs positive left and global effect"));
    }
    let (ol, or) = crate::cycles::sides(outer, x);
    let reach = reachable_from(g, x);
    let cycles = simple_cycles(g)?;
    let mut effects: BTreeMap<i64, Tree> = BTreeMap::new();
    for c in cycles.iter().filter(|c| reach[c.nonterminal.index()] && c.global != 0) {
        effects.entry(c.global).or_insert_with(|| c.witness.derivation.to_tree());
    }
    let d = effects.keys().fold(0, |acc, &e| gcd(acc, e));
    if d == 0 || p % d != 0 {
        return Err(SemilinearError::PreconditionViolation("cycle effect not a multiple of d"));
    }
    let k = p / d;
    let cs: Vec<i64> = effects.keys().copied().collect();
    let kp = bezout_combination(&cs, p)?;
    let sigma = covering_tree(g, x).ok_or(SemilinearError::PreconditionViolation("no covering tree"))?;
    let s_left: i64 = ol.iter().sum();
    let s_right: i64 = or.iter().map(|v| v.abs()).sum();
    let mut copies = Vec::new();
    let mut outputs = Vec::new();
    let mut witnesses = Vec::new();
    let mut sigma_i = sigma.clone();
    let mut r = 0;
    for i in 0..k {
        if i > 0 {
            for (j, (_, cyc)) in effects.iter().enumerate() {
                let Symbol::Nt(z) = cyc.label() else { unreachable!() };
                for _ in 0..kp[j] {
                    sigma_i = insert_at_first(&sigma_i, z, cyc).ok_or(SemilinearError::PreconditionViolation("cycle root missing from covering tree"))?;
                }
            }
        }
        let sy = terminals_of(&sigma_i.yield_symbols());
        let parts: [&[i64]; 5] = [&ol, &gl, &sy, &gr, &or];
        let valid = |n: usize| run_valid_at(&parts, &[(1, n), (3, n)], a);
        // least number of pump copies, at least the one already in tau
        let mut hi = 1usize;
        while !valid(hi) {
            hi *= 2;
            if hi > opts.max_copies {
                return Err(SemilinearError::SearchCapExceeded);
            }
        }
        let mut lo = 0usize;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if valid(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let n = hi;
        let body = pump(gamma, x, n, &sigma_i);
        let tau_i = plug(outer, x, 0, &body);
        let out = a + tau_i.effect();
        if i == 0 {
            r = (out - a).rem_euclid(d);
        }
        copies.push(n);
        outputs.push(out);
        witnesses.push(tau_i);
    }
    let t_raw = outputs.iter().copied().max().unwrap_or(a);
    let mut t = t_raw;
    if opts.tighten && t > 0 {
        let root = outer.label().nt().unwrap_or(x);
        let cap = opts.oracle_cap.max(t_raw);
        let mut steps = Steps::new(opts.oracle_steps);
        if cap < 4096 {
            if let Ok(sat) = Saturation::run(g, cap, &mut steps) {
                while t > 0 {
                    let b = t - 1;
                    let in_class = (b - a - r).rem_euclid(d) == 0;
                    if in_class && !sat.contains(root, a, b) {
                        break;
                    }
                    t = b;
                }
            }
        }
    }
    Ok(Threshold {
        a,
        t,
        t_raw,
        d,
        r,
        p,
        k,
        rep: vertical_class(a, t, r, d),
        copies,
        outputs,
        s_left,
        s_right,
        witnesses,
    })
}

/// Threshold for the line `{a} x N` from a complete derivation `tau` valid at
/// `a` that contains a pump between `cycle_root` and `distinguished`.
pub fn line_linear_threshold(
    g: &Gvas,
    a: i64,
    tau: &Derivation,
    cycle_root: NodeId,
    distinguished: NodeId,
    opts: ThresholdOptions,
) -> Result<Threshold, SemilinearError> {
    if !tau.is_complete() || annotate(tau, a).is_err() {
        return Err(SemilinearError::PreconditionViolation("tau must be complete and valid at a"));
    }
    if cycle_root == distinguished || !tau.is_ancestor(cycle_root, distinguished) || tau.label(cycle_root) != tau.label(distinguished) {
        return Err(SemilinearError::PreconditionViolation("not a cycle"));
    }
    let gamma = tau.tree_with_hole(cycle_root, Some(distinguished));
    let mut ids = crate::derivation::IdGen::new();
    let outer = tau.tree_with_hole(tau.root(), Some(cycle_root));
    let check = crate::cycles::cycle_from_tree(&gamma, &mut ids);
    let e = cycle_effects(&check).map_err(|_| SemilinearError::PreconditionViolation("cycle"))?;
    if e.left <= 0 || e.global <= 0 {
        return Err(SemilinearError::PreconditionViolation("cycle needs positive left and global effect"));
    }
    threshold_from_parts(g, a, &outer, &gamma, opts)
}
