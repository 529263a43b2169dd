//! The part of the reachability relation far from both axes: an upper and a
//! lower triangle plus finitely many diagonal lines, assembled into a thin
//! grammar that is exact on `[B, oo)^2`.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cycles::{is_infinitary, plug, simple_cycles, simple_derivations, smallest_complete, Caps, CycleError};
use crate::derivation::{annotate, enumerate_complete, is_irreducible, Derivation, IdGen, Tree};
use crate::grammar::{reverse, Gvas, Nt, Symbol};
use crate::oracle::residue_obstruction;
use crate::semilinear::{
    covering_tree, insert_at_first, semilin_to_thin, threshold_from_parts, LinearSet2, SemilinearError,
    SemilinearRelation, Threshold, ThresholdOptions,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RegionError {
    NoSuchEffect(i64),
    SearchCapExceeded,
    Semilinear(SemilinearError),
}

impl fmt::Display for RegionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionError::NoSuchEffect(e) => write!(f, "no complete derivation has effect {e}"),
            RegionError::SearchCapExceeded => write!(f, "search cap exceeded"),
            RegionError::Semilinear(e) => write!(f, "{e}"),
        }
    }
}

impl From<CycleError> for RegionError {
    fn from(_: CycleError) -> Self {
        RegionError::SearchCapExceeded
    }
}

impl From<SemilinearError> for RegionError {
    fn from(e: SemilinearError) -> Self {
        match e {
            SemilinearError::SearchCapExceeded => RegionError::SearchCapExceeded,
            e => RegionError::Semilinear(e),
        }
    }
}

/// `R` intersected with `UT(a, delta) = {x >= a, y >= x + delta}` (or the
/// lower triangle, for [`lower_triangle_rep`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriangleRep {
    pub a: i64,
    pub delta: i64,
    pub rep: SemilinearRelation,
    /// The line threshold used, when the grammar is infinitary.
    pub threshold: Option<Threshold>,
}

fn max_simple_effect(g: &Gvas) -> Result<i64, RegionError> {
    let ds = simple_derivations(g, g.start(), Caps::default())?;
    Ok(ds.iter().map(|(e, _, _)| *e).max().unwrap_or(0))
}

/// Upper-triangle representation of a trimmed top-branching grammar.
pub fn triangle_rep(g: &Gvas) -> Result<TriangleRep, RegionError> {
    triangle_rep_with(g, ThresholdOptions::default())
}

pub fn triangle_rep_with(g: &Gvas, opts: ThresholdOptions) -> Result<TriangleRep, RegionError> {
    let inf = is_infinitary(g)?;
    let Some(pump) = inf.pump else {
        let delta = (1 + max_simple_effect(g)?).max(0);
        return Ok(TriangleRep { a: 0, delta, rep: SemilinearRelation::empty(), threshold: None });
    };
    let x = pump.nonterminal;
    let small = smallest_complete(g);
    let inner = small[x.index()].as_ref().ok_or(CycleError::NoCompleteDerivation(x))?;
    let tau = plug(&pump.tree, x, 0, inner);
    let a = tau.required_input();
    let outer = Tree::Leaf(Symbol::Nt(x));
    let th = threshold_from_parts(g, a, &outer, &pump.tree, opts)?;
    let delta = (th.t - a).max(0);
    let off = (th.r - delta).rem_euclid(th.d);
    let rep = SemilinearRelation::from_parts(vec![LinearSet2::new((a, a + delta + off), vec![(1, 1), (0, th.d)])?]);
    Ok(TriangleRep { a, delta, rep, threshold: Some(th) })
}

fn swap(s: &SemilinearRelation) -> SemilinearRelation {
    let parts = s
        .parts
        .iter()
        .map(|l| LinearSet2::new((l.base.1, l.base.0), l.periods.iter().map(|p| (p.1, p.0)).collect()).unwrap())
        .collect();
    SemilinearRelation::from_parts(parts)
}

/// `R` intersected with `LT(a, delta) = {y >= a, x >= y + delta}`, via the
/// reverse grammar.
pub fn lower_triangle_rep(g: &Gvas) -> Result<TriangleRep, RegionError> {
    let t = triangle_rep(&reverse(g))?;
    Ok(TriangleRep { rep: swap(&t.rep), ..t })
}

const SKELETON_NODES: usize = 15;

/// Smallest and largest effect of complete `x`-derivations, `None` when
/// unbounded in that direction.
pub fn effect_bounds(g: &Gvas) -> Vec<(Option<i64>, Option<i64>)> {
    fn extreme(g: &Gvas, pick: fn(i64, i64) -> bool) -> Vec<Option<i64>> {
        let n = g.nt_count();
        let mut best: Vec<Option<i64>> = vec![None; n];
        // an optimal tree of a bounded nonterminal never repeats a label on a
        // path, so n + 1 rounds settle every bounded value
        let rounds = n + 1;
        let mut stable = false;
        for _ in 0..rounds {
            let mut changed = false;
            for r in g.rules() {
                let val = |s: Symbol| match s {
                    Symbol::T(t) => Some(t),
                    Symbol::Nt(y) => best[y.index()],
                };
                let (Some(a), Some(b)) = (val(r.rhs[0]), val(r.rhs[1])) else { continue };
                let v = a + b;
                let x = r.lhs.index();
                if best[x].is_none_or(|o| pick(v, o)) {
                    best[x] = Some(v);
                    changed = true;
                }
            }
            if !changed {
                stable = true;
                break;
            }
        }
        if stable {
            return best;
        }
        // still improving: mark everything that keeps improving as unbounded
        // each n further rounds improve every nonterminal on an improving cycle
        let snapshot = best.clone();
        for _ in 0..2 * rounds {
            for r in g.rules() {
                let val = |s: Symbol| match s {
                    Symbol::T(t) => Some(t),
                    Symbol::Nt(y) => best[y.index()],
                };
                let (Some(a), Some(b)) = (val(r.rhs[0]), val(r.rhs[1])) else { continue };
                let v = a + b;
                let x = r.lhs.index();
                if best[x].is_none_or(|o| pick(v, o)) {
                    best[x] = Some(v);
                }
            }
        }
        let mut unbounded: Vec<bool> = (0..n).map(|i| best[i] != snapshot[i]).collect();
        loop {
            let mut changed = false;
            for r in g.rules() {
                if unbounded[r.lhs.index()] {
                    continue;
                }
                let feeds = r.rhs.iter().any(|s| s.nt().is_some_and(|y| unbounded[y.index()]));
                let others = r.rhs.iter().all(|s| s.nt().is_none_or(|y| best[y.index()].is_some()));
                if feeds && others {
                    unbounded[r.lhs.index()] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..n).map(|i| if unbounded[i] { None } else { best[i] }).collect()
    }
    let lo = extreme(g, |v, o| v < o);
    let hi = extreme(g, |v, o| v > o);
    lo.into_iter().zip(hi).collect()
}

/// A complete initial derivation of effect exactly `delta`: an irreducible
/// skeleton with simple cycles inserted.
pub fn small_effect_derivation(g: &Gvas, delta: i64) -> Result<Tree, RegionError> {
    let s = g.start();
    if residue_obstruction(g, s, delta).is_some() {
        return Err(RegionError::NoSuchEffect(delta));
    }
    let productive = g.productive();
    if !productive[s.index()] {
        return Err(RegionError::NoSuchEffect(delta));
    }
    let (lo, hi) = effect_bounds(g)[s.index()];
    if lo.is_some_and(|l| delta < l) || hi.is_some_and(|h| delta > h) {
        return Err(RegionError::NoSuchEffect(delta));
    }
    let cycles = simple_cycles(g)?;
    let mut coins: BTreeMap<(Nt, i64), Tree> = BTreeMap::new();
    for c in &cycles {
        if c.global != 0 {
            coins.entry((c.nonterminal, c.global)).or_insert_with(|| c.witness.derivation.to_tree());
        }
    }
    let mut skeletons: Vec<Tree> = Vec::new();
    for (_, _, t) in simple_derivations(g, s, Caps::default())? {
        skeletons.push((*t).clone());
    }
    for t in enumerate_complete(g, s, SKELETON_NODES) {
        let d = Derivation::from_tree(&t, &mut IdGen::new());
        if is_irreducible(g, &d) {
            skeletons.push((*t).clone());
        }
    }
    if let Some(t) = covering_tree(g, s) {
        skeletons.push(t);
    }
    skeletons.sort_by_key(|t| (t.size(), t.clone()));
    skeletons.dedup();
    let m = coins.keys().map(|(_, e)| e.abs()).max().unwrap_or(0);
    'skeletons: for sk in &skeletons {
        let target = delta - sk.effect();
        if target == 0 {
            return Ok(sk.clone());
        }
        // roots usable from this skeleton, closed under the cycles' own labels
        let mut roots = BTreeSet::new();
        sk.nonterminals(&mut roots);
        loop {
            let before = roots.len();
            for ((x, _), t) in &coins {
                if roots.contains(x) {
                    t.nonterminals(&mut roots);
                }
            }
            if roots.len() == before {
                break;
            }
        }
        let usable: Vec<(&(Nt, i64), &Tree)> = coins.iter().filter(|((x, _), _)| roots.contains(x)).collect();
        if usable.is_empty() {
            continue;
        }
        // partial sums can be ordered to stay within m of [min(0,t), max(0,t)]
        let lo = target.min(0) - m;
        let hi = target.max(0) + m;
        let mut prev: BTreeMap<i64, (i64, usize)> = BTreeMap::new();
        let mut queue = VecDeque::from([0i64]);
        prev.insert(0, (0, usize::MAX));
        while let Some(v) = queue.pop_front() {
            if v == target {
                break;
            }
            for (j, ((_, e), _)) in usable.iter().enumerate() {
                let w = v + e;
                if w < lo || w > hi || prev.contains_key(&w) {
                    continue;
                }
                prev.insert(w, (v, j));
                queue.push_back(w);
            }
        }
        if !prev.contains_key(&target) {
            continue;
        }
        let mut picks = Vec::new();
        let mut v = target;
        while v != 0 {
            let (p, j) = prev[&v];
            picks.push(j);
            v = p;
        }
        let mut tree = sk.clone();
        while !picks.is_empty() {
            let before = picks.len();
            let mut rest = Vec::new();
            for j in picks {
                let ((x, _), cyc) = usable[j];
                match insert_at_first(&tree, *x, cyc) {
                    Some(t) => tree = t,
                    None => rest.push(j),
                }
            }
            if rest.len() == before {
                continue 'skeletons;
            }
            picks = rest;
        }
        debug_assert_eq!(tree.effect(), delta);
        return Ok(tree);
    }
    if cycles.iter().all(|c| c.global == 0) {
        // finitely many effects, all realised by the skeletons tried
        return Err(RegionError::NoSuchEffect(delta));
    }
    Err(RegionError::SearchCapExceeded)
}

/// Some `a` with `R(a, a + delta)`, if any `x` has `R(x, x + delta)`.
pub fn diagonal_witness(g: &Gvas, delta: i64) -> Result<Option<(i64, Tree)>, RegionError> {
    match small_effect_derivation(g, delta) {
        Ok(t) => {
            let a: i64 = crate::derivation::terminals_of(&t.yield_symbols()).iter().map(|v| v.abs()).sum();
            let d = Derivation::from_tree(&t, &mut IdGen::new());
            let out = annotate(&d, a).map_err(|_| RegionError::SearchCapExceeded)?.root_output();
            debug_assert_eq!(out, a + delta);
            Ok(Some((a, t)))
        }
        Err(RegionError::NoSuchEffect(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct FarFromAxis {
    pub b: i64,
    pub upper: TriangleRep,
    pub lower: TriangleRep,
    /// `(delta, a_delta)` for every covered diagonal line.
    pub lines: Vec<(i64, i64)>,
    pub rep: SemilinearRelation,
    pub h: Gvas,
}

/// `B` and a thin grammar that under-approximates `g` and is exact on
/// `[B, oo)^2`. `g` must be trimmed and top-branching.
pub fn far_from_axis(g: &Gvas) -> Result<FarFromAxis, RegionError> {
    let upper = triangle_rep(g)?;
    let lower = lower_triangle_rep(g)?;
    let mut b = upper.a.max(lower.a);
    let mut rep = upper.rep.union(&lower.rep);
    let mut lines = Vec::new();
    for delta in -lower.delta..=upper.delta {
        if let Some((a, _)) = diagonal_witness(g, delta)? {
            b = b.max(a + delta.abs());
            lines.push((delta, a));
            let base = (a, a + delta);
            rep = rep.union(&SemilinearRelation::from_parts(vec![LinearSet2::new(base, vec![(1, 1)])?]));
        }
    }
    let h = semilin_to_thin(&rep)?;
    Ok(FarFromAxis { b, upper, lower, lines, rep, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::oracle::{Saturation, Steps};

    fn sat(g: &Gvas, cap: i64) -> Saturation<'_> {
        Saturation::run(g, cap, &mut Steps::new(u64::MAX)).unwrap()
    }

    fn check_window(g: &Gvas, rep: &SemilinearRelation, inside: impl Fn(i64, i64) -> bool, w: i64) {
        let s = sat(g, 2 * w + 16);
        for x in 0..=w {
            for y in 0..=w {
                if inside(x, y) {
                    assert_eq!(rep.member((x, y)), s.contains(g.start(), x, y), "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn g4_upper_triangle_is_empty() {
        let g = fixtures::g4();
        let t = triangle_rep(&g).unwrap();
        assert!(t.rep.parts.is_empty());
        let s = sat(&g, 40);
        for x in 0..=14 {
            for y in x + t.delta..=20 {
                assert!(!s.contains(g.start(), x, y));
            }
        }
    }

    #[test]
    fn g6_upper_triangle() {
        let g = fixtures::g6();
        let t = triangle_rep(&g).unwrap();
        assert_eq!(t.threshold.as_ref().unwrap().d, 1);
        check_window(&g, &t.rep, |x, y| x >= t.a && y >= x + t.delta, 14);
        let s = SemilinearRelation::from_parts(t.rep.parts.clone());
        for p in s.window(12) {
            assert!(s.member((p.0 + 1, p.1 + 1)));
        }
    }

    #[test]
    fn g2_upper_triangle_parity() {
        let g = fixtures::g2();
        let t = triangle_rep(&g).unwrap();
        assert_eq!(t.threshold.as_ref().unwrap().d, 2);
        check_window(&g, &t.rep, |x, y| x >= t.a && y >= x + t.delta, 14);
        for p in t.rep.window(14) {
            assert_eq!((p.1 - p.0).rem_euclid(2), 0);
        }
    }

    #[test]
    fn lower_triangles() {
        let g6 = fixtures::g6();
        let lt = lower_triangle_rep(&g6).unwrap();
        assert!(lt.rep.parts.is_empty());
        let g2 = fixtures::g2();
        let lt = lower_triangle_rep(&g2).unwrap();
        check_window(&g2, &lt.rep, |x, y| y >= lt.a && x >= y + lt.delta, 14);
        let rt = triangle_rep(&reverse(&g2)).unwrap();
        for (x, y) in lt.rep.window(12) {
            assert!(rt.rep.member((y, x)));
        }
    }

    #[test]
    fn small_effects() {
        let g2 = fixtures::g2();
        let t = small_effect_derivation(&g2, 2).unwrap();
        assert_eq!(t.effect(), 2);
        assert!(Derivation::from_tree(&t, &mut IdGen::new()).produced_by(&g2));
        assert_eq!(small_effect_derivation(&g2, 3), Err(RegionError::NoSuchEffect(3)));
        let tr = fixtures::trivial();
        assert_eq!(small_effect_derivation(&tr, 0).unwrap().effect(), 0);
        assert_eq!(small_effect_derivation(&tr, 1), Err(RegionError::NoSuchEffect(1)));
        assert_eq!(small_effect_derivation(&g2, -4), Err(RegionError::NoSuchEffect(-4)));
        let g4 = fixtures::g4();
        let t = small_effect_derivation(&g4, -6).unwrap();
        assert_eq!(t.effect(), -6);
        assert!(Derivation::from_tree(&t, &mut IdGen::new()).produced_by(&g4));
    }

    #[test]
    fn bounds_of_effects() {
        let g2 = fixtures::g2();
        assert_eq!(effect_bounds(&g2)[g2.start().index()], (Some(0), None));
        let g4 = fixtures::g4();
        assert_eq!(effect_bounds(&g4)[g4.start().index()], (None, Some(0)));
        let tr = fixtures::trivial();
        assert_eq!(effect_bounds(&tr)[tr.start().index()], (Some(0), Some(0)));
    }

    #[test]
    fn diagonal_witnesses() {
        let g2 = fixtures::g2();
        let (a, _) = diagonal_witness(&g2, 2).unwrap().unwrap();
        assert!(sat(&g2, a + 40).contains(g2.start(), a, a + 2));
        assert_eq!(diagonal_witness(&g2, 1).unwrap(), None);
        let tr = fixtures::trivial();
        assert!(diagonal_witness(&tr, 0).unwrap().is_some());
    }

    fn check_far(g: &Gvas) {
        let f = far_from_axis(g).unwrap();
        assert!(crate::grammar::is_thin(&f.h));
        let w = f.b + 8;
        let sg = sat(g, 2 * w + 16);
        let sh = sat(&f.h, 2 * w + 16);
        for x in 0..=w {
            for y in 0..=w {
                let in_h = sh.contains(f.h.start(), x, y);
                assert_eq!(in_h, f.rep.member((x, y)));
                if in_h {
                    assert!(sg.contains(g.start(), x, y), "({x},{y}) over-approximated");
                }
                if x >= f.b && y >= f.b {
                    assert_eq!(in_h, sg.contains(g.start(), x, y), "({x},{y}) above B = {}", f.b);
                }
            }
        }
    }

    #[test]
    fn far_from_axis_fixtures() {
        check_far(&fixtures::g6());
        check_far(&fixtures::g2());
        check_far(&fixtures::g4());
    }
}
