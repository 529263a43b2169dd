//! Budgeted verdicts and the end-to-end pipeline: the brute-force window,
//! thin reachability and coverability, output bounds for grammars without
//! negative cycles, and the transformation into an equivalent thin grammar.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cycles::{constants_of, is_infinitary, simple_cycles, simple_derivations, Caps, CycleError};
use crate::derivation::{annotate, enumerate_complete, is_irreducible, Derivation, IdGen, Tree};
use crate::grammar::{binarize, component_dag, is_thin, reverse, Class, Gvas, Nt, Symbol};
use crate::oracle::{min_sizes, BoundedOracle, Tri};
use crate::region::{far_from_axis, RegionError};
use crate::semilinear::{semilin_to_thin, LinearSet2, SemilinearError, SemilinearRelation, ThresholdOptions};
use crate::supertree::{build_supertree, leaves_to_thin, success_semilinear, SupertreeError, SupertreeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    /// Node cap of the brute-force window.
    pub max_nodes: usize,
    /// Largest counter the oracles saturate to.
    pub max_counter: i64,
    /// Work limit of one saturation.
    pub max_steps: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_nodes: 40, max_counter: 256, max_steps: 50_000_000 }
    }
}

/// Why a pipeline step gave up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Diagnostic {
    CapExceeded(String),
    OracleUnknown(String),
    /// A construction broke its own contract. Never expected.
    Internal(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::CapExceeded(s) => write!(f, "cap exceeded: {s}"),
            Diagnostic::OracleUnknown(s) => write!(f, "oracle unknown: {s}"),
            Diagnostic::Internal(s) => write!(f, "internal error: {s}"),
        }
    }
}

impl From<SupertreeError> for Diagnostic {
    fn from(e: SupertreeError) -> Self {
        match e {
            SupertreeError::CapExceeded(_) => Diagnostic::CapExceeded(e.to_string()),
            SupertreeError::OracleUnknown(..) => Diagnostic::OracleUnknown(e.to_string()),
            SupertreeError::Semilinear(SemilinearError::SearchCapExceeded) => Diagnostic::CapExceeded(e.to_string()),
            _ => Diagnostic::Internal(e.to_string()),
        }
    }
}

impl From<RegionError> for Diagnostic {
    fn from(e: RegionError) -> Self {
        match e {
            RegionError::SearchCapExceeded => Diagnostic::CapExceeded(e.to_string()),
            e => Diagnostic::Internal(e.to_string()),
        }
    }
}

impl From<CycleError> for Diagnostic {
    fn from(e: CycleError) -> Self {
        match e {
            CycleError::SearchCapExceeded(_) => Diagnostic::CapExceeded(e.to_string()),
            e => Diagnostic::Internal(e.to_string()),
        }
    }
}

impl From<SemilinearError> for Diagnostic {
    fn from(e: SemilinearError) -> Self {
        match e {
            SemilinearError::SearchCapExceeded => Diagnostic::CapExceeded(e.to_string()),
            e => Diagnostic::Internal(e.to_string()),
        }
    }
}

/// Justification of a `No`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certificate {
    /// Every derivation from the input stays below `cap` and none ends at
    /// the target.
    ClosedExploration { cap: i64 },
    /// No output in `[target, b_max]`, which suffices without negative cycles.
    NoOutputUpTo { target: i64, b_max: i64 },
    /// No derivation has the required effect, whatever its validity.
    EffectObstruction,
    /// A counter is negative or the initial nonterminal derives nothing.
    Trivial,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Certificate::ClosedExploration { cap } => write!(f, "exploration closed below counter {cap}"),
            Certificate::NoOutputUpTo { target, b_max } => write!(f, "no output in [{target}, {b_max}]"),
            Certificate::EffectObstruction => write!(f, "no derivation has this effect"),
            Certificate::Trivial => write!(f, "empty relation"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// A complete derivation of the analysed grammar valid at the input.
    Yes { witness: Tree, output: i64 },
    No(Certificate),
    Unknown(Diagnostic),
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::Yes { .. })
    }

    pub fn is_no(&self) -> bool {
        matches!(self, Verdict::No(_))
    }

    pub fn tri(&self) -> Tri {
        match self {
            Verdict::Yes { .. } => Tri::Yes,
            Verdict::No(_) => Tri::No,
            Verdict::Unknown(_) => Tri::Unknown,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReachError {
    NotThin,
    NegativeCycleExists,
    CapExceeded(String),
}

impl fmt::Display for ReachError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReachError::NotThin => write!(f, "grammar is not thin"),
            ReachError::NegativeCycleExists => write!(f, "grammar has a simple cycle of negative effect"),
            ReachError::CapExceeded(s) => write!(f, "cap exceeded: {s}"),
        }
    }
}

/// All `(a, b)` in `[0, window]^2` joined by a complete derivation of at most
/// `max_nodes` nodes whose counters stay in `[0, max_counter]`.
pub fn brute_window(g: &Gvas, window: i64, budget: Budget) -> BTreeSet<(i64, i64)> {
    let g = binarize(g);
    let cap = budget.max_counter.max(window);
    let w = cap as usize + 1;
    let size = min_sizes(&g, cap, budget.max_nodes);
    let row = &size[g.start().index()];
    let mut out = BTreeSet::new();
    for a in 0..=window {
        for b in 0..=window {
            if (row[a as usize * w + b as usize] as usize) <= budget.max_nodes {
                out.insert((a, b));
            }
        }
    }
    out
}

fn checked_yes(g: &Gvas, a: i64, t: Tree) -> Verdict {
    let d = Derivation::from_tree(&t, &mut IdGen::new());
    match annotate(&d, a) {
        Ok(cd) if d.produced_by(g) => Verdict::Yes { output: cd.root_output(), witness: t },
        _ => Verdict::Unknown(Diagnostic::Internal(String::from("witness failed validation"))),
    }
}

/// Reachability in a thin grammar by counter-capped saturation. `No` only
/// when the exploration is closed below the cap.
pub fn thin_reach(h: &Gvas, a: i64, b: i64, budget: Budget) -> Result<Verdict, ReachError> {
    if !is_thin(h) {
        return Err(ReachError::NotThin);
    }
    Ok(oracle_reach(h, a, b, budget))
}

fn oracle_reach(h: &Gvas, a: i64, b: i64, budget: Budget) -> Verdict {
    if a < 0 || b < 0 {
        return Verdict::No(Certificate::Trivial);
    }
    let h = binarize(h);
    let mut o = BoundedOracle::new(&h, budget.max_counter, budget.max_steps);
    if o.rules_out_effect(h.start(), b - a) {
        return Verdict::No(Certificate::EffectObstruction);
    }
    match o.reach(h.start(), a, b) {
        Tri::Yes => match o.witness(h.start(), a, b) {
            Some(t) => checked_yes(&h, a, t),
            None => Verdict::Unknown(Diagnostic::Internal(String::from("no witness for a saturated pair"))),
        },
        Tri::No => Verdict::No(Certificate::ClosedExploration { cap: o.cap() }),
        Tri::Unknown => Verdict::Unknown(Diagnostic::CapExceeded(format!(
            "counter cap {} or {} steps reached",
            budget.max_counter, budget.max_steps
        ))),
    }
}

/// Three-valued answers of [`thin_reach`] on every point of `[0, window]^2`,
/// sharing one saturation.
pub fn thin_window(h: &Gvas, window: i64, budget: Budget) -> Result<BTreeMap<(i64, i64), Tri>, ReachError> {
    if !is_thin(h) {
        return Err(ReachError::NotThin);
    }
    let h = binarize(h);
    let mut o = BoundedOracle::new(&h, budget.max_counter, budget.max_steps);
    let mut out = BTreeMap::new();
    for a in 0..=window {
        for b in 0..=window {
            out.insert((a, b), o.reach(h.start(), a, b));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputBounds {
    pub m: i64,
    pub b_max: i64,
    pub t: i64,
}

/// `m (n+1) (B + 2 m n) + 2 (d+1) m (n+1)`.
pub fn b_max_formula(m: i64, n: i64, b: i64, d: i64) -> i64 {
    m * (n + 1) * (b + 2 * m * n) + 2 * (d + 1) * m * (n + 1)
}

/// `B + |Top| m`.
pub fn no_jump_threshold(b: i64, top: i64, m: i64) -> i64 {
    b + top * m
}

const IRREDUCIBLE_NODES: usize = 21;

/// Bounds on the least output `>= B` of a grammar without negative cycles.
/// `m` bounds the effect and required input of every irreducible derivation
/// (searched up to a node cap) and the effect of every positive simple cycle,
/// and is at least 1.
pub fn output_bounds(g: &Gvas, b: i64) -> Result<OutputBounds, ReachError> {
    let g = binarize(g);
    let cycles = simple_cycles(&g).map_err(|e| ReachError::CapExceeded(e.to_string()))?;
    if cycles.iter().any(|c| c.global < 0) {
        return Err(ReachError::NegativeCycleExists);
    }
    let mut m = cycles.iter().filter(|c| c.global > 0).map(|c| c.global).max().unwrap_or(1).max(1);
    for x in g.nonterminals() {
        for t in enumerate_complete(&g, x, IRREDUCIBLE_NODES) {
            let d = Derivation::from_tree(&t, &mut IdGen::new());
            if is_irreducible(&g, &d) {
                m = m.max(t.effect().abs()).max(t.required_input());
            }
        }
    }
    let dag = component_dag(&g);
    let n = g.nt_count() as i64;
    let depth = dag.depth() as i64;
    let top = dag.top_nts().len() as i64;
    Ok(OutputBounds { m, b_max: b_max_formula(m, n, b, depth), t: no_jump_threshold(b, top, m) })
}

/// Whether some output `>= target` is reachable from `a`. Without negative
/// cycles the search is confined to `[target, b_max]` and a `No` is
/// definitive.
pub fn cover(g: &Gvas, a: i64, target: i64, budget: Budget) -> Verdict {
    cover_answer(g, a, target, budget).verdict
}

/// A verdict with the grammar its witness derives in.
#[derive(Clone, Debug)]
pub struct Answer {
    pub verdict: Verdict,
    pub grammar: Gvas,
}

/// [`cover`], with the binarized and trimmed grammar of the witness.
pub fn cover_answer(g: &Gvas, a: i64, target: i64, budget: Budget) -> Answer {
    let g = binarize(g).trim();
    let verdict = cover_in(&g, a, target, budget);
    Answer { verdict, grammar: g }
}

fn cover_in(g: &Gvas, a: i64, target: i64, budget: Budget) -> Verdict {
    if a < 0 {
        return Verdict::No(Certificate::Trivial);
    }
    let target = target.max(0);
    let bounds = output_bounds(g, target.max(a + 1)).ok();
    let cap = match bounds {
        Some(bd) => budget.max_counter.max(bd.b_max),
        None => budget.max_counter,
    };
    let mut o = BoundedOracle::new(g, cap, budget.max_steps);
    let x = g.start();
    let upper = bounds.map_or(cap, |bd| bd.b_max);
    let mut unknown = false;
    for b in target..=upper {
        match o.reach(x, a, b) {
            Tri::Yes => match o.witness(x, a, b) {
                Some(t) => return checked_yes(g, a, t),
                None => unknown = true,
            },
            Tri::No => {}
            Tri::Unknown => unknown = true,
        }
    }
    if let (Some(bd), false) = (bounds, unknown) {
        return Verdict::No(Certificate::NoOutputUpTo { target, b_max: bd.b_max });
    }
    match o.cover(x, a, target) {
        Tri::No => Verdict::No(Certificate::ClosedExploration { cap: o.cap() }),
        _ => Verdict::Unknown(Diagnostic::CapExceeded(format!("no output found in [{target}, {upper}]"))),
    }
}

/// A thin grammar that agrees with `g` on `{a} x [T, oo)`, together with `T`.
/// `g` must be trimmed, binarized and top-branching; its lower nonterminals
/// are already thin.
pub fn small_lines(g: &Gvas, a: i64, budget: Budget) -> Result<(i64, Gvas), Diagnostic> {
    let inf = is_infinitary(g)?;
    if !inf.holds() {
        let ds = simple_derivations(g, g.start(), Caps::default())?;
        let top = ds.iter().map(|(e, _, _)| *e).max().unwrap_or(0);
        return Ok((1 + top + a, Gvas::empty(g.name(g.start()))));
    }
    let consts = constants_of(g)?;
    let mut oracle = BoundedOracle::new(g, budget.max_counter, budget.max_steps);
    let opts = SupertreeOptions { until_success: true, ..SupertreeOptions::default() };
    let st = build_supertree(g, a, &consts, &mut oracle, opts)?;
    if let Some(s) = st.successes().next().map(|s| s.id) {
        let th = success_semilinear(&st, s, &consts, &mut oracle, ThresholdOptions::default())?;
        return Ok((th.t, semilin_to_thin(&diagonal_closure(&th.rep)?)?));
    }
    Ok((0, leaves_to_thin(&st, &BTreeMap::new())?))
}

/// All `(x + k, y + k)` for `(x, y)` in `s`. Contained in any reachability
/// relation containing `s`, since a run valid at `x` is valid at `x + k`.
pub fn diagonal_closure(s: &SemilinearRelation) -> Result<SemilinearRelation, SemilinearError> {
    let mut parts = Vec::new();
    for l in &s.parts {
        let mut ps = l.periods.clone();
        if !ps.contains(&(1, 1)) {
            ps.push((1, 1));
        }
        parts.push(LinearSet2::new(l.base, ps)?);
    }
    Ok(SemilinearRelation::from_parts(parts))
}

/// Union of thin grammars under a fresh initial nonterminal.
pub fn union_of(start: &str, parts: &[Gvas]) -> Gvas {
    let mut h = Gvas::empty(start);
    let s = h.start();
    for p in parts {
        let map = h.embed(p, start);
        h.add_rule(s, vec![Symbol::Nt(map[p.start().index()]), Symbol::T(0)]);
    }
    h
}

/// A thin grammar agreeing with `g` outside `[0, B']^2`, and `B'`: far from
/// the axes, plus vertical and horizontal lines below the far bound.
pub fn outside_box(g: &Gvas, budget: Budget) -> Result<(i64, Gvas), Diagnostic> {
    let far = far_from_axis(g)?;
    let mut bound = far.b;
    let mut parts = vec![far.h];
    let rev = reverse(g);
    for a in 0..far.b {
        let (t, h) = small_lines(g, a, budget)?;
        bound = bound.max(t);
        parts.push(h);
        let (t, h) = small_lines(&rev, a, budget)?;
        bound = bound.max(t);
        parts.push(reverse(&h));
    }
    Ok((bound, union_of(g.name(g.start()), &parts)))
}

/// An equivalent thin grammar for a top-branching `g`, given for every top
/// nonterminal `X` a thin grammar agreeing with `g` started at `X` outside
/// `[0, B]^2`. Every point of the box reachable in `g` gets one initial rule:
/// the yield of a witness cut at its lower nodes and at nodes with a counter
/// above `B`, where the thin grammars take over.
pub fn bounded_area(g: &Gvas, b: i64, outside: &BTreeMap<Nt, Gvas>, budget: Budget) -> Result<Gvas, Diagnostic> {
    let dag = component_dag(g);
    let x0 = g.start();
    let mut h = Gvas::empty(g.name(x0));
    let s = h.start();
    let mut top_map = BTreeMap::new();
    for (&x, hx) in outside {
        let map = h.embed(hx, g.name(x));
        top_map.insert(x, map[hx.start().index()]);
    }
    let Some(&start_h) = top_map.get(&x0) else {
        return Err(Diagnostic::Internal(String::from("no outer grammar for the initial nonterminal")));
    };
    h.add_rule(s, vec![Symbol::Nt(start_h), Symbol::T(0)]);
    let mut lower = g.clone();
    for &x in dag.top_nts() {
        lower.clear_rules(x);
    }
    let low_map = h.embed(&lower, "L");
    let mut oracle = BoundedOracle::new(g, budget.max_counter.max(b), budget.max_steps);
    let mut seen = BTreeSet::new();
    for a in 0..=b {
        for c in 0..=b {
            match oracle.reach(x0, a, c) {
                Tri::No => continue,
                Tri::Unknown => return Err(Diagnostic::OracleUnknown(format!("box point ({a}, {c})"))),
                Tri::Yes => {}
            }
            let t = oracle.witness(x0, a, c).ok_or(Diagnostic::Internal(String::from("missing witness")))?;
            let mut alpha = Vec::new();
            cut(&t, a, b, &|x| dag.is_top(x), &mut alpha);
            let alpha: Vec<Symbol> = alpha
                .into_iter()
                .map(|s| match s {
                    Cut::T(v) => Ok(Symbol::T(v)),
                    Cut::Low(v) => Ok(Symbol::Nt(low_map[v.index()])),
                    Cut::Top(x) => top_map
                        .get(&x)
                        .map(|&y| Symbol::Nt(y))
                        .ok_or(Diagnostic::Internal(String::from("no outer grammar for a top nonterminal"))),
                })
                .collect::<Result<_, _>>()?;
            if seen.insert(alpha.clone()) {
                h.add_rule_binarized(s, &alpha);
            }
        }
    }
    Ok(h.trim())
}

enum Cut {
    T(i64),
    Low(Nt),
    Top(Nt),
}

/// Appends the cut yield of `t` run from `i`; returns the output.
fn cut(t: &Tree, i: i64, b: i64, is_top: &dyn Fn(Nt) -> bool, out: &mut Vec<Cut>) -> i64 {
    let o = i + t.effect();
    match t {
        Tree::Leaf(Symbol::T(v)) => out.push(Cut::T(*v)),
        Tree::Leaf(Symbol::Nt(x)) => out.push(if is_top(*x) { Cut::Top(*x) } else { Cut::Low(*x) }),
        Tree::Node(x, l, r) => {
            if !is_top(*x) {
                out.push(Cut::Low(*x));
            } else if i > b || o > b {
                out.push(Cut::Top(*x));
            } else {
                let m = cut(l, i, b, is_top, out);
                cut(r, m, b, is_top, out);
            }
        }
    }
    o
}

/// For every top nonterminal of a trimmed, binarized, top-branching `g`, by
/// name: a thin grammar agreeing with `g` started there outside `[0, B]^2`;
/// and the common `B`.
pub fn outer_grammars(g: &Gvas, budget: Budget) -> Result<(i64, BTreeMap<String, Gvas>), Diagnostic> {
    let dag = component_dag(g);
    let mut outside = BTreeMap::new();
    let mut bound = 0;
    for &x in dag.top_nts() {
        let gx = g.with_start(x).trim();
        let (bx, hx) = outside_box(&gx, budget)?;
        bound = bound.max(bx);
        outside.insert(String::from(g.name(x)), hx);
    }
    Ok((bound, outside))
}

fn by_nt(g: &Gvas, outer: &BTreeMap<String, Gvas>) -> Result<BTreeMap<Nt, Gvas>, Diagnostic> {
    outer
        .iter()
        .map(|(name, h)| {
            g.lookup(name)
                .map(|x| (x, h.clone()))
                .ok_or_else(|| Diagnostic::Internal(format!("no nonterminal {name}")))
        })
        .collect()
}

/// Thin equivalent of a trimmed, binarized, top-branching grammar whose
/// lower nonterminals are thin.
pub fn thin_top_branching(g: &Gvas, budget: Budget) -> Result<Gvas, Diagnostic> {
    let (bound, outer) = outer_grammars(g, budget)?;
    bounded_area(g, bound, &by_nt(g, &outer)?, budget)
}

/// An equivalent thin grammar, built bottom-up: each branching component
/// whose lower components are all thin is replaced, nonterminal by
/// nonterminal, by the thin equivalent of the grammar started there.
pub fn thinify(g: &Gvas, budget: Budget) -> Result<Gvas, Diagnostic> {
    let mut g = binarize(g).trim();
    loop {
        let dag = component_dag(&g);
        let ready = (0..dag.components.len()).find(|&c| {
            dag.class[c] == Class::Branching
                && dag.below(c).into_iter().all(|d| d == c || dag.class[d] == Class::Thin)
        });
        let Some(c) = ready else {
            return Ok(g);
        };
        let members = dag.components[c].clone();
        // members of one component reach the same nonterminals, so the outer
        // grammars are shared
        let (bound, outer) = outer_grammars(&g.with_start(members[0]).trim(), budget)?;
        let mut thin = Vec::new();
        for &x in &members {
            let gx = g.with_start(x).trim();
            let hx = bounded_area(&gx, bound, &by_nt(&gx, &outer)?, budget)?;
            if !is_thin(&hx) {
                return Err(Diagnostic::Internal(format!("thin equivalent of {} is branching", g.name(x))));
            }
            thin.push(hx);
        }
        let mut out = g.clone();
        for (&x, hx) in members.iter().zip(&thin) {
            out.clear_rules(x);
            let map = out.embed(hx, g.name(x));
            out.add_rule(x, vec![Symbol::Nt(map[hx.start().index()]), Symbol::T(0)]);
        }
        g = out.trim();
    }
}

/// Reachability: thinification, then thin reachability. Yes witnesses are
/// derivations of the thin grammar and are re-checked.
pub fn reach(g: &Gvas, a: i64, b: i64, budget: Budget) -> Verdict {
    reach_answer(g, a, b, budget).verdict
}

/// [`reach`], with the thin grammar of the witness (the binarized grammar
/// when thinification gives up).
pub fn reach_answer(g: &Gvas, a: i64, b: i64, budget: Budget) -> Answer {
    let gb = binarize(g).trim();
    if a < 0 || b < 0 || !gb.productive()[gb.start().index()] {
        return Answer { verdict: Verdict::No(Certificate::Trivial), grammar: gb };
    }
    let h = match thinify(&gb, budget) {
        Ok(h) => h,
        Err(d) => return Answer { verdict: Verdict::Unknown(d), grammar: gb },
    };
    let verdict = match thin_reach(&h, a, b, budget) {
        Ok(v) => v,
        Err(e) => Verdict::Unknown(Diagnostic::Internal(e.to_string())),
    };
    Answer { verdict, grammar: h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::grammar::parse_gvas;
    use proptest::prelude::*;

    fn load(text: &str) -> Gvas {
        binarize(&parse_gvas(text).unwrap()).trim()
    }

    fn pow2(a: i64) -> i64 {
        1 << a
    }

    fn small() -> Budget {
        Budget { max_nodes: 8, max_counter: 4, max_steps: 1_000 }
    }

    fn window_of(h: &Gvas, w: i64) -> BTreeSet<(i64, i64)> {
        let all = thin_window(h, w, Budget::default()).unwrap();
        assert!(all.values().all(|t| *t != Tri::Unknown));
        all.into_iter().filter(|(_, t)| *t == Tri::Yes).map(|(p, _)| p).collect()
    }

    #[test]
    fn trivial_window_is_the_diagonal() {
        let w = brute_window(&load("start S\nS -> 0 0\n"), 3, Budget::default());
        assert_eq!(w, (0..=3).map(|a| (a, a)).collect());
    }

    #[test]
    fn g1_window_row_two() {
        let w = brute_window(&fixtures::g1(), 4, Budget::default());
        for b in 1..=4 {
            assert!(w.contains(&(2, b)));
        }
        assert!(!w.contains(&(2, 5)) && !w.contains(&(2, 0)));
    }

    #[test]
    fn g1_small_window_matches_the_power_law() {
        let w = brute_window(&fixtures::g1(), 6, Budget::default());
        for a in 0..=2 {
            for b in 0..=6 {
                assert_eq!(w.contains(&(a, b)), 1 <= b && b <= pow2(a), "({a},{b})");
            }
        }
    }

    #[test]
    fn thin_reach_on_g1() {
        let g = fixtures::g1();
        assert!(thin_reach(&g, 3, 8, Budget::default()).unwrap().is_yes());
        let v = thin_reach(&g, 2, 5, Budget::default()).unwrap();
        assert!(v.is_no(), "{v:?}");
        for a in 0..=4 {
            for b in 0..=20 {
                let v = thin_reach(&g, a, b, Budget::default()).unwrap();
                assert_eq!(v.tri(), if 1 <= b && b <= pow2(a) { Tri::Yes } else { Tri::No }, "({a},{b})");
            }
        }
    }

    #[test]
    fn thin_reach_yes_carries_a_valid_witness() {
        let g = fixtures::g1();
        let Verdict::Yes { witness, output } = thin_reach(&g, 3, 7, Budget::default()).unwrap() else {
            panic!("expected yes")
        };
        assert_eq!(output, 7);
        let d = Derivation::from_tree(&witness, &mut IdGen::new());
        assert!(d.produced_by(&g));
        assert_eq!(annotate(&d, 3).unwrap().root_output(), 7);
    }

    #[test]
    fn window_agrees_with_single_queries() {
        let g = fixtures::g1();
        let all = thin_window(&g, 6, Budget::default()).unwrap();
        for (&(a, b), t) in &all {
            assert_eq!(*t, thin_reach(&g, a, b, Budget::default()).unwrap().tri());
        }
    }

    #[test]
    fn tiny_budget_is_unknown() {
        let v = thin_reach(&fixtures::g1(), 4, 16, small()).unwrap();
        assert!(matches!(v, Verdict::Unknown(_)), "{v:?}");
    }

    #[test]
    fn thin_reach_rejects_branching() {
        assert_eq!(thin_reach(&fixtures::g6(), 0, 1, Budget::default()), Err(ReachError::NotThin));
    }

    #[test]
    fn effect_certificates() {
        // every derivation has effect >= 2, the closure alone cannot see it
        let g = load("start S\nS -> S S\nS -> 3 -1\n");
        assert_eq!(thin_reach(&g, 0, 0, Budget::default()), Err(ReachError::NotThin));
        let v = oracle_reach(&g, 4, 5, Budget::default());
        assert_eq!(v, Verdict::No(Certificate::EffectObstruction));
        let v = oracle_reach(&fixtures::g2(), 0, 3, Budget::default());
        assert_eq!(v, Verdict::No(Certificate::EffectObstruction));
    }

    #[test]
    fn cover_examples() {
        assert!(cover(&load("start S\nS -> 0 0\n"), 4, 4, Budget::default()).is_yes());
        let g6 = fixtures::g6();
        let bmax = output_bounds(&g6, 7).unwrap().b_max;
        match cover(&g6, 0, 7, Budget::default()) {
            Verdict::Yes { output, .. } => assert!((7..=bmax).contains(&output)),
            v => panic!("{v:?}"),
        }
        assert!(cover(&fixtures::g1(), 2, 5, Budget::default()).is_no());
        assert!(cover(&fixtures::g1(), 2, 4, Budget::default()).is_yes());
    }

    #[test]
    fn cover_is_definitive_without_negative_cycles() {
        let g = load("start S\nS -> S S\nS -> 2 0\n");
        let v = cover(&g, 3, 100, Budget::default());
        assert!(v.is_yes(), "{v:?}");
        let v = cover(&fixtures::trivial(), 3, 4, Budget::default());
        assert!(matches!(v, Verdict::No(Certificate::NoOutputUpTo { target: 4, .. })), "{v:?}");
    }

    #[test]
    fn output_bound_arithmetic() {
        assert_eq!(b_max_formula(2, 3, 5, 0), 152);
        assert_eq!(no_jump_threshold(5, 2, 3), 11);
    }

    #[test]
    fn g6_output_bounds() {
        let bd = output_bounds(&fixtures::g6(), 5).unwrap();
        assert_eq!(bd.m, 1);
        assert_eq!(bd.b_max, b_max_formula(1, 1, 5, 0));
        assert_eq!(bd.t, 6);
    }

    #[test]
    fn negative_cycles_have_no_output_bounds() {
        assert_eq!(output_bounds(&fixtures::g4(), 3), Err(ReachError::NegativeCycleExists));
        assert_eq!(output_bounds(&fixtures::g1(), 3), Err(ReachError::NegativeCycleExists));
    }

    fn line_agrees(g: &Gvas, a: i64, t: i64, h: &Gvas) {
        let want = brute_window(g, t + 10, Budget { max_nodes: 60, ..Budget::default() });
        for b in t..=t + 10 {
            let got = thin_reach(h, a, b, Budget::default()).unwrap();
            assert_eq!(got.is_yes(), want.contains(&(a, b)), "a={a} b={b} {got:?}");
            assert!(got.is_yes() || got.is_no());
        }
        for b in 0..t {
            if thin_reach(h, a, b, Budget::default()).unwrap().is_yes() {
                assert!(want.contains(&(a, b)), "a={a} b={b} not in g");
            }
        }
    }

    #[test]
    fn small_lines_g6() {
        let g = fixtures::g6();
        let (t, h) = small_lines(&g, 0, Budget::default()).unwrap();
        assert!(is_thin(&h));
        line_agrees(&g, 0, t, &h);
    }

    #[test]
    fn small_lines_g4_is_finite() {
        let g = fixtures::g4();
        let (t, h) = small_lines(&g, 3, Budget::default()).unwrap();
        assert!(t >= 4);
        line_agrees(&g, 3, t, &h);
    }

    #[test]
    fn small_lines_g2() {
        let g = fixtures::g2();
        for a in 0..=1 {
            let (t, h) = small_lines(&g, a, Budget::default()).unwrap();
            line_agrees(&g, a, t, &h);
        }
    }

    #[test]
    fn diagonal_closure_adds_the_diagonal() {
        let s = SemilinearRelation::from_parts(vec![LinearSet2::new((0, 2), vec![(0, 2)]).unwrap()]);
        let c = diagonal_closure(&s).unwrap();
        assert!(c.member((3, 5)) && c.member((3, 7)) && !c.member((3, 4)) && !c.member((0, 0)));
    }

    #[test]
    fn bounded_area_on_the_trivial_grammar() {
        let g = load("start S\nS -> 0 0\n");
        let mut outside = BTreeMap::new();
        outside.insert(g.start(), g.clone());
        let h = bounded_area(&g, 0, &outside, Budget::default()).unwrap();
        assert!(is_thin(&h));
        assert_eq!(window_of(&h, 5), brute_window(&g, 5, Budget::default()));
    }

    #[test]
    fn thinify_keeps_thin_grammars() {
        let g = fixtures::g1();
        assert_eq!(thinify(&g, Budget::default()).unwrap(), binarize(&g).trim());
    }

    #[test]
    fn thinify_is_window_exact() {
        for g in [fixtures::g2(), fixtures::g6()] {
            let h = thinify(&g, Budget::default()).unwrap();
            assert!(is_thin(&h));
            assert_eq!(window_of(&h, 8), brute_window(&g, 8, Budget::default()));
        }
    }

    #[test]
    fn reach_examples() {
        let g2 = fixtures::g2();
        assert!(reach(&g2, 0, 2, Budget::default()).is_yes());
        assert!(reach(&g2, 0, 3, Budget::default()).is_no());
        assert!(reach(&load("start S\nS -> 0 0\n"), 5, 5, Budget::default()).is_yes());
        assert_eq!(reach(&g2, -1, 2, Budget::default()), Verdict::No(Certificate::Trivial));
    }

    #[test]
    fn no_survives_a_larger_budget() {
        let big = Budget { max_nodes: 160, max_counter: 1024, max_steps: 200_000_000 };
        let g1 = fixtures::g1();
        for a in 0..=4 {
            for b in 0..=20 {
                if thin_reach(&g1, a, b, Budget::default()).unwrap().is_no() {
                    assert!(!thin_reach(&g1, a, b, big).unwrap().is_yes());
                }
            }
        }
        let h = thinify(&fixtures::g6(), Budget::default()).unwrap();
        for a in 0..=6 {
            for b in 0..=6 {
                if thin_reach(&h, a, b, Budget::default()).unwrap().is_no() {
                    assert!(!thin_reach(&h, a, b, big).unwrap().is_yes());
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn brute_window_is_monotone_in_caps(i in 0usize..30, nodes in 3usize..12, extra in 0usize..10) {
            let g = &fixtures::default_corpus()[i];
            let lo = brute_window(g, 5, Budget { max_nodes: nodes, ..Budget::default() });
            let hi = brute_window(g, 5, Budget { max_nodes: nodes + extra, ..Budget::default() });
            prop_assert!(lo.is_subset(&hi));
        }
    }
}
