//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gvas_core::cycles::{
    constants_from, constants_of, is_infinitary, is_top_branching, plug, pump_candidates, residuum, simple_cycles,
    simple_derivations, smallest_complete, Caps, Constants,
};
use gvas_core::derivation::{annotate, cycle_effects, Derivation, DerivationError, IdGen};
use gvas_core::fixtures;
use gvas_core::grammar::{binarize, component_dag, is_thin, reverse, size_of, Gvas, Nt, Symbol};
use gvas_core::oracle::{BoundedOracle, Saturation, Steps, Tri};
use gvas_core::reach::{
    b_max_formula, brute_window, cover_answer, output_bounds, reach_answer, thin_window, thinify, Budget, Diagnostic,
    Verdict,
};
use gvas_core::region::{lower_triangle_rep, triangle_rep};
use gvas_core::semilinear::{
    line_linear_threshold, semilin_to_thin, LinearSet2, SemilinearRelation, Threshold, ThresholdOptions,
};
use gvas_core::supertree::{
    build_supertree, leaves_to_thin, remove_zero_cycles, replay_double_traversal, success_semilinear, Status,
    Supertree, SupertreeOptions,
};

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, u64, Check); 10] = [
        ("G1 point law", 60, g1_point_law),
        ("residuum of G2", 5, g2_residuum),
        ("counter flow of the two-level derivation", 1, flow_example),
        ("thinify agrees with brute force", 600, thinify_agreement),
        ("infinitary conditions agree", 120, infinitary_coherence),
        ("line thresholds against the oracle", 120, line_thresholds),
        ("supertree structure", 120, supertree_structure),
        ("G2 round trip through the supertree", 180, g2_round_trip),
        ("coverability bounds", 60, coverability),
        ("diagonal relations through thin grammars", 120, diagonal_battery),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = check();
        let took = t.elapsed();
        let result = match result {
            Ok(s) if took > Duration::from_secs(*limit) => Err(format!("{s}; over the {limit} s limit")),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(s) => ("PASS", s),
            Err(s) => ("FAIL", s),
        };
        println!("[{tag}] {:>2} {name}: {detail} ({:.2?})", i + 1, took);
        failed += result.is_err() as usize;
    }
    if failed == 0 {
        println!("all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria fail");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Re-checks a witness: produced by `g`, valid from `a`, ending at `b`.
fn witness_ok(g: &Gvas, t: &gvas_core::derivation::Tree, a: i64, b: i64) -> bool {
    let d = Derivation::from_tree(t, &mut IdGen::new());
    d.is_complete() && d.produced_by(g) && annotate(&d, a).is_ok_and(|c| c.root_output() == b)
}

fn g1_point_law() -> Result<String, String> {
    let g = fixtures::g1();
    let mut yes = 0;
    for a in 1..=4 {
        for b in 0..=20 {
            let ans = reach_answer(&g, a, b, Budget::default());
            let want = 1 <= b && b <= 1 << a;
            match &ans.verdict {
                Verdict::Yes { witness, output } => {
                    ensure(want, || format!("reach({a}, {b}) is yes"))?;
                    ensure(*output == b && witness_ok(&ans.grammar, witness, a, b), || format!("bad witness for ({a}, {b})"))?;
                    yes += 1;
                }
                Verdict::No(_) => ensure(!want, || format!("reach({a}, {b}) is no"))?,
                Verdict::Unknown(d) => return Err(format!("reach({a}, {b}) unknown: {d}")),
            }
        }
    }
    Ok(format!("84 pairs, {yes} reachable, witnesses re-checked"))
}

fn g2_residuum() -> Result<String, String> {
    let g = fixtures::g2();
    let r = residuum(&g).map_err(|e| format!("{e:?}"))?;
    let (x, y) = (g.lookup("X").unwrap(), g.lookup("Y").unwrap());
    let got = (r.d, r.residue(x), r.residue(y));
    ensure(got == (2, 0, 1), || format!("got d, r(X), r(Y) = {got:?}"))?;
    Ok(String::from("d = 2, r(X) = 0, r(Y) = 1"))
}

fn flow_example() -> Result<String, String> {
    // X(Y(-10, 12), -7)
    let mut ids = IdGen::new();
    let (x, y) = (Nt(0), Nt(1));
    let l = Derivation::leaf(&mut ids, Symbol::T(-10));
    let r = Derivation::leaf(&mut ids, Symbol::T(12));
    let yy = Derivation::node(&mut ids, y, l, r);
    let c = Derivation::leaf(&mut ids, Symbol::T(-7));
    let d = Derivation::node(&mut ids, x, yy, c);
    let at20 = annotate(&d, 20).map_err(|e| format!("at 20: {e:?}"))?;
    ensure(at20.root_output() == 15 && at20.flow_ok(), || format!("at 20 the output is {}", at20.root_output()))?;
    ensure(annotate(&d, 10).is_ok(), || String::from("fails at 10"))?;
    let blamed = match annotate(&d, 9) {
        Err(DerivationError::NegativeCounter(n)) => n,
        other => return Err(format!("at 9: {other:?}")),
    };
    ensure(d.label(blamed) == Symbol::T(-10), || format!("blamed {:?}", d.label(blamed)))?;
    Ok(String::from("20 -> 15, 10 ok, 9 blames the -10 leaf"))
}

fn thinify_agreement() -> Result<String, String> {
    let cap = Budget { max_nodes: 40, max_counter: 64, ..Budget::default() };
    let lifted = Budget { max_nodes: 400, max_counter: 64, ..Budget::default() };
    let mut grammars: Vec<(String, Gvas)> = fixtures::named().into_iter().map(|(n, g)| (n.to_string(), g)).collect();
    for (i, g) in fixtures::default_corpus().into_iter().enumerate() {
        grammars.push((format!("c{i:02}"), g));
    }
    let (mut done, mut gave_up, mut unknown, mut relifted) = (0, 0, 0, 0);
    for (name, g) in &grammars {
        let h = match thinify(g, Budget::default()) {
            Ok(h) => h,
            Err(Diagnostic::CapExceeded(_) | Diagnostic::OracleUnknown(_)) => {
                gave_up += 1;
                continue;
            }
            Err(e) => return Err(format!("{name}: {e}")),
        };
        ensure(is_thin(&h), || format!("{name}: output is branching"))?;
        let hw = thin_window(&h, 8, Budget::default()).map_err(|e| format!("{name}: {e:?}"))?;
        let gw = brute_window(g, 8, cap);
        let mut gw_lifted: Option<BTreeSet<(i64, i64)>> = None;
        for (&(a, b), t) in &hw {
            if *t == Tri::Unknown {
                unknown += 1;
                continue;
            }
            let h_yes = *t == Tri::Yes;
            if gw.contains(&(a, b)) != h_yes {
                // a pair of G beyond the node cap
                let big = gw_lifted.get_or_insert_with(|| brute_window(g, 8, lifted));
                ensure(big.contains(&(a, b)) == h_yes, || format!("{name}: ({a}, {b}) is {t:?} in H"))?;
                relifted += 1;
            }
        }
        done += 1;
    }
    Ok(format!(
        "{done} of {} grammars thinified and window-exact, {gave_up} gave up with a diagnostic, {unknown} unknown points, {relifted} pairs needed more than 40 nodes",
        grammars.len()
    ))
}

fn outputs_from(sat: &Saturation, x: Nt, a: i64) -> BTreeSet<usize> {
    sat.rel(x).row_iter(a as usize).collect()
}

fn infinitary_coherence() -> Result<String, String> {
    const K: usize = 40;
    let (mut checked, mut inf) = (0, 0);
    for (i, g0) in fixtures::default_corpus().iter().enumerate() {
        let g = binarize(g0).trim();
        if !is_top_branching(&g) {
            continue;
        }
        checked += 1;
        let cycles = simple_cycles(&g).map_err(|e| format!("c{i:02}: {e:?}"))?;
        let c2 = cycles.iter().any(|c| c.global > 0);
        let w = is_infinitary(&g).map_err(|e| format!("c{i:02}: {e:?}"))?;
        ensure(w.holds() == c2, || format!("c{i:02}: is_infinitary disagrees with the cycle list"))?;
        let (c3, c4) = match &w.pump {
            Some(p) => {
                let mut ids = IdGen::new();
                let d = Derivation::from_tree(&p.tree, &mut ids);
                let e = cycle_effects(&p.cycle(&mut IdGen::new())).map_err(|e| format!("c{i:02}: {e:?}"))?;
                let valid = p.nonterminal == g.start()
                    && d.produced_by(&g)
                    && p.left > 0
                    && p.global() > 0
                    && (e.left, e.right) == (p.left, p.right);
                let small = (p.tree.size() as u128) <= 1u128 << size_of(&g).min(120);
                (valid && small, valid)
            }
            None => {
                // no witness: every simple cycle must be nonpositive and the
                // insertion scheme must find nothing
                let none = cycles.iter().all(|c| c.global <= 0) && pump_candidates(&g, g.start(), &cycles).is_empty();
                ensure(none, || format!("c{i:02}: a pump exists but was not returned"))?;
                (false, false)
            }
        };
        ensure(c2 == c3 && c3 == c4, || format!("c{i:02}: conditions 2, 3, 4 are {c2}, {c3}, {c4}"))?;
        // growing counter caps
        let run = |cap: i64| {
            let mut steps = Steps::new(200_000_000);
            Saturation::run(&g, cap, &mut steps).map_err(|_| format!("c{i:02}: saturation out of steps"))
        };
        let (lo, hi) = (run(64)?, run(256)?);
        if c2 {
            inf += 1;
            let grows = (0..=6).any(|a| {
                let n = outputs_from(&hi, g.start(), a).len();
                n > K && n > outputs_from(&lo, g.start(), a).len()
            });
            ensure(grows, || format!("c{i:02}: infinitary but outputs do not grow with the cap"))?;
        } else {
            let best = simple_derivations(&g, g.start(), Caps::default()).map_err(|e| format!("c{i:02}: {e:?}"))?;
            let max_effect = best.iter().map(|(e, _, _)| *e).max().unwrap_or(0);
            for a in 0..=6 {
                let (o1, o2) = (outputs_from(&lo, g.start(), a), outputs_from(&hi, g.start(), a));
                ensure(o1 == o2, || format!("c{i:02}: outputs from {a} change with the cap"))?;
                ensure(o2.iter().all(|&b| b as i64 <= a + max_effect), || format!("c{i:02}: output above the simple bound"))?;
            }
        }
    }
    Ok(format!("{checked} top-branching corpus grammars, {inf} infinitary, all four conditions agree"))
}

/// Compares the line `{a} x [T, T+10]` of `th.rep` with the oracle on `g`.
fn check_line(g: &Gvas, th: &Threshold) -> Result<usize, String> {
    let mut o = BoundedOracle::new(g, (4 * (th.t + 10)).max(512), 100_000_000);
    for b in th.t..=th.t + 10 {
        let truth = match o.reach(g.start(), th.a, b) {
            Tri::Yes => true,
            Tri::No => false,
            Tri::Unknown => return Err(format!("oracle unknown at ({}, {b})", th.a)),
        };
        ensure(th.rep.member((th.a, b)) == truth, || format!("({}, {b}): rep says {}, T = {}", th.a, !truth, th.t))?;
    }
    Ok(11)
}

fn consts(g: &Gvas, a: Option<i64>) -> Result<Constants, String> {
    let mut c = constants_of(g).map_err(|e| format!("{e:?}"))?;
    if let Some(a) = a {
        c.a = a;
        (c.d, c.dp) = constants_from(a, component_dag(g).top_nts().len());
    }
    Ok(c)
}

fn supertree(g: &Gvas, a: i64, c: &Constants) -> Result<Supertree, String> {
    let mut o = BoundedOracle::new(g, 256, 10_000_000);
    build_supertree(g, a, c, &mut o, SupertreeOptions::default()).map_err(|e| format!("build at {a}: {e:?}"))
}

/// A line threshold called directly on the pump of `g`, plugged with the
/// smallest complete derivation.
fn direct_threshold(g: &Gvas, a: i64, opts: ThresholdOptions) -> Result<Threshold, String> {
    let p = is_infinitary(g).map_err(|e| format!("{e:?}"))?.pump.ok_or("no pump")?;
    let x = p.nonterminal;
    let small = smallest_complete(g);
    let inner = small[x.index()].as_ref().ok_or("no complete derivation")?;
    let tau = plug(&p.tree, x, 0, inner);
    let a = a.max(tau.required_input());
    let d = Derivation::from_tree(&tau, &mut IdGen::new());
    let root = d.root();
    let dist = d
        .ids()
        .find(|&n| {
            n != root
                && d.label(n) == Symbol::Nt(x)
                && d.subtree_tree(n) == **inner
                && d.tree_with_hole(root, Some(n)) == p.tree
        })
        .ok_or("hole not found")?;
    line_linear_threshold(g, a, &d, root, dist, opts).map_err(|e| format!("{e:?}"))
}

fn line_thresholds() -> Result<String, String> {
    let raw = ThresholdOptions { tighten: false, ..ThresholdOptions::default() };
    let (mut lines, mut points) = (0, 0);
    let mut check = |g: &Gvas, th: &Threshold, what: &str| -> Result<(), String> {
        points += check_line(g, th).map_err(|e| format!("{what}: {e}"))?;
        lines += 1;
        Ok(())
    };
    for (name, g) in [("G2", fixtures::g2()), ("G6", fixtures::g6())] {
        for opts in [ThresholdOptions::default(), raw] {
            for a in [0, 1, 3] {
                let th = direct_threshold(&g, a, opts)?;
                check(&g, &th, &format!("{name} direct from {a}"))?;
            }
        }
        let starts: Vec<Nt> = g.nonterminals().filter(|&x| component_dag(&g).is_top(x)).collect();
        for x in starts {
            let gx = g.with_start(x).trim();
            let up = triangle_rep(&gx).map_err(|e| format!("{name}: {e:?}"))?;
            check(&gx, up.threshold.as_ref().ok_or("no threshold")?, &format!("{name} upper triangle"))?;
            // the reverse of G6 only has negative cycles
            let down = lower_triangle_rep(&gx).map_err(|e| format!("{name}: {e:?}"))?;
            if let Some(th) = &down.threshold {
                check(&reverse(&gx), th, &format!("{name} lower triangle"))?;
            }
        }
        let c = consts(&g, None)?;
        for a in 0..=2 {
            let st = supertree(&g, a, &c)?;
            for s in st.successes().map(|s| s.id).collect::<Vec<_>>() {
                let mut o = BoundedOracle::new(&g, 256, 10_000_000);
                let th = success_semilinear(&st, s, &c, &mut o, ThresholdOptions::default()).map_err(|e| format!("{e:?}"))?;
                check(&g, &th, &format!("{name} success from {a}"))?;
            }
        }
    }
    Ok(format!("{lines} thresholds on G2 and G6, {points} points, no discrepancy"))
}

fn supertree_structure() -> Result<String, String> {
    let (mut builds, mut neutral) = (0, 0);
    for (name, g) in [("G2", fixtures::g2()), ("G6", fixtures::g6())] {
        for big in [None, Some(2), Some(3)] {
            let c = consts(&g, big)?;
            for a in 0..=3 {
                let st = supertree(&g, a, &c)?;
                let at = || format!("{name} from {a} with A = {}", c.a);
                st.check_invariants().map_err(|e| format!("{}: {e}", at()))?;
                for s in &st.nodes {
                    let pd = &s.pd;
                    ensure(pd.flow_ok(), || format!("{}: flow at supernode {}", at(), s.id))?;
                    match s.status {
                        Status::Neutral => {
                            neutral += 1;
                            let anc = pd.ancestors();
                            let pairs: BTreeSet<_> = anc.iter().filter_map(|&m| pd.pair(m)).collect();
                            ensure(pairs.len() == anc.len(), || format!("{}: repeated pair at {}", at(), s.id))?;
                            ensure(anc.len() as i64 <= st.d, || format!("{}: depth above D at {}", at(), s.id))?;
                            ensure(s.stopped == s.children.is_empty(), || format!("{}: leaf discipline at {}", at(), s.id))?;
                        }
                        Status::Successful | Status::Failed => {
                            ensure(s.children.is_empty(), || format!("{}: {:?} inner node {}", at(), s.status, s.id))?
                        }
                    }
                }
                builds += 1;
            }
        }
    }
    Ok(format!("{builds} builds, {neutral} neutral supernodes checked"))
}

/// The thin grammar of a single neutral superleaf.
fn leaf_grammar(st: &Supertree, leaf: usize) -> Result<Gvas, String> {
    let mut one = st.clone();
    for s in &mut one.nodes {
        if s.status == Status::Successful {
            s.status = Status::Failed;
        }
        if s.id != leaf {
            s.stopped = false;
        }
    }
    leaves_to_thin(&one, &BTreeMap::new()).map_err(|e| format!("{e:?}"))
}

fn g2_round_trip() -> Result<String, String> {
    let g = fixtures::g2();
    let mut oracle = BoundedOracle::new(&g, 256, 10_000_000);
    let (mut by_rep, mut by_leaf, mut pairs) = (0, 0, 0);
    for big in [None, Some(3)] {
        let c = consts(&g, big)?;
        for a in 0..=1 {
            let st = supertree(&g, a, &c)?;
            let mut reps = Vec::new();
            for s in st.successes().map(|s| s.id).collect::<Vec<_>>() {
                let mut o = BoundedOracle::new(&g, 256, 10_000_000);
                reps.push(success_semilinear(&st, s, &c, &mut o, ThresholdOptions::default()).map_err(|e| format!("{e:?}"))?);
            }
            for b in 0..=10 {
                match oracle.reach(g.start(), a, b) {
                    Tri::No => continue,
                    Tri::Unknown => return Err(format!("oracle unknown at ({a}, {b})")),
                    Tri::Yes => {}
                }
                pairs += 1;
                let in_rep = reps.iter().any(|th| b >= th.t && th.rep.member((a, b)));
                let t = oracle.witness(g.start(), a, b).ok_or("no witness")?;
                let d = Derivation::from_tree(&t, &mut IdGen::new());
                let cd = remove_zero_cycles(&annotate(&d, a).map_err(|e| format!("{e:?}"))?);
                let leaf = replay_double_traversal(&st, &cd).map_err(|e| format!("replay ({a}, {b}): {e:?}"))?;
                let s = &st.nodes[leaf];
                ensure(s.children.is_empty() && s.status != Status::Failed, || {
                    format!("({a}, {b}) replays to supernode {leaf} ({:?})", s.status)
                })?;
                let mut leaf_ok = false;
                if s.status == Status::Neutral {
                    let h = leaf_grammar(&st, leaf)?;
                    let mut ho = BoundedOracle::new(&h, 256, 10_000_000);
                    if let Some(w) = ho.witness(h.start(), a, b) {
                        ensure(witness_ok(&h, &w, a, b), || format!("({a}, {b}): invalid superleaf run"))?;
                        leaf_ok = true;
                    }
                }
                ensure(in_rep || leaf_ok, || format!("({a}, {b}) is neither in a success line nor derived by its superleaf"))?;
                by_rep += in_rep as usize;
                by_leaf += leaf_ok as usize;
            }
        }
    }
    Ok(format!("{pairs} pairs, all replayed: {by_rep} in a success line above T, {by_leaf} derived by their neutral superleaf"))
}

fn coverability() -> Result<String, String> {
    ensure(b_max_formula(2, 3, 5, 0) == 152, || format!("b_max(2, 3, 5, 0) = {}", b_max_formula(2, 3, 5, 0)))?;
    let (mut yes, mut no, mut grammars) = (0, 0, 0);
    for (name, g) in fixtures::named() {
        let gb = binarize(&g).trim();
        let cycles = simple_cycles(&gb).map_err(|e| format!("{name}: {e:?}"))?;
        if cycles.iter().any(|c| c.global < 0) {
            continue;
        }
        grammars += 1;
        for a in 0..=4 {
            for target in 0..=8 {
                let bounds = output_bounds(&gb, target.max(a + 1)).map_err(|e| format!("{name}: {e:?}"))?;
                let ans = cover_answer(&g, a, target, Budget::default());
                match &ans.verdict {
                    Verdict::Yes { witness, output } => {
                        ensure(witness_ok(&ans.grammar, witness, a, *output), || format!("{name}: bad witness for ({a}, {target})"))?;
                        ensure((target..=bounds.b_max).contains(output), || {
                            format!("{name}: output {output} outside [{target}, {}]", bounds.b_max)
                        })?;
                        yes += 1;
                    }
                    Verdict::No(_) => {
                        let w = brute_window(&g, 3 * (a + target) + 8, Budget { max_nodes: 30, max_counter: 64, ..Budget::default() });
                        ensure(!w.iter().any(|&(x, y)| x == a && y >= target), || format!("{name}: ({a}, {target}) is coverable"))?;
                        no += 1;
                    }
                    Verdict::Unknown(d) => return Err(format!("{name}: ({a}, {target}) unknown: {d}")),
                }
            }
        }
    }
    Ok(format!("b_max(2, 3, 5, 0) = 152; {grammars} fixtures, {yes} yes with witnesses in range, {no} no"))
}

/// Points of `base + periods*` up to `w`, by closure under the periods.
fn enumerate(l: &LinearSet2, w: i64) -> BTreeSet<(i64, i64)> {
    let mut out = BTreeSet::new();
    let mut stack = vec![l.base];
    while let Some(p) = stack.pop() {
        if p.0 > w || p.1 > w || !out.insert(p) {
            continue;
        }
        stack.extend(l.periods.iter().map(|q| (p.0 + q.0, p.1 + q.1)));
    }
    out
}

/// Base and extra periods of each linear set of a relation.
type Parts = &'static [((i64, i64), &'static [(i64, i64)])];

fn diagonal_battery() -> Result<String, String> {
    let sets: [Parts; 15] = [
        &[((0, 0), &[])],
        &[((2, 3), &[])],
        &[((0, 5), &[(0, 3)])],
        &[((4, 0), &[(2, 0)])],
        &[((1, 1), &[(1, 2)])],
        &[((0, 0), &[(0, 2), (3, 0)])],
        &[((3, 7), &[(2, 5)]), ((0, 0), &[])],
        &[((0, 2), &[(1, 3), (3, 1)])],
        &[((5, 5), &[(0, 1)]), ((6, 0), &[(1, 0)])],
        &[((1, 0), &[(0, 4)]), ((0, 1), &[(4, 0)]), ((2, 2), &[])],
        &[((0, 0), &[(2, 2), (0, 5)])],
        &[((7, 1), &[])],
        &[((0, 3), &[(1, 0), (0, 1)])],
        &[((2, 0), &[(3, 2)]), ((0, 9), &[])],
        &[((0, 0), &[(4, 1), (1, 4), (2, 3)])],
    ];
    let mut points = 0;
    for (i, parts) in sets.iter().enumerate() {
        // every part gets the diagonal period
        let parts: Vec<LinearSet2> = parts
            .iter()
            .map(|(b, ps)| LinearSet2::new(*b, ps.iter().copied().chain([(1, 1)]).collect()).unwrap())
            .collect();
        let s = SemilinearRelation::from_parts(parts.clone());
        let h = semilin_to_thin(&s).map_err(|e| format!("relation {i}: {e:?}"))?;
        ensure(is_thin(&h), || format!("relation {i}: grammar is branching"))?;
        let want: BTreeSet<(i64, i64)> = parts.iter().flat_map(|l| enumerate(l, 10)).collect();
        ensure(s.window(10) == want, || format!("relation {i}: membership disagrees with enumeration"))?;
        let hw = thin_window(&h, 10, Budget::default()).map_err(|e| format!("relation {i}: {e:?}"))?;
        for (&p, t) in &hw {
            ensure(*t != Tri::Unknown, || format!("relation {i}: {p:?} unknown"))?;
            ensure((*t == Tri::Yes) == want.contains(&p), || format!("relation {i}: {p:?} is {t:?}"))?;
        }
        points += want.len();
    }
    Ok(format!("15 relations, {points} member points in [0,10]^2, all windows exact"))
}
