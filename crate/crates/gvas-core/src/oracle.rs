//! Counter-bounded saturation of the reachability relation.
//!
//! For a cap `M`, `R_M(X)` is the set of pairs `(i, o)` such that some
//! complete `X`-derivation runs from `i` to `o` with every counter in
//! `[0, M]`. It is computed as a least fixpoint over bitset rows.
//!
//! The closure relation `E_M(X)` over-approximates the pairs `(i, o)` in
//! `[0, M]^2` that are connected by some derivation touching a counter above
//! `M`. A pair outside both relations is not reachable at all.

use alloc::vec;
use alloc::vec::Vec;

use crate::derivation::Tree;
use crate::grammar::{Gvas, Nt, Symbol};
use alloc::rc::Rc;

/// Square bit matrix over `[0, M]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitRel {
    w: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitRel {
    pub fn new(w: usize) -> BitRel {
        let words = w.div_ceil(64);
        BitRel { w, words, bits: vec![0; w * words] }
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn get(&self, i: usize, o: usize) -> bool {
        self.bits[i * self.words + o / 64] >> (o % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, o: usize) {
        self.bits[i * self.words + o / 64] |= 1 << (o % 64);
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.bits[i * self.words..(i + 1) * self.words]
    }

    pub fn row_iter(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        ones(self.row(i))
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn transpose(&self) -> BitRel {
        let mut t = BitRel::new(self.w);
        for i in 0..self.w {
            for o in self.row_iter(i) {
                t.set(o, i);
            }
        }
        t
    }
}

pub fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(k, &w)| {
        let mut w = w;
        core::iter::from_fn(move || {
            if w == 0 {
                return None;
            }
            let b = w.trailing_zeros() as usize;
            w &= w - 1;
            Some(k * 64 + b)
        })
    })
}

fn or_into(dst: &mut [u64], src: &[u64]) -> bool {
    let mut changed = false;
    for (d, s) in dst.iter_mut().zip(src) {
        let n = *d | *s;
        changed |= n != *d;
        *d = n;
    }
    changed
}

/// Step counter shared by the bounded searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Steps {
    pub used: u64,
    pub limit: u64,
}

impl Steps {
    pub fn new(limit: u64) -> Steps {
        Steps { used: 0, limit }
    }

    fn spend(&mut self, n: u64) -> bool {
        self.used = self.used.saturating_add(n);
        self.used <= self.limit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutOfSteps;

/// `R_M` for every nonterminal, with the time each pair was first derived
/// (used to extract well-founded witnesses).
pub struct Saturation<'g> {
    g: &'g Gvas,
    cap: usize,
    rel: Vec<BitRel>,
    time: Vec<Vec<u32>>,
}

impl<'g> Saturation<'g> {
    pub fn run(g: &'g Gvas, cap: i64, steps: &mut Steps) -> Result<Saturation<'g>, OutOfSteps> {
        let cap = cap.max(0) as usize;
        let w = cap + 1;
        let n = g.nt_count();
        let mut rel = vec![BitRel::new(w); n];
        let mut time = vec![vec![u32::MAX; w * w]; n];
        let mut clock: u32 = 1;
        let mut version = vec![1u64; n];
        let mut seen = vec![(u64::MAX, u64::MAX); g.rules().len()];
        let mut tmp = vec![0u64; rel[0].words];
        loop {
            let mut changed = false;
            for (ri, r) in g.rules().iter().enumerate() {
                let (a, b) = (r.rhs[0], r.rhs[1]);
                let va = a.nt().map_or(0, |x| version[x.index()]);
                let vb = b.nt().map_or(0, |x| version[x.index()]);
                if seen[ri] == (va, vb) {
                    continue;
                }
                seen[ri] = (va, vb);
                let x = r.lhs.index();
                let mut any = false;
                for i in 0..w {
                    tmp.iter_mut().for_each(|t| *t = 0);
                    match (a, b) {
                        (Symbol::T(s), Symbol::T(t)) => {
                            let m = i as i64 + s;
                            let o = m + t;
                            if m >= 0 && m <= cap as i64 && o >= 0 && o <= cap as i64 {
                                tmp[o as usize / 64] |= 1 << (o as usize % 64);
                            }
                        }
                        (Symbol::T(s), Symbol::Nt(y)) => {
                            let m = i as i64 + s;
                            if m >= 0 && m <= cap as i64 {
                                tmp.copy_from_slice(rel[y.index()].row(m as usize));
                            }
                        }
                        (Symbol::Nt(y), Symbol::T(t)) => {
                            for m in rel[y.index()].row_iter(i) {
                                let o = m as i64 + t;
                                if o >= 0 && o <= cap as i64 {
                                    tmp[o as usize / 64] |= 1 << (o as usize % 64);
                                }
                            }
                        }
                        (Symbol::Nt(y), Symbol::Nt(z)) => {
                            let mids: Vec<usize> = rel[y.index()].row_iter(i).collect();
                            if !steps.spend(mids.len() as u64 + 1) {
                                return Err(OutOfSteps);
                            }
                            for m in mids {
                                let src = rel[z.index()].row(m);
                                for (d, s) in tmp.iter_mut().zip(src) {
                                    *d |= *s;
                                }
                            }
                        }
                    }
                    let row = rel[x].row(i);
                    let fresh: Vec<u64> = tmp.iter().zip(row).map(|(t, r)| t & !r).collect();
                    if fresh.iter().any(|&f| f != 0) {
                        for o in ones(&fresh) {
                            time[x][i * w + o] = clock;
                        }
                        clock = clock.saturating_add(1);
                        or_into(rel[x].row_mut(i), &tmp);
                        any = true;
                    }
                }
                if !steps.spend(w as u64) {
                    return Err(OutOfSteps);
                }
                if any {
                    version[x] += 1;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(Saturation { g, cap, rel, time })
    }

    pub fn cap(&self) -> i64 {
        self.cap as i64
    }

    pub fn rel(&self, x: Nt) -> &BitRel {
        &self.rel[x.index()]
    }

    pub fn contains(&self, x: Nt, i: i64, o: i64) -> bool {
        self.in_range(i) && self.in_range(o) && self.rel[x.index()].get(i as usize, o as usize)
    }

    pub fn sym_contains(&self, s: Symbol, i: i64, o: i64) -> bool {
        match s {
            Symbol::T(t) => self.in_range(i) && self.in_range(o) && i + t == o,
            Symbol::Nt(x) => self.contains(x, i, o),
        }
    }

    fn in_range(&self, v: i64) -> bool {
        v >= 0 && v <= self.cap as i64
    }

    fn time_of(&self, s: Symbol, i: usize, o: usize) -> u32 {
        match s {
            Symbol::T(t) => {
                if i as i64 + t == o as i64 {
                    0
                } else {
                    u32::MAX
                }
            }
            Symbol::Nt(x) => self.time[x.index()][i * (self.cap + 1) + o],
        }
    }

    /// A derivation of `x` from `i` to `o` with all counters within the cap.
    pub fn witness(&self, x: Nt, i: i64, o: i64) -> Option<Tree> {
        if !self.contains(x, i, o) {
            return None;
        }
        Some(self.witness_sym(Symbol::Nt(x), i as usize, o as usize))
    }

    fn witness_sym(&self, s: Symbol, i: usize, o: usize) -> Tree {
        let Symbol::Nt(x) = s else { return Tree::Leaf(s) };
        let t = self.time_of(s, i, o);
        for ri in self.g.rules_of(x) {
            let (a, b) = (self.g.rules()[ri].rhs[0], self.g.rules()[ri].rhs[1]);
            for m in 0..=self.cap {
                let ta = self.time_of(a, i, m);
                if ta >= t {
                    continue;
                }
                let tb = self.time_of(b, m, o);
                if tb >= t {
                    continue;
                }
                return Tree::Node(x, Rc::new(self.witness_sym(a, i, m)), Rc::new(self.witness_sym(b, m, o)));
            }
        }
        unreachable!("saturation pair without justification")
    }
}

/// Over-approximation of derivations that leave `[0, M]`.
pub struct Closure {
    /// `forward[X]` bit `i`: some derivation prefix of `X` from `i` exceeds `M`.
    pub forward: Vec<Vec<u64>>,
    /// `backward[X]` bit `o`: some derivation suffix of `X` ending at `o` starts above `M`.
    pub backward: Vec<Vec<u64>>,
    pub escape: Vec<BitRel>,
}

fn bit(words: &[u64], i: usize) -> bool {
    words[i / 64] >> (i % 64) & 1 == 1
}

impl Closure {
    pub fn run(sat: &Saturation, steps: &mut Steps) -> Result<Closure, OutOfSteps> {
        let free = vec![(None, None); sat.g.nt_count()];
        Closure::run_with_bounds(sat, &free, steps)
    }

    /// [`Closure::run`], where a derivation may only cross above `M` between
    /// two children if their effects fit `bounds` (the `[min, max]` effect
    /// of every nonterminal, `None` for unbounded).
    pub fn run_with_bounds(
        sat: &Saturation,
        bounds: &[(Option<i64>, Option<i64>)],
        steps: &mut Steps,
    ) -> Result<Closure, OutOfSteps> {
        let g = sat.g;
        let range = |s: Symbol| match s {
            Symbol::T(t) => (Some(t), Some(t)),
            Symbol::Nt(x) => bounds[x.index()],
        };
        let cap = sat.cap;
        let w = cap + 1;
        let words = w.div_ceil(64);
        let n = g.nt_count();
        let mut forward = vec![vec![0u64; words]; n];
        let mut backward = vec![vec![0u64; words]; n];
        let fwd_sym = |f: &Vec<Vec<u64>>, s: Symbol, i: usize| match s {
            Symbol::T(t) => i as i64 + t > cap as i64,
            Symbol::Nt(x) => bit(&f[x.index()], i),
        };
        let bwd_sym = |b: &Vec<Vec<u64>>, s: Symbol, o: usize| match s {
            Symbol::T(t) => o as i64 - t > cap as i64,
            Symbol::Nt(x) => bit(&b[x.index()], o),
        };
        let transposed: Vec<BitRel> = sat.rel.iter().map(|r| r.transpose()).collect();
        let col = |s: Symbol, o: usize| -> Vec<usize> {
            match s {
                Symbol::T(t) => {
                    let m = o as i64 - t;
                    if m >= 0 && m <= cap as i64 {
                        vec![m as usize]
                    } else {
                        vec![]
                    }
                }
                Symbol::Nt(x) => transposed[x.index()].row_iter(o).collect(),
            }
        };
        let row = |s: Symbol, i: usize| -> Vec<usize> {
            match s {
                Symbol::T(t) => {
                    let m = i as i64 + t;
                    if m >= 0 && m <= cap as i64 {
                        vec![m as usize]
                    } else {
                        vec![]
                    }
                }
                Symbol::Nt(x) => sat.rel[x.index()].row_iter(i).collect(),
            }
        };
        loop {
            let mut changed = false;
            for r in g.rules() {
                let (a, b) = (r.rhs[0], r.rhs[1]);
                let x = r.lhs.index();
                for i in 0..w {
                    if !bit(&forward[x], i) {
                        let hit = fwd_sym(&forward, a, i) || row(a, i).into_iter().any(|m| fwd_sym(&forward, b, m));
                        if hit {
                            forward[x][i / 64] |= 1 << (i % 64);
                            changed = true;
                        }
                    }
                    if !bit(&backward[x], i) {
                        let hit = bwd_sym(&backward, b, i) || col(b, i).into_iter().any(|m| bwd_sym(&backward, a, m));
                        if hit {
                            backward[x][i / 64] |= 1 << (i % 64);
                            changed = true;
                        }
                    }
                }
                if !steps.spend(w as u64) {
                    return Err(OutOfSteps);
                }
            }
            if !changed {
                break;
            }
        }

        let mut escape = vec![BitRel::new(w); n];
        let mut tmp = vec![0u64; words];
        let empty = vec![0u64; words];
        loop {
            let mut changed = false;
            for r in g.rules() {
                let (a, b) = (r.rhs[0], r.rhs[1]);
                let x = r.lhs.index();
                for i in 0..w {
                    tmp.iter_mut().for_each(|t| *t = 0);
                    // the middle counter is above M
                    let (_, hi_a) = range(a);
                    let (lo_b, _) = range(b);
                    if fwd_sym(&forward, a, i) && hi_a.is_none_or(|h| i as i64 + h > cap as i64) {
                        match b {
                            Symbol::Nt(z) => {
                                for (d, s) in tmp.iter_mut().zip(&backward[z.index()]) {
                                    *d |= *s;
                                }
                                if let Some(l) = lo_b {
                                    // o = m + effect >= cap + 1 + l
                                    for o in 0..w.min((cap as i64 + 1 + l).max(0) as usize) {
                                        tmp[o / 64] &= !(1 << (o % 64));
                                    }
                                }
                            }
                            Symbol::T(t) => {
                                for o in 0..w {
                                    if o as i64 - t > cap as i64 {
                                        tmp[o / 64] |= 1 << (o % 64);
                                    }
                                }
                            }
                        }
                    }
                    // left part escapes, right part anything
                    if let Symbol::Nt(y) = a {
                        let mids: Vec<usize> = escape[y.index()].row_iter(i).collect();
                        for m in mids {
                            match b {
                                Symbol::Nt(z) => {
                                    for (d, s) in tmp.iter_mut().zip(sat.rel[z.index()].row(m)) {
                                        *d |= *s;
                                    }
                                    let e = escape[z.index()].row(m).to_vec();
                                    for (d, s) in tmp.iter_mut().zip(&e) {
                                        *d |= *s;
                                    }
                                }
                                Symbol::T(t) => {
                                    let o = m as i64 + t;
                                    if o >= 0 && o <= cap as i64 {
                                        tmp[o as usize / 64] |= 1 << (o as usize % 64);
                                    }
                                }
                            }
                        }
                    }
                    // left part stays inside, right part escapes
                    if let Symbol::Nt(z) = b {
                        for m in row(a, i) {
                            let e = escape[z.index()].row(m).to_vec();
                            for (d, s) in tmp.iter_mut().zip(&e) {
                                *d |= *s;
                            }
                        }
                    }
                    // o - i must be an effect of x
                    let (lo_x, hi_x) = bounds[x];
                    let keep = |o: usize| {
                        let e = o as i64 - i as i64;
                        lo_x.is_none_or(|l| e >= l) && hi_x.is_none_or(|h| e <= h)
                    };
                    if lo_x.is_some() || hi_x.is_some() {
                        for o in 0..w {
                            if !keep(o) {
                                tmp[o / 64] &= !(1 << (o % 64));
                            }
                        }
                    }
                    if tmp != empty && or_into(escape[x].row_mut(i), &tmp) {
                        changed = true;
                    }
                }
                if !steps.spend(w as u64 * 2) {
                    return Err(OutOfSteps);
                }
            }
            if !changed {
                break;
            }
        }
        Ok(Closure { forward, backward, escape })
    }

    pub fn escapes(&self, x: Nt, i: i64, o: i64) -> bool {
        self.escape[x.index()].get(i as usize, o as usize)
    }

    pub fn forward_touch(&self, x: Nt, i: i64) -> bool {
        bit(&self.forward[x.index()], i as usize)
    }
}

/// Three-valued answer of a budgeted query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

/// Reachability and coverability queries answered by saturation with a
/// growing counter cap. `No` is only given with a certificate: the closure,
/// the effect range or an effect residue.
pub struct BoundedOracle<'g> {
    g: &'g Gvas,
    cap: i64,
    max_cap: i64,
    steps: u64,
    state: Option<(Saturation<'g>, Closure)>,
    exhausted: bool,
    statics: Option<Statics>,
}

/// Validity-free facts about effects: the `[min, max]` range and the
/// residues modulo `2..=16`.
struct Statics {
    bounds: Vec<(Option<i64>, Option<i64>)>,
    residues: Vec<Vec<u64>>,
}

impl Statics {
    fn rules_out(&self, x: Nt, delta: i64) -> bool {
        let (lo, hi) = self.bounds[x.index()];
        if lo.is_some_and(|l| delta < l) || hi.is_some_and(|h| delta > h) {
            return true;
        }
        self.residues
            .iter()
            .enumerate()
            .any(|(j, r)| r[x.index()] >> delta.rem_euclid(j as i64 + 2) & 1 == 0)
    }
}

impl<'g> BoundedOracle<'g> {
    pub fn new(g: &'g Gvas, max_cap: i64, steps: u64) -> BoundedOracle<'g> {
        BoundedOracle { g, cap: 0, max_cap, steps, state: None, exhausted: false, statics: None }
    }

    pub fn cap(&self) -> i64 {
        self.cap
    }

    /// Saturates at a cap of at least `need`; false once the budget is gone.
    fn ensure(&mut self, need: i64) -> bool {
        if self.state.is_some() && self.cap >= need {
            return true;
        }
        if self.exhausted || need > self.max_cap {
            return false;
        }
        let mut cap = self.cap.max(16);
        while cap < need {
            cap *= 2;
        }
        self.run_at(cap.min(self.max_cap))
    }

    fn grow(&mut self) -> bool {
        if self.exhausted || self.cap >= self.max_cap {
            return false;
        }
        let next = (self.cap.max(8) * 2).min(self.max_cap);
        self.run_at(next)
    }

    fn run_at(&mut self, cap: i64) -> bool {
        let mut steps = Steps::new(self.steps);
        let Ok(sat) = Saturation::run(self.g, cap, &mut steps) else {
            self.exhausted = true;
            return false;
        };
        let bounds = self.statics().bounds.clone();
        let Ok(cl) = Closure::run_with_bounds(&sat, &bounds, &mut steps) else {
            self.exhausted = true;
            return false;
        };
        self.cap = cap;
        self.state = Some((sat, cl));
        true
    }

    fn statics(&mut self) -> &Statics {
        let g = self.g;
        self.statics.get_or_insert_with(|| Statics {
            bounds: crate::region::effect_bounds(g),
            residues: (2..=16).map(|k| residues(g, k)).collect(),
        })
    }

    /// Whether no derivation of `x` at all has effect `delta`, by the effect
    /// range or a residue.
    pub fn rules_out_effect(&mut self, x: Nt, delta: i64) -> bool {
        self.statics().rules_out(x, delta)
    }

    pub fn reach(&mut self, x: Nt, i: i64, o: i64) -> Tri {
        if i < 0 || o < 0 || self.rules_out_effect(x, o - i) {
            return Tri::No;
        }
        if !self.ensure(i.max(o)) {
            return Tri::Unknown;
        }
        loop {
            let (sat, cl) = self.state.as_ref().unwrap();
            if sat.contains(x, i, o) {
                return Tri::Yes;
            }
            if !cl.escapes(x, i, o) {
                return Tri::No;
            }
            if !self.grow() {
                return Tri::Unknown;
            }
        }
    }

    /// Whether some output `>= target` is reachable from `i`.
    pub fn cover(&mut self, x: Nt, i: i64, target: i64) -> Tri {
        if i < 0 {
            return Tri::No;
        }
        let target = target.max(0);
        if self.statics().bounds[x.index()].1.is_some_and(|h| i + h < target) {
            return Tri::No;
        }
        if !self.ensure(i.max(target)) {
            return Tri::Unknown;
        }
        loop {
            let (sat, cl) = self.state.as_ref().unwrap();
            if sat.rel(x).row_iter(i as usize).any(|o| o as i64 >= target) {
                return Tri::Yes;
            }
            if !cl.forward_touch(x, i) {
                return Tri::No;
            }
            if !self.grow() {
                return Tri::Unknown;
            }
        }
    }

    /// A derivation from `i` to `o`, if the saturation found one.
    pub fn witness(&mut self, x: Nt, i: i64, o: i64) -> Option<Tree> {
        if self.reach(x, i, o) != Tri::Yes {
            return None;
        }
        self.state.as_ref().unwrap().0.witness(x, i, o)
    }
}

/// Effects of complete derivations modulo `k` (ignoring validity), one
/// bitmask per nonterminal.
pub fn residues(g: &Gvas, k: u32) -> Vec<u64> {
    assert!((1..=64).contains(&k));
    let n = g.nt_count();
    let mut res = vec![0u64; n];
    let sym = |res: &Vec<u64>, s: Symbol| match s {
        Symbol::T(t) => 1u64 << t.rem_euclid(k as i64),
        Symbol::Nt(x) => res[x.index()],
    };
    loop {
        let mut changed = false;
        for r in g.rules() {
            let (a, b) = (sym(&res, r.rhs[0]), sym(&res, r.rhs[1]));
            let mut sum = 0u64;
            for p in 0..k {
                if a >> p & 1 == 0 {
                    continue;
                }
                for q in 0..k {
                    if b >> q & 1 == 1 {
                        sum |= 1 << ((p + q) % k);
                    }
                }
            }
            let x = r.lhs.index();
            if res[x] | sum != res[x] {
                res[x] |= sum;
                changed = true;
            }
        }
        if !changed {
            return res;
        }
    }
}

/// A modulus `k <= 16` ruling out effect `delta` for `x`, if any.
pub fn residue_obstruction(g: &Gvas, x: Nt, delta: i64) -> Option<u32> {
    (2..=16u32).find(|&k| residues(g, k)[x.index()] >> delta.rem_euclid(k as i64) & 1 == 0)
}

/// Smallest derivation sizes within the counter cap: `size[X][i*w+o]` is the
/// least node count of a complete `X`-derivation from `i` to `o` whose
/// counters stay in `[0, M]`, or `u32::MAX`.
pub fn min_sizes(g: &Gvas, cap: i64, node_cap: usize) -> Vec<Vec<u32>> {
    let w = cap.max(0) as usize + 1;
    let n = g.nt_count();
    let inf = u32::MAX;
    let mut size = vec![vec![inf; w * w]; n];
    let sym = |size: &Vec<Vec<u32>>, s: Symbol, i: usize, o: usize| -> u32 {
        match s {
            Symbol::T(t) => {
                if i as i64 + t == o as i64 {
                    1
                } else {
                    inf
                }
            }
            Symbol::Nt(x) => size[x.index()][i * w + o],
        }
    };
    loop {
        let mut changed = false;
        for r in g.rules() {
            let (a, b) = (r.rhs[0], r.rhs[1]);
            let x = r.lhs.index();
            for i in 0..w {
                for m in 0..w {
                    let sa = sym(&size, a, i, m);
                    if sa == inf {
                        continue;
                    }
                    for o in 0..w {
                        let sb = sym(&size, b, m, o);
                        if sb == inf {
                            continue;
                        }
                        let c = 1 + sa + sb;
                        if c as usize <= node_cap && c < size[x][i * w + o] {
                            size[x][i * w + o] = c;
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            return size;
        }
    }
}
