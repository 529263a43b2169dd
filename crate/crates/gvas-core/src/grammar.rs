//! Grammar data model: nonterminals, rules over nonterminals and integer
//! terminals, parsing, binarization, size, reversal and the component DAG.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Index of a nonterminal inside its [`Gvas`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Nt(pub u32);

impl Nt {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    User,
    Binarization,
    Pipeline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Nt(Nt),
    T(i64),
}

impl Symbol {
    pub fn nt(self) -> Option<Nt> {
        match self {
            Symbol::Nt(x) => Some(x),
            Symbol::T(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Nt,
    pub rhs: Vec<Symbol>,
}

/// A one-dimensional grammar vector addition system.
#[derive(Clone, Debug)]
pub struct Gvas {
    names: Vec<String>,
    origins: Vec<Origin>,
    start: Nt,
    rules: Vec<Rule>,
    binarized: bool,
    index: BTreeMap<String, Nt>,
    /// Per fresh-name base, a `k` with `base#1 .. base#(k-1)` all taken.
    fresh: BTreeMap<String, u32>,
}

impl PartialEq for Gvas {
    fn eq(&self, other: &Gvas) -> bool {
        self.names == other.names
            && self.origins == other.origins
            && self.start == other.start
            && self.rules == other.rules
            && self.binarized == other.binarized
    }
}

impl Eq for Gvas {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GvasError {
    IdCollision(String),
    UnknownNonterminal(String),
}

impl fmt::Display for GvasError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GvasError::IdCollision(n) => write!(f, "nonterminal id collision: {n}"),
            GvasError::UnknownNonterminal(n) => write!(f, "unknown nonterminal: {n}"),
        }
    }
}

impl Gvas {
    /// Grammar with a single nonterminal and no rules.
    pub fn empty(start: &str) -> Gvas {
        Gvas::build(vec![start.to_string()], vec![Origin::User], Nt(0), Vec::new(), true)
    }

    fn build(names: Vec<String>, origins: Vec<Origin>, start: Nt, rules: Vec<Rule>, binarized: bool) -> Gvas {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), Nt(i as u32))).collect();
        Gvas { names, origins, start, rules, binarized, index, fresh: BTreeMap::new() }
    }

    pub fn start(&self) -> Nt {
        self.start
    }

    pub fn nt_count(&self) -> usize {
        self.names.len()
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = Nt> + '_ {
        (0..self.names.len() as u32).map(Nt)
    }

    pub fn name(&self, x: Nt) -> &str {
        &self.names[x.index()]
    }

    pub fn origin(&self, x: Nt) -> Origin {
        self.origins[x.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<Nt> {
        self.index.get(name).copied()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn is_binarized(&self) -> bool {
        self.binarized
    }

    /// Indices of the rules whose left-hand side is `x`, in rule order.
    pub fn rules_of(&self, x: Nt) -> impl Iterator<Item = usize> + '_ {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.lhs == x)
            .map(|(i, _)| i)
    }

    /// The same grammar with another initial nonterminal.
    pub fn with_start(&self, x: Nt) -> Gvas {
        let mut g = self.clone();
        g.start = x;
        g
    }

    pub fn set_start(&mut self, x: Nt) {
        self.start = x;
    }

    /// Adds a nonterminal; the name must not be in use.
    pub fn add_nt(&mut self, name: &str, origin: Origin) -> Result<Nt, GvasError> {
        if self.lookup(name).is_some() {
            return Err(GvasError::IdCollision(name.to_string()));
        }
        let x = Nt(self.names.len() as u32);
        self.names.push(name.to_string());
        self.origins.push(origin);
        self.index.insert(name.to_string(), x);
        Ok(x)
    }

    /// Adds a nonterminal named `base#k` for the smallest free `k >= from`.
    pub fn add_fresh(&mut self, base: &str, from: u32, origin: Origin) -> Nt {
        let hint = self.fresh.get(base).copied().unwrap_or(1);
        let mut k = from.max(hint);
        loop {
            let name = format!("{base}#{k}");
            if self.lookup(&name).is_none() {
                if from <= hint {
                    self.fresh.insert(base.to_string(), k + 1);
                }
                return self.add_nt(&name, origin).unwrap();
            }
            k += 1;
        }
    }

    pub fn add_rule(&mut self, lhs: Nt, rhs: Vec<Symbol>) {
        if rhs.len() != 2 {
            self.binarized = false;
        }
        self.rules.push(Rule { lhs, rhs });
    }

    /// Adds a rule of any length, splitting it into binary rules with
    /// pipeline-fresh helper nonterminals.
    pub fn add_rule_binarized(&mut self, lhs: Nt, rhs: &[Symbol]) {
        match rhs.len() {
            0 => self.add_rule(lhs, vec![Symbol::T(0), Symbol::T(0)]),
            1 => self.add_rule(lhs, vec![rhs[0], Symbol::T(0)]),
            2 => self.add_rule(lhs, rhs.to_vec()),
            k => {
                let base = String::from(self.name(lhs));
                let mut head = lhs;
                for i in (2..k).rev() {
                    let y = self.add_fresh(&base, 1, Origin::Pipeline);
                    self.add_rule(head, vec![Symbol::Nt(y), rhs[i]]);
                    head = y;
                }
                self.add_rule(head, vec![rhs[0], rhs[1]]);
            }
        }
    }

    /// Copies `h` into `self` under fresh names `prefix#k` and returns the
    /// image of every nonterminal of `h`.
    pub fn embed(&mut self, h: &Gvas, prefix: &str) -> Vec<Nt> {
        let map: Vec<Nt> = h
            .nonterminals()
            .map(|_| self.add_fresh(prefix, 1, Origin::Pipeline))
            .collect();
        for r in &h.rules {
            let rhs = r
                .rhs
                .iter()
                .map(|s| match *s {
                    Symbol::Nt(x) => Symbol::Nt(map[x.index()]),
                    t => t,
                })
                .collect();
            self.add_rule(map[r.lhs.index()], rhs);
        }
        map
    }

    /// Removes every rule with left-hand side `x`.
    pub fn clear_rules(&mut self, x: Nt) {
        self.rules.retain(|r| r.lhs != x);
    }

    /// Terminal values occurring in the rules.
    pub fn terminals(&self) -> impl Iterator<Item = i64> + '_ {
        self.rules
            .iter()
            .flat_map(|r| r.rhs.iter())
            .filter_map(|s| match s {
                Symbol::T(t) => Some(*t),
                _ => None,
            })
    }

    /// Keeps only the nonterminals listed, renumbered in their current order.
    /// Rules mentioning a dropped nonterminal are dropped.
    fn restrict(&self, keep: &[bool]) -> Gvas {
        let mut map = vec![None; self.nt_count()];
        let mut names = Vec::new();
        let mut origins = Vec::new();
        for x in self.nonterminals() {
            if keep[x.index()] {
                map[x.index()] = Some(Nt(names.len() as u32));
                names.push(self.names[x.index()].clone());
                origins.push(self.origins[x.index()]);
            }
        }
        let mut rules = Vec::new();
        'rules: for r in &self.rules {
            let Some(lhs) = map[r.lhs.index()] else { continue };
            let mut rhs = Vec::with_capacity(r.rhs.len());
            for s in &r.rhs {
                match *s {
                    Symbol::Nt(y) => match map[y.index()] {
                        Some(z) => rhs.push(Symbol::Nt(z)),
                        None => continue 'rules,
                    },
                    t => rhs.push(t),
                }
            }
            rules.push(Rule { lhs, rhs });
        }
        let binarized = rules.iter().all(|r| r.rhs.len() == 2);
        Gvas::build(names, origins, map[self.start.index()].unwrap_or(Nt(0)), rules, binarized)
    }

    /// Nonterminals that have at least one complete derivation.
    pub fn productive(&self) -> Vec<bool> {
        let mut prod = vec![false; self.nt_count()];
        let mut changed = true;
        while changed {
            changed = false;
            for r in &self.rules {
                if prod[r.lhs.index()] {
                    continue;
                }
                if r.rhs.iter().all(|s| match s {
                    Symbol::Nt(y) => prod[y.index()],
                    Symbol::T(_) => true,
                }) {
                    prod[r.lhs.index()] = true;
                    changed = true;
                }
            }
        }
        prod
    }

    /// Nonterminals reachable from the initial one in the graph of the grammar.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nt_count()];
        let mut stack = vec![self.start];
        seen[self.start.index()] = true;
        while let Some(x) = stack.pop() {
            for r in self.rules.iter().filter(|r| r.lhs == x) {
                for y in r.rhs.iter().filter_map(|s| s.nt()) {
                    if !seen[y.index()] {
                        seen[y.index()] = true;
                        stack.push(y);
                    }
                }
            }
        }
        seen
    }

    /// Drops unproductive nonterminals and then unreachable ones. The initial
    /// nonterminal is always kept.
    pub fn trim(&self) -> Gvas {
        let mut keep = self.productive();
        keep[self.start.index()] = true;
        let g = self.restrict(&keep);
        let mut keep = g.reachable();
        keep[g.start.index()] = true;
        g.restrict(&keep)
    }
}

impl fmt::Display for Gvas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "start {}", self.name(self.start))?;
        for r in &self.rules {
            write!(f, "{} ->", self.name(r.lhs))?;
            for s in &r.rhs {
                match s {
                    Symbol::Nt(y) => write!(f, " {}", self.name(*y))?,
                    Symbol::T(t) => write!(f, " {t}")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(&'static str),
    IntegerOutOfRange,
    UndeclaredStart,
    DuplicateStart,
    MissingStart,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match &self.kind {
            ParseErrorKind::Syntax(m) => m,
            ParseErrorKind::IntegerOutOfRange => "integer out of range",
            ParseErrorKind::UndeclaredStart => "start nonterminal has no rules",
            ParseErrorKind::DuplicateStart => "duplicate start declaration",
            ParseErrorKind::MissingStart => "missing start declaration",
        };
        write!(f, "{}:{}: {}", self.line, self.column, what)
    }
}

fn is_ident(tok: &str) -> bool {
    let mut cs = tok.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic())
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '#')
}

fn is_int(tok: &str) -> bool {
    let digits = tok.strip_prefix('-').unwrap_or(tok);
    !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit())
}

/// Splits a line into tokens with their 1-based columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

/// Parses the line-oriented text format. Nonterminals are numbered in order
/// of first occurrence.
pub fn parse_gvas(text: &str) -> Result<Gvas, ParseError> {
    let mut names: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, Nt> = BTreeMap::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> Nt {
        *index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            Nt(names.len() as u32 - 1)
        })
    };
    let mut start: Option<(Nt, usize)> = None;
    let mut rules = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let toks = tokens(line);
        let Some(&(col0, first)) = toks.first() else { continue };
        if first.starts_with('#') {
            continue;
        }
        let err = |column, kind| ParseError { line: ln, column, kind };
        if first == "start" {
            if toks.len() != 2 {
                return Err(err(col0, ParseErrorKind::Syntax("expected `start <Id>`")));
            }
            let (c, id) = toks[1];
            if !is_ident(id) {
                return Err(err(c, ParseErrorKind::Syntax("expected identifier")));
            }
            if start.is_some() {
                return Err(err(col0, ParseErrorKind::DuplicateStart));
            }
            start = Some((intern(id, &mut names), ln));
            continue;
        }
        if !is_ident(first) {
            return Err(err(col0, ParseErrorKind::Syntax("expected identifier")));
        }
        match toks.get(1) {
            Some(&(_, "->")) => {}
            Some(&(c, _)) => return Err(err(c, ParseErrorKind::Syntax("expected `->`"))),
            None => {
                return Err(err(col0 + first.len(), ParseErrorKind::Syntax("expected `->`")))
            }
        }
        let lhs = intern(first, &mut names);
        let mut rhs = Vec::new();
        for &(c, tok) in &toks[2..] {
            if is_int(tok) {
                let v: i64 = tok
                    .parse()
                    .map_err(|_| err(c, ParseErrorKind::IntegerOutOfRange))?;
                rhs.push(Symbol::T(v));
            } else if is_ident(tok) {
                rhs.push(Symbol::Nt(intern(tok, &mut names)));
            } else {
                return Err(err(c, ParseErrorKind::Syntax("expected identifier or integer")));
            }
        }
        rules.push(Rule { lhs, rhs });
    }
    let Some((start, sline)) = start else {
        return Err(ParseError { line: 1, column: 1, kind: ParseErrorKind::MissingStart });
    };
    if !rules.iter().any(|r| r.lhs == start) {
        return Err(ParseError { line: sline, column: 7, kind: ParseErrorKind::UndeclaredStart });
    }
    let binarized = rules.iter().all(|r| r.rhs.len() == 2);
    Ok(Gvas::build(names.clone(), vec![Origin::User; names.len()], start, rules, binarized))
}

/// Rewrites every rule to length two: short rules are padded with `0` on the
/// right, a long rule `X -> X1 .. Xk` becomes `X -> Y(k-1) Xk`, ...,
/// `Y2 -> X1 X2` with fresh names `X#2 .. X#(k-1)`.
pub fn binarize(g: &Gvas) -> Gvas {
    let mut out = Gvas::build(g.names.clone(), g.origins.clone(), g.start, Vec::new(), true);
    let mut counter: BTreeMap<Nt, u32> = BTreeMap::new();
    for r in &g.rules {
        let k = r.rhs.len();
        if k <= 2 {
            let mut rhs = r.rhs.clone();
            rhs.resize(2, Symbol::T(0));
            out.rules.push(Rule { lhs: r.lhs, rhs });
            continue;
        }
        let base = g.name(r.lhs).to_string();
        let next = counter.entry(r.lhs).or_insert(2);
        // Y_i for i = 2..k-1
        let mut ys = BTreeMap::new();
        for i in 2..k {
            let y = out.add_fresh(&base, *next, Origin::Binarization);
            *next = out.name(y)[base.len() + 1..].parse::<u32>().unwrap() + 1;
            ys.insert(i, y);
        }
        out.rules.push(Rule { lhs: r.lhs, rhs: vec![Symbol::Nt(ys[&(k - 1)]), r.rhs[k - 1]] });
        for i in (3..k).rev() {
            out.rules.push(Rule { lhs: ys[&i], rhs: vec![Symbol::Nt(ys[&(i - 1)]), r.rhs[i - 1]] });
        }
        out.rules.push(Rule { lhs: ys[&2], rhs: vec![r.rhs[0], r.rhs[1]] });
    }
    out
}

fn bit_length(v: i64) -> u64 {
    let a = v.unsigned_abs();
    if a == 0 {
        1
    } else {
        64 - a.leading_zeros() as u64
    }
}

/// `|N| + |P| + total rhs length + total bit length of terminal magnitudes`.
pub fn size_of(g: &Gvas) -> u64 {
    let rhs: u64 = g.rules.iter().map(|r| r.rhs.len() as u64).sum();
    let bits: u64 = g.terminals().map(bit_length).sum();
    g.nt_count() as u64 + g.rules.len() as u64 + rhs + bits
}

/// Mirror grammar: right-hand sides reversed, terminals negated.
pub fn reverse(g: &Gvas) -> Gvas {
    let mut out = g.clone();
    for r in &mut out.rules {
        r.rhs.reverse();
        for s in &mut r.rhs {
            if let Symbol::T(t) = s {
                *t = -*t;
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Thin,
    Branching,
}

/// Strongly connected components of the graph of nonterminals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentDag {
    /// Components in bottom-up order: every edge goes from a later component
    /// to an earlier one.
    pub components: Vec<Vec<Nt>>,
    pub comp_of: Vec<usize>,
    /// `edges[c]` are the components directly below `c`.
    pub edges: Vec<BTreeSet<usize>>,
    pub class: Vec<Class>,
    pub top: usize,
}

impl ComponentDag {
    pub fn top_nts(&self) -> &[Nt] {
        &self.components[self.top]
    }

    pub fn is_top(&self, x: Nt) -> bool {
        self.comp_of[x.index()] == self.top
    }

    pub fn class_of(&self, x: Nt) -> Class {
        self.class[self.comp_of[x.index()]]
    }

    /// True when every component reachable from the top is thin.
    pub fn all_thin(&self) -> bool {
        self.below(self.top).into_iter().all(|c| self.class[c] == Class::Thin)
    }

    /// Components reachable from `c`, including `c`.
    pub fn below(&self, c: usize) -> Vec<usize> {
        let mut seen = vec![false; self.components.len()];
        let mut stack = vec![c];
        seen[c] = true;
        while let Some(x) = stack.pop() {
            for &y in &self.edges[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }

    /// Length of the longest edge path starting at the top component.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.components.len()];
        for c in 0..self.components.len() {
            depth[c] = self.edges[c].iter().map(|&d| depth[d] + 1).max().unwrap_or(0);
        }
        depth[self.top]
    }
}

/// Tarjan's algorithm, iterative. Components come out sinks first.
fn sccs(n: usize, succ: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i < succ[v].len() {
                let w = succ[v][*i];
                *i += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out
}

pub fn component_dag(g: &Gvas) -> ComponentDag {
    let n = g.nt_count();
    let mut succ = vec![Vec::new(); n];
    for r in g.rules() {
        for y in r.rhs.iter().filter_map(|s| s.nt()) {
            if !succ[r.lhs.index()].contains(&y.index()) {
                succ[r.lhs.index()].push(y.index());
            }
        }
    }
    let comps = sccs(n, &succ);
    let mut comp_of = vec![0; n];
    for (c, comp) in comps.iter().enumerate() {
        for &x in comp {
            comp_of[x] = c;
        }
    }
    let mut edges = vec![BTreeSet::new(); comps.len()];
    for x in 0..n {
        for &y in &succ[x] {
            if comp_of[x] != comp_of[y] {
                edges[comp_of[x]].insert(comp_of[y]);
            }
        }
    }
    let mut class = vec![Class::Thin; comps.len()];
    for r in g.rules() {
        let c = comp_of[r.lhs.index()];
        let inside = r
            .rhs
            .iter()
            .filter(|s| matches!(s, Symbol::Nt(y) if comp_of[y.index()] == c))
            .count();
        if inside >= 2 {
            class[c] = Class::Branching;
        }
    }
    ComponentDag {
        components: comps
            .into_iter()
            .map(|c| c.into_iter().map(|x| Nt(x as u32)).collect())
            .collect(),
        top: comp_of[g.start.index()],
        comp_of,
        edges,
        class,
    }
}

/// True when every component reachable from the initial nonterminal is thin.
pub fn is_thin(g: &Gvas) -> bool {
    component_dag(g).all_thin()
}

/// Replaces every occurrence of `v` in `g` by the initial nonterminal of `h`,
/// drops `v`'s rules and merges `h` in.
pub fn substitute(g: &Gvas, v: Nt, h: &Gvas) -> Result<Gvas, GvasError> {
    for x in h.nonterminals() {
        let name = h.name(x);
        if let Some(y) = g.lookup(name) {
            if y != v || x != h.start {
                return Err(GvasError::IdCollision(name.to_string()));
            }
        }
    }
    let mut out = g.clone();
    out.clear_rules(v);
    let mut map = Vec::with_capacity(h.nt_count());
    for x in h.nonterminals() {
        if x == h.start && h.name(x) == g.name(v) {
            map.push(v);
        } else {
            map.push(out.add_nt(h.name(x), h.origin(x))?);
        }
    }
    let hs = map[h.start.index()];
    for r in &mut out.rules {
        for s in &mut r.rhs {
            if *s == Symbol::Nt(v) {
                *s = Symbol::Nt(hs);
            }
        }
    }
    if out.start == v {
        out.start = hs;
    }
    for r in &h.rules {
        let rhs = r
            .rhs
            .iter()
            .map(|s| match *s {
                Symbol::Nt(x) => Symbol::Nt(map[x.index()]),
                t => t,
            })
            .collect();
        out.add_rule(map[r.lhs.index()], rhs);
    }
    out.binarized = out.rules.iter().all(|r| r.rhs.len() == 2);
    if hs != v {
        let mut keep = vec![true; out.nt_count()];
        keep[v.index()] = false;
        out = out.restrict(&keep);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_trivial_and_g1() {
        let g = parse_gvas("start S\nS -> 0").unwrap();
        assert_eq!((g.nt_count(), g.rules().len()), (1, 1));
        let g1 = parse_gvas(fixtures::G1).unwrap();
        assert_eq!((g1.nt_count(), g1.rules().len()), (2, 4));
        assert_eq!(g1.name(g1.start()), "X");
    }

    #[test]
    fn empty_rhs_is_padded() {
        let g = parse_gvas("start S\nS ->").unwrap();
        assert_eq!(g.rules()[0].rhs.len(), 0);
        let b = binarize(&g);
        assert_eq!(b.rules()[0].rhs, vec![Symbol::T(0), Symbol::T(0)]);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = parse_gvas("start S\nS -> 0 x!").unwrap_err();
        assert_eq!((e.line, e.column), (2, 8));
        assert_eq!(parse_gvas("start S\nstart S\nS -> 0").unwrap_err().kind, ParseErrorKind::DuplicateStart);
        assert_eq!(parse_gvas("start T\nS -> 0").unwrap_err().kind, ParseErrorKind::UndeclaredStart);
        assert_eq!(parse_gvas("S -> 0").unwrap_err().kind, ParseErrorKind::MissingStart);
        let e = parse_gvas("start S\nS 0").unwrap_err();
        assert_eq!((e.line, e.column), (2, 3));
    }

    #[test]
    fn binarize_long_rule_like_g2() {
        let g = parse_gvas("start X\nX -> X Y 1\nY -> X 1\nX -> 0").unwrap();
        let b = binarize(&g);
        assert!(b.is_binarized());
        assert_eq!(
            b.to_string(),
            "start X\nX -> X#2 1\nX#2 -> X Y\nY -> X 1\nX -> 0 0\n"
        );
        assert_eq!(b.origin(b.lookup("X#2").unwrap()), Origin::Binarization);
        assert_eq!(binarize(&b), b);
    }

    #[test]
    fn binarize_four_symbols() {
        let g = parse_gvas("start S\nS -> 1 2 3 4").unwrap();
        assert_eq!(
            binarize(&g).to_string(),
            "start S\nS -> S#3 4\nS#3 -> S#2 3\nS#2 -> 1 2\n"
        );
    }

    #[test]
    fn sizes() {
        assert_eq!(size_of(&parse_gvas("start S\nS -> 0").unwrap()), 4);
        assert_eq!(bit_length(-5), 3);
        // G2 binarized: 3 nonterminals, 4 rules, 8 rhs symbols,
        // terminals 1, 1, 0, 0 with one bit each.
        assert_eq!(size_of(&fixtures::g2()), 3 + 4 + 8 + 4);
    }

    #[test]
    fn reverse_negates_and_flips() {
        let g = parse_gvas("start X\nX -> 5 Y\nY -> Y Z\nZ -> 0 0").unwrap();
        let r = reverse(&g);
        assert_eq!(r.rules()[0].rhs, vec![Symbol::Nt(Nt(1)), Symbol::T(-5)]);
        assert_eq!(r.rules()[1].rhs, vec![Symbol::Nt(Nt(2)), Symbol::Nt(Nt(1))]);
        assert_eq!(reverse(&r), g);
    }

    #[test]
    fn component_classes() {
        let g1 = fixtures::g1();
        let d = component_dag(&g1);
        assert_eq!(d.components.len(), 2);
        assert!(d.class.iter().all(|c| *c == Class::Thin));
        assert_eq!(d.top_nts(), &[g1.start(), g1.lookup("X#2").unwrap()]);
        assert_eq!(d.depth(), 1);

        let g2 = fixtures::g2();
        let d = component_dag(&g2);
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.class[d.top], Class::Branching);

        let t = fixtures::trivial();
        let d = component_dag(&t);
        assert_eq!(d.class, vec![Class::Thin]);
    }

    #[test]
    fn text_round_trip() {
        for g in fixtures::all() {
            let text = g.to_string();
            let again = parse_gvas(&text).unwrap();
            assert_eq!(again.to_string(), text);
        }
    }

    #[test]
    fn substitute_replaces_and_rejects_collisions() {
        let g = parse_gvas("start S\nS -> V 1\nV -> 0 0").unwrap();
        let h = parse_gvas("start W\nW -> 0 0").unwrap();
        let out = substitute(&g, g.lookup("V").unwrap(), &h).unwrap();
        assert_eq!(out.to_string(), "start S\nS -> W 1\nW -> 0 0\n");
        let clash = parse_gvas("start W\nW -> S 0").unwrap();
        assert!(matches!(
            substitute(&g, g.lookup("V").unwrap(), &clash),
            Err(GvasError::IdCollision(_))
        ));
    }

    #[test]
    fn trim_drops_useless() {
        let g = parse_gvas("start S\nS -> 1 0\nS -> U 0\nU -> U 1\nW -> 0 0").unwrap();
        assert_eq!(g.trim().to_string(), "start S\nS -> 1 0\n");
    }
}
