//! Search over partial derivations built in Euler-tour order, the success
//! analysis, and the thin grammar read off the neutral superleaves.
//!
//! A partial derivation is expanded one tour action at a time. Top nodes are
//! expanded at their first visit, outputs are fixed at last visits, and
//! cycles whose left part has effect zero are never built downwards: they are
//! recorded when a first visit repeats an ancestor's (input, label) pair and
//! inserted later, at a last visit.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::cycles::Constants;
use crate::derivation::{insert_cycle, remove_cycle, Cycle, CountedDerivation, Derivation, EulerAction, IdGen, NodeId, Tree, Visit};
use crate::grammar::{component_dag, Gvas, Nt, Origin, Symbol};
use crate::oracle::{BoundedOracle, Tri};
use crate::semilinear::{threshold_from_parts, SemilinearError, Threshold, ThresholdOptions};

/// Reachability answers for the lower nonterminals.
pub trait LowerOracle {
    fn reach(&mut self, v: Nt, from: i64, to: i64) -> Tri;
    /// Whether some output `>= target` is reachable.
    fn cover(&mut self, v: Nt, from: i64, target: i64) -> Tri;
    fn witness(&mut self, v: Nt, from: i64, to: i64) -> Option<Tree>;
}

impl LowerOracle for BoundedOracle<'_> {
    fn reach(&mut self, v: Nt, from: i64, to: i64) -> Tri {
        BoundedOracle::reach(self, v, from, to)
    }

    fn cover(&mut self, v: Nt, from: i64, target: i64) -> Tri {
        BoundedOracle::cover(self, v, from, target)
    }

    fn witness(&mut self, v: Nt, from: i64, to: i64) -> Option<Tree> {
        BoundedOracle::witness(self, v, from, to)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Query {
    Reach(i64, i64),
    Cover(i64, i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cap {
    Supernodes(usize),
    PdNodes(usize),
    Search(i64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SupertreeError {
    CapExceeded(Cap),
    OracleUnknown(Nt, Query),
    PreconditionViolation(&'static str),
    InvariantBroken(String),
    Semilinear(SemilinearError),
}

impl fmt::Display for SupertreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupertreeError::CapExceeded(Cap::Supernodes(n)) => write!(f, "cap exceeded: more than {n} supernodes"),
            SupertreeError::CapExceeded(Cap::PdNodes(n)) => write!(f, "cap exceeded: partial derivation over {n} nodes"),
            SupertreeError::CapExceeded(Cap::Search(n)) => write!(f, "cap exceeded: output search beyond {n}"),
            SupertreeError::OracleUnknown(v, q) => write!(f, "oracle could not decide {q:?} for nonterminal {}", v.0),
            SupertreeError::PreconditionViolation(m) => write!(f, "precondition violated: {m}"),
            SupertreeError::InvariantBroken(m) => write!(f, "invariant broken: {m}"),
            SupertreeError::Semilinear(e) => write!(f, "{e}"),
        }
    }
}

impl From<SemilinearError> for SupertreeError {
    fn from(e: SemilinearError) -> Self {
        SupertreeError::Semilinear(e)
    }
}

fn broken<T>(msg: String) -> Result<T, SupertreeError> {
    Err(SupertreeError::InvariantBroken(msg))
}

/// A derivation tree with counters on the part already toured.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialDerivation {
    pub tree: Derivation,
    pub input: BTreeMap<NodeId, i64>,
    pub output: BTreeMap<NodeId, i64>,
    pub action: EulerAction,
    /// The tour is over and no cycle will be inserted above the root.
    pub finished: bool,
}

impl PartialDerivation {
    pub fn single(label: Symbol, input: i64, ids: &mut IdGen) -> PartialDerivation {
        let tree = Derivation::leaf(ids, label);
        let root = tree.root();
        let mut inp = BTreeMap::new();
        inp.insert(root, input);
        PartialDerivation {
            tree,
            input: inp,
            output: BTreeMap::new(),
            action: EulerAction { kind: Visit::First, node: root },
            finished: false,
        }
    }

    pub fn current(&self) -> NodeId {
        self.action.node
    }

    pub fn input_of(&self, n: NodeId) -> Option<i64> {
        self.input.get(&n).copied()
    }

    pub fn output_of(&self, n: NodeId) -> Option<i64> {
        self.output.get(&n).copied()
    }

    /// Input and label of a nonterminal node that has been entered.
    pub fn pair(&self, n: NodeId) -> Option<(i64, Nt)> {
        Some((self.input_of(n)?, self.tree.label(n).nt()?))
    }

    /// Strict ancestors of the current node, from its parent up to the root.
    pub fn ancestors(&self) -> Vec<NodeId> {
        let mut p = self.tree.path_to(self.current());
        p.pop();
        p.reverse();
        p
    }

    /// Whether `n` repeats the (input, label) pair of a strict ancestor.
    pub fn repeats_ancestor(&self, n: NodeId) -> Option<NodeId> {
        let pair = self.pair(n)?;
        let mut cur = self.tree.parent(n);
        while let Some(m) = cur {
            if self.pair(m) == Some(pair) {
                return Some(m);
            }
            cur = self.tree.parent(m);
        }
        None
    }

    /// Flow conditions wherever the counters involved are specified, and
    /// nonnegativity.
    pub fn flow_ok(&self) -> bool {
        let t = &self.tree;
        if self.input.values().chain(self.output.values()).any(|&v| v < 0) {
            return false;
        }
        t.ids().all(|n| {
            let (i, o) = (self.input_of(n), self.output_of(n));
            match t.children(n) {
                None => match (t.label(n), i, o) {
                    (Symbol::T(c), Some(i), Some(o)) => o == i + c,
                    _ => true,
                },
                Some((l, r)) => {
                    let agree = |x: Option<i64>, y: Option<i64>| x.is_none() || y.is_none() || x == y;
                    agree(i, self.input_of(l)) && agree(self.output_of(l), self.input_of(r)) && agree(self.output_of(r), o)
                }
            }
        })
    }

    /// The counters are specified exactly on the part of the tour up to the
    /// current action, and only toured top nodes have children.
    pub fn tour_ok(&self, top: &BTreeSet<Nt>) -> bool {
        let tour = crate::derivation::euler_tour(&self.tree);
        let Some(pos) = tour.iter().position(|a| *a == self.action) else { return false };
        let mut first = BTreeMap::new();
        let mut last = BTreeMap::new();
        for (k, a) in tour.iter().enumerate() {
            match a.kind {
                Visit::First => first.insert(a.node, k),
                Visit::Last => last.insert(a.node, k),
            };
        }
        self.tree.ids().all(|n| {
            let has_children = self.tree.children(n).is_some();
            let is_top = self.tree.label(n).nt().is_some_and(|x| top.contains(&x));
            self.input.contains_key(&n) == (first[&n] <= pos)
                && self.output.contains_key(&n) == (last[&n] <= pos)
                && has_children == (is_top && first[&n] < pos)
        })
    }

    /// Pairs at which cycles may still be inserted: top nodes whose output
    /// is open, and the current node at its last visit.
    pub fn open_pairs(&self, top: &BTreeSet<Nt>) -> Vec<(i64, Nt)> {
        let mut out = Vec::new();
        if self.finished {
            return out;
        }
        for n in self.tree.path_to(self.current()) {
            let Some((i, x)) = self.pair(n) else { continue };
            if !top.contains(&x) {
                continue;
            }
            let open = self.output_of(n).is_none() || (n == self.current() && self.action.kind == Visit::Last);
            if open {
                out.push((i, x));
            }
        }
        out
    }

    pub fn has_unvisited_top(&self, top: &BTreeSet<Nt>) -> bool {
        self.tree
            .ids()
            .any(|n| !self.input.contains_key(&n) && self.tree.label(n).nt().is_some_and(|x| top.contains(&x)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Neutral,
    Successful,
    Failed,
}

/// The ≡-class of a simple partial cycle.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CycleClass {
    /// `(input, label)` along the main branch, from the distinguished leaf up
    /// to the root; first and last entries agree.
    pub pairs: Vec<(i64, Nt)>,
    /// For each main-branch node below the root: the label of its right
    /// sibling when it is a left child.
    pub siblings: Vec<Option<Symbol>>,
}

impl CycleClass {
    pub fn pair(&self) -> (i64, Nt) {
        self.pairs[0]
    }

    /// Class of the cycle between `root` and its descendant `leaf`, read with
    /// the given input function.
    pub fn of(tree: &Derivation, root: NodeId, leaf: NodeId, input: impl Fn(NodeId) -> Option<i64>) -> Option<CycleClass> {
        let mut pairs = Vec::new();
        let mut siblings = Vec::new();
        let mut n = leaf;
        loop {
            pairs.push((input(n)?, tree.label(n).nt()?));
            if n == root {
                break;
            }
            let p = tree.parent(n)?;
            let (l, r) = tree.children(p)?;
            siblings.push(if l == n { Some(tree.label(r)) } else { None });
            n = p;
        }
        Some(CycleClass { pairs, siblings })
    }
}

/// How a supernode was obtained from its parent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Genesis {
    Root,
    /// A terminal leaf gets its output.
    Terminal,
    /// A lower leaf gets output `Some(b)`, or covers the success bound (`None`).
    Lower(Option<i64>),
    /// A top node is expanded with the rule of this index.
    Expand(usize),
    /// A top node is reached with input at least `A`.
    HighInput,
    /// The right sibling of a finished left child gets its input.
    Sibling,
    /// The parent of a finished right child gets its output.
    Close,
    /// The tour ends at the root.
    Finish,
    /// A partial cycle of this class is inserted above the current node.
    Insert(CycleClass),
}

impl Genesis {
    /// The rule number: 1 terminal, 2 lower, 3 expansion, 4 sibling, 5 close
    /// or insertion (the end of the tour counts as 5), 0 for the root.
    pub fn rule(&self) -> u8 {
        match self {
            Genesis::Root => 0,
            Genesis::Terminal => 1,
            Genesis::Lower(_) => 2,
            Genesis::Expand(_) | Genesis::HighInput => 3,
            Genesis::Sibling => 4,
            Genesis::Close | Genesis::Finish | Genesis::Insert(_) => 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Supernode {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub status: Status,
    pub genesis: Genesis,
    pub pd: PartialDerivation,
    /// The stop condition holds here.
    pub stopped: bool,
}

/// A recorded partial cycle: the subtree of a failed partial derivation
/// rooted at the ancestor that the current node repeats.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialCycle {
    pub class: CycleClass,
    pub tree: Derivation,
    pub distinguished: NodeId,
    pub input: BTreeMap<NodeId, i64>,
    pub output: BTreeMap<NodeId, i64>,
    /// The failed supernode it comes from.
    pub source: usize,
    /// Contains an unvisited top node.
    pub flagged: bool,
}

/// Graph over `(input, top nonterminal)` pairs: an edge when some recorded
/// cycle of the source pair has the target pair on its main branch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReachGraph {
    pub edges: BTreeMap<(i64, Nt), BTreeMap<(i64, Nt), CycleClass>>,
    pub flagged: BTreeMap<(i64, Nt), CycleClass>,
}

impl ReachGraph {
    pub fn of<'a>(cycles: impl Iterator<Item = &'a PartialCycle>) -> ReachGraph {
        let mut gr = ReachGraph::default();
        for c in cycles {
            let from = c.class.pair();
            for &p in &c.class.pairs {
                gr.edges.entry(from).or_default().entry(p).or_insert_with(|| c.class.clone());
            }
            if c.flagged {
                gr.flagged.entry(from).or_insert_with(|| c.class.clone());
            }
        }
        gr
    }

    /// Shortest path from one of `starts` to a flagged pair, as the list of
    /// classes to insert in turn.
    pub fn path_to_flagged(&self, starts: &[(i64, Nt)]) -> Option<((i64, Nt), Vec<CycleClass>)> {
        let mut prev: BTreeMap<(i64, Nt), Option<(i64, Nt)>> = BTreeMap::new();
        let mut queue = VecDeque::new();
        for &s in starts {
            if let alloc::collections::btree_map::Entry::Vacant(e) = prev.entry(s) {
                e.insert(None);
                queue.push_back(s);
            }
        }
        while let Some(v) = queue.pop_front() {
            if let Some(fc) = self.flagged.get(&v) {
                let mut classes = vec![fc.clone()];
                let mut cur = v;
                while let Some(Some(p)) = prev.get(&cur) {
                    classes.push(self.edges[p][&cur].clone());
                    cur = *p;
                }
                classes.reverse();
                return Some((cur, classes));
            }
            for &w in self.edges.get(&v).into_iter().flat_map(|m| m.keys()) {
                if let alloc::collections::btree_map::Entry::Vacant(e) = prev.entry(w) {
                    e.insert(Some(v));
                    queue.push_back(w);
                }
            }
        }
        None
    }

    pub fn reaches_flagged(&self, starts: &[(i64, Nt)]) -> bool {
        self.path_to_flagged(starts).is_some()
    }
}

/// True when the partial derivation is finished for the purpose of the
/// search: it is not at the first visit of a top node, has no unvisited top
/// node, and no recorded cycle with an unvisited top node can be inserted
/// from its open pairs.
pub fn stop_condition(pd: &PartialDerivation, graph: &ReachGraph, top: &BTreeSet<Nt>) -> bool {
    let cur = pd.current();
    if pd.action.kind == Visit::First && pd.tree.label(cur).nt().is_some_and(|x| top.contains(&x)) {
        return false;
    }
    if pd.has_unvisited_top(top) {
        return false;
    }
    !graph.reaches_flagged(&pd.open_pairs(top))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SupertreeOptions {
    pub max_supernodes: usize,
    pub max_pd_nodes: usize,
    /// Return as soon as a successful supernode exists.
    pub until_success: bool,
}

impl Default for SupertreeOptions {
    fn default() -> Self {
        SupertreeOptions { max_supernodes: 50_000, max_pd_nodes: 4096, until_success: false }
    }
}

#[derive(Clone, Debug)]
pub struct Supertree {
    pub g: Gvas,
    pub a: i64,
    /// The constants `A`, `C`, `D`, `D'`.
    pub bound_a: i64,
    pub c: i64,
    pub d: i64,
    pub dp: i64,
    pub top: BTreeSet<Nt>,
    pub nodes: Vec<Supernode>,
    pub gamma: BTreeMap<CycleClass, PartialCycle>,
    pub options: SupertreeOptions,
    /// False when the build returned at the first success.
    pub complete: bool,
}

impl Supertree {
    /// Outputs at or above this value make a supernode successful.
    pub fn success_bound(&self) -> i64 {
        self.bound_a + self.c * self.dp
    }

    pub fn root(&self) -> &Supernode {
        &self.nodes[0]
    }

    pub fn successes(&self) -> impl Iterator<Item = &Supernode> + '_ {
        self.nodes.iter().filter(|s| s.status == Status::Successful)
    }

    /// Neutral supernodes where the stop condition holds.
    pub fn neutral_leaves(&self) -> impl Iterator<Item = &Supernode> + '_ {
        self.nodes.iter().filter(|s| s.status == Status::Neutral && s.stopped)
    }

    pub fn reach_graph(&self) -> ReachGraph {
        ReachGraph::of(self.gamma.values())
    }

    pub fn depth_bound(&self) -> i64 {
        self.d
    }
}

struct Builder<'o> {
    st: Supertree,
    ids: IdGen,
    oracle: &'o mut dyn LowerOracle,
    graph: ReachGraph,
    version: u64,
    /// Supernodes at a last visit of a top node, with the classes tried.
    sites: BTreeMap<usize, BTreeSet<CycleClass>>,
    seen: BTreeMap<usize, u64>,
    work: Vec<usize>,
    success: bool,
}

impl Builder<'_> {
    fn is_top(&self, s: Symbol) -> bool {
        s.nt().is_some_and(|x| self.st.top.contains(&x))
    }

    fn add(&mut self, parent: usize, status: Status, genesis: Genesis, pd: PartialDerivation) -> Result<usize, SupertreeError> {
        if self.st.nodes.len() >= self.st.options.max_supernodes {
            return Err(SupertreeError::CapExceeded(Cap::Supernodes(self.st.options.max_supernodes)));
        }
        if pd.tree.len() > self.st.options.max_pd_nodes {
            return Err(SupertreeError::CapExceeded(Cap::PdNodes(self.st.options.max_pd_nodes)));
        }
        let id = self.st.nodes.len();
        self.st.nodes.push(Supernode { id, parent: Some(parent), children: Vec::new(), status, genesis, pd, stopped: false });
        self.st.nodes[parent].children.push(id);
        match status {
            Status::Neutral => self.work.push(id),
            Status::Successful => self.success = true,
            Status::Failed => self.record_cycle(id),
        }
        Ok(id)
    }

    /// Adds the partial cycle of a failed supernode whose current node
    /// repeats an ancestor, if its class is new.
    fn record_cycle(&mut self, id: usize) {
        let pd = &self.st.nodes[id].pd;
        let n = pd.current();
        if pd.action.kind != Visit::First || pd.output_of(n).is_some() {
            return;
        }
        let Some(anc) = pd.repeats_ancestor(n) else { return };
        let Some(class) = CycleClass::of(&pd.tree, anc, n, |m| pd.input_of(m)) else { return };
        if self.st.gamma.contains_key(&class) {
            return;
        }
        let (_, cyc) = remove_cycle(&pd.tree, anc, n).expect("ancestor with the same label");
        let keep: BTreeSet<NodeId> = cyc.derivation.ids().collect();
        let input: BTreeMap<NodeId, i64> = pd.input.iter().filter(|(k, _)| keep.contains(k)).map(|(k, v)| (*k, *v)).collect();
        let output = pd.output.iter().filter(|(k, _)| keep.contains(k)).map(|(k, v)| (*k, *v)).collect();
        let flagged = cyc
            .derivation
            .ids()
            .any(|m| !input.contains_key(&m) && self.is_top(cyc.derivation.label(m)));
        let pc = PartialCycle { class: class.clone(), tree: cyc.derivation, distinguished: n, input, output, source: id, flagged };
        self.st.gamma.insert(class, pc);
        self.graph = self.st.reach_graph();
        self.version += 1;
    }

    /// Whether inserting a cycle of `class` above the current node keeps the
    /// pairs of the strict ancestors pairwise distinct.
    fn insertion_allowed(pd: &PartialDerivation, class: &CycleClass) -> bool {
        let old: BTreeSet<(i64, Nt)> = pd.ancestors().into_iter().filter_map(|m| pd.pair(m)).collect();
        class.pairs[1..].iter().all(|p| !old.contains(p))
    }

    fn insert(&mut self, pd: &PartialDerivation, class: &CycleClass) -> PartialDerivation {
        let pc = &self.st.gamma[class];
        insert_partial_cycle(pd, pd.current(), pc, &mut self.ids)
    }

    fn expand(&mut self, s: usize) -> Result<(), SupertreeError> {
        if self.st.nodes[s].status != Status::Neutral {
            return Ok(());
        }
        let pd = self.st.nodes[s].pd.clone();
        if stop_condition(&pd, &self.graph, &self.st.top) {
            self.st.nodes[s].stopped = true;
            self.seen.insert(s, self.version);
            return Ok(());
        }
        self.st.nodes[s].stopped = false;
        let n = pd.current();
        let label = pd.tree.label(n);
        let succ = self.st.success_bound();
        match pd.action.kind {
            Visit::First => {
                let i = pd.input_of(n).expect("current node has an input");
                match label {
                    Symbol::T(c) => {
                        let o = i + c;
                        if o < 0 {
                            self.add(s, Status::Failed, Genesis::Terminal, pd)?;
                        } else {
                            let mut p = pd;
                            p.output.insert(n, o);
                            p.action.kind = Visit::Last;
                            let status = if o >= succ { Status::Successful } else { Status::Neutral };
                            self.add(s, status, Genesis::Terminal, p)?;
                        }
                    }
                    Symbol::Nt(v) if !self.st.top.contains(&v) => match self.oracle.cover(v, i, succ) {
                        Tri::Yes => {
                            self.add(s, Status::Successful, Genesis::Lower(None), pd)?;
                        }
                        Tri::Unknown => return Err(SupertreeError::OracleUnknown(v, Query::Cover(i, succ))),
                        Tri::No => {
                            for b in 0..succ {
                                match self.oracle.reach(v, i, b) {
                                    Tri::Yes => {
                                        let mut p = pd.clone();
                                        p.output.insert(n, b);
                                        p.action.kind = Visit::Last;
                                        self.add(s, Status::Neutral, Genesis::Lower(Some(b)), p)?;
                                    }
                                    Tri::No => {}
                                    Tri::Unknown => return Err(SupertreeError::OracleUnknown(v, Query::Reach(i, b))),
                                }
                            }
                        }
                    },
                    Symbol::Nt(x) => {
                        if i >= self.st.bound_a {
                            self.add(s, Status::Successful, Genesis::HighInput, pd)?;
                            return Ok(());
                        }
                        let rules: Vec<usize> = self.st.g.rules_of(x).collect();
                        for ri in rules {
                            let rhs = self.st.g.rules()[ri].rhs.clone();
                            let mut p = pd.clone();
                            let (l, _) = p.tree.expand_leaf(n, rhs[0], rhs[1], &mut self.ids);
                            p.input.insert(l, i);
                            p.action = EulerAction { kind: Visit::First, node: l };
                            let status = if self.is_top(rhs[0]) && p.repeats_ancestor(l).is_some() {
                                Status::Failed
                            } else {
                                Status::Neutral
                            };
                            self.add(s, status, Genesis::Expand(ri), p)?;
                        }
                    }
                }
            }
            Visit::Last => {
                if self.is_top(label) && !pd.finished {
                    self.sites.insert(s, BTreeSet::new());
                    self.try_insertions(s)?;
                }
                let o = pd.output_of(n).expect("last visit has an output");
                match pd.tree.parent(n) {
                    None => {
                        let mut p = pd;
                        p.finished = true;
                        self.add(s, Status::Neutral, Genesis::Finish, p)?;
                    }
                    Some(par) => {
                        let (l, r) = pd.tree.children(par).unwrap();
                        let mut p = pd;
                        if l == n {
                            p.input.insert(r, o);
                            p.action = EulerAction { kind: Visit::First, node: r };
                            let lab = p.tree.label(r);
                            let status = if !self.is_top(lab) {
                                Status::Neutral
                            } else if o >= self.st.bound_a {
                                Status::Successful
                            } else if p.repeats_ancestor(r).is_some() {
                                Status::Failed
                            } else {
                                Status::Neutral
                            };
                            self.add(s, status, Genesis::Sibling, p)?;
                        } else {
                            p.output.insert(par, o);
                            p.action = EulerAction { kind: Visit::Last, node: par };
                            let key = (p.input_of(par), p.tree.label(par), o);
                            let zero_cycle = p
                                .tree
                                .subtree_nodes(par)
                                .into_iter()
                                .skip(1)
                                .any(|m| (p.input_of(m), p.tree.label(m), p.output_of(m).unwrap_or(-1)) == key);
                            let status = if zero_cycle { Status::Failed } else { Status::Neutral };
                            self.add(s, status, Genesis::Close, p)?;
                        }
                    }
                }
            }
        }
        self.seen.insert(s, self.version);
        Ok(())
    }

    /// Adds one child per recorded class of the current pair not tried yet.
    fn try_insertions(&mut self, s: usize) -> Result<(), SupertreeError> {
        let pd = self.st.nodes[s].pd.clone();
        let n = pd.current();
        let Some(pair) = pd.pair(n) else { return Ok(()) };
        let classes: Vec<CycleClass> = self.st.gamma.keys().filter(|c| c.pair() == pair).cloned().collect();
        for class in classes {
            if !self.sites.get_mut(&s).unwrap().insert(class.clone()) {
                continue;
            }
            if !Self::insertion_allowed(&pd, &class) {
                continue;
            }
            let p = self.insert(&pd, &class);
            self.add(s, Status::Neutral, Genesis::Insert(class), p)?;
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), SupertreeError> {
        loop {
            while let Some(s) = self.work.pop() {
                self.expand(s)?;
                if self.success && self.st.options.until_success {
                    self.st.complete = false;
                    return Ok(());
                }
            }
            // the recorded cycles grew: revisit stopped supernodes and
            // insertion sites that saw an older set
            let stale: Vec<usize> = self.seen.iter().filter(|(_, &v)| v < self.version).map(|(&s, _)| s).collect();
            if stale.is_empty() {
                return Ok(());
            }
            for s in stale {
                self.seen.insert(s, self.version);
                if self.st.nodes[s].stopped {
                    if !stop_condition(&self.st.nodes[s].pd, &self.graph, &self.st.top) {
                        self.work.push(s);
                    }
                } else if self.sites.contains_key(&s) {
                    self.try_insertions(s)?;
                }
            }
        }
    }
}

/// Inserts a copy of the partial cycle above node `at` (whose pair matches
/// the cycle's) and returns the new partial derivation.
pub fn insert_partial_cycle(pd: &PartialDerivation, at: NodeId, pc: &PartialCycle, ids: &mut IdGen) -> PartialDerivation {
    let mut map = BTreeMap::new();
    for m in pc.tree.ids() {
        map.insert(m, if m == pc.distinguished { at } else { ids.fresh() });
    }
    let copy = pc.tree.map_ids(|m| map[&m]);
    let cyc = crate::derivation::Cycle { derivation: copy, distinguished: at };
    let tree = crate::derivation::insert_cycle(&pd.tree, at, &cyc).expect("fresh identifiers");
    let mut out = pd.clone();
    out.tree = tree;
    for (m, v) in &pc.input {
        if *m != pc.distinguished {
            out.input.insert(map[m], *v);
        }
    }
    for (m, v) in &pc.output {
        if *m != pc.distinguished {
            out.output.insert(map[m], *v);
        }
    }
    out
}

/// Builds the supertree of `g` from input `a`.
pub fn build_supertree(
    g: &Gvas,
    a: i64,
    consts: &Constants,
    oracle: &mut dyn LowerOracle,
    options: SupertreeOptions,
) -> Result<Supertree, SupertreeError> {
    if !g.is_binarized() {
        return Err(SupertreeError::PreconditionViolation("grammar must be binarized"));
    }
    if a < 0 {
        return Err(SupertreeError::PreconditionViolation("input must be nonnegative"));
    }
    let dag = component_dag(g);
    let top: BTreeSet<Nt> = dag.top_nts().iter().copied().collect();
    let mut ids = IdGen::new();
    let pd = PartialDerivation::single(Symbol::Nt(g.start()), a, &mut ids);
    let root = Supernode { id: 0, parent: None, children: Vec::new(), status: Status::Neutral, genesis: Genesis::Root, pd, stopped: false };
    let st = Supertree {
        g: g.clone(),
        a,
        bound_a: consts.a,
        c: consts.c,
        d: consts.d,
        dp: consts.dp,
        top,
        nodes: vec![root],
        gamma: BTreeMap::new(),
        options,
        complete: true,
    };
    let mut b = Builder {
        st,
        ids,
        oracle,
        graph: ReachGraph::default(),
        version: 0,
        sites: BTreeMap::new(),
        seen: BTreeMap::new(),
        work: vec![0],
        success: false,
    };
    b.run()?;
    let mut st = b.st;
    let order: Vec<Vec<usize>> = st
        .nodes
        .iter()
        .map(|s| {
            let mut c = s.children.clone();
            c.sort_by(|x, y| st.nodes[*x].genesis.cmp(&st.nodes[*y].genesis).then(x.cmp(y)));
            c
        })
        .collect();
    for (s, c) in st.nodes.iter_mut().zip(order) {
        s.children = c;
    }
    Ok(st)
}

impl Supertree {
    /// Checks the structural properties of the finished tree: distinct
    /// ancestor pairs and bounded depth in neutral supernodes, flow and tour
    /// consistency everywhere, leaves for failed and successful supernodes,
    /// and matching endpoints for recorded cycles.
    pub fn check_invariants(&self) -> Result<(), String> {
        for s in &self.nodes {
            let pd = &s.pd;
            if !pd.flow_ok() {
                return Err(format!("supernode {}: flow conditions", s.id));
            }
            if !pd.tour_ok(&self.top) {
                return Err(format!("supernode {}: counters do not follow the tour", s.id));
            }
            if s.status != Status::Neutral && !s.children.is_empty() {
                return Err(format!("supernode {}: {:?} with children", s.id, s.status));
            }
            if s.stopped && !s.children.is_empty() {
                return Err(format!("supernode {}: stopped with children", s.id));
            }
            if s.status == Status::Neutral {
                let anc = pd.ancestors();
                let pairs: BTreeSet<(i64, Nt)> = anc.iter().filter_map(|&m| pd.pair(m)).collect();
                if pairs.len() != anc.len() {
                    return Err(format!("supernode {}: repeated pair among ancestors", s.id));
                }
                if anc.len() as i64 > self.d {
                    return Err(format!("supernode {}: current node deeper than D = {}", s.id, self.d));
                }
            }
            let kinds: BTreeSet<u8> = s
                .children
                .iter()
                .filter(|&&c| !matches!(self.nodes[c].genesis, Genesis::Insert(_)))
                .map(|&c| self.nodes[c].genesis.rule())
                .collect();
            if kinds.len() > 1 {
                return Err(format!("supernode {}: children from more than one rule", s.id));
            }
        }
        for pc in self.gamma.values() {
            let (r, d) = (pc.tree.root(), pc.distinguished);
            if pc.input.get(&r) != pc.input.get(&d) || pc.tree.label(r) != pc.tree.label(d) {
                return Err(format!("recorded cycle from {}: endpoints differ", pc.source));
            }
        }
        Ok(())
    }

    /// Graphviz rendering, colored by status; stopped supernodes get a
    /// double border.
    pub fn to_dot(&self) -> String {
        self.to_dot_filtered(&|_| true)
    }

    /// [`Supertree::to_dot`] restricted to the supernodes `keep` accepts.
    pub fn to_dot_filtered(&self, keep: &dyn Fn(&Supernode) -> bool) -> String {
        let mut out = String::from("digraph supertree {\n  node [shape=box, fontname=\"monospace\"];\n");
        for s in self.nodes.iter().filter(|s| keep(s)) {
            let color = match s.status {
                Status::Neutral => "black",
                Status::Successful => "darkgreen",
                Status::Failed => "red",
            };
            let n = s.pd.current();
            let visit = match s.pd.action.kind {
                Visit::First => "first",
                Visit::Last => "last",
            };
            let label = match s.pd.tree.label(n) {
                Symbol::T(c) => format!("{c}"),
                Symbol::Nt(x) => String::from(self.g.name(x)),
            };
            let io = match (s.pd.input_of(n), s.pd.output_of(n)) {
                (Some(i), Some(o)) => format!("{i}->{o}"),
                (Some(i), None) => format!("{i}->?"),
                _ => String::from("?"),
            };
            out.push_str(&format!(
                "  s{} [label=\"{} {}\\n{} {} {}\", color={}{}];\n",
                s.id,
                s.id,
                self.genesis_text(&s.genesis),
                visit,
                label,
                io,
                color,
                if s.stopped { ", peripheries=2" } else { "" }
            ));
        }
        for s in self.nodes.iter().filter(|s| keep(s)) {
            for &c in s.children.iter().filter(|&&c| keep(&self.nodes[c])) {
                out.push_str(&format!("  s{} -> s{};\n", s.id, c));
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn genesis_text(&self, g: &Genesis) -> String {
        match g {
            Genesis::Root => String::from("root"),
            Genesis::Terminal => String::from("terminal"),
            Genesis::Lower(None) => String::from("lower covers"),
            Genesis::Lower(Some(b)) => format!("lower out {b}"),
            Genesis::Expand(r) => format!("expand rule {r}"),
            Genesis::HighInput => String::from("high input"),
            Genesis::Sibling => String::from("sibling"),
            Genesis::Close => String::from("close"),
            Genesis::Finish => String::from("finish"),
            Genesis::Insert(c) => {
                let pairs: Vec<String> = c.pairs.iter().map(|(i, x)| format!("{}@{}", self.g.name(*x), i)).collect();
                format!("insert {}", pairs.join(" "))
            }
        }
    }
}

/// Builds the thin grammar whose initial rules are read off the neutral
/// superleaves. Lower nonterminals are taken from `thin_equivalents` when
/// present and copied from `g` otherwise.
pub fn leaves_to_thin(st: &Supertree, thin_equivalents: &BTreeMap<Nt, Gvas>) -> Result<Gvas, SupertreeError> {
    if st.successes().next().is_some() {
        return Err(SupertreeError::PreconditionViolation("supertree has a successful supernode"));
    }
    if !st.complete {
        return Err(SupertreeError::PreconditionViolation("supertree build stopped early"));
    }
    let g = &st.g;
    let mut h = Gvas::empty(g.name(g.start()));
    let mut lower: BTreeMap<Nt, Nt> = BTreeMap::new();
    let mut vs: BTreeMap<(i64, Nt, BTreeSet<(i64, Nt)>), Option<Nt>> = BTreeMap::new();
    let mut rules = Vec::new();
    for s in st.neutral_leaves() {
        rules.push(initial_rhs(st, &s.pd, &mut h, &mut lower, &mut vs, thin_equivalents)?);
    }
    let start = h.start();
    for rhs in rules {
        h.add_rule_binarized(start, &rhs);
    }
    Ok(h)
}

fn map_lower(
    st: &Supertree,
    v: Nt,
    h: &mut Gvas,
    lower: &mut BTreeMap<Nt, Nt>,
    thin: &BTreeMap<Nt, Gvas>,
) -> Result<Nt, SupertreeError> {
    if st.top.contains(&v) {
        return broken(format!("top nonterminal {} in a superleaf rule", st.g.name(v)));
    }
    if let Some(&y) = lower.get(&v) {
        return Ok(y);
    }
    if let Some(hv) = thin.get(&v) {
        let map = h.embed(hv, st.g.name(v));
        lower.insert(v, map[hv.start().index()]);
        return Ok(map[hv.start().index()]);
    }
    // copy the part of g below v, keeping names
    let g = &st.g;
    let mut todo = vec![v];
    let mut fresh = Vec::new();
    while let Some(x) = todo.pop() {
        if lower.contains_key(&x) {
            continue;
        }
        let y = h.add_fresh(g.name(x), 1, Origin::Pipeline);
        lower.insert(x, y);
        fresh.push(x);
        for ri in g.rules_of(x) {
            for s in &g.rules()[ri].rhs {
                if let Symbol::Nt(z) = *s {
                    todo.push(z);
                }
            }
        }
    }
    for x in fresh {
        for ri in g.rules_of(x) {
            let rhs = g.rules()[ri].rhs.iter().map(|s| match *s {
                Symbol::Nt(z) => Symbol::Nt(lower[&z]),
                t => t,
            });
            h.add_rule(lower[&x], rhs.collect());
        }
    }
    Ok(lower[&v])
}

type VMemo = BTreeMap<(i64, Nt, BTreeSet<(i64, Nt)>), Option<Nt>>;

/// The nonterminal inserting right parts of `(a, x)`-cycles whose main
/// branch avoids `f`, or `None` when no recorded class qualifies.
fn v_nonterminal(
    st: &Supertree,
    a: i64,
    x: Nt,
    f: BTreeSet<(i64, Nt)>,
    h: &mut Gvas,
    lower: &mut BTreeMap<Nt, Nt>,
    vs: &mut VMemo,
    thin: &BTreeMap<Nt, Gvas>,
) -> Result<Option<Nt>, SupertreeError> {
    let key = (a, x, f.clone());
    if let Some(v) = vs.get(&key) {
        return Ok(*v);
    }
    let classes: Vec<&CycleClass> = st
        .gamma
        .keys()
        .filter(|c| c.pair() == (a, x) && c.pairs.iter().all(|p| !f.contains(p)))
        .collect();
    if classes.is_empty() {
        vs.insert(key, None);
        return Ok(None);
    }
    let me = h.add_fresh(&format!("{}_{}", st.g.name(x), a), 1, Origin::Pipeline);
    vs.insert(key, Some(me));
    h.add_rule(me, vec![Symbol::T(0), Symbol::T(0)]);
    for c in classes {
        let k = c.pairs.len() - 1;
        let mut rhs = Vec::new();
        for i in 1..=k {
            if let Some(b) = c.siblings[i - 1] {
                rhs.push(match b {
                    Symbol::Nt(z) => Symbol::Nt(map_lower(st, z, h, lower, thin)?),
                    t => t,
                });
            }
            let mut fi = f.clone();
            fi.extend(c.pairs[i + 1..].iter().copied());
            if i == k {
                fi = f.clone();
            }
            let (ai, xi) = c.pairs[i];
            if let Some(y) = v_nonterminal(st, ai, xi, fi, h, lower, vs, thin)? {
                rhs.push(Symbol::Nt(y));
            }
        }
        h.add_rule_binarized(me, &rhs);
    }
    Ok(Some(me))
}

fn initial_rhs(
    st: &Supertree,
    pd: &PartialDerivation,
    h: &mut Gvas,
    lower: &mut BTreeMap<Nt, Nt>,
    vs: &mut VMemo,
    thin: &BTreeMap<Nt, Gvas>,
) -> Result<Vec<Symbol>, SupertreeError> {
    let mut rhs = Vec::new();
    if st.a > 0 {
        rhs.push(Symbol::T(-st.a));
        rhs.push(Symbol::T(st.a));
    }
    for l in pd.tree.leaves() {
        let Some(i) = pd.input_of(l) else { continue };
        match (pd.tree.label(l), pd.output_of(l)) {
            (Symbol::T(c), _) => rhs.push(Symbol::T(c)),
            (Symbol::Nt(_), Some(o)) => rhs.push(Symbol::T(o - i)),
            (Symbol::Nt(v), None) => rhs.push(Symbol::Nt(map_lower(st, v, h, lower, thin)?)),
        }
    }
    let cur = pd.current();
    let anc = pd.ancestors();
    let pair_set = |from: usize| -> BTreeSet<(i64, Nt)> { anc[from..].iter().filter_map(|&m| pd.pair(m)).collect() };
    if pd.action.kind == Visit::Last && !pd.finished {
        if let Some((a0, x0)) = pd.pair(cur).filter(|(_, x)| st.top.contains(x)) {
            if let Some(z) = v_nonterminal(st, a0, x0, pair_set(0), h, lower, vs, thin)? {
                rhs.push(Symbol::Nt(z));
            }
        }
    }
    let mut prev = cur;
    for (idx, &m) in anc.iter().enumerate() {
        let (l, r) = pd.tree.children(m).unwrap();
        if l == prev {
            match pd.tree.label(r) {
                Symbol::Nt(z) => rhs.push(Symbol::Nt(map_lower(st, z, h, lower, thin)?)),
                t => rhs.push(t),
            }
        }
        let Some((ai, xi)) = pd.pair(m) else { return broken(String::from("ancestor without input")) };
        if let Some(z) = v_nonterminal(st, ai, xi, pair_set(idx + 1), h, lower, vs, thin)? {
            rhs.push(Symbol::Nt(z));
        }
        prev = m;
    }
    Ok(rhs)
}

/// Fills in every nonterminal leaf except `hole`: exact witnesses where both
/// counters are known, the fixed small derivations elsewhere.
fn complete_around(
    pd: &PartialDerivation,
    n: NodeId,
    hole: NodeId,
    consts: &Constants,
    oracle: &mut dyn LowerOracle,
) -> Result<Tree, SupertreeError> {
    let label = pd.tree.label(n);
    if n == hole {
        return Ok(Tree::Leaf(label));
    }
    if let Some((l, r)) = pd.tree.children(n) {
        let Symbol::Nt(x) = label else { return broken(String::from("terminal with children")) };
        let lt = complete_around(pd, l, hole, consts, oracle)?;
        let rt = complete_around(pd, r, hole, consts, oracle)?;
        return Ok(Tree::Node(x, lt.into(), rt.into()));
    }
    let Symbol::Nt(v) = label else { return Ok(Tree::Leaf(label)) };
    match (pd.input_of(n), pd.output_of(n)) {
        (Some(i), Some(o)) => oracle.witness(v, i, o).ok_or(SupertreeError::OracleUnknown(v, Query::Reach(i, o))),
        _ => consts
            .c_witness
            .get(&v)
            .map(|t| (**t).clone())
            .ok_or(SupertreeError::PreconditionViolation("no small derivation for a nonterminal")),
    }
}

/// Largest output tried when a lower leaf covers the success bound.
pub const COVER_SEARCH: i64 = 4096;

/// The vertical line `{a} x [T, oo)` of the reachability relation from a
/// successful supernode: the partial derivation is carried to a top node
/// with input at least `A` (propagating a large output, or first choosing a
/// large reachable output of a lower leaf), completed, and handed with that
/// node's pump to the threshold construction.
pub fn success_semilinear(
    st: &Supertree,
    s: usize,
    consts: &Constants,
    oracle: &mut dyn LowerOracle,
    opts: ThresholdOptions,
) -> Result<Threshold, SupertreeError> {
    let node = &st.nodes[s];
    if node.status != Status::Successful {
        return Err(SupertreeError::PreconditionViolation("supernode is not successful"));
    }
    let mut pd = node.pd.clone();
    let mut ids = IdGen::new();
    ids.skip_past(pd.tree.max_id());
    let n = pd.current();
    if node.genesis == Genesis::Lower(None) {
        let Symbol::Nt(v) = pd.tree.label(n) else { return broken(String::from("lower leaf expected")) };
        let i = pd.input_of(n).unwrap();
        let from = st.success_bound();
        let limit = from.max(i) + COVER_SEARCH;
        let mut found = None;
        for b in from..=limit {
            match oracle.reach(v, i, b) {
                Tri::Yes => {
                    found = Some(b);
                    break;
                }
                Tri::No => {}
                Tri::Unknown => return Err(SupertreeError::OracleUnknown(v, Query::Reach(i, b))),
            }
        }
        let b = found.ok_or(SupertreeError::CapExceeded(Cap::Search(limit)))?;
        pd.output.insert(n, b);
        pd.action.kind = Visit::Last;
    }
    let is_top = |x: Symbol| x.nt().is_some_and(|x| st.top.contains(&x));
    let m = if pd.action.kind == Visit::First && is_top(pd.tree.label(n)) {
        n
    } else {
        if !pd.has_unvisited_top(&st.top) {
            let graph = st.reach_graph();
            let Some((start, classes)) = graph.path_to_flagged(&pd.open_pairs(&st.top)) else {
                return broken(String::from("success without a reachable top node"));
            };
            let mut pair = start;
            for c in classes {
                let branch = pd.tree.path_to(pd.current());
                let Some(&q) = branch.iter().rev().find(|&&q| pd.pair(q) == Some(pair)) else {
                    return broken(String::from("insertion point vanished"));
                };
                pd = insert_partial_cycle(&pd, q, &st.gamma[&c], &mut ids);
                pair = c.pairs.get(1).copied().unwrap_or(pair);
                let _ = &mut pair;
            }
        }
        let Some(m) = pd.tree.leaves().into_iter().find(|&l| pd.input_of(l).is_none() && is_top(pd.tree.label(l))) else {
            return broken(String::from("no unvisited top node after insertions"));
        };
        m
    };
    let Symbol::Nt(x) = pd.tree.label(m) else { unreachable!() };
    let pump = consts.pumps.get(&x).ok_or(SupertreeError::PreconditionViolation("no pump for a top nonterminal"))?;
    let outer = complete_around(&pd, pd.tree.root(), m, consts, oracle)?;
    Ok(threshold_from_parts(&st.g, st.a, &outer, &pump.tree, opts)?)
}

/// Removes every cycle whose left and right effects are both zero.
pub fn remove_zero_cycles(theta: &CountedDerivation) -> CountedDerivation {
    let mut cd = theta.clone();
    'outer: loop {
        let d = cd.derivation.clone();
        for p in d.ids() {
            let key = (cd.input[&p], d.label(p), cd.output[&p]);
            for q in d.subtree_nodes(p).into_iter().skip(1) {
                if (cd.input[&q], d.label(q), cd.output[&q]) == key {
                    let (t, cyc) = remove_cycle(&d, p, q).expect("same label below");
                    for m in cyc.derivation.ids() {
                        if m != q {
                            cd.input.remove(&m);
                            cd.output.remove(&m);
                        }
                    }
                    cd.derivation = t;
                    continue 'outer;
                }
            }
        }
        return cd;
    }
}

fn replay_check(
    st: &Supertree,
    s: &Supernode,
    th: &Derivation,
    tin: &BTreeMap<NodeId, i64>,
    tout: &BTreeMap<NodeId, i64>,
    act: EulerAction,
) -> Result<(), SupertreeError> {
    let pd = &s.pd;
    let n = pd.current();
    let m = act.node;
    let fail = |what: &str| broken(format!("supernode {}: {what}", s.id));
    if pd.action.kind != act.kind {
        return fail("visit kinds differ");
    }
    if pd.input_of(n) != tin.get(&m).copied() {
        return fail("inputs differ");
    }
    if act.kind == Visit::Last && pd.output_of(n) != tout.get(&m).copied() {
        return fail("outputs differ");
    }
    let (pb, tb) = (pd.tree.path_to(n), th.path_to(m));
    if pb.len() != tb.len() {
        return fail("current branches differ in length");
    }
    for k in 0..pb.len() {
        let (u, w) = (pb[k], tb[k]);
        if pd.tree.label(u) != th.label(w) || pd.input_of(u) != tin.get(&w).copied() {
            return fail("current branches differ");
        }
        if k + 1 < pb.len() {
            let (ul, ur) = pd.tree.children(u).unwrap();
            let (wl, wr) = th.children(w).unwrap();
            if (ul == pb[k + 1]) != (wl == tb[k + 1]) {
                return fail("current branches turn differently");
            }
            if ul == pb[k + 1] && pd.tree.label(ur) != th.label(wr) {
                return fail("right children differ");
            }
        }
    }
    let _ = st;
    Ok(())
}

/// Walks a counted derivation of the supertree's grammar from input `a`
/// through the supertree, extracting cycles of left effect zero at first
/// visits and reinserting them at last visits, and returns the superleaf
/// reached: a successful one, or a neutral one where the stop condition
/// holds. The derivation must not contain a cycle with both side effects
/// zero (see [`remove_zero_cycles`]).
pub fn replay_double_traversal(st: &Supertree, theta: &CountedDerivation) -> Result<usize, SupertreeError> {
    let mut th = theta.derivation.clone();
    let (tin, tout) = (&theta.input, &theta.output);
    if tin.get(&th.root()) != Some(&st.a) {
        return Err(SupertreeError::PreconditionViolation("derivation must start at the supertree input"));
    }
    let is_top = |x: Symbol| x.nt().is_some_and(|x| st.top.contains(&x));
    let mut act = EulerAction { kind: Visit::First, node: th.root() };
    let mut cur = 0usize;
    let mut first_sn: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut stored: BTreeMap<NodeId, Cycle> = BTreeMap::new();
    let budget = 64 * (theta.derivation.len() + 4) * (st.nodes.len() + 4);
    for step in 0..budget {
        let m = act.node;
        if act.kind == Visit::First && is_top(th.label(m)) {
            let mut anc = th.parent(m);
            while let Some(p) = anc {
                if tin[&p] == tin[&m] && th.label(p) == th.label(m) {
                    break;
                }
                anc = th.parent(p);
            }
            if let Some(p) = anc {
                let (t, cyc) = remove_cycle(&th, p, m).map_err(|e| SupertreeError::InvariantBroken(format!("step {step}: {e}")))?;
                th = t;
                stored.insert(m, cyc);
                cur = *first_sn.get(&p).ok_or(SupertreeError::InvariantBroken(format!("step {step}: no supernode for the cycle root")))?;
                continue;
            }
        }
        let s = &st.nodes[cur];
        match s.status {
            Status::Successful => return Ok(cur),
            Status::Failed => return broken(format!("step {step}: reached a failed supernode")),
            Status::Neutral => {}
        }
        replay_check(st, s, &th, tin, tout, act)?;
        if s.children.is_empty() {
            if !s.stopped {
                return broken(format!("step {step}: dead end at supernode {cur}"));
            }
            return Ok(cur);
        }
        let find = |want: &dyn Fn(&Genesis) -> bool| s.children.iter().copied().find(|&c| want(&st.nodes[c].genesis));
        let next = match act.kind {
            Visit::First => match th.label(m) {
                Symbol::T(_) => {
                    act.kind = Visit::Last;
                    find(&|g| *g == Genesis::Terminal)
                }
                Symbol::Nt(_) if !is_top(th.label(m)) => {
                    act.kind = Visit::Last;
                    let b = tout[&m];
                    find(&|g| *g == Genesis::Lower(Some(b)) || *g == Genesis::Lower(None))
                }
                Symbol::Nt(_) if tin[&m] >= st.bound_a => find(&|g| *g == Genesis::HighInput),
                Symbol::Nt(x) => {
                    first_sn.insert(m, cur);
                    let Some((l, r)) = th.children(m) else { return broken(format!("step {step}: unexpanded top node")) };
                    let rhs = [th.label(l), th.label(r)];
                    act = EulerAction { kind: Visit::First, node: l };
                    find(&|g| matches!(g, Genesis::Expand(ri) if st.g.rules()[*ri].lhs == x && st.g.rules()[*ri].rhs == rhs))
                }
            },
            Visit::Last => {
                if is_top(th.label(m)) && stored.contains_key(&m) {
                    let cyc = stored.remove(&m).unwrap();
                    let root = cyc.derivation.root();
                    th = insert_cycle(&th, m, &cyc).map_err(|e| SupertreeError::InvariantBroken(format!("step {step}: {e}")))?;
                    let Some(class) = CycleClass::of(&th, root, m, |n| tin.get(&n).copied()) else {
                        return broken(format!("step {step}: reinserted cycle has no class"));
                    };
                    find(&|g| *g == Genesis::Insert(class.clone()))
                } else {
                    match th.parent(m) {
                        None => find(&|g| *g == Genesis::Finish),
                        Some(p) => {
                            let (l, r) = th.children(p).unwrap();
                            if l == m {
                                act = EulerAction { kind: Visit::First, node: r };
                                find(&|g| *g == Genesis::Sibling)
                            } else {
                                act = EulerAction { kind: Visit::Last, node: p };
                                find(&|g| *g == Genesis::Close)
                            }
                        }
                    }
                }
            }
        };
        cur = next.ok_or(SupertreeError::InvariantBroken(format!("step {step}: no matching superchild of {cur}")))?;
    }
    broken(String::from("traversal did not terminate"))
}
