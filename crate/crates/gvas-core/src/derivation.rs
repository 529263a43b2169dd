//! Derivation trees with stable node identifiers, counter annotation, Euler
//! tours, cycles and cycle surgery.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::grammar::{component_dag, Gvas, Nt, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

/// Monotone source of node identifiers.
#[derive(Clone, Debug, Default)]
pub struct IdGen {
    next: u64,
}

impl IdGen {
    pub fn new() -> IdGen {
        IdGen { next: 0 }
    }

    pub fn fresh(&mut self) -> NodeId {
        self.next += 1;
        NodeId(self.next)
    }

    /// Makes sure no id up to `id` is handed out again.
    pub fn skip_past(&mut self, id: NodeId) {
        self.next = self.next.max(id.0);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub label: Symbol,
    pub children: Option<(NodeId, NodeId)>,
    pub parent: Option<NodeId>,
}

/// Ordered full binary tree over identifiers. Leaves may carry nonterminals
/// (partial derivation).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    nodes: BTreeMap<NodeId, Node>,
    root: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DerivationError {
    NegativeCounter(NodeId),
    Incomplete,
    IncompleteCycle,
    LabelMismatch,
    IdCollision(NodeId),
    NotAncestor,
    NotThin,
    Overflow,
}

impl fmt::Display for DerivationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivationError::NegativeCounter(n) => write!(f, "counter below zero at node {}", n.0),
            DerivationError::Incomplete => write!(f, "derivation has nonterminal leaves"),
            DerivationError::IncompleteCycle => write!(f, "cycle has nonterminal leaves besides the distinguished one"),
            DerivationError::LabelMismatch => write!(f, "labels do not match"),
            DerivationError::IdCollision(n) => write!(f, "node id {} already in use", n.0),
            DerivationError::NotAncestor => write!(f, "node is not a descendant of the cycle root"),
            DerivationError::NotThin => write!(f, "grammar is not thin"),
            DerivationError::Overflow => write!(f, "counter overflow"),
        }
    }
}

impl Derivation {
    pub fn leaf(ids: &mut IdGen, label: Symbol) -> Derivation {
        let id = ids.fresh();
        let mut nodes = BTreeMap::new();
        nodes.insert(id, Node { label, children: None, parent: None });
        Derivation { nodes, root: id }
    }

    /// New root labelled `x` over two existing trees (their ids must be disjoint).
    pub fn node(ids: &mut IdGen, x: Nt, left: Derivation, right: Derivation) -> Derivation {
        let id = ids.fresh();
        let (lr, rr) = (left.root, right.root);
        let mut nodes = left.nodes;
        nodes.extend(right.nodes);
        nodes.get_mut(&lr).unwrap().parent = Some(id);
        nodes.get_mut(&rr).unwrap().parent = Some(id);
        nodes.insert(id, Node { label: Symbol::Nt(x), children: Some((lr, rr)), parent: None });
        Derivation { nodes, root: id }
    }

    pub fn from_tree(t: &Tree, ids: &mut IdGen) -> Derivation {
        match t {
            Tree::Leaf(s) => Derivation::leaf(ids, *s),
            Tree::Node(x, l, r) => {
                let l = Derivation::from_tree(l, ids);
                let r = Derivation::from_tree(r, ids);
                Derivation::node(ids, *x, l, r)
            }
        }
    }

    pub fn to_tree(&self) -> Tree {
        self.subtree_tree(self.root)
    }

    pub fn subtree_tree(&self, n: NodeId) -> Tree {
        let node = &self.nodes[&n];
        match node.children {
            None => Tree::Leaf(node.label),
            Some((l, r)) => Tree::Node(
                node.label.nt().unwrap(),
                Rc::new(self.subtree_tree(l)),
                Rc::new(self.subtree_tree(r)),
            ),
        }
    }

    /// The subtree at `n` as a [`Tree`], with the subtree at `hole` (if any)
    /// cut down to a bare leaf carrying its label.
    pub fn tree_with_hole(&self, n: NodeId, hole: Option<NodeId>) -> Tree {
        if Some(n) == hole {
            return Tree::Leaf(self.label(n));
        }
        match self.children(n) {
            None => Tree::Leaf(self.label(n)),
            Some((l, r)) => {
                let Symbol::Nt(x) = self.label(n) else { unreachable!("inner node with terminal label") };
                Tree::Node(x, Rc::new(self.tree_with_hole(l, hole)), Rc::new(self.tree_with_hole(r, hole)))
            }
        }
    }

    /// Copy with every identifier renamed through `f`, which must be injective.
    pub fn map_ids(&self, f: impl Fn(NodeId) -> NodeId) -> Derivation {
        let nodes = self
            .nodes
            .iter()
            .map(|(&id, n)| {
                let node = Node {
                    label: n.label,
                    children: n.children.map(|(l, r)| (f(l), f(r))),
                    parent: n.parent.map(&f),
                };
                (f(id), node)
            })
            .collect();
        Derivation { nodes, root: f(self.root) }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, n: NodeId) -> &Node {
        &self.nodes[&n]
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains_key(&n)
    }

    pub fn label(&self, n: NodeId) -> Symbol {
        self.nodes[&n].label
    }

    pub fn children(&self, n: NodeId) -> Option<(NodeId, NodeId)> {
        self.nodes[&n].children
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.nodes[&n].parent
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn max_id(&self) -> NodeId {
        *self.nodes.keys().next_back().unwrap()
    }

    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.leaves_under(self.root)
    }

    pub fn leaves_under(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            match self.nodes[&m].children {
                None => out.push(m),
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
            }
        }
        out
    }

    /// Nodes of the subtree rooted at `n`, in preorder.
    pub fn subtree_nodes(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(m) = stack.pop() {
            out.push(m);
            if let Some((l, r)) = self.nodes[&m].children {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// True when `anc` is `n` or one of its ancestors.
    pub fn is_ancestor(&self, anc: NodeId, n: NodeId) -> bool {
        let mut cur = Some(n);
        while let Some(m) = cur {
            if m == anc {
                return true;
            }
            cur = self.nodes[&m].parent;
        }
        false
    }

    /// Path from the root down to `n`, both included.
    pub fn path_to(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = Some(n);
        while let Some(m) = cur {
            out.push(m);
            cur = self.nodes[&m].parent;
        }
        out.reverse();
        out
    }

    pub fn is_complete(&self) -> bool {
        self.nodes.values().all(|n| n.children.is_some() || matches!(n.label, Symbol::T(_)))
    }

    /// Nonterminals occurring anywhere in the tree.
    pub fn nonterminal_set(&self) -> BTreeSet<Nt> {
        self.nodes.values().filter_map(|n| n.label.nt()).collect()
    }

    /// Checks that every internal node matches a rule of `g`.
    pub fn produced_by(&self, g: &Gvas) -> bool {
        self.nodes.values().all(|n| match n.children {
            None => true,
            Some((l, r)) => {
                let rhs = [self.nodes[&l].label, self.nodes[&r].label];
                g.rules().iter().any(|rule| Symbol::Nt(rule.lhs) == n.label && rule.rhs == rhs)
            }
        })
    }

    /// Replaces the subtree at `at` by a fresh copy of `t`; `at` keeps its id.
    pub fn graft(&mut self, at: NodeId, t: &Tree, ids: &mut IdGen) {
        let mut sub = Derivation::from_tree(t, ids);
        for m in self.subtree_nodes(at) {
            if m != at {
                self.nodes.remove(&m);
            }
        }
        let parent = self.nodes[&at].parent;
        let old_root = sub.root;
        let mut root_node = sub.nodes.remove(&old_root).unwrap();
        root_node.parent = parent;
        if let Some((l, r)) = root_node.children {
            sub.nodes.get_mut(&l).unwrap().parent = Some(at);
            sub.nodes.get_mut(&r).unwrap().parent = Some(at);
        }
        self.nodes.insert(at, root_node);
        self.nodes.extend(sub.nodes);
    }

    /// Expands the leaf `at` with the rule `x -> left right`, returning the
    /// two new leaves.
    pub fn expand_leaf(&mut self, at: NodeId, left: Symbol, right: Symbol, ids: &mut IdGen) -> (NodeId, NodeId) {
        let (l, r) = (ids.fresh(), ids.fresh());
        self.nodes.insert(l, Node { label: left, children: None, parent: Some(at) });
        self.nodes.insert(r, Node { label: right, children: None, parent: Some(at) });
        self.nodes.get_mut(&at).unwrap().children = Some((l, r));
        (l, r)
    }
}

/// Lightweight immutable tree used by enumeration and search.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tree {
    Leaf(Symbol),
    Node(Nt, Rc<Tree>, Rc<Tree>),
}

impl Tree {
    pub fn size(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Node(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn label(&self) -> Symbol {
        match self {
            Tree::Leaf(s) => *s,
            Tree::Node(x, _, _) => Symbol::Nt(*x),
        }
    }

    pub fn yield_symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.push_yield(&mut out);
        out
    }

    fn push_yield(&self, out: &mut Vec<Symbol>) {
        match self {
            Tree::Leaf(s) => out.push(*s),
            Tree::Node(_, l, r) => {
                l.push_yield(out);
                r.push_yield(out);
            }
        }
    }

    /// Sum of terminal leaves.
    pub fn effect(&self) -> i64 {
        match self {
            Tree::Leaf(Symbol::T(t)) => *t,
            Tree::Leaf(_) => 0,
            Tree::Node(_, l, r) => l.effect() + r.effect(),
        }
    }

    /// Smallest input at which the terminal yield is valid.
    pub fn required_input(&self) -> i64 {
        required_input(&terminals_of(&self.yield_symbols()))
    }

    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Node(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    pub fn is_complete(&self) -> bool {
        match self {
            Tree::Leaf(s) => matches!(s, Symbol::T(_)),
            Tree::Node(_, l, r) => l.is_complete() && r.is_complete(),
        }
    }

    /// True when no root-to-leaf path repeats a nonterminal.
    pub fn is_simple(&self) -> bool {
        fn go(t: &Tree, path: &mut Vec<Nt>) -> bool {
            let Symbol::Nt(x) = t.label() else { return true };
            if path.contains(&x) {
                return false;
            }
            match t {
                Tree::Node(_, l, r) => {
                    path.push(x);
                    let ok = go(l, path) && go(r, path);
                    path.pop();
                    ok
                }
                Tree::Leaf(_) => true,
            }
        }
        go(self, &mut Vec::new())
    }

    pub fn nonterminals(&self, out: &mut BTreeSet<Nt>) {
        if let Symbol::Nt(x) = self.label() {
            out.insert(x);
        }
        if let Tree::Node(_, l, r) = self {
            l.nonterminals(out);
            r.nonterminals(out);
        }
    }
}

pub fn terminals_of(syms: &[Symbol]) -> Vec<i64> {
    syms.iter()
        .filter_map(|s| match s {
            Symbol::T(t) => Some(*t),
            _ => None,
        })
        .collect()
}

/// Smallest `n` such that the run is valid at `n`.
pub fn required_input(run: &[i64]) -> i64 {
    let mut sum = 0i64;
    let mut need = 0i64;
    for &v in run {
        sum += v;
        need = need.max(-sum);
    }
    need
}

pub fn yield_of(d: &Derivation) -> Vec<Symbol> {
    d.leaves().into_iter().map(|n| d.label(n)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunValidity {
    Valid(i64),
    /// Index of the first value after which the counter is negative.
    Invalid(usize),
}

pub fn run_validity(run: &[i64], n: i64) -> RunValidity {
    let mut c = n;
    for (i, &v) in run.iter().enumerate() {
        c += v;
        if c < 0 {
            return RunValidity::Invalid(i);
        }
    }
    RunValidity::Valid(c)
}

/// A derivation with input and output counters on every node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountedDerivation {
    pub derivation: Derivation,
    pub input: BTreeMap<NodeId, i64>,
    pub output: BTreeMap<NodeId, i64>,
}

impl CountedDerivation {
    pub fn root_output(&self) -> i64 {
        self.output[&self.derivation.root()]
    }

    /// Checks the flow conditions and nonnegativity.
    pub fn flow_ok(&self) -> bool {
        let d = &self.derivation;
        d.ids().all(|n| {
            let (i, o) = (self.input[&n], self.output[&n]);
            if i < 0 || o < 0 {
                return false;
            }
            match d.children(n) {
                None => match d.label(n) {
                    Symbol::T(t) => o == i + t,
                    Symbol::Nt(_) => true,
                },
                Some((l, r)) => {
                    self.input[&l] == i && self.output[&l] == self.input[&r] && self.output[&r] == o
                }
            }
        })
    }
}

/// Counter annotation of a complete derivation. Fails at the first leaf, in
/// Euler order, whose output would be negative.
pub fn annotate(d: &Derivation, input: i64) -> Result<CountedDerivation, DerivationError> {
    if !d.is_complete() {
        return Err(DerivationError::Incomplete);
    }
    let mut inp = BTreeMap::new();
    let mut out = BTreeMap::new();
    let mut c = input;
    for a in euler_tour(d) {
        match a.kind {
            Visit::First => {
                inp.insert(a.node, c);
                if let Symbol::T(t) = d.label(a.node) {
                    if d.children(a.node).is_none() {
                        c = c.checked_add(t).ok_or(DerivationError::Overflow)?;
                        if c < 0 {
                            return Err(DerivationError::NegativeCounter(a.node));
                        }
                    }
                }
            }
            Visit::Last => {
                out.insert(a.node, c);
            }
        }
    }
    Ok(CountedDerivation { derivation: d.clone(), input: inp, output: out })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Visit {
    First,
    Last,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EulerAction {
    pub kind: Visit,
    pub node: NodeId,
}

pub fn euler_tour(d: &Derivation) -> Vec<EulerAction> {
    euler_tour_from(d, d.root())
}

pub fn euler_tour_from(d: &Derivation, n: NodeId) -> Vec<EulerAction> {
    let mut out = Vec::with_capacity(2 * d.len());
    let mut stack = vec![EulerAction { kind: Visit::First, node: n }];
    while let Some(a) = stack.pop() {
        out.push(a);
        if a.kind == Visit::First {
            stack.push(EulerAction { kind: Visit::Last, node: a.node });
            if let Some((l, r)) = d.children(a.node) {
                stack.push(EulerAction { kind: Visit::First, node: r });
                stack.push(EulerAction { kind: Visit::First, node: l });
            }
        }
    }
    out
}

/// Rebuilds the tree shape from an Euler tour.
pub fn tree_from_tour(tour: &[EulerAction], labels: &BTreeMap<NodeId, Symbol>) -> Option<Derivation> {
    let mut nodes: BTreeMap<NodeId, Node> = BTreeMap::new();
    let mut open: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
    let mut root = None;
    for a in tour {
        match a.kind {
            Visit::First => {
                if let Some((p, kids)) = open.last_mut() {
                    kids.push(a.node);
                    nodes.insert(a.node, Node { label: labels[&a.node], children: None, parent: Some(*p) });
                } else {
                    if root.is_some() {
                        return None;
                    }
                    root = Some(a.node);
                    nodes.insert(a.node, Node { label: labels[&a.node], children: None, parent: None });
                }
                open.push((a.node, Vec::new()));
            }
            Visit::Last => {
                let (n, kids) = open.pop()?;
                if n != a.node {
                    return None;
                }
                match kids.len() {
                    0 => {}
                    2 => nodes.get_mut(&n)?.children = Some((kids[0], kids[1])),
                    _ => return None,
                }
            }
        }
    }
    Some(Derivation { nodes, root: root? })
}

/// A derivation with a distinguished leaf labelled like the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle {
    pub derivation: Derivation,
    pub distinguished: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Effects {
    pub left: i64,
    pub right: i64,
    pub global: i64,
}

impl Cycle {
    /// Left and right terminal runs around the distinguished leaf.
    pub fn sides(&self) -> (Vec<i64>, Vec<i64>) {
        let leaves = self.derivation.leaves();
        let pos = leaves.iter().position(|&n| n == self.distinguished).unwrap();
        let run = |ns: &[NodeId]| terminals_of(&ns.iter().map(|&n| self.derivation.label(n)).collect::<Vec<_>>());
        (run(&leaves[..pos]), run(&leaves[pos + 1..]))
    }
}

pub fn cycle_effects(c: &Cycle) -> Result<Effects, DerivationError> {
    let d = &c.derivation;
    let complete = d
        .leaves()
        .into_iter()
        .all(|n| n == c.distinguished || matches!(d.label(n), Symbol::T(_)));
    if !complete {
        return Err(DerivationError::IncompleteCycle);
    }
    let (l, r) = c.sides();
    let left: i64 = l.iter().sum();
    let right: i64 = r.iter().sum();
    Ok(Effects { left, right, global: left + right })
}

/// Hangs the subtree at `at` below the distinguished leaf of `c` and puts
/// `c` where `at` was.
pub fn insert_cycle(d: &Derivation, at: NodeId, c: &Cycle) -> Result<Derivation, DerivationError> {
    let cd = &c.derivation;
    if d.label(at) != cd.label(cd.root) || cd.label(c.distinguished) != cd.label(cd.root) {
        return Err(DerivationError::LabelMismatch);
    }
    for n in cd.ids() {
        if n != c.distinguished && d.contains(n) {
            return Err(DerivationError::IdCollision(n));
        }
    }
    if c.distinguished == cd.root {
        return Ok(d.clone());
    }
    let mut nodes = d.nodes.clone();
    let parent = nodes[&at].parent;
    for (&id, node) in &cd.nodes {
        if id == c.distinguished {
            continue;
        }
        let mut node = node.clone();
        if let Some((l, r)) = node.children {
            let fix = |x: NodeId| if x == c.distinguished { at } else { x };
            node.children = Some((fix(l), fix(r)));
        }
        nodes.insert(id, node);
    }
    let dist_parent = cd.nodes[&c.distinguished].parent;
    nodes.get_mut(&at).unwrap().parent = dist_parent;
    nodes.get_mut(&cd.root).unwrap().parent = parent;
    let mut root = d.root;
    match parent {
        None => root = cd.root,
        Some(p) => {
            let n = nodes.get_mut(&p).unwrap();
            let (l, r) = n.children.unwrap();
            n.children = Some(if l == at { (cd.root, r) } else { (l, cd.root) });
        }
    }
    Ok(Derivation { nodes, root })
}

/// Cuts the cycle between `cycle_root` and its descendant `distinguished`.
/// The returned cycle's distinguished leaf reuses the id `distinguished`.
pub fn remove_cycle(
    d: &Derivation,
    cycle_root: NodeId,
    distinguished: NodeId,
) -> Result<(Derivation, Cycle), DerivationError> {
    if !d.is_ancestor(cycle_root, distinguished) {
        return Err(DerivationError::NotAncestor);
    }
    if d.label(cycle_root) != d.label(distinguished) {
        return Err(DerivationError::LabelMismatch);
    }
    if cycle_root == distinguished {
        let mut nodes = BTreeMap::new();
        nodes.insert(distinguished, Node { label: d.label(distinguished), children: None, parent: None });
        return Ok((d.clone(), Cycle { derivation: Derivation { nodes, root: distinguished }, distinguished }));
    }
    let keep: BTreeSet<NodeId> = d.subtree_nodes(distinguished).into_iter().collect();
    let mut cyc = BTreeMap::new();
    for n in d.subtree_nodes(cycle_root) {
        if keep.contains(&n) {
            continue;
        }
        let mut node = d.nodes[&n].clone();
        if n == cycle_root {
            node.parent = None;
        }
        cyc.insert(n, node);
    }
    let dp = d.nodes[&distinguished].parent;
    cyc.insert(distinguished, Node { label: d.label(distinguished), children: None, parent: dp });

    let mut nodes = d.nodes.clone();
    for n in cyc.keys() {
        if *n != distinguished {
            nodes.remove(n);
        }
    }
    let parent = d.nodes[&cycle_root].parent;
    nodes.get_mut(&distinguished).unwrap().parent = parent;
    let mut root = d.root;
    match parent {
        None => root = distinguished,
        Some(p) => {
            let n = nodes.get_mut(&p).unwrap();
            let (l, r) = n.children.unwrap();
            n.children = Some(if l == cycle_root { (distinguished, r) } else { (l, distinguished) });
        }
    }
    Ok((Derivation { nodes, root }, Cycle { derivation: Derivation { nodes: cyc, root: cycle_root }, distinguished }))
}

/// Memoised enumeration of complete derivations by exact node count.
pub struct Enumerator<'g> {
    g: &'g Gvas,
    memo: BTreeMap<(Nt, usize), Rc<Vec<Rc<Tree>>>>,
}

impl<'g> Enumerator<'g> {
    pub fn new(g: &'g Gvas) -> Enumerator<'g> {
        Enumerator { g, memo: BTreeMap::new() }
    }

    fn symbol(&mut self, s: Symbol, size: usize) -> Rc<Vec<Rc<Tree>>> {
        match s {
            Symbol::T(_) if size == 1 => Rc::new(vec![Rc::new(Tree::Leaf(s))]),
            Symbol::T(_) => Rc::new(Vec::new()),
            Symbol::Nt(x) => self.exact(x, size),
        }
    }

    /// Complete `x`-derivations with exactly `size` nodes, ordered by rule
    /// index and then by left subtree size.
    pub fn exact(&mut self, x: Nt, size: usize) -> Rc<Vec<Rc<Tree>>> {
        if let Some(v) = self.memo.get(&(x, size)) {
            return v.clone();
        }
        let mut out = Vec::new();
        if size >= 3 && size % 2 == 1 {
            let rules: Vec<usize> = self.g.rules_of(x).collect();
            for ri in rules {
                let (a, b) = (self.g.rules()[ri].rhs[0], self.g.rules()[ri].rhs[1]);
                let mut ls = 1;
                while ls + 1 < size {
                    let rs = size - 1 - ls;
                    let lefts = self.symbol(a, ls);
                    if !lefts.is_empty() {
                        let rights = self.symbol(b, rs);
                        for l in lefts.iter() {
                            for r in rights.iter() {
                                out.push(Rc::new(Tree::Node(x, l.clone(), r.clone())));
                            }
                        }
                    }
                    ls += 2;
                }
            }
        }
        let v = Rc::new(out);
        self.memo.insert((x, size), v.clone());
        v
    }

    /// All complete `x`-derivations with at most `max_nodes` nodes, smaller
    /// ones first.
    pub fn up_to(&mut self, x: Nt, max_nodes: usize) -> Vec<Rc<Tree>> {
        let mut out = Vec::new();
        let mut n = 3;
        while n <= max_nodes {
            out.extend(self.exact(x, n).iter().cloned());
            n += 2;
        }
        out
    }
}

/// All complete `x`-derivations with at most `max_nodes` nodes, in rule
/// order, then by left subtree size, then by right subtree size.
pub fn enumerate_complete(g: &Gvas, x: Nt, max_nodes: usize) -> Vec<Rc<Tree>> {
    let mut e = Enumerator::new(g);
    let mut out = Vec::new();
    for ri in g.rules_of(x) {
        let (a, b) = (g.rules()[ri].rhs[0], g.rules()[ri].rhs[1]);
        let mut ls = 1;
        while ls + 2 <= max_nodes {
            let mut rs = 1;
            while 1 + ls + rs <= max_nodes {
                let lefts = e.symbol(a, ls);
                let rights = e.symbol(b, rs);
                for l in lefts.iter() {
                    for r in rights.iter() {
                        out.push(Rc::new(Tree::Node(x, l.clone(), r.clone())));
                    }
                }
                rs += 2;
            }
            ls += 2;
        }
    }
    out
}

pub fn is_simple(d: &Derivation) -> bool {
    d.to_tree().is_simple()
}

/// True when the cycle between two same-labelled nodes is simple: both
/// subtrees under the cycle root, with the distinguished leaf cut off, are
/// simple derivations.
pub fn cycle_is_simple(d: &Derivation, cycle_root: NodeId, distinguished: NodeId) -> bool {
    let Some((l, r)) = d.children(cycle_root) else { return false };
    let ok = |top: NodeId| {
        let mut stack = vec![(top, Vec::<Symbol>::new())];
        while let Some((n, mut path)) = stack.pop() {
            let lab = d.label(n);
            if matches!(lab, Symbol::Nt(_)) {
                if path.contains(&lab) {
                    return false;
                }
                path.push(lab);
            }
            if n == distinguished {
                continue;
            }
            if let Some((a, b)) = d.children(n) {
                stack.push((a, path.clone()));
                stack.push((b, path));
            }
        }
        true
    };
    ok(l) && ok(r)
}

/// True when removing any simple cycle of `d` shrinks its set of nonterminals.
pub fn is_irreducible(_g: &Gvas, d: &Derivation) -> bool {
    let all = d.nonterminal_set();
    for n in d.ids() {
        if d.children(n).is_none() {
            continue;
        }
        for m in d.subtree_nodes(n) {
            if m == n || d.label(m) != d.label(n) || !cycle_is_simple(d, n, m) {
                continue;
            }
            let (rest, _) = remove_cycle(d, n, m).unwrap();
            if rest.nonterminal_set().len() == all.len() {
                return false;
            }
        }
    }
    true
}

/// Sentential form with each position linked to the node it stands for.
pub type SententialForm = Vec<(Symbol, NodeId)>;

/// Rewriting sequence realising `d` in which every form has at most as many
/// nonterminals as `g` has components: at each node the child outside the
/// node's component is expanded completely first.
pub fn finite_index_schedule(g: &Gvas, d: &Derivation) -> Result<Vec<SententialForm>, DerivationError> {
    let dag = component_dag(g);
    if dag.class.contains(&crate::grammar::Class::Branching) {
        return Err(DerivationError::NotThin);
    }
    if !d.is_complete() {
        return Err(DerivationError::Incomplete);
    }
    let comp = |s: Symbol| s.nt().map(|x| dag.comp_of[x.index()]);
    let mut order = Vec::new();
    let mut stack = vec![d.root()];
    while let Some(n) = stack.pop() {
        let Some((l, r)) = d.children(n) else { continue };
        order.push(n);
        let here = comp(d.label(n));
        // the child pushed last is expanded first
        if comp(d.label(l)) == here && comp(d.label(r)) != here {
            stack.push(l);
            stack.push(r);
        } else {
            stack.push(r);
            stack.push(l);
        }
    }
    let mut form: SententialForm = vec![(d.label(d.root()), d.root())];
    let mut out = vec![form.clone()];
    for n in order {
        let pos = form.iter().position(|&(_, id)| id == n).unwrap();
        let (l, r) = d.children(n).unwrap();
        form.splice(pos..pos + 1, [(d.label(l), l), (d.label(r), r)]);
        out.push(form.clone());
    }
    Ok(out)
}
