//! JSON and DOT renderings of verdicts, witnesses and analyses.

use gvas_core::derivation::Tree;
use gvas_core::grammar::{Gvas, Symbol};
use gvas_core::reach::Verdict;
use serde::{Deserialize, Serialize};

/// A derivation tree: terminals are `{"t": n}`, inner nodes carry the
/// nonterminal name and two children.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeJson {
    Terminal { t: i64 },
    Node { nt: String, children: Vec<TreeJson> },
}

impl TreeJson {
    pub fn of(g: &Gvas, t: &Tree) -> TreeJson {
        match t {
            Tree::Leaf(Symbol::T(v)) => TreeJson::Terminal { t: *v },
            Tree::Leaf(Symbol::Nt(x)) => TreeJson::Node { nt: g.name(*x).to_string(), children: Vec::new() },
            Tree::Node(x, l, r) => TreeJson::Node {
                nt: g.name(*x).to_string(),
                children: vec![TreeJson::of(g, l), TreeJson::of(g, r)],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictReport {
    /// `yes`, `no` or `unknown`.
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<TreeJson>,
    pub diagnostics: Vec<String>,
}

impl VerdictReport {
    pub fn of(g: &Gvas, v: &Verdict) -> VerdictReport {
        match v {
            Verdict::Yes { witness, output } => VerdictReport {
                verdict: "yes".into(),
                output: Some(*output),
                witness: Some(TreeJson::of(g, witness)),
                diagnostics: Vec::new(),
            },
            Verdict::No(c) => VerdictReport {
                verdict: "no".into(),
                output: None,
                witness: None,
                diagnostics: vec![c.to_string()],
            },
            Verdict::Unknown(d) => VerdictReport {
                verdict: "unknown".into(),
                output: None,
                witness: None,
                diagnostics: vec![d.to_string()],
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.verdict.as_str() {
            "yes" => 0,
            "no" => 1,
            _ => 2,
        }
    }
}

/// Graphviz rendering of a derivation, with the counter before and after
/// every node when run from `input`.
pub fn tree_dot(g: &Gvas, t: &Tree, input: i64) -> String {
    let mut out = String::from("digraph derivation {\n  node [fontname=\"monospace\"];\n");
    let mut next = 0usize;
    walk(g, t, input, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn walk(g: &Gvas, t: &Tree, input: i64, next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    let output = input + t.effect();
    match t {
        Tree::Leaf(Symbol::T(v)) => {
            out.push_str(&format!("  n{id} [shape=plaintext, label=\"{v}\\n{input}->{output}\"];\n"));
        }
        Tree::Leaf(Symbol::Nt(x)) => {
            out.push_str(&format!("  n{id} [shape=box, label=\"{}\\n{input}->?\"];\n", g.name(*x)));
        }
        Tree::Node(x, l, r) => {
            out.push_str(&format!("  n{id} [shape=ellipse, label=\"{}\\n{input}->{output}\"];\n", g.name(*x)));
            let mid = input + l.effect();
            let a = walk(g, l, input, next, out);
            let b = walk(g, r, mid, next, out);
            out.push_str(&format!("  n{id} -> n{a};\n  n{id} -> n{b};\n"));
        }
    }
    id
}
