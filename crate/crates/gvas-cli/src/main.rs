mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gvas_core::cycles::{constants_of, is_infinitary, is_top_branching, residuum, simple_cycles};
use gvas_core::derivation::Tree;
use gvas_core::fixtures::{corpus, CORPUS_SEED, CORPUS_SIZE};
use gvas_core::grammar::{binarize, component_dag, is_thin, parse_gvas, size_of, Class, Gvas, Origin, Symbol};
use gvas_core::oracle::BoundedOracle;
use gvas_core::reach::{self, brute_window, small_lines, thinify, Answer, Budget, Verdict};
use gvas_core::region::far_from_axis;
use gvas_core::semilinear::SemilinearRelation;
use gvas_core::supertree::{build_supertree, Status, Supernode, Supertree, SupertreeOptions};
use report::{tree_dot, VerdictReport};
use serde::Serialize;
use serde_json::{json, Value};

/// Writes to stdout, ignoring a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout().lock(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

/// Reachability analysis for one-dimensional grammar vector addition systems.
///
/// Exit codes: 0 yes or success, 1 no, 2 unknown or a budget ran out,
/// 3 usage, parse or precondition error.
#[derive(Parser, Debug)]
#[command(name = "gvas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Print the report as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Seed of the generated corpus read by `corpus:K` grammar arguments.
    #[arg(long, global = true, default_value_t = CORPUS_SEED)]
    seed: u64,
    /// Node cap of brute-force derivation search.
    #[arg(long, global = true, default_value_t = Budget::default().max_nodes)]
    max_nodes: usize,
    /// Largest counter value the saturation oracles explore.
    #[arg(long, global = true, default_value_t = Budget::default().max_counter)]
    max_counter: i64,
    /// Work limit of one oracle saturation.
    #[arg(long, global = true, default_value_t = Budget::default().max_steps)]
    max_steps: u64,
    /// Leave failed supernodes out of supertree exports.
    #[arg(long, global = true)]
    prune: bool,
}

impl GlobalOpts {
    fn budget(&self) -> Budget {
        Budget { max_nodes: self.max_nodes, max_counter: self.max_counter, max_steps: self.max_steps }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Components, residues, simple cycles and constants.
    Analyze { file: String },
    /// Decide whether input FROM can end with counter TO.
    Reach {
        file: String,
        #[arg(long)]
        from: i64,
        #[arg(long)]
        to: i64,
        /// Write the witness derivation as DOT.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Decide whether input FROM can end with counter at least TARGET.
    Cover {
        file: String,
        #[arg(long)]
        from: i64,
        #[arg(long)]
        target: i64,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Build an equivalent thin grammar.
    Thinify {
        file: String,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Thin grammar exact on the vertical line from input A above a threshold.
    Lines {
        file: String,
        #[arg(long)]
        a: i64,
    },
    /// Thin grammar exact far from both axes.
    Region { file: String },
    /// Brute-force relation on a square window.
    Oracle {
        file: String,
        #[arg(long)]
        window: i64,
    },
    /// Build the supertree from input A.
    Supertree {
        file: String,
        #[arg(long)]
        a: i64,
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Write every supernode as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

enum Failure {
    /// Bad arguments, unreadable or malformed input, unmet precondition.
    Usage(String),
    /// A budget ran out or an oracle could not decide.
    Unknown(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Unknown(m)) => {
            if cli.opts.json {
                print_json(&json!({ "verdict": "unknown", "diagnostics": [m] }));
            } else {
                outln!("unknown: {m}");
            }
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let o = &cli.opts;
    match &cli.command {
        Command::Analyze { file } => analyze(&load(file, o)?, o),
        Command::Reach { file, from, to, dot } => {
            let ans = reach::reach_answer(&load(file, o)?, *from, *to, o.budget());
            verdict(&ans, *from, dot.as_deref(), o)
        }
        Command::Cover { file, from, target, dot } => {
            let ans = reach::cover_answer(&load(file, o)?, *from, *target, o.budget());
            verdict(&ans, *from, dot.as_deref(), o)
        }
        Command::Thinify { file, output } => thin(&load(file, o)?, output.as_deref(), o),
        Command::Lines { file, a } => lines(&load(file, o)?, *a, o),
        Command::Region { file } => region(&load(file, o)?, o),
        Command::Oracle { file, window } => oracle_window(&load(file, o)?, *window, o),
        Command::Supertree { file, a, dot, dump } => supertree(&load(file, o)?, *a, dot.as_deref(), dump.as_deref(), o),
    }
}

/// Reads a grammar file, or `corpus:K` for the K-th generated grammar.
fn load(file: &str, o: &GlobalOpts) -> Result<Gvas, Failure> {
    if let Some(k) = file.strip_prefix("corpus:") {
        let k: usize = k.parse().map_err(|_| Failure::Usage(format!("bad corpus index {k:?}")))?;
        return corpus(o.seed, CORPUS_SIZE)
            .into_iter()
            .nth(k)
            .ok_or_else(|| Failure::Usage(format!("corpus has {CORPUS_SIZE} grammars")));
    }
    let text = fs::read_to_string(file).map_err(|e| Failure::Usage(format!("{file}: {e}")))?;
    parse_gvas(&text).map_err(|e| Failure::Usage(format!("{file}: {e}")))
}

fn print_json(v: &impl Serialize) {
    outln!("{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Bracket notation: `X(l r)` for inner nodes, the number for terminals.
fn tree_text(g: &Gvas, t: &Tree) -> String {
    match t {
        Tree::Leaf(Symbol::T(v)) => v.to_string(),
        Tree::Leaf(Symbol::Nt(x)) => g.name(*x).to_string(),
        Tree::Node(x, l, r) => format!("{}({} {})", g.name(*x), tree_text(g, l), tree_text(g, r)),
    }
}

/// Binarized and trimmed, the form every construction expects.
fn prepared(g: &Gvas) -> Gvas {
    binarize(g).trim()
}

fn names(g: &Gvas, xs: &[gvas_core::grammar::Nt]) -> Vec<String> {
    xs.iter().filter(|&&x| g.origin(x) == Origin::User).map(|&x| g.name(x).to_string()).collect()
}

fn analyze(g: &Gvas, o: &GlobalOpts) -> Outcome {
    let g = prepared(g);
    let dag = component_dag(&g);
    let mut comps = Vec::new();
    for (c, members) in dag.components.iter().enumerate() {
        comps.push(json!({
            "nonterminals": names(&g, members),
            "auxiliary": members.len() - names(&g, members).len(),
            "class": match dag.class[c] { Class::Thin => "thin", Class::Branching => "branching" },
            "top": c == dag.top,
        }));
    }
    let res = residuum(&g).map(|r| {
        let rs: BTreeMap<String, i64> =
            g.nonterminals().filter(|&x| g.origin(x) == Origin::User).map(|x| (g.name(x).to_string(), r.residue(x))).collect();
        json!({ "d": r.d, "r": rs })
    });
    let cycles = simple_cycles(&g).map(|cs| {
        cs.iter()
            .filter(|c| g.origin(c.nonterminal) == Origin::User)
            .map(|c| json!({ "nonterminal": g.name(c.nonterminal), "left": c.left, "right": c.right, "global": c.global }))
            .collect::<Vec<_>>()
    });
    let infinitary = is_infinitary(&g).map(|i| i.holds());
    let top_branching = is_top_branching(&g);
    let consts = if top_branching && matches!(infinitary, Ok(true)) {
        constants_of(&g).ok().map(|c| json!({ "A": c.a, "C": c.c, "D": c.d, "D'": c.dp }))
    } else {
        None
    };
    let err = |e: &dyn std::fmt::Display| json!({ "error": e.to_string() });
    let report = json!({
        "nonterminals": g.nt_count(),
        "rules": g.rules().len(),
        "size": size_of(&g),
        "thin": is_thin(&g),
        "top_branching": top_branching,
        "components": comps,
        "residuum": res.as_ref().map_or_else(|e| err(e), |v| v.clone()),
        "simple_cycles": cycles.as_ref().map_or_else(|e| err(e), |v| json!(v)),
        "infinitary": infinitary.as_ref().map_or_else(|e| err(e), |&b| json!(b)),
        "constants": consts,
    });
    if o.json {
        print_json(&report);
        return Ok(0);
    }
    let mut out = String::new();
    let _ = writeln!(out, "{} nonterminals, {} rules, size {}", g.nt_count(), g.rules().len(), size_of(&g));
    let _ = writeln!(out, "components, bottom-up:");
    for (c, members) in dag.components.iter().enumerate() {
        let user = names(&g, members);
        let aux = members.len() - user.len();
        let class = match dag.class[c] {
            Class::Thin => "thin",
            Class::Branching => "branching",
        };
        let _ = write!(out, "  {{{}}} {class}", user.join(", "));
        if aux > 0 {
            let _ = write!(out, " (+{aux} auxiliary)");
        }
        if c == dag.top {
            let _ = write!(out, " top");
        }
        out.push('\n');
    }
    match &res {
        Ok(v) => {
            let rs: Vec<String> =
                v["r"].as_object().unwrap().iter().map(|(k, r)| format!("r({k}) = {r}")).collect();
            let _ = writeln!(out, "residuum: d = {}; {}", v["d"], rs.join(", "));
        }
        Err(e) => {
            let _ = writeln!(out, "residuum: {e}");
        }
    }
    match &cycles {
        Ok(cs) => {
            let _ = writeln!(out, "simple cycles: {}", cs.len());
            for c in cs {
                let _ = writeln!(
                    out,
                    "  {} left {} right {} global {}",
                    c["nonterminal"].as_str().unwrap(),
                    c["left"],
                    c["right"],
                    c["global"]
                );
            }
        }
        Err(e) => {
            let _ = writeln!(out, "simple cycles: {e}");
        }
    }
    match &infinitary {
        Ok(b) => {
            let _ = writeln!(out, "infinitary: {}", if *b { "yes" } else { "no" });
        }
        Err(e) => {
            let _ = writeln!(out, "infinitary: {e}");
        }
    }
    let _ = writeln!(out, "top-branching: {}", if top_branching { "yes" } else { "no" });
    if let Some(c) = &consts {
        let _ = writeln!(out, "constants: A = {}, C = {}, D = {}, D' = {}", c["A"], c["C"], c["D"], c["D'"]);
    }
    out!("{out}");
    Ok(0)
}

fn verdict(ans: &Answer, from: i64, dot: Option<&Path>, o: &GlobalOpts) -> Outcome {
    let h = &ans.grammar;
    let report = VerdictReport::of(h, &ans.verdict);
    let text = match &ans.verdict {
        Verdict::Yes { witness, output } => {
            if let Some(p) = dot {
                write_file(p, &tree_dot(h, witness, from))?;
            }
            format!("yes: {from} -> {output}\nwitness: {}\n", tree_text(h, witness))
        }
        Verdict::No(c) => format!("no: {c}\n"),
        Verdict::Unknown(d) => format!("unknown: {d}\n"),
    };
    if o.json {
        print_json(&report);
    } else {
        out!("{text}");
    }
    Ok(report.exit_code())
}

fn thin(g: &Gvas, output: Option<&Path>, o: &GlobalOpts) -> Outcome {
    let h = thinify(g, o.budget()).map_err(|d| Failure::Unknown(d.to_string()))?;
    let text = h.to_string();
    if let Some(p) = output {
        write_file(p, &text)?;
    }
    if o.json {
        print_json(&json!({
            "nonterminals": h.nt_count(),
            "rules": h.rules().len(),
            "thin": is_thin(&h),
            "grammar": text,
        }));
    } else if output.is_some() {
        outln!("thin grammar: {} nonterminals, {} rules", h.nt_count(), h.rules().len());
    } else {
        out!("{text}");
    }
    Ok(0)
}

/// Checks what the single-component constructions need.
fn top_branching_with_thin_lower(g: &Gvas) -> Result<Gvas, Failure> {
    let g = prepared(g);
    if !is_top_branching(&g) {
        return Err(Failure::Usage("the top component must be branching".into()));
    }
    let dag = component_dag(&g);
    if dag.below(dag.top).into_iter().any(|c| c != dag.top && dag.class[c] == Class::Branching) {
        return Err(Failure::Usage("lower components must be thin; thinify them first".into()));
    }
    Ok(g)
}

fn lines(g: &Gvas, a: i64, o: &GlobalOpts) -> Outcome {
    if a < 0 {
        return Err(Failure::Usage("input must be nonnegative".into()));
    }
    let g = top_branching_with_thin_lower(g)?;
    let (t, h) = small_lines(&g, a, o.budget()).map_err(|d| Failure::Unknown(d.to_string()))?;
    if o.json {
        print_json(&json!({ "a": a, "t": t, "thin": is_thin(&h), "grammar": h.to_string() }));
    } else {
        outln!("exact on {{{a}}} x [{t}, oo)");
        out!("{h}");
    }
    Ok(0)
}

fn rep_json(s: &SemilinearRelation) -> Value {
    json!(s.parts.iter().map(|l| json!({ "base": [l.base.0, l.base.1], "periods": l.periods })).collect::<Vec<_>>())
}

fn region(g: &Gvas, o: &GlobalOpts) -> Outcome {
    let g = top_branching_with_thin_lower(g)?;
    let far = far_from_axis(&g).map_err(|e| Failure::Unknown(e.to_string()))?;
    if o.json {
        print_json(&json!({
            "b": far.b,
            "upper": { "a": far.upper.a, "delta": far.upper.delta, "rep": rep_json(&far.upper.rep) },
            "lower": { "a": far.lower.a, "delta": far.lower.delta, "rep": rep_json(&far.lower.rep) },
            "diagonal_lines": far.lines.iter().map(|&(d, a)| json!({ "delta": d, "from": a })).collect::<Vec<_>>(),
            "rep": rep_json(&far.rep),
            "grammar": far.h.to_string(),
        }));
        return Ok(0);
    }
    outln!("exact on [{b}, oo)^2", b = far.b);
    outln!("upper triangle: from {} with slope offset {}", far.upper.a, far.upper.delta);
    outln!("lower triangle: from {} with slope offset {}", far.lower.a, far.lower.delta);
    for (d, a) in &far.lines {
        outln!("diagonal y = x + {d} from x = {a}");
    }
    for l in &far.rep.parts {
        outln!("linear set {:?} + {:?}", l.base, l.periods);
    }
    out!("{}", far.h);
    Ok(0)
}

fn oracle_window(g: &Gvas, w: i64, o: &GlobalOpts) -> Outcome {
    if w < 0 {
        return Err(Failure::Usage("window must be nonnegative".into()));
    }
    let pairs = brute_window(&binarize(g), w, o.budget());
    if o.json {
        print_json(&json!({ "window": w, "pairs": pairs.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>() }));
        return Ok(0);
    }
    for a in 0..=w {
        let row: Vec<String> = pairs.iter().filter(|p| p.0 == a).map(|p| p.1.to_string()).collect();
        outln!("{a}: {}", row.join(" "));
    }
    Ok(0)
}

fn status_text(s: Status) -> &'static str {
    match s {
        Status::Neutral => "neutral",
        Status::Successful => "successful",
        Status::Failed => "failed",
    }
}

fn supernode_json(st: &Supertree, s: &Supernode, keep: &dyn Fn(&Supernode) -> bool) -> Value {
    let n = s.pd.current();
    let label = match s.pd.tree.label(n) {
        Symbol::T(c) => json!(c),
        Symbol::Nt(x) => json!(st.g.name(x)),
    };
    json!({
        "id": s.id,
        "parent": s.parent,
        "children": s.children.iter().filter(|&&c| keep(&st.nodes[c])).collect::<Vec<_>>(),
        "status": status_text(s.status),
        "rule": s.genesis.rule(),
        "genesis": st.genesis_text(&s.genesis),
        "label": label,
        "input": s.pd.input_of(n),
        "output": s.pd.output_of(n),
        "stopped": s.stopped,
        "tree_nodes": s.pd.tree.len(),
    })
}

fn supertree(g: &Gvas, a: i64, dot: Option<&Path>, dump: Option<&Path>, o: &GlobalOpts) -> Outcome {
    if a < 0 {
        return Err(Failure::Usage("input must be nonnegative".into()));
    }
    let g = prepared(g);
    if !is_top_branching(&g) {
        return Err(Failure::Usage("the top component must be branching".into()));
    }
    let consts = constants_of(&g).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut oracle = BoundedOracle::new(&g, o.max_counter, o.max_steps);
    let st = build_supertree(&g, a, &consts, &mut oracle, SupertreeOptions::default())
        .map_err(|e| Failure::Unknown(e.to_string()))?;
    let prune = o.prune;
    let keep = move |s: &Supernode| !prune || s.status != Status::Failed;
    if let Some(p) = dot {
        write_file(p, &st.to_dot_filtered(&keep))?;
    }
    if let Some(p) = dump {
        let nodes: Vec<Value> = st.nodes.iter().filter(|s| keep(s)).map(|s| supernode_json(&st, s, &keep)).collect();
        let text = serde_json::to_string_pretty(&json!({ "a": a, "supernodes": nodes })).expect("dump serializes");
        write_file(p, &(text + "\n"))?;
    }
    let count = |s: Status| st.nodes.iter().filter(|n| n.status == s).count();
    let invariants = st.check_invariants();
    let summary = json!({
        "a": a,
        "constants": { "A": st.bound_a, "C": st.c, "D": st.d, "D'": st.dp },
        "supernodes": st.nodes.len(),
        "successful": count(Status::Successful),
        "failed": count(Status::Failed),
        "neutral": count(Status::Neutral),
        "neutral_leaves": st.neutral_leaves().count(),
        "cycle_classes": st.gamma.len(),
        "invariants": invariants.as_ref().map_or_else(|e| e.clone(), |_| "ok".to_string()),
    });
    if o.json {
        print_json(&summary);
    } else {
        outln!("constants: A = {}, C = {}, D = {}, D' = {}", st.bound_a, st.c, st.d, st.dp);
        outln!(
            "supernodes: {} ({} successful, {} failed, {} neutral, {} neutral leaves)",
            st.nodes.len(),
            count(Status::Successful),
            count(Status::Failed),
            count(Status::Neutral),
            st.neutral_leaves().count()
        );
        outln!("cycle classes: {}", st.gamma.len());
        outln!("invariants: {}", summary["invariants"].as_str().unwrap());
    }
    Ok(if invariants.is_ok() { 0 } else { 2 })
}
