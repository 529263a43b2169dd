//! Small grammars used throughout the tests and the documentation.

use alloc::vec;
use alloc::vec::Vec;

use crate::grammar::{binarize, parse_gvas, Gvas, Nt, Origin, Symbol};

pub const G1: &str = "start X\nY -> 0\nY -> -1 Y 2\nX -> 1\nX -> -1 X Y\n";
pub const G2: &str = "start X\nX -> X Y 1\nY -> X 1\nX -> 0\n";
pub const G4: &str = "start X\nX -> X Y -1\nY -> X -1\nX -> 0 0\n";
pub const G6: &str = "start S\nS -> S S\nS -> 1 0\n";
pub const TRIVIAL: &str = "start S\nS -> 0\n";

fn load(text: &str) -> Gvas {
    binarize(&parse_gvas(text).expect("fixture parses"))
}

/// `X -> 1 | -1 X Y`, `Y -> 0 | -1 Y 2`: thin, `a -> b` iff `1 <= b <= 2^a`.
pub fn g1() -> Gvas {
    load(G1)
}

/// `X -> X Y 1 | 0`, `Y -> X 1`: branching, every effect is even.
pub fn g2() -> Gvas {
    load(G2)
}

/// `X -> X Y -1 | 0 0`, `Y -> X -1`: branching with only negative cycles.
pub fn g4() -> Gvas {
    load(G4)
}

/// `S -> S S | 1 0`.
pub fn g6() -> Gvas {
    load(G6)
}

/// `S -> 0`.
pub fn trivial() -> Gvas {
    load(TRIVIAL)
}

pub fn all() -> Vec<Gvas> {
    vec![g1(), g2(), g4(), g6(), trivial()]
}

/// Fixture names paired with the grammars, in the order of [`all`].
pub fn named() -> Vec<(&'static str, Gvas)> {
    vec![("G1", g1()), ("G2", g2()), ("G4", g4()), ("G6", g6()), ("trivial", trivial())]
}

pub const CORPUS_SEED: u64 = 0xC0FFEE;
pub const CORPUS_SIZE: usize = 30;

/// Seeded random grammars: at most 3 nonterminals, at most 6 binary rules,
/// terminals in `[-3, 3]`. The first rule of each nonterminal only uses
/// terminals and later nonterminals, so every nonterminal is productive.
pub fn corpus(seed: u64, count: usize) -> Vec<Gvas> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let names = ["S", "A", "B"];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.gen_range(1..=3usize);
        let total = rng.gen_range(n.max(2)..=6usize);
        let mut g = Gvas::empty(names[0]);
        for name in &names[1..n] {
            g.add_nt(name, Origin::User).expect("fresh name");
        }
        let nt = |i: usize| Nt(i as u32);
        for k in 0..total {
            let lhs = if k < n { k } else { rng.gen_range(0..n) };
            let lowest = if k < n { lhs + 1 } else { 0 };
            let rhs = (0..2)
                .map(|_| {
                    if lowest < n && rng.gen_bool(0.5) {
                        Symbol::Nt(nt(rng.gen_range(lowest..n)))
                    } else {
                        Symbol::T(rng.gen_range(-3..=3))
                    }
                })
                .collect();
            g.add_rule(nt(lhs), rhs);
        }
        out.push(g);
    }
    out
}

/// The committed corpus.
pub fn default_corpus() -> Vec<Gvas> {
    corpus(CORPUS_SEED, CORPUS_SIZE)
}
