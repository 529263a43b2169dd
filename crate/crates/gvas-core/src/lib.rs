//! Reachability analysis for one-dimensional grammar vector addition systems:
//! context-free grammars whose terminals are integers added to a counter that
//! must stay nonnegative.
#![no_std]

extern crate alloc;

pub mod cycles;
pub mod derivation;
pub mod fixtures;
pub mod grammar;
pub mod oracle;
pub mod reach;
pub mod region;
pub mod semilinear;
pub mod supertree;
