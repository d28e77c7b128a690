//! Constraint satisfaction by resolution rules: basic propagation, chain,
//! whip and braid patterns, Trial-and-Error, resolution theories with
//! rating and confluence checking, and a Sudoku instantiation.

pub mod basic;
pub mod csp;
pub mod pattern;
pub mod sudoku;
pub mod te;
pub mod theory;

pub use csp::{CandId, CspError, CspInstance, KnowledgeState, StateDigest, VarId};
