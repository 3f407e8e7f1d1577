//! SMT-LIB 2 backend: script emission, solver subprocess and model decoding.

pub mod emit;
pub mod model;
pub mod sexp;
pub mod solver;

pub use emit::{emit_smtlib, Logic};
pub use model::{decode_model, Model, ModelValue};
pub use solver::{parse_output, run_solver, SolverConfig, SolverOutcome, SolverRun};
