//! Verification of quantized and floating-point feedforward networks by
//! compilation to bit-vector SMT.
//!
//! The pipeline parses a network and an assume/assert property, analyses
//! value ranges with exact interval arithmetic, lowers the network into a
//! guarded SSA program over the chosen numeric domain, optimizes it, hands
//! it to an external SMT solver and replays any counterexample bit-exactly.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundled;
pub mod domain;
pub mod error;
pub mod exec;
pub mod fixed;
pub mod interval;
pub mod ir;
pub mod lut;
pub mod network;
pub mod pipeline;
pub mod property;
pub mod smt;

pub use error::{Error, Result};
pub use fixed::{
    fxp_add, fxp_from_real, fxp_mult, min_integer_bits, FxpFormat, FxpValue, RoundingMode,
};
pub use lut::{
    build_table, default_spec, lut_to_fxp, required_samples, LookupTable, PiecewiseSpec,
};
pub use network::{parse_nnet, ActivationKind, Layer, Network};
pub use property::{parse_property, HyperRect, OutputAssertion, SafetyProperty};
pub use domain::{Domain, Scalar, TableConfig};
pub use exec::Executor;
pub use pipeline::{verify, Counterexample, VerificationReport, Verdict, VerifyOptions};
pub use smt::SolverConfig;
