//! Intermediate representation: a guarded SSA program over a hash-consed
//! expression DAG, and the optimizations applied to it before solving.

pub mod balance;
pub mod dag;
pub mod dump;
pub mod interp;
pub mod lower;
pub mod simplify;
pub mod slice;
pub mod ssa;

pub use balance::balance;
pub use dag::{CmpOp, ExprDag, Node, NodeId, Sort, Value, VarId};
pub use dump::{render, render_assignments, to_dot};
pub use interp::{run, Valuation};
pub use lower::{lower, LowerOptions, NameMap};
pub use simplify::simplify;
pub use slice::slice;
pub use ssa::{Assignment, ProgramStats, Rhs, SsaProgram, VarInfo, VarRole};
