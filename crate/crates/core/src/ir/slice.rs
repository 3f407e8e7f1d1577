//! Assertion-cone slicing.

use std::collections::BTreeSet;

use super::dag::VarId;
use super::ssa::SsaProgram;

/// Keep the assignments the asserts depend on, plus every input so that
/// models stay total. Facts survive only if all their variables survive.
pub fn slice(p: &SsaProgram) -> SsaProgram {
    let mut keep: BTreeSet<VarId> = p.cone(p.asserts.iter().copied());
    keep.extend(p.inputs.iter().copied());
    let mut out = p.clone();
    out.assignments.retain(|a| keep.contains(&a.var));
    out.facts
        .retain(|&f| p.dag.vars_of(f).iter().all(|v| keep.contains(v)));
    out.outputs.retain(|v| keep.contains(v));
    out.compacted()
}
