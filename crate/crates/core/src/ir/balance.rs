//! Associative rebalancing of addition chains.

use super::dag::{ExprDag, Node, NodeId};
use super::ssa::{Assignment, Rewriter, Rhs, SsaProgram};

/// Rewrite every maximal chain of additions into a tree of depth
/// `ceil(log2 n)`. Float programs are left alone unless `allow_float`,
/// since reassociating float sums changes results.
pub fn balance(p: &SsaProgram, allow_float: bool) -> SsaProgram {
    if !p.domain.add_is_associative() && !allow_float {
        return p.clone();
    }
    let mut rw = Rewriter::new(&p.dag);
    let mut out = p.with_dag(ExprDag::new());
    let mut f = |d: &mut ExprDag, n: Node| match n {
        Node::Add(a, b) => {
            let mut leaves = Vec::new();
            collect_leaves(d, a, &mut leaves);
            collect_leaves(d, b, &mut leaves);
            build(d, &leaves)
        }
        other => d.intern(other),
    };
    for a in &p.assignments {
        let rhs = match a.rhs {
            Rhs::Expr(e) => Rhs::Expr(rw.apply(e, &mut f)),
            n => n,
        };
        out.assignments.push(Assignment { var: a.var, rhs });
    }
    out.assumes = p.assumes.iter().map(|&r| rw.apply(r, &mut f)).collect();
    out.facts = p.facts.iter().map(|&r| rw.apply(r, &mut f)).collect();
    out.asserts = p.asserts.iter().map(|&r| rw.apply(r, &mut f)).collect();
    out.dag = rw.finish();
    out.compacted()
}

/// Operands of the addition chain under `id`, left to right.
pub fn collect_leaves(d: &ExprDag, id: NodeId, out: &mut Vec<NodeId>) {
    let mut stack = vec![id];
    while let Some(n) = stack.pop() {
        match d.node(n) {
            Node::Add(a, b) => {
                stack.push(*b);
                stack.push(*a);
            }
            _ => out.push(n),
        }
    }
}

fn build(d: &mut ExprDag, leaves: &[NodeId]) -> NodeId {
    if leaves.len() == 1 {
        return leaves[0];
    }
    let (l, r) = leaves.split_at(leaves.len() / 2);
    let l = build(d, l);
    let r = build(d, r);
    d.add(l, r)
}
