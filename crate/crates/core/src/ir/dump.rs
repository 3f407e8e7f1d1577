//! Text and DOT renderings of SSA programs.

use std::fmt::Write;

use num_traits::ToPrimitive;

use super::dag::{Node, NodeId, Value};
use super::ssa::{Assignment, Rhs, SsaProgram};
use crate::domain::{rational, Domain};

/// One line per assignment (`x1 == nondet_symbol(nondet0)`, `a1 == ...`),
/// then assumes and facts when `constraints` is set, then asserts.
pub fn render(p: &SsaProgram, constraints: bool) -> String {
    let mut s = render_assignments(p, &p.assignments);
    if constraints {
        for &a in p.assumes.iter().chain(&p.facts) {
            let _ = writeln!(s, "(assume) {}", expr(p, a, 0));
        }
    }
    for &a in &p.asserts {
        let _ = writeln!(s, "(assert) {}", expr(p, a, 0));
    }
    s
}

pub fn render_assignments(p: &SsaProgram, assignments: &[Assignment]) -> String {
    let mut s = String::new();
    for a in assignments {
        let rhs = match a.rhs {
            Rhs::Nondet(i) => format!("nondet_symbol(nondet{i})"),
            Rhs::Expr(e) => expr(p, e, 0),
        };
        let _ = writeln!(s, "{} == {}", p.name(a.var), rhs);
    }
    s
}

pub fn value_text(domain: Domain, v: &Value) -> String {
    let exact = |r: &num_rational::BigRational| match r.to_f64() {
        Some(f) if f.is_finite() && &rational(f) == r => format!("{f}"),
        _ => r.to_string(),
    };
    match (domain, v) {
        (Domain::Fixed { format, .. }, Value::Fixed(raw)) => exact(&format.to_rational(*raw)),
        (_, Value::Real(r)) => exact(r),
        (_, Value::F32(b)) => format!("{}", f32::from_bits(*b)),
        (_, Value::Fixed(raw)) => format!("raw({raw})"),
    }
}

fn prec(n: &Node) -> u8 {
    match n {
        Node::Or(_) | Node::Xor(..) => 1,
        Node::And(_) => 2,
        Node::Cmp(..) => 3,
        Node::Not(_) => 4,
        Node::Add(..) => 5,
        Node::Mul(..) => 6,
        _ => 7,
    }
}

/// Render `id`, parenthesized if its precedence is below `min`.
fn expr(p: &SsaProgram, id: NodeId, min: u8) -> String {
    let n = p.dag.node(id);
    let text = match n {
        Node::Const(v) => value_text(p.domain, v),
        Node::Bool(b) => b.to_string(),
        Node::Var(v) => p.name(*v).to_string(),
        Node::Add(a, b) => format!("{} + {}", expr(p, *a, 5), expr(p, *b, 6)),
        Node::Mul(a, b) => format!("{} * {}", expr(p, *a, 6), expr(p, *b, 7)),
        Node::Ite(g, a, b) => format!(
            "({} ? {} : {})",
            expr(p, *g, 0),
            expr(p, *a, 0),
            expr(p, *b, 0)
        ),
        Node::Cmp(op, a, b) => format!("{} {} {}", expr(p, *a, 4), op.symbol(), expr(p, *b, 4)),
        Node::And(v) => v
            .iter()
            .map(|c| expr(p, *c, 3))
            .collect::<Vec<_>>()
            .join(" && "),
        Node::Or(v) => v
            .iter()
            .map(|c| expr(p, *c, 2))
            .collect::<Vec<_>>()
            .join(" || "),
        Node::Not(a) => format!("!{}", expr(p, *a, 5)),
        Node::Xor(a, b) => format!("{} ^ {}", expr(p, *a, 2), expr(p, *b, 2)),
    };
    if prec(n) < min {
        format!("({text})")
    } else {
        text
    }
}

/// Graphviz rendering of the reachable DAG with one box per assignment.
pub fn to_dot(p: &SsaProgram) -> String {
    let mut s = String::from("digraph ssa {\n  node [fontname=\"monospace\"];\n");
    for id in p.dag.reachable(p.roots()) {
        let n = p.dag.node(id);
        let label = match n {
            Node::Const(v) => value_text(p.domain, v),
            Node::Bool(b) => b.to_string(),
            Node::Var(v) => p.name(*v).to_string(),
            Node::Cmp(op, ..) => op.symbol().to_string(),
            other => other.kind().to_string(),
        };
        let _ = writeln!(s, "  n{} [label=\"{}\"];", id.0, label.replace('"', "\\\""));
        for (i, c) in n.children().iter().enumerate() {
            let _ = writeln!(s, "  n{} -> n{} [label=\"{}\"];", id.0, c.0, i);
        }
    }
    for a in &p.assignments {
        if let Rhs::Expr(e) = a.rhs {
            let name = p.name(a.var);
            let _ = writeln!(s, "  \"{name}\" [shape=box];\n  \"{name}\" -> n{};", e.0);
        }
    }
    for (i, &a) in p.asserts.iter().enumerate() {
        let _ = writeln!(s, "  assert{i} [shape=diamond];\n  assert{i} -> n{};", a.0);
    }
    s.push_str("}\n");
    s
}
