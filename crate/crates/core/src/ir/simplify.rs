//! Rewriting to a fixpoint: constant folding, boolean and ite identities,
//! arithmetic identities where they are exact, and comparisons decided by
//! known variable ranges.
//!
//! Ranges come from the region assumes and the interval facts. Both are
//! rewritten without range knowledge so they never justify themselves.

use std::collections::HashMap;

use num_traits::{One, Zero};

use super::dag::{CmpOp, ExprDag, Node, NodeId, Sort, Value, VarId};
use super::dump::render;
use super::interp::{num_add, num_cmp, num_mul};
use super::ssa::{Assignment, Rewriter, Rhs, SsaProgram};
use crate::domain::Domain;
use crate::fixed::shift_round;

const MAX_ROUNDS: usize = 64;

/// Apply every rule until nothing changes.
pub fn simplify(p: &SsaProgram) -> SsaProgram {
    let mut cur = simplify_once(p);
    let mut text = render(&cur, true);
    for _ in 0..MAX_ROUNDS {
        let next = simplify_once(&cur);
        let t = render(&next, true);
        if t == text {
            return next;
        }
        cur = next;
        text = t;
    }
    cur
}

type Range = (Value, Value);

struct Simplifier {
    domain: Domain,
    var_ranges: HashMap<VarId, Range>,
    node_ranges: HashMap<NodeId, Option<Range>>,
    use_ranges: bool,
}

fn simplify_once(p: &SsaProgram) -> SsaProgram {
    let mut s = Simplifier {
        domain: p.domain,
        var_ranges: HashMap::new(),
        node_ranges: HashMap::new(),
        use_ranges: false,
    };
    let mut rw = Rewriter::new(&p.dag);
    let mut out = p.with_dag(ExprDag::new());
    out.assumes = p
        .assumes
        .iter()
        .map(|&r| rw.apply(r, &mut |d, n| s.rewrite(d, n)))
        .collect();
    out.facts = p
        .facts
        .iter()
        .map(|&r| rw.apply(r, &mut |d, n| s.rewrite(d, n)))
        .collect();
    for &c in out.assumes.iter().chain(&out.facts) {
        if let Some((v, r)) = bound_of(rw.new_dag(), c) {
            s.intersect(v, r);
        }
    }
    rw.reset();
    s.use_ranges = true;
    for a in &p.assignments {
        let rhs = match a.rhs {
            Rhs::Expr(e) => {
                let e = rw.apply(e, &mut |d, n| s.rewrite(d, n));
                if let Some(r) = s.range(rw.new_dag(), e) {
                    s.intersect(a.var, r);
                }
                Rhs::Expr(e)
            }
            n => n,
        };
        out.assignments.push(Assignment { var: a.var, rhs });
    }
    out.asserts = p
        .asserts
        .iter()
        .map(|&r| rw.apply(r, &mut |d, n| s.rewrite(d, n)))
        .collect();
    out.dag = rw.finish();
    out
}

/// `lo <= v && v <= hi` with constant bounds.
fn bound_of(dag: &ExprDag, c: NodeId) -> Option<(VarId, Range)> {
    let Node::And(parts) = dag.node(c) else {
        return None;
    };
    let [a, b] = parts.as_slice() else {
        return None;
    };
    let (Node::Cmp(CmpOp::Le, l, x1), Node::Cmp(CmpOp::Le, x2, h)) = (dag.node(*a), dag.node(*b))
    else {
        return None;
    };
    match (dag.node(*l), dag.node(*x1), dag.node(*x2), dag.node(*h)) {
        (Node::Const(lo), Node::Var(v), Node::Var(w), Node::Const(hi)) if v == w => {
            Some((*v, (lo.clone(), hi.clone())))
        }
        _ => None,
    }
}

fn value_lt(a: &Value, b: &Value) -> bool {
    num_cmp(CmpOp::Lt, a, b)
}

fn min_v(a: Value, b: Value) -> Value {
    if value_lt(&b, &a) {
        b
    } else {
        a
    }
}

fn max_v(a: Value, b: Value) -> Value {
    if value_lt(&a, &b) {
        b
    } else {
        a
    }
}

impl Simplifier {
    fn exact_identities(&self) -> bool {
        self.domain != Domain::Float32
    }

    fn intersect(&mut self, v: VarId, r: Range) {
        let merged = match self.var_ranges.remove(&v) {
            None => r,
            Some((lo, hi)) => (max_v(lo, r.0), min_v(hi, r.1)),
        };
        self.var_ranges.insert(v, merged);
    }

    fn one(&self) -> Option<Value> {
        match self.domain {
            Domain::Fixed { format, .. } => {
                let raw = 1i128 << format.frac_bits();
                format.in_range(raw).then_some(Value::Fixed(raw as i64))
            }
            Domain::Real => Some(Value::Real(num_rational::BigRational::one())),
            Domain::Float32 => Some(Value::f32(1.0)),
        }
    }

    fn is_zero(&self, v: &Value) -> bool {
        match v {
            Value::Fixed(r) => *r == 0,
            Value::Real(r) => r.is_zero(),
            Value::F32(b) => *b == 0,
        }
    }

    /// Range of a numeric node in the new DAG, when one is known.
    fn range(&mut self, dag: &ExprDag, id: NodeId) -> Option<Range> {
        if let Some(r) = self.node_ranges.get(&id) {
            return r.clone();
        }
        let r = match dag.node(id) {
            Node::Const(v) => Some((v.clone(), v.clone())),
            Node::Var(v) => self.var_ranges.get(v).cloned(),
            Node::Ite(g, a, b) => match dag.node(*g) {
                Node::Bool(true) => self.range(dag, *a),
                Node::Bool(false) => self.range(dag, *b),
                _ if dag.sort(*a) == Sort::Num => {
                    let (ra, rb) = (self.range(dag, *a), self.range(dag, *b));
                    ra.zip(rb).map(|(x, y)| (min_v(x.0, y.0), max_v(x.1, y.1)))
                }
                _ => None,
            },
            Node::Add(a, b) => {
                let (ra, rb) = (self.range(dag, *a), self.range(dag, *b));
                ra.zip(rb).and_then(|(x, y)| self.add_range(x, y))
            }
            Node::Mul(a, b) => {
                let (ra, rb) = (self.range(dag, *a), self.range(dag, *b));
                ra.zip(rb).and_then(|(x, y)| self.mul_range(x, y))
            }
            _ => None,
        };
        self.node_ranges.insert(id, r.clone());
        r
    }

    fn add_range(&self, x: Range, y: Range) -> Option<Range> {
        match (self.domain, x, y) {
            (Domain::Real, (Value::Real(a), Value::Real(b)), (Value::Real(c), Value::Real(d))) => {
                Some((Value::Real(a + c), Value::Real(b + d)))
            }
            (
                Domain::Fixed { format, .. },
                (Value::Fixed(a), Value::Fixed(b)),
                (Value::Fixed(c), Value::Fixed(d)),
            ) => {
                let (lo, hi) = (a as i128 + c as i128, b as i128 + d as i128);
                (format.in_range(lo) && format.in_range(hi))
                    .then_some((Value::Fixed(lo as i64), Value::Fixed(hi as i64)))
            }
            _ => None,
        }
    }

    fn mul_range(&self, x: Range, y: Range) -> Option<Range> {
        match (self.domain, x, y) {
            (Domain::Real, (Value::Real(a), Value::Real(b)), (Value::Real(c), Value::Real(d))) => {
                let p = [&a * &c, &a * &d, &b * &c, &b * &d];
                let lo = p.iter().min().cloned()?;
                let hi = p.iter().max().cloned()?;
                Some((Value::Real(lo), Value::Real(hi)))
            }
            (
                Domain::Fixed { format, rounding },
                (Value::Fixed(a), Value::Fixed(b)),
                (Value::Fixed(c), Value::Fixed(d)),
            ) => {
                let p = [
                    a as i128 * c as i128,
                    a as i128 * d as i128,
                    b as i128 * c as i128,
                    b as i128 * d as i128,
                ];
                let lo = shift_round(*p.iter().min()?, format.frac_bits(), rounding);
                let hi = shift_round(*p.iter().max()?, format.frac_bits(), rounding);
                (format.in_range(lo) && format.in_range(hi))
                    .then_some((Value::Fixed(lo as i64), Value::Fixed(hi as i64)))
            }
            _ => None,
        }
    }

    fn decide_cmp(&mut self, dag: &ExprDag, op: CmpOp, a: NodeId, b: NodeId) -> Option<bool> {
        let (ra, rb) = (self.range(dag, a)?, self.range(dag, b)?);
        match op {
            CmpOp::Lt if value_lt(&ra.1, &rb.0) => Some(true),
            CmpOp::Lt if !value_lt(&ra.0, &rb.1) => Some(false),
            CmpOp::Le if !value_lt(&rb.0, &ra.1) => Some(true),
            CmpOp::Le if value_lt(&rb.1, &ra.0) => Some(false),
            CmpOp::Eq if ra.0 == ra.1 && rb.0 == rb.1 && num_cmp(CmpOp::Eq, &ra.0, &rb.0) => {
                Some(true)
            }
            CmpOp::Eq if value_lt(&ra.1, &rb.0) || value_lt(&rb.1, &ra.0) => Some(false),
            _ => None,
        }
    }

    fn rewrite(&mut self, dag: &mut ExprDag, n: Node) -> NodeId {
        match n {
            Node::Add(a, b) => match (dag.node(a).clone(), dag.node(b).clone()) {
                (Node::Const(x), Node::Const(y)) => dag.konst(num_add(self.domain, &x, &y)),
                (Node::Const(x), _) if self.exact_identities() && self.is_zero(&x) => b,
                (_, Node::Const(y)) if self.exact_identities() && self.is_zero(&y) => a,
                _ => dag.add(a, b),
            },
            Node::Mul(a, b) => match (dag.node(a).clone(), dag.node(b).clone()) {
                (Node::Const(x), Node::Const(y)) => dag.konst(num_mul(self.domain, &x, &y)),
                (Node::Const(x), _) | (_, Node::Const(x))
                    if self.exact_identities() && self.is_zero(&x) =>
                {
                    dag.konst(x)
                }
                (Node::Const(x), _)
                    if self.exact_identities() && Some(&x) == self.one().as_ref() =>
                {
                    b
                }
                (_, Node::Const(y))
                    if self.exact_identities() && Some(&y) == self.one().as_ref() =>
                {
                    a
                }
                _ => dag.mul(a, b),
            },
            Node::Cmp(op, a, b) => {
                if let (Node::Const(x), Node::Const(y)) = (dag.node(a), dag.node(b)) {
                    let r = num_cmp(op, x, y);
                    return dag.bool(r);
                }
                if a == b && self.exact_identities() {
                    return dag.bool(op != CmpOp::Lt);
                }
                if self.use_ranges {
                    if let Some(r) = self.decide_cmp(dag, op, a, b) {
                        return dag.bool(r);
                    }
                }
                dag.cmp(op, a, b)
            }
            Node::Ite(g, a, b) => match dag.node(g) {
                Node::Bool(true) => a,
                Node::Bool(false) => b,
                _ if a == b => a,
                _ => {
                    // ite(f, f && x, y) = ite(f, x, y)
                    if let Node::And(parts) = dag.node(a).clone() {
                        if parts.contains(&g) {
                            let rest: Vec<NodeId> = parts.into_iter().filter(|&p| p != g).collect();
                            let a2 = self.rewrite(dag, Node::And(rest));
                            return self.rewrite(dag, Node::Ite(g, a2, b));
                        }
                    }
                    dag.ite(g, a, b)
                }
            },
            Node::And(parts) => self.junction(dag, parts, true),
            Node::Or(parts) => self.junction(dag, parts, false),
            Node::Not(a) => match dag.node(a).clone() {
                Node::Bool(x) => dag.bool(!x),
                Node::Not(inner) => inner,
                _ => dag.not(a),
            },
            Node::Xor(a, b) => match (dag.node(a).clone(), dag.node(b).clone()) {
                (Node::Bool(x), Node::Bool(y)) => dag.bool(x ^ y),
                (Node::Bool(false), _) => b,
                (_, Node::Bool(false)) => a,
                (Node::Bool(true), _) => self.rewrite(dag, Node::Not(b)),
                (_, Node::Bool(true)) => self.rewrite(dag, Node::Not(a)),
                _ if a == b => dag.bool(false),
                _ => dag.xor(a, b),
            },
            leaf => dag.intern(leaf),
        }
    }

    /// `and` when `conj`, else `or`.
    fn junction(&mut self, dag: &mut ExprDag, parts: Vec<NodeId>, conj: bool) -> NodeId {
        let mut flat: Vec<NodeId> = Vec::with_capacity(parts.len());
        for p in parts {
            match dag.node(p) {
                Node::Bool(b) if *b == conj => {}
                Node::Bool(_) => return dag.bool(!conj),
                Node::And(inner) if conj => flat.extend(inner.iter().copied()),
                Node::Or(inner) if !conj => flat.extend(inner.iter().copied()),
                _ => flat.push(p),
            }
        }
        let mut seen = std::collections::HashSet::new();
        flat.retain(|p| seen.insert(*p));
        match flat.len() {
            0 => dag.bool(conj),
            1 => flat[0],
            _ if conj => dag.and(flat),
            _ => dag.or(flat),
        }
    }
}
