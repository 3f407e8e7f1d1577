//! Concrete evaluation of SSA programs.

use std::collections::HashMap;

use super::dag::{CmpOp, ExprDag, Node, NodeId, Value, VarId};
use super::ssa::{Rhs, SsaProgram};
use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Eval {
    Num(Value),
    Bool(bool),
}

impl Eval {
    pub fn num(&self) -> &Value {
        match self {
            Eval::Num(v) => v,
            Eval::Bool(_) => panic!("expected a number"),
        }
    }

    pub fn bool(&self) -> bool {
        match self {
            Eval::Bool(b) => *b,
            Eval::Num(_) => panic!("expected a boolean"),
        }
    }
}

/// `a + b` in the domain.
pub fn num_add(domain: Domain, a: &Value, b: &Value) -> Value {
    match (domain, a, b) {
        (Domain::Fixed { format, .. }, Value::Fixed(x), Value::Fixed(y)) => {
            Value::Fixed(format.add_raw(*x, *y).0)
        }
        (Domain::Real, Value::Real(x), Value::Real(y)) => Value::Real(x + y),
        (Domain::Float32, Value::F32(x), Value::F32(y)) => {
            Value::f32(f32::from_bits(*x) + f32::from_bits(*y))
        }
        _ => panic!("constant does not belong to domain {domain}"),
    }
}

/// `a * b` in the domain.
pub fn num_mul(domain: Domain, a: &Value, b: &Value) -> Value {
    match (domain, a, b) {
        (Domain::Fixed { format, rounding }, Value::Fixed(x), Value::Fixed(y)) => {
            Value::Fixed(format.mul_raw(*x, *y, rounding).0)
        }
        (Domain::Real, Value::Real(x), Value::Real(y)) => Value::Real(x * y),
        (Domain::Float32, Value::F32(x), Value::F32(y)) => {
            Value::f32(f32::from_bits(*x) * f32::from_bits(*y))
        }
        _ => panic!("constant does not belong to domain {domain}"),
    }
}

/// Numeric comparison; IEEE semantics for floats (NaN compares false,
/// `-0 == +0`).
pub fn num_cmp(op: CmpOp, a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Fixed(x), Value::Fixed(y)) => cmp_ord(op, x, y),
        (Value::Real(x), Value::Real(y)) => cmp_ord(op, x, y),
        (Value::F32(x), Value::F32(y)) => cmp_ord(op, &f32::from_bits(*x), &f32::from_bits(*y)),
        _ => panic!("comparison of constants from different domains"),
    }
}

fn cmp_ord<T: PartialOrd>(op: CmpOp, a: &T, b: &T) -> bool {
    match op {
        CmpOp::Lt => a < b,
        CmpOp::Le => a <= b,
        CmpOp::Eq => a == b,
    }
}

/// Evaluate a node given variable values.
pub fn eval_node(
    dag: &ExprDag,
    domain: Domain,
    root: NodeId,
    vars: &dyn Fn(VarId) -> Value,
) -> Eval {
    let mut memo: HashMap<NodeId, Eval> = HashMap::new();
    for id in dag.reachable([root]) {
        let get = |c: &NodeId| &memo[c];
        let v = match dag.node(id) {
            Node::Const(v) => Eval::Num(v.clone()),
            Node::Bool(b) => Eval::Bool(*b),
            Node::Var(v) => Eval::Num(vars(*v)),
            Node::Add(a, b) => Eval::Num(num_add(domain, get(a).num(), get(b).num())),
            Node::Mul(a, b) => Eval::Num(num_mul(domain, get(a).num(), get(b).num())),
            Node::Ite(g, a, b) => {
                if get(g).bool() {
                    get(a).clone()
                } else {
                    get(b).clone()
                }
            }
            Node::Cmp(op, a, b) => Eval::Bool(num_cmp(*op, get(a).num(), get(b).num())),
            Node::And(v) => Eval::Bool(v.iter().all(|c| get(c).bool())),
            Node::Or(v) => Eval::Bool(v.iter().any(|c| get(c).bool())),
            Node::Not(a) => Eval::Bool(!get(a).bool()),
            Node::Xor(a, b) => Eval::Bool(get(a).bool() ^ get(b).bool()),
        };
        memo.insert(id, v);
    }
    memo.remove(&root).expect("root evaluated")
}

/// Values of everything in a program for one input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Valuation {
    /// Indexed by variable id; `None` for variables the program no longer defines.
    pub vars: Vec<Option<Value>>,
    pub assumes: Vec<bool>,
    pub facts: Vec<bool>,
    pub asserts: Vec<bool>,
}

impl Valuation {
    pub fn get(&self, v: VarId) -> Option<&Value> {
        self.vars[v.index()].as_ref()
    }

    pub fn assumes_hold(&self) -> bool {
        self.assumes.iter().all(|&b| b)
    }

    pub fn property_holds(&self) -> bool {
        self.asserts.iter().all(|&b| b)
    }
}

/// Run a program on domain-valued inputs, indexed by input number.
pub fn run(p: &SsaProgram, inputs: &[Value]) -> Result<Valuation> {
    if inputs.len() != p.inputs.len() {
        return Err(Error::Dimension(format!(
            "program has {} inputs, got {}",
            p.inputs.len(),
            inputs.len()
        )));
    }
    let mut vals: Vec<Option<Value>> = vec![None; p.vars.len()];
    let mut memo: HashMap<NodeId, Eval> = HashMap::new();
    let eval =
        |root: NodeId, vals: &Vec<Option<Value>>, memo: &mut HashMap<NodeId, Eval>| -> Eval {
            for id in p.dag.reachable([root]) {
                if memo.contains_key(&id) {
                    continue;
                }
                let get = |c: &NodeId| &memo[c];
                let v = match p.dag.node(id) {
                    Node::Const(v) => Eval::Num(v.clone()),
                    Node::Bool(b) => Eval::Bool(*b),
                    Node::Var(v) => Eval::Num(
                        vals[v.index()]
                            .clone()
                            .expect("variable defined before use"),
                    ),
                    Node::Add(a, b) => Eval::Num(num_add(p.domain, get(a).num(), get(b).num())),
                    Node::Mul(a, b) => Eval::Num(num_mul(p.domain, get(a).num(), get(b).num())),
                    Node::Ite(g, a, b) => {
                        if get(g).bool() {
                            get(a).clone()
                        } else {
                            get(b).clone()
                        }
                    }
                    Node::Cmp(op, a, b) => Eval::Bool(num_cmp(*op, get(a).num(), get(b).num())),
                    Node::And(v) => Eval::Bool(v.iter().all(|c| get(c).bool())),
                    Node::Or(v) => Eval::Bool(v.iter().any(|c| get(c).bool())),
                    Node::Not(a) => Eval::Bool(!get(a).bool()),
                    Node::Xor(a, b) => Eval::Bool(get(a).bool() ^ get(b).bool()),
                };
                memo.insert(id, v);
            }
            memo[&root].clone()
        };
    for a in &p.assignments {
        let v = match a.rhs {
            Rhs::Nondet(i) => inputs[i].clone(),
            Rhs::Expr(e) => eval(e, &vals, &mut memo).num().clone(),
        };
        vals[a.var.index()] = Some(v);
    }
    let mut all = |roots: &[NodeId]| {
        roots
            .iter()
            .map(|&r| eval(r, &vals, &mut memo).bool())
            .collect::<Vec<_>>()
    };
    let assumes = all(&p.assumes);
    let facts = all(&p.facts);
    let asserts = all(&p.asserts);
    Ok(Valuation {
        vars: vals,
        assumes,
        facts,
        asserts,
    })
}
