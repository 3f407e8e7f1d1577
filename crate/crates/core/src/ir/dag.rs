//! Hash-consed expression DAG.

use std::collections::HashMap;
use std::fmt;

use num_rational::BigRational;

/// Numeric constant in a program's domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    /// Raw fixed-point word.
    Fixed(i64),
    Real(BigRational),
    /// `f32` bit pattern, so that `-0.0` and NaN payloads stay distinct.
    F32(u32),
}

impl Value {
    pub fn f32(v: f32) -> Self {
        Value::F32(v.to_bits())
    }

    pub fn as_f32(&self) -> Option<f32> {
        match self {
            Value::F32(b) => Some(f32::from_bits(*b)),
            _ => None,
        }
    }

    pub fn as_fixed(&self) -> Option<i64> {
        match self {
            Value::Fixed(r) => Some(*r),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<&BigRational> {
        match self {
            Value::Real(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sort {
    Num,
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    Const(Value),
    Bool(bool),
    /// Reference to an SSA variable.
    Var(VarId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Ite(NodeId, NodeId, NodeId),
    Cmp(CmpOp, NodeId, NodeId),
    And(Vec<NodeId>),
    Or(Vec<NodeId>),
    Not(NodeId),
    Xor(NodeId, NodeId),
}

impl Node {
    pub fn children(&self) -> Vec<NodeId> {
        match self {
            Node::Const(_) | Node::Bool(_) | Node::Var(_) => vec![],
            Node::Add(a, b) | Node::Mul(a, b) | Node::Cmp(_, a, b) | Node::Xor(a, b) => {
                vec![*a, *b]
            }
            Node::Ite(g, a, b) => vec![*g, *a, *b],
            Node::And(v) | Node::Or(v) => v.clone(),
            Node::Not(a) => vec![*a],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Node::Const(_) => "const",
            Node::Bool(_) => "bool",
            Node::Var(_) => "var",
            Node::Add(..) => "add",
            Node::Mul(..) => "mul",
            Node::Ite(..) => "ite",
            Node::Cmp(..) => "cmp",
            Node::And(_) => "and",
            Node::Or(_) => "or",
            Node::Not(_) => "not",
            Node::Xor(..) => "xor",
        }
    }
}

/// Structurally identical nodes share one id. Children always precede
/// parents, so the node order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct ExprDag {
    nodes: Vec<Node>,
    index: HashMap<Node, NodeId>,
}

impl ExprDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (NodeId(i as u32), n))
    }

    pub fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.index.get(&node) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node.clone());
        self.index.insert(node, id);
        id
    }

    pub fn konst(&mut self, v: Value) -> NodeId {
        self.intern(Node::Const(v))
    }

    pub fn bool(&mut self, b: bool) -> NodeId {
        self.intern(Node::Bool(b))
    }

    pub fn var(&mut self, v: VarId) -> NodeId {
        self.intern(Node::Var(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.intern(Node::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.intern(Node::Mul(a, b))
    }

    pub fn ite(&mut self, g: NodeId, a: NodeId, b: NodeId) -> NodeId {
        self.intern(Node::Ite(g, a, b))
    }

    pub fn cmp(&mut self, op: CmpOp, a: NodeId, b: NodeId) -> NodeId {
        self.intern(Node::Cmp(op, a, b))
    }

    pub fn and(&mut self, v: Vec<NodeId>) -> NodeId {
        self.intern(Node::And(v))
    }

    pub fn or(&mut self, v: Vec<NodeId>) -> NodeId {
        self.intern(Node::Or(v))
    }

    pub fn not(&mut self, a: NodeId) -> NodeId {
        self.intern(Node::Not(a))
    }

    pub fn xor(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.intern(Node::Xor(a, b))
    }

    pub fn sort(&self, id: NodeId) -> Sort {
        match self.node(id) {
            Node::Bool(_)
            | Node::Cmp(..)
            | Node::And(_)
            | Node::Or(_)
            | Node::Not(_)
            | Node::Xor(..) => Sort::Bool,
            Node::Ite(_, a, _) => self.sort(*a),
            Node::Const(_) | Node::Var(_) | Node::Add(..) | Node::Mul(..) => Sort::Num,
        }
    }

    /// Check operand sorts of every node.
    pub fn check_sorts(&self) -> Result<(), String> {
        for (id, n) in self.nodes() {
            let want = |c: &NodeId, s: Sort| {
                if self.sort(*c) == s {
                    Ok(())
                } else {
                    Err(format!(
                        "node {} ({}) has an operand of the wrong sort",
                        id.0,
                        n.kind()
                    ))
                }
            };
            match n {
                Node::Add(a, b) | Node::Mul(a, b) | Node::Cmp(_, a, b) => {
                    want(a, Sort::Num)?;
                    want(b, Sort::Num)?;
                }
                Node::Ite(g, a, b) => {
                    want(g, Sort::Bool)?;
                    want(b, self.sort(*a))?;
                }
                Node::And(v) | Node::Or(v) => v.iter().try_for_each(|c| want(c, Sort::Bool))?,
                Node::Not(a) => want(a, Sort::Bool)?,
                Node::Xor(a, b) => {
                    want(a, Sort::Bool)?;
                    want(b, Sort::Bool)?;
                }
                Node::Const(_) | Node::Bool(_) | Node::Var(_) => {}
            }
        }
        Ok(())
    }

    /// Nodes reachable from `roots`, in increasing id order.
    pub fn reachable(&self, roots: impl IntoIterator<Item = NodeId>) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeId> = roots.into_iter().collect();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id.index()], true) {
                continue;
            }
            stack.extend(self.node(id).children());
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| NodeId(i as u32))
            .collect()
    }

    /// Variables referenced under `root`.
    pub fn vars_of(&self, root: NodeId) -> Vec<VarId> {
        self.reachable([root])
            .into_iter()
            .filter_map(|id| match self.node(id) {
                Node::Var(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    /// Longest path from `root` to a leaf, counting edges.
    pub fn depth(&self, root: NodeId) -> usize {
        let mut memo: HashMap<NodeId, usize> = HashMap::new();
        for id in self.reachable([root]) {
            let d = self
                .node(id)
                .children()
                .iter()
                .map(|c| memo[c] + 1)
                .max()
                .unwrap_or(0);
            memo.insert(id, d);
        }
        memo[&root]
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Fixed(r) => write!(f, "raw {r}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::F32(b) => write!(f, "{}", f32::from_bits(*b)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structurally_equal_nodes_are_shared() {
        let mut d = ExprDag::new();
        let x = d.var(VarId(0));
        let c = d.konst(Value::Fixed(3));
        let a = d.mul(c, x);
        let b = d.mul(c, x);
        assert_eq!(a, b);
        assert_eq!(d.len(), 3);
        let s = d.add(a, b);
        assert_eq!(d.depth(s), 2);
        assert_eq!(d.vars_of(s), vec![VarId(0)]);
    }

    #[test]
    fn sort_check_catches_mixed_operands() {
        let mut d = ExprDag::new();
        let x = d.var(VarId(0));
        let t = d.bool(true);
        d.add(x, t);
        assert!(d.check_sorts().is_err());
        let mut d = ExprDag::new();
        let x = d.var(VarId(0));
        let z = d.konst(Value::Fixed(0));
        let g = d.cmp(CmpOp::Lt, x, z);
        d.ite(g, z, x);
        assert!(d.check_sorts().is_ok());
        assert_eq!(d.sort(g), Sort::Bool);
    }

    #[test]
    fn negative_zero_is_a_distinct_constant() {
        let mut d = ExprDag::new();
        let a = d.konst(Value::f32(0.0));
        let b = d.konst(Value::f32(-0.0));
        assert_ne!(a, b);
    }
}
