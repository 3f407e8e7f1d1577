//! Guarded SSA programs over an expression DAG.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use super::dag::{ExprDag, Node, NodeId, Sort, VarId};
use crate::domain::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VarRole {
    Input(usize),
    /// Activation potential.
    Pre {
        layer: usize,
        neuron: usize,
    },
    /// Activation output.
    Post {
        layer: usize,
        neuron: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarInfo {
    pub name: String,
    pub role: VarRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rhs {
    /// Unconstrained input number `i`.
    Nondet(usize),
    Expr(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub var: VarId,
    pub rhs: Rhs,
}

/// Assignments are the transition relation, assumes the initial states and
/// asserts the property. Facts are bounds implied by the assumes.
#[derive(Debug, Clone)]
pub struct SsaProgram {
    pub domain: Domain,
    pub dag: ExprDag,
    pub vars: Vec<VarInfo>,
    pub assignments: Vec<Assignment>,
    /// Input region constraints.
    pub assumes: Vec<NodeId>,
    /// Interval bounds on intermediates.
    pub facts: Vec<NodeId>,
    pub asserts: Vec<NodeId>,
    /// Input variables by input index.
    pub inputs: Vec<VarId>,
    /// Output variables still defined in the program.
    pub outputs: Vec<VarId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ProgramStats {
    pub assignments: usize,
    /// Distinct DAG nodes reachable from any root.
    pub nodes: usize,
    pub ites: usize,
    pub assumes: usize,
    pub facts: usize,
    pub asserts: usize,
}

impl SsaProgram {
    pub fn var(&self, v: VarId) -> &VarInfo {
        &self.vars[v.index()]
    }

    pub fn name(&self, v: VarId) -> &str {
        &self.vars[v.index()].name
    }

    /// Every root: assignment right-hand sides, assumes, facts and asserts.
    pub fn roots(&self) -> Vec<NodeId> {
        let mut r: Vec<NodeId> = self
            .assignments
            .iter()
            .filter_map(|a| match a.rhs {
                Rhs::Expr(e) => Some(e),
                Rhs::Nondet(_) => None,
            })
            .collect();
        r.extend(&self.assumes);
        r.extend(&self.facts);
        r.extend(&self.asserts);
        r
    }

    pub fn stats(&self) -> ProgramStats {
        let reach = self.dag.reachable(self.roots());
        ProgramStats {
            assignments: self.assignments.len(),
            nodes: reach.len(),
            ites: reach
                .iter()
                .filter(|&&id| matches!(self.dag.node(id), Node::Ite(..)))
                .count(),
            assumes: self.assumes.len(),
            facts: self.facts.len(),
            asserts: self.asserts.len(),
        }
    }

    pub fn assignment_of(&self, v: VarId) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.var == v)
    }

    /// Right-hand side per variable.
    pub fn definitions(&self) -> HashMap<VarId, Rhs> {
        self.assignments.iter().map(|a| (a.var, a.rhs)).collect()
    }

    /// Whether every assert is the constant `true`.
    pub fn asserts_trivially_true(&self) -> bool {
        self.asserts
            .iter()
            .all(|&a| self.dag.node(a) == &Node::Bool(true))
    }

    /// Single assignment, definitions before uses, consistent sorts.
    pub fn validate(&self) -> Result<(), String> {
        self.dag.check_sorts()?;
        let mut defined = vec![false; self.vars.len()];
        for a in &self.assignments {
            if let Rhs::Expr(e) = a.rhs {
                if self.dag.sort(e) != Sort::Num {
                    return Err(format!("{} is assigned a boolean", self.name(a.var)));
                }
                for v in self.dag.vars_of(e) {
                    if !defined[v.index()] {
                        return Err(format!(
                            "{} uses {} before its definition",
                            self.name(a.var),
                            self.name(v)
                        ));
                    }
                }
            }
            if std::mem::replace(&mut defined[a.var.index()], true) {
                return Err(format!("{} is assigned twice", self.name(a.var)));
            }
        }
        for &r in self.assumes.iter().chain(&self.facts).chain(&self.asserts) {
            if self.dag.sort(r) != Sort::Bool {
                return Err("assume, fact or assert is not boolean".into());
            }
            if let Some(v) = self
                .dag
                .vars_of(r)
                .into_iter()
                .find(|v| !defined[v.index()])
            {
                return Err(format!("constraint mentions undefined {}", self.name(v)));
            }
        }
        Ok(())
    }

    /// Variables whose values `roots` depend on, transitively.
    pub fn cone(&self, roots: impl IntoIterator<Item = NodeId>) -> BTreeSet<VarId> {
        let defs = self.definitions();
        let mut cone = BTreeSet::new();
        let mut stack: Vec<VarId> = roots
            .into_iter()
            .flat_map(|r| self.dag.vars_of(r))
            .collect();
        while let Some(v) = stack.pop() {
            if !cone.insert(v) {
                continue;
            }
            if let Some(Rhs::Expr(e)) = defs.get(&v) {
                stack.extend(self.dag.vars_of(*e));
            }
        }
        cone
    }

    /// Assignments that still branch on an undecided guard, together with
    /// everything they depend on; the residual search space of the program.
    pub fn branching_core(&self) -> Vec<Assignment> {
        let branching: Vec<NodeId> = self
            .assignments
            .iter()
            .filter_map(|a| match a.rhs {
                Rhs::Expr(e) if self.has_undecided_ite(e) => Some(e),
                _ => None,
            })
            .collect();
        let mut keep = self.cone(branching.iter().copied());
        for a in &self.assignments {
            if let Rhs::Expr(e) = a.rhs {
                if branching.contains(&e) {
                    keep.insert(a.var);
                }
            }
        }
        self.assignments
            .iter()
            .filter(|a| keep.contains(&a.var))
            .copied()
            .collect()
    }

    fn has_undecided_ite(&self, root: NodeId) -> bool {
        self.dag
            .reachable([root])
            .into_iter()
            .any(|id| match self.dag.node(id) {
                Node::Ite(g, _, _) => !matches!(self.dag.node(*g), Node::Bool(_)),
                _ => false,
            })
    }

    /// Copy the program into a fresh DAG holding only reachable nodes.
    pub fn compacted(&self) -> SsaProgram {
        let mut rw = Rewriter::new(&self.dag);
        let mut out = self.with_dag(ExprDag::new());
        out.assignments = self
            .assignments
            .iter()
            .map(|a| Assignment {
                var: a.var,
                rhs: match a.rhs {
                    Rhs::Expr(e) => Rhs::Expr(rw.copy(e)),
                    n => n,
                },
            })
            .collect();
        out.assumes = self.assumes.iter().map(|&r| rw.copy(r)).collect();
        out.facts = self.facts.iter().map(|&r| rw.copy(r)).collect();
        out.asserts = self.asserts.iter().map(|&r| rw.copy(r)).collect();
        out.dag = rw.finish();
        out
    }

    /// Same metadata with a replacement DAG and no roots.
    pub(crate) fn with_dag(&self, dag: ExprDag) -> SsaProgram {
        SsaProgram {
            domain: self.domain,
            dag,
            vars: self.vars.clone(),
            assignments: Vec::new(),
            assumes: Vec::new(),
            facts: Vec::new(),
            asserts: Vec::new(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
    }
}

/// Bottom-up rebuilding of a DAG into a fresh one.
pub(crate) struct Rewriter<'a> {
    old: &'a ExprDag,
    new: ExprDag,
    memo: HashMap<NodeId, NodeId>,
}

impl<'a> Rewriter<'a> {
    pub fn new(old: &'a ExprDag) -> Self {
        Self {
            old,
            new: ExprDag::new(),
            memo: HashMap::new(),
        }
    }

    /// Forget the old-to-new mapping but keep the nodes built so far.
    pub fn reset(&mut self) {
        self.memo.clear();
    }

    pub fn copy(&mut self, root: NodeId) -> NodeId {
        self.apply(root, &mut |dag, n| dag.intern(n))
    }

    /// Rebuild `root`; `f` receives each node with children already
    /// rebuilt and returns its replacement.
    pub fn apply(
        &mut self,
        root: NodeId,
        f: &mut dyn FnMut(&mut ExprDag, Node) -> NodeId,
    ) -> NodeId {
        if let Some(&n) = self.memo.get(&root) {
            return n;
        }
        for id in self.old.reachable([root]) {
            if self.memo.contains_key(&id) {
                continue;
            }
            let m = |c: &NodeId| self.memo[c];
            let node = match self.old.node(id) {
                Node::Add(a, b) => Node::Add(m(a), m(b)),
                Node::Mul(a, b) => Node::Mul(m(a), m(b)),
                Node::Ite(g, a, b) => Node::Ite(m(g), m(a), m(b)),
                Node::Cmp(op, a, b) => Node::Cmp(*op, m(a), m(b)),
                Node::And(v) => Node::And(v.iter().map(m).collect()),
                Node::Or(v) => Node::Or(v.iter().map(m).collect()),
                Node::Not(a) => Node::Not(m(a)),
                Node::Xor(a, b) => Node::Xor(m(a), m(b)),
                leaf => leaf.clone(),
            };
            let new = f(&mut self.new, node);
            self.memo.insert(id, new);
        }
        self.memo[&root]
    }

    pub fn new_dag(&mut self) -> &mut ExprDag {
        &mut self.new
    }

    pub fn finish(self) -> ExprDag {
        self.new
    }
}
