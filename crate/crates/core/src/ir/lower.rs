//! Compile a network and property into an SSA program.
//!
//! Each input becomes a nondeterministic assignment constrained by region
//! assumes. Each neuron yields a potential assignment (the MAC chain, bias
//! last) and an output assignment (the activation). Constants are taken
//! from the same compiled network the executor runs, so the two agree bit
//! for bit.

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::dag::{CmpOp, ExprDag, NodeId, Value, VarId};
use super::ssa::{Assignment, Rhs, SsaProgram, VarInfo, VarRole};
use crate::domain::{
    rational, two_pow, ActivationTables, Arith, Domain, DomainActivation, ExactArith, F32Arith,
    FixedArith,
};
use crate::error::{Error, Result};
use crate::exec::{compile_exact, compile_f32, compile_fixed, CompiledNetwork, WrapSite};
use crate::interval::{GuardStatus, IntervalBox};
use crate::lut::{f32_round_down, f32_round_up, rational_of_f32, StepFunction};
use crate::network::Network;
use crate::property::{Comparison, Operand, OutputAssertion, SafetyProperty};

/// Base names for inputs and neurons; SSA names append a version number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameMap {
    pub inputs: Vec<String>,
    pub neurons: Vec<Vec<String>>,
}

impl NameMap {
    pub fn default_for(net: &Network) -> Self {
        Self {
            inputs: (0..net.input_dim()).map(|i| format!("x{i}_")).collect(),
            neurons: net
                .sizes()
                .iter()
                .skip(1)
                .enumerate()
                .map(|(l, &n)| (0..n).map(|j| format!("n{l}_{j}_")).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LowerOptions {
    /// Add interval facts on activation outputs too, not only on potentials.
    pub both_bounds: bool,
    pub names: Option<NameMap>,
}

/// Domain values that can appear as DAG constants.
pub trait IntoValue {
    fn value(&self) -> Value;
}

impl IntoValue for i64 {
    fn value(&self) -> Value {
        Value::Fixed(*self)
    }
}

impl IntoValue for BigRational {
    fn value(&self) -> Value {
        Value::Real(self.clone())
    }
}

impl IntoValue for f32 {
    fn value(&self) -> Value {
        Value::f32(*self)
    }
}

/// Lower `net` with property `prop` in `domain`. Interval facts are added
/// from `bounds` and ReLUs decided by `guards` lose their branch.
pub fn lower(
    net: &Network,
    prop: &SafetyProperty,
    domain: Domain,
    tables: &ActivationTables,
    bounds: Option<&IntervalBox>,
    guards: Option<&[Vec<Option<GuardStatus>>]>,
    opts: &LowerOptions,
) -> Result<SsaProgram> {
    prop.validate_for(net)?;
    if let Some(b) = bounds {
        if b.domain != domain {
            return Err(Error::Encode(format!(
                "interval bounds computed in {}, program lowered in {domain}",
                b.domain
            )));
        }
    }
    match domain {
        Domain::Fixed { format, rounding } => {
            let c = compile_fixed(net, FixedArith { format, rounding }, tables)?;
            if let Some(site) = c.constant_wraps().first() {
                return Err(Error::Encode(format!(
                    "{} does not fit {format}",
                    describe_constant(site)
                )));
            }
            Lowering::new(&c, net, opts).run(prop, bounds, guards)
        }
        Domain::Real => {
            Lowering::new(&compile_exact(net, tables)?, net, opts).run(prop, bounds, guards)
        }
        Domain::Float32 => {
            let c = compile_f32(net, tables)?;
            if let Some(site) = c.constant_wraps().first() {
                return Err(Error::Encode(format!(
                    "{} overflows float32",
                    describe_constant(site)
                )));
            }
            Lowering::new(&c, net, opts).run(prop, bounds, guards)
        }
    }
}

fn describe_constant(site: &WrapSite) -> String {
    match site {
        WrapSite::Weight {
            layer,
            neuron,
            input,
        } => format!("weight of layer {layer} neuron {neuron} input {input}"),
        WrapSite::Bias { layer, neuron } => format!("bias of layer {layer} neuron {neuron}"),
        other => format!("{other:?}"),
    }
}

/// Per-domain encoding of constants from the property and the region.
trait DomainConsts {
    fn zero_value(&self) -> Value;
    /// Constraint that input `x` lies in the image of `[lo, hi]`.
    fn region(&self, dag: &mut ExprDag, x: NodeId, lo: f64, hi: f64) -> NodeId;
    /// `x op c` decided on the exact value of `x`.
    fn compare_const(&self, dag: &mut ExprDag, x: NodeId, op: Comparison, c: f64) -> NodeId;
    /// Encode an interval endpoint; `None` if not representable.
    fn bound(&self, r: &BigRational) -> Option<Value>;
}

impl DomainConsts for FixedArith {
    fn zero_value(&self) -> Value {
        Value::Fixed(0)
    }

    fn region(&self, dag: &mut ExprDag, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let f = self.format;
        let a = f.quantize_unwrapped(lo, self.rounding);
        let b = f.quantize_unwrapped(hi, self.rounding);
        if b - a + 1 >= 1i128 << f.width() {
            return dag.bool(true);
        }
        let (wa, wb) = (f.wrap(a), f.wrap(b));
        let ca = dag.konst(Value::Fixed(wa));
        let cb = dag.konst(Value::Fixed(wb));
        let above = dag.cmp(CmpOp::Le, ca, x);
        let below = dag.cmp(CmpOp::Le, x, cb);
        if wa <= wb {
            dag.and(vec![above, below])
        } else {
            // the quantized range wraps around the word
            dag.or(vec![above, below])
        }
    }

    fn compare_const(&self, dag: &mut ExprDag, x: NodeId, op: Comparison, c: f64) -> NodeId {
        let f = self.format;
        let (min, max) = (f.min_raw() as i128, f.max_raw() as i128);
        let (fl, cl) = (f.floor_raw(c), f.ceil_raw(c));
        let k = |dag: &mut ExprDag, r: i128| dag.konst(Value::Fixed(r as i64));
        match op {
            Comparison::Lt if cl > max => dag.bool(true),
            Comparison::Lt if cl <= min => dag.bool(false),
            Comparison::Lt => {
                let c = k(dag, cl);
                dag.cmp(CmpOp::Lt, x, c)
            }
            Comparison::Le if fl >= max => dag.bool(true),
            Comparison::Le if fl < min => dag.bool(false),
            Comparison::Le => {
                let c = k(dag, fl);
                dag.cmp(CmpOp::Le, x, c)
            }
            Comparison::Gt if fl >= max => dag.bool(false),
            Comparison::Gt if fl < min => dag.bool(true),
            Comparison::Gt => {
                let c = k(dag, fl);
                dag.cmp(CmpOp::Lt, c, x)
            }
            Comparison::Ge if cl <= min => dag.bool(true),
            Comparison::Ge if cl > max => dag.bool(false),
            Comparison::Ge => {
                let c = k(dag, cl);
                dag.cmp(CmpOp::Le, c, x)
            }
            Comparison::Eq if fl == cl && (min..=max).contains(&fl) => {
                let c = k(dag, fl);
                dag.cmp(CmpOp::Eq, x, c)
            }
            Comparison::Eq => dag.bool(false),
        }
    }

    fn bound(&self, r: &BigRational) -> Option<Value> {
        let scaled = r * two_pow(self.format.frac_bits());
        scaled
            .is_integer()
            .then(|| scaled.to_integer().to_i64())
            .flatten()
            .map(Value::Fixed)
    }
}

impl DomainConsts for ExactArith {
    fn zero_value(&self) -> Value {
        Value::Real(BigRational::zero())
    }

    fn region(&self, dag: &mut ExprDag, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let a = dag.konst(Value::Real(rational(lo)));
        let b = dag.konst(Value::Real(rational(hi)));
        let above = dag.cmp(CmpOp::Le, a, x);
        let below = dag.cmp(CmpOp::Le, x, b);
        dag.and(vec![above, below])
    }

    fn compare_const(&self, dag: &mut ExprDag, x: NodeId, op: Comparison, c: f64) -> NodeId {
        let k = dag.konst(Value::Real(rational(c)));
        ordered_compare(dag, x, op, k, k)
    }

    fn bound(&self, r: &BigRational) -> Option<Value> {
        Some(Value::Real(r.clone()))
    }
}

impl DomainConsts for F32Arith {
    fn zero_value(&self) -> Value {
        Value::f32(0.0)
    }

    fn region(&self, dag: &mut ExprDag, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let a = dag.konst(Value::f32(lo as f32));
        let b = dag.konst(Value::f32(hi as f32));
        let above = dag.cmp(CmpOp::Le, a, x);
        let below = dag.cmp(CmpOp::Le, x, b);
        dag.and(vec![above, below])
    }

    fn compare_const(&self, dag: &mut ExprDag, x: NodeId, op: Comparison, c: f64) -> NodeId {
        let r = rational(c);
        let (down, up) = (f32_round_down(&r), f32_round_up(&r));
        if op == Comparison::Eq {
            if down != up {
                return dag.bool(false);
            }
            let k = dag.konst(Value::f32(down));
            return dag.cmp(CmpOp::Eq, x, k);
        }
        let d = dag.konst(Value::f32(down));
        let u = dag.konst(Value::f32(up));
        ordered_compare(dag, x, op, d, u)
    }

    fn bound(&self, r: &BigRational) -> Option<Value> {
        let d = f32_round_down(r);
        (d.is_finite() && &rational_of_f32(d) == r).then(|| Value::f32(d))
    }
}

/// `x op c` given the largest domain value `down <= c` and the smallest
/// `up >= c` (the same node when `c` is representable).
fn ordered_compare(
    dag: &mut ExprDag,
    x: NodeId,
    op: Comparison,
    down: NodeId,
    up: NodeId,
) -> NodeId {
    match op {
        Comparison::Lt => dag.cmp(CmpOp::Lt, x, up),
        Comparison::Le => dag.cmp(CmpOp::Le, x, down),
        Comparison::Gt => dag.cmp(CmpOp::Lt, down, x),
        Comparison::Ge => dag.cmp(CmpOp::Le, up, x),
        Comparison::Eq => dag.cmp(CmpOp::Eq, x, down),
    }
}

struct Lowering<'a, A: Arith> {
    c: &'a CompiledNetwork<A>,
    opts: &'a LowerOptions,
    names: NameMap,
    dag: ExprDag,
    vars: Vec<VarInfo>,
    assignments: Vec<Assignment>,
}

impl<'a, A> Lowering<'a, A>
where
    A: Arith + DomainConsts,
    A::V: IntoValue,
{
    fn new(c: &'a CompiledNetwork<A>, net: &Network, opts: &'a LowerOptions) -> Self {
        let names = opts
            .names
            .clone()
            .unwrap_or_else(|| NameMap::default_for(net));
        Self {
            c,
            opts,
            names,
            dag: ExprDag::new(),
            vars: Vec::new(),
            assignments: Vec::new(),
        }
    }

    fn fresh(&mut self, name: String, role: VarRole) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(VarInfo { name, role });
        id
    }

    fn konst(&mut self, v: &A::V) -> NodeId {
        self.dag.konst(v.value())
    }

    fn run(
        mut self,
        prop: &SafetyProperty,
        bounds: Option<&IntervalBox>,
        guards: Option<&[Vec<Option<GuardStatus>>]>,
    ) -> Result<SsaProgram> {
        let a = self.c.arith();
        let domain = a.domain();
        let mut assumes = Vec::new();
        let mut inputs = Vec::new();
        for (i, &(lo, hi)) in prop.input_region.bounds().iter().enumerate() {
            let name = format!("{}1", self.input_name(i));
            let v = self.fresh(name, VarRole::Input(i));
            self.assignments.push(Assignment {
                var: v,
                rhs: Rhs::Nondet(i),
            });
            let x = self.dag.var(v);
            assumes.push(a.region(&mut self.dag, x, lo, hi));
            inputs.push(v);
        }
        let mut facts = Vec::new();
        let mut cur: Vec<VarId> = inputs.clone();
        for (li, layer) in self.c.layers().iter().enumerate() {
            let mut next = Vec::with_capacity(layer.biases.len());
            for (ni, (row, b)) in layer.weights.iter().zip(&layer.biases).enumerate() {
                let base = self.neuron_name(li, ni);
                let mut acc: Option<NodeId> = None;
                for (w, &x) in row.iter().zip(&cur) {
                    let wn = self.konst(w);
                    let xn = self.dag.var(x);
                    let p = self.dag.mul(wn, xn);
                    acc = Some(match acc {
                        None => p,
                        Some(s) => self.dag.add(s, p),
                    });
                }
                // An exact zero bias is an identity outside floating point.
                let skip_bias = b.value() == a.zero_value() && domain != Domain::Float32;
                let u_expr = match acc {
                    None => self.konst(b),
                    Some(s) if skip_bias => s,
                    Some(s) => {
                        let bn = self.konst(b);
                        self.dag.add(s, bn)
                    }
                };
                let u = self.fresh(
                    format!("{base}1"),
                    VarRole::Pre {
                        layer: li,
                        neuron: ni,
                    },
                );
                self.assignments.push(Assignment {
                    var: u,
                    rhs: Rhs::Expr(u_expr),
                });
                let guard = guards
                    .and_then(|g| g.get(li))
                    .and_then(|l| l.get(ni))
                    .copied()
                    .flatten();
                let y_expr = self.activation(&layer.activation, u, guard);
                let y = self.fresh(
                    format!("{base}2"),
                    VarRole::Post {
                        layer: li,
                        neuron: ni,
                    },
                );
                self.assignments.push(Assignment {
                    var: y,
                    rhs: Rhs::Expr(y_expr),
                });
                if let Some(b) = bounds.filter(|b| !b.wrap_risk[li][ni]) {
                    if let Some(f) = self.fact(u, &b.pre[li][ni].lo, &b.pre[li][ni].hi) {
                        facts.push(f);
                    }
                    if self.opts.both_bounds {
                        if let Some(f) = self.fact(y, &b.post[li][ni].lo, &b.post[li][ni].hi) {
                            facts.push(f);
                        }
                    }
                }
                next.push(y);
            }
            cur = next;
        }
        let outputs = cur;
        let cond = prop.output_condition.expand(outputs.len());
        let mut asserts: Vec<NodeId> = cond
            .conjuncts()
            .iter()
            .map(|c| self.assertion(c, &outputs))
            .collect();
        if asserts.is_empty() {
            asserts.push(self.dag.bool(true));
        }
        let p = SsaProgram {
            domain,
            dag: self.dag,
            vars: self.vars,
            assignments: self.assignments,
            assumes,
            facts,
            asserts,
            inputs,
            outputs,
        };
        debug_assert_eq!(p.validate(), Ok(()));
        Ok(p)
    }

    fn input_name(&self, i: usize) -> String {
        self.names
            .inputs
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("x{i}_"))
    }

    fn neuron_name(&self, l: usize, j: usize) -> String {
        self.names
            .neurons
            .get(l)
            .and_then(|v| v.get(j))
            .cloned()
            .unwrap_or_else(|| format!("n{l}_{j}_"))
    }

    fn fact(&mut self, v: VarId, lo: &BigRational, hi: &BigRational) -> Option<NodeId> {
        let a = self.c.arith();
        let (l, h) = (a.bound(lo)?, a.bound(hi)?);
        let x = self.dag.var(v);
        let l = self.dag.konst(l);
        let h = self.dag.konst(h);
        let above = self.dag.cmp(CmpOp::Le, l, x);
        let below = self.dag.cmp(CmpOp::Le, x, h);
        Some(self.dag.and(vec![above, below]))
    }

    fn activation(
        &mut self,
        act: &DomainActivation<A::V>,
        u: VarId,
        guard: Option<GuardStatus>,
    ) -> NodeId {
        let un = self.dag.var(u);
        let zero = self.dag.konst(self.c.arith().zero_value());
        match act {
            DomainActivation::Identity => un,
            DomainActivation::Relu => match guard {
                Some(GuardStatus::AlwaysActive) => un,
                Some(GuardStatus::AlwaysInactive) => zero,
                _ => {
                    let g = self.dag.cmp(CmpOp::Lt, un, zero);
                    self.dag.ite(g, zero, un)
                }
            },
            DomainActivation::Table(steps) => self.table_tree(steps, un, 0, steps.segments() - 1),
            DomainActivation::Piecewise { cuts, pieces } => {
                let piece = |s: &mut Self, i: usize| {
                    let (slope, intercept) = &pieces[i];
                    let sn = s.konst(slope);
                    let m = s.dag.mul(sn, un);
                    let cn = s.konst(intercept);
                    s.dag.add(m, cn)
                };
                let mut e = piece(self, pieces.len() - 1);
                for i in (0..cuts.len()).rev() {
                    let c = self.konst(&cuts[i]);
                    let g = self.dag.cmp(CmpOp::Lt, un, c);
                    let p = piece(self, i);
                    e = self.dag.ite(g, p, e);
                }
                e
            }
        }
    }

    /// Balanced ite tree selecting segments `lo..=hi` of a step function.
    fn table_tree(
        &mut self,
        steps: &StepFunction<A::V>,
        u: NodeId,
        lo: usize,
        hi: usize,
    ) -> NodeId {
        if lo == hi {
            return self.konst(&steps.outputs()[lo]);
        }
        let mid = (lo + hi) / 2;
        let cut = &steps.cuts()[mid];
        let c = self.konst(&cut.at);
        let g = self
            .dag
            .cmp(if cut.closed { CmpOp::Le } else { CmpOp::Lt }, u, c);
        let left = self.table_tree(steps, u, lo, mid);
        let right = self.table_tree(steps, u, mid + 1, hi);
        self.dag.ite(g, left, right)
    }

    fn assertion(&mut self, cond: &OutputAssertion, outputs: &[VarId]) -> NodeId {
        match cond {
            OutputAssertion::True => self.dag.bool(true),
            OutputAssertion::False => self.dag.bool(false),
            OutputAssertion::Compare { lhs, op, rhs } => self.atom(lhs, *op, rhs, outputs),
            OutputAssertion::And(v) => {
                let c = v.iter().map(|a| self.assertion(a, outputs)).collect();
                self.dag.and(c)
            }
            OutputAssertion::Or(v) => {
                let c = v.iter().map(|a| self.assertion(a, outputs)).collect();
                self.dag.or(c)
            }
            OutputAssertion::Not(a) => {
                let c = self.assertion(a, outputs);
                self.dag.not(c)
            }
            OutputAssertion::RobustClass(_) => {
                let e = cond.expand(outputs.len());
                self.assertion(&e, outputs)
            }
        }
    }

    fn atom(&mut self, lhs: &Operand, op: Comparison, rhs: &Operand, outputs: &[VarId]) -> NodeId {
        let a = self.c.arith();
        match (lhs, rhs) {
            (Operand::Output(i), Operand::Output(j)) => {
                let x = self.dag.var(outputs[*i]);
                let y = self.dag.var(outputs[*j]);
                ordered_compare_vars(&mut self.dag, x, op, y)
            }
            (Operand::Output(i), Operand::Const(c)) => {
                let x = self.dag.var(outputs[*i]);
                a.compare_const(&mut self.dag, x, op, *c)
            }
            (Operand::Const(c), Operand::Output(j)) => {
                let y = self.dag.var(outputs[*j]);
                a.compare_const(&mut self.dag, y, op.flipped(), *c)
            }
            (Operand::Const(x), Operand::Const(y)) => self.dag.bool(op.holds(x, y)),
        }
    }
}

fn ordered_compare_vars(dag: &mut ExprDag, x: NodeId, op: Comparison, y: NodeId) -> NodeId {
    match op {
        Comparison::Lt => dag.cmp(CmpOp::Lt, x, y),
        Comparison::Le => dag.cmp(CmpOp::Le, x, y),
        Comparison::Gt => dag.cmp(CmpOp::Lt, y, x),
        Comparison::Ge => dag.cmp(CmpOp::Le, y, x),
        Comparison::Eq => dag.cmp(CmpOp::Eq, x, y),
    }
}
