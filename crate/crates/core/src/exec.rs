//! Bit-exact forward execution in each numeric domain.
//!
//! Every neuron computes `w0*x0 + w1*x1 + ... + b` left to right, with the
//! bias added last, then applies its activation. The SMT encoding uses the
//! same order, so a model returned by the solver replays to the same bits.

use serde::{Deserialize, Serialize};

use crate::domain::{
    apply_activation, exact_table, f32_table, fixed_table, realize_activation, ActivationTables,
    Arith, Domain, DomainActivation, ExactArith, F32Arith, FixedArith, Scalar,
};
use crate::error::{Error, Result};
use crate::lut::{LookupTable, StepFunction};
use crate::network::{ActivationKind, Network};
use crate::property::{Comparison, Operand, OutputAssertion, SafetyProperty};

/// Where an overflow happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WrapSite {
    Input(usize),
    Weight {
        layer: usize,
        neuron: usize,
        input: usize,
    },
    Bias {
        layer: usize,
        neuron: usize,
    },
    /// Product of the neuron's weight with input `input`.
    Product {
        layer: usize,
        neuron: usize,
        input: usize,
    },
    /// Accumulator after adding term `input`.
    Sum {
        layer: usize,
        neuron: usize,
        input: usize,
    },
    BiasAdd {
        layer: usize,
        neuron: usize,
    },
    Activation {
        layer: usize,
        neuron: usize,
    },
}

#[derive(Debug, Clone)]
pub struct CompiledLayer<V> {
    pub weights: Vec<Vec<V>>,
    pub biases: Vec<V>,
    pub activation: DomainActivation<V>,
    pub kind: ActivationKind,
}

/// A network with every constant converted into a domain.
#[derive(Debug, Clone)]
pub struct CompiledNetwork<A: Arith> {
    arith: A,
    input_dim: usize,
    layers: Vec<CompiledLayer<A::V>>,
    constant_wraps: Vec<WrapSite>,
}

/// Per-neuron values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<V> {
    pub inputs: Vec<V>,
    pub pre: Vec<Vec<V>>,
    pub post: Vec<Vec<V>>,
    pub wraps: Vec<WrapSite>,
}

impl<V> Trace<V> {
    pub fn outputs(&self) -> &[V] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.inputs)
    }
}

impl<A: Arith> CompiledNetwork<A> {
    pub fn new(
        arith: A,
        net: &Network,
        tables: &ActivationTables,
        realize_table: &dyn Fn(&LookupTable) -> Result<StepFunction<A::V>>,
    ) -> Result<Self> {
        let mut constant_wraps = Vec::new();
        let mut layers = Vec::with_capacity(net.layers().len());
        for (li, layer) in net.layers().iter().enumerate() {
            let mut weights = Vec::with_capacity(layer.neurons());
            let mut biases = Vec::with_capacity(layer.neurons());
            for (ni, (row, b)) in layer.weights.iter().zip(&layer.biases).enumerate() {
                let mut qrow = Vec::with_capacity(row.len());
                for (ii, w) in row.iter().enumerate() {
                    let (q, o) = arith.convert(*w);
                    if o {
                        constant_wraps.push(WrapSite::Weight {
                            layer: li,
                            neuron: ni,
                            input: ii,
                        });
                    }
                    qrow.push(q);
                }
                let (qb, o) = arith.convert(*b);
                if o {
                    constant_wraps.push(WrapSite::Bias {
                        layer: li,
                        neuron: ni,
                    });
                }
                weights.push(qrow);
                biases.push(qb);
            }
            let activation = realize_activation(&arith, &layer.activation, tables, realize_table)?;
            layers.push(CompiledLayer {
                weights,
                biases,
                activation,
                kind: layer.activation.clone(),
            });
        }
        Ok(Self {
            arith,
            input_dim: net.input_dim(),
            layers,
            constant_wraps,
        })
    }

    pub fn arith(&self) -> &A {
        &self.arith
    }

    pub fn layers(&self) -> &[CompiledLayer<A::V>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_dim, |l| l.biases.len())
    }

    /// Constants that overflowed when converted into the domain.
    pub fn constant_wraps(&self) -> &[WrapSite] {
        &self.constant_wraps
    }

    /// Convert real inputs into the domain.
    pub fn quantize_inputs(&self, x: &[f64]) -> Result<(Vec<A::V>, Vec<WrapSite>)> {
        self.check_dim(x.len())?;
        let mut wraps = Vec::new();
        let v = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let (q, o) = self.arith.convert(xi);
                if o {
                    wraps.push(WrapSite::Input(i));
                }
                q
            })
            .collect();
        Ok((v, wraps))
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.input_dim {
            return Err(Error::Dimension(format!(
                "input has {n} values, network expects {}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Full trace from domain-valued inputs.
    pub fn trace(&self, inputs: &[A::V]) -> Result<Trace<A::V>> {
        self.check_dim(inputs.len())?;
        let a = &self.arith;
        let mut wraps = Vec::new();
        let mut pre_all = Vec::with_capacity(self.layers.len());
        let mut post_all: Vec<Vec<A::V>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let cur = post_all.last().unwrap_or(&inputs.to_vec()).clone();
            let mut pre = Vec::with_capacity(layer.biases.len());
            let mut post = Vec::with_capacity(layer.biases.len());
            for (ni, (row, b)) in layer.weights.iter().zip(&layer.biases).enumerate() {
                let mut acc: Option<A::V> = None;
                for (ii, (w, x)) in row.iter().zip(&cur).enumerate() {
                    let (p, o) = a.mul(w, x);
                    if o {
                        wraps.push(WrapSite::Product {
                            layer: li,
                            neuron: ni,
                            input: ii,
                        });
                    }
                    acc = Some(match acc {
                        None => p,
                        Some(s) => {
                            let (s, o) = a.add(&s, &p);
                            if o {
                                wraps.push(WrapSite::Sum {
                                    layer: li,
                                    neuron: ni,
                                    input: ii,
                                });
                            }
                            s
                        }
                    });
                }
                let u = match acc {
                    None => b.clone(),
                    Some(s) => {
                        let (u, o) = a.add(&s, b);
                        if o {
                            wraps.push(WrapSite::BiasAdd {
                                layer: li,
                                neuron: ni,
                            });
                        }
                        u
                    }
                };
                let (y, o) = apply_activation(a, &layer.activation, &u);
                if o {
                    wraps.push(WrapSite::Activation {
                        layer: li,
                        neuron: ni,
                    });
                }
                pre.push(u);
                post.push(y);
            }
            pre_all.push(pre);
            post_all.push(post);
        }
        Ok(Trace {
            inputs: inputs.to_vec(),
            pre: pre_all,
            post: post_all,
            wraps,
        })
    }

    /// Outputs only.
    pub fn forward(&self, inputs: &[A::V]) -> Result<Vec<A::V>> {
        self.check_dim(inputs.len())?;
        let a = &self.arith;
        let mut cur = inputs.to_vec();
        for layer in &self.layers {
            cur = layer
                .weights
                .iter()
                .zip(&layer.biases)
                .map(|(row, b)| {
                    let mut terms = row.iter().zip(&cur).map(|(w, x)| a.mul(w, x).0);
                    let u = match terms.next() {
                        None => b.clone(),
                        Some(first) => a.add(&terms.fold(first, |s, p| a.add(&s, &p).0), b).0,
                    };
                    apply_activation(a, &layer.activation, &u).0
                })
                .collect();
        }
        Ok(cur)
    }

    /// Evaluate an output condition on domain-valued outputs.
    pub fn holds(&self, cond: &OutputAssertion, outputs: &[A::V]) -> bool {
        check_assertion(&self.arith, cond, outputs)
    }
}

/// Decide an output condition exactly: constants are compared against the
/// exact value each output represents.
pub fn check_assertion<A: Arith + ?Sized>(arith: &A, cond: &OutputAssertion, y: &[A::V]) -> bool {
    cond.eval_with(y.len(), &mut |l, op, r| match (l, r) {
        (Operand::Output(i), Operand::Output(j)) => op.holds(&y[*i], &y[*j]),
        (Operand::Output(i), Operand::Const(c)) => arith.cmp_const(&y[*i], op, *c),
        (Operand::Const(c), Operand::Output(j)) => arith.cmp_const(&y[*j], op.flipped(), *c),
        (Operand::Const(a), Operand::Const(b)) => op.holds(a, b),
    })
}

/// Compile a network for a fixed-point domain.
pub fn compile_fixed(
    net: &Network,
    arith: FixedArith,
    tables: &ActivationTables,
) -> Result<CompiledNetwork<FixedArith>> {
    CompiledNetwork::new(
        arith,
        net,
        tables,
        &fixed_table(arith.format, arith.rounding),
    )
}

pub fn compile_exact(
    net: &Network,
    tables: &ActivationTables,
) -> Result<CompiledNetwork<ExactArith>> {
    CompiledNetwork::new(ExactArith, net, tables, &exact_table)
}

pub fn compile_f32(net: &Network, tables: &ActivationTables) -> Result<CompiledNetwork<F32Arith>> {
    CompiledNetwork::new(F32Arith, net, tables, &f32_table)
}

/// Trace of a forward pass, domain erased for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrace {
    pub domain: Domain,
    pub inputs: Vec<Scalar>,
    pub pre: Vec<Vec<Scalar>>,
    pub post: Vec<Vec<Scalar>>,
    pub outputs: Vec<Scalar>,
    pub wraps: Vec<WrapSite>,
}

impl ScalarTrace {
    fn from_trace<A: Arith>(a: &A, t: &Trace<A::V>, mut wraps: Vec<WrapSite>) -> Self {
        let conv = |v: &[A::V]| v.iter().map(|x| a.to_scalar(x)).collect::<Vec<_>>();
        wraps.extend(t.wraps.iter().copied());
        Self {
            domain: a.domain(),
            inputs: conv(&t.inputs),
            pre: t.pre.iter().map(|l| conv(l)).collect(),
            post: t.post.iter().map(|l| conv(l)).collect(),
            outputs: conv(t.outputs()),
            wraps,
        }
    }

    pub fn outputs_f64(&self) -> Vec<f64> {
        self.outputs.iter().map(Scalar::to_f64).collect()
    }
}

/// Domain-dispatched executor used for replay.
#[derive(Debug, Clone)]
pub enum Executor {
    Fixed(CompiledNetwork<FixedArith>),
    Real(CompiledNetwork<ExactArith>),
    Float32(CompiledNetwork<F32Arith>),
}

/// Domain-valued inputs, as decoded from a solver model.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainInputs {
    Fixed(Vec<i64>),
    Real(Vec<num_rational::BigRational>),
    Float32(Vec<f32>),
}

impl DomainInputs {
    /// Approximate real values, for display.
    pub fn to_f64(&self, domain: Domain) -> Vec<f64> {
        use num_traits::ToPrimitive;
        match (self, domain) {
            (DomainInputs::Fixed(v), Domain::Fixed { format, .. }) => v.iter().map(|&r| format.to_f64(r)).collect(),
            (DomainInputs::Fixed(v), _) => v.iter().map(|&r| r as f64).collect(),
            (DomainInputs::Real(v), _) => v.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect(),
            (DomainInputs::Float32(v), _) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Collect report scalars of one domain; `None` if they are mixed.
    pub fn from_scalars(v: &[Scalar]) -> Option<Self> {
        match v.first() {
            None | Some(Scalar::Fixed(_)) => v.iter().map(Scalar::raw).collect::<Option<_>>().map(DomainInputs::Fixed),
            Some(Scalar::Real(_)) => v
                .iter()
                .map(|s| match s {
                    Scalar::Real(r) => Some(r.clone()),
                    _ => None,
                })
                .collect::<Option<_>>()
                .map(DomainInputs::Real),
            Some(Scalar::F32(_)) => v
                .iter()
                .map(|s| match s {
                    Scalar::F32(x) => Some(*x),
                    _ => None,
                })
                .collect::<Option<_>>()
                .map(DomainInputs::Float32),
        }
    }
}

impl Executor {
    pub fn new(net: &Network, domain: Domain, tables: &ActivationTables) -> Result<Self> {
        Ok(match domain {
            Domain::Fixed { format, rounding } => {
                Executor::Fixed(compile_fixed(net, FixedArith { format, rounding }, tables)?)
            }
            Domain::Real => Executor::Real(compile_exact(net, tables)?),
            Domain::Float32 => Executor::Float32(compile_f32(net, tables)?),
        })
    }

    pub fn domain(&self) -> Domain {
        match self {
            Executor::Fixed(c) => c.arith().domain(),
            Executor::Real(_) => Domain::Real,
            Executor::Float32(_) => Domain::Float32,
        }
    }

    /// Quantize real inputs into the domain and run.
    pub fn run_f64(&self, x: &[f64]) -> Result<ScalarTrace> {
        fn go<A: Arith>(c: &CompiledNetwork<A>, x: &[f64]) -> Result<ScalarTrace> {
            let (v, w) = c.quantize_inputs(x)?;
            let mut wraps = c.constant_wraps().to_vec();
            wraps.extend(w);
            Ok(ScalarTrace::from_trace(c.arith(), &c.trace(&v)?, wraps))
        }
        match self {
            Executor::Fixed(c) => go(c, x),
            Executor::Real(c) => go(c, x),
            Executor::Float32(c) => go(c, x),
        }
    }

    /// Run on inputs already in the domain.
    pub fn run_domain(&self, x: &DomainInputs) -> Result<ScalarTrace> {
        fn go<A: Arith>(c: &CompiledNetwork<A>, v: &[A::V]) -> Result<ScalarTrace> {
            Ok(ScalarTrace::from_trace(
                c.arith(),
                &c.trace(v)?,
                c.constant_wraps().to_vec(),
            ))
        }
        match (self, x) {
            (Executor::Fixed(c), DomainInputs::Fixed(v)) => go(c, v),
            (Executor::Real(c), DomainInputs::Real(v)) => go(c, v),
            (Executor::Float32(c), DomainInputs::Float32(v)) => go(c, v),
            _ => Err(Error::Dimension(
                "input values belong to a different domain".into(),
            )),
        }
    }

    /// Whether the output condition holds on inputs already in the domain.
    pub fn holds_domain(&self, cond: &OutputAssertion, x: &DomainInputs) -> Result<bool> {
        Ok(match (self, x) {
            (Executor::Fixed(c), DomainInputs::Fixed(v)) => c.holds(cond, &c.forward(v)?),
            (Executor::Real(c), DomainInputs::Real(v)) => c.holds(cond, &c.forward(v)?),
            (Executor::Float32(c), DomainInputs::Float32(v)) => c.holds(cond, &c.forward(v)?),
            _ => {
                return Err(Error::Dimension(
                    "input values belong to a different domain".into(),
                ))
            }
        })
    }

    pub fn holds_f64(&self, cond: &OutputAssertion, x: &[f64]) -> Result<bool> {
        fn go<A: Arith>(c: &CompiledNetwork<A>, cond: &OutputAssertion, x: &[f64]) -> Result<bool> {
            let (v, _) = c.quantize_inputs(x)?;
            Ok(c.holds(cond, &c.forward(&v)?))
        }
        match self {
            Executor::Fixed(c) => go(c, cond, x),
            Executor::Real(c) => go(c, cond, x),
            Executor::Float32(c) => go(c, cond, x),
        }
    }
}

/// Run a network in fixed point from real inputs.
pub fn forward_fxp(
    net: &Network,
    x: &[f64],
    arith: FixedArith,
    tables: &ActivationTables,
) -> Result<Trace<i64>> {
    let c = compile_fixed(net, arith, tables)?;
    let (v, w) = c.quantize_inputs(x)?;
    let mut t = c.trace(&v)?;
    let mut wraps = c.constant_wraps().to_vec();
    wraps.extend(w);
    wraps.append(&mut t.wraps);
    t.wraps = wraps;
    Ok(t)
}

/// Does the property hold at this concrete input in the given domain?
pub fn check_point(
    net: &Network,
    prop: &SafetyProperty,
    domain: Domain,
    tables: &ActivationTables,
    x: &[f64],
) -> Result<bool> {
    Executor::new(net, domain, tables)?.holds_f64(&prop.output_condition, x)
}

/// Comparison helper for assertions with a single output and constant.
pub fn output_vs_const(i: usize, op: Comparison, c: f64) -> OutputAssertion {
    OutputAssertion::compare(Operand::Output(i), op, Operand::Const(c))
}
