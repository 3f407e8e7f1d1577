//! Sound interval bounds for every neuron over an input box.
//!
//! Bounds follow the executor's evaluation order and rounding exactly, so
//! every value the executor can produce from an input in the region lies
//! inside the reported interval. Neurons whose computation may overflow are
//! flagged and given the whole representable range.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::domain::{rational, ActivationTables, Arith, Domain, DomainActivation, FixedArith};
use crate::error::{Error, Result};
use crate::exec::{compile_exact, compile_f32, compile_fixed, CompiledNetwork, WrapSite};
use crate::fixed::{min_integer_bits_exact, shift_round, FxpFormat};
use crate::network::{ActivationKind, Network};
use crate::property::HyperRect;

/// Closed interval with exact rational endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl Interval {
    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi);
        Self { lo, hi }
    }

    pub fn point(v: BigRational) -> Self {
        Self {
            lo: v.clone(),
            hi: v,
        }
    }

    pub fn contains(&self, v: &BigRational) -> bool {
        &self.lo <= v && v <= &self.hi
    }

    pub fn max_abs(&self) -> BigRational {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.to_f64().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.to_f64().unwrap_or(f64::INFINITY)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo_f64(), self.hi_f64())
    }
}

/// Bounds for every input and neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    pub domain: Domain,
    pub inputs: Vec<Interval>,
    /// Pre-activation bounds per layer and neuron.
    pub pre: Vec<Vec<Interval>>,
    pub post: Vec<Vec<Interval>>,
    /// Whether the neuron's computation may overflow.
    pub wrap_risk: Vec<Vec<bool>>,
    pub input_wrap_risk: bool,
}

/// What a ReLU guard `u < 0` does over the whole region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GuardStatus {
    /// `u >= 0` everywhere: the neuron passes its input through.
    AlwaysActive,
    /// `u < 0` everywhere: the neuron outputs zero.
    AlwaysInactive,
    Undecided,
}

impl IntervalBox {
    pub fn outputs(&self) -> &[Interval] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.inputs)
    }

    pub fn any_wrap_risk(&self) -> bool {
        self.input_wrap_risk || self.wrap_risk.iter().flatten().any(|&b| b)
    }

    /// Largest magnitude of any input, pre- or post-activation value.
    pub fn global_max_abs(&self) -> BigRational {
        let mut m = BigRational::zero();
        for iv in self
            .inputs
            .iter()
            .chain(self.pre.iter().flatten())
            .chain(self.post.iter().flatten())
        {
            m = m.max(iv.max_abs());
        }
        m
    }

    pub fn layer_max_abs(&self, layer: usize) -> BigRational {
        self.pre[layer]
            .iter()
            .chain(&self.post[layer])
            .fold(BigRational::zero(), |m, iv| m.max(iv.max_abs()))
    }

    /// Guard status per neuron; `None` for non-ReLU layers.
    pub fn guards(&self, net: &Network) -> Vec<Vec<Option<GuardStatus>>> {
        net.layers()
            .iter()
            .zip(&self.pre)
            .map(|(layer, pre)| {
                pre.iter()
                    .map(|iv| (layer.activation == ActivationKind::Relu).then(|| guard_status(iv)))
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct NeuronView {
            pre: [f64; 2],
            post: [f64; 2],
            wrap_risk: bool,
        }
        let pair = |iv: &Interval| [iv.lo_f64(), iv.hi_f64()];
        let layers: Vec<Vec<NeuronView>> = self
            .pre
            .iter()
            .zip(&self.post)
            .zip(&self.wrap_risk)
            .map(|((pre, post), risk)| {
                pre.iter()
                    .zip(post)
                    .zip(risk)
                    .map(|((a, b), &r)| NeuronView {
                        pre: pair(a),
                        post: pair(b),
                        wrap_risk: r,
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "domain": self.domain.to_string(),
            "inputs": self.inputs.iter().map(pair).collect::<Vec<_>>(),
            "input_wrap_risk": self.input_wrap_risk,
            "layers": layers,
        })
    }
}

pub fn guard_status(pre: &Interval) -> GuardStatus {
    if pre.hi < BigRational::zero() {
        GuardStatus::AlwaysInactive
    } else if pre.lo >= BigRational::zero() {
        GuardStatus::AlwaysActive
    } else {
        GuardStatus::Undecided
    }
}

/// Bounds for every neuron of `net` over `region` in `domain`.
pub fn propagate(
    net: &Network,
    region: &HyperRect,
    domain: Domain,
    tables: &ActivationTables,
) -> Result<IntervalBox> {
    if region.dim() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "region has {} dimensions, network expects {}",
            region.dim(),
            net.input_dim()
        )));
    }
    match domain {
        Domain::Fixed { format, rounding } => {
            let c = compile_fixed(net, FixedArith { format, rounding }, tables)?;
            Ok(propagate_fixed(&c, region))
        }
        Domain::Real => Ok(propagate_exact(&compile_exact(net, tables)?, region)),
        Domain::Float32 => Ok(propagate_f32(&compile_f32(net, tables)?, region)),
    }
}

/// Skeleton shared by the three domains: `V` is the bound type.
struct Propagation<V> {
    inputs: Vec<(V, V)>,
    pre: Vec<Vec<(V, V)>>,
    post: Vec<Vec<(V, V)>>,
    risk: Vec<Vec<bool>>,
    input_risk: bool,
}

impl<V> Propagation<V> {
    fn into_box(self, domain: Domain, conv: impl Fn(&V) -> BigRational) -> IntervalBox {
        let iv = |p: &(V, V)| Interval::new(conv(&p.0), conv(&p.1));
        let layer = |l: &Vec<(V, V)>| l.iter().map(iv).collect::<Vec<_>>();
        IntervalBox {
            domain,
            inputs: self.inputs.iter().map(iv).collect(),
            pre: self.pre.iter().map(layer).collect(),
            post: self.post.iter().map(layer).collect(),
            wrap_risk: self.risk,
            input_wrap_risk: self.input_risk,
        }
    }
}

fn step_image<V: PartialOrd + Clone>(
    act: &DomainActivation<V>,
    lo: &V,
    hi: &V,
    zero: V,
) -> Option<(V, V)> {
    match act {
        DomainActivation::Identity => Some((lo.clone(), hi.clone())),
        DomainActivation::Relu => {
            let clamp = |v: &V| if v < &zero { zero.clone() } else { v.clone() };
            Some((clamp(lo), clamp(hi)))
        }
        DomainActivation::Table(steps) => Some(steps.image(lo, hi)),
        DomainActivation::Piecewise { .. } => None,
    }
}

fn propagate_fixed(c: &CompiledNetwork<FixedArith>, region: &HyperRect) -> IntervalBox {
    let a = *c.arith();
    let f = a.format;
    let (min, max) = (f.min_raw() as i128, f.max_raw() as i128);
    let full = (min, max);
    let mut input_risk = false;
    let inputs: Vec<(i128, i128)> = region
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            let (ql, wl) = f.quantize(lo, a.rounding);
            let (qh, wh) = f.quantize(hi, a.rounding);
            if wl || wh || ql > qh {
                input_risk = true;
                full
            } else {
                (ql as i128, qh as i128)
            }
        })
        .collect();
    let mut p = Propagation {
        inputs: inputs.clone(),
        pre: vec![],
        post: vec![],
        risk: vec![],
        input_risk,
    };
    let mut cur = inputs;
    for layer in c.layers() {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        let mut risk = Vec::new();
        for (row, &b) in layer.weights.iter().zip(&layer.biases) {
            let mut r = false;
            let mut acc: Option<(i128, i128)> = None;
            for (&w, &(lo, hi)) in row.iter().zip(&cur) {
                let (e1, e2) = (w as i128 * lo, w as i128 * hi);
                let pl = shift_round(e1.min(e2), f.frac_bits(), a.rounding);
                let ph = shift_round(e1.max(e2), f.frac_bits(), a.rounding);
                let prod = if pl < min || ph > max {
                    r = true;
                    full
                } else {
                    (pl, ph)
                };
                acc = Some(match acc {
                    None => prod,
                    Some((sl, sh)) => {
                        let s = (sl + prod.0, sh + prod.1);
                        r |= s.0 < min || s.1 > max;
                        s
                    }
                });
            }
            let (sl, sh) = acc.unwrap_or((0, 0));
            let mut u = (sl + b as i128, sh + b as i128);
            if u.0 < min || u.1 > max {
                // Intermediate wraps cancel modulo 2^(k+l) only if the final sum fits.
                r = true;
                u = full;
            }
            let (ul, uh) = (u.0 as i64, u.1 as i64);
            let y = match step_image(&layer.activation, &ul, &uh, 0i64) {
                Some((yl, yh)) => (yl as i128, yh as i128),
                None => match pwl_image_fixed(&layer.activation, f, a.rounding, ul, uh) {
                    Some(y) => y,
                    None => {
                        r = true;
                        full
                    }
                },
            };
            pre.push(u);
            post.push(y);
            risk.push(r);
        }
        cur = post.clone();
        p.pre.push(pre);
        p.post.push(post);
        p.risk.push(risk);
    }
    for site in c.constant_wraps() {
        if let WrapSite::Weight { layer, neuron, .. } | WrapSite::Bias { layer, neuron } = *site {
            p.risk[layer][neuron] = true;
        }
    }
    p.into_box(a.domain(), |&raw| f.to_rational(raw as i64))
}

/// Image of a fixed-point piecewise-linear activation; `None` if it may wrap.
fn pwl_image_fixed(
    act: &DomainActivation<i64>,
    f: FxpFormat,
    mode: crate::fixed::RoundingMode,
    lo: i64,
    hi: i64,
) -> Option<(i128, i128)> {
    let DomainActivation::Piecewise { cuts, pieces } = act else {
        unreachable!("tables handled by step_image")
    };
    let mut out: Option<(i128, i128)> = None;
    for (i, &(s, c)) in pieces.iter().enumerate() {
        // piece i covers [cuts[i-1], cuts[i] - 1]
        let from = if i == 0 { lo } else { lo.max(cuts[i - 1]) };
        let to = if i == cuts.len() {
            hi
        } else {
            hi.min(cuts[i].saturating_sub(1))
        };
        if from > to {
            continue;
        }
        let eval = |u: i64| shift_round(s as i128 * u as i128, f.frac_bits(), mode) + c as i128;
        let (e1, e2) = (eval(from), eval(to));
        let (l, h) = (e1.min(e2), e1.max(e2));
        if !f.in_range(l) || !f.in_range(h) {
            return None;
        }
        out = Some(match out {
            None => (l, h),
            Some((ol, oh)) => (ol.min(l), oh.max(h)),
        });
    }
    out
}

fn propagate_exact(
    c: &CompiledNetwork<crate::domain::ExactArith>,
    region: &HyperRect,
) -> IntervalBox {
    let zero = BigRational::zero();
    let inputs: Vec<(BigRational, BigRational)> = region
        .bounds()
        .iter()
        .map(|&(lo, hi)| (rational(lo), rational(hi)))
        .collect();
    let mut p = Propagation {
        inputs: inputs.clone(),
        pre: vec![],
        post: vec![],
        risk: vec![],
        input_risk: false,
    };
    let mut cur = inputs;
    for layer in c.layers() {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        for (row, b) in layer.weights.iter().zip(&layer.biases) {
            let mut sl = zero.clone();
            let mut sh = zero.clone();
            for (w, (lo, hi)) in row.iter().zip(&cur) {
                let (e1, e2) = (w * lo, w * hi);
                if e1 <= e2 {
                    sl += e1;
                    sh += e2;
                } else {
                    sl += e2;
                    sh += e1;
                }
            }
            let u = (sl + b, sh + b);
            let y = step_image(&layer.activation, &u.0, &u.1, zero.clone())
                .unwrap_or_else(|| pwl_image_exact(&layer.activation, &u.0, &u.1));
            pre.push(u);
            post.push(y);
        }
        cur = post.clone();
        p.risk.push(vec![false; pre.len()]);
        p.pre.push(pre);
        p.post.push(post);
    }
    p.into_box(Domain::Real, Clone::clone)
}

fn pwl_image_exact(
    act: &DomainActivation<BigRational>,
    lo: &BigRational,
    hi: &BigRational,
) -> (BigRational, BigRational) {
    let DomainActivation::Piecewise { cuts, pieces } = act else {
        unreachable!("tables handled by step_image")
    };
    let mut out: Option<(BigRational, BigRational)> = None;
    for (i, (s, c)) in pieces.iter().enumerate() {
        let from = if i == 0 {
            lo.clone()
        } else {
            lo.clone().max(cuts[i - 1].clone())
        };
        let to = if i == cuts.len() {
            hi.clone()
        } else {
            hi.clone().min(cuts[i].clone())
        };
        if from > to {
            continue;
        }
        let (e1, e2) = (s * &from + c, s * &to + c);
        let (l, h) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        out = Some(match out {
            None => (l, h),
            Some((ol, oh)) => (ol.min(l), oh.max(h)),
        });
    }
    out.expect("pieces cover the line")
}

/// Magnitude used for bounds that left the `f32` range.
fn f32_overflow_bound() -> BigRational {
    BigRational::from_integer(BigInt::from(1u8) << 128usize)
}

fn propagate_f32(c: &CompiledNetwork<crate::domain::F32Arith>, region: &HyperRect) -> IntervalBox {
    let mut input_risk = false;
    // f32 rounding is monotone, so endpoint arithmetic gives exact bounds.
    let inputs: Vec<(f32, f32)> = region
        .bounds()
        .iter()
        .map(|&(lo, hi)| {
            let (l, h) = (lo as f32, hi as f32);
            input_risk |= !l.is_finite() || !h.is_finite();
            (l, h)
        })
        .collect();
    let mut p = Propagation {
        inputs: inputs.clone(),
        pre: vec![],
        post: vec![],
        risk: vec![],
        input_risk,
    };
    let mut cur = inputs;
    for layer in c.layers() {
        let mut pre = Vec::new();
        let mut post = Vec::new();
        let mut risk = Vec::new();
        for (row, &b) in layer.weights.iter().zip(&layer.biases) {
            let mut acc: Option<(f32, f32)> = None;
            let mut nan = false;
            for (&w, &(lo, hi)) in row.iter().zip(&cur) {
                let (e1, e2) = (w * lo, w * hi);
                // 0 * inf
                nan |= e1.is_nan() || e2.is_nan();
                let prod = (e1.min(e2), e1.max(e2));
                acc = Some(match acc {
                    None => prod,
                    Some((sl, sh)) => (sl + prod.0, sh + prod.1),
                });
            }
            let (sl, sh) = acc.unwrap_or((0.0, 0.0));
            let mut u = (sl + b, sh + b);
            let mut r = nan || !(u.0.is_finite() && u.1.is_finite());
            if r {
                u = (f32::NEG_INFINITY, f32::INFINITY);
            }
            let y = match step_image(&layer.activation, &u.0, &u.1, 0.0f32) {
                Some(y) => y,
                None => {
                    let y = pwl_image_f32(&layer.activation, u.0, u.1);
                    if !(y.0.is_finite() && y.1.is_finite()) {
                        r = true;
                        (f32::NEG_INFINITY, f32::INFINITY)
                    } else {
                        y
                    }
                }
            };
            pre.push(u);
            post.push(y);
            risk.push(r);
        }
        cur = post.clone();
        p.pre.push(pre);
        p.post.push(post);
        p.risk.push(risk);
    }
    let big = f32_overflow_bound();
    p.into_box(Domain::Float32, move |&v: &f32| {
        if v.is_finite() {
            BigRational::from_float(v).unwrap_or_else(BigRational::zero)
        } else if v > 0.0 {
            big.clone()
        } else {
            -big.clone()
        }
    })
}

fn pwl_image_f32(act: &DomainActivation<f32>, lo: f32, hi: f32) -> (f32, f32) {
    let DomainActivation::Piecewise { cuts, pieces } = act else {
        unreachable!("tables handled by step_image")
    };
    let mut out: Option<(f32, f32)> = None;
    for (i, &(s, c)) in pieces.iter().enumerate() {
        let from = if i == 0 { lo } else { lo.max(cuts[i - 1]) };
        let to = if i == cuts.len() {
            hi
        } else {
            hi.min(cuts[i].next_down())
        };
        if from > to {
            continue;
        }
        let (e1, e2) = (s * from + c, s * to + c);
        let (l, h) = (e1.min(e2), e1.max(e2));
        out = Some(match out {
            None => (l, h),
            Some((ol, oh)) => (ol.min(l), oh.max(h)),
        });
    }
    out.unwrap_or((f32::NEG_INFINITY, f32::INFINITY))
}

/// Magnitudes observed over a region, used to choose an integer width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeReport {
    pub global_max_abs: f64,
    pub per_layer_max_abs: Vec<f64>,
    /// Smallest integer width (sign included) holding every value.
    pub recommended_int_bits: u32,
    /// Triangle-inequality bound per layer; never below the interval bound.
    pub p1_bound: Vec<f64>,
    /// Candidate format and its per-neuron overflow flags, if one was given.
    pub candidate: Option<CandidateCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateCheck {
    pub format: String,
    pub wrap_risk: Vec<Vec<bool>>,
    pub any_wrap_risk: bool,
}

/// Exact ranges in real arithmetic, plus an optional overflow check of a
/// candidate fixed-point domain.
pub fn range_report(
    net: &Network,
    region: &HyperRect,
    tables: &ActivationTables,
    candidate: Option<Domain>,
) -> Result<RangeReport> {
    let exact = propagate(net, region, Domain::Real, tables)?;
    let global = exact.global_max_abs();
    let per_layer: Vec<BigRational> = (0..exact.pre.len())
        .map(|l| exact.layer_max_abs(l))
        .collect();
    let p1 = p1_bounds(net, region, tables);
    let candidate = match candidate {
        Some(d @ Domain::Fixed { .. }) => {
            let b = propagate(net, region, d, tables)?;
            Some(CandidateCheck {
                format: d.to_string(),
                any_wrap_risk: b.any_wrap_risk(),
                wrap_risk: b.wrap_risk,
            })
        }
        _ => None,
    };
    let up = |r: &BigRational| round_up_f64(r);
    Ok(RangeReport {
        global_max_abs: up(&global),
        per_layer_max_abs: per_layer.iter().map(up).collect(),
        recommended_int_bits: min_integer_bits_exact(&global),
        p1_bound: p1.iter().map(up).collect(),
        candidate,
    })
}

fn round_up_f64(r: &BigRational) -> f64 {
    let f = r.to_f64().unwrap_or(f64::INFINITY);
    if f.is_finite() && &rational(f) < r {
        f.next_up()
    } else {
        f
    }
}

/// Per-layer bound on `|u|` and `|act(u)|` from `sum |w| * max|x| + |b|`.
fn p1_bounds(net: &Network, region: &HyperRect, tables: &ActivationTables) -> Vec<BigRational> {
    let mut mags: Vec<BigRational> = region
        .bounds()
        .iter()
        .map(|&(l, h)| rational(l.abs().max(h.abs())))
        .collect();
    let mut out = Vec::new();
    for layer in net.layers() {
        let pre: Vec<BigRational> = layer
            .weights
            .iter()
            .zip(&layer.biases)
            .map(|(row, b)| {
                row.iter()
                    .zip(&mags)
                    .fold(rational(b.abs()), |s, (w, m)| s + rational(w.abs()) * m)
            })
            .collect();
        let post: Vec<BigRational> = pre
            .iter()
            .map(|m| activation_magnitude(&layer.activation, m, tables))
            .collect();
        let best = pre
            .iter()
            .chain(&post)
            .fold(BigRational::zero(), |a, m| a.max(m.clone()));
        out.push(best);
        mags = post;
    }
    out
}

fn activation_magnitude(
    act: &ActivationKind,
    m: &BigRational,
    tables: &ActivationTables,
) -> BigRational {
    match act {
        ActivationKind::Relu | ActivationKind::Identity => m.clone(),
        ActivationKind::Sigmoid | ActivationKind::Tanh => {
            let table_max = tables
                .get(act)
                .map(|t| t.points().iter().fold(0.0f64, |a, &(_, y)| a.max(y.abs())))
                .unwrap_or(1.0);
            rational(table_max.max(1.0))
        }
        ActivationKind::PiecewiseLinear(p) => {
            let mf = round_up_f64(m);
            let mut best = BigRational::zero();
            let mut consider = |x: f64| {
                // exact affine evaluation at x
                let i = p.piece_index(x);
                let q = &p.pieces()[i];
                let y = rational(q.slope) * rational(x) + rational(q.intercept);
                best = best.clone().max(y.abs());
            };
            consider(-mf);
            consider(mf);
            for &(x, _) in p.knots() {
                if x.abs() <= mf {
                    consider(x);
                }
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::RoundingMode;
    use crate::network::{parse_nnet_str, Layer};

    fn guarded() -> Network {
        let l = Layer::new(
            vec![vec![2.0, -3.0], vec![1.0, 4.0], vec![3.0, 1.0]],
            vec![0.0; 3],
            ActivationKind::Relu,
        );
        Network::new("guarded", 2, vec![l]).unwrap()
    }

    fn r(x: f64) -> BigRational {
        rational(x)
    }

    #[test]
    fn guarded_interval_bounds() {
        let region = HyperRect::new(vec![(0.0, 1.0); 2]).unwrap();
        let d = Domain::fixed(
            FxpFormat::new(8, 0).unwrap(),
            RoundingMode::TruncateTowardNegInf,
        );
        let b = propagate(&guarded(), &region, d, &ActivationTables::default()).unwrap();
        assert_eq!(b.pre[0][0], Interval::new(r(-3.0), r(2.0)));
        assert_eq!(b.pre[0][1], Interval::new(r(0.0), r(5.0)));
        assert_eq!(b.pre[0][2], Interval::new(r(0.0), r(4.0)));
        assert_eq!(b.post[0][0], Interval::new(r(0.0), r(2.0)));
        let g = b.guards(&guarded());
        assert_eq!(
            g[0],
            vec![
                Some(GuardStatus::Undecided),
                Some(GuardStatus::AlwaysActive),
                Some(GuardStatus::AlwaysActive)
            ]
        );
        assert!(!b.any_wrap_risk());
    }

    const SMALL: &str =
        "2,2,1,2,\n2,2,1,\n0,\n0,0,\n1,1,\n0,0,0,\n1,1,1,\n2,-3,\n1,4,\n0,\n0,\n1,1,\n0,\n";

    #[test]
    fn small_ranges_match_corner_enumeration() {
        let net = parse_nnet_str(SMALL).unwrap();
        let region = HyperRect::new(vec![(0.0, 1.0); 2]).unwrap();
        let rep = range_report(&net, &region, &ActivationTables::default(), None).unwrap();
        // Affine pre-activations attain their extremes at box corners.
        let mut oracle = 0.0f64;
        for x in [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] {
            let a = 2.0 * x[0] - 3.0 * x[1];
            let b = x[0] + 4.0 * x[1];
            oracle = oracle.max(a.abs()).max(b.abs());
        }
        // The output is a monotone function of post-activations.
        let f_max = 2.0 + 5.0;
        oracle = oracle.max(f_max);
        assert_eq!(rep.global_max_abs, oracle);
        assert_eq!(rep.recommended_int_bits, 4);
        for (p1, iv) in rep.p1_bound.iter().zip(&rep.per_layer_max_abs) {
            assert!(p1 >= iv);
        }
        let narrow = Domain::fixed(
            FxpFormat::new(3, 4).unwrap(),
            RoundingMode::TruncateTowardNegInf,
        );
        let rep = range_report(&net, &region, &ActivationTables::default(), Some(narrow)).unwrap();
        assert!(rep.candidate.unwrap().any_wrap_risk);
        let fits = Domain::fixed(
            FxpFormat::new(4, 4).unwrap(),
            RoundingMode::TruncateTowardNegInf,
        );
        let rep = range_report(&net, &region, &ActivationTables::default(), Some(fits)).unwrap();
        assert!(!rep.candidate.unwrap().any_wrap_risk);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let region = HyperRect::new(vec![(0.0, 1.0); 3]).unwrap();
        assert!(propagate(&guarded(), &region, Domain::Real, &ActivationTables::default()).is_err());
    }

    #[test]
    fn json_has_every_neuron() {
        let region = HyperRect::new(vec![(0.0, 1.0); 2]).unwrap();
        let b = propagate(
            &guarded(),
            &region,
            Domain::Float32,
            &ActivationTables::default(),
        )
        .unwrap();
        let j = b.to_json();
        assert_eq!(j["layers"][0].as_array().unwrap().len(), 3);
        assert_eq!(j["layers"][0][1]["pre"][1], 5.0);
    }
}
