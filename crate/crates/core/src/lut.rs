//! Lookup-table discretization of Lipschitz-continuous activations.
//!
//! The activation domain is split into disjoint intervals, each with a
//! Lipschitz bound `λ`. A finite interval of length `L` is sampled on a
//! uniform grid of `N ≥ 1 + L·λ/ε` points; an input is snapped to the
//! nearest grid point (ties toward zero) and the exact activation value at
//! that point is returned. Unbounded tails are replaced by the constant at
//! the cutoff. The same table is reinterpreted in every numeric domain as a
//! monotone step function so the executor and the SMT encoder agree.

use std::fmt::Write as _;

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{FxpFormat, RoundingMode};
use crate::network::ActivationKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Approximator {
    /// Every input of the piece maps to the activation at this point.
    ConstantAt(f64),
    /// Nearest point of a uniform grid.
    UniformGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecPiece {
    /// May be `-inf`.
    pub lo: f64,
    /// May be `+inf`.
    pub hi: f64,
    pub lipschitz: f64,
    pub approximator: Approximator,
}

impl SpecPiece {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSpec {
    pub activation: ActivationKind,
    pub pieces: Vec<SpecPiece>,
}

impl PiecewiseSpec {
    pub fn new(activation: ActivationKind, pieces: Vec<SpecPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Table("spec has no pieces".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.lo.is_nan() || p.hi.is_nan() || p.lo > p.hi {
                return Err(Error::Table(format!(
                    "piece {i}: bad interval [{}, {}]",
                    p.lo, p.hi
                )));
            }
            if !(p.lipschitz >= 0.0) {
                return Err(Error::Table(format!(
                    "piece {i}: Lipschitz bound must be non-negative"
                )));
            }
            if i > 0 && pieces[i - 1].hi != p.lo {
                return Err(Error::Table(format!(
                    "piece {i} does not start where piece {} ends",
                    i - 1
                )));
            }
        }
        Ok(Self { activation, pieces })
    }
}

/// Three-piece spec for a saturating activation: constant tails outside
/// `[-cutoff, cutoff]` and a sampled middle.
pub fn default_spec(kind: &ActivationKind, cutoff: f64) -> Result<PiecewiseSpec> {
    if !(cutoff > 0.0) || !cutoff.is_finite() {
        return Err(Error::Table(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    let lipschitz = match kind {
        ActivationKind::Sigmoid => 0.25,
        ActivationKind::Tanh => 1.0,
        other => {
            return Err(Error::Table(format!(
                "{other} is an exact activation, no table"
            )))
        }
    };
    PiecewiseSpec::new(
        kind.clone(),
        vec![
            SpecPiece {
                lo: f64::NEG_INFINITY,
                hi: -cutoff,
                lipschitz: 0.0,
                approximator: Approximator::ConstantAt(-cutoff),
            },
            SpecPiece {
                lo: -cutoff,
                hi: cutoff,
                lipschitz,
                approximator: Approximator::UniformGrid,
            },
            SpecPiece {
                lo: cutoff,
                hi: f64::INFINITY,
                lipschitz: 0.0,
                approximator: Approximator::ConstantAt(cutoff),
            },
        ],
    )
}

/// `ceil(1 + L·λ/ε)`, evaluated exactly on the binary values of the inputs.
pub fn required_samples(length: f64, lipschitz: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Table(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(length >= 0.0) || !(lipschitz >= 0.0) {
        return Err(Error::Table(
            "length and Lipschitz bound must be non-negative".into(),
        ));
    }
    if length == 0.0 || lipschitz == 0.0 {
        return Ok(1);
    }
    if !length.is_finite() || !lipschitz.is_finite() {
        return Err(Error::Table(
            "unbounded piece with positive Lipschitz bound".into(),
        ));
    }
    let r = |x: f64| BigRational::from_float(x).expect("finite");
    let ratio = r(length) * r(lipschitz) / r(epsilon);
    let n = ratio.ceil().to_integer() + BigInt::from(1);
    n.to_usize()
        .ok_or_else(|| Error::Table("sample count overflows".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TablePiece {
    Constant {
        lo: f64,
        hi: f64,
        at: f64,
        value: f64,
    },
    Grid {
        lo: f64,
        hi: f64,
        inputs: Vec<f64>,
        outputs: Vec<f64>,
    },
}

impl TablePiece {
    pub fn hi(&self) -> f64 {
        match self {
            TablePiece::Constant { hi, .. } | TablePiece::Grid { hi, .. } => *hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub source: ActivationKind,
    pub epsilon: f64,
    pub pieces: Vec<TablePiece>,
    /// Non-fatal issues found while building.
    #[serde(default)]
    pub warnings: Vec<String>,
}

fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let span = hi - lo;
    let mut g: Vec<f64> = (0..n)
        .map(|i| lo + span * (i as f64) / ((n - 1) as f64))
        .collect();
    g[n - 1] = hi;
    g
}

fn saturation_gap(kind: &ActivationKind, at: f64) -> Option<f64> {
    let limit = match kind {
        ActivationKind::Sigmoid => {
            if at < 0.0 {
                0.0
            } else {
                1.0
            }
        }
        ActivationKind::Tanh => at.signum(),
        _ => return None,
    };
    Some((kind.eval(at) - limit).abs())
}

/// Sample every finite piece per the Lipschitz budget.
pub fn build_table(spec: &PiecewiseSpec, epsilon: f64) -> Result<LookupTable> {
    build(spec, epsilon, |p| {
        required_samples(p.length(), p.lipschitz, epsilon)
    })
}

/// Sample grid pieces with a fixed spacing instead of an error budget.
pub fn build_table_with_step(spec: &PiecewiseSpec, step: f64) -> Result<LookupTable> {
    if !(step > 0.0) {
        return Err(Error::Table(format!(
            "grid step must be positive, got {step}"
        )));
    }
    // The equivalent budget of a grid with this spacing: λ·step.
    let eps = spec
        .pieces
        .iter()
        .map(|p| p.lipschitz * step)
        .fold(0.0, f64::max);
    build(spec, if eps > 0.0 { eps } else { step }, |p| {
        if !p.length().is_finite() {
            return Err(Error::Table("unbounded grid piece".into()));
        }
        Ok((p.length() / step).round() as usize + 1)
    })
}

fn build(
    spec: &PiecewiseSpec,
    epsilon: f64,
    samples: impl Fn(&SpecPiece) -> Result<usize>,
) -> Result<LookupTable> {
    let act = &spec.activation;
    let mut pieces = Vec::with_capacity(spec.pieces.len());
    let mut warnings = Vec::new();
    for (i, p) in spec.pieces.iter().enumerate() {
        let finite = p.lo.is_finite() && p.hi.is_finite();
        if !finite && p.lipschitz > 0.0 {
            return Err(Error::Table(format!(
                "piece {i} is unbounded with λ = {}, cannot bound its error",
                p.lipschitz
            )));
        }
        match p.approximator {
            Approximator::ConstantAt(at) => {
                if finite && p.length() * p.lipschitz > epsilon {
                    return Err(Error::Table(format!(
                        "piece {i}: a constant cannot meet ε = {epsilon} over length {}",
                        p.length()
                    )));
                }
                if let Some(gap) = saturation_gap(act, at) {
                    if gap > epsilon {
                        warnings.push(format!(
                            "tail constant at {at} is {gap:.3e} from the asymptote, more than ε = {epsilon}; raise the cutoff"
                        ));
                    }
                }
                pieces.push(TablePiece::Constant {
                    lo: p.lo,
                    hi: p.hi,
                    at,
                    value: act.eval(at),
                });
            }
            Approximator::UniformGrid => {
                if !finite {
                    return Err(Error::Table(format!(
                        "piece {i}: a grid needs finite bounds"
                    )));
                }
                let n = samples(p)?;
                let inputs = uniform_grid(p.lo, p.hi, n);
                let outputs = inputs.iter().map(|&u| act.eval(u)).collect();
                pieces.push(TablePiece::Grid {
                    lo: p.lo,
                    hi: p.hi,
                    inputs,
                    outputs,
                });
            }
        }
    }
    Ok(LookupTable {
        source: act.clone(),
        epsilon,
        pieces,
        warnings,
    })
}

/// Index of the nearest of `g[i-1]`, `g[i]` to `u`, ties toward zero.
fn nearest_index(g: &[f64], u: f64) -> usize {
    let i = g.partition_point(|&x| x < u);
    if i == 0 {
        return 0;
    }
    if i == g.len() {
        return g.len() - 1;
    }
    let (a, b) = (g[i - 1], g[i]);
    let (da, db) = (u - a, b - u);
    if da < db || (da == db && a.abs() <= b.abs()) {
        i - 1
    } else {
        i
    }
}

impl LookupTable {
    /// Evaluate the discretized activation.
    pub fn eval(&self, u: f64) -> f64 {
        let piece = self
            .pieces
            .iter()
            .find(|p| u <= p.hi())
            .unwrap_or_else(|| self.pieces.last().expect("non-empty"));
        match piece {
            TablePiece::Constant { value, .. } => *value,
            TablePiece::Grid {
                inputs, outputs, ..
            } => outputs[nearest_index(inputs, u)],
        }
    }

    /// Sample counts per piece (constants count as one).
    pub fn sample_counts(&self) -> Vec<usize> {
        self.pieces
            .iter()
            .map(|p| match p {
                TablePiece::Constant { .. } => 1,
                TablePiece::Grid { inputs, .. } => inputs.len(),
            })
            .collect()
    }

    /// Every stored `(input, output)` pair in increasing input order;
    /// constant pieces contribute their anchor point.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for p in &self.pieces {
            match p {
                TablePiece::Constant { at, value, .. } => pts.push((*at, *value)),
                TablePiece::Grid {
                    inputs, outputs, ..
                } => pts.extend(inputs.iter().copied().zip(outputs.iter().copied())),
            }
        }
        pts
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("input,output\n");
        for (x, y) in self.points() {
            let _ = writeln!(s, "{x:?},{y:?}");
        }
        s
    }

    /// The table as an exact step function over the reals.
    pub fn real_steps(&self) -> StepFunction<BigRational> {
        let r = |x: f64| BigRational::from_float(x).expect("finite table value");
        let mut cuts = Vec::new();
        let mut outputs = Vec::new();
        let last = self.pieces.len() - 1;
        for (pi, p) in self.pieces.iter().enumerate() {
            match p {
                TablePiece::Constant { value, .. } => outputs.push(r(*value)),
                TablePiece::Grid {
                    inputs,
                    outputs: outs,
                    ..
                } => {
                    for (i, o) in outs.iter().enumerate() {
                        outputs.push(r(*o));
                        if i + 1 < inputs.len() {
                            cuts.push(midpoint_cut(r(inputs[i]), r(inputs[i + 1])));
                        }
                    }
                }
            }
            if pi < last {
                cuts.push(Cut {
                    at: r(p.hi()),
                    closed: true,
                });
            }
        }
        StepFunction::new(cuts, outputs)
    }
}

/// Cut between adjacent grid points `a < b`: inputs closer to `a` (or tied
/// with `a` nearer zero) fall on the lower side.
fn midpoint_cut(a: BigRational, b: BigRational) -> Cut<BigRational> {
    let two = BigRational::from_integer(BigInt::from(2));
    let m = (a + b) / two;
    let closed = m >= BigRational::zero();
    Cut { at: m, closed }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cut<T> {
    pub at: T,
    /// Closed: `u <= at` stays below the cut. Open: `u < at`.
    pub closed: bool,
}

impl<T: PartialOrd> Cut<T> {
    pub fn admits(&self, u: &T) -> bool {
        if self.closed {
            u <= &self.at
        } else {
            u < &self.at
        }
    }
}

/// Piecewise-constant function: segment `i` holds inputs that pass cut `i`
/// but none before it; inputs past every cut land in the last segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction<T> {
    cuts: Vec<Cut<T>>,
    outputs: Vec<T>,
}

impl<T: PartialOrd + Clone> StepFunction<T> {
    /// Adjacent segments with equal outputs are merged.
    pub fn new(cuts: Vec<Cut<T>>, outputs: Vec<T>) -> Self {
        assert_eq!(cuts.len() + 1, outputs.len(), "one more output than cuts");
        let mut c: Vec<Cut<T>> = Vec::with_capacity(cuts.len());
        let mut o: Vec<T> = Vec::with_capacity(outputs.len());
        let mut outs = outputs.into_iter();
        o.push(outs.next().expect("at least one output"));
        for (cut, out) in cuts.into_iter().zip(outs) {
            if o.last() == Some(&out) {
                continue;
            }
            c.push(cut);
            o.push(out);
        }
        Self {
            cuts: c,
            outputs: o,
        }
    }

    pub fn cuts(&self) -> &[Cut<T>] {
        &self.cuts
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    pub fn segments(&self) -> usize {
        self.outputs.len()
    }

    pub fn segment(&self, u: &T) -> usize {
        self.cuts.partition_point(|c| !c.admits(u))
    }

    pub fn eval(&self, u: &T) -> &T {
        &self.outputs[self.segment(u)]
    }

    /// Smallest and largest output over all inputs in `[lo, hi]`.
    pub fn image(&self, lo: &T, hi: &T) -> (T, T) {
        let (a, b) = (self.segment(lo), self.segment(hi));
        let slice = &self.outputs[a..=b.max(a)];
        let mut min = &slice[0];
        let mut max = &slice[0];
        for v in slice {
            if v < min {
                min = v;
            }
            if v > max {
                max = v;
            }
        }
        (min.clone(), max.clone())
    }

    pub fn is_monotone(&self) -> bool {
        self.outputs.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn map<U: PartialOrd + Clone>(&self, mut f: impl FnMut(&T) -> U) -> StepFunction<U> {
        StepFunction::new(
            self.cuts
                .iter()
                .map(|c| Cut {
                    at: f(&c.at),
                    closed: c.closed,
                })
                .collect(),
            self.outputs.iter().map(f).collect(),
        )
    }
}

/// A table realized over raw fixed-point words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxpTable {
    pub format: FxpFormat,
    /// Snapped grid as `(input raw, output raw)`.
    pub grid: Vec<(i64, i64)>,
    /// All cuts closed.
    pub steps: StepFunction<i64>,
    /// Grid inputs outside the format range plus outputs that wrapped.
    pub wraps: usize,
    pub warnings: Vec<String>,
}

impl FxpTable {
    pub fn eval(&self, raw: i64) -> i64 {
        *self.steps.eval(&raw)
    }
}

/// Lower bound cut for the integer lattice equivalent to a real cut.
fn integer_cut(cut: &Cut<BigRational>) -> i128 {
    // u <= m  <=>  u <= floor(m);  u < m  <=>  u <= ceil(m) - 1
    let v = if cut.closed {
        cut.at.floor()
    } else {
        cut.at.ceil() - BigRational::from_integer(1.into())
    };
    let v = v.to_integer();
    v.to_i128().unwrap_or(if v.sign() == Sign::Minus {
        i128::MIN
    } else {
        i128::MAX
    })
}

/// Restrict an integer step function to `[min, max]`, dropping unreachable
/// segments.
fn clip_integer_steps(cuts: Vec<i128>, outputs: Vec<i64>, min: i64, max: i64) -> StepFunction<i64> {
    let mut kept_cuts = Vec::new();
    let mut kept_outputs = Vec::new();
    let mut lower = i128::MIN;
    for (i, out) in outputs.into_iter().enumerate() {
        let upper = cuts.get(i).copied().unwrap_or(i128::MAX);
        // segment covers (lower, upper]
        let reachable = upper >= min as i128 && lower < max as i128 && upper > lower;
        if reachable {
            if upper < max as i128 {
                kept_cuts.push(Cut {
                    at: upper as i64,
                    closed: true,
                });
            }
            kept_outputs.push(out);
            if upper >= max as i128 {
                break;
            }
        }
        lower = lower.max(upper);
    }
    StepFunction::new(kept_cuts, kept_outputs)
}

/// Realize a table in a fixed-point format. Grid inputs snap to the lattice
/// (nearest, ties toward zero); outputs convert with `mode`.
pub fn lut_to_fxp(table: &LookupTable, format: FxpFormat, mode: RoundingMode) -> Result<FxpTable> {
    let mut warnings = Vec::new();
    if table.epsilon < format.ulp() {
        warnings.push(format!(
            "ε = {} is below the format resolution {}; the format dominates the table error",
            table.epsilon,
            format.ulp()
        ));
    }
    let snap = RoundingMode::NearestTiesTowardZero;
    let mut wraps = 0usize;
    let mut cuts: Vec<i128> = Vec::new();
    let mut outputs: Vec<i64> = Vec::new();
    let mut grid = Vec::new();
    let last = table.pieces.len() - 1;
    for (pi, p) in table.pieces.iter().enumerate() {
        match p {
            TablePiece::Constant { value, .. } => {
                let (o, w) = format.quantize(*value, mode);
                wraps += w as usize;
                outputs.push(o);
            }
            TablePiece::Grid {
                inputs,
                outputs: outs,
                ..
            } => {
                // (raw input, output, distance to lattice point)
                let mut pts: Vec<(i64, f64, f64)> = Vec::new();
                for (&x, &y) in inputs.iter().zip(outs) {
                    let (r, w) = format.quantize(x, snap);
                    if w {
                        wraps += 1;
                        continue;
                    }
                    let d = (x - format.to_f64(r)).abs();
                    match pts.last_mut() {
                        Some(prev) if prev.0 == r => {
                            if d < prev.2 {
                                *prev = (r, y, d);
                            }
                        }
                        _ => pts.push((r, y, d)),
                    }
                }
                if pts.is_empty() {
                    warnings.push(format!("grid piece {pi} lies entirely outside {format}"));
                    // Keep the segment structure: reuse the exact value at the
                    // representable end nearest the piece.
                    let (lo, hi) = format.range();
                    let at = inputs[0].clamp(lo, hi);
                    let (o, w) = format.quantize(table.source.eval(at), mode);
                    wraps += w as usize;
                    outputs.push(o);
                } else {
                    for (i, &(r, y, _)) in pts.iter().enumerate() {
                        let (o, w) = format.quantize(y, mode);
                        wraps += w as usize;
                        outputs.push(o);
                        grid.push((r, o));
                        if let Some(&(next, _, _)) = pts.get(i + 1) {
                            let s = r as i128 + next as i128;
                            let c = if s >= 0 {
                                s.div_euclid(2)
                            } else {
                                (s - 1).div_euclid(2)
                            };
                            cuts.push(c);
                        }
                    }
                }
            }
        }
        if pi < last {
            let hi = BigRational::from_float(p.hi()).expect("finite boundary");
            let scaled =
                hi * BigRational::from_integer(BigInt::from(1u64) << format.frac_bits() as usize);
            cuts.push(integer_cut(&Cut {
                at: scaled,
                closed: true,
            }));
        }
    }
    // Piece boundaries can coincide with grid cuts after snapping.
    for i in 1..cuts.len() {
        if cuts[i] < cuts[i - 1] {
            cuts[i] = cuts[i - 1];
        }
    }
    if wraps > 0 {
        warnings.push(format!(
            "{wraps} table entries fall outside {format} and were dropped or wrapped"
        ));
    }
    let steps = clip_integer_steps(cuts, outputs, format.min_raw(), format.max_raw());
    Ok(FxpTable {
        format,
        grid,
        steps,
        wraps,
        warnings,
    })
}

/// Largest `f32` that is `<= x`; infinite past the finite range.
pub fn f32_round_down(x: &BigRational) -> f32 {
    let mut f = x.to_f64().unwrap_or(0.0) as f32;
    if f == f32::INFINITY {
        f = f32::MAX;
    }
    while f.is_finite() && &rational_of_f32(f) > x {
        f = f.next_down();
    }
    while f.next_up().is_finite() && &rational_of_f32(f.next_up()) <= x {
        f = f.next_up();
    }
    f
}

/// Smallest `f32` that is `>= x`; infinite past the finite range.
pub fn f32_round_up(x: &BigRational) -> f32 {
    -f32_round_down(&-x.clone())
}

pub fn rational_of_f32(f: f32) -> BigRational {
    BigRational::from_float(f).expect("finite f32")
}

/// Realize a table in single precision: outputs round to nearest even and
/// cuts become the equivalent `u <= c` tests on `f32` inputs.
pub fn lut_to_f32(table: &LookupTable) -> StepFunction<f32> {
    let steps = table.real_steps();
    let cuts = steps
        .cuts()
        .iter()
        .map(|c| {
            let at = if c.closed {
                f32_round_down(&c.at)
            } else {
                // largest f32 strictly below the cut
                let f = f32_round_down(&c.at);
                if rational_of_f32(f) == c.at {
                    f.next_down()
                } else {
                    f
                }
            };
            Cut { at, closed: true }
        })
        .collect();
    let outputs = steps
        .outputs()
        .iter()
        .map(|o| o.to_f64().unwrap_or(0.0) as f32)
        .collect();
    StepFunction::new(cuts, outputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid(u: f64) -> f64 {
        1.0 / (1.0 + (-u).exp())
    }

    #[test]
    fn sigmoid_default_pieces() {
        let spec = default_spec(&ActivationKind::Sigmoid, 20.0).unwrap();
        let lam: Vec<f64> = spec.pieces.iter().map(|p| p.lipschitz).collect();
        assert_eq!(lam, vec![0.0, 0.25, 0.0]);
        assert_eq!(
            (spec.pieces[0].lo, spec.pieces[0].hi),
            (f64::NEG_INFINITY, -20.0)
        );
        assert_eq!((spec.pieces[1].lo, spec.pieces[1].hi), (-20.0, 20.0));
        assert_eq!(
            (spec.pieces[2].lo, spec.pieces[2].hi),
            (20.0, f64::INFINITY)
        );
    }

    #[test]
    fn tanh_lipschitz_from_dense_derivative() {
        let spec = default_spec(&ActivationKind::Tanh, 6.0).unwrap();
        assert_eq!(spec.pieces[1].lipschitz, 1.0);
        assert_eq!(spec.pieces[1].length(), 12.0);
        // central differences over the middle piece never exceed the bound
        let h = 1e-6;
        let max = (0..=120_000)
            .map(|i| -6.0 + i as f64 * 1e-4)
            .map(|u| ((u + h).tanh() - (u - h).tanh()) / (2.0 * h))
            .fold(0.0, f64::max);
        assert!(max <= 1.0 + 1e-9 && max > 0.999, "{max}");
    }

    #[test]
    fn exact_activations_have_no_table() {
        let e = default_spec(&ActivationKind::Relu, 6.0).unwrap_err();
        assert!(e.to_string().contains("exact activation"));
    }

    #[test]
    fn sample_counts() {
        assert_eq!(required_samples(40.0, 0.25, 0.01).unwrap(), 1001);
        assert_eq!(required_samples(40.0, 0.25, 0.1).unwrap(), 101);
        assert_eq!(required_samples(40.0, 0.25, 1.0).unwrap(), 11);
        assert_eq!(required_samples(1e9, 0.0, 0.5).unwrap(), 1);
        assert_eq!(required_samples(12.0, 1.0, 0.1).unwrap(), 121);
        assert!(required_samples(1.0, 1.0, 0.0).is_err());
        assert!(required_samples(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn builds_sigmoid_tables() {
        let spec = default_spec(&ActivationKind::Sigmoid, 20.0).unwrap();
        let t = build_table(&spec, 0.01).unwrap();
        assert_eq!(t.sample_counts(), vec![1, 1001, 1]);
        match &t.pieces[1] {
            TablePiece::Grid { inputs, .. } => {
                assert_eq!(inputs[0], -20.0);
                assert_eq!(inputs[1000], 20.0);
                assert_eq!(inputs[500], 0.0);
            }
            _ => panic!("middle piece must be a grid"),
        }
        assert_eq!(
            build_table(&spec, 1.0).unwrap().sample_counts(),
            vec![1, 11, 1]
        );
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn evaluates_tails_grid_points_and_zero() {
        let t = build_table(&default_spec(&ActivationKind::Sigmoid, 20.0).unwrap(), 0.01).unwrap();
        let low = t.eval(-25.0);
        assert!((low - 2.061_153_618_190_204e-9).abs() < 1e-20, "{low}");
        assert_eq!(t.eval(0.0), 0.5);
        assert_eq!(t.eval(-19.96), sigmoid(-19.96));
        assert_eq!(t.eval(25.0), sigmoid(20.0));
    }

    #[test]
    fn ties_snap_toward_zero() {
        let spec = PiecewiseSpec::new(
            ActivationKind::Identity,
            vec![SpecPiece {
                lo: -2.0,
                hi: 2.0,
                lipschitz: 1.0,
                approximator: Approximator::UniformGrid,
            }],
        )
        .unwrap();
        let t = build_table(&spec, 1.0).unwrap(); // grid -2,-1,0,1,2
        assert_eq!(t.eval(0.5), 0.0);
        assert_eq!(t.eval(-0.5), 0.0);
        assert_eq!(t.eval(1.5), 1.0);
        assert_eq!(t.eval(-1.5), -1.0);
        assert_eq!(t.eval(1.5000001), 2.0);
        let steps = t.real_steps();
        for u in [-2.5, -1.5, -0.5, 0.5, 1.5, 0.25, 1.75] {
            let r = BigRational::from_float(u).unwrap();
            assert_eq!(steps.eval(&r).to_f64().unwrap(), t.eval(u), "u = {u}");
        }
    }

    #[test]
    fn degenerate_piece_is_exact() {
        let spec = PiecewiseSpec::new(
            ActivationKind::Sigmoid,
            vec![SpecPiece {
                lo: 1.0,
                hi: 1.0,
                lipschitz: 0.25,
                approximator: Approximator::UniformGrid,
            }],
        )
        .unwrap();
        let t = build_table(&spec, 0.01).unwrap();
        assert_eq!(t.sample_counts(), vec![1]);
        assert_eq!(t.eval(1.0), sigmoid(1.0));
    }

    #[test]
    fn unbounded_lipschitz_piece_is_rejected() {
        let spec = PiecewiseSpec::new(
            ActivationKind::Sigmoid,
            vec![SpecPiece {
                lo: f64::NEG_INFINITY,
                hi: 0.0,
                lipschitz: 0.25,
                approximator: Approximator::ConstantAt(0.0),
            }],
        )
        .unwrap();
        assert!(build_table(&spec, 0.1).is_err());
    }

    #[test]
    fn small_cutoff_warns_about_tails() {
        let t = build_table(&default_spec(&ActivationKind::Sigmoid, 2.0).unwrap(), 0.01).unwrap();
        assert!(!t.warnings.is_empty());
    }

    #[test]
    fn fxp_table_tracks_quantized_activation() {
        let t = build_table(&default_spec(&ActivationKind::Sigmoid, 6.0).unwrap(), 0.01).unwrap();
        let f = FxpFormat::new(4, 6).unwrap();
        let ft = lut_to_fxp(&t, f, RoundingMode::TruncateTowardNegInf).unwrap();
        assert!(ft.steps.is_monotone());
        for &(x, y) in &ft.grid {
            let (exact, _) = f.quantize(sigmoid(f.to_f64(x)), RoundingMode::TruncateTowardNegInf);
            assert!((y - exact).abs() <= 1, "x={x} y={y} exact={exact}");
        }
        // every raw word evaluates to the output of its nearest grid point
        for raw in f.min_raw()..=f.max_raw() {
            let i = nearest_raw(&ft.grid, raw);
            assert_eq!(ft.eval(raw), ft.grid[i].1, "raw {raw}");
        }
    }

    fn nearest_raw(grid: &[(i64, i64)], u: i64) -> usize {
        let mut best = 0;
        for (i, &(g, _)) in grid.iter().enumerate() {
            let (d, db) = ((g - u).abs(), (grid[best].0 - u).abs());
            if d < db || (d == db && g.abs() < grid[best].0.abs()) {
                best = i;
            }
        }
        best
    }

    #[test]
    fn fxp_identity_table_is_the_lattice() {
        let f = FxpFormat::new(3, 2).unwrap();
        let spec = PiecewiseSpec::new(
            ActivationKind::Identity,
            vec![SpecPiece {
                lo: -4.0,
                hi: 3.75,
                lipschitz: 1.0,
                approximator: Approximator::UniformGrid,
            }],
        )
        .unwrap();
        let t = build_table_with_step(&spec, 0.25).unwrap();
        let ft = lut_to_fxp(&t, f, RoundingMode::TruncateTowardNegInf).unwrap();
        for raw in f.min_raw()..=f.max_raw() {
            assert_eq!(ft.eval(raw), raw);
        }
        assert_eq!(ft.wraps, 0);
    }

    #[test]
    fn out_of_range_grid_is_reported() {
        let t = build_table(&default_spec(&ActivationKind::Sigmoid, 20.0).unwrap(), 0.1).unwrap();
        let f = FxpFormat::new(4, 4).unwrap();
        let ft = lut_to_fxp(&t, f, RoundingMode::TruncateTowardNegInf).unwrap();
        assert!(ft.wraps > 0);
        assert!(ft.warnings.iter().any(|w| w.contains("outside")));
        assert!(ft.steps.is_monotone());
    }

    #[test]
    fn f32_table_agrees_with_exact_steps() {
        let t = build_table(&default_spec(&ActivationKind::Tanh, 6.0).unwrap(), 0.05).unwrap();
        let exact = t.real_steps();
        let single = lut_to_f32(&t);
        for i in -7000..7000 {
            let u = i as f32 * 1e-3;
            let e = exact.eval(&rational_of_f32(u)).to_f64().unwrap() as f32;
            assert_eq!(*single.eval(&u), e, "u = {u}");
        }
    }

    #[test]
    fn step_function_image() {
        let s = StepFunction::new(
            vec![
                Cut {
                    at: 0,
                    closed: true,
                },
                Cut {
                    at: 5,
                    closed: true,
                },
            ],
            vec![-1, 3, 2],
        );
        assert_eq!(s.image(&-3, &-1), (-1, -1));
        assert_eq!(s.image(&-3, &6), (-1, 3));
        assert_eq!(s.image(&6, &9), (2, 2));
        assert!(!s.is_monotone());
    }
}
