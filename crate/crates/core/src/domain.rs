//! Numeric domains a network can be verified in, and the per-domain
//! arithmetic shared by the concrete executor and the interval analysis.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{FxpFormat, FxpValue, RoundingMode};
use crate::lut::{
    build_table, build_table_with_step, default_spec, f32_round_down, f32_round_up, lut_to_f32,
    lut_to_fxp, rational_of_f32, LookupTable, StepFunction,
};
use crate::network::{ActivationKind, Network, PiecewiseLinear};
use crate::property::Comparison;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Exact rational arithmetic.
    Real,
    /// Two's-complement fixed point with wrap-around.
    Fixed {
        format: FxpFormat,
        rounding: RoundingMode,
    },
    /// IEEE binary32, round to nearest even.
    Float32,
}

impl Domain {
    pub fn fixed(format: FxpFormat, rounding: RoundingMode) -> Self {
        Domain::Fixed { format, rounding }
    }

    /// Whether `+` may be reassociated without changing results.
    pub fn add_is_associative(&self) -> bool {
        !matches!(self, Domain::Float32)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Real => f.write_str("real"),
            Domain::Fixed { format, rounding } => write!(f, "{format}/{rounding}"),
            Domain::Float32 => f.write_str("float32"),
        }
    }
}

/// A concrete value in some domain, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scalar {
    Real(#[serde(with = "rational_text")] BigRational),
    Fixed(FxpValue),
    F32(f32),
}

impl Scalar {
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Real(r) => r.to_f64().unwrap_or(f64::NAN),
            Scalar::Fixed(v) => v.to_f64(),
            Scalar::F32(v) => *v as f64,
        }
    }

    /// Raw word for fixed-point values.
    pub fn raw(&self) -> Option<i64> {
        match self {
            Scalar::Fixed(v) => Some(v.raw()),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Real(r) => write!(f, "{}", r.to_f64().unwrap_or(f64::NAN)),
            Scalar::Fixed(v) => write!(f, "{} [{}]", v.to_f64(), v.bits_string()),
            Scalar::F32(v) => write!(f, "{v}"),
        }
    }
}

pub(crate) mod rational_text {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

pub fn two_pow(n: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(1u8) << n as usize)
}

/// Round a rational to the nearest `f32`, ties to even. `None` on overflow.
pub fn f32_nearest(x: &BigRational) -> Option<f32> {
    let max = rational_of_f32(f32::MAX);
    if x.abs() > max {
        // Anything at least half an ulp past MAX rounds to infinity.
        let half_ulp = rational(2f64.powi(103));
        return if x.abs() < max + half_ulp {
            Some(f32::MAX.copysign(x.to_f64().unwrap_or(1.0) as f32))
        } else {
            None
        };
    }
    let d = f32_round_down(x);
    let rd = rational_of_f32(d);
    if &rd == x {
        return Some(d);
    }
    let u = d.next_up();
    let ru = rational_of_f32(u);
    let (dd, du) = (x - &rd, &ru - x);
    Some(if dd < du {
        d
    } else if du < dd {
        u
    } else if d.to_bits() & 1 == 0 {
        d
    } else {
        u
    })
}

/// Activation realized in a domain.
#[derive(Debug, Clone)]
pub enum DomainActivation<V> {
    Identity,
    Relu,
    Table(StepFunction<V>),
    /// Piece `i` applies when exactly `i` cuts satisfy `u >= cut`.
    Piecewise {
        cuts: Vec<V>,
        pieces: Vec<(V, V)>,
    },
}

/// Arithmetic of one domain over its value type.
pub trait Arith {
    type V: Clone + PartialOrd + fmt::Debug;

    fn domain(&self) -> Domain;
    /// Convert a real constant or input; the flag reports overflow.
    fn convert(&self, x: f64) -> (Self::V, bool);
    fn add(&self, a: &Self::V, b: &Self::V) -> (Self::V, bool);
    fn mul(&self, a: &Self::V, b: &Self::V) -> (Self::V, bool);
    fn zero(&self) -> Self::V;
    /// `v op c` on the exact real value of `v`.
    fn cmp_const(&self, v: &Self::V, op: Comparison, c: f64) -> bool;
    /// Smallest domain value `>= x`, used for piecewise-linear cuts.
    fn ceil_const(&self, x: f64) -> Self::V;
    fn to_scalar(&self, v: &Self::V) -> Scalar;
    fn to_rational(&self, v: &Self::V) -> BigRational;
}

#[derive(Debug, Clone, Copy)]
pub struct FixedArith {
    pub format: FxpFormat,
    pub rounding: RoundingMode,
}

impl Arith for FixedArith {
    type V = i64;

    fn domain(&self) -> Domain {
        Domain::fixed(self.format, self.rounding)
    }

    fn convert(&self, x: f64) -> (i64, bool) {
        self.format.quantize(x, self.rounding)
    }

    fn add(&self, a: &i64, b: &i64) -> (i64, bool) {
        self.format.add_raw(*a, *b)
    }

    fn mul(&self, a: &i64, b: &i64) -> (i64, bool) {
        self.format.mul_raw(*a, *b, self.rounding)
    }

    fn zero(&self) -> i64 {
        0
    }

    fn cmp_const(&self, v: &i64, op: Comparison, c: f64) -> bool {
        raw_cmp_const(self.format, *v, op, c)
    }

    fn ceil_const(&self, x: f64) -> i64 {
        let c = self.format.ceil_raw(x);
        c.clamp(
            self.format.min_raw() as i128,
            self.format.max_raw() as i128 + 1,
        )
        .min(i64::MAX as i128) as i64
    }

    fn to_scalar(&self, v: &i64) -> Scalar {
        Scalar::Fixed(FxpValue::from_raw(*v, self.format))
    }

    fn to_rational(&self, v: &i64) -> BigRational {
        self.format.to_rational(*v)
    }
}

/// `raw * 2^-l  op  c`, decided exactly.
pub fn raw_cmp_const(format: FxpFormat, raw: i64, op: Comparison, c: f64) -> bool {
    let r = raw as i128;
    match op {
        Comparison::Lt => r < format.ceil_raw(c),
        Comparison::Le => r <= format.floor_raw(c),
        Comparison::Gt => r > format.floor_raw(c),
        Comparison::Ge => r >= format.ceil_raw(c),
        Comparison::Eq => {
            let f = format.floor_raw(c);
            f == format.ceil_raw(c) && r == f
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExactArith;

impl Arith for ExactArith {
    type V = BigRational;

    fn domain(&self) -> Domain {
        Domain::Real
    }

    fn convert(&self, x: f64) -> (BigRational, bool) {
        match BigRational::from_float(x) {
            Some(r) => (r, false),
            None => (BigRational::zero(), true),
        }
    }

    fn add(&self, a: &BigRational, b: &BigRational) -> (BigRational, bool) {
        (a + b, false)
    }

    fn mul(&self, a: &BigRational, b: &BigRational) -> (BigRational, bool) {
        (a * b, false)
    }

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }

    fn cmp_const(&self, v: &BigRational, op: Comparison, c: f64) -> bool {
        op.holds(v, &rational(c))
    }

    fn ceil_const(&self, x: f64) -> BigRational {
        rational(x)
    }

    fn to_scalar(&self, v: &BigRational) -> Scalar {
        Scalar::Real(v.clone())
    }

    fn to_rational(&self, v: &BigRational) -> BigRational {
        v.clone()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct F32Arith;

impl Arith for F32Arith {
    type V = f32;

    fn domain(&self) -> Domain {
        Domain::Float32
    }

    fn convert(&self, x: f64) -> (f32, bool) {
        let v = x as f32;
        (v, !v.is_finite())
    }

    fn add(&self, a: &f32, b: &f32) -> (f32, bool) {
        let v = a + b;
        (v, !v.is_finite())
    }

    fn mul(&self, a: &f32, b: &f32) -> (f32, bool) {
        let v = a * b;
        (v, !v.is_finite())
    }

    fn zero(&self) -> f32 {
        0.0
    }

    fn cmp_const(&self, v: &f32, op: Comparison, c: f64) -> bool {
        // f32 -> f64 is exact
        op.holds(&(*v as f64), &c)
    }

    fn ceil_const(&self, x: f64) -> f32 {
        f32_round_up(&rational(x))
    }

    fn to_scalar(&self, v: &f32) -> Scalar {
        Scalar::F32(*v)
    }

    fn to_rational(&self, v: &f32) -> BigRational {
        BigRational::from_float(*v).unwrap_or_else(BigRational::zero)
    }
}

/// How tabled activations are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub epsilon: f64,
    pub cutoff: f64,
    /// Fixed grid spacing; overrides the error budget when set.
    pub grid_step: Option<f64>,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            cutoff: 6.0,
            grid_step: None,
        }
    }
}

/// Lookup tables for every tabled activation of a network.
#[derive(Debug, Clone, Default)]
pub struct ActivationTables {
    tables: Vec<LookupTable>,
}

impl ActivationTables {
    pub fn for_network(net: &Network, cfg: &TableConfig) -> Result<Self> {
        let mut tables = Vec::new();
        for act in net
            .activations()
            .into_iter()
            .filter(ActivationKind::is_tabled)
        {
            let spec = default_spec(&act, cfg.cutoff)?;
            let t = match cfg.grid_step {
                Some(step) => build_table_with_step(&spec, step)?,
                None => build_table(&spec, cfg.epsilon)?,
            };
            tables.push(t);
        }
        Ok(Self { tables })
    }

    pub fn from_tables(tables: Vec<LookupTable>) -> Self {
        Self { tables }
    }

    pub fn get(&self, act: &ActivationKind) -> Option<&LookupTable> {
        self.tables.iter().find(|t| &t.source == act)
    }

    pub fn tables(&self) -> &[LookupTable] {
        &self.tables
    }

    pub fn warnings(&self) -> Vec<String> {
        self.tables
            .iter()
            .flat_map(|t| t.warnings.iter().cloned())
            .collect()
    }
}

/// Realize an activation in a domain.
pub fn realize_activation<A: Arith + ?Sized>(
    arith: &A,
    act: &ActivationKind,
    tables: &ActivationTables,
    realize_table: &dyn Fn(&LookupTable) -> Result<StepFunction<A::V>>,
) -> Result<DomainActivation<A::V>> {
    Ok(match act {
        ActivationKind::Identity => DomainActivation::Identity,
        ActivationKind::Relu => DomainActivation::Relu,
        ActivationKind::Sigmoid | ActivationKind::Tanh => {
            let t = tables
                .get(act)
                .ok_or_else(|| Error::Table(format!("no lookup table for {act}")))?;
            DomainActivation::Table(realize_table(t)?)
        }
        ActivationKind::PiecewiseLinear(p) => realize_pwl(arith, p),
    })
}

fn realize_pwl<A: Arith + ?Sized>(arith: &A, p: &PiecewiseLinear) -> DomainActivation<A::V> {
    let cuts = p.cuts().iter().map(|&c| arith.ceil_const(c)).collect();
    let pieces = p
        .pieces()
        .iter()
        .map(|q| (arith.convert(q.slope).0, arith.convert(q.intercept).0))
        .collect();
    DomainActivation::Piecewise { cuts, pieces }
}

/// Table realizers per domain.
pub fn fixed_table(
    format: FxpFormat,
    rounding: RoundingMode,
) -> impl Fn(&LookupTable) -> Result<StepFunction<i64>> {
    move |t| Ok(lut_to_fxp(t, format, rounding)?.steps)
}

pub fn exact_table(t: &LookupTable) -> Result<StepFunction<BigRational>> {
    Ok(t.real_steps())
}

pub fn f32_table(t: &LookupTable) -> Result<StepFunction<f32>> {
    Ok(lut_to_f32(t))
}

/// Apply a realized activation; the flag reports overflow.
pub fn apply_activation<A: Arith + ?Sized>(
    arith: &A,
    act: &DomainActivation<A::V>,
    u: &A::V,
) -> (A::V, bool) {
    match act {
        DomainActivation::Identity => (u.clone(), false),
        DomainActivation::Relu => {
            let z = arith.zero();
            if u < &z {
                (z, false)
            } else {
                (u.clone(), false)
            }
        }
        DomainActivation::Table(steps) => (steps.eval(u).clone(), false),
        DomainActivation::Piecewise { cuts, pieces } => {
            let i = cuts.iter().take_while(|c| u >= *c).count();
            let (slope, intercept) = &pieces[i];
            let (p, w1) = arith.mul(slope, u);
            let (v, w2) = arith.add(&p, intercept);
            (v, w1 || w2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_rounding_ties_to_even() {
        let one = rational(1.0);
        let ulp = rational(f32::EPSILON as f64);
        let two = BigRational::from_integer(2.into());
        // exactly halfway between 1 and 1 + ulp: rounds to 1 (even)
        assert_eq!(f32_nearest(&(&one + &ulp / &two)), Some(1.0));
        // halfway between 1 + ulp and 1 + 2ulp: rounds up to even
        let x = &one + &ulp + &ulp / &two;
        assert_eq!(f32_nearest(&x), Some(1.0 + 2.0 * f32::EPSILON));
        assert_eq!(f32_nearest(&rational(0.1)), Some(0.1f32));
        assert_eq!(f32_nearest(&rational(1e39)), None);
        assert_eq!(f32_nearest(&rational(-1e39)), None);
    }

    #[test]
    fn fixed_constant_comparisons_are_exact() {
        let f = FxpFormat::new(4, 6).unwrap();
        assert!(!raw_cmp_const(f, 172, Comparison::Ge, 2.7));
        assert!(raw_cmp_const(f, 173, Comparison::Ge, 2.7));
        assert!(raw_cmp_const(f, 172, Comparison::Lt, 2.7));
        assert!(raw_cmp_const(f, 160, Comparison::Eq, 2.5));
        assert!(!raw_cmp_const(f, 172, Comparison::Eq, 2.7));
        assert!(raw_cmp_const(f, 511, Comparison::Lt, 1e9));
    }

    #[test]
    fn pwl_realized_in_every_domain() {
        let p = PiecewiseLinear::new(vec![(-1.0, -1.0), (1.0, 1.0), (2.0, 1.0)]).unwrap();
        let act = ActivationKind::PiecewiseLinear(p);
        let tables = ActivationTables::default();
        let fx = FixedArith {
            format: FxpFormat::new(4, 4).unwrap(),
            rounding: RoundingMode::TruncateTowardNegInf,
        };
        let a =
            realize_activation(&fx, &act, &tables, &fixed_table(fx.format, fx.rounding)).unwrap();
        assert_eq!(apply_activation(&fx, &a, &8).0, 8);
        assert_eq!(apply_activation(&fx, &a, &48).0, 16);
        let ex = ExactArith;
        let a = realize_activation(&ex, &act, &tables, &exact_table).unwrap();
        assert_eq!(apply_activation(&ex, &a, &rational(-3.0)).0, rational(-3.0));
        assert_eq!(apply_activation(&ex, &a, &rational(5.0)).0, rational(1.0));
        let sig = realize_activation(&ex, &ActivationKind::Sigmoid, &tables, &exact_table);
        assert!(sig.is_err());
    }
}
