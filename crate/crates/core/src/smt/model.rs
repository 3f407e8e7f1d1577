//! Solver models and their decoding into program inputs.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, Zero};

use super::emit::symbols;
use super::sexp::Sexp;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::ir::{run, SsaProgram, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelValue {
    Bool(bool),
    Bv { bits: u128, width: u32 },
    Real(BigRational),
    /// IEEE value with `eb` exponent bits and `sb` significand bits
    /// (hidden bit included), as raw fields.
    Fp { sign: bool, exp: u64, sig: u128, eb: u32, sb: u32 },
    /// NaN, which has no canonical field encoding.
    FpNaN { eb: u32, sb: u32 },
}

impl fmt::Display for ModelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelValue::Bool(b) => write!(f, "{b}"),
            ModelValue::Bv { bits, width } => write!(f, "#b{:0w$b}", bits, w = *width as usize),
            ModelValue::Real(r) => write!(f, "{r}"),
            ModelValue::Fp { sign, exp, sig, eb, sb } => {
                write!(f, "(fp {} {exp}/{eb} {sig}/{})", u8::from(*sign), sb - 1)
            }
            ModelValue::FpNaN { .. } => f.write_str("NaN"),
        }
    }
}

impl ModelValue {
    /// The value as a float32 bit pattern, if it is one.
    pub fn f32_bits(&self) -> Option<u32> {
        match *self {
            ModelValue::Fp { sign, exp, sig, eb: 8, sb: 24 } => {
                Some((u32::from(sign) << 31) | ((exp as u32) << 23) | (sig as u32 & 0x7f_ffff))
            }
            ModelValue::FpNaN { eb: 8, sb: 24 } => Some(f32::NAN.to_bits()),
            _ => None,
        }
    }
}

/// Constant interpretations from a `(get-model)` response.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model {
    pub values: BTreeMap<String, ModelValue>,
    /// Entries that are not constants of a supported sort, with the reason.
    /// Solvers also print auxiliary definitions, so these are not errors
    /// unless an input lands here.
    pub unreadable: BTreeMap<String, String>,
}

impl Model {
    pub fn from_sexp(s: &Sexp) -> Result<Model, String> {
        let items = s.list().ok_or("model is not a list")?;
        let items = match items.first().and_then(Sexp::atom) {
            Some("model") => &items[1..],
            _ => items,
        };
        let mut m = Model::default();
        for d in items {
            let parts = d.list().filter(|_| d.is_app("define-fun")).ok_or_else(|| format!("unexpected model entry {d}"))?;
            let [_, Sexp::Atom(name), Sexp::List(params), sort, value] = parts else {
                return Err(format!("malformed definition {d}"));
            };
            if !params.is_empty() {
                // functions of arguments never describe our constants
                continue;
            }
            match parse_value(sort, value) {
                Ok(v) => {
                    m.values.insert(name.clone(), v);
                }
                Err(e) => {
                    m.unreadable.insert(name.clone(), e);
                }
            }
        }
        Ok(m)
    }

    pub fn get(&self, name: &str) -> Option<&ModelValue> {
        self.values.get(name)
    }
}

fn parse_value(sort: &Sexp, v: &Sexp) -> Result<ModelValue, String> {
    let bad = || format!("cannot read {v} as {sort}");
    match sort_of(sort).ok_or_else(|| format!("unsupported sort {sort}"))? {
        SortKind::Bool => match v.atom() {
            Some("true") => Ok(ModelValue::Bool(true)),
            Some("false") => Ok(ModelValue::Bool(false)),
            _ => Err(bad()),
        },
        SortKind::Bv(width) => {
            let (bits, w) = bv_atom(v).ok_or_else(bad)?;
            if w != width {
                return Err(format!("{v} has {w} bits, sort {sort} has {width}"));
            }
            Ok(ModelValue::Bv { bits, width })
        }
        SortKind::Real => real_term(v).map(ModelValue::Real).ok_or_else(bad),
        SortKind::Fp(eb, sb) => fp_term(v, eb, sb).ok_or_else(bad),
    }
}

enum SortKind {
    Bool,
    Bv(u32),
    Real,
    Fp(u32, u32),
}

fn sort_of(s: &Sexp) -> Option<SortKind> {
    match s {
        Sexp::Atom(a) => match a.as_str() {
            "Bool" => Some(SortKind::Bool),
            "Real" | "Int" => Some(SortKind::Real),
            "Float16" => Some(SortKind::Fp(5, 11)),
            "Float32" => Some(SortKind::Fp(8, 24)),
            "Float64" => Some(SortKind::Fp(11, 53)),
            _ => None,
        },
        Sexp::List(v) => match v.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(k), Sexp::Atom(n)] if u == "_" && k == "BitVec" => {
                n.parse().ok().map(SortKind::Bv)
            }
            [Sexp::Atom(u), Sexp::Atom(k), Sexp::Atom(e), Sexp::Atom(s)] if u == "_" && k == "FloatingPoint" => {
                Some(SortKind::Fp(e.parse().ok()?, s.parse().ok()?))
            }
            _ => None,
        },
        Sexp::Str(_) => None,
    }
}

/// `#b...`, `#x...` or `(_ bvN w)` as (bits, width).
pub fn bv_atom(v: &Sexp) -> Option<(u128, u32)> {
    match v {
        Sexp::Atom(a) if a.starts_with("#b") => {
            let d = &a[2..];
            (d.len() <= 128 && !d.is_empty()).then(|| Some((u128::from_str_radix(d, 2).ok()?, d.len() as u32)))?
        }
        Sexp::Atom(a) if a.starts_with("#x") => {
            let d = &a[2..];
            (d.len() <= 32 && !d.is_empty()).then(|| Some((u128::from_str_radix(d, 16).ok()?, 4 * d.len() as u32)))?
        }
        Sexp::List(l) => match l.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(n), Sexp::Atom(w)] if u == "_" && n.starts_with("bv") => {
                let w: u32 = w.parse().ok()?;
                let bits: u128 = n[2..].parse().ok()?;
                (w <= 128 && (w == 128 || bits >> w == 0)).then_some((bits, w))
            }
            _ => None,
        },
        _ => None,
    }
}

/// Numerals, decimals, `(- t)` and `(/ t t)`.
pub fn real_term(v: &Sexp) -> Option<BigRational> {
    match v {
        Sexp::Atom(a) => {
            let (int, frac) = a.split_once('.').unwrap_or((a, ""));
            if int.is_empty() || !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
                return None;
            }
            let digits = format!("{int}{frac}");
            let n = BigInt::from_str_radix(&digits, 10).ok()?;
            Some(BigRational::new(n, BigInt::from(10u8).pow(frac.len() as u32)))
        }
        Sexp::List(l) => match l.as_slice() {
            [Sexp::Atom(op), a] if op == "-" => real_term(a).map(|r| -r),
            [Sexp::Atom(op), a, b] if op == "/" => {
                let d = real_term(b)?;
                (!d.is_zero()).then(|| real_term(a).map(|n| n / d))?
            }
            _ => None,
        },
        Sexp::Str(_) => None,
    }
}

fn fp_term(v: &Sexp, eb: u32, sb: u32) -> Option<ModelValue> {
    let l = v.list()?;
    match l {
        [Sexp::Atom(f), s, e, m] if f == "fp" => {
            let (s, sw) = bv_atom(s)?;
            let (e, ew) = bv_atom(e)?;
            let (m, mw) = bv_atom(m)?;
            (sw == 1 && ew == eb && mw + 1 == sb).then_some(ModelValue::Fp {
                sign: s == 1,
                exp: e as u64,
                sig: m,
                eb,
                sb,
            })
        }
        [Sexp::Atom(u), Sexp::Atom(k), Sexp::Atom(e), Sexp::Atom(s)] if u == "_" => {
            if e.parse::<u32>().ok()? != eb || s.parse::<u32>().ok()? != sb {
                return None;
            }
            let max_exp = (1u64 << eb) - 1;
            let (sign, exp) = match k.as_str() {
                "+zero" => (false, 0),
                "-zero" => (true, 0),
                "+oo" => (false, max_exp),
                "-oo" => (true, max_exp),
                "NaN" => return Some(ModelValue::FpNaN { eb, sb }),
                _ => return None,
            };
            Some(ModelValue::Fp { sign, exp, sig: 0, eb, sb })
        }
        _ => None,
    }
}

/// Input values of `p` from a model, by input index. Checks widths and
/// sorts, requires every input to be present and the region assumes and
/// interval facts to hold, so that an inconsistent solver answer is never
/// accepted silently.
pub fn decode_model(p: &SsaProgram, model: &Model) -> Result<Vec<Value>> {
    let names = symbols(p);
    let mut out = Vec::with_capacity(p.inputs.len());
    for &v in &p.inputs {
        let sym = names[v.index()].trim_matches('|');
        let mv = model.get(sym).ok_or_else(|| match model.unreadable.get(sym) {
            Some(why) => Error::Solver(format!("input {sym}: {why}")),
            None => Error::Solver(format!("model has no value for input {sym}")),
        })?;
        let value = match (p.domain, mv) {
            (Domain::Fixed { format, .. }, ModelValue::Bv { bits, width }) => {
                if *width != format.width() {
                    return Err(Error::Solver(format!("{sym} = {mv} is not a {}-bit word", format.width())));
                }
                Value::Fixed(format.wrap(*bits as i128))
            }
            (Domain::Real, ModelValue::Real(r)) => Value::Real(r.clone()),
            (Domain::Float32, m) => Value::f32(f32::from_bits(
                m.f32_bits().ok_or_else(|| Error::Solver(format!("{sym} = {mv} is not a float32")))?,
            )),
            _ => return Err(Error::Solver(format!("{sym} = {mv} does not belong to {}", p.domain))),
        };
        out.push(value);
    }
    let val = run(p, &out)?;
    if !val.assumes_hold() {
        return Err(Error::Solver("model lies outside the input region".into()));
    }
    if !val.facts.iter().all(|&f| f) {
        return Err(Error::Solver("model violates an interval fact".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smt::sexp::parse_all;

    fn one(s: &str) -> Sexp {
        parse_all(s).unwrap().remove(0)
    }

    #[test]
    fn bit_vector_literals() {
        assert_eq!(bv_atom(&one("#b00101111")), Some((47, 8)));
        assert_eq!(bv_atom(&one("#x2f")), Some((47, 8)));
        assert_eq!(bv_atom(&one("(_ bv47 8)")), Some((47, 8)));
        assert_eq!(bv_atom(&one("(_ bv256 8)")), None);
    }

    #[test]
    fn real_terms() {
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        assert_eq!(real_term(&one("2.5")), Some(r(5, 2)));
        assert_eq!(real_term(&one("(- (/ 1.0 4.0))")), Some(r(-1, 4)));
        assert_eq!(real_term(&one("(/ (- 3) 4)")), Some(r(-3, 4)));
        assert_eq!(real_term(&one("(/ 1 0)")), None);
    }

    #[test]
    fn float_values() {
        let m = Model::from_sexp(&one(
            "((define-fun a () Float32 (fp #b1 #x80 #b10000000000000000000000))
              (define-fun b () (_ FloatingPoint 8 24) (_ -zero 8 24))
              (define-fun c () Float32 (_ NaN 8 24))
              (define-fun d () Float32 (_ +oo 8 24)))",
        ))
        .unwrap();
        let f = |k: &str| f32::from_bits(m.get(k).unwrap().f32_bits().unwrap());
        assert_eq!(f("a"), -3.0);
        assert_eq!(f("b").to_bits(), (-0.0f32).to_bits());
        assert!(f("c").is_nan());
        assert_eq!(f("d"), f32::INFINITY);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let m = Model::from_sexp(&one("(model (define-fun x () (_ BitVec 4) #b00101111))")).unwrap();
        assert!(m.get("x").is_none());
        assert!(m.unreadable["x"].contains("8 bits"), "{:?}", m.unreadable);
    }
}
