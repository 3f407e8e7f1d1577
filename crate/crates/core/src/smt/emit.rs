//! SMT-LIB 2 emission.
//!
//! Fixed-point programs become QF_BV over `k + l` bit words, exact real
//! programs QF_LRA, float32 programs QF_FP with round-nearest-even. The
//! script asserts the input region, the interval facts and the negation of
//! the property, so `sat` means a counterexample exists.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fixed::{FxpFormat, RoundingMode};
use crate::ir::{ExprDag, Node, NodeId, Rhs, SsaProgram, Value, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logic {
    QfBv,
    QfLra,
    QfFp,
}

impl Logic {
    pub fn for_domain(domain: Domain) -> Logic {
        match domain {
            Domain::Fixed { .. } => Logic::QfBv,
            Domain::Real => Logic::QfLra,
            Domain::Float32 => Logic::QfFp,
        }
    }
}

impl fmt::Display for Logic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Logic::QfBv => "QF_BV",
            Logic::QfLra => "QF_LRA",
            Logic::QfFp => "QF_FP",
        })
    }
}

/// SMT symbols for the program's variables: the SSA name when it is a
/// plain symbol and unique, quoted or suffixed otherwise.
pub fn symbols(p: &SsaProgram) -> Vec<String> {
    let mut seen = BTreeSet::new();
    p.vars
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut s = v.name.clone();
            if !seen.insert(s.clone()) {
                s = format!("{s}!{i}");
                seen.insert(s.clone());
            }
            quote(&s)
        })
        .collect()
}

fn quote(s: &str) -> String {
    let simple = !s.is_empty()
        && !s.starts_with(|c: char| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_alphanumeric() || "~!@$%^&*_-+=<>.?/".contains(c));
    if simple {
        s.to_string()
    } else {
        format!("|{}|", s.replace(['|', '\\'], "_"))
    }
}

fn sort(domain: Domain) -> String {
    match domain {
        Domain::Fixed { format, .. } => format!("(_ BitVec {})", format.width()),
        Domain::Real => "Real".into(),
        Domain::Float32 => "Float32".into(),
    }
}

/// Emit the counterexample query for `p`. Deterministic: the same program
/// always yields the same bytes.
pub fn emit_smtlib(p: &SsaProgram) -> Result<String> {
    let logic = Logic::for_domain(p.domain);
    let names = symbols(p);
    let e = Emitter { dag: &p.dag, domain: p.domain, names: &names };
    let mut s = String::new();
    let _ = writeln!(s, "; {} program, {} assignments", p.domain, p.assignments.len());
    let _ = writeln!(s, "(set-option :produce-models true)");
    let _ = writeln!(s, "(set-logic {logic})");
    let sort = sort(p.domain);
    for a in &p.assignments {
        let name = &names[a.var.index()];
        match a.rhs {
            Rhs::Nondet(_) => {
                let _ = writeln!(s, "(declare-const {name} {sort})");
            }
            Rhs::Expr(root) => {
                let _ = writeln!(s, "(define-fun {name} () {sort} {})", e.term(root)?);
            }
        }
    }
    for &r in p.assumes.iter().chain(&p.facts) {
        let _ = writeln!(s, "(assert {})", e.term(r)?);
    }
    let props = p.asserts.iter().map(|&r| e.term(r)).collect::<Result<Vec<_>>>()?;
    let conj = match props.as_slice() {
        [] => "true".to_string(),
        [one] => one.clone(),
        many => format!("(and {})", many.join(" ")),
    };
    let _ = writeln!(s, "(assert (not {conj}))");
    let _ = writeln!(s, "(check-sat)");
    let _ = writeln!(s, "(get-model)");
    Ok(s)
}

struct Emitter<'a> {
    dag: &'a ExprDag,
    domain: Domain,
    names: &'a [String],
}

impl Emitter<'_> {
    /// Render `root`, let-binding compound subterms that occur more than
    /// once so the text stays linear in the DAG size.
    fn term(&self, root: NodeId) -> Result<String> {
        let order = self.dag.reachable([root]);
        let mut uses: HashMap<NodeId, usize> = HashMap::new();
        for &id in &order {
            for c in self.dag.node(id).children() {
                *uses.entry(c).or_default() += 1;
            }
        }
        let shared: HashSet<NodeId> = order
            .iter()
            .copied()
            .filter(|id| *id != root && uses.get(id).copied().unwrap_or(0) > 1 && !self.dag.node(*id).children().is_empty())
            .collect();
        let mut text: HashMap<NodeId, String> = HashMap::new();
        let mut lets = Vec::new();
        for &id in &order {
            let t = self.node(id, &text)?;
            if shared.contains(&id) {
                let sym = format!("?t{}", id.0);
                lets.push(format!("(let (({sym} {t}))"));
                text.insert(id, sym);
            } else {
                text.insert(id, t);
            }
        }
        let mut out = String::new();
        for l in &lets {
            out.push_str(l);
            out.push(' ');
        }
        out.push_str(&text[&root]);
        out.push_str(&")".repeat(lets.len()));
        Ok(out)
    }

    fn node(&self, id: NodeId, text: &HashMap<NodeId, String>) -> Result<String> {
        let t = |c: &NodeId| text[c].as_str();
        let d = self.domain;
        Ok(match self.dag.node(id) {
            Node::Const(v) => self.constant(v)?,
            Node::Bool(b) => b.to_string(),
            Node::Var(v) => self.var(*v),
            Node::Add(a, b) => match d {
                Domain::Fixed { .. } => format!("(bvadd {} {})", t(a), t(b)),
                Domain::Real => format!("(+ {} {})", t(a), t(b)),
                Domain::Float32 => format!("(fp.add RNE {} {})", t(a), t(b)),
            },
            Node::Mul(a, b) => match d {
                Domain::Fixed { format, rounding } => fixed_mul(format, rounding, t(a), t(b)),
                Domain::Real => {
                    let konst = |n: &NodeId| matches!(self.dag.node(*n), Node::Const(_));
                    if !konst(a) && !konst(b) {
                        return Err(Error::Encode("product of two variables is not linear real arithmetic".into()));
                    }
                    format!("(* {} {})", t(a), t(b))
                }
                Domain::Float32 => format!("(fp.mul RNE {} {})", t(a), t(b)),
            },
            Node::Ite(g, a, b) => format!("(ite {} {} {})", t(g), t(a), t(b)),
            Node::Cmp(op, a, b) => {
                use crate::ir::CmpOp::*;
                let f = match (d, op) {
                    (Domain::Fixed { .. }, Lt) => "bvslt",
                    (Domain::Fixed { .. }, Le) => "bvsle",
                    (Domain::Real, Lt) => "<",
                    (Domain::Real, Le) => "<=",
                    (Domain::Float32, Lt) => "fp.lt",
                    (Domain::Float32, Le) => "fp.leq",
                    (Domain::Float32, Eq) => "fp.eq",
                    (_, Eq) => "=",
                };
                format!("({f} {} {})", t(a), t(b))
            }
            Node::And(v) => junction("and", "true", v.iter().map(t)),
            Node::Or(v) => junction("or", "false", v.iter().map(t)),
            Node::Not(a) => format!("(not {})", t(a)),
            Node::Xor(a, b) => format!("(xor {} {})", t(a), t(b)),
        })
    }

    fn var(&self, v: VarId) -> String {
        self.names[v.index()].clone()
    }

    fn constant(&self, v: &Value) -> Result<String> {
        match (self.domain, v) {
            (Domain::Fixed { format, .. }, Value::Fixed(raw)) => Ok(bv_literal(*raw as i128, format.width())),
            (Domain::Real, Value::Real(r)) => Ok(real_literal(r)),
            (Domain::Float32, Value::F32(bits)) => Ok(fp_literal(*bits)),
            _ => Err(Error::Encode(format!("constant {v} does not belong to {}", self.domain))),
        }
    }
}

fn junction<'a>(op: &str, unit: &str, parts: impl Iterator<Item = &'a str>) -> String {
    let v: Vec<&str> = parts.collect();
    match v.as_slice() {
        [] => unit.to_string(),
        [one] => one.to_string(),
        many => format!("({op} {})", many.join(" ")),
    }
}

/// Two's-complement word of `raw` as a binary literal.
pub fn bv_literal(raw: i128, width: u32) -> String {
    let bits = (raw as u128) & if width == 128 { u128::MAX } else { (1u128 << width) - 1 };
    format!("#b{:0w$b}", bits, w = width as usize)
}

/// `(/ n d)` with explicit decimal points, negated with `(- ...)`.
pub fn real_literal(r: &BigRational) -> String {
    let mag = |n: &BigInt| format!("{n}.0");
    let body = if r.is_integer() {
        mag(&r.numer().abs())
    } else {
        format!("(/ {} {})", mag(&r.numer().abs()), mag(r.denom()))
    };
    if r.is_negative() && !r.is_zero() {
        format!("(- {body})")
    } else {
        body
    }
}

pub fn fp_literal(bits: u32) -> String {
    format!("(fp #b{:01b} #b{:08b} #b{:023b})", bits >> 31, (bits >> 23) & 0xff, bits & 0x7f_ffff)
}

/// Product of two `w`-bit words: full `2w`-bit signed product, rounded
/// shift by `l`, low `w` bits kept (wrap-around).
pub fn fixed_mul(format: FxpFormat, rounding: RoundingMode, a: &str, b: &str) -> String {
    let w = format.width();
    let l = format.frac_bits();
    let prod = format!("(bvmul ((_ sign_extend {w}) {a}) ((_ sign_extend {w}) {b}))");
    let rounded = match rounding {
        _ if l == 0 => prod,
        RoundingMode::TruncateTowardNegInf => prod,
        RoundingMode::NearestTiesTowardZero => {
            let half = 1i128 << (l - 1);
            let wide = 2 * w;
            format!(
                "(let ((?p {prod})) (bvadd ?p (ite (bvsge ?p {}) {} {})))",
                bv_literal(0, wide),
                bv_literal(half - 1, wide),
                bv_literal(half, wide)
            )
        }
    };
    format!("((_ extract {} {l}) {rounded})", w + l - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals() {
        assert_eq!(bv_literal(47, 8), "#b00101111");
        assert_eq!(bv_literal(-1, 4), "#b1111");
        assert_eq!(bv_literal(i64::MIN as i128, 64), format!("#b1{}", "0".repeat(63)));
        assert_eq!(bv_literal(-1, 128), format!("#b{}", "1".repeat(128)));
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        assert_eq!(real_literal(&r(-3, 4)), "(- (/ 3.0 4.0))");
        assert_eq!(real_literal(&r(5, 1)), "5.0");
        assert_eq!(real_literal(&r(0, 1)), "0.0");
        assert_eq!(fp_literal(1.0f32.to_bits()), "(fp #b0 #b01111111 #b00000000000000000000000)");
    }

    #[test]
    fn quoting() {
        assert_eq!(quote("a1"), "a1");
        assert_eq!(quote("x 1"), "|x 1|");
        assert_eq!(quote("1x"), "|1x|");
    }
}
