//! Safety properties: an input hyperrectangle (assume) and a boolean
//! condition over the outputs (assert).

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::error::{Error, Result};
use crate::network::Network;

/// Closed per-dimension box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperRect {
    bounds: Vec<(f64, f64)>,
}

impl HyperRect {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Property(format!("input {i}: bounds must be finite")));
            }
            if lo > hi {
                return Err(Error::Property(format!(
                    "input {i}: lo {lo} exceeds hi {hi}"
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// The infinity-norm ball of radius `radius` around `center`.
    pub fn linf_ball(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(center.iter().map(|&c| (c - radius, c + radius)).collect())
    }

    pub fn singleton(point: &[f64]) -> Result<Self> {
        Self::new(point.iter().map(|&c| (c, c)).collect())
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|(lo, hi)| lo + (hi - lo) / 2.0)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Eq => "==",
        }
    }

    /// Apply to any ordered pair.
    pub fn holds<T: PartialOrd + ?Sized>(self, a: &T, b: &T) -> bool {
        match self {
            Comparison::Lt => a < b,
            Comparison::Le => a <= b,
            Comparison::Gt => a > b,
            Comparison::Ge => a >= b,
            Comparison::Eq => a == b,
        }
    }

    /// The comparison with its operands swapped: `a op b` iff `b op' a`.
    pub fn flipped(self) -> Self {
        match self {
            Comparison::Lt => Comparison::Gt,
            Comparison::Le => Comparison::Ge,
            Comparison::Gt => Comparison::Lt,
            Comparison::Ge => Comparison::Le,
            Comparison::Eq => Comparison::Eq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Output(usize),
    Const(f64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Output(i) => write!(f, "y_{i}"),
            Operand::Const(c) => write!(f, "{c:?}"),
        }
    }
}

/// Boolean condition over the output vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutputAssertion {
    True,
    False,
    Compare {
        lhs: Operand,
        op: Comparison,
        rhs: Operand,
    },
    And(Vec<OutputAssertion>),
    Or(Vec<OutputAssertion>),
    Not(Box<OutputAssertion>),
    /// `y_i > y_j` for every `j != i`.
    RobustClass(usize),
}

impl OutputAssertion {
    pub fn compare(lhs: Operand, op: Comparison, rhs: Operand) -> Self {
        OutputAssertion::Compare { lhs, op, rhs }
    }

    /// Replace `RobustClass` by its conjunction for an `n`-output network.
    pub fn expand(&self, n: usize) -> OutputAssertion {
        match self {
            OutputAssertion::RobustClass(i) => OutputAssertion::And(
                (0..n)
                    .filter(|j| j != i)
                    .map(|j| {
                        OutputAssertion::compare(
                            Operand::Output(*i),
                            Comparison::Gt,
                            Operand::Output(j),
                        )
                    })
                    .collect(),
            ),
            OutputAssertion::And(v) => {
                OutputAssertion::And(v.iter().map(|a| a.expand(n)).collect())
            }
            OutputAssertion::Or(v) => OutputAssertion::Or(v.iter().map(|a| a.expand(n)).collect()),
            OutputAssertion::Not(a) => OutputAssertion::Not(Box::new(a.expand(n))),
            other => other.clone(),
        }
    }

    /// Largest output index mentioned, if any.
    pub fn max_output(&self) -> Option<usize> {
        let idx = |o: &Operand| match o {
            Operand::Output(i) => Some(*i),
            Operand::Const(_) => None,
        };
        match self {
            OutputAssertion::True | OutputAssertion::False => None,
            OutputAssertion::Compare { lhs, rhs, .. } => idx(lhs).max(idx(rhs)),
            OutputAssertion::And(v) | OutputAssertion::Or(v) => {
                v.iter().filter_map(Self::max_output).max()
            }
            OutputAssertion::Not(a) => a.max_output(),
            OutputAssertion::RobustClass(i) => Some(*i),
        }
    }

    /// Evaluate given a comparison oracle for atoms. `n` is the output count.
    pub fn eval_with(
        &self,
        n: usize,
        atom: &mut impl FnMut(&Operand, Comparison, &Operand) -> bool,
    ) -> bool {
        match self {
            OutputAssertion::True => true,
            OutputAssertion::False => false,
            OutputAssertion::Compare { lhs, op, rhs } => atom(lhs, *op, rhs),
            OutputAssertion::And(v) => v.iter().all(|a| a.eval_with(n, atom)),
            OutputAssertion::Or(v) => v.iter().any(|a| a.eval_with(n, atom)),
            OutputAssertion::Not(a) => !a.eval_with(n, atom),
            OutputAssertion::RobustClass(_) => self.expand(n).eval_with(n, atom),
        }
    }

    pub fn eval_f64(&self, y: &[f64]) -> bool {
        let val = |o: &Operand| match o {
            Operand::Output(i) => y[*i],
            Operand::Const(c) => *c,
        };
        self.eval_with(y.len(), &mut |l, op, r| op.holds(&val(l), &val(r)))
    }

    /// Conjuncts at the top level, used to emit one assert per conjunct.
    pub fn conjuncts(&self) -> Vec<OutputAssertion> {
        match self {
            OutputAssertion::And(v) => v.iter().flat_map(Self::conjuncts).collect(),
            OutputAssertion::True => Vec::new(),
            other => vec![other.clone()],
        }
    }
}

impl fmt::Display for OutputAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, v: &[OutputAssertion], sep: &str, empty: &str| {
            if v.is_empty() {
                return f.write_str(empty);
            }
            f.write_str("(")?;
            for (i, a) in v.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{a}")?;
            }
            f.write_str(")")
        };
        match self {
            OutputAssertion::True => f.write_str("true"),
            OutputAssertion::False => f.write_str("false"),
            OutputAssertion::Compare { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            OutputAssertion::And(v) => join(f, v, "&&", "true"),
            OutputAssertion::Or(v) => join(f, v, "||", "false"),
            OutputAssertion::Not(a) => write!(f, "!({a})"),
            OutputAssertion::RobustClass(i) => write!(f, "robust_class({i})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyProperty {
    pub input_region: HyperRect,
    pub output_condition: OutputAssertion,
}

impl SafetyProperty {
    pub fn new(input_region: HyperRect, output_condition: OutputAssertion) -> Self {
        Self {
            input_region,
            output_condition,
        }
    }

    /// Check arity against a network.
    pub fn validate_for(&self, net: &Network) -> Result<()> {
        if self.input_region.dim() != net.input_dim() {
            return Err(Error::Dimension(format!(
                "property constrains {} inputs, network has {}",
                self.input_region.dim(),
                net.input_dim()
            )));
        }
        if let Some(i) = self.output_condition.max_output() {
            if i >= net.output_dim() {
                return Err(Error::Dimension(format!(
                    "assertion references y_{i}, network has {} outputs",
                    net.output_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Json {
        let input: Vec<Json> = self
            .input_region
            .bounds()
            .iter()
            .map(|(lo, hi)| serde_json::json!({"lo": lo, "hi": hi}))
            .collect();
        let assert = match &self.output_condition {
            OutputAssertion::RobustClass(i) => serde_json::json!({"robust_class": i}),
            other => Json::String(other.to_string()),
        };
        serde_json::json!({"input": input, "assert": assert})
    }
}

/// Parse the property JSON document.
pub fn parse_property(source: &str) -> Result<SafetyProperty> {
    let doc: Json = serde_json::from_str(source)?;
    let input = doc
        .get("input")
        .and_then(Json::as_array)
        .ok_or_else(|| Error::Property("missing \"input\" array".into()))?;
    let mut bounds = Vec::with_capacity(input.len());
    for (i, b) in input.iter().enumerate() {
        let get = |k: &str| {
            b.get(k)
                .and_then(Json::as_f64)
                .ok_or_else(|| Error::Property(format!("input {i}: missing numeric {k:?}")))
        };
        bounds.push((get("lo")?, get("hi")?));
    }
    let region = HyperRect::new(bounds)?;
    let assert = match doc.get("assert") {
        Some(Json::String(s)) => parse_assertion(s)?,
        Some(Json::Object(o)) => {
            let i = o
                .get("robust_class")
                .and_then(Json::as_u64)
                .ok_or_else(|| Error::Property("assert object needs \"robust_class\"".into()))?;
            OutputAssertion::RobustClass(i as usize)
        }
        Some(Json::Bool(true)) => OutputAssertion::True,
        Some(Json::Bool(false)) => OutputAssertion::False,
        _ => return Err(Error::Property("missing \"assert\"".into())),
    };
    Ok(SafetyProperty::new(region, assert))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Out(usize),
    Cmp(Comparison),
    And,
    Or,
    Not,
    LParen,
    RParen,
    True,
    False,
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let b = s.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |i: usize, m: &str| Error::Property(format!("{m} at offset {i} in {s:?}"));
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let two = s.get(i..i + 2).unwrap_or("");
        let (tok, len) = match (c, two) {
            (_, "<=") => (Tok::Cmp(Comparison::Le), 2),
            (_, ">=") => (Tok::Cmp(Comparison::Ge), 2),
            (_, "==") => (Tok::Cmp(Comparison::Eq), 2),
            (_, "&&") => (Tok::And, 2),
            (_, "||") => (Tok::Or, 2),
            (_, "!=") => return Err(err(i, "'!=' is not supported, use !(a == b)")),
            ('<', _) => (Tok::Cmp(Comparison::Lt), 1),
            ('>', _) => (Tok::Cmp(Comparison::Gt), 1),
            ('=', _) => (Tok::Cmp(Comparison::Eq), 1),
            ('!', _) => (Tok::Not, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            _ if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let start = i;
                let mut j = i + 1;
                while j < b.len() {
                    let d = b[j] as char;
                    let exp_sign = (d == '-' || d == '+') && matches!(b[j - 1], b'e' | b'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let v: f64 = s[start..j].parse().map_err(|_| err(start, "bad number"))?;
                out.push(Tok::Num(v));
                i = j;
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < b.len() && ((b[j] as char).is_ascii_alphanumeric() || b[j] == b'_') {
                    j += 1;
                }
                let word = &s[start..j];
                let mut next = j;
                let tok = match word.to_ascii_lowercase().as_str() {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    "true" => Tok::True,
                    "false" => Tok::False,
                    w if w.starts_with('y') => {
                        let digits = w[1..].trim_start_matches('_');
                        if digits.is_empty() && s[j..].starts_with('[') {
                            let close = s[j..].find(']').ok_or_else(|| err(j, "unclosed '['"))?;
                            next = j + close + 1;
                            Tok::Out(
                                s[j + 1..j + close]
                                    .trim()
                                    .parse()
                                    .map_err(|_| err(j, "bad output index"))?,
                            )
                        } else {
                            Tok::Out(digits.parse().map_err(|_| err(start, "bad output name"))?)
                        }
                    }
                    _ => return Err(err(start, "unknown identifier")),
                };
                out.push(tok);
                i = next;
                continue;
            }
            _ => return Err(err(i, "unexpected character")),
        };
        out.push(tok);
        i += len;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn or(&mut self) -> Result<OutputAssertion> {
        let mut v = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            v.push(self.and()?);
        }
        Ok(if v.len() == 1 {
            v.pop().unwrap()
        } else {
            OutputAssertion::Or(v)
        })
    }

    fn and(&mut self) -> Result<OutputAssertion> {
        let mut v = vec![self.unary()?];
        while self.peek() == Some(&Tok::And) {
            self.bump();
            v.push(self.unary()?);
        }
        Ok(if v.len() == 1 {
            v.pop().unwrap()
        } else {
            OutputAssertion::And(v)
        })
    }

    fn unary(&mut self) -> Result<OutputAssertion> {
        match self.bump() {
            Some(Tok::Not) => Ok(OutputAssertion::Not(Box::new(self.unary()?))),
            Some(Tok::LParen) => {
                let e = self.or()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(Error::Property("expected ')'".into())),
                }
            }
            Some(Tok::True) => Ok(OutputAssertion::True),
            Some(Tok::False) => Ok(OutputAssertion::False),
            Some(t @ (Tok::Num(_) | Tok::Out(_))) => {
                let lhs = operand(t);
                let op = match self.bump() {
                    Some(Tok::Cmp(op)) => op,
                    _ => return Err(Error::Property("expected a comparison operator".into())),
                };
                let rhs = match self.bump() {
                    Some(t @ (Tok::Num(_) | Tok::Out(_))) => operand(t),
                    _ => return Err(Error::Property("expected an output or constant".into())),
                };
                Ok(OutputAssertion::compare(lhs, op, rhs))
            }
            other => Err(Error::Property(format!("unexpected token {other:?}"))),
        }
    }
}

fn operand(t: Tok) -> Operand {
    match t {
        Tok::Num(v) => Operand::Const(v),
        Tok::Out(i) => Operand::Output(i),
        _ => unreachable!("operand called on non-operand"),
    }
}

/// Parse an assertion such as `y_0 >= 2.7 && (y1 < y2 || !(y_3 == 0))`.
pub fn parse_assertion(s: &str) -> Result<OutputAssertion> {
    let mut p = Parser {
        toks: lex(s)?,
        pos: 0,
    };
    let e = p.or()?;
    if p.pos != p.toks.len() {
        return Err(Error::Property(format!(
            "trailing input in assertion {s:?}"
        )));
    }
    Ok(e)
}
