//! Minimal S-expression reader for solver output.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    /// Symbol, numeral, decimal, `#b`/`#x` literal or keyword, verbatim.
    Atom(String),
    /// String literal with quotes removed and `""` unescaped.
    Str(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(v) => Some(v),
            _ => None,
        }
    }

    /// Whether this is a list whose head is the atom `head`.
    pub fn is_app(&self, head: &str) -> bool {
        matches!(self.list(), Some([Sexp::Atom(h), ..]) if h == head)
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(a) => f.write_str(a),
            Sexp::Str(s) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            Sexp::List(v) => {
                f.write_str("(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SexpError {
    pub offset: usize,
    pub msg: &'static str,
}

impl fmt::Display for SexpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at byte {}", self.msg, self.offset)
    }
}

/// Parse every top-level expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let b = text.as_bytes();
    let mut i = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut opens: Vec<usize> = Vec::new();
    while i < b.len() {
        match b[i] {
            c if c.is_ascii_whitespace() => i += 1,
            b';' => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
            }
            b'(' => {
                stack.push(Vec::new());
                opens.push(i);
                i += 1;
            }
            b')' => {
                if stack.len() == 1 {
                    return Err(SexpError { offset: i, msg: "unbalanced ')'" });
                }
                let done = stack.pop().expect("non-empty");
                opens.pop();
                stack.last_mut().expect("non-empty").push(Sexp::List(done));
                i += 1;
            }
            b'"' => {
                let start = i;
                let mut s = Vec::new();
                i += 1;
                loop {
                    match b.get(i) {
                        None => return Err(SexpError { offset: start, msg: "unterminated string" }),
                        Some(b'"') if b.get(i + 1) == Some(&b'"') => {
                            s.push(b'"');
                            i += 2;
                        }
                        Some(b'"') => {
                            i += 1;
                            break;
                        }
                        Some(&c) => {
                            s.push(c);
                            i += 1;
                        }
                    }
                }
                stack.last_mut().expect("non-empty").push(Sexp::Str(String::from_utf8_lossy(&s).into_owned()));
            }
            b'|' => {
                let start = i;
                let end = text[i + 1..]
                    .find('|')
                    .ok_or(SexpError { offset: start, msg: "unterminated quoted symbol" })?;
                stack.last_mut().expect("non-empty").push(Sexp::Atom(text[i + 1..i + 1 + end].to_string()));
                i += end + 2;
            }
            _ => {
                let start = i;
                while i < b.len() && !b[i].is_ascii_whitespace() && !matches!(b[i], b'(' | b')' | b';' | b'"') {
                    i += 1;
                }
                stack.last_mut().expect("non-empty").push(Sexp::Atom(text[start..i].to_string()));
            }
        }
    }
    if let Some(&o) = opens.last() {
        return Err(SexpError { offset: o, msg: "unclosed '('" });
    }
    Ok(stack.pop().expect("top level"))
}
