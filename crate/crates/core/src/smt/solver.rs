//! External solver driver.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::sexp::{parse_all, Sexp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Executable name or path; the script path is appended to `args`.
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { program: "z3".into(), args: Vec::new(), timeout: Duration::from_secs(60) }
    }
}

impl SolverConfig {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverOutcome {
    Sat(Model),
    Unsat,
    Unknown(String),
    Timeout,
    /// Spawn failure or unparsable output, with an excerpt.
    Error(String),
}

impl SolverOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            SolverOutcome::Sat(_) => "sat",
            SolverOutcome::Unsat => "unsat",
            SolverOutcome::Unknown(_) => "unknown",
            SolverOutcome::Timeout => "timeout",
            SolverOutcome::Error(_) => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverRun {
    pub outcome: SolverOutcome,
    pub wall: Duration,
    /// Peak resident set of the solver process, where the OS reports it.
    pub peak_rss_kb: Option<u64>,
}

/// Run `script` through the configured solver. Never panics on solver
/// misbehaviour; everything unexpected becomes [`SolverOutcome::Error`].
pub fn run_solver(script: &str, cfg: &SolverConfig) -> SolverRun {
    let start = Instant::now();
    let fail = |msg: String| SolverRun { outcome: SolverOutcome::Error(msg), wall: start.elapsed(), peak_rss_kb: None };
    let file = match tempfile::Builder::new().prefix("qnnv-").suffix(".smt2").tempfile() {
        Ok(f) => f,
        Err(e) => return fail(format!("cannot create script file: {e}")),
    };
    if let Err(e) = std::fs::write(file.path(), script) {
        return fail(format!("cannot write script file: {e}"));
    }
    let mut child = match Command::new(&cfg.program)
        .args(&cfg.args)
        .arg(file.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return fail(format!("cannot start {}: {e}", cfg.program.display())),
    };
    let drain = |mut r: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut s = String::new();
            let _ = r.read_to_string(&mut s);
            s
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("piped")));
    let err = drain(Box::new(child.stderr.take().expect("piped")));
    let (timed_out, peak) = wait_with_deadline(&mut child, cfg.timeout);
    let wall = start.elapsed();
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let outcome = if timed_out { SolverOutcome::Timeout } else { parse_output(&stdout, &stderr) };
    SolverRun { outcome, wall, peak_rss_kb: peak }
}

#[cfg(unix)]
fn wait_with_deadline(child: &mut std::process::Child, timeout: Duration) -> (bool, Option<u64>) {
    let pid = child.id() as libc::pid_t;
    let deadline = Instant::now() + timeout;
    let mut status = 0;
    // SAFETY: zeroed rusage is a valid value; wait4 only writes into it.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let mut timed_out = false;
    let mut pause = Duration::from_micros(200);
    loop {
        // SAFETY: pid is our own unreaped child.
        let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut usage) };
        if r == pid || r < 0 {
            break;
        }
        if Instant::now() >= deadline {
            timed_out = true;
            let _ = child.kill();
            // SAFETY: as above; blocks until the killed child is reaped.
            unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
            break;
        }
        thread::sleep(pause);
        pause = (pause * 2).min(Duration::from_millis(10));
    }
    // ru_maxrss is in kilobytes on Linux.
    let peak = (usage.ru_maxrss > 0).then_some(usage.ru_maxrss as u64);
    (timed_out, peak)
}

#[cfg(not(unix))]
fn wait_with_deadline(child: &mut std::process::Child, timeout: Duration) -> (bool, Option<u64>) {
    let deadline = Instant::now() + timeout;
    loop {
        if let Ok(Some(_)) = child.try_wait() {
            return (false, None);
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return (true, None);
        }
        thread::sleep(Duration::from_millis(5));
    }
}

fn excerpt(s: &str) -> String {
    let t = s.trim();
    if t.chars().count() <= 400 {
        t.to_string()
    } else {
        format!("{}...", t.chars().take(400).collect::<String>())
    }
}

/// Interpret solver stdout: a status line, then for `sat` the model.
pub fn parse_output(stdout: &str, stderr: &str) -> SolverOutcome {
    let exprs = match parse_all(stdout) {
        Ok(e) => e,
        Err(e) => return SolverOutcome::Error(format!("unparsable solver output ({e}): {}", excerpt(stdout))),
    };
    let mut it = exprs.iter().filter(|e| e.atom() != Some("success"));
    let status = it.next();
    let first_error = exprs.iter().find(|e| e.is_app("error"));
    if let Some(e) = status.filter(|e| e.is_app("error")) {
        return SolverOutcome::Error(e.to_string());
    }
    match status.and_then(Sexp::atom) {
        Some("sat") => {
            // no (get-model) in the script: an empty model
            let Some(m) = it.next() else {
                return SolverOutcome::Sat(Model::default());
            };
            if m.is_app("error") {
                return SolverOutcome::Error(format!("sat but no model: {m}"));
            }
            match Model::from_sexp(m) {
                Ok(model) => SolverOutcome::Sat(model),
                Err(e) => SolverOutcome::Error(format!("bad model: {e}")),
            }
        }
        Some("unsat") => SolverOutcome::Unsat,
        Some("unknown") => {
            let reason = first_error.map(|e| e.to_string()).unwrap_or_else(|| "solver returned unknown".into());
            SolverOutcome::Unknown(reason)
        }
        Some("timeout") => SolverOutcome::Timeout,
        _ => {
            let detail = first_error.map(|e| e.to_string()).unwrap_or_else(|| excerpt(&format!("{stdout}\n{stderr}")));
            SolverOutcome::Error(detail)
        }
    }
}
