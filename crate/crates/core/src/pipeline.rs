//! The verification workflow: discretize activations, infer intervals,
//! lower, optimize, solve, and replay any counterexample before reporting.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{ActivationTables, Domain, Scalar, TableConfig};
use crate::error::{Error, Result};
use crate::exec::{DomainInputs, Executor, ScalarTrace};
use crate::fixed::{min_integer_bits, FxpFormat, FxpValue, RoundingMode};
use crate::interval::{propagate, range_report, GuardStatus};
use crate::ir::{balance, lower, simplify, slice, LowerOptions, NameMap, ProgramStats, SsaProgram, Value};
use crate::network::Network;
use crate::property::{HyperRect, SafetyProperty};
use crate::smt::{decode_model, emit_smtlib, run_solver, SolverConfig, SolverOutcome};

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub domain: Domain,
    pub tables: TableConfig,
    pub simplify: bool,
    pub slice: bool,
    pub balance: bool,
    pub intervals: bool,
    /// Reassociate float sums too, which can change results.
    pub unsafe_balance: bool,
    /// Interval facts on activation outputs as well as potentials.
    pub both_bounds: bool,
    pub solver: SolverConfig,
    pub names: Option<NameMap>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            domain: Domain::Real,
            tables: TableConfig::default(),
            simplify: true,
            slice: true,
            balance: true,
            intervals: true,
            unsafe_balance: false,
            both_bounds: false,
            solver: SolverConfig::default(),
            names: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Safe,
    Falsified,
    Unknown,
}

impl Verdict {
    /// Process exit code: 0 safe, 1 falsified, 2 unknown.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Safe => 0,
            Verdict::Falsified => 1,
            Verdict::Unknown => 2,
        }
    }

    /// One-letter form used in sweep tables.
    pub fn letter(self) -> &'static str {
        match self {
            Verdict::Safe => "S",
            Verdict::Falsified => "F",
            Verdict::Unknown => "U",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Safe => "safe",
            Verdict::Falsified => "falsified",
            Verdict::Unknown => "unknown",
        })
    }
}

/// A replay-validated violating input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub network: String,
    pub domain: Domain,
    /// Real inputs inside the region that quantize to `raw`.
    pub inputs: Vec<f64>,
    /// The inputs as domain values, exactly as the solver chose them.
    pub raw: Vec<Scalar>,
    pub outputs: Vec<f64>,
    pub trace: ScalarTrace,
    pub verdict: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub assignments: usize,
    pub nodes: usize,
    pub ites: usize,
    pub facts: usize,
}

impl StageStats {
    fn of(stage: &str, s: ProgramStats) -> Self {
        Self { stage: stage.into(), assignments: s.assignments, nodes: s.nodes, ites: s.ites, facts: s.facts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub outcome: String,
    pub seconds: f64,
    pub peak_rss_kb: Option<u64>,
    pub script_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub network: String,
    pub domain: Domain,
    pub verdict: Verdict,
    /// Why the verdict is unknown, or how a safe verdict was reached.
    pub reason: Option<String>,
    pub counterexample: Option<Counterexample>,
    pub timings: Vec<StageTiming>,
    pub stats: Vec<StageStats>,
    /// Number of ReLUs whose branch the intervals decided.
    pub pruned_relus: usize,
    /// Whether interval analysis could not exclude wrap-around somewhere.
    pub wrap_risk: bool,
    pub solver: Option<SolverSummary>,
}

impl VerificationReport {
    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.seconds).sum()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "network:  {}", self.network)?;
        writeln!(f, "domain:   {}", self.domain)?;
        writeln!(f, "verdict:  {}", self.verdict)?;
        if let Some(r) = &self.reason {
            writeln!(f, "reason:   {r}")?;
        }
        if let Some(ce) = &self.counterexample {
            let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
            writeln!(f, "input:    [{}]", list(&ce.inputs))?;
            let raw: Vec<String> = ce.raw.iter().map(|s| s.to_string()).collect();
            writeln!(f, "raw:      [{}]", raw.join(", "))?;
            writeln!(f, "output:   [{}]", list(&ce.outputs))?;
            writeln!(f, "replay:   {}", ce.verdict)?;
        }
        writeln!(f, "guards:   {} relu branches removed, wrap risk {}", self.pruned_relus, self.wrap_risk)?;
        for s in &self.stats {
            writeln!(f, "program:  {:<9} {:>5} assignments {:>6} nodes {:>5} ites", s.stage, s.assignments, s.nodes, s.ites)?;
        }
        if let Some(s) = &self.solver {
            let mem = s.peak_rss_kb.map(|k| format!(", peak {k} KiB")).unwrap_or_default();
            writeln!(f, "solver:   {} in {:.3}s{mem}, script {} bytes", s.outcome, s.seconds, s.script_bytes)?;
        }
        let times: Vec<String> = self.timings.iter().map(|t| format!("{} {:.3}s", t.stage, t.seconds)).collect();
        write!(f, "time:     {} (total {:.3}s)", times.join(", "), self.total_seconds())
    }
}

struct Clock {
    timings: Vec<StageTiming>,
}

impl Clock {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f().map_err(|e| e.in_stage(name));
        self.timings.push(StageTiming { stage: name.into(), seconds: t.elapsed().as_secs_f64() });
        r
    }
}

struct Prepared {
    program: SsaProgram,
    tables: ActivationTables,
    stats: Vec<StageStats>,
    pruned: usize,
    wrap_risk: bool,
}

fn prepare(net: &Network, prop: &SafetyProperty, opts: &VerifyOptions, clock: &mut Clock) -> Result<Prepared> {
    let domain = opts.domain;
    clock.stage("check", || prop.validate_for(net))?;
    let tables = clock.stage("discretize", || ActivationTables::for_network(net, &opts.tables))?;
    let (bounds, guards) = if opts.intervals {
        let b = clock.stage("intervals", || propagate(net, &prop.input_region, domain, &tables))?;
        let g = b.guards(net);
        (Some(b), Some(g))
    } else {
        (None, None)
    };
    let pruned = guards
        .iter()
        .flatten()
        .flatten()
        .filter(|g| matches!(g, Some(GuardStatus::AlwaysActive | GuardStatus::AlwaysInactive)))
        .count();
    let wrap_risk = bounds.as_ref().is_some_and(|b| b.any_wrap_risk());
    let lopts = LowerOptions { both_bounds: opts.both_bounds, names: opts.names.clone() };
    let mut p = clock.stage("lower", || lower(net, prop, domain, &tables, bounds.as_ref(), guards.as_deref(), &lopts))?;
    let mut stats = vec![StageStats::of("lower", p.stats())];
    let mut pass = |clock: &mut Clock, on: bool, name: &'static str, f: &dyn Fn(&SsaProgram) -> SsaProgram, p: &mut SsaProgram| {
        if on {
            let next = clock.stage(name, || Ok(f(p))).expect("passes are infallible");
            *p = next;
            stats.push(StageStats::of(name, p.stats()));
        }
    };
    pass(clock, opts.simplify, "simplify", &simplify, &mut p);
    pass(clock, opts.slice, "slice", &slice, &mut p);
    let unsafe_balance = opts.unsafe_balance;
    pass(clock, opts.balance, "balance", &|p| balance(p, unsafe_balance), &mut p);
    Ok(Prepared { program: p, tables, stats, pruned, wrap_risk })
}

/// The optimized program `verify` would hand to the solver.
pub fn build_program(net: &Network, prop: &SafetyProperty, opts: &VerifyOptions) -> Result<SsaProgram> {
    Ok(prepare(net, prop, opts, &mut Clock { timings: Vec::new() })?.program)
}

/// Run the whole workflow. Stage failures come back as errors tagged
/// with the stage; solver trouble is an `Unknown` verdict.
pub fn verify(net: &Network, prop: &SafetyProperty, opts: &VerifyOptions) -> Result<VerificationReport> {
    let mut clock = Clock { timings: Vec::new() };
    let domain = opts.domain;
    let Prepared { program: p, tables, stats, pruned, wrap_risk } = prepare(net, prop, opts, &mut clock)?;

    let mut report = VerificationReport {
        network: net.name.clone(),
        domain,
        verdict: Verdict::Unknown,
        reason: None,
        counterexample: None,
        timings: Vec::new(),
        stats,
        pruned_relus: pruned,
        wrap_risk,
        solver: None,
    };
    if p.asserts_trivially_true() {
        report.verdict = Verdict::Safe;
        report.reason = Some("property discharged without the solver".into());
        report.timings = clock.timings;
        return Ok(report);
    }
    let script = clock.stage("emit", || emit_smtlib(&p))?;
    let run = clock.stage("solve", || Ok(run_solver(&script, &opts.solver)))?;
    report.solver = Some(SolverSummary {
        outcome: run.outcome.label().into(),
        seconds: run.wall.as_secs_f64(),
        peak_rss_kb: run.peak_rss_kb,
        script_bytes: script.len(),
    });
    match run.outcome {
        SolverOutcome::Unsat => report.verdict = Verdict::Safe,
        SolverOutcome::Sat(model) => {
            let replayed = clock.stage("replay", || {
                let values = decode_model(&p, &model)?;
                replay_values(net, prop, domain, &tables, &values)
            });
            match replayed {
                Ok(ce) if ce.verdict == "violated" => {
                    report.verdict = Verdict::Falsified;
                    report.counterexample = Some(ce);
                }
                Ok(_) => report.reason = Some("solver model does not violate the property on replay".into()),
                Err(e) => report.reason = Some(format!("unusable model: {e}")),
            }
        }
        SolverOutcome::Timeout => {
            report.reason = Some(format!("timeout after {:.1}s", opts.solver.timeout.as_secs_f64()))
        }
        SolverOutcome::Unknown(r) => report.reason = Some(format!("solver unknown: {r}")),
        SolverOutcome::Error(e) => report.reason = Some(format!("solver error: {e}")),
    }
    report.timings = clock.timings;
    Ok(report)
}

fn domain_inputs(domain: Domain, values: &[Value]) -> Result<DomainInputs> {
    let bad = || Error::Solver(format!("input values do not belong to {domain}"));
    Ok(match domain {
        Domain::Fixed { .. } => DomainInputs::Fixed(values.iter().map(|v| v.as_fixed().ok_or_else(bad)).collect::<Result<_>>()?),
        Domain::Real => {
            DomainInputs::Real(values.iter().map(|v| v.as_real().cloned().ok_or_else(bad)).collect::<Result<_>>()?)
        }
        Domain::Float32 => DomainInputs::Float32(values.iter().map(|v| v.as_f32().ok_or_else(bad)).collect::<Result<_>>()?),
    })
}

/// Real input in `[lo, hi]` whose quantization is the raw word `raw`.
pub fn fixed_witness(format: FxpFormat, rounding: RoundingMode, raw: i64, lo: f64, hi: f64) -> f64 {
    let a = format.quantize_unwrapped(lo, rounding);
    let m = 1i128 << format.width();
    let t = a + (raw as i128 - a).rem_euclid(m);
    let x = t as f64 * (-(format.frac_bits() as f64)).exp2();
    x.clamp(lo, hi)
}

/// Run domain-valued inputs through the executor and package the result.
pub fn replay_values(
    net: &Network,
    prop: &SafetyProperty,
    domain: Domain,
    tables: &ActivationTables,
    values: &[Value],
) -> Result<Counterexample> {
    let exec = Executor::new(net, domain, tables)?;
    let inputs = domain_inputs(domain, values)?;
    let trace = exec.run_domain(&inputs)?;
    let holds = exec.holds_domain(&prop.output_condition, &inputs)?;
    let region = prop.input_region.bounds();
    let real: Vec<f64> = match (&inputs, domain) {
        (DomainInputs::Fixed(raw), Domain::Fixed { format, rounding }) => raw
            .iter()
            .zip(region)
            .map(|(&r, &(lo, hi))| fixed_witness(format, rounding, r, lo, hi))
            .collect(),
        (other, d) => other.to_f64(d),
    };
    let raw = match &inputs {
        DomainInputs::Fixed(v) => {
            let Domain::Fixed { format, .. } = domain else { unreachable!() };
            v.iter().map(|&r| Scalar::Fixed(FxpValue::from_raw(r, format))).collect()
        }
        DomainInputs::Real(v) => v.iter().cloned().map(Scalar::Real).collect(),
        DomainInputs::Float32(v) => v.iter().copied().map(Scalar::F32).collect(),
    };
    Ok(Counterexample {
        network: net.name.clone(),
        domain,
        inputs: real,
        raw,
        outputs: trace.outputs_f64(),
        trace,
        verdict: if holds { "holds" } else { "violated" }.into(),
    })
}

/// Replay a stored counterexample from its exact domain values. Returns
/// whether the property is violated.
pub fn replay_counterexample(
    net: &Network,
    prop: &SafetyProperty,
    tables: &ActivationTables,
    ce: &Counterexample,
) -> Result<Counterexample> {
    let inputs = DomainInputs::from_scalars(&ce.raw)
        .ok_or_else(|| Error::Dimension("counterexample mixes value domains".into()))?;
    let values: Vec<Value> = match inputs {
        DomainInputs::Fixed(v) => v.into_iter().map(Value::Fixed).collect(),
        DomainInputs::Real(v) => v.into_iter().map(Value::Real).collect(),
        DomainInputs::Float32(v) => v.into_iter().map(Value::f32).collect(),
    };
    if values.len() != net.input_dim() {
        return Err(Error::Dimension(format!("counterexample has {} inputs, network {}", values.len(), net.input_dim())));
    }
    replay_values(net, prop, ce.domain, tables, &values)
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub total_bits: u32,
    pub format: String,
    pub verdict: Verdict,
    pub seconds: f64,
    pub reason: Option<String>,
    pub counterexample: Option<Vec<f64>>,
    /// Whether a falsified row's counterexample was replay-validated.
    pub validated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub network: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["total_bits", "format", "verdict", "seconds", "validated", "reason", "counterexample"])
            .map_err(csv_err)?;
        for r in &self.rows {
            let ce = r
                .counterexample
                .as_ref()
                .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            w.write_record([
                r.total_bits.to_string(),
                r.format.clone(),
                r.verdict.letter().to_string(),
                format!("{:.6}", r.seconds),
                r.validated.to_string(),
                r.reason.clone().unwrap_or_default(),
                ce,
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>5}  {:<10} {:<2} {:>9}  note", "bits", "format", "", "time")?;
        for r in &self.rows {
            let note = match (&r.counterexample, &r.reason) {
                (Some(ce), _) => format!("cex {ce:?}"),
                (None, Some(reason)) => reason.clone(),
                _ => String::new(),
            };
            writeln!(f, "{:>5}  {:<10} {:<2} {:>8.3}s  {note}", r.total_bits, r.format, r.verdict.letter(), r.seconds)?;
        }
        Ok(())
    }
}

/// Split each total width into integer and fractional bits: enough
/// integer bits for every value the real network computes on the region
/// and for every weight, the rest fractional.
pub fn formats_for_widths(
    net: &Network,
    region: &HyperRect,
    tables: &TableConfig,
    widths: &[u32],
) -> Result<Vec<FxpFormat>> {
    let t = ActivationTables::for_network(net, tables)?;
    let report = range_report(net, region, &t, None)?;
    let weight_max = net
        .layers()
        .iter()
        .flat_map(|l| l.weights.iter().flatten().chain(&l.biases))
        .chain(region.bounds().iter().flat_map(|(a, b)| [a, b]))
        .fold(0.0f64, |m, w| m.max(w.abs()));
    let k = report.recommended_int_bits.max(min_integer_bits(weight_max));
    widths
        .iter()
        .map(|&w| {
            let k = k.min(w).max(1);
            FxpFormat::new(k, w - k)
        })
        .collect()
}

/// Verify once per format, in parallel on up to `workers` threads. A
/// failing row becomes `Unknown` with the error as reason.
pub fn sweep(
    net: &Network,
    prop: &SafetyProperty,
    formats: &[FxpFormat],
    rounding: RoundingMode,
    opts: &VerifyOptions,
    workers: usize,
) -> SweepReport {
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; formats.len()]);
    thread::scope(|s| {
        for _ in 0..workers.clamp(1, formats.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&format) = formats.get(i) else { break };
                let row = sweep_row(net, prop, format, rounding, opts);
                rows.lock().expect("no panics while locked")[i] = Some(row);
            });
        }
    });
    SweepReport {
        network: net.name.clone(),
        rows: rows.into_inner().expect("workers joined").into_iter().map(|r| r.expect("every row filled")).collect(),
    }
}

fn sweep_row(net: &Network, prop: &SafetyProperty, format: FxpFormat, rounding: RoundingMode, opts: &VerifyOptions) -> SweepRow {
    let start = Instant::now();
    let o = VerifyOptions { domain: Domain::fixed(format, rounding), ..opts.clone() };
    let mut row = SweepRow {
        total_bits: format.width(),
        format: format.to_string(),
        verdict: Verdict::Unknown,
        seconds: 0.0,
        reason: None,
        counterexample: None,
        validated: false,
    };
    match verify(net, prop, &o) {
        Ok(r) => {
            row.verdict = r.verdict;
            row.reason = r.reason;
            if let Some(ce) = r.counterexample {
                row.validated = ce.verdict == "violated";
                row.counterexample = Some(ce.inputs);
            }
        }
        Err(e) => row.reason = Some(e.to_string()),
    }
    row.seconds = start.elapsed().as_secs_f64();
    row
}

// ---------------------------------------------------------------- export

/// Write `<stem>.json` and, with a shape, `<stem>.pgm`. Pixel values scale
/// the region's overall range `[min lo, max hi]` onto 0..=255.
pub fn export_counterexample(
    ce: &Counterexample,
    region: &HyperRect,
    shape: Option<(usize, usize)>,
    stem: &Path,
) -> Result<Vec<PathBuf>> {
    if let Some((h, w)) = shape {
        if h * w != ce.inputs.len() {
            return Err(Error::Dimension(format!("shape {h}x{w} does not hold {} inputs", ce.inputs.len())));
        }
    }
    let json_path = stem.with_extension("json");
    fs::write(&json_path, serde_json::to_string_pretty(ce)?)?;
    let mut written = vec![json_path];
    if let Some((h, w)) = shape {
        let path = stem.with_extension("pgm");
        fs::write(&path, pgm(&ce.inputs, region, h, w))?;
        written.push(path);
    }
    Ok(written)
}

/// Binary (P5) greyscale image of `values`, row-major.
pub fn pgm(values: &[f64], region: &HyperRect, h: usize, w: usize) -> Vec<u8> {
    let lo = region.bounds().iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let hi = region.bounds().iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&x| {
        if hi > lo {
            ((x - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

pub fn load_counterexample(path: &Path) -> Result<Counterexample> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Seconds as a `Duration`, for configuration values.
pub fn seconds(s: f64) -> Duration {
    Duration::from_secs_f64(s.max(0.0))
}
