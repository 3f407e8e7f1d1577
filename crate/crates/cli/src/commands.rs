use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qnnv_core::domain::ActivationTables;
use qnnv_core::exec::{DomainInputs, ScalarTrace, WrapSite};
use qnnv_core::interval::{propagate, range_report, GuardStatus};
use qnnv_core::ir::{render, to_dot, NameMap};
use qnnv_core::lut::{build_table_with_step, TablePiece};
use qnnv_core::pipeline::{
    build_program, export_counterexample, formats_for_widths, load_counterexample, sweep, verify,
};
use qnnv_core::property::parse_assertion;
use qnnv_core::smt::emit_smtlib;
use qnnv_core::{
    build_table, bundled, default_spec, lut_to_fxp, parse_nnet, parse_property, ActivationKind,
    Counterexample, Domain, Executor, FxpFormat, HyperRect, Network, SafetyProperty, Scalar,
};

use crate::args::{Command, LutCommand, Problem};
use crate::config::Settings;

/// Process exit code: 0 safe or holds, 1 falsified or violated, 2 unknown.
pub type Code = i32;

pub fn run(cmd: Command, s: &Settings) -> Result<Code> {
    match cmd {
        Command::Verify { problem, export_ce, shape } => cmd_verify(&problem, export_ce, shape, s),
        Command::Sweep { problem, widths, formats, csv } => cmd_sweep(&problem, widths, formats, csv, s),
        Command::Intervals { problem } => cmd_intervals(&problem, s),
        Command::Replay { net, input, ce, assertion, prop, trace, normalize } => {
            cmd_replay(&net, input, ce, assertion, prop, trace, normalize, s)
        }
        Command::Lut { cmd: LutCommand::Build { activation, table_fxp, check_points, csv, out } } => {
            cmd_lut(&activation, table_fxp, check_points, csv, out, s)
        }
        Command::EmitSmt { problem, out, ssa, dot } => cmd_emit(&problem, out, ssa, dot, s),
        Command::ExportCe { ce, out, shape, region } => cmd_export(&ce, &out, shape, region),
    }
}

// ---------------------------------------------------------------- inputs

pub fn load_network(spec: &str, normalize: bool) -> Result<Network> {
    let net = if let Some(name) = spec.strip_prefix("bundled:") {
        bundled::by_name(name).ok_or_else(|| anyhow!("unknown bundled network {name:?}"))?
    } else {
        let f = fs::File::open(spec).with_context(|| format!("opening {spec}"))?;
        parse_nnet(BufReader::new(f)).with_context(|| format!("parsing {spec}"))?
    };
    Ok(if normalize { net.fold_normalization() } else { net })
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?}")))
        .collect()
}

pub fn parse_region(s: &str) -> Result<HyperRect> {
    let bounds = s
        .split(',')
        .map(|t| {
            let (lo, hi) = t.split_once(':').ok_or_else(|| anyhow!("expected lo:hi, got {t:?}"))?;
            Ok((lo.trim().parse::<f64>()?, hi.trim().parse::<f64>()?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HyperRect::new(bounds)?)
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| anyhow!("shape must be HxW, got {s:?}"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

/// `6..16`, `8,12,16` or a mix; ranges are inclusive.
pub fn parse_widths(s: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                bail!("empty width range {part}");
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().with_context(|| format!("bad width {part:?}"))?);
        }
    }
    Ok(out)
}

fn parse_names(s: &str, net: &Network) -> Result<NameMap> {
    let groups: Vec<Vec<String>> =
        s.split(';').map(|g| g.split(',').map(|n| n.trim().to_string()).collect()).collect();
    let sizes = net.sizes();
    if groups.len() != sizes.len() || groups.iter().zip(&sizes).any(|(g, &n)| g.len() != n) {
        bail!("--names must list {:?} names per group", sizes);
    }
    let mut it = groups.into_iter();
    Ok(NameMap { inputs: it.next().unwrap_or_default(), neurons: it.collect() })
}

fn load_region(p: &Problem) -> Result<HyperRect> {
    if let Some(path) = &p.prop {
        return Ok(read_property(path)?.input_region);
    }
    match (&p.region, &p.point) {
        (Some(r), _) => parse_region(r),
        (None, Some(x)) => Ok(HyperRect::singleton(&parse_numbers(x)?)?),
        (None, None) => bail!("give --prop, --region or --point"),
    }
}

fn read_property(path: &Path) -> Result<SafetyProperty> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_property(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Region and condition; `--assert` replaces the property file's condition.
fn load_property(p: &Problem) -> Result<SafetyProperty> {
    let region = load_region(p)?;
    let cond = match (&p.assertion, &p.prop) {
        (Some(a), _) => parse_assertion(a)?,
        (None, Some(path)) => read_property(path)?.output_condition,
        (None, None) => bail!("give --assert or a --prop file"),
    };
    Ok(SafetyProperty::new(region, cond))
}

fn problem(p: &Problem, s: &Settings) -> Result<(Network, SafetyProperty, qnnv_core::VerifyOptions)> {
    let net = load_network(&p.net, p.normalize)?;
    let prop = load_property(p)?;
    let mut opts = s.options.clone();
    if let Some(n) = &p.names {
        opts.names = Some(parse_names(n, &net)?);
    }
    Ok((net, prop, opts))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------- commands

fn cmd_verify(p: &Problem, export_ce: Option<PathBuf>, shape: Option<String>, s: &Settings) -> Result<Code> {
    let (net, prop, opts) = problem(p, s)?;
    let shape = shape.as_deref().map(parse_shape).transpose()?;
    let report = verify(&net, &prop, &opts)?;
    if s.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{report}");
    }
    if let Some(stem) = export_ce {
        match &report.counterexample {
            Some(ce) => {
                for path in export_counterexample(ce, &prop.input_region, shape, &stem)? {
                    eprintln!("wrote {}", path.display());
                }
            }
            None => eprintln!("no counterexample to export"),
        }
    }
    Ok(report.verdict.exit_code())
}

fn cmd_sweep(
    p: &Problem,
    widths: Option<String>,
    formats: Option<String>,
    csv: Option<PathBuf>,
    s: &Settings,
) -> Result<Code> {
    let (net, prop, opts) = problem(p, s)?;
    let formats: Vec<FxpFormat> = match formats {
        Some(list) => list.split(',').map(|f| f.trim().parse()).collect::<Result<_, _>>()?,
        None => {
            let widths = parse_widths(widths.as_deref().unwrap_or("6..16"))?;
            formats_for_widths(&net, &prop.input_region, &opts.tables, &widths)?
        }
    };
    let report = sweep(&net, &prop, &formats, s.rounding, &opts, s.workers);
    if s.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("{report}");
    }
    if let Some(path) = csv {
        fs::write(&path, report.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(0)
}

fn cmd_intervals(p: &Problem, s: &Settings) -> Result<Code> {
    let net = load_network(&p.net, p.normalize)?;
    let region = load_region(p)?;
    let tables = ActivationTables::for_network(&net, &s.options.tables)?;
    let bounds = propagate(&net, &region, s.domain, &tables)?;
    let guards = bounds.guards(&net);
    let candidate = matches!(s.domain, Domain::Fixed { .. }).then_some(s.domain);
    let range = range_report(&net, &region, &tables, candidate)?;
    if s.json {
        let doc = serde_json::json!({ "intervals": bounds.to_json(), "guards": guards, "range": range });
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(0);
    }
    let mut out = String::new();
    writeln!(out, "domain: {}", bounds.domain)?;
    for (i, iv) in bounds.inputs.iter().enumerate() {
        writeln!(out, "input {i:>3}  {iv}")?;
    }
    writeln!(out, "{:>5} {:>6}  {:<28} {:<28} {:<9} wrap", "layer", "neuron", "pre", "post", "guard")?;
    for (l, pre) in bounds.pre.iter().enumerate() {
        for (j, iv) in pre.iter().enumerate() {
            let guard = match guards[l][j] {
                Some(GuardStatus::AlwaysActive) => "active",
                Some(GuardStatus::AlwaysInactive) => "inactive",
                Some(GuardStatus::Undecided) => "open",
                None => "-",
            };
            let risk = if bounds.wrap_risk[l][j] { "risk" } else { "-" };
            writeln!(out, "{l:>5} {j:>6}  {:<28} {:<28} {guard:<9} {risk}", iv.to_string(), bounds.post[l][j].to_string())?;
        }
    }
    writeln!(out, "max |value|: {} (integer bits needed: {})", range.global_max_abs, range.recommended_int_bits)?;
    for (l, (m, p1)) in range.per_layer_max_abs.iter().zip(&range.p1_bound).enumerate() {
        writeln!(out, "layer {l}: max |value| {m}, coarse bound {p1}")?;
    }
    if let Some(c) = &range.candidate {
        let risky = c.wrap_risk.iter().flatten().filter(|&&r| r).count();
        writeln!(out, "{}: {} neurons may overflow", c.format, risky)?;
    }
    print!("{out}");
    Ok(0)
}

fn read_counterexample(path: &Path) -> Result<Counterexample> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    match doc.get("counterexample") {
        Some(serde_json::Value::Null) => bail!("{} holds no counterexample", path.display()),
        Some(ce) => Ok(serde_json::from_value(ce.clone())?),
        None => load_counterexample(path).with_context(|| format!("parsing {}", path.display())),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_replay(
    net: &str,
    input: Option<String>,
    ce: Option<PathBuf>,
    assertion: Option<String>,
    prop: Option<PathBuf>,
    show_trace: bool,
    normalize: bool,
    s: &Settings,
) -> Result<Code> {
    let net = load_network(net, normalize)?;
    let cond = match (assertion, prop) {
        (Some(a), _) => Some(parse_assertion(&a)?),
        (None, Some(p)) => Some(read_property(&p)?.output_condition),
        _ => None,
    };
    let (domain, inputs): (Domain, Result<DomainInputs, Vec<f64>>) = match (&input, &ce) {
        (Some(x), _) => (s.domain, Err(parse_numbers(x)?)),
        (None, Some(path)) => {
            let ce = read_counterexample(path)?;
            let v = DomainInputs::from_scalars(&ce.raw).ok_or_else(|| anyhow!("counterexample mixes domains"))?;
            (ce.domain, Ok(v))
        }
        (None, None) => bail!("give --input or --ce"),
    };
    let tables = ActivationTables::for_network(&net, &s.options.tables)?;
    let exec = Executor::new(&net, domain, &tables)?;
    let (trace, holds) = match &inputs {
        Err(x) => (exec.run_f64(x)?, cond.as_ref().map(|c| exec.holds_f64(c, x)).transpose()?),
        Ok(v) => (exec.run_domain(v)?, cond.as_ref().map(|c| exec.holds_domain(c, v)).transpose()?),
    };
    if s.json {
        let verdict = holds.map(|h| if h { "holds" } else { "violated" });
        println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "trace": trace, "verdict": verdict }))?);
    } else {
        print!("{}", replay_text(&trace, show_trace, holds));
    }
    Ok(if holds == Some(false) { 1 } else { 0 })
}

fn replay_text(t: &ScalarTrace, show_trace: bool, holds: Option<bool>) -> String {
    let join = |v: &[Scalar]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    let mut out = String::new();
    let _ = writeln!(out, "domain:  {}", t.domain);
    let _ = writeln!(out, "input:   {}", join(&t.inputs));
    if show_trace {
        for (l, (pre, post)) in t.pre.iter().zip(&t.post).enumerate() {
            let _ = writeln!(out, "layer {l} potential:  {}", join(pre));
            let _ = writeln!(out, "layer {l} activation: {}", join(post));
        }
    }
    for (i, y) in t.outputs.iter().enumerate() {
        let _ = writeln!(out, "y{i}:      {y}");
    }
    if t.wraps.is_empty() {
        let _ = writeln!(out, "wraps:   none");
    } else {
        let sites: Vec<String> = t.wraps.iter().map(wrap_text).collect();
        let _ = writeln!(out, "wraps:   {}", sites.join(", "));
    }
    if let Some(h) = holds {
        let _ = writeln!(out, "verdict: {}", if h { "holds" } else { "violated" });
    }
    out
}

fn wrap_text(w: &WrapSite) -> String {
    match *w {
        WrapSite::Input(i) => format!("input {i}"),
        WrapSite::Weight { layer, neuron, input } => format!("weight L{layer}N{neuron}[{input}]"),
        WrapSite::Bias { layer, neuron } => format!("bias L{layer}N{neuron}"),
        WrapSite::Product { layer, neuron, input } => format!("product L{layer}N{neuron}[{input}]"),
        WrapSite::Sum { layer, neuron, input } => format!("sum L{layer}N{neuron}[{input}]"),
        WrapSite::BiasAdd { layer, neuron } => format!("bias add L{layer}N{neuron}"),
        WrapSite::Activation { layer, neuron } => format!("activation L{layer}N{neuron}"),
    }
}

fn cmd_lut(
    activation: &str,
    table_fxp: Option<String>,
    check_points: usize,
    csv: Option<PathBuf>,
    out: Option<PathBuf>,
    s: &Settings,
) -> Result<Code> {
    let kind: ActivationKind = activation.parse()?;
    let cfg = &s.options.tables;
    let spec = default_spec(&kind, cfg.cutoff)?;
    let table = match cfg.grid_step {
        Some(step) => build_table_with_step(&spec, step)?,
        None => build_table(&spec, cfg.epsilon)?,
    };
    let grids: Vec<usize> = table
        .pieces
        .iter()
        .filter_map(|p| match p {
            TablePiece::Grid { inputs, .. } => Some(inputs.len()),
            TablePiece::Constant { .. } => None,
        })
        .collect();
    let tails = table.pieces.iter().filter(|p| matches!(p, TablePiece::Constant { .. })).count();
    // Dense check over twice the cutoff so both tails are covered too.
    let (lo, hi) = (-2.0 * cfg.cutoff, 2.0 * cfg.cutoff);
    let n = check_points.max(2);
    let max_err = (0..n)
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            (table.eval(u) - kind.eval(u)).abs()
        })
        .fold(0.0f64, f64::max);
    let fxp = match &table_fxp {
        Some(f) => Some(lut_to_fxp(&table, f.parse()?, s.rounding)?),
        None => None,
    };
    if s.json {
        let doc = serde_json::json!({
            "activation": kind.to_string(),
            "epsilon": table.epsilon,
            "cutoff": cfg.cutoff,
            "grid_samples": grids,
            "tail_constants": tails,
            "check_points": n,
            "max_error": max_err,
            "fxp": fxp.as_ref().map(|t| serde_json::json!({
                "format": t.format.to_string(), "entries": t.grid.len(), "wraps": t.wraps,
            })),
            "warnings": table.warnings,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        println!("activation: {kind}");
        match cfg.grid_step {
            Some(step) => println!("grid step:  {step}"),
            None => println!("epsilon:    {}", table.epsilon),
        }
        println!("cutoff:     {}", cfg.cutoff);
        for p in &table.pieces {
            match p {
                TablePiece::Constant { lo, hi, value, .. } => println!("constant    [{lo}, {hi}] -> {value}"),
                TablePiece::Grid { lo, hi, inputs, .. } => println!("samples     [{lo}, {hi}]: {}", inputs.len()),
            }
        }
        println!("tails:      {tails}");
        println!("max error:  {max_err:.3e} over {n} points in [{lo}, {hi}]");
        if let Some(t) = &fxp {
            println!("{}:      {} entries, {} wrapped", t.format, t.grid.len(), t.wraps);
        }
        for w in &table.warnings {
            println!("warning:    {w}");
        }
    }
    if let Some(path) = csv {
        fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = out {
        fs::write(&path, serde_json::to_string_pretty(&table)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn cmd_emit(p: &Problem, out: Option<PathBuf>, ssa: bool, dot: Option<PathBuf>, s: &Settings) -> Result<Code> {
    let (net, prop, opts) = problem(p, s)?;
    let program = build_program(&net, &prop, &opts)?;
    let text = if ssa { render(&program, true) } else { emit_smtlib(&program)? };
    write_or_print(out.as_deref(), &text)?;
    if let Some(path) = dot {
        fs::write(&path, to_dot(&program)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn cmd_export(ce: &Path, out: &Path, shape: Option<String>, region: Option<String>) -> Result<Code> {
    let ce = read_counterexample(ce)?;
    let shape = shape.as_deref().map(parse_shape).transpose()?;
    let region = match region {
        Some(r) => parse_region(&r)?,
        None => {
            let lo = ce.inputs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ce.inputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if ce.inputs.is_empty() {
                bail!("counterexample has no inputs");
            }
            HyperRect::new(vec![(lo, hi); ce.inputs.len()])?
        }
    };
    for path in export_counterexample(&ce, &region, shape, out)? {
        println!("wrote {}", path.display());
    }
    Ok(0)
}
