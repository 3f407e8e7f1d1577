use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Bit-exact SMT verification of quantized neural networks.
#[derive(Debug, Parser)]
#[command(name = "qnnv", version, about, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Global {
    /// Fixed-point format, e.g. Q4.6 (integer bits including sign, fraction bits).
    #[arg(long, global = true, value_name = "Q<k>.<l>", conflicts_with_all = ["float32", "real"])]
    pub fxp: Option<String>,
    /// IEEE single precision with round-nearest-even.
    #[arg(long, global = true, conflicts_with = "real")]
    pub float32: bool,
    /// Exact rational arithmetic.
    #[arg(long, global = true)]
    pub real: bool,
    /// Fixed-point rounding of products and quantized constants.
    #[arg(long, global = true, value_name = "trunc|nearest")]
    pub rounding: Option<String>,
    /// Lookup-table error bound for sigmoid and tanh.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Lookup-table cutoff; outside [-c, c] the activation is constant.
    #[arg(long, global = true)]
    pub cutoff: Option<f64>,
    /// Fixed sample spacing for lookup tables instead of the error budget.
    #[arg(long = "grid-step", global = true, value_name = "STEP")]
    pub grid_step: Option<f64>,
    /// SMT-LIB 2 solver executable (default z3).
    #[arg(long, global = true, value_name = "PATH")]
    pub solver: Option<PathBuf>,
    /// Extra solver argument; repeatable.
    #[arg(long = "solver-arg", global = true, value_name = "ARG", allow_hyphen_values = true)]
    pub solver_args: Vec<String>,
    /// Solver time limit in seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    pub timeout: Option<f64>,
    /// Parallel verification tasks for sweep.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long = "no-slice", global = true)]
    pub no_slice: bool,
    #[arg(long = "no-simplify", global = true)]
    pub no_simplify: bool,
    #[arg(long = "no-balance", global = true)]
    pub no_balance: bool,
    #[arg(long = "no-intervals", global = true)]
    pub no_intervals: bool,
    /// Also reassociate float sums (changes float semantics).
    #[arg(long = "unsafe-balance", global = true)]
    pub unsafe_balance: bool,
    /// Add interval facts on activation outputs too.
    #[arg(long = "both-bounds", global = true)]
    pub both_bounds: bool,
    /// TOML configuration; defaults to ./qnnv.toml when present.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

/// Network and property selection shared by most commands.
#[derive(Debug, Clone, Args)]
pub struct Problem {
    /// `.nnet` file, or `bundled:small`, `bundled:guarded`, `bundled:glyph[:SEED]`,
    /// `bundled:random:SEED:N0xN1x...[:ACT]`.
    #[arg(long, value_name = "NET")]
    pub net: String,
    /// Property JSON: {"input": [{"lo":..,"hi":..}, ...], "assert": "..."}.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["region", "point"])]
    pub prop: Option<PathBuf>,
    /// Input box as `lo:hi,lo:hi,...`.
    #[arg(long, value_name = "BOX")]
    pub region: Option<String>,
    /// Single input point as `x0,x1,...`.
    #[arg(long, value_name = "X", conflicts_with = "region")]
    pub point: Option<String>,
    /// Output condition, e.g. `y0 >= 2.7 && y1 < y0`.
    #[arg(long = "assert", value_name = "EXPR")]
    pub assertion: Option<String>,
    /// Apply the network file's input normalization.
    #[arg(long)]
    pub normalize: bool,
    /// SSA base names as `inputs;layer0;layer1...`, e.g. `x,y;a,b,f`.
    #[arg(long, value_name = "NAMES")]
    pub names: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify a property; exit 0 safe, 1 falsified, 2 unknown.
    Verify {
        #[command(flatten)]
        problem: Problem,
        /// Write the counterexample to STEM.json (and STEM.pgm with --shape).
        #[arg(long, value_name = "STEM")]
        export_ce: Option<PathBuf>,
        /// Image shape HxW for the exported counterexample.
        #[arg(long, value_name = "HxW")]
        shape: Option<String>,
    },
    /// Verify across fixed-point widths.
    Sweep {
        #[command(flatten)]
        problem: Problem,
        /// Total widths: `6..16`, `8,12,16` or a mix.
        #[arg(long, value_name = "LIST", conflicts_with = "formats")]
        widths: Option<String>,
        /// Explicit formats: `Q4.4,Q8.8`.
        #[arg(long, value_name = "LIST")]
        formats: Option<String>,
        /// Also write the table as CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Interval bounds, decided ReLU guards and the range report.
    Intervals {
        #[command(flatten)]
        problem: Problem,
    },
    /// Run the bit-exact executor on one input.
    Replay {
        /// `.nnet` file or bundled network.
        #[arg(long)]
        net: String,
        /// Input as `x0,x1,...`.
        #[arg(long, value_name = "X", conflicts_with = "ce", required_unless_present = "ce")]
        input: Option<String>,
        /// Counterexample JSON from verify or export-ce; replays its exact values.
        #[arg(long, value_name = "FILE")]
        ce: Option<PathBuf>,
        /// Condition to check on the outputs.
        #[arg(long = "assert", value_name = "EXPR")]
        assertion: Option<String>,
        /// Property JSON whose condition is checked.
        #[arg(long, value_name = "FILE", conflicts_with = "assertion")]
        prop: Option<PathBuf>,
        /// Print every potential and activation.
        #[arg(long)]
        trace: bool,
        /// Apply the network file's input normalization.
        #[arg(long)]
        normalize: bool,
    },
    /// Lookup-table tools.
    Lut {
        #[command(subcommand)]
        cmd: LutCommand,
    },
    /// Write the SMT-LIB script the verifier would solve.
    EmitSmt {
        #[command(flatten)]
        problem: Problem,
        /// Output file; stdout when absent.
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Print the optimized SSA program instead.
        #[arg(long)]
        ssa: bool,
        /// Also write the expression DAG in Graphviz format.
        #[arg(long, value_name = "FILE")]
        dot: Option<PathBuf>,
    },
    /// Export a stored counterexample as JSON and an optional PGM image.
    ExportCe {
        /// Counterexample JSON or a verify --json report.
        #[arg(long, value_name = "FILE")]
        ce: PathBuf,
        /// Output path without extension.
        #[arg(long, value_name = "STEM")]
        out: PathBuf,
        /// Image shape HxW.
        #[arg(long, value_name = "HxW")]
        shape: Option<String>,
        /// Region used to scale pixel values; defaults to the inputs' own range.
        #[arg(long, value_name = "BOX")]
        region: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum LutCommand {
    /// Sample an activation within the error bound and report the table.
    Build {
        #[arg(long, default_value = "sigmoid")]
        activation: String,
        /// Fixed-point format to also realize the table in.
        #[arg(long = "table-fxp", value_name = "Q<k>.<l>")]
        table_fxp: Option<String>,
        /// Dense-grid points for the error check.
        #[arg(long, default_value_t = 1_000_000)]
        check_points: usize,
        /// Write the sample points as CSV.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        /// Write the table as JSON.
        #[arg(short, long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}
