//! Command-line front end. Every subcommand validates its inputs first,
//! computes everything in memory, and only then writes its files into the
//! output directory (each one atomically, via a temporary file and rename).
//!
//! Exit status: 0 on success, 2 when the only outcome is a failed premise
//! (for example a fast block that is not Hurwitz), 1 on any other error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::builtin::{self, ExampleVariant};
use crate::criteria::{self, AnalysisReport, CheckOptions, ClaimStatus, Conclusion, SCHEMA_VERSION};
use crate::exponent::{self, Boundedness, EstimateOptions, ExponentEstimate, SearchOptions, Target};
use crate::linalg::{self, Matrix};
use crate::model::{self, DHurwitzReport, ParsedFamily, SwitchingSignal, SystemFamily};
use crate::reduced::{self, JumpSetKind, TimeGrid};
use crate::serde_ext::extended_opt_f64;
use crate::simulate::{self, SimOptions, Trajectory};
use crate::Error;

pub const LOG_ENV: &str = "SINGSTAB_LOG";
const DEFAULT_OUT: &str = "singstab-out";

// ---------------------------------------------------------------------------
// Arguments

#[derive(Debug, Clone, Parser)]
#[command(name = "singstab", version, about = "Stability analysis of singularly perturbed impulsive switched systems")]
pub struct RunConfig {
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = DEFAULT_OUT)]
    pub out: PathBuf,
    /// Validate inputs and print the execution plan without computing.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Write the output files without printing the summary.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse a system file and report conditioning and fast-block stability.
    Validate(ValidateArgs),
    /// Dump a generator family evaluated on its time grid.
    Reduce(ReduceArgs),
    /// Bound the maximal Lyapunov exponent of one of the four systems.
    Exponent(ExponentArgs),
    /// Simulate a trajectory along a switching signal.
    Simulate(SimulateArgs),
    /// Exponent bounds over a range of one parameter.
    Sweep(SweepArgs),
    /// Check a complementary two-mode construction built from a matrix set.
    Complementary(ComplementaryArgs),
    /// Measure the block-diagonal approximation error over eps and t grids.
    Approx(ApproxArgs),
    /// Run the built-in two-mode example in both variants.
    Example(ExampleArgs),
    /// Run every stability check on a family.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// Maximal word length in the product search.
    #[arg(long, default_value_t = exponent::DEFAULT_DEPTH, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..=64))]
    pub depth: usize,
    /// Maximal number of matrix products formed.
    #[arg(long, default_value_t = exponent::DEFAULT_BUDGET, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    /// Disallow switching from a mode to itself.
    #[arg(long)]
    pub forbid_self_switch: bool,
    /// Longest product of fast transients in the enriched jumps.
    #[arg(long, default_value_t = reduced::DEFAULT_N_MAX)]
    pub n_max: usize,
    /// Fast times sampled for the transient factors.
    #[arg(long, value_delimiter = ',', default_values_t = reduced::DEFAULT_S_GRID.to_vec())]
    pub s_grid: Vec<f64>,
    /// Product length used to classify jump semigroups when tau = 0.
    #[arg(long, default_value_t = 8, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..=32))]
    pub jump_depth: usize,
}

impl SearchArgs {
    fn search(&self) -> SearchOptions {
        SearchOptions {
            depth: self.depth,
            budget: self.budget,
            forbid_self_switch: self.forbid_self_switch,
        }
    }

    fn estimate(&self, eps: f64, mu: f64, grid: Option<TimeGrid>) -> EstimateOptions {
        EstimateOptions {
            eps,
            mu,
            grid,
            n_max: self.n_max,
            s_grid: self.s_grid.clone(),
            search: self.search(),
            jump_depth: self.jump_depth,
        }
    }

    fn check(&self, eps_grid: Vec<f64>, trend_periods: usize) -> CheckOptions {
        CheckOptions {
            eps_grid,
            search: self.search(),
            n_max: self.n_max,
            s_grid: self.s_grid.clone(),
            jump_depth: self.jump_depth,
            trend_periods,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = self.s_grid.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(CliError::usage(format!("--s-grid entries must be positive, got {s}")));
        }
        Ok(())
    }
}

/// The family a command works on: a system file, or a built-in one.
#[derive(Debug, Clone, Args)]
pub struct FamilyArgs {
    /// System file (JSON).
    pub input: Option<PathBuf>,
    /// Use the built-in two-mode example instead of a file.
    #[arg(long, value_enum, conflicts_with = "input")]
    pub example: Option<VariantArg>,
    /// Jump parameter of the built-in example.
    #[arg(long, default_value_t = 0.45)]
    pub r: f64,
    /// Override the family's dwell time.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Printed,
    Swapped,
}

impl From<VariantArg> for ExampleVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Printed => ExampleVariant::Printed,
            VariantArg::Swapped => ExampleVariant::Swapped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    #[value(name = "sigma-eps", alias = "eps")]
    SigmaEps,
    #[value(name = "sigma-bar", alias = "bar")]
    SigmaBar,
    #[value(name = "sigma-hat", alias = "hat")]
    SigmaHat,
    #[value(name = "sigma-tilde", alias = "tilde")]
    SigmaTilde,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::SigmaEps => Target::SigmaEps,
            TargetArg::SigmaBar => Target::SigmaBar,
            TargetArg::SigmaHat => Target::SigmaHat,
            TargetArg::SigmaTilde => Target::SigmaTilde,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    pub input: PathBuf,
    /// Also check a switching signal file against the family.
    #[arg(long)]
    pub signal: Option<PathBuf>,
    #[arg(long)]
    pub forbid_self_switch: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Time grid as `lo:hi:points_per_decade` (default: derived from tau).
    #[arg(long)]
    pub grid: Option<String>,
}

impl GridArgs {
    fn parse(&self) -> Result<Option<TimeGrid>, CliError> {
        let Some(spec) = &self.grid else { return Ok(None) };
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || CliError::usage(format!("--grid expects lo:hi:points_per_decade, got {spec:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let per: usize = parts[2].trim().parse().map_err(|_| bad())?;
        TimeGrid::log_spaced(lo, hi, per).map(Some).map_err(CliError::from)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    /// Generator family to evaluate.
    #[arg(long, value_enum, default_value = "sigma-bar")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = reduced::DEFAULT_N_MAX)]
    pub n_max: usize,
    #[arg(long, value_delimiter = ',', default_values_t = reduced::DEFAULT_S_GRID.to_vec())]
    pub s_grid: Vec<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExponentArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_enum, default_value = "sigma-bar")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    /// For the transient system, restrict to switching times.
    #[arg(long)]
    pub switching_times: bool,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
    Gnuplot,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_enum, default_value = "sigma-eps")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Signal file (JSON).
    #[arg(long, conflicts_with_all = ["periodic", "random"])]
    pub signal: Option<PathBuf>,
    /// Cycle through these modes with pieces of length `--piece`.
    #[arg(long, value_delimiter = ',')]
    pub periodic: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1.0)]
    pub piece: f64,
    /// Random signal with durations `tau + Exp(--mean-extra)`.
    #[arg(long, conflicts_with = "periodic")]
    pub random: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub mean_extra: f64,
    #[arg(long)]
    pub forbid_self_switch: bool,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![Format::Csv])]
    pub format: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    R,
    Eps,
    Tau,
    Mu,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::R => "r",
            SweepParam::Eps => "eps",
            SweepParam::Tau => "tau",
            SweepParam::Mu => "mu",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    #[arg(long, allow_negative_numbers = true)]
    pub from: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub to: f64,
    #[arg(long, default_value_t = 11)]
    pub steps: usize,
    #[arg(long, value_enum, default_value = "sigma-tilde")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ComplementaryArgs {
    /// JSON list of square matrices, each a list of rows.
    pub input: PathBuf,
    #[arg(long)]
    pub l: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Also run the sufficient checks on the built family.
    #[arg(long)]
    pub check_family: bool,
    #[arg(long, value_delimiter = ',', default_values_t = criteria::DEFAULT_EPS_GRID.to_vec())]
    pub eps: Vec<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-1, 1e-2, 1e-3, 1e-4])]
    pub eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0])]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mu: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ExampleArgs {
    /// Jump parameter for the diagnostics and the analyses.
    #[arg(long, default_value_t = 0.45)]
    pub r: f64,
    #[arg(long, default_value_t = 0.30)]
    pub from: f64,
    #[arg(long, default_value_t = 0.70)]
    pub to: f64,
    #[arg(long, default_value_t = 41)]
    pub steps: usize,
    /// Singular perturbation parameter of the trajectory.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.4)]
    pub piece: f64,
    #[arg(long, default_value_t = 8.0)]
    pub t_end: f64,
    #[arg(long, value_delimiter = ',', default_values_t = criteria::DEFAULT_EPS_GRID.to_vec())]
    pub eps_grid: Vec<f64>,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long, value_delimiter = ',', default_values_t = criteria::DEFAULT_EPS_GRID.to_vec())]
    pub eps: Vec<f64>,
    /// Periods simulated per eps for the reduced-limit trend; 0 skips it.
    #[arg(long, default_value_t = criteria::DEFAULT_TREND_PERIODS)]
    pub trend_periods: usize,
    #[command(flatten)]
    pub search: SearchArgs,
}

// ---------------------------------------------------------------------------
// Errors and outcomes

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn in_file(path: &Path, e: Error) -> Self {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Precondition(_)) { 2 } else { 1 };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// What a command produced, before anything touches the disk.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub stdout: String,
    /// Exit with status 2: nothing could be concluded because a premise failed.
    pub premise_violation_only: bool,
}

impl Outcome {
    fn file(&mut self, name: impl Into<String>, content: String) {
        self.files.push((name.into(), content));
    }

    fn code(&self) -> i32 {
        if self.premise_violation_only {
            2
        } else {
            0
        }
    }
}

/// Describes the work a command would do; printed by `--dry-run`.
#[derive(Debug, Default)]
struct Plan {
    steps: Vec<String>,
    files: Vec<String>,
}

impl Plan {
    fn step(&mut self, s: impl Into<String>) -> &mut Self {
        self.steps.push(s.into());
        self
    }

    fn writes(&mut self, name: impl Into<String>) -> &mut Self {
        self.files.push(name.into());
        self
    }

    fn render(&self, out: &Path) -> String {
        let mut s = String::from("plan:\n");
        for (i, step) in self.steps.iter().enumerate() {
            let _ = writeln!(s, "  {}. {step}", i + 1);
        }
        let _ = writeln!(s, "would write to {}:", out.display());
        for f in self.files.iter().chain(std::iter::once(&"metadata.json".to_string())) {
            let _ = writeln!(s, "  {f}");
        }
        s
    }
}

fn conclusions_violated_only(cs: &[Conclusion]) -> bool {
    !cs.iter().any(|c| c.status == ClaimStatus::Applied) && cs.iter().any(|c| c.status == ClaimStatus::ViolatedPremise)
}

// ---------------------------------------------------------------------------
// Entry points

/// Parses `args`, runs the command, prints errors, returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs one command and writes its files; returns the exit status.
pub fn run(config: &RunConfig) -> Result<i32, CliError> {
    let outcome = match &config.command {
        Command::Validate(a) => validate_cmd(a, config)?,
        Command::Reduce(a) => reduce_cmd(a, config)?,
        Command::Exponent(a) => exponent_cmd(a, config)?,
        Command::Simulate(a) => simulate_cmd(a, config)?,
        Command::Sweep(a) => sweep_cmd(a, config)?,
        Command::Complementary(a) => complementary_cmd(a, config)?,
        Command::Approx(a) => approx_cmd(a, config)?,
        Command::Example(a) => example_cmd(a, config)?,
        Command::Analyze(a) => analyze_cmd(a, config)?,
    };
    let Some(outcome) = outcome else { return Ok(0) };
    if !config.quiet {
        print!("{}", outcome.stdout);
    }
    write_outputs(&config.out, command_name(&config.command), &outcome.files)?;
    Ok(outcome.code())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate(_) => "validate",
        Command::Reduce(_) => "reduce",
        Command::Exponent(_) => "exponent",
        Command::Simulate(_) => "simulate",
        Command::Sweep(_) => "sweep",
        Command::Complementary(_) => "complementary",
        Command::Approx(_) => "approx",
        Command::Example(_) => "example",
        Command::Analyze(_) => "analyze",
    }
}

/// Prints the plan when `--dry-run` is set; `true` means stop here.
fn dry_run(config: &RunConfig, plan: &Plan) -> bool {
    if config.dry_run {
        print!("{}", plan.render(&config.out));
    }
    config.dry_run
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    timestamp_unix: u64,
    files: Vec<&'a str>,
}

fn write_outputs(dir: &Path, command: &str, files: &[(String, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::in_file(dir, e.into()))?;
    let timestamp_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = Metadata {
        tool: "singstab",
        version: env!("CARGO_PKG_VERSION"),
        command,
        timestamp_unix,
        files: files.iter().map(|(n, _)| n.as_str()).collect(),
    };
    let meta_json = to_json(&meta);
    for (name, content) in files.iter().map(|(n, c)| (n.as_str(), c)).chain([("metadata.json", &meta_json)]) {
        write_atomic(&dir.join(name), content.as_bytes())?;
        log::info!("wrote {}", dir.join(name).display());
    }
    Ok(())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let fail = |e: std::io::Error| CliError::in_file(path, e.into());
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Inputs

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::in_file(path, e.into()))
}

fn load_parsed(path: &Path) -> Result<ParsedFamily, CliError> {
    let parsed = model::parse_family(&read_text(path)?).map_err(|e| CliError::in_file(path, e))?;
    for w in &parsed.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(parsed)
}

fn load_signal(path: &Path) -> Result<SwitchingSignal, CliError> {
    model::parse_signal(&read_text(path)?).map_err(|e| CliError::in_file(path, e))
}

impl FamilyArgs {
    fn load(&self) -> Result<(SystemFamily, String), CliError> {
        let (family, source) = match (&self.input, self.example) {
            (Some(path), _) => (load_parsed(path)?.family, path.display().to_string()),
            (None, Some(v)) => {
                check_r(self.r)?;
                let v = ExampleVariant::from(v);
                (builtin::example_family(self.r, v), format!("built-in example ({}, r = {})", v.name(), self.r))
            }
            (None, None) => return Err(CliError::usage("give a system file or --example printed|swapped")),
        };
        match self.tau {
            Some(tau) => {
                if !(tau >= 0.0) || !tau.is_finite() {
                    return Err(CliError::usage(format!("--tau must be >= 0, got {tau}")));
                }
                Ok((family.with_tau(tau)?, format!("{source}, tau = {tau}")))
            }
            None => Ok((family, source)),
        }
    }
}

fn check_r(r: f64) -> Result<(), CliError> {
    if r.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("--r must be finite, got {r}")))
    }
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("eps must be positive, got {eps}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("{name} must be finite, got {v}")))
    }
}

// ---------------------------------------------------------------------------
// Formatting helpers

fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        String::new()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), fmt_f)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn describe_estimate(name: &str, e: &ExponentEstimate) -> String {
    let mut s = format!(
        "{name}: certified lower {}, upper {} ({}), abscissa floor {}, depth {}",
        fmt_f(e.certified_lower),
        fmt_f(e.heuristic_upper),
        if e.upper_grid_certified { "grid-certified" } else { "heuristic" },
        fmt_f(e.abscissa_floor),
        e.depth_reached
    );
    if let Some(w) = &e.witness {
        let _ = write!(s, ", witness of {} letters over time {:.6}", w.letters.len(), w.total_time);
    }
    s
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

// ---------------------------------------------------------------------------
// validate

#[derive(Serialize)]
struct SignalCheck {
    pieces: usize,
    admissible: bool,
    error: Option<String>,
}

#[derive(Serialize)]
struct ValidationReport {
    schema_version: u32,
    source: String,
    d: usize,
    modes: usize,
    tau: f64,
    l: Vec<usize>,
    p_conditions: Vec<f64>,
    d_hurwitz: DHurwitzReport,
    warnings: Vec<String>,
    signal: Option<SignalCheck>,
}

fn validate_cmd(a: &ValidateArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let parsed = load_parsed(&a.input)?;
    let signal = a.signal.as_deref().map(load_signal).transpose()?;
    let mut plan = Plan::default();
    plan.step("check fast-block stability of every mode").writes("validation.json");
    if signal.is_some() {
        plan.step("check signal admissibility");
    }
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let f = &parsed.family;
    let d_hurwitz = model::d_hurwitz_check(f);
    let signal_check = signal.map(|s| {
        let r = s.check_admissible(f.len(), f.tau(), a.forbid_self_switch);
        SignalCheck {
            pieces: s.pieces.len(),
            admissible: r.is_ok(),
            error: r.err().map(|e| e.to_string()),
        }
    });
    let report = ValidationReport {
        schema_version: SCHEMA_VERSION,
        source: a.input.display().to_string(),
        d: f.d(),
        modes: f.len(),
        tau: f.tau(),
        l: f.modes().iter().map(|m| m.l()).collect(),
        p_conditions: parsed.p_conditions.clone(),
        d_hurwitz,
        warnings: parsed.warnings.clone(),
        signal: signal_check,
    };
    let mut out = Outcome::default();
    let _ = writeln!(
        out.stdout,
        "{}: d = {}, {} mode{}, tau = {}",
        report.source,
        report.d,
        report.modes,
        if report.modes == 1 { "" } else { "s" },
        report.tau
    );
    for m in &report.d_hurwitz.modes {
        let _ = writeln!(
            out.stdout,
            "  mode {}: l = {}, cond(P) = {:.3e}, fast block abscissa {:.6} ({})",
            m.mode,
            report.l[m.mode],
            report.p_conditions[m.mode],
            m.abscissa,
            if m.pass { "Hurwitz" } else { "NOT Hurwitz" }
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out.stdout, "  warning: {w}");
    }
    if let Some(s) = &report.signal {
        if let Some(e) = &s.error {
            return Err(CliError::usage(format!("{}: {e}", a.signal.as_ref().unwrap().display())));
        }
        let _ = writeln!(out.stdout, "  signal: {} pieces, admissible", s.pieces);
    }
    out.premise_violation_only = !report.d_hurwitz.pass;
    out.file("validation.json", to_json(&report));
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// reduce

#[derive(Serialize)]
struct MemberDump {
    t: f64,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct TemplateDump {
    mode: usize,
    factor: Option<usize>,
    first_mode: usize,
    last_mode: usize,
    internal_self_switch: bool,
    members: Vec<MemberDump>,
}

#[derive(Serialize)]
struct GeneratorDump {
    schema_version: u32,
    label: &'static str,
    eps: Option<f64>,
    mu: f64,
    tau: f64,
    grid: Vec<f64>,
    factors: Vec<Vec<(usize, f64)>>,
    templates: Vec<TemplateDump>,
}

fn reduce_cmd(a: &ReduceArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let (f, source) = a.family.load()?;
    check_eps(a.eps)?;
    check_finite("--mu", a.mu)?;
    let grid = a.grid.parse()?.unwrap_or_else(|| TimeGrid::for_tau(f.tau()));
    let target = Target::from(a.target);
    let kind = target.family_kind();
    let name = format!("generators-{}.json", kind.label());
    let mut plan = Plan::default();
    plan.step(format!("build {} over {source} on {} grid points", kind.label(), grid.len()))
        .writes(&name);
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let mut opts = reduced::GeneratorOptions::new(grid);
    opts.eps = a.eps;
    opts.mu = a.mu;
    opts.n_max = a.n_max;
    opts.s_grid = a.s_grid.clone();
    let g = reduced::build_generators(&f, kind, &opts)?;
    let templates = g
        .templates
        .iter()
        .enumerate()
        .map(|(ti, tpl)| TemplateDump {
            mode: tpl.mode,
            factor: tpl.factor,
            first_mode: tpl.first_mode,
            last_mode: tpl.last_mode,
            internal_self_switch: tpl.internal_self_switch,
            members: g
                .grid
                .points
                .iter()
                .map(|&t| MemberDump {
                    t,
                    matrix: rows(&g.evaluate(ti, t)),
                })
                .collect(),
        })
        .collect();
    let dump = GeneratorDump {
        schema_version: SCHEMA_VERSION,
        label: kind.label(),
        eps: g.eps,
        mu: g.mu,
        tau: g.tau,
        grid: g.grid.points.clone(),
        factors: g.factors.iter().map(|fa| fa.recipe.clone()).collect(),
        templates,
    };
    let mut out = Outcome::default();
    let _ = writeln!(
        out.stdout,
        "{}: {} templates x {} grid points, {} transient factors",
        kind.label(),
        dump.templates.len(),
        dump.grid.len(),
        dump.factors.len()
    );
    out.file(name, to_json(&dump));
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// exponent

#[derive(Serialize)]
struct ExponentReport {
    schema_version: u32,
    source: String,
    target: Target,
    family: &'static str,
    eps: f64,
    mu: f64,
    tau: f64,
    depth: usize,
    budget: u64,
    forbid_self_switch: bool,
    verdict: exponent::Verdict,
    estimate: ExponentEstimate,
}

fn exponent_cmd(a: &ExponentArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let (f, source) = a.family.load()?;
    check_eps(a.eps)?;
    check_finite("--mu", a.mu)?;
    a.search.validate()?;
    let grid = a.grid.parse()?;
    let target = Target::from(a.target);
    if a.switching_times && target != Target::SigmaHat {
        return Err(CliError::usage("--switching-times only applies to sigma-hat"));
    }
    let family = if a.switching_times { "N-hat (switching times)" } else { target.family_kind().label() };
    let name = format!("exponent-{}.json", target.name());
    let mut plan = Plan::default();
    plan.step(format!(
        "bound the exponent of {} ({family}) for {source}, depth {}, budget {}",
        target.name(),
        a.search.depth,
        a.search.budget
    ))
    .writes(&name);
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let opts = a.search.estimate(a.eps, a.mu, grid);
    let estimate = if a.switching_times {
        exponent::lambda_tilde_hat(&f, &opts)?
    } else {
        exponent::lambda_estimate(&f, target, &opts)?
    };
    let report = ExponentReport {
        schema_version: SCHEMA_VERSION,
        source,
        target,
        family,
        eps: a.eps,
        mu: a.mu,
        tau: f.tau(),
        depth: a.search.depth,
        budget: a.search.budget,
        forbid_self_switch: a.search.forbid_self_switch,
        verdict: exponent::verdict(&estimate, true),
        estimate,
    };
    let mut out = Outcome::default();
    let _ = writeln!(out.stdout, "{}", describe_estimate(target.name(), &report.estimate));
    let _ = writeln!(out.stdout, "verdict: {:?}", report.verdict);
    out.file(name, to_json(&report));
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// simulate

fn simulate_cmd(a: &SimulateArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let (f, source) = a.family.load()?;
    check_eps(a.eps)?;
    let target = Target::from(a.target);
    let signal = if let Some(path) = &a.signal {
        load_signal(path)?
    } else if let Some(modes) = &a.periodic {
        simulate::make_periodic_signal(modes, a.piece, a.t_end, f.tau())?
    } else if a.random {
        simulate::make_random_signal(a.seed, f.len(), f.tau(), a.mean_extra, a.t_end, a.forbid_self_switch)?
    } else {
        return Err(CliError::usage("give --signal FILE, --periodic MODES or --random"));
    };
    signal.check_admissible(f.len(), f.tau(), a.forbid_self_switch)?;
    let x0 = if a.x0.is_empty() { vec![1.0; f.d()] } else { a.x0.clone() };
    if x0.len() != f.d() {
        return Err(CliError::usage(format!("--x0 has {} entries, the family has d = {}", x0.len(), f.d())));
    }
    let mut plan = Plan::default();
    plan.step(format!(
        "simulate {} of {source} on [0, {}] along {} switching times",
        target.name(),
        a.t_end,
        signal.pieces.len()
    ));
    for fmt in &a.format {
        plan.writes(trajectory_file(*fmt));
    }
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let opts = SimOptions {
        eps: a.eps,
        transient: None,
        forbid_self_switch: a.forbid_self_switch,
    };
    let tr = simulate::simulate(&f, &signal, target, &x0, a.t_end, a.dt, &opts)?;
    let mut out = Outcome::default();
    let last = tr.samples.last().expect("trajectory has samples");
    let norm = last.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let _ = writeln!(
        out.stdout,
        "{} samples, {} jumps, |x({})| = {norm:.6e}",
        tr.samples.len(),
        tr.jumps.len(),
        last.t
    );
    for fmt in &a.format {
        out.file(trajectory_file(*fmt), render_trajectory(&tr, *fmt)?);
    }
    Ok(Some(out))
}

fn trajectory_file(fmt: Format) -> &'static str {
    match fmt {
        Format::Csv => "trajectory.csv",
        Format::Json => "trajectory.json",
        Format::Svg => "trajectory.svg",
        Format::Gnuplot => "trajectory.dat",
    }
}

fn render_trajectory(tr: &Trajectory, fmt: Format) -> Result<String, CliError> {
    Ok(match fmt {
        Format::Csv => tr.to_csv(),
        Format::Json => to_json(tr),
        Format::Svg => tr.to_svg(),
        Format::Gnuplot => tr.to_gnuplot(Some(0), if tr.dim() > 1 { Some(1) } else { None })?,
    })
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(serialize_with = "extended_opt_f64")]
    pub certified_lower: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub heuristic_upper: Option<f64>,
    pub upper_grid_certified: Option<bool>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub abscissa_floor: Option<f64>,
    pub error: Option<String>,
}

/// Adjacent grid values between which a quantity changes sign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignChange {
    pub quantity: String,
    pub between: (f64, f64),
    pub from_positive: bool,
}

fn sign_changes(quantity: &str, points: &[(f64, Option<f64>)]) -> Vec<SignChange> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, bool)> = None;
    for &(x, v) in points {
        let Some(v) = v.filter(|v| !v.is_nan()) else { continue };
        let positive = v > 0.0;
        if let Some((px, pp)) = prev {
            if pp != positive {
                out.push(SignChange {
                    quantity: quantity.into(),
                    between: (px, x),
                    from_positive: pp,
                });
            }
        }
        prev = Some((x, positive));
    }
    out
}

fn linspace(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![from];
    }
    (0..steps)
        .map(|i| {
            if i + 1 == steps {
                to
            } else {
                let x = (from * (steps - 1 - i) as f64 + to * i as f64) / (steps - 1) as f64;
                // snap 0.32999999999999996 to 0.33 so reported values read cleanly
                if x.abs() < 1e3 {
                    (x * 1e12).round() / 1e12
                } else {
                    x
                }
            }
        })
        .collect()
}

#[derive(Serialize)]
struct SweepReport {
    schema_version: u32,
    source: String,
    target: Target,
    param: &'static str,
    rows: Vec<SweepRow>,
    sign_changes: Vec<SignChange>,
}

fn sweep_cmd(a: &SweepArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    check_finite("--from", a.from)?;
    check_finite("--to", a.to)?;
    if a.steps == 0 || a.steps > 10_000 {
        return Err(CliError::usage(format!("--steps must be in 1..=10000, got {}", a.steps)));
    }
    a.search.validate()?;
    let target = Target::from(a.target);
    let values = linspace(a.from, a.to, a.steps);
    let (base, source) = match a.param {
        SweepParam::R => {
            let Some(v) = a.family.example else {
                return Err(CliError::usage("--param r sweeps the built-in example; pass --example printed|swapped"));
            };
            (None, format!("built-in example ({})", ExampleVariant::from(v).name()))
        }
        _ => {
            let (f, s) = a.family.load()?;
            (Some(f), s)
        }
    };
    match a.param {
        SweepParam::Eps if values.iter().any(|v| !(*v > 0.0)) => {
            return Err(CliError::usage("eps values must be positive"));
        }
        SweepParam::Tau if values.iter().any(|v| !(*v >= 0.0)) => {
            return Err(CliError::usage("tau values must be nonnegative"));
        }
        _ => {}
    }
    if a.param != SweepParam::Eps {
        check_eps(a.eps)?;
    }
    let mut plan = Plan::default();
    plan.step(format!(
        "bound the exponent of {} for {source} at {} values of {} in [{}, {}]",
        target.name(),
        values.len(),
        a.param.name(),
        a.from,
        a.to
    ))
    .writes("sweep.csv")
    .writes("sweep.json");
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let variant = a.family.example.map(ExampleVariant::from);
    let tau_override = a.family.tau;
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| {
            let result = (|| -> crate::Result<ExponentEstimate> {
                let (f, eps, mu) = match a.param {
                    SweepParam::R => {
                        let f = builtin::example_family(v, variant.expect("checked above"));
                        let f = match tau_override {
                            Some(t) => f.with_tau(t)?,
                            None => f,
                        };
                        (f, a.eps, a.mu)
                    }
                    SweepParam::Eps => (base.clone().unwrap(), v, a.mu),
                    SweepParam::Tau => (base.as_ref().unwrap().with_tau(v)?, a.eps, a.mu),
                    SweepParam::Mu => (base.clone().unwrap(), a.eps, v),
                };
                exponent::lambda_estimate(&f, target, &a.search.estimate(eps, mu, None))
            })();
            match result {
                Ok(e) => SweepRow {
                    value: v,
                    certified_lower: Some(e.certified_lower),
                    heuristic_upper: Some(e.heuristic_upper),
                    upper_grid_certified: Some(e.upper_grid_certified),
                    abscissa_floor: Some(e.abscissa_floor),
                    error: None,
                },
                Err(e) => SweepRow {
                    value: v,
                    certified_lower: None,
                    heuristic_upper: None,
                    upper_grid_certified: None,
                    abscissa_floor: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let lower: Vec<(f64, Option<f64>)> = rows.iter().map(|r| (r.value, r.certified_lower)).collect();
    let upper: Vec<(f64, Option<f64>)> = rows.iter().map(|r| (r.value, r.heuristic_upper)).collect();
    let mut changes = sign_changes("certified_lower", &lower);
    changes.extend(sign_changes("heuristic_upper", &upper));

    let mut csv = format!("{},certified_lower,heuristic_upper,upper_grid_certified,abscissa_floor,error\n", a.param.name());
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_f(r.value),
            fmt_opt(r.certified_lower),
            fmt_opt(r.heuristic_upper),
            r.upper_grid_certified.map_or(String::new(), |b| b.to_string()),
            fmt_opt(r.abscissa_floor),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    let mut out = Outcome::default();
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let _ = writeln!(out.stdout, "{} values of {}, {failed} failed", rows.len(), a.param.name());
    for c in &changes {
        let _ = writeln!(out.stdout, "  {} changes sign between {} and {}", c.quantity, c.between.0, c.between.1);
    }
    if changes.is_empty() {
        let _ = writeln!(out.stdout, "  no sign change observed");
    }
    out.premise_violation_only = failed == rows.len()
        && rows.iter().all(|r| r.error.as_deref().is_some_and(|e| e.starts_with("precondition failed")));
    out.file("sweep.csv", csv);
    out.file(
        "sweep.json",
        to_json(&SweepReport {
            schema_version: SCHEMA_VERSION,
            source,
            target,
            param: a.param.name(),
            rows,
            sign_changes: changes,
        }),
    );
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// complementary

fn load_matrix_set(path: &Path) -> Result<Vec<Matrix>, CliError> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let raw: Vec<Vec<Vec<f64>>> = serde_path_to_error::deserialize(de).map_err(|e| {
        let p = e.path().to_string();
        CliError::in_file(
            path,
            Error::Schema {
                path: p,
                message: e.into_inner().to_string(),
            },
        )
    })?;
    if raw.is_empty() {
        return Err(CliError::usage(format!("{}: the matrix list is empty", path.display())));
    }
    raw.iter()
        .enumerate()
        .map(|(k, m)| {
            let d = m.len();
            if d == 0 || m.iter().any(|row| row.len() != d) {
                return Err(CliError::usage(format!("{}: [{k}] is not a nonempty square matrix", path.display())));
            }
            let mat = Matrix::from_fn(d, d, |i, j| m[i][j]);
            linalg::ensure_finite(&mat, &format!("[{k}]")).map_err(|e| CliError::in_file(path, e))?;
            Ok(mat)
        })
        .collect()
}

#[derive(Serialize)]
struct ComplementaryOutput {
    schema_version: u32,
    source: String,
    l: usize,
    tau: f64,
    report: criteria::ComplementaryReport,
    family_conclusions: Option<Vec<Conclusion>>,
}

fn complementary_cmd(a: &ComplementaryArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let m_set = load_matrix_set(&a.input)?;
    if !(a.tau >= 0.0) || !a.tau.is_finite() {
        return Err(CliError::usage(format!("--tau must be >= 0, got {}", a.tau)));
    }
    a.search.validate()?;
    for e in &a.eps {
        check_eps(*e)?;
    }
    let family = criteria::build_complementary_family(&m_set, a.l, a.tau).map_err(|e| CliError::in_file(&a.input, e))?;
    let mut plan = Plan::default();
    plan.step(format!("check {} matrices with l = {} ({} modes)", m_set.len(), a.l, family.len()))
        .writes("complementary.json");
    if a.check_family {
        plan.step("run the sufficient checks on the built family");
    }
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let report = criteria::prop2_check(&m_set, a.l, a.tau)?;
    let family_conclusions = if a.check_family {
        Some(criteria::sufficient_check(&family, &a.search.check(a.eps.clone(), 0))?)
    } else {
        None
    };
    let mut out = Outcome::default();
    let _ = writeln!(
        out.stdout,
        "verdict {:?}; max diagonal-block abscissa {:.6}",
        report.verdict, report.max_block_abscissa
    );
    for c in report.conclusions.iter().chain(family_conclusions.iter().flatten()) {
        let _ = writeln!(out.stdout, "  {}: {:?}, {}", c.claim, c.status, c.justification);
    }
    let mut all = report.conclusions.clone();
    all.extend(family_conclusions.iter().flatten().cloned());
    out.premise_violation_only = conclusions_violated_only(&all);
    out.file(
        "complementary.json",
        to_json(&ComplementaryOutput {
            schema_version: SCHEMA_VERSION,
            source: a.input.display().to_string(),
            l: a.l,
            tau: a.tau,
            report,
            family_conclusions,
        }),
    );
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// approx

fn approx_cmd(a: &ApproxArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let (f, source) = a.family.load()?;
    check_finite("--mu", a.mu)?;
    if a.eps.is_empty() || a.t.is_empty() {
        return Err(CliError::usage("--eps and --t need at least one value each"));
    }
    let mut plan = Plan::default();
    plan.step(format!(
        "measure flow deviations for {source} on {} eps x {} t values",
        a.eps.len(),
        a.t.len()
    ))
    .writes("approx.csv")
    .writes("approx.json");
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let report = criteria::approx_validate(&f, &a.eps, &a.t, a.mu)?;
    let mut out = Outcome::default();
    let _ = writeln!(
        out.stdout,
        "fitted K = {:.6e} (long {:.6e}, short {:.6e}), split constant {:.3}",
        report.fitted_k, report.fitted_k_long, report.fitted_k_short, report.split_constant
    );
    for (eps, r) in &report.ratio_by_eps {
        let _ = writeln!(out.stdout, "  eps {eps}: max ratio {r:.6e}");
    }
    if report.diverging {
        let _ = writeln!(out.stdout, "  ratios grow as eps decreases");
    }
    out.file("approx.csv", report.to_csv());
    out.file("approx.json", to_json(&report));
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// analyze

fn analyze_cmd(a: &AnalyzeArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    let (f, source) = a.family.load()?;
    a.search.validate()?;
    for e in &a.eps {
        check_eps(*e)?;
    }
    let mut plan = Plan::default();
    plan.step(format!("check fast-block stability and jump boundedness of {source}"))
        .step("bound the reduced, transient and enriched exponents")
        .step(format!("bound the full exponent on {} eps values", a.eps.len()))
        .step("derive conclusions")
        .writes("analysis.json")
        .writes("analysis.txt");
    if dry_run(config, &plan) {
        return Ok(None);
    }
    let report = criteria::analyze(&f, &a.search.check(a.eps.clone(), a.trend_periods))?;
    let mut out = Outcome::default();
    let summary = report.summary();
    out.stdout.push_str(&summary);
    out.premise_violation_only = conclusions_violated_only(&report.conclusions);
    out.file("analysis.json", to_json(&report));
    out.file("analysis.txt", summary);
    Ok(Some(out))
}

// ---------------------------------------------------------------------------
// example

#[derive(Debug, Clone, Serialize)]
pub struct ModeDiagnostics {
    pub mode: usize,
    pub fast_block: Vec<Vec<f64>>,
    pub fast_block_abscissa: f64,
    pub fast_block_hurwitz: bool,
    pub jump_spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantDiagnostics {
    pub variant: ExampleVariant,
    pub r: f64,
    pub modes: Vec<ModeDiagnostics>,
    pub d_hurwitz: bool,
}

pub fn variant_diagnostics(r: f64, variant: ExampleVariant) -> VariantDiagnostics {
    let f = builtin::example_family(r, variant);
    let modes: Vec<ModeDiagnostics> = f
        .modes()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let d = m.abcd().d;
            let a = linalg::spectral_abscissa(&d);
            ModeDiagnostics {
                mode: i,
                fast_block: rows(&d),
                fast_block_abscissa: a,
                fast_block_hurwitz: a < 0.0,
                jump_spectral_radius: linalg::spectral_radius(m.r()),
            }
        })
        .collect();
    let d_hurwitz = modes.iter().all(|m| m.fast_block_hurwitz);
    VariantDiagnostics {
        variant,
        r,
        modes,
        d_hurwitz,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RSweepRow {
    pub r: f64,
    #[serde(serialize_with = "extended_opt_f64")]
    pub tilde_lower: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub tilde_upper: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub tilde_floor: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub tilde_hat_lower: Option<f64>,
    #[serde(serialize_with = "extended_opt_f64")]
    pub tilde_hat_upper: Option<f64>,
    /// Boundedness of the semigroup generated by the jumps.
    pub jumps: Boundedness,
    pub jumps_spectral_radius: f64,
    /// The same, without self-switches.
    pub jumps_forbid_self: Boundedness,
    pub jumps_forbid_self_spectral_radius: f64,
    pub error: Option<String>,
}

fn status_name(b: Boundedness) -> &'static str {
    match b {
        Boundedness::Bounded => "bounded",
        Boundedness::Unbounded => "unbounded",
        Boundedness::Inconclusive => "inconclusive",
    }
}

/// Sweeps the swapped example over `rs`, in parallel but in input order.
pub fn example_r_sweep(rs: &[f64], search: &SearchOptions, n_max: usize, s_grid: &[f64], jump_depth: usize) -> Vec<RSweepRow> {
    rs.par_iter()
        .map(|&r| {
            let f = builtin::example_family(r, ExampleVariant::Swapped);
            let opts = EstimateOptions {
                eps: 0.1,
                mu: 0.0,
                grid: None,
                n_max,
                s_grid: s_grid.to_vec(),
                search: search.clone(),
                jump_depth,
            };
            let tilde = exponent::lambda_estimate(&f, Target::SigmaTilde, &opts);
            let tilde_hat = exponent::lambda_tilde_hat(&f, &opts);
            let y = reduced::build_jump_set(&f, JumpSetKind::R, &[]).expect("identity jumps build");
            let plain = SearchOptions {
                forbid_self_switch: false,
                ..search.clone()
            };
            let forbid = SearchOptions {
                forbid_self_switch: true,
                ..search.clone()
            };
            let xi = exponent::classify_discrete(&y, jump_depth, &plain);
            let xi_forbid = exponent::classify_discrete(&y, jump_depth, &forbid);
            let mut errors = Vec::new();
            let (tl, tu, tf) = match &tilde {
                Ok(e) => (Some(e.certified_lower), Some(e.heuristic_upper), Some(e.abscissa_floor)),
                Err(e) => {
                    errors.push(format!("sigma-tilde: {e}"));
                    (None, None, None)
                }
            };
            let (hl, hu) = match &tilde_hat {
                Ok(e) => (Some(e.certified_lower), Some(e.heuristic_upper)),
                Err(e) => {
                    errors.push(format!("tilde-hat: {e}"));
                    (None, None)
                }
            };
            RSweepRow {
                r,
                tilde_lower: tl,
                tilde_upper: tu,
                tilde_floor: tf,
                tilde_hat_lower: hl,
                tilde_hat_upper: hu,
                jumps: xi.status,
                jumps_spectral_radius: xi.best_spectral_radius,
                jumps_forbid_self: xi_forbid.status,
                jumps_forbid_self_spectral_radius: xi_forbid.best_spectral_radius,
                error: if errors.is_empty() { None } else { Some(errors.join("; ")) },
            }
        })
        .collect()
}

/// Adjacent values of `r` between which a boundedness status changes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusChange {
    pub quantity: String,
    pub between: (f64, f64),
    pub from: Boundedness,
    pub to: Boundedness,
}

fn status_changes(quantity: &str, points: &[(f64, Boundedness)]) -> Vec<StatusChange> {
    points
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| StatusChange {
            quantity: quantity.into(),
            between: (w[0].0, w[1].0),
            from: w[0].1,
            to: w[1].1,
        })
        .collect()
}

#[derive(Serialize)]
struct ExampleReport {
    schema_version: u32,
    r: f64,
    printed: VariantDiagnostics,
    swapped: VariantDiagnostics,
    r_sweep: Vec<RSweepRow>,
    sign_changes: Vec<SignChange>,
    status_changes: Vec<StatusChange>,
    trajectory: TrajectorySpec,
    analyses: Vec<String>,
}

#[derive(Serialize)]
struct TrajectorySpec {
    variant: ExampleVariant,
    r: f64,
    eps: f64,
    modes: Vec<usize>,
    piece: f64,
    x0: Vec<f64>,
    t_end: f64,
    files: Vec<&'static str>,
}

fn r_sweep_csv(rows: &[RSweepRow]) -> String {
    let mut csv = String::from(
        "r,tilde_lower,tilde_upper,tilde_floor,tilde_hat_lower,tilde_hat_upper,jumps,jumps_rho,jumps_forbid_self,jumps_forbid_self_rho,error\n",
    );
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f(r.r),
            fmt_opt(r.tilde_lower),
            fmt_opt(r.tilde_upper),
            fmt_opt(r.tilde_floor),
            fmt_opt(r.tilde_hat_lower),
            fmt_opt(r.tilde_hat_upper),
            status_name(r.jumps),
            fmt_f(r.jumps_spectral_radius),
            status_name(r.jumps_forbid_self),
            fmt_f(r.jumps_forbid_self_spectral_radius),
            csv_field(r.error.as_deref().unwrap_or(""))
        );
    }
    csv
}

fn example_cmd(a: &ExampleArgs, config: &RunConfig) -> Result<Option<Outcome>, CliError> {
    check_r(a.r)?;
    check_finite("--from", a.from)?;
    check_finite("--to", a.to)?;
    check_eps(a.eps)?;
    if a.steps == 0 || a.steps > 10_000 {
        return Err(CliError::usage(format!("--steps must be in 1..=10000, got {}", a.steps)));
    }
    if !(a.t_end > 0.0) || !(a.piece > 0.0) {
        return Err(CliError::usage("--t-end and --piece must be positive"));
    }
    for e in &a.eps_grid {
        check_eps(*e)?;
    }
    a.search.validate()?;
    let rs = linspace(a.from, a.to, a.steps);
    let mut plan = Plan::default();
    plan.step(format!("fast-block and jump diagnostics of both variants at r = {}", a.r))
        .step(format!("analyze both variants at r = {}", a.r))
        .step(format!("sweep the swapped variant over {} values of r in [{}, {}]", rs.len(), a.from, a.to))
        .step(format!(
            "simulate the printed variant at eps = {} on [0, {}] with pieces of {}",
            a.eps, a.t_end, a.piece
        ))
        .writes("example.json")
        .writes("example.txt")
        .writes("analysis-printed.json")
        .writes("analysis-swapped.json")
        .writes("r-sweep.csv")
        .writes("trajectory.csv")
        .writes("trajectory.svg");
    if dry_run(config, &plan) {
        return Ok(None);
    }

    let printed = variant_diagnostics(a.r, ExampleVariant::Printed);
    let swapped = variant_diagnostics(a.r, ExampleVariant::Swapped);
    let check = a.search.check(a.eps_grid.clone(), criteria::DEFAULT_TREND_PERIODS);
    let analyses: Vec<(ExampleVariant, crate::Result<AnalysisReport>)> = [ExampleVariant::Printed, ExampleVariant::Swapped]
        .par_iter()
        .map(|&v| (v, criteria::analyze(&builtin::example_family(a.r, v), &check)))
        .collect();
    let r_sweep = example_r_sweep(&rs, &a.search.search(), a.search.n_max, &a.search.s_grid, a.search.jump_depth);

    let mut changes = sign_changes(
        "tilde_lower",
        &r_sweep.iter().map(|r| (r.r, r.tilde_lower)).collect::<Vec<_>>(),
    );
    changes.extend(sign_changes(
        "tilde_upper",
        &r_sweep.iter().map(|r| (r.r, r.tilde_upper)).collect::<Vec<_>>(),
    ));
    changes.extend(sign_changes(
        "tilde_hat_upper",
        &r_sweep.iter().map(|r| (r.r, r.tilde_hat_upper)).collect::<Vec<_>>(),
    ));
    let mut statuses = status_changes("jumps", &r_sweep.iter().map(|r| (r.r, r.jumps)).collect::<Vec<_>>());
    statuses.extend(status_changes(
        "jumps_forbid_self",
        &r_sweep.iter().map(|r| (r.r, r.jumps_forbid_self)).collect::<Vec<_>>(),
    ));

    let fig = builtin::example_family(a.r, ExampleVariant::Printed);
    let modes = vec![0, 1];
    let x0 = vec![1.0, 1.0];
    let signal = simulate::make_periodic_signal(&modes, a.piece, a.t_end, fig.tau())?;
    let tr = simulate::simulate(
        &fig,
        &signal,
        Target::SigmaEps,
        &x0,
        a.t_end,
        0.01,
        &SimOptions {
            eps: a.eps,
            ..SimOptions::default()
        },
    )?;

    let mut out = Outcome::default();
    let mut text = String::new();
    for v in [&printed, &swapped] {
        let _ = writeln!(text, "{} variant, r = {}:", v.variant.name(), v.r);
        for m in &v.modes {
            let _ = writeln!(
                text,
                "  mode {}: D = {:?} (abscissa {}, {}), rho(R) = {}",
                m.mode + 1,
                m.fast_block,
                m.fast_block_abscissa,
                if m.fast_block_hurwitz { "Hurwitz" } else { "NOT Hurwitz" },
                m.jump_spectral_radius
            );
        }
        let _ = writeln!(text, "  all fast blocks Hurwitz: {}", v.d_hurwitz);
    }
    let _ = writeln!(text, "r-sweep of the swapped variant over {} values:", r_sweep.len());
    for c in &changes {
        let _ = writeln!(text, "  {} changes sign between r = {} and r = {}", c.quantity, c.between.0, c.between.1);
    }
    for c in &statuses {
        let _ = writeln!(
            text,
            "  {} goes from {} to {} between r = {} and r = {}",
            c.quantity,
            status_name(c.from),
            status_name(c.to),
            c.between.0,
            c.between.1
        );
    }
    if changes.is_empty() {
        let _ = writeln!(text, "  no sign change of the exponent bounds");
    }
    let _ = writeln!(
        text,
        "trajectory: printed variant, eps = {}, {} samples, {} jumps on [0, {}]",
        a.eps,
        tr.samples.len(),
        tr.jumps.len(),
        a.t_end
    );

    let mut analysis_names = Vec::new();
    for (v, rep) in analyses {
        let name = format!("analysis-{}.json", v.name());
        match rep {
            Ok(rep) => {
                let _ = writeln!(text, "analysis of the {} variant:", v.name());
                for line in rep.summary().lines() {
                    let _ = writeln!(text, "  {line}");
                }
                out.file(&name, to_json(&rep));
                analysis_names.push(name);
            }
            Err(e) => {
                let _ = writeln!(text, "analysis of the {} variant failed: {e}", v.name());
            }
        }
    }

    let report = ExampleReport {
        schema_version: SCHEMA_VERSION,
        r: a.r,
        printed,
        swapped,
        r_sweep: r_sweep.clone(),
        sign_changes: changes,
        status_changes: statuses,
        trajectory: TrajectorySpec {
            variant: ExampleVariant::Printed,
            r: a.r,
            eps: a.eps,
            modes,
            piece: a.piece,
            x0,
            t_end: a.t_end,
            files: vec!["trajectory.csv", "trajectory.svg"],
        },
        analyses: analysis_names,
    };
    out.stdout.push_str(&text);
    out.file("example.json", to_json(&report));
    out.file("example.txt", text);
    out.file("r-sweep.csv", r_sweep_csv(&r_sweep));
    out.file("trajectory.csv", tr.to_csv());
    out.file("trajectory.svg", tr.to_svg());
    Ok(Some(out))
}
