//! Command-line front end.
//!
//! Every subcommand reads an optional flat TOML config (`--config`); flags
//! take precedence over file values. Exit codes: `0` success, `2` argument
//! or config error, `3` input-data error, `4` numeric failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::covert::{max_covert_rate, scaling_table, write_scaling_csv, CovertnessSpec, KFunction};
use crate::detect::{decide, InitialMode};
use crate::error::{Error, ErrorKind, Result};
use crate::experiment::{self, run_campaign, threshold_sweep, with_threads, CampaignConfig};
use crate::exponent::{self, ExponentReport, DEFAULT_TOL};
use crate::model::{transition_matrix, Hypothesis, ModelParams};
use crate::rng::RngSeed;
use crate::sim::{simulate_sequence_with, simulate_trace_with, ObservationSequence, SimOptions};

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "COVQ_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ARGUMENT: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Tolerances of `exponent --self-check`.
pub const SELF_CHECK_V_TOL: f64 = 1e-8;
pub const SELF_CHECK_I_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "covq",
    version,
    about = "Covert queueing analysis for a bufferless M/M/1/1 server"
)]
pub struct Cli {
    /// Flat TOML config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker thread cap for parallel Monte Carlo.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the busy/idle sequence seen by N arrivals.
    Simulate(SimulateArgs),
    /// Run the log-likelihood-ratio test on a sequence file.
    Detect(DetectArgs),
    /// Closed-form, numeric and Taylor error exponents.
    Exponent(ExponentArgs),
    /// Largest covert Nillie rate and its scaling in N.
    Bound(BoundArgs),
    /// Error probabilities across N with fitted decay rates.
    Campaign(CampaignArgs),
    /// Error trade-off across detection thresholds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SequenceFormat {
    Auto,
    Text,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KFamily {
    Constant,
    Power,
}

#[derive(Debug, Clone, Args, Default)]
pub struct RateArgs {
    #[arg(long)]
    pub lambda_w: Option<f64>,
    #[arg(long)]
    pub lambda_b: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Reject rates with mu <= lambda_w + lambda_b instead of warning.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long, value_parser = parse_hypothesis)]
    pub hyp: Option<Hypothesis>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stream: Option<u64>,
    /// Leading arrivals discarded before recording.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Sequence file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SequenceFormat::Text)]
    pub format: SequenceFormat,
    /// Also write the arrival trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    /// Sequence file (text or packed binary).
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long, value_enum, default_value_t = Initial::Stationary)]
    pub initial: Initial,
    #[arg(long, value_enum, default_value_t = SequenceFormat::Auto)]
    pub format: SequenceFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Initial {
    Stationary,
    Conditioned,
}

impl From<Initial> for InitialMode {
    fn from(i: Initial) -> Self {
        match i {
            Initial::Stationary => InitialMode::Stationary,
            Initial::Conditioned => InitialMode::Conditioned,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExponentArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    /// Golden-section tolerance on u.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Exit with code 4 if the closed-form and numeric routes disagree.
    #[arg(long)]
    pub self_check: bool,
    /// Comma-separated Nillie rates to sweep instead of a single point.
    #[arg(long, value_delimiter = ',')]
    pub sweep_lambda_b: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub lambda_w: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, value_enum)]
    pub k_family: Option<KFamily>,
    #[arg(long)]
    pub k0: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Comma-separated N values for the scaling table.
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub n_grid: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Force Monte Carlo even where the exact computation applies.
    #[arg(long)]
    pub monte_carlo: bool,
    /// Result JSON path; rows CSV is written beside it. Stdout stays empty.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub rates: RateArgs,
    #[arg(long)]
    pub n: Option<u64>,
    /// Comma-separated thresholds (nats).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub monte_carlo: bool,
    #[arg(long, value_enum)]
    pub output: Option<OutputFormat>,
}

fn parse_hypothesis(s: &str) -> std::result::Result<Hypothesis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Flat config file; every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda_w: Option<f64>,
    pub lambda_b: Option<f64>,
    pub mu: Option<f64>,
    pub strict: Option<bool>,
    pub hyp: Option<Hypothesis>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub stream_id: Option<u64>,
    pub burn_in: Option<usize>,
    pub threshold: Option<f64>,
    pub epsilon: Option<f64>,
    pub k: Option<KFunction>,
    pub n_values: Option<Vec<u64>>,
    pub n_grid: Option<Vec<u64>>,
    pub trials: Option<u64>,
    pub use_exact_when_feasible: Option<bool>,
    pub thresholds: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub output: Option<OutputFormat>,
    pub threads: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).ok_or_else(|| {
        Error::Config(format!(
            "missing required value '{name}' (flag or config key)"
        ))
    })
}

fn params_from(rates: &RateArgs, file: &FileConfig) -> Result<ModelParams> {
    let lambda_w = required(rates.lambda_w, file.lambda_w, "lambda_w")?;
    let lambda_b = rates.lambda_b.or(file.lambda_b).unwrap_or(0.0);
    let mu = rates.mu.or(file.mu).unwrap_or(1.0);
    let strict = rates.strict || file.strict.unwrap_or(false);
    let params = if strict {
        ModelParams::new_strict(lambda_w, lambda_b, mu)?
    } else {
        ModelParams::new(lambda_w, lambda_b, mu)?
    };
    if !params.is_stable() {
        eprintln!(
            "warning: mu ({mu}) does not exceed lambda_w + lambda_b ({}); results are outside the usual regime",
            lambda_w + lambda_b
        );
    }
    Ok(params)
}

fn seed_or_generate(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file).unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn parse_grid(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse N grid '{s}'"));
    if s.contains(':') {
        let parts: Vec<u64> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if step == 0 {
            return Err(bad());
        }
        Ok((start..=stop).step_by(step as usize).collect())
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
}

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Argument => EXIT_ARGUMENT,
        ErrorKind::InputData => EXIT_INPUT,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ARGUMENT
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => EXIT_OK,
        // reader went away, e.g. `covq ... | head`
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let threads = cli.threads.or(file.threads);
    if threads == Some(0) {
        return Err(Error::InvalidParameter("threads must be at least 1".into()));
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, &file, out),
        Command::Detect(a) => cmd_detect(&a, &file, out),
        Command::Exponent(a) => cmd_exponent(&a, &file, out),
        Command::Bound(a) => cmd_bound(&a, &file, out),
        Command::Campaign(a) => cmd_campaign(&a, &file, threads, out),
        Command::Sweep(a) => cmd_sweep(&a, &file, threads, out),
    }
}

fn cmd_simulate(a: &SimulateArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let params = params_from(&a.rates, file)?;
    let hyp = required(a.hyp, file.hyp, "hyp")?;
    let n = required(a.n, file.n, "n")?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let seed = RngSeed::new(
        seed_or_generate(a.seed, file.seed),
        a.stream.or(file.stream_id).unwrap_or(0),
    );
    let opts = SimOptions {
        burn_in: a
            .burn_in
            .or(file.burn_in)
            .unwrap_or(SimOptions::default().burn_in),
    };
    let obs = simulate_sequence_with(&params, hyp, n as usize, seed, &opts)?;

    let bytes = match a.format {
        SequenceFormat::Bin => obs.to_packed(),
        SequenceFormat::Text | SequenceFormat::Auto => {
            let mut line = obs.to_line().into_bytes();
            line.push(b'\n');
            line
        }
    };
    match &a.out {
        Some(path) => fs::write(path, bytes)?,
        None => out.write_all(&bytes)?,
    }
    if let Some(path) = &a.trace {
        let trace = simulate_trace_with(&params, hyp, n as usize, seed, &opts)?;
        trace.write_csv(fs::File::create(path)?)?;
    }
    eprintln!(
        "n={} busy={} busy_fraction={:.6} expected={:.6}",
        obs.n(),
        obs.busy_count(),
        obs.busy_fraction(),
        1.0 - params.idle_probability(hyp)
    );
    Ok(())
}

fn read_sequence(path: &Path, format: SequenceFormat) -> Result<ObservationSequence> {
    let data = fs::read(path)?;
    if data.is_empty() {
        return Err(Error::InputData(format!("{} is empty", path.display())));
    }
    let as_text = |d: &[u8]| {
        std::str::from_utf8(d)
            .map_err(|_| Error::InputData("sequence file is not valid text".into()))
            .and_then(ObservationSequence::from_line)
    };
    match format {
        SequenceFormat::Text => as_text(&data),
        SequenceFormat::Bin => ObservationSequence::from_packed(&data),
        SequenceFormat::Auto => {
            let looks_text = data
                .iter()
                .all(|b| matches!(b, b'0' | b'1' | b'\n' | b'\r' | b' ' | b'\t'));
            if looks_text {
                as_text(&data)
            } else {
                ObservationSequence::from_packed(&data)
            }
        }
    }
}

fn cmd_detect(a: &DetectArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let params = params_from(&a.rates, file)?;
    let obs = read_sequence(&a.input, a.format)?;
    let threshold = a.threshold.or(file.threshold).unwrap_or(0.0);
    let p = transition_matrix(&params, Hypothesis::H0);
    let q = transition_matrix(&params, Hypothesis::H1);
    let res = decide(&obs, &p, &q, threshold, a.initial.into())?;
    let doc = json!({
        "n": obs.n(),
        "llr": res.llr,
        "decision": res.decision,
        "threshold": res.threshold,
    });
    writeln!(out, "{}", to_json(&doc)?)?;
    Ok(())
}

fn cmd_exponent(a: &ExponentArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let params = params_from(&a.rates, file)?;
    let tol = a.tol.or(file.tol).unwrap_or(DEFAULT_TOL);
    let output = a.output.or(file.output).unwrap_or(OutputFormat::Json);

    let reports = match &a.sweep_lambda_b {
        Some(grid) => exponent::exponent_sweep(params.lambda_w(), params.mu(), grid)?,
        None => vec![ExponentReport::new(&params)?],
    };
    // numeric route at the requested tolerance
    let reports: Vec<ExponentReport> = reports
        .into_iter()
        .map(|mut r| {
            if r.lambda_b > 0.0 && tol != DEFAULT_TOL {
                let pr = ModelParams::new(r.lambda_w, r.lambda_b, r.mu)?;
                let num = exponent::i_err_numeric(&pr, tol)?;
                r.v_numeric = num.v;
                r.i_err_numeric = num.i_err;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;

    match output {
        OutputFormat::Json if reports.len() == 1 => writeln!(out, "{}", to_json(&reports[0])?)?,
        OutputFormat::Json => writeln!(out, "{}", to_json(&reports)?)?,
        OutputFormat::Csv => exponent::write_sweep_csv(&reports, &mut *out)?,
    }

    if a.self_check {
        for r in &reports {
            if !r.self_consistent(SELF_CHECK_V_TOL, SELF_CHECK_I_TOL) {
                return Err(Error::Numeric(format!(
                    "closed form and numeric routes disagree at lambda_b = {}: |dv| = {:e}, |dI| = {:e}",
                    r.lambda_b,
                    (r.v_closed - r.v_numeric).abs(),
                    (r.i_err_closed - r.i_err_numeric).abs()
                )));
            }
        }
    }
    Ok(())
}

fn cmd_bound(a: &BoundArgs, file: &FileConfig, out: &mut dyn Write) -> Result<()> {
    let lambda_w = required(a.lambda_w, file.lambda_w, "lambda_w")?;
    let epsilon = required(a.epsilon, file.epsilon, "epsilon")?;
    let n = required(a.n, file.n, "n")?;
    let mut k = file.k.unwrap_or_default();
    if a.k_family.is_some() || a.k0.is_some() || a.alpha.is_some() {
        let (file_k0, file_alpha) = match k {
            KFunction::Constant { k0 } => (k0, 0.0),
            KFunction::Power { k0, alpha } => (k0, alpha),
        };
        let family = a.k_family.unwrap_or(match k {
            KFunction::Constant { .. } => KFamily::Constant,
            KFunction::Power { .. } => KFamily::Power,
        });
        let k0 = a.k0.unwrap_or(file_k0);
        k = match family {
            KFamily::Constant => KFunction::Constant { k0 },
            KFamily::Power => KFunction::Power {
                k0,
                alpha: a.alpha.unwrap_or(file_alpha),
            },
        };
    }
    let spec = CovertnessSpec::new(epsilon, n, k)?;
    let bound = max_covert_rate(lambda_w, &spec)?;
    let n_values = a
        .n_values
        .clone()
        .or_else(|| file.n_values.clone())
        .unwrap_or_else(|| vec![n]);
    let table = scaling_table(lambda_w, epsilon, k, &n_values)?;
    match a.output.or(file.output).unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => {
            let doc = json!({
                "lambda_w": lambda_w,
                "epsilon": epsilon,
                "n": n,
                "k": k,
                "bound": bound,
                "max_covert_rate": bound.rate(),
                "table": table,
            });
            writeln!(out, "{}", to_json(&doc)?)?;
        }
        OutputFormat::Csv => write_scaling_csv(&table, &mut *out)?,
    }
    Ok(())
}

fn cmd_campaign(
    a: &CampaignArgs,
    file: &FileConfig,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let params = params_from(&a.rates, file)?;
    let n_grid = match &a.n_grid {
        Some(s) => parse_grid(s)?,
        None => required(None, file.n_grid.clone(), "n_grid")?,
    };
    let cfg = CampaignConfig {
        params,
        n_grid,
        trials_per_point: a.trials.or(file.trials).unwrap_or(10_000),
        threshold: a.threshold.or(file.threshold).unwrap_or(0.0),
        master_seed: RngSeed::new(
            seed_or_generate(a.seed, file.seed),
            file.stream_id.unwrap_or(0),
        ),
        use_exact_when_feasible: !a.monte_carlo && file.use_exact_when_feasible.unwrap_or(true),
        threads,
    };
    let result = run_campaign(&cfg)?;
    if let Some(path) = &a.out {
        experiment::persist(&result, path)?;
        eprintln!(
            "wrote {} and {}",
            path.display(),
            experiment::csv_sibling(path).display()
        );
        return Ok(());
    }
    match a.output.or(file.output).unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => writeln!(out, "{}", to_json(&result)?)?,
        OutputFormat::Csv => experiment::write_rows_csv(&result.rows, &mut *out)?,
    }
    Ok(())
}

fn cmd_sweep(
    a: &SweepArgs,
    file: &FileConfig,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let params = params_from(&a.rates, file)?;
    let n = required(a.n, file.n, "n")?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let thresholds = required(a.thresholds.clone(), file.thresholds.clone(), "thresholds")?;
    let trials = a.trials.or(file.trials).unwrap_or(10_000);
    let prefer_exact = !a.monte_carlo && file.use_exact_when_feasible.unwrap_or(true);
    let seed = if prefer_exact && params.lambda_b() > 0.0 {
        a.seed.or(file.seed).unwrap_or(0)
    } else {
        seed_or_generate(a.seed, file.seed)
    };
    let seed = RngSeed::new(seed, file.stream_id.unwrap_or(0));
    let rows = with_threads(threads, || {
        threshold_sweep(&params, n as usize, &thresholds, trials, seed, prefer_exact)
    })??;
    match a.output.or(file.output).unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => writeln!(out, "{}", to_json(&rows)?)?,
        OutputFormat::Csv => experiment::write_sweep_csv(&rows, &mut *out)?,
    }
    Ok(())
}
