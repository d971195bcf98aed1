//! Command-line front end: attack construction, stealth verification,
//! closed-form bound tables, and seeded experiments.
//!
//! Exit codes: 0 success (all verdicts pass or vacuous), 1 a bound verdict
//! failed, 2 usage or config error, 3 a separation-guarantee violation (the
//! one outcome the math says cannot happen).

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::activations::ActivationKind;
use crate::adversarial::{
    critical_dimension, sample_bound_over_n, theorem1_bound, theorem1_bound_exponential,
    AdversarialQuery, SmacRegion,
};
use crate::backbone::load_model;
use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_ball, trial_rng, Point};
use crate::harness::{
    self, load_config, ExperimentConfig, ExperimentKind, OneOrMany, ValidationMode, Verdict,
};
use crate::stealth::{
    construct_attack, success_probability_bound, verify_stealth, AttackParams, AttackSpec,
    ValidationSet,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_GUARANTEE_VIOLATION: i32 = 3;

#[derive(Parser)]
#[command(
    name = "stealth-lab",
    version,
    about = "Construct one-neuron stealth attacks, compute susceptibility bounds, and verify them by seeded Monte Carlo"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for experiments: 0 = default pool, 1 = serial.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Solve attack parameters for a trigger and write them to a file.
    Attack(AttackArgs),
    /// Check the stealth constraints of saved attack parameters against a
    /// validation set.
    Verify(VerifyArgs),
    /// Print closed-form bounds and the critical dimension.
    Bounds(BoundsArgs),
    /// Run one seeded experiment from a config file or flags.
    Experiment(ExperimentArgs),
    /// Run a parameter-grid sweep of experiments.
    Sweep(ExperimentArgs),
}

#[derive(Args)]
struct AttackArgs {
    /// Trigger point: a JSON array file, or "random" (requires --n, --seed).
    #[arg(long)]
    trigger: String,
    /// Dimension for a random trigger.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma: f64,
    /// Stealth tolerance; 0 is valid only for relu.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Desired output shift at the trigger.
    #[arg(long)]
    delta: f64,
    /// relu | sigmoid | gauss_bell | sigmoid_diff_bell
    #[arg(long, default_value = "relu")]
    activation: String,
    /// Shift parameter "a" for sigmoid_diff_bell.
    #[arg(long)]
    shift_a: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file for the solved attack parameters (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Attack parameters file written by `attack`.
    #[arg(long)]
    params: PathBuf,
    /// Backbone model file; defaults to the built-in affine backbone.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    /// Validation set file (JSON array of points); otherwise generated.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Size of a generated validation set.
    #[arg(long)]
    m: Option<u64>,
    /// uniform | boundary
    #[arg(long, default_value = "uniform")]
    validation_mode: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file (JSON); stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// theorem1 | theorem1_exp | theorem2 | critical_dim | sample_n
    #[arg(long)]
    bound: String,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// epsilon / r_A for theorem1-style bounds.
    #[arg(long)]
    eps_ratio: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    p_a: f64,
    /// Per-sample bound for sample_n.
    #[arg(long)]
    per_sample: Option<f64>,
    /// Sample count N for sample_n.
    #[arg(long)]
    samples: Option<u64>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (JSON); exclusive with parameter flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// stealth_success | shell_mass | theorem1_check (experiment only).
    #[arg(long)]
    experiment: Option<String>,
    /// Underlying kind for sweeps.
    #[arg(long)]
    over: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    m: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    activation: Option<String>,
    #[arg(long)]
    shift_a: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// uniform | boundary
    #[arg(long)]
    validation_mode: Option<String>,
    #[arg(long, default_value_t = false)]
    redraw_validation: bool,
    #[arg(long)]
    r_a: Option<f64>,
    /// Density-cap constant C.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    p_a: Option<f64>,
    /// Region reach Delta.
    #[arg(long)]
    delta_reach: Option<f64>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Report file; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additionally write a CSV report here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// json | csv (format of --out and stdout).
    #[arg(long, default_value = "json")]
    format: String,
}

pub fn run_from_env() -> i32 {
    run(std::env::args_os())
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // clap exits 0 for --help/--version, 2 for usage errors
            return err.exit_code_or_print();
        }
    };
    let outcome = match cli.command {
        Command::Attack(args) => cmd_attack(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Experiment(args) => cmd_experiment(args, false, cli.threads),
        Command::Sweep(args) => cmd_experiment(args, true, cli.threads),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_USAGE
        }
    }
}

trait ClapErrorExt {
    fn exit_code_or_print(self) -> i32;
}

impl ClapErrorExt for clap::Error {
    fn exit_code_or_print(self) -> i32 {
        use clap::error::ErrorKind;
        let code = match self.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
            _ => EXIT_USAGE,
        };
        let _ = self.print();
        code
    }
}

fn parse_activation(tag: &str, shift_a: Option<f64>) -> Result<ActivationKind> {
    let kind = match tag {
        "relu" => ActivationKind::Relu,
        "sigmoid" => ActivationKind::Sigmoid,
        "gauss_bell" => ActivationKind::GaussianBell,
        "sigmoid_diff_bell" => {
            let a = shift_a
                .ok_or_else(|| Error::invalid("shift_a", "required for sigmoid_diff_bell"))?;
            ActivationKind::SigmoidDiffBell { a }
        }
        other => {
            return Err(Error::invalid(
                "activation",
                format!("unknown tag \"{other}\""),
            ))
        }
    };
    kind.validate()?;
    Ok(kind)
}

fn read_point_file(path: &Path) -> Result<Point> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serialization");
    text.push('\n');
    text
}

fn cmd_attack(args: AttackArgs) -> Result<i32> {
    let activation = parse_activation(&args.activation, args.shift_a)?;
    let trigger = if args.trigger == "random" {
        let n = args
            .n
            .ok_or_else(|| Error::invalid("n", "required with --trigger random"))?;
        let seed = args
            .seed
            .ok_or_else(|| Error::invalid("seed", "required with --trigger random"))?;
        let origin = Point::origin(n)?;
        sample_uniform_ball(n, 1.0, &origin, &mut trial_rng(seed, 0))?
    } else {
        read_point_file(Path::new(&args.trigger))?
    };
    let spec = AttackSpec::new(trigger, args.gamma, args.epsilon, args.delta, activation)?;
    let params = construct_attack(&spec)?;
    write_text(&args.out, &pretty_json(&params))?;
    println!("kappa = {}", params.kappa());
    println!("D = {}", params.gain());
    println!("b = {}", params.b());
    println!(
        "note: the attacked map has empirical Lipschitz constant at least (delta - epsilon)/2 = {} over the unit ball",
        (args.delta - args.epsilon) / 2.0
    );
    Ok(EXIT_OK)
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.params).map_err(|source| Error::Io {
        path: args.params.clone(),
        source,
    })?;
    let params: AttackParams = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: args.params.clone(),
        source,
    })?;
    let x_prime = params.trigger();
    let n = x_prime.dim();
    let spec = AttackSpec::new(
        x_prime,
        params.gamma(),
        args.epsilon,
        args.delta,
        params.activation(),
    )?;
    let validation = match &args.validation {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str::<ValidationSet>(&text).map_err(|source| Error::Json {
                path: path.clone(),
                source,
            })?
        }
        None => {
            let m = args
                .m
                .ok_or_else(|| Error::invalid("m", "required without --validation"))?;
            let seed = args
                .seed
                .ok_or_else(|| Error::invalid("seed", "required without --validation"))?;
            let mode = ValidationMode::from_str(&args.validation_mode)?;
            let mut rng = trial_rng(seed, u64::MAX);
            match mode {
                ValidationMode::Uniform => ValidationSet::uniform(n, m as usize, &mut rng)?,
                ValidationMode::Boundary => ValidationSet::boundary(n, m as usize, &mut rng)?,
            }
        }
    };
    let backbone = match &args.model {
        Some(path) => load_model(path)?,
        None => harness::default_backbone(n),
    };
    let report = verify_stealth(&backbone, &params, &spec, &validation)?;
    let rendered = pretty_json(&report);
    match &args.out {
        Some(path) => write_text(path, &rendered)?,
        None => print!("{rendered}"),
    }
    if report.guarantee_violated() {
        eprintln!("error: separated validation set but stealth constraints failed");
        return Ok(EXIT_GUARANTEE_VIOLATION);
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct BoundRow {
    bound: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_ratio: Option<f64>,
    #[serde(rename = "P_A", skip_serializing_if = "Option::is_none")]
    p_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_sample: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    value: f64,
}

pub const BOUNDS_CSV_HEADER: &str = "bound,n,M,gamma,nu,C,eps_ratio,P_A,per_sample,N,value";

impl BoundRow {
    fn blank(bound: &str, value: f64) -> Self {
        BoundRow {
            bound: bound.to_string(),
            n: None,
            m: None,
            gamma: None,
            nu: None,
            c: None,
            eps_ratio: None,
            p_a: None,
            per_sample: None,
            samples: None,
            value,
        }
    }

    fn csv_row(&self) -> String {
        fn cell<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map(|v| v.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.bound,
            cell(&self.n),
            cell(&self.m),
            cell(&self.gamma),
            cell(&self.nu),
            cell(&self.c),
            cell(&self.eps_ratio),
            cell(&self.p_a),
            cell(&self.per_sample),
            cell(&self.samples),
            self.value
        )
    }
}

/// The bound calculators only see epsilon through the ratio epsilon / r_A,
/// so the table uses a fixed synthetic region radius.
fn ratio_region(args: &BoundsArgs) -> Result<(SmacRegion, f64)> {
    let ratio = args
        .eps_ratio
        .ok_or_else(|| Error::invalid("eps_ratio", "required for this bound"))?;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("eps_ratio", "must lie in (0, 1)"));
    }
    let r_a = 0.5;
    let region = SmacRegion::new(Point::origin(1)?, r_a, args.c, args.nu, args.p_a, 0.1)?;
    Ok((region, ratio * r_a))
}

fn cmd_bounds(args: BoundsArgs) -> Result<i32> {
    let mut rows = Vec::new();
    match args.bound.as_str() {
        kind @ ("theorem1" | "theorem1_exp") => {
            let (region, epsilon) = ratio_region(&args)?;
            if args.n.is_empty() {
                return Err(Error::invalid("n", "at least one dimension required"));
            }
            for &n in &args.n {
                let query = AdversarialQuery::new(epsilon, n)?;
                let value = if kind == "theorem1" {
                    theorem1_bound(&region, &query)?
                } else {
                    theorem1_bound_exponential(&region, &query)?
                };
                let mut row = BoundRow::blank(kind, value);
                row.n = Some(n);
                row.nu = Some(args.nu);
                row.c = Some(args.c);
                row.eps_ratio = args.eps_ratio;
                row.p_a = Some(args.p_a);
                rows.push(row);
            }
        }
        "critical_dim" => {
            let (region, epsilon) = ratio_region(&args)?;
            let query = AdversarialQuery::new(epsilon, 1)?;
            let value = critical_dimension(&region, &query)? as f64;
            let mut row = BoundRow::blank("critical_dim", value);
            row.nu = Some(args.nu);
            row.c = Some(args.c);
            row.eps_ratio = args.eps_ratio;
            rows.push(row);
        }
        "theorem2" => {
            if args.n.is_empty() || args.m.is_empty() || args.gamma.is_empty() {
                return Err(Error::invalid(
                    "n",
                    "theorem2 requires --n, --m and --gamma",
                ));
            }
            for &n in &args.n {
                for &m in &args.m {
                    for &gamma in &args.gamma {
                        let value = success_probability_bound(m, gamma, n)?;
                        let mut row = BoundRow::blank("theorem2", value);
                        row.n = Some(n);
                        row.m = Some(m);
                        row.gamma = Some(gamma);
                        rows.push(row);
                    }
                }
            }
        }
        "sample_n" => {
            let per_sample = args
                .per_sample
                .ok_or_else(|| Error::invalid("per_sample", "required for sample_n"))?;
            let samples = args
                .samples
                .ok_or_else(|| Error::invalid("samples", "required for sample_n"))?;
            let value = sample_bound_over_n(per_sample, samples)?;
            let mut row = BoundRow::blank("sample_n", value);
            row.per_sample = Some(per_sample);
            row.samples = Some(samples);
            rows.push(row);
        }
        other => {
            return Err(Error::invalid(
                "bound",
                format!("unknown bound \"{other}\""),
            ))
        }
    }

    let rendered = match args.format.as_str() {
        "csv" => {
            let mut text = String::from(BOUNDS_CSV_HEADER);
            text.push('\n');
            for row in &rows {
                text.push_str(&row.csv_row());
                text.push('\n');
            }
            text
        }
        "json" => pretty_json(&rows),
        other => {
            return Err(Error::invalid(
                "format",
                format!("unknown format \"{other}\""),
            ))
        }
    };
    match &args.out {
        Some(path) => write_text(path, &rendered)?,
        None => print!("{rendered}"),
    }
    Ok(EXIT_OK)
}

fn one_or_many<T: Copy>(values: &[T]) -> Option<OneOrMany<T>> {
    match values {
        [] => None,
        [single] => Some(OneOrMany::One(*single)),
        many => Some(OneOrMany::Many(many.to_vec())),
    }
}

fn config_from_flags(args: &ExperimentArgs, sweep: bool) -> Result<ExperimentConfig> {
    let experiment = if sweep {
        if args.experiment.is_some() {
            return Err(Error::invalid("experiment", "use --over for sweeps"));
        }
        ExperimentKind::Sweep
    } else {
        match &args.experiment {
            Some(tag) => {
                let kind = ExperimentKind::from_str(tag)?;
                if kind == ExperimentKind::Sweep {
                    return Err(Error::invalid("experiment", "use the sweep subcommand"));
                }
                kind
            }
            None => ExperimentKind::StealthSuccess,
        }
    };
    let over = match &args.over {
        Some(tag) if sweep => Some(ExperimentKind::from_str(tag)?),
        Some(_) => return Err(Error::invalid("over", "only applies to sweep")),
        None => None,
    };
    let activation = match &args.activation {
        Some(tag) => Some(parse_activation(tag, args.shift_a)?),
        None => None,
    };
    let seed = args
        .seed
        .ok_or_else(|| Error::invalid("seed", "an explicit --seed is required"))?;
    let n = one_or_many(&args.n).ok_or_else(|| Error::invalid("n", "required"))?;
    Ok(ExperimentConfig {
        experiment,
        over,
        n,
        m: one_or_many(&args.m),
        gamma: one_or_many(&args.gamma),
        epsilon: args.epsilon,
        delta: args.delta,
        activation,
        trials: args.trials.unwrap_or(100_000),
        seed,
        validation_mode: match &args.validation_mode {
            Some(mode) => ValidationMode::from_str(mode)?,
            None => ValidationMode::Uniform,
        },
        redraw_validation: args.redraw_validation,
        r_a: args.r_a,
        c_cap: args.c,
        nu: args.nu,
        p_a: args.p_a,
        cap_delta: args.delta_reach,
        center: None,
        model: args.model.clone(),
    })
}

fn cmd_experiment(args: ExperimentArgs, sweep: bool, threads: usize) -> Result<i32> {
    let config = match &args.config {
        Some(path) => {
            let inline_flags = args.experiment.is_some()
                || args.over.is_some()
                || !args.n.is_empty()
                || !args.m.is_empty()
                || !args.gamma.is_empty()
                || args.epsilon.is_some()
                || args.delta.is_some()
                || args.activation.is_some()
                || args.trials.is_some()
                || args.seed.is_some()
                || args.validation_mode.is_some()
                || args.redraw_validation
                || args.r_a.is_some()
                || args.c.is_some()
                || args.nu.is_some()
                || args.p_a.is_some()
                || args.delta_reach.is_some()
                || args.model.is_some();
            if inline_flags {
                return Err(Error::invalid(
                    "config",
                    "cannot combine --config with inline parameter flags",
                ));
            }
            let config = load_config(path)?;
            if sweep && config.experiment != ExperimentKind::Sweep {
                return Err(Error::invalid("config", "sweep requires a sweep config"));
            }
            if !sweep && config.experiment == ExperimentKind::Sweep {
                return Err(Error::invalid(
                    "config",
                    "use the sweep subcommand for sweep configs",
                ));
            }
            config
        }
        None => config_from_flags(&args, sweep)?,
    };

    let reports = harness::run(&config, threads)?;

    let rendered = match args.format.as_str() {
        "json" => harness::reports_to_json(&reports),
        "csv" => harness::reports_to_csv(&reports),
        other => {
            return Err(Error::invalid(
                "format",
                format!("unknown format \"{other}\""),
            ))
        }
    };
    match &args.out {
        Some(path) => write_text(path, &rendered)?,
        None => print!("{rendered}"),
    }
    if let Some(path) = &args.csv {
        harness::write_reports_csv(&reports, path)?;
    }

    let violations: u64 = reports.iter().map(|r| r.audit_violations).sum();
    if violations > 0 {
        eprintln!("error: {violations} separation-guarantee violations; reproduction data is in the report");
        return Ok(EXIT_GUARANTEE_VIOLATION);
    }
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        return Ok(EXIT_VERDICT_FAIL);
    }
    Ok(EXIT_OK)
}
