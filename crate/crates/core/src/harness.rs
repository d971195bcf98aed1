//! Seeded Monte Carlo experiment runner: per-trial sub-seeded streams,
//! Wilson confidence intervals, closed-form bound comparisons, and a
//! zero-tolerance audit of the separation guarantee.
//!
//! Aggregation uses only counts, maxima and index-minima, so any trial
//! scheduling produces byte-identical reports.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::adversarial::{
    admits_adversarial, label_a, sample_smac, shell_mass, theorem1_bound, AdversarialQuery,
    SmacRegion,
};
use crate::backbone::{load_model, ClassifierMap, DenseNetwork};
use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_ball, sub_seed, trial_rng, Point};
use crate::stealth::{
    construct_attack, success_probability_bound, verify_stealth, AttackSpec, ValidationSet,
};

/// 97.5% normal quantile for two-sided 95% intervals.
const Z_95: f64 = 1.959_963_984_540_054;

/// Stream index reserved for drawing the fixed validation set; trial
/// indices count up from zero and never reach it.
const VALIDATION_STREAM: u64 = u64::MAX;

/// Wilson score interval for a binomial rate. Behaves sanely at rates near
/// 0 and 1, which dominate here.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let margin = z / denom * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt();
    // the interval contains p_hat in exact arithmetic; pin that down
    // against rounding at the endpoints
    let lo = (center - margin).max(0.0).min(p_hat);
    let hi = (center + margin).min(1.0).max(p_hat);
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    StealthSuccess,
    ShellMass,
    Theorem1Check,
    Sweep,
}

impl ExperimentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ExperimentKind::StealthSuccess => "stealth_success",
            ExperimentKind::ShellMass => "shell_mass",
            ExperimentKind::Theorem1Check => "theorem1_check",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stealth_success" => Ok(ExperimentKind::StealthSuccess),
            "shell_mass" => Ok(ExperimentKind::ShellMass),
            "theorem1_check" => Ok(ExperimentKind::Theorem1Check),
            "sweep" => Ok(ExperimentKind::Sweep),
            other => Err(Error::invalid(
                "experiment",
                format!("unknown kind \"{other}\""),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    #[default]
    Uniform,
    Boundary,
}

impl ValidationMode {
    pub fn tag(&self) -> &'static str {
        match self {
            ValidationMode::Uniform => "uniform",
            ValidationMode::Boundary => "boundary",
        }
    }
}

impl FromStr for ValidationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ValidationMode::Uniform),
            "boundary" => Ok(ValidationMode::Boundary),
            other => Err(Error::invalid(
                "validation_mode",
                format!("unknown mode \"{other}\""),
            )),
        }
    }
}

/// A scalar parameter or a sweep list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Copy> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }

    fn scalar(&self) -> Option<T> {
        match self {
            OneOrMany::One(v) => Some(*v),
            OneOrMany::Many(_) => None,
        }
    }

    fn is_list(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

/// Declarative experiment description; identical whether it arrives as a
/// JSON file or as command-line flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Underlying kind for sweeps (defaults to stealth_success).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub over: Option<ExperimentKind>,
    pub n: OneOrMany<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<OneOrMany<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<OneOrMany<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<ActivationKind>,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub validation_mode: ValidationMode,
    #[serde(default)]
    pub redraw_validation: bool,
    #[serde(rename = "r_A", default, skip_serializing_if = "Option::is_none")]
    pub r_a: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(rename = "P_A", default, skip_serializing_if = "Option::is_none")]
    pub p_a: Option<f64>,
    #[serde(rename = "Delta", default, skip_serializing_if = "Option::is_none")]
    pub cap_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Vacuous,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Vacuous => "vacuous",
        })
    }
}

/// Everything needed to replay a guarantee violation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationDump {
    pub trial: u64,
    pub seed: u64,
    pub x_prime: Vec<f64>,
}

/// One experiment outcome: empirical rate with a 95% Wilson interval, the
/// matching closed-form bound, and a verdict. Lower-bound verdicts pass iff
/// `empirical >= bound - 3 se(bound)`; two-sided comparisons (shell mass)
/// use `|empirical - expected| <= 3 se`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub n: usize,
    #[serde(rename = "M")]
    pub m: u64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub activation: String,
    pub trials: u64,
    pub seed: u64,
    pub empirical_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub theoretical_bound: f64,
    pub verdict: Verdict,
    /// Fraction of trials where the separation event held (stealth only).
    pub separated_rate: f64,
    /// Count of separated trials that failed a stealth constraint, or of
    /// invalid witnesses. Any nonzero value is a falsified guarantee.
    pub audit_violations: u64,
    /// Largest validation deviation observed on separated trials.
    pub max_separated_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<ViolationDump>,
    pub config: ExperimentConfig,
}

pub const CSV_HEADER: &str =
    "experiment,n,M,gamma,epsilon,delta,activation,trials,seed,empirical,ci_low,ci_high,bound,verdict";

impl ExperimentReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.n,
            self.m,
            self.gamma,
            self.epsilon,
            self.delta,
            self.activation,
            self.trials,
            self.seed,
            self.empirical_rate,
            self.ci_low,
            self.ci_high,
            self.theoretical_bound,
            self.verdict
        )
    }
}

// ---------------------------------------------------------------------------
// Config validation
// ---------------------------------------------------------------------------

struct FieldErrors(Vec<String>);

impl FieldErrors {
    fn new() -> Self {
        FieldErrors(Vec::new())
    }

    fn push(&mut self, field: &str, reason: &str) {
        self.0.push(format!("{field} ({reason})"));
    }

    fn into_result(self) -> Result<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(self.0.join(", ")))
        }
    }
}

#[derive(Debug)]
struct StealthPlan {
    n: usize,
    m: u64,
    gamma: f64,
    epsilon: f64,
    delta: f64,
    activation: ActivationKind,
    trials: u64,
    seed: u64,
    mode: ValidationMode,
    redraw: bool,
    model: Option<PathBuf>,
}

struct RegionPlan {
    region: SmacRegion,
    query: AdversarialQuery,
    trials: u64,
    seed: u64,
}

impl ExperimentConfig {
    fn check_common(&self, errors: &mut FieldErrors) {
        if self.trials < 100 {
            errors.push("trials", "must be at least 100");
        }
        if self.experiment != ExperimentKind::Sweep && self.over.is_some() {
            errors.push("over", "only applies to sweep");
        }
    }

    fn scalar_n(&self, errors: &mut FieldErrors) -> usize {
        match self.n.scalar() {
            Some(0) => {
                errors.push("n", "must be at least 1");
                1
            }
            Some(n) => n,
            None => {
                errors.push("n", "must be a scalar outside sweep");
                1
            }
        }
    }

    fn forbid_region_fields(&self, errors: &mut FieldErrors) {
        for (name, set) in [
            ("r_A", self.r_a.is_some()),
            ("C", self.c_cap.is_some()),
            ("nu", self.nu.is_some()),
            ("P_A", self.p_a.is_some()),
            ("Delta", self.cap_delta.is_some()),
            ("center", self.center.is_some()),
        ] {
            if set {
                errors.push(name, "not applicable to stealth_success");
            }
        }
    }

    fn forbid_stealth_fields(&self, errors: &mut FieldErrors, kind: &str) {
        for (name, set) in [
            ("M", self.m.is_some()),
            ("gamma", self.gamma.is_some()),
            ("activation", self.activation.is_some()),
            ("model", self.model.is_some()),
        ] {
            if set {
                errors.push(name, &format!("not applicable to {kind}"));
            }
        }
    }

    fn stealth_plan(&self) -> Result<StealthPlan> {
        let mut errors = FieldErrors::new();
        self.check_common(&mut errors);
        self.forbid_region_fields(&mut errors);
        let n = self.scalar_n(&mut errors);
        let m = match self.m.as_ref().and_then(|m| m.scalar()) {
            Some(m) => m,
            None => {
                errors.push("M", "required scalar for stealth_success");
                0
            }
        };
        let gamma = match self.gamma.as_ref().and_then(|g| g.scalar()) {
            Some(g) if g > 0.0 && g < 1.0 => g,
            Some(_) => {
                errors.push("gamma", "must lie in (0, 1)");
                0.5
            }
            None => {
                errors.push("gamma", "required scalar for stealth_success");
                0.5
            }
        };
        let activation = match self.activation {
            Some(kind) => {
                if let Err(e) = kind.validate() {
                    errors.push("activation", &e.to_string());
                }
                kind
            }
            None => {
                errors.push("activation", "required for stealth_success");
                ActivationKind::Relu
            }
        };
        let epsilon = match self.epsilon {
            Some(e) if e >= 0.0 && e.is_finite() => {
                if e == 0.0 && activation != ActivationKind::Relu {
                    errors.push("epsilon", "must be positive for non-relu activations");
                }
                e
            }
            Some(_) => {
                errors.push("epsilon", "must be a nonnegative finite real");
                0.0
            }
            None => {
                errors.push("epsilon", "required for stealth_success");
                0.0
            }
        };
        let delta = match self.delta {
            Some(d) if d > 0.0 && d.is_finite() => d,
            Some(_) => {
                errors.push("delta", "must be a positive finite real");
                1.0
            }
            None => {
                errors.push("delta", "required for stealth_success");
                1.0
            }
        };
        errors.into_result()?;
        Ok(StealthPlan {
            n,
            m,
            gamma,
            epsilon,
            delta,
            activation,
            trials: self.trials,
            seed: self.seed,
            mode: self.validation_mode,
            redraw: self.redraw_validation,
            model: self.model.clone(),
        })
    }

    fn region_plan(&self, kind: ExperimentKind) -> Result<RegionPlan> {
        let mut errors = FieldErrors::new();
        self.check_common(&mut errors);
        self.forbid_stealth_fields(&mut errors, kind.tag());
        if self.delta.is_some() {
            errors.push("delta", "use Delta for the region reach");
        }
        let n = self.scalar_n(&mut errors);
        let r_a = match self.r_a {
            Some(r) if r > 0.0 && r < 1.0 => r,
            Some(_) => {
                errors.push("r_A", "must lie in (0, 1)");
                0.5
            }
            None => {
                errors.push("r_A", &format!("required for {}", kind.tag()));
                0.5
            }
        };
        let epsilon = match self.epsilon {
            Some(e) if e > 0.0 && e < r_a => e,
            Some(_) => {
                errors.push("epsilon", "must lie in (0, r_A)");
                r_a / 2.0
            }
            None => {
                errors.push("epsilon", &format!("required for {}", kind.tag()));
                r_a / 2.0
            }
        };
        let center = match &self.center {
            Some(coords) if coords.len() == n => Point::new(coords.clone()).unwrap_or_else(|_| {
                errors.push("center", "coordinates must be finite");
                Point::origin(n).expect("n >= 1")
            }),
            Some(coords) => {
                errors.push(
                    "center",
                    &format!("expected {n} coordinates, got {}", coords.len()),
                );
                Point::origin(n).expect("n >= 1")
            }
            None => Point::origin(n).expect("n >= 1"),
        };
        if kind == ExperimentKind::ShellMass {
            for (name, set) in [
                ("C", self.c_cap.is_some()),
                ("nu", self.nu.is_some()),
                ("P_A", self.p_a.is_some()),
                ("Delta", self.cap_delta.is_some()),
            ] {
                if set {
                    errors.push(name, "not applicable to shell_mass");
                }
            }
        }
        let c_cap = self.c_cap.unwrap_or(1.0);
        let nu = self.nu.unwrap_or(1.0);
        let p_a = self.p_a.unwrap_or(1.0);
        let headroom = 1.0 - r_a - center.norm();
        let cap_delta = self
            .cap_delta
            .unwrap_or(if headroom > 0.0 { headroom } else { 0.1 });
        errors.into_result()?;
        let region = SmacRegion::new(center, r_a, c_cap, nu, p_a, cap_delta)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let query =
            AdversarialQuery::new(epsilon, n).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(RegionPlan {
            region,
            query,
            trials: self.trials,
            seed: self.seed,
        })
    }

    /// Expand a sweep into scalar per-cell configs in deterministic
    /// n-major, then M, then gamma order, with per-cell derived seeds.
    fn sweep_cells(&self) -> Result<(ExperimentKind, Vec<ExperimentConfig>)> {
        let mut errors = FieldErrors::new();
        if self.experiment != ExperimentKind::Sweep {
            return Err(Error::InvalidConfig(
                "experiment (sweep expansion requires kind sweep)".to_string(),
            ));
        }
        if self.trials < 100 {
            errors.push("trials", "must be at least 100");
        }
        let over = self.over.unwrap_or(ExperimentKind::StealthSuccess);
        if over == ExperimentKind::Sweep {
            errors.push("over", "cannot nest sweeps");
        }
        let n_values = self.n.values();
        if n_values.is_empty() {
            errors.push("n", "empty list");
        }
        let m_values = match &self.m {
            Some(m) => {
                let vs = m.values();
                if vs.is_empty() {
                    errors.push("M", "empty list");
                }
                Some(vs)
            }
            None => None,
        };
        let gamma_values = match &self.gamma {
            Some(g) => {
                let vs = g.values();
                if vs.is_empty() {
                    errors.push("gamma", "empty list");
                }
                Some(vs)
            }
            None => None,
        };
        let any_list = self.n.is_list()
            || self.m.as_ref().is_some_and(|m| m.is_list())
            || self.gamma.as_ref().is_some_and(|g| g.is_list());
        if !any_list {
            errors.push("n", "sweep requires at least one list-valued parameter");
        }
        if over != ExperimentKind::StealthSuccess {
            if m_values
                .as_ref()
                .is_some_and(|_| self.m.as_ref().unwrap().is_list())
            {
                errors.push("M", "list only applies to stealth sweeps");
            }
            if gamma_values
                .as_ref()
                .is_some_and(|_| self.gamma.as_ref().unwrap().is_list())
            {
                errors.push("gamma", "list only applies to stealth sweeps");
            }
        }
        errors.into_result()?;

        let ms = m_values.unwrap_or_else(|| vec![0]);
        let gammas = gamma_values.unwrap_or_else(|| vec![0.0]);
        let mut cells = Vec::new();
        let mut index = 0u64;
        for &n in &n_values {
            for &m in &ms {
                for &gamma in &gammas {
                    let mut cell = self.clone();
                    cell.experiment = over;
                    cell.over = None;
                    cell.n = OneOrMany::One(n);
                    cell.m = self.m.as_ref().map(|_| OneOrMany::One(m));
                    cell.gamma = self.gamma.as_ref().map(|_| OneOrMany::One(gamma));
                    cell.seed = sub_seed(self.seed, index);
                    cells.push(cell);
                    index += 1;
                }
            }
        }
        Ok((over, cells))
    }
}

// ---------------------------------------------------------------------------
// Trial scheduling
// ---------------------------------------------------------------------------

/// Fold trial outcomes with a commutative, associative merge. `threads`:
/// 1 = strictly serial, 0 = default rayon pool, k = pool of exactly k.
fn fold_trials<T, Step, Merge, Id>(
    trials: u64,
    threads: usize,
    step: Step,
    merge: Merge,
    identity: Id,
) -> Result<T>
where
    T: Send,
    Step: Fn(u64) -> T + Send + Sync,
    Merge: Fn(T, T) -> T + Send + Sync,
    Id: Fn() -> T + Send + Sync,
{
    if threads == 1 {
        let mut acc = identity();
        for t in 0..trials {
            acc = merge(acc, step(t));
        }
        Ok(acc)
    } else {
        let run = || {
            (0..trials)
                .into_par_iter()
                .map(&step)
                .reduce(&identity, &merge)
        };
        if threads == 0 {
            Ok(run())
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("threads ({e})")))?;
            Ok(pool.install(run))
        }
    }
}

fn merge_violation(a: Option<ViolationDump>, b: Option<ViolationDump>) -> Option<ViolationDump> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.trial <= y.trial { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

#[derive(Default)]
struct StealthTally {
    solved: u64,
    separated: u64,
    violations: u64,
    max_separated_deviation: f64,
    first_violation: Option<ViolationDump>,
}

impl StealthTally {
    fn merge(a: Self, b: Self) -> Self {
        StealthTally {
            solved: a.solved + b.solved,
            separated: a.separated + b.separated,
            violations: a.violations + b.violations,
            max_separated_deviation: a.max_separated_deviation.max(b.max_separated_deviation),
            first_violation: merge_violation(a.first_violation, b.first_violation),
        }
    }
}

/// Deterministic stand-in backbone when no model file is given: the affine
/// map `x -> (1/sqrt(n)) sum_k x_k`, bounded by 1 on the unit ball.
pub fn default_backbone(n: usize) -> ClassifierMap {
    let w = 1.0 / (n as f64).sqrt();
    ClassifierMap::Dense(DenseNetwork::affine(vec![w; n], 0.0).expect("affine backbone"))
}

fn verdict_lower_bound(rate: f64, bound: f64, trials: u64) -> Verdict {
    if bound <= 0.0 {
        return Verdict::Vacuous;
    }
    let se = (bound * (1.0 - bound) / trials as f64).sqrt();
    if rate >= bound - 3.0 * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Empirical Theorem-2 experiment: draw the trigger uniformly per trial,
/// keep the validation set fixed (drawn once from a reserved stream unless
/// `redraw_validation` is set), construct the attack, and check the full
/// Problem-1 constraints. The empirical rate counts solved trials; the
/// bound is `max(1 - M (1/(2 gamma))^n, 0)`.
pub fn run_stealth_success(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    let plan = config.stealth_plan()?;
    let backbone = match &plan.model {
        Some(path) => load_model(path)?,
        None => default_backbone(plan.n),
    };
    if backbone.input_dim() != plan.n {
        return Err(Error::InvalidConfig(format!(
            "model (input dimension {} does not match n = {})",
            backbone.input_dim(),
            plan.n
        )));
    }
    let origin = Point::origin(plan.n)?;
    let fixed_validation = if plan.redraw {
        None
    } else {
        let mut rng = trial_rng(plan.seed, VALIDATION_STREAM);
        Some(match plan.mode {
            ValidationMode::Uniform => ValidationSet::uniform(plan.n, plan.m as usize, &mut rng)?,
            ValidationMode::Boundary => ValidationSet::boundary(plan.n, plan.m as usize, &mut rng)?,
        })
    };

    let step = |trial: u64| -> StealthTally {
        let mut rng = trial_rng(plan.seed, trial);
        let x_prime =
            sample_uniform_ball(plan.n, 1.0, &origin, &mut rng).expect("validated dimensions");
        let drawn;
        let validation = match &fixed_validation {
            Some(v) => v,
            None => {
                drawn = match plan.mode {
                    ValidationMode::Uniform => {
                        ValidationSet::uniform(plan.n, plan.m as usize, &mut rng)
                    }
                    ValidationMode::Boundary => {
                        ValidationSet::boundary(plan.n, plan.m as usize, &mut rng)
                    }
                }
                .expect("validated dimensions");
                &drawn
            }
        };
        let mut tally = StealthTally::default();
        let spec = match AttackSpec::new(
            x_prime.clone(),
            plan.gamma,
            plan.epsilon,
            plan.delta,
            plan.activation,
        ) {
            Ok(spec) => spec,
            // a zero-norm trigger draw cannot be attacked by this
            // construction; count the trial as a plain failure
            Err(_) => return tally,
        };
        let report = construct_attack(&spec)
            .and_then(|params| verify_stealth(&backbone, &params, &spec, validation));
        match report {
            Ok(report) => {
                if report.separated {
                    tally.separated = 1;
                    tally.max_separated_deviation = report.max_validation_deviation;
                }
                if report.solves_problem() {
                    tally.solved = 1;
                }
                if report.guarantee_violated() {
                    tally.violations = 1;
                    tally.first_violation = Some(ViolationDump {
                        trial,
                        seed: plan.seed,
                        x_prime: x_prime.coords().to_vec(),
                    });
                }
            }
            Err(_) => {
                tally.violations = 1;
                tally.first_violation = Some(ViolationDump {
                    trial,
                    seed: plan.seed,
                    x_prime: x_prime.coords().to_vec(),
                });
            }
        }
        tally
    };

    let tally = fold_trials(
        plan.trials,
        threads,
        step,
        StealthTally::merge,
        StealthTally::default,
    )?;

    let rate = tally.solved as f64 / plan.trials as f64;
    let bound = success_probability_bound(plan.m, plan.gamma, plan.n)?;
    let (ci_low, ci_high) = wilson_interval(tally.solved, plan.trials, Z_95);
    let mut verdict = verdict_lower_bound(rate, bound, plan.trials);
    if tally.violations > 0 {
        verdict = Verdict::Fail;
    }
    Ok(ExperimentReport {
        experiment: ExperimentKind::StealthSuccess.tag().to_string(),
        n: plan.n,
        m: plan.m,
        gamma: plan.gamma,
        epsilon: plan.epsilon,
        delta: plan.delta,
        activation: plan.activation.tag().to_string(),
        trials: plan.trials,
        seed: plan.seed,
        empirical_rate: rate,
        ci_low,
        ci_high,
        theoretical_bound: bound,
        verdict,
        separated_rate: tally.separated as f64 / plan.trials as f64,
        audit_violations: tally.violations,
        max_separated_deviation: tally.max_separated_deviation,
        violation: tally.first_violation,
        config: config.clone(),
    })
}

/// Shell-probability experiment: uniform draws in the region ball, counting
/// the boundary shell of relative thickness `epsilon / r_A`, compared
/// two-sided against the exact closed form.
pub fn run_shell_mass(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    let plan = config.region_plan(ExperimentKind::ShellMass)?;
    let region = plan.region;
    let query = plan.query;
    let inner_radius = region.r_a() - query.epsilon;

    let step = |trial: u64| -> u64 {
        let mut rng = trial_rng(plan.seed, trial);
        let x = sample_uniform_ball(query.n, region.r_a(), region.region().center(), &mut rng)
            .expect("validated dimensions");
        let dist = x
            .distance(region.region().center())
            .expect("validated dimensions");
        u64::from(dist > inner_radius)
    };

    let hits = fold_trials(plan.trials, threads, step, |a, b| a + b, || 0u64)?;
    let rate = hits as f64 / plan.trials as f64;
    let expected = shell_mass(query.epsilon / region.r_a(), query.n)?;
    let se = (expected * (1.0 - expected) / plan.trials as f64).sqrt();
    let verdict = if (rate - expected).abs() <= 3.0 * se {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let (ci_low, ci_high) = wilson_interval(hits, plan.trials, Z_95);
    Ok(ExperimentReport {
        experiment: ExperimentKind::ShellMass.tag().to_string(),
        n: query.n,
        m: 0,
        gamma: 0.0,
        epsilon: query.epsilon,
        delta: 0.0,
        activation: String::new(),
        trials: plan.trials,
        seed: plan.seed,
        empirical_rate: rate,
        ci_low,
        ci_high,
        theoretical_bound: expected,
        verdict,
        separated_rate: 0.0,
        audit_violations: 0,
        max_separated_deviation: 0.0,
        violation: None,
        config: config.clone(),
    })
}

#[derive(Default)]
struct Theorem1Tally {
    joint: u64,
    violations: u64,
    first_violation: Option<ViolationDump>,
}

impl Theorem1Tally {
    fn merge(a: Self, b: Self) -> Self {
        Theorem1Tally {
            joint: a.joint + b.joint,
            violations: a.violations + b.violations,
            first_violation: merge_violation(a.first_violation, b.first_violation),
        }
    }
}

/// Full Theorem-1 pipeline: sample labeled points from the SmAC family,
/// test admission through the ball classifier, validate every witness, and
/// compare the joint frequency against the closed-form lower bound.
pub fn run_theorem1_check(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    let plan = config.region_plan(ExperimentKind::Theorem1Check)?;
    let region = plan.region;
    let query = plan.query;
    let classifier = region.ball_classifier();
    let reach = query.epsilon + region.delta();

    let step = |trial: u64| -> Theorem1Tally {
        let mut rng = trial_rng(plan.seed, trial);
        let mut tally = Theorem1Tally::default();
        let (x, label) = sample_smac(&region, &mut rng).expect("validated region");
        if label != label_a() {
            return tally;
        }
        let admission =
            admits_adversarial(&classifier, &region, &x, &label, &query).expect("validated region");
        if !admission.admits {
            return tally;
        }
        tally.joint = 1;
        let witness_ok = admission.witness.as_ref().is_some_and(|y| {
            y.distance(&x).map(|d| d <= reach + 1e-12).unwrap_or(false)
                && match (classifier.classify(&x, 0.0), classifier.classify(y, 0.0)) {
                    (Ok(a), Ok(b)) => a != b,
                    _ => false,
                }
        });
        if !witness_ok {
            tally.violations = 1;
            tally.first_violation = Some(ViolationDump {
                trial,
                seed: plan.seed,
                x_prime: x.coords().to_vec(),
            });
        }
        tally
    };

    let tally = fold_trials(
        plan.trials,
        threads,
        step,
        Theorem1Tally::merge,
        Theorem1Tally::default,
    )?;
    let rate = tally.joint as f64 / plan.trials as f64;
    let bound = theorem1_bound(&region, &query)?;
    let mut verdict = verdict_lower_bound(rate, bound, plan.trials);
    if tally.violations > 0 {
        verdict = Verdict::Fail;
    }
    let (ci_low, ci_high) = wilson_interval(tally.joint, plan.trials, Z_95);
    Ok(ExperimentReport {
        experiment: ExperimentKind::Theorem1Check.tag().to_string(),
        n: query.n,
        m: 0,
        gamma: 0.0,
        epsilon: query.epsilon,
        delta: region.delta(),
        activation: String::new(),
        trials: plan.trials,
        seed: plan.seed,
        empirical_rate: rate,
        ci_low,
        ci_high,
        theoretical_bound: bound,
        verdict,
        separated_rate: 0.0,
        audit_violations: tally.violations,
        max_separated_deviation: 0.0,
        violation: tally.first_violation,
        config: config.clone(),
    })
}

/// Expand grid cells in deterministic order, derive one seed per cell from
/// the master seed, and run each cell.
pub fn run_sweep(config: &ExperimentConfig, threads: usize) -> Result<Vec<ExperimentReport>> {
    let (over, cells) = config.sweep_cells()?;
    let mut reports = Vec::with_capacity(cells.len());
    for cell in &cells {
        let report = match over {
            ExperimentKind::StealthSuccess => run_stealth_success(cell, threads)?,
            ExperimentKind::ShellMass => run_shell_mass(cell, threads)?,
            ExperimentKind::Theorem1Check => run_theorem1_check(cell, threads)?,
            ExperimentKind::Sweep => unreachable!("rejected during expansion"),
        };
        reports.push(report);
    }
    Ok(reports)
}

/// Dispatch on the configured experiment kind.
pub fn run(config: &ExperimentConfig, threads: usize) -> Result<Vec<ExperimentReport>> {
    match config.experiment {
        ExperimentKind::StealthSuccess => Ok(vec![run_stealth_success(config, threads)?]),
        ExperimentKind::ShellMass => Ok(vec![run_shell_mass(config, threads)?]),
        ExperimentKind::Theorem1Check => Ok(vec![run_theorem1_check(config, threads)?]),
        ExperimentKind::Sweep => run_sweep(config, threads),
    }
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// JSON report file: one object for a single report, an array otherwise.
/// Ends with a newline.
pub fn reports_to_json(reports: &[ExperimentReport]) -> String {
    let mut text = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0]).expect("report serialization")
    } else {
        serde_json::to_string_pretty(reports).expect("report serialization")
    };
    text.push('\n');
    text
}

/// CSV report file: stable header, one row per report, trailing newline.
pub fn reports_to_csv(reports: &[ExperimentReport]) -> String {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for report in reports {
        text.push_str(&report.csv_row());
        text.push('\n');
    }
    text
}

pub fn write_reports_json(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_to_json(reports)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_reports_csv(reports: &[ExperimentReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_to_csv(reports)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parse a config from JSON text, surfacing the parse location on failure.
pub fn config_from_json(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: origin.to_path_buf(),
        source,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    config_from_json(&text, path)
}
