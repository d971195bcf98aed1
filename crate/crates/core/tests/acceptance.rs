//! Acceptance suite: every release-gating claim, one test per criterion,
//! each printing a single pass/fail line (visible with `--nocapture`).
//!
//! Criteria:
//!   1. empirical stealth success at n=30, gamma=0.9, M=100 beats the
//!      closed-form bound over 1e5 seeded trials;
//!   2. zero separated-trial counterexamples across a >= 1e6-trial sweep,
//!      with relu deviations bit-exact zero and sigmoid deviations <= eps;
//!   3. the theorem-1 pipeline at n=50 matches the exact shell mass and
//!      validates every witness;
//!   4. critical dimension is exactly consistent with the bound sign;
//!   5. solver identities and the exponential/polynomial bound ordering;
//!   6. uniform-ball sampler audits (radial CDF, mean square norm);
//!   7. serial and parallel runs write byte-identical report files.

use std::time::Instant;

use rand::Rng;

use stealth_lab::activations::{sigmoid, ActivationKind};
use stealth_lab::adversarial::{
    critical_dimension, shell_mass, theorem1_bound, theorem1_bound_exponential, AdversarialQuery,
    SmacRegion,
};
use stealth_lab::geometry::{sample_uniform_ball, trial_rng, Point};
use stealth_lab::harness::{
    reports_to_csv, reports_to_json, run_stealth_success, run_sweep, run_theorem1_check,
    write_reports_csv, write_reports_json, ExperimentConfig, ExperimentKind, OneOrMany,
    ValidationMode, Verdict,
};
use stealth_lab::stealth::{construct_attack, AttackSpec};

fn verdict_line(id: u32, name: &str, pass: bool) {
    println!(
        "acceptance {id} ({name}): {}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn stealth_config(
    n: usize,
    m: u64,
    gamma: f64,
    epsilon: f64,
    activation: ActivationKind,
    trials: u64,
    seed: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        experiment: ExperimentKind::StealthSuccess,
        over: None,
        n: OneOrMany::One(n),
        m: Some(OneOrMany::One(m)),
        gamma: Some(OneOrMany::One(gamma)),
        epsilon: Some(epsilon),
        delta: Some(1.0),
        activation: Some(activation),
        trials,
        seed,
        validation_mode: ValidationMode::Uniform,
        redraw_validation: false,
        r_a: None,
        c_cap: None,
        nu: None,
        p_a: None,
        cap_delta: None,
        center: None,
        model: None,
    }
}

#[test]
fn acceptance_1_stealth_success_bound() {
    let start = Instant::now();
    let config = stealth_config(30, 100, 0.9, 0.0, ActivationKind::Relu, 100_000, 20_240_817);
    let report = run_stealth_success(&config, 0).expect("experiment runs");
    let elapsed = start.elapsed();

    let bound = 1.0 - 100.0 * (1.0f64 / 1.8).powi(30);
    let pass = report.empirical_rate >= 0.99999
        && report.verdict == Verdict::Pass
        && report.audit_violations == 0
        && (report.theoretical_bound - bound).abs() < 1e-12
        && elapsed.as_secs() < 60;
    verdict_line(1, "theorem-2 empirical bound", pass);
    assert!(
        pass,
        "rate {} bound {} verdict {:?} violations {} elapsed {:?}",
        report.empirical_rate,
        report.theoretical_bound,
        report.verdict,
        report.audit_violations,
        elapsed
    );
}

#[test]
fn acceptance_2_conditional_guarantee_sweep() {
    // 72 cells x 14000 trials = 1,008,000 accumulated stealth trials
    let grid_n = vec![5usize, 10, 20, 30];
    let grid_gamma = vec![0.6, 0.75, 0.9];
    let grid_m = vec![1u64, 10, 100];
    let per_cell = 14_000u64;

    let mut pass = true;
    let mut total_trials = 0u64;
    for (activation, epsilon, seed) in [
        (ActivationKind::Relu, 0.0, 31),
        (ActivationKind::Sigmoid, 0.01, 32),
    ] {
        let mut config = stealth_config(0, 0, 0.0, epsilon, activation, per_cell, seed);
        config.experiment = ExperimentKind::Sweep;
        config.n = OneOrMany::Many(grid_n.clone());
        config.gamma = Some(OneOrMany::Many(grid_gamma.clone()));
        config.m = Some(OneOrMany::Many(grid_m.clone()));
        let reports = run_sweep(&config, 0).expect("sweep runs");
        assert_eq!(reports.len(), 36);
        for report in &reports {
            total_trials += report.trials;
            if report.audit_violations != 0 {
                eprintln!(
                    "violation in cell n={} M={} gamma={}: {:?}",
                    report.n, report.m, report.gamma, report.violation
                );
                pass = false;
            }
            if !(report.verdict == Verdict::Pass || report.verdict == Verdict::Vacuous) {
                eprintln!(
                    "cell n={} M={} gamma={} verdict {:?} rate {} bound {}",
                    report.n,
                    report.m,
                    report.gamma,
                    report.verdict,
                    report.empirical_rate,
                    report.theoretical_bound
                );
                pass = false;
            }
            match activation {
                ActivationKind::Relu => {
                    // bit-exact: no separated validation point ever moves
                    if report.max_separated_deviation != 0.0 {
                        eprintln!(
                            "relu cell n={} M={} gamma={} deviation {}",
                            report.n, report.m, report.gamma, report.max_separated_deviation
                        );
                        pass = false;
                    }
                }
                _ => {
                    if report.max_separated_deviation > epsilon * (1.0 + 1e-10) {
                        eprintln!(
                            "sigmoid cell n={} M={} gamma={} deviation {}",
                            report.n, report.m, report.gamma, report.max_separated_deviation
                        );
                        pass = false;
                    }
                }
            }
        }
    }
    pass = pass && total_trials >= 1_000_000;
    verdict_line(2, "zero-counterexample conditional guarantee", pass);
    assert!(pass, "accumulated trials: {total_trials}");
}

#[test]
fn acceptance_3_theorem1_empirical_check() {
    let trials = 100_000u64;
    let config = ExperimentConfig {
        experiment: ExperimentKind::Theorem1Check,
        over: None,
        n: OneOrMany::One(50),
        m: None,
        gamma: None,
        epsilon: Some(0.05),
        delta: None,
        activation: None,
        trials,
        seed: 41,
        validation_mode: ValidationMode::Uniform,
        redraw_validation: false,
        r_a: Some(0.5),
        c_cap: Some(1.0),
        nu: Some(1.0),
        p_a: Some(1.0),
        cap_delta: Some(0.2),
        center: None,
        model: None,
    };
    let report = run_theorem1_check(&config, 0).expect("experiment runs");

    let exact = shell_mass(0.1, 50).expect("closed form");
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    let two_sided = (report.empirical_rate - exact).abs() <= 3.0 * se;
    let above_bound = report.empirical_rate >= report.theoretical_bound - 3.0 * se;
    let pass = two_sided
        && above_bound
        && report.audit_violations == 0
        && report.verdict == Verdict::Pass
        && (report.theoretical_bound - exact).abs() < 1e-12;
    verdict_line(3, "theorem-1 empirical check", pass);
    assert!(
        pass,
        "rate {} exact {exact} bound {} violations {}",
        report.empirical_rate, report.theoretical_bound, report.audit_violations
    );
}

#[test]
fn acceptance_4_critical_dimension_consistency() {
    let mut rng = trial_rng(4, 0);
    let mut pass = true;
    for draw in 0..50 {
        let nu = 0.05 + 0.95 * rng.random::<f64>();
        // keep C >= nu so the threshold dimension is at least 1
        let c_cap = nu * 10f64.powf(2.0 * rng.random::<f64>());
        let eps_ratio = 0.01 + 0.59 * rng.random::<f64>();
        let r_a = 0.5;
        let region = SmacRegion::new(Point::origin(2).expect("origin"), r_a, c_cap, nu, 1.0, 0.2)
            .expect("valid region");
        let epsilon = eps_ratio * r_a;
        let query = AdversarialQuery::new(epsilon, 2).expect("valid query");
        let crit = critical_dimension(&region, &query).expect("critical dimension");

        let at = |n: usize| {
            theorem1_bound(&region, &AdversarialQuery::new(epsilon, n).expect("query"))
                .expect("bound")
        };
        // below the critical dimension the bound is exactly zero; n = 0
        // degenerates to the raw mass comparison nu <= C
        let zero_below = if crit == 1 {
            nu <= c_cap
        } else {
            at(crit - 1) == 0.0
        };
        let positive_at = at(crit) > 0.0;
        if !(zero_below && positive_at) {
            eprintln!(
                "draw {draw}: nu={nu} C={c_cap} ratio={eps_ratio} crit={crit} \
                 below={zero_below} at={positive_at}"
            );
            pass = false;
        }
    }
    verdict_line(4, "critical dimension consistency", pass);
    assert!(pass);
}

#[test]
fn acceptance_5_closed_form_cross_checks() {
    let mut rng = trial_rng(5, 0);
    let mut pass = true;

    // sigmoid solver identities to 1e-10 relative over 1000 random specs
    for draw in 0..1000 {
        let gamma = 0.05 + 0.9 * rng.random::<f64>();
        let delta = 0.1 + 10.0 * rng.random::<f64>();
        let epsilon = delta * (1e-6 + 0.49 * rng.random::<f64>());
        let scale = 0.05 + 0.94 * rng.random::<f64>();
        let x_prime = Point::new(vec![scale * 0.6, scale * 0.8]).expect("point");
        let spec = AttackSpec::new(x_prime, gamma, epsilon, delta, ActivationKind::Sigmoid)
            .expect("valid spec");
        let params = construct_attack(&spec).expect("solver");
        let kz = params.kappa() * params.z();
        let low = params.gain() * sigmoid(-kz);
        let high = params.gain() * sigmoid(kz);
        if (low - epsilon).abs() > 1e-10 * epsilon || (high - delta).abs() > 1e-10 * delta {
            eprintln!("draw {draw}: low {low} vs {epsilon}, high {high} vs {delta}");
            pass = false;
        }
    }

    // exponential bound never exceeds the polynomial bound (exact)
    for draw in 0..1000 {
        let nu = 0.05 + 0.95 * rng.random::<f64>();
        let c_cap = 0.1 + 3.0 * rng.random::<f64>();
        let p_a = 0.05 + 0.95 * rng.random::<f64>();
        let eps_ratio = 0.01 + 0.98 * rng.random::<f64>();
        let n = 1 + (rng.random::<f64>() * 200.0) as usize;
        let r_a = 0.5;
        let region = SmacRegion::new(Point::origin(2).expect("origin"), r_a, c_cap, nu, p_a, 0.2)
            .expect("valid region");
        let query = AdversarialQuery::new(eps_ratio * r_a, n).expect("valid query");
        let poly = theorem1_bound(&region, &query).expect("bound");
        let expo = theorem1_bound_exponential(&region, &query).expect("bound");
        if expo > poly {
            eprintln!("draw {draw}: exponential {expo} > polynomial {poly}");
            pass = false;
        }
    }

    verdict_line(5, "closed-form cross-checks", pass);
    assert!(pass);
}

#[test]
fn acceptance_6_sampler_audits() {
    let trials = 100_000u64;
    let mut pass = true;

    /// Simpson quadrature of f over [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = f(a) + f(b);
        for i in 1..panels {
            let x = a + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        acc * h / 3.0
    }
    // radial density of the uniform unit ball is n t^(n-1) on [0, 1]
    fn radial_moment(n: usize, k: i32) -> f64 {
        simpson(
            |t| n as f64 * t.powi(n as i32 - 1) * t.powi(k),
            0.0,
            1.0,
            20_000,
        )
    }

    for n in [2usize, 5, 10] {
        let origin = Point::origin(n).expect("origin");
        let mut rng = trial_rng(6, n as u64);
        let mut inside_half = 0u64;
        let mut sum_norm_sq = 0.0f64;
        for _ in 0..trials {
            let x = sample_uniform_ball(n, 1.0, &origin, &mut rng).expect("draw");
            if x.norm() <= 0.5 {
                inside_half += 1;
            }
            sum_norm_sq += x.norm_sq();
        }

        // radial CDF at t = 0.5 is 0.5^n
        let p = 0.5f64.powi(n as i32);
        let se_cdf = (p * (1.0 - p) / trials as f64).sqrt();
        let rate = inside_half as f64 / trials as f64;
        if (rate - p).abs() > 3.0 * se_cdf {
            eprintln!(
                "n={n}: radial CDF rate {rate} vs {p} (3se {})",
                3.0 * se_cdf
            );
            pass = false;
        }

        // E norm^2 = n/(n+2), cross-checked against quadrature first
        let closed = n as f64 / (n as f64 + 2.0);
        if (radial_moment(n, 2) - closed).abs() > 1e-10 {
            eprintln!("n={n}: quadrature disagrees with n/(n+2)");
            pass = false;
        }
        let var = radial_moment(n, 4) - closed * closed;
        let se_mean = (var / trials as f64).sqrt();
        let mean = sum_norm_sq / trials as f64;
        if (mean - closed).abs() > 3.0 * se_mean {
            eprintln!(
                "n={n}: mean norm^2 {mean} vs {closed} (3se {})",
                3.0 * se_mean
            );
            pass = false;
        }
    }
    verdict_line(6, "sampler audits", pass);
    assert!(pass);
}

#[test]
fn acceptance_7_determinism_across_parallelism() {
    let config = stealth_config(20, 10, 0.85, 0.0, ActivationKind::Relu, 20_000, 77);
    let serial = run_stealth_success(&config, 1).expect("serial run");
    let parallel = run_stealth_success(&config, 8).expect("parallel run");

    let dir = tempfile::tempdir().expect("tempdir");
    let json_a = dir.path().join("serial.json");
    let json_b = dir.path().join("parallel.json");
    let csv_a = dir.path().join("serial.csv");
    let csv_b = dir.path().join("parallel.csv");
    write_reports_json(std::slice::from_ref(&serial), &json_a).expect("write");
    write_reports_json(std::slice::from_ref(&parallel), &json_b).expect("write");
    write_reports_csv(std::slice::from_ref(&serial), &csv_a).expect("write");
    write_reports_csv(std::slice::from_ref(&parallel), &csv_b).expect("write");

    let json_bytes_match =
        std::fs::read(&json_a).expect("read") == std::fs::read(&json_b).expect("read");
    let csv_bytes_match =
        std::fs::read(&csv_a).expect("read") == std::fs::read(&csv_b).expect("read");

    // same invariance for a region experiment
    let t1_config = ExperimentConfig {
        experiment: ExperimentKind::Theorem1Check,
        over: None,
        n: OneOrMany::One(25),
        m: None,
        gamma: None,
        epsilon: Some(0.05),
        delta: None,
        activation: None,
        trials: 20_000,
        seed: 78,
        validation_mode: ValidationMode::Uniform,
        redraw_validation: false,
        r_a: Some(0.5),
        c_cap: None,
        nu: None,
        p_a: None,
        cap_delta: None,
        center: None,
        model: None,
    };
    let t1_serial = run_theorem1_check(&t1_config, 1).expect("serial run");
    let t1_parallel = run_theorem1_check(&t1_config, 8).expect("parallel run");
    let t1_match = reports_to_json(std::slice::from_ref(&t1_serial))
        == reports_to_json(std::slice::from_ref(&t1_parallel))
        && reports_to_csv(std::slice::from_ref(&t1_serial))
            == reports_to_csv(std::slice::from_ref(&t1_parallel));

    let pass = json_bytes_match && csv_bytes_match && t1_match;
    verdict_line(7, "byte-identical reports under parallelism", pass);
    assert!(pass);
}
