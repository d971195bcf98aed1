//! One-neuron stealth attacks: construct the additive term
//! `A(x) = D g((x, kappa x') - b)`, solve for `(kappa, D, b)` per activation
//! kind, evaluate attacked maps, and check the stealth constraints.

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize};

use crate::activations::{sigmoid, ActivationKind};
use crate::backbone::ClassifierMap;
use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_ball, sample_uniform_sphere, Point};

/// Relative tolerance for the trigger-shift equality check.
pub const DELTA_CHECK_REL: f64 = 1e-10;

/// Relative slack granted on the validation deviation check. With
/// `epsilon = 0` (ReLU) the check is exact.
pub const EPS_CHECK_REL: f64 = 1e-10;

/// What the attacker wants: shift the score at `x_prime` by `delta` while
/// staying within `epsilon` on every unknown validation point.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackSpec {
    pub x_prime: Point,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub activation: ActivationKind,
}

impl AttackSpec {
    pub fn new(
        x_prime: Point,
        gamma: f64,
        epsilon: f64,
        delta: f64,
        activation: ActivationKind,
    ) -> Result<Self> {
        activation.validate()?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1)"));
        }
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::invalid("delta", "must be a positive finite real"));
        }
        if epsilon < 0.0 || !epsilon.is_finite() {
            return Err(Error::invalid(
                "epsilon",
                "must be a nonnegative finite real",
            ));
        }
        if epsilon == 0.0 && activation != ActivationKind::Relu {
            return Err(Error::invalid(
                "epsilon",
                format!("epsilon must be positive for {}", activation.tag()),
            ));
        }
        if x_prime.norm_sq() == 0.0 {
            return Err(Error::invalid("x_prime", "trigger must have positive norm"));
        }
        if !x_prime.in_unit_ball() {
            return Err(Error::invalid(
                "x_prime",
                "trigger must lie in the unit ball",
            ));
        }
        Ok(Self {
            x_prime,
            gamma,
            epsilon,
            delta,
            activation,
        })
    }
}

/// Solved attack parameters. `w = kappa * x_prime` componentwise; `z` is the
/// dead-zone margin `(1-gamma)/2 * |x'|^2` for monotone kinds and
/// `(1-gamma) * |x'|^2` for bell kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackParams {
    w: Point,
    b: f64,
    gain: f64,
    kappa: f64,
    gamma: f64,
    activation: ActivationKind,
    z: f64,
}

impl AttackParams {
    pub fn w(&self) -> &Point {
        &self.w
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// The output gain D.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// The trigger recovered from the stored weights: `w / kappa`.
    pub fn trigger(&self) -> Point {
        self.w.scale(1.0 / self.kappa)
    }

    fn dead_zone_margin(activation: ActivationKind, gamma: f64, norm_sq: f64) -> f64 {
        if activation.is_bell() {
            (1.0 - gamma) * norm_sq
        } else {
            (1.0 - gamma) / 2.0 * norm_sq
        }
    }
}

impl Serialize for AttackParams {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("AttackParams", 6)?;
        s.serialize_field("w", &self.w)?;
        s.serialize_field("b", &self.b)?;
        s.serialize_field("D", &self.gain)?;
        s.serialize_field("kappa", &self.kappa)?;
        s.serialize_field("gamma", &self.gamma)?;
        s.serialize_field("activation", &self.activation)?;
        s.end()
    }
}

#[derive(Deserialize)]
struct RawAttackParams {
    w: Point,
    b: f64,
    #[serde(rename = "D")]
    gain: f64,
    kappa: f64,
    gamma: f64,
    activation: ActivationKind,
}

impl<'de> Deserialize<'de> for AttackParams {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = RawAttackParams::deserialize(deserializer)?;
        if raw.kappa <= 0.0 || !raw.kappa.is_finite() || raw.gain <= 0.0 || !raw.gain.is_finite() {
            return Err(serde::de::Error::custom("kappa and D must be positive"));
        }
        if !(raw.gamma > 0.0 && raw.gamma < 1.0) {
            return Err(serde::de::Error::custom("gamma must lie in (0, 1)"));
        }
        raw.activation
            .validate()
            .map_err(serde::de::Error::custom)?;
        let norm_sq = raw.w.norm_sq() / (raw.kappa * raw.kappa);
        let z = AttackParams::dead_zone_margin(raw.activation, raw.gamma, norm_sq);
        Ok(AttackParams {
            w: raw.w,
            b: raw.b,
            gain: raw.gain,
            kappa: raw.kappa,
            gamma: raw.gamma,
            activation: raw.activation,
            z,
        })
    }
}

/// The owner's secret validation set; all points live in the unit ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidationSet {
    points: Vec<Point>,
}

impl ValidationSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some((i, _)) = points.iter().enumerate().find(|(_, p)| !p.in_unit_ball()) {
            return Err(Error::invalid(
                "points",
                format!("validation point {i} lies outside the unit ball"),
            ));
        }
        if let Some(first) = points.first() {
            let n = first.dim();
            if points.iter().any(|p| p.dim() != n) {
                return Err(Error::invalid("points", "mixed dimensions"));
            }
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    /// Cardinality M.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// M points uniform in the unit ball.
    pub fn uniform<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        let origin = Point::origin(n)?;
        let points = (0..m)
            .map(|_| sample_uniform_ball(n, 1.0, &origin, rng))
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }

    /// M points on the unit sphere, the extreme case for the separation
    /// event since inner products with the trigger are largest at radius 1.
    pub fn boundary<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Self> {
        let origin = Point::origin(n)?;
        let points = (0..m)
            .map(|_| sample_uniform_sphere(n, 1.0, &origin, rng))
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }
}

impl<'de> Deserialize<'de> for ValidationSet {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let points = Vec::<Point>::deserialize(deserializer)?;
        ValidationSet::new(points).map_err(serde::de::Error::custom)
    }
}

/// Smallest argument magnitude `u` such that `delta * sup(g over s <= -u)`
/// drops to `target_ratio = epsilon/delta`. Feasibility is monotone in `u`,
/// so bisection converges; the returned value is always feasible.
fn min_feasible_argument(activation: ActivationKind, target_ratio: f64) -> Result<f64> {
    let feasible = |u: f64| activation.sup_below(-u) <= target_ratio;
    if feasible(0.0) {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while !feasible(hi) {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Infeasible(format!(
                "no argument satisfies the epsilon condition for {}",
                activation.tag()
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Solve Problem-1 parameters for the requested activation kind.
///
/// Closed forms: ReLU `kappa = 1/z`, `D = delta`; sigmoid
/// `kappa = ln(delta/epsilon)/z`, `D = delta + epsilon` (both conditions
/// with equality); Gaussian bell `kappa = sqrt(2 ln(delta/epsilon))/z`,
/// `D = delta`. The sigmoid-difference bell is solved against the true
/// half-line supremum of g, since its peak sits at negative argument.
pub fn construct_attack(spec: &AttackSpec) -> Result<AttackParams> {
    let norm_sq = spec.x_prime.norm_sq();
    let z = AttackParams::dead_zone_margin(spec.activation, spec.gamma, norm_sq);
    let (kappa, gain, b_factor) = match spec.activation {
        ActivationKind::Relu => {
            // normalizes the trigger argument to exactly 1
            (1.0 / z, spec.delta, (1.0 + spec.gamma) / 2.0)
        }
        ActivationKind::Sigmoid => {
            if spec.delta > spec.epsilon {
                let kappa = (spec.delta / spec.epsilon).ln() / z;
                (kappa, spec.delta + spec.epsilon, (1.0 + spec.gamma) / 2.0)
            } else {
                // any positive kappa satisfies the epsilon condition here;
                // normalize the trigger argument and scale D for equality
                let kappa = 1.0 / z;
                (kappa, spec.delta / sigmoid(1.0), (1.0 + spec.gamma) / 2.0)
            }
        }
        ActivationKind::GaussianBell => {
            let kappa = if spec.delta > spec.epsilon {
                (2.0 * (spec.delta / spec.epsilon).ln()).sqrt() / z
            } else {
                1.0 / z
            };
            (kappa, spec.delta, 1.0)
        }
        ActivationKind::SigmoidDiffBell { .. } => {
            let u = min_feasible_argument(spec.activation, spec.epsilon / spec.delta)?;
            (u.max(1.0) / z, spec.delta, 1.0)
        }
    };
    Ok(AttackParams {
        w: spec.x_prime.scale(kappa),
        b: kappa * b_factor * norm_sq,
        gain,
        kappa,
        gamma: spec.gamma,
        activation: spec.activation,
        z,
    })
}

/// The additive attack term `D g((x, w) - b)`.
pub fn attack_term(params: &AttackParams, x: &Point) -> Result<f64> {
    let s = x.inner(&params.w)? - params.b;
    Ok(params.gain * params.activation.eval(s))
}

/// Compose a backbone with an attack term into the attacked map.
pub fn attacked_map(base: ClassifierMap, params: AttackParams) -> Result<ClassifierMap> {
    if base.input_dim() != params.w.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.input_dim(),
            got: params.w.dim(),
        });
    }
    Ok(ClassifierMap::Attacked {
        base: Box::new(base),
        attack: params,
    })
}

/// The separation event: `gamma |x'|^2 > (x', x_i)` strictly for every
/// validation point. This is exactly the event whose probability the
/// success bound controls; it holds vacuously for an empty set.
pub fn is_separated(x_prime: &Point, validation: &ValidationSet, gamma: f64) -> Result<bool> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", "must lie in (0, 1)"));
    }
    let threshold = gamma * x_prime.norm_sq();
    for point in validation.points() {
        if x_prime.inner(point)? >= threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of checking the two stealth constraints on a concrete backbone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    /// Largest `|F_a(x) - F(x)|` over the validation set.
    pub max_validation_deviation: f64,
    /// `F_a(x') - F(x')`.
    pub trigger_shift: f64,
    pub eps_ok: bool,
    pub delta_ok: bool,
    pub separated: bool,
}

impl StealthReport {
    /// Both constraints hold: the attack solves Problem 1 on this set.
    pub fn solves_problem(&self) -> bool {
        self.eps_ok && self.delta_ok
    }

    /// Separation guarantees success; a separated failure falsifies the
    /// construction and is treated as a hard error by the harness.
    pub fn guarantee_violated(&self) -> bool {
        self.separated && !self.solves_problem()
    }
}

/// Evaluate both stealth constraints exactly as an owner would: through the
/// attacked map, against the backbone, on every validation point.
pub fn verify_stealth(
    base: &ClassifierMap,
    params: &AttackParams,
    spec: &AttackSpec,
    validation: &ValidationSet,
) -> Result<StealthReport> {
    let mut max_dev: f64 = 0.0;
    for point in validation.points() {
        let base_score = base.evaluate(point)?;
        let attacked_score = base_score + attack_term(params, point)?;
        max_dev = max_dev.max((attacked_score - base_score).abs());
    }
    let base_at_trigger = base.evaluate(&spec.x_prime)?;
    let trigger_shift = (base_at_trigger + attack_term(params, &spec.x_prime)?) - base_at_trigger;
    Ok(StealthReport {
        max_validation_deviation: max_dev,
        trigger_shift,
        eps_ok: max_dev <= spec.epsilon * (1.0 + EPS_CHECK_REL),
        delta_ok: (trigger_shift - spec.delta).abs() <= DELTA_CHECK_REL * spec.delta,
        separated: is_separated(&spec.x_prime, validation, spec.gamma)?,
    })
}

/// Lower bound on the probability (over a uniform trigger draw) that the
/// constructed attack solves Problem 1 against any fixed validation set of
/// at most `m` points: `max(1 - m (1/(2 gamma))^n, 0)`.
pub fn success_probability_bound(m: u64, gamma: f64, n: usize) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::invalid("gamma", "must lie in (0, 1)"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "dimension must be at least 1"));
    }
    let per_point = (1.0 / (2.0 * gamma)).powi(n.min(i32::MAX as usize) as i32);
    Ok((1.0 - m as f64 * per_point).max(0.0))
}
