//! Adversarial-example machinery: the synthetic smeared-absolute-continuity
//! (SmAC) family, the shell admission test with constructed witnesses, and
//! the closed-form existence bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{BallClassifier, ClassifierMap, Label};
use crate::error::{Error, Result};
use crate::geometry::{sample_uniform_ball, BallSpec, Point};

/// Class label carried by region draws.
pub fn label_a() -> Label {
    Label::new("A")
}

/// Label for draws outside the region.
pub fn label_other() -> Label {
    Label::new("other")
}

/// A synthetic class-A distribution descriptor: a ball `B_n(r_A, x_A)`
/// holding class A with density capped at `C / (V_n(B_n) r_A^n)`, mass at
/// least `nu`, class prior `P_A`, and opposite-label reach `Delta` beyond
/// the boundary.
///
/// The built-in sampler instantiates the uniform case, which meets the cap
/// with `C = 1` and the mass condition with `nu = 1`; the general constants
/// are still carried so bounds can be computed for hypothetical densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSmacRegion", into = "RawSmacRegion")]
pub struct SmacRegion {
    region: BallSpec,
    c_cap: f64,
    nu: f64,
    p_a: f64,
    delta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSmacRegion {
    center: Point,
    #[serde(rename = "r_A")]
    r_a: f64,
    #[serde(rename = "C")]
    c_cap: f64,
    nu: f64,
    #[serde(rename = "P_A")]
    p_a: f64,
    #[serde(rename = "Delta")]
    delta: f64,
}

impl TryFrom<RawSmacRegion> for SmacRegion {
    type Error = Error;

    fn try_from(raw: RawSmacRegion) -> Result<Self> {
        SmacRegion::new(raw.center, raw.r_a, raw.c_cap, raw.nu, raw.p_a, raw.delta)
    }
}

impl From<SmacRegion> for RawSmacRegion {
    fn from(region: SmacRegion) -> Self {
        RawSmacRegion {
            center: region.region.center().clone(),
            r_a: region.region.radius(),
            c_cap: region.c_cap,
            nu: region.nu,
            p_a: region.p_a,
            delta: region.delta,
        }
    }
}

impl SmacRegion {
    pub fn new(center: Point, r_a: f64, c_cap: f64, nu: f64, p_a: f64, delta: f64) -> Result<Self> {
        if !(r_a > 0.0 && r_a < 1.0) {
            return Err(Error::invalid("r_A", "must lie in (0, 1)"));
        }
        if c_cap <= 0.0 || !c_cap.is_finite() {
            return Err(Error::invalid("C", "must be a positive finite real"));
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::invalid("nu", "must lie in (0, 1]"));
        }
        if !(p_a > 0.0 && p_a <= 1.0) {
            return Err(Error::invalid("P_A", "must lie in (0, 1]"));
        }
        if delta <= 0.0 || !delta.is_finite() {
            return Err(Error::invalid("Delta", "must be a positive finite real"));
        }
        // witnesses step Delta/2 beyond the boundary and must stay inside
        // the unit ball
        if center.norm() + r_a + delta / 2.0 > 1.0 + crate::geometry::TOL_BALL {
            return Err(Error::invalid(
                "Delta",
                "norm(center) + r_A + Delta/2 must not exceed 1",
            ));
        }
        let region = BallSpec::inside_unit_ball(center, r_a)?;
        Ok(Self {
            region,
            c_cap,
            nu,
            p_a,
            delta,
        })
    }

    pub fn uniform_unit(center: Point, r_a: f64, delta: f64) -> Result<Self> {
        Self::new(center, r_a, 1.0, 1.0, 1.0, delta)
    }

    pub fn region(&self) -> &BallSpec {
        &self.region
    }

    pub fn r_a(&self) -> f64 {
        self.region.radius()
    }

    pub fn c_cap(&self) -> f64 {
        self.c_cap
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    /// The analytic classifier for which the region's reach condition holds
    /// with every positive reach.
    pub fn ball_classifier(&self) -> ClassifierMap {
        ClassifierMap::Ball(
            BallClassifier::new(self.region.clone(), label_a(), label_other())
                .expect("region validated at construction"),
        )
    }
}

/// The admission question: does a class-A draw admit an
/// `(epsilon + Delta)`-adversarial example?
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialQuery {
    pub epsilon: f64,
    pub n: usize,
}

impl AdversarialQuery {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "dimension must be at least 1"));
        }
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(Error::invalid("epsilon", "must be a positive finite real"));
        }
        Ok(Self { epsilon, n })
    }

    fn check_against(&self, region: &SmacRegion) -> Result<()> {
        if self.epsilon >= region.r_a() {
            return Err(Error::invalid("epsilon", "must be smaller than r_A"));
        }
        Ok(())
    }
}

/// `(1 - eps/r_A)^n`: the inner-ball volume fraction appearing in every
/// bound. Single implementation so the bound and the critical dimension
/// can never disagree on rounding.
fn inner_fraction(eps_over_r: f64, n: usize) -> f64 {
    let base = 1.0 - eps_over_r;
    if n <= i32::MAX as usize {
        base.powi(n as i32)
    } else {
        base.powf(n as f64)
    }
}

/// Probability mass of the boundary shell of relative thickness
/// `eps_over_r` under the uniform-in-ball distribution.
pub fn shell_mass(eps_over_r: f64, n: usize) -> Result<f64> {
    if !(eps_over_r > 0.0 && eps_over_r < 1.0) {
        return Err(Error::invalid(
            "epsilon",
            "epsilon / r_A must lie in (0, 1)",
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n", "dimension must be at least 1"));
    }
    Ok(1.0 - inner_fraction(eps_over_r, n))
}

fn bound_core(region: &SmacRegion, fraction: f64) -> f64 {
    region.p_a() * (region.nu() - region.c_cap() * fraction).max(0.0)
}

/// Lower bound on the probability that a sample admits an
/// `(epsilon + Delta)`-adversarial example:
/// `P_A max(nu - C (1 - eps/r_A)^n, 0)`.
pub fn theorem1_bound(region: &SmacRegion, query: &AdversarialQuery) -> Result<f64> {
    query.check_against(region)?;
    Ok(bound_core(
        region,
        inner_fraction(query.epsilon / region.r_a(), query.n),
    ))
}

/// Exponential relaxation of [`theorem1_bound`] using
/// `(1-x)^n <= exp(-n x)`; never exceeds the polynomial form.
pub fn theorem1_bound_exponential(region: &SmacRegion, query: &AdversarialQuery) -> Result<f64> {
    query.check_against(region)?;
    let fraction = (-(query.n as f64) * query.epsilon / region.r_a()).exp();
    Ok(bound_core(region, fraction))
}

/// Smallest dimension at which the existence bound becomes strictly
/// positive. Decided by evaluating the bound itself near the floating-point
/// threshold, so it is exactly consistent with [`theorem1_bound`].
pub fn critical_dimension(region: &SmacRegion, query: &AdversarialQuery) -> Result<usize> {
    query.check_against(region)?;
    let eps_over_r = query.epsilon / region.r_a();
    let positive_at = |n: usize| region.nu() - region.c_cap() * inner_fraction(eps_over_r, n) > 0.0;
    let threshold = (region.nu().ln() - region.c_cap().ln()) / (1.0 - eps_over_r).ln();
    let mut n = if threshold.is_finite() && threshold > 2.0 {
        (threshold as usize).saturating_sub(2).max(1)
    } else {
        1
    };
    while !positive_at(n) {
        n += 1;
    }
    while n > 1 && positive_at(n - 1) {
        n -= 1;
    }
    Ok(n)
}

/// `1 - (1 - p)^N`: chance of at least one admitting sample among N
/// independent draws when each admits with probability at least p.
pub fn sample_bound_over_n(per_sample_bound: f64, n_samples: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&per_sample_bound) {
        return Err(Error::invalid(
            "per_sample_bound",
            "must be a probability in [0, 1]",
        ));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    let complement = (1.0 - per_sample_bound).powi(n_samples.min(i32::MAX as u64) as i32);
    Ok(1.0 - complement)
}

const REJECTION_CAP: u32 = 1_000_000;

/// Draw one labeled sample from the built-in SmAC instantiation: with
/// probability `P_A`, uniform in the region ball with label A; otherwise
/// uniform in the unit ball outside the region with a non-A label.
pub fn sample_smac<R: Rng + ?Sized>(region: &SmacRegion, rng: &mut R) -> Result<(Point, Label)> {
    let n = region.dim();
    if rng.random::<f64>() < region.p_a() {
        let point = sample_uniform_ball(n, region.r_a(), region.region.center(), rng)?;
        Ok((point, label_a()))
    } else {
        let origin = Point::origin(n)?;
        for _ in 0..REJECTION_CAP {
            let point = sample_uniform_ball(n, 1.0, &origin, rng)?;
            if !region.region.contains(&point)? {
                return Ok((point, label_other()));
            }
        }
        Err(Error::Infeasible(
            "could not draw a point outside the region".to_string(),
        ))
    }
}

/// Result of the admission test, with the constructed adversarial witness
/// when one exists.
#[derive(Clone, Debug, PartialEq)]
pub struct Admission {
    pub admits: bool,
    pub witness: Option<Point>,
}

/// Shell admission test for a class-A draw against the analytic ball
/// classifier: x admits an `(epsilon + Delta)`-adversarial example iff it
/// lies in the boundary shell `r_A - epsilon < |x - x_A| <= r_A`. The
/// witness steps `Delta/2` beyond the boundary along the outward ray.
pub fn admits_adversarial(
    classifier: &ClassifierMap,
    region: &SmacRegion,
    x: &Point,
    label: &Label,
    query: &AdversarialQuery,
) -> Result<Admission> {
    let ClassifierMap::Ball(ball) = classifier else {
        return Err(Error::RegionMismatch);
    };
    if ball.region() != region.region() {
        return Err(Error::RegionMismatch);
    }
    if *label != label_a() {
        return Err(Error::invalid("label", "admission test applies to class A"));
    }
    query.check_against(region)?;
    let center = region.region.center();
    let dist = x.distance(center)?;
    let admits = dist > region.r_a() - query.epsilon && dist <= region.r_a();
    if !admits {
        return Ok(Admission {
            admits: false,
            witness: None,
        });
    }
    let direction = x.sub(center)?.scale(1.0 / dist);
    let mut witness = center.add(&direction.scale(region.r_a() + region.delta() / 2.0))?;
    // region configuration keeps the step inside the unit ball; clip the
    // rounding crumbs
    let norm = witness.norm();
    if norm > 1.0 {
        witness = witness.scale(1.0 / norm);
    }
    Ok(Admission {
        admits: true,
        witness: Some(witness),
    })
}
