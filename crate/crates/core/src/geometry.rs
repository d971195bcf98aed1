//! n-dimensional vector arithmetic, unit-ball membership, and uniform
//! sampling on balls and spheres.
//!
//! Samplers draw from an explicit RNG stream. Experiments derive one
//! independent stream per trial with [`trial_rng`], so serial and parallel
//! runs see bit-identical draws.

use std::borrow::Cow;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on unit-ball membership before an input is rejected.
/// Sampler outputs can sit on the boundary up to rounding.
pub const TOL_BALL: f64 = 1e-12;

static CLAMP_WARNINGS: AtomicU64 = AtomicU64::new(0);

/// Number of classifier inputs so far that were renormalized back onto the
/// unit ball because rounding pushed their norm into `(1, 1 + TOL_BALL]`.
pub fn clamp_warning_count() -> u64 {
    CLAMP_WARNINGS.load(Ordering::Relaxed)
}

/// A feature vector in `R^n`, `n >= 1`, all coordinates finite.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("coords", "dimension must be at least 1"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coords", "coordinates must be finite"));
        }
        Ok(Self { coords })
    }

    pub fn origin(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Euclidean inner product `sum_k a_k b_k`.
    pub fn inner(&self, other: &Point) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(&self, other: &Point) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn scale(&self, k: f64) -> Point {
        Point {
            coords: self.coords.iter().map(|c| c * k).collect(),
        }
    }

    pub fn add(&self, other: &Point) -> Result<Point> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Point {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Point) -> Result<Point> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(Point {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn in_unit_ball(&self) -> bool {
        self.norm() <= 1.0 + TOL_BALL
    }

    /// Resolve a classifier input against the unit-ball domain. Norms in
    /// `(1, 1 + TOL_BALL]` are renormalized and counted; larger norms are
    /// rejected.
    pub fn as_unit_ball_input(&self) -> Result<Cow<'_, Point>> {
        let norm = self.norm();
        if norm <= 1.0 {
            Ok(Cow::Borrowed(self))
        } else if norm <= 1.0 + TOL_BALL {
            CLAMP_WARNINGS.fetch_add(1, Ordering::Relaxed);
            Ok(Cow::Owned(self.scale(1.0 / norm)))
        } else {
            Err(Error::OutsideUnitBall { norm })
        }
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let coords = Vec::<f64>::deserialize(deserializer)?;
        Point::new(coords).map_err(serde::de::Error::custom)
    }
}

/// A closed ball `B_n(radius, center)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBallSpec")]
pub struct BallSpec {
    center: Point,
    radius: f64,
}

#[derive(Deserialize)]
struct RawBallSpec {
    center: Point,
    radius: f64,
}

impl TryFrom<RawBallSpec> for BallSpec {
    type Error = Error;

    fn try_from(raw: RawBallSpec) -> Result<Self> {
        BallSpec::new(raw.center, raw.radius)
    }
}

impl BallSpec {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if radius <= 0.0 || !radius.is_finite() {
            return Err(Error::invalid("radius", "must be a positive finite real"));
        }
        Ok(Self { center, radius })
    }

    /// A ball that must itself fit inside the unit ball, as required for
    /// classifier regions: `norm(center) + radius <= 1 + TOL_BALL`.
    pub fn inside_unit_ball(center: Point, radius: f64) -> Result<Self> {
        let spec = Self::new(center, radius)?;
        if spec.center.norm() + spec.radius > 1.0 + TOL_BALL {
            return Err(Error::invalid(
                "radius",
                "ball must lie inside the unit ball: norm(center) + radius <= 1",
            ));
        }
        Ok(spec)
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    /// Closed-ball membership: `distance(x, center) <= radius`.
    pub fn contains(&self, x: &Point) -> Result<bool> {
        Ok(x.distance(&self.center)? <= self.radius)
    }
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and an index. Injective in the
/// index for a fixed master, so sweep cells never share a seed.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    splitmix64(master) ^ splitmix64(index)
}

/// Per-trial stream: the trial index is mixed into the ChaCha key next to
/// the master seed, so trial `t` sees the same draws whether trials run
/// serially or in parallel.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial_index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Fill `out` with independent standard normals (Box-Muller; two uniforms
/// per pair of normals, spare discarded on odd lengths).
fn fill_standard_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        // random::<f64>() is in [0, 1); flip to (0, 1] so the log is finite.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out[i] = r * theta.cos();
        i += 1;
        if i < out.len() {
            out[i] = r * theta.sin();
            i += 1;
        }
    }
}

/// An isotropic direction of unit norm.
fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v = vec![0.0; n];
    loop {
        fill_standard_normals(rng, &mut v);
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            for c in &mut v {
                *c /= norm;
            }
            return v;
        }
    }
}

fn check_sampler_args(n: usize, radius: f64, center: &Point) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "dimension must be at least 1"));
    }
    if radius <= 0.0 || !radius.is_finite() {
        return Err(Error::invalid("radius", "must be a positive finite real"));
    }
    if center.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: center.dim(),
        });
    }
    Ok(())
}

/// Uniform (Lebesgue) draw from the ball `B_n(radius, center)`.
///
/// Gaussian direction, normalized, scaled by `radius * U^(1/n)`. Exact in
/// any dimension, no rejection.
pub fn sample_uniform_ball<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    center: &Point,
    rng: &mut R,
) -> Result<Point> {
    check_sampler_args(n, radius, center)?;
    let dir = random_direction(n, rng);
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / n as f64);
    let coords = center
        .coords()
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + d * scale)
        .collect();
    Point::new(coords)
}

/// Rotationally invariant draw from the sphere `S_{n-1}(radius, center)`.
pub fn sample_uniform_sphere<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    center: &Point,
    rng: &mut R,
) -> Result<Point> {
    check_sampler_args(n, radius, center)?;
    let dir = random_direction(n, rng);
    let coords = center
        .coords()
        .iter()
        .zip(&dir)
        .map(|(c, d)| c + d * radius)
        .collect();
    Point::new(coords)
}
