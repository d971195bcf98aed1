//! Nonlinearities for the attack term: ReLU, logistic sigmoid, and the
//! bell-shaped kinds (Gaussian, normalized sigmoid difference), plus the
//! half-line suprema the parameter solver needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerically stable logistic sigmoid; never overflows.
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `max(s, 0)`, exactly zero on the nonpositive half-line.
pub fn relu(s: f64) -> f64 {
    if s > 0.0 {
        s
    } else {
        0.0
    }
}

/// The function g applied inside the attack term.
///
/// `SigmoidDiffBell` is `(sigma(s) - sigma(s + a)) / (sigma(0) - sigma(a))`,
/// which normalizes to 1 at zero but peaks above 1 at `s = -a/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActivationRepr", into = "ActivationRepr")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    GaussianBell,
    SigmoidDiffBell { a: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ActivationRepr {
    Plain(String),
    WithShift { tag: String, a: f64 },
}

impl From<ActivationKind> for ActivationRepr {
    fn from(kind: ActivationKind) -> Self {
        match kind {
            ActivationKind::SigmoidDiffBell { a } => ActivationRepr::WithShift {
                tag: kind.tag().to_string(),
                a,
            },
            other => ActivationRepr::Plain(other.tag().to_string()),
        }
    }
}

impl TryFrom<ActivationRepr> for ActivationKind {
    type Error = Error;

    fn try_from(repr: ActivationRepr) -> Result<Self> {
        let kind = match repr {
            ActivationRepr::Plain(tag) => match tag.as_str() {
                "relu" => ActivationKind::Relu,
                "sigmoid" => ActivationKind::Sigmoid,
                "gauss_bell" => ActivationKind::GaussianBell,
                "sigmoid_diff_bell" => {
                    return Err(Error::invalid(
                        "activation",
                        "sigmoid_diff_bell requires a shift field \"a\"",
                    ))
                }
                other => {
                    return Err(Error::invalid(
                        "activation",
                        format!("unknown tag \"{other}\""),
                    ))
                }
            },
            ActivationRepr::WithShift { tag, a } => {
                if tag != "sigmoid_diff_bell" {
                    return Err(Error::invalid(
                        "activation",
                        format!("tag \"{tag}\" does not take a shift field"),
                    ));
                }
                ActivationKind::SigmoidDiffBell { a }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl ActivationKind {
    /// The lowercase tag used in every file format.
    pub fn tag(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::GaussianBell => "gauss_bell",
            ActivationKind::SigmoidDiffBell { .. } => "sigmoid_diff_bell",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ActivationKind::SigmoidDiffBell { a } = self {
            if *a == 0.0 || !a.is_finite() {
                return Err(Error::invalid(
                    "activation.a",
                    "shift must be a nonzero finite real",
                ));
            }
        }
        Ok(())
    }

    pub fn is_bell(&self) -> bool {
        matches!(
            self,
            ActivationKind::GaussianBell | ActivationKind::SigmoidDiffBell { .. }
        )
    }

    /// Evaluate g. Total for every kind.
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ActivationKind::Relu => relu(s),
            ActivationKind::Sigmoid => sigmoid(s),
            ActivationKind::GaussianBell => (-0.5 * s * s).exp(),
            ActivationKind::SigmoidDiffBell { a } => {
                (sigmoid(s) - sigmoid(s + a)) / (0.5 - sigmoid(*a))
            }
        }
    }

    /// Location of the unique maximum for bell kinds.
    pub fn peak(&self) -> Option<f64> {
        match self {
            ActivationKind::GaussianBell => Some(0.0),
            ActivationKind::SigmoidDiffBell { a } => Some(-a / 2.0),
            _ => None,
        }
    }

    /// True iff `sup over s <= s0 of g(s)` equals `g(s0)` for every
    /// `s0 <= 0`, i.e. evaluating g at the half-line endpoint is already the
    /// worst case. False exactly when a bell peak sits at negative s.
    pub fn is_monotone_safe_on_negatives(&self) -> bool {
        match self {
            ActivationKind::Relu | ActivationKind::Sigmoid | ActivationKind::GaussianBell => true,
            ActivationKind::SigmoidDiffBell { a } => *a < 0.0,
        }
    }

    /// Closed-form supremum of g over the half-line `s <= s0`. This is what
    /// the attack constructor bounds against, so the epsilon guarantee stays
    /// sound for kinds whose peak lies left of the dead-zone boundary.
    pub fn sup_below(&self, s0: f64) -> f64 {
        match self.peak() {
            None => self.eval(s0),
            Some(peak) => self.eval(s0.min(peak)),
        }
    }
}
