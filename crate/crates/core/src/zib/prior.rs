//! Prior regimes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::special::softplus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PriorRegime {
    Strong,
    #[default]
    Moderate,
    #[serde(alias = "flat")]
    None,
}

impl PriorRegime {
    pub const ALL: [PriorRegime; 3] = [PriorRegime::Strong, PriorRegime::Moderate, PriorRegime::None];

    pub fn name(self) -> &'static str {
        match self {
            PriorRegime::Strong => "strong",
            PriorRegime::Moderate => "moderate",
            PriorRegime::None => "none",
        }
    }

    pub fn priors(self) -> Priors {
        match self {
            PriorRegime::Strong => Priors::regularized(0.5),
            PriorRegime::Moderate => Priors::regularized(1.0),
            PriorRegime::None => Priors {
                coef: Prior::Flat,
                mu_intercept: Prior::StudentT { nu: 3.0, scale: 2.5 },
                zi_intercept: Prior::Logistic,
                phi_intercept: Prior::StudentT { nu: 3.0, scale: 2.5 },
                sd: Prior::StudentT { nu: 3.0, scale: 2.5 },
                lkj_eta: 1.0,
            },
        }
    }
}

impl fmt::Display for PriorRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorRegime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "strong" => Ok(PriorRegime::Strong),
            "moderate" => Ok(PriorRegime::Moderate),
            "none" | "flat" => Ok(PriorRegime::None),
            other => Err(Error::Argument(format!("unknown prior regime `{other}`"))),
        }
    }
}

/// Univariate prior kernels, location 0. Constants are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Flat,
    Normal { sd: f64 },
    StudentT { nu: f64, scale: f64 },
    Logistic,
    Exponential { rate: f64 },
}

impl Prior {
    /// (log density, derivative) at x. For scale priors `x` is the sd itself.
    pub fn lp_grad(&self, x: f64) -> (f64, f64) {
        match *self {
            Prior::Flat => (0.0, 0.0),
            Prior::Normal { sd } => {
                let v = sd * sd;
                (-0.5 * x * x / v, -x / v)
            }
            Prior::StudentT { nu, scale } => {
                let r = x / scale;
                (
                    -0.5 * (nu + 1.0) * (r * r / nu).ln_1p(),
                    -(nu + 1.0) * x / (nu * scale * scale + x * x),
                )
            }
            Prior::Logistic => (-x - 2.0 * softplus(-x), 1.0 - 2.0 * crate::special::inv_logit(x)),
            Prior::Exponential { rate } => (-rate * x, -rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Priors {
    pub coef: Prior,
    pub mu_intercept: Prior,
    pub zi_intercept: Prior,
    pub phi_intercept: Prior,
    /// Applied to each random-effect sd (half-distribution on sd > 0).
    pub sd: Prior,
    pub lkj_eta: f64,
}

impl Priors {
    fn regularized(coef_sd: f64) -> Self {
        Self {
            coef: Prior::Normal { sd: coef_sd },
            mu_intercept: Prior::StudentT { nu: 3.0, scale: 2.5 },
            zi_intercept: Prior::Normal { sd: 1.5 },
            phi_intercept: Prior::Normal { sd: 1.0 },
            sd: Prior::Exponential { rate: 1.0 },
            lkj_eta: 2.0,
        }
    }
}
