//! Closed-form equilibrium laws of the two exchange processes.
//!
//! [`DrmEquilibrium`] is the Gamma law with shape 1/2 and mean `w`
//! (scale `C = 2w`); [`DyEquilibrium`] is the exponential law with mean `w`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::special::erf;

/// Which exchange rule a population or equilibrium refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Directed Random Market: one agent gives a random fraction of its wealth.
    Drm,
    /// Dragulescu-Yakovenko: pooled wealth is re-split uniformly.
    Dy,
}

impl std::str::FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "drm" => Ok(Model::Drm),
            "dy" => Ok(Model::Dy),
            other => Err(format!("unknown model {other:?} (expected drm or dy)")),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Drm => "drm",
            Model::Dy => "dy",
        })
    }
}

fn check_mean(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "mean wealth must be positive and finite, got {w}"
        )))
    }
}

/// Equilibrium of the directed process: density `exp(-x/2w) / sqrt(2 pi w x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrmEquilibrium {
    w: f64,
}

impl DrmEquilibrium {
    pub fn new(w: f64) -> Result<Self> {
        check_mean(w)?;
        Ok(Self { w })
    }

    pub fn mean(&self) -> f64 {
        self.w
    }

    /// Gamma scale parameter `C = 2w`.
    pub fn scale(&self) -> f64 {
        2.0 * self.w
    }

    pub fn variance(&self) -> f64 {
        2.0 * self.w * self.w
    }

    pub fn cv(&self) -> f64 {
        std::f64::consts::SQRT_2
    }

    /// Density at `x > 0`. The density diverges at the origin, so `x = 0` is rejected.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain(format!("drm pdf requires x > 0, got {x}")));
        }
        let c = self.scale();
        Ok((-x / c).exp() / (c * PI * x).sqrt())
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(domain(format!("drm cdf requires x >= 0, got {x}")));
        }
        Ok(erf((x / self.scale()).sqrt()))
    }

    /// Laplace transform `1 / sqrt(1 + 2 w s)`.
    pub fn laplace(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(domain(format!(
                "laplace transform requires s >= 0, got {s}"
            )));
        }
        Ok(1.0 / (1.0 + self.scale() * s).sqrt())
    }

    /// Draws `2w Z^2` with `Z` standard normal, which is Gamma(1/2, 2w) in law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.scale() * z * z
    }
}

/// Exponential (Boltzmann-Gibbs) equilibrium of the pooled-exchange process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyEquilibrium {
    w: f64,
}

impl DyEquilibrium {
    pub fn new(w: f64) -> Result<Self> {
        check_mean(w)?;
        Ok(Self { w })
    }

    pub fn mean(&self) -> f64 {
        self.w
    }

    pub fn variance(&self) -> f64 {
        self.w * self.w
    }

    pub fn cv(&self) -> f64 {
        1.0
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(domain(format!("dy pdf requires x >= 0, got {x}")));
        }
        Ok((-x / self.w).exp() / self.w)
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(domain(format!("dy cdf requires x >= 0, got {x}")));
        }
        Ok(-(-x / self.w).exp_m1())
    }

    pub fn laplace(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(domain(format!(
                "laplace transform requires s >= 0, got {s}"
            )));
        }
        Ok(1.0 / (1.0 + self.w * s))
    }

    /// Inverse-CDF draw `-w ln(1 - U)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        -self.w * (-u).ln_1p()
    }
}

/// Either equilibrium behind one interface, keyed by [`Model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Equilibrium {
    Drm(DrmEquilibrium),
    Dy(DyEquilibrium),
}

impl Equilibrium {
    pub fn new(model: Model, w: f64) -> Result<Self> {
        Ok(match model {
            Model::Drm => Equilibrium::Drm(DrmEquilibrium::new(w)?),
            Model::Dy => Equilibrium::Dy(DyEquilibrium::new(w)?),
        })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            Equilibrium::Drm(e) => e.cdf(x),
            Equilibrium::Dy(e) => e.cdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        match self {
            Equilibrium::Drm(e) => e.pdf(x),
            Equilibrium::Dy(e) => e.pdf(x),
        }
    }

    pub fn laplace(&self, s: f64) -> Result<f64> {
        match self {
            Equilibrium::Drm(e) => e.laplace(s),
            Equilibrium::Dy(e) => e.laplace(s),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Equilibrium::Drm(e) => e.sample(rng),
            Equilibrium::Dy(e) => e.sample(rng),
        }
    }

    /// Gini coefficient of the law: `2/pi` for the directed process, `1/2` for the exponential.
    pub fn gini(&self) -> f64 {
        match self {
            Equilibrium::Drm(_) => 2.0 / PI,
            Equilibrium::Dy(_) => 0.5,
        }
    }

    /// Whether the density is unbounded at the origin (needs a singular first-cell rule).
    pub fn singular_at_origin(&self) -> bool {
        matches!(self, Equilibrium::Drm(_))
    }
}
