//! Prior families over the total extent `t_total` and the posterior-median
//! prediction functions they induce.
//!
//! An observation `t` is assumed to be drawn uniformly from `(0, t_total]`,
//! so the likelihood is `1 / t_total` for `t <= t_total` and zero otherwise.
//! The posterior over `t_total` is then proportional to `prior(x) / x` on
//! `[t, ∞)`, and a forecaster's point estimate is its median.
//!
//! All densities here are unnormalized. Medians do not depend on the scale
//! of the prior, and the power-law family is improper on `(0, ∞)` anyway.

mod curve;
mod median;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curve::prediction_curve;
pub use median::{posterior_median, posterior_median_analytic, posterior_median_numeric};

/// Errors raised by prior evaluation and posterior-median computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriorError {
    #[error("argument must be a finite positive number, got {0}")]
    Domain(f64),
    #[error("invalid prior parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid quadrature configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} prior has no closed-form prediction function; use the numeric path")]
    UnsupportedFamily(&'static str),
    #[error("posterior has zero mass above t = {t}")]
    DegeneratePosterior { t: f64 },
    #[error("no t values supplied")]
    EmptyInput,
    #[error("at t = {t}: {source}")]
    AtT {
        t: f64,
        #[source]
        source: Box<PriorError>,
    },
}

pub type Result<T, E = PriorError> = std::result::Result<T, E>;

/// The three parametric families a predictor's responses are fitted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "power-law")]
    PowerLaw,
    #[serde(rename = "erlang")]
    Erlang,
    #[serde(rename = "gaussian")]
    Gaussian,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::PowerLaw, Family::Erlang, Family::Gaussian];

    pub fn name(self) -> &'static str {
        match self {
            Family::PowerLaw => "power-law",
            Family::Erlang => "erlang",
            Family::Gaussian => "gaussian",
        }
    }

    /// Number of free parameters in the family.
    pub fn parameter_count(self) -> usize {
        match self {
            Family::PowerLaw | Family::Erlang => 1,
            Family::Gaussian => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "power-law" | "powerlaw" | "power_law" => Ok(Family::PowerLaw),
            "erlang" => Ok(Family::Erlang),
            "gaussian" | "normal" => Ok(Family::Gaussian),
            other => Err(format!("unknown prior family `{other}`")),
        }
    }
}

/// A density tabulated on a strictly increasing positive grid and linearly
/// interpolated between knots. Zero outside the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    support: Vec<f64>,
    density: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(support: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        let tab = TabulatedDensity { support, density };
        tab.validate()?;
        Ok(tab)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(PriorError::InvalidParameter(format!("tabulated: {msg}")));
        if self.support.len() != self.density.len() {
            return invalid("support and density lengths differ");
        }
        if self.support.len() < 2 {
            return invalid("need at least two knots");
        }
        if self.support.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return invalid("support values must be finite and > 0");
        }
        if self.support.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("support must be strictly increasing");
        }
        if self.density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return invalid("density values must be finite and >= 0");
        }
        let mass: f64 = self
            .support
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return invalid("density must integrate to a positive finite mass");
        }
        Ok(())
    }

    fn evaluate(&self, x: f64) -> f64 {
        let s = &self.support;
        if x < s[0] || x > s[s.len() - 1] {
            return 0.0;
        }
        let k = s.partition_point(|&v| v <= x);
        if k == s.len() {
            return self.density[s.len() - 1];
        }
        let (x0, x1) = (s[k - 1], s[k]);
        let (d0, d1) = (self.density[k - 1], self.density[k]);
        d0 + (d1 - d0) * (x - x0) / (x1 - x0)
    }
}

/// A prior over `t_total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// `p(x) ∝ x^(-gamma)`
    PowerLaw {
        gamma: f64,
    },
    /// `p(x) ∝ x · exp(-x / beta)`
    Erlang {
        beta: f64,
    },
    /// `p(x) ∝ exp(-(x - mu)² / 2σ²)`, restricted to the positive axis.
    Gaussian {
        mu: f64,
        sigma: f64,
    },
    Tabulated(TabulatedDensity),
}

impl PriorSpec {
    pub fn power_law(gamma: f64) -> Result<Self> {
        let p = PriorSpec::PowerLaw { gamma };
        p.validate()?;
        Ok(p)
    }

    pub fn erlang(beta: f64) -> Result<Self> {
        let p = PriorSpec::Erlang { beta };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        let p = PriorSpec::Gaussian { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn tabulated(support: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        Ok(PriorSpec::Tabulated(TabulatedDensity::new(
            support, density,
        )?))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PriorError::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        match self {
            PriorSpec::PowerLaw { gamma } => positive("gamma", *gamma),
            PriorSpec::Erlang { beta } => positive("beta", *beta),
            PriorSpec::Gaussian { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(PriorError::InvalidParameter(format!(
                        "mu must be finite, got {mu}"
                    )));
                }
                positive("sigma", *sigma)
            }
            PriorSpec::Tabulated(tab) => tab.validate(),
        }
    }

    /// The parametric family, or `None` for a tabulated prior.
    pub fn family(&self) -> Option<Family> {
        match self {
            PriorSpec::PowerLaw { .. } => Some(Family::PowerLaw),
            PriorSpec::Erlang { .. } => Some(Family::Erlang),
            PriorSpec::Gaussian { .. } => Some(Family::Gaussian),
            PriorSpec::Tabulated(_) => None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        self.family().map_or("tabulated", Family::name)
    }

    /// Natural log of the unnormalized density; `-inf` where it vanishes.
    pub(crate) fn ln_density(&self, x: f64) -> f64 {
        match self {
            PriorSpec::PowerLaw { gamma } => -gamma * x.ln(),
            PriorSpec::Erlang { beta } => x.ln() - x / beta,
            PriorSpec::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z
            }
            PriorSpec::Tabulated(tab) => tab.evaluate(x).ln(),
        }
    }
}

/// Unnormalized prior density at `x > 0`.
///
/// The Gaussian carries the `1/(σ√2π)` factor so that it matches the usual
/// pdf; the other families are returned without any constant.
pub fn prior_density(prior: &PriorSpec, x: f64) -> Result<f64> {
    check_positive(x)?;
    prior.validate()?;
    Ok(match prior {
        PriorSpec::PowerLaw { gamma } => x.powf(-gamma),
        PriorSpec::Erlang { beta } => x * (-x / beta).exp(),
        PriorSpec::Gaussian { mu, sigma } => {
            let z = (x - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
        PriorSpec::Tabulated(tab) => tab.evaluate(x),
    })
}

/// One observation of the prediction task: the partial value `t` and the
/// predicted total `t_star`, both in scenario units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub t: f64,
    pub t_star: f64,
}

impl PredictionPair {
    pub fn new(t: f64, t_star: f64) -> Result<Self> {
        check_positive(t)?;
        if !t_star.is_finite() {
            return Err(PriorError::Domain(t_star));
        }
        Ok(PredictionPair { t, t_star })
    }
}

/// Grid settings for the trapezoid quadrature behind the numeric medians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub grid_points: usize,
    /// Posterior tail mass allowed beyond the upper truncation point.
    pub tail_mass_epsilon: f64,
}

impl QuadratureConfig {
    pub const MIN_GRID_POINTS: usize = 1025;

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < Self::MIN_GRID_POINTS {
            return Err(PriorError::InvalidConfig(format!(
                "grid_points must be >= {}, got {}",
                Self::MIN_GRID_POINTS,
                self.grid_points
            )));
        }
        if !(self.tail_mass_epsilon > 0.0 && self.tail_mass_epsilon < 1e-3) {
            return Err(PriorError::InvalidConfig(format!(
                "tail_mass_epsilon must lie in (0, 1e-3), got {}",
                self.tail_mass_epsilon
            )));
        }
        Ok(())
    }
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            grid_points: 32769,
            tail_mass_epsilon: 1e-9,
        }
    }
}

pub(crate) fn check_positive(x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(PriorError::Domain(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    macro_rules! assert_close {
        ($a:expr, $b:expr, $tol:expr) => {{
            let (a, b): (f64, f64) = ($a, $b);
            assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
        }};
    }

    #[test]
    fn power_law_density_is_reciprocal_at_gamma_one() {
        let p = PriorSpec::power_law(1.0).unwrap();
        assert_eq!(prior_density(&p, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn erlang_density_at_one() {
        let p = PriorSpec::erlang(1.0).unwrap();
        assert_close!(prior_density(&p, 1.0).unwrap(), (-1.0f64).exp(), 1e-15);
        assert_close!(prior_density(&p, 1.0).unwrap(), 0.3679, 5e-5);
    }

    #[test]
    fn gaussian_density_matches_standard_normal() {
        let p = PriorSpec::gaussian(0.0, 1.0).unwrap();
        assert_eq!(prior_density(&p, 0.0), Err(PriorError::Domain(0.0)));
        let expected = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert_close!(prior_density(&p, 1.0).unwrap(), expected, 1e-15);
        assert_close!(prior_density(&p, 1.0).unwrap(), 0.2420, 5e-5);
    }

    #[test]
    fn density_rejects_bad_arguments() {
        let p = PriorSpec::erlang(2.0).unwrap();
        for x in [-1.0, 0.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(prior_density(&p, x), Err(PriorError::Domain(_))));
        }
    }

    #[test]
    fn parameters_must_be_positive() {
        assert!(PriorSpec::power_law(0.0).is_err());
        assert!(PriorSpec::erlang(-1.0).is_err());
        assert!(PriorSpec::gaussian(5.0, 0.0).is_err());
        assert!(PriorSpec::gaussian(f64::NAN, 1.0).is_err());
        assert!(PriorSpec::gaussian(-5.0, 1.0).is_ok());
    }

    #[test]
    fn tabulated_interpolates_linearly_and_vanishes_outside() {
        let p = PriorSpec::tabulated(vec![1.0, 2.0, 4.0], vec![0.0, 2.0, 1.0]).unwrap();
        assert_eq!(prior_density(&p, 1.5).unwrap(), 1.0);
        assert_eq!(prior_density(&p, 3.0).unwrap(), 1.5);
        assert_eq!(prior_density(&p, 4.0).unwrap(), 1.0);
        assert_eq!(prior_density(&p, 0.5).unwrap(), 0.0);
        assert_eq!(prior_density(&p, 4.5).unwrap(), 0.0);
    }

    #[test]
    fn tabulated_invariants() {
        assert!(PriorSpec::tabulated(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(PriorSpec::tabulated(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(PriorSpec::tabulated(vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
        assert!(PriorSpec::tabulated(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(PriorSpec::tabulated(vec![1.0, 2.0], vec![-1.0, 3.0]).is_err());
    }

    #[test]
    fn quadrature_config_bounds() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let small = QuadratureConfig {
            grid_points: 1024,
            ..Default::default()
        };
        assert!(small.validate().is_err());
        let eps = QuadratureConfig {
            tail_mass_epsilon: 1e-3,
            ..Default::default()
        };
        assert!(eps.validate().is_err());
    }

    #[test]
    fn prediction_pair_validation() {
        assert!(PredictionPair::new(0.0, 1.0).is_err());
        assert!(PredictionPair::new(1.0, f64::NAN).is_err());
        // elicited predictors may shrink; only finiteness is required of t*
        assert!(PredictionPair::new(10.0, 5.0).is_ok());
    }

    #[test]
    fn prior_spec_json_shape() {
        let p = PriorSpec::gaussian(78.9, 9.46).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"family":"gaussian","mu":78.9,"sigma":9.46}"#);
        let back: PriorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
