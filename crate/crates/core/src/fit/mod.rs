//! Recovering a prior from observed `(t, t*)` pairs.
//!
//! Each family's prediction function is fitted by minimizing the unweighted
//! mean squared difference between observed and predicted totals. The
//! power-law and Erlang families have closed-form minimizers; the Gaussian
//! is fitted by multi-start downhill simplex over `(μ, ln σ)`.

mod simplex;

use std::cmp::Ordering;
use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prior::{
    prediction_curve, Family, PredictionPair, PriorError, PriorSpec, QuadratureConfig,
};

pub use simplex::{nelder_mead, SimplexMinimum};

/// Smallest slope accepted for the power-law fit; `2^(1/γ)` must exceed 1.
const MIN_POWER_LAW_SLOPE: f64 = 1.0 + 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {family} fit needs at least {needed} pairs, got {got}")]
    InsufficientData {
        family: &'static str,
        needed: usize,
        got: usize,
    },
    #[error(
        "gaussian fit did not converge within the evaluation budget; best point mu={mu}, sigma={sigma}, mse={mse}"
    )]
    Convergence { mu: f64, sigma: f64, mse: f64 },
    #[error("invalid fit options: {0}")]
    InvalidOptions(String),
    #[error("no family could be fitted")]
    NoFamilyFitted,
    #[error(transparent)]
    Prior(#[from] PriorError),
}

pub type Result<T, E = FitError> = std::result::Result<T, E>;

/// Fitted parameters, serialized without a tag (`{"gamma": ..}`, `{"beta": ..}`,
/// `{"mu": .., "sigma": ..}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitParams {
    Gaussian { mu: f64, sigma: f64 },
    PowerLaw { gamma: f64 },
    Erlang { beta: f64 },
}

impl FitParams {
    pub fn family(&self) -> Family {
        match self {
            FitParams::PowerLaw { .. } => Family::PowerLaw,
            FitParams::Erlang { .. } => Family::Erlang,
            FitParams::Gaussian { .. } => Family::Gaussian,
        }
    }

    pub fn prior(&self) -> PriorSpec {
        match *self {
            FitParams::PowerLaw { gamma } => PriorSpec::PowerLaw { gamma },
            FitParams::Erlang { beta } => PriorSpec::Erlang { beta },
            FitParams::Gaussian { mu, sigma } => PriorSpec::Gaussian { mu, sigma },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub params: FitParams,
    pub mse: f64,
    pub n: usize,
    /// A constraint clamped the optimum (e.g. predictions shrinking below `t`).
    pub boundary_flag: bool,
}

impl FitResult {
    pub fn prior(&self) -> PriorSpec {
        self.params.prior()
    }
}

/// How repeated responses at the same `t` are combined before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
    None,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "median" => Ok(Aggregation::Median),
            "mean" => Ok(Aggregation::Mean),
            "none" => Ok(Aggregation::None),
            other => Err(format!(
                "unknown aggregation `{other}` (expected median, mean or none)"
            )),
        }
    }
}

/// Multi-start grid for the Gaussian fit: `μ` starts at these quantiles of
/// the observed `t*`, `σ` at these multiples of their standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitGrid {
    pub mu_quantiles: Vec<f64>,
    pub sigma_scales: Vec<f64>,
}

impl Default for InitGrid {
    fn default() -> Self {
        InitGrid {
            mu_quantiles: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            sigma_scales: vec![0.1, 0.3, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub gaussian_init_grid: InitGrid,
    /// Lowest admissible Gaussian mean. Below zero the fit can slide towards
    /// `μ → -∞`, where the prior's visible tail turns exponential and the
    /// Gaussian reproduces the Erlang predictions with a spare parameter.
    pub gaussian_mu_floor: f64,
    pub simplex_tolerance: f64,
    /// Evaluation budget per simplex start.
    pub max_evaluations: usize,
    pub replicate_aggregation: Aggregation,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gaussian_init_grid: InitGrid::default(),
            gaussian_mu_floor: 0.0,
            simplex_tolerance: 1e-6,
            max_evaluations: 20_000,
            replicate_aggregation: Aggregation::Median,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.simplex_tolerance > 0.0 && self.simplex_tolerance.is_finite()) {
            return Err(FitError::InvalidOptions(
                "simplex_tolerance must be > 0".into(),
            ));
        }
        if self.gaussian_mu_floor.is_nan() || self.gaussian_mu_floor == f64::INFINITY {
            return Err(FitError::InvalidOptions(
                "gaussian_mu_floor must be finite or -inf".into(),
            ));
        }
        if self.max_evaluations < 100 {
            return Err(FitError::InvalidOptions(
                "max_evaluations must be >= 100".into(),
            ));
        }
        let grid = &self.gaussian_init_grid;
        if grid.mu_quantiles.is_empty() || grid.sigma_scales.is_empty() {
            return Err(FitError::InvalidOptions(
                "gaussian init grid is empty".into(),
            ));
        }
        if grid.mu_quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(FitError::InvalidOptions(
                "mu quantiles must lie in [0, 1]".into(),
            ));
        }
        if grid
            .sigma_scales
            .iter()
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(FitError::InvalidOptions("sigma scales must be > 0".into()));
        }
        Ok(())
    }
}

/// Pairs ready for fitting plus the number of responses dropped on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPairs {
    pub pairs: Vec<PredictionPair>,
    pub rejected: usize,
}

/// Drops responses outside every model class (`t* <= 0` or non-finite),
/// collapses replicates sharing a `t`, and sorts by `t`.
pub fn prepare_pairs(pairs: &[PredictionPair], aggregation: Aggregation) -> PreparedPairs {
    let mut kept: Vec<PredictionPair> = pairs
        .iter()
        .copied()
        .filter(|p| p.t_star.is_finite() && p.t_star > 0.0 && p.t.is_finite() && p.t > 0.0)
        .collect();
    let rejected = pairs.len() - kept.len();
    kept.sort_by(|a, b| a.t.total_cmp(&b.t));
    let pairs = match aggregation {
        Aggregation::None => kept,
        Aggregation::Median | Aggregation::Mean => kept
            .chunk_by(|a, b| a.t == b.t)
            .map(|group| {
                let mut values: Vec<f64> = group.iter().map(|p| p.t_star).collect();
                let t_star = if aggregation == Aggregation::Median {
                    median(&mut values)
                } else {
                    values.iter().sum::<f64>() / values.len() as f64
                };
                PredictionPair {
                    t: group[0].t,
                    t_star,
                }
            })
            .collect(),
    };
    PreparedPairs { pairs, rejected }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Mean squared difference between observed `t*` and the prior's predictions.
pub fn mse(pairs: &[PredictionPair], prior: &PriorSpec, cfg: &QuadratureConfig) -> Result<f64> {
    let ts: Vec<f64> = pairs.iter().map(|p| p.t).collect();
    let predicted = prediction_curve(prior, &ts, cfg)?;
    let sum: f64 = pairs
        .iter()
        .zip(&predicted)
        .map(|(obs, fit)| (obs.t_star - fit.t_star).powi(2))
        .sum();
    Ok(sum / pairs.len() as f64)
}

fn require(family: Family, pairs: &[PredictionPair], needed: usize) -> Result<()> {
    if pairs.len() < needed {
        return Err(FitError::InsufficientData {
            family: family.name(),
            needed,
            got: pairs.len(),
        });
    }
    Ok(())
}

/// Least-squares fit of `t* = c·t` through the origin, mapped to `γ = ln 2 / ln c`.
pub fn fit_power_law(pairs: &[PredictionPair]) -> Result<FitResult> {
    require(Family::PowerLaw, pairs, 2)?;
    let (sxy, sxx) = pairs.iter().fold((0.0, 0.0), |(sxy, sxx), p| {
        (sxy + p.t * p.t_star, sxx + p.t * p.t)
    });
    let mut slope = sxy / sxx;
    let boundary_flag = slope.is_nan() || slope <= MIN_POWER_LAW_SLOPE;
    if boundary_flag {
        slope = MIN_POWER_LAW_SLOPE;
    }
    let params = FitParams::PowerLaw {
        gamma: LN_2 / slope.ln(),
    };
    closed_form_result(pairs, params, boundary_flag)
}

/// Least-squares fit of `t* = t + d`, mapped to `β = d / ln 2`.
pub fn fit_erlang(pairs: &[PredictionPair]) -> Result<FitResult> {
    require(Family::Erlang, pairs, 2)?;
    let n = pairs.len() as f64;
    let offset = pairs.iter().map(|p| p.t_star - p.t).sum::<f64>() / n;
    let boundary_flag = offset.is_nan() || offset <= 0.0;
    let beta = if boundary_flag {
        1e-9 * pairs.iter().map(|p| p.t).sum::<f64>() / n
    } else {
        offset / LN_2
    };
    closed_form_result(pairs, FitParams::Erlang { beta }, boundary_flag)
}

fn closed_form_result(
    pairs: &[PredictionPair],
    params: FitParams,
    boundary_flag: bool,
) -> Result<FitResult> {
    let mse = mse(pairs, &params.prior(), &QuadratureConfig::default())?;
    Ok(FitResult {
        family: params.family(),
        params,
        mse,
        n: pairs.len(),
        boundary_flag,
    })
}

/// Gaussian fit by multi-start downhill simplex in `(μ, ln σ)`.
///
/// Starts are taken from the product of [`InitGrid`] quantiles and scales and
/// may run concurrently; the winner is the lowest terminal mse, ties broken
/// by start index, so the result is deterministic.
pub fn fit_gaussian(
    pairs: &[PredictionPair],
    opts: &FitOptions,
    cfg: &QuadratureConfig,
) -> Result<FitResult> {
    require(Family::Gaussian, pairs, 3)?;
    opts.validate()?;
    cfg.validate()?;

    let mut observed: Vec<f64> = pairs.iter().map(|p| p.t_star).collect();
    observed.sort_by(f64::total_cmp);
    let spread = sample_sd(&observed);
    let spread = if spread > 0.0 {
        spread
    } else {
        1e-3 * observed[observed.len() / 2].abs().max(1.0)
    };

    let floor = opts.gaussian_mu_floor;
    let starts: Vec<(f64, f64)> = opts
        .gaussian_init_grid
        .mu_quantiles
        .iter()
        .flat_map(|&q| {
            let mu = quantile_sorted(&observed, q).max(floor);
            opts.gaussian_init_grid
                .sigma_scales
                .iter()
                .map(move |&s| (mu, s * spread))
        })
        .collect();

    let objective = |x: &[f64]| -> f64 {
        let sigma = x[1].exp();
        if !(sigma > 0.0 && sigma.is_finite() && x[0].is_finite() && x[0] >= floor) {
            return f64::INFINITY;
        }
        mse(pairs, &PriorSpec::Gaussian { mu: x[0], sigma }, cfg).unwrap_or(f64::INFINITY)
    };

    let runs: Vec<SimplexMinimum> = starts
        .par_iter()
        .map(|&(mu, sigma)| {
            nelder_mead(
                objective,
                &[mu, sigma.ln()],
                &[0.25 * spread, 0.5],
                opts.simplex_tolerance,
                opts.max_evaluations,
            )
        })
        .collect();

    let best = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(i.cmp(j)))
        .map(|(_, run)| run)
        .expect("at least one start");
    let (mu, sigma) = (best.point[0], best.point[1].exp());
    if !runs.iter().any(|r| r.converged) || !best.value.is_finite() {
        return Err(FitError::Convergence {
            mu,
            sigma,
            mse: best.value,
        });
    }
    Ok(FitResult {
        family: Family::Gaussian,
        params: FitParams::Gaussian { mu, sigma },
        mse: best.value,
        n: pairs.len(),
        boundary_flag: mu - floor <= 1e-6 * spread,
    })
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    match sorted.get(k + 1) {
        Some(next) => sorted[k] + frac * (next - sorted[k]),
        None => sorted[k],
    }
}

/// A family left out of model selection because its fit failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedFamily {
    pub family: Family,
    pub error: FitError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    /// Successful fits, best first.
    pub ranked: Vec<FitResult>,
    pub excluded: Vec<ExcludedFamily>,
    /// Responses dropped before fitting (`t* <= 0` or non-finite).
    pub rejected: usize,
    pub pairs: Vec<PredictionPair>,
}

impl ModelSelection {
    pub fn winner(&self) -> &FitResult {
        &self.ranked[0]
    }
}

/// Fits all three families and ranks them by mse.
///
/// Fits within `1e-12·(1 + mse)` of each other are treated as tied and
/// ordered by parameter count, then power-law < erlang < gaussian.
pub fn select_model(
    pairs: &[PredictionPair],
    opts: &FitOptions,
    cfg: &QuadratureConfig,
) -> Result<ModelSelection> {
    opts.validate()?;
    let prepared = prepare_pairs(pairs, opts.replicate_aggregation);
    let data = &prepared.pairs;
    require(Family::Gaussian, data, 3)?;

    let mut ranked = Vec::with_capacity(3);
    let mut excluded = Vec::new();
    for family in Family::ALL {
        let fitted = match family {
            Family::PowerLaw => fit_power_law(data),
            Family::Erlang => fit_erlang(data),
            Family::Gaussian => fit_gaussian(data, opts, cfg),
        };
        match fitted {
            Ok(fit) => ranked.push(fit),
            Err(error) => {
                log::warn!("{family} fit excluded from selection: {error}");
                excluded.push(ExcludedFamily { family, error });
            }
        }
    }
    if ranked.is_empty() {
        return Err(FitError::NoFamilyFitted);
    }
    rank(&mut ranked);
    Ok(ModelSelection {
        ranked,
        excluded,
        rejected: prepared.rejected,
        pairs: prepared.pairs,
    })
}

fn compare_fits(a: &FitResult, b: &FitResult) -> Ordering {
    let tol = 1e-12 * (1.0 + a.mse.max(b.mse));
    if (a.mse - b.mse).abs() <= tol {
        a.family
            .parameter_count()
            .cmp(&b.family.parameter_count())
            .then(a.family.cmp(&b.family))
    } else {
        a.mse.total_cmp(&b.mse)
    }
}

/// Insertion sort: the tie tolerance makes the comparison non-transitive,
/// which `sort_by` does not allow.
fn rank(fits: &mut [FitResult]) {
    for i in 1..fits.len() {
        let mut j = i;
        while j > 0 && compare_fits(&fits[j - 1], &fits[j]) == Ordering::Greater {
            fits.swap(j - 1, j);
            j -= 1;
        }
    }
}
