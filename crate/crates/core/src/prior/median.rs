use std::cmp::Ordering;
use std::f64::consts::LN_2;

use super::{check_positive, PriorError, PriorSpec, QuadratureConfig, Result};

/// Width of the Gaussian window on either side of the mean, in σ.
const GAUSSIAN_HALF_WIDTH: f64 = 12.0;
/// Far-tail window for a Gaussian observed above its mean, in units of the
/// exponential decay length σ²/(t − μ). Leaves < e^-40 of the mass behind.
const GAUSSIAN_TAIL_DECAYS: f64 = 40.0;
/// Windows whose ends differ by at least this factor are integrated on a
/// log axis, where the `1/x` likelihood drops out of the integrand.
pub(super) const LOG_AXIS_RATIO: f64 = 8.0;

/// Closed-form posterior median for the power-law and Erlang families.
///
/// Power law: the posterior is `∝ x^-(γ+1)` on `[t, ∞)`, survival `(x/t)^-γ`,
/// so the median is `2^(1/γ) · t`. Erlang: the posterior is `∝ exp(-x/β)`
/// on `[t, ∞)`, so the median is `t + β ln 2`.
pub fn posterior_median_analytic(prior: &PriorSpec, t: f64) -> Result<f64> {
    check_positive(t)?;
    prior.validate()?;
    match prior {
        PriorSpec::PowerLaw { gamma } => Ok(2f64.powf(1.0 / gamma) * t),
        PriorSpec::Erlang { beta } => Ok(t + beta * LN_2),
        PriorSpec::Gaussian { .. } => Err(PriorError::UnsupportedFamily("gaussian")),
        PriorSpec::Tabulated(_) => Err(PriorError::UnsupportedFamily("tabulated")),
    }
}

/// Posterior median by trapezoid quadrature of `prior(x)/x` over a truncated
/// window `[lo, hi]`, with linear interpolation of the cumulative at half
/// the total mass.
///
/// The power-law posterior is always integrated on a log-spaced grid: its
/// truncation point `t·ε^(-1/γ)` lies many decades above `t` for small γ,
/// which a linear grid cannot resolve. Other families switch to a log grid
/// when `hi/lo >= 8`, since the `1/x` factor is too sharp near a small `t`
/// for uniform spacing.
pub fn posterior_median_numeric(prior: &PriorSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_positive(t)?;
    prior.validate()?;
    cfg.validate()?;
    let window = Window::for_prior(prior, t, cfg)?;
    window.median(prior, t, cfg.grid_points)
}

/// Analytic when the family allows it, numeric otherwise.
pub fn posterior_median(prior: &PriorSpec, t: f64, cfg: &QuadratureConfig) -> Result<f64> {
    match prior {
        PriorSpec::PowerLaw { .. } | PriorSpec::Erlang { .. } => {
            posterior_median_analytic(prior, t)
        }
        _ => posterior_median_numeric(prior, t, cfg),
    }
}

#[derive(Debug, Clone, Copy)]
struct Window {
    lo: f64,
    hi: f64,
    log_axis: bool,
}

impl Window {
    fn for_prior(prior: &PriorSpec, t: f64, cfg: &QuadratureConfig) -> Result<Self> {
        let eps = cfg.tail_mass_epsilon;
        let window = match prior {
            PriorSpec::PowerLaw { gamma } => Window {
                lo: t,
                hi: t * eps.powf(-1.0 / gamma),
                log_axis: true,
            },
            PriorSpec::Erlang { beta } => Window {
                lo: t,
                hi: t + beta * (1.0 / eps).ln(),
                log_axis: false,
            },
            PriorSpec::Gaussian { mu, sigma } => {
                let (lo, hi) = gaussian_window(*mu, *sigma, t);
                Window {
                    lo,
                    hi,
                    log_axis: hi >= LOG_AXIS_RATIO * lo,
                }
            }
            PriorSpec::Tabulated(tab) => {
                let s = tab.support();
                let (lo, hi) = (t.max(s[0]), s[s.len() - 1]);
                Window {
                    lo,
                    hi,
                    log_axis: hi >= LOG_AXIS_RATIO * lo,
                }
            }
        };
        if window.hi.partial_cmp(&window.lo) != Some(Ordering::Greater) || !window.hi.is_finite() {
            return Err(PriorError::DegeneratePosterior { t });
        }
        Ok(window)
    }

    fn median(&self, prior: &PriorSpec, t: f64, n: usize) -> Result<f64> {
        let (s0, s1) = if self.log_axis {
            (self.lo.ln(), self.hi.ln())
        } else {
            (self.lo, self.hi)
        };
        let h = (s1 - s0) / (n - 1) as f64;

        // log of the posterior density with respect to the grid variable
        let mut ln_w: Vec<f64> = (0..n)
            .map(|i| {
                let s = s0 + h * i as f64;
                if self.log_axis {
                    // dx = x du cancels the 1/x likelihood; the clamp keeps
                    // rounding in exp(ln hi) inside a tabulated support
                    prior.ln_density(s.exp().clamp(self.lo, self.hi))
                } else {
                    prior.ln_density(s) - s.ln()
                }
            })
            .collect();
        let peak = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(PriorError::DegeneratePosterior { t });
        }
        for v in &mut ln_w {
            *v = (*v - peak).exp();
        }
        let weights = ln_w;

        let cumulative = trapezoid_cumulative(&weights, h);
        let total = cumulative[n - 1];
        if !(total > 0.0 && total.is_finite()) {
            return Err(PriorError::DegeneratePosterior { t });
        }
        let s = quantile_on_grid(&cumulative, s0, h, 0.5 * total);
        let x = if self.log_axis { s.exp() } else { s };
        Ok(x.max(t))
    }
}

pub(super) fn gaussian_window(mu: f64, sigma: f64, t: f64) -> (f64, f64) {
    let lo = t.max(mu - GAUSSIAN_HALF_WIDTH * sigma);
    let hi = if t > mu {
        let decay = sigma * sigma / (t - mu);
        t + (GAUSSIAN_HALF_WIDTH * sigma).min(GAUSSIAN_TAIL_DECAYS * decay)
    } else {
        mu + GAUSSIAN_HALF_WIDTH * sigma
    };
    (lo, hi)
}

/// Running trapezoid integral; `c[0] = 0`.
pub(super) fn trapezoid_cumulative(weights: &[f64], h: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    c.push(0.0);
    for w in weights.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        c.push(acc);
    }
    c
}

/// Grid abscissa at which a nondecreasing cumulative reaches `target`,
/// linearly interpolated within the bracketing cell.
pub(super) fn quantile_on_grid(cumulative: &[f64], s0: f64, h: f64, target: f64) -> f64 {
    let k = cumulative.partition_point(|&c| c < target);
    if k == 0 {
        return s0;
    }
    if k >= cumulative.len() {
        return s0 + h * (cumulative.len() - 1) as f64;
    }
    let (c0, c1) = (cumulative[k - 1], cumulative[k]);
    let frac = if c1 > c0 {
        (target - c0) / (c1 - c0)
    } else {
        0.0
    };
    s0 + h * ((k - 1) as f64 + frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn power_law_gamma_one_doubles() {
        let p = PriorSpec::power_law(1.0).unwrap();
        assert_eq!(posterior_median_analytic(&p, 7.0).unwrap(), 14.0);
    }

    #[test]
    fn power_law_gamma_1_20_at_50() {
        let p = PriorSpec::power_law(1.20).unwrap();
        let m = posterior_median_analytic(&p, 50.0).unwrap();
        assert!((m - 89.090).abs() <= 1e-3, "{m}");
    }

    #[test]
    fn erlang_offset_at_30() {
        let p = PriorSpec::erlang(18.09).unwrap();
        let m = posterior_median_analytic(&p, 30.0).unwrap();
        assert!((m - 42.539).abs() <= 1e-3, "{m}");
    }

    #[test]
    fn analytic_rejects_numeric_only_families() {
        let g = PriorSpec::gaussian(10.0, 2.0).unwrap();
        assert_eq!(
            posterior_median_analytic(&g, 3.0),
            Err(PriorError::UnsupportedFamily("gaussian"))
        );
        let tab = PriorSpec::tabulated(vec![1.0, 5.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            posterior_median_analytic(&tab, 3.0),
            Err(PriorError::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn numeric_power_law_matches_closed_form() {
        let p = PriorSpec::power_law(1.15).unwrap();
        let a = posterior_median_analytic(&p, 20.0).unwrap();
        let n = posterior_median_numeric(&p, 20.0, &cfg()).unwrap();
        assert!(((n - a) / a).abs() <= 1e-3, "{n} vs {a}");
    }

    #[test]
    fn gaussian_median_below_mean_when_observed_early() {
        let p = PriorSpec::gaussian(100.0, 1.0).unwrap();
        let m = posterior_median_numeric(&p, 10.0, &cfg()).unwrap();
        assert!((99.9..=100.0).contains(&m), "{m}");
        // the 1/x weighting pulls the median down by about σ²/μ
        assert!((m - (100.0 - 0.01)).abs() < 2e-3, "{m}");
    }

    #[test]
    fn gaussian_far_tail_hugs_t() {
        let p = PriorSpec::gaussian(100.0, 1.0).unwrap();
        let m = posterior_median_numeric(&p, 200.0, &cfg()).unwrap();
        assert!(m > 200.0 && m < 200.02, "{m}");
        // exponential tail with decay σ²/(t-μ): median excess ≈ ln2/100
        assert!((m - 200.0 - LN_2 / 100.0).abs() < 2e-4, "{m}");
    }

    #[test]
    fn tabulated_below_support_is_degenerate() {
        let tab = PriorSpec::tabulated(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            posterior_median_numeric(&tab, 5.0, &cfg()),
            Err(PriorError::DegeneratePosterior { t: 5.0 })
        );
        // density zero on the whole window above t
        let tab = PriorSpec::tabulated(vec![1.0, 2.0, 3.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            posterior_median_numeric(&tab, 2.5, &cfg()),
            Err(PriorError::DegeneratePosterior { .. })
        ));
    }

    #[test]
    fn tabulated_flat_density_median() {
        // posterior ∝ 1/x on [t, b]: median is sqrt(t·b)
        let tab = PriorSpec::tabulated(vec![1.0, 100.0], vec![1.0, 1.0]).unwrap();
        let m = posterior_median_numeric(&tab, 4.0, &cfg()).unwrap();
        assert!((m - 20.0).abs() < 1e-4, "{m}");
    }

    #[test]
    fn numeric_rejects_bad_config() {
        let p = PriorSpec::erlang(1.0).unwrap();
        let bad = QuadratureConfig {
            grid_points: 10,
            ..cfg()
        };
        assert!(matches!(
            posterior_median_numeric(&p, 1.0, &bad),
            Err(PriorError::InvalidConfig(_))
        ));
    }

    #[test]
    fn quantile_on_grid_interpolates() {
        let c = [0.0, 1.0, 3.0, 4.0];
        assert_eq!(quantile_on_grid(&c, 10.0, 2.0, 2.0), 13.0);
        assert_eq!(quantile_on_grid(&c, 10.0, 2.0, 0.0), 10.0);
        assert_eq!(quantile_on_grid(&c, 10.0, 2.0, 4.0), 16.0);
    }
}
