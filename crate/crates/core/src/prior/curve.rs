use std::sync::LazyLock;

use super::median::{gaussian_window, posterior_median_analytic, posterior_median_numeric};
use super::{check_positive, PredictionPair, PriorError, PriorSpec, QuadratureConfig, Result};

/// 8-point Gauss–Legendre rule on [-1, 1].
const GL_NODES: [f64; ORDER] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; ORDER] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];
const ORDER: usize = 8;
/// Upper bound on the panel width in `ln x`.
const MAX_PANEL_WIDTH: f64 = 0.25;
/// Panel width as a fraction of the posterior's local scale.
const PANEL_SCALE: f64 = 1.0;
/// Re-anchor the geometric node recurrence with a direct `exp` this often.
const ANCHOR_EVERY: usize = 64;
const MAX_NEWTON_STEPS: usize = 60;

/// Posterior-median prediction for every `t`, in input order.
///
/// Power-law and Erlang priors use the closed forms. Gaussian priors share
/// one tail integral across all `t` (the posterior integrand `prior(x)/x`
/// does not depend on `t`, only its lower limit does), computed by
/// Gauss–Legendre rather than the trapezoid rule of
/// [`posterior_median_numeric`]; a `t` the shared panels cannot resolve gets
/// panels of its own. Tabulated priors go through the trapezoid per point.
pub fn prediction_curve(
    prior: &PriorSpec,
    t_values: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<PredictionPair>> {
    if t_values.is_empty() {
        return Err(PriorError::EmptyInput);
    }
    prior.validate()?;
    cfg.validate()?;
    for &t in t_values {
        check_positive(t).map_err(|e| at(t, e))?;
    }
    let medians: Vec<f64> = match prior {
        PriorSpec::PowerLaw { .. } | PriorSpec::Erlang { .. } => t_values
            .iter()
            .map(|&t| posterior_median_analytic(prior, t).map_err(|e| at(t, e)))
            .collect::<Result<_>>()?,
        PriorSpec::Gaussian { mu, sigma } => gaussian_medians(*mu, *sigma, t_values, cfg)?,
        PriorSpec::Tabulated(_) => t_values
            .iter()
            .map(|&t| posterior_median_numeric(prior, t, cfg).map_err(|e| at(t, e)))
            .collect::<Result<_>>()?,
    };
    Ok(t_values
        .iter()
        .zip(medians)
        .map(|(&t, t_star)| PredictionPair { t, t_star })
        .collect())
}

fn at(t: f64, source: PriorError) -> PriorError {
    PriorError::AtT {
        t,
        source: Box::new(source),
    }
}

/// Gaussian posterior tail `G(x) = ∫_x^hi φ((y-μ)/σ)/y dy`, integrated in
/// `u = ln y`, where the integrand is just `φ(e^u)`.
///
/// The window is cut into equal panels no wider than half the posterior's
/// local scale (σ, or in the far tail the decay length `σ²/(t-μ)`). On each
/// panel the density is sampled at the 8 Gauss–Legendre nodes and expanded
/// in Legendre polynomials; panel masses are the Gauss–Legendre sums, and
/// partial masses come from integrating the expansion exactly. The median
/// for `t` solves `G(m) = G(t)/2` on that piecewise polynomial.
struct GaussianTail {
    mu: f64,
    sigma: f64,
    u0: f64,
    width: f64,
    /// `tail[k]` is the mass from panel boundary `k` to the top.
    tail: Vec<f64>,
    /// Density at each panel's Gauss–Legendre nodes.
    samples: Vec<[f64; ORDER]>,
}

/// Scale the posterior varies on near `t`.
fn local_scale(mu: f64, sigma: f64, t: f64) -> f64 {
    if t > mu {
        sigma.min(sigma * sigma / (t - mu))
    } else {
        sigma
    }
}

/// `P_0(x) ..= P_ORDER(x)`.
fn legendre(x: f64) -> [f64; ORDER + 1] {
    let mut p = [0.0; ORDER + 1];
    p[0] = 1.0;
    p[1] = x;
    for n in 1..ORDER {
        let n_f = n as f64;
        p[n + 1] = ((2.0 * n_f + 1.0) * x * p[n] - n_f * p[n - 1]) / (n_f + 1.0);
    }
    p
}

/// Maps node samples to Legendre coefficients: `c_n = (2n+1)/2 Σ_j w_j f_j P_n(x_j)`.
static PROJECTION: LazyLock<[[f64; ORDER]; ORDER]> = LazyLock::new(|| {
    let mut m = [[0.0; ORDER]; ORDER];
    for (j, (&x, &w)) in GL_NODES.iter().zip(&GL_WEIGHTS).enumerate() {
        let p = legendre(x);
        for (n, row) in m.iter_mut().enumerate() {
            row[j] = (n as f64 + 0.5) * w * p[n];
        }
    }
    m
});

impl GaussianTail {
    fn new(mu: f64, sigma: f64, t_values: &[f64], max_panels: usize) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut width = MAX_PANEL_WIDTH;
        for &t in t_values {
            let (a, b) = gaussian_window(mu, sigma, t);
            lo = lo.min(a);
            hi = hi.max(b);
            width = width.min(PANEL_SCALE * local_scale(mu, sigma, t) / b);
        }
        let (u0, u1) = (lo.ln(), hi.ln());
        let panels = ((u1 - u0) / width).ceil().clamp(1.0, max_panels as f64) as usize;
        let width = (u1 - u0) / panels as f64;

        // weights are scaled so the density peak on the window is 1
        let z_peak = (mu.clamp(lo, hi) - mu) / sigma;
        let z_peak_sq = z_peak * z_peak;
        let node_offsets = GL_NODES.map(|x| (0.5 * width * (1.0 + x)).exp());
        let step = width.exp();

        let mut samples = Vec::with_capacity(panels);
        let mut base = lo;
        for k in 0..panels {
            if k % ANCHOR_EVERY == 0 {
                base = (u0 + width * k as f64).exp();
            }
            samples.push(node_offsets.map(|e| {
                let z = (base * e - mu) / sigma;
                (-0.5 * (z * z - z_peak_sq)).exp()
            }));
            base *= step;
        }
        let mut tail = vec![0.0; panels + 1];
        for k in (0..panels).rev() {
            let sum: f64 = GL_WEIGHTS.iter().zip(&samples[k]).map(|(w, f)| w * f).sum();
            tail[k] = tail[k + 1] + 0.5 * width * sum;
        }
        GaussianTail {
            mu,
            sigma,
            u0,
            width,
            tail,
            samples,
        }
    }

    fn panels(&self) -> usize {
        self.samples.len()
    }

    fn coefficients(&self, k: usize) -> [f64; ORDER] {
        let samples = &self.samples[k];
        PROJECTION.map(|row| row.iter().zip(samples).map(|(m, f)| m * f).sum())
    }

    /// Panel holding `u` and the local coordinate in [-1, 1].
    fn locate(&self, u: f64) -> (usize, f64) {
        let s = ((u - self.u0) / self.width).max(0.0);
        let k = (s.floor() as usize).min(self.panels() - 1);
        (k, (2.0 * (s - k as f64) - 1.0).clamp(-1.0, 1.0))
    }

    /// Mass of panel `k` from local coordinate `x` to its top, and the
    /// density at `x`, both from the Legendre expansion.
    fn partial(c: &[f64; ORDER], width: f64, x: f64) -> (f64, f64) {
        let p = legendre(x);
        // ∫_x^1 P_0 = 1 - x; ∫_x^1 P_n = (P_{n-1}(x) - P_{n+1}(x)) / (2n+1)
        let mut mass = c[0] * (1.0 - x);
        let mut density = c[0];
        for n in 1..ORDER {
            mass += c[n] * (p[n - 1] - p[n + 1]) / (2 * n + 1) as f64;
            density += c[n] * p[n];
        }
        (0.5 * width * mass, density)
    }

    /// Whether the panels are fine enough for the posterior at `t`.
    fn resolves(&self, t: f64) -> bool {
        let (_, hi) = gaussian_window(self.mu, self.sigma, t);
        hi * self.width <= PANEL_SCALE * local_scale(self.mu, self.sigma, t) * (1.0 + 1e-9)
    }

    fn median(&self, t: f64) -> Option<f64> {
        let (ka, xa) = self.locate(t.ln().max(self.u0));
        let ca = self.coefficients(ka);
        let total = self.tail[ka + 1] + Self::partial(&ca, self.width, xa).0;
        if !total.is_normal() {
            return None;
        }
        let target = 0.5 * total;
        // first boundary whose remaining tail drops below the target
        let j = self.tail.partition_point(|&v| v >= target).max(ka + 1) - 1;
        let rest = self.tail[j + 1];
        let (mut lo, mut hi) = (if j == ka { xa } else { -1.0 }, 1.0);
        let c = if j == ka { ca } else { self.coefficients(j) };

        // excess(x) = G - target falls from >= 0 at lo to <= 0 at hi
        let excess = |x: f64| {
            let (mass, density) = Self::partial(&c, self.width, x);
            (rest + mass - target, 0.5 * self.width * density)
        };
        let (e_lo, _) = excess(lo);
        let e_hi = rest - target;
        let mut x = if e_lo > e_hi {
            lo + (hi - lo) * e_lo / (e_lo - e_hi)
        } else {
            lo
        };
        for _ in 0..MAX_NEWTON_STEPS {
            let (e, slope) = excess(x);
            if e.abs() <= 1e-15 * total {
                break;
            }
            if e > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = x + e / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let moved = (next - x).abs();
            x = next;
            if moved <= 1e-13 || hi - lo <= 1e-13 {
                break;
            }
        }
        let u = self.u0 + self.width * (j as f64 + 0.5 * (x + 1.0));
        Some(u.exp().max(t))
    }
}

fn gaussian_medians(
    mu: f64,
    sigma: f64,
    t_values: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    // no more density evaluations than the trapezoid reference would spend
    let max_panels = (cfg.grid_points / ORDER).max(1);
    let shared = GaussianTail::new(mu, sigma, t_values, max_panels);
    t_values
        .iter()
        .map(|&t| {
            let shared = if shared.resolves(t) {
                shared.median(t)
            } else {
                None
            };
            shared
                .or_else(|| GaussianTail::new(mu, sigma, &[t], max_panels).median(t))
                .ok_or_else(|| at(t, PriorError::DegeneratePosterior { t }))
        })
        .collect()
}
