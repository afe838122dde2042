//! Fixtures shared by the benchmarks.

use prior_lens_core::{prediction_curve, PredictionPair, PriorSpec, QuadratureConfig};

/// Noiseless pairs for a Gaussian prior over the integer grid `lo..=hi`.
pub fn gaussian_pairs(mu: f64, sigma: f64, lo: i64, hi: i64) -> Vec<PredictionPair> {
    let ts: Vec<f64> = (lo..=hi).map(|t| t as f64).collect();
    let prior = PriorSpec::gaussian(mu, sigma).expect("valid prior");
    prediction_curve(&prior, &ts, &QuadratureConfig::default()).expect("curve")
}

/// Erlang pairs with a small deterministic wobble, so no family fits exactly.
pub fn wobbly_erlang_pairs(beta: f64, lo: i64, hi: i64) -> Vec<PredictionPair> {
    (lo..=hi)
        .map(|t| {
            let t = t as f64;
            PredictionPair {
                t,
                t_star: t + beta * std::f64::consts::LN_2 + 0.3 * (t * 0.7).sin(),
            }
        })
        .collect()
}
