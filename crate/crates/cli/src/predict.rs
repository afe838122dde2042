use prior_lens_core::posterior_median;

use crate::args::PredictArgs;
use crate::error::{CliError, Result};

pub fn run(args: &PredictArgs) -> Result<()> {
    let prior = args.prior.prior()?;
    let cfg = args.quadrature.config()?;
    if !(args.t > 0.0 && args.t.is_finite()) {
        return Err(CliError::Usage(format!(
            "--t must be a finite positive number, got {}",
            args.t
        )));
    }
    println!(
        "{}",
        significant(posterior_median(&prior, args.t, &cfg)?, 6)
    );
    Ok(())
}

/// `x` rounded to `digits` significant digits, printed without trailing zeros.
pub fn significant(x: f64, digits: usize) -> String {
    if !x.is_finite() || x == 0.0 {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.*e}", digits.saturating_sub(1))
        .parse()
        .unwrap_or(x);
    if (1e-4..1e15).contains(&rounded.abs()) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}
