//! Capacity planning for the number of parallel detection models.
//!
//! With an incoming rate `λ` and a per-model rate `μ`, `n = ⌈λ/μ⌉` models
//! give an aggregate rate `σ_P = nμ ≥ λ`. Relaxing to a human-comfort rate
//! (10 FPS by default) gives the admissible range `[⌈comfort/μ⌉, ⌈λ/μ⌉]`.
//!
//! Rates are usually quoted to one decimal (2.3, 12.5), so ceilings are
//! taken on exact decimal fractions: `30/2.5 − 1` is exactly 11, not
//! `11.000000000000002`.

use crate::error::{Error, Result};

/// Default human-comfort frame rate used for the lower end of the range.
pub const DEFAULT_COMFORT_FPS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanResult {
    /// `⌈λ/μ⌉`, at least 1.
    pub n_exact: u64,
    pub n_lo: u64,
    pub n_hi: u64,
    /// Predicted parallel rate `n_exact · μ`.
    pub sigma_p: f64,
    pub mu_fps: f64,
}

impl PlanResult {
    /// Nominal `σ_P = nμ` for every `n` in the admissible range.
    pub fn sigma_by_n(&self) -> Vec<(u64, f64)> {
        (self.n_lo..=self.n_hi)
            .map(|n| (n, n as f64 * self.mu_fps))
            .collect()
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be a positive number, got {v}"
        )))
    }
}

/// `x` as `num / 10^k` when `x` is a decimal with at most nine places.
fn as_decimal(x: f64) -> Option<(i128, i128)> {
    let mut den: i128 = 1;
    for _ in 0..=9 {
        let scaled = x * den as f64;
        if scaled.abs() > 1e30 {
            return None;
        }
        let num = scaled.round();
        if (num / den as f64 - x).abs() <= 1e-12 * x.abs().max(1.0) {
            return Some((num as i128, den));
        }
        den *= 10;
    }
    None
}

/// `⌈a / b⌉` for positive `a`, `b`, exact when both are short decimals.
fn ceil_ratio(a: f64, b: f64) -> u64 {
    match (as_decimal(a), as_decimal(b)) {
        (Some((an, ad)), Some((bn, bd))) if an > 0 && bn > 0 => {
            let p = an * bd;
            let q = ad * bn;
            ((p + q - 1) / q) as u64
        }
        _ => (a / b).ceil() as u64,
    }
}

/// Models needed so that `nμ ≥ λ`.
pub fn required_models(lambda_fps: f64, mu_fps: f64) -> Result<u64> {
    check_rate("lambda_fps", lambda_fps)?;
    check_rate("mu_fps", mu_fps)?;
    Ok(ceil_ratio(lambda_fps, mu_fps).max(1))
}

/// Closed range `[⌈comfort/μ⌉, ⌈λ/μ⌉]`; collapses to the upper bound when
/// `comfort > λ`.
pub fn model_range(lambda_fps: f64, mu_fps: f64, comfort_fps: f64) -> Result<(u64, u64)> {
    check_rate("comfort_fps", comfort_fps)?;
    let n_hi = required_models(lambda_fps, mu_fps)?;
    if comfort_fps > lambda_fps {
        return Ok((n_hi, n_hi));
    }
    let n_lo = ceil_ratio(comfort_fps, mu_fps).clamp(1, n_hi);
    Ok((n_lo, n_hi))
}

/// Frames dropped on average per processed frame: `max(0, ⌈λ/σ − 1⌉)`.
pub fn expected_drops_per_processed(lambda_fps: f64, sigma_fps: f64) -> Result<u64> {
    check_rate("lambda_fps", lambda_fps)?;
    check_rate("sigma_fps", sigma_fps)?;
    Ok(ceil_ratio(lambda_fps, sigma_fps).saturating_sub(1))
}

/// `σ_P = Σ μ_i`.
pub fn aggregate_rate(mu_list: &[f64]) -> Result<f64> {
    if mu_list.is_empty() {
        return Err(Error::Config(
            "aggregate rate of an empty worker list".into(),
        ));
    }
    for &mu in mu_list {
        check_rate("mu_fps", mu)?;
    }
    Ok(mu_list.iter().sum())
}

pub fn plan(lambda_fps: f64, mu_fps: f64, comfort_fps: f64) -> Result<PlanResult> {
    let n_exact = required_models(lambda_fps, mu_fps)?;
    let (n_lo, n_hi) = model_range(lambda_fps, mu_fps, comfort_fps)?;
    Ok(PlanResult {
        n_exact,
        n_lo,
        n_hi,
        sigma_p: n_exact as f64 * mu_fps,
        mu_fps,
    })
}
