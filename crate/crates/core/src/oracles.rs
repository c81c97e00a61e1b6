//! Closed-form weak-drive correlation formulas.
//!
//! These are pure arithmetic with no tolerance knobs; they serve as
//! independent references for the numerical solvers and as fast evaluators
//! of the quantum-limit phase diagram.

use crate::error::{Error, Result};

/// Leading-order (in the drive) `g₂(a₁, a₂)` of a single cavity.
pub fn g2_single_cavity_quantum(
    chi: f64,
    kappa1: f64,
    kappa2: f64,
    delta1: f64,
    delta2: f64,
) -> Result<f64> {
    let denominator = (delta1 * delta1 + kappa1 * kappa1)
        * ((delta1 + delta2).powi(2) + (kappa1 + kappa2).powi(2));
    if denominator == 0.0 {
        return Err(Error::Singular(
            "Δ₁² + κ₁² or (Δ₁+Δ₂)² + (κ₁+κ₂)² vanishes".into(),
        ));
    }
    let chi2 = chi * chi;
    let numerator =
        0.25 * chi2 * chi2 + chi2 * (-delta1 * (delta1 + delta2) + kappa1 * (kappa1 + kappa2));
    let outer = 1.0 + numerator / denominator;
    if outer == 0.0 {
        return Err(Error::Singular("outer denominator vanishes".into()));
    }
    Ok(1.0 / outer)
}

/// Bracket multiplying `V₁` in the first-order cross correlation.
pub fn cross_correlation_slope(delta1a: f64, delta1b: f64, kappa1: f64) -> f64 {
    let k2 = kappa1 * kappa1;
    let sum = delta1a + delta1b;
    2.0 * delta1a / (delta1a * delta1a + k2) + 2.0 * delta1b / (delta1b * delta1b + k2)
        - 4.0 * sum / (sum * sum + 4.0 * k2)
}

/// Quantum-limit `g₂(a₁, b₁)` to first order in `V₁`.
pub fn g2_cross_quantum_limit(delta1a: f64, delta1b: f64, kappa1: f64, v1: f64) -> f64 {
    1.0 + cross_correlation_slope(delta1a, delta1b, kappa1) * v1
}

/// The same, parameterized by mean detuning and mismatch `δ = Δ₁ᵃ − Δ₁ᵇ`.
pub fn g2_cross_from_mean(delta1_mean: f64, delta: f64, kappa1: f64, v1: f64) -> f64 {
    g2_cross_quantum_limit(
        delta1_mean + 0.5 * delta,
        delta1_mean - 0.5 * delta,
        kappa1,
        v1,
    )
}

/// Limit of the cross correlation for `δ → ∞` at fixed mean detuning.
pub fn g2_cross_large_mismatch(delta1_mean: f64, kappa1: f64, v1: f64) -> f64 {
    1.0 - 2.0 * delta1_mean * v1 / (kappa1 * kappa1 + delta1_mean * delta1_mean)
}

/// Mean detuning above which a small mismatch strengthens the cross
/// correlation: `√3 κ₁`.
pub fn nonmonotonicity_threshold(kappa1: f64) -> f64 {
    3f64.sqrt() * kappa1
}

/// Largest `|g₂(δ) − 1| / |g₂(0) − 1|` over the branch of `δ > 0` on which
/// the correlation keeps the sign it has at `δ = 0`.
///
/// The branch ends at the first sign change of `g₂ − 1`, or at
/// `max_mismatch` if there is none. Values above one mean some mismatch
/// strengthens the correlation.
pub fn max_mismatch_enhancement(delta1_mean: f64, kappa1: f64, max_mismatch: f64) -> f64 {
    let slope =
        |d: f64| cross_correlation_slope(delta1_mean + 0.5 * d, delta1_mean - 0.5 * d, kappa1);
    let at_zero = slope(0.0);
    if at_zero == 0.0 {
        return 0.0;
    }
    let step = 1e-3 * kappa1;
    let mut best = 1.0f64;
    let mut d = step;
    while d <= max_mismatch {
        let s = slope(d);
        if s.signum() != at_zero.signum() {
            break;
        }
        best = best.max(s.abs() / at_zero.abs());
        d += step;
    }
    best
}

/// Whether some mismatch `δ > 0` makes the cross correlation stronger (same
/// sign, larger `|g₂ − 1|`) than for identical cavities.
pub fn mismatch_strengthens_correlation(delta1_mean: f64, kappa1: f64) -> bool {
    max_mismatch_enhancement(delta1_mean, kappa1, 100.0 * kappa1) > 1.0
}
