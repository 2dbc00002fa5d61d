//! Confidence-aware sample weighting.
//!
//! Each sample loss `ℓ_i` is replaced by `(ℓ_i − η) e^{w_i} + γ w_i²`, where
//! `w_i` minimises that expression in closed form,
//! `w_i = −W₀(max(−1/e, (ℓ_i − η)/(2γ)))`. `γ > 0` emphasises easy samples
//! (loss below the threshold η), `γ < 0` hard ones. The sign-flipped case has no
//! finite minimiser; it is defined by the same formula.

use std::f64::consts::E;

use crate::{Error, Result};

/// `−1/e`, the branch point of W₀.
pub const BRANCH_POINT: f64 = -1.0 / E;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaMode {
    Fixed,
    /// η is the mean unweighted loss of the previous epoch.
    PreviousEpochMean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperLossConfig {
    pub gamma: f64,
    pub eta_init: f64,
    pub eta_mode: EtaMode,
}

impl SuperLossConfig {
    pub fn new(gamma: f64, eta_init: f64, eta_mode: EtaMode) -> Result<Self> {
        if gamma == 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be finite and nonzero, got {gamma}")));
        }
        Ok(Self {
            gamma,
            eta_init,
            eta_mode,
        })
    }

    /// Easy mode (`γ > 0`) with a data-driven threshold.
    pub fn easy(gamma: f64) -> Result<Self> {
        Self::new(gamma.abs(), 0.0, EtaMode::PreviousEpochMean)
    }

    /// Hard mode (`γ < 0`) with a data-driven threshold.
    pub fn hard(gamma: f64) -> Result<Self> {
        Self::new(-gamma.abs(), 0.0, EtaMode::PreviousEpochMean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleWeights {
    pub w: Vec<f64>,
    pub eta_used: f64,
}

impl SampleWeights {
    /// Multiplicative factors `e^{w_i}` applied to the sample gradients.
    pub fn factors(&self) -> Vec<f64> {
        self.w.iter().map(|w| w.exp()).collect()
    }

    pub fn summary(&self) -> (f64, f64, f64) {
        let n = self.w.len().max(1) as f64;
        let mean = self.w.iter().sum::<f64>() / n;
        let min = self.w.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, min, max)
    }
}

/// Principal branch W₀ via an initial guess refined by Halley iteration.
pub fn lambert_w0(z: f64) -> Result<f64> {
    if z.is_nan() {
        return Err(Error::LambertDomain(z));
    }
    if z < BRANCH_POINT - 1e-12 {
        return Err(Error::LambertDomain(z));
    }
    if z <= BRANCH_POINT {
        return Ok(-1.0);
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = initial_guess(z);
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.is_finite() {
            break;
        }
        let next = w - step;
        let done = (next - w).abs() <= 1e-15 * (1.0 + next.abs());
        w = next;
        if done {
            break;
        }
    }
    Ok(w)
}

fn initial_guess(z: f64) -> f64 {
    if z < -0.25 {
        // Series about the branch point in p = sqrt(2(ez + 1)).
        let p = (2.0 * (E * z + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if z < 3.0 {
        // Padé-like start that is accurate near zero.
        let l = (1.0 + z).ln();
        l * (1.0 - (1.0 + l).ln() / (2.0 + l))
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

/// `w = −W₀(max(−1/e, (ℓ − η)/(2γ)))`.
pub fn sample_weight(loss: f64, eta: f64, gamma: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Err(Error::InvalidArgument("gamma must be nonzero".into()));
    }
    let z = ((loss - eta) / (2.0 * gamma)).max(BRANCH_POINT);
    Ok(-lambert_w0(z)?)
}

pub fn sample_weights(losses: &[f64], eta: f64, gamma: f64) -> Result<SampleWeights> {
    let w = losses
        .iter()
        .map(|&l| sample_weight(l, eta, gamma))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleWeights { w, eta_used: eta })
}

/// `(1/N) Σ (ℓ_i − η) e^{w_i} + γ w_i²`.
pub fn weighted_risk(per_sample: &[f64], weights: &SampleWeights, eta: f64, gamma: f64) -> Result<f64> {
    if per_sample.len() != weights.w.len() {
        return Err(Error::DimensionMismatch {
            expected: per_sample.len(),
            actual: weights.w.len(),
        });
    }
    if per_sample.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = per_sample
        .iter()
        .zip(&weights.w)
        .map(|(l, w)| (l - eta) * w.exp() + gamma * w * w)
        .sum();
    Ok(total / per_sample.len() as f64)
}

/// Threshold for the next epoch.
pub fn update_eta(previous_losses: &[f64], cfg: &SuperLossConfig) -> f64 {
    match cfg.eta_mode {
        EtaMode::Fixed => cfg.eta_init,
        EtaMode::PreviousEpochMean if previous_losses.is_empty() => cfg.eta_init,
        EtaMode::PreviousEpochMean => {
            previous_losses.iter().sum::<f64>() / previous_losses.len() as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lambert_special_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0);
        assert!(matches!(lambert_w0(-0.5), Err(Error::LambertDomain(_))));
        // Slightly below the branch point is clamped.
        assert_eq!(lambert_w0(BRANCH_POINT - 1e-13).unwrap(), -1.0);
    }

    #[test]
    fn lambert_identity_on_grid() {
        let n = 10_000;
        for i in 0..n {
            let z = BRANCH_POINT + (10.0 - BRANCH_POINT) * i as f64 / (n - 1) as f64;
            let w = lambert_w0(z).unwrap();
            let err = (w * w.exp() - z).abs();
            assert!(err <= 1e-12 * z.abs().max(1.0), "z={z} w={w} err={err}");
        }
        for z in [1e-300, 1e-12, 1e3, 1e8, 1e300] {
            let w = lambert_w0(z).unwrap();
            assert!((w * w.exp() - z).abs() <= 1e-12 * z.max(1.0));
        }
    }

    #[test]
    fn sample_weight_examples() {
        assert_eq!(sample_weight(0.3, 0.3, 1.0).unwrap(), 0.0);
        // (ℓ − η)/(2γ) = e  →  w = −1.
        assert!((sample_weight(2.0 * E, 0.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        // (ℓ − η)/(2γ) = −1/e  →  w = +1.
        assert_eq!(sample_weight(-2.0 / E, 0.0, 1.0).unwrap(), 1.0);
        assert!(sample_weight(1.0, 0.0, 0.0).is_err());
    }

    /// Minimises `g(w) = a e^w + w²` on a fine grid.
    fn grid_min(a: f64) -> f64 {
        let mut best = f64::INFINITY;
        let steps = 200_000;
        for i in 0..=steps {
            let w = -3.0 + 6.0 * i as f64 / steps as f64;
            best = best.min(a * w.exp() + w * w);
        }
        best
    }

    #[test]
    fn weighted_risk_single_sample_against_grid_search() {
        let gap = 2.0 * E;
        let weights = sample_weights(&[gap], 0.0, 1.0).unwrap();
        let risk = weighted_risk(&[gap], &weights, 0.0, 1.0).unwrap();
        let oracle = grid_min(gap);
        assert!((oracle - 3.0).abs() < 1e-6);
        assert!((risk - 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_risk_edge_cases() {
        let losses = [0.4, 0.4, 0.4];
        let w = sample_weights(&losses, 0.4, 2.0).unwrap();
        assert_eq!(weighted_risk(&losses, &w, 0.4, 2.0).unwrap(), 0.0);
        let losses = [0.1, 0.9, 0.5, 2.0];
        let eta = 0.6;
        let gamma = 1e6;
        let w = sample_weights(&losses, eta, gamma).unwrap();
        let plain = losses.iter().map(|l| l - eta).sum::<f64>() / 4.0;
        assert!((weighted_risk(&losses, &w, eta, gamma).unwrap() - plain).abs() < 1e-6);
        assert!(weighted_risk(&losses[..2], &w, eta, gamma).is_err());
    }

    #[test]
    fn eta_updates() {
        let cfg = SuperLossConfig::new(1.0, 0.25, EtaMode::PreviousEpochMean).unwrap();
        assert_eq!(update_eta(&[1.0, 2.0, 3.0], &cfg), 2.0);
        let fixed = SuperLossConfig::new(1.0, 0.25, EtaMode::Fixed).unwrap();
        assert_eq!(update_eta(&[1.0, 2.0, 3.0], &fixed), 0.25);
        let mut eta = 0.0;
        for _ in 0..5 {
            eta = update_eta(&[0.7; 8], &cfg);
        }
        assert!((eta - 0.7).abs() < 1e-15);
        assert!(SuperLossConfig::new(0.0, 0.0, EtaMode::Fixed).is_err());
    }

    proptest! {
        #[test]
        fn lambert_identity(z in BRANCH_POINT..10.0f64) {
            let w = lambert_w0(z).unwrap();
            prop_assert!((w * w.exp() - z).abs() <= 1e-12 * z.abs().max(1.0));
        }

        #[test]
        fn weight_factor_bounded(l in -5.0..5.0f64, eta in -2.0..2.0f64, g in prop_oneof![-10.0..-0.01f64, 0.01..10.0f64]) {
            let w = sample_weight(l, eta, g).unwrap();
            prop_assert!(w <= 1.0);
            prop_assert!(w.exp() > 0.0 && w.exp() <= E);
        }

        #[test]
        fn weight_monotone_in_loss(a in -3.0..3.0f64, b in -3.0..3.0f64, g in 0.05..5.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            // Easy mode: non-increasing; hard mode: non-decreasing.
            prop_assert!(sample_weight(lo, 0.0, g).unwrap() >= sample_weight(hi, 0.0, g).unwrap() - 1e-12);
            prop_assert!(sample_weight(lo, 0.0, -g).unwrap() <= sample_weight(hi, 0.0, -g).unwrap() + 1e-12);
        }

        #[test]
        fn optimal_weights_never_increase_risk(losses in prop::collection::vec(0.0..3.0f64, 1..12), eta in 0.0..2.0f64, g in 0.05..5.0f64) {
            let w = sample_weights(&losses, eta, g).unwrap();
            let zero = SampleWeights { w: vec![0.0; losses.len()], eta_used: eta };
            prop_assert!(weighted_risk(&losses, &w, eta, g).unwrap() <= weighted_risk(&losses, &zero, eta, g).unwrap() + 1e-12);
        }
    }
}
