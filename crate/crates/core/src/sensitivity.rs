//! Rosenbaum bounds for matched pairs with binary outcomes, and the
//! amplification of Γ into (Λ, Δ).

use alloc::vec::Vec;

use libm::{fabs, sqrt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::PairedCounts;
use crate::stats;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum SensitivityError {
    #[error("gamma must be at least 1, got {0}")]
    GammaBelowOne(f64),
    #[error("no discordant pairs")]
    NoDiscordantPairs,
    #[error("lambda {lambda} must exceed gamma {gamma}")]
    LambdaNotAboveGamma { lambda: f64, gamma: f64 },
}

/// Above this many discordant pairs the binomial tail is replaced by a normal
/// approximation with continuity correction.
pub const EXACT_MAX_DISCORDANT: u64 = 200;
pub const GAMMA_MAX: f64 = 100.0;
pub const GAMMA_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    #[default]
    OneSided,
    /// Doubles the one-sided bound, capped at 1.
    TwoSided,
}

/// Upper bound on the p-value when hidden bias may multiply the odds of
/// treatment by up to `gamma`. The test is one-sided in the direction of the
/// larger discordant count.
pub fn worst_case_p(counts: &PairedCounts, gamma: f64) -> Result<f64, SensitivityError> {
    worst_case_p_sided(counts, gamma, Sidedness::OneSided)
}

pub fn worst_case_p_sided(counts: &PairedCounts, gamma: f64, sides: Sidedness) -> Result<f64, SensitivityError> {
    if !(gamma >= 1.0) {
        return Err(SensitivityError::GammaBelowOne(gamma));
    }
    let d = counts.discordant();
    if d == 0 {
        return Err(SensitivityError::NoDiscordantPairs);
    }
    let t = counts.n10.max(counts.n01);
    let p_plus = if gamma.is_infinite() { 1.0 } else { gamma / (1.0 + gamma) };
    let p = if d > EXACT_MAX_DISCORDANT {
        let mean = d as f64 * p_plus;
        let sd = sqrt(d as f64 * p_plus * (1.0 - p_plus));
        if sd == 0.0 {
            if (t as f64) <= mean { 1.0 } else { 0.0 }
        } else {
            stats::normal_sf((t as f64 - 0.5 - mean) / sd)
        }
    } else {
        stats::binomial_sf(t, d, p_plus)
    };
    Ok(match sides {
        Sidedness::OneSided => p,
        Sidedness::TwoSided => (2.0 * p).min(1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaStar {
    pub gamma: f64,
    /// False when the test is not significant even without hidden bias; `gamma` is then 1.
    pub significant_at_baseline: bool,
    /// True when the bound stays below α up to the search ceiling.
    pub capped: bool,
}

/// Largest Γ in [1, 100] whose worst-case p stays at or below `alpha`, by
/// bisection to within 1e-3.
pub fn gamma_star(counts: &PairedCounts, alpha: f64, sides: Sidedness) -> Result<GammaStar, SensitivityError> {
    let p = |g: f64| worst_case_p_sided(counts, g, sides);
    if p(1.0)? > alpha {
        return Ok(GammaStar { gamma: 1.0, significant_at_baseline: false, capped: false });
    }
    if p(GAMMA_MAX)? <= alpha {
        return Ok(GammaStar { gamma: GAMMA_MAX, significant_at_baseline: true, capped: true });
    }
    let (mut lo, mut hi) = (1.0, GAMMA_MAX);
    while hi - lo > GAMMA_TOL {
        let mid = 0.5 * (lo + hi);
        if p(mid)? <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(GammaStar { gamma: lo, significant_at_baseline: true, capped: false })
}

/// Δ = (ΓΛ − 1)/(Λ − Γ): the outcome-side bias that, paired with a
/// treatment-side bias Λ, amounts to Γ.
pub fn amplify(gamma: f64, lambda: f64) -> Result<f64, SensitivityError> {
    if !(gamma >= 1.0) {
        return Err(SensitivityError::GammaBelowOne(gamma));
    }
    if !(lambda > gamma) {
        return Err(SensitivityError::LambdaNotAboveGamma { lambda, gamma });
    }
    Ok((gamma * lambda - 1.0) / (lambda - gamma))
}

/// Γ = (ΛΔ + 1)/(Λ + Δ).
pub fn gamma_of(lambda: f64, delta: f64) -> f64 {
    (lambda * delta + 1.0) / (lambda + delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationPoint {
    pub lambda: f64,
    pub delta: f64,
}

/// (Λ, Δ) points for every Λ in the grid above Γ; the rest are rejected.
pub fn amplification_curve(gamma: f64, lambda_grid: &[f64]) -> Vec<AmplificationPoint> {
    lambda_grid
        .iter()
        .filter_map(|&lambda| amplify(gamma, lambda).ok().map(|delta| AmplificationPoint { lambda, delta }))
        .collect()
}

/// Geometric Λ grid from just above Γ up to `max`.
pub fn default_lambda_grid(gamma: f64, max: f64, points: usize) -> Vec<f64> {
    let lo = gamma * 1.05 + 0.05;
    let hi = max.max(lo * 2.0);
    let n = points.max(2);
    (0..n)
        .map(|i| lo * libm::pow(hi / lo, i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub gamma_star: GammaStar,
    pub alpha: f64,
    /// Worst-case p over an evenly spaced Γ grid.
    pub p_at: Vec<(f64, f64)>,
    pub amplification: Vec<AmplificationPoint>,
}

pub fn sensitivity_analysis(
    counts: &PairedCounts,
    alpha: f64,
    sides: Sidedness,
    gamma_grid: &[f64],
    lambda_max: f64,
) -> Result<SensitivityResult, SensitivityError> {
    let gamma_star = gamma_star(counts, alpha, sides)?;
    let p_at = gamma_grid
        .iter()
        .map(|&g| worst_case_p_sided(counts, g, sides).map(|p| (g, p)))
        .collect::<Result<Vec<_>, _>>()?;
    let amplification = if gamma_star.significant_at_baseline {
        amplification_curve(gamma_star.gamma, &default_lambda_grid(gamma_star.gamma, lambda_max, 40))
    } else {
        Vec::new()
    };
    Ok(SensitivityResult { gamma_star, alpha, p_at, amplification })
}

/// `n` evenly spaced Γ values on [1, max].
pub fn gamma_grid(max: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| 1.0 + (max - 1.0) * i as f64 / (n - 1) as f64).collect()
}

/// |(ΛΔ+1)/(Λ+Δ) − Γ| over a curve.
pub fn max_identity_error(gamma: f64, curve: &[AmplificationPoint]) -> f64 {
    curve.iter().map(|p| fabs(gamma_of(p.lambda, p.delta) - gamma)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(n10: u64, n01: u64) -> PairedCounts {
        PairedCounts { n11: 0, n10, n01, n00: 0 }
    }

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    fn tail_oracle(t: u64, d: u64, p: f64) -> f64 {
        (t..=d).map(|i| choose(d, i) * p.powi(i as i32) * (1.0 - p).powi((d - i) as i32)).sum()
    }

    #[test]
    fn reference_tail() {
        let p = worst_case_p(&counts(15, 5), 2.0).unwrap();
        assert!((p - tail_oracle(15, 20, 2.0 / 3.0)).abs() < 1e-12);
        assert!((p - 0.2972).abs() < 5e-4, "{p}");
        assert!((worst_case_p(&counts(15, 5), 1.0).unwrap() - tail_oracle(15, 20, 0.5)).abs() < 1e-12);
        assert!((worst_case_p(&counts(15, 5), f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(worst_case_p(&counts(3, 2), 0.5), Err(SensitivityError::GammaBelowOne(0.5)));
        assert_eq!(worst_case_p(&counts(0, 0), 1.0), Err(SensitivityError::NoDiscordantPairs));
    }

    #[test]
    fn gamma_star_against_grid() {
        let c = counts(90, 10);
        let g = gamma_star(&c, 0.05, Sidedness::OneSided).unwrap();
        let mut brute = 1.0;
        let mut x = 1.0;
        while x <= 100.0 {
            if worst_case_p(&c, x).unwrap() <= 0.05 {
                brute = x;
            }
            x += 1e-4;
        }
        assert!((g.gamma - brute).abs() < 1e-3, "{} vs {brute}", g.gamma);
        let scaled = gamma_star(&counts(900, 100), 0.05, Sidedness::OneSided).unwrap();
        assert!(scaled.gamma > g.gamma);
        let flat = gamma_star(&counts(10, 10), 0.05, Sidedness::OneSided).unwrap();
        assert!(!flat.significant_at_baseline);
        assert_eq!(flat.gamma, 1.0);
    }

    #[test]
    fn amplification() {
        assert!((gamma_of(5.0, 9.8) - 3.378).abs() < 1e-3);
        let d = amplify(gamma_of(5.0, 9.8), 5.0).unwrap();
        assert!((d - 9.8).abs() < 1e-9);
        assert!(amplify(2.0, 2.0).is_err());
        assert!((amplify(2.0, 1e12).unwrap() - 2.0).abs() < 1e-6);
        let curve = amplification_curve(3.0, &default_lambda_grid(3.0, 50.0, 30));
        assert_eq!(curve.len(), 30);
        assert!(max_identity_error(3.0, &curve) < 1e-9);
        assert!(curve.windows(2).all(|w| w[1].delta < w[0].delta));
    }

    #[test]
    fn normal_branch_close_to_exact() {
        let c = counts(130, 80);
        let approx = worst_case_p(&c, 1.2).unwrap();
        let exact = stats::binomial_sf(130, 210, 1.2 / 2.2);
        assert!((approx - exact).abs() < 5e-3, "{approx} {exact}");
    }
}
