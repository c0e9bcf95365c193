// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-segment exponential decay model.
//!
//! Within a segment that starts after changepoint `τ`, the observation at
//! offset `u = t − τ ≥ 1` is modelled as
//!
//! ```text
//! y(u) = α0 + α1 · exp(−exp(γ) · u)
//! ```
//!
//! so the per-step decay factor is `φ = exp(−exp(γ))`, always in `(0, 1)`,
//! and the e-folding time is `exp(−γ)` steps. With a covariate the jump
//! amplitude becomes `α1 + βᵀz(u)`.

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted or true parameters of one decay segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    /// Asymptotic soil moisture.
    pub alpha0: f64,
    /// Jump amplitude above the asymptote.
    pub alpha1: f64,
    /// Log-log decay rate.
    pub gamma: f64,
}

impl DecayParams {
    pub const fn new(alpha0: f64, alpha1: f64, gamma: f64) -> Self {
        Self {
            alpha0,
            alpha1,
            gamma,
        }
    }

    pub fn phi(&self) -> f64 {
        phi_of_gamma(self.gamma)
    }

    /// Noiseless model value at offset `u` with no covariate.
    pub fn value_at(&self, offset: f64) -> f64 {
        self.alpha0 + self.alpha1 * (-self.gamma.exp() * offset).exp()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha0, self.alpha1, self.gamma]
    }

    pub fn from_array(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

/// `φ = exp(−exp(γ))`.
pub fn phi_of_gamma(gamma: f64) -> f64 {
    (-gamma.exp()).exp()
}

/// Inverse of [`phi_of_gamma`]; `phi` must lie strictly inside `(0, 1)`.
pub fn gamma_of_phi(phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::invalid(format!("phi must lie in (0, 1), got {phi}")));
    }
    Ok((-phi.ln()).ln())
}

/// E-folding time in units of series steps: `1 / exp(γ)`.
pub fn efolding_steps(gamma: f64) -> f64 {
    (-gamma).exp()
}

/// E-folding time as a wall-clock duration; saturates at [`std::time::Duration::MAX`].
pub fn efolding_of_gamma(gamma: f64, step: TimeDelta) -> std::time::Duration {
    let step_secs = step.num_milliseconds() as f64 / 1000.0;
    std::time::Duration::try_from_secs_f64(step_secs * efolding_steps(gamma))
        .unwrap_or(std::time::Duration::MAX)
}

/// A covariate defined over the whole series.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Covariate {
    #[default]
    None,
    /// Per-time-point covariate, e.g. precipitation depth; `NaN` is missing.
    Continuous(Vec<f64>),
    /// Series indices of rainfall instants; within a segment each instant
    /// `z` contributes a step regressor `1(t ≥ z)`.
    Indicator(Vec<usize>),
}

impl Covariate {
    /// Design columns for the segment covering series indices `start..end`
    /// (offsets `1..=end-start`).
    pub fn segment_design(&self, start: usize, end: usize) -> Result<SegmentCovariates> {
        match self {
            Covariate::None => Ok(SegmentCovariates::none()),
            Covariate::Continuous(x) => {
                if end > x.len() {
                    return Err(Error::CovariateMissing(x.len()));
                }
                let col = x[start..end].to_vec();
                if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                    return Err(Error::CovariateMissing(start + i));
                }
                Ok(SegmentCovariates { columns: vec![col] })
            }
            Covariate::Indicator(instants) => {
                let columns = instants
                    .iter()
                    .filter(|&&z| z > start && z < end)
                    .map(|&z| (start..end).map(|t| if t >= z { 1.0 } else { 0.0 }).collect())
                    .collect();
                Ok(SegmentCovariates { columns })
            }
        }
    }
}

/// Covariate design for one segment: `q` columns, one row per offset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentCovariates {
    columns: Vec<Vec<f64>>,
}

impl SegmentCovariates {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        Self { columns }
    }

    /// Number of covariate coefficients.
    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// `βᵀz` at row `i`.
    pub fn effect(&self, beta: &[f64], i: usize) -> f64 {
        self.columns.iter().zip(beta).map(|(c, b)| c[i] * b).sum()
    }

    fn check(&self, beta: &[f64], rows: usize) -> Result<()> {
        if beta.len() != self.columns.len() {
            return Err(Error::LengthMismatch {
                expected: self.columns.len(),
                actual: beta.len(),
            });
        }
        if let Some(c) = self.columns.iter().find(|c| c.len() < rows) {
            return Err(Error::LengthMismatch {
                expected: rows,
                actual: c.len(),
            });
        }
        Ok(())
    }
}

/// Noiseless model values at the given offsets.
pub fn predict(
    params: &DecayParams,
    offsets: &[usize],
    covariates: &SegmentCovariates,
    beta: &[f64],
) -> Result<Vec<f64>> {
    covariates.check(beta, offsets.len())?;
    let rate = params.gamma.exp();
    Ok(offsets
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let amp = params.alpha1 + covariates.effect(beta, i);
            params.alpha0 + amp * (-rate * u as f64).exp()
        })
        .collect())
}

/// Analytic Jacobian of the covariate-free model with respect to
/// `(α0, α1, γ)`, one row per offset.
pub fn jacobian(params: &DecayParams, offsets: &[usize]) -> Vec<[f64; 3]> {
    let rate = params.gamma.exp();
    offsets
        .iter()
        .map(|&u| {
            let u = u as f64;
            let e = (-rate * u).exp();
            [1.0, e, -params.alpha1 * u * rate * e]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn predict_examples() {
        let p = DecayParams::new(0.06, 0.11, 0.0);
        let v = predict(&p, &[1], &SegmentCovariates::none(), &[]).unwrap();
        assert_relative_eq!(v[0], 0.06 + 0.11 * (-1f64).exp(), epsilon = 1e-15);
        assert!((v[0] - 0.10046).abs() < 1e-5);

        let far = p.value_at(1e6);
        assert_relative_eq!(far, p.alpha0, epsilon = 1e-15);

        // 0.1·exp(−exp(−4)·500), evaluated once and frozen.
        let p = DecayParams::new(0.05, 0.1, -4.0);
        let offsets: Vec<usize> = (1..=500).collect();
        let v = predict(&p, &offsets, &SegmentCovariates::none(), &[]).unwrap();
        assert_relative_eq!(v[499] - 0.05, 1.0539246179701673e-05, max_relative = 1e-9);
    }

    #[test]
    fn jacobian_structure() {
        let offsets: Vec<usize> = (1..=20).collect();
        let j = jacobian(&DecayParams::new(0.1, 0.2, -2.0), &offsets);
        assert!(j.iter().all(|r| r[0] == 1.0));
        let j = jacobian(&DecayParams::new(0.1, 0.0, -2.0), &offsets);
        assert!(j.iter().all(|r| r[2] == 0.0));
    }

    #[test]
    fn reparameterisation_examples() {
        assert_relative_eq!(phi_of_gamma(0.0), (-1f64).exp(), epsilon = 1e-12);
        assert!((phi_of_gamma(0.0) - 0.36788).abs() < 1e-5);
        let omega = efolding_of_gamma(-4.0, TimeDelta::hours(1));
        let hours = omega.as_secs_f64() / 3600.0;
        assert_relative_eq!(hours, 4f64.exp(), max_relative = 1e-9);
        assert!((hours - 54.598).abs() < 1e-3);
        assert!((hours / 24.0 - 2.27).abs() < 0.01);
        assert!(gamma_of_phi(0.0).is_err());
        assert!(gamma_of_phi(1.0).is_err());
        assert!(gamma_of_phi(f64::NAN).is_err());
    }

    #[test]
    fn covariate_designs() {
        let x = Covariate::Continuous(vec![0.0, 1.0, 2.0, f64::NAN, 4.0]);
        let d = x.segment_design(0, 3).unwrap();
        assert_eq!(d.columns(), &[vec![0.0, 1.0, 2.0]]);
        assert!(matches!(x.segment_design(1, 5), Err(Error::CovariateMissing(3))));

        let z = Covariate::Indicator(vec![2, 4, 9]);
        let d = z.segment_design(0, 6).unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.columns()[0], vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(d.columns()[1], vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);

        let p = DecayParams::new(0.05, 0.1, -1.0);
        let with = predict(&p, &[1, 2, 3, 4, 5, 6], &d, &[0.02, 0.01]).unwrap();
        let e = |u: f64| (-(-1f64).exp() * u).exp();
        assert_relative_eq!(with[0], 0.05 + 0.1 * e(1.0), epsilon = 1e-15);
        assert_relative_eq!(with[5], 0.05 + 0.13 * e(6.0), epsilon = 1e-15);
        assert!(predict(&p, &[1, 2], &d, &[0.1]).is_err());
    }

    fn central_difference(p: &DecayParams, u: usize, k: usize) -> f64 {
        let base = p.as_array();
        let h = 1e-6 * base[k].abs().max(1.0);
        let mut hi = base;
        let mut lo = base;
        hi[k] += h;
        lo[k] -= h;
        let f = |q: [f64; 3]| DecayParams::from_array(q).value_at(u as f64);
        (f(hi) - f(lo)) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn jacobian_matches_finite_differences(
            a0 in 0.0f64..0.4, a1 in 0.001f64..0.4, g in -8.0f64..1.0, u in 1usize..400,
        ) {
            let p = DecayParams::new(a0, a1, g);
            let row = jacobian(&p, &[u])[0];
            for k in 0..3 {
                let fd = central_difference(&p, u, k);
                let scale = row[k].abs().max(1e-3);
                prop_assert!((row[k] - fd).abs() / scale < 1e-6, "k={k} analytic={} fd={fd}", row[k]);
            }
        }

        #[test]
        fn phi_round_trip_and_monotone(g in -10.0f64..3.0, dg in 1e-3f64..1.0) {
            let phi = phi_of_gamma(g);
            prop_assert!(phi > 0.0 && phi < 1.0);
            prop_assert!((gamma_of_phi(phi).unwrap() - g).abs() < 1e-12 * g.abs().max(1.0));
            prop_assert!(phi_of_gamma(g + dg) < phi);
        }

        #[test]
        fn predict_decreasing_and_bounded(
            a0 in 0.0f64..0.3, a1 in 0.001f64..0.3, g in -6.0f64..1.0, len in 2usize..200,
        ) {
            let p = DecayParams::new(a0, a1, g);
            let offsets: Vec<usize> = (1..=len).collect();
            let v = predict(&p, &offsets, &SegmentCovariates::none(), &[]).unwrap();
            let top = a0 + a1 * p.phi();
            for w in v.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            for &y in &v {
                prop_assert!(y >= a0 && y <= top + 1e-15);
            }
        }
    }
}
