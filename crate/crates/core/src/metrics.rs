//! Measured quantities (optimality gap, consensus error, penalty gradient)
//! and shape-only evaluators of the convergence envelopes.
//!
//! The envelope evaluators set every hidden constant to 1. They are meant
//! for slope and ratio comparisons, not absolute predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::MixingMatrix;
use crate::vecops::{dist_sq, mean};

/// `M = (1/n) Σ ‖x̄ - x_i‖²`.
pub fn consensus_error(models: &[Vec<f64>]) -> f64 {
    let avg = mean(models);
    models.iter().map(|x| dist_sq(x, &avg)).sum::<f64>() / models.len() as f64
}

/// `(1/n) Σ ‖x_i - x*‖²`.
pub fn optimality_gap(models: &[Vec<f64>], optimum: Option<&[f64]>) -> Result<f64> {
    let opt = optimum.ok_or(Error::NoOptimum("optimality gap needs a closed-form minimizer"))?;
    Ok(models.iter().map(|x| dist_sq(x, opt)).sum::<f64>() / models.len() as f64)
}

/// `∇h_α(x) = (I - W)x + α·g`, block by block, where block `i` of `g` is
/// the gradient node `i` evaluated at its own model.
pub fn penalty_gradient(w: &MixingMatrix, alpha: f64, models: &[Vec<f64>], grads: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = models.len();
    (0..n)
        .map(|i| {
            let mut out = models[i].clone();
            for (j, xj) in models.iter().enumerate() {
                let wij = w.weight(i, j);
                if wij != 0.0 {
                    for (o, v) in out.iter_mut().zip(xj) {
                        *o -= wij * v;
                    }
                }
            }
            for (o, g) in out.iter_mut().zip(&grads[i]) {
                *o += alpha * g;
            }
            out
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// `μ`; zero for nonconvex families.
    pub mu: f64,
    pub k: f64,
    pub gamma_sq: f64,
    pub sigma_sq: f64,
    pub beta: f64,
    pub d_sq: f64,
    pub n: usize,
    pub m: usize,
    pub deadline: f64,
    pub expected_inverse_speed: f64,
}

impl TheoryConstants {
    /// `1/b_eff = max{E[1/V]/T_d, 1/m}`.
    pub fn inverse_effective_batch(&self) -> f64 {
        (self.expected_inverse_speed / self.deadline).max(1.0 / self.m as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.mu, self.k, self.gamma_sq, self.sigma_sq, self.beta, self.d_sq, self.deadline, self.expected_inverse_speed];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("theory constants must be finite and non-negative: {self:?}")));
        }
        if self.beta >= 1.0 {
            return Err(Error::invalid(format!("beta={} must be < 1", self.beta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexBound {
    /// `(D²(K/μ)²/(1-β)² + σ²/μ) / T^δ`
    pub leading: f64,
    /// `(γ²/μ)·max{E[1/V]/T_d, 1/m} / T^{2δ}`
    pub gradient_noise: f64,
}

impl ConvexBound {
    pub fn total(&self) -> f64 {
        self.leading + self.gradient_noise
    }
}

/// Strongly convex envelope with hidden constants set to 1.
pub fn convex_bound(c: &TheoryConstants, t: u64, delta: f64) -> ConvexBound {
    let t = t as f64;
    let gap = 1.0 - c.beta;
    let leading = (c.d_sq * (c.k / c.mu).powi(2) / (gap * gap) + c.sigma_sq / c.mu) / t.powf(delta);
    let gradient_noise = (c.gamma_sq / c.mu) * c.inverse_effective_batch() / t.powf(2.0 * delta);
    ConvexBound { leading, gradient_noise }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonconvexBounds {
    /// Running mean of `‖∇f(x̄_t)‖²`.
    pub convergence: f64,
    /// Running mean of the consensus error.
    pub consensus: f64,
}

/// Nonconvex stationarity and consensus envelopes with hidden constants set to 1.
pub fn nonconvex_bounds(c: &TheoryConstants, t: u64) -> NonconvexBounds {
    let t = t as f64;
    let gap = 1.0 - c.beta;
    let (n, m) = (c.n as f64, c.m as f64);
    let convergence = (c.k * c.k / (gap * gap) * c.gamma_sq / m + c.k * c.sigma_sq / n) * t.powf(-1.0 / 3.0)
        + (c.k * c.gamma_sq / n) * c.inverse_effective_batch() * t.powf(-2.0 / 3.0);
    let consensus = c.gamma_sq / (m * gap * gap) * t.powf(-1.0 / 3.0);
    NonconvexBounds { convergence, consensus }
}

/// Iteration threshold after which the convex envelope applies. Reported
/// only; runs never gate on it.
pub fn convex_min_iterations(c: &TheoryConstants, delta: f64) -> f64 {
    let a = ((2.0 + c.k).powi(2) / c.mu).powf(1.0 / delta).ceil();
    let b = (1.0 / (1.0 - 2.0 * delta)).exp().exp().ceil();
    let d = c.mu.powf(1.0 / (2.0 * delta)).ceil();
    a.max(b).max(d)
}

/// Least-squares slope of `ln value` against `ln T`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("log-log slope needs at least two points"));
    }
    if let Some(&(t, v)) = points.iter().find(|&&(t, v)| !(t > 0.0 && v > 0.0)) {
        return Err(Error::invalid(format!("log-log slope needs positive points, got ({t}, {v})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(t, v)| (t.ln(), v.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("log-log slope needs at least two distinct T values"));
    }
    Ok(sxy / sxx)
}

/// Simulated time of the first row whose loss is at or below `threshold`.
pub fn time_to_loss(rows: &[MetricsRow], threshold: f64) -> Option<f64> {
    rows.iter().find(|r| r.loss <= threshold).map(|r| r.sim_time_s)
}

/// One sampled row of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: u64,
    pub sim_time_s: f64,
    /// `f(x̄)`.
    pub loss: f64,
    /// `None` when the family has no closed-form minimizer.
    pub gap: Option<f64>,
    pub consensus: f64,
    /// `‖∇f(x̄)‖²`.
    pub grad_norm_sq: f64,
    pub bytes: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{laplacian_mixing, Graph};
    use crate::vecops::norm_sq;
    use proptest::prelude::*;

    fn k2() -> MixingMatrix {
        laplacian_mixing(&Graph::complete(2).unwrap(), 2.0).unwrap()
    }

    fn constants() -> TheoryConstants {
        TheoryConstants {
            mu: 0.5,
            k: 2.0,
            gamma_sq: 1.5,
            sigma_sq: 0.1,
            beta: 0.6,
            d_sq: 3.0,
            n: 10,
            m: 200,
            deadline: 0.8,
            expected_inverse_speed: 9f64.ln() / 80.0,
        }
    }

    #[test]
    fn consensus_examples() {
        assert_eq!(consensus_error(&[vec![1.0], vec![-1.0]]), 1.0);
        assert_eq!(consensus_error(&vec![vec![0.3, 2.0]; 4]), 0.0);
        let shifted: Vec<Vec<f64>> = [vec![1.0], vec![-1.0]].iter().map(|x| vec![x[0] + 5.0]).collect();
        assert_eq!(consensus_error(&shifted), 1.0);
    }

    #[test]
    fn gap_examples() {
        let opt = [0.5, -0.5];
        assert_eq!(optimality_gap(&[opt.to_vec(), opt.to_vec()], Some(&opt)).unwrap(), 0.0);
        assert_eq!(optimality_gap(&[vec![1.0], vec![-1.0]], Some(&[0.0])).unwrap(), 1.0);
        assert!(matches!(optimality_gap(&[vec![1.0]], None), Err(Error::NoOptimum(_))));
    }

    #[test]
    fn penalty_gradient_examples() {
        let w = k2();
        let x = vec![vec![0.0], vec![2.0]];
        assert_eq!(penalty_gradient(&w, 1.0, &x, &[vec![0.0], vec![2.0]]), vec![vec![-1.0], vec![3.0]]);
        let consensus = vec![vec![1.5, -0.5]; 2];
        let zero = vec![vec![0.0, 0.0]; 2];
        assert!(penalty_gradient(&w, 0.7, &consensus, &zero).iter().all(|b| norm_sq(b) == 0.0));
    }

    #[test]
    fn convex_term_examples() {
        let mut c = constants();
        assert!((c.inverse_effective_batch() - 0.034332).abs() < 1e-6);
        c.deadline = 1.6;
        assert!((c.inverse_effective_batch() - 0.017166).abs() < 1e-6);
        c.deadline = 100.0;
        assert_eq!(c.inverse_effective_batch(), 1.0 / 200.0);
    }

    #[test]
    fn convex_monotone_in_t_and_deadline() {
        let c = constants();
        for t in [1u64, 10, 500, 8000] {
            assert!(convex_bound(&c, 2 * t, 0.4).total() < convex_bound(&c, t, 0.4).total());
        }
        let mut slow = c;
        slow.deadline = 0.4;
        assert!(convex_bound(&slow, 100, 0.4).total() > convex_bound(&c, 100, 0.4).total());
        // in the 1/m regime the deadline no longer matters
        let (mut a, mut b) = (c, c);
        a.deadline = 50.0;
        b.deadline = 100.0;
        assert_eq!(convex_bound(&a, 100, 0.4), convex_bound(&b, 100, 0.4));
    }

    #[test]
    fn nonconvex_shape() {
        let c = constants();
        let ratio = {
            let mut z = c;
            z.gamma_sq = 0.0;
            nonconvex_bounds(&z, 1000).convergence / nonconvex_bounds(&z, 8000).convergence
        };
        assert!((ratio - 2.0).abs() < 1e-12);

        let mut near = c;
        near.beta = 0.9;
        let b1 = nonconvex_bounds(&near, 100);
        near.beta = 0.99;
        let b2 = nonconvex_bounds(&near, 100);
        assert!(b2.convergence > b1.convergence && b2.consensus > 99.0 * b1.consensus);

        let mut quiet = c;
        quiet.gamma_sq = 0.0;
        quiet.sigma_sq = 0.0;
        assert_eq!(nonconvex_bounds(&quiet, 77), NonconvexBounds { convergence: 0.0, consensus: 0.0 });
    }

    #[test]
    fn slope_examples() {
        assert!((loglog_slope(&[(10.0, 1.0), (100.0, 0.1)]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[(1.0, 3.0), (5.0, 3.0), (9.0, 3.0)]).unwrap(), 0.0);
        let law: Vec<(f64, f64)> = [500.0, 2000.0, 8000.0].iter().map(|&t: &f64| (t, 2.5 * t.powf(-0.4))).collect();
        assert!((loglog_slope(&law).unwrap() + 0.4).abs() < 1e-9);
        assert!(loglog_slope(&[(1.0, 1.0)]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0)]).is_err());
    }

    #[test]
    fn constants_validation() {
        assert!(constants().validate().is_ok());
        let mut bad = constants();
        bad.beta = 1.0;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn gap_decomposes_into_consensus_and_bias(
            xs in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..8),
            opt in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let gap = optimality_gap(&xs, Some(&opt)).unwrap();
            let bias = dist_sq(&mean(&xs), &opt);
            prop_assert!((gap - consensus_error(&xs) - bias).abs() <= 1e-12 * (1.0 + gap));
        }
    }
}
