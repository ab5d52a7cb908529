//! First-order solver for composite objectives `L(T) + g(T)` where
//! `L(T) = <T T^T, S_xx> - 2 <T, S_xy>` is the quadratic surrogate lossdot
//! and `g` is a nuclear-norm penalty or ball constraint handled through its
//! proximal map.
//!
//! The iteration is proximal gradient with optional Nesterov momentum and a
//! gradient-based restart. Because the smooth part is quadratic, the
//! backtracking test is exact: a step `eta` is accepted when
//! `<D, S_xx D> <= ||D||_F^2 / (2 eta)` for the candidate displacement `D`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// Step-size policy for the proximal gradient iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPolicy {
    /// Constant step size.
    Fixed(f64),
    /// Halving backtracking; `eta0 = None` starts from
    /// `1 / max(2 * spectral_radius(S_xx), 1e-8)`, the inverse gradient
    /// Lipschitz constant of the quadratic loss.
    Backtracking { beta: f64, eta0: Option<f64> },
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy::Backtracking {
            beta: 0.5,
            eta0: None,
        }
    }
}

/// Iteration limits and tolerances for the first-order solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Relative tolerance on both the iterate change and the fixed-point
    /// residual of the prox-gradient map.
    pub rel_tol: f64,
    pub step_policy: StepPolicy,
    /// Nesterov momentum with gradient restart.
    pub acceleration: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            rel_tol: 1e-7,
            step_policy: StepPolicy::default(),
            acceleration: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if !self.rel_tol.is_finite() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidConfig("rel_tol must be positive".into()));
        }
        match self.step_policy {
            StepPolicy::Fixed(eta) => {
                if !eta.is_finite() || eta <= 0.0 {
                    return Err(Error::InvalidConfig("fixed step must be positive".into()));
                }
            }
            StepPolicy::Backtracking { beta, eta0 } => {
                if !beta.is_finite() || beta <= 0.0 || beta >= 1.0 {
                    return Err(Error::InvalidConfig("beta must lie in (0, 1)".into()));
                }
                if let Some(e) = eta0 {
                    if !e.is_finite() || e <= 0.0 {
                        return Err(Error::InvalidConfig("eta0 must be positive".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Solution of one estimation program.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub theta_hat: Matrix,
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
    /// Smallest eigenvalue of the symmetrized `S_xx`; negative values flag a
    /// non-convex instance (the iteration then only promises stationarity).
    pub sxx_min_eig: f64,
}

/// Extremal eigenvalues `(min, max)` of a symmetric matrix.
pub(crate) fn eig_range(sym: &Matrix) -> (f64, f64) {
    let eig = sym.clone().symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Minimize `<T T^T, sxx> - 2 <T, sxy> + g(T)` by proximal gradient.
///
/// `prox(point, eta)` must evaluate the proximal map of `eta * g` and
/// `penalty` the value of `g` (used only for the reported objective).
/// `sxx` is assumed symmetric.
pub(crate) fn solve_composite<P, G>(
    sxx: &Matrix,
    sxy: &Matrix,
    prox: P,
    penalty: G,
    cfg: &SolverConfig,
) -> Result<EstimateReport>
where
    P: Fn(&Matrix, f64) -> Result<Matrix>,
    G: Fn(&Matrix) -> f64,
{
    cfg.validate()?;
    let d1 = sxx.nrows();
    if sxx.ncols() != d1 || sxy.nrows() != d1 {
        return Err(Error::DimensionMismatch(format!(
            "sxx is {}x{}, sxy is {}x{}",
            sxx.nrows(),
            sxx.ncols(),
            sxy.nrows(),
            sxy.ncols()
        )));
    }
    let (min_eig, max_eig) = eig_range(sxx);
    let spectral_radius = min_eig.abs().max(max_eig.abs());

    let (mut eta, backtrack_beta) = match cfg.step_policy {
        StepPolicy::Fixed(e) => (e, None),
        StepPolicy::Backtracking { beta, eta0 } => (
            eta0.unwrap_or(1.0 / (2.0 * spectral_radius).max(1e-8)),
            Some(beta),
        ),
    };

    let mut theta = Matrix::zeros(d1, sxy.ncols());
    let mut y = theta.clone();
    let mut momentum = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    let gradient = |point: &Matrix| -> Matrix { 2.0 * (sxx * point - sxy) };

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        let grad = gradient(&y);
        let mut next = prox(&(&y - eta * &grad), eta)?;
        if let Some(beta) = backtrack_beta {
            // Exact majorization test for the quadratic smooth part.
            loop {
                let diff = &next - &y;
                let curvature = diff.dot(&(sxx * &diff));
                let bound = diff.norm_squared() / (2.0 * eta);
                if curvature <= bound + 1e-12 * bound.abs().max(1.0) {
                    break;
                }
                eta *= beta;
                if eta < 1e-300 {
                    break;
                }
                next = prox(&(&y - eta * &grad), eta)?;
            }
        }

        let change = (&next - &theta).norm();
        let scale = next.norm().max(1.0);

        if cfg.acceleration {
            // Gradient-based restart: drop momentum when it points uphill.
            let restart = (&y - &next).dot(&(&next - &theta)) > 0.0;
            if restart {
                momentum = 1.0;
                y = next.clone();
            } else {
                let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
                let mix = (momentum - 1.0) / next_momentum;
                y = &next + mix * (&next - &theta);
                momentum = next_momentum;
            }
        } else {
            y = next.clone();
        }

        theta = next;
        if change <= cfg.rel_tol * scale {
            // Confirm with the fixed-point residual at the new iterate.
            let grad_at = gradient(&theta);
            let mapped = prox(&(&theta - eta * &grad_at), eta)?;
            if (&theta - &mapped).norm() <= cfg.rel_tol * scale {
                converged = true;
                break;
            }
        }
    }

    let loss = theta.dot(&(sxx * &theta)) - 2.0 * theta.dot(sxy);
    Ok(EstimateReport {
        final_objective: loss + penalty(&theta),
        theta_hat: theta,
        iterations,
        converged,
        sxx_min_eig: min_eig,
    })
}
