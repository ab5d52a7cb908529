//! Low-rank multivariate regression from quantized data.
//!
//! The model is `y_k = Theta0^T x_k + eps_k` with `Theta0` of low rank.
//! Covariates are quantized with triangular dither at level `delta1`,
//! responses with uniform dither at `delta2`. The bias-corrected surrogate
//! covariances
//!
//! ```text
//! S_xx = (1/n) sum xdot_k xdot_k^T - (delta1^2 / 4) I,
//! S_xy = (1/n) sum xdot_k ydot_k^T
//! ```
//!
//! are unbiased for the population covariances, and the estimators minimize
//! the surrogate loss `Ldot(T) = <T T^T, S_xx> - 2 <T, S_xy>` under a
//! nuclear-norm ball constraint, a nuclear-norm penalty, or nothing (OLS).

use rand::Rng;

use crate::dither::{self, DitherKind, QuantConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::{self, EstimateReport, SolverConfig};
use crate::Matrix;

/// Covariate/response sample pairs stored column-wise: `covariates` is
/// `d1 x n`, `responses` is `d2 x n`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub covariates: Matrix,
    pub responses: Matrix,
}

impl Dataset {
    pub fn new(covariates: Matrix, responses: Matrix) -> Result<Self> {
        if covariates.ncols() != responses.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "covariates have {} samples, responses {}",
                covariates.ncols(),
                responses.ncols()
            )));
        }
        if covariates.ncols() == 0 {
            return Err(Error::DimensionMismatch(
                "dataset needs at least one sample".into(),
            ));
        }
        Ok(Self {
            covariates,
            responses,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn d1(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn d2(&self) -> usize {
        self.responses.nrows()
    }
}

/// A dataset after dithered quantization.
#[derive(Debug, Clone)]
pub struct QuantizedDataset {
    pub xdot: Matrix,
    pub ydot: Matrix,
    pub config: QuantConfig,
}

/// Quantize a whole matrix entrywise, consuming the generator column-major.
pub fn quantize_matrix<R: Rng + ?Sized>(
    m: &Matrix,
    delta: f64,
    kind: DitherKind,
    rng: &mut R,
) -> Result<Matrix> {
    let rec = dither::quantize_with_dither(m.as_slice(), delta, kind, rng)?;
    Ok(Matrix::from_vec(m.nrows(), m.ncols(), rec.quantized))
}

/// Quantize a matrix entrywise with no dither at all.
pub fn quantize_matrix_undithered(m: &Matrix, delta: f64) -> Result<Matrix> {
    let mut out = m.clone();
    for v in out.iter_mut() {
        *v = dither::uniform_quantize(*v, delta)?;
    }
    Ok(out)
}

/// Quantize covariates (triangular dither, `delta1`) and responses (uniform
/// dither, `delta2`); a zero level passes that side through.
///
/// Covariates are consumed from the generator before responses, so a fixed
/// seed pins the whole quantization.
pub fn quantize_dataset<R: Rng + ?Sized>(
    data: &Dataset,
    config: QuantConfig,
    rng: &mut R,
) -> Result<QuantizedDataset> {
    let xdot = quantize_matrix(&data.covariates, config.delta1, DitherKind::Triangular, rng)?;
    let ydot = quantize_matrix(&data.responses, config.delta2, DitherKind::Uniform, rng)?;
    Ok(QuantizedDataset { xdot, ydot, config })
}

/// Quantize without dithering (the comparison arm of the dither study).
pub fn quantize_dataset_undithered(data: &Dataset, config: QuantConfig) -> Result<QuantizedDataset> {
    Ok(QuantizedDataset {
        xdot: quantize_matrix_undithered(&data.covariates, config.delta1)?,
        ydot: quantize_matrix_undithered(&data.responses, config.delta2)?,
        config,
    })
}

/// Bias-corrected covariances built from quantized data.
#[derive(Debug, Clone)]
pub struct SurrogateCovs {
    /// `d1 x d1`, symmetric.
    pub sxx: Matrix,
    /// `d1 x d2`.
    pub sxy: Matrix,
    pub n: usize,
    pub config: QuantConfig,
}

pub(crate) fn bias_corrected_sxx(xdot: &Matrix, delta1: f64) -> Matrix {
    let n = xdot.ncols() as f64;
    let mut sxx = xdot * xdot.transpose() / n;
    let correction = delta1 * delta1 / 4.0;
    for i in 0..sxx.nrows() {
        sxx[(i, i)] -= correction;
    }
    linalg::symmetrize(&sxx)
}

/// `S_xx = (1/n) Xdot Xdot^T - (delta1^2/4) I` and `S_xy = (1/n) Xdot Ydot^T`.
pub fn surrogate_covariances(q: &QuantizedDataset) -> SurrogateCovs {
    let n = q.xdot.ncols();
    SurrogateCovs {
        sxx: bias_corrected_sxx(&q.xdot, q.config.delta1),
        sxy: &q.xdot * q.ydot.transpose() / n as f64,
        n,
        config: q.config,
    }
}

fn check_dims(theta: &Matrix, covs: &SurrogateCovs) -> Result<()> {
    if theta.nrows() != covs.sxx.nrows() || theta.ncols() != covs.sxy.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "theta is {}x{} but covariances expect {}x{}",
            theta.nrows(),
            theta.ncols(),
            covs.sxx.nrows(),
            covs.sxy.ncols()
        )));
    }
    Ok(())
}

/// Surrogate loss `<T T^T, S_xx> - 2 <T, S_xy>`.
pub fn empirical_loss(theta: &Matrix, covs: &SurrogateCovs) -> Result<f64> {
    check_dims(theta, covs)?;
    Ok(theta.dot(&(&covs.sxx * theta)) - 2.0 * theta.dot(&covs.sxy))
}

/// Gradient `2 (S_xx T - S_xy)` of the surrogate loss.
pub fn loss_gradient(theta: &Matrix, covs: &SurrogateCovs) -> Result<Matrix> {
    check_dims(theta, covs)?;
    Ok(2.0 * (&covs.sxx * theta - &covs.sxy))
}

/// Nuclear-norm-constrained least squares on the surrogate loss, solved by
/// projected gradient. The output is always inside the ball; `converged`
/// reflects the projected-gradient fixed-point residual.
pub fn constrained_lasso(
    covs: &SurrogateCovs,
    radius: f64,
    cfg: &SolverConfig,
) -> Result<EstimateReport> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "constraint radius must be positive, got {radius}"
        )));
    }
    solver::solve_composite(
        &covs.sxx,
        &covs.sxy,
        |point, _eta| linalg::project_nuclear_ball(point, radius),
        |_| 0.0,
        cfg,
    )
}

/// Nuclear-norm-regularized least squares on the surrogate loss, solved by
/// proximal gradient (optionally accelerated).
pub fn regularized_lasso(
    covs: &SurrogateCovs,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<EstimateReport> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "penalty level must be positive, got {lambda}"
        )));
    }
    solver::solve_composite(
        &covs.sxx,
        &covs.sxy,
        |point, eta| linalg::svt(point, eta * lambda),
        |theta| lambda * linalg::nuclear_norm(theta),
        cfg,
    )
}

/// Penalty level `scale_c * sqrt((d1 + d2) / n)`; `scale_c` folds in the
/// noise-dependent factors and is tuned per experiment.
pub fn lambda_schedule(d1: usize, d2: usize, n: usize, scale_c: f64) -> f64 {
    assert!(d1 > 0 && d2 > 0 && n > 0 && scale_c > 0.0);
    scale_c * (((d1 + d2) as f64) / n as f64).sqrt()
}

/// Ordinary least squares on the surrogate loss: solves `S_xx T = S_xy`.
pub fn ols_baseline(covs: &SurrogateCovs) -> Result<EstimateReport> {
    let (min_eig, _) = solver::eig_range(&covs.sxx);
    if min_eig <= 1e-10 {
        return Err(Error::SingularCovariance { min_eig });
    }
    let chol = covs
        .sxx
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance { min_eig })?;
    let theta_hat = chol.solve(&covs.sxy);
    let final_objective = empirical_loss(&theta_hat, covs)?;
    Ok(EstimateReport {
        theta_hat,
        iterations: 0,
        final_objective,
        converged: true,
        sxx_min_eig: min_eig,
    })
}

/// Relative prediction error `||Y - T^T X||_F / ||Y||_F`.
pub fn prediction_error(theta: &Matrix, data: &Dataset) -> Result<f64> {
    if theta.nrows() != data.d1() || theta.ncols() != data.d2() {
        return Err(Error::DimensionMismatch(format!(
            "theta is {}x{} but data is {}x{}",
            theta.nrows(),
            theta.ncols(),
            data.d1(),
            data.d2()
        )));
    }
    let ynorm = data.responses.norm();
    if ynorm == 0.0 {
        return Err(Error::ZeroResponseNorm);
    }
    let residual = &data.responses - theta.transpose() * &data.covariates;
    Ok(residual.norm() / ynorm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_levels_pass_data_through() {
        let mut r = rng(0);
        let data = synth::gen_lrmr_dataset(&synth::standard_normal_matrix(3, 2, &mut r), 5, 0.1, &mut r);
        let q = quantize_dataset(&data, QuantConfig::none(), &mut r).unwrap();
        assert_eq!(q.xdot, data.covariates);
        assert_eq!(q.ydot, data.responses);
    }

    #[test]
    fn response_quantization_lands_on_grid() {
        let mut r = rng(1);
        let data = synth::gen_lrmr_dataset(&synth::standard_normal_matrix(3, 2, &mut r), 50, 0.1, &mut r);
        let q = quantize_dataset(&data, QuantConfig::new(0.0, 1.0).unwrap(), &mut r).unwrap();
        assert_eq!(q.xdot, data.covariates);
        for v in q.ydot.iter() {
            assert!((v - 0.5 - (v - 0.5).round()).abs() < 1e-9, "{v} off grid");
        }
    }

    #[test]
    fn requantization_is_unbiased_for_responses() {
        let mut r = rng(16);
        let data = synth::gen_lrmr_dataset(&synth::standard_normal_matrix(4, 3, &mut r), 20, 0.1, &mut r);
        let reps = 2000;
        let mut sum = Matrix::zeros(3, 20);
        for _ in 0..reps {
            let q = quantize_dataset(&data, QuantConfig::new(0.0, 1.0).unwrap(), &mut r).unwrap();
            sum += &q.ydot;
        }
        let mean = &sum / reps as f64;
        for i in 0..mean.nrows() {
            for j in 0..mean.ncols() {
                let m = mean[(i, j)];
                let y = data.responses[(i, j)];
                // With delta = 1 and uniform dither the quantized value is a
                // two-point variable with exact variance p (1 - p).
                let p = y + 0.5 - (y + 0.5).floor();
                let tol = 3.0 * (p * (1.0 - p) / reps as f64).sqrt() + 1e-9;
                assert!((m - y).abs() <= tol, "entry ({i},{j}): {m} vs {y}");
            }
        }
    }

    #[test]
    fn surrogate_single_sample() {
        let x = Matrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let y = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let q = QuantizedDataset {
            xdot: x,
            ydot: y,
            config: QuantConfig::none(),
        };
        let covs = surrogate_covariances(&q);
        assert_eq!(covs.sxx[(0, 0)], 1.0);
        assert_eq!(covs.sxx.sum(), 1.0);
        assert_eq!(covs.sxy[(0, 1)], 1.0);
        assert_eq!(covs.sxy.sum(), 1.0);
    }

    #[test]
    fn surrogate_bias_correction_shows_in_zero_data() {
        let q = QuantizedDataset {
            xdot: Matrix::zeros(3, 4),
            ydot: Matrix::zeros(2, 4),
            config: QuantConfig::new(2.0, 0.0).unwrap(),
        };
        let covs = surrogate_covariances(&q);
        assert_eq!(covs.sxx, -Matrix::identity(3, 3));
    }

    #[test]
    fn surrogate_concentrates_on_population_covariance() {
        let mut r = rng(3);
        let x = synth::standard_normal_matrix(5, 100_000, &mut r);
        let y = Matrix::zeros(1, 100_000);
        let data = Dataset::new(x, y).unwrap();
        let q = quantize_dataset(&data, QuantConfig::new(0.5, 0.0).unwrap(), &mut r).unwrap();
        let covs = surrogate_covariances(&q);
        let dev = linalg::operator_norm(&(&covs.sxx - Matrix::identity(5, 5)));
        assert!(dev <= 0.06, "operator deviation {dev}");
    }

    #[test]
    fn loss_and_gradient_at_zero() {
        let mut r = rng(4);
        let data = synth::gen_lrmr_dataset(&synth::standard_normal_matrix(4, 3, &mut r), 50, 0.1, &mut r);
        let covs = surrogate_covariances(&quantize_dataset(&data, QuantConfig::none(), &mut r).unwrap());
        let zero = Matrix::zeros(4, 3);
        assert_eq!(empirical_loss(&zero, &covs).unwrap(), 0.0);
        let g = loss_gradient(&zero, &covs).unwrap();
        assert!((g + 2.0 * &covs.sxy).norm() < 1e-14);
    }

    #[test]
    fn loss_is_squared_norm_under_identity_covariance() {
        let mut r = rng(5);
        let theta = synth::standard_normal_matrix(4, 3, &mut r);
        let covs = SurrogateCovs {
            sxx: Matrix::identity(4, 4),
            sxy: Matrix::zeros(4, 3),
            n: 1,
            config: QuantConfig::none(),
        };
        let loss = empirical_loss(&theta, &covs).unwrap();
        assert!((loss - theta.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(6);
        let data = synth::gen_lrmr_dataset(&synth::standard_normal_matrix(5, 4, &mut r), 60, 0.3, &mut r);
        let covs = surrogate_covariances(&quantize_dataset(&data, QuantConfig::new(0.3, 0.3).unwrap(), &mut r).unwrap());
        let theta = synth::standard_normal_matrix(5, 4, &mut r);
        let grad = loss_gradient(&theta, &covs).unwrap();
        let h = 1e-5;
        for i in 0..5 {
            for j in 0..4 {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus[(i, j)] += h;
                minus[(i, j)] -= h;
                let fd = (empirical_loss(&plus, &covs).unwrap()
                    - empirical_loss(&minus, &covs).unwrap())
                    / (2.0 * h);
                let denom = grad[(i, j)].abs().max(1.0);
                assert!(
                    (fd - grad[(i, j)]).abs() / denom < 1e-4,
                    "entry ({i},{j}): fd {fd} vs {}",
                    grad[(i, j)]
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let covs = SurrogateCovs {
            sxx: Matrix::identity(4, 4),
            sxy: Matrix::zeros(4, 3),
            n: 1,
            config: QuantConfig::none(),
        };
        let theta = Matrix::zeros(3, 3);
        assert!(matches!(
            empirical_loss(&theta, &covs),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn gaussian_covs(d1: usize, d2: usize, n: usize, seed: u64) -> SurrogateCovs {
        let mut r = rng(seed);
        let theta0 = synth::gen_lowrank_theta(d1, d2, 2.min(d1.min(d2)), &mut r).unwrap();
        let data = synth::gen_lrmr_dataset(&theta0, n, 0.1, &mut r);
        surrogate_covariances(&quantize_dataset(&data, QuantConfig::none(), &mut r).unwrap())
    }

    #[test]
    fn zero_cross_covariance_gives_zero_estimate() {
        let mut covs = gaussian_covs(5, 4, 200, 7);
        covs.sxy = Matrix::zeros(5, 4);
        let rep = constrained_lasso(&covs, 1.0, &SolverConfig::default()).unwrap();
        assert!(rep.theta_hat.norm() < 1e-12);
        assert!(rep.converged);
    }

    #[test]
    fn inactive_constraint_recovers_least_squares() {
        let covs = gaussian_covs(5, 4, 400, 8);
        let ls = ols_baseline(&covs).unwrap().theta_hat;
        let radius = linalg::nuclear_norm(&ls) + 1.0;
        let cfg = SolverConfig {
            rel_tol: 1e-10,
            ..Default::default()
        };
        let rep = constrained_lasso(&covs, radius, &cfg).unwrap();
        assert!(rep.converged);
        assert!((rep.theta_hat - ls).norm() < 1e-4);
    }

    #[test]
    fn large_penalty_returns_exact_zero() {
        let covs = gaussian_covs(6, 5, 300, 9);
        let lambda = 2.0 * linalg::operator_norm(&covs.sxy) * 1.0001;
        let rep = regularized_lasso(&covs, lambda, &SolverConfig::default()).unwrap();
        assert!(rep.theta_hat.norm() <= 1e-10);
        assert!(rep.converged);
    }

    #[test]
    fn identity_covariance_reduces_to_one_svt_step() {
        let mut r = rng(10);
        let sxy = synth::standard_normal_matrix(6, 5, &mut r);
        let covs = SurrogateCovs {
            sxx: Matrix::identity(6, 6),
            sxy: sxy.clone(),
            n: 1,
            config: QuantConfig::none(),
        };
        let lambda = 0.4;
        let cfg = SolverConfig {
            rel_tol: 1e-10,
            ..Default::default()
        };
        let rep = regularized_lasso(&covs, lambda, &cfg).unwrap();
        let direct = linalg::svt(&sxy, lambda / 2.0).unwrap();
        assert!((rep.theta_hat - direct).norm() < 1e-6);
    }

    #[test]
    fn ols_examples() {
        let mut r = rng(11);
        let sxy = synth::standard_normal_matrix(4, 3, &mut r);
        let covs = SurrogateCovs {
            sxx: Matrix::identity(4, 4),
            sxy: sxy.clone(),
            n: 1,
            config: QuantConfig::none(),
        };
        assert!((ols_baseline(&covs).unwrap().theta_hat - sxy).norm() < 1e-12);

        // Exact recovery from noiseless, unquantized data.
        let theta0 = synth::gen_lowrank_theta(5, 4, 2, &mut r).unwrap();
        let data = synth::gen_lrmr_dataset(&theta0, 40, 0.0, &mut r);
        let covs = surrogate_covariances(&quantize_dataset(&data, QuantConfig::none(), &mut r).unwrap());
        let rep = ols_baseline(&covs).unwrap();
        assert!((rep.theta_hat - &theta0).norm() < 1e-8);

        // Residual self-check on a random SPD system.
        let a = synth::standard_normal_matrix(6, 6, &mut r);
        let covs = SurrogateCovs {
            sxx: &a * a.transpose() + Matrix::identity(6, 6),
            sxy: synth::standard_normal_matrix(6, 4, &mut r),
            n: 1,
            config: QuantConfig::none(),
        };
        let rep = ols_baseline(&covs).unwrap();
        let residual = (&covs.sxx * &rep.theta_hat - &covs.sxy).norm();
        assert!(residual <= 1e-8 * covs.sxy.norm());
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let covs = SurrogateCovs {
            sxx: Matrix::zeros(3, 3),
            sxy: Matrix::zeros(3, 2),
            n: 1,
            config: QuantConfig::none(),
        };
        assert!(matches!(
            ols_baseline(&covs),
            Err(Error::SingularCovariance { .. })
        ));
    }

    #[test]
    fn lambda_schedule_arithmetic() {
        let lam = lambda_schedule(50, 60, 1100, 10f64.sqrt());
        assert!((lam - 1.0).abs() < 1e-12);
        let quadrupled = lambda_schedule(50, 60, 4400, 10f64.sqrt());
        assert!((quadrupled - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prediction_error_examples() {
        let mut r = rng(12);
        let theta0 = synth::gen_lowrank_theta(4, 3, 2, &mut r).unwrap();
        let data = synth::gen_lrmr_dataset(&theta0, 30, 0.0, &mut r);
        assert!(prediction_error(&theta0, &data).unwrap() < 1e-12);
        let zero = Matrix::zeros(4, 3);
        assert!((prediction_error(&zero, &data).unwrap() - 1.0).abs() < 1e-12);

        // Two-path equivalence against a per-column computation.
        let noisy = synth::gen_lrmr_dataset(&theta0, 30, 0.2, &mut r);
        let fast = prediction_error(&theta0, &noisy).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..noisy.n() {
            let resid = noisy.responses.column(k) - theta0.transpose() * noisy.covariates.column(k);
            num += resid.norm_squared();
            den += noisy.responses.column(k).norm_squared();
        }
        assert!((fast - (num / den).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_responses_cannot_be_scored() {
        let data = Dataset::new(Matrix::zeros(2, 3), Matrix::zeros(2, 3)).unwrap();
        assert!(matches!(
            prediction_error(&Matrix::zeros(2, 2), &data),
            Err(Error::ZeroResponseNorm)
        ));
    }
}
