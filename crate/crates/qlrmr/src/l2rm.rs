//! Low-rank linear regression with matrix responses.
//!
//! The model is `Y_k = sum_i x_ki Theta^(i) + E_k` with `p x q` responses and
//! `s` coefficient blocks. Rearranging the blocks as rows of an `s x pq`
//! matrix (column-major vectorization) turns it into the vector-response
//! model, and the blockwise nuclear-norm regularizer becomes separable across
//! rows of the rearranged parameter, so its proximal map is singular value
//! thresholding applied block by block.

use rand::Rng;

use crate::dither::{DitherKind, QuantConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lrmr::{self, SurrogateCovs};
use crate::solver::{self, EstimateReport, SolverConfig};
use crate::Matrix;

/// Covariates (`s x n`) paired with one `p x q` response matrix per sample.
#[derive(Debug, Clone)]
pub struct MatrixResponseDataset {
    pub covariates: Matrix,
    pub responses: Vec<Matrix>,
}

impl MatrixResponseDataset {
    pub fn new(covariates: Matrix, responses: Vec<Matrix>) -> Result<Self> {
        if covariates.ncols() != responses.len() || responses.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "covariates have {} samples, responses {}",
                covariates.ncols(),
                responses.len()
            )));
        }
        let shape = responses[0].shape();
        if responses.iter().any(|y| y.shape() != shape) {
            return Err(Error::DimensionMismatch(
                "response matrices must share one shape".into(),
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

    pub fn s(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn response_shape(&self) -> (usize, usize) {
        self.responses[0].shape()
    }
}

/// Matrix-response dataset after dithered quantization.
#[derive(Debug, Clone)]
pub struct QuantizedMatrixResponses {
    pub xdot: Matrix,
    pub ydot: Vec<Matrix>,
    pub config: QuantConfig,
}

impl QuantizedMatrixResponses {
    pub fn response_shape(&self) -> (usize, usize) {
        self.ydot[0].shape()
    }
}

/// Coefficient blocks `Theta^(1), ..., Theta^(s)`, all `p x q`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCoefficients {
    pub blocks: Vec<Matrix>,
}

impl BlockCoefficients {
    pub fn new(blocks: Vec<Matrix>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::DimensionMismatch(
                "at least one coefficient block is required".into(),
            ));
        }
        let shape = blocks[0].shape();
        if blocks.iter().any(|b| b.shape() != shape) {
            return Err(Error::DimensionMismatch(
                "coefficient blocks must share one shape".into(),
            ));
        }
        Ok(Self { blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.blocks[0].shape()
    }

    /// Frobenius norm of the block concatenation.
    pub fn frobenius_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

/// Stack the column-major vectorizations of the blocks as rows: block `i`
/// becomes row `i` of an `s x pq` matrix. A linear isometry.
pub fn rearrange(blocks: &BlockCoefficients) -> Matrix {
    let (p, q) = blocks.shape();
    let s = blocks.len();
    let mut out = Matrix::zeros(s, p * q);
    for (i, block) in blocks.blocks.iter().enumerate() {
        for (j, &v) in block.as_slice().iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Invert [`rearrange`]: row `i` of an `s x pq` matrix becomes the `p x q`
/// block `i` (column-major). Exact.
pub fn inverse_rearrange(m: &Matrix, p: usize, q: usize) -> Result<BlockCoefficients> {
    if m.ncols() != p * q {
        return Err(Error::DimensionMismatch(format!(
            "{} columns cannot hold {p}x{q} blocks",
            m.ncols()
        )));
    }
    let blocks = (0..m.nrows())
        .map(|i| Matrix::from_fn(p, q, |r, c| m[(i, c * p + r)]))
        .collect();
    BlockCoefficients::new(blocks)
}

/// Quantize covariates (triangular dither, `delta1`) and each response matrix
/// entrywise (uniform dither, `delta2`), in sample order.
pub fn quantize_matrix_responses<R: Rng + ?Sized>(
    data: &MatrixResponseDataset,
    config: QuantConfig,
    rng: &mut R,
) -> Result<QuantizedMatrixResponses> {
    let xdot = lrmr::quantize_matrix(&data.covariates, config.delta1, DitherKind::Triangular, rng)?;
    let ydot = data
        .responses
        .iter()
        .map(|y| lrmr::quantize_matrix(y, config.delta2, DitherKind::Uniform, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedMatrixResponses { xdot, ydot, config })
}

/// Quantize without dithering (the comparison arm of the dither study).
pub fn quantize_matrix_responses_undithered(
    data: &MatrixResponseDataset,
    config: QuantConfig,
) -> Result<QuantizedMatrixResponses> {
    let xdot = lrmr::quantize_matrix_undithered(&data.covariates, config.delta1)?;
    let ydot = data
        .responses
        .iter()
        .map(|y| lrmr::quantize_matrix_undithered(y, config.delta2))
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedMatrixResponses { xdot, ydot, config })
}

/// Surrogate covariances in the rearranged coordinates:
/// `S_xx` is the usual bias-corrected `s x s` covariance and
/// `S_xy = (1/n) sum xdot_k vec(Ydot_k)^T` is `s x pq`.
pub fn surrogate_covariances(q: &QuantizedMatrixResponses) -> SurrogateCovs {
    let s = q.xdot.nrows();
    let n = q.xdot.ncols();
    let (p, qq) = q.response_shape();
    let sxx = lrmr::bias_corrected_sxx(&q.xdot, q.config.delta1);
    let mut sxy = Matrix::zeros(s, p * qq);
    let sxy_data = sxy.as_mut_slice();
    for k in 0..n {
        let xk = q.xdot.column(k);
        let yk = q.ydot[k].as_slice();
        for (j, &y) in yk.iter().enumerate() {
            let base = j * s;
            for i in 0..s {
                sxy_data[base + i] += xk[i] * y;
            }
        }
    }
    sxy /= n as f64;
    SurrogateCovs {
        sxx,
        sxy,
        n,
        config: q.config,
    }
}

/// Apply singular value thresholding independently to each `p x q` block of
/// an `s x pq` rearranged matrix.
pub fn blockwise_svt(m: &Matrix, p: usize, q: usize, tau: f64) -> Result<Matrix> {
    let blocks = inverse_rearrange(m, p, q)?;
    let shrunk = blocks
        .blocks
        .iter()
        .map(|b| linalg::svt(b, tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(rearrange(&BlockCoefficients::new(shrunk)?))
}

/// A fitted matrix-response model: the coefficient blocks plus the solver
/// report (whose `theta_hat` is the rearranged `s x pq` parameter).
#[derive(Debug, Clone)]
pub struct L2rmEstimate {
    pub blocks: BlockCoefficients,
    pub report: EstimateReport,
}

/// Blockwise-nuclear-norm regularized least squares on quantized data:
/// proximal gradient in the rearranged coordinates with the separable
/// blockwise thresholding as proximal map.
pub fn l2rm_regularized(
    qdata: &QuantizedMatrixResponses,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<L2rmEstimate> {
    let (p, q) = qdata.response_shape();
    let covs = surrogate_covariances(qdata);
    l2rm_regularized_from_covs(&covs, p, q, lambda, cfg)
}

/// Same as [`l2rm_regularized`] but starting from precomputed covariances.
pub fn l2rm_regularized_from_covs(
    covs: &SurrogateCovs,
    p: usize,
    q: usize,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<L2rmEstimate> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "penalty level must be positive, got {lambda}"
        )));
    }
    if covs.sxy.ncols() != p * q {
        return Err(Error::DimensionMismatch(format!(
            "covariance has {} response coordinates, blocks need {p}x{q}",
            covs.sxy.ncols()
        )));
    }
    let report = solver::solve_composite(
        &covs.sxx,
        &covs.sxy,
        |point, eta| blockwise_svt(point, p, q, eta * lambda),
        |theta| {
            inverse_rearrange(theta, p, q)
                .map(|b| {
                    lambda
                        * b.blocks
                            .iter()
                            .map(linalg::nuclear_norm)
                            .sum::<f64>()
                })
                .unwrap_or(f64::NAN)
        },
        cfg,
    )?;
    let blocks = inverse_rearrange(&report.theta_hat, p, q)?;
    Ok(L2rmEstimate { blocks, report })
}

/// Penalty level `scale_c * sqrt((p + q) / n)` for matrix responses.
pub fn l2rm_lambda_schedule(p: usize, q: usize, n: usize, scale_c: f64) -> f64 {
    assert!(p > 0 && q > 0 && n > 0 && scale_c > 0.0);
    scale_c * (((p + q) as f64) / n as f64).sqrt()
}

/// Relative prediction error `||Y - prediction||_F / ||Y||_F` over all
/// response matrices, with the parameter in rearranged `s x pq` form.
pub fn l2rm_prediction_error(
    theta_rearranged: &Matrix,
    data: &MatrixResponseDataset,
) -> Result<f64> {
    let (p, q) = data.response_shape();
    if theta_rearranged.nrows() != data.s() || theta_rearranged.ncols() != p * q {
        return Err(Error::DimensionMismatch(format!(
            "parameter is {}x{}, expected {}x{}",
            theta_rearranged.nrows(),
            theta_rearranged.ncols(),
            data.s(),
            p * q
        )));
    }
    let s = data.s();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..data.n() {
        let xk = data.covariates.column(k);
        let yk = data.responses[k].as_slice();
        for (j, &y) in yk.iter().enumerate() {
            let mut pred = 0.0;
            for i in 0..s {
                pred += xk[i] * theta_rearranged[(i, j)];
            }
            num += (y - pred) * (y - pred);
            den += y * y;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroResponseNorm);
    }
    Ok((num / den).sqrt())
}
