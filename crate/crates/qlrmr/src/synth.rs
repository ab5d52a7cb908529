//! Synthetic data generation and CSV ingestion.
//!
//! Gaussian sampling uses the ziggurat method via `rand_distr::StandardNormal`.
//! All generators fill matrices in column-major order from an explicit
//! generator, so a fixed seed pins the output bit-for-bit within this
//! implementation.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::l2rm::{BlockCoefficients, MatrixResponseDataset};
use crate::lrmr::Dataset;
use crate::Matrix;

/// `rows x cols` matrix of i.i.d. standard normal entries, filled column-major.
pub fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// `d1 x n` matrix with i.i.d. symmetric `{-1, +1}` entries.
pub fn gen_bernoulli_covariates<R: Rng + ?Sized>(d1: usize, n: usize, rng: &mut R) -> Matrix {
    let data: Vec<f64> = (0..d1 * n)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Matrix::from_vec(d1, n, data)
}

/// Random rank-`rank` coefficient matrix with unit Frobenius norm, built as a
/// normalized product of two standard Gaussian factors.
pub fn gen_lowrank_theta<R: Rng + ?Sized>(
    d1: usize,
    d2: usize,
    rank: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if rank == 0 || rank > d1.min(d2) {
        return Err(Error::InvalidConfig(format!(
            "rank {rank} incompatible with a {d1}x{d2} matrix"
        )));
    }
    for _attempt in 0..2 {
        let left = standard_normal_matrix(d1, rank, rng);
        let right = standard_normal_matrix(rank, d2, rng);
        let product = left * right;
        let norm = product.norm();
        if norm > 0.0 {
            return Ok(product / norm);
        }
    }
    Err(Error::DegenerateDraw(
        "low-rank factor product had zero norm twice",
    ))
}

/// Responses `Theta0^T X + noise_std * N(0, 1)` for given covariates.
pub fn lrmr_responses<R: Rng + ?Sized>(
    theta0: &Matrix,
    covariates: &Matrix,
    noise_std: f64,
    rng: &mut R,
) -> Matrix {
    assert!(noise_std >= 0.0);
    let mut responses = theta0.transpose() * covariates;
    if noise_std > 0.0 {
        responses += noise_std * standard_normal_matrix(theta0.ncols(), covariates.ncols(), rng);
    }
    responses
}

/// Standard Gaussian covariates with Gaussian noise of the given standard
/// deviation: `x_k ~ N(0, I)`, `y_k = Theta0^T x_k + noise_std * N(0, I)`.
pub fn gen_lrmr_dataset<R: Rng + ?Sized>(
    theta0: &Matrix,
    n: usize,
    noise_std: f64,
    rng: &mut R,
) -> Dataset {
    let covariates = standard_normal_matrix(theta0.nrows(), n, rng);
    let responses = lrmr_responses(theta0, &covariates, noise_std, rng);
    Dataset::new(covariates, responses).expect("generated dataset is consistent")
}

/// Matrix responses `Y_k = sum_i x_ki Theta^(i) + noise_std * N(0, 1)` for
/// given covariates, in sample order.
pub fn l2rm_responses<R: Rng + ?Sized>(
    blocks: &BlockCoefficients,
    covariates: &Matrix,
    noise_std: f64,
    rng: &mut R,
) -> Vec<Matrix> {
    assert!(noise_std >= 0.0);
    assert_eq!(blocks.len(), covariates.nrows());
    let (p, q) = blocks.shape();
    (0..covariates.ncols())
        .map(|k| {
            let mut y = Matrix::zeros(p, q);
            for (i, block) in blocks.blocks.iter().enumerate() {
                y += covariates[(i, k)] * block;
            }
            if noise_std > 0.0 {
                y += noise_std * standard_normal_matrix(p, q, rng);
            }
            y
        })
        .collect()
}

/// Matrix-response dataset with `x_k ~ N(0, I_s)`.
pub fn gen_l2rm_dataset<R: Rng + ?Sized>(
    blocks: &BlockCoefficients,
    n: usize,
    noise_std: f64,
    rng: &mut R,
) -> MatrixResponseDataset {
    let covariates = standard_normal_matrix(blocks.len(), n, rng);
    let responses = l2rm_responses(blocks, &covariates, noise_std, rng);
    MatrixResponseDataset::new(covariates, responses).expect("generated dataset is consistent")
}

/// The fixed 50x60 rank-10 demonstration coefficient matrix: ten copies of
/// `B = [[0.5, 0.5], [0.4, 0.4]]` along the diagonal of the leading 20x20
/// block, zero elsewhere.
pub fn make_demo_theta_lrmr() -> Matrix {
    let mut theta = Matrix::zeros(50, 60);
    for b in 0..10 {
        let o = 2 * b;
        theta[(o, o)] = 0.5;
        theta[(o, o + 1)] = 0.5;
        theta[(o + 1, o)] = 0.4;
        theta[(o + 1, o + 1)] = 0.4;
    }
    theta
}

/// The fixed four-block 50x60 demonstration coefficients: with
/// `C = diag(D, ..., D)` (five 2x2 all-ones `D`'s, so `C` is 10x10 of rank 5),
/// blocks 1 and 2 carry `C/2` and `2C/5` in the leading corner, blocks 3 and
/// 4 carry them in the second diagonal position.
pub fn make_demo_blocks_l2rm() -> BlockCoefficients {
    let mut c = Matrix::zeros(10, 10);
    for d in 0..5 {
        let o = 2 * d;
        for i in 0..2 {
            for j in 0..2 {
                c[(o + i, o + j)] = 1.0;
            }
        }
    }
    let place = |scale: f64, offset: usize| -> Matrix {
        let mut block = Matrix::zeros(50, 60);
        for i in 0..10 {
            for j in 0..10 {
                block[(offset + i, offset + j)] = scale * c[(i, j)];
            }
        }
        block
    };
    BlockCoefficients::new(vec![
        place(0.5, 0),
        place(0.4, 0),
        place(0.5, 10),
        place(0.4, 10),
    ])
    .expect("demo blocks are consistent")
}

fn parse_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a numeric CSV into a matrix. A non-numeric first line is treated as a
/// header and skipped; ragged rows and non-numeric cells are reported with
/// their line number. With `samples_in_rows` the parsed matrix is transposed.
pub fn load_matrix_csv(path: &Path, samples_in_rows: bool) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        let mut parsed = Vec::with_capacity(record.len());
        let mut bad_cell: Option<String> = None;
        for cell in record.iter() {
            match cell.parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    bad_cell = Some(cell.to_string());
                    break;
                }
            }
        }
        if let Some(cell) = bad_cell {
            if idx == 0 {
                // Header row: skip it.
                continue;
            }
            return Err(parse_error(path, line, format!("non-numeric cell '{cell}'")));
        }
        if let Some(w) = width {
            if parsed.len() != w {
                return Err(parse_error(
                    path,
                    line,
                    format!("ragged row: {} cells, expected {w}", parsed.len()),
                ));
            }
        } else {
            width = Some(parsed.len());
        }
        rows.push(parsed);
    }
    let width = width.ok_or_else(|| parse_error(path, 1, "no numeric rows"))?;
    if width == 0 {
        return Err(parse_error(path, 1, "rows have no cells"));
    }
    let mut m = Matrix::zeros(rows.len(), width);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(if samples_in_rows { m.transpose() } else { m })
}

/// Write a matrix as a plain numeric CSV (no header), one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

/// Load covariates and responses from two CSVs holding one sample per column
/// (or per row, with the flag). Sample counts must agree.
pub fn load_csv_dataset(path_x: &Path, path_y: &Path, samples_in_rows: bool) -> Result<Dataset> {
    let x = load_matrix_csv(path_x, samples_in_rows)?;
    let y = load_matrix_csv(path_y, samples_in_rows)?;
    if x.ncols() != y.ncols() {
        return Err(parse_error(
            path_y,
            1,
            format!(
                "sample-count mismatch: covariates have {}, responses {}",
                x.ncols(),
                y.ncols()
            ),
        ));
    }
    Dataset::new(x, y)
}

/// Uniformly random column partition into train (`n - n_test`) and test
/// (`n_test`) subsets; column order inside each side is preserved.
pub fn train_test_split<R: Rng + ?Sized>(
    data: &Dataset,
    n_test: usize,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidConfig(format!(
            "test size {n_test} must be in 1..{n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut test_idx = idx[..n_test].to_vec();
    let mut train_idx = idx[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let take = |cols: &[usize]| -> Dataset {
        let x = Matrix::from_fn(data.d1(), cols.len(), |r, j| data.covariates[(r, cols[j])]);
        let y = Matrix::from_fn(data.d2(), cols.len(), |r, j| data.responses[(r, cols[j])]);
        Dataset::new(x, y).expect("subset is consistent")
    };
    Ok((take(&train_idx), take(&test_idx)))
}
