#![allow(dead_code)]
//! Independent numeric oracles for verifying the spectral kernels.
//!
//! Nothing here shares code with the library: the SVD is a hand-rolled
//! one-sided Jacobi (the library delegates to Golub-Kahan bidiagonalization),
//! the scalar shrinkage is found by golden-section search instead of the
//! closed form, and the simplex-style projection of the singular values uses
//! bisection on the dual variable instead of sort-and-threshold.

use qlrmr::Matrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct OracleSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// One-sided Jacobi SVD: orthogonalize the columns of `M` by plane rotations.
pub fn jacobi_svd(m: &Matrix) -> OracleSvd {
    if m.nrows() < m.ncols() {
        let t = jacobi_svd(&m.transpose());
        return OracleSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let mut a = m.clone();
    let n = a.ncols();
    let rows = a.nrows();
    let mut v = Matrix::identity(n, n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..rows {
                    let x = a[(r, i)];
                    let y = a[(r, j)];
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= 1e-14 * (alpha * beta).sqrt() + 1e-300 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let x = a[(r, i)];
                    let y = a[(r, j)];
                    a[(r, i)] = c * x - s * y;
                    a[(r, j)] = s * x + c * y;
                }
                for r in 0..n {
                    let x = v[(r, i)];
                    let y = v[(r, j)];
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut u = Matrix::zeros(rows, n);
    for (j, &sv) in s.iter().enumerate() {
        if sv > 1e-300 {
            let col = a.column(j) / sv;
            u.set_column(j, &col);
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let mut up = Matrix::zeros(rows, n);
    let mut vp = Matrix::zeros(n, n);
    let mut sp = vec![0.0; n];
    for (new, &old) in idx.iter().enumerate() {
        up.set_column(new, &u.column(old));
        vp.set_column(new, &v.column(old));
        sp[new] = s[old];
    }
    s = sp;
    OracleSvd { u: up, s, v: vp }
}

fn reassemble(u: &Matrix, s: &[f64], v: &Matrix) -> Matrix {
    let mut scaled = u.clone();
    for (j, &sv) in s.iter().enumerate() {
        scaled.column_mut(j).scale_mut(sv);
    }
    scaled * v.transpose()
}

/// Minimize `0.5 (x - sigma)^2 + tau x` over `x >= 0` by golden-section
/// search (never uses the soft-threshold formula).
fn scalar_shrink(sigma: f64, tau: f64) -> f64 {
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let objective = |x: f64| 0.5 * (x - sigma).powi(2) + tau * x;
    let mut lo = 0.0;
    let mut hi = sigma.abs() + tau + 1.0;
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let mut g1 = objective(x1);
    let mut g2 = objective(x2);
    for _ in 0..200 {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - golden * (hi - lo);
            g1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + golden * (hi - lo);
            g2 = objective(x2);
        }
    }
    0.5 * (lo + hi)
}

/// High-precision oracle for the nuclear-norm proximal map.
pub fn svt_oracle(m: &Matrix, tau: f64) -> Matrix {
    let f = jacobi_svd(m);
    let shrunk: Vec<f64> = f.s.iter().map(|&sigma| scalar_shrink(sigma, tau)).collect();
    reassemble(&f.u, &shrunk, &f.v)
}

/// High-precision oracle for the projection onto the nuclear-norm ball:
/// bisection on the dual shift until the shrunk singular values sum to the
/// radius.
pub fn project_nuclear_ball_oracle(m: &Matrix, radius: f64) -> Matrix {
    let f = jacobi_svd(m);
    let total: f64 = f.s.iter().sum();
    if total <= radius {
        return m.clone();
    }
    let mut lo = 0.0f64;
    let mut hi = f.s.iter().cloned().fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let sum: f64 = f.s.iter().map(|&x| (x - mid).max(0.0)).sum();
        if sum > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    let shrunk: Vec<f64> = f.s.iter().map(|&x| (x - theta).max(0.0)).collect();
    reassemble(&f.u, &shrunk, &f.v)
}

pub fn randn_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}
