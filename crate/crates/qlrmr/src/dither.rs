//! Dithered uniform quantization.
//!
//! The scalar quantizer maps `a` to the midpoint of its width-`delta` cell,
//! `delta * (floor(a / delta) + 1/2)`, so outputs live on the grid
//! `delta * (Z + 1/2)`. Adding independent random dither before quantizing
//! whitens the result: under a uniform or triangular dither the quantization
//! error is uniform on `[-delta/2, delta/2]` and independent of the input,
//! and the triangular dither additionally makes the quantization noise's
//! second moment signal-independent, equal to `delta^2 / 4`.
//!
//! Conventions: for input `x`, dither `t` and output `q = Q(x + t)`,
//! the *error* is `w = q - (x + t)` and the *noise* is `xi = q - x`,
//! so `xi = t + w` holds entrywise.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dither distribution added before uniform quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DitherKind {
    /// `U[-delta/2, delta/2]`; whitens the quantization error.
    Uniform,
    /// Sum of two independent `U[-delta/2, delta/2]`; additionally gives the
    /// quantization noise a signal-independent second moment `delta^2/4`.
    Triangular,
}

impl std::fmt::Display for DitherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DitherKind::Uniform => write!(f, "uniform"),
            DitherKind::Triangular => write!(f, "triangular"),
        }
    }
}

/// Quantization levels for the two sides of a regression dataset.
///
/// `delta1` applies to covariates (triangular dither), `delta2` to responses
/// (uniform dither). A level of `0` means that side is passed through
/// unquantized with zero dither.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub delta1: f64,
    pub delta2: f64,
}

impl QuantConfig {
    pub fn new(delta1: f64, delta2: f64) -> Result<Self> {
        for d in [delta1, delta2] {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::InvalidQuantLevel(d));
            }
        }
        Ok(Self { delta1, delta2 })
    }

    /// No quantization on either side.
    pub fn none() -> Self {
        Self {
            delta1: 0.0,
            delta2: 0.0,
        }
    }
}

/// Outcome of quantizing one array with dither, retaining the diagnostics
/// needed to verify the whitening properties.
#[derive(Debug, Clone)]
pub struct QuantRecord {
    /// Quantized values; on the grid `delta * (Z + 1/2)` when `delta > 0`.
    pub quantized: Vec<f64>,
    /// The dither realization added before quantization.
    pub dither: Vec<f64>,
    /// Quantization error `w = quantized - (input + dither)`, in `[-delta/2, delta/2]`.
    pub error: Vec<f64>,
    /// Quantization noise `xi = quantized - input`; equals `dither + error`.
    pub noise: Vec<f64>,
    /// Quantization level used.
    pub delta: f64,
    /// Dither distribution used (irrelevant when `delta == 0`).
    pub kind: DitherKind,
}

impl QuantRecord {
    pub fn len(&self) -> usize {
        self.quantized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quantized.is_empty()
    }
}

/// Summary statistics of a [`QuantRecord`] for checking the dither theory.
#[derive(Debug, Clone, Copy)]
pub struct NoiseMomentReport {
    pub mean_noise: f64,
    pub var_noise: f64,
    pub mean_error: f64,
    /// Kolmogorov-Smirnov statistic of the error sample against
    /// `U[-delta/2, delta/2]` (0 when `delta == 0`).
    pub ks_stat_error_vs_uniform: f64,
}

/// Quantize a scalar to the midpoint of its width-`delta` cell.
///
/// `delta == 0` is the pass-through convention: the input is returned
/// unchanged. Cell boundaries use mathematical floor; under dithering they
/// have measure zero, so no tie-breaking is randomized. The quantizer has
/// unbounded range; outputs sit on the grid to within `1e-9 * delta` as long
/// as `|a / delta|` stays below about `4e6` (f64 resolution of the cell
/// index).
pub fn uniform_quantize(a: f64, delta: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFiniteSample);
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidQuantLevel(delta));
    }
    if delta == 0.0 {
        return Ok(a);
    }
    Ok(delta * ((a / delta).floor() + 0.5))
}

/// Draw `count` i.i.d. samples from `U[-delta/2, delta/2]`.
///
/// Callers must pass `delta > 0`. Reproducible under a fixed generator state.
pub fn draw_uniform_dither<R: Rng + ?Sized>(count: usize, delta: f64, rng: &mut R) -> Vec<f64> {
    assert!(delta > 0.0 && delta.is_finite(), "dither level must be positive");
    let dist = Uniform::new_inclusive(-delta / 2.0, delta / 2.0);
    (0..count).map(|_| dist.sample(rng)).collect()
}

/// Draw `count` i.i.d. triangular dither samples, each the sum of two
/// independent `U[-delta/2, delta/2]` draws (support `[-delta, delta]`).
pub fn draw_triangular_dither<R: Rng + ?Sized>(count: usize, delta: f64, rng: &mut R) -> Vec<f64> {
    assert!(delta > 0.0 && delta.is_finite(), "dither level must be positive");
    let dist = Uniform::new_inclusive(-delta / 2.0, delta / 2.0);
    (0..count)
        .map(|_| dist.sample(rng) + dist.sample(rng))
        .collect()
}

/// Quantize an array with the given dither, retaining error and noise.
///
/// `delta == 0` passes the input through with zero dither, error and noise.
pub fn quantize_with_dither<R: Rng + ?Sized>(
    input: &[f64],
    delta: f64,
    kind: DitherKind,
    rng: &mut R,
) -> Result<QuantRecord> {
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample);
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::InvalidQuantLevel(delta));
    }
    let n = input.len();
    if delta == 0.0 {
        return Ok(QuantRecord {
            quantized: input.to_vec(),
            dither: vec![0.0; n],
            error: vec![0.0; n],
            noise: vec![0.0; n],
            delta,
            kind,
        });
    }
    let dither = match kind {
        DitherKind::Uniform => draw_uniform_dither(n, delta, rng),
        DitherKind::Triangular => draw_triangular_dither(n, delta, rng),
    };
    let mut quantized = Vec::with_capacity(n);
    let mut error = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for (&x, &t) in input.iter().zip(&dither) {
        let v = x + t;
        let q = delta * ((v / delta).floor() + 0.5);
        quantized.push(q);
        error.push(q - v);
        noise.push(q - x);
    }
    Ok(QuantRecord {
        quantized,
        dither,
        error,
        noise,
        delta,
        kind,
    })
}

/// Compute moment diagnostics of a quantization record.
pub fn noise_moment_report(record: &QuantRecord) -> Result<NoiseMomentReport> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let mean_noise = mean(&record.noise);
    let var_noise = record
        .noise
        .iter()
        .map(|x| (x - mean_noise).powi(2))
        .sum::<f64>()
        / record.noise.len() as f64;
    let mean_error = mean(&record.error);
    let ks = if record.delta == 0.0 {
        0.0
    } else {
        ks_statistic_uniform(&record.error, -record.delta / 2.0, record.delta / 2.0)
    };
    Ok(NoiseMomentReport {
        mean_noise,
        var_noise,
        mean_error,
        ks_stat_error_vs_uniform: ks,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One-sample Kolmogorov-Smirnov statistic against `U[lo, hi]`.
pub fn ks_statistic_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let width = hi - lo;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let cdf = ((x - lo) / width).clamp(0.0, 1.0);
        let below = i as f64 / n;
        let above = (i + 1) as f64 / n;
        d = d.max((cdf - below).abs()).max((above - cdf).abs());
    }
    d
}
