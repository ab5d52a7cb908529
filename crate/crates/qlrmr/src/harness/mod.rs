//! Experiment orchestration: Monte Carlo sweeps over sample sizes and
//! quantization levels, paired comparison studies, error metrics and result
//! persistence.
//!
//! Every trial derives its generator seeds from the base seed and a stable
//! hash of the grid cell and trial index, so sweeps are embarrassingly
//! parallel and reproducible: the same configuration always produces the
//! same records.

pub mod persist;
pub mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::dither::QuantConfig;
use crate::error::{Error, Result};
use crate::l2rm::{self, BlockCoefficients};
use crate::linalg;
use crate::lrmr::{self, Dataset};
use crate::solver::SolverConfig;
use crate::synth;
use crate::Matrix;

/// Estimator driven by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LrmrConstrained,
    LrmrRegularized,
    Ols,
    L2rm,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::LrmrConstrained => "lrmr_constrained",
            ModelKind::LrmrRegularized => "lrmr_regularized",
            ModelKind::Ols => "ols",
            ModelKind::L2rm => "l2rm",
        };
        write!(f, "{s}")
    }
}

/// Noise scale given either as a standard deviation or as a variance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Std { std: f64 },
    Var { var: f64 },
}

impl NoiseSpec {
    /// Resolve to a standard deviation.
    pub fn std(&self) -> Result<f64> {
        let std = match *self {
            NoiseSpec::Std { std } => std,
            NoiseSpec::Var { var } => {
                if var < 0.0 {
                    return Err(Error::InvalidConfig(format!("negative noise variance {var}")));
                }
                var.sqrt()
            }
        };
        if !std.is_finite() || std < 0.0 {
            return Err(Error::InvalidConfig(format!("bad noise level {std}")));
        }
        Ok(std)
    }
}

/// Covariate distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// i.i.d. symmetric {-1, +1} entries.
    Bernoulli,
}

fn default_gaussian() -> CovariateKind {
    CovariateKind::Gaussian
}

fn default_bernoulli() -> CovariateKind {
    CovariateKind::Bernoulli
}

/// Data-generation recipe for a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GenModel {
    /// Random unit-Frobenius rank-`rank` coefficient matrix, Gaussian noise.
    GaussianLowrank {
        d1: usize,
        d2: usize,
        rank: usize,
        noise: NoiseSpec,
        #[serde(default = "default_gaussian")]
        covariates: CovariateKind,
    },
    /// The fixed 50x60 rank-10 block-diagonal demonstration matrix.
    DemoLowrank {
        noise: NoiseSpec,
        #[serde(default = "default_bernoulli")]
        covariates: CovariateKind,
    },
    /// Matrix responses with `s` random unit-Frobenius blocks of rank
    /// `block_rank`.
    L2rmLowrank {
        s: usize,
        p: usize,
        q: usize,
        block_rank: usize,
        noise: NoiseSpec,
        #[serde(default = "default_gaussian")]
        covariates: CovariateKind,
    },
    /// The fixed four-block 50x60 demonstration coefficients.
    L2rmDemo {
        noise: NoiseSpec,
        #[serde(default = "default_gaussian")]
        covariates: CovariateKind,
    },
    /// Real data loaded from CSV (one sample per column by default).
    Csv {
        x_path: String,
        y_path: String,
        #[serde(default)]
        samples_in_rows: bool,
    },
}

impl GenModel {
    fn is_l2rm(&self) -> bool {
        matches!(self, GenModel::L2rmLowrank { .. } | GenModel::L2rmDemo { .. })
    }

    fn is_csv(&self) -> bool {
        matches!(self, GenModel::Csv { .. })
    }

    /// Coefficient dimensions `(d1, d2, r)` reported in result records.
    /// Matrix-response recipes report the concatenated `p x (s q)` shape and
    /// the total rank budget.
    fn dims(&self) -> (usize, usize, usize) {
        match self {
            GenModel::GaussianLowrank { d1, d2, rank, .. } => (*d1, *d2, *rank),
            GenModel::DemoLowrank { .. } => (50, 60, 10),
            GenModel::L2rmLowrank {
                s, p, q, block_rank, ..
            } => (*p, s * q, s * block_rank),
            GenModel::L2rmDemo { .. } => (50, 4 * 60, 20),
            GenModel::Csv { .. } => (0, 0, 0),
        }
    }

    fn noise_std(&self) -> Result<f64> {
        match self {
            GenModel::GaussianLowrank { noise, .. }
            | GenModel::DemoLowrank { noise, .. }
            | GenModel::L2rmLowrank { noise, .. }
            | GenModel::L2rmDemo { noise, .. } => noise.std(),
            GenModel::Csv { .. } => Ok(0.0),
        }
    }
}

fn default_schema_version() -> u32 {
    1
}

fn default_delta_grid() -> Vec<f64> {
    vec![0.0]
}

fn default_true() -> bool {
    true
}

fn default_lambda_scale() -> f64 {
    1.0
}

/// Full description of one sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub model: ModelKind,
    pub gen: GenModel,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_delta_grid")]
    pub delta1_grid: Vec<f64>,
    #[serde(default = "default_delta_grid")]
    pub delta2_grid: Vec<f64>,
    #[serde(default = "default_true")]
    pub dither_enabled: bool,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Scale factor for the penalty schedule `scale * sqrt((d1+d2)/n)`.
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    /// Nuclear-ball radius for the constrained estimator; defaults to the
    /// nuclear norm of the per-trial true coefficients.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Reuse one true coefficient matrix across all cells and trials.
    #[serde(default)]
    pub fixed_truth: bool,
    /// Real-data studies: hold out this many samples per trial and score
    /// prediction on them.
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Write `runtime_ms` as zero so result files are byte-reproducible.
    #[serde(default)]
    pub deterministic_output: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidConfig(msg));
        if self.schema_version != 1 {
            return err(format!("unsupported schema_version {}", self.schema_version));
        }
        if self.trials == 0 {
            return err("trials must be at least 1".into());
        }
        if !self.gen.is_csv() {
            if self.n_grid.is_empty() {
                return err("n_grid must not be empty".into());
            }
            if self.n_grid.contains(&0) {
                return err("sample sizes must be positive".into());
            }
        }
        for (name, grid) in [("delta1_grid", &self.delta1_grid), ("delta2_grid", &self.delta2_grid)] {
            if grid.is_empty() {
                return err(format!("{name} must not be empty"));
            }
            if grid.iter().any(|&d| !d.is_finite() || d < 0.0) {
                return err(format!("{name} entries must be finite and nonnegative"));
            }
        }
        if !self.lambda_scale.is_finite() || self.lambda_scale <= 0.0 {
            return err("lambda_scale must be positive".into());
        }
        if let Some(r) = self.radius {
            if !r.is_finite() || r <= 0.0 {
                return err("radius must be positive".into());
            }
        }
        self.solver.validate()?;
        self.gen.noise_std()?;
        match &self.gen {
            GenModel::GaussianLowrank { d1, d2, rank, .. }
                if *d1 == 0 || *d2 == 0 || *rank == 0 || *rank > (*d1).min(*d2) =>
            {
                return err(format!("rank {rank} incompatible with {d1}x{d2}"));
            }
            GenModel::L2rmLowrank {
                s, p, q, block_rank, ..
            } if *s == 0 || *p == 0 || *q == 0 || *block_rank == 0 || *block_rank > (*p).min(*q) => {
                return err(format!("block rank {block_rank} incompatible with {p}x{q}"));
            }
            _ => {}
        }
        let l2rm_model = self.model == ModelKind::L2rm;
        if l2rm_model != self.gen.is_l2rm() {
            return err("model and data generator disagree about matrix responses".into());
        }
        Ok(())
    }
}

/// One trial's outcome, in the exact column order of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub model: String,
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    pub r: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub trial: usize,
    pub seed: u64,
    pub frob_error: f64,
    pub rel_error: f64,
    pub pred_error: f64,
    pub iterations: usize,
    pub runtime_ms: f64,
    pub converged: bool,
}

/// Mean and sample standard deviation of one metric over a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub mean: f64,
    pub std: f64,
}

/// Per-cell aggregate over trials (failed trials are excluded from moments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub model: String,
    pub n: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub trials: usize,
    pub failed: usize,
    pub frob_error: CellStat,
    pub rel_error: CellStat,
    pub pred_error: CellStat,
    pub mean_iterations: f64,
}

/// Records plus per-cell summaries of one sweep (or one arm of a paired
/// study). Records are sorted by `(n, delta1, delta2, trial, model)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<CellSummary>,
}

impl ExperimentResult {
    pub fn from_records(mut records: Vec<TrialRecord>) -> Self {
        records.sort_by(|a, b| {
            a.n.cmp(&b.n)
                .then(a.delta1.total_cmp(&b.delta1))
                .then(a.delta2.total_cmp(&b.delta2))
                .then(a.trial.cmp(&b.trial))
                .then(a.model.cmp(&b.model))
        });
        let summary = summarize(&records);
        Self { records, summary }
    }

    /// Concatenate the arms of a paired study into one result.
    pub fn merged(parts: &[&ExperimentResult]) -> Self {
        let records = parts
            .iter()
            .flat_map(|r| r.records.iter().cloned())
            .collect();
        Self::from_records(records)
    }

    /// Mean of a metric per `n`, for one `(delta1, delta2)` curve, in
    /// ascending `n` order. Suitable input for a log-log slope fit. Call on
    /// single-model results; merged results interleave models per cell.
    pub fn curve(&self, delta1: f64, delta2: f64, metric: Metric) -> Vec<(f64, f64)> {
        self.summary
            .iter()
            .filter(|c| c.delta1 == delta1 && c.delta2 == delta2)
            .map(|c| {
                let stat = match metric {
                    Metric::Frob => c.frob_error,
                    Metric::Rel => c.rel_error,
                    Metric::Pred => c.pred_error,
                };
                (c.n as f64, stat.mean)
            })
            .collect()
    }
}

/// Which error metric to read off a summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Frob,
    Rel,
    Pred,
}

fn summarize(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(&str, usize, f64, f64)> = Vec::new();
    let mut groups: std::collections::HashMap<(&str, usize, u64, u64), Vec<&TrialRecord>> =
        std::collections::HashMap::new();
    for r in records {
        let key = (r.model.as_str(), r.n, r.delta1.to_bits(), r.delta2.to_bits());
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            keys.push((r.model.as_str(), r.n, r.delta1, r.delta2));
        }
        entry.push(r);
    }
    keys.sort_by(|a, b| {
        a.0.cmp(b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
    });
    keys.iter()
        .map(|&(model, n, delta1, delta2)| {
            let group = &groups[&(model, n, delta1.to_bits(), delta2.to_bits())];
            let ok: Vec<&TrialRecord> = group
                .iter()
                .copied()
                .filter(|r| !r.frob_error.is_nan())
                .collect();
            let stat = |f: fn(&TrialRecord) -> f64| -> CellStat {
                if ok.is_empty() {
                    return CellStat {
                        mean: f64::NAN,
                        std: f64::NAN,
                    };
                }
                let vals: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let std = if vals.len() > 1 {
                    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                        / (vals.len() - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                CellStat { mean, std }
            };
            CellSummary {
                model: model.to_string(),
                n,
                delta1,
                delta2,
                trials: group.len(),
                failed: group.len() - ok.len(),
                frob_error: stat(|r| r.frob_error),
                rel_error: stat(|r| r.rel_error),
                pred_error: stat(|r| r.pred_error),
                mean_iterations: group.iter().map(|r| r.iterations as f64).sum::<f64>()
                    / group.len() as f64,
            }
        })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable combination of the base seed with context words (stream tag, grid
/// cell, trial) via chained splitmix64 steps.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ 0xD1B5_4A32_D192_ED03);
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

const STREAM_TRUTH: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_DITHER: u64 = 3;
const STREAM_SPLIT: u64 = 4;

#[derive(Debug, Clone, Copy)]
struct Job {
    n: usize,
    delta1: f64,
    delta2: f64,
    trial: usize,
}

impl Job {
    fn parts(&self, stream: u64) -> [u64; 5] {
        [
            stream,
            self.n as u64,
            self.delta1.to_bits(),
            self.delta2.to_bits(),
            self.trial as u64,
        ]
    }
}

fn enumerate_jobs(cfg: &ExperimentConfig, n_grid: &[usize]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &n in n_grid {
        for &delta1 in &cfg.delta1_grid {
            for &delta2 in &cfg.delta2_grid {
                for trial in 0..cfg.trials {
                    jobs.push(Job {
                        n,
                        delta1,
                        delta2,
                        trial,
                    });
                }
            }
        }
    }
    jobs
}

fn rng_for(cfg: &ExperimentConfig, job: &Job, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(cfg.base_seed, &job.parts(stream)))
}

fn truth_rng(cfg: &ExperimentConfig, job: &Job) -> ChaCha8Rng {
    let seed = if cfg.fixed_truth {
        derive_seed(cfg.base_seed, &[STREAM_TRUTH])
    } else {
        derive_seed(cfg.base_seed, &job.parts(STREAM_TRUTH))
    };
    ChaCha8Rng::seed_from_u64(seed)
}

fn gen_covariates(
    kind: CovariateKind,
    d: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    match kind {
        CovariateKind::Gaussian => synth::standard_normal_matrix(d, n, rng),
        CovariateKind::Bernoulli => synth::gen_bernoulli_covariates(d, n, rng),
    }
}

fn failed_record(model: String, dims: (usize, usize, usize), job: &Job, seed: u64) -> TrialRecord {
    TrialRecord {
        model,
        n: job.n,
        d1: dims.0,
        d2: dims.1,
        r: dims.2,
        delta1: job.delta1,
        delta2: job.delta2,
        trial: job.trial,
        seed,
        frob_error: f64::NAN,
        rel_error: f64::NAN,
        pred_error: f64::NAN,
        iterations: 0,
        runtime_ms: 0.0,
        converged: false,
    }
}

struct FitOutcome {
    frob: f64,
    rel: f64,
    pred: f64,
    iterations: usize,
    converged: bool,
    runtime_ms: f64,
}

fn record_from(
    cfg: &ExperimentConfig,
    model: String,
    dims: (usize, usize, usize),
    job: &Job,
    seed: u64,
    fit: FitOutcome,
) -> TrialRecord {
    TrialRecord {
        model,
        n: job.n,
        d1: dims.0,
        d2: dims.1,
        r: dims.2,
        delta1: job.delta1,
        delta2: job.delta2,
        trial: job.trial,
        seed,
        frob_error: fit.frob,
        rel_error: fit.rel,
        pred_error: fit.pred,
        iterations: fit.iterations,
        runtime_ms: if cfg.deterministic_output {
            0.0
        } else {
            fit.runtime_ms
        },
        converged: fit.converged,
    }
}

/// True coefficients plus generated raw data for one vector-response trial.
struct LrmrInstance {
    theta0: Matrix,
    data: Dataset,
}

fn build_lrmr_instance(cfg: &ExperimentConfig, job: &Job) -> Result<LrmrInstance> {
    let mut t_rng = truth_rng(cfg, job);
    let mut d_rng = rng_for(cfg, job, STREAM_DATA);
    let noise_std = cfg.gen.noise_std()?;
    let (theta0, covariate_kind) = match &cfg.gen {
        GenModel::GaussianLowrank {
            d1,
            d2,
            rank,
            covariates,
            ..
        } => (
            synth::gen_lowrank_theta(*d1, *d2, *rank, &mut t_rng)?,
            *covariates,
        ),
        GenModel::DemoLowrank { covariates, .. } => (synth::make_demo_theta_lrmr(), *covariates),
        _ => {
            return Err(Error::InvalidConfig(
                "vector-response trial on a non-LRMR generator".into(),
            ))
        }
    };
    let x = gen_covariates(covariate_kind, theta0.nrows(), job.n, &mut d_rng);
    let y = synth::lrmr_responses(&theta0, &x, noise_std, &mut d_rng);
    Ok(LrmrInstance {
        theta0,
        data: Dataset::new(x, y)?,
    })
}

fn fit_lrmr(
    cfg: &ExperimentConfig,
    model: ModelKind,
    instance: &LrmrInstance,
    qdata: &lrmr::QuantizedDataset,
    job: &Job,
) -> Result<FitOutcome> {
    let start = Instant::now();
    let covs = lrmr::surrogate_covariances(qdata);
    let report = match model {
        ModelKind::LrmrRegularized => {
            let lambda = lrmr::lambda_schedule(
                instance.theta0.nrows(),
                instance.theta0.ncols(),
                job.n,
                cfg.lambda_scale,
            );
            lrmr::regularized_lasso(&covs, lambda, &cfg.solver)?
        }
        ModelKind::LrmrConstrained => {
            let radius = cfg
                .radius
                .unwrap_or_else(|| linalg::nuclear_norm(&instance.theta0));
            lrmr::constrained_lasso(&covs, radius, &cfg.solver)?
        }
        ModelKind::Ols => lrmr::ols_baseline(&covs)?,
        ModelKind::L2rm => {
            return Err(Error::InvalidConfig(
                "matrix-response model on vector-response data".into(),
            ))
        }
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let frob = (&report.theta_hat - &instance.theta0).norm();
    Ok(FitOutcome {
        frob,
        rel: frob / instance.theta0.norm(),
        pred: lrmr::prediction_error(&report.theta_hat, &instance.data).unwrap_or(f64::NAN),
        iterations: report.iterations,
        converged: report.converged,
        runtime_ms,
    })
}

fn lrmr_single(cfg: &ExperimentConfig, model: ModelKind, job: &Job, dithered: bool) -> TrialRecord {
    let label = if dithered {
        model.to_string()
    } else {
        format!("{model}_undithered")
    };
    let dims = cfg.gen.dims();
    let seed = derive_seed(cfg.base_seed, &job.parts(STREAM_DATA));
    let outcome = (|| -> Result<FitOutcome> {
        let instance = build_lrmr_instance(cfg, job)?;
        let qcfg = QuantConfig::new(job.delta1, job.delta2)?;
        let qdata = if dithered {
            let mut q_rng = rng_for(cfg, job, STREAM_DITHER);
            lrmr::quantize_dataset(&instance.data, qcfg, &mut q_rng)?
        } else {
            lrmr::quantize_dataset_undithered(&instance.data, qcfg)?
        };
        fit_lrmr(cfg, model, &instance, &qdata, job)
    })();
    match outcome {
        Ok(fit) => record_from(cfg, label, dims, job, seed, fit),
        Err(_) => failed_record(label, dims, job, seed),
    }
}

struct L2rmInstance {
    blocks: BlockCoefficients,
    theta0_rearranged: Matrix,
    data: l2rm::MatrixResponseDataset,
}

fn build_l2rm_instance(cfg: &ExperimentConfig, job: &Job) -> Result<L2rmInstance> {
    let mut t_rng = truth_rng(cfg, job);
    let mut d_rng = rng_for(cfg, job, STREAM_DATA);
    let noise_std = cfg.gen.noise_std()?;
    let (blocks, covariate_kind) = match &cfg.gen {
        GenModel::L2rmLowrank {
            s,
            p,
            q,
            block_rank,
            covariates,
            ..
        } => {
            let blocks = (0..*s)
                .map(|_| synth::gen_lowrank_theta(*p, *q, *block_rank, &mut t_rng))
                .collect::<Result<Vec<_>>>()?;
            (BlockCoefficients::new(blocks)?, *covariates)
        }
        GenModel::L2rmDemo { covariates, .. } => (synth::make_demo_blocks_l2rm(), *covariates),
        _ => {
            return Err(Error::InvalidConfig(
                "matrix-response trial on a non-L2RM generator".into(),
            ))
        }
    };
    let x = gen_covariates(covariate_kind, blocks.len(), job.n, &mut d_rng);
    let responses = synth::l2rm_responses(&blocks, &x, noise_std, &mut d_rng);
    let theta0_rearranged = l2rm::rearrange(&blocks);
    Ok(L2rmInstance {
        blocks,
        theta0_rearranged,
        data: l2rm::MatrixResponseDataset::new(x, responses)?,
    })
}

fn l2rm_single(cfg: &ExperimentConfig, job: &Job, dithered: bool) -> TrialRecord {
    let label = if dithered {
        ModelKind::L2rm.to_string()
    } else {
        format!("{}_undithered", ModelKind::L2rm)
    };
    let dims = cfg.gen.dims();
    let seed = derive_seed(cfg.base_seed, &job.parts(STREAM_DATA));
    let outcome = (|| -> Result<FitOutcome> {
        let instance = build_l2rm_instance(cfg, job)?;
        let (p, q) = instance.blocks.shape();
        let qcfg = QuantConfig::new(job.delta1, job.delta2)?;
        let qdata = if dithered {
            let mut q_rng = rng_for(cfg, job, STREAM_DITHER);
            l2rm::quantize_matrix_responses(&instance.data, qcfg, &mut q_rng)?
        } else {
            l2rm::quantize_matrix_responses_undithered(&instance.data, qcfg)?
        };
        let start = Instant::now();
        let lambda = l2rm::l2rm_lambda_schedule(p, q, job.n, cfg.lambda_scale);
        let est = l2rm::l2rm_regularized(&qdata, lambda, &cfg.solver)?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        let frob = (&est.report.theta_hat - &instance.theta0_rearranged).norm();
        Ok(FitOutcome {
            frob,
            rel: frob / instance.theta0_rearranged.norm(),
            pred: l2rm::l2rm_prediction_error(&est.report.theta_hat, &instance.data)
                .unwrap_or(f64::NAN),
            iterations: est.report.iterations,
            converged: est.report.converged,
            runtime_ms,
        })
    })();
    match outcome {
        Ok(fit) => record_from(cfg, label, dims, job, seed, fit),
        Err(_) => failed_record(label, dims, job, seed),
    }
}

fn run_single(cfg: &ExperimentConfig, job: &Job, dithered: bool) -> TrialRecord {
    match cfg.model {
        ModelKind::L2rm => l2rm_single(cfg, job, dithered),
        model => lrmr_single(cfg, model, job, dithered),
    }
}

/// Monte Carlo sweep over the `(n, delta1, delta2)` grid: regenerate data,
/// quantize, estimate and record errors for every cell and trial. Solver
/// failures are recorded per trial with `converged = false` instead of
/// aborting the sweep.
pub fn run_error_curve(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.gen.is_csv() {
        return Err(Error::InvalidConfig(
            "CSV-backed data runs through run_real_data_study".into(),
        ));
    }
    let jobs = enumerate_jobs(cfg, &cfg.n_grid);
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|job| run_single(cfg, job, cfg.dither_enabled))
        .collect();
    Ok(ExperimentResult::from_records(records))
}

/// Both arms of the dithering study: the same data quantized with dither and
/// with plain (dither-free) uniform quantization.
pub struct DitherComparison {
    pub dithered: ExperimentResult,
    pub undithered: ExperimentResult,
}

/// Run the dither-on/dither-off comparison on identical per-trial data.
pub fn run_dither_comparison(cfg: &ExperimentConfig) -> Result<DitherComparison> {
    cfg.validate()?;
    if cfg.gen.is_csv() {
        return Err(Error::InvalidConfig(
            "CSV-backed data runs through run_real_data_study".into(),
        ));
    }
    let jobs = enumerate_jobs(cfg, &cfg.n_grid);
    let pairs: Vec<(TrialRecord, TrialRecord)> = jobs
        .par_iter()
        .map(|job| (run_single(cfg, job, true), run_single(cfg, job, false)))
        .collect();
    let (with, without): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(DitherComparison {
        dithered: ExperimentResult::from_records(with),
        undithered: ExperimentResult::from_records(without),
    })
}

/// Paired nuclear-norm Lasso vs ordinary least squares on identical
/// quantized data.
pub struct LassoOlsComparison {
    pub lasso: ExperimentResult,
    pub ols: ExperimentResult,
}

/// Run the Lasso-vs-OLS comparison; each trial quantizes once and feeds the
/// same surrogate covariances to both estimators.
pub fn run_lasso_vs_ols(cfg: &ExperimentConfig) -> Result<LassoOlsComparison> {
    cfg.validate()?;
    if cfg.gen.is_l2rm() || cfg.gen.is_csv() {
        return Err(Error::InvalidConfig(
            "the Lasso-vs-OLS study runs on vector-response synthetic data".into(),
        ));
    }
    let jobs = enumerate_jobs(cfg, &cfg.n_grid);
    let dims = cfg.gen.dims();
    let pairs: Vec<(TrialRecord, TrialRecord)> = jobs
        .par_iter()
        .map(|job| {
            let seed = derive_seed(cfg.base_seed, &job.parts(STREAM_DATA));
            let shared = (|| -> Result<(LrmrInstance, lrmr::QuantizedDataset)> {
                let instance = build_lrmr_instance(cfg, job)?;
                let qcfg = QuantConfig::new(job.delta1, job.delta2)?;
                let qdata = if cfg.dither_enabled {
                    let mut q_rng = rng_for(cfg, job, STREAM_DITHER);
                    lrmr::quantize_dataset(&instance.data, qcfg, &mut q_rng)?
                } else {
                    lrmr::quantize_dataset_undithered(&instance.data, qcfg)?
                };
                Ok((instance, qdata))
            })();
            match shared {
                Ok((instance, qdata)) => {
                    let lasso = match fit_lrmr(cfg, ModelKind::LrmrRegularized, &instance, &qdata, job)
                    {
                        Ok(fit) => record_from(
                            cfg,
                            ModelKind::LrmrRegularized.to_string(),
                            dims,
                            job,
                            seed,
                            fit,
                        ),
                        Err(_) => {
                            failed_record(ModelKind::LrmrRegularized.to_string(), dims, job, seed)
                        }
                    };
                    let ols = match fit_lrmr(cfg, ModelKind::Ols, &instance, &qdata, job) {
                        Ok(fit) => {
                            record_from(cfg, ModelKind::Ols.to_string(), dims, job, seed, fit)
                        }
                        Err(_) => failed_record(ModelKind::Ols.to_string(), dims, job, seed),
                    };
                    (lasso, ols)
                }
                Err(_) => (
                    failed_record(ModelKind::LrmrRegularized.to_string(), dims, job, seed),
                    failed_record(ModelKind::Ols.to_string(), dims, job, seed),
                ),
            }
        })
        .collect();
    let (lasso, ols): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(LassoOlsComparison {
        lasso: ExperimentResult::from_records(lasso),
        ols: ExperimentResult::from_records(ols),
    })
}

/// Real-data protocol: fit a reference coefficient matrix on the unquantized
/// data, then sweep quantization levels measuring the relative estimation
/// error against that reference and the relative prediction error.
///
/// The penalty grows with the quantization level through the multiplier
/// `sqrt(1 + (delta2^2/6 + delta1^2/4 * ||ref||_F^2 / d2) / sigma^2)`,
/// where `sigma^2` is the mean squared residual of the reference fit: the
/// response-side and covariate-side quantization noises act as extra
/// regression noise. With optional `n_test`, each trial re-splits the columns
/// and scores prediction on the held-out side.
pub fn run_real_data_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let GenModel::Csv {
        x_path,
        y_path,
        samples_in_rows,
    } = &cfg.gen
    else {
        return Err(Error::InvalidConfig(
            "run_real_data_study needs a csv data source".into(),
        ));
    };
    if cfg.model != ModelKind::LrmrRegularized {
        return Err(Error::InvalidConfig(
            "the real-data study uses the regularized estimator".into(),
        ));
    }
    let full = synth::load_csv_dataset(
        std::path::Path::new(x_path),
        std::path::Path::new(y_path),
        *samples_in_rows,
    )?;
    if let Some(n_test) = cfg.n_test {
        if n_test == 0 || n_test >= full.n() {
            return Err(Error::InvalidConfig(format!(
                "n_test {n_test} must be in 1..{}",
                full.n()
            )));
        }
    }
    let d1 = full.d1();
    let d2 = full.d2();

    // Reference fit on the full unquantized data (reused by every trial in
    // full-data mode; train/test mode refits per split).
    let full_reference = if cfg.n_test.is_none() {
        Some(fit_reference(&full, cfg)?)
    } else {
        None
    };

    let jobs = enumerate_jobs(cfg, &[full.n()]);
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|job| {
            let seed = derive_seed(cfg.base_seed, &job.parts(STREAM_DATA));
            let outcome = (|| -> Result<(usize, FitOutcome)> {
                let (fit_data, score_data, reference) = match cfg.n_test {
                    None => (
                        full.clone(),
                        full.clone(),
                        full_reference.clone().expect("reference fitted"),
                    ),
                    Some(n_test) => {
                        let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                            cfg.base_seed,
                            &[STREAM_SPLIT, job.trial as u64],
                        ));
                        let (train, test) = synth::train_test_split(&full, n_test, &mut split_rng)?;
                        let reference = fit_reference(&train, cfg)?;
                        (train, test, reference)
                    }
                };
                let qcfg = QuantConfig::new(job.delta1, job.delta2)?;
                let qdata = if cfg.dither_enabled {
                    let mut q_rng = rng_for(cfg, job, STREAM_DITHER);
                    lrmr::quantize_dataset(&fit_data, qcfg, &mut q_rng)?
                } else {
                    lrmr::quantize_dataset_undithered(&fit_data, qcfg)?
                };
                let start = Instant::now();
                let covs = lrmr::surrogate_covariances(&qdata);
                let noise_mult = {
                    let quant_var = job.delta2 * job.delta2 / 6.0
                        + job.delta1 * job.delta1 / 4.0 * reference.theta.norm_squared()
                            / d2 as f64;
                    (1.0 + quant_var / reference.residual_var).sqrt()
                };
                let lambda =
                    lrmr::lambda_schedule(d1, d2, fit_data.n(), cfg.lambda_scale) * noise_mult;
                let report = lrmr::regularized_lasso(&covs, lambda, &cfg.solver)?;
                let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                let frob = (&report.theta_hat - &reference.theta).norm();
                Ok((
                    fit_data.n(),
                    FitOutcome {
                        frob,
                        rel: frob / reference.theta.norm(),
                        pred: lrmr::prediction_error(&report.theta_hat, &score_data)
                            .unwrap_or(f64::NAN),
                        iterations: report.iterations,
                        converged: report.converged,
                        runtime_ms,
                    },
                ))
            })();
            match outcome {
                Ok((n_fit, fit)) => {
                    let mut rec = record_from(
                        cfg,
                        ModelKind::LrmrRegularized.to_string(),
                        (d1, d2, 0),
                        job,
                        seed,
                        fit,
                    );
                    rec.n = n_fit;
                    rec
                }
                Err(_) => {
                    let mut rec = failed_record(
                        ModelKind::LrmrRegularized.to_string(),
                        (d1, d2, 0),
                        job,
                        seed,
                    );
                    rec.n = full.n() - cfg.n_test.unwrap_or(0);
                    rec
                }
            }
        })
        .collect();
    Ok(ExperimentResult::from_records(records))
}

#[derive(Clone)]
struct Reference {
    theta: Matrix,
    residual_var: f64,
}

fn fit_reference(data: &Dataset, cfg: &ExperimentConfig) -> Result<Reference> {
    let unquantized = lrmr::QuantizedDataset {
        xdot: data.covariates.clone(),
        ydot: data.responses.clone(),
        config: QuantConfig::none(),
    };
    let covs = lrmr::surrogate_covariances(&unquantized);
    let lambda = lrmr::lambda_schedule(data.d1(), data.d2(), data.n(), cfg.lambda_scale);
    let report = lrmr::regularized_lasso(&covs, lambda, &cfg.solver)?;
    let residual = &data.responses - report.theta_hat.transpose() * &data.covariates;
    let residual_var =
        (residual.norm_squared() / (data.d2() * data.n()) as f64).max(f64::MIN_POSITIVE);
    Ok(Reference {
        theta: report.theta_hat,
        residual_var,
    })
}
