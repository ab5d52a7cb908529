//! Command-line front end: binds JSON experiment configs to the Monte Carlo
//! harness and writes results.csv, summary.json, manifest.json and a gnuplot
//! script into the output directory.
//!
//! Exit codes: 0 on success, 1 on usage/configuration errors, 2 on runtime
//! errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use qlrmr::dither::{self, DitherKind};
use qlrmr::harness::{
    self,
    persist::{self, DitherDemoRow},
    CovariateKind, ExperimentConfig, ExperimentResult, GenModel, ModelKind,
};
use qlrmr::synth;

#[derive(Parser)]
#[command(
    name = "qlrmr",
    version,
    about = "Quantized low-rank multivariate regression experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the base seed of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a config field by dotted path, e.g. `--set trials=10` or
    /// `--set delta2_grid=[0.2,0.4]`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for the sweep (default: available cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the number of trials per grid cell.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Quantization-noise diagnostics: quantize standard normal samples under
    /// each dither and tabulate noise moments and the KS statistic.
    DitherDemo {
        #[command(flatten)]
        common: CommonOpts,
        /// Sample count per configuration.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        /// Quantization levels to test. Repeatable.
        #[arg(long = "delta", value_name = "DELTA", default_values_t = vec![0.5, 1.0, 2.0])]
        deltas: Vec<f64>,
    },
    /// Generate a synthetic dataset to CSV (x.csv, y.csv, theta0.csv).
    Gen {
        #[command(flatten)]
        common: CommonOpts,
        /// Generator config (JSON with `gen`, `n`, `seed`).
        #[arg(long)]
        config: PathBuf,
    },
    /// Vector-response error sweep over the (n, delta1, delta2) grid.
    RunLrmr {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        config: PathBuf,
    },
    /// Matrix-response error sweep.
    RunL2rm {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        config: PathBuf,
    },
    /// Paired sweep with dithered vs dither-free quantization.
    RunDitherCompare {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        config: PathBuf,
    },
    /// Paired nuclear-norm Lasso vs OLS on identical quantized data.
    RunLassoVsOls {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        config: PathBuf,
    },
    /// Real-data study from CSV covariates/responses.
    RunReal {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        config: PathBuf,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl From<qlrmr::Error> for CliError {
    fn from(e: qlrmr::Error) -> Self {
        match e {
            qlrmr::Error::InvalidConfig(_) | qlrmr::Error::Parse { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::DitherDemo { common, n, deltas } => {
            init_threads(&common)?;
            dither_demo(&common, n, &deltas)
        }
        Command::Gen { common, config } => {
            init_threads(&common)?;
            generate(&common, &config)
        }
        Command::RunLrmr { common, config } => {
            init_threads(&common)?;
            let (cfg, resolved) = load_experiment(&config, &common)?;
            if cfg.model == ModelKind::L2rm {
                return Err(CliError::config(format!(
                    "{}: run-lrmr drives vector-response models; use run-l2rm",
                    config.display()
                )));
            }
            let result = harness::run_error_curve(&cfg).map_err(CliError::from)?;
            write_run(&common, "run-lrmr", &resolved, &result)
        }
        Command::RunL2rm { common, config } => {
            init_threads(&common)?;
            let (cfg, resolved) = load_experiment(&config, &common)?;
            if cfg.model != ModelKind::L2rm {
                return Err(CliError::config(format!(
                    "{}: run-l2rm needs model = \"l2rm\"",
                    config.display()
                )));
            }
            let result = harness::run_error_curve(&cfg).map_err(CliError::from)?;
            write_run(&common, "run-l2rm", &resolved, &result)
        }
        Command::RunDitherCompare { common, config } => {
            init_threads(&common)?;
            let (cfg, resolved) = load_experiment(&config, &common)?;
            let cmp = harness::run_dither_comparison(&cfg).map_err(CliError::from)?;
            let merged = ExperimentResult::merged(&[&cmp.dithered, &cmp.undithered]);
            write_run(&common, "run-dither-compare", &resolved, &merged)
        }
        Command::RunLassoVsOls { common, config } => {
            init_threads(&common)?;
            let (cfg, resolved) = load_experiment(&config, &common)?;
            let cmp = harness::run_lasso_vs_ols(&cfg).map_err(CliError::from)?;
            let merged = ExperimentResult::merged(&[&cmp.lasso, &cmp.ols]);
            write_run(&common, "run-lasso-vs-ols", &resolved, &merged)
        }
        Command::RunReal { common, config } => {
            init_threads(&common)?;
            let (cfg, resolved) = load_experiment(&config, &common)?;
            let result = harness::run_real_data_study(&cfg).map_err(CliError::from)?;
            write_run(&common, "run-real", &resolved, &result)
        }
    }
}

fn init_threads(common: &CommonOpts) -> Result<(), CliError> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn read_config_value(path: &Path, common: &CommonOpts) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::config(format!(
            "{}: config root must be a JSON object",
            path.display()
        )));
    }
    for kv in &common.set {
        apply_override(&mut value, kv)
            .map_err(|msg| CliError::config(format!("{}: --set {kv}: {msg}", path.display())))?;
    }
    if let Some(seed) = common.seed {
        value["base_seed"] = seed.into();
    }
    if let Some(trials) = common.trials {
        value["trials"] = trials.into();
    }
    Ok(value)
}

fn load_experiment(
    path: &Path,
    common: &CommonOpts,
) -> Result<(ExperimentConfig, serde_json::Value), CliError> {
    let value = read_config_value(path, common)?;
    let cfg: ExperimentConfig = serde_json::from_value(value.clone())
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    cfg.validate()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok((cfg, value))
}

/// Set a dotted-path key to a JSON value (falling back to a string when the
/// value does not parse as JSON).
fn apply_override(root: &mut serde_json::Value, kv: &str) -> Result<(), String> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| "expected KEY=VALUE".to_string())?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = key.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("'{}' is not an object", segments[..i].join(".")))?;
        if i + 1 == segments.len() {
            obj.insert((*seg).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*seg).to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    Err("empty key".into())
}

fn manifest(command: &str, config: &serde_json::Value, outputs: &[String]) -> serde_json::Value {
    serde_json::json!({
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "outputs": outputs,
    })
}

fn write_run(
    common: &CommonOpts,
    command: &str,
    resolved: &serde_json::Value,
    result: &ExperimentResult,
) -> Result<(), CliError> {
    let to_runtime = |e: qlrmr::Error| CliError::Runtime(e.to_string());
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    persist::write_results(result, &common.out).map_err(to_runtime)?;
    persist::emit_plot_script(result, "results.csv", &common.out.join("plot.gp"))
        .map_err(to_runtime)?;
    let outputs = vec![
        "results.csv".to_string(),
        "summary.json".to_string(),
        "plot.gp".to_string(),
    ];
    persist::write_manifest(
        &manifest(command, resolved, &outputs),
        &common.out.join("manifest.json"),
    )
    .map_err(to_runtime)?;
    println!(
        "{} cells, {} records -> {}",
        result.summary.len(),
        result.records.len(),
        common.out.display()
    );
    for cell in &result.summary {
        println!(
            "  {} n={} d1={} d2={}: frob {:.4} +- {:.4} ({} trials, {} failed)",
            cell.model,
            cell.n,
            cell.delta1,
            cell.delta2,
            cell.frob_error.mean,
            cell.frob_error.std,
            cell.trials,
            cell.failed
        );
    }
    Ok(())
}

fn dither_demo(common: &CommonOpts, n: usize, deltas: &[f64]) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::config("--n must be positive"));
    }
    if deltas.iter().any(|&d| !d.is_finite() || d <= 0.0) {
        return Err(CliError::config("--delta values must be positive"));
    }
    let seed = common.seed.unwrap_or(1234);
    let mut rows = Vec::new();
    for &delta in deltas {
        for kind in [DitherKind::Uniform, DitherKind::Triangular] {
            let mut rng = ChaCha8Rng::seed_from_u64(harness::derive_seed(
                seed,
                &[delta.to_bits(), kind as u64],
            ));
            let input: Vec<f64> = (0..n)
                .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
                .collect();
            let record = dither::quantize_with_dither(&input, delta, kind, &mut rng)
                .map_err(CliError::from)?;
            let report = dither::noise_moment_report(&record).map_err(CliError::from)?;
            rows.push(DitherDemoRow::new(kind.to_string(), delta, n, &report));
        }
    }
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let csv = common.out.join("dither_demo.csv");
    persist::write_dither_demo_csv(&rows, &csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    persist::write_manifest(
        &manifest(
            "dither-demo",
            &serde_json::json!({ "n": n, "deltas": deltas, "seed": seed }),
            &["dither_demo.csv".to_string()],
        ),
        &common.out.join("manifest.json"),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{} rows -> {}", rows.len(), csv.display());
    Ok(())
}

/// Config for the `gen` subcommand.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenFileConfig {
    gen: GenModel,
    n: usize,
    seed: u64,
}

fn generate(common: &CommonOpts, config: &Path) -> Result<(), CliError> {
    let value = read_config_value(config, common)?;
    let spec: GenFileConfig = serde_json::from_value(value.clone())
        .map_err(|e| CliError::config(format!("{}: {e}", config.display())))?;
    if spec.n == 0 {
        return Err(CliError::config(format!(
            "{}: n must be positive",
            config.display()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let covariate_matrix = |kind: CovariateKind, d: usize, rng: &mut ChaCha8Rng| match kind {
        CovariateKind::Gaussian => synth::standard_normal_matrix(d, spec.n, rng),
        CovariateKind::Bernoulli => synth::gen_bernoulli_covariates(d, spec.n, rng),
    };
    let (x, y, theta) = match &spec.gen {
        GenModel::GaussianLowrank {
            d1,
            d2,
            rank,
            noise,
            covariates,
        } => {
            let theta =
                synth::gen_lowrank_theta(*d1, *d2, *rank, &mut rng).map_err(CliError::from)?;
            let noise_std = noise.std().map_err(CliError::from)?;
            let x = covariate_matrix(*covariates, *d1, &mut rng);
            let y = synth::lrmr_responses(&theta, &x, noise_std, &mut rng);
            (x, y, theta)
        }
        GenModel::DemoLowrank { noise, covariates } => {
            let theta = synth::make_demo_theta_lrmr();
            let noise_std = noise.std().map_err(CliError::from)?;
            let x = covariate_matrix(*covariates, theta.nrows(), &mut rng);
            let y = synth::lrmr_responses(&theta, &x, noise_std, &mut rng);
            (x, y, theta)
        }
        GenModel::L2rmLowrank {
            s,
            p,
            q,
            block_rank,
            noise,
            covariates,
        } => {
            let blocks = qlrmr::l2rm::BlockCoefficients::new(
                (0..*s)
                    .map(|_| synth::gen_lowrank_theta(*p, *q, *block_rank, &mut rng))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(CliError::from)?,
            )
            .map_err(CliError::from)?;
            let noise_std = noise.std().map_err(CliError::from)?;
            let x = covariate_matrix(*covariates, *s, &mut rng);
            let responses = synth::l2rm_responses(&blocks, &x, noise_std, &mut rng);
            let yvec = qlrmr::Matrix::from_fn(p * q, spec.n, |row, k| responses[k].as_slice()[row]);
            (x, yvec, qlrmr::l2rm::rearrange(&blocks))
        }
        GenModel::L2rmDemo { noise, covariates } => {
            let blocks = synth::make_demo_blocks_l2rm();
            let (p, q) = blocks.shape();
            let noise_std = noise.std().map_err(CliError::from)?;
            let x = covariate_matrix(*covariates, blocks.len(), &mut rng);
            let responses = synth::l2rm_responses(&blocks, &x, noise_std, &mut rng);
            let yvec = qlrmr::Matrix::from_fn(p * q, spec.n, |row, k| responses[k].as_slice()[row]);
            (x, yvec, qlrmr::l2rm::rearrange(&blocks))
        }
        GenModel::Csv { .. } => {
            return Err(CliError::config(format!(
                "{}: gen cannot re-export a csv source",
                config.display()
            )));
        }
    };
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let to_runtime = |e: qlrmr::Error| CliError::Runtime(e.to_string());
    synth::write_matrix_csv(&common.out.join("x.csv"), &x).map_err(to_runtime)?;
    synth::write_matrix_csv(&common.out.join("y.csv"), &y).map_err(to_runtime)?;
    synth::write_matrix_csv(&common.out.join("theta0.csv"), &theta).map_err(to_runtime)?;
    persist::write_manifest(
        &manifest(
            "gen",
            &value,
            &["x.csv".into(), "y.csv".into(), "theta0.csv".into()],
        ),
        &common.out.join("manifest.json"),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!(
        "wrote {}x{} covariates, {}x{} responses -> {}",
        x.nrows(),
        x.ncols(),
        y.nrows(),
        y.ncols(),
        common.out.display()
    );
    Ok(())
}
