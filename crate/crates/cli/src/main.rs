//! Command-line front end: code inspection, scheme analysis, dataset
//! generation, training, evaluation, baselines, oracles, and sweeps.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags, bad
//! config files), 3 when a pipeline stage fails at runtime.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use topodecode::codes::{build_code, Family, StabilizerCode};
use topodecode::dataset::{generate_dataset, write_dataset};
use topodecode::decode::{
    exact_optimal_rate, logical_error_rate, ExactL2Predictor,
};
use topodecode::diagnosis::DiagnosisScheme;
use topodecode::experiment::{
    run, run_sweep, train_model, BaselineKind, ExperimentConfig, ExperimentError, ModelKind,
    SchemeKind,
};
use topodecode::gf2::pauli_weight;
use topodecode::nn::save_network;
use topodecode::noise::{NoiseKind, NoiseModel};

#[derive(Parser)]
#[command(name = "topodecode", version, about = "Decoder workbench for topological stabilizer codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CodeArgs {
    /// surface_unrotated | surface_rotated | color_488 | color_666
    #[arg(long, value_parser = Family::from_str)]
    family: Family,
    /// Odd code distance, 3 or more
    #[arg(long)]
    d: usize,
}

#[derive(Args)]
struct SchemeArg {
    /// uniform | short
    #[arg(long, value_parser = parse_scheme)]
    scheme: SchemeKind,
}

#[derive(Args)]
struct NoiseArgs {
    /// bit_flip | depolarizing
    #[arg(long, value_parser = parse_noise)]
    noise: NoiseKind,
    /// Per-qubit error probability in [0, 1)
    #[arg(long)]
    p: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Print a code's parameters as JSON
    CodeInfo(CodeArgs),
    /// Build a diagnosis scheme and print its metrics as JSON
    AnalyzeScheme {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        scheme: SchemeArg,
    },
    /// Sample a training dataset and write it as a .qds file
    GenData {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        scheme: SchemeArg,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Number of samples
        #[arg(long)]
        count: usize,
        /// Error stream seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (.qds)
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate data and train the configured model; stops after the checkpoint
    Train {
        /// Experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a config: gen-data, train, eval, baselines
    Eval {
        /// Experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one reference decoder from a config, ignoring its model
    BaselineEval {
        /// Experiment config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// md | mwpm
        #[arg(long, value_parser = parse_baseline)]
        decoder: BaselineKind,
        /// Artifact directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact small-code oracles: sampled exact-L2 decoding and the enumerated optimal rate
    OracleEval {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        scheme: SchemeArg,
        #[command(flatten)]
        noise: NoiseArgs,
        /// Monte Carlo trials for the sampled rate
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Error stream seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a config once per training-set size and stack the rows
    Sweep {
        /// Experiment config (JSON); its dataset_size is replaced per run
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated dataset sizes
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Artifact directory
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    match s {
        "uniform" => Ok(SchemeKind::Uniform),
        "short" => Ok(SchemeKind::Short),
        other => Err(format!("unknown scheme: {other} (expected uniform or short)")),
    }
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    match s {
        "bit_flip" => Ok(NoiseKind::BitFlip),
        "depolarizing" => Ok(NoiseKind::Depolarizing),
        other => Err(format!("unknown noise kind: {other} (expected bit_flip or depolarizing)")),
    }
}

fn parse_baseline(s: &str) -> Result<BaselineKind, String> {
    match s {
        "md" => Ok(BaselineKind::Md),
        "mwpm" => Ok(BaselineKind::Mwpm),
        other => Err(format!("unknown decoder: {other} (expected md or mwpm)")),
    }
}

/// Failures split by exit code: 2 for configuration, 3 for runtime.
enum CliError {
    Config(String),
    Runtime(String),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(_) => CliError::Config(e.to_string()),
            ExperimentError::Stage { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_thread_pool() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// TOPODECODE_THREADS caps the rayon pool; unset means rayon's default.
fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("TOPODECODE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| format!("TOPODECODE_THREADS must be a positive integer, got {raw:?}"))?;
    if threads == 0 {
        return Err("TOPODECODE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn build(code_args: &CodeArgs) -> Result<StabilizerCode, CliError> {
    build_code(code_args.family, code_args.d).map_err(config_err)
}

fn build_scheme(code: &StabilizerCode, kind: SchemeKind) -> Result<DiagnosisScheme, CliError> {
    kind.build(code).map_err(CliError::from)
}

fn print_json(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::CodeInfo(args) => {
            let code = build(&args)?;
            print_json(json!({
                "family": code.family,
                "d": code.d,
                "n": code.n,
                "k": code.k,
                "checks": code.n - code.k,
                "x_checks": code.num_x_stabs(),
                "z_checks": code.stab_coords_z.len(),
                "logical_weights": [
                    pauli_weight(code.g.row(0)),
                    pauli_weight(code.g.row(1)),
                ],
            }));
            Ok(())
        }
        Command::AnalyzeScheme { code: code_args, scheme } => {
            let code = build(&code_args)?;
            let s = build_scheme(&code, scheme.scheme)?;
            print_json(json!({
                "family": code.family,
                "d": code.d,
                "scheme": scheme.scheme.as_str(),
                "scheme_id": s.id(),
                "rows": s.rows(),
                "sensitivity": s.sensitivity,
                "boundary_distance": s.boundary_distance,
                "normalized_sensitivity": s.normalized_sensitivity,
            }));
            Ok(())
        }
        Command::GenData { code: code_args, scheme, noise, count, seed, out } => {
            let code = build(&code_args)?;
            let s = build_scheme(&code, scheme.scheme)?;
            let model = noise_model(&noise)?;
            let ds = generate_dataset(&code, &s, &model, count, seed);
            write_dataset(&ds, &out).map_err(runtime_err)?;
            print_json(json!({
                "path": out,
                "samples": ds.len(),
                "syndrome_bits": ds.header.syndrome_bits,
                "diagnosis_bits": ds.header.diagnosis_bits,
                "scheme_id": ds.header.scheme_id,
            }));
            Ok(())
        }
        Command::Train { config, out } => {
            let cfg = load_config(&config)?;
            if cfg.model == ModelKind::None {
                return Err(CliError::Config("model none has nothing to train".into()));
            }
            std::fs::create_dir_all(&out).map_err(runtime_err)?;
            let code = build_code(cfg.family, cfg.d).map_err(config_err)?;
            let scheme = cfg.scheme.build(&code)?;
            let model = NoiseModel::new(cfg.noise, cfg.p_train);
            let ds = generate_dataset(&code, &scheme, &model, cfg.dataset_size, cfg.data_seed);
            write_dataset(&ds, &out.join("dataset.qds")).map_err(runtime_err)?;
            let net = train_model(&cfg, &code, &scheme, &ds)?;
            save_network(&net, &out.join("model.qnn")).map_err(runtime_err)?;
            print_json(json!({
                "config_hash": cfg.hash(),
                "parameters": net.param_count(),
                "loss_trace": net.loss_trace,
                "checkpoint": out.join("model.qnn"),
            }));
            Ok(())
        }
        Command::Eval { config, out } => {
            let cfg = load_config(&config)?;
            let records = run(&cfg, &out)?;
            print_json(json!({
                "config_hash": cfg.hash(),
                "rows": records.len(),
                "csv": out.join("results.csv"),
            }));
            Ok(())
        }
        Command::BaselineEval { config, decoder, out } => {
            let mut cfg = load_config(&config)?;
            cfg.model = ModelKind::None;
            cfg.baselines = vec![decoder];
            cfg.validate()?;
            let records = run(&cfg, &out)?;
            print_json(json!({
                "config_hash": cfg.hash(),
                "rows": records.len(),
                "csv": out.join("results.csv"),
            }));
            Ok(())
        }
        Command::OracleEval { code: code_args, scheme, noise, trials, seed } => {
            let code = build(&code_args)?;
            let s = build_scheme(&code, scheme.scheme)?;
            let model = noise_model(&noise)?;
            let predictor = ExactL2Predictor::new(&code, &s, &model).map_err(runtime_err)?;
            let sampled = logical_error_rate(&code, &s, &predictor, &model, trials, seed);
            // Same size bound as the predictor, so this cannot be TooLarge here.
            let exact = exact_optimal_rate(&code, &model).map_err(runtime_err)?;
            print_json(json!({
                "family": code.family,
                "d": code.d,
                "scheme": scheme.scheme.as_str(),
                "trials": trials,
                "sampled_rate": sampled.rate,
                "ci_low": sampled.ci_low,
                "ci_high": sampled.ci_high,
                "exact_optimal_rate": exact,
            }));
            Ok(())
        }
        Command::Sweep { config, sizes, out } => {
            let cfg = load_config(&config)?;
            let records = run_sweep(&cfg, &sizes, &out)?;
            print_json(json!({
                "config_hash_base": cfg.hash(),
                "sizes": sizes,
                "rows": records.len(),
                "csv": out.join("results.csv"),
            }));
            Ok(())
        }
    }
}

fn noise_model(args: &NoiseArgs) -> Result<NoiseModel, CliError> {
    if !(0.0..1.0).contains(&args.p) {
        return Err(CliError::Config(format!("p must be in [0, 1), got {}", args.p)));
    }
    Ok(NoiseModel::new(args.noise, args.p))
}
