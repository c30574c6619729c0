//! Experiment orchestration: one config describes a full gen-data → train →
//! eval run, and `run` turns it into CSV rows plus on-disk artifacts.
//!
//! Everything that affects a result row is derived from the config and its
//! seeds, so re-running a config reproduces the same rows; only the
//! wall-clock column differs.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{baseline_error_rate, md_decode, mwpm_decode};
use crate::codes::{build_code, Family, StabilizerCode};
use crate::dataset::{generate_dataset, write_dataset, Dataset};
use crate::decode::{logical_error_rate, NetworkPredictor, RateEstimate};
use crate::diagnosis::{short_construction, uniform_construction, DiagnosisScheme};
use crate::nn::{
    cnn_input, cnn_specs, default_mlp_hidden, mlp_input, mlp_specs, save_network, train, Network,
    Tensor, TrainConfig,
};
use crate::noise::{NoiseKind, NoiseModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
}

fn stage<E: fmt::Display>(name: &'static str) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError::Stage { stage: name, message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Uniform,
    Short,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Uniform => "uniform",
            SchemeKind::Short => "short",
        }
    }

    pub fn build(self, code: &StabilizerCode) -> Result<DiagnosisScheme, ExperimentError> {
        let h_g = match self {
            SchemeKind::Uniform => uniform_construction(code).map_err(stage("scheme"))?,
            SchemeKind::Short => short_construction(code),
        };
        DiagnosisScheme::new(code, h_g).map_err(stage("scheme"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Cnn,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Md,
    Mwpm,
}

/// Optional deviations from the per-distance defaults. Absent fields keep
/// the defaults, so configs stay short.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ArchOverrides {
    /// MLP hidden width.
    pub hidden: Option<usize>,
    /// Batch-normalize the input layer (MLP only).
    pub batch_norm: Option<bool>,
    pub lr_start: Option<f64>,
    pub lr_end: Option<f64>,
    pub weight_decay: Option<f64>,
}

/// One experiment: a code, a scheme, a noise model, what to train, and what
/// to evaluate against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub d: usize,
    pub noise: NoiseKind,
    pub p_train: f64,
    pub p_eval: Vec<f64>,
    pub scheme: SchemeKind,
    pub model: ModelKind,
    #[serde(default)]
    pub arch: ArchOverrides,
    pub dataset_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Error stream for the training dataset.
    pub data_seed: u64,
    /// Network init and shuffle streams.
    pub train_seed: u64,
    /// Error stream for evaluation trials.
    pub eval_seed: u64,
    pub trials: u64,
    #[serde(default)]
    pub baselines: Vec<BaselineKind>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::InvalidConfig(msg));
        for &p in self.p_eval.iter().chain([&self.p_train]) {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("error probability {p} outside [0, 1)"));
            }
        }
        if self.p_eval.is_empty() {
            return bad("p_eval must list at least one probability".into());
        }
        if self.model == ModelKind::Cnn && !self.family.is_surface() {
            return bad(format!("cnn model requires a surface family, got {}", self.family));
        }
        if self.dataset_size < 1 || self.epochs < 1 || self.batch_size < 1 || self.trials < 1 {
            return bad("dataset_size, epochs, batch_size and trials must be at least 1".into());
        }
        if self.baselines.contains(&BaselineKind::Mwpm) && !self.family.is_surface() {
            return bad(format!("mwpm baseline requires a surface family, got {}", self.family));
        }
        if self.model == ModelKind::None && self.baselines.is_empty() {
            return bad("model none with no baselines evaluates nothing".into());
        }
        Ok(())
    }

    /// Short content hash identifying the config in every result row.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// One CSV row: a decoder evaluated at one probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub family: Family,
    pub d: usize,
    pub scheme: SchemeKind,
    pub decoder: String,
    pub p_train: f64,
    pub p_eval: f64,
    pub dataset_size: usize,
    pub trials: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub wall_seconds: f64,
}

pub fn write_csv(records: &[ResultRecord], path: &Path) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path).map_err(stage("csv"))?;
    for record in records {
        writer.serialize(record).map_err(stage("csv"))?;
    }
    writer.flush().map_err(stage("csv"))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRecord>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path).map_err(stage("csv"))?;
    reader.deserialize().collect::<Result<_, _>>().map_err(stage("csv"))
}

/// Builds and trains the configured network on the dataset. Exposed for the
/// CLI's standalone train subcommand.
pub fn train_model(
    cfg: &ExperimentConfig,
    code: &StabilizerCode,
    scheme: &DiagnosisScheme,
    ds: &Dataset,
) -> Result<Network, ExperimentError> {
    let output = scheme.rows();
    let (specs, input_shape) = match cfg.model {
        ModelKind::Mlp => {
            let input = code.n - code.k;
            let hidden = cfg.arch.hidden.unwrap_or_else(|| default_mlp_hidden(cfg.d));
            let batch_norm = cfg.arch.batch_norm.unwrap_or(true);
            (mlp_specs(input, hidden, output, batch_norm), vec![input])
        }
        ModelKind::Cnn => {
            let specs = cnn_specs(cfg.family, cfg.d, output).map_err(stage("train"))?;
            let probe = cnn_input(code, &crate::gf2::BitVec::zeros(code.n - code.k))
                .map_err(stage("train"))?;
            (specs, probe.shape().to_vec())
        }
        ModelKind::None => {
            return Err(ExperimentError::Stage {
                stage: "train",
                message: "model kind none has nothing to train".into(),
            });
        }
    };
    let mut net = Network::new(specs, input_shape, cfg.train_seed);
    let mut tc = TrainConfig::new(cfg.epochs, cfg.batch_size, cfg.train_seed);
    if let Some(v) = cfg.arch.lr_start {
        tc.lr_start = v;
    }
    if let Some(v) = cfg.arch.lr_end {
        tc.lr_end = v;
    }
    if let Some(v) = cfg.arch.weight_decay {
        tc.weight_decay = v;
    }
    let fetch = |i: usize| -> (Tensor, Tensor) {
        let sample = ds.sample(i);
        let x = match cfg.model {
            ModelKind::Mlp => mlp_input(&sample.s),
            _ => cnn_input(code, &sample.s).expect("validated surface family"),
        };
        (x, crate::nn::diagnosis_target(&sample.g))
    };
    train(&mut net, ds.len(), fetch, &tc);
    Ok(net)
}

/// Executes the whole pipeline. Artifacts land in `out_dir`: the dataset as
/// `dataset.qds`, the trained model as `model.qnn`, rows as `results.csv`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ResultRecord>, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(stage("setup"))?;
    let hash = cfg.hash();
    let code = build_code(cfg.family, cfg.d).map_err(stage("code"))?;
    let scheme = cfg.scheme.build(&code)?;
    let train_model_noise = NoiseModel::new(cfg.noise, cfg.p_train);

    let ds = generate_dataset(&code, &scheme, &train_model_noise, cfg.dataset_size, cfg.data_seed);
    write_dataset(&ds, &out_dir.join("dataset.qds")).map_err(stage("gen-data"))?;

    let net = match cfg.model {
        ModelKind::None => None,
        _ => {
            let net = train_model(cfg, &code, &scheme, &ds)?;
            save_network(&net, &out_dir.join("model.qnn")).map_err(stage("train"))?;
            Some(net)
        }
    };

    let mut records = Vec::new();
    let mut push = |decoder: &str, p_eval: f64, est: RateEstimate, wall: f64| {
        records.push(ResultRecord {
            config_hash: hash.clone(),
            family: cfg.family,
            d: cfg.d,
            scheme: cfg.scheme,
            decoder: decoder.into(),
            p_train: cfg.p_train,
            p_eval,
            dataset_size: cfg.dataset_size,
            trials: cfg.trials,
            rate: est.rate,
            ci_low: est.ci_low,
            ci_high: est.ci_high,
            wall_seconds: wall,
        });
    };

    for &p in &cfg.p_eval {
        let model = NoiseModel::new(cfg.noise, p);
        if let Some(net) = &net {
            let predictor = NetworkPredictor { net, code: &code };
            let t0 = Instant::now();
            let est = logical_error_rate(&code, &scheme, &predictor, &model, cfg.trials, cfg.eval_seed);
            let name = match cfg.model {
                ModelKind::Mlp => "mlp",
                _ => "cnn",
            };
            push(name, p, est, t0.elapsed().as_secs_f64());
        }
        for &baseline in &cfg.baselines {
            let t0 = Instant::now();
            let est = match baseline {
                BaselineKind::Md => {
                    baseline_error_rate(&code, &model, cfg.trials, cfg.eval_seed, |s| {
                        md_decode(&code, &model, s, code.n)
                    })
                }
                BaselineKind::Mwpm => {
                    baseline_error_rate(&code, &model, cfg.trials, cfg.eval_seed, |s| {
                        mwpm_decode(&code, s)
                    })
                }
            }
            .map_err(stage("baseline-eval"))?;
            let name = match baseline {
                BaselineKind::Md => "md",
                BaselineKind::Mwpm => "mwpm",
            };
            push(name, p, est, t0.elapsed().as_secs_f64());
        }
    }

    write_csv(&records, &out_dir.join("results.csv"))?;
    Ok(records)
}

/// Runs `base` once per dataset size and collects all rows into one table,
/// the training-size sweep layout.
pub fn run_sweep(
    base: &ExperimentConfig,
    sizes: &[usize],
    out_dir: &Path,
) -> Result<Vec<ResultRecord>, ExperimentError> {
    if sizes.is_empty() {
        return Err(ExperimentError::InvalidConfig("sweep needs at least one size".into()));
    }
    let mut all = Vec::new();
    for &size in sizes {
        let mut cfg = base.clone();
        cfg.dataset_size = size;
        let sub = out_dir.join(format!("size_{size}"));
        all.extend(run(&cfg, &sub)?);
    }
    write_csv(&all, &out_dir.join("results.csv"))?;
    Ok(all)
}
