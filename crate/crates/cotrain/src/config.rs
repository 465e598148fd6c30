//! Declarative experiment configuration, checkpoint files, and the run
//! drivers behind the `train` and `diagnose` commands.
//!
//! A config is one JSON object with four blocks: `dataset`, `model`,
//! `hyperparams`, and `run`. The `hyperparams` block may name a `preset`
//! (`desk`, `svhn-like`, `cifar10-like`) and override individual fields.
//! On every run the fully resolved config is echoed into the output
//! directory; re-running from the echoed file reproduces the run
//! bit-exactly, since all randomness derives from the config's seeds.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{gaussian_blobs, load_csv, make_bundles, split, two_moons, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{write_metrics, EvalContext, MetricsRecord, MetricsRow, MetricsWriter};
use crate::model::{init_view, OptimizerState, ViewModel};
use crate::trainer::{
    cosine_lr, pretrain, train_epoch, warmup_lambda, EpochSettings, HyperParams, ScheduleMode,
    TrainState,
};

const PAIRING_SALT: u64 = 0x4000_0000_0000_0000;
const PROBE_SALT: u64 = 0x2000_0000_0000_0000;

/// Where a dataset comes from: a named generator or a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Generator(GeneratorSpec),
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    TwoMoons {
        n: usize,
        noise: f64,
        seed: u64,
    },
    GaussianBlobs {
        n: usize,
        classes: usize,
        separation: f64,
        seed: u64,
    },
}

impl DataSource {
    pub fn materialize(&self) -> Result<Dataset> {
        match self {
            DataSource::Generator(GeneratorSpec::TwoMoons { n, noise, seed }) => {
                two_moons(*n, *noise, *seed)
            }
            DataSource::Generator(GeneratorSpec::GaussianBlobs {
                n,
                classes,
                separation,
                seed,
            }) => gaussian_blobs(*n, *classes, *separation, *seed),
            DataSource::Csv { csv } => load_csv(csv),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Training pool; must be fully labeled (the split strips labels).
    pub source: DataSource,
    /// Held-out labeled test set used for every evaluation.
    pub test: DataSource,
    pub n_labeled: usize,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Layer widths including input and output, e.g. `[2, 16, 16, 2]`.
    pub layer_dims: Vec<usize>,
    /// One initialization seed per view.
    pub seeds: Vec<u64>,
}

/// Which loss terms act, as λ masks over the scheduled values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Dct,
    SupOnly,
    CotOnly,
    DifOnly,
}

impl RunMode {
    /// Multipliers `(cot, dif)` applied to the scheduled λ values.
    pub fn lambda_mask(self) -> (f64, f64) {
        match self {
            RunMode::Dct => (1.0, 1.0),
            RunMode::SupOnly => (0.0, 0.0),
            RunMode::CotOnly => (1.0, 0.0),
            RunMode::DifOnly => (0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/metrics.csv`.
    #[serde(default)]
    pub metrics_path: Option<PathBuf>,
    /// Save checkpoints every this many epochs; 0 saves only the final one.
    #[serde(default)]
    pub checkpoint_interval: usize,
    #[serde(default = "default_mode")]
    pub mode: RunMode,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleMode,
    /// Supervised-only warmup phase; when nonzero, the co-training loop
    /// starts with λ already at the maxima instead of the warmup ramp.
    #[serde(default)]
    pub pretrain_epochs: usize,
    /// Master seed for streams, pairings, and the diagnostics probe.
    #[serde(default)]
    pub seed: u64,
    /// Train the n/2 view pairs of an iteration on scoped threads.
    /// Bit-identical to the sequential default.
    #[serde(default)]
    pub parallel_pairs: bool,
}

fn default_mode() -> RunMode {
    RunMode::Dct
}

fn default_schedule() -> ScheduleMode {
    ScheduleMode::Real
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub hyperparams: HyperParams,
    pub run: RunConfig,
}

/// `hyperparams` block as written by hand: optional preset plus overrides.
#[derive(Debug, Clone, Deserialize)]
struct HyperParamsSpec {
    #[serde(default)]
    preset: Option<String>,
    lambda_cot_max: Option<f64>,
    lambda_dif_max: Option<f64>,
    warmup_epochs: Option<usize>,
    total_epochs: Option<usize>,
    lr0: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    fgsm_epsilon: Option<f64>,
    n_views: Option<usize>,
}

#[derive(Deserialize)]
struct ExperimentConfigSpec {
    dataset: DatasetConfig,
    model: ModelConfig,
    hyperparams: HyperParamsSpec,
    run: RunConfig,
}

fn resolve_preset(name: &str) -> Result<HyperParams> {
    match name {
        "desk" => Ok(HyperParams::default()),
        "svhn-like" => Ok(HyperParams::svhn_like()),
        "cifar10-like" => Ok(HyperParams::cifar10_like()),
        other => Err(Error::Config(format!(
            "hyperparams.preset: unknown preset {other:?} (known: desk, svhn-like, cifar10-like)"
        ))),
    }
}

impl HyperParamsSpec {
    fn resolve(self) -> Result<HyperParams> {
        let mut hp = match &self.preset {
            Some(name) => resolve_preset(name)?,
            None => HyperParams::default(),
        };
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    hp.$field = v;
                }
            };
        }
        take!(lambda_cot_max);
        take!(lambda_dif_max);
        take!(warmup_epochs);
        take!(total_epochs);
        take!(lr0);
        take!(momentum);
        take!(weight_decay);
        take!(batch_size);
        take!(fgsm_epsilon);
        take!(n_views);
        Ok(hp)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentConfigSpec =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        let mut cfg = ExperimentConfig {
            dataset: spec.dataset,
            model: spec.model,
            hyperparams: spec.hyperparams.resolve()?,
            run: spec.run,
        };
        cfg.resolve_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fills in derived defaults (currently just the metrics path).
    pub fn resolve_defaults(&mut self) {
        if self.run.metrics_path.is_none() {
            self.run.metrics_path = Some(self.run.out_dir.join("metrics.csv"));
        }
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.run
            .metrics_path
            .clone()
            .unwrap_or_else(|| self.run.out_dir.join("metrics.csv"))
    }

    /// Structural validation; error messages carry the config field path.
    pub fn validate(&self) -> Result<()> {
        self.hyperparams
            .validate()
            .map_err(|e| Error::Config(format!("hyperparams.{}", strip_config(e))))?;
        if self.model.layer_dims.len() < 2 || self.model.layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "model.layer_dims must list at least input and output widths, all positive; got {:?}",
                self.model.layer_dims
            )));
        }
        if self.model.seeds.len() != self.hyperparams.n_views {
            return Err(Error::Config(format!(
                "model.seeds must have one seed per view (n_views = {}), got {}",
                self.hyperparams.n_views,
                self.model.seeds.len()
            )));
        }
        if self.dataset.n_labeled == 0 {
            return Err(Error::Config("dataset.n_labeled must be positive".into()));
        }
        Ok(())
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

// ─── Checkpoints ───────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    layer_dims: Vec<usize>,
    seed: u64,
}

/// Writes a view as one JSON header line followed by the flat parameter
/// buffer as little-endian f64 bytes.
pub fn save_checkpoint(view: &ViewModel, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        layer_dims: view.layer_dims(),
        seed: view.rng_seed(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    for v in view.flat_params() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ViewModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: "missing header line".into(),
        })?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("bad header: {e}"),
        })?;
    let mut view = init_view(&header.layer_dims, header.seed).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: format!("bad layer_dims: {e}"),
    })?;
    let body = &bytes[nl + 1..];
    let expected = view.num_params() * 8;
    if body.len() != expected {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("expected {expected} parameter bytes, found {}", body.len()),
        });
    }
    let params: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    view.load_flat_params(&params)?;
    Ok(view)
}

pub fn save_views(views: &[ViewModel], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, v) in views.iter().enumerate() {
        save_checkpoint(v, &dir.join(format!("view_{i:02}.bin")))?;
    }
    Ok(())
}

/// Loads every `view_*.bin` in a directory, sorted by file name.
pub fn load_views(dir: &Path) -> Result<Vec<ViewModel>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("view_") && n.ends_with(".bin"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Checkpoint {
            path: dir.to_path_buf(),
            msg: "no view_*.bin checkpoints found".into(),
        });
    }
    paths.iter().map(|p| load_checkpoint(p)).collect()
}

// ─── Run drivers ───────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub effective: ExperimentConfig,
    pub metrics_path: PathBuf,
    /// Directory holding the final per-view checkpoints.
    pub checkpoint_dir: PathBuf,
    /// Every metrics row of the run, epoch 0 (pre-training snapshot)
    /// through the final epoch.
    pub rows: Vec<MetricsRow>,
}

/// Runs one full experiment: materialize data, split, build views,
/// optional supervised pretraining, then the co-training loop with
/// per-epoch metrics and checkpoints. `on_epoch` fires after every
/// recorded epoch, including the epoch-0 snapshot.
pub fn run_train(
    config: &ExperimentConfig,
    on_epoch: &mut dyn FnMut(&MetricsRecord),
) -> Result<RunSummary> {
    let mut cfg = config.clone();
    cfg.resolve_defaults();
    cfg.validate()?;
    let hp = cfg.hyperparams.clone();

    let train_data = cfg.dataset.source.materialize()?;
    if !train_data.fully_labeled() {
        return Err(Error::Config(
            "dataset.source must be fully labeled; the split strips labels".into(),
        ));
    }
    let test_data = cfg.dataset.test.materialize()?;
    let dims = &cfg.model.layer_dims;
    if dims[0] != train_data.dim() {
        return Err(Error::Config(format!(
            "model.layer_dims[0] = {} but the dataset has {} features",
            dims[0],
            train_data.dim()
        )));
    }
    if *dims.last().expect(">= 2 dims") != train_data.num_classes {
        return Err(Error::Config(format!(
            "model.layer_dims ends in {} but the dataset has {} classes",
            dims.last().expect(">= 2 dims"),
            train_data.num_classes
        )));
    }
    if test_data.dim() != train_data.dim() || test_data.num_classes > train_data.num_classes {
        return Err(Error::Config(
            "dataset.test geometry does not match the training data".into(),
        ));
    }

    fs::create_dir_all(&cfg.run.out_dir).map_err(|e| Error::io(&cfg.run.out_dir, e))?;
    let echo_path = cfg.run.out_dir.join("config.json");
    fs::write(&echo_path, cfg.to_json() + "\n").map_err(|e| Error::io(&echo_path, e))?;

    let split_out = split(
        &train_data,
        &SplitSpec {
            n_labeled: cfg.dataset.n_labeled,
            seed: cfg.dataset.split_seed,
        },
    )?;

    let mut views: Vec<ViewModel> = cfg
        .model
        .seeds
        .iter()
        .map(|&s| init_view(dims, s))
        .collect::<Result<_>>()?;
    let mut opts: Vec<OptimizerState> = views
        .iter()
        .map(|v| OptimizerState::new(v, hp.momentum, hp.weight_decay))
        .collect();

    let pretrained = cfg.run.pretrain_epochs > 0;
    if pretrained {
        pretrain(
            &mut views,
            &mut opts,
            &split_out.labeled,
            cfg.run.pretrain_epochs,
            &hp,
            cfg.run.seed,
        )?;
    }

    let mut bundles = make_bundles(
        &split_out.labeled,
        split_out.unlabeled.as_ref(),
        hp.n_views,
        hp.batch_size,
        cfg.run.seed,
    )?;
    let mut state = TrainState::new(crate::data::mix_seed(cfg.run.seed, PAIRING_SALT));
    let eval = EvalContext::new(
        test_data,
        crate::data::mix_seed(cfg.run.seed, PROBE_SALT),
        hp.fgsm_epsilon,
    )?;

    let metrics_path = cfg.metrics_path();
    let mut writer = MetricsWriter::create(&metrics_path, hp.n_views)?;
    let mut rows = Vec::with_capacity(hp.total_epochs + 1);

    // Epoch-0 snapshot: loss values and diagnostics before any update, so
    // runs that share seeds agree on their starting point. Measured on
    // clones with lr = 0; nothing of the real run state advances.
    {
        let mut v = views.clone();
        let mut o = opts.clone();
        let mut b = bundles.clone();
        let mut st = state.clone();
        let es = EpochSettings {
            lr: 0.0,
            lambda_cot: 0.0,
            lambda_dif: 0.0,
        };
        let record = train_epoch(
            &mut v,
            &mut o,
            &mut b,
            cfg.run.schedule,
            &hp,
            0,
            &es,
            &mut st,
            &eval,
            cfg.run.parallel_pairs,
        )?;
        write_metrics(&record, &mut writer)?;
        rows.push(record.to_row());
        on_epoch(&record);
    }

    let (mask_cot, mask_dif) = cfg.run.mode.lambda_mask();
    let checkpoints_root = cfg.run.out_dir.join("checkpoints");
    for epoch in 1..=hp.total_epochs {
        let (base_cot, base_dif) = if pretrained {
            (hp.lambda_cot_max, hp.lambda_dif_max)
        } else {
            (
                warmup_lambda(epoch, hp.lambda_cot_max, hp.warmup_epochs),
                warmup_lambda(epoch, hp.lambda_dif_max, hp.warmup_epochs),
            )
        };
        let es = EpochSettings {
            lr: cosine_lr(epoch, hp.lr0, hp.total_epochs)?,
            lambda_cot: mask_cot * base_cot,
            lambda_dif: mask_dif * base_dif,
        };
        let record = train_epoch(
            &mut views,
            &mut opts,
            &mut bundles,
            cfg.run.schedule,
            &hp,
            epoch,
            &es,
            &mut state,
            &eval,
            cfg.run.parallel_pairs,
        )?;
        write_metrics(&record, &mut writer)?;
        rows.push(record.to_row());
        on_epoch(&record);

        if cfg.run.checkpoint_interval > 0 && epoch % cfg.run.checkpoint_interval == 0 {
            save_views(&views, &checkpoints_root.join(format!("epoch_{epoch:04}")))?;
        }
    }

    let final_dir = checkpoints_root.join("final");
    save_views(&views, &final_dir)?;
    Ok(RunSummary {
        effective: cfg,
        metrics_path,
        checkpoint_dir: final_dir,
        rows,
    })
}

// ─── Diagnose ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseRunStats {
    pub final_mean_err: f64,
    pub final_collapse: f64,
    pub final_l_dif: f64,
    pub metrics_path: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseSummary {
    pub cot_only: DiagnoseRunStats,
    pub dct: DiagnoseRunStats,
}

fn stats_from(summary: &RunSummary) -> DiagnoseRunStats {
    let last = summary.rows.last().expect("at least the epoch-0 row");
    DiagnoseRunStats {
        final_mean_err: last.mean_err,
        final_collapse: last.collapse,
        final_l_dif: last.l_dif,
        metrics_path: summary.metrics_path.clone(),
    }
}

/// Runs the agreement-only ablation and the full objective back-to-back
/// with shared seeds, then reports both runs' final collapse scores and
/// errors. The comparison isolates what the view-difference loss buys.
pub fn run_diagnose(
    config: &ExperimentConfig,
    on_epoch: &mut dyn FnMut(&str, &MetricsRecord),
) -> Result<DiagnoseSummary> {
    let mut base = config.clone();
    base.resolve_defaults();
    base.validate()?;

    let mut run_variant = |mode: RunMode, name: &str| -> Result<RunSummary> {
        let mut cfg = base.clone();
        cfg.run.mode = mode;
        cfg.run.out_dir = base.run.out_dir.join(name);
        cfg.run.metrics_path = Some(cfg.run.out_dir.join("metrics.csv"));
        run_train(&cfg, &mut |rec| on_epoch(name, rec))
    };
    let cot_only = run_variant(RunMode::CotOnly, "cot_only")?;
    let dct = run_variant(RunMode::Dct, "dct")?;

    let summary = DiagnoseSummary {
        cot_only: stats_from(&cot_only),
        dct: stats_from(&dct),
    };
    let path = base.run.out_dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
