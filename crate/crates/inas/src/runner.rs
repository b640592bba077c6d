//! Runs an experiment config end to end and writes its run directory:
//! `rounds.csv`, `run.json`, the final checkpoint and optional per-round
//! checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use inas_core::active::{self, NetTrainer, RoundObserver, RoundRecord, Trainer};
use inas_core::arch::ArchPoint;
use inas_core::data::{self, Dataset};
use inas_core::nn::{ModelHandle, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{AppError, Result};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const RUN_FILE: &str = "run.json";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const ROUNDS_HEADER: [&str; 9] =
    ["round", "labels_used", "arch_i", "arch_j", "depth", "params", "val_risk", "test_error", "wall_time_s"];

/// Trains the candidates of one search iteration on separate threads.
#[derive(Debug, Clone, Copy)]
pub struct ThreadedTrainer(pub NetTrainer);

impl Trainer for ThreadedTrainer {
    type Model = ModelHandle;

    fn fit(&self, arch: ArchPoint, data: &Dataset, cfg: &TrainConfig) -> inas_core::Result<ModelHandle> {
        self.0.fit(arch, data, cfg)
    }

    fn fit_candidates(&self, jobs: &[(ArchPoint, TrainConfig)], data: &Dataset) -> Vec<inas_core::Result<ModelHandle>> {
        if jobs.len() < 2 || thread::available_parallelism().map_or(1, |n| n.get()) < 2 {
            return jobs.iter().map(|(a, cfg)| self.0.fit(*a, data, cfg)).collect();
        }
        thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|(a, cfg)| s.spawn(move || self.0.fit(*a, data, cfg))).collect();
            handles.into_iter().map(|h| h.join().expect("candidate training panicked")).collect()
        })
    }
}

/// One `rounds.csv` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub labels_used: usize,
    pub arch_i: usize,
    pub arch_j: usize,
    pub depth: usize,
    pub params: usize,
    pub val_risk: Option<f64>,
    pub test_error: f64,
    pub wall_time_s: f64,
}

impl From<&RoundRecord> for RoundRow {
    fn from(r: &RoundRecord) -> Self {
        RoundRow {
            round: r.round,
            labels_used: r.labels_used,
            arch_i: r.arch.i,
            arch_j: r.arch.j,
            depth: r.depth,
            params: r.params,
            val_risk: r.val_risk,
            test_error: r.test_error,
            wall_time_s: r.wall_time_s,
        }
    }
}

/// Streams rounds to disk as they finish.
struct RunWriter {
    dir: PathBuf,
    rounds: csv::Writer<BufWriter<File>>,
    checkpoints: bool,
    started: Instant,
}

impl RunWriter {
    fn create(dir: &Path, checkpoints: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(AppError::io(dir))?;
        let path = dir.join(ROUNDS_FILE);
        let file = File::create(&path).map_err(AppError::io(&path))?;
        let mut rounds = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        rounds.write_record(ROUNDS_HEADER).map_err(AppError::csv(&path))?;
        Ok(RunWriter { dir: dir.to_path_buf(), rounds, checkpoints, started: Instant::now() })
    }

    fn write(&mut self, record: &RoundRecord, model: &ModelHandle) -> Result<()> {
        let path = self.dir.join(ROUNDS_FILE);
        self.rounds.serialize(RoundRow::from(record)).map_err(AppError::csv(&path))?;
        self.rounds.flush().map_err(AppError::io(&path))?;
        if self.checkpoints {
            checkpoint::save(model, self.dir.join(format!("round-{:03}.ckpt", record.round)))?;
        }
        Ok(())
    }
}

impl RoundObserver<ModelHandle> for RunWriter {
    fn now(&mut self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn on_round(&mut self, record: &RoundRecord, model: &ModelHandle) -> inas_core::Result<()> {
        let msg = |e: AppError| inas_core::Error::Invariant(format!("writing round {}: {e}", record.round));
        self.write(record, model).map_err(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub n: usize,
    pub pool_size: usize,
    pub test_size: usize,
    pub n_classes: usize,
    /// Original label value of each class id.
    pub class_values: Vec<i64>,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub label: String,
    pub strategy: String,
    pub arch_mode: String,
    pub seed: u64,
    /// Seeds the test split and the random seed set; twins with the same
    /// `seed` share both.
    pub pool_seed: u64,
    pub dataset: DatasetInfo,
    pub initial_arch: ArchPoint,
    pub final_arch: ArchPoint,
    pub label_grid: Vec<usize>,
    pub total_wall_time_s: f64,
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundRecord>,
}

/// Runs `cfg` (relative dataset paths resolved against `base`) into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<RunInfo> {
    cfg.validate()?;
    let dataset = cfg.dataset.load(base)?;
    let grid = cfg.grid.grid()?;
    let a0 = cfg.initial_arch()?;
    let (_, mut oracle, test) = data::make_pool(&dataset, cfg.test_fraction, cfg.run.seed)?;
    if cfg.run.budget > oracle.len() {
        return Err(AppError::Data(format!("budget {} exceeds pool size {}", cfg.run.budget, oracle.len())));
    }
    let trainer = ThreadedTrainer(NetTrainer {
        block: grid.block,
        input_shape: dataset.shape(),
        n_classes: dataset.n_classes(),
        dropout_rate: cfg.dropout_rate,
    });
    let pool_size = oracle.len();
    let mut writer = RunWriter::create(out_dir, cfg.save_checkpoints)?;
    let outcome = active::run_active_with(&trainer, &mut oracle, &test, a0, &grid, &cfg.run, &mut writer)?;
    checkpoint::save(&outcome.final_model, out_dir.join(FINAL_CHECKPOINT))?;
    let info = RunInfo {
        label: cfg.run_label(),
        strategy: cfg.run.strategy.to_string(),
        arch_mode: cfg.arch_mode().into(),
        seed: cfg.run.seed,
        pool_seed: cfg.run.seed,
        dataset: DatasetInfo {
            name: dataset.name.clone(),
            n: dataset.len(),
            pool_size,
            test_size: test.len(),
            n_classes: dataset.n_classes(),
            class_values: dataset.class_values().to_vec(),
        },
        initial_arch: a0,
        final_arch: outcome.rounds.last().map_or(a0, |r| r.arch),
        label_grid: cfg.run.label_grid(pool_size),
        total_wall_time_s: writer.started.elapsed().as_secs_f64(),
        config: cfg.clone(),
        rounds: outcome.rounds,
    };
    let path = out_dir.join(RUN_FILE);
    let text = serde_json::to_string_pretty(&info).map_err(AppError::json(&path))?;
    fs::write(&path, text + "\n").map_err(AppError::io(&path))?;
    Ok(info)
}

pub fn read_rounds(dir: &Path) -> Result<Vec<RoundRow>> {
    let path = dir.join(ROUNDS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(AppError::csv(&path))?;
    let headers = reader.headers().map_err(AppError::csv(&path))?;
    if !headers.iter().eq(ROUNDS_HEADER) {
        return Err(AppError::Data(format!("{}: unexpected header", path.display())));
    }
    reader.deserialize().collect::<std::result::Result<_, _>>().map_err(AppError::csv(&path))
}

pub fn read_run_info(dir: &Path) -> Result<RunInfo> {
    let path = dir.join(RUN_FILE);
    let text = fs::read_to_string(&path).map_err(AppError::io(&path))?;
    serde_json::from_str(&text).map_err(AppError::json(&path))
}

/// Writes `text` to `path`, creating parent directories.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(AppError::io(parent))?;
    }
    let mut f = File::create(path).map_err(AppError::io(path))?;
    f.write_all(text.as_bytes()).map_err(AppError::io(path))
}
