//! Incremental architecture search and the active learning loop around it.
//!
//! Each round: search from the previous round's architecture over
//! `{current, depth expansion, stack expansion}` on a stratified train /
//! validation split of the labeled set, retrain the winner from scratch on
//! the whole labeled set, record its test error, then query the next batch.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arch::{self, ArchPoint, BlockSpec, SearchGrid};
use crate::data::{self, Dataset, InputShape, OracleView};
use crate::nn::{self, ModelHandle, NetworkSpec, TrainConfig};
use crate::query::{self, QueryParams, Strategy, DEFAULT_MC_PASSES};
use crate::rng::{self, tag};
use crate::tensor::Matrix;
use crate::{Error, Result};

/// A trained predictor as seen by the search and the query functions.
pub trait Classifier {
    fn param_count(&self) -> usize;
    /// Epochs of SGD this model was trained for.
    fn epochs_trained(&self) -> usize;
    fn predict_proba(&self, inputs: &[f32]) -> Result<Matrix>;
    fn predict_proba_mc(&self, inputs: &[f32], t_passes: usize, seed: u64) -> Result<Vec<Matrix>>;
    fn embed(&self, inputs: &[f32]) -> Result<Matrix>;

    /// Mean 0-1 loss over `data`.
    fn zero_one_risk(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let probs = self.predict_proba(data.features())?;
        let wrong = data.labels().iter().enumerate().filter(|&(r, &y)| probs.argmax_row(r) != y).count();
        Ok(wrong as f64 / data.len() as f64)
    }
}

/// Produces trained models for grid architectures.
pub trait Trainer {
    type Model: Classifier;

    /// Fresh initialization of `arch` trained on `data` (seeded by `cfg.seed`).
    fn fit(&self, arch: ArchPoint, data: &Dataset, cfg: &TrainConfig) -> Result<Self::Model>;

    /// Trains independent candidates; results are returned in input order.
    fn fit_candidates(&self, jobs: &[(ArchPoint, TrainConfig)], data: &Dataset) -> Vec<Result<Self::Model>> {
        jobs.iter().map(|(a, cfg)| self.fit(*a, data, cfg)).collect()
    }
}

impl Classifier for ModelHandle {
    fn param_count(&self) -> usize {
        ModelHandle::param_count(self)
    }

    fn epochs_trained(&self) -> usize {
        ModelHandle::epochs_trained(self)
    }

    fn predict_proba(&self, inputs: &[f32]) -> Result<Matrix> {
        ModelHandle::predict_proba(self, inputs)
    }

    fn predict_proba_mc(&self, inputs: &[f32], t_passes: usize, seed: u64) -> Result<Vec<Matrix>> {
        ModelHandle::predict_proba_mc(self, inputs, t_passes, seed)
    }

    fn embed(&self, inputs: &[f32]) -> Result<Matrix> {
        ModelHandle::embed(self, inputs)
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn param_count(&self) -> usize {
        (**self).param_count()
    }

    fn epochs_trained(&self) -> usize {
        (**self).epochs_trained()
    }

    fn predict_proba(&self, inputs: &[f32]) -> Result<Matrix> {
        (**self).predict_proba(inputs)
    }

    fn predict_proba_mc(&self, inputs: &[f32], t_passes: usize, seed: u64) -> Result<Vec<Matrix>> {
        (**self).predict_proba_mc(inputs, t_passes, seed)
    }

    fn embed(&self, inputs: &[f32]) -> Result<Matrix> {
        (**self).embed(inputs)
    }

    fn zero_one_risk(&self, data: &Dataset) -> Result<f64> {
        (**self).zero_one_risk(data)
    }
}

/// Trains the residual networks of [`crate::nn`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetTrainer {
    pub block: BlockSpec,
    pub input_shape: InputShape,
    pub n_classes: usize,
    pub dropout_rate: f64,
}

impl NetTrainer {
    pub fn spec(&self, arch: ArchPoint) -> Result<NetworkSpec> {
        NetworkSpec::new(arch, self.block, self.input_shape, self.n_classes, self.dropout_rate)
    }
}

impl Trainer for NetTrainer {
    type Model = ModelHandle;

    fn fit(&self, arch: ArchPoint, data: &Dataset, cfg: &TrainConfig) -> Result<ModelHandle> {
        let model = nn::instantiate(&self.spec(arch)?, rng::derive(cfg.seed, &[0]))?;
        nn::train(model, data, cfg)
    }
}

/// Disjoint labeled / unlabeled index sets over the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    round: usize,
}

impl PoolState {
    /// Everything unlabeled, round 0.
    pub fn new(pool_size: usize) -> Self {
        PoolState { labeled: Vec::new(), unlabeled: (0..pool_size).collect(), round: 0 }
    }

    /// Indices in acquisition order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    /// Ascending.
    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn pool_size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Moves `indices` from the unlabeled to the labeled set. Every index must
    /// currently be unlabeled and appear once.
    pub fn acquire(&mut self, indices: &[usize]) -> Result<()> {
        let size = self.pool_size();
        let mut incoming = vec![false; size];
        for &i in indices {
            if i >= size || incoming[i] {
                return Err(Error::Invariant(format!("index {i} queried twice or out of range")));
            }
            incoming[i] = true;
        }
        let before = self.unlabeled.len();
        self.unlabeled.retain(|&i| !incoming[i]);
        if before - self.unlabeled.len() != indices.len() {
            return Err(Error::Invariant("queried an index that is already labeled".into()));
        }
        self.labeled.extend_from_slice(indices);
        Ok(())
    }

    pub fn advance(&mut self) {
        self.round += 1;
    }
}

/// One step of the batch-size schedule: from `threshold` labels on, query `b`.
/// Serialized as the pair `[threshold, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct BatchStep {
    pub threshold: usize,
    pub b: usize,
}

impl From<(usize, usize)> for BatchStep {
    fn from((threshold, b): (usize, usize)) -> Self {
        BatchStep { threshold, b }
    }
}

impl From<BatchStep> for (usize, usize) {
    fn from(s: BatchStep) -> Self {
        (s.threshold, s.b)
    }
}

/// Missing keys take their [`Default`] values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Size of the random initial labeled set.
    pub k: usize,
    pub batch_schedule: Vec<BatchStep>,
    /// Maximum number of labels.
    pub budget: usize,
    /// Search iterations per round; 0 keeps the initial architecture fixed.
    pub t_inas: usize,
    pub train_cfg: TrainConfig,
    /// Candidate training during the search (premature evaluation).
    pub candidate_train_cfg: TrainConfig,
    pub val_fraction: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub mc_passes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train_cfg = TrainConfig::default();
        let candidate_train_cfg = train_cfg.truncated(train_cfg.epochs / 4);
        RunConfig {
            k: 50,
            batch_schedule: vec![BatchStep { threshold: 0, b: 25 }],
            budget: 500,
            t_inas: 1,
            train_cfg,
            candidate_train_cfg,
            val_fraction: 0.2,
            strategy: Strategy::SoftmaxResponse,
            seed: 0,
            mc_passes: DEFAULT_MC_PASSES,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        if self.budget < self.k {
            return Err(Error::invalid("budget must be >= k"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::invalid("val_fraction must lie in (0, 1)"));
        }
        if self.mc_passes == 0 {
            return Err(Error::invalid("mc_passes must be >= 1"));
        }
        let Some(first) = self.batch_schedule.first() else {
            return Err(Error::invalid("batch_schedule must not be empty"));
        };
        if first.threshold > self.k {
            return Err(Error::invalid("first batch_schedule threshold must be <= k"));
        }
        if self.batch_schedule.iter().any(|s| s.b == 0) {
            return Err(Error::invalid("batch sizes must be >= 1"));
        }
        if self.batch_schedule.windows(2).any(|w| w[0].threshold >= w[1].threshold) {
            return Err(Error::invalid("batch_schedule thresholds must be strictly increasing"));
        }
        self.train_cfg.validate()?;
        self.candidate_train_cfg.validate()
    }

    /// Scheduled batch size once `labels` labels are in hand.
    pub fn batch_size(&self, labels: usize) -> usize {
        self.batch_schedule.iter().rev().find(|s| s.threshold <= labels).map_or(0, |s| s.b)
    }

    /// Labeled-set sizes of every round, derived from the schedule alone.
    pub fn label_grid(&self, pool_size: usize) -> Vec<usize> {
        let mut grid = vec![self.k];
        let mut m = self.k;
        while m < self.budget && m < pool_size {
            m += self.batch_size(m).min(self.budget - m).min(pool_size - m);
            grid.push(m);
        }
        grid
    }
}

/// Validation risk of one candidate in one search iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    pub iteration: usize,
    pub arch: ArchPoint,
    pub val_risk: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub arch: ArchPoint,
    pub candidates: Vec<CandidateEval>,
    /// Search iterations actually run.
    pub iterations: usize,
}

impl SearchOutcome {
    /// Validation risk of the selected architecture in the last iteration.
    pub fn val_risk(&self) -> Option<f64> {
        let last = self.candidates.last()?.iteration;
        self.candidates.iter().find(|c| c.iteration == last && c.arch == self.arch).map(|c| c.val_risk)
    }

    pub fn candidate_epochs(&self) -> usize {
        self.candidates.iter().map(|c| c.epochs).sum()
    }
}

/// Stratified split of `data` into training and validation parts with
/// `round(val_fraction * |data|)` validation samples, at least one per class.
pub fn split_train_val(data: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = rng::prng(seed);
    let (train, val) = data::stratified_split(data.labels(), data.n_classes(), val_fraction, &mut rng)?;
    Ok((data.subset(&train)?, data.subset(&val)?))
}

/// Lower risk wins; ties go to the shallower network, then to fewer stacks.
fn better(grid: &SearchGrid, a: (ArchPoint, f64), b: (ArchPoint, f64)) -> bool {
    a.1.total_cmp(&b.1)
        .then(grid.depth(a.0).cmp(&grid.depth(b.0)))
        .then(a.0.j.cmp(&b.0.j))
        .is_lt()
}

/// Incremental search from `a_prev` on the labeled set `data`.
pub fn inas_search<T: Trainer + ?Sized>(
    trainer: &T,
    data: &Dataset,
    a_prev: ArchPoint,
    grid: &SearchGrid,
    cfg: &RunConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    grid.check(a_prev)?;
    if cfg.t_inas == 0 {
        return Ok(SearchOutcome { arch: a_prev, candidates: Vec::new(), iterations: 0 });
    }
    let (train, val) = split_train_val(data, cfg.val_fraction, rng::derive(seed, &[tag::SPLIT]))?;
    let mut current = a_prev;
    let mut candidates = Vec::new();
    let mut iterations = 0;
    for it in 0..cfg.t_inas {
        iterations += 1;
        let archs = arch::neighbors(grid, current)?;
        let jobs: Vec<(ArchPoint, TrainConfig)> = archs
            .iter()
            .map(|a| {
                let s = rng::derive(seed, &[tag::CANDIDATE, it as u64, a.i as u64, a.j as u64]);
                (*a, cfg.candidate_train_cfg.with_seed(s))
            })
            .collect();
        let models = trainer.fit_candidates(&jobs, &train);
        let mut best: Option<(ArchPoint, f64)> = None;
        for (a, model) in archs.iter().zip(models) {
            let model = model?;
            let risk = model.zero_one_risk(&val)?;
            candidates.push(CandidateEval { iteration: it, arch: *a, val_risk: risk, epochs: model.epochs_trained() });
            if best.map_or(true, |b| better(grid, (*a, risk), b)) {
                best = Some((*a, risk));
            }
        }
        let (winner, _) = best.expect("neighbors always contains the current architecture");
        if winner == current {
            break;
        }
        current = winner;
    }
    Ok(SearchOutcome { arch: current, candidates, iterations })
}

/// Per-round log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labels_used: usize,
    pub arch: ArchPoint,
    pub depth: usize,
    pub params: usize,
    pub candidates: Vec<CandidateEval>,
    /// Validation risk of `arch` in the search (absent for fixed runs).
    pub val_risk: Option<f64>,
    pub test_error: f64,
    pub wall_time_s: f64,
    pub candidate_epochs: usize,
    pub final_epochs: usize,
    /// Pool indices queried at the end of this round.
    pub queried: Vec<usize>,
}

/// Hooks into a running loop: a clock for wall times and a per-round callback.
pub trait RoundObserver<M> {
    /// Seconds since an arbitrary origin.
    fn now(&mut self) -> f64 {
        0.0
    }

    fn on_round(&mut self, _record: &RoundRecord, _model: &M) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing; wall times are reported as zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct Silent;

impl<M> RoundObserver<M> for Silent {}

pub struct RunOutcome<M> {
    pub rounds: Vec<RoundRecord>,
    pub final_model: M,
    pub pool: PoolState,
}

/// Active learning with per-round architecture search, without observer.
pub fn run_active<T: Trainer + ?Sized>(
    trainer: &T,
    oracle: &mut OracleView,
    test: &Dataset,
    a0: ArchPoint,
    grid: &SearchGrid,
    cfg: &RunConfig,
) -> Result<RunOutcome<T::Model>> {
    run_active_with(trainer, oracle, test, a0, grid, cfg, &mut Silent)
}

/// Active learning with per-round architecture search.
///
/// Labels are only read through `oracle`, and only for revealed indices; the
/// loop reveals the random seed set and every queried batch.
pub fn run_active_with<T: Trainer + ?Sized, O: RoundObserver<T::Model> + ?Sized>(
    trainer: &T,
    oracle: &mut OracleView,
    test: &Dataset,
    a0: ArchPoint,
    grid: &SearchGrid,
    cfg: &RunConfig,
    observer: &mut O,
) -> Result<RunOutcome<T::Model>> {
    cfg.validate()?;
    grid.check(a0)?;
    if cfg.budget > oracle.len() {
        return Err(Error::invalid(format!("budget {} exceeds pool size {}", cfg.budget, oracle.len())));
    }
    let mut pool = PoolState::new(oracle.len());
    let seed_set = query::random_query(pool.unlabeled(), cfg.k, rng::derive(cfg.seed, &[tag::SEED_SET]))?;
    pool.acquire(&seed_set)?;
    oracle.reveal(&seed_set)?;
    pool.advance();

    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut a_prev = a0;
    loop {
        let t = pool.round();
        let started = observer.now();
        let labeled = oracle.labeled_subset(pool.labeled())?;
        let search = inas_search(trainer, &labeled, a_prev, grid, cfg, rng::derive(cfg.seed, &[t as u64]))?;
        let a_t = search.arch;
        check_monotone(grid, a_prev, a_t, cfg.t_inas)?;

        let final_cfg = cfg.train_cfg.with_seed(rng::derive(cfg.seed, &[tag::FINAL, t as u64]));
        let model = trainer.fit(a_t, &labeled, &final_cfg)?;
        let test_error = model.zero_one_risk(test)?;
        let labels_used = pool.labeled().len();

        let remaining = cfg.budget - labels_used.min(cfg.budget);
        let done = remaining == 0 || pool.unlabeled().is_empty();
        let queried = if done {
            Vec::new()
        } else {
            let b = cfg.batch_size(labels_used).min(remaining).min(pool.unlabeled().len());
            let params = QueryParams { mc_passes: cfg.mc_passes, seed: rng::derive(cfg.seed, &[tag::QUERY, t as u64]) };
            let picked = query::select_batch(cfg.strategy, &model, oracle, pool.labeled(), pool.unlabeled(), b, params)?;
            if picked.len() != b {
                return Err(Error::Invariant(format!("strategy returned {} of {b} indices", picked.len())));
            }
            pool.acquire(&picked)?;
            oracle.reveal(&picked)?;
            picked
        };

        let record = RoundRecord {
            round: t,
            labels_used,
            arch: a_t,
            depth: grid.depth(a_t),
            params: model.param_count(),
            val_risk: search.val_risk(),
            candidate_epochs: search.candidate_epochs(),
            candidates: search.candidates,
            test_error,
            wall_time_s: observer.now() - started,
            final_epochs: model.epochs_trained(),
            queried,
        };
        observer.on_round(&record, &model)?;
        rounds.push(record);
        a_prev = a_t;
        if done {
            return Ok(RunOutcome { rounds, final_model: model, pool });
        }
        pool.advance();
    }
}

fn check_monotone(grid: &SearchGrid, prev: ArchPoint, next: ArchPoint, t_inas: usize) -> Result<()> {
    if grid.depth(next) < grid.depth(prev) {
        return Err(Error::Invariant(format!("architecture shrank from {prev} to {next}")));
    }
    match arch::expansion_distance(grid, prev, next) {
        Some(steps) if steps <= t_inas => Ok(()),
        _ => Err(Error::Invariant(format!("{next} is not within {t_inas} expansion steps of {prev}"))),
    }
}

/// Short label of a run's architecture mode, used in outputs.
pub fn arch_mode(cfg: &RunConfig) -> String {
    if cfg.t_inas == 0 {
        "fixed".into()
    } else {
        "inas".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::BlockKind;

    /// Model whose validation risk is dictated by a function of its
    /// architecture; predictions are uniform.
    struct Scripted {
        arch: ArchPoint,
        risk: fn(ArchPoint) -> f64,
        epochs: usize,
    }

    impl Classifier for Scripted {
        fn param_count(&self) -> usize {
            self.arch.i * 10 + self.arch.j
        }
        fn epochs_trained(&self) -> usize {
            self.epochs
        }
        fn predict_proba(&self, inputs: &[f32]) -> Result<Matrix> {
            let n = inputs.len() / 2;
            Ok(Matrix::from_vec(n, 2, vec![0.5; 2 * n]))
        }
        fn predict_proba_mc(&self, inputs: &[f32], t: usize, _: u64) -> Result<Vec<Matrix>> {
            Ok((0..t).map(|_| self.predict_proba(inputs).unwrap()).collect())
        }
        fn embed(&self, inputs: &[f32]) -> Result<Matrix> {
            let n = inputs.len() / 2;
            Ok(Matrix::from_vec(n, 2, inputs.iter().map(|&v| f64::from(v)).collect()))
        }
        fn zero_one_risk(&self, _: &Dataset) -> Result<f64> {
            Ok((self.risk)(self.arch))
        }
    }

    struct ScriptedTrainer(fn(ArchPoint) -> f64);

    impl Trainer for ScriptedTrainer {
        type Model = Scripted;
        fn fit(&self, arch: ArchPoint, _: &Dataset, cfg: &TrainConfig) -> Result<Scripted> {
            Ok(Scripted { arch, risk: self.0, epochs: cfg.epochs })
        }
    }

    fn grid(nb: usize, ns: usize) -> SearchGrid {
        SearchGrid::new(BlockSpec::reference(BlockKind::ResidualDense, 4), nb, ns).unwrap()
    }

    fn labeled(n_per_class: usize) -> Dataset {
        data::synth_blobs(2, 2, n_per_class, 1.0, 3).unwrap()
    }

    fn deeper_is_better(a: ArchPoint) -> f64 {
        1.0 / (1.0 + (a.i * a.j * 2 + 2) as f64)
    }

    fn shallow_is_better(a: ArchPoint) -> f64 {
        (a.i * a.j) as f64 * 0.01
    }

    fn flat(_: ArchPoint) -> f64 {
        0.25
    }

    #[test]
    fn corner_is_a_fixed_point() {
        let g = grid(3, 2);
        let cfg = RunConfig { t_inas: 3, ..RunConfig::default() };
        let out = inas_search(&ScriptedTrainer(deeper_is_better), &labeled(20), g.largest(), &g, &cfg, 1).unwrap();
        assert_eq!(out.arch, g.largest());
        assert_eq!(out.iterations, 1);
        assert_eq!(out.candidates.len(), 1);
    }

    #[test]
    fn decreasing_risk_takes_the_deepest_candidate() {
        let g = grid(12, 5);
        let cfg = RunConfig { t_inas: 1, ..RunConfig::default() };
        let out =
            inas_search(&ScriptedTrainer(deeper_is_better), &labeled(20), ArchPoint::new(2, 4), &g, &cfg, 1).unwrap();
        // (3,4) has depth 26, (2,5) has depth 22
        assert_eq!(out.arch, ArchPoint::new(3, 4));
        let cfg = RunConfig { t_inas: 3, ..cfg };
        let out =
            inas_search(&ScriptedTrainer(deeper_is_better), &labeled(20), ArchPoint::new(1, 1), &g, &cfg, 1).unwrap();
        assert_eq!(out.iterations, 3);
        // (1,1) -> (2,1) -> (2,2) -> (3,2), the last on the shallower-tie rule
        assert_eq!(out.arch, ArchPoint::new(3, 2));
    }

    #[test]
    fn best_previous_breaks_early() {
        let g = grid(12, 5);
        let cfg = RunConfig { t_inas: 5, ..RunConfig::default() };
        let out =
            inas_search(&ScriptedTrainer(shallow_is_better), &labeled(20), ArchPoint::new(2, 2), &g, &cfg, 1).unwrap();
        assert_eq!(out.arch, ArchPoint::new(2, 2));
        assert_eq!(out.iterations, 1);
        assert_eq!(out.val_risk(), Some(0.04));
    }

    #[test]
    fn ties_prefer_shallower() {
        let g = grid(12, 5);
        let cfg = RunConfig { t_inas: 1, ..RunConfig::default() };
        let out = inas_search(&ScriptedTrainer(flat), &labeled(20), ArchPoint::new(2, 2), &g, &cfg, 1).unwrap();
        assert_eq!(out.arch, ArchPoint::new(2, 2));
    }

    #[test]
    fn infeasible_split_is_reported() {
        let g = grid(3, 3);
        let cfg = RunConfig::default();
        let mut d = labeled(5);
        d = d.subset(&[0, 1, 2, 3, 5]).unwrap();
        let err = inas_search(&ScriptedTrainer(flat), &d, ArchPoint::new(1, 1), &g, &cfg, 1).unwrap_err();
        assert!(matches!(err, Error::SplitInfeasible(_)));
    }

    #[test]
    fn fixed_mode_skips_the_search() {
        let g = grid(3, 3);
        let cfg = RunConfig { t_inas: 0, ..RunConfig::default() };
        let out = inas_search(&ScriptedTrainer(flat), &labeled(5), ArchPoint::new(2, 2), &g, &cfg, 1).unwrap();
        assert_eq!(out.arch, ArchPoint::new(2, 2));
        assert!(out.candidates.is_empty());
    }

    #[test]
    fn split_sizes() {
        let d = labeled(50);
        let (tr, va) = split_train_val(&d, 0.2, 4).unwrap();
        assert_eq!((tr.len(), va.len()), (80, 20));
        assert_eq!(va.class_counts(), vec![10, 10]);
        assert_eq!(split_train_val(&d, 0.2, 4).unwrap(), (tr, va));
    }

    #[test]
    fn schedule_lookup() {
        let cfg = RunConfig {
            k: 2000,
            budget: 50_000,
            batch_schedule: vec![BatchStep { threshold: 0, b: 2000 }, BatchStep { threshold: 10_000, b: 5000 }],
            ..RunConfig::default()
        };
        assert_eq!(cfg.batch_size(2000), 2000);
        assert_eq!(cfg.batch_size(9999), 2000);
        assert_eq!(cfg.batch_size(10_000), 5000);
        let grid = cfg.label_grid(60_000);
        assert_eq!(grid[..6], [2000, 4000, 6000, 8000, 10_000, 15_000]);
        assert_eq!(*grid.last().unwrap(), 50_000);
    }

    #[test]
    fn budget_equal_to_k_is_a_single_round() {
        let data = data::synth_blobs(2, 2, 40, 1.0, 1).unwrap();
        let (_, mut oracle, test) = data::make_pool(&data, 0.25, 1).unwrap();
        let cfg = RunConfig { k: 20, budget: 20, ..RunConfig::default() };
        let out =
            run_active(&ScriptedTrainer(flat), &mut oracle, &test, ArchPoint::new(1, 1), &grid(3, 3), &cfg).unwrap();
        assert_eq!(out.rounds.len(), 1);
        assert!(out.rounds[0].queried.is_empty());
        assert_eq!(out.pool.labeled().len(), 20);
    }

    #[test]
    fn final_batch_is_truncated_to_the_budget() {
        let data = data::synth_blobs(2, 2, 40, 1.0, 1).unwrap();
        let (_, mut oracle, test) = data::make_pool(&data, 0.25, 1).unwrap();
        let cfg = RunConfig {
            k: 10,
            budget: 33,
            batch_schedule: vec![BatchStep { threshold: 0, b: 10 }],
            strategy: Strategy::Coreset,
            ..RunConfig::default()
        };
        let out =
            run_active(&ScriptedTrainer(flat), &mut oracle, &test, ArchPoint::new(1, 1), &grid(3, 3), &cfg).unwrap();
        let used: Vec<usize> = out.rounds.iter().map(|r| r.labels_used).collect();
        assert_eq!(used, vec![10, 20, 30, 33]);
        assert_eq!(used, cfg.label_grid(oracle.len()));
        assert_eq!(oracle.reveal_count(), 33);
        assert_eq!(oracle.faults(), 0);
    }

    #[test]
    fn pool_acquire_rejects_repeats() {
        let mut p = PoolState::new(5);
        p.acquire(&[1, 3]).unwrap();
        assert_eq!(p.unlabeled(), &[0, 2, 4]);
        assert!(p.acquire(&[1]).is_err());
        assert!(p.acquire(&[2, 2]).is_err());
        assert_eq!(p.pool_size(), 5);
    }
}
