//! Datasets, synthetic blobs, stratified splits, pools and the label oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::active::PoolState;
use crate::rng::{self, Prng};
use crate::{Error, Result};

/// Per-sample feature layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    Flat { dim: usize },
    /// Row-major `height x width x channels`.
    Image { height: usize, width: usize, channels: usize },
}

impl InputShape {
    pub fn len(&self) -> usize {
        match *self {
            InputShape::Flat { dim } => dim,
            InputShape::Image { height, width, channels } => height * width * channels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Immutable labeled dataset; features are stored as `f32`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    shape: InputShape,
    features: Vec<f32>,
    labels: Vec<usize>,
    n_classes: usize,
    /// Original label value of each dense class id.
    class_values: Vec<i64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        shape: InputShape,
        features: Vec<f32>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let class_values = (0..n_classes as i64).collect();
        Self::with_class_values(name, shape, features, labels, n_classes, class_values)
    }

    pub fn with_class_values(
        name: impl Into<String>,
        shape: InputShape,
        features: Vec<f32>,
        labels: Vec<usize>,
        n_classes: usize,
        class_values: Vec<i64>,
    ) -> Result<Self> {
        let dim = shape.len();
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be >= 1"));
        }
        if labels.is_empty() {
            return Err(Error::EmptyData);
        }
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch { expected: labels.len() * dim, got: features.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::invalid(format!("class id {bad} >= n_classes {n_classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        if class_values.len() != n_classes {
            return Err(Error::invalid("class value mapping must have n_classes entries"));
        }
        Ok(Dataset { name: name.into(), shape, features, labels, n_classes, class_values })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> InputShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_values(&self) -> &[i64] {
        &self.class_values
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Concatenated feature rows of `indices`.
    pub fn gather_features(&self, indices: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    /// New dataset made of the rows `indices` (in that order); keeps the class
    /// mapping. Fails on an empty selection.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::with_class_values(
            self.name.clone(),
            self.shape,
            self.gather_features(indices),
            labels,
            self.n_classes,
            self.class_values.clone(),
        )
    }
}

/// Isotropic Gaussian blobs: class `c` is drawn around a center whose
/// coordinates are standard normal, with per-coordinate standard deviation
/// `spread`. Rows are class-major.
pub fn synth_blobs(n_classes: usize, dim: usize, n_per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_classes == 0 || dim == 0 || n_per_class == 0 {
        return Err(Error::invalid("n_classes, dim and n_per_class must be positive"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::invalid("spread must be finite and non-negative"));
    }
    let mut rng = rng::prng(seed);
    let centers: Vec<Vec<f64>> =
        (0..n_classes).map(|_| (0..dim).map(|_| rng::normal(&mut rng)).collect()).collect();
    let mut features = Vec::with_capacity(n_classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * n_per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            for &m in center {
                features.push((m + spread * rng::normal(&mut rng)) as f32);
            }
            labels.push(c);
        }
    }
    Dataset::new(format!("blobs-{n_classes}x{dim}"), InputShape::Flat { dim }, features, labels, n_classes)
}

/// Class centers used by [`synth_blobs`] for the same arguments.
pub fn blob_centers(n_classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::prng(seed);
    (0..n_classes).map(|_| (0..dim).map(|_| rng::normal(&mut rng)).collect()).collect()
}

/// Number of held-out samples per class for a stratified split holding out
/// `round(fraction * n)` samples, with at least one held-out and one kept
/// sample for every class present.
fn held_out_quota(counts: &[usize], fraction: f64) -> Result<Vec<usize>> {
    let n: usize = counts.iter().sum();
    let present: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    if let Some(&c) = present.iter().find(|&&c| counts[c] < 2) {
        return Err(Error::SplitInfeasible(format!("class {c} has fewer than 2 samples")));
    }
    let total = libm::round(fraction * n as f64) as usize;
    if total < present.len() {
        return Err(Error::SplitInfeasible(format!(
            "{total} held-out samples cannot cover {} classes",
            present.len()
        )));
    }
    if total > n - present.len() {
        return Err(Error::SplitInfeasible(format!("{total} held-out samples leave a class empty")));
    }
    let mut quota = vec![0usize; counts.len()];
    for &c in &present {
        let exact = fraction * counts[c] as f64;
        quota[c] = (libm::floor(exact) as usize).clamp(1, counts[c] - 1);
    }
    let mut assigned: usize = quota.iter().sum();
    while assigned > total {
        // take back from the class holding the most
        let c = *present.iter().filter(|&&c| quota[c] > 1).max_by_key(|&&c| (quota[c], usize::MAX - c)).ok_or_else(
            || Error::SplitInfeasible("cannot honor one held-out sample per class".into()),
        )?;
        quota[c] -= 1;
        assigned -= 1;
    }
    if assigned < total {
        // largest remainder first, smaller class id on ties
        let mut order: Vec<usize> = present.clone();
        let rem = |c: usize| fraction * counts[c] as f64 - quota[c] as f64;
        order.sort_by(|&a, &b| rem(b).partial_cmp(&rem(a)).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
        while assigned < total {
            let mut progressed = false;
            for &c in &order {
                if assigned == total {
                    break;
                }
                if quota[c] < counts[c] - 1 {
                    quota[c] += 1;
                    assigned += 1;
                    progressed = true;
                }
            }
            if !progressed {
                return Err(Error::SplitInfeasible("no room left to hold out samples".into()));
            }
        }
    }
    Ok(quota)
}

/// Stratified random split of positions `0..labels.len()`. Returns
/// `(kept, held_out)`, each sorted ascending.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    rng: &mut Prng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid("split fraction must lie in (0, 1)"));
    }
    if labels.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (pos, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::invalid(format!("class id {y} >= n_classes {n_classes}")));
        }
        by_class[y].push(pos);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let quota = held_out_quota(&counts, fraction)?;
    let mut kept = Vec::with_capacity(labels.len());
    let mut held = Vec::new();
    for (members, q) in by_class.iter_mut().zip(quota) {
        members.shuffle(rng);
        held.extend_from_slice(&members[..q]);
        kept.extend_from_slice(&members[q..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    Ok((kept, held))
}

/// Simulated annotator over the pool: labels can only be read once revealed.
#[derive(Debug, Clone)]
pub struct OracleView {
    pool: Dataset,
    revealed: Vec<bool>,
    reveal_count: usize,
    faults: usize,
}

impl OracleView {
    pub fn new(pool: Dataset) -> Self {
        let n = pool.len();
        OracleView { pool, revealed: vec![false; n], reveal_count: 0, faults: 0 }
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn shape(&self) -> InputShape {
        self.pool.shape()
    }

    pub fn n_classes(&self) -> usize {
        self.pool.n_classes()
    }

    /// Unlabeled feature access is always allowed.
    pub fn gather_features(&self, indices: &[usize]) -> Vec<f32> {
        self.pool.gather_features(indices)
    }

    /// Reveals labels; revealing an index twice is a no-op.
    pub fn reveal(&mut self, indices: &[usize]) -> Result<()> {
        for &i in indices {
            if i >= self.revealed.len() {
                return Err(Error::invalid(format!("pool index {i} out of range")));
            }
            if !self.revealed[i] {
                self.revealed[i] = true;
                self.reveal_count += 1;
            }
        }
        Ok(())
    }

    pub fn is_revealed(&self, i: usize) -> bool {
        self.revealed.get(i).copied().unwrap_or(false)
    }

    pub fn reveal_count(&self) -> usize {
        self.reveal_count
    }

    /// Number of attempted reads of unrevealed labels.
    pub fn faults(&self) -> usize {
        self.faults
    }

    pub fn label(&mut self, i: usize) -> Result<usize> {
        if self.is_revealed(i) {
            Ok(self.pool.labels[i])
        } else {
            self.faults += 1;
            Err(Error::Unrevealed(i))
        }
    }

    /// Labeled dataset of `indices`; every label must have been revealed.
    pub fn labeled_subset(&mut self, indices: &[usize]) -> Result<Dataset> {
        for &i in indices {
            self.label(i)?;
        }
        self.pool.subset(indices)
    }
}

/// Stratified test split (removed first), the rest becomes the unlabeled
/// pool behind an [`OracleView`].
pub fn make_pool(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(PoolState, OracleView, Dataset)> {
    let mut rng = rng::prng(rng::derive(seed, &[rng::tag::POOL]));
    let (pool_idx, test_idx) = stratified_split(dataset.labels(), dataset.n_classes(), test_fraction, &mut rng)?;
    let pool = dataset.subset(&pool_idx)?;
    let test = dataset.subset(&test_idx)?;
    let state = PoolState::new(pool.len());
    Ok((state, OracleView::new(pool), test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x: f64) -> f64 {
        x * x
    }

    fn labels_with_counts(counts: &[usize]) -> Vec<usize> {
        counts.iter().enumerate().flat_map(|(c, &n)| core::iter::repeat(c).take(n)).collect()
    }

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let d = synth_blobs(4, 2, 500, 0.5, 3).unwrap();
        assert_eq!(d.len(), 2000);
        assert_eq!(d.class_counts(), vec![500; 4]);
        assert_eq!(d, synth_blobs(4, 2, 500, 0.5, 3).unwrap());
    }

    #[test]
    fn zero_spread_collapses_to_centers() {
        let d = synth_blobs(3, 4, 5, 0.0, 9).unwrap();
        let centers = blob_centers(3, 4, 9);
        for i in 0..d.len() {
            let c = &centers[d.labels()[i]];
            for (x, m) in d.row(i).iter().zip(c) {
                assert_eq!(*x, *m as f32);
            }
        }
    }

    #[test]
    fn nearest_center_separates_tight_blobs() {
        let (k, dim, seed) = (4, 8, 21);
        let d = synth_blobs(k, dim, 100, 0.05, seed).unwrap();
        let centers = blob_centers(k, dim, seed);
        for i in 0..d.len() {
            let nearest = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = d.row(i).iter().zip(&centers[a]).map(|(x, m)| sq(*x as f64 - m)).sum();
                    let db: f64 = d.row(i).iter().zip(&centers[b]).map(|(x, m)| sq(*x as f64 - m)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(nearest, d.labels()[i]);
        }
    }

    #[test]
    fn stratified_split_balanced_example() {
        let labels = labels_with_counts(&[50, 50]);
        let mut rng = rng::prng(1);
        let (kept, held) = stratified_split(&labels, 2, 0.2, &mut rng).unwrap();
        assert_eq!((kept.len(), held.len()), (80, 20));
        assert_eq!(held.iter().filter(|&&p| labels[p] == 0).count(), 10);
        assert_eq!(held.iter().filter(|&&p| labels[p] == 1).count(), 10);
    }

    #[test]
    fn stratified_split_rejects_uncoverable_class() {
        let labels = labels_with_counts(&[50, 50]);
        let mut rng = rng::prng(1);
        assert!(matches!(stratified_split(&labels, 2, 0.01, &mut rng), Err(Error::SplitInfeasible(_))));
        let lonely = labels_with_counts(&[10, 1]);
        assert!(matches!(stratified_split(&lonely, 2, 0.3, &mut rng), Err(Error::SplitInfeasible(_))));
    }

    #[test]
    fn make_pool_sizes_and_oracle() {
        let d = synth_blobs(4, 2, 500, 1.0, 5).unwrap();
        let (state, mut oracle, test) = make_pool(&d, 0.25, 5).unwrap();
        assert_eq!(oracle.len(), 1500);
        assert_eq!(test.len(), 500);
        assert_eq!(state.unlabeled().len(), 1500);
        assert!(matches!(oracle.label(3), Err(Error::Unrevealed(3))));
        assert_eq!(oracle.faults(), 1);
        oracle.reveal(&[3]).unwrap();
        oracle.reveal(&[3]).unwrap();
        assert_eq!(oracle.reveal_count(), 1);
        assert!(oracle.label(3).is_ok());
    }

    #[test]
    fn dataset_validation() {
        let shape = InputShape::Flat { dim: 2 };
        assert!(matches!(Dataset::new("x", shape, vec![], vec![], 2), Err(Error::EmptyData)));
        assert!(Dataset::new("x", shape, vec![0.0; 3], vec![0], 2).is_err());
        assert!(Dataset::new("x", shape, vec![0.0, f32::NAN], vec![0], 2).is_err());
        assert!(Dataset::new("x", shape, vec![0.0; 2], vec![2], 2).is_err());
    }
}
