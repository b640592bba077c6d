//! Query functions `Q(f, S_t, U_t, b)`.
//!
//! Uncertainty strategies score every unlabeled point and take the `b` most
//! uncertain; coreset runs farthest-first traversal in embedding space;
//! random draws uniformly without replacement. Ties always go to the smaller
//! index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::active::Classifier;
use crate::data::OracleView;
use crate::rng;
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Number of stochastic passes used by MC-dropout when unspecified.
pub const DEFAULT_MC_PASSES: usize = 16;

const ROW_SUM_TOL: f64 = 1e-6;

/// Stable strategy identifiers, as used in configuration files and outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    SoftmaxResponse,
    McDropout,
    Coreset,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::SoftmaxResponse, Strategy::McDropout, Strategy::Coreset, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SoftmaxResponse => "softmax-response",
            Strategy::McDropout => "mc-dropout",
            Strategy::Coreset => "coreset",
            Strategy::Random => "random",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown query strategy `{s}`")))
    }
}

fn check_distribution(row: &[f64], r: usize) -> Result<()> {
    if row.is_empty() || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::MalformedProbabilities(format!("row {r} has negative or non-finite entries")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::MalformedProbabilities(format!("row {r} sums to {sum}")));
    }
    Ok(())
}

fn one_minus_max(row: &[f64]) -> f64 {
    1.0 - row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `1 - max_c p[n, c]` per row.
pub fn softmax_response_scores(probs: &Matrix) -> Result<Vec<f64>> {
    probs
        .iter_rows()
        .enumerate()
        .map(|(r, row)| {
            check_distribution(row, r)?;
            Ok(one_minus_max(row))
        })
        .collect()
}

/// `1 - max_c mean_t p_t[n, c]`: softmax response of the mean predictive
/// distribution over the stochastic passes.
pub fn mc_dropout_scores(passes: &[Matrix]) -> Result<Vec<f64>> {
    let first = passes.first().ok_or_else(|| Error::invalid("empty MC-dropout pass stack"))?;
    let (n, c) = (first.rows(), first.cols());
    let mut mean = Matrix::zeros(n, c);
    for pass in passes {
        if pass.rows() != n || pass.cols() != c {
            return Err(Error::ShapeMismatch { expected: n * c, got: pass.rows() * pass.cols() });
        }
        for (r, row) in pass.iter_rows().enumerate() {
            check_distribution(row, r)?;
        }
        for (m, p) in mean.as_mut_slice().iter_mut().zip(pass.as_slice()) {
            *m += p;
        }
    }
    let t = passes.len() as f64;
    mean.as_mut_slice().iter_mut().for_each(|m| *m /= t);
    Ok(mean.iter_rows().map(one_minus_max).collect())
}

/// Positions of the `b` largest scores, highest first; ties go to the
/// smaller position.
pub fn select_top_uncertain(scores: &[f64], b: usize) -> Result<Vec<usize>> {
    if b > scores.len() {
        return Err(Error::BatchTooLarge { requested: b, available: scores.len() });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
    order.truncate(b);
    Ok(order)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-center: `b` times, take the unlabeled row farthest (Euclidean)
/// from the labeled rows and the rows already taken. With no labeled rows the
/// first pick is row 0. Returns row positions into `unlabeled`.
pub fn coreset_select(labeled: &Matrix, unlabeled: &Matrix, b: usize) -> Result<Vec<usize>> {
    let n = unlabeled.rows();
    if b > n {
        return Err(Error::BatchTooLarge { requested: b, available: n });
    }
    if labeled.rows() > 0 && labeled.cols() != unlabeled.cols() {
        return Err(Error::ShapeMismatch { expected: unlabeled.cols(), got: labeled.cols() });
    }
    let mut min_dist = vec![f64::INFINITY; n];
    for (q, row) in unlabeled.iter_rows().enumerate() {
        for l in labeled.iter_rows() {
            let d = squared_distance(row, l);
            if d < min_dist[q] {
                min_dist[q] = d;
            }
        }
    }
    let mut taken = vec![false; n];
    let mut picks = Vec::with_capacity(b);
    for _ in 0..b {
        let mut best: Option<usize> = None;
        for q in 0..n {
            if taken[q] {
                continue;
            }
            if best.map_or(true, |p| min_dist[q] > min_dist[p]) {
                best = Some(q);
            }
        }
        let p = best.expect("b <= n leaves a candidate");
        taken[p] = true;
        picks.push(p);
        let center = unlabeled.row(p);
        for (q, row) in unlabeled.iter_rows().enumerate() {
            if !taken[q] {
                let d = squared_distance(row, center);
                if d < min_dist[q] {
                    min_dist[q] = d;
                }
            }
        }
    }
    Ok(picks)
}

/// Uniform sample of `b` entries of `unlabeled` without replacement.
pub fn random_query(unlabeled: &[usize], b: usize, seed: u64) -> Result<Vec<usize>> {
    if b > unlabeled.len() {
        return Err(Error::BatchTooLarge { requested: b, available: unlabeled.len() });
    }
    let mut rng = rng::prng(seed);
    Ok(index::sample(&mut rng, unlabeled.len(), b).into_iter().map(|p| unlabeled[p]).collect())
}

/// Strategy parameters beyond the batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryParams {
    pub mc_passes: usize,
    pub seed: u64,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams { mc_passes: DEFAULT_MC_PASSES, seed: 0 }
    }
}

/// Selects `b` pool indices from `unlabeled` with `strategy`, using the
/// current model. Only features are read from the oracle.
pub fn select_batch<M: Classifier + ?Sized>(
    strategy: Strategy,
    model: &M,
    oracle: &OracleView,
    labeled: &[usize],
    unlabeled: &[usize],
    b: usize,
    params: QueryParams,
) -> Result<Vec<usize>> {
    if b > unlabeled.len() {
        return Err(Error::BatchTooLarge { requested: b, available: unlabeled.len() });
    }
    let positions = match strategy {
        Strategy::Random => return random_query(unlabeled, b, params.seed),
        Strategy::SoftmaxResponse => {
            let probs = model.predict_proba(&oracle.gather_features(unlabeled))?;
            select_top_uncertain(&softmax_response_scores(&probs)?, b)?
        }
        Strategy::McDropout => {
            let passes = model.predict_proba_mc(&oracle.gather_features(unlabeled), params.mc_passes, params.seed)?;
            select_top_uncertain(&mc_dropout_scores(&passes)?, b)?
        }
        Strategy::Coreset => {
            let lab = model.embed(&oracle.gather_features(labeled))?;
            let unl = model.embed(&oracle.gather_features(unlabeled))?;
            coreset_select(&lab, &unl, b)?
        }
    };
    Ok(positions.into_iter().map(|p| unlabeled[p]).collect())
}
