//! Learning curves: area under the error curve, relative gain over a passive
//! twin, and pointwise aggregation over repetitions.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Test error as a function of the number of labels used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    points: Vec<(f64, f64)>,
}

impl LearningCurve {
    /// Requires strictly increasing `m` and errors in `[0, 1]`.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|&(m, e)| !m.is_finite() || !(0.0..=1.0).contains(&e)) {
            return Err(Error::invalid("curve points need finite m and error in [0, 1]"));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::invalid("curve m values must be strictly increasing"));
        }
        Ok(LearningCurve { points })
    }

    pub fn from_xy(m: &[f64], e: &[f64]) -> Result<Self> {
        if m.len() != e.len() {
            return Err(Error::ShapeMismatch { expected: m.len(), got: e.len() });
        }
        Self::new(m.iter().copied().zip(e.iter().copied()).collect())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn last_m(&self) -> Option<f64> {
        self.points.last().map(|p| p.0)
    }

    /// Same errors with every `m` multiplied by `factor > 0`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid("rescale factor must be positive"));
        }
        Self::new(self.points.iter().map(|&(m, e)| (m * factor, e)).collect())
    }
}

/// Trapezoidal area under `curve` from its first point to `m_max`, with
/// linear interpolation when `m_max` falls between two points.
pub fn auc(curve: &LearningCurve, m_max: f64) -> Result<f64> {
    let pts = curve.points();
    if pts.len() < 2 {
        return Err(Error::invalid("auc needs at least two points"));
    }
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    if !(m_max > first && m_max <= last) {
        return Err(Error::CurveRange { m: m_max, first, last });
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((m0, e0), (m1, e1)) = (w[0], w[1]);
        if m0 >= m_max {
            break;
        }
        if m1 <= m_max {
            area += (m1 - m0) * (e0 + e1) / 2.0;
        } else {
            let e = e0 + (e1 - e0) * (m_max - m0) / (m1 - m0);
            area += (m_max - m0) * (e0 + e) / 2.0;
        }
    }
    Ok(area)
}

/// Relative area reduction of `active` against its passive twin at budget `m`.
pub fn auc_gain(passive: &LearningCurve, active: &LearningCurve, m: f64) -> Result<f64> {
    let pa = auc(passive, m)?;
    if pa <= 0.0 {
        return Err(Error::ZeroPassiveAuc);
    }
    Ok(gain_from_areas(pa, auc(active, m)?))
}

pub fn gain_from_areas(passive_auc: f64, active_auc: f64) -> f64 {
    (passive_auc - active_auc) / passive_auc
}

/// Pointwise mean and standard error of the mean over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub labels: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub repetitions: usize,
    /// With a single repetition the SEM is undefined and reported as zero.
    pub sem_defined: bool,
}

impl CurveSummary {
    pub fn mean_curve(&self) -> Result<LearningCurve> {
        LearningCurve::from_xy(&self.labels, &self.mean)
    }
}

/// Requires every curve to share exactly the same `m` grid.
pub fn aggregate(curves: &[LearningCurve]) -> Result<CurveSummary> {
    let first = curves.first().ok_or(Error::EmptyData)?;
    let labels: Vec<f64> = first.labels().collect();
    if curves.iter().any(|c| !c.labels().eq(labels.iter().copied())) {
        return Err(Error::MismatchedGrids);
    }
    let r = curves.len();
    let mut mean = Vec::with_capacity(labels.len());
    let mut sem = Vec::with_capacity(labels.len());
    for p in 0..labels.len() {
        let mu = curves.iter().map(|c| c.points[p].1).sum::<f64>() / r as f64;
        mean.push(mu);
        if r > 1 {
            let ss: f64 = curves.iter().map(|c| (c.points[p].1 - mu) * (c.points[p].1 - mu)).sum();
            sem.push(libm::sqrt(ss / (r - 1) as f64) / libm::sqrt(r as f64));
        } else {
            sem.push(0.0);
        }
    }
    Ok(CurveSummary { labels, mean, sem, repetitions: r, sem_defined: r > 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(p: &[(f64, f64)]) -> LearningCurve {
        LearningCurve::new(p.to_vec()).unwrap()
    }

    #[test]
    fn worked_areas() {
        assert_eq!(auc(&c(&[(0.0, 0.5), (100.0, 0.5)]), 100.0).unwrap(), 50.0);
        assert_eq!(auc(&c(&[(0.0, 1.0), (100.0, 0.0)]), 100.0).unwrap(), 50.0);
        assert_eq!(auc(&c(&[(0.0, 1.0), (50.0, 0.5), (100.0, 0.5)]), 100.0).unwrap(), 62.5);
    }

    #[test]
    fn interpolates_inside_a_segment() {
        let curve = c(&[(0.0, 1.0), (100.0, 0.0)]);
        assert_eq!(auc(&curve, 50.0).unwrap(), 37.5);
    }

    #[test]
    fn range_errors() {
        let curve = c(&[(10.0, 1.0), (20.0, 0.0)]);
        assert!(matches!(auc(&curve, 30.0), Err(Error::CurveRange { .. })));
        assert!(matches!(auc(&curve, 10.0), Err(Error::CurveRange { .. })));
        assert!(auc(&c(&[(10.0, 1.0)]), 10.0).is_err());
    }

    #[test]
    fn gains() {
        let pa = c(&[(0.0, 0.5), (100.0, 0.5)]);
        assert_eq!(auc_gain(&pa, &pa, 100.0).unwrap(), 0.0);
        let half = c(&[(0.0, 0.25), (100.0, 0.25)]);
        assert_eq!(auc_gain(&pa, &half, 100.0).unwrap(), 0.5);
        let ac = c(&[(0.0, 0.4), (100.0, 0.4)]);
        assert!((auc_gain(&pa, &ac, 100.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(gain_from_areas(50.0, 40.0), 0.2);
        let zero = c(&[(0.0, 0.0), (100.0, 0.0)]);
        assert_eq!(auc_gain(&zero, &ac, 100.0), Err(Error::ZeroPassiveAuc));
    }

    #[test]
    fn aggregation() {
        let a = c(&[(1.0, 0.2), (2.0, 0.1)]);
        let s = aggregate(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert!(s.mean.iter().zip([0.2, 0.1]).all(|(m, e)| (m - e).abs() < 1e-15));
        assert!(s.sem.iter().all(|&v| v < 1e-15));
        let s = aggregate(&[c(&[(1.0, 0.2)]), c(&[(1.0, 0.4)])]).unwrap();
        assert!((s.mean[0] - 0.3).abs() < 1e-15);
        assert!((s.sem[0] - 0.1).abs() < 1e-12);
        let s = aggregate(&[a.clone()]).unwrap();
        assert_eq!(s.mean_curve().unwrap(), a);
        assert!(!s.sem_defined);
        assert_eq!(s.sem, vec![0.0, 0.0]);
        assert_eq!(aggregate(&[a, c(&[(1.0, 0.2), (3.0, 0.1)])]), Err(Error::MismatchedGrids));
    }

    #[test]
    fn invalid_curves() {
        assert!(LearningCurve::new(vec![(1.0, 0.2), (1.0, 0.3)]).is_err());
        assert!(LearningCurve::new(vec![(1.0, 1.2)]).is_err());
    }
}
