//! Learning-curve comparison across run directories.
//!
//! Each active run is paired with the `random` run that has the same dataset,
//! architecture mode and seed (its passive twin).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use inas_core::curve::{self, CurveSummary, LearningCurve};
use inas_core::query::Strategy;

use crate::error::{AppError, Result};
use crate::runner::{self, RoundRow, RunInfo};
use crate::svg::{Scale, Svg, PALETTE};

#[derive(Debug, Clone)]
pub struct RunCurve {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub rows: Vec<RoundRow>,
    pub curve: LearningCurve,
}

impl RunCurve {
    pub fn load(dir: &Path) -> Result<Self> {
        let info = runner::read_run_info(dir)?;
        let rows = runner::read_rounds(dir)?;
        if rows.is_empty() {
            return Err(AppError::Data(format!("{}: no rounds recorded", dir.display())));
        }
        let m: Vec<f64> = rows.iter().map(|r| r.labels_used as f64).collect();
        let e: Vec<f64> = rows.iter().map(|r| r.test_error).collect();
        let curve = LearningCurve::from_xy(&m, &e).map_err(|err| AppError::Data(format!("{}: {err}", dir.display())))?;
        Ok(RunCurve { dir: dir.to_path_buf(), info, rows, curve })
    }

    fn twin_key(&self) -> (String, String, u64) {
        (self.info.dataset.name.clone(), self.info.arch_mode.clone(), self.info.seed)
    }

    pub fn group(&self) -> (String, String) {
        (self.info.strategy.clone(), self.info.arch_mode.clone())
    }
}

/// Loads every run directory in `dirs`; a directory without `rounds.csv` is
/// searched one level down.
pub fn load_runs(dirs: &[PathBuf]) -> Result<Vec<RunCurve>> {
    let mut runs = Vec::new();
    for dir in dirs {
        if dir.join(runner::ROUNDS_FILE).is_file() {
            runs.push(RunCurve::load(dir)?);
            continue;
        }
        let entries = fs::read_dir(dir).map_err(AppError::io(dir))?;
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(runner::ROUNDS_FILE).is_file())
            .collect();
        if children.is_empty() {
            return Err(AppError::Data(format!("{}: no run directories found", dir.display())));
        }
        children.sort();
        for child in children {
            runs.push(RunCurve::load(&child)?);
        }
    }
    if runs.is_empty() {
        return Err(AppError::Data("no runs given".into()));
    }
    Ok(runs)
}

/// AUC of one run and its gain over the passive twin, if there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub strategy: String,
    pub arch_mode: String,
    pub seed: u64,
    pub auc: f64,
    pub auc_gain: Option<f64>,
    pub twin: Option<String>,
}

pub fn compare(runs: &[RunCurve], budget: f64) -> Result<Vec<CompareRow>> {
    let passive: BTreeMap<_, &RunCurve> = runs
        .iter()
        .filter(|r| r.info.strategy == Strategy::Random.as_str())
        .map(|r| (r.twin_key(), r))
        .collect();
    runs.iter()
        .map(|r| {
            let auc = curve::auc(&r.curve, budget).map_err(|e| AppError::Data(format!("{}: {e}", r.info.label)))?;
            let twin = passive.get(&r.twin_key()).filter(|t| t.info.strategy != r.info.strategy);
            let auc_gain = twin.map(|t| curve::auc_gain(&t.curve, &r.curve, budget)).transpose()?;
            Ok(CompareRow {
                label: r.info.label.clone(),
                strategy: r.info.strategy.clone(),
                arch_mode: r.info.arch_mode.clone(),
                seed: r.info.seed,
                auc,
                auc_gain,
                twin: twin.map(|t| t.info.label.clone()),
            })
        })
        .collect()
}

fn mean_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per strategy and architecture mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub arch_mode: String,
    pub runs: usize,
    pub mean_auc: f64,
    pub sem_auc: f64,
    pub mean_auc_gain: Option<f64>,
    pub sem_auc_gain: Option<f64>,
    /// Paired seeds with a positive gain.
    pub wins: usize,
}

pub fn summarize(rows: &[CompareRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&CompareRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.strategy.clone(), r.arch_mode.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((strategy, arch_mode), rs)| {
            let aucs: Vec<f64> = rs.iter().map(|r| r.auc).collect();
            let gains: Vec<f64> = rs.iter().filter_map(|r| r.auc_gain).collect();
            let (mean_auc, sem_auc) = mean_sem(&aucs);
            let gain = (!gains.is_empty()).then(|| mean_sem(&gains));
            SummaryRow {
                strategy,
                arch_mode,
                runs: rs.len(),
                mean_auc,
                sem_auc,
                mean_auc_gain: gain.map(|g| g.0),
                sem_auc_gain: gain.map(|g| g.1),
                wins: gains.iter().filter(|&&g| g > 0.0).count(),
            }
        })
        .collect()
}

/// Largest budget covered by every run.
pub fn common_budget(runs: &[RunCurve]) -> Result<f64> {
    runs.iter()
        .map(|r| r.curve.last_m().unwrap_or(0.0))
        .min_by(f64::total_cmp)
        .ok_or_else(|| AppError::Data("no runs given".into()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v}"))
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut out = String::from("label,strategy,arch_mode,seed,auc,auc_gain,twin\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.label,
            r.strategy,
            r.arch_mode,
            r.seed,
            r.auc,
            opt(r.auc_gain),
            r.twin.as_deref().unwrap_or("")
        );
    }
    out
}

pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = String::from("strategy,arch_mode,runs,mean_auc,sem_auc,mean_auc_gain,sem_auc_gain,wins\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.strategy,
            r.arch_mode,
            r.runs,
            r.mean_auc,
            r.sem_auc,
            opt(r.mean_auc_gain),
            opt(r.sem_auc_gain),
            r.wins
        );
    }
    out
}

/// Mean curve and SEM band of every strategy / mode group.
pub fn group_curves(runs: &[RunCurve]) -> Result<Vec<((String, String), CurveSummary)>> {
    let mut groups: BTreeMap<(String, String), Vec<LearningCurve>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.group()).or_default().push(r.curve.clone());
    }
    groups
        .into_iter()
        .map(|(k, curves)| {
            let s = curve::aggregate(&curves)
                .map_err(|e| AppError::Data(format!("{} / {}: {e}", k.0, k.1)))?;
            Ok((k, s))
        })
        .collect()
}

fn curves_csv(groups: &[((String, String), CurveSummary)]) -> String {
    let mut out = String::from("strategy,arch_mode,labels_used,mean_test_error,sem,repetitions\n");
    for ((strategy, mode), s) in groups {
        for p in 0..s.labels.len() {
            let _ = writeln!(out, "{strategy},{mode},{},{},{},{}", s.labels[p], s.mean[p], s.sem[p], s.repetitions);
        }
    }
    out
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const MARGIN: f64 = 60.0;

fn axes(svg: &mut Svg, x: Scale, y: Scale, xlabel: &str, ylabel: &str, ticks: usize) {
    svg.line(MARGIN, H - MARGIN, W - MARGIN, H - MARGIN, "#000000", 1.0);
    svg.line(MARGIN, MARGIN, MARGIN, H - MARGIN, "#000000", 1.0);
    for t in 0..=ticks {
        let f = t as f64 / ticks as f64;
        let xv = x.d0 + f * (x.d1 - x.d0);
        let yv = y.d0 + f * (y.d1 - y.d0);
        svg.text(x.map(xv), H - MARGIN + 16.0, 10.0, "middle", &format!("{xv:.0}"));
        svg.text(MARGIN - 6.0, y.map(yv) + 3.0, 10.0, "end", &format!("{yv:.3}"));
    }
    svg.text(W / 2.0, H - 16.0, 12.0, "middle", xlabel);
    svg.text(16.0, MARGIN - 16.0, 12.0, "start", ylabel);
}

/// Mean test error against labels used, one line and SEM band per group.
pub fn curves_svg(groups: &[((String, String), CurveSummary)]) -> String {
    let mut svg = Svg::new(W, H);
    let all_m = groups.iter().flat_map(|(_, s)| s.labels.iter().copied());
    let (m0, m1) = all_m.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(m), b.max(m)));
    let e1 = groups
        .iter()
        .flat_map(|(_, s)| s.mean.iter().zip(&s.sem).map(|(m, e)| m + e))
        .fold(0.0f64, f64::max)
        .max(1e-3);
    let x = Scale { d0: m0, d1: m1, p0: MARGIN, p1: W - MARGIN };
    let y = Scale { d0: 0.0, d1: e1 * 1.05, p0: H - MARGIN, p1: MARGIN };
    axes(&mut svg, x, y, "labels used", "test error", 5);
    for (k, ((strategy, mode), s)) in groups.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = s.labels.iter().zip(s.mean.iter().zip(&s.sem)).map(|(&m, (mu, se))| (x.map(m), y.map(mu + se)));
        let lower = s.labels.iter().zip(s.mean.iter().zip(&s.sem)).map(|(&m, (mu, se))| (x.map(m), y.map(mu - se)));
        let mut band: Vec<(f64, f64)> = upper.collect();
        band.extend(lower.rev());
        svg.polygon(&band, color, 0.18);
        let line: Vec<(f64, f64)> = s.labels.iter().zip(&s.mean).map(|(&m, &e)| (x.map(m), y.map(e))).collect();
        svg.polyline(&line, color);
        let ly = MARGIN + 14.0 * k as f64;
        svg.line(W - MARGIN - 150.0, ly, W - MARGIN - 130.0, ly, color, 2.0);
        svg.text(W - MARGIN - 125.0, ly + 4.0, 11.0, "start", &format!("{strategy} / {mode} (n={})", s.repetitions));
    }
    svg.finish()
}

/// Mean AUC-GAIN per group as bars.
pub fn gain_svg(summary: &[SummaryRow]) -> String {
    let mut svg = Svg::new(W, H);
    let bars: Vec<&SummaryRow> = summary.iter().filter(|r| r.mean_auc_gain.is_some()).collect();
    let g = |r: &SummaryRow| r.mean_auc_gain.unwrap_or(0.0);
    let lo = bars.iter().map(|r| g(r) - r.sem_auc_gain.unwrap_or(0.0)).fold(0.0f64, f64::min);
    let hi = bars.iter().map(|r| g(r) + r.sem_auc_gain.unwrap_or(0.0)).fold(0.0f64, f64::max);
    let span = (hi - lo).max(1e-3);
    let y = Scale { d0: lo - 0.05 * span, d1: hi + 0.05 * span, p0: H - MARGIN, p1: MARGIN };
    svg.line(MARGIN, MARGIN, MARGIN, H - MARGIN, "#000000", 1.0);
    svg.line(MARGIN, y.map(0.0), W - MARGIN, y.map(0.0), "#000000", 1.0);
    for t in 0..=4 {
        let v = y.d0 + t as f64 / 4.0 * (y.d1 - y.d0);
        svg.text(MARGIN - 6.0, y.map(v) + 3.0, 10.0, "end", &format!("{v:.3}"));
    }
    svg.text(16.0, MARGIN - 16.0, 12.0, "start", "AUC-GAIN vs. random twin");
    let slot = (W - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (k, r) in bars.iter().enumerate() {
        let x0 = MARGIN + slot * (k as f64 + 0.2);
        let (top, bottom) = (y.map(g(r).max(0.0)), y.map(g(r).min(0.0)));
        svg.rect(x0, top, slot * 0.6, bottom - top, PALETTE[k % PALETTE.len()], "none");
        if let Some(se) = r.sem_auc_gain {
            let cx = x0 + slot * 0.3;
            svg.line(cx, y.map(g(r) - se), cx, y.map(g(r) + se), "#000000", 1.0);
        }
        svg.text(x0 + slot * 0.3, H - MARGIN + 16.0, 10.0, "middle", &format!("{} / {}", r.strategy, r.arch_mode));
    }
    svg.finish()
}

pub struct ReportFiles {
    pub budget: f64,
    pub compare: Vec<CompareRow>,
    pub summary: Vec<SummaryRow>,
}

/// Writes `curves.csv`, `compare.csv`, `summary.csv`, `learning_curves.svg`
/// and `auc_gain.svg` into `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<ReportFiles> {
    let runs = load_runs(dirs)?;
    let budget = common_budget(&runs)?;
    let compare = compare(&runs, budget)?;
    let summary = summarize(&compare);
    let groups = group_curves(&runs)?;
    runner::write_text(&out.join("curves.csv"), &curves_csv(&groups))?;
    runner::write_text(&out.join("compare.csv"), &compare_table(&compare))?;
    runner::write_text(&out.join("summary.csv"), &summary_table(&summary))?;
    runner::write_text(&out.join("learning_curves.svg"), &curves_svg(&groups))?;
    runner::write_text(&out.join("auc_gain.svg"), &gain_svg(&summary))?;
    Ok(ReportFiles { budget, compare, summary })
}
