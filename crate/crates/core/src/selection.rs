//! BIC grid search and k-fold cross-validation.
//!
//! Grid cells and folds are independent fits. With the `parallel` feature
//! they run on the rayon pool; results are always merged in cell/fold order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::fitting::{fit_lms, global_deviance, Dataset, FitOptions, Hyperparameters};

/// `ln(n)·k + GD`.
pub fn bic(n: usize, k_edf: f64, global_deviance: f64) -> f64 {
    (n as f64).ln() * k_edf + global_deviance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub hp: Hyperparameters,
    pub bic: f64,
    pub global_deviance: f64,
    pub k_edf: f64,
    pub converged: bool,
}

/// A grid cell whose fit raised an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub hp: Hyperparameters,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Ranked: converged cells by ascending BIC, then non-converged ones.
    pub records: Vec<SelectionRecord>,
    pub failed: Vec<FailedCell>,
    pub n: usize,
}

impl SelectionResult {
    pub fn best(&self) -> &SelectionRecord {
        &self.records[0]
    }
}

/// Inclusive df range `lo, lo+step, …, ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl DfRange {
    pub fn new(lo: f64, hi: f64, step: f64) -> Self {
        DfRange { lo, hi, step }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.step > 0.0 && self.lo <= self.hi) {
            return Err(Error::InvalidArgument(format!(
                "df range needs lo <= hi and step > 0, got {}..{} step {}",
                self.lo, self.hi, self.step
            )));
        }
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.lo + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRanges {
    pub m: DfRange,
    pub s: DfRange,
    pub l: DfRange,
}

impl GridRanges {
    /// The same range for all three parameters.
    pub fn uniform(lo: f64, hi: f64, step: f64) -> Self {
        let r = DfRange::new(lo, hi, step);
        GridRanges { m: r, s: r, l: r }
    }

    /// Cells in (m, s, l) lexicographic order.
    pub fn cells(&self) -> Result<Vec<Hyperparameters>> {
        let (ms, ss, ls) = (self.m.values()?, self.s.values()?, self.l.values()?);
        let mut cells = Vec::with_capacity(ms.len() * ss.len() * ls.len());
        for &m in &ms {
            for &s in &ss {
                for &l in &ls {
                    cells.push(Hyperparameters::lms(m, s, l));
                }
            }
        }
        Ok(cells)
    }
}

impl Default for GridRanges {
    fn default() -> Self {
        GridRanges::uniform(0.0, 5.0, 1.0)
    }
}

/// The selection ordering: converged first, then BIC, k_edf and the dfs.
pub fn rank_order(a: &SelectionRecord, b: &SelectionRecord) -> Ordering {
    b.converged
        .cmp(&a.converged)
        .then(a.bic.total_cmp(&b.bic))
        .then(a.k_edf.total_cmp(&b.k_edf))
        .then_with(|| {
            let (am, as_, al) = a.hp.dfs();
            let (bm, bs, bl) = b.hp.dfs();
            am.total_cmp(&bm).then(as_.total_cmp(&bs)).then(al.total_cmp(&bl))
        })
}

pub(crate) fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

pub fn grid_search_bic(data: &Dataset, ranges: &GridRanges, opts: &FitOptions) -> Result<SelectionResult> {
    grid_search_bic_with_progress(data, ranges, opts, |_, _| {})
}

/// As [`grid_search_bic`], calling `progress(done, total)` after each cell.
pub fn grid_search_bic_with_progress<P>(
    data: &Dataset,
    ranges: &GridRanges,
    opts: &FitOptions,
    progress: P,
) -> Result<SelectionResult>
where
    P: Fn(usize, usize) + Sync + Send,
{
    let cells = ranges.cells()?;
    for hp in &cells {
        hp.validate()?;
    }
    data.validate_for_fit()?;
    let n = data.n_included();
    let total = cells.len();
    let done = std::sync::atomic::AtomicUsize::new(0);

    let outcomes = map_indexed(&cells, |_, hp| {
        let out = fit_lms(data, hp, opts).map(|(model, _)| SelectionRecord {
            hp: *hp,
            bic: bic(n, model.total_edf, model.global_deviance),
            global_deviance: model.global_deviance,
            k_edf: model.total_edf,
            converged: model.converged,
        });
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        progress(k, total);
        out
    });

    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (hp, out) in cells.iter().zip(outcomes) {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failed.push(FailedCell { hp: *hp, error: e.to_string() }),
        }
    }
    if records.is_empty() {
        return Err(Error::SelectionFailed {
            failures: failed
                .iter()
                .map(|f| {
                    let (m, s, l) = f.hp.dfs();
                    format!("({m}, {s}, {l}): {}", f.error)
                })
                .collect(),
        });
    }
    records.sort_by(rank_order);
    Ok(SelectionResult { records, failed, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Row ids held out in this fold.
    pub held_out: Vec<String>,
    pub validation_gd: Option<f64>,
    pub training_gd: Option<f64>,
    /// Held-out rows outside the training fold's covariate range.
    pub extrapolated: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub hp: Hyperparameters,
    pub folds: usize,
    pub seed: u64,
    /// Validation deviances of the successful folds, in fold order.
    pub fold_deviances: Vec<f64>,
    pub training_deviances: Vec<f64>,
    pub mean_validation_gd: f64,
    pub outcomes: Vec<FoldOutcome>,
    pub warnings: Vec<String>,
}

/// Positions (into the dataset's rows) of the included rows, split into
/// `folds` near-equal parts after a seeded shuffle.
pub fn fold_partition(data: &Dataset, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = data
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.included)
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n = idx.len();
    let base = n / folds;
    let extra = n % folds;
    let mut parts = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        parts.push(idx[start..start + len].to_vec());
        start += len;
    }
    parts
}

pub fn cross_validate(
    data: &Dataset,
    hp: &Hyperparameters,
    folds: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<CvReport> {
    hp.validate()?;
    let n = data.n_included();
    if folds < 2 || n < 2 * folds && folds != n {
        return Err(Error::InvalidArgument(format!(
            "cross-validation needs folds >= 2 and at least 2 rows per fold ({n} rows, {folds} folds)"
        )));
    }
    let parts = fold_partition(data, folds, seed);

    let outcomes = map_indexed(&parts, |f, held| {
        let mut held_sorted = held.clone();
        held_sorted.sort_unstable();
        let mut training = data.clone();
        for &i in held {
            training.rows[i].included = false;
        }
        let validation = data.select(&held_sorted);
        let held_out = held_sorted.iter().map(|&i| data.rows[i].id.clone()).collect();
        let result = fit_lms(&training, hp, opts).and_then(|(model, _)| {
            let eval = global_deviance(&model, &validation)?;
            Ok((eval, model.global_deviance))
        });
        match result {
            Ok((eval, train_gd)) => FoldOutcome {
                fold: f,
                held_out,
                validation_gd: Some(eval.deviance),
                training_gd: Some(train_gd),
                extrapolated: eval.extrapolated,
                error: None,
            },
            Err(e) => FoldOutcome {
                fold: f,
                held_out,
                validation_gd: None,
                training_gd: None,
                extrapolated: 0,
                error: Some(e.to_string()),
            },
        }
    });

    let fold_deviances: Vec<f64> = outcomes.iter().filter_map(|o| o.validation_gd).collect();
    let training_deviances: Vec<f64> = outcomes.iter().filter_map(|o| o.training_gd).collect();
    if fold_deviances.is_empty() {
        return Err(Error::CrossValidationFailed {
            failures: outcomes
                .iter()
                .map(|o| format!("fold {}: {}", o.fold, o.error.as_deref().unwrap_or("unknown")))
                .collect(),
        });
    }
    let mut warnings = Vec::new();
    let failed = outcomes.len() - fold_deviances.len();
    if failed > 0 {
        warnings.push(format!("{failed} of {folds} folds failed; the mean covers the remaining folds"));
    }
    let extrapolated: usize = outcomes.iter().map(|o| o.extrapolated).sum();
    if extrapolated > 0 {
        warnings.push(format!(
            "{extrapolated} held-out rows lie outside their training fold's covariate range"
        ));
    }
    let mean_validation_gd = fold_deviances.iter().sum::<f64>() / fold_deviances.len() as f64;
    Ok(CvReport {
        hp: *hp,
        folds,
        seed,
        fold_deviances,
        training_deviances,
        mean_validation_gd,
        outcomes,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bccg::{self, BccgParams};
    use crate::fitting::Row;
    use rand::Rng;

    fn linear(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = Dataset::new("x", "y");
        for i in 0..n {
            let x: f64 = rng.random_range(0.0..10.0);
            let p = BccgParams::new(20.0 + x, 0.1, 0.0).unwrap();
            let y = bccg::sample_with(&p, 1, &mut rng).unwrap()[0];
            d.push(Row { id: i.to_string(), x, y, included: true });
        }
        d
    }

    #[test]
    fn bic_arithmetic() {
        assert!((bic(100, 3.0, 500.0) - 513.815_510_557_964_3).abs() < 1e-9);
    }

    #[test]
    fn ranking_rules() {
        let rec = |m: f64, bic: f64, k: f64, converged: bool| SelectionRecord {
            hp: Hyperparameters::lms(m, 0.0, 0.0),
            bic,
            global_deviance: bic - k,
            k_edf: k,
            converged,
        };
        let mut v = vec![rec(0.0, 10.0, 3.0, false), rec(2.0, 12.0, 4.0, true), rec(1.0, 12.0, 4.0, true), rec(3.0, 12.0, 3.5, true)];
        v.sort_by(rank_order);
        let ms: Vec<f64> = v.iter().map(|r| r.hp.m_df()).collect();
        assert_eq!(ms, vec![3.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn ranges_expand() {
        assert_eq!(DfRange::new(0.0, 5.0, 1.0).values().unwrap().len(), 6);
        assert_eq!(DfRange::new(0.0, 1.0, 0.5).values().unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(DfRange::new(1.0, 0.0, 1.0).values().is_err());
        assert_eq!(GridRanges::uniform(0.0, 1.0, 1.0).cells().unwrap().len(), 8);
    }

    #[test]
    fn small_grid_records_satisfy_bic_identity() {
        let d = linear(200, 1);
        let res = grid_search_bic(&d, &GridRanges::uniform(0.0, 1.0, 1.0), &FitOptions::default()).unwrap();
        assert_eq!(res.records.len() + res.failed.len(), 8);
        for r in &res.records {
            assert!((r.bic - bic(200, r.k_edf, r.global_deviance)).abs() < 1e-9);
        }
        for w in res.records.windows(2) {
            assert_ne!(rank_order(&w[0], &w[1]), Ordering::Greater);
        }
    }

    #[test]
    fn partition_covers_rows_once() {
        let mut d = linear(53, 2);
        d.rows[7].included = false;
        let parts = fold_partition(&d, 10, 4);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        let expected: Vec<usize> = (0..53).filter(|&i| i != 7).collect();
        assert_eq!(all, expected);
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn cv_is_deterministic_and_mean_is_exact() {
        let d = linear(120, 3);
        let hp = Hyperparameters::default();
        let a = cross_validate(&d, &hp, 5, 9, &FitOptions::default()).unwrap();
        let b = cross_validate(&d, &hp, 5, 9, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fold_deviances.len(), 5);
        let mean = a.fold_deviances.iter().sum::<f64>() / 5.0;
        assert!((a.mean_validation_gd - mean).abs() < 1e-12);
        assert!(cross_validate(&d, &hp, 1, 9, &FitOptions::default()).is_err());
    }
}
