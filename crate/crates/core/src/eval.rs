//! Error rates, cross-validated grid search and mask exports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::baselines::NnDtw;
use crate::dataset::{stratified_kfold, Instance, Label, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::ShapeletModel;
use crate::rng::derive_seed;
use crate::trainer::{train, TrainConfig};

/// Anything that maps an instance to one of its own class labels.
pub trait Classifier: Sync {
    fn class_labels(&self) -> &[Label];
    fn predict_index(&self, instance: &Instance) -> Result<usize>;
}

impl Classifier for ShapeletModel {
    fn class_labels(&self) -> &[Label] {
        &self.class_labels
    }

    fn predict_index(&self, instance: &Instance) -> Result<usize> {
        self.predict(instance)
    }
}

impl Classifier for NnDtw<'_> {
    fn class_labels(&self) -> &[Label] {
        NnDtw::class_labels(self)
    }

    fn predict_index(&self, instance: &Instance) -> Result<usize> {
        // the outer loop over queries is already parallel
        crate::baselines::nn_dtw_classify_with(self.train, instance, Execution::Sequential)
    }
}

/// Predicted labels for every instance, as original label values.
pub fn predictions<C: Classifier + ?Sized>(clf: &C, ds: &TimeSeriesDataset, exec: Execution) -> Result<Vec<Label>> {
    exec.try_map(ds.len(), |i| {
        let idx = clf.predict_index(&ds.instances()[i])?;
        Ok(clf.class_labels()[idx].clone())
    })
}

/// Fraction of instances whose predicted label differs from the true one.
/// Labels are compared by value, so the dataset's class order need not match
/// the classifier's.
pub fn error_rate<C: Classifier + ?Sized>(clf: &C, ds: &TimeSeriesDataset) -> Result<f64> {
    error_rate_with(clf, ds, Execution::default())
}

pub fn error_rate_with<C: Classifier + ?Sized>(clf: &C, ds: &TimeSeriesDataset, exec: Execution) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let predicted = predictions(clf, ds, exec)?;
    let wrong = predicted
        .iter()
        .enumerate()
        .filter(|(i, p)| *p != ds.label_of(*i))
        .count();
    Ok(wrong as f64 / ds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldScore {
    pub num_shapelets: usize,
    pub lambda: f64,
    pub fold: usize,
    pub val_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellScore {
    pub num_shapelets: usize,
    pub lambda: f64,
    pub mean_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub folds: Vec<FoldScore>,
    pub cells: Vec<CellScore>,
    pub best: CellScore,
    pub best_cfg: TrainConfig,
}

impl GridResult {
    pub fn cell(&self, num_shapelets: usize, lambda: f64) -> Option<&CellScore> {
        self.cells
            .iter()
            .find(|c| c.num_shapelets == num_shapelets && c.lambda == lambda)
    }

    /// Per-fold rows followed by one `mean` row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,lambda,fold,val_error\n");
        for f in &self.folds {
            let _ = writeln!(out, "{},{},{},{}", f.num_shapelets, f.lambda, f.fold, f.val_error);
        }
        for c in &self.cells {
            let _ = writeln!(out, "{},{},mean,{}", c.num_shapelets, c.lambda, c.mean_error);
        }
        out
    }
}

/// Mean k-fold validation error for every `(K, lambda)` cell. The best cell
/// has the lowest mean error, ties going to smaller `K` and then smaller
/// `lambda`. Each fold trains with a seed derived from the base seed, `K`,
/// `lambda` and the fold index.
pub fn grid_search(
    ds: &TimeSeriesDataset,
    folds: usize,
    k_grid: &[usize],
    lambda_grid: &[f64],
    base_cfg: &TrainConfig,
) -> Result<GridResult> {
    if k_grid.is_empty() || lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("grid must have at least one K and one lambda".into()));
    }
    let splits = stratified_kfold(ds, folds, base_cfg.seed)?;
    let cells: Vec<(usize, f64)> = k_grid
        .iter()
        .flat_map(|&k| lambda_grid.iter().map(move |&l| (k, l)))
        .collect();
    let jobs: Vec<(usize, f64, usize)> = cells
        .iter()
        .flat_map(|&(k, l)| (0..folds).map(move |f| (k, l, f)))
        .collect();

    let scores = Execution::default().try_map(jobs.len(), |j| {
        let (k, lambda, fold) = jobs[j];
        let cfg = TrainConfig {
            num_shapelets: k,
            lambda,
            seed: derive_seed(base_cfg.seed, &[k as u64, lambda.to_bits(), fold as u64]),
            ..base_cfg.clone()
        };
        let split = &splits[fold];
        let (model, _) = train(&cfg, &ds.subset(&split.train))?;
        let val_error = error_rate_with(&model, &ds.subset(&split.validation), Execution::Sequential)?;
        Ok::<_, Error>(FoldScore {
            num_shapelets: k,
            lambda,
            fold,
            val_error,
        })
    })?;

    let cell_scores: Vec<CellScore> = cells
        .iter()
        .map(|&(k, lambda)| {
            let errs: Vec<f64> = scores
                .iter()
                .filter(|s| s.num_shapelets == k && s.lambda == lambda)
                .map(|s| s.val_error)
                .collect();
            CellScore {
                num_shapelets: k,
                lambda,
                mean_error: errs.iter().sum::<f64>() / errs.len() as f64,
            }
        })
        .collect();
    let best = cell_scores
        .iter()
        .min_by(|a, b| {
            a.mean_error
                .total_cmp(&b.mean_error)
                .then(a.num_shapelets.cmp(&b.num_shapelets))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .cloned()
        .expect("grid is non-empty");
    let best_cfg = TrainConfig {
        num_shapelets: best.num_shapelets,
        lambda: best.lambda,
        ..base_cfg.clone()
    };
    Ok(GridResult {
        folds: scores,
        cells: cell_scores,
        best,
        best_cfg,
    })
}

/// Activated masks, one row per shapelet and one column per channel.
pub fn masks_csv(model: &ShapeletModel) -> String {
    let mut out = String::new();
    for row in model.activated_masks() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn export_masks(model: &ShapeletModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, masks_csv(model)).map_err(|e| Error::io(path, e))
}

/// Header for mask snapshot files written during training.
pub fn mask_snapshot_header(num_channels: usize) -> String {
    let mut h = String::from("iter,shapelet");
    for v in 1..=num_channels {
        let _ = write!(h, ",ch{v}");
    }
    h
}

/// Snapshot rows: `iter,k,f(mu_k1),...,f(mu_kV)` for every shapelet.
pub fn mask_snapshot_rows(model: &ShapeletModel, iteration: usize) -> String {
    let mut out = String::new();
    for (k, row) in model.activated_masks().iter().enumerate() {
        let _ = write!(out, "{iteration},{k}");
        for x in row {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

/// Fraction of shapelets whose mean activated mask over `informative`
/// channels exceeds the mean over all other channels.
pub fn mask_localization(model: &ShapeletModel, informative: &[usize]) -> f64 {
    let masks = model.activated_masks();
    let hits = masks
        .iter()
        .filter(|row| {
            let (mut inside, mut outside) = (Vec::new(), Vec::new());
            for (v, &x) in row.iter().enumerate() {
                if informative.contains(&v) {
                    inside.push(x);
                } else {
                    outside.push(x);
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            mean(&inside) > mean(&outside)
        })
        .count();
    hits as f64 / masks.len() as f64
}
