//! Comparison methods: the shapelet learner without masks, and 1-nearest
//! neighbour under dependent multivariate DTW.

use crate::dataset::{Instance, Label, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::ShapeletModel;
use crate::trainer::{train_with_observer, MetricsLog, TrainConfig};

/// Same as [`crate::trainer::train`] with every activated mask fixed at 1.
pub fn train_unmasked(cfg: &TrainConfig, ds: &TimeSeriesDataset) -> Result<(ShapeletModel, MetricsLog)> {
    train_with_observer(cfg, ds, true, |_| Ok(()))
}

/// Unconstrained dependent DTW: one warping path shared by all channels,
/// local cost `sum_v (a[v][s] - b[v][t])^2`, returning the accumulated cost.
pub fn dtw_distance(a: &Instance, b: &Instance) -> Result<f64> {
    if a.num_channels() != b.num_channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} channels, {} has {}",
            a.id,
            a.num_channels(),
            b.id,
            b.num_channels()
        )));
    }
    let (n, m) = (a.len(), b.len());
    let cost = |s: usize, t: usize| -> f64 {
        a.channels
            .iter()
            .zip(&b.channels)
            .map(|(x, y)| (x[s] - y[t]) * (x[s] - y[t]))
            .sum()
    };
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for s in 1..=n {
        curr[0] = f64::INFINITY;
        for t in 1..=m {
            let best = prev[t - 1].min(prev[t]).min(curr[t - 1]);
            curr[t] = cost(s - 1, t - 1) + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// 1-NN classifier over a reference set.
pub struct NnDtw<'a> {
    pub train: &'a TimeSeriesDataset,
    pub execution: Execution,
}

impl<'a> NnDtw<'a> {
    pub fn new(train: &'a TimeSeriesDataset) -> Self {
        Self {
            train,
            execution: Execution::default(),
        }
    }

    /// Class index (into the training labels) of the nearest training
    /// instance; ties go to the earliest one.
    pub fn classify(&self, query: &Instance) -> Result<usize> {
        nn_dtw_classify_with(self.train, query, self.execution)
    }

    pub fn class_labels(&self) -> &[Label] {
        self.train.class_labels()
    }
}

pub fn nn_dtw_classify(train: &TimeSeriesDataset, query: &Instance) -> Result<usize> {
    nn_dtw_classify_with(train, query, Execution::default())
}

pub fn nn_dtw_classify_with(train: &TimeSeriesDataset, query: &Instance, exec: Execution) -> Result<usize> {
    let distances = exec.try_map(train.len(), |i| dtw_distance(&train.instances()[i], query))?;
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[best] {
            best = i;
        }
    }
    Ok(train.instances()[best].class)
}
