//! Per-instance AdaGrad training of shapelets, masks and classifier weights.
//!
//! One iteration visits every instance in dataset order. For each instance
//! the forward pass fixes the best windows and the softmax outputs, then all
//! parameters take one AdaGrad step. With `inner_class_updates` the step is
//! split into one step per class, each seeing the parameters left by the
//! previous class.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{OneHotTargets, TimeSeriesDataset};
use crate::distance::Activation;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gradients::{class_gradients, instance_gradients, score_residuals};
use crate::model::{argmax, Params, ShapeletModel, LOG_FLOOR};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskInit {
    /// `|N(0, 1)|`, so no mask starts on the flat side of a relu.
    #[default]
    AbsNormal,
    /// Plain `N(0, 1)`.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_shapelets: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub activation: Activation,
    pub seed: u64,
    pub mask_init: MaskInit,
    pub inner_class_updates: bool,
    pub adagrad_epsilon: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_shapelets: 20,
            min_length: 10,
            max_length: 30,
            lambda: 0.01,
            learning_rate: 0.1,
            max_iter: 1000,
            activation: Activation::Relu,
            seed: 0,
            mask_init: MaskInit::AbsNormal,
            inner_class_updates: false,
            adagrad_epsilon: 1e-8,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.num_shapelets == 0 {
            return fail("at least one shapelet is required".into());
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return fail(format!(
                "shapelet lengths need 1 <= min ({}) <= max ({})",
                self.min_length, self.max_length
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.adagrad_epsilon > 0.0) {
            return fail("adagrad epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Draws the initial model: lengths, then shapelets, masks, weights and bias,
/// all from one seeded stream.
///
/// `L_k = min + round(r (max - min))` with `r ~ U[0, 1)`, clamped so that no
/// shapelet is longer than the shortest series.
pub fn init_model(cfg: &TrainConfig, ds: &TimeSeriesDataset) -> Result<ShapeletModel> {
    cfg.validate()?;
    let shortest = ds.min_length();
    if cfg.min_length > shortest {
        return Err(Error::InvalidConfig(format!(
            "minimum shapelet length {} exceeds the shortest series ({shortest})",
            cfg.min_length
        )));
    }
    let upper = cfg.max_length.min(shortest);
    let (k, v, c) = (cfg.num_shapelets, ds.num_channels(), ds.num_classes());
    let mut rng = rng::seeded(cfg.seed);

    let lengths: Vec<usize> = (0..k)
        .map(|_| {
            let r: f64 = rng.random();
            let span = (cfg.max_length - cfg.min_length) as f64;
            (cfg.min_length + (r * span).round() as usize).clamp(cfg.min_length, upper)
        })
        .collect();
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let shapelets = lengths
        .iter()
        .map(|&l| (0..v).map(|_| (0..l).map(|_| normal()).collect()).collect())
        .collect();
    let masks = (0..k)
        .map(|_| {
            (0..v)
                .map(|_| match cfg.mask_init {
                    MaskInit::AbsNormal => normal().abs(),
                    MaskInit::Normal => normal(),
                })
                .collect()
        })
        .collect();
    let weights = (0..k).map(|_| (0..c).map(|_| normal()).collect()).collect();
    let bias = (0..c).map(|_| normal()).collect();

    Ok(ShapeletModel {
        params: Params {
            shapelets,
            masks,
            weights,
            bias,
        },
        activation: cfg.activation,
        masks_frozen: false,
        class_labels: ds.class_labels().to_vec(),
        training: Some(cfg.clone()),
    })
}

/// One AdaGrad update of a single accumulator: returns the new accumulated
/// squared gradient and the step size `lr / sqrt(G + eps)`.
pub fn adagrad_step(accumulated: f64, grad: f64, learning_rate: f64, epsilon: f64) -> (f64, f64) {
    let acc = accumulated + grad * grad;
    (acc, learning_rate / (acc + epsilon).sqrt())
}

/// Per-parameter accumulated squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradState {
    pub sum_sq: Params,
    learning_rate: f64,
    epsilon: f64,
}

impl AdaGradState {
    pub fn new(params: &Params, learning_rate: f64, epsilon: f64) -> Self {
        Self {
            sum_sq: Params::zeros_like(params),
            learning_rate,
            epsilon,
        }
    }

    pub fn apply(&mut self, params: &mut Params, grads: &Params) {
        for ((p, g), acc) in params.values_mut().zip(grads.values()).zip(self.sum_sq.values_mut()) {
            if *g == 0.0 {
                continue;
            }
            let (next, step) = adagrad_step(*acc, *g, self.learning_rate, self.epsilon);
            *acc = next;
            *p -= step * g;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub train_error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<IterationRecord>,
}

pub const METRICS_HEADER: &str = "iter,objective,train_error,seconds";

impl IterationRecord {
    /// One CSV row; with `timing` off the seconds column is written as 0 so
    /// that logs of identical runs are byte-identical.
    pub fn csv_row(&self, timing: bool) -> String {
        let secs = if timing { self.seconds } else { 0.0 };
        format!("{},{},{},{}", self.iteration, self.objective, self.train_error, secs)
    }
}

impl MetricsLog {
    pub fn write_csv<W: Write>(&self, out: &mut W, timing: bool) -> std::io::Result<()> {
        writeln!(out, "{METRICS_HEADER}")?;
        for r in &self.records {
            writeln!(out, "{}", r.csv_row(timing))?;
        }
        Ok(())
    }
}

/// Objective and error rate of `model` on `ds` in one pass.
pub fn evaluate(
    model: &ShapeletModel,
    ds: &TimeSeriesDataset,
    targets: &OneHotTargets,
    lambda: f64,
    exec: Execution,
) -> Result<(f64, f64)> {
    evaluate_from(model, ds, targets, lambda, exec, &[])
}

fn evaluate_from(
    model: &ShapeletModel,
    ds: &TimeSeriesDataset,
    targets: &OneHotTargets,
    lambda: f64,
    exec: Execution,
    hints: &[Vec<usize>],
) -> Result<(f64, f64)> {
    let per_instance = exec.try_map(ds.len(), |i| {
        let inst = &ds.instances()[i];
        let fwd = model.forward_from(inst, hints.get(i).map(Vec::as_slice), Execution::Sequential)?;
        let loss: f64 = fwd
            .probabilities
            .iter()
            .zip(targets.row(i))
            .map(|(&p, &t)| -t * p.max(LOG_FLOOR).ln() - (1.0 - t) * (1.0 - p).max(LOG_FLOOR).ln())
            .sum();
        Ok::<_, Error>((loss, argmax(&fwd.probabilities) != inst.class))
    })?;
    let loss: f64 = per_instance.iter().map(|(l, _)| l).sum();
    let wrong = per_instance.iter().filter(|(_, w)| *w).count();
    Ok((
        loss + 0.5 * lambda * model.weight_norm_sq(),
        wrong as f64 / ds.len() as f64,
    ))
}

pub enum TrainEvent<'a> {
    Initialized(&'a ShapeletModel),
    Iteration(&'a IterationRecord, &'a ShapeletModel),
}

pub fn train(cfg: &TrainConfig, ds: &TimeSeriesDataset) -> Result<(ShapeletModel, MetricsLog)> {
    train_with_observer(cfg, ds, false, |_| Ok(()))
}

/// Runs training, calling `observer` once after initialization and once per
/// completed iteration. With `freeze_masks` every activated mask stays at 1.
pub fn train_with_observer<F>(
    cfg: &TrainConfig,
    ds: &TimeSeriesDataset,
    freeze_masks: bool,
    mut observer: F,
) -> Result<(ShapeletModel, MetricsLog)>
where
    F: FnMut(TrainEvent<'_>) -> Result<()>,
{
    let mut model = init_model(cfg, ds)?;
    model.masks_frozen = freeze_masks;
    observer(TrainEvent::Initialized(&model))?;

    let targets = ds.one_hot();
    let (n, c) = (ds.len(), ds.num_classes());
    let mut optimizer = AdaGradState::new(&model.params, cfg.learning_rate, cfg.adagrad_epsilon);
    let mut class_grads = Params::zeros_like(&model.params);
    let mut log = MetricsLog::default();
    let mut hints: Vec<Vec<usize>> = vec![Vec::new(); n];
    let started = Instant::now();

    for iteration in 1..=cfg.max_iter {
        for (i, inst) in ds.instances().iter().enumerate() {
            let y = targets.row(i);
            let fwd = model.forward_from(inst, Some(&hints[i]), cfg.execution)?;
            hints[i].clone_from(&fwd.argmin);
            if cfg.inner_class_updates {
                let residuals = score_residuals(&fwd.probabilities, y);
                for class in 0..c {
                    class_gradients(&model, inst, &fwd, &residuals, class, cfg.lambda, n, &mut class_grads)?;
                    check_finite(&class_grads, iteration, &inst.id)?;
                    optimizer.apply(&mut model.params, &class_grads);
                }
            } else {
                let grads = instance_gradients(&model, inst, &fwd, y, cfg.lambda, n)?;
                check_finite(&grads, iteration, &inst.id)?;
                optimizer.apply(&mut model.params, &grads);
            }
        }

        let (objective, train_error) = evaluate_from(&model, ds, &targets, cfg.lambda, cfg.execution, &hints)?;
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                iteration,
                detail: format!("objective is {objective}"),
            });
        }
        let record = IterationRecord {
            iteration,
            objective,
            train_error,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::debug!("iter {iteration}: objective {objective:.6} train error {train_error:.4}");
        observer(TrainEvent::Iteration(&record, &model))?;
        log.records.push(record);
    }
    Ok((model, log))
}

fn check_finite(grads: &Params, iteration: usize, id: &str) -> Result<()> {
    if grads.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            detail: format!("non-finite gradient on instance {id}"),
        })
    }
}
