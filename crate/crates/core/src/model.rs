//! Shapelet-distance features feeding a linear softmax classifier.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Instance, Label, OneHotTargets, TimeSeriesDataset};
use crate::distance::{weighted_min_distance_from, Activation};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::trainer::TrainConfig;

pub const MODEL_VERSION: u32 = 1;

/// Probabilities are clamped to this before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// The learnable values of a model. Gradients and AdaGrad accumulators reuse
/// the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// `K × V × L_k`.
    pub shapelets: Vec<Vec<Vec<f64>>>,
    /// Raw (pre-activation) masks, `K × V`.
    pub masks: Vec<Vec<f64>>,
    /// `K × C`.
    pub weights: Vec<Vec<f64>>,
    /// `C`.
    pub bias: Vec<f64>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        let mut p = other.clone();
        p.values_mut().for_each(|x| *x = 0.0);
        p
    }

    /// All scalars in a fixed order: shapelets, masks, weights, bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.shapelets
            .iter()
            .flatten()
            .flatten()
            .chain(self.masks.iter().flatten())
            .chain(self.weights.iter().flatten())
            .chain(self.bias.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.shapelets
            .iter_mut()
            .flatten()
            .flatten()
            .chain(self.masks.iter_mut().flatten())
            .chain(self.weights.iter_mut().flatten())
            .chain(self.bias.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.values().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_shapelets(&self) -> usize {
        self.shapelets.len()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn num_channels(&self) -> usize {
        self.masks.first().map_or(0, Vec::len)
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.shapelets
            .iter()
            .map(|s| s.first().map_or(0, Vec::len))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeletModel {
    pub params: Params,
    pub activation: Activation,
    /// When set, every activated mask is fixed at 1 and masks are never
    /// updated (the unmasked baseline).
    pub masks_frozen: bool,
    pub class_labels: Vec<Label>,
    pub training: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    /// Minimal masked distance per shapelet.
    pub distances: Vec<f64>,
    /// Best window start per shapelet.
    pub argmin: Vec<usize>,
    /// Linear scores per class.
    pub scores: Vec<f64>,
    /// Softmax of `scores`.
    pub probabilities: Vec<f64>,
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value, ties to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl ShapeletModel {
    pub fn num_shapelets(&self) -> usize {
        self.params.num_shapelets()
    }

    pub fn num_classes(&self) -> usize {
        self.params.num_classes()
    }

    pub fn num_channels(&self) -> usize {
        self.params.num_channels()
    }

    pub fn max_length(&self) -> usize {
        self.params.lengths().into_iter().max().unwrap_or(0)
    }

    /// Activated mask value `f(mu)` for shapelet `k`, channel `v`.
    pub fn mask_weight(&self, k: usize, v: usize) -> f64 {
        if self.masks_frozen {
            1.0
        } else {
            self.activation.apply(self.params.masks[k][v])
        }
    }

    /// Derivative of the activated mask with respect to the raw value; zero
    /// when masks are frozen.
    pub fn mask_slope(&self, k: usize, v: usize) -> f64 {
        if self.masks_frozen {
            0.0
        } else {
            self.activation.derivative(self.params.masks[k][v])
        }
    }

    pub fn mask_weights(&self, k: usize) -> Vec<f64> {
        (0..self.num_channels()).map(|v| self.mask_weight(k, v)).collect()
    }

    /// Activated masks as a `K × V` table.
    pub fn activated_masks(&self) -> Vec<Vec<f64>> {
        (0..self.num_shapelets()).map(|k| self.mask_weights(k)).collect()
    }

    pub fn forward(&self, instance: &Instance) -> Result<ForwardResult> {
        self.forward_with(instance, Execution::Sequential)
    }

    /// Forward pass with per-shapelet distances evaluated under `exec`.
    pub fn forward_with(&self, instance: &Instance, exec: Execution) -> Result<ForwardResult> {
        self.forward_from(instance, None, exec)
    }

    /// Forward pass that scores window `hints[k]` of shapelet `k` first. The
    /// output is identical to [`ShapeletModel::forward_with`]; only the time
    /// taken changes.
    pub fn forward_from(&self, instance: &Instance, hints: Option<&[usize]>, exec: Execution) -> Result<ForwardResult> {
        if instance.num_channels() != self.num_channels() {
            return Err(Error::DimensionMismatch(format!(
                "instance {} has {} channels, model expects {}",
                instance.id,
                instance.num_channels(),
                self.num_channels()
            )));
        }
        let found = exec.try_map(self.num_shapelets(), |k| {
            weighted_min_distance_from(
                &instance.channels,
                &self.params.shapelets[k],
                &self.mask_weights(k),
                hints.and_then(|h| h.get(k).copied()),
            )
        })?;
        let distances: Vec<f64> = found.iter().map(|d| d.value).collect();
        let argmin = found.iter().map(|d| d.argmin).collect();
        let scores = self.scores(&distances);
        let probabilities = softmax(&scores);
        Ok(ForwardResult {
            distances,
            argmin,
            scores,
            probabilities,
        })
    }

    /// `Z_c = W0_c + sum_k A_k W_{k,c}`.
    pub fn scores(&self, distances: &[f64]) -> Vec<f64> {
        let p = &self.params;
        (0..self.num_classes())
            .map(|c| {
                p.bias[c]
                    + distances
                        .iter()
                        .zip(&p.weights)
                        .map(|(a, w)| a * w[c])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, instance: &Instance) -> Result<usize> {
        Ok(argmax(&self.forward(instance)?.probabilities))
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.params.weights.iter().flatten().map(|w| w * w).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let k = p.num_shapelets();
        let v = p.num_channels();
        let c = p.num_classes();
        if k == 0 || v == 0 || c == 0 {
            return Err(Error::Schema("model needs at least one shapelet, channel and class".into()));
        }
        if p.masks.len() != k || p.weights.len() != k {
            return Err(Error::Schema("masks and weights must have one row per shapelet".into()));
        }
        for (i, s) in p.shapelets.iter().enumerate() {
            let len = s.first().map_or(0, Vec::len);
            if s.len() != v || len == 0 || s.iter().any(|ch| ch.len() != len) {
                return Err(Error::Schema(format!("shapelet {i} is not {v} equal, non-empty channels")));
            }
        }
        if p.masks.iter().any(|m| m.len() != v) {
            return Err(Error::Schema("mask rows must have one entry per channel".into()));
        }
        if p.weights.iter().any(|w| w.len() != c) {
            return Err(Error::Schema("weight rows must have one entry per class".into()));
        }
        if self.class_labels.len() != c {
            return Err(Error::Schema(format!(
                "{} class labels for {c} classes",
                self.class_labels.len()
            )));
        }
        if !p.all_finite() {
            return Err(Error::Schema("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Decomposed per-instance objective: two-sided cross-entropy of every
/// one-vs-all target against the softmax output, plus `1/I` of the weight
/// penalty.
pub fn instance_loss(
    model: &ShapeletModel,
    fwd: &ForwardResult,
    y: &[f64],
    lambda: f64,
    num_instances: usize,
) -> f64 {
    let ce: f64 = fwd
        .probabilities
        .iter()
        .zip(y)
        .map(|(&p, &t)| class_loss(p, t))
        .sum();
    let reg = lambda / (2.0 * num_instances as f64) * model.weight_norm_sq();
    ce + reg
}

fn class_loss(p: f64, t: f64) -> f64 {
    -t * p.max(LOG_FLOOR).ln() - (1.0 - t) * (1.0 - p).max(LOG_FLOOR).ln()
}

/// Full objective `sum_i sum_c L + (lambda / 2) ||W||^2`.
pub fn total_objective(
    model: &ShapeletModel,
    ds: &TimeSeriesDataset,
    targets: &OneHotTargets,
    lambda: f64,
) -> Result<f64> {
    total_objective_with(model, ds, targets, lambda, Execution::default())
}

pub fn total_objective_with(
    model: &ShapeletModel,
    ds: &TimeSeriesDataset,
    targets: &OneHotTargets,
    lambda: f64,
    exec: Execution,
) -> Result<f64> {
    let per_instance = exec.try_map(ds.len(), |i| {
        let fwd = model.forward(&ds.instances()[i])?;
        Ok::<_, Error>(
            fwd.probabilities
                .iter()
                .zip(targets.row(i))
                .map(|(&p, &t)| class_loss(p, t))
                .sum::<f64>(),
        )
    })?;
    Ok(per_instance.iter().sum::<f64>() + 0.5 * lambda * model.weight_norm_sq())
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    activation: Activation,
    masks_frozen: bool,
    class_labels: Vec<Label>,
    lengths: Vec<usize>,
    #[serde(rename = "P")]
    shapelets: Vec<Vec<Vec<f64>>>,
    mu: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    weights: Vec<Vec<f64>>,
    #[serde(rename = "W0")]
    bias: Vec<f64>,
    training: Option<TrainConfig>,
}

pub fn model_to_json(model: &ShapeletModel) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        activation: model.activation,
        masks_frozen: model.masks_frozen,
        class_labels: model.class_labels.clone(),
        lengths: model.params.lengths(),
        shapelets: model.params.shapelets.clone(),
        mu: model.params.masks.clone(),
        weights: model.params.weights.clone(),
        bias: model.params.bias.clone(),
        training: model.training.clone(),
    };
    serde_json::to_string(&file).expect("model serialization cannot fail")
}

pub fn model_from_json(text: &str) -> Result<ShapeletModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Schema("missing version".into()))?;
    if version != u64::from(MODEL_VERSION) {
        return Err(Error::VersionMismatch {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    let model = ShapeletModel {
        params: Params {
            shapelets: file.shapelets,
            masks: file.mu,
            weights: file.weights,
            bias: file.bias,
        },
        activation: file.activation,
        masks_frozen: file.masks_frozen,
        class_labels: file.class_labels,
        training: file.training,
    };
    model.validate()?;
    if model.params.lengths() != file.lengths {
        return Err(Error::Schema("lengths disagree with shapelet shapes".into()));
    }
    Ok(model)
}

pub fn save_model(model: &ShapeletModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(model_to_json(model).as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ShapeletModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let mut m = random_model(1, 3, 2, 4, &[3], Activation::Relu);
        m.params.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        m.params.bias.iter_mut().for_each(|b| *b = 0.0);
        let fwd = m.forward(&random_instance(2, 2, 9, 0)).unwrap();
        assert_eq!(fwd.scores, vec![0.0; 4]);
        assert!(fwd.probabilities.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert_eq!(m.predict(&random_instance(2, 2, 9, 0)).unwrap(), 0);
    }

    #[test]
    fn softmax_shift_invariance() {
        assert_eq!(softmax(&[0.0, 0.0, 0.0]), softmax(&[10.0, 10.0, 10.0]));
        let a = softmax(&[0.3, -1.2, 2.0]);
        let b = softmax(&[1000.3, 998.8, 1002.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_naive_softmax() {
        let m = random_model(5, 4, 3, 3, &[3, 4, 5], Activation::Sigmoid);
        let inst = random_instance(6, 3, 15, 1);
        let fwd = m.forward(&inst).unwrap();
        let z: Vec<f64> = (0..3)
            .map(|c| {
                let mut s = m.params.bias[c];
                for k in 0..4 {
                    s += fwd.distances[k] * m.params.weights[k][c];
                }
                s
            })
            .collect();
        let denom: f64 = z.iter().map(|x| x.exp()).sum();
        for c in 0..3 {
            assert!((fwd.probabilities[c] - z[c].exp() / denom).abs() < 1e-12);
        }
        assert_eq!(fwd, m.forward_with(&inst, Execution::Parallel).unwrap());
    }

    #[test]
    fn argmax_ties_and_values() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }

    #[test]
    fn forward_errors() {
        let m = random_model(1, 2, 3, 2, &[6], Activation::Relu);
        assert!(matches!(m.forward(&random_instance(1, 2, 10, 0)), Err(Error::DimensionMismatch(_))));
        assert!(matches!(m.forward(&random_instance(1, 3, 5, 0)), Err(Error::ShapeletTooLong { .. })));
    }

    #[test]
    fn loss_examples() {
        let m = {
            let mut m = random_model(1, 1, 1, 2, &[1], Activation::Relu);
            m.params.weights = vec![vec![0.0, 0.0]];
            m
        };
        let fwd = ForwardResult {
            distances: vec![0.0],
            argmin: vec![0],
            scores: vec![0.0, 0.0],
            probabilities: vec![0.5, 0.5],
        };
        let loss = instance_loss(&m, &fwd, &[1.0, 0.0], 0.0, 10);
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-15);

        let perfect = ForwardResult { probabilities: vec![1.0, 0.0], ..fwd.clone() };
        let mut wm = m.clone();
        wm.params.weights = vec![vec![3.0, -4.0]];
        let loss = instance_loss(&wm, &perfect, &[1.0, 0.0], 0.5, 5);
        let reg = 0.5 / 10.0 * 25.0;
        assert!((loss - reg).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_scalar_recomputation() {
        let m = random_model(9, 3, 2, 3, &[2, 3], Activation::Relu);
        let inst = random_instance(10, 2, 8, 2);
        let fwd = m.forward(&inst).unwrap();
        let y = [0.0, 0.0, 1.0];
        let got = instance_loss(&m, &fwd, &y, 0.3, 7);
        let p = &fwd.probabilities;
        let mut want = -(p[2].ln()) - (1.0 - p[0]).ln() - (1.0 - p[1]).ln();
        let mut wsq = 0.0;
        for row in &m.params.weights {
            for w in row {
                wsq += w * w;
            }
        }
        want += 0.3 / 14.0 * wsq;
        assert!((got - want).abs() < 1e-12);
    }

    fn toy_dataset(n: usize, v: usize, q: usize, c: usize) -> TimeSeriesDataset {
        let instances: Vec<Instance> = (0..n).map(|i| random_instance(100 + i as u64, v, q, i % c)).collect();
        TimeSeriesDataset::from_parts(instances, (0..c as i64).map(Label::Int).collect()).unwrap()
    }

    #[test]
    fn zero_weight_objective_closed_form() {
        let ds = toy_dataset(7, 2, 10, 3);
        let mut m = random_model(3, 2, 2, 3, &[4], Activation::Relu);
        m.params.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        m.params.bias.iter_mut().for_each(|b| *b = 0.0);
        let got = total_objective(&m, &ds, &ds.one_hot(), 0.1).unwrap();
        let c = 3.0f64;
        let want = 7.0 * (c.ln() + (c - 1.0) * (c / (c - 1.0)).ln());
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn total_equals_sum_of_decomposed() {
        let ds = toy_dataset(11, 3, 12, 3);
        let m = random_model(4, 5, 3, 3, &[3, 5], Activation::Relu);
        let y = ds.one_hot();
        let total = total_objective(&m, &ds, &y, 0.25).unwrap();
        let sum: f64 = ds
            .instances()
            .iter()
            .enumerate()
            .map(|(i, inst)| instance_loss(&m, &m.forward(inst).unwrap(), y.row(i), 0.25, ds.len()))
            .sum();
        assert!((total - sum).abs() < 1e-9);
    }

    #[test]
    fn frozen_masks_match_unit_weights() {
        let mut m = random_model(8, 2, 3, 2, &[4], Activation::Relu);
        let inst = random_instance(3, 3, 12, 0);
        m.masks_frozen = true;
        let frozen = m.forward(&inst).unwrap();
        m.masks_frozen = false;
        m.params.masks.iter_mut().flatten().for_each(|x| *x = 1.0);
        assert_eq!(frozen, m.forward(&inst).unwrap());
    }

    #[test]
    fn model_round_trip() {
        let mut m = random_model(12, 3, 4, 3, &[2, 5, 3], Activation::Sigmoid);
        m.training = Some(TrainConfig::default());
        m.params.masks[0][0] = -0.7;
        let text = model_to_json(&m);
        let back = model_from_json(&text).unwrap();
        assert_eq!(back, m);
        let inst = random_instance(1, 4, 9, 0);
        assert_eq!(m.forward(&inst).unwrap(), back.forward(&inst).unwrap());
    }

    #[test]
    fn model_version_and_schema_errors() {
        let m = random_model(12, 2, 2, 2, &[2], Activation::Relu);
        let text = model_to_json(&m).replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(model_from_json(&text), Err(Error::VersionMismatch { found: 7, .. })));
        let text = model_to_json(&m).replacen("\"lengths\":[2,2]", "\"lengths\":[2,3]", 1);
        assert!(matches!(model_from_json(&text), Err(Error::Schema(_))));
        assert!(matches!(model_from_json("{\"version\":1}"), Err(Error::Schema(_))));
    }

    #[test]
    fn save_and_load_file() {
        let m = random_model(2, 2, 2, 2, &[2], Activation::Relu);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(seed in any::<u64>(), c in 2usize..6) {
            let m = random_model(seed, 3, 2, c, &[2, 3], Activation::Relu);
            let fwd = m.forward(&random_instance(seed ^ 1, 2, 7, 0)).unwrap();
            let s: f64 = fwd.probabilities.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            prop_assert!(fwd.probabilities.iter().all(|&p| p > 0.0 && p < 1.0));
        }

        #[test]
        fn prediction_ignores_constant_score_shift(seed in any::<u64>(), shift in -50.0f64..50.0) {
            let mut m = random_model(seed, 3, 2, 4, &[3], Activation::Relu);
            let inst = random_instance(seed ^ 7, 2, 9, 0);
            let before = m.predict(&inst).unwrap();
            m.params.bias.iter_mut().for_each(|b| *b += shift);
            prop_assert_eq!(before, m.predict(&inst).unwrap());
        }

        #[test]
        fn objective_is_permutation_invariant(seed in any::<u64>()) {
            let ds = toy_dataset(5, 2, 9, 2);
            let m = random_model(seed, 3, 2, 2, &[2, 3, 4], Activation::Relu);
            let mut p = m.clone();
            p.params.shapelets.rotate_left(1);
            p.params.masks.rotate_left(1);
            p.params.weights.rotate_left(1);
            let y = ds.one_hot();
            let a = total_objective(&m, &ds, &y, 0.0).unwrap();
            let b = total_objective(&p, &ds, &y, 0.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!(a >= 0.0);
        }
    }
}
