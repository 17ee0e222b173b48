//! Analytic gradients of the per-instance objective and a central-difference
//! oracle to check them against.
//!
//! Gradients flow through the scores `Z_c`. For shapelet `k` the distance
//! `A_k` depends on its parameters only through the best window `j*` found in
//! the forward pass, so the shapelet and mask terms are subgradients that are
//! exact wherever that window is unique.

use rand::Rng;

use crate::dataset::Instance;
use crate::distance::{distance_profile, Activation};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{instance_loss, ForwardResult, Params, ShapeletModel, LOG_FLOOR};

/// Gradients share the parameter layout.
pub type GradientSet = Params;

/// `dL/dZ_c` of the two-sided per-class loss against softmax outputs.
///
/// With `q_c = (1 - y_c) p_c / (1 - p_c)` and `S = sum_c q_c` this is
/// `p_c - y_c + q_c - p_c S`; the first two terms come from the `-y log p`
/// part, the rest from `-(1 - y) log(1 - p)`.
pub fn score_residuals(probabilities: &[f64], y: &[f64]) -> Vec<f64> {
    let y_sum: f64 = y.iter().sum();
    let q: Vec<f64> = probabilities
        .iter()
        .zip(y)
        .map(|(&p, &t)| (1.0 - t) * p / (1.0 - p).max(LOG_FLOOR))
        .collect();
    let s: f64 = q.iter().sum();
    probabilities
        .iter()
        .zip(y)
        .zip(&q)
        .map(|((&p, &t), &qc)| p * y_sum - t + qc - p * s)
        .collect()
}

pub fn instance_gradients(
    model: &ShapeletModel,
    instance: &Instance,
    fwd: &ForwardResult,
    y: &[f64],
    lambda: f64,
    num_instances: usize,
) -> Result<GradientSet> {
    let residuals = score_residuals(&fwd.probabilities, y);
    let mut grads = Params::zeros_like(&model.params);
    accumulate(
        model,
        instance,
        fwd,
        &residuals,
        0..model.num_classes(),
        lambda / num_instances as f64,
        &mut grads,
    )?;
    Ok(grads)
}

/// The part of the gradient that flows through the single score `Z_c`.
/// Summed over all classes it equals [`instance_gradients`].
pub fn class_gradients(
    model: &ShapeletModel,
    instance: &Instance,
    fwd: &ForwardResult,
    residuals: &[f64],
    class: usize,
    lambda: f64,
    num_instances: usize,
    grads: &mut GradientSet,
) -> Result<()> {
    grads.values_mut().for_each(|g| *g = 0.0);
    accumulate(
        model,
        instance,
        fwd,
        residuals,
        class..class + 1,
        lambda / num_instances as f64,
        grads,
    )
}

fn accumulate(
    model: &ShapeletModel,
    instance: &Instance,
    fwd: &ForwardResult,
    residuals: &[f64],
    classes: std::ops::Range<usize>,
    reg: f64,
    grads: &mut GradientSet,
) -> Result<()> {
    let p = &model.params;
    let v_count = model.num_channels();
    if instance.num_channels() != v_count
        || fwd.distances.len() != model.num_shapelets()
        || residuals.len() != model.num_classes()
    {
        return Err(Error::DimensionMismatch(
            "forward result, instance and model disagree".into(),
        ));
    }

    for k in 0..model.num_shapelets() {
        let coeff: f64 = classes.clone().map(|c| residuals[c] * p.weights[k][c]).sum();
        for c in classes.clone() {
            grads.weights[k][c] = residuals[c] * fwd.distances[k] + reg * p.weights[k][c];
        }
        if coeff == 0.0 {
            continue;
        }
        let shapelet = &p.shapelets[k];
        let len = shapelet[0].len();
        let start = fwd.argmin[k];
        let scale = 1.0 / (v_count * len) as f64;
        for v in 0..v_count {
            let weight = model.mask_weight(k, v);
            let slope = model.mask_slope(k, v);
            if weight == 0.0 && slope == 0.0 {
                continue;
            }
            let segment = &instance.channels[v][start..start + len];
            let mut ss = 0.0;
            for (l, (t, s)) in segment.iter().zip(&shapelet[v]).enumerate() {
                let diff = t - s;
                ss += diff * diff;
                grads.shapelets[k][v][l] = coeff * -2.0 * scale * weight * diff;
            }
            grads.masks[k][v] = coeff * scale * slope * ss;
        }
    }
    for c in classes {
        grads.bias[c] = residuals[c];
    }
    Ok(())
}

/// Central-difference gradient of [`instance_loss`].
#[derive(Debug, Clone)]
pub struct OracleGradient {
    pub gradient: GradientSet,
    /// Number of perturbed evaluations whose best window differed from the
    /// unperturbed one. Non-zero means the point is near a window tie and
    /// the analytic subgradient need not agree.
    pub argmin_shifts: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn finite_difference_oracle(
    model: &ShapeletModel,
    instance: &Instance,
    y: &[f64],
    lambda: f64,
    num_instances: usize,
    step: f64,
    exec: Execution,
) -> Result<OracleGradient> {
    if step <= 0.0 {
        return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
    }
    let base = model.forward(instance)?;
    let n = model.params.len();
    let evals = exec.try_map(n, |idx| {
        let mut probe = model.clone();
        let mut eval = |delta: f64| -> Result<(f64, bool)> {
            probe.params.values_mut().nth(idx).map(|x| *x += delta);
            let fwd = probe.forward(instance)?;
            let loss = instance_loss(&probe, &fwd, y, lambda, num_instances);
            probe.params.values_mut().nth(idx).map(|x| *x -= delta);
            Ok((loss, fwd.argmin != base.argmin))
        };
        let original = *model.params.values().nth(idx).expect("index in range");
        let (plus, shift_a) = eval(step)?;
        let (minus, shift_b) = eval(-step)?;
        // restore exactly; += then -= can drift by an ulp
        *probe.params.values_mut().nth(idx).expect("index in range") = original;
        Ok::<_, Error>(((plus - minus) / (2.0 * step), shift_a as usize + shift_b as usize))
    })?;
    let mut gradient = Params::zeros_like(&model.params);
    for (g, (d, _)) in gradient.values_mut().zip(&evals) {
        *g = *d;
    }
    Ok(OracleGradient {
        gradient,
        argmin_shifts: evals.iter().map(|(_, s)| s).sum(),
    })
}

/// Step used by [`gradcheck`].
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Masks closer than this to zero sit near the relu kink and are redrawn.
pub const MASK_MARGIN: f64 = 1e-2;
/// Minimum gap between the best and second-best window for a point to count
/// as non-degenerate.
pub const WINDOW_GAP: f64 = 1e-4;
/// Gradient magnitudes below this are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub trial: usize,
    pub coordinate: String,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    pub checked: usize,
    pub skipped_degenerate: usize,
    pub max_relative_error: f64,
    pub worst: Option<Discrepancy>,
    pub failures: Vec<Discrepancy>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// A random small problem: `K = 2`, `V = 3`, `C = 3`, `Q = 12`, shapelet
/// lengths 4 and 3..=5, relu on even trials and sigmoid on odd ones.
pub struct GradcheckCase {
    pub model: ShapeletModel,
    pub instance: Instance,
    pub y: Vec<f64>,
    pub lambda: f64,
    pub num_instances: usize,
}

pub fn gradcheck_case(seed: u64, trial: usize) -> GradcheckCase {
    const K: usize = 2;
    const V: usize = 3;
    const C: usize = 3;
    const Q: usize = 12;
    let mut rng = crate::rng::stream(seed, trial as u64);
    let activation = if trial % 2 == 0 {
        Activation::Relu
    } else {
        Activation::Sigmoid
    };
    let lengths = [4, rng.random_range(3..=5)];
    let normal = |rng: &mut crate::rng::Rng| -> f64 { rng.sample(rand_distr::StandardNormal) };
    let shapelets = lengths
        .iter()
        .map(|&l| (0..V).map(|_| (0..l).map(|_| normal(&mut rng)).collect()).collect())
        .collect();
    let masks = (0..K)
        .map(|_| {
            (0..V)
                .map(|_| loop {
                    let m: f64 = normal(&mut rng);
                    if m.abs() > MASK_MARGIN {
                        break m;
                    }
                })
                .collect()
        })
        .collect();
    let weights = (0..K).map(|_| (0..C).map(|_| normal(&mut rng)).collect()).collect();
    let bias = (0..C).map(|_| normal(&mut rng)).collect();
    let class = rng.random_range(0..C);
    let channels = (0..V).map(|_| (0..Q).map(|_| normal(&mut rng)).collect()).collect();
    let lambda = rng.random_range(0.0..0.5);
    let num_instances = rng.random_range(1..=20);
    let mut y = vec![0.0; C];
    y[class] = 1.0;
    GradcheckCase {
        model: ShapeletModel {
            params: Params {
                shapelets,
                masks,
                weights,
                bias,
            },
            activation,
            masks_frozen: false,
            class_labels: (0..C as i64).map(crate::dataset::Label::Int).collect(),
            training: None,
        },
        instance: Instance::new(format!("gc{trial}"), class, channels).expect("valid instance"),
        y,
        lambda,
        num_instances,
    }
}

fn window_gap_ok(case: &GradcheckCase) -> bool {
    let m = &case.model;
    (0..m.num_shapelets()).all(|k| {
        let mut profile = distance_profile(&case.instance.channels, &m.params.shapelets[k], &m.mask_weights(k));
        if profile.len() < 2 {
            return true;
        }
        profile.sort_by(f64::total_cmp);
        profile[1] - profile[0] > WINDOW_GAP
    })
}

fn coordinate_name(params: &Params, mut idx: usize) -> String {
    for (k, s) in params.shapelets.iter().enumerate() {
        for (v, ch) in s.iter().enumerate() {
            if idx < ch.len() {
                return format!("P[{k}][{v}][{idx}]");
            }
            idx -= ch.len();
        }
    }
    for (k, row) in params.masks.iter().enumerate() {
        if idx < row.len() {
            return format!("mu[{k}][{idx}]");
        }
        idx -= row.len();
    }
    for (k, row) in params.weights.iter().enumerate() {
        if idx < row.len() {
            return format!("W[{k}][{idx}]");
        }
        idx -= row.len();
    }
    format!("W0[{idx}]")
}

/// Compares analytic and central-difference gradients on `trials` random
/// small problems. Trials near a window tie are skipped and counted.
pub fn gradcheck(seed: u64, trials: usize, tolerance: f64, exec: Execution) -> Result<GradcheckReport> {
    let outcomes = exec.try_map(trials, |trial| -> Result<Option<Vec<Discrepancy>>> {
        let case = gradcheck_case(seed, trial);
        if !window_gap_ok(&case) {
            return Ok(None);
        }
        let m = &case.model;
        let fwd = m.forward(&case.instance)?;
        let analytic = instance_gradients(m, &case.instance, &fwd, &case.y, case.lambda, case.num_instances)?;
        let oracle = finite_difference_oracle(
            m,
            &case.instance,
            &case.y,
            case.lambda,
            case.num_instances,
            GRADCHECK_STEP,
            Execution::Sequential,
        )?;
        if oracle.argmin_shifts > 0 {
            return Ok(None);
        }
        Ok(Some(
            analytic
                .values()
                .zip(oracle.gradient.values())
                .enumerate()
                .map(|(idx, (&a, &n))| Discrepancy {
                    trial,
                    coordinate: coordinate_name(&m.params, idx),
                    analytic: a,
                    numeric: n,
                    relative_error: relative_error(a, n),
                })
                .collect(),
        ))
    })?;

    let mut report = GradcheckReport {
        trials,
        checked: 0,
        skipped_degenerate: 0,
        max_relative_error: 0.0,
        worst: None,
        failures: Vec::new(),
    };
    for outcome in outcomes {
        let Some(entries) = outcome else {
            report.skipped_degenerate += 1;
            continue;
        };
        report.checked += 1;
        for d in entries {
            if d.relative_error > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(d.relative_error);
                report.worst = Some(d.clone());
            }
            if d.relative_error > tolerance {
                report.failures.push(d);
            }
        }
    }
    Ok(report)
}
