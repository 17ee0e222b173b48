//! Masked sliding-window distance between a shapelet and a series.
//!
//! For a shapelet of length `L` over `V` channels and a series of length `Q`
//! there are `J = Q - L + 1` windows. Window `j` scores
//!
//! ```text
//! (1 / (V L)) * sum_v f(mu_v) * sum_l (T[v][j + l] - P[v][l])^2
//! ```
//!
//! and the result is the minimum over windows together with the first window
//! index attaining it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-negative, non-decreasing map applied to raw mask values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(format!("unknown activation {other:?} (expected relu or sigmoid)")),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(a: Activation, x: f64) -> f64 {
    a.apply(x)
}

pub fn activate_derivative(a: Activation, x: f64) -> f64 {
    a.derivative(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    /// Zero-based start of the best window.
    pub argmin: usize,
}

/// Minimal masked distance with raw masks passed through `act`.
pub fn masked_min_distance(
    series: &[Vec<f64>],
    shapelet: &[Vec<f64>],
    raw_masks: &[f64],
    act: Activation,
) -> Result<DistanceResult> {
    let weights: Vec<f64> = raw_masks.iter().map(|&m| act.apply(m)).collect();
    weighted_min_distance(series, shapelet, &weights)
}

/// Minimal distance with already-activated per-channel weights.
///
/// Weights must be non-negative. Zero-weight channels are skipped and a window
/// is abandoned as soon as its partial sum exceeds the best complete one.
pub fn weighted_min_distance(
    series: &[Vec<f64>],
    shapelet: &[Vec<f64>],
    weights: &[f64],
) -> Result<DistanceResult> {
    weighted_min_distance_from(series, shapelet, weights, None)
}

/// Same as [`weighted_min_distance`], but scores window `hint` first. A good
/// guess (typically the previous argmin) lets most other windows be abandoned
/// early. The result does not depend on the hint.
pub fn weighted_min_distance_from(
    series: &[Vec<f64>],
    shapelet: &[Vec<f64>],
    weights: &[f64],
    hint: Option<usize>,
) -> Result<DistanceResult> {
    let v = series.len();
    if shapelet.len() != v || weights.len() != v {
        return Err(Error::DimensionMismatch(format!(
            "series has {v} channels, shapelet {} and masks {}",
            shapelet.len(),
            weights.len()
        )));
    }
    let q = series.first().map_or(0, Vec::len);
    let l = shapelet.first().map_or(0, Vec::len);
    if l == 0 || shapelet.iter().any(|c| c.len() != l) {
        return Err(Error::DimensionMismatch("shapelet channels must have equal, non-zero length".into()));
    }
    if l > q {
        return Err(Error::ShapeletTooLong {
            shapelet: l,
            series: q,
        });
    }

    let mut active: Vec<usize> = (0..v).filter(|&c| weights[c] > 0.0).collect();
    active.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    let window_sum = |j: usize, bound: f64| {
        let mut acc = 0.0;
        for &c in &active {
            acc += weights[c] * squared_diff(&series[c][j..j + l], &shapelet[c]);
            if acc > bound {
                break;
            }
        }
        acc
    };

    let windows = q - l + 1;
    let hint = hint.filter(|&h| h < windows);
    let (mut best, mut argmin) = match hint {
        Some(h) => (window_sum(h, f64::INFINITY), h),
        None => (f64::INFINITY, 0),
    };
    for j in 0..windows {
        if hint == Some(j) {
            continue;
        }
        let d = window_sum(j, best);
        if d < best || (d == best && j < argmin) {
            best = d;
            argmin = j;
        }
    }
    Ok(DistanceResult {
        value: best / (v * l) as f64,
        argmin,
    })
}

fn squared_diff(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; 4];
    let (a4, b4) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = a4.remainder().iter().zip(b4.remainder()).map(|(x, y)| (x - y) * (x - y)).sum();
    for (x, y) in a4.zip(b4) {
        for i in 0..4 {
            let d = x[i] - y[i];
            lanes[i] += d * d;
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail
}

/// Distance of every window, without skipping or abandoning.
pub fn distance_profile(series: &[Vec<f64>], shapelet: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let v = series.len();
    let q = series[0].len();
    let l = shapelet[0].len();
    let scale = (v * l) as f64;
    (0..=q.saturating_sub(l))
        .map(|j| {
            let total: f64 = (0..v)
                .map(|c| {
                    weights[c]
                        * series[c][j..j + l]
                            .iter()
                            .zip(&shapelet[c])
                            .map(|(t, p)| (t - p) * (t - p))
                            .sum::<f64>()
                })
                .sum();
            total / scale
        })
        .collect()
}
