//! Synthetic benchmark with class information confined to two channels.
//!
//! Each instance gets a class uniformly from {1, 2, 3}. Channels 1 and 2
//! receive a pattern pair drawn from the class-conditional table
//!
//! | class | pairs (p = 0.5 each) |
//! |-------|----------------------|
//! | 1     | (A, D), (B, F)       |
//! | 2     | (B, E), (C, D)       |
//! | 3     | (C, F), (A, E)       |
//!
//! so neither channel alone determines the class. Every remaining channel
//! receives one of the six patterns uniformly at random, independent of the
//! class. A pattern is added once, at a uniform random offset, on top of
//! i.i.d. Gaussian noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Pattern {
    pub const ALL: [Pattern; 6] = [Pattern::A, Pattern::B, Pattern::C, Pattern::D, Pattern::E, Pattern::F];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Pattern pairs for channels 1 and 2, per class (1-based classes).
pub const CLASS_PAIRS: [[(Pattern, Pattern); 2]; 3] = [
    [(Pattern::A, Pattern::D), (Pattern::B, Pattern::F)],
    [(Pattern::B, Pattern::E), (Pattern::C, Pattern::D)],
    [(Pattern::C, Pattern::F), (Pattern::A, Pattern::E)],
];

#[derive(Debug, Clone, PartialEq)]
pub struct PatternBank {
    patterns: Vec<Vec<f64>>,
}

impl PatternBank {
    pub fn get(&self, p: Pattern) -> &[f64] {
        &self.patterns[p.index()]
    }

    pub fn len(&self) -> usize {
        self.patterns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Six analytic shapes sampled at `len` points and rescaled to [-1, 1]:
/// rising ramp, falling ramp, triangle peak, square step at one third, one
/// sine period (phase-shifted by an eighth) and a downward Gaussian bump.
pub fn default_pattern_bank(len: usize) -> Result<PatternBank> {
    if len < 4 {
        return Err(Error::InvalidConfig(format!("pattern length must be >= 4, got {len}")));
    }
    let t = |i: usize| i as f64 / (len - 1) as f64;
    let shape = |f: &dyn Fn(f64) -> f64| rescale((0..len).map(|i| f(t(i))).collect());
    let patterns = vec![
        shape(&|t| t),
        shape(&|t| -t),
        shape(&|t| 1.0 - (2.0 * t - 1.0).abs()),
        shape(&|t| if t < 1.0 / 3.0 { 0.0 } else { 1.0 }),
        shape(&|t| (2.0 * PI * t + PI / 4.0).sin()),
        shape(&|t| -(-0.5 * ((t - 0.5) / 0.15).powi(2)).exp()),
    ];
    Ok(PatternBank { patterns })
}

fn rescale(values: Vec<f64>) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values.into_iter().map(|x| 2.0 * (x - lo) / (hi - lo) - 1.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub num_channels: usize,
    pub series_length: usize,
    pub pattern_length: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train_size: 500,
            test_size: 200,
            num_channels: 40,
            series_length: 202,
            pattern_length: 25,
            noise_sd: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.train_size == 0 || self.test_size == 0 {
            return fail("train and test sizes must be >= 1");
        }
        if self.num_channels < 2 {
            return fail("at least two channels are required");
        }
        if self.pattern_length < 4 {
            return fail("pattern length must be >= 4");
        }
        if self.pattern_length > self.series_length {
            return fail("pattern length exceeds series length");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return fail("noise sd must be finite and >= 0");
        }
        Ok(())
    }
}

/// What was planted in one generated instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planted {
    /// 1-based class as written to the label field.
    pub class: u8,
    pub patterns: Vec<Pattern>,
    pub offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub train_planted: Vec<Planted>,
    pub test_planted: Vec<Planted>,
}

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

pub fn generate(cfg: &SynthConfig) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let out = generate_with_truth(cfg)?;
    Ok((out.train, out.test))
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let bank = default_pattern_bank(cfg.pattern_length)?;
    let (train, train_planted) = split(cfg, &bank, "train", cfg.train_size, TRAIN_STREAM)?;
    let (test, test_planted) = split(cfg, &bank, "test", cfg.test_size, TEST_STREAM)?;
    Ok(SynthOutput {
        train,
        test,
        train_planted,
        test_planted,
    })
}

fn split(
    cfg: &SynthConfig,
    bank: &PatternBank,
    name: &str,
    size: usize,
    stream: u64,
) -> Result<(TimeSeriesDataset, Vec<Planted>)> {
    let mut rng = rng::stream(cfg.seed, stream);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let last_offset = cfg.series_length - cfg.pattern_length;
    let mut items = Vec::with_capacity(size);
    let mut planted = Vec::with_capacity(size);
    for i in 0..size {
        let class = rng.random_range(0..3usize);
        let (first, second) = CLASS_PAIRS[class][rng.random_range(0..2usize)];
        let mut patterns = vec![first, second];
        patterns.extend((2..cfg.num_channels).map(|_| Pattern::ALL[rng.random_range(0..6usize)]));

        let mut offsets = Vec::with_capacity(cfg.num_channels);
        let channels = patterns
            .iter()
            .map(|&p| {
                let mut values: Vec<f64> = (0..cfg.series_length).map(|_| noise.sample(&mut rng)).collect();
                let at = rng.random_range(0..=last_offset);
                offsets.push(at);
                for (x, s) in values[at..].iter_mut().zip(bank.get(p)) {
                    *x += s;
                }
                values
            })
            .collect();
        items.push((format!("{name}-{i:05}"), Label::Int(class as i64 + 1), channels));
        planted.push(Planted {
            class: class as u8 + 1,
            patterns,
            offsets,
        });
    }
    Ok((TimeSeriesDataset::from_labeled(items)?, planted))
}
