//! Labeled multivariate time-series datasets.
//!
//! On disk a dataset is UTF-8 JSON Lines, one instance per line:
//!
//! ```text
//! {"id":"s1","label":"walk","channels":[[0.1,0.2,0.3],[1.0,0.9,0.8]]}
//! ```
//!
//! Series lengths may vary between instances but not between the channels of
//! one instance. Labels are arbitrary strings or integers; internally they are
//! class indices `0..C` assigned in order of first appearance.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// An original class label as it appears in a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Str(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(v) => write!(f, "{v}"),
            Label::Str(s) => write!(f, "{s}"),
        }
    }
}

impl From<i64> for Label {
    fn from(v: i64) -> Self {
        Label::Int(v)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Str(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    /// Class index in `0..C` of the owning dataset.
    pub class: usize,
    /// `V` channels of equal length.
    pub channels: Vec<Vec<f64>>,
}

impl Instance {
    pub fn new(id: impl Into<String>, class: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        let len = channels.first().map_or(0, Vec::len);
        if channels.is_empty() || len == 0 {
            return Err(Error::DimensionMismatch(format!(
                "instance {id} has no values"
            )));
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::RaggedChannels { id });
        }
        Ok(Self { id, class, channels })
    }

    /// Series length `Q_i`.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    instances: Vec<Instance>,
    num_channels: usize,
    class_labels: Vec<Label>,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    id: &'a str,
    label: &'a Label,
    channels: &'a [Vec<f64>],
}

#[derive(Deserialize)]
struct Record {
    id: String,
    label: Label,
    channels: Vec<Vec<f64>>,
}

impl TimeSeriesDataset {
    /// Builds a dataset from `(id, label, channels)` triples, assigning class
    /// indices in order of first appearance.
    pub fn from_labeled<I>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Label, Vec<Vec<f64>>)>,
    {
        let mut class_labels = Vec::new();
        let mut index: HashMap<Label, usize> = HashMap::new();
        let mut instances = Vec::new();
        for (id, label, channels) in items {
            let class = *index.entry(label.clone()).or_insert_with(|| {
                class_labels.push(label);
                class_labels.len() - 1
            });
            instances.push(Instance::new(id, class, channels)?);
        }
        Self::from_parts(instances, class_labels)
    }

    /// Builds a dataset from instances already carrying class indices into
    /// `class_labels`.
    pub fn from_parts(instances: Vec<Instance>, class_labels: Vec<Label>) -> Result<Self> {
        let first = instances.first().ok_or(Error::EmptyDataset)?;
        let num_channels = first.num_channels();
        for inst in &instances {
            if inst.num_channels() != num_channels {
                return Err(Error::ChannelCount {
                    id: inst.id.clone(),
                    expected: num_channels,
                    found: inst.num_channels(),
                });
            }
            if inst.class >= class_labels.len() {
                return Err(Error::DimensionMismatch(format!(
                    "instance {} has class index {} but only {} labels",
                    inst.id,
                    inst.class,
                    class_labels.len()
                )));
            }
            if inst.channels.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::DimensionMismatch(format!(
                    "instance {} contains non-finite values",
                    inst.id
                )));
            }
        }
        Ok(Self {
            instances,
            num_channels,
            class_labels,
        })
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn class_labels(&self) -> &[Label] {
        &self.class_labels
    }

    pub fn label_of(&self, i: usize) -> &Label {
        &self.class_labels[self.instances[i].class]
    }

    pub fn min_length(&self) -> usize {
        self.instances.iter().map(Instance::len).min().unwrap_or(0)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for inst in &self.instances {
            counts[inst.class] += 1;
        }
        counts
    }

    /// Re-indexes classes to follow `labels`, e.g. to evaluate a test split
    /// against the label order a model was trained with.
    pub fn with_label_order(&self, labels: &[Label]) -> Result<Self> {
        let position: HashMap<&Label, usize> =
            labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let remap = self
            .class_labels
            .iter()
            .map(|l| {
                position
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::UnknownLabel(l.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let instances = self
            .instances
            .iter()
            .map(|inst| Instance {
                class: remap[inst.class],
                ..inst.clone()
            })
            .collect();
        Ok(Self {
            instances,
            num_channels: self.num_channels,
            class_labels: labels.to_vec(),
        })
    }

    /// The instances at `indices`, keeping this dataset's class indexing.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            num_channels: self.num_channels,
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn one_hot(&self) -> OneHotTargets {
        let c = self.num_classes();
        let rows = self
            .instances
            .iter()
            .map(|inst| {
                let mut row = vec![0.0; c];
                row[inst.class] = 1.0;
                row
            })
            .collect();
        OneHotTargets { rows }
    }

    /// Per instance and channel, subtract the mean and divide by the
    /// population standard deviation. Constant channels become zeros.
    pub fn znormalized(&self) -> Self {
        let instances = self
            .instances
            .iter()
            .map(|inst| Instance {
                channels: inst.channels.iter().map(|c| znormalize(c)).collect(),
                ..inst.clone()
            })
            .collect();
        Self {
            instances,
            ..self.clone()
        }
    }
}

fn znormalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|x| (x - mean) / sd).collect()
}

/// One-vs-all binary targets, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotTargets {
    rows: Vec<Vec<f64>>,
}

impl OneHotTargets {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<TimeSeriesDataset> {
    let mut items = Vec::new();
    let mut num_channels = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        let expected = *num_channels.get_or_insert(rec.channels.len());
        if rec.channels.len() != expected {
            return Err(Error::ChannelCount {
                id: rec.id,
                expected,
                found: rec.channels.len(),
            });
        }
        if rec.channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: n + 1,
                message: "non-finite value".into(),
            });
        }
        items.push((rec.id, rec.label, rec.channels));
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    TimeSeriesDataset::from_labeled(items)
}

pub fn save_dataset(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset(ds, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset<W: Write>(ds: &TimeSeriesDataset, out: &mut W) -> std::io::Result<()> {
    for inst in ds.instances() {
        let rec = RecordRef {
            id: &inst.id,
            label: &ds.class_labels[inst.class],
            channels: &inst.channels,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified k-fold split. Within each class the indices are shuffled and
/// dealt round-robin, continuing the deal across classes, so every fold gets
/// `floor` or `ceil` of each class's share. Falls back to an unstratified
/// deal when some class has fewer members than `folds`.
pub fn stratified_kfold(ds: &TimeSeriesDataset, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("folds must be >= 2, got {folds}")));
    }
    if folds > ds.len() {
        return Err(Error::InvalidConfig(format!(
            "{folds} folds requested for {} instances",
            ds.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let counts = ds.class_counts();
    let stratify = counts.iter().all(|&n| n == 0 || n >= folds);

    let mut order: Vec<usize> = Vec::with_capacity(ds.len());
    if stratify {
        for class in 0..ds.num_classes() {
            let mut members: Vec<usize> = (0..ds.len())
                .filter(|&i| ds.instances[i].class == class)
                .collect();
            members.shuffle(&mut rng);
            order.extend(members);
        }
    } else {
        log::warn!("some class has fewer than {folds} members; using unstratified folds");
        order.extend(0..ds.len());
        order.shuffle(&mut rng);
    }

    let mut assignment = vec![0usize; ds.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % folds;
    }
    Ok((0..folds)
        .map(|f| Fold {
            train: (0..ds.len()).filter(|&i| assignment[i] != f).collect(),
            validation: (0..ds.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect())
}
