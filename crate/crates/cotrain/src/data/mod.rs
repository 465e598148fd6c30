//! Datasets, labeled/unlabeled splitting, synthetic generators, and the
//! bundle-of-streams batching protocol.

mod csv;
mod stream;
mod synthetic;

pub use csv::{load_csv, save_csv};
pub(crate) use stream::mix_seed;
pub use stream::{make_bundles, Batch, Stream, StreamBundle};
pub use synthetic::{gaussian_blobs, two_moons};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A classification dataset: `[N×d]` features plus per-row optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    /// One entry per row; `None` marks an unlabeled row.
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    /// Global feature bounds; adversarial examples are clipped into them.
    pub feature_range: (f64, f64),
}

impl Dataset {
    /// Validates row counts, label ranges, and the feature bounds.
    pub fn new(
        features: Tensor,
        labels: Vec<Option<usize>>,
        num_classes: usize,
        feature_range: (f64, f64),
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        for (row, label) in labels.iter().enumerate() {
            if let Some(c) = label {
                if *c >= num_classes {
                    return Err(Error::Config(format!(
                        "row {row}: label {c} outside [0, {num_classes})"
                    )));
                }
            }
        }
        let (lo, hi) = feature_range;
        if features
            .data()
            .iter()
            .any(|&v| v < lo || v > hi || !v.is_finite())
        {
            return Err(Error::Config(format!(
                "features outside declared range [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            feature_range,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one row
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn fully_labeled(&self) -> bool {
        self.labels.iter().all(|l| l.is_some())
    }

    /// New dataset from a subset of rows, optionally dropping the labels.
    fn subset(&self, rows: &[usize], keep_labels: bool) -> Result<Dataset> {
        let row_vecs: Vec<Vec<f64>> = rows
            .iter()
            .map(|&r| self.features.row(r).to_vec())
            .collect();
        let labels = rows
            .iter()
            .map(|&r| if keep_labels { self.labels[r] } else { None })
            .collect();
        Ok(Dataset {
            features: Tensor::from_rows(&row_vecs)?,
            labels,
            num_classes: self.num_classes,
            feature_range: self.feature_range,
        })
    }

    /// Labels as plain indices; errors if any row is unlabeled.
    pub fn labels_dense(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|l| l.ok_or_else(|| Error::Config("dataset has unlabeled rows".into())))
            .collect()
    }
}

/// How to carve the labeled subset out of a fully labeled dataset.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub n_labeled: usize,
    pub seed: u64,
}

/// Result of [`split`]: the labeled pool, the unlabeled pool (labels
/// stripped, `None` when `n_labeled == N`), and the stripped labels kept
/// aside strictly for evaluation oracles — training code never sees them.
#[derive(Debug, Clone)]
pub struct Split {
    pub labeled: Dataset,
    pub unlabeled: Option<Dataset>,
    pub hidden_labels: Vec<usize>,
}

/// Stratified labeled/unlabeled split.
///
/// Every class contributes at least one labeled row; per-class quotas
/// follow the largest-remainder rule on class frequencies, so a balanced
/// dataset splits evenly. Deterministic in `spec.seed`.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !dataset.fully_labeled() {
        return Err(Error::Config(
            "split requires a fully labeled dataset".into(),
        ));
    }
    let n = dataset.len();
    let classes = dataset.num_classes;
    if spec.n_labeled < classes {
        return Err(Error::Config(format!(
            "n_labeled {} < {} classes: stratification impossible",
            spec.n_labeled, classes
        )));
    }
    if spec.n_labeled == 0 || spec.n_labeled > n {
        return Err(Error::Config(format!(
            "n_labeled {} outside (0, {n}]",
            spec.n_labeled
        )));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (row, label) in dataset.labels.iter().enumerate() {
        by_class[label.expect("fully labeled")].push(row);
    }
    if by_class.iter().any(|v| v.is_empty()) {
        return Err(Error::Config(
            "every class must appear at least once to stratify".into(),
        ));
    }

    // Largest-remainder quotas, then bump empty classes to one row.
    let mut quotas: Vec<usize> = Vec::with_capacity(classes);
    let mut remainders: Vec<(usize, u128)> = Vec::with_capacity(classes);
    for (c, rows) in by_class.iter().enumerate() {
        let exact = spec.n_labeled as u128 * rows.len() as u128;
        quotas.push((exact / n as u128) as usize);
        remainders.push((c, exact % n as u128));
    }
    let mut leftover = spec.n_labeled - quotas.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    while leftover > 0 {
        let mut progressed = false;
        for &(c, _) in remainders.iter() {
            if leftover == 0 {
                break;
            }
            if quotas[c] < by_class[c].len() {
                quotas[c] += 1;
                leftover -= 1;
                progressed = true;
            }
        }
        assert!(progressed, "quota distribution stalled");
    }
    while quotas.contains(&0) {
        let poor = quotas.iter().position(|&q| q == 0).expect("checked");
        let rich = (0..classes)
            .max_by_key(|&c| quotas[c])
            .expect("non-empty classes");
        quotas[rich] -= 1;
        quotas[poor] += 1;
    }

    let mut rng = StdRng::seed_from_u64(spec.seed);
    let mut labeled_rows = Vec::with_capacity(spec.n_labeled);
    let mut unlabeled_rows = Vec::new();
    for (c, rows) in by_class.iter().enumerate() {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        labeled_rows.extend_from_slice(&shuffled[..quotas[c]]);
        unlabeled_rows.extend_from_slice(&shuffled[quotas[c]..]);
    }
    labeled_rows.sort_unstable();
    unlabeled_rows.sort_unstable();

    let labeled = dataset.subset(&labeled_rows, true)?;
    let (unlabeled, hidden_labels) = if unlabeled_rows.is_empty() {
        (None, Vec::new())
    } else {
        let hidden = unlabeled_rows
            .iter()
            .map(|&r| dataset.labels[r].expect("fully labeled"))
            .collect();
        (Some(dataset.subset(&unlabeled_rows, false)?), hidden)
    };
    Ok(Split {
        labeled,
        unlabeled,
        hidden_labels,
    })
}
