//! Brute-force k-nearest-neighbor classification with an abstaining vote.
//!
//! A query is labeled only when the share of the `k` nearest neighbors
//! carrying the majority label reaches the l-value percentage; otherwise
//! the model answers [`Decision::Uncertain`] and the caller is expected to
//! obtain the label some other way.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::FeatureVector;

pub const DEFAULT_K: usize = 11;
pub const DEFAULT_MINKOWSKI_P: f64 = 3.0;

/// Ground-truth insertion outcome. Positive means the lateral hole ended
/// up on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn other(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    /// Short tag used in files: `pos` / `neg`.
    pub fn tag(self) -> &'static str {
        match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pos" | "positive" => Ok(Label::Positive),
            "neg" | "negative" => Ok(Label::Negative),
            other => Err(format!("unknown label {other:?} (expected pos or neg)")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Positive,
    Negative,
    Uncertain,
}

impl Decision {
    pub fn label(self) -> Option<Label> {
        match self {
            Decision::Positive => Some(Label::Positive),
            Decision::Negative => Some(Label::Negative),
            Decision::Uncertain => None,
        }
    }

    pub fn is_uncertain(self) -> bool {
        self == Decision::Uncertain
    }
}

impl From<Label> for Decision {
    fn from(label: Label) -> Self {
        match label {
            Label::Positive => Decision::Positive,
            Label::Negative => Decision::Negative,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
    Manhattan,
    Minkowski(f64),
}

impl Metric {
    /// The four metrics compared in the post-hoc grid, Minkowski at p = 3.
    pub const ALL: [Metric; 4] = [
        Metric::Cosine,
        Metric::Euclidean,
        Metric::Manhattan,
        Metric::Minkowski(DEFAULT_MINKOWSKI_P),
    ];

    pub fn validate(&self) -> Result<()> {
        match *self {
            Metric::Minkowski(p) if !(p.is_finite() && p > 0.0) => Err(Error::InvalidExponent(p)),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Cosine => f.write_str("cosine"),
            Metric::Euclidean => f.write_str("euclidean"),
            Metric::Manhattan => f.write_str("manhattan"),
            Metric::Minkowski(p) => write!(f, "minkowski:{p}"),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    /// Accepts `cosine`, `euclidean`, `manhattan`, `minkowski` (p = 3) and
    /// `minkowski:<p>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let metric = match lower.as_str() {
            "cosine" => Metric::Cosine,
            "euclidean" => Metric::Euclidean,
            "manhattan" => Metric::Manhattan,
            "minkowski" => Metric::Minkowski(DEFAULT_MINKOWSKI_P),
            other => match other.strip_prefix("minkowski:") {
                Some(p) => Metric::Minkowski(
                    p.parse()
                        .map_err(|_| format!("invalid Minkowski exponent {p:?}"))?,
                ),
                None => return Err(format!("unknown metric {s:?}")),
            },
        };
        metric.validate().map_err(|e| e.to_string())?;
        Ok(metric)
    }
}

/// Distance between two feature vectors under `metric`.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    metric.validate()?;
    let pairs = a.iter().zip(b);
    let d = match metric {
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in pairs {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0)
        }
        Metric::Euclidean => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Metric::Manhattan => pairs.map(|(x, y)| (x - y).abs()).sum(),
        Metric::Minkowski(p) => pairs
            .map(|(x, y)| (x - y).abs().powf(p))
            .sum::<f64>()
            .powf(p.recip()),
    };
    Ok(d)
}

/// Abstaining vote over the labels of the `k` nearest neighbors.
///
/// Returns the majority label when `count * 100 >= l_value * k`, otherwise
/// [`Decision::Uncertain`]. An exact split (even `k`) counts the tie as
/// Negative's majority, which only ever commits at `l_value = 50`.
pub fn decide(neighbor_labels: &[Label], k: usize, l_value: f64) -> Result<Decision> {
    if neighbor_labels.is_empty() || k == 0 {
        return Err(Error::EmptyLabels);
    }
    if neighbor_labels.len() != k {
        return Err(Error::LabelCountMismatch {
            expected: k,
            got: neighbor_labels.len(),
        });
    }
    check_l_value(l_value)?;

    let positives = neighbor_labels
        .iter()
        .filter(|&&l| l == Label::Positive)
        .count();
    let negatives = k - positives;
    let (majority, count) = if positives > negatives {
        (Label::Positive, positives)
    } else {
        (Label::Negative, negatives)
    };
    // Both products are small integers, exactly representable in f64.
    if (count * 100) as f64 >= l_value * k as f64 {
        Ok(majority.into())
    } else {
        Ok(Decision::Uncertain)
    }
}

pub(crate) fn check_l_value(l_value: f64) -> Result<()> {
    if (50.0..=100.0).contains(&l_value) {
        Ok(())
    } else {
        Err(Error::InvalidLValue(l_value))
    }
}

/// One stored training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: Label,
}

/// Immutable k-NN model over an ordered dataset.
#[derive(Debug, Clone)]
pub struct KnnModel {
    dataset: Vec<Sample>,
    k: usize,
    metric: Metric,
    l_value: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    distance: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KnnModel {
    pub fn new(dataset: Vec<Sample>, k: usize, metric: Metric, l_value: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::ZeroParameter("k"));
        }
        metric.validate()?;
        check_l_value(l_value)?;
        if let Some(first) = dataset.first() {
            let dim = first.features.len();
            if let Some(bad) = dataset.iter().find(|s| s.features.len() != dim) {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: bad.features.len(),
                });
            }
        }
        Ok(Self {
            dataset,
            k,
            metric,
            l_value,
        })
    }

    pub fn dataset(&self) -> &[Sample] {
        &self.dataset
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn l_value(&self) -> f64 {
        self.l_value
    }

    /// Copy of the model with a different l-value, sharing nothing mutable.
    pub fn with_l_value(&self, l_value: f64) -> Result<Self> {
        check_l_value(l_value)?;
        Ok(Self {
            l_value,
            ..self.clone()
        })
    }

    /// Indices and distances of the `k` nearest samples, ordered by
    /// (distance, insertion index).
    pub fn nearest(&self, query: &FeatureVector) -> Result<Vec<(usize, f64)>> {
        if self.dataset.len() < self.k {
            return Err(Error::DatasetTooSmall {
                len: self.dataset.len(),
                k: self.k,
            });
        }
        // Max-heap of the best k seen so far; the root is the current worst.
        let mut heap = BinaryHeap::with_capacity(self.k + 1);
        for (index, sample) in self.dataset.iter().enumerate() {
            let d = distance(query.as_slice(), sample.features.as_slice(), self.metric)?;
            let candidate = Candidate { distance: d, index };
            if heap.len() < self.k {
                heap.push(candidate);
            } else if let Some(worst) = heap.peek() {
                if candidate < *worst {
                    heap.pop();
                    heap.push(candidate);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.index, c.distance))
            .collect())
    }

    pub fn nearest_labels(&self, query: &FeatureVector) -> Result<Vec<Label>> {
        Ok(self
            .nearest(query)?
            .into_iter()
            .map(|(i, _)| self.dataset[i].label)
            .collect())
    }

    pub fn classify(&self, query: &FeatureVector) -> Result<Decision> {
        decide(&self.nearest_labels(query)?, self.k, self.l_value)
    }
}
