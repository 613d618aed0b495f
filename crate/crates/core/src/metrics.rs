//! Accuracy, discrimination, consistency and delta.
//!
//! Consistency compares each prediction with the mean prediction of the
//! individual's `k` nearest neighbours under Gower similarity on the raw
//! (pre-encoding) feature columns. Sensitive and label columns take no part
//! in the similarity.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, ColumnStats, Example, FeatureSchema, RawValue};
use crate::policy::Action;
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub split: String,
    pub n: usize,
    pub k: usize,
    pub accuracy: f64,
    pub discrimination: f64,
    pub consistency: f64,
    /// `accuracy - discrimination`.
    pub delta: f64,
}

impl EvaluationReport {
    pub fn new(split: &str, n: usize, k: usize, accuracy: f64, discrimination: f64, consistency: f64) -> Self {
        EvaluationReport {
            split: split.to_string(),
            n,
            k,
            accuracy,
            discrimination,
            consistency,
            delta: accuracy - discrimination,
        }
    }
}

/// Per-feature-column Gower normalisers taken from a fitted schema.
#[derive(Debug, Clone)]
pub struct Gower {
    /// `Some(range)` for continuous columns, `None` for categorical ones.
    ranges: Vec<Option<f64>>,
}

impl Gower {
    pub fn new(schema: &FeatureSchema) -> Result<Self> {
        let ranges = schema
            .feature_columns()
            .map(|i| match (schema.columns()[i].kind, schema.stats(i)) {
                (ColumnKind::Continuous, ColumnStats::Continuous(st)) => Ok(Some(st.range())),
                (ColumnKind::Categorical, _) => Ok(None),
                _ => Err(Error::Schema("Gower similarity needs a fitted schema".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Gower { ranges })
    }

    pub fn num_columns(&self) -> usize {
        self.ranges.len()
    }

    /// Mean per-column similarity with unit weights.
    pub fn similarity(&self, a: &[RawValue], b: &[RawValue]) -> Result<f64> {
        if a.len() != self.ranges.len() || b.len() != self.ranges.len() {
            return Err(Error::Dimension {
                expected: self.ranges.len(),
                got: if a.len() != self.ranges.len() { a.len() } else { b.len() },
            });
        }
        let mut total = 0.0;
        for ((range, x), y) in self.ranges.iter().zip(a).zip(b) {
            total += match (range, x, y) {
                (Some(r), RawValue::Continuous(x), RawValue::Continuous(y)) => {
                    if *r > 0.0 {
                        (1.0 - (x - y).abs() / r).clamp(0.0, 1.0)
                    } else {
                        1.0
                    }
                }
                (None, RawValue::Categorical(x), RawValue::Categorical(y)) => f64::from(u8::from(x == y)),
                _ => return Err(Error::Schema("raw feature kinds do not match the schema".into())),
            };
        }
        Ok(if self.ranges.is_empty() { 1.0 } else { total / self.ranges.len() as f64 })
    }
}

/// Gower similarity between two individuals' raw feature columns.
pub fn gower_similarity(a: &[RawValue], b: &[RawValue], schema: &FeatureSchema) -> Result<f64> {
    Gower::new(schema)?.similarity(a, b)
}

/// The `k` most similar other examples of each example in one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    k: usize,
    /// Row-major `n x k`, most similar first.
    neighbors: Vec<usize>,
}

impl NeighborIndex {
    pub fn from_lists(k: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let mut neighbors = Vec::with_capacity(lists.len() * k);
        for (i, list) in lists.iter().enumerate() {
            if list.len() != k || list.contains(&i) || list.iter().any(|&j| j >= lists.len()) {
                return Err(Error::Data(format!("invalid neighbour list for example {i}")));
            }
            neighbors.extend(list);
        }
        Ok(NeighborIndex { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }
}

/// Exact k-nearest-neighbour search by full pairwise scan.
///
/// Ties in similarity go to the lower index.
pub fn k_nearest<T: Sync>(split: &[Example<T>], k: usize, schema: &FeatureSchema) -> Result<NeighborIndex> {
    let n = split.len();
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k = {k} must be in 1..{n} for a split of {n} examples")));
    }
    let gower = Gower::new(schema)?;
    for e in split {
        if e.raw.len() != gower.num_columns() {
            return Err(Error::Dimension {
                expected: gower.num_columns(),
                got: e.raw.len(),
            });
        }
    }
    let lists: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for (j, other) in split.iter().enumerate() {
                if j == i {
                    continue;
                }
                let sim = gower.similarity(&split[i].raw, &other.raw)?;
                // Candidates arrive in index order, so an equal similarity
                // never displaces an earlier index.
                if best.len() == k && sim <= best[k - 1].0 {
                    continue;
                }
                let pos = best.partition_point(|&(s, _)| s >= sim);
                best.insert(pos, (sim, j));
                best.truncate(k);
            }
            Ok(best.into_iter().map(|(_, j)| j).collect())
        })
        .collect::<Result<_>>()?;
    NeighborIndex::from_lists(k, &lists)
}

/// `1 - mean_i |yhat_i - mean_{j in kNN(i)} yhat_j|`.
pub fn consistency(predictions: &[Action], neighbors: &NeighborIndex) -> Result<f64> {
    if predictions.len() != neighbors.len() {
        return Err(Error::Dimension {
            expected: neighbors.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Undefined("consistency of an empty split".into()));
    }
    let k = neighbors.k() as f64;
    let total: f64 = (0..predictions.len())
        .map(|i| {
            let mean = neighbors.neighbors(i).iter().map(|&j| f64::from(predictions[j])).sum::<f64>() / k;
            (f64::from(predictions[i]) - mean).abs()
        })
        .sum();
    Ok(1.0 - total / predictions.len() as f64)
}

/// Absolute gap between the two groups' positive-prediction rates.
pub fn discrimination(predictions: &[Action], sensitive: &[u8]) -> Result<f64> {
    if predictions.len() != sensitive.len() {
        return Err(Error::Dimension {
            expected: sensitive.len(),
            got: predictions.len(),
        });
    }
    let mut count = [0usize; 2];
    let mut positive = [0usize; 2];
    for (&p, &s) in predictions.iter().zip(sensitive) {
        let g = usize::from(s.min(1));
        count[g] += 1;
        positive[g] += usize::from(p);
    }
    if count.contains(&0) {
        return Err(Error::Undefined(
            "discrimination needs both sensitive groups to be present".into(),
        ));
    }
    let rate = |g: usize| positive[g] as f64 / count[g] as f64;
    Ok((rate(0) - rate(1)).abs())
}

pub fn accuracy(predictions: &[Action], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Undefined("accuracy of an empty split".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// All four numbers for `predictions` on `split`, building the split's
/// neighbour index on the fly.
pub fn evaluate<T: Sync>(
    predictions: &[Action],
    split: &[Example<T>],
    schema: &FeatureSchema,
    k: usize,
    split_name: &str,
) -> Result<EvaluationReport> {
    let index = k_nearest(split, k, schema)?;
    evaluate_with_index(predictions, split, &index, split_name)
}

/// Same as [`evaluate`] with a precomputed neighbour index.
pub fn evaluate_with_index<T>(
    predictions: &[Action],
    split: &[Example<T>],
    index: &NeighborIndex,
    split_name: &str,
) -> Result<EvaluationReport> {
    let labels: Vec<u8> = split.iter().map(|e| e.label).collect();
    let sensitive: Vec<u8> = split.iter().map(|e| e.sensitive).collect();
    Ok(EvaluationReport::new(
        split_name,
        split.len(),
        index.k(),
        accuracy(predictions, &labels)?,
        discrimination(predictions, &sensitive)?,
        consistency(predictions, index)?,
    ))
}
