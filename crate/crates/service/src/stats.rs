//! Condition-space summary of the training set.

use linksynth::Dataset;
use serde::Serialize;

pub const DEFAULT_BINS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub bins: usize,
    pub d_max: Range,
    pub eta_min: Range,
    /// Bin edges, `bins + 1` each.
    pub d_max_edges: Vec<f64>,
    pub eta_min_edges: Vec<f64>,
    /// `histogram[i][j]` counts samples in `d_max` bin `i` and `eta_min` bin `j`.
    pub histogram: Vec<Vec<u64>>,
    pub d_max_marginal: Vec<u64>,
    pub eta_min_marginal: Vec<u64>,
}

fn bin_of(x: f64, r: &Range, bins: usize) -> usize {
    let width = r.max - r.min;
    if width <= 0.0 {
        return 0;
    }
    (((x - r.min) / width * bins as f64) as usize).min(bins - 1)
}

fn edges(r: &Range, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| r.min + (r.max - r.min) * k as f64 / bins as f64).collect()
}

impl DatasetStats {
    /// `None` for an empty dataset.
    pub fn from_dataset(dataset: &Dataset, bins: usize) -> Option<Self> {
        if dataset.is_empty() || bins == 0 {
            return None;
        }
        let range = |f: fn(&linksynth::MechanismSample) -> f64| {
            let (lo, hi) = dataset
                .samples
                .iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Range { min: lo, max: hi }
        };
        let d_max = range(|s| s.conditions.d_max);
        let eta_min = range(|s| s.conditions.eta_min);
        let mut histogram = vec![vec![0u64; bins]; bins];
        let mut d_max_marginal = vec![0u64; bins];
        let mut eta_min_marginal = vec![0u64; bins];
        for s in &dataset.samples {
            let i = bin_of(s.conditions.d_max, &d_max, bins);
            let j = bin_of(s.conditions.eta_min, &eta_min, bins);
            histogram[i][j] += 1;
            d_max_marginal[i] += 1;
            eta_min_marginal[j] += 1;
        }
        Some(Self {
            n_samples: dataset.len(),
            bins,
            d_max_edges: edges(&d_max, bins),
            eta_min_edges: edges(&eta_min, bins),
            d_max,
            eta_min,
            histogram,
            d_max_marginal,
            eta_min_marginal,
        })
    }
}
