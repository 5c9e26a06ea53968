//! Target-versus-actual metrics for synthesized linkages.
//!
//! Targets are sampled (or fixed), linkages are synthesized for them and
//! their actual conditions are recomputed with the exact kinematics, never
//! with the surrogate. Linkages that are not crank-rockers are excluded from
//! the condition metrics and reported as an invalid rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgan::{self, ConditionSampler, Generator};
use crate::conditions::{self, ConditionPair};
use crate::dataset::Normalizer;
use crate::error::{Error, Result};
use crate::kinematics::Linkage;
use crate::knn::KdTree;

/// Mean nearest-neighbour distance (unit space) below which a sample set
/// is flagged as collapsed.
pub const MODE_COLLAPSE_THRESHOLD: f64 = 0.01;

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return f64::NAN;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return f64::NAN;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// `1 - SS_res / SS_tot`, with `SS_tot` taken about the mean of the targets.
/// Undefined when all targets are equal.
pub fn r_squared(targets: &[f64], actuals: &[f64]) -> Result<f64> {
    assert_eq!(targets.len(), actuals.len());
    if targets.is_empty() {
        return Err(Error::Metric("R^2 of an empty set".into()));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("R^2 is undefined for constant targets".into()));
    }
    let ss_res: f64 = targets.iter().zip(actuals).map(|(t, a)| (t - a).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn mean_nearest_distance(unit: &[[f64; 5]]) -> f64 {
    let n = unit.len();
    if n < 2 {
        return 0.0;
    }
    let tree = KdTree::build(unit.to_vec());
    // collect first so the summation order does not depend on thread scheduling
    let nearest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let j = tree.nearest(unit[i], 1, Some(i))[0];
            unit[i].iter().zip(&unit[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        })
        .collect();
    nearest.iter().sum::<f64>() / n as f64
}

/// Negative mean distance from each linkage to its nearest other linkage,
/// measured in the unit space of the normalizer.
pub fn similarity_metric(normalizer: &Normalizer, linkages: &[Linkage]) -> f64 {
    let unit: Vec<[f64; 5]> = linkages.iter().map(|l| normalizer.linkage_to_unit(l)).collect();
    -mean_nearest_distance(&unit)
}

/// Population standard deviation of each linkage field in raw units.
pub fn field_stddev(linkages: &[Linkage]) -> [f64; 5] {
    let n = linkages.len();
    if n == 0 {
        return [0.0; 5];
    }
    std::array::from_fn(|k| {
        let vals: Vec<f64> = linkages.iter().map(|l| l.to_array()[k]).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConditionSource {
    /// `n` targets drawn from the k-NN condition sampler.
    KnnSampled(usize),
    /// The same target repeated `n` times.
    Fixed { d_t: f64, eta_t: f64, n: usize },
}

impl ConditionSource {
    pub fn count(&self) -> usize {
        match *self {
            ConditionSource::KnnSampled(n) => n,
            ConditionSource::Fixed { n, .. } => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_total: usize,
    pub n_valid: usize,
    pub invalid_rate: f64,
    pub rmse_d: f64,
    pub rmse_eta: f64,
    pub mae_d: f64,
    pub mae_eta: f64,
    /// `None` when the targets are constant.
    pub r2_d: Option<f64>,
    pub r2_eta: Option<f64>,
    /// Both conditions pooled into one error sample.
    pub rmse: f64,
    pub mae: f64,
    pub similarity: f64,
    /// `l2, l3, l4, ee_x, ee_y`.
    pub field_std: [f64; 5],
    pub mean_nearest_distance: f64,
    pub mode_collapse: bool,
}

impl Metrics {
    /// Computes every metric from targets and exact conditions (`None` = invalid).
    pub fn compute(
        normalizer: &Normalizer,
        targets: &[[f64; 2]],
        linkages: &[Linkage],
        actual: &[Option<ConditionPair>],
    ) -> Self {
        assert!(targets.len() == linkages.len() && linkages.len() == actual.len());
        let n_total = targets.len();
        let (mut dt, mut dr, mut ht, mut hr) = (vec![], vec![], vec![], vec![]);
        for (t, a) in targets.iter().zip(actual) {
            if let Some(a) = a {
                dt.push(t[0]);
                dr.push(a.d_max);
                ht.push(t[1]);
                hr.push(a.eta_min);
            }
        }
        let n_valid = dt.len();
        let pooled_t: Vec<f64> = dt.iter().chain(&ht).copied().collect();
        let pooled_r: Vec<f64> = dr.iter().chain(&hr).copied().collect();
        let unit: Vec<[f64; 5]> = linkages.iter().map(|l| normalizer.linkage_to_unit(l)).collect();
        let mnd = mean_nearest_distance(&unit);
        let metrics = Self {
            n_total,
            n_valid,
            invalid_rate: if n_total == 0 { 0.0 } else { (n_total - n_valid) as f64 / n_total as f64 },
            rmse_d: rmse(&dt, &dr),
            rmse_eta: rmse(&ht, &hr),
            mae_d: mae(&dt, &dr),
            mae_eta: mae(&ht, &hr),
            r2_d: r_squared(&dt, &dr).ok(),
            r2_eta: r_squared(&ht, &hr).ok(),
            rmse: rmse(&pooled_t, &pooled_r),
            mae: mae(&pooled_t, &pooled_r),
            similarity: -mnd,
            field_std: field_stddev(linkages),
            mean_nearest_distance: mnd,
            mode_collapse: n_total >= 2 && mnd <= MODE_COLLAPSE_THRESHOLD,
        };
        metrics.check_power_mean();
        metrics
    }

    /// RMSE is never below MAE.
    pub fn check_power_mean(&self) {
        for (r, m) in [(self.rmse_d, self.mae_d), (self.rmse_eta, self.mae_eta), (self.rmse, self.mae)] {
            if r.is_finite() && m.is_finite() {
                assert!(r + 1e-12 * r.abs().max(1.0) >= m, "RMSE {r} < MAE {m}");
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub targets: Vec<[f64; 2]>,
    pub linkages: Vec<Linkage>,
    pub actual: Vec<Option<ConditionPair>>,
    pub metrics: Metrics,
}

/// Exact conditions for each linkage, `None` where it is not a crank-rocker.
pub fn exact_conditions(linkages: &[Linkage], n_steps: usize) -> Vec<Option<ConditionPair>> {
    linkages.par_iter().map(|l| conditions::evaluate(l, n_steps).ok()).collect()
}

/// Samples or repeats targets, synthesizes one linkage per target and scores
/// the exact conditions against them.
pub fn evaluate_model(
    generator: &Generator,
    normalizer: &Normalizer,
    sampler: &ConditionSampler,
    source: ConditionSource,
    seed: u64,
    n_steps: usize,
) -> EvaluationRecord {
    let targets: Vec<[f64; 2]> = match source {
        ConditionSource::KnnSampled(n) => cgan::sample_fake_conditions(sampler, normalizer, n, seed),
        ConditionSource::Fixed { d_t, eta_t, n } => vec![[d_t, eta_t]; n],
    };
    evaluate_targets(generator, normalizer, targets, seed, n_steps)
}

/// Synthesizes one linkage per given target and scores it.
pub fn evaluate_targets(
    generator: &Generator,
    normalizer: &Normalizer,
    targets: Vec<[f64; 2]>,
    seed: u64,
    n_steps: usize,
) -> EvaluationRecord {
    let synth_seed = {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        rand::Rng::random::<u64>(&mut r)
    };
    let linkages = cgan::synthesize(generator, normalizer, &targets, synth_seed);
    let actual = exact_conditions(&linkages, n_steps);
    let metrics = Metrics::compute(normalizer, &targets, &linkages, &actual);
    EvaluationRecord { targets, linkages, actual, metrics }
}
