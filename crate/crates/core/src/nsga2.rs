//! NSGA-II baseline driven by the surrogate predictor.
//!
//! Genes are the five normalized linkage parameters; the two objectives are
//! the absolute gaps between the predicted and the target conditions. The
//! search is unconstrained: crank-rocker validity is only checked when the
//! final population is re-evaluated with the exact kinematics.

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cgan::Predictor;
use crate::conditions::ConditionPair;
use crate::dataset::Normalizer;
use crate::error::{Error, Result};
use crate::evaluation;
use crate::kinematics::Linkage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsgaConfig {
    pub pop_size: usize,
    pub generations: usize,
    pub seed: u64,
    pub crossover_prob: f64,
    /// SBX distribution index.
    pub eta_c: f64,
    /// Polynomial mutation distribution index.
    pub eta_m: f64,
    /// Per-gene mutation probability.
    pub mutation_prob: f64,
    /// Crank resolution of the final exact evaluation.
    pub n_steps: usize,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        Self {
            pop_size: 100,
            generations: 200,
            seed: 0,
            crossover_prob: 0.9,
            eta_c: 15.0,
            eta_m: 20.0,
            mutation_prob: 1.0 / 5.0,
            n_steps: crate::DEFAULT_STEPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genes: [f64; 5],
    /// `(|d_hat - d_t|, |eta_hat - eta_t|)` from the predictor.
    pub objectives: [f64; 2],
    /// 1-based non-domination rank.
    pub rank: usize,
    pub crowding: f64,
    /// Set by the final exact evaluation.
    pub valid: Option<bool>,
    pub exact: Option<ConditionPair>,
}

impl Individual {
    fn new(genes: [f64; 5]) -> Self {
        Self { genes, objectives: [f64::INFINITY; 2], rank: 0, crowding: 0.0, valid: None, exact: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub target: [f64; 2],
    pub individuals: Vec<Individual>,
    pub generation: usize,
    pub duplicate_count: usize,
    pub invalid_count: usize,
    /// Per-generation minimum of each objective.
    pub best_history: Vec<[f64; 2]>,
}

impl Population {
    pub fn linkages(&self, normalizer: &Normalizer) -> Vec<Linkage> {
        self.individuals.iter().map(|i| normalizer.linkage_from_unit(i.genes)).collect()
    }

    pub fn unique_fraction(&self) -> f64 {
        1.0 - self.duplicate_count as f64 / self.individuals.len().max(1) as f64
    }

    pub fn invalid_fraction(&self) -> f64 {
        self.invalid_count as f64 / self.individuals.len().max(1) as f64
    }

    /// Accuracy and diversity of the final population, scored like the
    /// generator's fixed-condition evaluation.
    pub fn metrics(&self, normalizer: &Normalizer) -> evaluation::Metrics {
        let targets = vec![self.target; self.individuals.len()];
        let actual: Vec<Option<ConditionPair>> = self.individuals.iter().map(|i| i.exact).collect();
        evaluation::Metrics::compute(normalizer, &targets, &self.linkages(normalizer), &actual)
    }
}

fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Partitions indices into successive non-dominated fronts.
pub fn fast_nondominated_sort(objectives: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates(&objectives[p], &objectives[q]) {
                dominated_by[p].push(q);
            } else if dominates(&objectives[q], &objectives[p]) {
                counts[p] += 1;
            }
        }
        if counts[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut i = 0;
    while !fronts[i].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[i] {
            for &q in &dominated_by[p] {
                counts[q] -= 1;
                if counts[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(next);
        i += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance of each member of `front`, in the order given.
pub fn crowding_distance(objectives: &[[f64; 2]], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objectives[front[a]][m].total_cmp(&objectives[front[b]][m]));
        let lo = objectives[front[order[0]]][m];
        let hi = objectives[front[order[n - 1]]][m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let gap = objectives[front[order[k + 1]]][m] - objectives[front[order[k - 1]]][m];
            dist[order[k]] += gap / span;
        }
    }
    dist
}

fn crowded_better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

fn tournament<'a, R: Rng>(pop: &'a [Individual], rng: &mut R) -> &'a Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if crowded_better(b, a) {
        b
    } else {
        a
    }
}

fn sbx<R: Rng>(p1: &[f64; 5], p2: &[f64; 5], config: &NsgaConfig, rng: &mut R) -> ([f64; 5], [f64; 5]) {
    let (mut c1, mut c2) = (*p1, *p2);
    if rng.random::<f64>() > config.crossover_prob {
        return (c1, c2);
    }
    for k in 0..5 {
        if rng.random::<f64>() > 0.5 {
            continue;
        }
        let u: f64 = rng.random();
        let exponent = 1.0 / (config.eta_c + 1.0);
        let beta = if u <= 0.5 { (2.0 * u).powf(exponent) } else { (1.0 / (2.0 * (1.0 - u))).powf(exponent) };
        c1[k] = (0.5 * ((1.0 + beta) * p1[k] + (1.0 - beta) * p2[k])).clamp(0.0, 1.0);
        c2[k] = (0.5 * ((1.0 - beta) * p1[k] + (1.0 + beta) * p2[k])).clamp(0.0, 1.0);
    }
    (c1, c2)
}

fn polynomial_mutation<R: Rng>(genes: &mut [f64; 5], config: &NsgaConfig, rng: &mut R) {
    let exponent = 1.0 / (config.eta_m + 1.0);
    for g in genes.iter_mut() {
        if rng.random::<f64>() >= config.mutation_prob {
            continue;
        }
        let u: f64 = rng.random();
        let delta = if u < 0.5 { (2.0 * u).powf(exponent) - 1.0 } else { 1.0 - (2.0 * (1.0 - u)).powf(exponent) };
        *g = (*g + delta).clamp(0.0, 1.0);
    }
}

fn evaluate_objectives(
    individuals: &mut [Individual],
    target: [f64; 2],
    predictor: &Predictor,
    normalizer: &Normalizer,
) {
    let x = Array2::from_shape_fn((individuals.len(), 5), |(i, k)| individuals[i].genes[k]);
    let y = predictor.model.forward(&x);
    for (ind, row) in individuals.iter_mut().zip(y.outer_iter()) {
        let est = normalizer.conditions_from_unit([row[0], row[1]]);
        ind.objectives = [(est[0] - target[0]).abs(), (est[1] - target[1]).abs()];
    }
}

/// Assigns rank and crowding within `pool` and returns its fronts.
fn rank_and_crowd(pool: &mut [Individual]) -> Vec<Vec<usize>> {
    let objectives: Vec<[f64; 2]> = pool.iter().map(|i| i.objectives).collect();
    let fronts = fast_nondominated_sort(&objectives);
    for (r, front) in fronts.iter().enumerate() {
        let dist = crowding_distance(&objectives, front);
        for (&i, d) in front.iter().zip(dist) {
            pool[i].rank = r + 1;
            pool[i].crowding = d;
        }
    }
    fronts
}

fn best_objectives(pop: &[Individual]) -> [f64; 2] {
    [0, 1].map(|m| pop.iter().map(|i| i.objectives[m]).fold(f64::INFINITY, f64::min))
}

pub fn duplicate_count(individuals: &[Individual]) -> usize {
    let mut seen = HashSet::new();
    individuals
        .iter()
        .filter(|i| !seen.insert(i.genes.map(|g| (g * 1e9).round() as i64)))
        .count()
}

/// Elitist NSGA-II towards `target = (d_t, eta_t)` in raw units.
pub fn optimize(
    target: [f64; 2],
    config: &NsgaConfig,
    predictor: &Predictor,
    normalizer: &Normalizer,
) -> Result<Population> {
    if config.pop_size < 4 || !config.pop_size.is_multiple_of(2) {
        return Err(Error::Config("population size must be even and at least 4".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pop: Vec<Individual> =
        (0..config.pop_size).map(|_| Individual::new(std::array::from_fn(|_| rng.random()))).collect();
    evaluate_objectives(&mut pop, target, predictor, normalizer);
    rank_and_crowd(&mut pop);
    let mut best_history = vec![best_objectives(&pop)];

    for _ in 0..config.generations {
        let mut offspring = Vec::with_capacity(config.pop_size);
        while offspring.len() < config.pop_size {
            let p1 = tournament(&pop, &mut rng).genes;
            let p2 = tournament(&pop, &mut rng).genes;
            let (mut c1, mut c2) = sbx(&p1, &p2, config, &mut rng);
            polynomial_mutation(&mut c1, config, &mut rng);
            polynomial_mutation(&mut c2, config, &mut rng);
            offspring.push(Individual::new(c1));
            offspring.push(Individual::new(c2));
        }
        evaluate_objectives(&mut offspring, target, predictor, normalizer);
        let mut pool = pop;
        pool.extend(offspring);
        let fronts = rank_and_crowd(&mut pool);
        let mut keep = Vec::with_capacity(config.pop_size);
        for front in fronts {
            if keep.len() + front.len() <= config.pop_size {
                keep.extend(front);
                continue;
            }
            let mut last = front;
            last.sort_by(|&a, &b| {
                pool[b].crowding.partial_cmp(&pool[a].crowding).unwrap_or(Ordering::Equal)
            });
            keep.extend(last.into_iter().take(config.pop_size - keep.len()));
            break;
        }
        keep.sort_unstable();
        pop = keep.into_iter().map(|i| pool[i].clone()).collect();
        best_history.push(best_objectives(&pop));
    }

    rank_and_crowd(&mut pop);
    let linkages: Vec<Linkage> = pop.iter().map(|i| normalizer.linkage_from_unit(i.genes)).collect();
    let exact = evaluation::exact_conditions(&linkages, config.n_steps);
    for (ind, e) in pop.iter_mut().zip(exact) {
        ind.valid = Some(e.is_some());
        ind.exact = e;
    }
    let invalid_count = pop.iter().filter(|i| i.valid == Some(false)).count();
    Ok(Population {
        target,
        duplicate_count: duplicate_count(&pop),
        invalid_count,
        individuals: pop,
        generation: config.generations,
        best_history,
    })
}
