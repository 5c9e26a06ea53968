//! End-to-end reproduction run: dataset, predictor, generator, evaluation
//! and the NSGA-II comparison, with every artifact written to one directory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use linksynth::cgan::{self, ConditionSampler, GanConfig, GanOutcome, LossFlags, Predictor, PredictorConfig, PredictorReport};
use linksynth::evaluation::{self, ConditionSource, Metrics};
use linksynth::nsga2::{self, NsgaConfig};
use linksynth::{dataset, Dataset, LengthRanges, Normalizer};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output;

/// Fixed-condition targets of the method comparison, `(d_t, eta_t)`.
pub const COMPARISON_TARGETS: [[f64; 2]; 4] = [[0.4, 5.0], [1.0, 2.0], [2.0, 1.5], [2.5, 1.0]];
/// Target of the single-condition diversity study.
pub const SINGLE_TARGET: [f64; 2] = [1.0, 2.0];
pub const FIXED_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub n_samples: usize,
    pub n_steps: usize,
    pub predictor_steps: usize,
    pub gan_steps: usize,
    pub eval_samples: usize,
    pub nsga_pop: usize,
    pub nsga_generations: usize,
}

impl Scale {
    pub fn full() -> Self {
        Self {
            n_samples: 100_000,
            n_steps: linksynth::DEFAULT_STEPS,
            predictor_steps: 60_000,
            gan_steps: 50_000,
            eval_samples: 100_000,
            nsga_pop: 100,
            nsga_generations: 200,
        }
    }

    /// Minutes-scale run for checking the plumbing, not the numbers.
    pub fn smoke() -> Self {
        Self {
            n_samples: 3_000,
            n_steps: 180,
            predictor_steps: 3_000,
            gan_steps: 2_000,
            eval_samples: 2_000,
            nsga_pop: 40,
            nsga_generations: 30,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "smoke" => Ok(Self::smoke()),
            other => bail!("unknown scale {other:?}, expected smoke or full"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_samples: usize,
    pub rejected_count: u64,
    pub n_steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub steps: usize,
    pub selected_step: usize,
    pub final_l_d: f64,
    pub final_l_gps: f64,
    /// Largest `|L_GPs - (L_G + w_P L_P + w_s L_s)|` over the logged steps.
    pub max_identity_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub target: [f64; 2],
    pub cgan: Metrics,
    pub nsga2: Metrics,
    pub nsga2_duplicates: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReproReport {
    pub seed: u64,
    pub scale: Scale,
    pub dataset: DatasetSummary,
    pub predictor: PredictorReport,
    pub training: TrainingSummary,
    /// Generator on k-NN sampled conditions.
    pub multi_condition: Metrics,
    /// Generator at [`SINGLE_TARGET`].
    pub single_condition: Metrics,
    pub comparison: Vec<ComparisonRow>,
}

impl ReproReport {
    pub fn all_metrics(&self) -> impl Iterator<Item = &Metrics> {
        [&self.multi_condition, &self.single_condition]
            .into_iter()
            .chain(self.comparison.iter().flat_map(|r| [&r.cgan, &r.nsga2]))
    }
}

pub fn identity_residual(outcome: &GanOutcome) -> f64 {
    outcome
        .history
        .iter()
        .map(|r| (r.l_gps - (r.l_g + r.w_p * r.l_p + r.w_s * r.l_s)).abs())
        .fold(0.0, f64::max)
}

pub fn predictor_config(steps: usize, seed: u64) -> PredictorConfig {
    let mut config = PredictorConfig::default();
    config.training.steps = steps;
    config.training.seed = seed;
    config
}

pub fn gan_config(steps: usize, seed: u64) -> GanConfig {
    GanConfig { steps, seed, ..GanConfig::default() }
}

/// Loads `data` when given, otherwise generates the dataset into `out_dir`.
fn dataset_for(scale: &Scale, seed: u64, data: Option<&Path>, out_dir: &Path) -> Result<Dataset> {
    if let Some(path) = data {
        return Dataset::load(path).with_context(|| format!("loading {}", path.display()));
    }
    let path = out_dir.join("train.csv");
    log::info!("generating {} samples", scale.n_samples);
    let ds = dataset::generate(scale.n_samples, &LengthRanges::default(), scale.n_steps, seed)?;
    ds.save(&path)?;
    Ok(ds)
}

pub fn run_repro(scale: &Scale, seed: u64, data: Option<&Path>, out_dir: &Path) -> Result<ReproReport> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let ds = dataset_for(scale, seed, data, out_dir)?;
    let normalizer = Normalizer::fit(&ds);

    log::info!("training predictor for {} steps", scale.predictor_steps);
    let (predictor, predictor_report) =
        cgan::train_predictor(&ds, &normalizer, &predictor_config(scale.predictor_steps, seed))?;
    predictor.save(&normalizer, json!({ "seed": seed, "report": predictor_report }), &out_dir.join("predictor.json"))?;

    log::info!("training generator for {} steps", scale.gan_steps);
    let sampler = ConditionSampler::from_dataset(&ds, &normalizer, cgan::DEFAULT_NEIGHBORS);
    let config = gan_config(scale.gan_steps, seed);
    let outcome = cgan::train_cgan(&ds, &normalizer, &predictor, &sampler, &config, LossFlags::ALL)?;
    let last = outcome.final_report().copied();
    let training = TrainingSummary {
        steps: config.steps,
        selected_step: outcome.selected_step,
        final_l_d: last.map_or(f64::NAN, |r| r.l_d),
        final_l_gps: last.map_or(f64::NAN, |r| r.l_gps),
        max_identity_residual: identity_residual(&outcome),
    };
    outcome.generator.save(
        &normalizer,
        json!({ "seed": seed, "config": config, "selected_step": outcome.selected_step }),
        &out_dir.join("generator.json"),
    )?;

    log::info!("evaluating on {} sampled conditions", scale.eval_samples);
    let gen = &outcome.generator;
    let multi = evaluation::evaluate_model(
        gen,
        &normalizer,
        &sampler,
        ConditionSource::KnnSampled(scale.eval_samples),
        seed,
        scale.n_steps,
    );
    let [d_t, eta_t] = SINGLE_TARGET;
    let single = evaluation::evaluate_model(
        gen,
        &normalizer,
        &sampler,
        ConditionSource::Fixed { d_t, eta_t, n: FIXED_SAMPLES },
        seed,
        scale.n_steps,
    );
    output::write_samples(&out_dir.join("single-condition.csv"), &single.linkages, &single.targets, &single.actual)?;

    let mut comparison = Vec::new();
    for (k, target) in COMPARISON_TARGETS.into_iter().enumerate() {
        log::info!("comparison target {target:?}");
        let source = ConditionSource::Fixed { d_t: target[0], eta_t: target[1], n: scale.nsga_pop };
        let cgan_rec = evaluation::evaluate_model(gen, &normalizer, &sampler, source, seed, scale.n_steps);
        let nsga_config = NsgaConfig {
            pop_size: scale.nsga_pop,
            generations: scale.nsga_generations,
            seed,
            n_steps: scale.n_steps,
            ..NsgaConfig::default()
        };
        let pop = nsga2::optimize(target, &nsga_config, &predictor, &normalizer)?;
        output::write_population(&out_dir.join(format!("nsga2-{k}.csv")), &pop, &normalizer)?;
        comparison.push(ComparisonRow {
            target,
            cgan: cgan_rec.metrics,
            nsga2: pop.metrics(&normalizer),
            nsga2_duplicates: pop.duplicate_count,
        });
    }

    let report = ReproReport {
        seed,
        scale: *scale,
        dataset: DatasetSummary {
            n_samples: ds.len(),
            rejected_count: ds.meta.rejected_count,
            n_steps: ds.meta.n_steps,
        },
        predictor: predictor_report,
        training,
        multi_condition: multi.metrics,
        single_condition: single.metrics,
        comparison,
    };
    output::write_json(&out_dir.join("repro-report.json"), &report)?;
    Ok(report)
}

/// Loads a predictor checkpoint together with its normalizer.
pub fn load_predictor(path: &Path) -> Result<(Predictor, Normalizer)> {
    Predictor::load(path).with_context(|| format!("loading predictor {}", path.display()))
}
