use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use linksynth::cgan::{
    self, AblationModel, ConditionSampler, GanConfig, Generator, GridSpec, LossFlags, Predictor,
};
use linksynth::evaluation::{self, ConditionSource};
use linksynth::nsga2::{self, NsgaConfig};
use linksynth::{dataset, Dataset, LengthRanges, Normalizer};
use linksynth_service::{AppState, Model};
use serde_json::json;

use crate::cli::*;
use crate::pipeline::{self, Scale};
use crate::{output, UsageError};

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| UsageError(format!("--{flag} is required")).into())
}

fn path_or(value: Option<PathBuf>, default: &str) -> PathBuf {
    value.unwrap_or_else(|| PathBuf::from(default))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_generator(path: &Path) -> Result<(Generator, Normalizer)> {
    Generator::load(path).with_context(|| format!("loading generator {}", path.display()))
}

fn ablation(model: Option<&str>) -> Result<AblationModel> {
    model.unwrap_or("D").parse::<AblationModel>().map_err(|e| UsageError(e).into())
}

pub fn gen_data(args: GenDataArgs, seed: u64) -> Result<()> {
    let n = args.n.unwrap_or(100_000);
    let steps = args.steps.unwrap_or(linksynth::DEFAULT_STEPS);
    let out = path_or(args.out, "data/train.csv");
    let ranges = match &args.ranges {
        Some(p) => LengthRanges::load(p).with_context(|| format!("loading ranges {}", p.display()))?,
        None => LengthRanges::default(),
    };
    log::info!("generating {n} valid samples at {steps} crank steps");
    let ds = dataset::generate(n, &ranges, steps, seed)?;
    ds.save(&out)?;
    log::info!("wrote {} ({} draws rejected)", out.display(), ds.meta.rejected_count);
    Ok(())
}

pub fn train_predictor(args: TrainPredictorArgs, seed: u64) -> Result<()> {
    let data = required(args.data, "data")?;
    let out = path_or(args.out, "models/predictor.json");
    let ds = load_dataset(&data)?;
    let normalizer = Normalizer::fit(&ds);
    let mut config = pipeline::predictor_config(args.steps.unwrap_or(60_000), seed);
    if let Some(lr) = args.lr {
        config.training.learning_rate = lr;
    }
    if let Some(b) = args.batch {
        config.training.batch_size = b;
    }
    let (predictor, report) = cgan::train_predictor(&ds, &normalizer, &config)?;
    log::info!("held-out R2 d_max {:.4}, eta_min {:.4}", report.r2[0], report.r2[1]);
    predictor.save(&normalizer, json!({ "seed": seed, "config": config, "report": report }), &out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn gan_config(args: &TrainCganArgs, seed: u64) -> GanConfig {
    let d = GanConfig::default();
    GanConfig {
        lr_generator: args.lr_g.unwrap_or(d.lr_generator),
        lr_discriminator: args.lr_d.unwrap_or(d.lr_discriminator),
        w_p: args.wp.unwrap_or(d.w_p),
        w_s: args.ws.unwrap_or(d.w_s),
        batch_size: args.batch.unwrap_or(d.batch_size),
        steps: args.steps.unwrap_or(d.steps),
        snapshot_every: args.snapshot_every.unwrap_or(d.snapshot_every),
        log_every: args.log_every.unwrap_or(d.log_every),
        seed,
        ..d
    }
}

fn write_history(path: &Path, history: &[cgan::GanLossReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_cgan(args: TrainCganArgs, seed: u64) -> Result<()> {
    let data = required(args.data.clone(), "data")?;
    let predictor_path = required(args.predictor.clone(), "predictor")?;
    let out = path_or(args.out.clone(), "models/generator.json");
    let mut flags = ablation(args.model.as_deref())?.flags();
    flags.use_predictor_loss &= !args.no_predictor_loss;
    flags.use_similarity_loss &= !args.no_similarity_loss;
    let config = gan_config(&args, seed);
    let ds = load_dataset(&data)?;
    let (predictor, normalizer) = pipeline::load_predictor(&predictor_path)?;
    let sampler = ConditionSampler::from_dataset(&ds, &normalizer, config.k_neighbors);
    log::info!("training generator for {} steps with {flags:?}", config.steps);
    let outcome = cgan::train_cgan(&ds, &normalizer, &predictor, &sampler, &config, flags)?;
    if let Some(log_path) = &args.log {
        write_history(log_path, &outcome.history)?;
    }
    let final_losses = outcome.final_report().copied();
    outcome.generator.save(
        &normalizer,
        json!({
            "seed": seed,
            "config": config,
            "flags": flags,
            "selected_step": outcome.selected_step,
            "final_losses": final_losses,
        }),
        &out,
    )?;
    log::info!("wrote {} (snapshot after step {})", out.display(), outcome.selected_step);
    Ok(())
}

pub fn grid_search(args: GridSearchArgs, seed: u64) -> Result<()> {
    let data = required(args.data, "data")?;
    let predictor_path = required(args.predictor, "predictor")?;
    let flags: LossFlags = ablation(args.model.as_deref())?.flags();
    let grid = match args.grid.as_deref().unwrap_or("smoke") {
        "smoke" => GridSpec::smoke(),
        "full" => GridSpec::full(),
        other => return Err(UsageError(format!("unknown grid {other:?}, expected smoke or full")).into()),
    };
    let ds = load_dataset(&data)?;
    let (predictor, normalizer) = pipeline::load_predictor(&predictor_path)?;
    let base = GanConfig { steps: args.steps.unwrap_or(10_000), seed, log_every: 1000, ..GanConfig::default() };
    let sampler = ConditionSampler::from_dataset(&ds, &normalizer, base.k_neighbors);
    log::info!("grid search over {} cells", grid.cells(flags).len());
    let report = cgan::hyperparameter_grid_search(&ds, &normalizer, &predictor, &sampler, &base, &grid, flags);
    output::write_json(&path_or(args.out, "grid-report.json"), &report)?;
    if let (Some(best), Some(g)) = (&args.best, &report.best_generator) {
        g.save(&normalizer, json!({ "seed": seed, "config": report.best_config(&base) }), best)?;
    }
    match report.best_cell() {
        Some(cell) => println!("{}", serde_json::to_string_pretty(cell)?),
        None => anyhow::bail!("every grid cell diverged"),
    }
    Ok(())
}

fn check_target(dmax: f64, eta: f64) -> Result<()> {
    if !(dmax.is_finite() && dmax > 0.0 && eta.is_finite() && eta > 0.0) {
        return Err(UsageError("--dmax and --eta must be finite and positive".into()).into());
    }
    Ok(())
}

pub fn synthesize(args: SynthesizeArgs, seed: u64) -> Result<()> {
    let model = required(args.model, "model")?;
    let (dmax, eta) = (required(args.dmax, "dmax")?, required(args.eta, "eta")?);
    check_target(dmax, eta)?;
    let n = args.n.unwrap_or(100);
    let steps = args.steps.unwrap_or(linksynth::DEFAULT_STEPS);
    let (generator, normalizer) = load_generator(&model)?;
    let targets = vec![[dmax, eta]; n];
    let linkages = cgan::synthesize(&generator, &normalizer, &targets, seed);
    let actual = evaluation::exact_conditions(&linkages, steps);
    let out = path_or(args.out, "samples.csv");
    output::write_samples(&out, &linkages, &targets, &actual)?;
    let valid = actual.iter().filter(|a| a.is_some()).count();
    log::info!("wrote {n} samples to {} ({valid} valid)", out.display());
    Ok(())
}

pub fn nsga2(args: Nsga2Args, seed: u64) -> Result<()> {
    let predictor_path = required(args.predictor, "predictor")?;
    let (dmax, eta) = (required(args.dmax, "dmax")?, required(args.eta, "eta")?);
    check_target(dmax, eta)?;
    let d = NsgaConfig::default();
    let config = NsgaConfig {
        pop_size: args.pop.unwrap_or(d.pop_size),
        generations: args.gens.unwrap_or(d.generations),
        n_steps: args.steps.unwrap_or(d.n_steps),
        seed,
        ..d
    };
    let (predictor, normalizer): (Predictor, Normalizer) = pipeline::load_predictor(&predictor_path)?;
    let pop = nsga2::optimize([dmax, eta], &config, &predictor, &normalizer)?;
    let out = path_or(args.out, "pareto.csv");
    output::write_population(&out, &pop, &normalizer)?;
    log::info!(
        "wrote {} ({} invalid, {} duplicates)",
        out.display(),
        pop.invalid_count,
        pop.duplicate_count
    );
    Ok(())
}

pub fn evaluate(args: EvaluateArgs, seed: u64) -> Result<()> {
    let model = required(args.model, "model")?;
    let n = args.n.unwrap_or(100_000);
    let steps = args.steps.unwrap_or(linksynth::DEFAULT_STEPS);
    let mode = args.mode.unwrap_or_else(|| "multi".into());
    let (generator, normalizer) = load_generator(&model)?;
    let record = match mode.as_str() {
        "multi" => {
            let ds = load_dataset(&required(args.data, "data")?)?;
            let sampler = ConditionSampler::from_dataset(&ds, &normalizer, cgan::DEFAULT_NEIGHBORS);
            let source = ConditionSource::KnnSampled(n);
            evaluation::evaluate_model(&generator, &normalizer, &sampler, source, seed, steps)
        }
        "single" => {
            let (d_t, eta_t) = (required(args.dmax, "dmax")?, required(args.eta, "eta")?);
            check_target(d_t, eta_t)?;
            evaluation::evaluate_targets(&generator, &normalizer, vec![[d_t, eta_t]; n], seed, steps)
        }
        other => return Err(UsageError(format!("unknown mode {other:?}, expected multi or single")).into()),
    };
    if let Some(path) = &args.samples {
        output::write_samples(path, &record.linkages, &record.targets, &record.actual)?;
    }
    let report = json!({ "mode": mode, "n": n, "seed": seed, "n_steps": steps, "metrics": record.metrics });
    output::write_json(&path_or(args.report, "report.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&record.metrics)?);
    Ok(())
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let model = match &args.model {
        Some(p) => {
            let (generator, normalizer) = load_generator(p)?;
            Some(Model { generator, normalizer })
        }
        None => None,
    };
    let ds = args.dataset.as_deref().map(load_dataset).transpose()?;
    let state = AppState::new(model, ds.as_ref());
    let host = args.host.unwrap_or_else(|| "127.0.0.1".into());
    let addr: SocketAddr = format!("{host}:{}", args.port.unwrap_or(8080))
        .parse()
        .map_err(|e| UsageError(format!("invalid address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(linksynth_service::serve(state, addr))?;
    Ok(())
}

pub fn repro(args: ReproArgs, seed: u64) -> Result<()> {
    let scale = Scale::by_name(args.scale.as_deref().unwrap_or("full")).map_err(|e| UsageError(e.to_string()))?;
    let out_dir = path_or(args.out_dir, "repro");
    let report = pipeline::run_repro(&scale, seed, args.data.as_deref(), &out_dir)?;
    let m = &report.multi_condition;
    log::info!(
        "sampled conditions: RMSE d {:.3} eta {:.3}, R2 d {:?} eta {:?}",
        m.rmse_d,
        m.rmse_eta,
        m.r2_d,
        m.r2_eta
    );
    log::info!("wrote {}", out_dir.join("repro-report.json").display());
    Ok(())
}
