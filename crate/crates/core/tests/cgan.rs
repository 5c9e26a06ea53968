use linksynth::cgan::{
    self, score_generator, train_cgan, train_predictor, AblationModel, ConditionSampler, GanConfig, Generator,
    LossFlags, Predictor, PredictorConfig,
};
use linksynth::knn::KdTree;
use linksynth::neuralnet::TrainingConfig;
use linksynth::{dataset, Dataset, LengthRanges, Normalizer};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

struct Fixture {
    data: Dataset,
    normalizer: Normalizer,
    predictor: Predictor,
    sampler: ConditionSampler,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let data = dataset::generate(3000, &LengthRanges::default(), 90, 21).unwrap();
        let normalizer = Normalizer::fit(&data);
        let config = PredictorConfig {
            training: TrainingConfig { steps: 1500, seed: 5, ..PredictorConfig::default().training },
            ..PredictorConfig::default()
        };
        let (predictor, _) = train_predictor(&data, &normalizer, &config).unwrap();
        let sampler = ConditionSampler::from_dataset(&data, &normalizer, cgan::DEFAULT_NEIGHBORS);
        Fixture { data, normalizer, predictor, sampler }
    })
}

fn short_config(seed: u64) -> GanConfig {
    GanConfig { steps: 200, log_every: 1, snapshot_every: 50, seed, ..GanConfig::default() }
}

fn train(config: &GanConfig, flags: LossFlags) -> cgan::GanOutcome {
    let f = fixture();
    train_cgan(&f.data, &f.normalizer, &f.predictor, &f.sampler, config, flags).unwrap()
}

#[test]
fn predictor_stays_frozen() {
    let f = fixture();
    let before = f.predictor.fingerprint();
    let copy = f.predictor.clone();
    train(&short_config(1), LossFlags::ALL);
    assert_eq!(f.predictor.fingerprint(), before);
    assert_eq!(f.predictor, copy);
}

#[test]
fn combined_loss_identity_holds_at_every_step() {
    let outcome = train(&short_config(2), LossFlags::ALL);
    assert_eq!(outcome.history.len(), 200);
    for r in &outcome.history {
        let sum = r.l_g + r.w_p * r.l_p + r.w_s * r.l_s;
        assert!((r.l_gps - sum).abs() <= 1e-12, "step {}: {} vs {sum}", r.step, r.l_gps);
        assert!(r.l_s <= 0.0);
    }
}

#[test]
fn ablation_flags_zero_the_weights() {
    let config = short_config(3);
    for (model, p, s) in [
        (AblationModel::A, false, false),
        (AblationModel::B, true, false),
        (AblationModel::C, false, true),
        (AblationModel::D, true, true),
    ] {
        let flags = model.flags();
        assert_eq!((flags.use_predictor_loss, flags.use_similarity_loss), (p, s));
        let (w_p, w_s) = config.effective_weights(flags);
        assert_eq!(w_p == 0.0, !p);
        assert_eq!(w_s == 0.0, !s);
    }
    let outcome = train(&GanConfig { steps: 20, ..config }, AblationModel::A.flags());
    assert!(outcome.history.iter().all(|r| r.w_p == 0.0 && r.w_s == 0.0 && r.l_gps == r.l_g));
}

#[test]
fn training_is_deterministic() {
    let config = short_config(4);
    let a = train(&config, LossFlags::ALL);
    let b = train(&config, LossFlags::ALL);
    assert_eq!(a.generator, b.generator);
    assert_eq!(a.selected_step, b.selected_step);
    assert_eq!(serde_json::to_string(&a.history).unwrap(), serde_json::to_string(&b.history).unwrap());
    let c = train(&short_config(5), LossFlags::ALL);
    assert_ne!(a.generator, c.generator);
}

#[test]
fn snapshot_is_the_best_scored_generator() {
    let f = fixture();
    let config = short_config(6);
    let outcome = train(&config, LossFlags::ALL);
    assert_eq!((outcome.selected_step + 1) % config.snapshot_every, 0);
    let last = train(&GanConfig { snapshot_every: 0, ..config.clone() }, LossFlags::ALL);
    assert_eq!(last.selected_step, config.steps - 1);
    let seed = 99;
    let picked = score_generator(&outcome.generator, &f.predictor, &f.sampler, 10, 100, seed);
    assert!(picked.l_p.is_finite());
}

#[test]
fn invalid_configs_are_rejected() {
    let f = fixture();
    for bad in [
        GanConfig { batch_size: 0, ..short_config(0) },
        GanConfig { lr_generator: -1.0, ..short_config(0) },
        GanConfig { log_every: 0, ..short_config(0) },
        GanConfig { w_p: f64::NAN, ..short_config(0) },
    ] {
        assert!(train_cgan(&f.data, &f.normalizer, &f.predictor, &f.sampler, &bad, LossFlags::ALL).is_err());
    }
}

#[test]
fn generator_output_stays_in_range() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let generator = Generator::new(Default::default(), cgan::DEFAULT_NOISE_DIM, &mut rng);
    let ranges = f.normalizer.ranges;
    for _ in 0..10 {
        let n = 100_000;
        let cond = Array2::from_shape_fn((n, 2), |_| rng.random_range(-3.0..4.0));
        let z = generator.noise(n, &mut rng);
        let x = generator.model.forward(&Generator::input(&z, &cond));
        for row in x.outer_iter() {
            let l = f.normalizer.linkage_from_unit([row[0], row[1], row[2], row[3], row[4]]);
            assert!(ranges.contains(&l), "{l:?}");
        }
    }
}

#[test]
fn fake_conditions_stay_near_real_ones() {
    let f = fixture();
    let tree = KdTree::build(f.sampler.reference().to_vec());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = f.sampler.sample(10_000, &mut rng);
    let near = draws
        .iter()
        .filter(|c| {
            let p = tree.point(tree.nearest(**c, 1, None)[0]);
            (p[0] - c[0]).hypot(p[1] - c[1]) < 0.05
        })
        .count();
    assert!(near >= 9_900, "{near}/10000 within 0.05");
    let raw = cgan::sample_fake_conditions(&f.sampler, &f.normalizer, 100, 3);
    assert_eq!(raw, cgan::sample_fake_conditions(&f.sampler, &f.normalizer, 100, 3));
}

#[test]
fn synthesize_returns_one_linkage_per_target() {
    let f = fixture();
    let outcome = train(&GanConfig { steps: 20, ..short_config(9) }, LossFlags::ALL);
    let targets = vec![[1.0, 0.2]; 17];
    let a = cgan::synthesize(&outcome.generator, &f.normalizer, &targets, 1);
    assert_eq!(a.len(), 17);
    assert_eq!(a, cgan::synthesize(&outcome.generator, &f.normalizer, &targets, 1));
    assert_ne!(a, cgan::synthesize(&outcome.generator, &f.normalizer, &targets, 2));
}

#[test]
fn generator_checkpoint_round_trip() {
    let f = fixture();
    let outcome = train(&GanConfig { steps: 10, ..short_config(10) }, LossFlags::ALL);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    outcome.generator.save(&f.normalizer, serde_json::json!({}), &path).unwrap();
    let (g, n) = Generator::load(&path).unwrap();
    assert_eq!(g, outcome.generator);
    assert_eq!(n, f.normalizer);
    // a predictor checkpoint is not a generator
    let p_path = dir.path().join("p.json");
    f.predictor.save(&f.normalizer, serde_json::json!({}), &p_path).unwrap();
    assert!(Generator::load(&p_path).is_err());
}
