use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use squirrel_core::scheduler::{Stage, BATCH_SIZE, TOTAL_BATCHES};
use squirrel_core::surrogates::{GpConfig, SurrogateConfig};
use squirrel_core::{
    BoConfig, ConfigSpace, Configuration, History, Optimizer, OptimizerConfig, ParamSpec, Registry,
    StageTag,
};

fn space() -> ConfigSpace {
    ConfigSpace::new(vec![
        ParamSpec::continuous("a", -3.0, 3.0).unwrap(),
        ParamSpec::log_continuous("lr", 1e-3, 1.0).unwrap(),
        ParamSpec::integer("k", 1, 9).unwrap(),
        ParamSpec::categorical("mode", &["x", "y", "z"]).unwrap(),
    ])
    .unwrap()
}

fn objective(c: &Configuration) -> f64 {
    let mode = match c.choice("mode").unwrap() {
        "x" => 0.0,
        "y" => 0.3,
        _ => 1.0,
    };
    c.f64("a").unwrap().powi(2) + (c.f64("lr").unwrap().log10() + 1.5).powi(2) + (c.f64("k").unwrap() - 4.0).abs() / 4.0 + mode
}

fn config(restarts: usize) -> OptimizerConfig {
    OptimizerConfig {
        bo: BoConfig {
            surrogates: SurrogateConfig {
                gp: GpConfig {
                    restarts,
                    ..GpConfig::default()
                },
                ..SurrogateConfig::default()
            },
            ..BoConfig::default()
        },
        ..OptimizerConfig::default()
    }
}

fn drive(opt: &mut Optimizer, batches: usize) -> Vec<Vec<Configuration>> {
    let mut out = Vec::new();
    for _ in 0..batches {
        let batch = opt.suggest().unwrap();
        for c in &batch {
            opt.space().validate(c).unwrap();
        }
        let values: Vec<f64> = batch.iter().map(objective).collect();
        opt.observe_values(&values).unwrap();
        out.push(batch);
    }
    out
}

fn stored_configs(n: usize) -> Vec<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    (0..n).map(|_| space().sample_random(&mut rng)).collect()
}

#[test]
fn matched_registry_serves_stored_then_random_configs() {
    let mut registry = Registry::new();
    registry.insert(space(), stored_configs(30));
    let mut opt = Optimizer::new(space(), config(4), Some(&registry), 11);
    assert!(opt.warmstart_matched());
    assert_eq!(opt.stage(), Some(Stage::InitWarmstart));
    let batches = drive(&mut opt, 3);
    let served: Vec<Configuration> = batches.concat();
    assert_eq!(&served[..22], &stored_configs(22)[..]);
    assert!(!stored_configs(30).contains(&served[22]));
    assert!(!stored_configs(30).contains(&served[23]));
    assert!(opt.history().trials().iter().all(|t| t.stage_tag == StageTag::Warmstart));
    assert_eq!(opt.stage(), Some(Stage::Bo));
}

#[test]
fn runs_are_deterministic_and_complete() {
    let mut a = Optimizer::new(space(), config(4), None, 3);
    let mut b = Optimizer::new(space(), config(4), None, 3);
    let sa = drive(&mut a, TOTAL_BATCHES);
    let sb = drive(&mut b, TOTAL_BATCHES);
    assert_eq!(sa, sb);
    assert_eq!(a.history().len(), TOTAL_BATCHES * BATCH_SIZE);
    let tags: Vec<StageTag> = a.history().trials().iter().map(|t| t.stage_tag).collect();
    assert!(tags[..24].iter().all(|&t| t == StageTag::DeInit));
    assert!(tags[24..88].iter().all(|&t| t == StageTag::Bo));
    assert!(tags[88..].iter().all(|&t| t == StageTag::DeFinal));
    let mut c = Optimizer::new(space(), config(4), None, 4);
    assert_ne!(drive(&mut c, 1), sa[..1]);
}

#[test]
fn bo_settings_do_not_perturb_the_initial_design() {
    let mut a = Optimizer::new(space(), config(4), None, 8);
    let mut b = Optimizer::new(space(), config(2), None, 8);
    assert_eq!(drive(&mut a, 3), drive(&mut b, 3));
    assert_ne!(drive(&mut a, 1), drive(&mut b, 1));
}

#[test]
fn resume_from_csv_continues_the_same_stream() {
    let mut full = Optimizer::new(space(), config(4), None, 21);
    let head = drive(&mut full, 5);
    let mut buf = Vec::new();
    full.history().write_csv(&mut buf).unwrap();
    let history = History::read_csv(space(), buf.as_slice()).unwrap();
    let mut resumed = Optimizer::resume(space(), config(4), None, 21, &history).unwrap();
    assert_eq!(resumed.batch_index(), head.len());
    assert_eq!(drive(&mut resumed, 2), drive(&mut full, 2));
}
