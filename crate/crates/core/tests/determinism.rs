use ducct_core::cli::run_specs;
use ducct_core::mppi::Variant;
use ducct_core::sim::{self, EpisodeConfig, Regime, RunSpec};

fn small() -> EpisodeConfig {
    let mut cfg = EpisodeConfig::default();
    cfg.mppi.rollouts = 16;
    cfg.mppi.horizon = 20;
    cfg.risk.n_mc = 100;
    cfg.limits.timeout = 6.0;
    cfg
}

fn spec(variant: Variant, seed: u64) -> RunSpec {
    RunSpec {
        scenario: "c3p3".into(),
        variant,
        loc: Regime::Over,
        pred: Regime::Under,
        seed,
    }
}

#[test]
fn episodes_identical_across_thread_counts() {
    let cfg = small();
    let s = spec(Variant::Ducct, 11);
    let reference = sim::run_episode(&s, &cfg).unwrap().csv_bytes().unwrap();
    for threads in [1, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let again = pool.install(|| sim::run_episode(&s, &cfg).unwrap().csv_bytes().unwrap());
        assert!(again == reference, "episode differs with {threads} threads");
    }
}

#[test]
fn batch_summaries_do_not_depend_on_scheduling() {
    let cfg = small();
    let specs: Vec<RunSpec> = [Variant::Vanilla, Variant::Dra, Variant::Ducct]
        .into_iter()
        .flat_map(|v| (0..2).map(move |seed| spec(v, seed)))
        .collect();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| run_specs(&specs, &cfg, None).unwrap());
        serde_json::to_string(&out).unwrap()
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn seeds_change_the_episode() {
    let cfg = small();
    let a = sim::run_episode(&spec(Variant::Ducct, 1), &cfg).unwrap().csv_bytes().unwrap();
    let b = sim::run_episode(&spec(Variant::Ducct, 2), &cfg).unwrap().csv_bytes().unwrap();
    assert!(a != b);
}
