use proptest::prelude::*;
use resolvent_dmd::experiment::{ExperimentConfig, PRESET_NAMES};
use resolvent_dmd::Error;

fn pendulum(seed: u64, radii: Vec<f64>, thresholds: Vec<f64>, dt: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("pendulum-desk").unwrap();
    cfg.seed = seed;
    cfg.grid.circle_radii = radii;
    cfg.thresholds = thresholds;
    cfg.pendulum.dt = dt;
    cfg
}

proptest! {
    #[test]
    fn json_round_trip_is_exact(
        seed in any::<u64>(),
        radii in prop::collection::vec(1e-3f64..10.0, 1..5),
        thresholds in prop::collection::vec(1e-15f64..1.0, 0..6),
        dt in 1e-4f64..1.0,
    ) {
        let cfg = pendulum(seed, radii, thresholds, dt);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

#[test]
fn every_preset_round_trips() {
    for name in PRESET_NAMES {
        let cfg = ExperimentConfig::preset(name).unwrap();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg, "{name}");
    }
}

#[test]
fn hash_changes_with_seed() {
    let a = ExperimentConfig::preset("lorenz-desk").unwrap();
    let mut b = a.clone();
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn invalid_fields_report_their_path() {
    let cases = [
        (r#"{"experiment":"lorenz","seed":1}"#, "grid.rectangle"),
        (r#"{"experiment":"oscillators","seed":1,"cluster":{"fuzzifier":1.0}}"#, "cluster.fuzzifier"),
        (r#"{"experiment":"pendulum","seed":1,"grid":{"circle_radii":[1.0,-2.0]}}"#, "grid.circle_radii[1]"),
        (r#"{"experiment":"pendulum","seed":1,"contours":[{"center":[0,0],"radius":1}]}"#, "contours"),
    ];
    for (text, want) in cases {
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { path, .. }) => assert_eq!(path, want, "{text}"),
            other => panic!("{text}: {other:?}"),
        }
    }
}

#[test]
fn syntax_errors_carry_a_position() {
    let err = ExperimentConfig::from_json("{\"experiment\": \"pendulum\",\n \"seed\": }").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("line 2"), "{err}");
}
