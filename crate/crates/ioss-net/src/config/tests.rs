use super::*;

const MINIMAL: &str = r#"{ "model": { "name": "train" }, "m_values": [3, 4, "inf"] }"#;

#[test]
fn minimal_config_fills_defaults() {
    let cfg = RunConfig::from_json(MINIMAL).unwrap();
    assert_eq!(
        cfg.m_values,
        vec![MValue::Finite(3), MValue::Finite(4), MValue::Infinite]
    );
    assert_eq!(cfg.grid_points, 3);
    assert_eq!(cfg.eta_sweep, vec![0.6, 0.7]);
    assert_eq!(cfg.margin, 1e-6);
    assert_eq!(cfg.seed, 0);
    assert_eq!(cfg.gain_mode, crate::lmi::GainMode::Optimal);
    assert!(cfg.uniform_classes());
    assert_eq!(cfg.classes().unwrap().len(), 2);
}

#[test]
fn unknown_model_is_rejected() {
    let err = RunConfig::from_json(r#"{ "model": { "name": "pendulum" }, "m_values": [3] }"#);
    assert!(err.is_err());
}

#[test]
fn partial_train_params_merge_with_defaults() {
    let text = r#"{
        "model": { "name": "train", "params": { "k_spring": 1.25 } },
        "m_values": [3]
    }"#;
    let cfg = RunConfig::from_json(text).unwrap();
    let ModelConfig::Train { params } = &cfg.model;
    assert_eq!(params.k_spring, 1.25);
    assert_eq!(params.delta, crate::model::TrainParams::default().delta);
}

#[test]
fn bad_m_values_are_rejected() {
    for text in [
        r#"{ "model": { "name": "train" }, "m_values": [1] }"#,
        r#"{ "model": { "name": "train" }, "m_values": ["lots"] }"#,
        r#"{ "model": { "name": "train" }, "m_values": [] }"#,
    ] {
        assert!(RunConfig::from_json(text).is_err(), "accepted {text}");
    }
}

#[test]
fn out_of_range_eta_is_rejected() {
    let text = r#"{ "model": { "name": "train" }, "m_values": [3], "eta_sweep": [0.5, 1.0] }"#;
    assert!(RunConfig::from_json(text).is_err());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = RunConfig::from_json(MINIMAL).unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    let back = RunConfig::from_json(&text).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), text);
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn hash_tracks_content() {
    let a = RunConfig::from_json(MINIMAL).unwrap();
    let mut b = RunConfig::from_json(MINIMAL).unwrap();
    assert_eq!(a.hash(), b.hash());
    b.seed = 7;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn network_instantiation_matches_m() {
    let cfg = RunConfig::from_json(MINIMAL).unwrap();
    let net = cfg.network(4).unwrap();
    assert_eq!(net.node_count(), 4);
}
