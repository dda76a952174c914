use super::*;
use crate::config::RunConfig;
use std::sync::OnceLock;

fn small_config() -> RunConfig {
    RunConfig::from_json(
        r#"{ "model": { "name": "train" }, "m_values": [2, 3, "inf"],
             "samples": 25, "horizon": 10, "seed": 7 }"#,
    )
    .unwrap()
}

// the eta~ sweep is by far the most expensive step; solve it once and
// share across tests
fn fixture() -> &'static (RunConfig, Report, VerifiedClasses, Vec<MAnalysis>) {
    static FIXTURE: OnceLock<(RunConfig, Report, VerifiedClasses, Vec<MAnalysis>)> =
        OnceLock::new();
    FIXTURE.get_or_init(|| {
        let cfg = small_config();
        let (report, verified) = cmd_verify(&cfg).unwrap();
        let verified = verified.expect("train classes certify");
        let (sg_report, analyses) = cmd_smallgain(&cfg, &verified).unwrap();
        let mut merged = report;
        merged.merge(sg_report);
        (cfg, merged, verified, analyses)
    })
}

#[test]
fn verify_certifies_both_train_classes() {
    let (_, report, verified, _) = fixture();
    assert_eq!(verified.traj.len(), 2);
    assert_eq!(verified.lyap.len(), 2);
    // one row per class per target
    assert_eq!(report.classes.len(), 4);
    assert!(report.classes.iter().all(|c| c.certified));
    for cert in verified.traj.values().chain(verified.lyap.values()) {
        cert.validate().unwrap();
    }
}

#[test]
fn ioss_constants_scalar_oracle() {
    // eta~=0.25, P=4, Q=9, R=1: eta=0.5, p=1, q=3/2, r=1/2
    let cert = LmiCertificate {
        eta_tilde: 0.25,
        p_tilde: DMatrix::from_element(1, 1, 4.0),
        q_tilde: DMatrix::from_element(1, 1, 9.0),
        r_tilde: DMatrix::from_element(1, 1, 1.0),
        g_tilde: DMatrix::zeros(0, 0),
        margin: 0.0,
    };
    let (eta, p, q, r) = ioss_constants(&cert);
    assert!((eta - 0.5).abs() < 1e-12);
    assert!((p - 1.0).abs() < 1e-12);
    assert!((q - 1.5).abs() < 1e-12);
    assert!((r - 0.5).abs() < 1e-12);
}

#[test]
fn smallgain_rows_cover_requested_sizes() {
    let (_, report, _, analyses) = fixture();
    assert_eq!(report.m_rows.len(), 3);
    assert_eq!(analyses.len(), 3);
    let inf_row = report
        .m_rows
        .iter()
        .find(|r| r.m == MValue::Infinite)
        .unwrap();
    // row-sum bounds recorded even when the verdict fails
    assert!(inf_row.rho_g.is_some());
    assert!(inf_row.rho_lg.is_some());
    for row in &report.m_rows {
        if row.verdict_lyap.passed() && row.m != MValue::Infinite {
            assert!(row.lambda_sigma.unwrap() > 0.0);
            assert!(row.mu.is_some());
        }
        if row.verdict_traj.passed() && row.m != MValue::Infinite {
            assert!(row.traj_constants.is_some());
        }
    }
}

#[test]
fn falsify_clean_on_certified_network() {
    let (cfg, _, verified, analyses) = fixture();
    let (report, outcome) = cmd_falsify(cfg, verified, analyses).unwrap();
    assert!(!report.falsification.is_empty());
    for s in &report.falsification {
        assert_eq!(s.violations, 0, "{} violated at M={}", s.check, s.m);
        assert!(s.checks_run > 0);
    }
    assert!(outcome.witnesses.is_empty());
}

#[test]
fn corrupted_certificate_is_caught_and_replays() {
    let (cfg, _, verified, _) = fixture();
    let mut verified = verified.clone();
    // shrink the decrease rate of every trajectory certificate: the
    // per-step inequality then claims more contraction than the dynamics
    for cert in verified.traj.values_mut() {
        cert.eta_tilde /= 8.0;
    }
    let (_, analyses) = cmd_smallgain(cfg, &verified).unwrap();
    let (report, outcome) = cmd_falsify(cfg, &verified, &analyses).unwrap();
    let decrease = report
        .falsification
        .iter()
        .find(|s| s.check == "subsystem-decrease" && s.violations > 0)
        .expect("corruption detected");
    assert!(decrease.worst_slack < 0.0);
    let witness = outcome
        .witnesses
        .iter()
        .find(|w| matches!(w.context, WitnessContext::SubsystemDecrease { .. }))
        .unwrap();
    let replayed = replay_witness(cfg, witness).unwrap();
    assert!(replayed.violations > 0);
    assert!((replayed.worst_slack - witness.record.slack).abs() < 1e-12);
}

#[test]
fn analysis_deterministic_for_fixed_seed() {
    let (cfg, report, verified, analyses) = fixture();
    let (sg_again, _) = cmd_smallgain(cfg, verified).unwrap();
    let (falsify_a, _) = cmd_falsify(cfg, verified, analyses).unwrap();
    let (falsify_b, _) = cmd_falsify(cfg, verified, analyses).unwrap();
    let mut a = report.clone();
    a.merge(falsify_a);
    let mut b = report.clone();
    b.merge(sg_again);
    b.merge(falsify_b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}
