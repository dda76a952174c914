//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line. Expensive pipeline stages are shared through a
//! once-initialized fixture so the suite stays within its time budgets.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ioss_net::config::{MValue, RunConfig};
use ioss_net::falsify::{
    adversarial_pairs, check_overall_traj_bound, SampleMode, SamplerConfig,
};
use ioss_net::lmi::{
    extract_coupling_gains, recheck_certificate, verify_class, LmiCertificate, NeighborCert,
    Objective,
};
use ioss_net::model::{scalar_linear_class, GridSpec};
use ioss_net::pipeline::{cmd_falsify, cmd_smallgain, cmd_verify, MAnalysis, VerifiedClasses};
use ioss_net::report::Report;
use ioss_net::smallgain::{
    compose_overall_lyapunov, compute_mu, dense_spectral_radius, h_vector, operator_norm,
    spectral_radius, SubsystemLyapCertificate, Verdict,
};

const CONFIG: &str = r#"{ "model": { "name": "train" }, "m_values": [3, 4, "inf"] }"#;

struct Fixture {
    config: RunConfig,
    verified: VerifiedClasses,
    smallgain_report: Report,
    analyses: Vec<MAnalysis>,
    report_json: String,
    pipeline_seconds: f64,
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let config = RunConfig::from_json(CONFIG).expect("config");
        let t0 = Instant::now();
        let (verify_report, verified) = cmd_verify(&config).expect("verify");
        let verified = verified.expect("train defaults must certify");
        let (smallgain_report, analyses) = cmd_smallgain(&config, &verified).expect("smallgain");
        let pipeline_seconds = t0.elapsed().as_secs_f64();
        let report_json = format!(
            "{}\n{}",
            verify_report.to_json().unwrap(),
            smallgain_report.to_json().unwrap()
        );
        Fixture {
            config,
            verified,
            smallgain_report,
            analyses,
            report_json,
            pipeline_seconds,
        }
    })
}

fn row(fix: &Fixture, m: MValue) -> &ioss_net::report::MRow {
    fix.smallgain_report
        .m_rows
        .iter()
        .find(|r| r.m == m)
        .expect("requested M row")
}

#[test]
fn criterion_1_verdict_pattern() {
    let fix = fixture();
    let m3 = row(fix, MValue::Finite(3));
    let m4 = row(fix, MValue::Finite(4));
    let inf = row(fix, MValue::Infinite);
    assert_eq!(m3.verdict_traj, Verdict::Pass, "M=3 trajectory");
    assert_eq!(m3.verdict_lyap, Verdict::Pass, "M=3 Lyapunov");
    assert_eq!(m4.verdict_traj, Verdict::Fail, "M=4 trajectory");
    assert_eq!(m4.verdict_lyap, Verdict::Pass, "M=4 Lyapunov");
    assert_eq!(inf.verdict_traj, Verdict::Fail, "row-sum trajectory");
    assert_eq!(inf.verdict_lyap, Verdict::Pass, "row-sum Lyapunov");
    assert!(
        fix.pipeline_seconds < 300.0,
        "pipeline took {:.1}s",
        fix.pipeline_seconds
    );
    println!(
        "criterion 1 (verdict pattern M=3 ok/ok, M=4 fail/ok, inf fail/ok in {:.1}s): pass",
        fix.pipeline_seconds
    );
}

/// Per-node gain extraction over a concrete network from a certificate map.
fn gains_for(
    config: &RunConfig,
    certs: &BTreeMap<String, LmiCertificate>,
    m: usize,
) -> Vec<(LmiCertificate, Vec<(usize, ioss_net::lmi::GainEntry)>)> {
    let net = config.network(m).unwrap();
    (0..net.node_count())
        .map(|node| {
            let cert = certs[&net.class_of(node).name].clone();
            let nbs: Vec<NeighborCert> = net.neighbors[node]
                .iter()
                .map(|&j| NeighborCert {
                    node: j,
                    p_tilde: &certs[&net.class_of(j).name].p_tilde,
                })
                .collect();
            let set = extract_coupling_gains(&cert, &nbs, config.gain_mode).unwrap();
            let entries = set
                .entries
                .iter()
                .map(|(&j, e)| (j, e.clone()))
                .collect();
            (cert, entries)
        })
        .collect()
}

#[test]
fn criterion_2_gain_ordering() {
    let fix = fixture();
    let net = fix.config.network(4).unwrap();
    let mut checked = 0usize;
    for certs in [&fix.verified.traj, &fix.verified.lyap] {
        for (node, (cert, entries)) in gains_for(&fix.config, certs, 4).iter().enumerate() {
            for (j, entry) in entries {
                if entry.decoupled {
                    continue;
                }
                let p_j = certs[&net.class_of(*j).name.clone()].lambda_min_p();
                let ratio = cert.lambda_max_g() / cert.lambda_min_p().min(p_j);
                if ratio < 1.0 {
                    assert!(
                        entry.gamma < entry.g,
                        "node {node} neighbor {j}: gamma {} !< g {}",
                        entry.gamma,
                        entry.g
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 0, "no gain pair satisfied the ordering premise");
    println!("criterion 2 (gamma < g on {checked} extracted gain pairs): pass");
}

#[test]
fn criterion_3_row_sum_scaling() {
    let fix = fixture();
    let mut checked = 0usize;
    for certs in [&fix.verified.traj, &fix.verified.lyap] {
        for m in [3usize, 4] {
            for (cert, entries) in gains_for(&fix.config, certs, m) {
                if entries.iter().any(|(_, e)| e.decoupled) {
                    continue;
                }
                if cert.lambda_max_g() / cert.lambda_min_p() > 1.0 {
                    continue;
                }
                let eta = cert.eta_tilde.sqrt();
                let traj_sum: f64 =
                    entries.iter().map(|(_, e)| e.g).sum::<f64>() / (1.0 - eta);
                let lyap_sum: f64 =
                    entries.iter().map(|(_, e)| e.gamma).sum::<f64>() / (1.0 - cert.eta_tilde);
                assert!(
                    lyap_sum <= traj_sum + 1e-12,
                    "Lyapunov row sum {lyap_sum} exceeds trajectory row sum {traj_sum}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 0, "no row satisfied the scaling premise");
    println!("criterion 3 (Lyapunov row sums <= trajectory row sums on {checked} rows): pass");
}

#[test]
fn criterion_4_lmi_oracle_soundness() {
    let margin = 1e-6;
    let class = scalar_linear_class(0.5, 1.0, 1.0);
    let grid = GridSpec::uniform(class.jacobian_deps.len(), 3).unwrap();
    let v = verify_class(&class, &grid, 0.5, Objective::PureFeasibility, margin, 8000, 0).unwrap();
    let cert = v.certificate.expect("contractive observed scalar is feasible");
    let worst = recheck_certificate(&class, &grid, &cert).unwrap();
    assert!(
        worst <= -margin + 1e-9,
        "re-verified worst eigenvalue {worst} above -margin"
    );

    let bad = scalar_linear_class(2.0, 0.0, 1.0);
    let grid = GridSpec::uniform(bad.jacobian_deps.len(), 3).unwrap();
    let v = verify_class(&bad, &grid, 0.5, Objective::PureFeasibility, margin, 8000, 0).unwrap();
    assert!(
        v.certificate.is_none(),
        "unstable unobserved scalar must not certify"
    );
    println!("criterion 4 (scalar LMI oracle: feasible re-verifies, infeasible rejected): pass");
}

#[test]
fn criterion_5_spectral_radius_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=20);
        let scale = 10f64.powi(rng.gen_range(-2..=2));
        let m = DMatrix::from_fn(n, n, |_, _| {
            if rng.gen_bool(0.8) {
                rng.gen::<f64>() * scale
            } else {
                0.0
            }
        });
        let fast = spectral_radius(&m).unwrap();
        let dense = dense_spectral_radius(&m);
        assert!(
            (fast - dense).abs() <= 1e-8 * scale.max(1.0) * (n as f64),
            "trial {trial}: power/fallback {fast} vs dense {dense} on {n}x{n}"
        );
    }
    println!("criterion 5 (spectral radius matches dense eigensolver on 1000 matrices): pass");
}

#[test]
fn criterion_6_mu_and_lambda_sigma() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1000 {
        let m = rng.gen_range(2..=8);
        let lambda = DVector::from_fn(m, |_, _| rng.gen_range(0.05..0.95));
        let mut gamma = DMatrix::from_fn(m, m, |i, j| {
            if i == j || rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen::<f64>()
            }
        });
        // scale coupling until the Lyapunov small-gain matrix is contractive
        let lam_inv_gamma = |g: &DMatrix<f64>| {
            DMatrix::from_fn(m, m, |i, j| g[(i, j)] / lambda[i])
        };
        let rho = dense_spectral_radius(&lam_inv_gamma(&gamma));
        if rho >= 1.0 {
            gamma *= rng.gen_range(0.1..0.99) / rho;
        }
        assert!(dense_spectral_radius(&lam_inv_gamma(&gamma)) < 1.0);

        let mu = compute_mu(&lambda, &gamma).unwrap();
        assert!(mu.iter().all(|&v| v > 0.0), "trial {trial}: mu not positive");
        let h = h_vector(&mu, &lambda, &gamma);
        assert!(
            h.iter().all(|&v| v < 0.0),
            "trial {trial}: mu'(-Lambda+Gamma) not negative"
        );

        // compose through scalar Lyapunov certificates and compare
        // lambda_sigma against the direct formula
        let neighbors: Vec<Vec<usize>> = (0..m)
            .map(|i| (0..m).filter(|&j| j != i && gamma[(i, j)] > 0.0).collect())
            .collect();
        let certs: Vec<SubsystemLyapCertificate> = (0..m)
            .map(|i| SubsystemLyapCertificate {
                lambda: lambda[i],
                p1: DMatrix::identity(1, 1),
                p2: DMatrix::identity(1, 1),
                q: DMatrix::identity(1, 1),
                r: DMatrix::identity(1, 1),
                gamma: neighbors[i].iter().map(|&j| (j, gamma[(i, j)])).collect(),
            })
            .collect();
        let overall = compose_overall_lyapunov(&certs, &neighbors, &mu).unwrap();
        let direct = -(0..m).map(|i| h[i] / mu[i]).fold(f64::NEG_INFINITY, f64::max);
        assert!(
            overall.lambda_sigma > 0.0 && overall.lambda_sigma < 1.0,
            "trial {trial}: lambda_sigma {} outside (0,1)",
            overall.lambda_sigma
        );
        assert!(
            (overall.lambda_sigma - direct).abs() <= 1e-12,
            "trial {trial}: lambda_sigma {} vs direct {direct}",
            overall.lambda_sigma
        );
    }
    println!("criterion 6 (mu > 0, negative H, lambda_sigma formula on 1000 draws): pass");
}

#[test]
fn criterion_7_trajectory_certificate_validity() {
    let fix = fixture();
    let analysis = fix
        .analyses
        .iter()
        .find(|a| a.m == MValue::Finite(3))
        .expect("M=3 analysis");
    let overall = analysis.overall_traj.as_ref().expect("M=3 trajectory certificate");

    // envelope constant by direct matrix powers
    let n = overall.s_matrix.nrows();
    let mut power = DMatrix::identity(n, n);
    for xi in 0..=400u32 {
        let norm = operator_norm(&power);
        let bound = overall.b * overall.sigma0.powi(xi as i32);
        assert!(
            norm <= bound * (1.0 + 1e-12) + 1e-300,
            "||S^{xi}|| = {norm} exceeds b sigma0^xi = {bound}"
        );
        power = &power * &overall.s_matrix;
    }

    // adversarial search against the overall exponential bound
    let net = fix.config.network(3).unwrap();
    let cfg = SamplerConfig {
        horizon: fix.config.horizon,
        count: 10_000,
        mode: SampleMode::Adversarial,
        state_span: fix.config.sampler.state_span,
        disturbance_span: fix.config.sampler.disturbance_span,
        input_span: fix.config.sampler.input_span,
        ..SamplerConfig::default()
    };
    let slack = |pair: &ioss_net::falsify::TrajectoryPair| {
        check_overall_traj_bound(pair, overall).worst_slack
    };
    let (pairs, _) = adversarial_pairs(&net, &cfg, fix.config.seed, &slack).unwrap();
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for pair in &pairs {
        let r = check_overall_traj_bound(pair, overall);
        violations += r.violations;
        worst = worst.min(r.worst_slack);
    }
    assert_eq!(
        violations, 0,
        "overall trajectory bound falsified, worst slack {worst}"
    );
    println!(
        "criterion 7 (envelope holds to xi=400; bound survives 10^4 adversarial pairs, \
         worst slack {worst:.3e}): pass"
    );
}

#[test]
fn criterion_8_end_to_end_falsification() {
    let fix = fixture();
    let t0 = Instant::now();
    let m3: Vec<MAnalysis> = fix
        .analyses
        .iter()
        .filter(|a| a.m == MValue::Finite(3))
        .cloned()
        .collect();

    let (_, outcome) = cmd_falsify(&fix.config, &fix.verified, &m3).unwrap();
    let names: Vec<&str> = outcome.summaries.iter().map(|s| s.check.as_str()).collect();
    for check in [
        "subsystem-decrease",
        "assumption-1",
        "overall-lyapunov",
        "overall-trajectory",
    ] {
        assert!(names.contains(&check), "checker {check} did not run");
    }
    for s in &outcome.summaries {
        assert!(s.checks_run > 0, "{} ran no checks", s.check);
        assert_eq!(
            s.violations, 0,
            "{} violated on certified network, worst slack {}",
            s.check, s.worst_slack
        );
    }
    let total_pairs: usize = fix.config.samples;
    assert!(total_pairs >= 10_000, "sample budget below 10^4");

    // negative controls run adversarially with a reduced sample budget
    let mut control_cfg = fix.config.clone();
    control_cfg.samples = 60;
    control_cfg.sampler.adversarial = true;

    let mut bad = fix.verified.clone();
    for cert in bad.traj.values_mut().chain(bad.lyap.values_mut()) {
        cert.eta_tilde /= 2.0;
    }
    let (_, out) = cmd_falsify(&control_cfg, &bad, &m3).unwrap();
    let caught: usize = out.summaries.iter().map(|s| s.violations).sum();
    assert!(caught > 0, "halved eta~ control produced no violation");

    let mut bad = m3.clone();
    let lyap = bad[0].overall_lyap.as_mut().expect("M=3 Lyapunov certificate");
    lyap.mu[0] *= 10.0;
    let (_, out) = cmd_falsify(&control_cfg, &fix.verified, &bad).unwrap();
    let caught = out
        .summaries
        .iter()
        .filter(|s| s.check == "overall-lyapunov")
        .map(|s| s.violations)
        .sum::<usize>();
    assert!(caught > 0, "corrupted mu control produced no violation");

    let mut bad = m3.clone();
    let traj = bad[0].overall_traj.as_mut().expect("M=3 trajectory certificate");
    traj.h /= 10.0;
    let (_, out) = cmd_falsify(&control_cfg, &fix.verified, &bad).unwrap();
    let overshoot_caught = out
        .summaries
        .iter()
        .filter(|s| s.check == "overall-trajectory")
        .map(|s| s.violations)
        .sum::<usize>();

    let elapsed = t0.elapsed().as_secs_f64() + fix.pipeline_seconds;
    assert!(elapsed < 600.0, "falsification stage took {elapsed:.1}s");

    if overshoot_caught == 0 {
        println!(
            "criterion 8 (4 checkers clean over 10^4 pairs; eta~/2 and mu-corruption \
             controls witnessed; h/10 overshoot control NOT witnessed, {elapsed:.1}s): fail"
        );
        panic!(
            "h/10 negative control is unattainable on this model: the composed overshoot \
             constant h ~= 91 carries a structural factor ||(I-G)^-1|| * sqrt(cond(P~)) \
             >= ~60 (position-only measurement at step 0.1 forces cond(P~) >= ~50, and \
             the certified M=3 gain matrix forces ||(I-G)^-1|| >= ~9.4), while the \
             realizable overshoot of any trajectory pair is <= ~1.02x the envelope, so \
             h/10 ~= 9 still over-bounds every pair; see README 'Known limitations'"
        );
    }
    println!(
        "criterion 8 (4 checkers clean over 10^4 pairs, 3 negative controls witnessed, \
         {elapsed:.1}s): pass"
    );
}

#[test]
fn criterion_9_determinism() {
    let fix = fixture();
    let config = RunConfig::from_json(CONFIG).unwrap();
    let (verify_report, verified) = cmd_verify(&config).unwrap();
    let verified = verified.expect("second run must certify");
    let (smallgain_report, _) = cmd_smallgain(&config, &verified).unwrap();
    let rerun = format!(
        "{}\n{}",
        verify_report.to_json().unwrap(),
        smallgain_report.to_json().unwrap()
    );
    assert_eq!(fix.report_json, rerun, "reports differ between identical runs");
    println!("criterion 9 (byte-identical reports across reruns): pass");
}
