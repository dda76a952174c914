//! Orchestration: class-level LMI verification with the eta~ sweep,
//! per-M small-gain analysis, certificate composition, falsification,
//! and report assembly. One LMI solve per distinct class and eta~, never
//! per node.

use crate::config::{MValue, RunConfig};
use crate::error::Result;
use crate::falsify::{
    adversarial_pairs, check_assumption1, check_overall_lyap, check_overall_traj_bound,
    check_subsystem_decrease, sample_pairs, FalsificationReport, SampleMode, SamplerConfig,
    TrajectoryPair, WitnessRecord,
};
use crate::lmi::{extract_coupling_gains, verify_class, LmiCertificate, NeighborCert, Objective};
use crate::model::NetworkSpec;
use crate::report::{
    ClassReport, FalsifySummary, GainRow, MRow, Provenance, Report, TrajConstants,
};
use crate::smallgain::{
    check_small_gain, check_small_gain_uniform, compose_overall_lyapunov, compute_mu,
    derive_trajectory_certificate, ClassRowData, OverallLyapCertificate, OverallTrajCertificate,
    SubsystemIossCertificate, SubsystemLyapCertificate, Verdict,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Small-gain targets; each may pick a different eta~ trade-off.
pub const TARGET_TRAJ: &str = "trajectory";
pub const TARGET_LYAP: &str = "lyapunov";

/// Chosen certificates per target, keyed by class name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifiedClasses {
    pub traj: BTreeMap<String, LmiCertificate>,
    pub lyap: BTreeMap<String, LmiCertificate>,
    pub reports: Vec<ClassReport>,
    pub all_certified: bool,
}

struct Candidate {
    class: String,
    cert: LmiCertificate,
    achieved_lambda_max: f64,
    iterations: usize,
}

/// Trajectory-form constants implied by a quadratic certificate.
pub fn ioss_constants(cert: &LmiCertificate) -> (f64, f64, f64, f64) {
    let lam_min_p = cert.lambda_min_p();
    let lam_max_p = cert.p_tilde.symmetric_eigenvalues().max();
    let lam = |m: &DMatrix<f64>| {
        if m.nrows() == 0 {
            0.0
        } else {
            m.symmetric_eigenvalues().max().max(0.0)
        }
    };
    let eta = cert.eta_tilde.sqrt();
    let p = (lam_max_p / lam_min_p).sqrt();
    let q = (lam(&cert.q_tilde) / lam_min_p).sqrt();
    let r = (lam(&cert.r_tilde) / lam_min_p).sqrt();
    (eta, p, q, r)
}

fn positive_floor(v: f64) -> f64 {
    v.max(crate::lmi::DECOUPLED_GAIN_FLOOR)
}

/// Verify every distinct class over the eta~ sweep and choose, per
/// small-gain target, the combination with the smallest worst-case gain
/// row sum.
pub fn cmd_verify(config: &RunConfig) -> Result<(Report, Option<VerifiedClasses>)> {
    config.validate()?;
    let classes = config.classes()?;
    let mut per_class: Vec<Vec<Candidate>> = Vec::new();
    let mut failures: Vec<ClassReport> = Vec::new();

    for class in &classes {
        let grid =
            crate::model::GridSpec::new(vec![config.grid_points; class.jacobian_deps.len()])?;
        let mut candidates = Vec::new();
        let mut best_failed: Option<ClassReport> = None;
        for &eta in &config.eta_sweep {
            let run = verify_class(
                class,
                &grid,
                eta,
                Objective::MinimizeGTildeLambdaMax,
                config.margin,
                config.solver_budget,
                config.seed,
            )?;
            match run.certificate {
                Some(cert) => candidates.push(Candidate {
                    class: class.name.clone(),
                    cert,
                    achieved_lambda_max: run.achieved_lambda_max,
                    iterations: run.iterations,
                }),
                None => {
                    let report = ClassReport {
                        class_name: class.name.clone(),
                        target: "none".into(),
                        certified: false,
                        eta_tilde: Some(eta),
                        margin: config.margin,
                        lambda_min_p: None,
                        lambda_max_g: None,
                        achieved_lambda_max: run.achieved_lambda_max,
                        solver_iterations: run.iterations,
                    };
                    let better = best_failed
                        .as_ref()
                        .map_or(true, |b| run.achieved_lambda_max < b.achieved_lambda_max);
                    if better {
                        best_failed = Some(report);
                    }
                }
            }
        }
        if candidates.is_empty() {
            failures.push(best_failed.expect("at least one sweep entry ran"));
            per_class.push(Vec::new());
        } else {
            per_class.push(candidates);
        }
    }

    let mut report = Report {
        provenance: Some(provenance(config)),
        ..Report::default()
    };
    if !failures.is_empty() {
        report.classes = failures;
        report.normalize();
        return Ok((report, None));
    }

    let traj = select_combo(config, &per_class, TARGET_TRAJ)?;
    let lyap = select_combo(config, &per_class, TARGET_LYAP)?;
    let mut reports = Vec::new();
    for (target, combo) in [(TARGET_TRAJ, &traj), (TARGET_LYAP, &lyap)] {
        for candidates in &per_class {
            let chosen = &candidates[combo[&candidates[0].class]];
            reports.push(ClassReport {
                class_name: chosen.class.clone(),
                target: target.into(),
                certified: true,
                eta_tilde: Some(chosen.cert.eta_tilde),
                margin: chosen.cert.margin,
                lambda_min_p: Some(chosen.cert.lambda_min_p()),
                lambda_max_g: Some(chosen.cert.lambda_max_g()),
                achieved_lambda_max: chosen.achieved_lambda_max,
                solver_iterations: chosen.iterations,
            });
        }
    }
    let certificates = VerifiedClasses {
        traj: per_class
            .iter()
            .map(|c| (c[0].class.clone(), c[traj[&c[0].class]].cert.clone()))
            .collect(),
        lyap: per_class
            .iter()
            .map(|c| (c[0].class.clone(), c[lyap[&c[0].class]].cert.clone()))
            .collect(),
        reports: reports.clone(),
        all_certified: true,
    };
    report.classes = reports;
    report.normalize();
    Ok((report, Some(certificates)))
}

/// Reference sizes exhibiting every neighbor-class combination a chain
/// node can have.
const REFERENCE_SIZES: [usize; 2] = [2, 5];

/// Worst-case per-node row data over the reference networks.
fn class_rows(
    config: &RunConfig,
    certs: &BTreeMap<String, LmiCertificate>,
) -> Result<Vec<ClassRowData>> {
    let mut rows = Vec::new();
    for m in REFERENCE_SIZES {
        let net = config.network(m)?;
        for node in 0..net.node_count() {
            let class = net.class_of(node);
            let cert = &certs[&class.name];
            let gains = node_gains(config, &net, node, certs)?;
            let (eta, ..) = ioss_constants(cert);
            rows.push(ClassRowData {
                class_name: class.name.clone(),
                eta,
                lambda: 1.0 - cert.eta_tilde,
                g_row: gains.entries.values().map(|e| e.g).collect(),
                gamma_row: gains.entries.values().map(|e| e.gamma).collect(),
            });
        }
    }
    Ok(rows)
}

fn node_gains(
    config: &RunConfig,
    net: &NetworkSpec,
    node: usize,
    certs: &BTreeMap<String, LmiCertificate>,
) -> Result<crate::lmi::CouplingGainSet> {
    let cert = &certs[&net.class_of(node).name];
    let neighbor_certs: Vec<NeighborCert> = net.neighbors[node]
        .iter()
        .map(|&j| NeighborCert {
            node: j,
            p_tilde: &certs[&net.class_of(j).name].p_tilde,
        })
        .collect();
    extract_coupling_gains(cert, &neighbor_certs, config.gain_mode)
}

/// Pick one candidate index per class minimizing the worst-case row-sum
/// bound of the requested target. Exhaustive over the (small) product.
fn select_combo(
    config: &RunConfig,
    per_class: &[Vec<Candidate>],
    target: &str,
) -> Result<BTreeMap<String, usize>> {
    let class_names: Vec<&str> = per_class.iter().map(|c| c[0].class.as_str()).collect();
    let mut indices = vec![0usize; per_class.len()];
    let mut best: Option<(f64, BTreeMap<String, usize>)> = None;
    loop {
        let combo: BTreeMap<String, LmiCertificate> = per_class
            .iter()
            .zip(&indices)
            .map(|(c, &i)| (c[0].class.clone(), c[i].cert.clone()))
            .collect();
        let rows = class_rows(config, &combo)?;
        let (traj_bound, _, lyap_bound, _) = check_small_gain_uniform(&rows);
        let bound = if target == TARGET_TRAJ { traj_bound } else { lyap_bound };
        let better = best.as_ref().map_or(true, |(b, _)| bound < *b);
        if better {
            let chosen = class_names
                .iter()
                .zip(&indices)
                .map(|(name, &i)| (name.to_string(), i))
                .collect();
            best = Some((bound, chosen));
        }
        // odometer over the candidate product
        let mut k = 0;
        loop {
            if k == indices.len() {
                let (_, chosen) = best.unwrap();
                return Ok(chosen);
            }
            indices[k] += 1;
            if indices[k] < per_class[k].len() {
                break;
            }
            indices[k] = 0;
            k += 1;
        }
    }
}

/// Everything the per-M analysis produced; feeds falsification.
#[derive(Clone)]
pub struct MAnalysis {
    pub m: MValue,
    pub row: MRow,
    pub network: Option<NetworkSpec>,
    pub ioss_certs: Option<Vec<SubsystemIossCertificate>>,
    pub lyap_certs: Option<Vec<SubsystemLyapCertificate>>,
    pub overall_lyap: Option<OverallLyapCertificate>,
    pub overall_traj: Option<OverallTrajCertificate>,
    pub lyap_p_tildes: Option<Vec<DMatrix<f64>>>,
}

pub fn analyze_m(config: &RunConfig, verified: &VerifiedClasses, m: MValue) -> Result<MAnalysis> {
    match m {
        MValue::Finite(size) => analyze_finite(config, verified, size),
        MValue::Infinite => analyze_uniform(config, verified),
    }
}

fn analyze_finite(config: &RunConfig, verified: &VerifiedClasses, m: usize) -> Result<MAnalysis> {
    let net = config.network(m)?;
    let nodes = net.node_count();

    let mut ioss_certs = Vec::with_capacity(nodes);
    let mut lyap_certs = Vec::with_capacity(nodes);
    let mut gain_rows = Vec::new();
    let mut p_tildes = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let name = &net.class_of(node).name;
        let traj_cert = &verified.traj[name];
        let lyap_cert = &verified.lyap[name];
        let traj_gains = node_gains(config, &net, node, &verified.traj)?;
        let lyap_gains = node_gains(config, &net, node, &verified.lyap)?;

        let (eta, p, q, r) = ioss_constants(traj_cert);
        ioss_certs.push(SubsystemIossCertificate {
            eta,
            p_gain: p,
            q_gain: positive_floor(q),
            r_gain: positive_floor(r),
            g: traj_gains
                .entries
                .iter()
                .map(|(&j, e)| (j, positive_floor(e.g)))
                .collect(),
        });
        lyap_certs.push(SubsystemLyapCertificate {
            lambda: 1.0 - lyap_cert.eta_tilde,
            p1: lyap_cert.p_tilde.clone(),
            p2: lyap_cert.p_tilde.clone(),
            q: lyap_cert.q_tilde.clone(),
            r: lyap_cert.r_tilde.clone(),
            gamma: lyap_gains
                .entries
                .iter()
                .map(|(&j, e)| (j, positive_floor(e.gamma)))
                .collect(),
        });
        p_tildes.push(lyap_cert.p_tilde.clone());
        for (&j, e) in &traj_gains.entries {
            gain_rows.push(GainRow {
                node,
                neighbor: j,
                gamma: lyap_gains.entries[&j].gamma,
                g_tilde: e.g_tilde,
                g: e.g,
                decoupled: e.decoupled,
            });
        }
    }

    let analysis = check_small_gain(Some(&ioss_certs), Some(&lyap_certs), &net.neighbors)?;
    let mut row = MRow {
        m: MValue::Finite(m),
        rho_g: analysis.rho_g,
        rho_lg: analysis.rho_lg,
        verdict_traj: analysis.verdict_traj,
        verdict_lyap: analysis.verdict_lyap,
        mu: None,
        lambda_sigma: None,
        traj_constants: None,
        gains: gain_rows,
        notes: BTreeMap::new(),
    };

    let mut overall_lyap = None;
    if analysis.verdict_lyap.passed() {
        let (lambda, gamma) =
            crate::smallgain::build_lyap_matrices(&lyap_certs, &net.neighbors)?;
        let mu = compute_mu(&lambda, &gamma)?;
        let overall = compose_overall_lyapunov(&lyap_certs, &net.neighbors, &mu)?;
        row.mu = Some(overall.mu.iter().copied().collect());
        row.lambda_sigma = Some(overall.lambda_sigma);
        overall_lyap = Some(overall);
    } else {
        row.notes.insert(
            "composition".into(),
            "Lyapunov small-gain condition failed; no composed certificate".into(),
        );
    }

    let mut overall_traj = None;
    if analysis.verdict_traj.passed() {
        let g = analysis.g_matrix.as_ref().expect("verdict implies G built");
        let overall = derive_trajectory_certificate(&ioss_certs, g)?;
        row.traj_constants = Some(TrajConstants {
            n_window: overall.n_window,
            rho_s: overall.rho_s,
            b: overall.b,
            sigma0: overall.sigma0,
            sigma: overall.sigma,
            g_bar: overall.g_bar,
            b_bar: overall.b_bar,
            h: overall.h,
            disturbance_gain: overall.disturbance_gain,
            output_gain: overall.output_gain,
        });
        overall_traj = Some(overall);
    } else {
        row.notes.insert(
            "trajectory-constants".into(),
            "trajectory small-gain condition failed; no overall bound".into(),
        );
    }

    Ok(MAnalysis {
        m: MValue::Finite(m),
        row,
        network: Some(net),
        ioss_certs: Some(ioss_certs),
        lyap_certs: Some(lyap_certs),
        overall_lyap,
        overall_traj,
        lyap_p_tildes: Some(p_tildes),
    })
}

fn analyze_uniform(config: &RunConfig, verified: &VerifiedClasses) -> Result<MAnalysis> {
    let mut row = MRow {
        m: MValue::Infinite,
        rho_g: None,
        rho_lg: None,
        verdict_traj: Verdict::NotRun,
        verdict_lyap: Verdict::NotRun,
        mu: None,
        lambda_sigma: None,
        traj_constants: None,
        gains: vec![],
        notes: BTreeMap::new(),
    };
    if !config.uniform_classes() {
        row.notes
            .insert("uniform".into(), "model classes are not uniform".into());
        return Ok(empty_analysis(row));
    }
    let traj_rows = class_rows(config, &verified.traj)?;
    let lyap_rows = class_rows(config, &verified.lyap)?;
    let (traj_bound, traj_verdict, ..) = check_small_gain_uniform(&traj_rows);
    let (.., lyap_bound, lyap_verdict) = check_small_gain_uniform(&lyap_rows);
    row.rho_g = Some(traj_bound);
    row.rho_lg = Some(lyap_bound);
    row.verdict_traj = traj_verdict;
    row.verdict_lyap = lyap_verdict;
    row.notes.insert(
        "bound".into(),
        "row-sum upper bounds on the spectral radii, valid for every M".into(),
    );
    Ok(empty_analysis(row))
}

fn empty_analysis(row: MRow) -> MAnalysis {
    MAnalysis {
        m: row.m,
        row,
        network: None,
        ioss_certs: None,
        lyap_certs: None,
        overall_lyap: None,
        overall_traj: None,
        lyap_p_tildes: None,
    }
}

pub fn cmd_smallgain(config: &RunConfig, verified: &VerifiedClasses) -> Result<(Report, Vec<MAnalysis>)> {
    let mut report = Report {
        provenance: Some(provenance(config)),
        classes: verified.reports.clone(),
        ..Report::default()
    };
    let mut analyses = Vec::new();
    for &m in &config.m_values {
        let analysis = analyze_m(config, verified, m)?;
        report.m_rows.push(analysis.row.clone());
        if report.tighter_bound_diagnostic.is_none() {
            if let Some(tc) = &analysis.row.traj_constants {
                let root_m = match m {
                    MValue::Finite(v) => (v as f64).sqrt(),
                    MValue::Infinite => 1.0,
                };
                report.tighter_bound_diagnostic = Some(tc.disturbance_gain / root_m);
            }
        }
        analyses.push(analysis);
    }
    report.normalize();
    Ok((report, analyses))
}

/// A reproducible violation plus everything needed to recheck it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessFile {
    pub m: usize,
    pub context: WitnessContext,
    pub record: WitnessRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum WitnessContext {
    SubsystemDecrease { node: usize, cert: LmiCertificate },
    Assumption1 { node: usize, cert: SubsystemIossCertificate },
    OverallLyap { overall: OverallLyapCertificate, p_tildes: Vec<DMatrix<f64>> },
    OverallTraj { overall: OverallTrajCertificate },
}

pub struct FalsifyOutcome {
    pub summaries: Vec<FalsifySummary>,
    pub witnesses: Vec<WitnessFile>,
}

fn sampler_config(config: &RunConfig) -> SamplerConfig {
    SamplerConfig {
        horizon: config.horizon,
        count: config.samples,
        mode: if config.sampler.adversarial {
            SampleMode::Adversarial
        } else {
            SampleMode::Uniform
        },
        state_span: config.sampler.state_span,
        disturbance_span: config.sampler.disturbance_span,
        input_span: config.sampler.input_span,
        ..SamplerConfig::default()
    }
}

pub fn cmd_falsify(
    config: &RunConfig,
    verified: &VerifiedClasses,
    analyses: &[MAnalysis],
) -> Result<(Report, FalsifyOutcome)> {
    let mut report = Report {
        provenance: Some(provenance(config)),
        ..Report::default()
    };
    let mut outcome = FalsifyOutcome {
        summaries: vec![],
        witnesses: vec![],
    };
    if config.samples == 0 {
        return Ok((report, outcome));
    }
    for analysis in analyses {
        let MValue::Finite(m) = analysis.m else { continue };
        let Some(net) = &analysis.network else { continue };
        let cfg = sampler_config(config);
        let (pairs, discarded) = match cfg.mode {
            SampleMode::Uniform => sample_pairs(net, &cfg, config.seed)?,
            SampleMode::Adversarial => {
                let slack = |pair: &TrajectoryPair| combined_slack(net, analysis, verified, pair);
                adversarial_pairs(net, &cfg, config.seed, &slack)?
            }
        };
        run_checks(net, analysis, verified, &pairs, discarded, m, &mut outcome);
    }
    report.falsification = outcome.summaries.clone();
    report.normalize();
    Ok((report, outcome))
}

fn combined_slack(
    net: &NetworkSpec,
    analysis: &MAnalysis,
    verified: &VerifiedClasses,
    pair: &TrajectoryPair,
) -> f64 {
    let mut worst = f64::INFINITY;
    for node in 0..net.node_count() {
        let name = &net.class_of(node).name;
        worst = worst
            .min(check_subsystem_decrease(net, pair, node, &verified.traj[name]).worst_slack);
        if let Some(certs) = &analysis.ioss_certs {
            worst = worst.min(check_assumption1(net, pair, node, &certs[node]).worst_slack);
        }
    }
    if let (Some(overall), Some(p_tildes)) = (&analysis.overall_lyap, &analysis.lyap_p_tildes) {
        worst = worst.min(check_overall_lyap(net, pair, overall, p_tildes).worst_slack);
    }
    if let Some(overall) = &analysis.overall_traj {
        worst = worst.min(check_overall_traj_bound(pair, overall).worst_slack);
    }
    worst
}

fn run_checks(
    net: &NetworkSpec,
    analysis: &MAnalysis,
    verified: &VerifiedClasses,
    pairs: &[TrajectoryPair],
    discarded: usize,
    m: usize,
    outcome: &mut FalsifyOutcome,
) {
    // per-step decrease for both chosen certificate families
    let mut decrease = FalsificationReport::new();
    decrease.discarded_pairs = discarded;
    // the context must describe the same witness the merged report keeps:
    // the one with the most negative slack
    let mut decrease_ctx: Option<(f64, WitnessContext)> = None;
    for pair in pairs {
        for node in 0..net.node_count() {
            let name = &net.class_of(node).name;
            for certs in [&verified.traj, &verified.lyap] {
                let partial = check_subsystem_decrease(net, pair, node, &certs[name]);
                if let Some(w) = &partial.witness {
                    if decrease_ctx.as_ref().map_or(true, |(s, _)| w.slack < *s) {
                        decrease_ctx = Some((
                            w.slack,
                            WitnessContext::SubsystemDecrease {
                                node,
                                cert: certs[name].clone(),
                            },
                        ));
                    }
                }
                decrease.merge(partial);
            }
        }
    }
    push_summary(outcome, m, "subsystem-decrease", decrease, decrease_ctx.map(|(_, c)| c));

    if let Some(certs) = &analysis.ioss_certs {
        let mut sum = FalsificationReport::new();
        let mut ctx: Option<(f64, WitnessContext)> = None;
        for pair in pairs {
            for node in 0..net.node_count() {
                let partial = check_assumption1(net, pair, node, &certs[node]);
                if let Some(w) = &partial.witness {
                    if ctx.as_ref().map_or(true, |(s, _)| w.slack < *s) {
                        ctx = Some((
                            w.slack,
                            WitnessContext::Assumption1 {
                                node,
                                cert: certs[node].clone(),
                            },
                        ));
                    }
                }
                sum.merge(partial);
            }
        }
        push_summary(outcome, m, "assumption-1", sum, ctx.map(|(_, c)| c));
    }

    if let (Some(overall), Some(p_tildes)) = (&analysis.overall_lyap, &analysis.lyap_p_tildes) {
        let mut sum = FalsificationReport::new();
        for pair in pairs {
            sum.merge(check_overall_lyap(net, pair, overall, p_tildes));
        }
        let ctx = sum.witness.is_some().then(|| WitnessContext::OverallLyap {
            overall: overall.clone(),
            p_tildes: p_tildes.clone(),
        });
        push_summary(outcome, m, "overall-lyapunov", sum, ctx);
    }

    if let Some(overall) = &analysis.overall_traj {
        let mut sum = FalsificationReport::new();
        for pair in pairs {
            sum.merge(check_overall_traj_bound(pair, overall));
        }
        let ctx = sum
            .witness
            .is_some()
            .then(|| WitnessContext::OverallTraj { overall: overall.clone() });
        push_summary(outcome, m, "overall-trajectory", sum, ctx);
    }
}

fn push_summary(
    outcome: &mut FalsifyOutcome,
    m: usize,
    check: &str,
    report: FalsificationReport,
    context: Option<WitnessContext>,
) {
    outcome.summaries.push(FalsifySummary {
        m,
        check: check.into(),
        checks_run: report.checks_run,
        violations: report.violations,
        worst_slack: if report.checks_run == 0 {
            0.0
        } else {
            report.worst_slack
        },
        discarded_pairs: report.discarded_pairs,
    });
    if let (Some(record), Some(context)) = (report.witness, context) {
        outcome.witnesses.push(WitnessFile { m, context, record });
    }
}

/// Re-run the violated inequality on the stored pair alone.
pub fn replay_witness(config: &RunConfig, file: &WitnessFile) -> Result<FalsificationReport> {
    let net = config.network(file.m)?;
    let pair = &file.record.pair;
    Ok(match &file.context {
        WitnessContext::SubsystemDecrease { node, cert } => {
            check_subsystem_decrease(&net, pair, *node, cert)
        }
        WitnessContext::Assumption1 { node, cert } => check_assumption1(&net, pair, *node, cert),
        WitnessContext::OverallLyap { overall, p_tildes } => {
            check_overall_lyap(&net, pair, overall, p_tildes)
        }
        WitnessContext::OverallTraj { overall } => check_overall_traj_bound(pair, overall),
    })
}

pub fn provenance(config: &RunConfig) -> Provenance {
    Provenance {
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config.hash(),
    }
}

/// verify -> smallgain -> falsify in one pass, merged into one report.
pub fn run_full(config: &RunConfig) -> Result<(Report, i32)> {
    let (mut report, verified) = cmd_verify(config)?;
    let Some(verified) = verified else {
        return Ok((report, 2));
    };
    let (sg_report, analyses) = cmd_smallgain(config, &verified)?;
    report.merge(sg_report);
    let (falsify_report, outcome) = cmd_falsify(config, &verified, &analyses)?;
    report.merge(falsify_report);
    let violations: usize = outcome.summaries.iter().map(|s| s.violations).sum();
    let code = if violations > 0 { 2 } else { 0 };
    Ok((report, code))
}

#[cfg(test)]
mod tests;
