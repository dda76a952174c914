//! Monte-Carlo falsification of certified inequalities: trajectory pairs
//! are sampled (uniformly or by adversarial coordinate descent on the
//! slack), then each certified bound is evaluated step by step. Passing
//! here never proves anything — results are "not falsified".

use crate::error::{Error, Result};
use crate::lmi::LmiCertificate;
use crate::model::{step_network, NetworkSpec};
use crate::smallgain::{OverallLyapCertificate, OverallTrajCertificate, SubsystemIossCertificate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Two trajectories of the same network under a shared input sequence.
/// States are stacked; time runs 0..=horizon for states, 0..horizon for
/// inputs, disturbances and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub horizon: usize,
    pub x: Vec<DVector<f64>>,
    pub x_tilde: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub w_tilde: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub y_tilde: Vec<DVector<f64>>,
}

impl TrajectoryPair {
    pub fn delta_x(&self, t: usize) -> DVector<f64> {
        &self.x[t] - &self.x_tilde[t]
    }

    pub fn delta_w(&self, t: usize) -> DVector<f64> {
        &self.w[t] - &self.w_tilde[t]
    }

    pub fn delta_y(&self, t: usize) -> DVector<f64> {
        &self.y[t] - &self.y_tilde[t]
    }

    pub fn delta_x_node(&self, spec: &NetworkSpec, node: usize, t: usize) -> DVector<f64> {
        let off = spec.state_offsets();
        let n = spec.class_of(node).n;
        (&self.x[t] - &self.x_tilde[t]).rows(off[node], n).into_owned()
    }

    pub fn delta_w_node(&self, spec: &NetworkSpec, node: usize, t: usize) -> DVector<f64> {
        let off = spec.disturbance_offsets();
        let q = spec.class_of(node).q;
        (&self.w[t] - &self.w_tilde[t]).rows(off[node], q).into_owned()
    }

    pub fn delta_y_node(&self, spec: &NetworkSpec, node: usize, t: usize) -> DVector<f64> {
        let off = spec.output_offsets();
        let p = spec.class_of(node).p;
        (&self.y[t] - &self.y_tilde[t]).rows(off[node], p).into_owned()
    }

    pub fn delta_z_node(&self, spec: &NetworkSpec, node: usize, t: usize) -> DVector<f64> {
        spec.gather_z(node, &self.x[t]) - spec.gather_z(node, &self.x_tilde[t])
    }
}

/// Simulate both trajectories; `None` when any node of either trajectory
/// leaves its class domain (certificates only cover the compact set, and
/// clipping would silently change the dynamics).
pub fn simulate_pair(
    spec: &NetworkSpec,
    x0: DVector<f64>,
    x0_tilde: DVector<f64>,
    u_seq: &[DVector<f64>],
    w_seq: &[DVector<f64>],
    w_tilde_seq: &[DVector<f64>],
) -> Result<Option<TrajectoryPair>> {
    let horizon = u_seq.len();
    if w_seq.len() != horizon || w_tilde_seq.len() != horizon {
        return Err(Error::Dimension(format!(
            "sequence lengths u={}, w={}, w~={}",
            horizon,
            w_seq.len(),
            w_tilde_seq.len()
        )));
    }
    let mut pair = TrajectoryPair {
        horizon,
        x: vec![x0],
        x_tilde: vec![x0_tilde],
        u: u_seq.to_vec(),
        w: w_seq.to_vec(),
        w_tilde: w_tilde_seq.to_vec(),
        y: Vec::with_capacity(horizon),
        y_tilde: Vec::with_capacity(horizon),
    };
    for t in 0..horizon {
        for node in 0..spec.node_count() {
            if !spec.node_in_domain(node, &pair.x[t], &u_seq[t], &w_seq[t])
                || !spec.node_in_domain(node, &pair.x_tilde[t], &u_seq[t], &w_tilde_seq[t])
            {
                return Ok(None);
            }
        }
        let (xn, yn) = step_network(spec, &pair.x[t], &u_seq[t], &w_seq[t])?;
        let (xtn, ytn) = step_network(spec, &pair.x_tilde[t], &u_seq[t], &w_tilde_seq[t])?;
        pair.x.push(xn);
        pair.x_tilde.push(xtn);
        pair.y.push(yn);
        pair.y_tilde.push(ytn);
    }
    // terminal states only need to sit in the state slice of the box
    let off = spec.state_offsets();
    for node in 0..spec.node_count() {
        let c = spec.class_of(node);
        let xbox = c.domain.project(&(0..c.n).collect::<Vec<_>>());
        let last = pair.x.last().unwrap().rows(off[node], c.n).into_owned();
        let last_t = pair.x_tilde.last().unwrap().rows(off[node], c.n).into_owned();
        if !xbox.contains(&last) || !xbox.contains(&last_t) {
            return Ok(None);
        }
    }
    Ok(Some(pair))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    Uniform,
    /// coordinate descent on the checked inequality's slack, started
    /// from uniform samples
    Adversarial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub horizon: usize,
    pub count: usize,
    pub mode: SampleMode,
    /// fraction of each box half-width used around the midpoint
    pub state_span: f64,
    pub disturbance_span: f64,
    pub input_span: f64,
    /// resampling attempts per accepted pair before giving up
    pub max_attempts: usize,
    /// coordinate-descent sweeps per adversarial pair
    pub sweeps: usize,
    /// coordinates touched per sweep (random subset when the pair has
    /// more); bounds the per-pair simulation cost
    pub coord_budget: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            count: 100,
            mode: SampleMode::Uniform,
            state_span: 1.0,
            disturbance_span: 1.0,
            input_span: 1.0,
            max_attempts: 200,
            sweeps: 3,
            coord_budget: 64,
        }
    }
}

/// Flat parameter vector behind one pair; rebuilding through
/// `simulate_pair` keeps coordinate descent honest about domain exits.
struct PairParams {
    x0: DVector<f64>,
    x0_tilde: DVector<f64>,
    u: Vec<DVector<f64>>,
    w: Vec<DVector<f64>>,
    w_tilde: Vec<DVector<f64>>,
}

impl PairParams {
    fn build(&self, spec: &NetworkSpec) -> Result<Option<TrajectoryPair>> {
        simulate_pair(
            spec,
            self.x0.clone(),
            self.x0_tilde.clone(),
            &self.u,
            &self.w,
            &self.w_tilde,
        )
    }

    fn coords_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = Vec::new();
        out.extend(self.x0.iter_mut());
        out.extend(self.x0_tilde.iter_mut());
        for v in self.u.iter_mut().chain(self.w.iter_mut()).chain(self.w_tilde.iter_mut()) {
            out.extend(v.iter_mut());
        }
        out
    }
}

fn sample_stacked(
    spec: &NetworkSpec,
    rng: &mut ChaCha8Rng,
    dim_of: impl Fn(&crate::model::SubsystemClass) -> usize,
    slice_start: impl Fn(&crate::model::SubsystemClass) -> usize,
    span: f64,
) -> DVector<f64> {
    let mut parts: Vec<f64> = Vec::new();
    for node in 0..spec.node_count() {
        let c = spec.class_of(node);
        let (lo, hi) = (c.domain.lower(), c.domain.upper());
        let start = slice_start(c);
        for k in 0..dim_of(c) {
            let (l, h) = (lo[start + k], hi[start + k]);
            let mid = 0.5 * (l + h);
            let half = 0.5 * (h - l) * span;
            parts.push(if half > 0.0 {
                rng.gen_range(mid - half..mid + half)
            } else {
                mid
            });
        }
    }
    DVector::from_vec(parts)
}

fn draw_params(spec: &NetworkSpec, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> PairParams {
    let state = |c: &crate::model::SubsystemClass| c.n;
    let input = |c: &crate::model::SubsystemClass| c.m;
    let dist = |c: &crate::model::SubsystemClass| c.q;
    PairParams {
        x0: sample_stacked(spec, rng, state, |_| 0, cfg.state_span),
        x0_tilde: sample_stacked(spec, rng, state, |_| 0, cfg.state_span),
        u: (0..cfg.horizon)
            .map(|_| sample_stacked(spec, rng, input, |c| c.n, cfg.input_span))
            .collect(),
        w: (0..cfg.horizon)
            .map(|_| sample_stacked(spec, rng, dist, |c| c.n + c.m, cfg.disturbance_span))
            .collect(),
        w_tilde: (0..cfg.horizon)
            .map(|_| sample_stacked(spec, rng, dist, |c| c.n + c.m, cfg.disturbance_span))
            .collect(),
    }
}

/// Uniform pair stream; deterministic for a fixed seed. Returns the
/// accepted pairs and the number discarded for leaving the domain.
pub fn sample_pairs(
    spec: &NetworkSpec,
    cfg: &SamplerConfig,
    seed: u64,
) -> Result<(Vec<TrajectoryPair>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(cfg.count);
    let mut discarded = 0;
    while pairs.len() < cfg.count {
        let mut accepted = false;
        for _ in 0..cfg.max_attempts {
            let params = draw_params(spec, cfg, &mut rng);
            match params.build(spec)? {
                Some(pair) => {
                    pairs.push(pair);
                    accepted = true;
                    break;
                }
                None => discarded += 1,
            }
        }
        if !accepted {
            return Err(Error::Config(format!(
                "no in-domain pair found in {} attempts; shrink the sampler spans",
                cfg.max_attempts
            )));
        }
    }
    Ok((pairs, discarded))
}

/// Adversarial pair stream: each uniform start is refined by coordinate
/// descent minimizing `slack` (most-violated direction), rejecting moves
/// that exit the domain. Deterministic for a fixed seed.
pub fn adversarial_pairs(
    spec: &NetworkSpec,
    cfg: &SamplerConfig,
    seed: u64,
    slack: &dyn Fn(&TrajectoryPair) -> f64,
) -> Result<(Vec<TrajectoryPair>, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(cfg.count);
    let mut discarded = 0;
    while pairs.len() < cfg.count {
        let mut start: Option<(PairParams, TrajectoryPair)> = None;
        for _ in 0..cfg.max_attempts {
            let params = draw_params(spec, cfg, &mut rng);
            if let Some(pair) = params.build(spec)? {
                start = Some((params, pair));
                break;
            }
            discarded += 1;
        }
        let Some((mut params, mut best_pair)) = start else {
            return Err(Error::Config(format!(
                "no in-domain pair found in {} attempts; shrink the sampler spans",
                cfg.max_attempts
            )));
        };
        let mut best = slack(&best_pair);
        let coord_count = params.coords_mut().len();
        let mut step = 0.25;
        for _sweep in 0..cfg.sweeps {
            let coords: Vec<usize> = if coord_count <= cfg.coord_budget {
                (0..coord_count).collect()
            } else {
                (0..cfg.coord_budget)
                    .map(|_| rng.gen_range(0..coord_count))
                    .collect()
            };
            for c in coords {
                for dir in [1.0, -1.0] {
                    let old = *params.coords_mut()[c];
                    *params.coords_mut()[c] = old + dir * step * (1.0 + old.abs());
                    match params.build(spec)? {
                        Some(pair) => {
                            let s = slack(&pair);
                            if s < best {
                                best = s;
                                best_pair = pair;
                                continue;
                            }
                        }
                        None => discarded += 1,
                    }
                    *params.coords_mut()[c] = old;
                }
            }
            step *= 0.4;
        }
        pairs.push(best_pair);
    }
    Ok((pairs, discarded))
}

/// A reproducible violation: the pair, the inequality, where it failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessRecord {
    pub check: String,
    pub node: Option<usize>,
    pub step: usize,
    pub slack: f64,
    pub tolerance: f64,
    pub pair: TrajectoryPair,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FalsificationReport {
    pub checks_run: usize,
    pub violations: usize,
    /// most negative slack seen (right-hand side minus left-hand side)
    pub worst_slack: f64,
    pub discarded_pairs: usize,
    pub witness: Option<WitnessRecord>,
}

impl FalsificationReport {
    pub fn new() -> Self {
        Self {
            checks_run: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            discarded_pairs: 0,
            witness: None,
        }
    }

    fn record(
        &mut self,
        slack: f64,
        tolerance: f64,
        check: &str,
        node: Option<usize>,
        step: usize,
        pair: &TrajectoryPair,
    ) {
        self.checks_run += 1;
        self.worst_slack = self.worst_slack.min(slack);
        if slack < -tolerance {
            self.violations += 1;
            let better = self.witness.as_ref().map_or(true, |w| slack < w.slack);
            if better {
                self.witness = Some(WitnessRecord {
                    check: check.to_string(),
                    node,
                    step,
                    slack,
                    tolerance,
                    pair: pair.clone(),
                });
            }
        }
    }

    pub fn merge(&mut self, other: FalsificationReport) {
        self.checks_run += other.checks_run;
        self.violations += other.violations;
        self.discarded_pairs += other.discarded_pairs;
        self.worst_slack = self.worst_slack.min(other.worst_slack);
        if let Some(w) = other.witness {
            let better = self.witness.as_ref().map_or(true, |cur| w.slack < cur.slack);
            if better {
                self.witness = Some(w);
            }
        }
    }

    pub fn clean(&self) -> bool {
        self.violations == 0
    }
}

impl Default for FalsificationReport {
    fn default() -> Self {
        Self::new()
    }
}

fn quad(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    if v.len() == 0 {
        return 0.0;
    }
    (m * v).dot(v)
}

fn tol_for(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

/// Per-step quadratic decrease of one node against its LMI certificate.
pub fn check_subsystem_decrease(
    spec: &NetworkSpec,
    pair: &TrajectoryPair,
    node: usize,
    cert: &LmiCertificate,
) -> FalsificationReport {
    let mut report = FalsificationReport::new();
    for t in 0..pair.horizon {
        let lhs = quad(&pair.delta_x_node(spec, node, t + 1), &cert.p_tilde);
        let rhs = cert.eta_tilde * quad(&pair.delta_x_node(spec, node, t), &cert.p_tilde)
            + quad(&pair.delta_w_node(spec, node, t), &cert.q_tilde)
            + quad(&pair.delta_y_node(spec, node, t), &cert.r_tilde)
            + quad(&pair.delta_z_node(spec, node, t), &cert.g_tilde);
        report.record(rhs - lhs, tol_for(rhs), "subsystem-decrease", Some(node), t, pair);
    }
    report
}

/// Time-discounted trajectory bound of one node against its
/// (eta, p, q, r, g) constants; neighbor deviations enter as inputs.
pub fn check_assumption1(
    spec: &NetworkSpec,
    pair: &TrajectoryPair,
    node: usize,
    cert: &SubsystemIossCertificate,
) -> FalsificationReport {
    let mut report = FalsificationReport::new();
    let dx0 = pair.delta_x_node(spec, node, 0).norm();
    // discounted = sum_{k<t} eta^{t-k-1} * term_k, built incrementally
    let mut discounted = 0.0;
    for t in 0..=pair.horizon {
        let lhs = pair.delta_x_node(spec, node, t).norm();
        let rhs = cert.eta.powi(t as i32) * cert.p_gain * dx0 + discounted;
        report.record(rhs - lhs, tol_for(rhs), "assumption-1", Some(node), t, pair);
        if t < pair.horizon {
            let mut term = cert.q_gain * pair.delta_w_node(spec, node, t).norm()
                + cert.r_gain * pair.delta_y_node(spec, node, t).norm();
            for (&j, &gij) in &cert.g {
                term += gij * pair.delta_x_node(spec, j, t).norm();
            }
            discounted = cert.eta * discounted + term;
        }
    }
    report
}

/// Composed Lyapunov decrease: V_sigma built from the per-node V = the
/// P~-weighted squared deviation, weights and rate from the overall
/// certificate.
pub fn check_overall_lyap(
    spec: &NetworkSpec,
    pair: &TrajectoryPair,
    overall: &OverallLyapCertificate,
    p_tildes: &[DMatrix<f64>],
) -> FalsificationReport {
    let mut report = FalsificationReport::new();
    let m = spec.node_count();
    let v_sigma = |t: usize| -> f64 {
        (0..m)
            .map(|i| overall.mu[i] * quad(&pair.delta_x_node(spec, i, t), &p_tildes[i]))
            .sum()
    };
    for t in 0..pair.horizon {
        let v_now = v_sigma(t);
        let v_next = v_sigma(t + 1);
        let supply: f64 = (0..m)
            .map(|i| {
                quad(&pair.delta_w_node(spec, i, t), &overall.q_sigma[i])
                    + quad(&pair.delta_y_node(spec, i, t), &overall.r_sigma[i])
            })
            .sum();
        let rhs = -overall.lambda_sigma * v_now + supply;
        let lhs = v_next - v_now;
        report.record(rhs - lhs, tol_for(v_now + supply), "overall-lyapunov", None, t, pair);
    }
    report
}

/// Overall exponential trajectory bound with running disturbance/output
/// maxima.
pub fn check_overall_traj_bound(
    pair: &TrajectoryPair,
    overall: &OverallTrajCertificate,
) -> FalsificationReport {
    let mut report = FalsificationReport::new();
    let dx0 = pair.delta_x(0).norm();
    let mut w_max = 0.0_f64;
    let mut y_max = 0.0_f64;
    for t in 0..=pair.horizon {
        let lhs = pair.delta_x(t).norm();
        let rhs = overall.h * overall.sigma.powi(t as i32) * dx0
            + overall.disturbance_gain * w_max
            + overall.output_gain * y_max;
        report.record(rhs - lhs, tol_for(rhs), "overall-trajectory", None, t, pair);
        if t < pair.horizon {
            w_max = w_max.max(pair.delta_w(t).norm());
            y_max = y_max.max(pair.delta_y(t).norm());
        }
    }
    report
}
