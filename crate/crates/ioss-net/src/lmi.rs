//! Block LMI assembly over verification grids, the joint feasibility
//! problem in (P~, Q~, R~, G~) for fixed eta~, and coupling-gain
//! extraction from solved certificates.

use crate::error::{Error, Result};
use crate::model::{GridSpec, JacobianBundle, SubsystemClass};
use crate::sdp::{minimize_lambda_max, AffineMatrixPencil, FeasibilityStatus, PencilBlock};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Numerical floor below which an eigenvalue of a nominally PSD matrix
/// counts as genuinely negative.
pub const PSD_FLOOR: f64 = 1e-9;

/// Gain floor emitted for fully decoupled certificates.
pub const DECOUPLED_GAIN_FLOOR: f64 = 1e-12;

/// A solved per-class certificate: the LMI holds with slack `margin` at
/// every grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmiCertificate {
    pub eta_tilde: f64,
    pub p_tilde: DMatrix<f64>,
    pub q_tilde: DMatrix<f64>,
    pub r_tilde: DMatrix<f64>,
    pub g_tilde: DMatrix<f64>,
    pub margin: f64,
}

impl LmiCertificate {
    pub fn lambda_min_p(&self) -> f64 {
        self.p_tilde.symmetric_eigenvalues().min()
    }

    pub fn lambda_max_g(&self) -> f64 {
        if self.g_tilde.nrows() == 0 {
            0.0
        } else {
            self.g_tilde.symmetric_eigenvalues().max()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_tilde > 0.0 && self.eta_tilde < 1.0) {
            return Err(Error::Certificate(format!(
                "eta_tilde {} outside (0,1)",
                self.eta_tilde
            )));
        }
        if self.lambda_min_p() <= 0.0 {
            return Err(Error::Certificate("P~ is not positive definite".into()));
        }
        for (name, m) in [("Q~", &self.q_tilde), ("R~", &self.r_tilde), ("G~", &self.g_tilde)] {
            if m.nrows() > 0 && m.symmetric_eigenvalues().min() < -PSD_FLOOR {
                return Err(Error::Certificate(format!("{name} has a negative eigenvalue")));
            }
        }
        Ok(())
    }
}

/// Per-neighbor coupling gains of one node, extracted from a certificate:
/// Lyapunov-form gamma, squared-norm form g~, trajectory-form g.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GainEntry {
    pub gamma: f64,
    pub g_tilde: f64,
    pub g: f64,
    /// true when G~ vanished and the gains are the configured floor
    pub decoupled: bool,
}

/// Gains keyed by neighbor node index.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CouplingGainSet {
    pub entries: BTreeMap<usize, GainEntry>,
}

/// Candidate tuple for direct block assembly.
#[derive(Debug, Clone)]
pub struct CertCandidate<'a> {
    pub eta_tilde: f64,
    pub p_tilde: &'a DMatrix<f64>,
    pub q_tilde: &'a DMatrix<f64>,
    pub r_tilde: &'a DMatrix<f64>,
    pub g_tilde: &'a DMatrix<f64>,
}

impl<'a> From<&'a LmiCertificate> for CertCandidate<'a> {
    fn from(c: &'a LmiCertificate) -> Self {
        Self {
            eta_tilde: c.eta_tilde,
            p_tilde: &c.p_tilde,
            q_tilde: &c.q_tilde,
            r_tilde: &c.r_tilde,
            g_tilde: &c.g_tilde,
        }
    }
}

/// The symmetric (n+q+s) block of the verification LMI at one Jacobian
/// evaluation: dynamics summand from (A,B,E) minus output summand from
/// (C,D,F), with the decision matrices subtracted on the diagonal.
pub fn assemble_lmi_block(jac: &JacobianBundle, cand: &CertCandidate) -> Result<DMatrix<f64>> {
    let (n, q, s) = (jac.a.nrows(), jac.b.ncols(), jac.e.ncols());
    let p = jac.c.nrows();
    if cand.p_tilde.nrows() != n
        || cand.q_tilde.nrows() != q
        || cand.r_tilde.nrows() != p
        || cand.g_tilde.nrows() != s
    {
        return Err(Error::Dimension(format!(
            "certificate dims ({},{},{},{}) do not match jacobians ({n},{q},{p},{s})",
            cand.p_tilde.nrows(),
            cand.q_tilde.nrows(),
            cand.r_tilde.nrows(),
            cand.g_tilde.nrows()
        )));
    }
    let dim = n + q + s;
    // J1 = [A B E], J2 = [C D F]
    let mut j1 = DMatrix::zeros(n, dim);
    j1.view_mut((0, 0), (n, n)).copy_from(&jac.a);
    j1.view_mut((0, n), (n, q)).copy_from(&jac.b);
    j1.view_mut((0, n + q), (n, s)).copy_from(&jac.e);
    let mut j2 = DMatrix::zeros(p, dim);
    j2.view_mut((0, 0), (p, n)).copy_from(&jac.c);
    j2.view_mut((0, n), (p, q)).copy_from(&jac.d);
    j2.view_mut((0, n + q), (p, s)).copy_from(&jac.f);

    let mut block = j1.transpose() * cand.p_tilde * &j1 - j2.transpose() * cand.r_tilde * &j2;
    block
        .view_mut((0, 0), (n, n))
        .sub_assign_workaround(&(cand.p_tilde * cand.eta_tilde));
    block.view_mut((n, n), (q, q)).sub_assign_workaround(cand.q_tilde);
    block
        .view_mut((n + q, n + q), (s, s))
        .sub_assign_workaround(cand.g_tilde);
    Ok((&block + block.transpose()) * 0.5)
}

trait SubAssignView {
    fn sub_assign_workaround(&mut self, rhs: &DMatrix<f64>);
}

impl SubAssignView for nalgebra::DMatrixViewMut<'_, f64> {
    fn sub_assign_workaround(&mut self, rhs: &DMatrix<f64>) {
        for j in 0..rhs.ncols() {
            for i in 0..rhs.nrows() {
                self[(i, j)] -= rhs[(i, j)];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    PureFeasibility,
    /// adds a scalar level variable t with G~ - t I <= 0 and minimizes t
    MinimizeGTildeLambdaMax,
}

/// Mapping between the flat decision vector and the certificate matrices.
#[derive(Debug, Clone)]
pub struct VarLayout {
    n: usize,
    q: usize,
    p: usize,
    s: usize,
    p_off: usize,
    q_off: usize,
    r_off: usize,
    g_off: usize,
    pub t_var: Option<usize>,
    pub var_count: usize,
}

fn sym_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Symmetric basis matrix for flat index `idx` of a d x d matrix:
/// E_aa for diagonal entries, E_ab + E_ba above the diagonal.
fn sym_basis(d: usize, idx: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut flat = 0;
    for a in 0..d {
        for b in a..d {
            if flat == idx {
                if a == b {
                    m[(a, a)] = 1.0;
                } else {
                    m[(a, b)] = 1.0;
                    m[(b, a)] = 1.0;
                }
                return m;
            }
            flat += 1;
        }
    }
    unreachable!("flat index out of range")
}

impl VarLayout {
    fn new(n: usize, q: usize, p: usize, s: usize, with_t: bool) -> Self {
        let p_off = 0;
        let q_off = p_off + sym_len(n);
        let r_off = q_off + sym_len(q);
        let g_off = r_off + sym_len(p);
        let mut var_count = g_off + sym_len(s);
        let t_var = with_t.then(|| {
            let t = var_count;
            var_count += 1;
            t
        });
        Self {
            n,
            q,
            p,
            s,
            p_off,
            q_off,
            r_off,
            g_off,
            t_var,
            var_count,
        }
    }

    fn unpack_one(&self, theta: &DVector<f64>, off: usize, d: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(d, d);
        let mut flat = 0;
        for a in 0..d {
            for b in a..d {
                m[(a, b)] = theta[off + flat];
                m[(b, a)] = theta[off + flat];
                flat += 1;
            }
        }
        m
    }

    pub fn unpack(&self, theta: &DVector<f64>, eta_tilde: f64, margin: f64) -> LmiCertificate {
        LmiCertificate {
            eta_tilde,
            p_tilde: self.unpack_one(theta, self.p_off, self.n),
            q_tilde: self.unpack_one(theta, self.q_off, self.q),
            r_tilde: self.unpack_one(theta, self.r_off, self.p),
            g_tilde: self.unpack_one(theta, self.g_off, self.s),
            margin,
        }
    }

    fn pack_sym(&self, theta: &mut DVector<f64>, off: usize, d: usize, m: &DMatrix<f64>) {
        let mut flat = 0;
        for a in 0..d {
            for b in a..d {
                theta[off + flat] = m[(a, b)];
                flat += 1;
            }
        }
    }

    fn pack_g(&self, theta: &mut DVector<f64>, g: &DMatrix<f64>) {
        self.pack_sym(theta, self.g_off, self.s, g);
    }

    fn initial_point(&self) -> DVector<f64> {
        // P~ = I, everything else 0; starts inside the cone blocks
        let mut theta = DVector::zeros(self.var_count);
        let mut flat = 0;
        for a in 0..self.n {
            for b in a..self.n {
                if a == b {
                    theta[self.p_off + flat] = 1.5;
                }
                flat += 1;
            }
        }
        theta
    }
}

/// Pose the joint feasibility problem for one class at fixed eta~ as a
/// block-diagonal affine pencil: one shifted LMI block per grid point,
/// the P~ >= I normalization, and one cone block per nonempty decision
/// matrix. The LMI blocks carry a `+margin I` shift so that overall
/// lambda_max <= 0 certifies slack `margin` on the original blocks.
pub fn pose_feasibility(
    class: &SubsystemClass,
    grid: &GridSpec,
    eta_tilde: f64,
    objective: Objective,
    margin: f64,
) -> Result<(AffineMatrixPencil, VarLayout)> {
    if !(eta_tilde > 0.0 && eta_tilde < 1.0) {
        return Err(Error::Spec(format!("eta_tilde {eta_tilde} outside (0,1)")));
    }
    let (n, q, p, s) = (class.n, class.q, class.p, class.s);
    let layout = VarLayout::new(n, q, p, s, objective == Objective::MinimizeGTildeLambdaMax);
    let dim = n + q + s;
    let mut blocks = Vec::new();

    for point in class.verification_grid(grid)? {
        let jac = class.jacobians_at(&point);
        let mut coeffs = Vec::with_capacity(layout.var_count);
        let zero_q = DMatrix::zeros(q, q);
        let zero_r = DMatrix::zeros(p, p);
        let zero_g = DMatrix::zeros(s, s);
        let zero_p = DMatrix::zeros(n, n);
        for flat in 0..sym_len(n) {
            let basis = sym_basis(n, flat);
            let cand = CertCandidate {
                eta_tilde,
                p_tilde: &basis,
                q_tilde: &zero_q,
                r_tilde: &zero_r,
                g_tilde: &zero_g,
            };
            coeffs.push((layout.p_off + flat, assemble_lmi_block(&jac, &cand)?));
        }
        for flat in 0..sym_len(q) {
            let mut m = DMatrix::zeros(dim, dim);
            m.view_mut((n, n), (q, q))
                .sub_assign_workaround(&sym_basis(q, flat));
            coeffs.push((layout.q_off + flat, m));
        }
        for flat in 0..sym_len(p) {
            let basis = sym_basis(p, flat);
            let cand = CertCandidate {
                eta_tilde,
                p_tilde: &zero_p,
                q_tilde: &zero_q,
                r_tilde: &basis,
                g_tilde: &zero_g,
            };
            // eta~ * 0 = 0, so only the -J2' R J2 part survives
            coeffs.push((layout.r_off + flat, assemble_lmi_block(&jac, &cand)?));
        }
        for flat in 0..sym_len(s) {
            let mut m = DMatrix::zeros(dim, dim);
            m.view_mut((n + q, n + q), (s, s))
                .sub_assign_workaround(&sym_basis(s, flat));
            coeffs.push((layout.g_off + flat, m));
        }
        blocks.push(PencilBlock::new(
            DMatrix::identity(dim, dim) * margin,
            coeffs,
        )?);
    }

    // normalization -P~ + I <= 0 (fixes the homogeneous scale)
    let p_coeffs: Vec<_> = (0..sym_len(n))
        .map(|flat| (layout.p_off + flat, -sym_basis(n, flat)))
        .collect();
    blocks.push(PencilBlock::new(DMatrix::identity(n, n), p_coeffs)?);

    // cone blocks -Q~ <= 0, -R~ <= 0, -G~ <= 0
    for (d, off) in [(q, layout.q_off), (p, layout.r_off), (s, layout.g_off)] {
        if d == 0 {
            continue;
        }
        let coeffs: Vec<_> = (0..sym_len(d))
            .map(|flat| (off + flat, -sym_basis(d, flat)))
            .collect();
        blocks.push(PencilBlock::new(DMatrix::zeros(d, d), coeffs)?);
    }

    // objective level block G~ - t I <= 0
    if let Some(t) = layout.t_var {
        let mut coeffs: Vec<_> = (0..sym_len(s))
            .map(|flat| (layout.g_off + flat, sym_basis(s, flat)))
            .collect();
        coeffs.push((t, -DMatrix::identity(s, s)));
        blocks.push(PencilBlock::new(DMatrix::zeros(s, s), coeffs)?);
    }

    let mut pencil = AffineMatrixPencil::new(blocks, layout.var_count)?;
    pencil.objective_var = layout.t_var;
    pencil.initial = Some(layout.initial_point());
    Ok((pencil, layout))
}

/// Add a conditioning constraint P~ <= cap * I to a posed pencil.
pub fn cap_p_lambda_max(
    pencil: &mut AffineMatrixPencil,
    class: &SubsystemClass,
    cap: f64,
) -> Result<()> {
    let n = class.n;
    // P~ variables sit at the start of the flat layout
    let coeffs: Vec<_> = (0..sym_len(n)).map(|flat| (flat, sym_basis(n, flat))).collect();
    pencil
        .blocks
        .push(PencilBlock::new(-DMatrix::identity(n, n) * cap, coeffs)?);
    Ok(())
}

/// Outcome of one class verification at a fixed eta~.
#[derive(Debug, Clone)]
pub struct ClassVerification {
    pub certificate: Option<LmiCertificate>,
    pub status: FeasibilityStatus,
    pub achieved_lambda_max: f64,
    pub iterations: usize,
}

/// Solve the class LMI at one eta~. Under `MinimizeGTildeLambdaMax` the
/// level of lambda_max(G~) is bisected on top of the feasibility solves.
pub fn verify_class(
    class: &SubsystemClass,
    grid: &GridSpec,
    eta_tilde: f64,
    objective: Objective,
    margin: f64,
    budget: usize,
    seed: u64,
) -> Result<ClassVerification> {
    // solve plain feasibility first in every mode: when it fails, no
    // level of the objective can succeed either, and when it succeeds
    // its lambda_max(G~) bounds the bisection from above
    let (pencil, layout) = pose_feasibility(class, grid, eta_tilde, Objective::PureFeasibility, margin)?;
    // inconclusive just means this start failed; a couple of fresh
    // starts cheaply separates genuinely hard instances from bad luck
    let mut base = minimize_lambda_max(&pencil, 0.0, budget, seed)?;
    for retry in 1..=2 {
        if base.status != FeasibilityStatus::Inconclusive {
            break;
        }
        let again = minimize_lambda_max(&pencil, 0.0, budget, seed.wrapping_add(retry))?;
        base.iterations += again.iterations;
        if again.status == FeasibilityStatus::Feasible {
            base = crate::sdp::FeasibilityResult {
                iterations: base.iterations,
                ..again
            };
        }
    }
    let result = if base.status != FeasibilityStatus::Feasible
        || objective == Objective::PureFeasibility
    {
        base
    } else {
        minimize_g_level(class, grid, eta_tilde, margin, budget, seed, base)?
    };
    let certificate = (result.status == FeasibilityStatus::Feasible).then(|| {
        let cert = layout.unpack(&result.theta, eta_tilde, margin);
        debug_assert!(cert.validate().is_ok());
        cert
    });
    Ok(ClassVerification {
        certificate,
        status: result.status,
        achieved_lambda_max: result.achieved_lambda_max,
        iterations: result.iterations,
    })
}

/// For frozen (P~, Q~, R~), the grid blocks depend on G~ only through
/// `-G~` on the z diagonal, so replacing G~ by `t I` is feasible for
/// every large enough `t` and the minimal `t` is found by bisection with
/// exact eigenvalue rechecks. `lambda_max(G~) >= t_min` for any valid G~
/// with the same frozen variables, so `t_min I` is optimal in lambda_max.
fn exact_level(
    class: &SubsystemClass,
    grid: &GridSpec,
    cert: &LmiCertificate,
) -> Result<Option<f64>> {
    let s = class.s;
    if s == 0 {
        return Ok(None);
    }
    let margin = cert.margin;
    let feasible = |t: f64| -> Result<bool> {
        let cand = LmiCertificate {
            g_tilde: DMatrix::identity(s, s) * t,
            ..cert.clone()
        };
        Ok(recheck_certificate(class, grid, &cand)? <= -margin)
    };
    let mut hi = cert.lambda_max_g().max(0.0) + 1e-12;
    if !feasible(hi)? {
        // frozen variables only marginally feasible; keep the original G~
        return Ok(None);
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        if hi - lo <= 1e-9 * hi.max(1e-12) {
            break;
        }
        let mid = 0.5 * (hi + lo);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Drive lambda_max(G~) down from a feasible base solution by
/// alternating exact level tightening (frozen P~, Q~, R~) with full SDP
/// re-solves at a reduced level that let the other variables re-shape.
fn minimize_g_level(
    class: &SubsystemClass,
    grid: &GridSpec,
    eta_tilde: f64,
    margin: f64,
    budget: usize,
    seed: u64,
    base: crate::sdp::FeasibilityResult,
) -> Result<crate::sdp::FeasibilityResult> {
    let (pencil, layout) =
        pose_feasibility(class, grid, eta_tilde, Objective::MinimizeGTildeLambdaMax, margin)?;
    let Some(t_var) = layout.t_var.filter(|_| class.s > 0) else {
        // decoupled class: nothing to minimize
        return Ok(base);
    };
    let plain = VarLayout::new(class.n, class.q, class.p, class.s, false);
    let mut iterations = base.iterations;
    let trace = std::env::var("IOSSNET_SOLVER_TRACE").is_ok();

    // the achievable level scales with the slack of the state block, not
    // with the coupling strength: a solution that clears the LMI with a
    // generous margin leaves room for a much smaller G~ once the level
    // is re-tightened against the real margin
    let mut base = base;
    for boosted in [1e-1, 1e-2, 1e-3] {
        if boosted <= margin {
            break;
        }
        let (wide, _) =
            pose_feasibility(class, grid, eta_tilde, Objective::PureFeasibility, boosted)?;
        let res = minimize_lambda_max(&wide, 0.0, budget, seed)?;
        base.iterations += res.iterations;
        if res.status == FeasibilityStatus::Feasible {
            base = crate::sdp::FeasibilityResult {
                iterations: base.iterations,
                ..res
            };
            if trace {
                eprintln!("slack-boosted solve feasible at margin {boosted:.0e}");
            }
            break;
        }
    }

    // seed the loop with the exactly tightened base solution
    let base_cert = plain.unpack(&base.theta, eta_tilde, margin);
    let mut cur_t = base_cert.lambda_max_g().max(0.0);
    let mut theta = base.theta.clone().push(cur_t + 1e-12);
    if let Some(t) = exact_level(class, grid, &base_cert)? {
        cur_t = t;
        plain.pack_g(&mut theta, &(DMatrix::identity(class.s, class.s) * t));
        theta[t_var] = t;
    }
    if trace {
        eprintln!("tightened base level {cur_t:.4e}");
    }

    let solve_at = |level: f64, warm: &DVector<f64>| {
        let mut sub = pencil.substitute(t_var, level);
        sub.initial = Some(warm.clone());
        let mut res = minimize_lambda_max(&sub, 0.0, budget, seed)?;
        if res.status != FeasibilityStatus::Feasible {
            // warm starts inherit the previous solution's shape; a cold
            // start escapes it
            sub.initial = pencil.initial.clone();
            let cold = minimize_lambda_max(&sub, 0.0, budget, seed.wrapping_add(17))?;
            let iterations = res.iterations + cold.iterations;
            if cold.status == FeasibilityStatus::Feasible {
                res = cold;
            }
            res.iterations = iterations;
        }
        res.theta[t_var] = level;
        Ok::<_, Error>(res)
    };

    for _ in 0..12 {
        let target = 0.7 * cur_t;
        if target <= 1e-12 {
            break;
        }
        let res = solve_at(target, &theta)?;
        iterations += res.iterations;
        if trace {
            eprintln!("level {target:.4e}: {:?} iters {}", res.status, res.iterations);
        }
        if res.status != FeasibilityStatus::Feasible {
            break;
        }
        theta = res.theta;
        let cert = plain.unpack(&theta, eta_tilde, margin);
        let tightened = exact_level(class, grid, &cert)?.unwrap_or(target);
        if tightened < cur_t {
            cur_t = tightened;
            plain.pack_g(&mut theta, &(DMatrix::identity(class.s, class.s) * tightened));
            theta[t_var] = tightened;
        } else {
            break;
        }
    }

    // supply tightening: scale Q~ and R~ to their minimal feasible levels
    // for the frozen remainder. Shrinking a supply matrix only hardens the
    // inequality, so feasibility is monotone in the scale factor.
    let mut cert = plain.unpack(&theta, eta_tilde, margin);
    for pick_q in [true, false] {
        let feasible = |alpha: f64| -> Result<bool> {
            let mut cand = cert.clone();
            if pick_q {
                cand.q_tilde *= alpha;
            } else {
                cand.r_tilde *= alpha;
            }
            Ok(recheck_certificate(class, grid, &cand)? <= -margin)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        if feasible(lo)? {
            hi = lo;
        } else {
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        if pick_q {
            cert.q_tilde *= hi;
        } else {
            cert.r_tilde *= hi;
        }
    }
    plain.pack_sym(&mut theta, plain.q_off, class.q, &cert.q_tilde);
    plain.pack_sym(&mut theta, plain.r_off, class.p, &cert.r_tilde);

    Ok(crate::sdp::FeasibilityResult {
        status: FeasibilityStatus::Feasible,
        achieved_lambda_max: base.achieved_lambda_max,
        theta,
        iterations,
    })
}

/// Re-assemble the certified LMI at every grid point; returns the worst
/// lambda_max (certified slack is `-returned value`).
pub fn recheck_certificate(
    class: &SubsystemClass,
    grid: &GridSpec,
    cert: &LmiCertificate,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for point in class.verification_grid(grid)? {
        let jac = class.jacobians_at(&point);
        let block = assemble_lmi_block(&jac, &cert.into())?;
        worst = worst.max(block.symmetric_eigenvalues().max());
    }
    Ok(worst)
}

/// Worst lambda_max of the certificate LMI over random off-grid domain
/// points. Diagnostic only: gridding certifies nothing between grid points.
pub fn offgrid_diagnostic(
    class: &SubsystemClass,
    cert: &LmiCertificate,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let (lo, hi) = (class.domain.lower().clone(), class.domain.upper().clone());
    for _ in 0..samples {
        let point = DVector::from_iterator(
            class.point_dim(),
            (0..class.point_dim()).map(|k| {
                if hi[k] > lo[k] {
                    rng.gen_range(lo[k]..=hi[k])
                } else {
                    lo[k]
                }
            }),
        );
        let jac = class.jacobians_at(&point);
        let block = assemble_lmi_block(&jac, &cert.into())?;
        worst = worst.max(block.symmetric_eigenvalues().max());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    Optimal,
    Conservative,
}

/// Neighbor context for gain extraction: node index, state dimension and
/// that node's certified P~.
pub struct NeighborCert<'a> {
    pub node: usize,
    pub p_tilde: &'a DMatrix<f64>,
}

fn lambda_min(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().min()
}

/// Smallest common scaling c >= 1 such that the per-neighbor candidate
/// gains min(c * base_j, cap_j) satisfy blockdiag_j(gain_j * W_j) >= G~.
/// Monotone in c, so plain bisection; the cap keeps every emitted gain at
/// or below its conservative value.
fn scale_gains(
    g_tilde: &DMatrix<f64>,
    weights: &[DMatrix<f64>],
    base: &[f64],
    cap: &[f64],
) -> Vec<f64> {
    let feasible = |gains: &[f64]| -> bool {
        let s = g_tilde.nrows();
        let mut m = -g_tilde.clone();
        let mut off = 0;
        for (gain, w) in gains.iter().zip(weights) {
            let d = w.nrows();
            for a in 0..d {
                for b in 0..d {
                    m[(off + a, off + b)] += gain * w[(a, b)];
                }
            }
            off += d;
        }
        debug_assert_eq!(off, s);
        lambda_min(&m) >= -1e-10 * (1.0 + g_tilde.norm())
    };
    let gains_at = |c: f64| -> Vec<f64> {
        base.iter()
            .zip(cap)
            .map(|(&b, &cp)| (c * b).min(cp))
            .collect()
    };
    let c_max = base
        .iter()
        .zip(cap)
        .map(|(&b, &cp)| if b > 0.0 { cp / b } else { 1.0 })
        .fold(1.0_f64, f64::max);
    if !feasible(&gains_at(c_max)) {
        // conservative values always work; numerical edge cases fall back
        return cap.to_vec();
    }
    let (mut lo, mut hi) = (0.0, c_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(&gains_at(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    gains_at(hi)
}

/// Extract per-neighbor coupling gains from a solved certificate.
///
/// Conservative mode uses gamma_ij = lambda_max(G~)/lambda_min(P~_j) and
/// g~_ij = lambda_max(G~); optimal mode shrinks both blockwise while
/// keeping the quadratic-form domination valid. Always also emits the
/// trajectory-form g_ij = sqrt(g~_ij / lambda_min(P~_i)).
pub fn extract_coupling_gains(
    cert: &LmiCertificate,
    neighbors: &[NeighborCert],
    mode: GainMode,
) -> Result<CouplingGainSet> {
    let s = cert.g_tilde.nrows();
    let total: usize = neighbors.iter().map(|nb| nb.p_tilde.nrows()).sum();
    if total != s {
        return Err(Error::Dimension(format!(
            "neighbor state dims sum to {total}, G~ is {s}x{s}"
        )));
    }
    if s > 0 && lambda_min(&cert.g_tilde) < -PSD_FLOOR {
        return Err(Error::Certificate(
            "G~ has an eigenvalue below the PSD floor".into(),
        ));
    }
    let lam_max_g = cert.lambda_max_g().max(0.0);
    let lam_min_p_own = cert.lambda_min_p();
    let mut set = CouplingGainSet::default();

    if lam_max_g <= DECOUPLED_GAIN_FLOOR {
        for nb in neighbors {
            set.entries.insert(
                nb.node,
                GainEntry {
                    gamma: DECOUPLED_GAIN_FLOOR,
                    g_tilde: DECOUPLED_GAIN_FLOOR,
                    g: (DECOUPLED_GAIN_FLOOR / lam_min_p_own).sqrt(),
                    decoupled: true,
                },
            );
        }
        return Ok(set);
    }

    let cons_gamma: Vec<f64> = neighbors
        .iter()
        .map(|nb| lam_max_g / lambda_min(nb.p_tilde))
        .collect();
    let cons_g_tilde: Vec<f64> = neighbors.iter().map(|_| lam_max_g).collect();

    let (gammas, g_tildes) = match mode {
        GainMode::Conservative => (cons_gamma.clone(), cons_g_tilde.clone()),
        GainMode::Optimal => {
            // per-neighbor floors from the diagonal blocks of G~
            let mut off = 0;
            let mut diag_blocks = Vec::new();
            for nb in neighbors {
                let d = nb.p_tilde.nrows();
                diag_blocks.push(cert.g_tilde.view((off, off), (d, d)).into_owned());
                off += d;
            }
            let tiny = lam_max_g * 1e-9;
            let base_g: Vec<f64> = diag_blocks
                .iter()
                .map(|b| b.symmetric_eigenvalues().max().max(tiny))
                .collect();
            let base_gamma: Vec<f64> = base_g
                .iter()
                .zip(neighbors)
                .map(|(&bg, nb)| bg / lambda_min(nb.p_tilde))
                .collect();
            let weights_p: Vec<DMatrix<f64>> =
                neighbors.iter().map(|nb| nb.p_tilde.clone()).collect();
            let weights_i: Vec<DMatrix<f64>> = neighbors
                .iter()
                .map(|nb| DMatrix::identity(nb.p_tilde.nrows(), nb.p_tilde.nrows()))
                .collect();
            (
                scale_gains(&cert.g_tilde, &weights_p, &base_gamma, &cons_gamma),
                scale_gains(&cert.g_tilde, &weights_i, &base_g, &cons_g_tilde),
            )
        }
    };

    for ((nb, gamma), g_tilde) in neighbors.iter().zip(gammas).zip(g_tildes) {
        set.entries.insert(
            nb.node,
            GainEntry {
                gamma,
                g_tilde,
                g: (g_tilde / lam_min_p_own).sqrt(),
                decoupled: false,
            },
        );
    }
    Ok(set)
}
