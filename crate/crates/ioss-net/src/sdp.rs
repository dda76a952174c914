//! Convex feasibility oracle for affine symmetric-matrix pencils.
//!
//! Minimizes the maximum eigenvalue of a block-diagonal affine matrix
//! function with a smoothed spectral (soft-max) first-order method. The
//! optimizer is never trusted: every `Feasible` verdict is re-verified by
//! a fresh symmetric eigensolve over all blocks.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYMMETRY_TOL: f64 = 1e-12;

/// One block of the pencil: F0 + sum_k theta_k * F_k.
#[derive(Debug, Clone)]
pub struct PencilBlock {
    f0: DMatrix<f64>,
    /// (variable index, coefficient matrix), sparse in the variables
    coeffs: Vec<(usize, DMatrix<f64>)>,
}

fn symmetrize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "pencil matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    if (m - &sym).norm() > SYMMETRY_TOL * (1.0 + m.norm()) {
        return Err(Error::Spec("pencil matrix is not symmetric".into()));
    }
    Ok(sym)
}

impl PencilBlock {
    pub fn new(f0: DMatrix<f64>, coeffs: Vec<(usize, DMatrix<f64>)>) -> Result<Self> {
        let f0 = symmetrize(&f0)?;
        let dim = f0.nrows();
        let coeffs = coeffs
            .into_iter()
            .map(|(k, m)| {
                let m = symmetrize(&m)?;
                if m.nrows() != dim {
                    return Err(Error::Dimension(format!(
                        "coefficient for var {k} is {}x{}, block is {dim}x{dim}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok((k, m))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { f0, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (k, fk) in &self.coeffs {
            m += fk * theta[*k];
        }
        m
    }

    fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|(_, m)| m.norm() == 0.0)
    }
}

/// Block-diagonal affine symmetric-matrix function of a decision vector.
#[derive(Debug, Clone)]
pub struct AffineMatrixPencil {
    pub blocks: Vec<PencilBlock>,
    pub var_count: usize,
    /// variable minimized by [`bisect_objective`]
    pub objective_var: Option<usize>,
    /// preferred starting point (defaults to the origin)
    pub initial: Option<DVector<f64>>,
}

impl AffineMatrixPencil {
    pub fn new(blocks: Vec<PencilBlock>, var_count: usize) -> Result<Self> {
        for b in &blocks {
            for (k, _) in &b.coeffs {
                if *k >= var_count {
                    return Err(Error::Spec(format!(
                        "pencil references var {k} but var_count is {var_count}"
                    )));
                }
            }
        }
        Ok(Self {
            blocks,
            var_count,
            objective_var: None,
            initial: None,
        })
    }

    /// Exact max eigenvalue over all blocks at `theta`, by dense
    /// symmetric eigensolves. This is the trust anchor.
    pub fn lambda_max(&self, theta: &DVector<f64>) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for (bi, b) in self.blocks.iter().enumerate() {
            let m = b.eval(theta);
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    block: bi,
                    context: "non-finite block entries".into(),
                });
            }
            let eig = m.symmetric_eigenvalues();
            worst = worst.max(eig.max());
        }
        Ok(worst)
    }

    /// Substitute one variable by a constant, folding its coefficient
    /// matrices into the constant terms.
    pub(crate) fn substitute(&self, var: usize, value: f64) -> AffineMatrixPencil {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut f0 = b.f0.clone();
                let mut coeffs = Vec::new();
                for (k, m) in &b.coeffs {
                    if *k == var {
                        f0 += m * value;
                    } else {
                        coeffs.push((*k, m.clone()));
                    }
                }
                PencilBlock { f0, coeffs }
            })
            .collect();
        AffineMatrixPencil {
            blocks,
            var_count: self.var_count,
            objective_var: None,
            initial: self.initial.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    /// a constant block alone already violates the margin
    InfeasibleCertifiedNone,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: FeasibilityStatus,
    pub theta: DVector<f64>,
    pub achieved_lambda_max: f64,
    pub iterations: usize,
}

/// Value-only evaluation of the smoothed objective (no eigenvectors),
/// cheap enough for backtracking line searches.
fn smoothed_value(
    pencil: &AffineMatrixPencil,
    theta: &DVector<f64>,
    mu: f64,
) -> Result<(f64, f64)> {
    let mut all = Vec::new();
    let mut lam_max = f64::NEG_INFINITY;
    for (bi, b) in pencil.blocks.iter().enumerate() {
        let m = b.eval(theta);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                block: bi,
                context: "non-finite block entries during iteration".into(),
            });
        }
        let ev = m.symmetric_eigenvalues();
        lam_max = lam_max.max(ev.max());
        all.extend(ev.iter().copied());
    }
    let z: f64 = all.iter().map(|&l| ((l - lam_max) / mu).exp()).sum();
    Ok((lam_max + mu * z.ln(), lam_max))
}

/// Smoothed objective phi_mu = mu * log sum exp(lambda / mu) over all block
/// eigenvalues, with its gradient and the exact lambda_max.
fn smoothed_value_grad(
    pencil: &AffineMatrixPencil,
    theta: &DVector<f64>,
    mu: f64,
) -> Result<(f64, DVector<f64>, f64)> {
    struct BlockEig {
        values: DVector<f64>,
        vectors: DMatrix<f64>,
    }
    let mut eigs = Vec::with_capacity(pencil.blocks.len());
    let mut lam_max = f64::NEG_INFINITY;
    for (bi, b) in pencil.blocks.iter().enumerate() {
        let m = b.eval(theta);
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                block: bi,
                context: "non-finite block entries during iteration".into(),
            });
        }
        let se = m.symmetric_eigen();
        lam_max = lam_max.max(se.eigenvalues.max());
        eigs.push(BlockEig {
            values: se.eigenvalues,
            vectors: se.eigenvectors,
        });
    }
    // stable log-sum-exp over every eigenvalue of every block
    let mut z = 0.0;
    for e in &eigs {
        for &l in e.values.iter() {
            z += ((l - lam_max) / mu).exp();
        }
    }
    let phi = lam_max + mu * z.ln();
    let mut grad = DVector::zeros(pencil.var_count);
    for (b, e) in pencil.blocks.iter().zip(&eigs) {
        for (li, &l) in e.values.iter().enumerate() {
            let w = ((l - lam_max) / mu).exp() / z;
            if w < 1e-15 {
                continue;
            }
            let v = e.vectors.column(li);
            for (k, fk) in &b.coeffs {
                grad[*k] += w * (v.transpose() * fk * v)[(0, 0)];
            }
        }
    }
    Ok((phi, grad, lam_max))
}

/// Minimize the max eigenvalue of the pencil until it drops below
/// `-margin`. Deterministic given `seed`, which only perturbs the start.
pub fn minimize_lambda_max(
    pencil: &AffineMatrixPencil,
    margin: f64,
    budget: usize,
    seed: u64,
) -> Result<FeasibilityResult> {
    if margin < 0.0 {
        return Err(Error::Spec("margin must be >= 0".into()));
    }
    // analytically detectable infeasibility: a constant block that is
    // already above the margin no matter what
    for b in &pencil.blocks {
        if b.is_constant() {
            let lam = b.eval(&DVector::zeros(pencil.var_count)).symmetric_eigenvalues().max();
            if lam > -margin {
                return Ok(FeasibilityResult {
                    status: FeasibilityStatus::InfeasibleCertifiedNone,
                    theta: DVector::zeros(pencil.var_count),
                    achieved_lambda_max: lam,
                    iterations: 0,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = pencil
        .initial
        .clone()
        .unwrap_or_else(|| DVector::zeros(pencil.var_count));
    for v in theta.iter_mut() {
        *v += rng.gen_range(-1e-9..1e-9);
    }

    let mut iterations = 0usize;
    let lam0 = pencil.lambda_max(&theta)?;
    if lam0 <= -margin {
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::Feasible,
            theta,
            achieved_lambda_max: lam0,
            iterations,
        });
    }
    if pencil.var_count == 0 {
        return Ok(FeasibilityResult {
            status: FeasibilityStatus::Inconclusive,
            theta,
            achieved_lambda_max: lam0,
            iterations,
        });
    }

    // warm starts sit just above feasibility; scaling the smoothing to
    // the actual violation keeps the first stages from being wasted on
    // an over-smoothed surrogate
    let scale = lam0.abs().max(1e-3);
    let schedule = [1.0, 0.1, 0.01, 1e-3];
    let stage_budget = (budget / schedule.len()).max(1);
    let mut best_theta = theta.clone();
    let mut best_lam = lam0;

    'outer: for (stage, mult) in schedule.into_iter().enumerate() {
        let mu = mult * scale;
        let last_stage = stage == schedule.len() - 1;
        let (mut phi, mut grad, mut lam) = smoothed_value_grad(pencil, &theta, mu)?;
        let mut step = 1.0 / (1.0 + grad.norm());
        let mut prev = theta.clone();
        let mut momentum_on = true;
        for it in 0..stage_budget {
            iterations += 1;
            if lam < best_lam {
                best_lam = lam;
                best_theta = theta.clone();
            }
            if lam <= -margin {
                break 'outer;
            }
            // once the violation is below the smoothing width the
            // surrogate can't resolve it; move to the finer stage
            if !last_stage && lam <= 0.3 * mu {
                break;
            }
            // Nesterov-style extrapolation with restart on failure
            let beta = if momentum_on && it > 0 { 0.8 } else { 0.0 };
            let y = &theta + (&theta - &prev) * beta;
            let (phi_y, grad_y, _) = if beta > 0.0 {
                smoothed_value_grad(pencil, &y, mu)?
            } else {
                (phi, grad.clone(), lam)
            };
            let gnorm2 = grad_y.norm_squared();
            if gnorm2 < 1e-24 {
                break;
            }
            // backtracking line search on the smoothed objective;
            // value-only probes, gradient computed once on acceptance
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &y - &grad_y * step;
                let (phi_c, lam_c) = smoothed_value(pencil, &cand, mu)?;
                if phi_c <= phi_y - 0.25 * step * gnorm2 {
                    prev = theta;
                    theta = cand;
                    phi = phi_c;
                    lam = lam_c;
                    if lam <= -margin {
                        best_theta = theta.clone();
                        break 'outer;
                    }
                    let (_, g, _) = smoothed_value_grad(pencil, &theta, mu)?;
                    grad = g;
                    step *= 1.5;
                    accepted = true;
                    momentum_on = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                if momentum_on {
                    momentum_on = false;
                    prev = theta.clone();
                    let (p, g, l) = smoothed_value_grad(pencil, &theta, mu)?;
                    phi = p;
                    grad = g;
                    lam = l;
                } else {
                    break;
                }
            }
        }
    }

    // never trust the optimizer: re-verify with a fresh eigensolve
    let lam_final = pencil.lambda_max(&best_theta)?;
    let status = if lam_final <= -margin {
        FeasibilityStatus::Feasible
    } else {
        FeasibilityStatus::Inconclusive
    };
    Ok(FeasibilityResult {
        status,
        theta: best_theta,
        achieved_lambda_max: lam_final,
        iterations,
    })
}

/// Bisection on the objective variable's level: at each level the variable
/// is substituted and a feasibility solve runs. Returns the smallest level
/// found feasible (within `tolerance`) and the verified witness at it.
pub fn bisect_objective(
    pencil: &AffineMatrixPencil,
    tolerance: f64,
    budget: usize,
    seed: u64,
) -> Result<(f64, FeasibilityResult)> {
    let var = pencil
        .objective_var
        .ok_or_else(|| Error::Spec("pencil has no objective variable".into()))?;
    let mut warm = pencil.initial.clone();

    let solve_at = |t: f64, warm: &mut Option<DVector<f64>>| -> Result<FeasibilityResult> {
        let mut sub = pencil.substitute(var, t);
        sub.initial = warm.clone();
        let mut res = minimize_lambda_max(&sub, 0.0, budget, seed)?;
        if res.status == FeasibilityStatus::Feasible {
            *warm = Some(res.theta.clone());
        }
        res.theta[var] = t;
        Ok(res)
    };

    // find a feasible upper bound by doubling
    let mut hi = 1.0;
    let mut hi_res = None;
    for _ in 0..60 {
        let res = solve_at(hi, &mut warm)?;
        if res.status == FeasibilityStatus::Feasible {
            hi_res = Some(res);
            break;
        }
        hi *= 2.0;
    }
    let Some(mut hi_res) = hi_res else {
        return Ok((
            f64::INFINITY,
            FeasibilityResult {
                status: FeasibilityStatus::Inconclusive,
                theta: DVector::zeros(pencil.var_count),
                achieved_lambda_max: f64::INFINITY,
                iterations: 0,
            },
        ));
    };
    let mut hi = hi_res.theta[var];

    // find an infeasible lower bound, walking down through zero
    let mut lo = hi;
    let mut lo_found = false;
    for _ in 0..60 {
        lo = if lo > tolerance {
            lo / 2.0
        } else if lo > 0.0 {
            0.0
        } else if lo == 0.0 {
            -1.0
        } else {
            lo * 2.0
        };
        let res = solve_at(lo, &mut warm)?;
        if res.status == FeasibilityStatus::Feasible {
            hi = lo;
            hi_res = res;
            if hi <= -1e18 {
                break;
            }
        } else {
            lo_found = true;
            break;
        }
    }
    if !lo_found {
        // objective keeps being feasible arbitrarily far down
        return Ok((hi, hi_res));
    }

    while hi - lo > tolerance * hi.abs().max(1.0) {
        let mid = 0.5 * (hi + lo);
        let res = solve_at(mid, &mut warm)?;
        if res.status == FeasibilityStatus::Feasible {
            hi = mid;
            hi_res = res;
        } else {
            lo = mid;
        }
    }
    Ok((hi, hi_res))
}

/// Seam for swapping in an external conic solver.
pub trait ConeSolver {
    fn minimize_lambda_max(
        &self,
        pencil: &AffineMatrixPencil,
        margin: f64,
        budget: usize,
        seed: u64,
    ) -> Result<FeasibilityResult>;
}

/// The in-tree smoothed spectral method.
pub struct SpectralSolver;

impl ConeSolver for SpectralSolver {
    fn minimize_lambda_max(
        &self,
        pencil: &AffineMatrixPencil,
        margin: f64,
        budget: usize,
        seed: u64,
    ) -> Result<FeasibilityResult> {
        minimize_lambda_max(pencil, margin, budget, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_linear_pencil_is_feasible() {
        // F(theta) = theta - 1, margin 0.5
        let block = PencilBlock::new(mat1(-1.0), vec![(0, mat1(1.0))]).unwrap();
        let pencil = AffineMatrixPencil::new(vec![block], 1).unwrap();
        let res = minimize_lambda_max(&pencil, 0.5, 1000, 1).unwrap();
        assert_eq!(res.status, FeasibilityStatus::Feasible);
        assert!(res.achieved_lambda_max <= -0.5);
    }

    #[test]
    fn constant_positive_block_is_certified_infeasible() {
        let block = PencilBlock::new(mat1(1.0), vec![]).unwrap();
        let pencil = AffineMatrixPencil::new(vec![block], 0).unwrap();
        let res = minimize_lambda_max(&pencil, 0.0, 100, 1).unwrap();
        assert_eq!(res.status, FeasibilityStatus::InfeasibleCertifiedNone);
    }

    #[test]
    fn feasible_verdicts_are_reverified() {
        let blocks = vec![
            PencilBlock::new(
                DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.2, -1.0]),
                vec![(0, DMatrix::identity(2, 2))],
            )
            .unwrap(),
            PencilBlock::new(mat1(-2.0), vec![(1, mat1(1.0))]).unwrap(),
        ];
        let pencil = AffineMatrixPencil::new(blocks, 2).unwrap();
        let res = minimize_lambda_max(&pencil, 1e-3, 2000, 3).unwrap();
        assert_eq!(res.status, FeasibilityStatus::Feasible);
        // independent recomputation
        let lam = pencil.lambda_max(&res.theta).unwrap();
        assert!(lam <= -1e-3 + 1e-9, "lambda_max {lam}");
    }

    #[test]
    fn rejects_nonsymmetric_blocks() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(PencilBlock::new(m, vec![]).is_err());
    }

    #[test]
    fn bisect_scalar_threshold() {
        // minimize t s.t. 1 - t <= 0  ->  t* = 1
        let block = PencilBlock::new(mat1(1.0), vec![(0, mat1(-1.0))]).unwrap();
        let mut pencil = AffineMatrixPencil::new(vec![block], 1).unwrap();
        pencil.objective_var = Some(0);
        let (t, res) = bisect_objective(&pencil, 1e-6, 500, 1).unwrap();
        assert!((t - 1.0).abs() < 1e-5, "t* = {t}");
        assert_eq!(res.status, FeasibilityStatus::Feasible);
    }

    #[test]
    fn bisect_block_diagonal_lambda_max() {
        // minimize t s.t. diag(0.1 I2, 0.4 I2) - t I <= 0  ->  t* = 0.4
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.1, 0.4, 0.4]));
        let block = PencilBlock::new(g, vec![(0, -DMatrix::identity(4, 4))]).unwrap();
        let mut pencil = AffineMatrixPencil::new(vec![block], 1).unwrap();
        pencil.objective_var = Some(0);
        let (t, _) = bisect_objective(&pencil, 1e-8, 500, 1).unwrap();
        assert!((t - 0.4).abs() < 1e-6, "t* = {t}");
    }

    #[test]
    fn bisect_infeasible_pencil_is_inconclusive() {
        // constant positive block independent of t
        let blocks = vec![
            PencilBlock::new(mat1(1.0), vec![]).unwrap(),
            PencilBlock::new(mat1(0.0), vec![(0, mat1(-1.0))]).unwrap(),
        ];
        let mut pencil = AffineMatrixPencil::new(blocks, 1).unwrap();
        pencil.objective_var = Some(0);
        let (t, res) = bisect_objective(&pencil, 1e-6, 100, 1).unwrap();
        assert!(t.is_infinite());
        assert_eq!(res.status, FeasibilityStatus::Inconclusive);
    }

    #[test]
    fn determinism_same_seed_same_result() {
        let blocks = vec![PencilBlock::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]),
            vec![
                (0, DMatrix::identity(2, 2)),
                (1, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])),
            ],
        )
        .unwrap()];
        let pencil = AffineMatrixPencil::new(blocks, 2).unwrap();
        let a = minimize_lambda_max(&pencil, 1e-6, 500, 42).unwrap();
        let b = minimize_lambda_max(&pencil, 1e-6, 500, 42).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.achieved_lambda_max, b.achieved_lambda_max);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn convexity_regression_beats_random_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for trial in 0..20 {
            let dim = rng.gen_range(2..=6);
            let vars = rng.gen_range(1..=8);
            let sym = |rng: &mut rand_chacha::ChaCha8Rng| {
                let m = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
                (&m + m.transpose()) * 0.5
            };
            // bounded below: add a strongly convex-ish structure via +theta_k^2 is not
            // affine, so instead penalize by identity coefficients of mixed sign which
            // keeps lambda_max coercive in most draws; unbounded draws still compare fine.
            let blocks = vec![
                PencilBlock::new(sym(&mut rng), (0..vars).map(|k| (k, sym(&mut rng))).collect())
                    .unwrap(),
                PencilBlock::new(
                    DMatrix::identity(dim, dim) * -5.0,
                    (0..vars)
                        .map(|k| (k, DMatrix::identity(dim, dim) * if k % 2 == 0 { 1.0 } else { -1.0 }))
                        .collect(),
                )
                .unwrap(),
            ];
            let pencil = AffineMatrixPencil::new(blocks, vars).unwrap();
            let res = minimize_lambda_max(&pencil, f64::INFINITY.min(1e12), 2000, trial).unwrap_or_else(
                |e| panic!("solver failed on trial {trial}: {e}"),
            );
            let mut best_random = f64::INFINITY;
            for _ in 0..1000 {
                let theta = DVector::from_fn(vars, |_, _| rng.gen_range(-2.0..2.0));
                best_random = best_random.min(pencil.lambda_max(&theta).unwrap());
            }
            let achieved = pencil.lambda_max(&res.theta).unwrap();
            assert!(
                achieved <= best_random + 1e-6,
                "trial {trial}: achieved {achieved} vs random {best_random}"
            );
        }
    }
}
