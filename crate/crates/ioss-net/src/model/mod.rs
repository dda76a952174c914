//! Networks of coupled discrete-time subsystems: dynamics, outputs,
//! Jacobians, coupling topology, compact operating domains and grids.

mod train;

pub use train::{make_train_network, train_classes, TrainParams, BOUNDARY_CLASS, INTERIOR_CLASS};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Axis-aligned compact operating set.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi {
                return Err(Error::Spec(format!(
                    "box dimension {k}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(Self {
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, point: &DVector<f64>) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .enumerate()
                .all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }

    /// Sub-box over the selected dimensions.
    pub fn project(&self, dims: &[usize]) -> DomainBox {
        DomainBox {
            lower: DVector::from_iterator(dims.len(), dims.iter().map(|&k| self.lower[k])),
            upper: DVector::from_iterator(dims.len(), dims.iter().map(|&k| self.upper[k])),
        }
    }
}

/// Per-dimension resolution for gridding a box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    points_per_dim: Vec<usize>,
}

impl GridSpec {
    pub fn new(points_per_dim: Vec<usize>) -> Result<Self> {
        if points_per_dim.iter().any(|&p| p == 0) {
            return Err(Error::Spec("grid entries must be >= 1".into()));
        }
        Ok(Self { points_per_dim })
    }

    pub fn uniform(dims: usize, points: usize) -> Result<Self> {
        Self::new(vec![points; dims])
    }

    pub fn len(&self) -> usize {
        self.points_per_dim.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points_per_dim.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.points_per_dim.iter().product()
    }

    pub fn points_per_dim(&self) -> &[usize] {
        &self.points_per_dim
    }
}

/// Uniform grid over `domain` including both endpoints per dimension;
/// single-point dimensions collapse to the box midpoint. Ordering is
/// lexicographic by dimension index, last dimension fastest.
pub fn grid_points(domain: &DomainBox, grid: &GridSpec) -> Result<Vec<DVector<f64>>> {
    if grid.len() != domain.dim() {
        return Err(Error::Dimension(format!(
            "grid has {} dims, box has {}",
            grid.len(),
            domain.dim()
        )));
    }
    let axes: Vec<Vec<f64>> = (0..domain.dim())
        .map(|k| {
            let p = grid.points_per_dim[k];
            if p == 1 {
                vec![0.5 * (domain.lower[k] + domain.upper[k])]
            } else {
                (0..p)
                    .map(|j| {
                        let t = j as f64 / (p - 1) as f64;
                        domain.lower[k] + t * (domain.upper[k] - domain.lower[k])
                    })
                    .collect()
            }
        })
        .collect();

    let total = grid.total_points();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; domain.dim()];
    for _ in 0..total {
        out.push(DVector::from_iterator(
            domain.dim(),
            idx.iter().enumerate().map(|(k, &j)| axes[k][j]),
        ));
        // odometer increment, last dimension fastest
        for k in (0..domain.dim()).rev() {
            idx[k] += 1;
            if idx[k] < grid.points_per_dim[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(out)
}

/// Jacobians of one subsystem at a point, per the blocks entering the LMI.
#[derive(Debug, Clone)]
pub struct JacobianBundle {
    /// d f / d x,  n x n
    pub a: DMatrix<f64>,
    /// d f / d w,  n x q
    pub b: DMatrix<f64>,
    /// d h / d x,  p x n
    pub c: DMatrix<f64>,
    /// d h / d w,  p x q
    pub d: DMatrix<f64>,
    /// d f / d z,  n x s
    pub e: DMatrix<f64>,
    /// d h / d z,  p x s
    pub f: DMatrix<f64>,
}

/// Dynamics/output template shared by network nodes.
///
/// All maps take the subsystem state `x`, known input `u`, disturbance `w`
/// and the stacked neighbor states `z`.
pub trait Dynamics: Send + Sync {
    fn f(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>)
        -> DVector<f64>;
    fn h(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>)
        -> DVector<f64>;

    /// Analytic Jacobians; `None` falls back to central finite differences.
    fn jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _w: &DVector<f64>,
        _z: &DVector<f64>,
    ) -> Option<JacobianBundle> {
        None
    }
}

/// One dynamics/output pair with dimensions and operating domain.
/// Instances of a class are the network's nodes.
#[derive(Clone)]
pub struct SubsystemClass {
    pub name: String,
    /// state dimension
    pub n: usize,
    /// input dimension
    pub m: usize,
    /// disturbance dimension
    pub q: usize,
    /// output dimension
    pub p: usize,
    /// coupling-input dimension
    pub s: usize,
    pub dynamics: Arc<dyn Dynamics>,
    /// box over the concatenated (x, u, w, z) space
    pub domain: DomainBox,
    /// indices into (x, u, w, z) the Jacobians actually depend on;
    /// the verification grid ranges only over these, all other
    /// coordinates are fixed at the box midpoint
    pub jacobian_deps: Vec<usize>,
}

impl std::fmt::Debug for SubsystemClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubsystemClass")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("q", &self.q)
            .field("p", &self.p)
            .field("s", &self.s)
            .finish()
    }
}

impl SubsystemClass {
    pub fn point_dim(&self) -> usize {
        self.n + self.m + self.q + self.s
    }

    fn split<'a>(
        &self,
        point: &'a DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let x = point.rows(0, self.n).into_owned();
        let u = point.rows(self.n, self.m).into_owned();
        let w = point.rows(self.n + self.m, self.q).into_owned();
        let z = point.rows(self.n + self.m + self.q, self.s).into_owned();
        (x, u, w, z)
    }

    /// Jacobians at a concatenated (x, u, w, z) point, analytic when the
    /// dynamics provide them, central finite differences otherwise.
    pub fn jacobians_at(&self, point: &DVector<f64>) -> JacobianBundle {
        let (x, u, w, z) = self.split(point);
        if let Some(j) = self.dynamics.jacobians(&x, &u, &w, &z) {
            return j;
        }
        self.fd_jacobians(&x, &u, &w, &z)
    }

    /// Central finite differences, step 1e-6 * (1 + |coordinate|).
    pub fn fd_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
        z: &DVector<f64>,
    ) -> JacobianBundle {
        let dyn_ = &self.dynamics;
        let diff = |arg: usize, col: usize, out_f: bool| -> DVector<f64> {
            let (mut xp, mut wp, mut zp) = (x.clone(), w.clone(), z.clone());
            let (mut xm, mut wm, mut zm) = (x.clone(), w.clone(), z.clone());
            let base = match arg {
                0 => x[col],
                1 => w[col],
                _ => z[col],
            };
            let h = 1e-6 * (1.0 + base.abs());
            match arg {
                0 => {
                    xp[col] += h;
                    xm[col] -= h;
                }
                1 => {
                    wp[col] += h;
                    wm[col] -= h;
                }
                _ => {
                    zp[col] += h;
                    zm[col] -= h;
                }
            }
            let (fp, fm) = if out_f {
                (dyn_.f(&xp, u, &wp, &zp), dyn_.f(&xm, u, &wm, &zm))
            } else {
                (dyn_.h(&xp, u, &wp, &zp), dyn_.h(&xm, u, &wm, &zm))
            };
            (fp - fm) / (2.0 * h)
        };
        let build = |arg: usize, cols: usize, rows: usize, out_f: bool| -> DMatrix<f64> {
            let mut m = DMatrix::zeros(rows, cols);
            for col in 0..cols {
                m.set_column(col, &diff(arg, col, out_f));
            }
            m
        };
        JacobianBundle {
            a: build(0, self.n, self.n, true),
            b: build(1, self.q, self.n, true),
            c: build(0, self.n, self.p, false),
            d: build(1, self.q, self.p, false),
            e: build(2, self.s, self.n, true),
            f: build(2, self.s, self.p, false),
        }
    }

    /// Grid over the Jacobian-dependent dimensions only; returns full
    /// (x, u, w, z) points with the remaining coordinates at midpoints.
    pub fn verification_grid(&self, grid: &GridSpec) -> Result<Vec<DVector<f64>>> {
        let sub = self.domain.project(&self.jacobian_deps);
        let sub_points = grid_points(&sub, grid)?;
        let mid = self.domain.midpoint();
        Ok(sub_points
            .into_iter()
            .map(|sp| {
                let mut full = mid.clone();
                for (pos, &k) in self.jacobian_deps.iter().enumerate() {
                    full[k] = sp[pos];
                }
                full
            })
            .collect())
    }
}

/// Linear time-invariant subsystem template
/// x+ = A x + B w + E z,  y = C x + D w + F z (input-free).
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f_out: DMatrix<f64>,
}

impl Dynamics for LinearDynamics {
    fn f(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>)
        -> DVector<f64> {
        &self.a * x + &self.b * w + &self.e * z
    }

    fn h(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>)
        -> DVector<f64> {
        &self.c * x + &self.d * w + &self.f_out * z
    }

    fn jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
        _w: &DVector<f64>,
        _z: &DVector<f64>,
    ) -> Option<JacobianBundle> {
        Some(JacobianBundle {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            e: self.e.clone(),
            f: self.f_out.clone(),
        })
    }
}

/// Scalar decoupled linear class x+ = a x + w, y = c x; handy as an
/// analytically tractable verification target.
pub fn scalar_linear_class(a: f64, c: f64, bound: f64) -> SubsystemClass {
    SubsystemClass {
        name: format!("scalar-linear-a{a}-c{c}"),
        n: 1,
        m: 0,
        q: 1,
        p: 1,
        s: 0,
        dynamics: Arc::new(LinearDynamics {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, c),
            d: DMatrix::zeros(1, 1),
            e: DMatrix::zeros(1, 0),
            f_out: DMatrix::zeros(1, 0),
        }),
        domain: DomainBox::new(vec![-bound, -bound], vec![bound, bound]).unwrap(),
        jacobian_deps: vec![],
    }
}

/// Coupled network: class templates, node assignment and topology.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub classes: Vec<SubsystemClass>,
    /// node index -> class index
    pub assignment: Vec<usize>,
    /// ordered neighbor lists (0-based); z of node i is the concatenation
    /// of neighbor states in this order
    pub neighbors: Vec<Vec<usize>>,
}

impl NetworkSpec {
    pub fn new(
        classes: Vec<SubsystemClass>,
        assignment: Vec<usize>,
        neighbors: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let m = assignment.len();
        if neighbors.len() != m {
            return Err(Error::Spec(format!(
                "{} neighbor lists for {} nodes",
                neighbors.len(),
                m
            )));
        }
        for (i, ci) in assignment.iter().enumerate() {
            let class = classes
                .get(*ci)
                .ok_or_else(|| Error::Spec(format!("node {i}: unknown class index {ci}")))?;
            let nbrs = &neighbors[i];
            if nbrs.contains(&i) {
                return Err(Error::Spec(format!("node {i} is its own neighbor")));
            }
            let mut s_sum = 0;
            for &j in nbrs {
                let cj = *assignment
                    .get(j)
                    .ok_or_else(|| Error::Spec(format!("node {i}: neighbor {j} out of range")))?;
                s_sum += classes[cj].n;
            }
            if s_sum != class.s {
                return Err(Error::Spec(format!(
                    "node {i}: class '{}' expects s={} but neighbors supply {}",
                    class.name, class.s, s_sum
                )));
            }
        }
        Ok(Self {
            classes,
            assignment,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn class_of(&self, node: usize) -> &SubsystemClass {
        &self.classes[self.assignment[node]]
    }

    fn offsets(&self, dim: impl Fn(&SubsystemClass) -> usize) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.node_count() + 1);
        let mut acc = 0;
        for i in 0..self.node_count() {
            off.push(acc);
            acc += dim(self.class_of(i));
        }
        off.push(acc);
        off
    }

    pub fn state_offsets(&self) -> Vec<usize> {
        self.offsets(|c| c.n)
    }

    pub fn input_offsets(&self) -> Vec<usize> {
        self.offsets(|c| c.m)
    }

    pub fn disturbance_offsets(&self) -> Vec<usize> {
        self.offsets(|c| c.q)
    }

    pub fn output_offsets(&self) -> Vec<usize> {
        self.offsets(|c| c.p)
    }

    pub fn total_state_dim(&self) -> usize {
        *self.state_offsets().last().unwrap()
    }

    pub fn total_input_dim(&self) -> usize {
        *self.input_offsets().last().unwrap()
    }

    pub fn total_disturbance_dim(&self) -> usize {
        *self.disturbance_offsets().last().unwrap()
    }

    pub fn total_output_dim(&self) -> usize {
        *self.output_offsets().last().unwrap()
    }

    /// Gather z of node i from the stacked state.
    pub fn gather_z(&self, node: usize, x: &DVector<f64>) -> DVector<f64> {
        let off = self.state_offsets();
        let class = self.class_of(node);
        let mut z = DVector::zeros(class.s);
        let mut pos = 0;
        for &j in &self.neighbors[node] {
            let nj = self.class_of(j).n;
            z.rows_mut(pos, nj).copy_from(&x.rows(off[j], nj));
            pos += nj;
        }
        z
    }

    /// Per-node (x, u, w, z) view of stacked vectors.
    pub fn node_point(
        &self,
        node: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let (xo, uo, wo) = (
            self.state_offsets(),
            self.input_offsets(),
            self.disturbance_offsets(),
        );
        let c = self.class_of(node);
        (
            x.rows(xo[node], c.n).into_owned(),
            u.rows(uo[node], c.m).into_owned(),
            w.rows(wo[node], c.q).into_owned(),
            self.gather_z(node, x),
        )
    }

    /// Whether node i's full (x, u, w, z) point lies in its class domain.
    pub fn node_in_domain(
        &self,
        node: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> bool {
        let (xi, ui, wi, zi) = self.node_point(node, x, u, w);
        let mut point = DVector::zeros(self.class_of(node).point_dim());
        let c = self.class_of(node);
        point.rows_mut(0, c.n).copy_from(&xi);
        point.rows_mut(c.n, c.m).copy_from(&ui);
        point.rows_mut(c.n + c.m, c.q).copy_from(&wi);
        point.rows_mut(c.n + c.m + c.q, c.s).copy_from(&zi);
        c.domain.contains(&point)
    }
}

/// One step of the stacked network dynamics and output maps.
pub fn step_network(
    spec: &NetworkSpec,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.len() != spec.total_state_dim()
        || u.len() != spec.total_input_dim()
        || w.len() != spec.total_disturbance_dim()
    {
        return Err(Error::Dimension(format!(
            "stacked dims (x,u,w)=({},{},{}) expected ({},{},{})",
            x.len(),
            u.len(),
            w.len(),
            spec.total_state_dim(),
            spec.total_input_dim(),
            spec.total_disturbance_dim()
        )));
    }
    let (xo, yo) = (spec.state_offsets(), spec.output_offsets());
    let mut next = DVector::zeros(spec.total_state_dim());
    let mut y = DVector::zeros(spec.total_output_dim());
    for i in 0..spec.node_count() {
        let c = spec.class_of(i);
        let (xi, ui, wi, zi) = spec.node_point(i, x, u, w);
        let fi = c.dynamics.f(&xi, &ui, &wi, &zi);
        let hi = c.dynamics.h(&xi, &ui, &wi, &zi);
        if fi.len() != c.n || hi.len() != c.p {
            return Err(Error::Dimension(format!(
                "node {i}: class '{}' returned f of len {} (n={}) / h of len {} (p={})",
                c.name,
                fi.len(),
                c.n,
                hi.len(),
                c.p
            )));
        }
        if fi.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: i,
                context: "network step".into(),
            });
        }
        next.rows_mut(xo[i], c.n).copy_from(&fi);
        y.rows_mut(yo[i], c.p).copy_from(&hi);
    }
    Ok((next, y))
}
