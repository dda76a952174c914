//! Train of M carriages as a mass-spring-damper chain with cubic damping.
//!
//! Each carriage is a subsystem with state (position, velocity), coupled to
//! its forward and rear carriage; the first and last carriage have a single
//! coupling. Only the position is measured, with additive noise. The first
//! carriage receives a traction input F; the same template is assigned to
//! the last carriage (whose input stays 0), since F drops out of every
//! Jacobian and thus out of the verification.

use super::{DomainBox, Dynamics, JacobianBundle, NetworkSpec, SubsystemClass};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const BOUNDARY_CLASS: &str = "carriage-boundary";
pub const INTERIOR_CLASS: &str = "carriage-interior";

/// Physical parameters and operating ranges of the train model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    /// time step (s)
    pub delta: f64,
    /// carriage mass (kg)
    pub m_mass: f64,
    /// spring constant (N/m)
    pub k_spring: f64,
    /// cubic damping coefficient (N s^3 / m^3)
    pub d_damp: f64,
    /// symmetric bound on each carriage velocity
    pub velocity_bound: f64,
    /// symmetric bound on the traction input F
    pub force_bound: f64,
    /// symmetric bound on each carriage position
    pub position_bound: f64,
    /// symmetric bound on each disturbance component
    pub disturbance_bound: f64,
}

impl Default for TrainParams {
    /// Defaults tuned so that the train chain certifies the documented
    /// small-gain pattern (trajectory form passes at M=3 and fails from
    /// M=4 on, Lyapunov form passes for every M); see the README.
    fn default() -> Self {
        Self {
            delta: 0.1,
            m_mass: 1.0,
            k_spring: 0.15,
            d_damp: 0.02,
            velocity_bound: 0.3,
            force_bound: 1.0,
            position_bound: 5.0,
            disturbance_bound: 0.1,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("delta", self.delta),
            ("m_mass", self.m_mass),
            ("k_spring", self.k_spring),
            ("d_damp", self.d_damp),
            ("velocity_bound", self.velocity_bound),
            ("force_bound", self.force_bound),
            ("position_bound", self.position_bound),
            ("disturbance_bound", self.disturbance_bound),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Spec(format!("train parameter {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Shared position/velocity update pieces. `z` holds (pos, vel) per neighbor.
fn carriage_step(
    p: &TrainParams,
    x: &DVector<f64>,
    force: f64,
    w: &DVector<f64>,
    z: &DVector<f64>,
) -> DVector<f64> {
    let (pos, vel) = (x[0], x[1]);
    let mut accel = force;
    for nb in 0..z.len() / 2 {
        let (zp, zv) = (z[2 * nb], z[2 * nb + 1]);
        accel += p.k_spring * (zp - pos) + p.d_damp * (zv - vel).powi(3);
    }
    DVector::from_vec(vec![
        pos + p.delta * vel + w[0],
        vel + p.delta / p.m_mass * accel + w[1],
    ])
}

fn carriage_jacobians(p: &TrainParams, x: &DVector<f64>, z: &DVector<f64>) -> JacobianBundle {
    let n_nb = z.len() / 2;
    let vel = x[1];
    let dk = p.delta * p.k_spring / p.m_mass;
    // d accel / d vel of each cubic damper
    let dampers: Vec<f64> = (0..n_nb)
        .map(|nb| 3.0 * p.delta * p.d_damp / p.m_mass * (z[2 * nb + 1] - vel).powi(2))
        .collect();
    let mut a = DMatrix::from_row_slice(2, 2, &[1.0, p.delta, 0.0, 1.0]);
    a[(1, 0)] = -(n_nb as f64) * dk;
    a[(1, 1)] = 1.0 - dampers.iter().sum::<f64>();
    let mut e = DMatrix::zeros(2, z.len());
    for nb in 0..n_nb {
        e[(1, 2 * nb)] = dk;
        e[(1, 2 * nb + 1)] = dampers[nb];
    }
    let mut b = DMatrix::zeros(2, 3);
    b[(0, 0)] = 1.0;
    b[(1, 1)] = 1.0;
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let mut d = DMatrix::zeros(1, 3);
    d[(0, 2)] = 1.0;
    let f = DMatrix::zeros(1, z.len());
    JacobianBundle { a, b, c, d, e, f }
}

struct BoundaryCarriage {
    params: TrainParams,
}

impl Dynamics for BoundaryCarriage {
    fn f(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>)
        -> DVector<f64> {
        carriage_step(&self.params, x, u[0], w, z)
    }

    fn h(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>, _z: &DVector<f64>)
        -> DVector<f64> {
        DVector::from_vec(vec![x[0] + w[2]])
    }

    fn jacobians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _w: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Option<JacobianBundle> {
        Some(carriage_jacobians(&self.params, x, z))
    }
}

struct InteriorCarriage {
    params: TrainParams,
}

impl Dynamics for InteriorCarriage {
    fn f(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>, z: &DVector<f64>)
        -> DVector<f64> {
        carriage_step(&self.params, x, 0.0, w, z)
    }

    fn h(&self, x: &DVector<f64>, _u: &DVector<f64>, w: &DVector<f64>, _z: &DVector<f64>)
        -> DVector<f64> {
        DVector::from_vec(vec![x[0] + w[2]])
    }

    fn jacobians(
        &self,
        x: &DVector<f64>,
        _u: &DVector<f64>,
        _w: &DVector<f64>,
        z: &DVector<f64>,
    ) -> Option<JacobianBundle> {
        Some(carriage_jacobians(&self.params, x, z))
    }
}

fn carriage_domain(p: &TrainParams, n_nb: usize, with_input: bool) -> DomainBox {
    let mut lower = vec![-p.position_bound, -p.velocity_bound];
    let mut upper = vec![p.position_bound, p.velocity_bound];
    if with_input {
        lower.push(-p.force_bound);
        upper.push(p.force_bound);
    }
    for _ in 0..3 {
        lower.push(-p.disturbance_bound);
        upper.push(p.disturbance_bound);
    }
    for _ in 0..n_nb {
        lower.extend([-p.position_bound, -p.velocity_bound]);
        upper.extend([p.position_bound, p.velocity_bound]);
    }
    DomainBox::new(lower, upper).expect("carriage box is well formed")
}

/// The two carriage templates: boundary (one coupling, traction input)
/// and interior (two couplings). Exactly these two classes are used for
/// every M, so only two LMI verifications are ever needed.
pub fn train_classes(params: &TrainParams) -> Result<Vec<SubsystemClass>> {
    params.validate()?;
    // A and E depend only on velocity differences; positions, inputs and
    // disturbances never enter the Jacobians.
    let boundary = SubsystemClass {
        name: BOUNDARY_CLASS.into(),
        n: 2,
        m: 1,
        q: 3,
        p: 1,
        s: 2,
        dynamics: Arc::new(BoundaryCarriage {
            params: params.clone(),
        }),
        domain: carriage_domain(params, 1, true),
        jacobian_deps: vec![1, 7],
    };
    let interior = SubsystemClass {
        name: INTERIOR_CLASS.into(),
        n: 2,
        m: 0,
        q: 3,
        p: 1,
        s: 4,
        dynamics: Arc::new(InteriorCarriage {
            params: params.clone(),
        }),
        domain: carriage_domain(params, 2, false),
        jacobian_deps: vec![1, 6, 8],
    };
    Ok(vec![boundary, interior])
}

/// Chain of M carriages; nodes 0 and M-1 use the boundary class, all
/// others the interior class. Interior z order is (rear, forward).
pub fn make_train_network(m: usize, params: &TrainParams) -> Result<NetworkSpec> {
    if m < 2 {
        return Err(Error::Spec(format!("train needs at least 2 carriages, got {m}")));
    }
    let classes = train_classes(params)?;
    let assignment: Vec<usize> = (0..m)
        .map(|i| if i == 0 || i == m - 1 { 0 } else { 1 })
        .collect();
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            if i == 0 {
                vec![1]
            } else if i == m - 1 {
                vec![m - 2]
            } else {
                vec![i - 1, i + 1]
            }
        })
        .collect();
    NetworkSpec::new(classes, assignment, neighbors)
}
