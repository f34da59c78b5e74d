//! Levenberg-Marquardt on the pose manifold with the camera states
//! eliminated by a block Schur complement.
//!
//! Cameras only ever connect to the base and to objects, so their 6x6 blocks
//! are inverted independently and the reduced system over `{B, O_1..k}` is
//! solved densely.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
#[allow(unused_imports)] // std, when linked, provides these as inherent methods
use num_traits::Float;

use super::{FactorGraph, GraphError, ResidualBlock, StateKey, StateVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub relative_cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub initial_lambda: f64,
    /// Huber threshold on the whitened residual norm of each factor.
    pub huber: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_cost_tolerance: 1e-9,
            gradient_tolerance: 1e-10,
            initial_lambda: 1e-3,
            huber: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    RelativeCostChange,
    GradientNorm,
    StepTooSmall,
    MaxIterations,
    LambdaOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    /// Cost before the first step, then after every accepted step.
    pub costs: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

impl OptimizeReport {
    pub fn initial_cost(&self) -> f64 {
        self.costs[0]
    }

    pub fn final_cost(&self) -> f64 {
        *self.costs.last().unwrap_or(&f64::NAN)
    }
}

const MAX_LAMBDA: f64 = 1e16;

#[derive(Clone, Copy)]
enum Slot {
    Reduced(usize),
    Camera(usize),
}

struct CameraBlock {
    h: Matrix6<f64>,
    g: Vector6<f64>,
    // camera-row, reduced-column coupling blocks
    links: Vec<(usize, Matrix6<f64>)>,
}

struct Linearization {
    hrr: DMatrix<f64>,
    gr: DVector<f64>,
    cameras: Vec<CameraBlock>,
}

impl Linearization {
    fn gradient_norm(&self) -> f64 {
        let cam = self.cameras.iter().map(|c| c.g.amax()).fold(0.0, f64::max);
        self.gr.amax().max(cam)
    }
}

fn robust_scale(cost: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(k) if cost > k * k => k / cost.sqrt(),
        _ => 1.0,
    }
}

fn robust_cost(cost: f64, huber: Option<f64>) -> f64 {
    match huber {
        Some(k) if cost > k * k => 2.0 * k * cost.sqrt() - k * k,
        _ => cost,
    }
}

impl FactorGraph {
    fn slot(&self, key: StateKey, objects: &BTreeMap<u32, usize>) -> Slot {
        match key {
            StateKey::Base => Slot::Reduced(0),
            StateKey::Object(k) => Slot::Reduced(objects[&k]),
            StateKey::Camera(t) => Slot::Camera(t),
        }
    }

    fn robust_total(&self, huber: Option<f64>) -> Result<f64, GraphError> {
        Ok(self
            .residuals()?
            .iter()
            .map(|(_, _, r)| robust_cost(r.cost(), huber))
            .sum())
    }

    fn linearize(&self, objects: &BTreeMap<u32, usize>, huber: Option<f64>) -> Result<Linearization, GraphError> {
        let nr = 6 * (1 + objects.len());
        let mut lin = Linearization {
            hrr: DMatrix::zeros(nr, nr),
            gr: DVector::zeros(nr),
            cameras: (0..self.state.cameras.len())
                .map(|_| CameraBlock {
                    h: Matrix6::zeros(),
                    g: Vector6::zeros(),
                    links: Vec::new(),
                })
                .collect(),
        };
        for (ka, kb, block) in self.residuals()? {
            let w = block.weight * robust_scale(block.cost(), huber);
            let ResidualBlock { value, jacobians, .. } = block;
            let wr = value.component_mul(&w);
            let wj: [Matrix6<f64>; 2] = [
                Matrix6::from_diagonal(&w) * jacobians[0],
                Matrix6::from_diagonal(&w) * jacobians[1],
            ];
            let keys = if ka == kb { &[ka][..] } else { &[ka, kb][..] };
            for (i, &ki) in keys.iter().enumerate() {
                let gi = jacobians[i].transpose() * wr;
                let hii = jacobians[i].transpose() * wj[i];
                match self.slot(ki, objects) {
                    Slot::Reduced(r) => {
                        let mut g = lin.gr.fixed_rows_mut::<6>(6 * r);
                        g += gi;
                        let mut h = lin.hrr.fixed_view_mut::<6, 6>(6 * r, 6 * r);
                        h += hii;
                    }
                    Slot::Camera(t) => {
                        lin.cameras[t].g += gi;
                        lin.cameras[t].h += hii;
                    }
                }
            }
            if keys.len() == 2 {
                let hab = jacobians[0].transpose() * wj[1];
                match (self.slot(ka, objects), self.slot(kb, objects)) {
                    (Slot::Reduced(r), Slot::Camera(t)) => link(&mut lin.cameras[t], r, hab.transpose()),
                    (Slot::Camera(t), Slot::Reduced(r)) => link(&mut lin.cameras[t], r, hab),
                    (Slot::Reduced(a), Slot::Reduced(b)) => {
                        let mut h = lin.hrr.fixed_view_mut::<6, 6>(6 * a, 6 * b);
                        h += hab;
                        let mut h = lin.hrr.fixed_view_mut::<6, 6>(6 * b, 6 * a);
                        h += hab.transpose();
                    }
                    (Slot::Camera(_), Slot::Camera(_)) => {
                        debug_assert!(false, "no factor connects two cameras");
                    }
                }
            }
        }
        Ok(lin)
    }

    /// Extra curvature along the unobservable spin of each symmetric object.
    /// It only shapes the step; the cost is unaffected by that direction.
    fn spin_regularizer(&self, objects: &BTreeMap<u32, usize>, lin: &Linearization) -> Vec<(usize, Matrix6<f64>)> {
        let mut out = Vec::new();
        for (&k, &r) in objects {
            if !self.object_factors.iter().any(|f| f.object == k && f.symmetric) {
                continue;
            }
            let u = self.axis_vector(k).normalize();
            let h = lin.hrr.fixed_view::<6, 6>(6 * r, 6 * r);
            let scale = h.trace() / 6.0 + 1.0;
            let mut m = Matrix6::zeros();
            m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(u * u.transpose() * scale));
            out.push((r, m));
        }
        out
    }

    fn check_rank(&self, objects: &BTreeMap<u32, usize>, lin: &Linearization, spin: &[(usize, Matrix6<f64>)]) -> Result<(), GraphError> {
        let mut bad = Vec::new();
        if self.base_prior.is_none() {
            bad.push(StateKey::Base);
        }
        for (t, c) in lin.cameras.iter().enumerate() {
            if !block_is_definite(&c.h) {
                bad.push(StateKey::Camera(t));
            }
        }
        for (&k, &r) in objects {
            let mut h: Matrix6<f64> = lin.hrr.fixed_view::<6, 6>(6 * r, 6 * r).into();
            if let Some((_, m)) = spin.iter().find(|(i, _)| *i == r) {
                h += m;
            }
            if !block_is_definite(&h) {
                bad.push(StateKey::Object(k));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GraphError::RankDeficient(bad))
        }
    }

    /// Solves the MAP problem from the current state estimate. The state is
    /// left at the best iterate found.
    pub fn optimize(&mut self, config: &SolverConfig) -> Result<OptimizeReport, GraphError> {
        if self.camera_factors.is_empty() {
            return Err(GraphError::Empty);
        }
        self.validate()?;
        let objects: BTreeMap<u32, usize> = self.state.objects.keys().enumerate().map(|(i, &k)| (k, i + 1)).collect();
        let huber = config.huber;
        let mut cost = self.robust_total(huber)?;
        let mut costs = vec![cost];
        let mut lambda = config.initial_lambda;
        let mut iterations = 0;
        let mut checked = false;

        let termination = loop {
            if cost == 0.0 {
                break Termination::RelativeCostChange;
            }
            if iterations >= config.max_iterations {
                break Termination::MaxIterations;
            }
            let lin = self.linearize(&objects, huber)?;
            let spin = self.spin_regularizer(&objects, &lin);
            if !checked {
                self.check_rank(&objects, &lin, &spin)?;
                checked = true;
            }
            if lin.gradient_norm() < config.gradient_tolerance {
                break Termination::GradientNorm;
            }

            let mut accepted = false;
            let mut stop = None;
            while iterations < config.max_iterations {
                iterations += 1;
                let Some(step) = solve_damped(&lin, &spin, lambda) else {
                    lambda *= 10.0;
                    if lambda > MAX_LAMBDA {
                        stop = Some(Termination::LambdaOverflow);
                        break;
                    }
                    continue;
                };
                if step_is_negligible(&step, &self.state) {
                    stop = Some(Termination::StepTooSmall);
                    break;
                }
                let trial = apply_step(&self.state, &objects, &step);
                let previous = core::mem::replace(&mut self.state, trial);
                match self.robust_total(huber) {
                    Ok(new_cost) if new_cost < cost => {
                        let rel = (cost - new_cost) / cost;
                        cost = new_cost;
                        costs.push(cost);
                        lambda = (lambda / 10.0).max(1e-12);
                        accepted = true;
                        if rel < config.relative_cost_tolerance {
                            stop = Some(Termination::RelativeCostChange);
                        }
                        break;
                    }
                    _ => {
                        self.state = previous;
                        lambda *= 10.0;
                        if lambda > MAX_LAMBDA {
                            stop = Some(Termination::LambdaOverflow);
                            break;
                        }
                    }
                }
            }
            if let Some(s) = stop {
                break s;
            }
            if !accepted {
                break Termination::MaxIterations;
            }
        };
        Ok(OptimizeReport {
            costs,
            iterations,
            termination,
        })
    }
}

fn link(cam: &mut CameraBlock, r: usize, h_cr: Matrix6<f64>) {
    match cam.links.iter_mut().find(|(i, _)| *i == r) {
        Some((_, h)) => *h += h_cr,
        None => cam.links.push((r, h_cr)),
    }
}

fn block_is_definite(h: &Matrix6<f64>) -> bool {
    let scale = h.diagonal().amax();
    if !(scale > 0.0) {
        return false;
    }
    // relative eigenvalue floor on the symmetric block
    let eig = h.symmetric_eigen();
    eig.eigenvalues.min() > 1e-12 * scale
}

fn damping(h: &Matrix6<f64>, i: usize) -> f64 {
    h[(i, i)].max(1e-9)
}

struct Step {
    reduced: DVector<f64>,
    cameras: Vec<Vector6<f64>>,
}

fn solve_damped(lin: &Linearization, spin: &[(usize, Matrix6<f64>)], lambda: f64) -> Option<Step> {
    let mut s = lin.hrr.clone();
    let mut rhs = -lin.gr.clone();
    let nr = s.nrows();
    for i in 0..nr {
        s[(i, i)] += lambda * lin.hrr[(i, i)].max(1e-9);
    }
    for (r, m) in spin {
        let mut b = s.fixed_view_mut::<6, 6>(6 * r, 6 * r);
        b += m;
    }
    let mut cam_inv = Vec::with_capacity(lin.cameras.len());
    for c in &lin.cameras {
        let mut a = c.h;
        for i in 0..6 {
            a[(i, i)] += lambda * damping(&c.h, i);
        }
        let inv = a.cholesky()?.inverse();
        for (ri, hi) in &c.links {
            let left = hi.transpose() * inv;
            let mut seg = rhs.fixed_rows_mut::<6>(6 * ri);
            seg += left * c.g;
            for (rj, hj) in &c.links {
                let mut b = s.fixed_view_mut::<6, 6>(6 * ri, 6 * rj);
                b -= left * hj;
            }
        }
        cam_inv.push(inv);
    }
    let reduced = s.cholesky()?.solve(&rhs);
    let cameras = lin
        .cameras
        .iter()
        .zip(&cam_inv)
        .map(|(c, inv)| {
            let mut rhs_c = -c.g;
            for (r, h) in &c.links {
                rhs_c -= h * reduced.fixed_rows::<6>(6 * r);
            }
            inv * rhs_c
        })
        .collect();
    Some(Step { reduced, cameras })
}

fn step_is_negligible(step: &Step, state: &StateVector) -> bool {
    let scale = 1.0
        + state
            .cameras
            .iter()
            .map(|c| c.translation.amax())
            .fold(state.base.translation.amax(), f64::max);
    let amax = step.cameras.iter().map(|c| c.amax()).fold(step.reduced.amax(), f64::max);
    amax < 1e-15 * scale
}

fn apply_step(state: &StateVector, objects: &BTreeMap<u32, usize>, step: &Step) -> StateVector {
    let delta = |r: usize| -> Vector6<f64> { step.reduced.fixed_rows::<6>(6 * r).into() };
    StateVector {
        base: state.base.retract(&delta(0)),
        cameras: state.cameras.iter().zip(&step.cameras).map(|(c, d)| c.retract(d)).collect(),
        objects: state
            .objects
            .iter()
            .map(|(k, o)| (*k, o.retract(&delta(objects[k]))))
            .collect(),
    }
}
