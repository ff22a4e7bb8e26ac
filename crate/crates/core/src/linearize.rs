//! Closed-loop Jacobians at equilibria.
//!
//! For the p-type loop with plant block `Ā = J − e_n e_nᵀ u⋆` the linearization is
//!
//! ```text
//! ⎡ Ā       0      −e_n k_p r ⎤
//! ⎢ 0      −ηu⋆    −μk_p/u⋆   ⎥
//! ⎣ θe_nᵀ  −ηu⋆    −μk_p/u⋆   ⎦
//! ```
//!
//! The `θ` in the last row comes from `ż₂ = θx_n − …`; with `θ = 1` it
//! disappears. Every assembled matrix can be cross-checked against
//! [`finite_difference_jacobian`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closed_loop::ClosedLoop;
use crate::equilibria::Equilibrium;
use crate::error::{Error, Result};
use crate::model::{AircParams, ControllerSpec, ExponentialIc, LogisticIc, PTypeAic, Plant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// The p-type block matrix.
    PType,
    /// The p-type block matrix with `J⋆(r) − F⁻¹(r) e_n e_nᵀ` as plant block.
    PTypeNonlinear,
    /// Differentiated from the rein controller equations.
    Airc,
    Exponential,
    Logistic,
    /// Analytic Jacobian at an arbitrary state.
    Generic,
}

/// Index ranges of the plant and controller coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMap {
    pub plant: [usize; 2],
    pub controller: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopJacobian {
    #[serde(with = "crate::serde_util::matrix")]
    pub matrix: DMatrix<f64>,
    pub blocks: BlockMap,
    pub provenance: Provenance,
}

impl ClosedLoopJacobian {
    fn new(matrix: DMatrix<f64>, n: usize, provenance: Provenance) -> Self {
        let total = matrix.nrows();
        Self {
            matrix,
            blocks: BlockMap {
                plant: [0, n],
                controller: [n, total],
            },
            provenance,
        }
    }

    /// The plant block.
    pub fn plant_block(&self) -> DMatrix<f64> {
        let [a, b] = self.blocks.plant;
        self.matrix.view((a, a), (b - a, b - a)).into_owned()
    }
}

/// The p-type block matrix from its parts. `abar` is the plant block.
pub fn ptype_matrix(abar: &DMatrix<f64>, ctrl: &PTypeAic, u_star: f64) -> DMatrix<f64> {
    let n = abar.nrows();
    let r = ctrl.setpoint();
    let mut m = DMatrix::zeros(n + 2, n + 2);
    m.view_mut((0, 0), (n, n)).copy_from(abar);
    m[(n - 1, n + 1)] = -ctrl.kp * r;
    let a = -ctrl.eta * u_star;
    let b = -ctrl.mu * ctrl.kp / u_star;
    m[(n, n)] = a;
    m[(n, n + 1)] = b;
    m[(n + 1, n - 1)] = ctrl.theta;
    m[(n + 1, n)] = a;
    m[(n + 1, n + 1)] = b;
    m
}

fn plant_block(plant: &Plant, eq: &Equilibrium) -> Result<DMatrix<f64>> {
    let n = plant.dim();
    let mut j = plant.jacobian(&eq.x_star)?;
    j[(n - 1, n - 1)] -= eq.u_star;
    Ok(j)
}

fn require_positive_effort(eq: &Equilibrium) -> Result<()> {
    if eq.u_star > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "linearization needs a positive effort, got {}",
            eq.u_star
        )))
    }
}

pub fn jacobian_ptype(plant: &Plant, ctrl: &PTypeAic, eq: &Equilibrium) -> Result<ClosedLoopJacobian> {
    require_positive_effort(eq)?;
    let abar = plant_block(plant, eq)?;
    let provenance = match plant {
        Plant::Linear(_) => Provenance::PType,
        Plant::Nonlinear(_) => Provenance::PTypeNonlinear,
    };
    Ok(ClosedLoopJacobian::new(
        ptype_matrix(&abar, ctrl, eq.u_star),
        plant.dim(),
        provenance,
    ))
}

pub fn jacobian_airc(plant: &Plant, ctrl: &AircParams, eq: &Equilibrium) -> Result<ClosedLoopJacobian> {
    let n = plant.dim();
    let (z1, z2) = (eq.controller_state[0], eq.controller_state[1]);
    let mut m = DMatrix::zeros(n + 2, n + 2);
    let mut jp = plant.jacobian(&eq.x_star)?;
    jp[(n - 1, n - 1)] -= ctrl.kp * z2;
    m.view_mut((0, 0), (n, n)).copy_from(&jp);
    m[(0, n)] += ctrl.ki;
    m[(n - 1, n + 1)] = -ctrl.kp * eq.x_star[n - 1];
    m[(n, n)] = -ctrl.eta * z2;
    m[(n, n + 1)] = -ctrl.eta * z1;
    m[(n + 1, n - 1)] = ctrl.theta;
    m[(n + 1, n)] = -ctrl.eta * z2;
    m[(n + 1, n + 1)] = -ctrl.eta * z1;
    Ok(ClosedLoopJacobian::new(m, n, Provenance::Airc))
}

/// Positive-branch Jacobian of the exponential loop.
pub fn jacobian_exponential(
    plant: &Plant,
    ctrl: &ExponentialIc,
    eq: &Equilibrium,
) -> Result<ClosedLoopJacobian> {
    require_positive_effort(eq)?;
    let n = plant.dim();
    let z = eq.controller_state[0];
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&plant_block(plant, eq)?);
    m[(n - 1, n)] = -ctrl.kp * ctrl.mu;
    m[(n, n - 1)] = ctrl.alpha * z;
    Ok(ClosedLoopJacobian::new(m, n, Provenance::Exponential))
}

/// Positive-branch Jacobian of the logistic loop.
pub fn jacobian_logistic(
    plant: &Plant,
    ctrl: &LogisticIc,
    eq: &Equilibrium,
) -> Result<ClosedLoopJacobian> {
    let z = eq.controller_state[0];
    if !(z > 0.0 && z < ctrl.beta) {
        return Err(Error::Precondition(format!(
            "logistic linearization needs 0 < z < beta, got z = {z}"
        )));
    }
    let n = plant.dim();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&plant_block(plant, eq)?);
    m[(n - 1, n)] = -ctrl.r;
    m[(n, n - 1)] = logistic_integrator_gain(ctrl, z);
    Ok(ClosedLoopJacobian::new(m, n, Provenance::Logistic))
}

/// `(k/β) z (β − z)`
pub fn logistic_integrator_gain(ctrl: &LogisticIc, z: f64) -> f64 {
    ctrl.k / ctrl.beta * z * (ctrl.beta - z)
}

/// Jacobian at an equilibrium, using the controller-specific display.
pub fn jacobian_for(plant: &Plant, ctrl: &ControllerSpec, eq: &Equilibrium) -> Result<ClosedLoopJacobian> {
    match ctrl {
        ControllerSpec::PType(c) => jacobian_ptype(plant, c, eq),
        ControllerSpec::Airc(c) => jacobian_airc(plant, c, eq),
        ControllerSpec::Exponential(c) => jacobian_exponential(plant, c, eq),
        ControllerSpec::Logistic(c) => jacobian_logistic(plant, c, eq),
    }
}

/// Analytic Jacobian of the closed loop at any state.
pub fn jacobian_at(plant: &Plant, ctrl: ControllerSpec, state: &DVector<f64>) -> Result<ClosedLoopJacobian> {
    let n = plant.dim();
    let total = n + ctrl.state_dim();
    if state.len() != total {
        return Err(Error::Dimension(format!(
            "state has length {}, expected {total}",
            state.len()
        )));
    }
    let x = state.rows(0, n).into_owned();
    let xn = x[n - 1];
    let mut m = DMatrix::zeros(total, total);
    m.view_mut((0, 0), (n, n)).copy_from(&plant.jacobian(&x)?);
    match ctrl {
        ControllerSpec::Airc(c) => {
            let (z1, z2) = (state[n], state[n + 1]);
            m[(n - 1, n - 1)] -= c.kp * z2;
            m[(0, n)] += c.ki;
            m[(n - 1, n + 1)] = -c.kp * xn;
            m[(n, n)] = -c.eta * z2;
            m[(n, n + 1)] = -c.eta * z1;
            m[(n + 1, n - 1)] = c.theta;
            m[(n + 1, n)] = -c.eta * z2;
            m[(n + 1, n + 1)] = -c.eta * z1;
        }
        ControllerSpec::PType(c) => {
            let (z1, z2) = (state[n], state[n + 1]);
            let k = c.kp * c.eta;
            m[(n - 1, n - 1)] -= c.kp * z2;
            m[(n - 1, n + 1)] = -c.kp * xn;
            m[(n, n)] = -k * z2;
            m[(n, n + 1)] = -k * z1;
            m[(n + 1, n - 1)] = c.theta;
            m[(n + 1, n)] = -k * z2;
            m[(n + 1, n + 1)] = -k * z1;
        }
        ControllerSpec::Exponential(c) => {
            let z = state[n];
            m[(n - 1, n - 1)] -= c.kp * z;
            m[(n - 1, n)] = -c.kp * xn;
            m[(n, n - 1)] = c.alpha * z;
            m[(n, n)] = -c.alpha * (c.mu - xn);
        }
        ControllerSpec::Logistic(c) => {
            let z = state[n];
            let s = c.k / c.beta;
            m[(n - 1, n - 1)] -= z;
            m[(n - 1, n)] = -xn;
            m[(n, n - 1)] = s * z * (c.beta - z);
            m[(n, n)] = -s * (c.beta - 2.0 * z) * (c.r - xn);
        }
    }
    Ok(ClosedLoopJacobian::new(m, n, Provenance::Generic))
}

/// Central differences of the closed-loop field, step `10⁻⁶ (1 + |sᵢ|)`.
pub fn finite_difference_jacobian(cl: &ClosedLoop, state: &DVector<f64>) -> DMatrix<f64> {
    let d = state.len();
    let mut m = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-6 * (1.0 + state[j].abs());
        let mut plus = state.clone();
        plus[j] += h;
        let mut minus = state.clone();
        minus[j] -= h;
        let col = (cl.field_relaxed(&plus) - cl.field_relaxed(&minus)) / (2.0 * h);
        m.set_column(j, &col);
    }
    m
}

/// Largest entrywise gap between two matrices, relative to `1 + |b|∞`.
pub fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}
