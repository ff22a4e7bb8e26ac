//! Closed-loop vector fields for every controller on any plant.
//!
//! The state is `(x, z)` with the controller states appended after the
//! plant. Couplings:
//!
//! | controller  | plant input                    | controller dynamics |
//! |-------------|--------------------------------|---------------------|
//! | airc        | `e₁k_iz₁ − e_n x_n k_p z₂`     | `ż₁ = μ − ηz₁z₂`, `ż₂ = θx_n − ηz₁z₂` |
//! | ptype       | `−e_n x_n k_p z₂`              | `ż₁ = μ − k_pηz₁z₂`, `ż₂ = θx_n − k_pηz₁z₂` |
//! | exponential | `−e_n x_n k_p z`               | `ż = −αz(μ − x_n)` |
//! | logistic    | `−e_n x_n z`                   | `ż = −(k/β)z(β − z)(r − x_n)` |

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{ControllerSpec, Plant};

/// A plant and controller assembled into one autonomous system.
#[derive(Clone, Debug)]
pub struct ClosedLoop<'a> {
    pub plant: &'a Plant,
    pub controller: ControllerSpec,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(plant: &'a Plant, controller: ControllerSpec) -> Self {
        Self { plant, controller }
    }

    pub fn dim(&self) -> usize {
        self.plant.dim() + self.controller.state_dim()
    }

    /// The vector field. Plant states must be nonnegative for nonlinear plants.
    pub fn field(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        if state.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "closed-loop state has length {}, expected {}",
                state.len(),
                self.dim()
            )));
        }
        let n = self.plant.dim();
        let x = state.rows(0, n).into_owned();
        let f = self.plant.rate(&x)?;
        Ok(self.assemble(&x, f, &state.as_slice()[n..]))
    }

    /// As [`field`](Self::field) but tolerates small negative plant states,
    /// as produced by intermediate Runge–Kutta stages.
    pub fn field_relaxed(&self, state: &DVector<f64>) -> DVector<f64> {
        let n = self.plant.dim();
        let x = state.rows(0, n).into_owned();
        let f = match self.plant {
            Plant::Linear(l) => l.a.as_matrix() * &x,
            Plant::Nonlinear(nl) => nl.rate_unchecked(&x),
        };
        self.assemble(&x, f, &state.as_slice()[n..])
    }

    fn assemble(&self, x: &DVector<f64>, f: DVector<f64>, z: &[f64]) -> DVector<f64> {
        let n = x.len();
        let xn = x[n - 1];
        let mut out = DVector::zeros(self.dim());
        let mut dx = f + self.plant.b0();
        match self.controller {
            ControllerSpec::Airc(c) => {
                let (z1, z2) = (z[0], z[1]);
                dx[0] += c.ki * z1;
                dx[n - 1] -= xn * c.kp * z2;
                let ann = c.eta * z1 * z2;
                out[n] = c.mu - ann;
                out[n + 1] = c.theta * xn - ann;
            }
            ControllerSpec::PType(c) => {
                let (z1, z2) = (z[0], z[1]);
                dx[n - 1] -= xn * c.kp * z2;
                let ann = c.kp * c.eta * z1 * z2;
                out[n] = c.mu - ann;
                out[n + 1] = c.theta * xn - ann;
            }
            ControllerSpec::Exponential(c) => {
                dx[n - 1] -= xn * c.kp * z[0];
                out[n] = -c.alpha * z[0] * (c.mu - xn);
            }
            ControllerSpec::Logistic(c) => {
                dx[n - 1] -= xn * z[0];
                out[n] = -(c.k / c.beta) * z[0] * (c.beta - z[0]) * (c.r - xn);
            }
        }
        out.rows_mut(0, n).copy_from(&dx);
        out
    }

    /// Euclidean norm of the field at `state`.
    pub fn residual(&self, state: &DVector<f64>) -> Result<f64> {
        Ok(self.field(state)?.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixlab::RealMatrix;
    use crate::model::{LinearNetwork, LogisticIc, PTypeAic};

    fn scalar() -> Plant {
        Plant::Linear(
            LinearNetwork::new(
                RealMatrix::from_rows(&[vec![-1.0]]).unwrap(),
                DVector::from_vec(vec![2.0]),
            )
            .unwrap(),
        )
    }

    #[test]
    fn ptype_field_by_hand() {
        let plant = scalar();
        let ctrl = ControllerSpec::PType(PTypeAic { mu: 1.0, theta: 1.0, eta: 1.0, kp: 1.0 });
        let cl = ClosedLoop::new(&plant, ctrl);
        // x = 1, z1 = 1, z2 = 1 is the equilibrium: -1 + 2 - 1 = 0.
        let eq = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!(cl.residual(&eq).unwrap(), 0.0);
        let f = cl.field(&DVector::from_vec(vec![0.5, 2.0, 0.25])).unwrap();
        assert_eq!(f.as_slice(), &[-0.5 + 2.0 - 0.125, 0.5, 0.0]);
    }

    #[test]
    fn logistic_field_by_hand() {
        let plant = scalar();
        let ctrl = ControllerSpec::Logistic(LogisticIc { r: 1.0, k: 2.0, beta: 4.0 });
        let cl = ClosedLoop::new(&plant, ctrl);
        let f = cl.field(&DVector::from_vec(vec![0.5, 1.0])).unwrap();
        assert_eq!(f.as_slice(), &[-0.5 + 2.0 - 0.5, -(0.5) * 1.0 * 3.0 * 0.5]);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let plant = scalar();
        let ctrl = ControllerSpec::PType(PTypeAic { mu: 1.0, theta: 1.0, eta: 1.0, kp: 1.0 });
        assert!(ClosedLoop::new(&plant, ctrl).field(&DVector::zeros(2)).is_err());
    }
}
