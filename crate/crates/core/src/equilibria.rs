//! Closed-loop equilibria and set-point admissibility.
//!
//! For the p-type controller the steady degradation effort is
//! `u⋆ = (g₀ − r)/(g_n r)`, where `r` is the set-point. The set-point is
//! admissible when `u⋆ > 0`; the boundary `u⋆ = 0` is rejected.
//!
//! Nonlinear plants go through the steady-state map `g(u)`, solving
//! `f(x) − e_n x_n u + b₀ = 0`, and its output `F(u) = x_n`. The effort is
//! then `u⋆ = F⁻¹(r)`, found by bracketing and bisection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closed_loop::ClosedLoop;
use crate::error::{Error, Result};
use crate::matrixlab::{
    basis, classify, condition_number, solve, spectral_abscissa, static_gains, StabilityTag,
    StaticGains, NEAR_SINGULAR_COND, STAB_TOL,
};
use crate::model::{
    AircParams, ControllerSpec, ExponentialIc, LinearNetwork, LogisticIc, NonlinearNetwork,
    PTypeAic, Plant,
};

/// A closed-loop equilibrium with its residual against the vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    #[serde(with = "crate::serde_util::vector")]
    pub x_star: DVector<f64>,
    #[serde(with = "crate::serde_util::vector")]
    pub controller_state: DVector<f64>,
    /// Steady degradation effort on `x_n`. For AIRC this is `k_p z₂⋆`.
    pub u_star: f64,
    pub residual: f64,
}

impl Equilibrium {
    fn assemble(
        plant: &Plant,
        ctrl: ControllerSpec,
        x_star: DVector<f64>,
        controller_state: DVector<f64>,
        u_star: f64,
    ) -> Result<Self> {
        let mut eq = Self {
            x_star,
            controller_state,
            u_star,
            residual: 0.0,
        };
        eq.residual = ClosedLoop::new(plant, ctrl).residual(&eq.state())?;
        Ok(eq)
    }

    /// `(x⋆, z⋆)` stacked.
    pub fn state(&self) -> DVector<f64> {
        let n = self.x_star.len();
        let m = self.controller_state.len();
        DVector::from_iterator(
            n + m,
            self.x_star.iter().chain(self.controller_state.iter()).copied(),
        )
    }

    /// Residual below `10⁻⁸ (1 + |state|)`.
    pub fn residual_ok(&self) -> bool {
        self.residual < 1e-8 * (1.0 + self.state().norm())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.state().iter().all(|&v| v >= -1e-12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Metzler, Hurwitz `A`; requires `r < g₀`.
    StableCase,
    /// Metzler, output-unstable `A`; any `r > 0`.
    OutputUnstableCase,
    ExponentialCase,
    /// Positive logistic branch inside `(g₀/(1+βg_n), g₀)`.
    LogisticInterval,
    NonlinearNumeric,
    /// `A` falls in neither class; only the sign of the effort is checked.
    Unclassified,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    pub regime: Regime,
    /// Open interval of admissible set-points, `None` for an infinite end.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLabel {
    Positive,
    Zero,
    Saturating,
}

/// One equilibrium branch of the exponential or logistic loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: BranchLabel,
    pub equilibrium: Equilibrium,
    pub admissibility: Admissibility,
}

/// Positive root of `az² + bz + c` when `a` and `c` have opposite signs,
/// computed without cancellation.
pub fn positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    let (a, b, c) = if a < 0.0 { (-a, -b, -c) } else { (a, b, c) };
    if !(a > 0.0 && c < 0.0) {
        return None;
    }
    let disc = (b * b - 4.0 * a * c).sqrt();
    Some(if b >= 0.0 {
        c / (-0.5 * (b + disc))
    } else {
        0.5 * (disc - b) / a
    })
}

fn nonsingular_gains(net: &LinearNetwork) -> Result<StaticGains> {
    let gains = static_gains(&net.a, &net.b0)?;
    if gains.near_singular {
        return Err(Error::SingularDynamics(format!(
            "A is near singular (condition {:e})",
            gains.condition
        )));
    }
    Ok(gains)
}

/// `x = −A⁻¹ rhs`
fn steady_plant(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(-solve(a, rhs)?.x)
}

/// Coefficients `[c, b, a]` of the polynomial whose positive root is `z₁⋆`.
pub fn airc_p1(gains: &StaticGains, ctrl: &AircParams) -> [f64; 3] {
    let r = ctrl.mu / ctrl.theta;
    [
        -gains.gn * ctrl.kp * ctrl.mu * r,
        (gains.g0 - r) * ctrl.eta,
        ctrl.eta * gains.g1 * ctrl.ki,
    ]
}

/// Coefficients `[c, b, a]` of the polynomial whose positive root is `z₂⋆`.
pub fn airc_p2(gains: &StaticGains, ctrl: &AircParams) -> [f64; 3] {
    let r = ctrl.mu / ctrl.theta;
    [
        gains.g1 * ctrl.ki * ctrl.mu,
        (gains.g0 - r) * ctrl.eta,
        -ctrl.eta * gains.gn * ctrl.kp * r,
    ]
}

fn airc_preconditions(net: &LinearNetwork) -> Result<StaticGains> {
    let abscissa = spectral_abscissa(net.a.as_matrix());
    if abscissa >= -STAB_TOL {
        return Err(Error::NotHurwitz { abscissa });
    }
    let gains = nonsingular_gains(net)?;
    if gains.g1.abs() <= 1e-14 * (gains.g0.abs() + gains.gn.abs()).max(1.0) {
        return Err(Error::Precondition(
            "the first species does not reach the output (g1 = 0)".into(),
        ));
    }
    Ok(gains)
}

/// Equilibrium of the full rein controller.
pub fn airc_equilibrium(net: &LinearNetwork, ctrl: &AircParams) -> Result<Equilibrium> {
    let gains = airc_preconditions(net)?;
    airc_equilibrium_with(net, ctrl, &gains)
}

fn airc_equilibrium_with(
    net: &LinearNetwork,
    ctrl: &AircParams,
    gains: &StaticGains,
) -> Result<Equilibrium> {
    let [c1, b1, a1] = airc_p1(gains, ctrl);
    let z1 = positive_root(a1, b1, c1)
        .ok_or_else(|| Error::NoSteadyState("P1 has no positive root".into()))?;
    let z2 = ctrl.mu / (ctrl.eta * z1);
    let [c2, b2, a2] = airc_p2(gains, ctrl);
    let z2_alt = positive_root(a2, b2, c2)
        .ok_or_else(|| Error::NoSteadyState("P2 has no positive root".into()))?;
    if (z2 - z2_alt).abs() > 1e-9 * z2.abs().max(z2_alt.abs()) {
        return Err(Error::NoSteadyState(format!(
            "the two characterizations disagree: z2 = {z2} vs {z2_alt}"
        )));
    }
    let n = net.dim();
    let r = ctrl.mu / ctrl.theta;
    let rhs = &net.b0 + basis(n, 0) * (ctrl.ki * z1) - basis(n, n - 1) * (r * ctrl.kp * z2);
    let x = steady_plant(net.a.as_matrix(), &rhs)?;
    Equilibrium::assemble(
        &Plant::Linear(net.clone()),
        ControllerSpec::Airc(*ctrl),
        x,
        DVector::from_vec(vec![z1, z2]),
        ctrl.kp * z2,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchingRegime {
    /// `r < g₀`: `(z₁⋆, z₂⋆) → (0, u⋆/k_p)`.
    BelowGain,
    /// `r > g₀`: `(z₁⋆, z₂⋆) → (u⋆/k_i, 0)`.
    AboveGain,
    /// `r = g₀`: both vanish like `η^{-1/2}`.
    AtGain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingRow {
    pub eta: f64,
    pub z1: f64,
    pub z2: f64,
    /// `η z₁⋆ z₂⋆`, equal to `μ` at every equilibrium.
    pub flux: f64,
    /// Predicted `z₁⋆`: the limit, or `√(g_n k_p μ r/(η g₁ k_i))` at `r = g₀`.
    pub predicted_z1: f64,
    pub predicted_z2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchingTable {
    pub regime: SwitchingRegime,
    pub g0: f64,
    pub r: f64,
    /// Limit effort of the active branch, zero at `r = g₀`.
    pub u_star: f64,
    pub rows: Vec<SwitchingRow>,
}

/// AIRC equilibria along an ascending `η` grid, with the large-`η` limits.
pub fn airc_switching_limit(
    net: &LinearNetwork,
    ctrl: &AircParams,
    eta_grid: &[f64],
) -> Result<SwitchingTable> {
    if eta_grid.iter().any(|&e| !(e > 0.0)) || eta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(
            "eta grid must be positive and strictly ascending".into(),
        ));
    }
    let gains = airc_preconditions(net)?;
    let r = ctrl.mu / ctrl.theta;
    let regime = if (r - gains.g0).abs() <= 1e-12 * gains.g0.abs().max(1.0) {
        SwitchingRegime::AtGain
    } else if r < gains.g0 {
        SwitchingRegime::BelowGain
    } else {
        SwitchingRegime::AboveGain
    };
    let u_star = match regime {
        SwitchingRegime::BelowGain => (gains.g0 - r) / (gains.gn * r),
        SwitchingRegime::AboveGain => (r - gains.g0) / gains.g1,
        SwitchingRegime::AtGain => 0.0,
    };
    let rows = eta_grid
        .iter()
        .map(|&eta| {
            let c = AircParams { eta, ..*ctrl };
            let eq = airc_equilibrium_with(net, &c, &gains)?;
            let (z1, z2) = (eq.controller_state[0], eq.controller_state[1]);
            let (predicted_z1, predicted_z2) = match regime {
                SwitchingRegime::BelowGain => (0.0, u_star / ctrl.kp),
                SwitchingRegime::AboveGain => (u_star / ctrl.ki, 0.0),
                SwitchingRegime::AtGain => {
                    let p1 = (gains.gn * ctrl.kp * ctrl.mu * r / (eta * gains.g1 * ctrl.ki)).sqrt();
                    (p1, ctrl.mu / (eta * p1))
                }
            };
            Ok(SwitchingRow {
                eta,
                z1,
                z2,
                flux: eta * z1 * z2,
                predicted_z1,
                predicted_z2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SwitchingTable {
        regime,
        g0: gains.g0,
        r,
        u_star,
        rows,
    })
}

/// p-type effort `(g₀ − r)/(g_n r)`.
pub fn ptype_effort(gains: &StaticGains, r: f64) -> f64 {
    (gains.g0 - r) / (gains.gn * r)
}

/// Equilibrium of the p-type loop on a linear plant.
///
/// Fails with [`Error::InadmissibleSetPoint`] when the effort is not
/// strictly positive.
pub fn ptype_equilibrium(
    net: &LinearNetwork,
    ctrl: &PTypeAic,
) -> Result<(Equilibrium, Admissibility)> {
    let gains = nonsingular_gains(net)?;
    let r = ctrl.setpoint();
    let u = ptype_effort(&gains, r);
    let tag = classify(&net.a).tag;
    let (regime, lower, upper) = match tag {
        StabilityTag::MetzlerHurwitz => (Regime::StableCase, Some(0.0), Some(gains.g0)),
        StabilityTag::MetzlerOutputUnstable => (Regime::OutputUnstableCase, Some(0.0), None),
        _ => (Regime::Unclassified, None, None),
    };
    if !(u > 0.0) {
        let reason = match regime {
            Regime::StableCase => format!("the set-point must lie below g0 = {}", gains.g0),
            _ => format!("the steady effort {u} is not positive"),
        };
        return Err(Error::InadmissibleSetPoint { r, reason });
    }
    let n = net.dim();
    let rhs = &net.b0 - basis(n, n - 1) * (r * u);
    let x = steady_plant(net.a.as_matrix(), &rhs)?;
    let z = DVector::from_vec(vec![ctrl.mu / (ctrl.eta * u), u / ctrl.kp]);
    let eq = Equilibrium::assemble(
        &Plant::Linear(net.clone()),
        ControllerSpec::PType(*ctrl),
        x,
        z,
        u,
    )?;
    let admissible = eq.is_nonnegative();
    Ok((
        eq,
        Admissibility {
            admissible,
            regime,
            lower,
            upper,
            reason: (!admissible).then(|| "equilibrium has a negative entry".into()),
        },
    ))
}

/// Equilibrium of the p-type loop on a nonlinear plant, through `F⁻¹`.
pub fn ptype_equilibrium_nonlinear(
    net: &NonlinearNetwork,
    ctrl: &PTypeAic,
) -> Result<(Equilibrium, Admissibility)> {
    let inv = nonlinear_f_inverse(net, ctrl.setpoint())?;
    let u = inv.u_star;
    let z = DVector::from_vec(vec![ctrl.mu / (ctrl.eta * u), u / ctrl.kp]);
    let eq = Equilibrium::assemble(
        &Plant::Nonlinear(net.clone()),
        ControllerSpec::PType(*ctrl),
        inv.x_star,
        z,
        u,
    )?;
    let (lower, upper) = if inv.f_at_zero >= inv.f_at_cap {
        (inv.f_at_cap, inv.f_at_zero)
    } else {
        (inv.f_at_zero, inv.f_at_cap)
    };
    Ok((
        eq,
        Admissibility {
            admissible: true,
            regime: Regime::NonlinearNumeric,
            lower: Some(lower),
            upper: Some(upper),
            reason: None,
        },
    ))
}

/// p-type equilibrium on either kind of plant.
pub fn ptype_equilibrium_on(plant: &Plant, ctrl: &PTypeAic) -> Result<(Equilibrium, Admissibility)> {
    match plant {
        Plant::Linear(l) => ptype_equilibrium(l, ctrl),
        Plant::Nonlinear(nl) => ptype_equilibrium_nonlinear(nl, ctrl),
    }
}

/// The equilibrium the controller is meant to hold: the p-type or AIRC
/// equilibrium, or the admissible positive branch of an integral controller.
pub fn operating_equilibrium(plant: &Plant, ctrl: &ControllerSpec) -> Result<Equilibrium> {
    let positive = |branches: Vec<Branch>| {
        let b = branches
            .into_iter()
            .find(|b| b.label == BranchLabel::Positive)
            .ok_or_else(|| Error::InadmissibleSetPoint {
                r: ctrl.setpoint(),
                reason: "no positive equilibrium".into(),
            })?;
        if b.admissibility.admissible {
            Ok(b.equilibrium)
        } else {
            Err(Error::InadmissibleSetPoint {
                r: ctrl.setpoint(),
                reason: b.admissibility.reason.unwrap_or_default(),
            })
        }
    };
    match (ctrl, plant) {
        (ControllerSpec::PType(c), _) => ptype_equilibrium_on(plant, c).map(|(eq, _)| eq),
        (ControllerSpec::Airc(c), Plant::Linear(l)) => airc_equilibrium(l, c),
        (ControllerSpec::Exponential(c), Plant::Linear(l)) => positive(exponential_equilibria(l, c)?),
        (ControllerSpec::Logistic(c), Plant::Linear(l)) => positive(logistic_equilibria(l, c)?),
        (c, Plant::Nonlinear(_)) => Err(Error::Unsupported(format!(
            "{} controller on a nonlinear plant",
            c.kind()
        ))),
    }
}

/// Every equilibrium branch the analysis knows for this plant and controller.
pub fn equilibria_of(plant: &Plant, ctrl: &ControllerSpec) -> Result<Vec<Branch>> {
    match (ctrl, plant) {
        (ControllerSpec::PType(c), _) => {
            let (equilibrium, admissibility) = ptype_equilibrium_on(plant, c)?;
            Ok(vec![Branch {
                label: BranchLabel::Positive,
                equilibrium,
                admissibility,
            }])
        }
        (ControllerSpec::Airc(c), Plant::Linear(l)) => {
            let equilibrium = airc_equilibrium(l, c)?;
            let admissible = equilibrium.is_nonnegative();
            Ok(vec![Branch {
                label: BranchLabel::Positive,
                equilibrium,
                admissibility: Admissibility {
                    admissible,
                    regime: match classify(&l.a).tag {
                        StabilityTag::MetzlerHurwitz => Regime::StableCase,
                        _ => Regime::Unclassified,
                    },
                    lower: None,
                    upper: None,
                    reason: (!admissible).then(|| "equilibrium has a negative entry".into()),
                },
            }])
        }
        (ControllerSpec::Exponential(c), Plant::Linear(l)) => exponential_equilibria(l, c),
        (ControllerSpec::Logistic(c), Plant::Linear(l)) => logistic_equilibria(l, c),
        (c, Plant::Nonlinear(_)) => Err(Error::Unsupported(format!(
            "{} controller on a nonlinear plant",
            c.kind()
        ))),
    }
}

/// Positive and zero equilibria of the exponential loop. The positive branch
/// is omitted when its effort is negative.
pub fn exponential_equilibria(net: &LinearNetwork, ctrl: &ExponentialIc) -> Result<Vec<Branch>> {
    let gains = nonsingular_gains(net)?;
    let n = net.dim();
    let plant = Plant::Linear(net.clone());
    let spec = ControllerSpec::Exponential(*ctrl);
    let tag = classify(&net.a).tag;
    let (lower, upper) = match tag {
        StabilityTag::MetzlerHurwitz => (Some(0.0), Some(gains.g0)),
        StabilityTag::MetzlerOutputUnstable => (Some(0.0), None),
        _ => (None, None),
    };
    let mut out = Vec::new();
    let u = ptype_effort(&gains, ctrl.mu);
    if u >= 0.0 {
        let rhs = &net.b0 - basis(n, n - 1) * (ctrl.mu * u);
        let x = steady_plant(net.a.as_matrix(), &rhs)?;
        let eq = Equilibrium::assemble(&plant, spec, x, DVector::from_vec(vec![u / ctrl.kp]), u)?;
        let admissible = u > 0.0 && eq.is_nonnegative();
        out.push(Branch {
            label: BranchLabel::Positive,
            equilibrium: eq,
            admissibility: Admissibility {
                admissible,
                regime: Regime::ExponentialCase,
                lower,
                upper,
                reason: (!admissible).then(|| "effort is zero or state negative".into()),
            },
        });
    }
    let x0 = steady_plant(net.a.as_matrix(), &net.b0)?;
    let eq = Equilibrium::assemble(&plant, spec, x0, DVector::zeros(1), 0.0)?;
    out.push(zero_like(BranchLabel::Zero, eq, Regime::ExponentialCase));
    Ok(out)
}

fn zero_like(label: BranchLabel, eq: Equilibrium, regime: Regime) -> Branch {
    let admissible = eq.is_nonnegative();
    Branch {
        label,
        equilibrium: eq,
        admissibility: Admissibility {
            admissible,
            regime,
            lower: None,
            upper: None,
            reason: (!admissible).then(|| "equilibrium has a negative entry".into()),
        },
    }
}

/// Set-points for which the positive logistic branch lies in `(0, β)`.
pub fn logistic_interval(gains: &StaticGains, beta: f64) -> (Option<f64>, Option<f64>) {
    let edge = gains.g0 / (1.0 + beta * gains.gn);
    if gains.gn > 0.0 {
        (Some(edge), Some(gains.g0))
    } else if 1.0 + beta * gains.gn < 0.0 {
        (Some(edge), None)
    } else {
        // empty
        (Some(0.0), Some(0.0))
    }
}

/// Positive, zero and saturating equilibria of the logistic loop.
pub fn logistic_equilibria(net: &LinearNetwork, ctrl: &LogisticIc) -> Result<Vec<Branch>> {
    let gains = nonsingular_gains(net)?;
    let n = net.dim();
    let en = basis(n, n - 1);
    let plant = Plant::Linear(net.clone());
    let spec = ControllerSpec::Logistic(*ctrl);
    let r = ctrl.r;
    let z = ptype_effort(&gains, r);
    let rhs = &net.b0 - &en * (r * z);
    let x = steady_plant(net.a.as_matrix(), &rhs)?;
    let eq = Equilibrium::assemble(&plant, spec, x, DVector::from_vec(vec![z]), z)?;
    let inside = z > 0.0 && z < ctrl.beta;
    let (lower, upper) = logistic_interval(&gains, ctrl.beta);
    let mut out = vec![Branch {
        label: BranchLabel::Positive,
        admissibility: Admissibility {
            admissible: inside && eq.is_nonnegative(),
            regime: Regime::LogisticInterval,
            lower,
            upper,
            reason: (!inside).then(|| {
                format!(
                    "z = {z} outside (0, {}); admissible set-points lie in ({}, {})",
                    ctrl.beta,
                    lower.map_or("-inf".into(), |v| v.to_string()),
                    upper.map_or("inf".into(), |v| v.to_string()),
                )
            }),
        },
        equilibrium: eq,
    }];
    let x0 = steady_plant(net.a.as_matrix(), &net.b0)?;
    let eq = Equilibrium::assemble(&plant, spec, x0, DVector::zeros(1), 0.0)?;
    out.push(zero_like(BranchLabel::Zero, eq, Regime::LogisticInterval));
    let sat = net.a.with_output_degradation(ctrl.beta);
    let solved = solve(sat.as_matrix(), &net.b0)?;
    if solved.near_singular() {
        return Err(Error::SingularDynamics(
            "A - e_n e_nᵀ β is near singular".into(),
        ));
    }
    let eq = Equilibrium::assemble(
        &plant,
        spec,
        -solved.x,
        DVector::from_vec(vec![ctrl.beta]),
        ctrl.beta,
    )?;
    out.push(zero_like(BranchLabel::Saturating, eq, Regime::LogisticInterval));
    Ok(out)
}

const NEWTON_MAX_ITER: usize = 200;

/// Steady state `g(u)` of `ẋ = f(x) − e_n x_n u + b₀` by damped Newton.
pub fn nonlinear_steady_state(net: &NonlinearNetwork, u: f64) -> Result<DVector<f64>> {
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::Precondition(format!("effort {u} must be nonnegative")));
    }
    let n = net.n;
    let en = n - 1;
    let field = |x: &DVector<f64>| {
        let mut v = net.rate_unchecked(x) + &net.b0;
        v[en] -= x[en] * u;
        v
    };
    let mut lin = net.linear_part();
    lin[(en, en)] -= u;
    let mut x = match solve(&lin, &net.b0) {
        Ok(s) => s.x.map(|v| (-v).max(0.1)),
        Err(_) => DVector::from_element(n, 0.1),
    };
    for _ in 0..NEWTON_MAX_ITER {
        let gx = field(&x);
        let norm = gx.norm();
        let mut jac = net.jacobian(&x)?;
        jac[(en, en)] -= u;
        if norm < 1e-10 * (1.0 + x.norm()) {
            let cond = condition_number(&jac);
            if cond > NEAR_SINGULAR_COND {
                return Err(Error::AssumptionViolated(format!(
                    "steady-state Jacobian is near singular (condition {cond:e})"
                )));
            }
            return Ok(x);
        }
        let step = jac
            .lu()
            .solve(&(-&gx))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::NoSteadyState("singular Newton step".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial = (&x + &step * lambda).map(|v| v.max(0.0));
            if field(&trial).norm() < norm {
                x = trial;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-12 {
                return Err(Error::NoSteadyState(format!(
                    "line search stalled at residual {norm:e} (u = {u})"
                )));
            }
        }
    }
    Err(Error::NoSteadyState(format!(
        "Newton did not converge in {NEWTON_MAX_ITER} iterations (u = {u})"
    )))
}

/// Output map `F(u) = e_nᵀ g(u)`.
pub fn steady_output(net: &NonlinearNetwork, u: f64) -> Result<f64> {
    Ok(nonlinear_steady_state(net, u)?[net.n - 1])
}

/// Largest effort probed when bracketing `F⁻¹`.
pub const EFFORT_CAP: f64 = 1e9;
const EFFORT_START: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FInverse {
    pub u_star: f64,
    #[serde(with = "crate::serde_util::vector")]
    pub x_star: DVector<f64>,
    pub bracket: [f64; 2],
    /// `F(0)`.
    pub f_at_zero: f64,
    /// `F` at the largest effort probed.
    pub f_at_cap: f64,
}

fn effort_scan() -> impl Iterator<Item = f64> {
    std::iter::once(0.0).chain(
        (0..)
            .map(|k| EFFORT_START * 2f64.powi(k))
            .take_while(|&u| u <= EFFORT_CAP),
    )
}

/// Range of `F` over the probed efforts, as `(F(0), F(cap))`.
pub fn output_range(net: &NonlinearNetwork) -> Result<(f64, f64)> {
    let samples: Vec<f64> = effort_scan()
        .filter_map(|u| steady_output(net, u).ok())
        .collect();
    match (samples.first(), samples.last()) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(Error::NoSteadyState("F is undefined on every probe".into())),
    }
}

/// `u⋆ = F⁻¹(r)` by doubling-bracket then bisection.
pub fn nonlinear_f_inverse(net: &NonlinearNetwork, r: f64) -> Result<FInverse> {
    if !(r > 0.0) {
        return Err(Error::InadmissibleSetPoint {
            r,
            reason: "set-point must be positive".into(),
        });
    }
    let tol = 1e-10 * (1.0 + r);
    let mut samples: Vec<(f64, f64)> = Vec::new();
    let mut bracket = None;
    for u in effort_scan() {
        let Ok(f) = steady_output(net, u) else {
            continue;
        };
        if let Some(&(pu, pf)) = samples.last() {
            if (pf - r) * (f - r) <= 0.0 {
                bracket = Some(((pu, pf), (u, f)));
                samples.push((u, f));
                break;
            }
        }
        samples.push((u, f));
    }
    let Some(&(_, f_at_zero)) = samples.first() else {
        return Err(Error::NoSteadyState("F is undefined on every probe".into()));
    };
    let f_at_cap = match bracket {
        Some(_) => steady_output(net, EFFORT_CAP).unwrap_or(f64::NAN),
        None => samples.last().map_or(f64::NAN, |s| s.1),
    };
    let Some(((mut lo, mut flo), (mut hi, _))) = bracket else {
        return Err(Error::InadmissibleSetPoint {
            r,
            reason: format!(
                "no effort in [0, {EFFORT_CAP:e}] reaches the set-point; F spans [{}, {}]",
                f_at_zero.min(f_at_cap),
                f_at_zero.max(f_at_cap)
            ),
        });
    };
    if (flo - r).abs() <= tol && lo == 0.0 {
        return Err(Error::InadmissibleSetPoint {
            r,
            reason: "the set-point equals the open-loop output, so the effort is zero".into(),
        });
    }
    let bracket_edges = [lo, hi];
    check_monotone(net, &samples, lo, hi)?;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let fm = steady_output(net, mid)?;
        if (fm - r).abs() < tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            lo = mid;
            break;
        }
        if (flo - r) * (fm - r) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    let u_star = lo;
    if !(u_star > 0.0) {
        return Err(Error::InadmissibleSetPoint {
            r,
            reason: "the effort is not positive".into(),
        });
    }
    Ok(FInverse {
        u_star,
        x_star: nonlinear_steady_state(net, u_star)?,
        bracket: bracket_edges,
        f_at_zero,
        f_at_cap,
    })
}

fn check_monotone(net: &NonlinearNetwork, samples: &[(f64, f64)], lo: f64, hi: f64) -> Result<()> {
    let mut pts: Vec<(f64, f64)> = samples.to_vec();
    for k in 1..8 {
        let u = lo + (hi - lo) * f64::from(k) / 8.0;
        if let Ok(f) = steady_output(net, u) {
            pts.push((u, f));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let diffs: Vec<f64> = pts.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let slack = |i: usize| 1e-12 * (1.0 + pts[i].1.abs());
    let decreasing = diffs.iter().enumerate().all(|(i, &d)| d <= slack(i));
    let increasing = diffs.iter().enumerate().all(|(i, &d)| d >= -slack(i));
    if decreasing || increasing {
        Ok(())
    } else {
        Err(Error::AssumptionViolated(
            "the steady-state output is not monotone in the effort".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixlab::RealMatrix;
    use crate::model::RateTerm;

    fn net(rows: &[Vec<f64>], b0: &[f64]) -> LinearNetwork {
        LinearNetwork::new(
            RealMatrix::from_rows(rows).unwrap(),
            DVector::from_vec(b0.to_vec()),
        )
        .unwrap()
    }

    fn example1() -> LinearNetwork {
        net(
            &[
                vec![-1.0, 0.0, 0.5],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, -1.0],
            ],
            &[1.0, 0.0, 0.0],
        )
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quadratic_root_is_stable() {
        let z = positive_root(1.0, 1.0, -1.0).unwrap();
        assert!((z - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        let oracle = bisect(|z| z * z + z - 1.0, 0.0, 1.0);
        assert!((z - oracle).abs() < 1e-14);
        // b ≫ |ac|: the naive formula loses every digit
        let z = positive_root(1.0, 1e9, -1.0).unwrap();
        assert!((z - 1e-9).abs() < 1e-22);
        assert!(positive_root(1.0, 1.0, 1.0).is_none());
        assert!((positive_root(-1.0, 0.0, 4.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn airc_unit_parameters() {
        // A = [-1/2], b0 = [1]: g0 = 2, g1 = gn = 2. Scale gains to one with
        // A = [-1], b0 = [2]: g0 = 2, g1 = gn = 1.
        let plant = net(&[vec![-1.0]], &[2.0]);
        let c = AircParams { mu: 1.0, theta: 1.0, eta: 1.0, ki: 1.0, kp: 1.0 };
        let eq = airc_equilibrium(&plant, &c).unwrap();
        let z1 = eq.controller_state[0];
        assert!((z1 - 0.618_033_988_749_895).abs() < 1e-12);
        assert!(eq.residual < 1e-9);
        assert!((eq.x_star[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn airc_rejects_unstable_plant() {
        let plant = net(&[vec![0.5]], &[1.0]);
        let c = AircParams { mu: 1.0, theta: 1.0, eta: 1.0, ki: 1.0, kp: 1.0 };
        assert!(matches!(airc_equilibrium(&plant, &c), Err(Error::NotHurwitz { .. })));
    }

    #[test]
    fn ptype_example1() {
        let c = PTypeAic { mu: 1.0, theta: 1.0, eta: 1.0, kp: 1.0 };
        let (eq, adm) = ptype_equilibrium(&example1(), &c).unwrap();
        assert!(adm.admissible && adm.regime == Regime::StableCase);
        assert!((eq.u_star - 0.5).abs() < 1e-12);
        assert!(eq.residual < 1e-9);
        assert!((eq.x_star[2] - 1.0).abs() < 1e-12);
        let at = PTypeAic { mu: 2.0, ..c };
        assert!(matches!(
            ptype_equilibrium(&example1(), &at),
            Err(Error::InadmissibleSetPoint { .. })
        ));
    }

    #[test]
    fn ptype_output_unstable() {
        let a = net(
            &[
                vec![-1.0, 0.0, 0.5],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, 0.5],
            ],
            &[1.0, 0.0, 0.0],
        );
        let c = PTypeAic { mu: 3.0, theta: 1.0, eta: 1.0, kp: 1.0 };
        let (eq, adm) = ptype_equilibrium(&a, &c).unwrap();
        assert_eq!(adm.regime, Regime::OutputUnstableCase);
        assert!(adm.admissible && eq.u_star > 0.0 && eq.residual < 1e-9);
    }

    #[test]
    fn exponential_branches() {
        let c = ExponentialIc { mu: 1.0, alpha: 1.0, kp: 2.0 };
        let b = exponential_equilibria(&example1(), &c).unwrap();
        assert_eq!(b.len(), 2);
        assert!((b[0].equilibrium.controller_state[0] - 0.25).abs() < 1e-12);
        assert!(b.iter().all(|br| br.equilibrium.residual < 1e-9));
        let g0 = static_gains(&example1().a, &example1().b0).unwrap().g0;
        let at = ExponentialIc { mu: g0, ..c };
        let b = exponential_equilibria(&example1(), &at).unwrap();
        assert_eq!(b[0].equilibrium, b[1].equilibrium);
        assert!(!b[0].admissibility.admissible);
        let above = ExponentialIc { mu: 3.0, ..c };
        assert_eq!(exponential_equilibria(&example1(), &above).unwrap().len(), 1);
    }

    #[test]
    fn logistic_interval_from_gains() {
        let g = StaticGains { g0: 2.0, g1: 1.0, gn: 1.0, condition: 1.0, near_singular: false };
        assert_eq!(logistic_interval(&g, 1.0), (Some(1.0), Some(2.0)));
    }

    #[test]
    fn logistic_branches() {
        let c = LogisticIc { r: 4.0 / 3.0, k: 1.0, beta: 1.0 };
        let b = logistic_equilibria(&example1(), &c).unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|br| br.equilibrium.residual < 1e-9));
        assert!(b[0].admissibility.admissible);
        let lo = b[0].admissibility.lower.unwrap();
        assert!((lo - 2.0 / 3.0).abs() < 1e-12);
        let z = b[0].equilibrium.controller_state[0];
        assert!(z > 0.0 && z < 1.0);
        let out = LogisticIc { r: 0.5, ..c };
        let b = logistic_equilibria(&example1(), &out).unwrap();
        assert!(!b[0].admissibility.admissible);
        assert!(b[0].admissibility.reason.as_ref().unwrap().contains("0.666"));
    }

    fn feedback() -> NonlinearNetwork {
        NonlinearNetwork::new(
            2,
            vec![
                RateTerm::Linear { row: 0, col: 0, coefficient: -1.0 },
                RateTerm::HillRepression {
                    target: 0,
                    regulator: 1,
                    amplitude: 1.0,
                    exponent: 1.0,
                    threshold: 1.0,
                },
                RateTerm::Linear { row: 1, col: 0, coefficient: 1.0 },
                RateTerm::Linear { row: 1, col: 1, coefficient: -1.0 },
            ],
            DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn feedback_steady_state_at_zero_effort() {
        // x2 = x1 and x1 = 1/(1 + x1) + 1
        let oracle = bisect(|x| -x + 1.0 / (1.0 + x) + 1.0, 0.0, 10.0);
        let g = nonlinear_steady_state(&feedback(), 0.0).unwrap();
        assert!((g[1] - oracle).abs() < 1e-9 && (g[0] - oracle).abs() < 1e-9);
        assert!(steady_output(&feedback(), 1e6).unwrap() < 1e-5);
    }

    #[test]
    fn feedback_inverse_matches_closed_form() {
        for r in [0.5, 1.0, 1.2] {
            let inv = nonlinear_f_inverse(&feedback(), r).unwrap();
            let x1 = 1.0 / (1.0 + r) + 1.0;
            let expected = (x1 - r) / r;
            assert!((inv.u_star - expected).abs() < 1e-8, "r = {r}");
        }
        assert!(matches!(
            nonlinear_f_inverse(&feedback(), 2.0),
            Err(Error::InadmissibleSetPoint { .. })
        ));
    }

    #[test]
    fn linear_only_matches_closed_form() {
        let nl = NonlinearNetwork::new(
            3,
            vec![
                RateTerm::Linear { row: 0, col: 0, coefficient: -1.0 },
                RateTerm::Linear { row: 0, col: 2, coefficient: 0.5 },
                RateTerm::Linear { row: 1, col: 0, coefficient: 1.0 },
                RateTerm::Linear { row: 1, col: 1, coefficient: -1.0 },
                RateTerm::Linear { row: 2, col: 1, coefficient: 1.0 },
                RateTerm::Linear { row: 2, col: 2, coefficient: -1.0 },
            ],
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
        )
        .unwrap();
        let ex = example1();
        for u in [0.0, 0.3, 2.0] {
            let g = nonlinear_steady_state(&nl, u).unwrap();
            let m = ex.a.with_output_degradation(u);
            let closed = -solve(m.as_matrix(), &ex.b0).unwrap().x;
            assert!((g - closed).amax() < 1e-9);
        }
        let gains = static_gains(&ex.a, &ex.b0).unwrap();
        let inv = nonlinear_f_inverse(&nl, 1.0).unwrap();
        assert!((inv.u_star - ptype_effort(&gains, 1.0)).abs() < 1e-9);
    }
}
