//! Structural stability certificates.
//!
//! A certificate lists every hypothesis that was checked with a witness
//! value, then a verdict:
//!
//! - `HypothesisFailed` if any hypothesis failed,
//! - `NotCertified` if the hypotheses hold but supporting evidence does not,
//! - `StructurallyStable` otherwise.
//!
//! The results behind these checks are sufficient conditions, so no
//! certificate ever claims instability.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibria::{
    airc_equilibrium, exponential_equilibria, logistic_equilibria, nonlinear_f_inverse,
    ptype_effort, ptype_equilibrium, BranchLabel, Equilibrium,
};
use crate::error::{Error, Result};
use crate::linearize::{
    jacobian_airc, jacobian_at, jacobian_exponential, jacobian_logistic, logistic_integrator_gain,
    ptype_matrix,
};
use crate::matrixlab::{
    basis, classify, eigenvalues, is_hurwitz, is_metzler, rightmost_eigenvalue, solve,
    spectral_abscissa, static_gains, RealMatrix, StabilityTag, StaticGains, METZLER_TOL,
    STAB_TOL,
};
use crate::model::{
    AircParams, ControllerSpec, ExponentialIc, LinearNetwork, LogisticIc, Model,
    NonlinearNetwork, PTypeAic, Plant,
};
use crate::transfer::{
    classify_pr, loop_transfer_from_parts, output_transfer, tf_from_state_space, PrClass, PrTag,
    TransferFunction,
};

/// `η` at which the loop transfer is probed for positive-realness.
pub const PROBE_ETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// p-type loop, Metzler and Hurwitz plant.
    PTypeStableCase,
    /// p-type loop, Metzler and output-unstable plant.
    PTypeOutputUnstableCase,
    /// p-type loop on a nonlinear plant, positive-real reduced system.
    NonlinearSpr,
    /// Nonlinear plant with Metzler, Hurwitz Jacobian at the equilibrium.
    CooperativeCorollary,
    /// Nonlinear plant with a one-way coupling to the output.
    DecoupledCorollary,
    ExponentialStableCase,
    ExponentialOutputUnstableCase,
    LogisticStableCase,
    LogisticOutputUnstableCase,
    /// Rein controller: eigenvalue evidence only.
    AircNumeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    StructurallyStable,
    NotCertified,
    HypothesisFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub witness: String,
}

impl Hypothesis {
    fn new(name: &str, passed: bool, value: Option<f64>, witness: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value,
            witness: witness.into(),
        }
    }
}

/// Rightmost eigenvalue of the Jacobian at a non-operating branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchInstability {
    pub label: BranchLabel,
    pub rightmost_real: f64,
    pub unstable: bool,
}

/// Spectral abscissa of the closed loop at one parameter pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub first: f64,
    pub second: f64,
    pub abscissa: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<StaticGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Equilibrium>,
    /// Spectral abscissa of the plant block `Ā`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant_block_abscissa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_transfer: Option<TransferFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_pr: Option<PrClass>,
    /// Loop transfer at `η = PROBE_ETA`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_pr: Option<PrClass>,
    /// `(J₁₁, J₁₂, −J₂₁, u⋆ − J₂₂)` for nonlinear plants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_system: Option<TransferFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduced_pr: Option<PrClass>,
    /// `H_n(0)` for nonlinear plants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dc_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator_gain: Option<f64>,
    /// Abscissa of the closed-loop Jacobian at the given parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobian_abscissa: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch_instability: Vec<BranchInstability>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eigen_samples: Vec<EigenSample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: Theorem,
    pub hypotheses: Vec<Hypothesis>,
    pub verdict: Verdict,
    pub evidence: Evidence,
}

impl Certificate {
    fn decide(theorem: Theorem, hypotheses: Vec<Hypothesis>, support: bool, evidence: Evidence) -> Self {
        let verdict = if hypotheses.iter().any(|h| !h.passed) {
            Verdict::HypothesisFailed
        } else if support {
            Verdict::StructurallyStable
        } else {
            Verdict::NotCertified
        };
        Self {
            theorem,
            hypotheses,
            verdict,
            evidence,
        }
    }

    fn failed(theorem: Theorem, hypotheses: Vec<Hypothesis>, evidence: Evidence) -> Self {
        debug_assert!(hypotheses.iter().any(|h| !h.passed));
        Self::decide(theorem, hypotheses, false, evidence)
    }

    pub fn is_stable(&self) -> bool {
        self.verdict == Verdict::StructurallyStable
    }

    /// Names of the hypotheses that failed.
    pub fn failed_hypotheses(&self) -> Vec<&str> {
        self.hypotheses
            .iter()
            .filter(|h| !h.passed)
            .map(|h| h.name.as_str())
            .collect()
    }
}

/// Slope of the bifurcating zero eigenvalue of the p-type Jacobian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    pub negative: bool,
    /// `−u⋆`, the slope obtained when the plant feedback through `Ā` is
    /// ignored. Reported for comparison only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoupled_guess: Option<f64>,
}

/// Effort, gains and plant block of a valid p-type operating point.
struct PTypePoint {
    u_star: f64,
    abar: DMatrix<f64>,
}

fn ptype_point(net: &LinearNetwork, ctrl: &PTypeAic) -> Result<PTypePoint> {
    let gains = static_gains(&net.a, &net.b0)?;
    let r = ctrl.setpoint();
    let u_star = ptype_effort(&gains, r);
    if !(u_star > 0.0) {
        return Err(Error::InadmissibleSetPoint {
            r,
            reason: format!("steady effort {u_star} is not positive"),
        });
    }
    let abar = net.a.with_output_degradation(u_star).into_inner();
    let abar_m = RealMatrix::new(abar.clone())?;
    let class = classify(&abar_m);
    if class.tag != StabilityTag::MetzlerHurwitz {
        return Err(Error::Precondition(format!(
            "the plant block is not Metzler and Hurwitz ({:?})",
            class.tag
        )));
    }
    Ok(PTypePoint {
        u_star,
        abar,
    })
}

fn rightmost_real(m: &DMatrix<f64>) -> f64 {
    rightmost_eigenvalue(m).map_or(f64::NEG_INFINITY, |z| z.re)
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Finite-difference slope at zero of a branch that is exactly zero there,
/// sampled at `10⁻⁶` and `2·10⁻⁶`. Anchoring at `λ(0) = 0` cancels the
/// second-order term.
fn zero_branch_slope(at: impl Fn(f64) -> f64) -> f64 {
    const H: f64 = 1e-6;
    (4.0 * at(H) - at(2.0 * H)) / (2.0 * H)
}

/// `e_nᵀ Ā⁻¹ e_n`
fn output_inverse_entry(abar: &DMatrix<f64>) -> Result<f64> {
    let n = abar.nrows();
    Ok(solve(abar, &basis(n, n - 1))?.x[n - 1])
}

/// Slope in `k_p` of the zero eigenvalue: `θ r e_nᵀĀ⁻¹e_n`.
pub fn perturbation_small_kp(net: &LinearNetwork, ctrl: &PTypeAic) -> Result<DerivativeReport> {
    let p = ptype_point(net, ctrl)?;
    let analytic = ctrl.theta * ctrl.setpoint() * output_inverse_entry(&p.abar)?;
    let at = |kp: f64| rightmost_real(&ptype_matrix(&p.abar, &PTypeAic { kp, ..*ctrl }, p.u_star));
    let finite_difference = zero_branch_slope(at);
    Ok(DerivativeReport {
        analytic,
        finite_difference,
        relative_error: relative_error(analytic, finite_difference),
        negative: analytic < 0.0,
        decoupled_guess: None,
    })
}

/// Slope in `η` of the zero eigenvalue.
///
/// With `h = e_nᵀĀ⁻¹e_n < 0` the slope is `−u⋆ · θr|h| / (μ/u⋆ + θr|h|)`,
/// which lies strictly between `−u⋆` and zero.
pub fn perturbation_small_eta(net: &LinearNetwork, ctrl: &PTypeAic) -> Result<DerivativeReport> {
    let p = ptype_point(net, ctrl)?;
    let u = p.u_star;
    let h = output_inverse_entry(&p.abar)?;
    let coupling = ctrl.theta * ctrl.setpoint() * h.abs();
    let analytic = -u * coupling / (ctrl.mu / u + coupling);
    let at = |eta: f64| rightmost_real(&ptype_matrix(&p.abar, &PTypeAic { eta, ..*ctrl }, u));
    let finite_difference = zero_branch_slope(at);
    Ok(DerivativeReport {
        analytic,
        finite_difference,
        relative_error: relative_error(analytic, finite_difference),
        negative: analytic < 0.0,
        decoupled_guess: Some(-u),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeEtaReport {
    #[serde(with = "crate::serde_util::matrix")]
    pub reduced: DMatrix<f64>,
    pub reduced_abscissa: f64,
    pub certified: bool,
    /// Rightmost real part of the full Jacobian at `η = 10⁶`.
    pub full_abscissa: Option<f64>,
    /// The full Jacobian is within `10⁻²` of the reduced one, or stable.
    pub consistent: Option<bool>,
}

impl LargeEtaReport {
    pub fn from_reduced(reduced: DMatrix<f64>) -> Self {
        let reduced_abscissa = spectral_abscissa(&reduced);
        Self {
            certified: reduced_abscissa < -STAB_TOL,
            reduced,
            reduced_abscissa,
            full_abscissa: None,
            consistent: None,
        }
    }
}

/// `[Ā, −e_n k_p r; θe_nᵀ, 0]`
pub fn large_eta_matrix(abar: &DMatrix<f64>, ctrl: &PTypeAic) -> DMatrix<f64> {
    let n = abar.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(abar);
    m[(n - 1, n)] = -ctrl.kp * ctrl.setpoint();
    m[(n, n - 1)] = ctrl.theta;
    m
}

pub fn perturbation_large_eta(net: &LinearNetwork, ctrl: &PTypeAic) -> Result<LargeEtaReport> {
    let p = ptype_point(net, ctrl)?;
    let mut report = LargeEtaReport::from_reduced(large_eta_matrix(&p.abar, ctrl));
    let full = rightmost_real(&ptype_matrix(&p.abar, &PTypeAic { eta: 1e6, ..*ctrl }, p.u_star));
    report.full_abscissa = Some(full);
    report.consistent = Some((full - report.reduced_abscissa).abs() < 1e-2 || full < 0.0);
    Ok(report)
}

fn metzler_hurwitz_hypothesis(a: &RealMatrix) -> Hypothesis {
    let class = classify(a);
    Hypothesis::new(
        "A Metzler and Hurwitz",
        class.tag == StabilityTag::MetzlerHurwitz,
        Some(class.spectral_abscissa),
        format!("{:?}, spectral abscissa {:.6e}", class.tag, class.spectral_abscissa),
    )
}

fn gains_or_failure(
    net: &LinearNetwork,
    theorem: Theorem,
    hyps: &mut Vec<Hypothesis>,
) -> std::result::Result<StaticGains, Box<Certificate>> {
    match static_gains(&net.a, &net.b0) {
        Ok(g) if !g.near_singular => Ok(g),
        Ok(g) => {
            hyps.push(Hypothesis::new(
                "A nonsingular",
                false,
                Some(g.condition),
                format!("condition number {:e}", g.condition),
            ));
            Err(Box::new(Certificate::failed(theorem, std::mem::take(hyps), Evidence::default())))
        }
        Err(e) => {
            hyps.push(Hypothesis::new("A nonsingular", false, None, e.to_string()));
            Err(Box::new(Certificate::failed(theorem, std::mem::take(hyps), Evidence::default())))
        }
    }
}

/// Positive-realness of `H_n` on `Ā` and of the loop transfer at the probe
/// `η`, plus the closed-loop abscissa at the given parameters.
fn ptype_spr_support(
    net: &LinearNetwork,
    ctrl: &PTypeAic,
    gains: StaticGains,
    ev: &mut Evidence,
) -> bool {
    ev.gains = Some(gains);
    match ptype_equilibrium(net, ctrl) {
        Ok((eq, _)) => ev.equilibrium = Some(eq),
        Err(e) => {
            ev.notes.push(format!("equilibrium: {e}"));
            return false;
        }
    }
    let u = ptype_effort(&gains, ctrl.setpoint());
    let abar = net.a.with_output_degradation(u);
    let class = classify(&abar);
    ev.plant_block_abscissa = Some(class.spectral_abscissa);
    let h = output_transfer(&abar);
    let hpr = classify_pr(&h);
    let probe = PTypeAic {
        eta: PROBE_ETA,
        ..*ctrl
    };
    let loop_ok = match loop_transfer_from_parts(&h, &probe, u) {
        Ok(g) => {
            let lpr = classify_pr(&g);
            let ok = lpr.at_least(PrTag::SPR);
            ev.loop_pr = Some(lpr);
            ok
        }
        Err(e) => {
            ev.notes.push(format!("loop transfer: {e}"));
            false
        }
    };
    let h_ok = hpr.at_least(PrTag::SPR);
    ev.output_transfer = Some(h);
    ev.output_pr = Some(hpr);
    ev.jacobian_abscissa = Some(spectral_abscissa(&ptype_matrix(abar.as_matrix(), ctrl, u)));
    class.tag == StabilityTag::MetzlerHurwitz && h_ok && loop_ok
}

/// p-type loop on a Metzler, Hurwitz plant with `0 < r < g₀`.
pub fn certify_stable_case(net: &LinearNetwork, ctrl: &PTypeAic) -> Certificate {
    let theorem = Theorem::PTypeStableCase;
    let mut hyps = vec![metzler_hurwitz_hypothesis(&net.a)];
    let gains = match gains_or_failure(net, theorem, &mut hyps) {
        Ok(g) => g,
        Err(c) => return *c,
    };
    let r = ctrl.setpoint();
    hyps.push(Hypothesis::new(
        "0 < r < g0",
        r > 0.0 && r < gains.g0,
        Some(gains.g0),
        format!("r = {r}, g0 = {}", gains.g0),
    ));
    let mut ev = Evidence {
        gains: Some(gains),
        ..Evidence::default()
    };
    if hyps.iter().any(|h| !h.passed) {
        return Certificate::failed(theorem, hyps, ev);
    }
    let support = ptype_spr_support(net, ctrl, gains, &mut ev);
    Certificate::decide(theorem, hyps, support, ev)
}

fn output_unstable_hypotheses(a: &RealMatrix) -> Vec<Hypothesis> {
    let class = classify(a);
    let metzler = is_metzler(a, METZLER_TOL);
    vec![
        Hypothesis::new("A Metzler", metzler, None, format!("{:?}", class.tag)),
        Hypothesis::new(
            "A output unstable",
            class.tag == StabilityTag::MetzlerOutputUnstable,
            Some(a.output_diagonal()),
            format!(
                "leading block abscissa {:.6e}, output diagonal {}",
                spectral_abscissa(&a.leading_block()),
                a.output_diagonal()
            ),
        ),
    ]
}

/// p-type loop on a Metzler, output-unstable plant with `g₀ < 0`.
pub fn certify_unstable_case(net: &LinearNetwork, ctrl: &PTypeAic) -> Certificate {
    let theorem = Theorem::PTypeOutputUnstableCase;
    let mut hyps = output_unstable_hypotheses(&net.a);
    let gains = match gains_or_failure(net, theorem, &mut hyps) {
        Ok(g) => g,
        Err(c) => return *c,
    };
    hyps.push(Hypothesis::new(
        "A nonsingular",
        true,
        Some(gains.condition),
        format!("condition number {:e}", gains.condition),
    ));
    hyps.push(Hypothesis::new(
        "g0 < 0",
        gains.g0 < 0.0,
        Some(gains.g0),
        format!("g0 = {}", gains.g0),
    ));
    let r = ctrl.setpoint();
    hyps.push(Hypothesis::new("r > 0", r > 0.0, Some(r), format!("r = {r}")));
    let mut ev = Evidence {
        gains: Some(gains),
        ..Evidence::default()
    };
    if hyps.iter().any(|h| !h.passed) {
        return Certificate::failed(theorem, hyps, ev);
    }
    let support = ptype_spr_support(net, ctrl, gains, &mut ev);
    Certificate::decide(theorem, hyps, support, ev)
}

/// Picks the stable or output-unstable case from the class of `A`.
pub fn certify_ptype(net: &LinearNetwork, ctrl: &PTypeAic) -> Certificate {
    if classify(&net.a).tag == StabilityTag::MetzlerOutputUnstable {
        certify_unstable_case(net, ctrl)
    } else {
        certify_stable_case(net, ctrl)
    }
}

/// Splits `J` into the leading block, the coupling column and row, and the
/// output corner.
fn partition(j: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let n = j.nrows();
    let m = n - 1;
    let j11 = j.view((0, 0), (m, m)).into_owned();
    let j12 = j.view((0, m), (m, 1)).column(0).into_owned();
    let j21 = j.view((m, 0), (1, m)).transpose().column(0).into_owned();
    (j11, j12, j21, j[(m, m)])
}

/// p-type loop on a nonlinear plant.
pub fn certify_nonlinear(net: &NonlinearNetwork, ctrl: &PTypeAic) -> Certificate {
    let r = ctrl.setpoint();
    let mut hyps = Vec::new();
    let mut ev = Evidence::default();
    let inv = match nonlinear_f_inverse(net, r) {
        Ok(inv) => {
            hyps.push(Hypothesis::new(
                "r admissible",
                true,
                Some(inv.u_star),
                format!("u* = {}", inv.u_star),
            ));
            inv
        }
        Err(e) => {
            hyps.push(Hypothesis::new("r admissible", false, None, e.to_string()));
            return Certificate::failed(Theorem::NonlinearSpr, hyps, ev);
        }
    };
    let u = inv.u_star;
    let n = net.n;
    let j = match net.jacobian(&inv.x_star) {
        Ok(j) => j,
        Err(e) => {
            hyps.push(Hypothesis::new("Jacobian defined", false, None, e.to_string()));
            return Certificate::failed(Theorem::NonlinearSpr, hyps, ev);
        }
    };
    let mut abar = j.clone();
    abar[(n - 1, n - 1)] -= u;
    ev.plant_block_abscissa = Some(spectral_abscissa(&abar));
    let plant = Plant::Nonlinear(net.clone());
    let z = DVector::from_vec(vec![ctrl.mu / (ctrl.eta * u), u / ctrl.kp]);
    let state = DVector::from_iterator(n + 2, inv.x_star.iter().chain(z.iter()).copied());
    let residual = crate::closed_loop::ClosedLoop::new(&plant, ControllerSpec::PType(*ctrl))
        .residual(&state)
        .unwrap_or(f64::NAN);
    ev.equilibrium = Some(Equilibrium {
        x_star: inv.x_star.clone(),
        controller_state: z,
        u_star: u,
        residual,
    });
    ev.jacobian_abscissa = Some(spectral_abscissa(&ptype_matrix(&abar, ctrl, u)));

    let dc = output_inverse_entry(&abar).map(|v| -v);
    let dc_ok = matches!(dc, Ok(v) if v > 0.0);
    hyps.push(Hypothesis::new(
        "H_n(0, r) > 0",
        dc_ok,
        dc.as_ref().ok().copied(),
        match &dc {
            Ok(v) => format!("H_n(0) = {v}"),
            Err(e) => e.to_string(),
        },
    ));
    ev.output_dc_gain = dc.ok();
    if !dc_ok {
        return Certificate::failed(Theorem::NonlinearSpr, hyps, ev);
    }

    // reduced system (J₁₁, J₁₂, −J₂₁, u⋆ − J₂₂)
    let (j11, j12, j21, j22) = partition(&j);
    let t = tf_from_state_space(&j11, &j12, &(-&j21), u - j22);
    let t_ok = match &t {
        Ok(t) => {
            let pr = classify_pr(t);
            let ok = pr.at_least(PrTag::SPR);
            ev.reduced_pr = Some(pr);
            ok
        }
        Err(e) => {
            ev.notes.push(format!("reduced system: {e}"));
            false
        }
    };
    ev.reduced_system = t.ok();
    let hurwitz = is_hurwitz(&j);
    let jm = RealMatrix::new(j.clone()).ok();
    let cooperative = jm.as_ref().is_some_and(|m| is_metzler(m, METZLER_TOL));
    let decoupled = j12.amax() == 0.0 || j21.amax() == 0.0;
    let abar_ok = is_hurwitz(&abar);

    if cooperative && hurwitz {
        ev.notes
            .push("Jacobian at the equilibrium is Metzler and Hurwitz".into());
        hyps.push(Hypothesis::new(
            "J* Metzler and Hurwitz",
            true,
            Some(spectral_abscissa(&j)),
            "checked at the equilibrium",
        ));
        return Certificate::decide(Theorem::CooperativeCorollary, hyps, abar_ok, ev);
    }
    if decoupled && hurwitz {
        hyps.push(Hypothesis::new(
            "J12 = 0 or J21 = 0, J* Hurwitz",
            true,
            Some(spectral_abscissa(&j)),
            format!("|J12| = {}, |J21| = {}", j12.amax(), j21.amax()),
        ));
        return Certificate::decide(Theorem::DecoupledCorollary, hyps, abar_ok, ev);
    }
    hyps.push(Hypothesis::new(
        "reduced system SPR",
        t_ok,
        ev.reduced_pr.as_ref().and_then(|p| p.evidence.delta),
        ev.reduced_pr
            .as_ref()
            .map_or("not available".into(), |p| format!("{:?}", p.tag)),
    ));
    Certificate::decide(Theorem::NonlinearSpr, hyps, abar_ok, ev)
}

fn branch_instability(
    plant: &Plant,
    ctrl: ControllerSpec,
    label: BranchLabel,
    eq: &Equilibrium,
) -> Option<BranchInstability> {
    let j = jacobian_at(plant, ctrl, &eq.state()).ok()?;
    let rightmost_real = rightmost_real(&j.matrix);
    Some(BranchInstability {
        label,
        rightmost_real,
        unstable: rightmost_real > STAB_TOL,
    })
}

/// Hypotheses shared by the exponential and logistic certificates. Returns
/// the theorem chosen from the class of `A`.
fn integral_case_hypotheses(
    net: &LinearNetwork,
    gains: &StaticGains,
    stable: Theorem,
    unstable: Theorem,
) -> (Theorem, Vec<Hypothesis>) {
    if classify(&net.a).tag == StabilityTag::MetzlerOutputUnstable {
        let mut hyps = output_unstable_hypotheses(&net.a);
        hyps.push(Hypothesis::new(
            "A nonsingular",
            !gains.near_singular,
            Some(gains.condition),
            format!("condition number {:e}", gains.condition),
        ));
        hyps.push(Hypothesis::new(
            "g0 < 0",
            gains.g0 < 0.0,
            Some(gains.g0),
            format!("g0 = {}", gains.g0),
        ));
        (unstable, hyps)
    } else {
        (stable, vec![metzler_hurwitz_hypothesis(&net.a)])
    }
}

fn plant_block_support(net: &LinearNetwork, u: f64, ev: &mut Evidence) -> bool {
    let abar = net.a.with_output_degradation(u);
    let class = classify(&abar);
    ev.plant_block_abscissa = Some(class.spectral_abscissa);
    let h = output_transfer(&abar);
    let pr = classify_pr(&h);
    let ok = class.tag == StabilityTag::MetzlerHurwitz && pr.at_least(PrTag::SPR);
    ev.output_transfer = Some(h);
    ev.output_pr = Some(pr);
    ok
}

/// Exponential integral controller.
pub fn certify_exponential(net: &LinearNetwork, ctrl: &ExponentialIc) -> Certificate {
    let mut hyps = Vec::new();
    let gains = match gains_or_failure(net, Theorem::ExponentialStableCase, &mut hyps) {
        Ok(g) => g,
        Err(c) => return *c,
    };
    let (theorem, mut hyps) = integral_case_hypotheses(
        net,
        &gains,
        Theorem::ExponentialStableCase,
        Theorem::ExponentialOutputUnstableCase,
    );
    if theorem == Theorem::ExponentialStableCase {
        hyps.push(Hypothesis::new(
            "mu < g0",
            ctrl.mu < gains.g0,
            Some(gains.g0),
            format!("mu = {}, g0 = {}", ctrl.mu, gains.g0),
        ));
    }
    let mut ev = Evidence {
        gains: Some(gains),
        ..Evidence::default()
    };
    let plant = Plant::Linear(net.clone());
    let spec = ControllerSpec::Exponential(*ctrl);
    let branches = match exponential_equilibria(net, ctrl) {
        Ok(b) => b,
        Err(e) => {
            hyps.push(Hypothesis::new("equilibria computed", false, None, e.to_string()));
            return Certificate::failed(theorem, hyps, ev);
        }
    };
    for b in &branches {
        if b.label != BranchLabel::Positive {
            ev.branch_instability
                .extend(branch_instability(&plant, spec, b.label, &b.equilibrium));
        }
    }
    if hyps.iter().any(|h| !h.passed) {
        return Certificate::failed(theorem, hyps, ev);
    }
    let Some(pos) = branches
        .iter()
        .find(|b| b.label == BranchLabel::Positive && b.admissibility.admissible)
    else {
        ev.notes.push("no admissible positive equilibrium".into());
        return Certificate::decide(theorem, hyps, false, ev);
    };
    let eq = pos.equilibrium.clone();
    let gain = ctrl.alpha * eq.controller_state[0];
    ev.integrator_gain = Some(gain);
    let mut support = gain > 0.0 && plant_block_support(net, eq.u_star, &mut ev);
    match jacobian_exponential(&plant, ctrl, &eq) {
        Ok(j) => ev.jacobian_abscissa = Some(spectral_abscissa(&j.matrix)),
        Err(e) => {
            ev.notes.push(e.to_string());
            support = false;
        }
    }
    ev.equilibrium = Some(eq);
    Certificate::decide(theorem, hyps, support, ev)
}

/// Logistic integral controller.
pub fn certify_logistic(net: &LinearNetwork, ctrl: &LogisticIc) -> Certificate {
    let mut hyps = Vec::new();
    let gains = match gains_or_failure(net, Theorem::LogisticStableCase, &mut hyps) {
        Ok(g) => g,
        Err(c) => return *c,
    };
    let (theorem, mut hyps) = integral_case_hypotheses(
        net,
        &gains,
        Theorem::LogisticStableCase,
        Theorem::LogisticOutputUnstableCase,
    );
    let mut ev = Evidence {
        gains: Some(gains),
        ..Evidence::default()
    };
    let plant = Plant::Linear(net.clone());
    let spec = ControllerSpec::Logistic(*ctrl);
    let branches = match logistic_equilibria(net, ctrl) {
        Ok(b) => b,
        Err(e) => {
            hyps.push(Hypothesis::new("equilibria computed", false, None, e.to_string()));
            return Certificate::failed(theorem, hyps, ev);
        }
    };
    let pos = &branches[0];
    let z = pos.equilibrium.controller_state[0];
    let (lower, upper) = (pos.admissibility.lower, pos.admissibility.upper);
    let show = |v: Option<f64>, inf: &str| v.map_or(inf.to_string(), |v| v.to_string());
    hyps.push(Hypothesis::new(
        "r inside the admissible interval",
        z > 0.0 && z < ctrl.beta,
        Some(z),
        format!(
            "r = {}, interval ({}, {}), z* = {z}",
            ctrl.r,
            show(lower, "-inf"),
            show(upper, "inf")
        ),
    ));
    for b in &branches[1..] {
        ev.branch_instability
            .extend(branch_instability(&plant, spec, b.label, &b.equilibrium));
    }
    if hyps.iter().any(|h| !h.passed) {
        return Certificate::failed(theorem, hyps, ev);
    }
    let eq = pos.equilibrium.clone();
    let gain = logistic_integrator_gain(ctrl, z);
    ev.integrator_gain = Some(gain);
    let mut support =
        gain > 0.0 && pos.admissibility.admissible && plant_block_support(net, z, &mut ev);
    match jacobian_logistic(&plant, ctrl, &eq) {
        Ok(j) => ev.jacobian_abscissa = Some(spectral_abscissa(&j.matrix)),
        Err(e) => {
            ev.notes.push(e.to_string());
            support = false;
        }
    }
    ev.equilibrium = Some(eq);
    Certificate::decide(theorem, hyps, support, ev)
}

/// Log-spaced grid of `count` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Rein controller: never certified; reports the closed-loop spectrum at the
/// given parameters and over a `(k_p, η)` grid.
pub fn certify_airc(net: &LinearNetwork, ctrl: &AircParams) -> Certificate {
    let theorem = Theorem::AircNumeric;
    let plant = Plant::Linear(net.clone());
    let mut ev = Evidence::default();
    let eq = match airc_equilibrium(net, ctrl) {
        Ok(eq) => eq,
        Err(e) => {
            let hyps = vec![Hypothesis::new("equilibrium exists", false, None, e.to_string())];
            return Certificate::failed(theorem, hyps, ev);
        }
    };
    let hyps = vec![Hypothesis::new(
        "equilibrium exists",
        true,
        Some(eq.residual),
        format!("residual {:e}", eq.residual),
    )];
    if let Ok(j) = jacobian_airc(&plant, ctrl, &eq) {
        ev.jacobian_abscissa = Some(spectral_abscissa(&j.matrix));
    }
    ev.gains = static_gains(&net.a, &net.b0).ok();
    ev.equilibrium = Some(eq);
    let grid = log_grid(1e-3, 1e3, 5);
    for &kp in &grid {
        for &eta in &grid {
            let c = AircParams { kp, eta, ..*ctrl };
            let abscissa = airc_equilibrium(net, &c)
                .and_then(|e| jacobian_airc(&plant, &c, &e))
                .map_or(f64::NAN, |j| spectral_abscissa(&j.matrix));
            ev.eigen_samples.push(EigenSample {
                first: kp,
                second: eta,
                abscissa,
            });
        }
    }
    ev.notes
        .push("no structural result covers this controller; samples are (kp, eta)".into());
    Certificate::decide(theorem, hyps, false, ev)
}

/// Certificate for any model, dispatching on plant and controller.
pub fn certify_model(model: &Model) -> Certificate {
    match (&model.plant, model.controller) {
        (Plant::Linear(l), ControllerSpec::PType(c)) => certify_ptype(l, &c),
        (Plant::Nonlinear(nl), ControllerSpec::PType(c)) => certify_nonlinear(nl, &c),
        (Plant::Linear(l), ControllerSpec::Airc(c)) => certify_airc(l, &c),
        (Plant::Linear(l), ControllerSpec::Exponential(c)) => certify_exponential(l, &c),
        (Plant::Linear(l), ControllerSpec::Logistic(c)) => certify_logistic(l, &c),
        (Plant::Nonlinear(_), ctrl) => {
            let theorem = match ctrl {
                ControllerSpec::Exponential(_) => Theorem::ExponentialStableCase,
                ControllerSpec::Logistic(_) => Theorem::LogisticStableCase,
                _ => Theorem::AircNumeric,
            };
            Certificate::failed(
                theorem,
                vec![Hypothesis::new(
                    "linear plant",
                    false,
                    None,
                    format!("{} controller is only analysed on linear plants", ctrl.kind()),
                )],
                Evidence::default(),
            )
        }
    }
}

/// Closed-loop eigenvalues of a p-type loop, for reports.
pub fn ptype_spectrum(net: &LinearNetwork, ctrl: &PTypeAic) -> Result<Vec<Complex64>> {
    let p = ptype_point(net, ctrl)?;
    Ok(eigenvalues(&ptype_matrix(&p.abar, ctrl, p.u_star)))
}

/// Abscissa of the p-type Jacobian, whatever the class of `Ā`.
pub fn ptype_abscissa(net: &LinearNetwork, ctrl: &PTypeAic) -> Result<f64> {
    let gains = static_gains(&net.a, &net.b0)?;
    let u = ptype_effort(&gains, ctrl.setpoint());
    if !(u > 0.0) {
        return Err(Error::InadmissibleSetPoint {
            r: ctrl.setpoint(),
            reason: format!("steady effort {u} is not positive"),
        });
    }
    let abar = net.a.with_output_degradation(u);
    Ok(spectral_abscissa(&ptype_matrix(abar.as_matrix(), ctrl, u)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateTerm;

    fn linear(rows: &[Vec<f64>], b0: &[f64]) -> LinearNetwork {
        LinearNetwork::new(
            RealMatrix::from_rows(rows).unwrap(),
            DVector::from_vec(b0.to_vec()),
        )
        .unwrap()
    }

    fn maturation(alpha: f64, sigma: f64, b: f64) -> LinearNetwork {
        linear(
            &[
                vec![-1.0, 0.0, alpha],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, sigma - 1.0],
            ],
            &[b, 0.0, 0.0],
        )
    }

    fn ptype(r: f64) -> PTypeAic {
        PTypeAic { mu: r, theta: 1.0, eta: 1.0, kp: 1.0 }
    }

    #[test]
    fn stable_case_examples() {
        let c = certify_stable_case(&maturation(0.5, 0.0, 1.0), &ptype(1.0));
        assert_eq!(c.verdict, Verdict::StructurallyStable, "{c:#?}");
        let c = certify_stable_case(&maturation(0.5, 0.0, 1.0), &ptype(3.0));
        assert_eq!(c.verdict, Verdict::HypothesisFailed);
        assert_eq!(c.failed_hypotheses(), vec!["0 < r < g0"]);
        let c = certify_stable_case(&maturation(1.5, 0.0, 1.0), &ptype(1.0));
        assert!(c.failed_hypotheses().contains(&"A Metzler and Hurwitz"));
    }

    #[test]
    fn unstable_case_examples() {
        let c = certify_unstable_case(&maturation(0.5, 1.5, 1.0), &ptype(3.0));
        assert_eq!(c.verdict, Verdict::StructurallyStable, "{c:#?}");
        let c = certify_unstable_case(&maturation(0.5, 1.5, 0.0), &ptype(3.0));
        assert_eq!(c.failed_hypotheses(), vec!["g0 < 0"]);
        let c = certify_unstable_case(&maturation(0.5, 0.0, 1.0), &ptype(1.0));
        assert!(c.failed_hypotheses().contains(&"A output unstable"));
    }

    #[test]
    fn scalar_derivatives() {
        let net = linear(&[vec![-1.0]], &[2.0]);
        let d = perturbation_small_kp(&net, &ptype(1.0)).unwrap();
        assert!((d.analytic + 0.5).abs() < 1e-14);
        assert!(d.relative_error < 1e-3);
        let d = perturbation_small_eta(&net, &ptype(1.0)).unwrap();
        assert!((d.analytic + 1.0 / 3.0).abs() < 1e-14);
        assert!(d.relative_error < 1e-3, "{d:?}");
        assert_eq!(d.decoupled_guess, Some(-1.0));
    }

    #[test]
    fn large_eta_reports() {
        let net = linear(&[vec![-1.0]], &[2.0]);
        for kp in [1e-3, 1.0, 1e3] {
            let rep = perturbation_large_eta(&net, &PTypeAic { kp, ..ptype(1.0) }).unwrap();
            assert!(rep.certified && rep.consistent == Some(true));
        }
        let rep = perturbation_large_eta(&maturation(0.5, 0.0, 1.0), &ptype(1.0)).unwrap();
        assert!(rep.certified);
        let bad = LargeEtaReport::from_reduced(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 0.0]));
        assert!(!bad.certified);
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
    fn feedback_certificates() {
        let c = certify_nonlinear(&feedback(), &ptype(1.0));
        assert_eq!(c.verdict, Verdict::StructurallyStable, "{c:#?}");
        assert_eq!(c.theorem, Theorem::NonlinearSpr);
        assert!(c.evidence.reduced_pr.as_ref().unwrap().at_least(PrTag::SPR));
        let c = certify_nonlinear(&feedback(), &ptype(2.0));
        assert_eq!(c.failed_hypotheses(), vec!["r admissible"]);
    }

    #[test]
    fn integral_controllers() {
        let net = maturation(0.5, 0.0, 1.0);
        let c = certify_exponential(&net, &ExponentialIc { mu: 1.0, alpha: 1.0, kp: 1.0 });
        assert_eq!(c.verdict, Verdict::StructurallyStable, "{c:#?}");
        assert!(c.evidence.branch_instability.iter().all(|b| b.unstable));
        let c = certify_logistic(&net, &LogisticIc { r: 4.0 / 3.0, k: 1.0, beta: 1.0 });
        assert_eq!(c.verdict, Verdict::StructurallyStable, "{c:#?}");
        assert_eq!(c.evidence.branch_instability.len(), 2);
        assert!(c.evidence.branch_instability.iter().all(|b| b.unstable));
        let c = certify_logistic(&net, &LogisticIc { r: 0.5, k: 1.0, beta: 1.0 });
        assert_eq!(c.verdict, Verdict::HypothesisFailed);
        assert!(c.hypotheses.last().unwrap().witness.contains("0.666"));
    }

    #[test]
    fn airc_is_never_certified() {
        let c = certify_airc(
            &maturation(0.5, 0.0, 1.0),
            &AircParams { mu: 1.0, theta: 1.0, eta: 1.0, ki: 1.0, kp: 1.0 },
        );
        assert_eq!(c.verdict, Verdict::NotCertified);
        assert_eq!(c.evidence.eigen_samples.len(), 25);
    }

    #[test]
    fn grid() {
        let g = log_grid(1e-3, 1e3, 13);
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-3).abs() < 1e-18 && (g[12] - 1e3).abs() < 1e-9);
        assert!((g[6] - 1.0).abs() < 1e-12);
    }
}
