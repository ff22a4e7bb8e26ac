//! SISO rational transfer functions and their positive-realness.
//!
//! The central object is `H_n(s) = e_nᵀ(sI - M)⁻¹e_n`, the response of the
//! output species to a perturbation of its own degradation. For a Metzler,
//! Hurwitz `M` it is strictly positive real, which is what makes the p-type
//! integral loops stable for every controller gain.
//!
//! Positivity of `Re H(jω)` on the whole half-line is decided on the even
//! polynomial `q(x) = Re[N(j√x) D(-j√x)]`: its minimum over `x ≥ 0` is
//! attained at `x = 0` or at a real critical point, so evaluating `q` at the
//! roots of `q'` settles the sign without a frequency grid.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixlab::{
    basis, classify, diagonal_lyapunov, eigenvalues, static_gains, symmetric_max_eigenvalue,
    RealMatrix, StabilityTag,
};
use crate::model::PTypeAic;
use crate::poly::Polynomial;

/// Relative dead zone on values of `q(x)` against `Σ|q_k| x^k`.
const AXIS_REL_TOL: f64 = 1e-10;
/// Poles with `|Re p| ≤ POLE_TOL (1 + |p|)` sit on the imaginary axis.
const POLE_TOL: f64 = 1e-9;

/// `H(s) = gain · num(s) / den(s)` with monic `num` and `den`.
///
/// Serialized as `{"num": [...], "den": [...], "gain": K}`, ascending powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub num: Polynomial,
    pub den: Polynomial,
    pub gain: f64,
}

impl TransferFunction {
    /// Normalizes both polynomials to be monic, moving the ratio of leading
    /// coefficients into the gain.
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Precondition("zero denominator".into()));
        }
        if !num.is_zero() && num.degree() > den.degree() {
            return Err(Error::Improper {
                num: num.degree(),
                den: den.degree(),
            });
        }
        let dl = den.leading();
        if num.is_zero() {
            return Ok(Self {
                num,
                den: den.scale(1.0 / dl),
                gain: 0.0,
            });
        }
        let nl = num.leading();
        Ok(Self {
            num: num.scale(1.0 / nl),
            den: den.scale(1.0 / dl),
            gain: nl / dl,
        })
    }

    /// Reads a serialized function and re-normalizes it.
    pub fn from_parts(num: Vec<f64>, den: Vec<f64>, gain: f64) -> Result<Self> {
        Self::new(Polynomial::new(num).scale(gain), Polynomial::new(den))
    }

    /// `gain · num(s)`
    pub fn numerator(&self) -> Polynomial {
        self.num.scale(self.gain)
    }

    pub fn relative_degree(&self) -> Option<i64> {
        if self.num.is_zero() {
            None
        } else {
            Some(self.den.degree() as i64 - self.num.degree() as i64)
        }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.num.eval_complex(s) * self.gain / self.den.eval_complex(s)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        self.num.roots()
    }

    /// `H(∞)`
    pub fn feedthrough(&self) -> f64 {
        if self.relative_degree() == Some(0) {
            self.gain
        } else {
            0.0
        }
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(self.numerator().scale(c), self.den.clone())
    }

    /// Sum over a common (product) denominator.
    pub fn add(&self, other: &TransferFunction) -> Result<Self> {
        let num = &(&self.numerator() * &other.den) + &(&other.numerator() * &self.den);
        Self::new(num, &self.den * &other.den)
    }

    /// Cancels numerator and denominator roots that coincide.
    ///
    /// A zero `z` and pole `p` cancel when they agree to `1e-6 (1+|z|)` and
    /// both polynomials nearly vanish at the midpoint (relative residual
    /// `1e-10`). Returns the reduced function and the cancelled roots.
    pub fn reduce(&self) -> (TransferFunction, Vec<Complex64>) {
        let mut num = self.num.clone();
        let mut den = self.den.clone();
        let mut cancelled = Vec::new();
        'outer: loop {
            if num.degree() == 0 || den.degree() == 0 {
                break;
            }
            let zeros = num.roots();
            let poles = den.roots();
            for z in &zeros {
                for p in &poles {
                    if (z - p).norm() > 1e-6 * (1.0 + z.norm()) {
                        continue;
                    }
                    let mut mid = (z + p) * 0.5;
                    if mid.im.abs() <= 1e-9 * (1.0 + mid.norm()) {
                        mid.im = 0.0;
                    }
                    let small = |q: &Polynomial| {
                        q.eval_complex(mid).norm() <= 1e-10 * q.magnitude_bound(mid.norm())
                    };
                    if small(&num) && small(&den) {
                        num = num.deflate(mid);
                        den = den.deflate(mid);
                        cancelled.push(mid);
                        if mid.im != 0.0 {
                            cancelled.push(mid.conj());
                        }
                        continue 'outer;
                    }
                }
            }
            break;
        }
        let reduced = if cancelled.is_empty() {
            self.clone()
        } else {
            TransferFunction::new(num.scale(self.gain), den).unwrap_or_else(|_| self.clone())
        };
        (reduced, cancelled)
    }
}

/// `cᵀ(sI - M)⁻¹b + d`, via the Faddeev–LeVerrier recursion.
///
/// `M` may be `0×0`, in which case the result is the constant `d`.
pub fn tf_from_state_space(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    d: f64,
) -> Result<TransferFunction> {
    let n = m.nrows();
    if !m.is_square() || b.len() != n || c.len() != n {
        return Err(Error::Dimension(format!(
            "state matrix {}x{}, b of length {}, c of length {}",
            m.nrows(),
            m.ncols(),
            b.len(),
            c.len()
        )));
    }
    // det(sI - M) = Σ den[k] s^k;  adj(sI - M) = Σ_{k=1..n} N_k s^(n-k)
    let mut den = vec![0.0; n + 1];
    den[n] = 1.0;
    let mut num = vec![0.0; n + 1];
    let mut nk = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        nk = m * &nk + DMatrix::identity(n, n) * den[n - k + 1];
        num[n - k] = c.dot(&(&nk * b));
        den[n - k] = -(m * &nk).trace() / k as f64;
    }
    let den = Polynomial::new(den);
    let num = &Polynomial::new(num) + &den.scale(d);
    TransferFunction::new(num, den)
}

/// `H(s) = e_nᵀ(sI - M)⁻¹e_n`, unreduced: the numerator is `det(sI - SᵀMS)`.
pub fn output_transfer(m: &RealMatrix) -> TransferFunction {
    let n = m.dim();
    let en = basis(n, n - 1);
    tf_from_state_space(m.as_matrix(), &en, &en, 0.0)
        .expect("dimensions are consistent by construction")
}

/// Zeros of `H(s) = e_nᵀ(sI - M)⁻¹e_n`: the spectrum of the leading block.
pub fn transmission_zeros(m: &RealMatrix) -> Vec<Complex64> {
    eigenvalues(&m.leading_block())
}

/// `Re H(jω)`, computed as `Re[N(jω) D(-jω)] / |D(jω)|²`.
pub fn re_on_axis(h: &TransferFunction, omega: f64) -> Result<f64> {
    let s = Complex64::new(0.0, omega);
    let d = h.den.eval_complex(s);
    if d.norm() <= 1e-13 * h.den.magnitude_bound(omega) {
        return Err(Error::PoleOnAxis { omega });
    }
    let n = h.num.eval_complex(s);
    Ok(h.gain * (n * d.conj()).re / d.norm_sqr())
}

/// `lim_{ω→∞} ω² Re H(jω)` for a relative-degree-one function, from the
/// coefficients: `K (N_{n-1} D_{n-1} - N_{n-2} D_n)`, which equals
/// `K (Σ zeros - Σ poles)`.
pub fn infinity_limit(h: &TransferFunction) -> Result<f64> {
    match h.relative_degree() {
        Some(1) => {}
        Some(r) => return Err(Error::RelativeDegreeNotOne(r)),
        None => return Err(Error::RelativeDegreeNotOne(i64::MIN)),
    }
    let n = h.den.degree();
    let n_top = h.num.coeff(n - 1);
    let n_next = if n >= 2 { h.num.coeff(n - 2) } else { 0.0 };
    Ok(h.gain * (n_top * h.den.coeff(n - 1) - n_next * h.den.coeff(n)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrTag {
    NotPR,
    PR,
    WSPR,
    SPR,
    StrongSPR,
}

/// Simple or repeated pole on the imaginary axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisPole {
    pub omega: f64,
    pub simple: bool,
    /// `lim (s - jω) H(s)` as `[re, im]`.
    pub residue: [f64; 2],
}

/// Record of every sub-condition behind a [`PrClass`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrEvidence {
    pub cancelled: Vec<[f64; 2]>,
    pub poles: Vec<[f64; 2]>,
    pub poles_closed_left: bool,
    pub poles_open_left: bool,
    pub axis_poles: Vec<AxisPole>,
    pub axis_residues_ok: bool,
    /// `Re H(jω) ≥ 0` on `[0, ∞)`.
    pub re_nonnegative: bool,
    /// `Re H(jω) > 0` on `[0, ∞)`.
    pub re_positive: bool,
    /// Frequency where `Re H` was found smallest (most negative if violated).
    pub worst_omega: f64,
    pub worst_value: f64,
    pub feedthrough: f64,
    /// `lim ω² Re H(jω)`; infinite when `H(∞) ≠ 0`.
    pub tail_limit: f64,
    /// `inf_{ω ∈ [0, ∞]} Re H(jω)`, only computed for WSPR functions.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrClass {
    pub tag: PrTag,
    pub evidence: PrEvidence,
}

impl PrClass {
    pub fn at_least(&self, tag: PrTag) -> bool {
        self.tag >= tag
    }
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Decides the positive-real class of `h`, strongest class first.
pub fn classify_pr(h: &TransferFunction) -> PrClass {
    let (h, cancelled) = h.reduce();
    let poles = h.poles();

    let on_axis = |p: &Complex64| p.re.abs() <= POLE_TOL * (1.0 + p.norm());
    let poles_closed_left = poles.iter().all(|p| p.re < 0.0 || on_axis(p));
    let poles_open_left = poles.iter().all(|p| p.re < 0.0 && !on_axis(p));

    let axis_poles: Vec<AxisPole> = poles
        .iter()
        .filter(|p| on_axis(p))
        .map(|p| {
            let jw = Complex64::new(0.0, p.im);
            let repeated = poles
                .iter()
                .filter(|q| (*q - p).norm() <= 1e-6 * (1.0 + p.norm()))
                .count()
                > 1;
            let (quot, _) = h.den.synthetic_division(jw);
            let qv = quot
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * jw + c);
            let residue = h.num.eval_complex(jw) * h.gain / qv;
            AxisPole {
                omega: p.im,
                simple: !repeated,
                residue: pair(residue),
            }
        })
        .collect();
    let axis_residues_ok = axis_poles.iter().all(|a| {
        let r = Complex64::new(a.residue[0], a.residue[1]);
        a.simple && r.re >= -1e-9 * (1.0 + r.norm()) && r.im.abs() <= 1e-6 * (1.0 + r.norm())
    });

    let axis = axis_sign(&h);
    let feedthrough = h.feedthrough();
    let tail_limit = tail_limit(&h);

    let wspr = poles_open_left && axis.positive;
    let delta = wspr.then(|| infimum_on_axis(&h));
    let tag = if wspr && delta.is_some_and(|d| d > 1e-12) {
        PrTag::StrongSPR
    } else if wspr && (feedthrough > 0.0 || tail_limit > 0.0) {
        PrTag::SPR
    } else if wspr {
        PrTag::WSPR
    } else if poles_closed_left && axis_residues_ok && axis.nonnegative {
        PrTag::PR
    } else {
        PrTag::NotPR
    };

    PrClass {
        tag,
        evidence: PrEvidence {
            cancelled: cancelled.into_iter().map(pair).collect(),
            poles: poles.into_iter().map(pair).collect(),
            poles_closed_left,
            poles_open_left,
            axis_poles,
            axis_residues_ok,
            re_nonnegative: axis.nonnegative,
            re_positive: axis.positive,
            worst_omega: axis.worst_x.sqrt(),
            worst_value: axis.worst_value,
            feedthrough,
            tail_limit,
            delta,
        },
    }
}

/// `K · N(s) D(-s)`, whose real part on the axis carries the sign of `Re H`.
fn axis_numerator(h: &TransferFunction) -> Polynomial {
    (&h.numerator() * &h.den.reflect()).real_part_on_axis()
}

/// `|D(jω)|²` as a polynomial in `x = ω²`.
fn axis_denominator(h: &TransferFunction) -> Polynomial {
    (&h.den * &h.den.reflect()).real_part_on_axis()
}

struct AxisSign {
    nonnegative: bool,
    positive: bool,
    worst_x: f64,
    worst_value: f64,
}

fn axis_sign(h: &TransferFunction) -> AxisSign {
    let q = axis_numerator(h).trimmed(1e-14);
    if q.is_zero() {
        return AxisSign {
            nonnegative: true,
            positive: false,
            worst_x: 0.0,
            worst_value: 0.0,
        };
    }
    let mut candidates = vec![0.0];
    candidates.extend(
        q.derivative()
            .trimmed(1e-14)
            .roots()
            .into_iter()
            .chain(q.roots())
            .filter(|z| z.re >= 0.0)
            .map(|z| z.re),
    );
    // q → -∞ settles the sign; the witness only has to be clearly negative
    let negative_tail = q.degree() >= 1 && q.leading() < 0.0;
    if negative_tail {
        let mut x = candidates.iter().copied().fold(1.0, f64::max);
        while q.eval(x) / q.magnitude_bound(x) >= -AXIS_REL_TOL && x < 1e300 {
            x *= 2.0;
        }
        candidates.push(x);
    }

    let mut nonnegative = !negative_tail;
    let mut positive = !negative_tail;
    let mut worst_x = 0.0;
    let mut worst_rel = f64::INFINITY;
    for &x in &candidates {
        let v = q.eval(x);
        let bound = q.magnitude_bound(x);
        let rel = v / bound;
        if rel < -AXIS_REL_TOL {
            nonnegative = false;
        }
        if rel <= AXIS_REL_TOL {
            positive = false;
        }
        if rel < worst_rel {
            worst_rel = rel;
            worst_x = x;
        }
    }
    let d = axis_denominator(h);
    let dv = d.eval(worst_x);
    AxisSign {
        nonnegative,
        positive,
        worst_x,
        worst_value: if dv > 0.0 { q.eval(worst_x) / dv } else { 0.0 },
    }
}

/// `lim_{x→∞} x q(x) / d(x)`.
fn tail_limit(h: &TransferFunction) -> f64 {
    let q = axis_numerator(h);
    let d = axis_denominator(h);
    let m = d.degree();
    if q.is_zero() {
        return 0.0;
    }
    if q.degree() >= m {
        return q.leading().signum() * f64::INFINITY;
    }
    if m == 0 {
        return 0.0;
    }
    q.coeff(m - 1) / d.leading()
}

/// Global infimum of `q(x)/d(x)` over `[0, ∞]`, from its critical points.
fn infimum_on_axis(h: &TransferFunction) -> f64 {
    let q = axis_numerator(h);
    let d = axis_denominator(h);
    let ratio = |x: f64| q.eval(x) / d.eval(x);
    let at_infinity = if q.degree() == d.degree() && !q.is_zero() {
        q.leading() / d.leading()
    } else {
        0.0
    };
    let crit = &(&q.derivative() * &d) - &(&q * &d.derivative());
    crit.trimmed(1e-14)
        .roots()
        .into_iter()
        .filter(|z| z.re >= 0.0)
        .map(|z| ratio(z.re))
        .chain([ratio(0.0), at_infinity])
        .fold(f64::INFINITY, f64::min)
}

/// Loop transfer `θ r H_n(s) + μ s / (u⋆ (s + η u⋆))` seen by the integrator
/// `k_p / s` in the linearized p-type closed loop, with `H_n` built on
/// `Ā = A - e_n e_nᵀ u⋆`.
pub fn loop_transfer(a: &RealMatrix, b0: &DVector<f64>, ctrl: &PTypeAic) -> Result<TransferFunction> {
    let gains = static_gains(a, b0)?;
    let r = ctrl.setpoint();
    let u_star = (gains.g0 - r) / (gains.gn * r);
    if !(u_star > 0.0) {
        return Err(Error::InadmissibleSetPoint {
            r,
            reason: format!("steady control effort u* = {u_star} is not positive"),
        });
    }
    let h_n = output_transfer(&a.with_output_degradation(u_star));
    loop_transfer_from_parts(&h_n, ctrl, u_star)
}

/// Same as [`loop_transfer`] with `H_n` and `u⋆` already at hand.
pub fn loop_transfer_from_parts(
    h_n: &TransferFunction,
    ctrl: &PTypeAic,
    u_star: f64,
) -> Result<TransferFunction> {
    let plant_part = h_n.scale(ctrl.theta * ctrl.setpoint())?;
    let controller_part = TransferFunction::new(
        Polynomial::new(vec![0.0, ctrl.mu / u_star]),
        Polynomial::new(vec![ctrl.eta * u_star, 1.0]),
    )?;
    plant_part.add(&controller_part)
}

/// Outcome of the diagonal construction for `PB = Cᵀ`, `AᵀP + PA + 2εCᵀC ≺ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmiReport {
    pub p_diagonal: Vec<f64>,
    /// Largest eigenvalue of `MᵀP + PM`.
    pub lyapunov_max_eigenvalue: f64,
    /// A strictly feasible `ε`.
    pub epsilon: f64,
    /// Bisection estimate of the supremum of feasible `ε`.
    pub epsilon_sup: f64,
    /// `‖Pb - c‖∞`
    pub equality_residual: f64,
}

/// One-sided WSPR certificate for `(M, b, c)`.
///
/// Only the case `b = c = e_k` with `M` Metzler and Hurwitz is constructive:
/// a diagonal Lyapunov matrix rescaled so that `P_kk = 1` satisfies the
/// equality constraint. Anything else returns `NoCertificateFound`, which
/// does not mean the LMI is infeasible.
pub fn wspr_lmi_check(m: &RealMatrix, b: &DVector<f64>, c: &DVector<f64>) -> Result<LmiReport> {
    let class = classify(m);
    if class.tag != StabilityTag::MetzlerHurwitz {
        return Err(Error::Precondition(format!(
            "diagonal construction needs a Metzler Hurwitz matrix, got {:?}",
            class.tag
        )));
    }
    let n = m.dim();
    if b.len() != n || c.len() != n {
        return Err(Error::Dimension("b and c must match the state dimension".into()));
    }
    let k = (0..n)
        .find(|&i| b == &basis(n, i) && c == &basis(n, i))
        .ok_or_else(|| {
            Error::NoCertificateFound("diagonal construction needs b = c = e_k".into())
        })?;

    let d = diagonal_lyapunov(m)?;
    let p = d.matrix() / d.diagonal[k];
    let mat = m.as_matrix();
    let lyap = mat.transpose() * &p + &p * mat;
    let lyapunov_max_eigenvalue = symmetric_max_eigenvalue(&lyap);
    if lyapunov_max_eigenvalue >= 0.0 {
        return Err(Error::NoCertificateFound(
            "Lyapunov inequality failed after rescaling".into(),
        ));
    }
    let cc = c * c.transpose();
    let feasible = |eps: f64| symmetric_max_eigenvalue(&(&lyap + &cc * (2.0 * eps))) < 0.0;

    let mut hi = 1.0;
    while feasible(hi) && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let epsilon = if lo > 0.0 { lo } else { hi * 0.5 };
    if !feasible(epsilon) {
        return Err(Error::NoCertificateFound("no positive epsilon found".into()));
    }
    let equality_residual = (&p * b - c).amax();
    if equality_residual > 1e-10 {
        return Err(Error::NoCertificateFound(format!(
            "equality constraint residual {equality_residual:e}"
        )));
    }
    Ok(LmiReport {
        p_diagonal: p.diagonal().iter().copied().collect(),
        lyapunov_max_eigenvalue,
        epsilon,
        epsilon_sup: 0.5 * (lo + hi),
        equality_residual,
    })
}
