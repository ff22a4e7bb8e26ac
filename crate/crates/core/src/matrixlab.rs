//! Structural tests on real square matrices from positive-systems theory.
//!
//! Everything here works on small dense matrices (a few dozen rows at most).
//! Eigenvalues come from nalgebra's real Schur decomposition; linear solves
//! use partial-pivot LU and carry a 1-norm condition number with them.

use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dead zone on eigenvalue real parts. A spectral abscissa inside
/// `(-STAB_TOL, STAB_TOL)` is reported as marginal.
pub const STAB_TOL: f64 = 1e-9;

/// Off-diagonal entries above `-METZLER_TOL` count as nonnegative.
pub const METZLER_TOL: f64 = 1e-12;

/// Condition numbers above this raise a near-singular warning.
pub const NEAR_SINGULAR_COND: f64 = 1e12;

/// A dense, square, finite real matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RealMatrix(DMatrix<f64>);

impl RealMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Dimension("matrix must have at least one row".into()));
        }
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if !m[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Entry in the output row and column, `e_nᵀ M e_n`.
    pub fn output_diagonal(&self) -> f64 {
        let n = self.dim();
        self.0[(n - 1, n - 1)]
    }

    /// The leading `(n-1)×(n-1)` principal block `SᵀMS`; empty when `n = 1`.
    pub fn leading_block(&self) -> DMatrix<f64> {
        let k = self.dim() - 1;
        self.0.view((0, 0), (k, k)).into_owned()
    }

    /// `M - e_n e_nᵀ u`: the output species gets an extra degradation `u`.
    pub fn with_output_degradation(&self, u: f64) -> RealMatrix {
        let mut m = self.0.clone();
        let n = self.dim();
        m[(n - 1, n - 1)] -= u;
        RealMatrix(m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for RealMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<RealMatrix> for Vec<Vec<f64>> {
    fn from(m: RealMatrix) -> Self {
        m.to_rows()
    }
}

/// `i`-th canonical basis vector of `R^n` (zero-based).
pub fn basis(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// Iteration cap for one Schur attempt.
const SCHUR_MAX_ITER: usize = 10_000;

/// Spectrum via a bounded Schur iteration. QR can stall on some exactly
/// block-triangular matrices; those are retried with a diagonal shift. All
/// entries are NaN if no attempt converges.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let scale = m.amax().max(1.0);
    for shift in [0.0, 0.37, -0.61, 1.3] {
        let shifted = m + DMatrix::identity(n, n) * (shift * scale);
        if let Some(schur) = Schur::try_new(shifted, f64::EPSILON, SCHUR_MAX_ITER) {
            return schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z - shift * scale)
                .collect();
        }
    }
    vec![Complex64::new(f64::NAN, f64::NAN); n]
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
}

/// Eigenvalue with the largest real part.
pub fn rightmost_eigenvalue(m: &DMatrix<f64>) -> Option<Complex64> {
    eigenvalues(m)
        .into_iter()
        .max_by(|a, b| a.re.total_cmp(&b.re))
}

/// Largest eigenvalue of the symmetric part `(M + Mᵀ)/2`.
pub fn symmetric_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_metzler(m: &RealMatrix, tol: f64) -> bool {
    first_negative_off_diagonal(m.as_matrix(), tol).is_none()
}

fn first_negative_off_diagonal(m: &DMatrix<f64>, tol: f64) -> Option<(usize, usize, f64)> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .map(|(i, j)| (i, j, m[(i, j)]))
        .find(|&(_, _, v)| v < -tol)
}

pub(crate) fn require_metzler(m: &RealMatrix) -> Result<()> {
    match first_negative_off_diagonal(m.as_matrix(), METZLER_TOL) {
        Some((row, col, value)) => Err(Error::NonMetzler { row, col, value }),
        None => Ok(()),
    }
}

/// Spectral abscissa below `-STAB_TOL`.
pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < -STAB_TOL
}

/// Rightmost (real) eigenvalue of a Metzler matrix.
pub fn perron_frobenius(m: &RealMatrix) -> Result<f64> {
    require_metzler(m)?;
    Ok(spectral_abscissa(m.as_matrix()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityTag {
    MetzlerHurwitz,
    MetzlerOutputUnstable,
    MetzlerOther,
    NonMetzler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityClass {
    pub tag: StabilityTag,
    pub spectral_abscissa: f64,
    /// Spectral abscissa fell inside the `STAB_TOL` dead zone.
    pub marginal: bool,
}

/// Sorts a matrix into the classes the stability theorems distinguish.
///
/// A `1×1` matrix has an empty leading block, which counts as Hurwitz, so a
/// positive scalar is output unstable.
pub fn classify(m: &RealMatrix) -> StabilityClass {
    let abscissa = spectral_abscissa(m.as_matrix());
    let marginal = abscissa.abs() < STAB_TOL;
    let tag = if !is_metzler(m, METZLER_TOL) {
        StabilityTag::NonMetzler
    } else if abscissa < -STAB_TOL {
        StabilityTag::MetzlerHurwitz
    } else if spectral_abscissa(&m.leading_block()) < -STAB_TOL && m.output_diagonal() > 0.0 {
        StabilityTag::MetzlerOutputUnstable
    } else {
        StabilityTag::MetzlerOther
    };
    StabilityClass {
        tag,
        spectral_abscissa: abscissa,
        marginal,
    }
}

/// 1-norm condition number. Only meant for the small matrices handled here.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    match m.clone().lu().try_inverse() {
        Some(inv) => one_norm(m) * one_norm(&inv),
        None => f64::INFINITY,
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solution of a linear system together with the conditioning of the matrix.
#[derive(Clone, Debug)]
pub struct Solved {
    pub x: DVector<f64>,
    pub condition: f64,
}

impl Solved {
    pub fn near_singular(&self) -> bool {
        self.condition > NEAR_SINGULAR_COND
    }
}

pub fn solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<Solved> {
    if m.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            m.nrows()
        )));
    }
    let lu = m.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| Error::SingularDynamics("LU factorization hit a zero pivot".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularDynamics("solution is not finite".into()));
    }
    Ok(Solved {
        x,
        condition: condition_number(m),
    })
}

/// Steady-state gains of the output `x_n` with respect to the basal input,
/// an input on the first species and a unit input on the output species.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticGains {
    /// `-e_nᵀ A⁻¹ b₀`
    pub g0: f64,
    /// `-e_nᵀ A⁻¹ e₁`
    pub g1: f64,
    /// `-e_nᵀ A⁻¹ e_n`
    pub gn: f64,
    pub condition: f64,
    pub near_singular: bool,
}

pub fn static_gains(a: &RealMatrix, b0: &DVector<f64>) -> Result<StaticGains> {
    let n = a.dim();
    if b0.len() != n {
        return Err(Error::Dimension(format!(
            "b0 has length {}, expected {n}",
            b0.len()
        )));
    }
    // one transposed solve gives the whole output row of A⁻¹
    let row = solve(&a.as_matrix().transpose(), &basis(n, n - 1))?;
    let y = &row.x;
    Ok(StaticGains {
        g0: -y.dot(b0),
        g1: -y[0],
        gn: -y[n - 1],
        condition: row.condition,
        near_singular: row.near_singular(),
    })
}

/// Sign pattern of the inverse of a Metzler, output-unstable matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignPatternReport {
    pub passed: bool,
    /// `SᵀM⁻¹e_n`
    pub last_column: Vec<f64>,
    /// `e_nᵀM⁻¹S`
    pub last_row: Vec<f64>,
    /// `e_nᵀM⁻¹e_n`
    pub corner: f64,
    pub offending: Vec<String>,
}

pub fn inverse_sign_pattern(m: &RealMatrix) -> Result<SignPatternReport> {
    let class = classify(m);
    if class.tag != StabilityTag::MetzlerOutputUnstable {
        return Err(Error::Precondition(format!(
            "expected a Metzler output-unstable matrix, got {:?}",
            class.tag
        )));
    }
    let n = m.dim();
    let en = basis(n, n - 1);
    let col = solve(m.as_matrix(), &en)?;
    if col.near_singular() {
        return Err(Error::Precondition(format!(
            "matrix is numerically singular (condition {:e})",
            col.condition
        )));
    }
    let row = solve(&m.as_matrix().transpose(), &en)?;
    let scale = col.x.amax().max(row.x.amax()).max(1.0);
    let tol = 1e-12 * scale;

    let mut offending = Vec::new();
    for i in 0..n - 1 {
        if col.x[i] < -tol {
            offending.push(format!("(M^-1)[{i},{}] = {:e}", n - 1, col.x[i]));
        }
        if row.x[i] < -tol {
            offending.push(format!("(M^-1)[{},{i}] = {:e}", n - 1, row.x[i]));
        }
    }
    let corner = col.x[n - 1];
    if corner <= tol {
        offending.push(format!("(M^-1)[{0},{0}] = {corner:e}", n - 1));
    }
    Ok(SignPatternReport {
        passed: offending.is_empty(),
        last_column: col.x.iter().take(n - 1).copied().collect(),
        last_row: row.x.iter().take(n - 1).copied().collect(),
        corner,
        offending,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LyapunovMethod {
    /// `D = diag(ζ_i / ξ_i)` from the positive vectors `ξ = -M⁻¹𝟙`, `ζ = -M⁻ᵀ𝟙`.
    Construction,
    RandomSearch { trials: usize },
}

/// A positive diagonal `D` with `MᵀD + DM ≺ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalLyapunov {
    pub diagonal: Vec<f64>,
    /// Largest eigenvalue of `(MᵀD + DM)/2`; negative by construction.
    pub max_eigenvalue: f64,
    pub method: LyapunovMethod,
}

impl DiagonalLyapunov {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.diagonal))
    }
}

const LYAPUNOV_TRIALS: usize = 2000;

pub fn diagonal_lyapunov(m: &RealMatrix) -> Result<DiagonalLyapunov> {
    require_metzler(m)?;
    let abscissa = spectral_abscissa(m.as_matrix());
    if abscissa >= -STAB_TOL {
        return Err(Error::NotHurwitz { abscissa });
    }
    let n = m.dim();
    let mat = m.as_matrix();
    let check = |d: &DVector<f64>| {
        let dm = DMatrix::from_diagonal(d) * mat;
        symmetric_max_eigenvalue(&dm)
    };

    let ones = DVector::from_element(n, -1.0);
    if let (Ok(xi), Ok(zeta)) = (solve(mat, &ones), solve(&mat.transpose(), &ones)) {
        if xi.x.iter().chain(zeta.x.iter()).all(|&v| v > 0.0) {
            let d = zeta.x.component_div(&xi.x);
            let max_eigenvalue = check(&d);
            if max_eigenvalue < 0.0 {
                return Ok(DiagonalLyapunov {
                    diagonal: d.iter().copied().collect(),
                    max_eigenvalue,
                    method: LyapunovMethod::Construction,
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 1..=LYAPUNOV_TRIALS {
        let d = DVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-3.0..3.0)));
        let max_eigenvalue = check(&d);
        if max_eigenvalue < 0.0 {
            return Ok(DiagonalLyapunov {
                diagonal: d.iter().copied().collect(),
                max_eigenvalue,
                method: LyapunovMethod::RandomSearch { trials: trial },
            });
        }
    }
    Err(Error::NoCertificateFound(format!(
        "no diagonal Lyapunov matrix after {LYAPUNOV_TRIALS} random trials"
    )))
}

#[cfg(test)]
mod tests {
    #[test]
    fn stalled_schur_is_retried() {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                -1.0, 0.0, 0.5, 0.0, //
                1.0, -1.0, 0.0, 0.0, //
                0.0, 1.0, -1.0, -2.8049492411787296, //
                0.0, 0.0, 0.0, 76.77567370203174,
            ],
        );
        assert!((spectral_abscissa(&m) - 76.77567370203174).abs() < 1e-10);
        let mut re: Vec<f64> = eigenvalues(&m).iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - (-1.396850262992068)).abs() < 1e-9);
        assert!((re[2] - (-0.20629947401589968)).abs() < 1e-9);
    }

    use super::*;

    fn m(rows: &[&[f64]]) -> RealMatrix {
        RealMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn metzler_checks() {
        assert!(is_metzler(&m(&[&[-1.0, 0.0], &[1.0, -2.0]]), 0.0));
        assert!(!is_metzler(&m(&[&[-1.0, -0.5], &[1.0, -2.0]]), 0.0));
        assert!(is_metzler(&RealMatrix::identity(3), 0.0));
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(RealMatrix::from_rows(&[vec![1.0, 2.0]]).is_err());
        assert!(matches!(
            RealMatrix::from_rows(&[vec![f64::NAN]]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn perron_frobenius_examples() {
        let a = perron_frobenius(&m(&[&[-1.0, 0.0], &[1.0, -2.0]])).unwrap();
        assert!((a + 1.0).abs() < 1e-12);
        let b = perron_frobenius(&m(&[&[-2.0, 1.0], &[1.0, -2.0]])).unwrap();
        assert!((b + 1.0).abs() < 1e-12);
        assert_eq!(perron_frobenius(&m(&[&[0.0]])).unwrap(), 0.0);
        assert!(perron_frobenius(&m(&[&[-1.0, -1.0], &[0.0, -1.0]])).is_err());
    }

    #[test]
    fn classification() {
        let c = classify(&m(&[&[-1.0, 0.0], &[1.0, -2.0]]));
        assert_eq!(c.tag, StabilityTag::MetzlerHurwitz);
        let c = classify(&m(&[&[-1.0, 0.0], &[1.0, 0.5]]));
        assert_eq!(c.tag, StabilityTag::MetzlerOutputUnstable);
        // empty leading block is vacuously Hurwitz
        assert_eq!(classify(&m(&[&[1.0]])).tag, StabilityTag::MetzlerOutputUnstable);
        let c = classify(&m(&[&[0.0]]));
        assert_eq!(c.tag, StabilityTag::MetzlerOther);
        assert!(c.marginal);
        assert_eq!(
            classify(&m(&[&[-1.0, -1.0], &[1.0, -1.0]])).tag,
            StabilityTag::NonMetzler
        );
    }

    #[test]
    fn scalar_gains() {
        let g = static_gains(&m(&[&[-1.0]]), &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!((g.g0, g.g1, g.gn), (1.0, 1.0, 1.0));
        assert!(!g.near_singular);
    }

    #[test]
    fn singular_gains() {
        let r = static_gains(&m(&[&[0.0, 0.0], &[1.0, 0.0]]), &DVector::zeros(2));
        assert!(matches!(r, Err(Error::SingularDynamics(_))));
    }

    #[test]
    fn near_singular_is_flagged() {
        let g = static_gains(&m(&[&[-1e-14, 0.0], &[1.0, -1.0]]), &DVector::zeros(2)).unwrap();
        assert!(g.near_singular);
    }

    #[test]
    fn sign_pattern() {
        // M⁻¹ = [[-1, 0], [2, 2]]
        let r = inverse_sign_pattern(&m(&[&[-1.0, 0.0], &[1.0, 0.5]])).unwrap();
        assert!(r.passed);
        assert!((r.corner - 2.0).abs() < 1e-12);
        assert!((r.last_row[0] - 2.0).abs() < 1e-12);
        assert!(r.last_column[0].abs() < 1e-12);
        let r = inverse_sign_pattern(&m(&[&[0.5]])).unwrap();
        assert!(r.passed && (r.corner - 2.0).abs() < 1e-12);
        assert!(matches!(
            inverse_sign_pattern(&m(&[&[-1.0, 0.0], &[1.0, -2.0]])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn lyapunov_examples() {
        let d = diagonal_lyapunov(&m(&[&[-1.0, 0.0], &[0.0, -1.0]])).unwrap();
        assert_eq!(d.method, LyapunovMethod::Construction);
        assert!((d.diagonal[0] - d.diagonal[1]).abs() < 1e-12);

        let mm = m(&[&[-1.0, 0.0], &[1.0, -2.0]]);
        let d = diagonal_lyapunov(&mm).unwrap();
        assert!(d.diagonal.iter().all(|&v| v > 0.0));
        let q = mm.as_matrix().transpose() * d.matrix() + d.matrix() * mm.as_matrix();
        assert!(q.symmetric_eigenvalues().iter().all(|&v| v < 0.0));

        assert!(matches!(
            diagonal_lyapunov(&m(&[&[-1.0, 2.0], &[2.0, -1.0]])),
            Err(Error::NotHurwitz { .. })
        ));
        assert!(matches!(
            diagonal_lyapunov(&m(&[&[-1.0, -2.0], &[0.0, -1.0]])),
            Err(Error::NonMetzler { .. })
        ));
    }
}
