//! Dense real polynomials with ascending coefficients.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::matrixlab::eigenvalues;

/// `p(s) = c[0] + c[1] s + ... + c[d] s^d`. Trailing exact zeros are dropped,
/// so the zero polynomial has an empty coefficient list.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self(coeffs)
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// `s - a`
    pub fn linear_root(a: f64) -> Self {
        Self::new(vec![-a, 1.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.0.last().copied().unwrap_or(0.0)
    }

    /// Coefficient of `s^k`, zero beyond the degree.
    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.0
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// `Σ |c_k| |s|^k`, the scale against which a value of `p(s)` is small.
    pub fn magnitude_bound(&self, s: f64) -> f64 {
        let s = s.abs();
        self.0.iter().rev().fold(0.0, |acc, &c| acc * s + c.abs())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.0.iter().map(|c| c * k).collect())
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// `p(-s)`
    pub fn reflect(&self) -> Self {
        Self::new(
            self.0
                .iter()
                .enumerate()
                .map(|(k, &c)| if k % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    /// The polynomial `q` with `q(ω²) = Re p(jω)`.
    pub fn real_part_on_axis(&self) -> Self {
        Self::new(
            self.0
                .iter()
                .step_by(2)
                .enumerate()
                .map(|(m, &c)| if m % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    /// Drops leading coefficients that are negligible against the largest one.
    pub fn trimmed(&self, rel_tol: f64) -> Self {
        let big = self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut c = self.0.clone();
        while c.last().is_some_and(|v| v.abs() <= rel_tol * big) {
            c.pop();
        }
        Self::new(c)
    }

    /// Monic polynomial with the given roots. Roots that are not real must
    /// come in conjugate pairs; imaginary residue in the product is discarded.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut c = vec![Complex64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
            for (k, &ck) in c.iter().enumerate() {
                next[k + 1] += ck;
                next[k] -= ck * r;
            }
            c = next;
        }
        Self::new(c.iter().map(|z| z.re).collect())
    }

    /// Roots from the eigenvalues of the balanced companion matrix, each
    /// polished by a couple of Newton steps.
    pub fn roots(&self) -> Vec<Complex64> {
        let d = self.degree();
        if self.is_zero() || d == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let mut comp = DMatrix::zeros(d, d);
        for i in 1..d {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..d {
            comp[(i, d - 1)] = -self.0[i] / lead;
        }
        balance(&mut comp);
        let dp = self.derivative();
        eigenvalues(&comp)
            .into_iter()
            .map(|z| self.polish(&dp, z))
            .collect()
    }

    fn polish(&self, dp: &Polynomial, mut z: Complex64) -> Complex64 {
        for _ in 0..3 {
            let f = self.eval_complex(z);
            let df = dp.eval_complex(z);
            if df.norm() == 0.0 {
                break;
            }
            let next = z - f / df;
            if !next.is_finite() || self.eval_complex(next).norm() >= f.norm() {
                break;
            }
            z = next;
        }
        z
    }

    /// Divides by `(s - a)`: returns the complex quotient and the remainder `p(a)`.
    pub fn synthetic_division(&self, a: Complex64) -> (Vec<Complex64>, Complex64) {
        if self.is_zero() {
            return (Vec::new(), Complex64::new(0.0, 0.0));
        }
        let d = self.degree();
        let mut q = vec![Complex64::new(0.0, 0.0); d];
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (0..=d).rev() {
            acc = acc * a + self.0[k];
            if k > 0 {
                q[k - 1] = acc;
            }
        }
        (q, acc)
    }

    /// Removes the real root `a`, or the conjugate pair `a, ā` when `a` is complex.
    pub fn deflate(&self, a: Complex64) -> Self {
        let divisor = if a.im == 0.0 {
            Polynomial::linear_root(a.re)
        } else {
            Polynomial::new(vec![a.norm_sqr(), -2.0 * a.re, 1.0])
        };
        self.div_rem(&divisor).0
    }

    /// Polynomial long division.
    pub fn div_rem(&self, divisor: &Polynomial) -> (Self, Self) {
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let dd = divisor.degree();
        if self.degree() < dd || self.is_zero() {
            return (Polynomial::default(), self.clone());
        }
        let mut rem = self.0.clone();
        let mut quot = vec![0.0; self.degree() - dd + 1];
        let lead = divisor.leading();
        for k in (0..quot.len()).rev() {
            let c = rem[k + dd] / lead;
            quot[k] = c;
            for (j, &dj) in divisor.0.iter().enumerate() {
                rem[k + j] -= c * dj;
            }
        }
        rem.truncate(dd);
        (Polynomial::new(quot), Polynomial::new(rem))
    }
}

/// Diagonal similarity balancing (powers of two), in place.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let c: f64 = (0..n).filter(|&j| j != i).map(|j| m[(j, i)].abs()).sum();
            let r: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let g = r / radix;
            while cc < g {
                f *= radix;
                cc *= radix * radix;
            }
            let g = r * radix;
            while cc > g {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.0.len().max(rhs.0.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.0.len().max(rhs.0.len());
        Polynomial::new((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        if self.is_zero() || rhs.is_zero() {
            return Polynomial::default();
        }
        let mut c = vec![0.0; self.0.len() + rhs.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in rhs.0.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Polynomial::new(c)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<f64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re));
        v.iter().map(|z| z.re).collect()
    }

    #[test]
    fn arithmetic() {
        let p = Polynomial::new(vec![1.0, 1.0]);
        let q = Polynomial::new(vec![3.0, 1.0]);
        assert_eq!((&p * &q).coeffs(), &[3.0, 4.0, 1.0]);
        assert_eq!((&p - &p).coeffs(), &[] as &[f64]);
        assert_eq!((&p + &q).coeffs(), &[4.0, 2.0]);
        assert_eq!(q.reflect().coeffs(), &[3.0, -1.0]);
        assert_eq!(Polynomial::new(vec![1.0, 2.0, 3.0]).derivative().coeffs(), &[2.0, 6.0]);
    }

    #[test]
    fn roots_of_quadratic_and_cubic() {
        let r = sorted_re(Polynomial::new(vec![3.0, 4.0, 1.0]).roots());
        assert!((r[0] + 3.0).abs() < 1e-12 && (r[1] + 1.0).abs() < 1e-12);
        let p = Polynomial::from_roots(&[
            Complex64::new(-1.0, 0.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(-5.0, 0.0),
        ]);
        let r = sorted_re(p.roots());
        for (a, b) in r.iter().zip([-5.0, -2.0, -1.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn real_part_on_axis_matches_evaluation() {
        let p = Polynomial::new(vec![0.3, -1.2, 2.5, 0.7, -0.4]);
        let q = p.real_part_on_axis();
        for w in [0.0, 0.5, 1.7, 3.0] {
            let direct = p.eval_complex(Complex64::new(0.0, w)).re;
            assert!((q.eval(w * w) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn division() {
        let p = Polynomial::new(vec![3.0, 4.0, 1.0]);
        let (q, r) = p.div_rem(&Polynomial::linear_root(-1.0));
        assert_eq!(q.coeffs(), &[3.0, 1.0]);
        assert!(r.is_zero());
        let (q, rem) = p.synthetic_division(Complex64::new(-3.0, 0.0));
        assert!(rem.norm() < 1e-15);
        assert_eq!(q[0].re, 1.0);
        let pair = Polynomial::new(vec![2.0, 2.0, 1.0]); // roots -1 ± j
        let prod = &pair * &Polynomial::linear_root(-4.0);
        let defl = prod.deflate(Complex64::new(-1.0, 1.0));
        assert!((defl.coeff(0) - 4.0).abs() < 1e-12 && (defl.coeff(1) - 1.0).abs() < 1e-12);
    }
}
