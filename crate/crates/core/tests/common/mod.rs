#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use reinstab::closed_loop::ClosedLoop;
use reinstab::matrixlab::RealMatrix;
use reinstab::model::{LinearNetwork, NonlinearNetwork, RateTerm};
use reinstab::random::{self, log_uniform};

pub fn example1() -> LinearNetwork {
    LinearNetwork::new(
        RealMatrix::from_rows(&[
            vec![-1.0, 0.0, 0.5],
            vec![1.0, -1.0, 0.0],
            vec![0.0, 1.0, -1.0],
        ])
        .unwrap(),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
    )
    .unwrap()
}

pub fn example2() -> LinearNetwork {
    LinearNetwork::new(
        RealMatrix::from_rows(&[
            vec![-1.0, 0.0, 0.5],
            vec![1.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.5],
        ])
        .unwrap(),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
    )
    .unwrap()
}

pub fn fixtures() -> Vec<std::path::PathBuf> {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    paths
}

/// Linear terms of a random Metzler–Hurwitz matrix.
pub fn linear_terms(a: &DMatrix<f64>) -> Vec<RateTerm> {
    let n = a.nrows();
    let mut terms = Vec::new();
    for row in 0..n {
        for col in 0..n {
            if a[(row, col)] != 0.0 {
                terms.push(RateTerm::Linear {
                    row,
                    col,
                    coefficient: a[(row, col)],
                });
            }
        }
    }
    terms
}

/// A random network mixing every catalog term, with degradation on every
/// species so that trajectories stay bounded.
pub fn catalog_network(rng: &mut ChaCha8Rng, n: usize) -> NonlinearNetwork {
    let a = random::metzler_hurwitz(rng, n).into_inner();
    let mut terms = linear_terms(&a);
    for _ in 0..n {
        let target = rng.random_range(0..n);
        let regulator = rng.random_range(0..n);
        let amplitude = rng.random_range(0.1..2.0);
        let exponent = rng.random_range(1.0..4.0);
        let threshold = log_uniform(rng, 0.1, 10.0);
        terms.push(match rng.random_range(0..4) {
            0 => RateTerm::HillRepression {
                target,
                regulator,
                amplitude,
                exponent,
                threshold,
            },
            1 => RateTerm::HillActivation {
                target,
                regulator,
                amplitude,
                exponent,
                threshold,
            },
            2 => RateTerm::MassAction2 {
                target,
                factors: [target, regulator],
                coefficient: amplitude,
                sign: -1,
            },
            _ => {
                let other = rng.random_range(0..n);
                let (j, k) = if other == target {
                    (regulator, regulator)
                } else {
                    (regulator, other)
                };
                RateTerm::MassAction2 {
                    target,
                    factors: [j, k],
                    coefficient: amplitude * 0.1,
                    sign: 1,
                }
            }
        });
    }
    let b0 = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { rng.random_range(0.0..0.5) });
    NonlinearNetwork::new(n, terms, b0).unwrap()
}

/// Central differences with step `10⁻⁶ (1 + |xⱼ|)`, written independently of
/// the library's own fallback.
pub fn central_difference<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let d = x.len();
    let rows = f(x).len();
    let mut m = DMatrix::zeros(rows, d);
    for j in 0..d {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut p = x.clone();
        let mut q = x.clone();
        p[j] += h;
        q[j] -= h;
        let col = (f(&p) - f(&q)) / (2.0 * h);
        m.set_column(j, &col);
    }
    m
}

/// Closed-loop field without the positivity guard, for differencing at
/// points on the boundary.
pub fn field_fn<'a>(cl: &'a ClosedLoop<'a>) -> impl Fn(&DVector<f64>) -> DVector<f64> + 'a {
    move |s| cl.field_relaxed(s)
}

/// `|a − b|` over `max(|a|, |b|, floor)`.
pub fn rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
