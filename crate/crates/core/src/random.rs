//! Seeded generators of random networks and controller parameters.
//!
//! Metzler–Hurwitz matrices are drawn as `M = B − (ρ(B) + c)I` where `B` is
//! nonnegative with each off-diagonal entry present with probability
//! `DENSITY` and uniform on `[0, 1]`, the diagonal of `B` is uniform on
//! `[0, 1]`, `ρ(B)` is its Perron–Frobenius eigenvalue and `c` is uniform on
//! `[0.05, 2]`. The spectral abscissa of `M` is then exactly `−c`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::equilibria::ptype_effort;
use crate::matrixlab::{classify, spectral_abscissa, static_gains, RealMatrix, StabilityTag};
use crate::model::{LinearNetwork, PTypeAic};

pub const DENSITY: f64 = 0.5;
pub const MARGIN: (f64, f64) = (0.05, 2.0);
/// Range of log-uniform controller gains.
pub const GAIN_RANGE: (f64, f64) = (1e-3, 1e3);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

fn nonnegative<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j || rng.random_bool(DENSITY) {
            rng.random::<f64>()
        } else {
            0.0
        }
    })
}

/// A Metzler, Hurwitz matrix of size `n`.
pub fn metzler_hurwitz<R: Rng>(rng: &mut R, n: usize) -> RealMatrix {
    let b = nonnegative(rng, n);
    let rho = spectral_abscissa(&b);
    let c = rng.random_range(MARGIN.0..=MARGIN.1);
    let m = b - DMatrix::identity(n, n) * (rho + c);
    RealMatrix::new(m).expect("finite by construction")
}

/// A Metzler, output-unstable matrix of size `n ≥ 2`: Hurwitz leading block,
/// nonnegative couplings into and out of the output, positive `M_nn`.
pub fn metzler_output_unstable<R: Rng>(rng: &mut R, n: usize) -> RealMatrix {
    assert!(n >= 2);
    let lead = metzler_hurwitz(rng, n - 1);
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (n - 1, n - 1)).copy_from(lead.as_matrix());
    for i in 0..n - 1 {
        if rng.random_bool(DENSITY) {
            m[(i, n - 1)] = rng.random::<f64>();
        }
        if rng.random_bool(DENSITY) {
            m[(n - 1, i)] = rng.random::<f64>();
        }
    }
    m[(n - 1, n - 1)] = rng.random_range(0.05..=1.0);
    RealMatrix::new(m).expect("finite by construction")
}

/// Basal production on the first species only, uniform on `[0.5, 2]`.
fn first_species_input<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let mut b0 = DVector::zeros(n);
    b0[0] = rng.random_range(0.5..=2.0);
    b0
}

fn ptype_params<R: Rng>(rng: &mut R, r: f64) -> PTypeAic {
    let theta = rng.random_range(0.5..=2.0);
    PTypeAic {
        mu: r * theta,
        theta,
        eta: log_uniform(rng, GAIN_RANGE.0, GAIN_RANGE.1),
        kp: log_uniform(rng, GAIN_RANGE.0, GAIN_RANGE.1),
    }
}

/// A Metzler–Hurwitz network with `g₀ > 10⁻³` and a p-type controller with
/// `r` uniform on `(0.1g₀, 0.9g₀)`.
pub fn stable_case<R: Rng>(rng: &mut R, n: usize) -> (LinearNetwork, PTypeAic) {
    loop {
        let a = metzler_hurwitz(rng, n);
        let b0 = first_species_input(rng, n);
        let Ok(g) = static_gains(&a, &b0) else { continue };
        if g.near_singular || g.g0 <= 1e-3 {
            continue;
        }
        let r = g.g0 * rng.random_range(0.1..=0.9);
        let net = LinearNetwork::new(a, b0).expect("Metzler by construction");
        return (net, ptype_params(rng, r));
    }
}

/// An output-unstable network with `g₀ < 0` and a p-type controller whose
/// effort is positive with a Metzler, Hurwitz plant block.
pub fn unstable_case<R: Rng>(rng: &mut R, n: usize) -> (LinearNetwork, PTypeAic) {
    loop {
        let a = metzler_output_unstable(rng, n);
        if classify(&a).tag != StabilityTag::MetzlerOutputUnstable {
            continue;
        }
        let b0 = first_species_input(rng, n);
        let Ok(g) = static_gains(&a, &b0) else { continue };
        if g.near_singular || g.g0 >= -1e-3 {
            continue;
        }
        let r = log_uniform(rng, 0.1, 10.0);
        let u = ptype_effort(&g, r);
        if !(u > 0.0) || classify(&a.with_output_degradation(u)).tag != StabilityTag::MetzlerHurwitz {
            continue;
        }
        let net = LinearNetwork::new(a, b0).expect("Metzler by construction");
        return (net, ptype_params(rng, r));
    }
}
