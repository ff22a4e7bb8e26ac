use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use reinstab::poly::Polynomial;
use reinstab::random;
use reinstab::transfer::{
    classify_pr, infinity_limit, output_transfer, re_on_axis, transmission_zeros, PrTag,
    TransferFunction,
};

/// Greedy nearest-neighbour matching of two root multisets.
fn same_multiset(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|x| {
        let best = b
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .min_by(|(_, p), (_, q)| (*p - x).norm().total_cmp(&(*q - x).norm()));
        match best {
            Some((i, y)) if (y - x).norm() <= tol * (1.0 + x.norm()) => {
                used[i] = true;
                true
            }
            _ => false,
        }
    })
}

/// Stable, proper `H` with real or conjugate poles in the open left half-plane.
fn stable_transfer(rng: &mut ChaCha8Rng) -> TransferFunction {
    let degree = rng.random_range(1..=5);
    let mut poles = Vec::new();
    while poles.len() < degree {
        let re = -random::log_uniform(rng, 0.05, 20.0);
        if poles.len() + 2 <= degree && rng.random_bool(0.4) {
            let im = random::log_uniform(rng, 0.05, 20.0);
            poles.push(Complex64::new(re, im));
            poles.push(Complex64::new(re, -im));
        } else {
            poles.push(Complex64::new(re, 0.0));
        }
    }
    let den = Polynomial::from_roots(&poles);
    let num_degree = rng.random_range(0..=degree);
    let num: Vec<f64> = (0..=num_degree).map(|_| rng.random_range(-1.0..1.0)).collect();
    TransferFunction::from_parts(num, den.coeffs().to_vec(), 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn output_transfer_of_metzler_hurwitz_is_spr(seed in any::<u64>(), n in 1usize..=8) {
        let m = random::metzler_hurwitz(&mut random::rng(seed), n);
        prop_assert_eq!(classify_pr(&output_transfer(&m)).tag, PrTag::SPR);
    }

    #[test]
    fn axis_sweep_never_beats_the_exact_check(seed in any::<u64>()) {
        let h = stable_transfer(&mut random::rng(seed));
        let class = classify_pr(&h);
        let lo = (1e-6f64).ln();
        let hi = (1e6f64).ln();
        let worst = (0..4096)
            .map(|k| (lo + (hi - lo) * k as f64 / 4095.0).exp())
            .map(|w| re_on_axis(&h, w).unwrap())
            .fold(f64::INFINITY, f64::min);
        if worst < -1e-9 {
            prop_assert!(!class.evidence.re_nonnegative, "sweep found {worst}");
            prop_assert!(class.tag < PrTag::PR);
        }
    }
}

proptest! {
    #[test]
    fn transmission_zeros_are_numerator_roots(seed in any::<u64>(), n in 2usize..=8) {
        let m = random::metzler_hurwitz(&mut random::rng(seed), n);
        let h = output_transfer(&m);
        let roots = h.numerator().roots();
        prop_assert!(same_multiset(&transmission_zeros(&m), &roots, 1e-6));
    }

    #[test]
    fn tail_limit_matches_high_frequency_sample(seed in any::<u64>(), n in 1usize..=8) {
        let m = random::metzler_hurwitz(&mut random::rng(seed), n);
        let h = output_transfer(&m);
        prop_assume!(h.poles().iter().all(|p| p.norm() <= 1e2));
        let w = 1e6;
        let sampled = w * w * re_on_axis(&h, w).unwrap();
        let limit = infinity_limit(&h).unwrap();
        prop_assert!((sampled - limit).abs() <= 1e-3 * limit.abs(), "{sampled} vs {limit}");
    }

    #[test]
    fn positive_scaling_keeps_the_class(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let h = stable_transfer(&mut rng);
        let c = random::log_uniform(&mut rng, 1e-3, 1e3);
        prop_assert_eq!(classify_pr(&h).tag, classify_pr(&h.scale(c).unwrap()).tag);
    }
}
