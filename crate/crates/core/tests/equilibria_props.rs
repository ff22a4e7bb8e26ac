mod common;

use proptest::prelude::*;
use rand::Rng;

use reinstab::closed_loop::ClosedLoop;
use reinstab::equilibria::{
    airc_equilibrium, airc_p1, airc_p2, airc_switching_limit, exponential_equilibria,
    logistic_equilibria, logistic_interval, positive_root, ptype_equilibrium, BranchLabel,
    Equilibrium,
};
use reinstab::matrixlab::static_gains;
use reinstab::model::{AircParams, ControllerSpec, ExponentialIc, LogisticIc, Plant};
use reinstab::random::{self, log_uniform};

fn airc_params(rng: &mut rand_chacha::ChaCha8Rng, g0: f64) -> AircParams {
    let theta = log_uniform(rng, 0.1, 10.0);
    AircParams {
        mu: theta * g0 * rng.random_range(0.1..3.0),
        theta,
        eta: log_uniform(rng, 1e-3, 1e3),
        ki: log_uniform(rng, 1e-3, 1e3),
        kp: log_uniform(rng, 1e-3, 1e3),
    }
}

fn assert_residual(plant: &Plant, ctrl: ControllerSpec, eq: &Equilibrium) -> Result<(), TestCaseError> {
    let state = eq.state();
    let r = ClosedLoop::new(plant, ctrl).residual(&state).unwrap();
    prop_assert!(r < 1e-8 * (1.0 + state.norm()), "residual {r} at {:?}", state.as_slice());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quadratics_agree(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = random::rng(seed);
        let (net, _) = random::stable_case(&mut rng, n);
        let g = static_gains(&net.a, &net.b0).unwrap();
        let c = airc_params(&mut rng, g.g0);
        let [c1, b1, a1] = airc_p1(&g, &c);
        let [c2, b2, a2] = airc_p2(&g, &c);
        prop_assert!(a1 > 0.0 && c1 < 0.0, "signs ({a1}, {b1}, {c1})");
        let z1 = positive_root(a1, b1, c1).unwrap();
        let z2 = positive_root(a2, b2, c2).unwrap();
        let want = c.mu / (c.eta * z1);
        prop_assert!((z2 - want).abs() <= 1e-9 * want, "{z2} vs {want}");
    }
}

proptest! {
    #[test]
    fn equilibria_satisfy_the_field(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = random::rng(seed);
        let (net, c) = random::stable_case(&mut rng, n);
        let g = static_gains(&net.a, &net.b0).unwrap();
        let plant = Plant::Linear(net.clone());

        let (eq, _) = ptype_equilibrium(&net, &c).unwrap();
        assert_residual(&plant, ControllerSpec::PType(c), &eq)?;

        let a = airc_params(&mut rng, g.g0);
        assert_residual(&plant, ControllerSpec::Airc(a), &airc_equilibrium(&net, &a).unwrap())?;

        let e = ExponentialIc { mu: c.setpoint(), alpha: log_uniform(&mut rng, 1e-3, 1e3), kp: c.kp };
        for b in exponential_equilibria(&net, &e).unwrap() {
            assert_residual(&plant, ControllerSpec::Exponential(e), &b.equilibrium)?;
        }

        let l = LogisticIc { r: c.setpoint(), k: log_uniform(&mut rng, 1e-3, 1e3), beta: log_uniform(&mut rng, 0.1, 10.0) };
        for b in logistic_equilibria(&net, &l).unwrap() {
            assert_residual(&plant, ControllerSpec::Logistic(l), &b.equilibrium)?;
        }

        let (unet, uc) = random::unstable_case(&mut rng, n);
        let (eq, _) = ptype_equilibrium(&unet, &uc).unwrap();
        assert_residual(&Plant::Linear(unet), ControllerSpec::PType(uc), &eq)?;
    }

    /// Expanding the positive root of the `z₁` quadratic for large `η` gives
    /// a relative error of `C/η` in `z₂` with
    /// `C = g₁ k_i g_n k_p μ r / (g₀ − r)²`.
    #[test]
    fn rein_controller_switches_below_gain(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = random::rng(seed);
        let (net, _) = random::stable_case(&mut rng, n);
        let g = static_gains(&net.a, &net.b0).unwrap();
        let theta = log_uniform(&mut rng, 0.1, 10.0);
        let ctrl = AircParams {
            mu: theta * g.g0 * rng.random_range(0.1..0.9),
            theta,
            eta: 1.0,
            ki: log_uniform(&mut rng, 0.1, 10.0),
            kp: log_uniform(&mut rng, 0.1, 10.0),
        };
        let r = ctrl.mu / ctrl.theta;
        let c = g.g1 * ctrl.ki * g.gn * ctrl.kp * ctrl.mu * r / ((g.g0 - r) * (g.g0 - r));
        let grid: Vec<f64> = (0..=6).map(|k| 10f64.powi(k)).collect();
        let table = airc_switching_limit(&net, &ctrl, &grid).unwrap();
        for (row, eta) in table.rows.iter().zip(&grid) {
            let err = (row.z2 - row.predicted_z2).abs() / row.predicted_z2;
            if c / eta < 1e-2 {
                prop_assert!(err <= 2.0 * c / eta && err >= 0.5 * c / eta, "error {err}, C/eta = {}", c / eta);
            }
            if *eta == 1e6 && c < 1e4 {
                prop_assert!(err < 1e-2, "error {err} at eta = 1e6");
            }
        }
    }

    #[test]
    fn logistic_branch_is_inside_exactly_on_the_interval(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = random::rng(seed);
        let (net, _) = random::stable_case(&mut rng, n);
        let g = static_gains(&net.a, &net.b0).unwrap();
        let beta = log_uniform(&mut rng, 0.1, 10.0);
        let (lo, hi) = logistic_interval(&g, beta);
        let (lo, hi) = (lo.unwrap(), hi.unwrap());
        let r = g.g0 * rng.random_range(0.01..2.0);
        prop_assume!((r - lo).abs() > 1e-9 * g.g0 && (r - hi).abs() > 1e-9 * g.g0);
        let ctrl = LogisticIc { r, k: 1.0, beta };
        let positive = logistic_equilibria(&net, &ctrl)
            .unwrap()
            .into_iter()
            .find(|b| b.label == BranchLabel::Positive)
            .unwrap();
        let z = positive.equilibrium.controller_state[0];
        prop_assert_eq!(z > 0.0 && z < beta, lo < r && r < hi, "z = {}, r = {} in ({}, {})", z, r, lo, hi);
    }
}
