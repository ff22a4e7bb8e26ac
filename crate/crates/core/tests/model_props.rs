mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

use reinstab::model::{
    load_model, load_model_file, AircParams, ControllerSpec, ExponentialIc, LogisticIc, Model,
    PTypeAic, Plant,
};
use reinstab::random::{self, log_uniform};

fn controller(rng: &mut rand_chacha::ChaCha8Rng) -> ControllerSpec {
    let mut p = || log_uniform(rng, 1e-3, 1e3);
    match p() as usize % 4 {
        0 => ControllerSpec::Airc(AircParams {
            mu: p(),
            theta: p(),
            eta: p(),
            ki: p(),
            kp: p(),
        }),
        1 => ControllerSpec::PType(PTypeAic {
            mu: p(),
            theta: p(),
            eta: p(),
            kp: p(),
        }),
        2 => ControllerSpec::Exponential(ExponentialIc {
            mu: p(),
            alpha: p(),
            kp: p(),
        }),
        _ => ControllerSpec::Logistic(LogisticIc {
            r: p(),
            k: p(),
            beta: p(),
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn boundary_flux_is_inward(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = random::rng(seed);
        let net = common::catalog_network(&mut rng, n);
        for _ in 0..20 {
            let i = rng.random_range(0..n);
            let mut x = DVector::from_fn(n, |_, _| {
                if rng.random_bool(0.3) { 0.0 } else { log_uniform(&mut rng, 1e-3, 1e2) }
            });
            x[i] = 0.0;
            let rate = net.rate(&x).unwrap();
            prop_assert!(rate[i] + net.b0[i] >= 0.0, "species {} at {:?}", i, x.as_slice());
        }
    }

    #[test]
    fn jacobian_matches_central_differences(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = random::rng(seed);
        let net = common::catalog_network(&mut rng, n);
        for _ in 0..20 {
            let x = DVector::from_fn(n, |_, _| log_uniform(&mut rng, 1e-2, 1e1));
            let analytic = net.jacobian(&x).unwrap();
            let numeric = common::central_difference(|y| net.rate(y).unwrap(), &x);
            let gap = common::rel_gap(&analytic, &numeric, 1.0);
            prop_assert!(gap < 1e-5, "gap {gap}");
        }
    }

    #[test]
    fn documents_round_trip(seed in any::<u64>(), n in 1usize..=6, nonlinear in any::<bool>()) {
        let mut rng = random::rng(seed);
        let plant = if nonlinear {
            Plant::Nonlinear(common::catalog_network(&mut rng, n))
        } else {
            let (net, _) = random::stable_case(&mut rng, n.max(2));
            Plant::Linear(net)
        };
        let model = Model { name: Some(format!("m{seed}")), plant, controller: controller(&mut rng) };
        prop_assert_eq!(load_model(&model.to_json()).unwrap(), model);
    }
}

#[test]
fn feedback_fixture_boundary_and_jacobian() {
    let path = common::fixtures()
        .into_iter()
        .find(|p| p.ends_with("feedback.json"))
        .unwrap();
    let Plant::Nonlinear(net) = load_model_file(path).unwrap().plant else {
        panic!("nonlinear fixture")
    };
    let mut rng = random::rng(11);
    for _ in 0..1000 {
        let mut x = DVector::from_fn(net.n, |_, _| log_uniform(&mut rng, 1e-3, 1e2));
        let i = rng.random_range(0..net.n);
        let interior = x.clone();
        x[i] = 0.0;
        assert!(net.rate(&x).unwrap()[i] + net.b0[i] >= 0.0);
        let gap = common::rel_gap(
            &net.jacobian(&interior).unwrap(),
            &common::central_difference(|y| net.rate(y).unwrap(), &interior),
            1.0,
        );
        assert!(gap < 1e-5, "gap {gap}");
    }
}
