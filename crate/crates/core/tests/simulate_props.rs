mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

use reinstab::certificates::ptype_abscissa;
use reinstab::closed_loop::ClosedLoop;
use reinstab::equilibria::ptype_equilibrium;
use reinstab::model::{ControllerSpec, LinearNetwork, Model, PTypeAic, Plant};
use reinstab::random::{self, log_uniform};
use reinstab::simulate::{
    default_initial_state, integrate, settling, sweep, SimOptions, SweepAxis, SweepOptions,
};

/// Endpoint error at tolerances `10⁻³ · 2⁻ᵏ` against a `10⁻¹⁰` run, and the
/// least-squares slope of `log error` on `log tol` over the points that sit
/// well above the reference's own accuracy.
fn convergence_order(net: LinearNetwork, c: PTypeAic) -> Option<f64> {
    let plant = Plant::Linear(net);
    let spec = ControllerSpec::PType(c);
    let cl = ClosedLoop::new(&plant, spec);
    let x0 = default_initial_state(&plant, &spec);
    let run = |tol: f64| {
        let opts = SimOptions { t_end: 10.0, tol, max_step: Some(10.0), ..SimOptions::default() };
        DVector::from_column_slice(integrate(&cl, &x0, &opts).unwrap().final_state())
    };
    let reference = run(1e-10);
    let points: Vec<(f64, f64)> = (0..10)
        .map(|k| 1e-3 * 0.5f64.powi(k))
        .map(|tol| (tol, (run(tol) - &reference).norm()))
        .filter(|&(_, err)| err > 1e-8)
        .map(|(tol, err)| (tol.ln(), err.ln()))
        .collect();
    if points.len() < 4 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[test]
fn example1_error_tracks_the_tolerance() {
    let c = PTypeAic { mu: 1.0, theta: 1.0, eta: 1.0, kp: 1.0 };
    let order = convergence_order(common::example1(), c).unwrap();
    assert!(order > 0.9, "order {order}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn error_tracks_the_tolerance(seed in any::<u64>(), n in 2usize..=6) {
        let (net, c) = random::stable_case(&mut random::rng(seed), n);
        if let Some(order) = convergence_order(net, c) {
            prop_assert!(order > 0.5, "order {order}");
        }
    }

    #[test]
    fn settles_from_near_equilibrium(seed in any::<u64>(), n in 2usize..=6) {
        let mut rng = random::rng(seed);
        let (net, mut c) = random::stable_case(&mut rng, n);
        c.kp = log_uniform(&mut rng, 0.1, 10.0);
        c.eta = log_uniform(&mut rng, 0.1, 10.0);
        let a = ptype_abscissa(&net, &c).unwrap();
        prop_assume!(a < -1e-3);
        let (eq, _) = ptype_equilibrium(&net, &c).unwrap();
        let x0 = eq.state().map(|v| v * (1.0 + rng.random_range(-0.1..0.1)));
        let plant = Plant::Linear(net);
        let cl = ClosedLoop::new(&plant, ControllerSpec::PType(c));
        let t_end = (50.0 / a.abs()).max(200.0);
        let traj = integrate(&cl, &x0, &SimOptions { t_end, ..SimOptions::default() }).unwrap();
        let s = settling(&traj, c.setpoint());
        prop_assert!(s.settled, "abscissa {a}, final error {}", s.steady_state_error);
        prop_assert!(s.settling_time.is_some_and(f64::is_finite));
    }
}

#[test]
fn sweep_bytes_do_not_depend_on_threads() {
    let model = Model {
        name: None,
        plant: Plant::Linear(common::example2()),
        controller: ControllerSpec::PType(PTypeAic { mu: 1.0, theta: 1.0, eta: 1.0, kp: 1.0 }),
    };
    let axes = [
        SweepAxis::parse("r=0.5:20:4log").unwrap(),
        SweepAxis::parse("kp=0.1:10:3log").unwrap(),
        SweepAxis::parse("eta=0.1:10:3log").unwrap(),
    ];
    let csv = |threads: usize| {
        let opts = SweepOptions {
            simulate: true,
            sim: SimOptions { t_end: 20.0, ..SimOptions::default() },
            threads: Some(threads),
        };
        let mut out = Vec::new();
        sweep(&model, &axes, &opts).unwrap().write_csv(&mut out).unwrap();
        out
    };
    let one = csv(1);
    assert_eq!(one, csv(8));
    assert_eq!(one, csv(1));
    assert_eq!(String::from_utf8(one).unwrap().lines().count(), 37);
}
