use bilevel_flow::atomic_mp::{
    equilibrium_social_cost, random_sources, repair, run_atomic_bilevel, run_atomic_equilibrium, small_instance,
    threshold_tolls, AtomicBilevelParams, AtomicParams, AtomicSolver, GridValue, TieBreak,
};
use bilevel_flow::bilevel_toll::TollCadence;
use bilevel_flow::cost_model::{CostModel, TollState};
use bilevel_flow::fixtures::{sioux_falls, sioux_falls_costs, sioux_falls_users, symmetric_diamond};
use bilevel_flow::network::{generate_rrg, DirectedNetwork};
use bilevel_flow::oracles::{atomic_bruteforce, atomic_potential_minimizer};
use bilevel_flow::rng::fork;
use proptest::prelude::*;

fn feasible(net: &DirectedNetwork, users: &[i64], x: &[i64]) -> bool {
    let mut r = users.to_vec();
    for (e, edge) in net.edges().iter().enumerate() {
        if x[e] < 0 {
            return false;
        }
        r[edge.head] -= x[e];
        r[edge.tail] += x[e];
    }
    r[net.destination()] = 0;
    r.iter().all(|&v| v == 0)
}

fn diamond_users(k: i64) -> Vec<i64> {
    vec![k, 0, 0, 0]
}

#[test]
fn two_users_split_on_symmetric_diamond() {
    let (net, cost) = symmetric_diamond(2.0);
    let users = diamond_users(2);
    let r = run_atomic_equilibrium(&net, &cost, &[0.0; 4], &users, AtomicParams::default()).unwrap();
    assert_eq!(r.flows, vec![1, 1, 1, 1]);
    assert!((r.potential - 4.0).abs() < 1e-12);
    let bf = atomic_bruteforce(&net, &cost, &[0.0; 4], &users, 3).unwrap();
    assert_eq!(bf.argmin, vec![vec![1, 1, 1, 1]]);
    assert!(r.converged && !r.repaired);
}

#[test]
fn heavy_toll_moves_both_users() {
    let (net, cost) = symmetric_diamond(2.0);
    let tolls = [3.0, 0.0, 0.0, 0.0];
    let r = run_atomic_equilibrium(&net, &cost, &tolls, &diamond_users(2), AtomicParams::default()).unwrap();
    assert_eq!(r.flows, vec![0, 0, 2, 2]);
    assert!((r.potential - 6.0).abs() < 1e-12);
}

#[test]
fn no_users_means_no_flow() {
    let (net, cost) = symmetric_diamond(0.0);
    let r = run_atomic_equilibrium(&net, &cost, &[0.0; 4], &diamond_users(0), AtomicParams::default()).unwrap();
    assert_eq!(r.flows, vec![0; 4]);
    assert_eq!(r.potential, 0.0);
}

#[test]
fn rejects_bad_inputs() {
    let (net, cost) = symmetric_diamond(1.0);
    assert!(AtomicSolver::new(&net, &cost, &[0.0; 4], &[-1, 0, 0, 0], AtomicParams::default()).is_err());
    assert!(AtomicSolver::new(&net, &cost, &[0.0; 3], &diamond_users(1), AtomicParams::default()).is_err());
    let p = AtomicParams { window: 0, ..Default::default() };
    assert!(AtomicSolver::new(&net, &cost, &[0.0; 4], &diamond_users(1), p).is_err());
}

#[test]
fn destination_messages_are_flat() {
    let (net, cost) = symmetric_diamond(2.0);
    let mut solver = AtomicSolver::new(&net, &cost, &[0.0; 4], &diamond_users(2), AtomicParams::default()).unwrap();
    for _ in 0..3 {
        solver.sweep();
    }
    // Edge 1→3 ends at the destination; its tail slot is 3.
    let msg = solver.message(3);
    for (k, v) in msg.values.iter().enumerate() {
        if msg.working_point + k as i64 - 1 >= 0 {
            assert_eq!(*v, GridValue::ZERO);
        } else {
            assert!(!v.is_valid());
        }
    }
}

#[test]
fn small_instances_reach_bruteforce_minimum() {
    let mut hits = 0;
    let mut seed = 1;
    for _ in 0..20 {
        let (used, net, cost, users) = small_instance(seed, 12, 6).unwrap();
        seed = used + 1;
        let tolls = vec![0.0; net.num_edges()];
        let bf = atomic_bruteforce(&net, &cost, &tolls, &users, net.destination()).unwrap();
        let r = run_atomic_equilibrium(&net, &cost, &tolls, &users, AtomicParams { seed: used, ..Default::default() })
            .unwrap();
        assert!(feasible(&net, &users, &r.flows));
        if (r.potential - bf.min_potential).abs() <= 1e-9 {
            hits += 1;
        }
    }
    assert!(hits >= 14, "{hits}/20");
}

#[test]
fn bias_tie_break_also_reaches_minimum() {
    let (used, net, cost, users) = small_instance(40, 12, 6).unwrap();
    let tolls = vec![0.0; net.num_edges()];
    let bf = atomic_bruteforce(&net, &cost, &tolls, &users, net.destination()).unwrap();
    let p = AtomicParams { seed: used, tie_break: TieBreak::Bias, ..Default::default() };
    let r = run_atomic_equilibrium(&net, &cost, &tolls, &users, p).unwrap();
    assert!(feasible(&net, &users, &r.flows));
    assert!((r.potential - bf.min_potential).abs() <= 1e-9);
}

#[test]
fn matches_potential_minimizer_on_rrg50() {
    let net = generate_rrg(50, 3, 4).unwrap();
    let mut rng = fork(4, "test");
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let users = random_sources(&net, 3, 4, &mut rng);
    assert_eq!(users.iter().sum::<i64>(), 12);
    let tolls = vec![0.0; net.num_edges()];
    let x = atomic_potential_minimizer(&net, &cost, &tolls, &users, net.destination()).unwrap();
    let r = run_atomic_equilibrium(&net, &cost, &tolls, &users, AtomicParams::default()).unwrap();
    assert!(r.converged);
    assert!((r.potential - cost.atomic_potential(&x, &tolls).unwrap()).abs() < 1e-9);
}

#[test]
fn deterministic_for_a_seed() {
    let (used, net, cost, users) = small_instance(7, 12, 6).unwrap();
    let tolls = vec![0.0; net.num_edges()];
    let p = AtomicParams { seed: used, ..Default::default() };
    let a = run_atomic_equilibrium(&net, &cost, &tolls, &users, p.clone()).unwrap();
    let b = run_atomic_equilibrium(&net, &cost, &tolls, &users, p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn repair_fixes_an_unbalanced_target() {
    let (net, _) = symmetric_diamond(2.0);
    let users = diamond_users(2);
    let x = repair(&net, &users, 3, &[2, 0, 0, 1]).unwrap();
    assert!(feasible(&net, &users, &x));
    let dev: i64 = x.iter().zip([2, 0, 0, 1]).map(|(a, b)| (a - b).abs()).sum();
    // Feasible flows are (a, a, 2 - a, 2 - a); a = 1 and a = 2 both deviate by 3.
    assert_eq!(dev, 3);
    assert!(x == vec![1, 1, 1, 1] || x == vec![2, 2, 0, 0]);
}

#[test]
fn atomic_bilevel_never_worse_than_nash() {
    let net = generate_rrg(50, 3, 2).unwrap();
    let mut rng = fork(2, "test");
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let users = random_sources(&net, 3, 4, &mut rng);
    let params = AtomicBilevelParams { sweeps: 10, trials: 2, ..Default::default() };
    let rep = run_atomic_bilevel(&net, &cost, &users, &TollState::uniform(net.num_edges(), 1.0), &params).unwrap();
    assert_eq!(rep.trials.len(), 2);
    assert!(rep.best_cost <= rep.nash_cost + 1e-12);
    assert!(rep.best_tolls.iter().all(|&t| (0.0..=1.0).contains(&t)));
    let h = equilibrium_social_cost(&net, &cost, &rep.best_tolls, &users).unwrap();
    assert!((h - rep.best_cost).abs() < 1e-12);
    for t in &rep.trials {
        assert_eq!(t.trajectory.len(), params.warmup_sweeps + params.sweeps);
        for w in t.trajectory.windows(2) {
            assert!(w[1].2 <= w[0].2);
        }
    }
}

#[test]
fn zero_cap_keeps_nash() {
    let (used, net, cost, users) = small_instance(3, 12, 6).unwrap();
    let params = AtomicBilevelParams {
        atomic: AtomicParams { seed: used, ..Default::default() },
        sweeps: 5,
        trials: 1,
        cadence: TollCadence::PerSweep(10),
        ..Default::default()
    };
    let rep = run_atomic_bilevel(&net, &cost, &users, &TollState::uniform(net.num_edges(), 0.0), &params).unwrap();
    assert_eq!(rep.best_cost, rep.nash_cost);
    assert!(rep.best_tolls.iter().all(|&t| t == 0.0));
}

#[test]
fn sioux_falls_cases_and_thresholding() {
    let f = sioux_falls();
    let cost = sioux_falls_costs().unwrap();
    for per in [4, 6] {
        let users = sioux_falls_users(per, 2);
        let params = AtomicBilevelParams { sweeps: 10, trials: 1, ..Default::default() };
        let rep =
            run_atomic_bilevel(&f.network, &cost, &users, &TollState::uniform(76, 1.0), &params).unwrap();
        assert!(rep.best_cost <= rep.nash_cost);
        let (thin, h) = threshold_tolls(&f.network, &cost, &users, &rep.best_tolls, 0.15).unwrap();
        assert!(h <= rep.best_cost + 1e-12);
        assert!(thin.iter().zip(&rep.best_tolls).all(|(a, b)| *a == 0.0 || a == b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn repair_output_is_feasible_and_close(seed in 1u64..200, target in prop::collection::vec(0i64..4, 12)) {
        let (_, net, cost, users) = small_instance(seed, 12, 6).unwrap();
        let target = &target[..net.num_edges()];
        let x = repair(&net, &users, net.destination(), target).unwrap();
        prop_assert!(feasible(&net, &users, &x));
        // Any feasible flow bounds the deviation from above.
        let tolls = vec![0.0; net.num_edges()];
        let y = atomic_potential_minimizer(&net, &cost, &tolls, &users, net.destination()).unwrap();
        let dev = |f: &[i64]| f.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<i64>();
        prop_assert!(dev(&x) <= dev(&y));
        prop_assert_eq!(repair(&net, &users, net.destination(), &x).unwrap(), x);
    }

    #[test]
    fn thresholding_never_raises_cost(seed in 1u64..100, eps in 0.0f64..1.0, raw in prop::collection::vec(0.0f64..1.0, 12)) {
        let (_, net, cost, users) = small_instance(seed, 12, 6).unwrap();
        let tolls = &raw[..net.num_edges()];
        let before = equilibrium_social_cost(&net, &cost, tolls, &users).unwrap();
        let (_, after) = threshold_tolls(&net, &cost, &users, tolls, eps).unwrap();
        prop_assert!(after <= before);
    }
}
