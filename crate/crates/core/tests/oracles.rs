use bilevel_flow::cost_model::{verify_wardrop, AffineLatency, CostModel};
use bilevel_flow::fixtures::{pigou_diamond, symmetric_diamond, triangle};
use bilevel_flow::network::{generate_rrg, generate_rrg_multi, random_classes, DirectedEdge, DirectedNetwork, TrafficClass};
use bilevel_flow::oracles::{
    atomic_bruteforce, atomic_potential_minimizer, convex_equilibrium, laplacian_solve, social_optimum,
};
use bilevel_flow::rng::fork;
use bilevel_flow::Error;

fn single(net: &DirectedNetwork) -> Vec<TrafficClass> {
    vec![TrafficClass::from_network(net).unwrap()]
}

#[test]
fn pigou_nash_and_social() {
    let (net, cost) = pigou_diamond();
    let nash = convex_equilibrium(&net, &cost, &[0.0; 4], &single(&net)).unwrap();
    let expect = [0.0, 0.0, 1.0, 1.0];
    for (x, y) in nash.flows.iter().zip(expect) {
        assert!((x - y).abs() < 1e-10, "{:?}", nash.flows);
    }
    assert!((cost.social_cost(&nash.flows).unwrap() - 1.0).abs() < 1e-10);
    let so = social_optimum(&net, &cost, &single(&net)).unwrap();
    for (x, y) in so.flows.iter().zip([0.5, 0.5, 0.5, 0.5]) {
        assert!((x - y).abs() < 1e-10, "{:?}", so.flows);
    }
    assert!((so.objective - 0.75).abs() < 1e-10);
}

#[test]
fn symmetric_diamond_splits() {
    let (net, cost) = symmetric_diamond(2.0);
    let rep = convex_equilibrium(&net, &cost, &[0.0; 4], &single(&net)).unwrap();
    for x in &rep.flows {
        assert!((x - 1.0).abs() < 1e-12);
    }
}

#[test]
fn constant_latencies_route_on_shortest_paths() {
    let net = generate_rrg(30, 3, 4).unwrap();
    let mut rng = fork(4, "costs");
    let cost = CostModel::new(
        CostModel::random(net.num_edges(), &mut rng)
            .latencies
            .iter()
            .map(|l| AffineLatency { constant: l.constant, slope: 0.0 })
            .collect(),
    );
    let class = single(&net);
    let so = social_optimum(&net, &cost, &class).unwrap();
    let w: Vec<f64> = cost.latencies.iter().map(|l| l.constant).collect();
    let (d, _) = bilevel_flow::network::paths::distances_to(&net, &w, net.destination());
    let expect: f64 = net.resources().iter().zip(&d).map(|(l, d)| l * d).sum();
    assert!((so.objective - expect).abs() < 1e-8 * expect);
}

#[test]
fn rrg_oracle_is_certified() {
    for seed in 0..3 {
        let net = generate_rrg(100, 3, seed).unwrap();
        let mut rng = fork(seed, "costs");
        let cost = CostModel::random(net.num_edges(), &mut rng);
        let class = single(&net);
        let nash = convex_equilibrium(&net, &cost, &vec![0.0; net.num_edges()], &class).unwrap();
        let rep = verify_wardrop(&net, &cost, &vec![0.0; net.num_edges()], &class[0], &nash.flows, 1e-8);
        assert!(rep.passed, "{rep:?}");
        let so = social_optimum(&net, &cost, &class).unwrap();
        assert!(so.objective <= cost.social_cost(&nash.flows).unwrap() + 1e-9);
    }
}

#[test]
fn multiclass_oracle_is_certified() {
    let net = generate_rrg_multi(60, 3, 3, 5).unwrap();
    let mut rng = fork(5, "classes");
    let classes = random_classes(&net, &mut rng).unwrap();
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let rep = convex_equilibrium(&net, &cost, &vec![0.0; net.num_edges()], &classes).unwrap();
    let check = bilevel_flow::cost_model::verify_wardrop_multi(
        &net,
        &cost,
        &vec![0.0; net.num_edges()],
        &classes,
        &rep.class_flows,
        1e-8,
    );
    assert!(check.passed, "{check:?}");
}

#[test]
fn triangle_laplacian_pattern() {
    let (_, x) = laplacian_solve(&triangle(), &[1.0; 3]).unwrap();
    let mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    assert!((mags[2] - 2.0 / 3.0).abs() < 1e-14);
    assert!((mags[0] - 1.0 / 3.0).abs() < 1e-14);
    assert!((mags[1] - 1.0 / 3.0).abs() < 1e-14);
}

#[test]
fn bruteforce_anchors() {
    let (net, cost) = symmetric_diamond(2.0);
    let bf = atomic_bruteforce(&net, &cost, &[0.0; 4], &[2, 0, 0, 0], 3).unwrap();
    assert_eq!(bf.argmin, vec![vec![1, 1, 1, 1]]);
    assert!((bf.min_potential - 4.0).abs() < 1e-12);

    let (net, cost) = pigou_diamond();
    let bf = atomic_bruteforce(&net, &cost, &[0.0; 4], &[1, 0, 0, 0], 3).unwrap();
    // Both routes cost 1 for a single user, so both are minimizers.
    assert!(bf.argmin.contains(&vec![0, 0, 1, 1]));
    assert_eq!(bf.argmin.len(), 2);
    assert!((bf.min_potential - 1.0).abs() < 1e-12);

    let bf = atomic_bruteforce(&net, &cost, &[0.0; 4], &[0, 0, 0, 0], 3).unwrap();
    assert_eq!(bf.argmin, vec![vec![0; 4]]);
    assert_eq!(bf.min_potential, 0.0);
}

#[test]
fn bruteforce_cap() {
    let (net, cost) = symmetric_diamond(9.0);
    assert!(matches!(
        atomic_bruteforce(&net, &cost, &[0.0; 4], &[9, 0, 0, 0], 3),
        Err(Error::SizeCap(_))
    ));
}

#[test]
fn ssp_minimizer_matches_bruteforce() {
    // A small two-source network with crossing routes.
    let e = |h, t| DirectedEdge { head: h, tail: t };
    let net = DirectedNetwork::new(
        5,
        vec![e(0, 1), e(0, 2), e(1, 2), e(1, 4), e(2, 3), e(3, 4), e(2, 4), e(1, 3)],
        vec![0.0; 5],
        vec![4],
    )
    .unwrap();
    for seed in 0..10 {
        let mut rng = fork(seed, "costs");
        let cost = CostModel::random(net.num_edges(), &mut rng);
        let users = [3, 2, 0, 0, 0];
        let bf = atomic_bruteforce(&net, &cost, &[0.0; 8], &users, 4).unwrap();
        let x = atomic_potential_minimizer(&net, &cost, &[0.0; 8], &users, 4).unwrap();
        let p = cost.atomic_potential(&x, &[0.0; 8]).unwrap();
        assert!((p - bf.min_potential).abs() < 1e-9, "seed {seed}: {p} vs {}", bf.min_potential);
    }
}
