use bilevel_flow::bilevel_toll::{
    marginal_cost_tolls, optimal_toll, run_bilevel, select_tollable_edges, toll_response, top_edges,
    BilevelParams, TollCadence, TollResponse, UpperLayer,
};
use bilevel_flow::cost_model::{AffineLatency, CostModel, TollState};
use bilevel_flow::fixtures::{pigou_diamond, symmetric_diamond};
use bilevel_flow::mp_equilibrium::{
    linf, run_equilibrium, solve_root, Branch, CavityRoot, CavityView, EquilibriumSolver, LeafRule, MpParams,
    Scratch, Shape, SocialLayer, Topology,
};
use bilevel_flow::network::{generate_rrg, DirectedEdge, DirectedNetwork, TrafficClass};
use bilevel_flow::oracles::social_optimum;
use bilevel_flow::piecewise::ConvexPiecewise;
use bilevel_flow::rng::{fork, seeded};
use bilevel_flow::Error;
use proptest::prelude::*;

fn single(net: &DirectedNetwork) -> Vec<TrafficClass> {
    vec![TrafficClass::from_network(net).unwrap()]
}

fn half_line() -> TollResponse {
    // Curvature 2, slope -1 at zero flow: x^N(τ) = max((1 - τ)/2, 0).
    TollResponse::new(0.0, vec![ConvexPiecewise::quadratic(0.0, -1.0, 2.0, 0.0, f64::INFINITY)])
}

#[test]
fn toll_response_closed_form() {
    let r = half_line();
    for tau in [0.0, 0.3, 0.5, 0.99, 1.0, 1.5, 4.0] {
        assert!((r.flow(tau) - ((1.0 - tau) / 2.0).max(0.0)).abs() < 1e-15);
    }
    let pts = r.breakpoints(0.0, 2.0);
    assert_eq!(pts.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.0, 1.0, 2.0]);
}

#[test]
fn toll_search_cases() {
    let r = half_line();
    assert!((optimal_toll(&r, 0.25, 1.0) - 0.5).abs() < 1e-15);
    assert_eq!(optimal_toll(&r, 0.6, 1.0), 0.0);
    assert_eq!(optimal_toll(&r, 0.0, 0.3), 0.3);
    // A flat stretch at the target resolves to the smallest toll reaching it.
    assert_eq!(optimal_toll(&r, 0.0, 3.0), 1.0);
}

#[test]
fn upper_messages_mirror_the_lower_algebra() {
    let e = |h, t| DirectedEdge { head: h, tail: t };
    let net = DirectedNetwork::new(3, vec![e(0, 1), e(1, 2), e(2, 0), e(0, 2)], vec![0.0; 3], vec![2]).unwrap();
    let topo = Topology::new(&net);
    let cost = CostModel::new(vec![
        AffineLatency { constant: 0.0, slope: 0.0 },
        AffineLatency { constant: 0.0, slope: 0.0 },
        AffineLatency { constant: 0.0, slope: 1.0 },
        AffineLatency { constant: 0.0, slope: 0.0 },
    ]);
    let layer = SocialLayer { cost: &cost };
    let mut shapes = vec![Shape::ZERO; 8];
    shapes[7] = Shape::Kinked { breakpoint: 0.0, left: None, right: None };
    // σ(x) = x² on edge 2→0 expands exactly around any working point.
    let mut working = vec![0.0; 8];
    working[4] = 0.5;
    working[0] = 1.0;
    let leaf = LeafRule::default();
    let view = CavityView {
        topo: &topo,
        shapes: &shapes,
        working: &working,
        total_working: None,
        layer: &layer,
        resources: &[0.0; 3],
        grounded: Some(2),
        leaf: &leaf,
    };
    let mut scratch = Scratch::default();
    let (shape, _) = view.update(0, &mut scratch).unwrap();
    assert_eq!(shape, Shape::Smooth(Branch { slope: 2.0, curvature: 2.0 }));
    assert_eq!(view.update(3, &mut scratch).unwrap().0, Shape::ZERO);
}

#[test]
fn parallel_branches_add_stiffness_harmonically() {
    let f = ConvexPiecewise::quadratic(1.0, 0.0, 4.0, 0.0, f64::INFINITY);
    for k in 1..5 {
        let terms = vec![(1i8, f); k];
        let root = solve_root(&terms, -(k as f64), &mut Vec::new()).unwrap();
        let CavityRoot::Regular { slope, .. } = root else { panic!("{root:?}") };
        let Shape::Smooth(b) = root.shape(-1, k as f64) else { unreachable!() };
        assert!((b.curvature - 4.0 / k as f64).abs() < 1e-14, "{slope}");
    }
}

#[test]
fn zero_toll_response_is_the_marginal_flow() {
    let (net, cost) = symmetric_diamond(2.0);
    let mut solver = EquilibriumSolver::new(&net, &cost, &[0.0; 4], &single(&net), MpParams::default()).unwrap();
    let rep = solver.run().unwrap();
    for e in 0..4 {
        let r = toll_response(&solver, e).unwrap();
        assert!((r.flow(0.0) - rep.flows[e]).abs() < 1e-15);
        let pts = r.breakpoints(0.0, 5.0);
        assert!(pts.windows(2).all(|w| w[1].1 <= w[0].1));
    }
}

#[test]
fn marginal_cost_tolls_fixtures() {
    let (net, cost) = pigou_diamond();
    let tolls = marginal_cost_tolls(&net, &cost, &single(&net)).unwrap();
    assert!(linf(&tolls, &[0.0, 0.0, 0.5, 0.0]) < 1e-10);
    let flat = CostModel::new(vec![AffineLatency { constant: 2.0, slope: 0.0 }; 4]);
    assert_eq!(marginal_cost_tolls(&net, &flat, &single(&net)).unwrap(), vec![0.0; 4]);
}

#[test]
fn marginal_cost_tolls_induce_the_social_optimum() {
    let net = generate_rrg(50, 3, 1).unwrap();
    let mut rng = fork(1, "costs");
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let classes = single(&net);
    let tolls = marginal_cost_tolls(&net, &cost, &classes).unwrap();
    let so = social_optimum(&net, &cost, &classes).unwrap();
    let rep = run_equilibrium(&net, &cost, &tolls, MpParams { seed: 1, ..MpParams::default() }).unwrap();
    assert!(rep.converged);
    assert!(linf(&rep.flows, &so.flows) < 1e-6);
}

#[test]
fn pigou_bilevel_reaches_the_optimum() {
    let (net, cost) = pigou_diamond();
    let params = BilevelParams { sweeps: 20, ..BilevelParams::default() };
    let rep = run_bilevel(&net, &cost, &single(&net), &TollState::uniform(4, 1.0), &params).unwrap();
    assert!(rep.records.iter().filter(|r| r.warmup).all(|r| (r.fraction - 1.0).abs() < 1e-9));
    assert!(rep.final_record().best_fraction.abs() < 1e-6);
    // Only the toll difference between the two routes is identified.
    let t = &rep.best_tolls;
    assert!(((t[2] + t[3]) - (t[0] + t[1]) - 0.5).abs() < 1e-6, "{t:?}");
}

#[test]
fn zero_cap_freezes_tolls() {
    let (net, cost) = pigou_diamond();
    let params = BilevelParams { warmup_sweeps: 2, sweeps: 5, ..BilevelParams::default() };
    let rep = run_bilevel(&net, &cost, &single(&net), &TollState::uniform(4, 0.0), &params).unwrap();
    assert_eq!(rep.final_tolls, vec![0.0; 4]);
    assert!(rep.records.iter().all(|r| r.cost == rep.nash_cost && r.nonzero_tolls == 0));
}

#[test]
fn recorded_costs_stay_between_optimum_and_nash() {
    let net = generate_rrg(40, 3, 9).unwrap();
    let mut rng = fork(9, "costs");
    let cost = CostModel::random(net.num_edges(), &mut rng);
    for cadence in [TollCadence::EdgeFraction(0.4), TollCadence::PerSweep(100)] {
        let params =
            BilevelParams { warmup_sweeps: 3, sweeps: 10, cadence, mp: MpParams { seed: 9, ..MpParams::default() } };
        let rep = run_bilevel(&net, &cost, &single(&net), &TollState::uniform(net.num_edges(), 1.0), &params).unwrap();
        let tol = 1e-9 * rep.nash_cost;
        for r in &rep.records {
            assert!(rep.optimal_cost - tol <= r.best_cost && r.best_cost <= rep.nash_cost + tol);
            assert!(rep.optimal_cost - tol <= r.cost);
        }
        assert!(rep.best_tolls.iter().chain(&rep.final_tolls).all(|t| (0.0..=1.0).contains(t)));
    }
}

#[test]
fn cadence_presets_coincide_at_default_sweep_length() {
    let m = 150;
    let sweep = 40 * 2 * m;
    assert_eq!(TollCadence::EdgeFraction(0.4).interval(2, m, sweep), TollCadence::PerSweep(100).interval(2, m, sweep));
}

#[test]
fn tollable_selection_edge_cases() {
    let (net, cost) = symmetric_diamond(2.0);
    let classes = single(&net);
    let p = MpParams::default();
    assert_eq!(select_tollable_edges(&net, &cost, &classes, 1.0, 1.0, &p).unwrap(), vec![0, 1, 2, 3]);
    // Linear latencies without constants: equilibrium is already optimal.
    assert_eq!(select_tollable_edges(&net, &cost, &classes, 1.0, 0.5, &p).unwrap(), vec![0, 1]);
    assert!(matches!(select_tollable_edges(&net, &cost, &classes, 1.0, 0.0, &p), Err(Error::InvalidArgument(_))));
    assert!(matches!(select_tollable_edges(&net, &cost, &classes, 1.0, 1.5, &p), Err(Error::InvalidArgument(_))));
    assert_eq!(top_edges(&[0.0, 3.0, 1.0, 3.0], 0.5), vec![1, 3]);
}

#[test]
fn upper_layer_converges_with_lower() {
    let (net, cost) = pigou_diamond();
    let mut solver = EquilibriumSolver::new(&net, &cost, &[0.0; 4], &single(&net), MpParams::default()).unwrap();
    let mut upper = UpperLayer::new(&solver, &mut seeded(0));
    let mut scratch = Scratch::default();
    for _ in 0..200 * solver.updates_per_sweep() {
        let (c, s) = solver.random_slot();
        solver.update_slot(c, s);
        upper.update(&solver, c, s, &mut scratch);
    }
    // The social optimum splits the unit demand evenly.
    assert!((upper.target_flow(&solver, 2).unwrap() - 0.5).abs() < 1e-8);
}

proptest! {
    #[test]
    fn toll_response_is_monotone(
        pieces in prop::collection::vec((0.0..2.0f64, -2.0..2.0f64, 0.0..3.0f64), 1..4),
        base in 0.0..1.0f64,
    ) {
        let energies = pieces
            .iter()
            .map(|&(c, s, k)| ConvexPiecewise::kinked(c, Some((s - 0.5, k)), Some((s, k + 0.1)), 0.0).unwrap())
            .collect();
        let r = TollResponse::new(base, energies);
        let pts = r.breakpoints(0.0, 5.0);
        for w in pts.windows(2) {
            prop_assert!(w[1].1 <= w[0].1 + 1e-12);
            // Linear between consecutive breakpoints.
            let mid = 0.5 * (w[0].0 + w[1].0);
            if w[0].1.is_finite() && w[1].1.is_finite() {
                prop_assert!((r.flow(mid) - 0.5 * (w[0].1 + w[1].1)).abs() < 1e-9);
            }
        }
    }
}
