use bilevel_flow::cost_model::{verify_wardrop, verify_wardrop_multi, AffineLatency, CostModel};
use bilevel_flow::fixtures::{pigou_diamond, symmetric_diamond};
use bilevel_flow::mp_equilibrium::{
    linf, run_equilibrium, run_equilibrium_multidest, search_root, solve_root, Branch, CavityRoot, CavityView,
    DestinationMethod, LeafRule, MpParams, PotentialLayer, RootSearch, Scratch, Shape, Topology,
};
use bilevel_flow::network::{
    generate_rrg, generate_rrg_multi, random_classes, DirectedEdge, DirectedNetwork, TrafficClass,
};
use bilevel_flow::oracles::convex_equilibrium;
use bilevel_flow::piecewise::ConvexPiecewise;
use bilevel_flow::rng::fork;
use proptest::prelude::*;

fn zero_cost(m: usize) -> CostModel {
    CostModel::new(vec![AffineLatency { constant: 0.0, slope: 0.0 }; m])
}

/// Nodes 0..3 with edges 0→1, 1→2, 2→0, 0→2 and destination 2.
fn square(lambda0: f64) -> DirectedNetwork {
    let e = |h, t| DirectedEdge { head: h, tail: t };
    DirectedNetwork::new(3, vec![e(0, 1), e(1, 2), e(2, 0), e(0, 2)], vec![lambda0, 0.0, 0.0], vec![2]).unwrap()
}

fn smooth(slope: f64, curvature: f64) -> Shape {
    Shape::Smooth(Branch { slope, curvature })
}

fn view<'a>(
    topo: &'a Topology,
    shapes: &'a [Shape],
    working: &'a [f64],
    layer: &'a PotentialLayer<'a>,
    resources: &'a [f64],
    leaf: &'a LeafRule,
) -> CavityView<'a, PotentialLayer<'a>> {
    CavityView { topo, shapes, working, total_working: None, layer, resources, grounded: Some(2), leaf }
}

#[test]
fn cavity_update_matches_hand_solution() {
    // Slot (0, e0) with upstream slots 4 (edge 2→0, incoming) and 7 (edge 0→2, outgoing).
    let net = square(0.0);
    let topo = Topology::new(&net);
    assert_eq!(topo.slots[0].upstream, vec![(4, 1), (7, -1)]);
    let cost = CostModel::new(vec![
        AffineLatency { constant: 0.0, slope: 0.0 },
        AffineLatency { constant: 0.0, slope: 0.0 },
        AffineLatency { constant: 0.0, slope: 1.0 },
        AffineLatency { constant: 0.0, slope: 0.0 },
    ]);
    let tolls = [0.0; 4];
    let layer = PotentialLayer { cost: &cost, tolls: &tolls };
    let mut shapes = vec![Shape::ZERO; 8];
    // x²/2 re-centered at 0.5, so the upstream working point is not clamped.
    shapes[4] = smooth(0.5, 1.0);
    // Slot 7 gets a wall on both sides at zero, so only edge 2→0 can feed node 0.
    shapes[7] = Shape::Kinked { breakpoint: 0.0, left: None, right: None };
    let mut working = vec![0.0; 8];
    working[4] = 0.5;
    let resources = [0.0; 3];
    let leaf = LeafRule { confirm: false, ..LeafRule::default() };
    let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
    let mut scratch = Scratch::default();
    match v.solve_cavity_root(0, 1.0, &mut scratch).unwrap() {
        CavityRoot::Regular { mu, .. } => assert!((mu + 2.0).abs() < 1e-14),
        r => panic!("{r:?}"),
    }
    let mut w = working.clone();
    w[0] = 1.0;
    let v = view(&topo, &shapes, &w, &layer, &resources, &leaf);
    let (shape, leaf) = v.update(0, &mut scratch).unwrap();
    assert_eq!(leaf, None);
    assert_eq!(shape, smooth(2.0, 2.0));
    assert!(v.solve_cavity_root(0, 0.0, &mut scratch).unwrap().is_degenerate());
    // The destination's own slots are grounded.
    assert_eq!(v.update(3, &mut scratch).unwrap().0, Shape::ZERO);
}

#[test]
fn primary_leaf_and_effective_resource() {
    let net = square(1.0);
    let topo = Topology::new(&net);
    let cost = zero_cost(4);
    let tolls = [0.0; 4];
    let layer = PotentialLayer { cost: &cost, tolls: &tolls };
    let mut shapes = vec![Shape::ZERO; 8];
    shapes[4] = smooth(1.0, 1.0);
    shapes[7] = smooth(1.0, 1.0);
    shapes[1] = smooth(0.0, 1.0);
    let mut working = vec![0.0; 8];
    working[0] = 1.0 + 1e-4;
    working[1] = 1.0;
    let resources = [1.0, 0.0, 0.0];
    for confirm in [false, true] {
        let leaf = LeafRule { confirm, ..LeafRule::default() };
        let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
        assert_eq!(v.effective_resource(0), 1.0);
        let (shape, leaf) = v.update(0, &mut Scratch::default()).unwrap();
        assert_eq!(leaf, Some(1.0));
        assert_eq!(
            shape,
            Shape::Kinked {
                breakpoint: 1.0,
                left: Some(Branch { slope: -1.0, curvature: 1.0 }),
                right: Some(Branch { slope: 1.0, curvature: 1.0 }),
            }
        );
    }

    let mut shapes = shapes.clone();
    shapes[4] = Shape::Kinked { breakpoint: 1.0, left: None, right: None };
    let resources = [3.0, 0.0, 0.0];
    let leaf = LeafRule::default();
    let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
    assert_eq!(v.effective_resource(0), 4.0);
    shapes[4] = smooth(1.0, 1.0);
    let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
    assert_eq!(v.effective_resource(0), 3.0);
}

#[test]
fn marginal_flow_cases() {
    let net = square(0.0);
    let topo = Topology::new(&net);
    let cost = zero_cost(4);
    let tolls = [0.0; 4];
    let layer = PotentialLayer { cost: &cost, tolls: &tolls };
    let mut shapes = vec![Shape::ZERO; 8];
    shapes[0] = smooth(0.0, 1.0);
    shapes[1] = smooth(0.0, 1.0);
    let working = vec![1.0; 8];
    let resources = [0.0; 3];
    let leaf = LeafRule::default();
    let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
    assert!((v.marginal_energy(0).unwrap().argmin() - 1.0).abs() < 1e-15);
    shapes[0] = smooth(3.0, 1.0);
    shapes[1] = smooth(3.0, 1.0);
    let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
    assert_eq!(v.marginal_energy(0).unwrap().argmin(), 0.0);
    // Branch slopes out of order make the combined energy non-convex.
    shapes[0] = Shape::Kinked {
        breakpoint: 1.0,
        left: Some(Branch { slope: 1.0, curvature: 0.0 }),
        right: Some(Branch { slope: 0.5, curvature: 0.0 }),
    };
    let v = view(&topo, &shapes, &working, &layer, &resources, &leaf);
    assert!(v.marginal_energy(0).is_err());
}

#[test]
fn pigou_and_diamond_closed_forms() {
    let (net, cost) = pigou_diamond();
    let rep = run_equilibrium(&net, &cost, &[0.0; 4], MpParams::default()).unwrap();
    assert!(rep.converged);
    assert!(linf(&rep.flows, &[0.0, 0.0, 1.0, 1.0]) < 1e-10, "{:?}", rep.flows);
    // With a balanced destination the cycle constraint is redundant: curvatures keep
    // growing and the flows only creep toward the answer.
    let params = MpParams { method: DestinationMethod::Constrained, max_sweeps: 50, ..MpParams::default() };
    let rep = run_equilibrium(&net, &cost, &[0.0; 4], params).unwrap();
    assert!(!rep.converged);
    assert!(linf(&rep.flows, &[0.0, 0.0, 1.0, 1.0]) < 1e-2);
    let (net, cost) = symmetric_diamond(2.0);
    let rep = run_equilibrium(&net, &cost, &[0.0; 4], MpParams::default()).unwrap();
    assert!(rep.converged);
    assert!(linf(&rep.flows, &[1.0; 4]) < 1e-10, "{:?}", rep.flows);
    let class = TrafficClass::from_network(&net).unwrap();
    assert!(verify_wardrop(&net, &cost, &[0.0; 4], &class, &rep.flows, 1e-6).passed);
}

#[test]
fn rrg_matches_oracle() {
    let net = generate_rrg(100, 3, 11).unwrap();
    let mut rng = fork(11, "costs");
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let tolls = vec![0.0; net.num_edges()];
    let class = TrafficClass::from_network(&net).unwrap();
    let oracle = convex_equilibrium(&net, &cost, &tolls, &[class.clone()]).unwrap();
    let params = MpParams { seed: 11, reference: Some(oracle.flows.clone()), ..MpParams::default() };
    let rep = run_equilibrium(&net, &cost, &tolls, params).unwrap();
    assert!(rep.converged);
    assert!(linf(&rep.flows, &oracle.flows) < 1e-6);
    assert!(verify_wardrop(&net, &cost, &tolls, &class, &rep.flows, 1e-6).passed);
    assert!(rep.trace.iter().all(|r| r.flow_error.is_some()));
}

#[test]
fn single_class_multidest_is_the_same_run() {
    let (net, cost) = symmetric_diamond(2.0);
    let class = TrafficClass::from_network(&net).unwrap();
    let a = run_equilibrium(&net, &cost, &[0.0; 4], MpParams::default()).unwrap();
    let b = run_equilibrium_multidest(&net, &cost, &[0.0; 4], &[class], MpParams::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn disjoint_classes_decouple() {
    // Two diamonds sharing no edges, joined by a zero-resource bridge pair.
    let e = |h, t| DirectedEdge { head: h, tail: t };
    let edges = vec![e(0, 1), e(0, 2), e(1, 3), e(2, 3), e(4, 5), e(4, 6), e(5, 7), e(6, 7), e(3, 4), e(7, 0)];
    let net = DirectedNetwork::new(8, edges, vec![0.0; 8], vec![3, 7]).unwrap();
    let mut lat = vec![AffineLatency { constant: 1.0, slope: 1.0 }; 10];
    lat[1] = AffineLatency { constant: 1.5, slope: 1.0 };
    lat[5] = AffineLatency { constant: 0.5, slope: 2.0 };
    let cost = CostModel::new(lat);
    let mut ra = vec![0.0; 8];
    ra[0] = 2.0;
    let mut rb = vec![0.0; 8];
    rb[4] = 1.0;
    let classes = [TrafficClass::new(3, ra).unwrap(), TrafficClass::new(7, rb).unwrap()];
    let tolls = [0.0; 10];
    let rep = run_equilibrium_multidest(&net, &cost, &tolls, &classes, MpParams::default()).unwrap();
    assert!(rep.converged);
    for (a, c) in classes.iter().enumerate() {
        let alone = run_equilibrium_multidest(&net, &cost, &tolls, &[c.clone()], MpParams::default()).unwrap();
        assert!(linf(&rep.class_flows[a], &alone.flows) < 1e-7);
    }
}

#[test]
fn multidest_matches_oracle_in_aggregate() {
    let net = generate_rrg_multi(60, 3, 2, 3).unwrap();
    let mut rng = fork(3, "classes");
    let classes = random_classes(&net, &mut rng).unwrap();
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let tolls = vec![0.0; net.num_edges()];
    let oracle = convex_equilibrium(&net, &cost, &tolls, &classes).unwrap();
    let rep = run_equilibrium_multidest(&net, &cost, &tolls, &classes, MpParams { seed: 3, ..MpParams::default() })
        .unwrap();
    assert!(rep.converged);
    assert!(linf(&rep.flows, &oracle.flows) < 1e-5);
    assert!(verify_wardrop_multi(&net, &cost, &tolls, &classes, &rep.class_flows, 1e-6).passed);
}

#[test]
fn identical_seeds_reproduce() {
    let net = generate_rrg(40, 3, 2).unwrap();
    let mut rng = fork(2, "costs");
    let cost = CostModel::random(net.num_edges(), &mut rng);
    let tolls = vec![0.0; net.num_edges()];
    let p = MpParams { seed: 5, max_sweeps: 20, ..MpParams::default() };
    let a = run_equilibrium(&net, &cost, &tolls, p.clone()).unwrap();
    let b = run_equilibrium(&net, &cost, &tolls, p).unwrap();
    assert_eq!(a, b);
}

fn residual(terms: &[(i8, ConvexPiecewise)], constant: f64, mu: f64) -> f64 {
    constant + terms.iter().map(|(b, f)| f64::from(*b) * f.inverse_derivative(-f64::from(*b) * mu)).sum::<f64>()
}

fn term() -> impl Strategy<Value = (i8, ConvexPiecewise)> {
    (
        prop_oneof![Just(-1i8), Just(1i8)],
        0.0..3.0f64,
        -2.0..2.0f64,
        0.0..2.0f64,
        0.0..2.0f64,
        any::<bool>(),
    )
        .prop_map(|(b, x, s, k, dk, kinked)| {
            let f = if kinked {
                ConvexPiecewise::kinked(x, Some((s - dk, k)), Some((s + dk, k + 0.5)), 0.0).unwrap()
            } else {
                ConvexPiecewise::quadratic(x, s, k + 0.1, 0.0, f64::INFINITY)
            };
            (b, f)
        })
}

/// Numerical cavity energy for two terms: minimize over the first flow, the second
/// following from conservation.
fn cavity_energy(terms: &[(i8, ConvexPiecewise); 2], c: f64) -> f64 {
    let (b1, f1) = (f64::from(terms[0].0), &terms[0].1);
    let (b2, f2) = (f64::from(terms[1].0), &terms[1].1);
    let other = |x1: f64| -(c + b1 * x1) / b2;
    let g = |x1: f64| {
        let x2 = other(x1);
        if x2 < 0.0 { f64::INFINITY } else { f1.value(x1) + f2.value(x2) }
    };
    // Feasible x1 interval from x2 ≥ 0.
    let root = -c / b1;
    let (mut lo, mut hi) = if -b1 / b2 > 0.0 { (root.max(0.0), 1e3) } else { (0.0, root) };
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - r * (hi - lo);
        let b = lo + r * (hi - lo);
        if g(a) <= g(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    g(0.5 * (lo + hi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn residual_is_non_increasing(terms in prop::collection::vec(term(), 1..5), c in -4.0..4.0f64) {
        let mut prev = f64::INFINITY;
        for k in 0..400 {
            let mu = -10.0 + 0.05 * f64::from(k);
            let r = residual(&terms, c, mu);
            prop_assert!(r <= prev + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn root_cancels_the_residual(terms in prop::collection::vec(term(), 1..5), c in -4.0..4.0f64) {
        let mut knots = Vec::new();
        if let RootSearch::Found(root) = search_root(&terms, c, &mut knots).unwrap() {
            let scale = 1.0 + c.abs() + terms.len() as f64;
            match root {
                CavityRoot::Regular { mu, slope } => {
                    prop_assert!(slope < 0.0);
                    prop_assert!(residual(&terms, c, mu).abs() <= 1e-10 * scale);
                }
                CavityRoot::Plateau { lo, hi, .. } => {
                    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
                        let mu = if lo.is_finite() && hi.is_finite() {
                            lo + t * (hi - lo)
                        } else if lo.is_finite() {
                            lo + 10.0 * t
                        } else if hi.is_finite() {
                            hi - 10.0 * t
                        } else {
                            t
                        };
                        prop_assert!(residual(&terms, c, mu).abs() <= 1e-10 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn message_slope_is_the_cavity_derivative(
        (b1, b2) in (prop_oneof![Just(-1i8), Just(1i8)], prop_oneof![Just(-1i8), Just(1i8)]),
        x1 in 0.0..2.0f64, s1 in -1.0..1.0f64, k1 in 0.2..2.0f64,
        x2 in 0.0..2.0f64, s2 in -1.0..1.0f64, k2 in 0.2..2.0f64,
        lam in 0.0..2.0f64, sign in prop_oneof![Just(-1i8), Just(1i8)], x_e in 0.1..3.0f64,
    ) {
        let terms = [
            (b1, ConvexPiecewise::quadratic(x1, s1, k1, 0.0, f64::INFINITY)),
            (b2, ConvexPiecewise::quadratic(x2, s2, k2, 0.0, f64::INFINITY)),
        ];
        let c = |x: f64| lam + f64::from(sign) * x;
        let mut knots = Vec::new();
        let Ok(root) = solve_root(&terms, c(x_e), &mut knots) else { return Ok(()) };
        let CavityRoot::Regular { mu, slope } = root else { return Ok(()) };
        // Stay clear of kinks of the cavity energy.
        prop_assume!(knots.iter().all(|k| (k - mu).abs() > 1e-2));
        let h = 1e-5;
        let (fp, fm) = (cavity_energy(&terms, c(x_e + h)), cavity_energy(&terms, c(x_e - h)));
        prop_assume!(fp.is_finite() && fm.is_finite());
        let fd = (fp - fm) / (2.0 * h);
        let Shape::Smooth(branch) = root.shape(sign, x_e) else { unreachable!() };
        prop_assert!((fd - branch.slope).abs() < 1e-4 * (1.0 + fd.abs()), "fd {} vs {}", fd, branch.slope);
        prop_assert!((branch.curvature + 1.0 / slope).abs() < 1e-12);
    }
}
