use bilevel_flow::atomic_mp::{
    run_atomic_bilevel, run_atomic_equilibrium, random_sources, threshold_tolls, AtomicBilevelParams, AtomicParams,
};
use bilevel_flow::bilevel_toll::{run_bilevel, select_tollable_edges, BilevelParams};
use bilevel_flow::cost_model::{verify_wardrop_multi, CostModel, TollState};
use bilevel_flow::fixtures::{sioux_falls, sioux_falls_costs, sioux_falls_users};
use bilevel_flow::flow_control::{
    ggd_gradient, run_flow_control, run_ggd, select_targets, ControlState, FlowControlParams, FlowParams, FlowSolver,
    GgdParams, ReferenceMethod,
};
use bilevel_flow::mp_equilibrium::{linf, run_equilibrium_multidest, DestinationMethod, MpParams};
use bilevel_flow::network::{
    generate_lattice_undirected, generate_rrg_multi, generate_rrg_undirected, generate_small_world, load_network,
    random_classes, DirectedNetwork, TrafficClass, UndirectedNetwork,
};
use bilevel_flow::network::io::format_network;
use bilevel_flow::oracles::{atomic_potential_minimizer, convex_equilibrium, laplacian_solve, social_optimum};
use bilevel_flow::rng::fork;
use rand::seq::SliceRandom;

use crate::config::{
    AtomicArgs, Case, EquilibriumArgs, FlowControlArgs, GenerateArgs, Method, NetworkArgs, OracleArgs, OracleMode,
    Selection, TollArgs, UndirectedArgs,
};
use crate::report::{cell, Dump, Outcome, Status, Table};
use crate::CliError;

pub struct DirectedInstance {
    pub net: DirectedNetwork,
    pub cost: CostModel,
    pub classes: Vec<TrafficClass>,
    /// `(t, c)` per edge, with unit sensitivity.
    pub edge_params: Vec<(f64, f64)>,
    pub sioux_falls: bool,
}

pub fn directed_instance(args: &NetworkArgs, seed: u64) -> Result<DirectedInstance, CliError> {
    let (net, cost, edge_params, sf) = if let Some(v) = &args.rrg {
        let net = generate_rrg_multi(v[0], v[1], args.destinations, seed)?;
        let cost = CostModel::random(net.num_edges(), &mut fork(seed, "costs"));
        let params = cost.latencies.iter().map(|l| (l.constant, l.constant / l.slope)).collect();
        (net, cost, params, false)
    } else if let Some(v) = &args.small_world {
        if args.destinations != 1 {
            return Err(CliError::Config("--small-world supports one destination".into()));
        }
        let net = generate_small_world(v[0] as usize, v[1], seed)?;
        let cost = CostModel::random(net.num_edges(), &mut fork(seed, "costs"));
        let params = cost.latencies.iter().map(|l| (l.constant, l.constant / l.slope)).collect();
        (net, cost, params, false)
    } else {
        let name = args.network.as_deref().expect("validated");
        let sf = name.eq_ignore_ascii_case("siouxfalls");
        let file = if sf { sioux_falls() } else { load_network(name)? };
        let cost = if sf { sioux_falls_costs()? } else { CostModel::from_params(&file.edge_params, 1.0)? };
        (file.network, cost, file.edge_params, sf)
    };
    let classes = if net.destinations().len() == 1 {
        vec![TrafficClass::from_network(&net)?]
    } else {
        random_classes(&net, &mut fork(seed, "classes"))?
    };
    Ok(DirectedInstance { net, cost, classes, edge_params, sioux_falls: sf })
}

pub fn undirected_instance(args: &UndirectedArgs, seed: u64) -> Result<UndirectedNetwork, CliError> {
    Ok(match (&args.rrg, args.lattice) {
        (Some(v), _) => generate_rrg_undirected(v[0], v[1], args.sources, seed)?,
        (None, Some(side)) => generate_lattice_undirected(side, args.sources, seed)?,
        _ => return Err(CliError::Config("no undirected network given".into())),
    })
}

fn method(m: Method) -> DestinationMethod {
    match m {
        Method::Grounded => DestinationMethod::Grounded,
        Method::Constrained => DestinationMethod::Constrained,
    }
}

fn reference(m: Method) -> ReferenceMethod {
    match m {
        Method::Grounded => ReferenceMethod::Grounded,
        Method::Constrained => ReferenceMethod::Constrained,
    }
}

fn flow_table(net: &DirectedNetwork, columns: &[&str], values: &[&[f64]]) -> Table {
    let mut cols = vec!["edge", "head", "tail"];
    cols.extend_from_slice(columns);
    let mut t = Table::new("flows", &cols);
    for (e, edge) in net.edges().iter().enumerate() {
        let mut row = vec![cell(e), cell(edge.head), cell(edge.tail)];
        row.extend(values.iter().map(|v| cell(v[e])));
        t.push(row);
    }
    t
}

fn toll_dump(tolls: &[f64]) -> Dump {
    Dump { name: "tolls.txt".into(), lines: tolls.iter().enumerate().map(|(e, t)| format!("{e} {t}")).collect() }
}

pub fn cmd_equilibrium(a: &EquilibriumArgs, seed: u64) -> Result<Outcome, CliError> {
    let inst = directed_instance(&a.net, seed)?;
    let zero = vec![0.0; inst.net.num_edges()];
    let oracle = convex_equilibrium(&inst.net, &inst.cost, &zero, &inst.classes)?;
    let params = MpParams {
        learning_rate: a.learning_rate,
        tolerance: a.tolerance,
        max_sweeps: a.sweeps,
        method: method(a.method),
        seed,
        reference: Some(oracle.flows.clone()),
        ..MpParams::default()
    };
    let rep = run_equilibrium_multidest(&inst.net, &inst.cost, &zero, &inst.classes, params)?;

    let mut out = Outcome::new();
    let mut trace = Table::new("trace", &["sweep", "message_change", "flow_error"]);
    for r in &rep.trace {
        trace.push(vec![cell(r.sweep), cell(r.message_change), r.flow_error.map(cell).unwrap_or_default()]);
    }
    out.tables.push(trace);
    out.tables.push(flow_table(&inst.net, &["flow", "oracle_flow"], &[&rep.flows, &oracle.flows]));
    let err = linf(&rep.flows, &oracle.flows);
    let wardrop = verify_wardrop_multi(&inst.net, &inst.cost, &zero, &inst.classes, &rep.class_flows, 1e-6);
    let mut summary =
        Table::new("summary", &["converged", "sweeps", "flow_error", "wardrop_violation", "wardrop_passed", "failed_updates"]);
    summary.push(vec![
        cell(rep.converged),
        cell(rep.sweeps),
        cell(err),
        cell(wardrop.max_violation),
        cell(wardrop.passed),
        cell(rep.failed_updates),
    ]);
    out.tables.push(summary);
    if !rep.converged {
        out.status = Status::NotConverged;
    }
    if a.check && !(err <= a.check_tol) {
        out.status = Status::Mismatch;
    }
    out.summary = format!("converged={} sweeps={} flow_error={err:e}", rep.converged, rep.sweeps);
    Ok(out)
}

pub fn cmd_toll(a: &TollArgs, seed: u64) -> Result<Outcome, CliError> {
    let inst = directed_instance(&a.net, seed)?;
    let m = inst.net.num_edges();
    let mp = MpParams { learning_rate: a.learning_rate, seed, ..MpParams::default() };
    let state = match a.tollable {
        None => TollState::uniform(m, a.tau_max),
        Some(f) => {
            let edges = match a.selection {
                Selection::Gain => select_tollable_edges(&inst.net, &inst.cost, &inst.classes, a.tau_max, f, &mp)?,
                Selection::Random => {
                    let k = ((f * m as f64).round() as usize).clamp(1, m);
                    let all: Vec<usize> = (0..m).collect();
                    let mut picked: Vec<usize> =
                        all.choose_multiple(&mut fork(seed, "tollable"), k).copied().collect();
                    picked.sort_unstable();
                    picked
                }
            };
            TollState::restricted(m, a.tau_max, &edges)
        }
    };
    let params = BilevelParams { mp, warmup_sweeps: a.warmup, sweeps: a.sweeps, ..BilevelParams::default() };
    let rep = run_bilevel(&inst.net, &inst.cost, &inst.classes, &state, &params)?;

    let mut out = Outcome::new();
    let mut trace =
        Table::new("trace", &["sweep", "warmup", "cost", "best_cost", "fraction", "best_fraction", "nonzero_tolls"]);
    for r in &rep.records {
        trace.push(vec![
            cell(r.sweep),
            cell(r.warmup),
            cell(r.cost),
            cell(r.best_cost),
            cell(r.fraction),
            cell(r.best_fraction),
            cell(r.nonzero_tolls),
        ]);
    }
    out.tables.push(trace);
    let last = rep.final_record();
    let mut summary =
        Table::new("summary", &["nash_cost", "optimal_cost", "best_cost", "best_fraction", "tollable", "failed_updates"]);
    summary.push(vec![
        cell(rep.nash_cost),
        cell(rep.optimal_cost),
        cell(last.best_cost),
        cell(last.best_fraction),
        cell(state.max.iter().filter(|&&t| t > 0.0).count()),
        cell(rep.failed_updates),
    ]);
    out.tables.push(summary);
    out.dumps.push(toll_dump(&rep.best_tolls));
    out.summary = format!("H_N={} H_S={} best={} fraction={}", rep.nash_cost, rep.optimal_cost, last.best_cost, last.best_fraction);
    Ok(out)
}

pub fn cmd_atomic(a: &AtomicArgs, seed: u64) -> Result<Outcome, CliError> {
    let inst = directed_instance(&a.net, seed)?;
    let net = &inst.net;
    let m = net.num_edges();
    let per_source = match a.case {
        Some(Case::I) => 4,
        Some(Case::II) => 6,
        None => a.users_per_source,
    };
    let users = if inst.sioux_falls {
        sioux_falls_users(per_source, seed)
    } else {
        random_sources(net, a.sources, per_source, &mut fork(seed, "atomic-users"))
    };
    let zero = vec![0.0; m];
    let atomic = AtomicParams { seed, ..AtomicParams::default() };
    let eq = run_atomic_equilibrium(net, &inst.cost, &zero, &users, atomic.clone())?;
    let params = AtomicBilevelParams {
        atomic,
        warmup_sweeps: a.warmup,
        sweeps: a.sweeps,
        trials: a.trials,
        ..AtomicBilevelParams::default()
    };
    let bi = run_atomic_bilevel(net, &inst.cost, &users, &TollState::uniform(m, a.tau_max), &params)?;
    let (thin, thin_cost) = threshold_tolls(net, &inst.cost, &users, &bi.best_tolls, a.threshold * a.tau_max)?;

    let mut out = Outcome::new();
    let mut trace = Table::new("trace", &["trial_seed", "sweep", "cost", "best_cost"]);
    for t in &bi.trials {
        for &(s, h, b) in &t.trajectory {
            trace.push(vec![cell(t.seed), cell(s), cell(h), cell(b)]);
        }
    }
    out.tables.push(trace);
    let flows: Vec<f64> = eq.flows.iter().map(|&x| x as f64).collect();
    out.tables.push(flow_table(net, &["flow"], &[&flows]));
    let mut summary = Table::new(
        "summary",
        &["users", "potential", "converged", "sweeps", "repaired", "nash_cost", "best_cost", "thresholded_cost", "nonzero_tolls"],
    );
    summary.push(vec![
        cell(users.iter().sum::<i64>()),
        cell(eq.potential),
        cell(eq.converged),
        cell(eq.sweeps),
        cell(eq.repaired),
        cell(bi.nash_cost),
        cell(bi.best_cost),
        cell(thin_cost),
        cell(thin.iter().filter(|&&t| t > 0.0).count()),
    ]);
    out.tables.push(summary);
    out.dumps.push(toll_dump(&thin));
    if !eq.converged {
        out.status = Status::NotConverged;
    }
    if a.check {
        let best = atomic_potential_minimizer(net, &inst.cost, &zero, &users, net.destination())?;
        let pmin = inst.cost.atomic_potential(&best, &zero)?;
        if eq.potential > pmin + 1e-9 * (1.0 + pmin.abs()) {
            out.status = Status::Mismatch;
        }
    }
    out.summary = format!("Phi={} H_N={} best={} thresholded={}", eq.potential, bi.nash_cost, bi.best_cost, thin_cost);
    Ok(out)
}

fn r_dump(name: &str, net: &UndirectedNetwork, r: &[f64]) -> Dump {
    Dump { name: name.into(), lines: net.edges().iter().zip(r).map(|(&(i, j), r)| format!("{i} {j} {r}")).collect() }
}

pub fn cmd_flow_control(a: &FlowControlArgs, seed: u64) -> Result<Outcome, CliError> {
    let net = undirected_instance(&a.net, seed)?;
    let (_, x0) = laplacian_solve(&net, &vec![1.0; net.num_edges()])?;
    let targets = select_targets(&x0, a.targets, &mut fork(seed, "targets"))?;
    let control = ControlState::new(&net, &x0, &targets, a.theta, (a.r_min, a.r_max))?;
    let flow = FlowParams { method: reference(a.method), step: a.step, seed, ..FlowParams::default() };

    let mut out = Outcome::new();
    let (_, exact) = ggd_gradient(&net, &control)?;
    let mut solver = FlowSolver::new(&net, control.clone(), flow.clone())?;
    let mut trace = Table::new("gradient_trace", &["sweep", "change", "mse"]);
    let mut mse = f64::INFINITY;
    for sweep in 1..=a.trace_sweeps {
        let change = solver.sweep(true);
        let g = solver.gradient();
        mse = g.iter().zip(&exact).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / g.len() as f64;
        trace.push(vec![cell(sweep), cell(change), cell(mse)]);
        if change < flow.tolerance {
            break;
        }
    }
    out.tables.push(trace);

    let params = FlowControlParams { flow, control_sweeps: a.sweeps, ..FlowControlParams::default() };
    let mp = run_flow_control(&net, &control, &params)?;
    let gd = run_ggd(&net, &control, &GgdParams { step: a.step, max_iters: a.ggd_iters })?;
    let mut traj = Table::new("objective", &["method", "step", "objective", "min_rho"]);
    let mut summary = Table::new("summary", &["method", "success", "objective", "bounds_respected", "steps"]);
    for (name, rep) in [("mp", &mp), ("ggd", &gd)] {
        for r in &rep.trajectory {
            traj.push(vec![name.into(), cell(r.step), cell(r.objective), cell(r.min_rho)]);
        }
        let steps = rep.trajectory.last().map_or(0, |r| r.step);
        summary.push(vec![name.into(), cell(rep.success), cell(rep.objective), cell(rep.bounds_respected), cell(steps)]);
    }
    out.tables.push(traj);
    out.tables.push(summary);
    out.dumps.push(r_dump("r_mp.txt", &net, &mp.r));
    out.dumps.push(r_dump("r_ggd.txt", &net, &gd.r));
    if a.check && !(mse < 1e-10) {
        out.status = Status::Mismatch;
    }
    out.summary = format!("gradient_mse={mse:e} mp_success={} ggd_success={}", mp.success, gd.success);
    Ok(out)
}

pub fn cmd_oracle(a: &OracleArgs, seed: u64) -> Result<Outcome, CliError> {
    let mut out = Outcome::new();
    if a.mode == OracleMode::Laplacian {
        let und = UndirectedArgs { rrg: a.net.rrg.clone(), lattice: a.und.lattice, sources: a.und.sources };
        let net = undirected_instance(&und, seed)?;
        let (mu, flows) = laplacian_solve(&net, &vec![1.0; net.num_edges()])?;
        let mut t = Table::new("flows", &["edge", "a", "b", "flow"]);
        for (e, &(i, j)) in net.edges().iter().enumerate() {
            t.push(vec![cell(e), cell(i), cell(j), cell(flows[e])]);
        }
        out.tables.push(t);
        let mut p = Table::new("potentials", &["node", "resource", "potential"]);
        for (i, v) in mu.iter().enumerate() {
            p.push(vec![cell(i), cell(net.resources()[i]), cell(v)]);
        }
        out.tables.push(p);
        out.summary = format!("{} edges solved", net.num_edges());
        return Ok(out);
    }
    let inst = directed_instance(&a.net, seed)?;
    let tolls = vec![a.toll; inst.net.num_edges()];
    let rep = match a.mode {
        OracleMode::Social => social_optimum(&inst.net, &inst.cost, &inst.classes)?,
        _ => convex_equilibrium(&inst.net, &inst.cost, &tolls, &inst.classes)?,
    };
    out.tables.push(flow_table(&inst.net, &["flow"], &[&rep.flows]));
    let social = inst.cost.social_cost(&rep.flows)?;
    let mut s = Table::new("summary", &["objective", "social_cost", "iterations", "feasibility_residual", "wardrop_residual"]);
    s.push(vec![
        cell(rep.objective),
        cell(social),
        cell(rep.iterations),
        cell(rep.feasibility_residual),
        cell(rep.wardrop_residual),
    ]);
    out.tables.push(s);
    out.summary = format!("objective={} H={social}", rep.objective);
    Ok(out)
}

pub fn cmd_generate(a: &GenerateArgs, seed: u64) -> Result<Outcome, CliError> {
    let inst = directed_instance(&a.net, seed)?;
    let mut out = Outcome::new();
    let text = format_network(&inst.net, &inst.edge_params);
    out.dumps.push(Dump { name: "network.txt".into(), lines: text.lines().map(String::from).collect() });
    out.summary = format!("{} nodes, {} edges", inst.net.num_nodes(), inst.net.num_edges());
    Ok(out)
}
