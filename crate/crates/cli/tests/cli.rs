use bilevel_flow_cli::config::{Cli, Command};
use bilevel_flow_cli::report::{render, Status};
use bilevel_flow_cli::{execute, CliError};
use clap::Parser;

fn parse(args: &str) -> Command {
    let argv = std::iter::once("bilevel-flow").chain(args.split_whitespace());
    Cli::try_parse_from(argv).unwrap().command
}

fn rendered(args: &str) -> Vec<(String, String)> {
    let cmd = parse(args);
    let out = execute(&cmd).unwrap();
    render(&cmd, &out).into_iter().map(|a| (a.file, a.content)).collect()
}

#[test]
fn identical_runs_are_byte_identical() {
    for args in [
        "equilibrium --rrg 30 3 --seed 4",
        "toll --rrg 20 3 --seed 2 --warmup 2 --sweeps 3",
        "atomic --rrg 12 3 --seed 3 --users-per-source 2 --trials 2 --sweeps 4",
        "flow-control --rrg 30 3 --sources 4 --targets 3 --sweeps 50 --seed 5",
        "oracle --rrg 20 3 --mode social",
    ] {
        assert_eq!(rendered(args), rendered(args), "{args}");
    }
}

#[test]
fn every_file_starts_with_metadata() {
    let cmd = parse("equilibrium --rrg 20 3 --seed 9");
    let digest = cmd.digest();
    for a in render(&cmd, &execute(&cmd).unwrap()) {
        let first = a.content.lines().next().unwrap();
        assert!(first.starts_with("# bilevel-flow "), "{first}");
        assert!(first.contains("seed=9") && first.contains(&digest), "{first}");
    }
    assert_eq!(digest.len(), 16);
    assert_ne!(digest, parse("equilibrium --rrg 20 3 --seed 10").digest());
    assert_ne!(digest, parse("equilibrium --rrg 20 3 --seed 9 --learning-rate 0.2").digest());
}

#[test]
fn equilibrium_trace_reaches_oracle() {
    let cmd = parse("equilibrium --rrg 100 3 --seed 1 --method grounded --check");
    let out = execute(&cmd).unwrap();
    assert_eq!(out.status, Status::Ok);
    let s = out.table("summary").unwrap();
    let err: f64 = s.rows[0][s.column("flow_error").unwrap()].parse().unwrap();
    assert!(err <= 1e-6);
}

#[test]
fn frozen_tolls_give_flat_trace() {
    let out = execute(&parse("toll --rrg 30 3 --tau-max 0 --warmup 2 --sweeps 4")).unwrap();
    let t = out.table("trace").unwrap();
    let f = t.column("fraction").unwrap();
    assert_eq!(t.rows.len(), 6);
    assert!(t.rows.iter().all(|r| r[f] == "1"));
}

#[test]
fn sioux_falls_case_one() {
    let out = execute(&parse("atomic --network siouxfalls --case I --check")).unwrap();
    assert_eq!(out.status, Status::Ok);
    let s = out.table("summary").unwrap();
    let get = |c: &str| -> f64 { s.rows[0][s.column(c).unwrap()].parse().unwrap() };
    assert_eq!(get("users"), 12.0);
    assert!(get("best_cost") <= get("nash_cost"));
    assert!(get("thresholded_cost") <= get("best_cost"));
}

#[test]
fn realizations_merge_in_seed_order() {
    let cmd = parse("flow-control --lattice 5 --sources 3 --targets 2 --sweeps 20 --realizations 3 --seed 7");
    let out = execute(&cmd).unwrap();
    let s = out.table("summary").unwrap();
    let seeds: Vec<&str> = s.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(seeds, ["7", "7", "8", "8", "9", "9"]);
    let success = out.table("success").unwrap();
    assert_eq!(success.rows.len(), 2);
    let names: Vec<&str> = out.dumps.iter().map(|d| d.name.as_str()).collect();
    assert!(names.contains(&"r_mp_8.txt") && names.contains(&"r_ggd_9.txt"));
}

#[test]
fn generated_network_reloads() {
    let dir = std::env::temp_dir().join(format!("bilevel-flow-cli-{}", std::process::id()));
    let cmd = parse("generate --rrg 12 3 --seed 3");
    let arts = render(&cmd, &execute(&cmd).unwrap());
    bilevel_flow_cli::report::write_artifacts(&dir, &arts).unwrap();
    let path = dir.join("network.txt");
    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| l.starts_with("nodes")).unwrap();
    let m: usize = header.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(m >= 18);
    let out = execute(&parse(&format!("oracle --network {}", path.display()))).unwrap();
    assert_eq!(out.table("flows").unwrap().rows.len(), m);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        "equilibrium --rrg 10 3 --network x",
        "equilibrium",
        "toll --rrg 10 3 --tollable 1.5",
        "flow-control --rrg 10 3 --lattice 4",
        "equilibrium --network /definitely/not/here.txt",
        "equilibrium --rrg 10 3 --realizations 0",
        "flow-control --lattice 5 --r-min 1.2",
    ] {
        let err: CliError = execute(&parse(args)).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{args}: {err}");
        assert!(err.record().contains("\"exit_code\":2"));
    }
    assert!(Cli::try_parse_from(["bilevel-flow", "equilibrium", "--method", "sideways"]).is_err());
}

#[test]
fn statuses_map_to_exit_codes() {
    assert_eq!(Status::Ok.exit_code(), 0);
    assert_eq!(Status::NotConverged.exit_code(), 3);
    assert_eq!(Status::Mismatch.exit_code(), 4);
    let out = execute(&parse("equilibrium --rrg 60 3 --sweeps 1")).unwrap();
    assert_eq!(out.status, Status::NotConverged);
    let out = execute(&parse("equilibrium --rrg 60 3 --sweeps 2 --check --check-tol 1e-12")).unwrap();
    assert_eq!(out.status, Status::Mismatch);
}
