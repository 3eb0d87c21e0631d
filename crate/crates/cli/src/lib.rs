//! Experiment runner: builds instances from a [`config::Command`], runs the solvers
//! and collects CSV tables. Every file starts with a metadata line carrying the
//! crate version, the seed and a digest of the full configuration.

pub mod commands;
pub mod config;
pub mod report;

use std::collections::BTreeMap;

use config::Command;
use report::{cell, Outcome, Status, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] bilevel_flow::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use bilevel_flow::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver(E::InvalidArgument(_) | E::Parse { .. } | E::Validation(_) | E::Io(_)) => 2,
            CliError::Solver(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            _ => "solver",
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() })
            .to_string()
    }
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => 3,
            Status::Mismatch => 4,
        }
    }
}

/// One realization.
pub fn run_single(cmd: &Command, seed: u64) -> Result<Outcome, CliError> {
    match cmd {
        Command::Equilibrium(a) => commands::cmd_equilibrium(a, seed),
        Command::Toll(a) => commands::cmd_toll(a, seed),
        Command::Atomic(a) => commands::cmd_atomic(a, seed),
        Command::FlowControl(a) => commands::cmd_flow_control(a, seed),
        Command::Oracle(a) => commands::cmd_oracle(a, seed),
        Command::Generate(a) => commands::cmd_generate(a, seed),
    }
}

/// Runs every realization on its own thread and merges the results in seed order.
pub fn execute(cmd: &Command) -> Result<Outcome, CliError> {
    cmd.validate()?;
    let run = cmd.run_args();
    let seeds: Vec<u64> = (0..run.realizations as u64).map(|k| run.seed.wrapping_add(k)).collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut results = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(workers) {
        let done: Vec<Result<Outcome, CliError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run_single(cmd, seed))).collect();
            handles.into_iter().map(|h| h.join().expect("realization thread panicked")).collect()
        });
        for (seed, r) in chunk.iter().zip(done) {
            results.push((*seed, r?));
        }
    }
    Ok(merge(cmd, results))
}

fn merge(cmd: &Command, results: Vec<(u64, Outcome)>) -> Outcome {
    let many = results.len() > 1;
    let mut out = Outcome::new();
    let mut order: Vec<String> = Vec::new();
    let mut tables: BTreeMap<String, Table> = BTreeMap::new();
    for (seed, r) in &results {
        for t in &r.tables {
            let merged = tables.entry(t.name.clone()).or_insert_with(|| {
                order.push(t.name.clone());
                let mut cols = vec!["seed".to_string()];
                cols.extend(t.columns.iter().cloned());
                Table { name: t.name.clone(), columns: cols, rows: Vec::new() }
            });
            for row in &t.rows {
                let mut full = vec![cell(seed)];
                full.extend(row.iter().cloned());
                merged.rows.push(full);
            }
        }
        for d in &r.dumps {
            let mut d = d.clone();
            if many {
                d.name = match d.name.rsplit_once('.') {
                    Some((stem, ext)) => format!("{stem}_{seed}.{ext}"),
                    None => format!("{}_{seed}", d.name),
                };
            }
            out.dumps.push(d);
        }
        out.status = out.status.max(r.status);
        if !r.summary.is_empty() {
            out.summary.push_str(&format!("seed {seed}: {}\n", r.summary));
        }
    }
    out.tables = order.into_iter().map(|n| tables.remove(&n).expect("present")).collect();
    out.tables.extend(aggregate(cmd, &out));
    out
}

fn mean_by<F: Fn(&[String]) -> Option<(String, f64)>>(rows: &[Vec<String>], key: F) -> Vec<(String, f64, usize)> {
    let mut acc: Vec<(String, f64, usize)> = Vec::new();
    for row in rows {
        if let Some((k, v)) = key(row) {
            match acc.iter_mut().find(|(x, _, _)| *x == k) {
                Some(e) => {
                    e.1 += v;
                    e.2 += 1;
                }
                None => acc.push((k, v, 1)),
            }
        }
    }
    acc
}

/// Cross-realization tables.
fn aggregate(cmd: &Command, out: &Outcome) -> Vec<Table> {
    match cmd {
        Command::FlowControl(a) => {
            let Some(s) = out.table("summary") else { return Vec::new() };
            let (m, ok) = (s.column("method").unwrap(), s.column("success").unwrap());
            let rows = mean_by(&s.rows, |r| Some((r[m].clone(), if r[ok] == "true" { 1.0 } else { 0.0 })));
            let mut t = Table::new("success", &["method", "theta", "realizations", "successes", "fraction"]);
            for (method, hits, n) in rows {
                t.push(vec![method, cell(a.theta), cell(n), cell(hits as usize), cell(hits / n as f64)]);
            }
            vec![t]
        }
        Command::Toll(_) => {
            let Some(s) = out.table("trace") else { return Vec::new() };
            let (sw, f, b) = (s.column("sweep").unwrap(), s.column("fraction").unwrap(), s.column("best_fraction").unwrap());
            let cur = mean_by(&s.rows, |r| Some((r[sw].clone(), r[f].parse().ok()?)));
            let best = mean_by(&s.rows, |r| Some((r[sw].clone(), r[b].parse().ok()?)));
            let mut t = Table::new("mean_trace", &["sweep", "realizations", "mean_fraction", "mean_best_fraction"]);
            for ((k, c, n), (_, bb, _)) in cur.into_iter().zip(best) {
                t.push(vec![k, cell(n), cell(c / n as f64), cell(bb / n as f64)]);
            }
            vec![t]
        }
        _ => Vec::new(),
    }
}
