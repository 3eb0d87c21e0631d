use std::path::Path;

use crate::config::Command;

/// A CSV table; tables with the same name from several realizations are concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Whitespace-separated text dump such as a toll vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub name: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok,
    NotConverged,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub dumps: Vec<Dump>,
    pub status: Status,
    /// One-line human summary.
    pub summary: String,
}

impl Outcome {
    pub fn new() -> Self {
        Self { tables: Vec::new(), dumps: Vec::new(), status: Status::Ok, summary: String::new() }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

impl Default for Outcome {
    fn default() -> Self {
        Self::new()
    }
}

/// A rendered output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file: String,
    pub content: String,
}

pub trait Cell {
    fn cell(&self) -> String;
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_cell!(usize, u64, i64, bool, str, String);

/// Shortest round-trip form, with an exponent outside `[1e-4, 1e15)`.
impl Cell for f64 {
    fn cell(&self) -> String {
        let a = self.abs();
        if *self == 0.0 || !self.is_finite() || (1e-4..1e15).contains(&a) {
            self.to_string()
        } else {
            format!("{self:e}")
        }
    }
}

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

pub fn cell(v: impl Cell) -> String {
    v.cell()
}

fn header(cmd: &Command) -> String {
    format!(
        "# bilevel-flow {} command={} seed={} config={}\n# {}\n",
        env!("CARGO_PKG_VERSION"),
        cmd.name(),
        cmd.run_args().seed,
        cmd.digest(),
        cmd.to_json()
    )
}

pub fn render(cmd: &Command, outcome: &Outcome) -> Vec<Artifact> {
    let head = header(cmd);
    let mut out = Vec::new();
    for t in &outcome.tables {
        let mut s = head.clone();
        s.push_str(&t.columns.join(","));
        s.push('\n');
        for row in &t.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        out.push(Artifact { file: format!("{}.csv", t.name), content: s });
    }
    for d in &outcome.dumps {
        let mut s = head.clone();
        for l in &d.lines {
            s.push_str(l);
            s.push('\n');
        }
        out.push(Artifact { file: d.name.clone(), content: s });
    }
    out
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in artifacts {
        std::fs::write(dir.join(&a.file), &a.content)?;
    }
    Ok(())
}
