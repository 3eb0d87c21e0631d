//! Plain-text network files.
//!
//! ```text
//! nodes N edges M destination D
//! edge_id head tail t c      (M rows)
//! lambda                     (optional block)
//! node value
//! ```
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{DirectedEdge, DirectedNetwork};

/// Network plus raw per-edge `(t, c)` parameters.
#[derive(Debug, Clone)]
pub struct NetworkFile {
    pub network: DirectedNetwork,
    pub edge_params: Vec<(f64, f64)>,
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkFile> {
    let text = std::fs::read_to_string(path)?;
    parse_network(&text)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_network(text: &str) -> Result<NetworkFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines.next().ok_or_else(|| parse_err(0, "empty file"))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 6 || tok[0] != "nodes" || tok[2] != "edges" || tok[4] != "destination" {
        return Err(parse_err(hline, "expected `nodes N edges M destination D`"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| parse_err(hline, format!("bad integer `{s}`")));
    let (n, m, dest) = (num(tok[1])?, num(tok[3])?, num(tok[5])?);
    if m == 0 {
        return Err(Error::Validation("edge section is empty".into()));
    }

    let mut slots: Vec<Option<(DirectedEdge, f64, f64)>> = vec![None; m];
    let mut resources = vec![0.0; n];
    let mut in_lambda = false;
    let mut rows = 0;
    for (ln, line) in lines {
        if line == "lambda" {
            in_lambda = true;
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if in_lambda {
            if f.len() != 2 {
                return Err(parse_err(ln, "expected `node value`"));
            }
            let i: usize = f[0].parse().map_err(|_| parse_err(ln, "bad node id"))?;
            let v: f64 = f[1].parse().map_err(|_| parse_err(ln, "bad resource value"))?;
            if i >= n {
                return Err(Error::Validation(format!("line {ln}: resource for unknown node {i}")));
            }
            resources[i] = v;
            continue;
        }
        if f.len() != 5 {
            return Err(parse_err(ln, "expected `edge_id head tail t c`"));
        }
        let id: usize = f[0].parse().map_err(|_| parse_err(ln, "bad edge id"))?;
        let head: usize = f[1].parse().map_err(|_| parse_err(ln, "bad head"))?;
        let tail: usize = f[2].parse().map_err(|_| parse_err(ln, "bad tail"))?;
        let t: f64 = f[3].parse().map_err(|_| parse_err(ln, "bad free travel time"))?;
        let c: f64 = f[4].parse().map_err(|_| parse_err(ln, "bad capacity"))?;
        if id >= m {
            return Err(Error::Validation(format!("line {ln}: edge id {id} out of range")));
        }
        if head >= n || tail >= n {
            return Err(Error::Validation(format!("line {ln}: edge {id} references a missing node")));
        }
        if slots[id].is_some() {
            return Err(Error::Validation(format!("line {ln}: duplicate edge id {id}")));
        }
        if !(t >= 0.0) || !(c > 0.0) {
            return Err(Error::Validation(format!("line {ln}: need t >= 0 and c > 0")));
        }
        slots[id] = Some((DirectedEdge { head, tail }, t, c));
        rows += 1;
    }
    if rows != m {
        return Err(Error::Validation(format!("header declares {m} edges, found {rows}")));
    }
    let (edges, edge_params) = slots.into_iter().map(|s| {
        let (e, t, c) = s.expect("all slots filled");
        (e, (t, c))
    }).unzip();
    let network = DirectedNetwork::new(n, edges, resources, vec![dest])?;
    Ok(NetworkFile { network, edge_params })
}

pub fn format_network(net: &DirectedNetwork, edge_params: &[(f64, f64)]) -> String {
    let mut out = format!(
        "nodes {} edges {} destination {}\n",
        net.num_nodes(),
        net.num_edges(),
        net.destination()
    );
    for (e, edge) in net.edges().iter().enumerate() {
        let (t, c) = edge_params[e];
        writeln!(out, "{e} {} {} {t} {c}", edge.head, edge.tail).unwrap();
    }
    if net.resources().iter().any(|&l| l != 0.0) {
        out.push_str("lambda\n");
        for (i, &l) in net.resources().iter().enumerate() {
            if l != 0.0 {
                writeln!(out, "{i} {l}").unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "nodes 3 edges 3 destination 2\n0 0 1 1 1\n1 1 2 1 2\n2 0 2 3 1\nlambda\n0 1.5\n";

    #[test]
    fn roundtrip() {
        let f = parse_network(SMALL).unwrap();
        assert_eq!(f.network.num_edges(), 3);
        assert_eq!(f.network.resources()[0], 1.5);
        let again = parse_network(&format_network(&f.network, &f.edge_params)).unwrap();
        assert_eq!(again.edge_params, f.edge_params);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_network("nodes 2 edges 1 destination 1\n0 0 x 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn empty_edges_rejected() {
        assert!(matches!(
            parse_network("nodes 2 edges 0 destination 1\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_network("nodes 2 edges 2 destination 1\n0 0 1 1 1\n0 1 0 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn dangling_node_rejected() {
        let err = parse_network("nodes 2 edges 1 destination 1\n0 0 5 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
