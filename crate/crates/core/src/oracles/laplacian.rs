//! Direct linear solve of the resistor-network problem.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::network::UndirectedNetwork;

/// Weighted Laplacian with the reference row and column removed, factorized once.
pub struct ReducedLaplacian {
    chol: Cholesky<f64, Dyn>,
    row: Vec<Option<usize>>,
}

impl ReducedLaplacian {
    pub fn new(net: &UndirectedNetwork, r: &[f64]) -> Result<Self> {
        let n = net.num_nodes();
        if r.len() != net.num_edges() || r.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Validation("resistances must be positive, one per edge".into()));
        }
        let reference = net.reference();
        let mut k = 0;
        let row: Vec<Option<usize>> = (0..n)
            .map(|i| {
                if i == reference {
                    None
                } else {
                    k += 1;
                    Some(k - 1)
                }
            })
            .collect();
        let mut l = DMatrix::<f64>::zeros(n - 1, n - 1);
        for (e, &(a, b)) in net.edges().iter().enumerate() {
            let g = 1.0 / r[e];
            if let Some(p) = row[a] {
                l[(p, p)] += g;
            }
            if let Some(q) = row[b] {
                l[(q, q)] += g;
            }
            if let (Some(p), Some(q)) = (row[a], row[b]) {
                l[(p, q)] -= g;
                l[(q, p)] -= g;
            }
        }
        let chol = l.cholesky().ok_or_else(|| Error::Singular("reduced Laplacian".into()))?;
        Ok(Self { chol, row })
    }

    /// Solves `L v = rhs` with `v` pinned to zero at the reference.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = DVector::from_iterator(
            self.row.iter().filter(|r| r.is_some()).count(),
            self.row.iter().zip(rhs).filter(|(r, _)| r.is_some()).map(|(_, &v)| v),
        );
        let s = self.chol.solve(&b);
        self.row.iter().map(|r| r.map_or(0.0, |k| s[k])).collect()
    }
}

/// Node potentials and edge flows. The flow on edge `(a, b)` is `(μ_b - μ_a) / r`,
/// i.e. the flow from `b` into `a`.
pub fn laplacian_solve(net: &UndirectedNetwork, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let lap = ReducedLaplacian::new(net, r)?;
    let mu = lap.solve(net.resources());
    let flows = net.edges().iter().enumerate().map(|(e, &(a, b))| (mu[b] - mu[a]) / r[e]).collect();
    Ok((mu, flows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle() {
        let net = UndirectedNetwork::new(3, vec![(0, 1), (1, 2), (0, 2)], vec![1.0, 0.0, 0.0], 2).unwrap();
        let (_, x) = laplacian_solve(&net, &[1.0; 3]).unwrap();
        // Node 0 pushes 2/3 directly and 1/3 via node 1.
        assert!((x[0] + 1.0 / 3.0).abs() < 1e-14);
        assert!((x[1] + 1.0 / 3.0).abs() < 1e-14);
        assert!((x[2] + 2.0 / 3.0).abs() < 1e-14);
    }
}
