//! Graph types, leaf trimming, generators and file ingestion.

mod directed;
pub mod generate;
pub mod io;
pub mod paths;
mod undirected;

pub use directed::{preprocess, DirectedEdge, DirectedNetwork, EdgeId, NodeId, Reduced};
pub use generate::{
    generate_lattice_undirected, generate_rrg, generate_rrg_multi, generate_rrg_undirected,
    generate_small_world,
};
pub use io::{load_network, parse_network, NetworkFile};
pub use undirected::UndirectedNetwork;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// One origin-destination class: resources per node routed to a single destination.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficClass {
    pub destination: NodeId,
    pub resources: Vec<f64>,
}

impl TrafficClass {
    pub fn new(destination: NodeId, mut resources: Vec<f64>) -> Result<Self> {
        if destination >= resources.len() {
            return Err(Error::Validation(format!("destination {destination} out of range")));
        }
        resources[destination] = 0.0;
        if resources.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::Validation("class resources must be finite and non-negative".into()));
        }
        Ok(Self { destination, resources })
    }

    /// The single class implied by a network's first destination and resources.
    pub fn from_network(net: &DirectedNetwork) -> Result<Self> {
        Self::new(net.destination(), net.resources().to_vec())
    }

    pub fn total(&self) -> f64 {
        self.resources.iter().sum()
    }
}

/// One class per destination of `net`, each with U[0,1] resources elsewhere.
pub fn random_classes(net: &DirectedNetwork, rng: &mut Rng) -> Result<Vec<TrafficClass>> {
    net.destinations()
        .iter()
        .map(|&d| {
            let res = (0..net.num_nodes()).map(|i| if i == d { 0.0 } else { rng.gen::<f64>() }).collect();
            TrafficClass::new(d, res)
        })
        .collect()
}
