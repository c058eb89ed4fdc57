//! Fixtures shared by the criterion benches.

use abcd_core::harness::{generate_problem, CoefficientSpec, Topology, TopologyConfig};
use abcd_core::{CdcopInstance, IntervalDomain};

/// Erdős–Rényi instance with the default coefficient bounds on `[-10, 10]`.
pub fn er_instance(n: usize, p: f64, seed: u64) -> CdcopInstance {
    let topo = TopologyConfig { kind: Topology::ErdosRenyi { p }, n, seed };
    generate_problem(&topo, CoefficientSpec::default(), IntervalDomain::new(-10.0, 10.0).unwrap()).expect("connected instance")
}
