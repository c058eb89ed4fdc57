use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{BinaryConstraint, CdcopInstance, IntervalDomain, QuadraticCoefficients};
use crate::rng::{derive_seed, tag};

/// Generator attempts before giving up on a connected graph.
pub const MAX_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Topology {
    ErdosRenyi { p: f64 },
    BarabasiAlbert { m_edges: usize },
    /// `k` is rounded up to the next even ring degree.
    WattsStrogatz { k: usize, rewire: f64 },
}

impl Topology {
    pub fn short_name(&self) -> &'static str {
        match self {
            Topology::ErdosRenyi { .. } => "er",
            Topology::BarabasiAlbert { .. } => "ba",
            Topology::WattsStrogatz { .. } => "ws",
        }
    }
}

/// Even ring degree used for a requested Watts-Strogatz `k`.
pub fn ring_degree(k: usize) -> usize {
    (k + k % 2).max(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    #[serde(flatten)]
    pub kind: Topology,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

impl fmt::Display for TopologyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Topology::ErdosRenyi { p } => write!(f, "topology=er n={} p={p}", self.n)?,
            Topology::BarabasiAlbert { m_edges } => write!(f, "topology=ba n={} m={m_edges}", self.n)?,
            Topology::WattsStrogatz { k, rewire } => {
                write!(f, "topology=ws n={} k={k} ring_degree={} rewire={rewire}", self.n, ring_degree(k))?
            }
        }
        write!(f, " seed={}", self.seed)
    }
}

impl TopologyConfig {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n < 2 {
            return bad(format!("need at least 2 agents, got {}", self.n));
        }
        match self.kind {
            Topology::ErdosRenyi { p } if !(0.0..=1.0).contains(&p) => bad(format!("edge probability {p} outside [0, 1]")),
            Topology::BarabasiAlbert { m_edges } if m_edges == 0 || m_edges >= self.n => {
                bad(format!("attachment count {m_edges} must be in 1..{}", self.n))
            }
            Topology::WattsStrogatz { k, .. } if ring_degree(k) >= self.n => {
                bad(format!("ring degree {} needs more than {} agents", ring_degree(k), self.n))
            }
            Topology::WattsStrogatz { rewire, .. } if !(0.0..=1.0).contains(&rewire) => {
                bad(format!("rewire probability {rewire} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Edge set, `i < j`, of the first connected graph drawn.
    pub fn edges(&self) -> Result<Vec<(usize, usize)>, HarnessError> {
        self.validate()?;
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[tag("graph"), attempt]));
            let edges = match self.kind {
                Topology::ErdosRenyi { p } => erdos_renyi(self.n, p, &mut rng),
                Topology::BarabasiAlbert { m_edges } => barabasi_albert(self.n, m_edges, &mut rng),
                Topology::WattsStrogatz { k, rewire } => watts_strogatz(self.n, ring_degree(k), rewire, &mut rng),
            };
            if connected(self.n, &edges) {
                return Ok(edges.into_iter().collect());
            }
        }
        Err(HarnessError::Disconnected { config: self.to_string(), attempts: MAX_ATTEMPTS })
    }
}

type EdgeSet = BTreeSet<(usize, usize)>;

fn edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn erdos_renyi(n: usize, p: f64, rng: &mut impl Rng) -> EdgeSet {
    let mut edges = EdgeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                edges.insert((i, j));
            }
        }
    }
    edges
}

/// Preferential attachment grown from a clique on `m + 1` nodes.
fn barabasi_albert(n: usize, m: usize, rng: &mut impl Rng) -> EdgeSet {
    let mut edges = EdgeSet::new();
    // every node appears once per incident edge
    let mut ends = Vec::new();
    for i in 0..=m {
        for j in i + 1..=m {
            edges.insert((i, j));
            ends.extend([i, j]);
        }
    }
    for v in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*ends.choose(rng).expect("seed clique has edges"));
        }
        for t in targets {
            edges.insert(edge(v, t));
            ends.extend([v, t]);
        }
    }
    edges
}

/// Ring lattice of even degree `k` with each edge's far end rewired with
/// probability `beta`.
fn watts_strogatz(n: usize, k: usize, beta: f64, rng: &mut impl Rng) -> EdgeSet {
    let mut edges = EdgeSet::new();
    for i in 0..n {
        for d in 1..=k / 2 {
            edges.insert(edge(i, (i + d) % n));
        }
    }
    for d in 1..=k / 2 {
        for i in 0..n {
            let old = edge(i, (i + d) % n);
            if !rng.gen_bool(beta) || !edges.contains(&old) {
                continue;
            }
            let degree = edges.iter().filter(|&&(a, b)| a == i || b == i).count();
            if degree >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.gen_range(0..n);
                if w != i && !edges.contains(&edge(i, w)) {
                    break w;
                }
            };
            edges.remove(&old);
            edges.insert(edge(i, w));
        }
    }
    edges
}

fn connected(n: usize, edges: &EdgeSet) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(a) = stack.pop() {
        for &b in &adj[a] {
            if !seen[b] {
                seen[b] = true;
                stack.push(b);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Bounds for uniformly drawn quadratic coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub lo: f64,
    pub hi: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self { lo: -5.0, hi: 5.0 }
    }
}

/// A connected instance with one quadratic constraint per edge and every
/// domain equal to `domain`.
pub fn generate_problem(
    topo: &TopologyConfig,
    coeff: CoefficientSpec,
    domain: IntervalDomain,
) -> Result<CdcopInstance, HarnessError> {
    if coeff.lo.partial_cmp(&coeff.hi) != Some(std::cmp::Ordering::Less) {
        return Err(HarnessError::Config(format!("coefficient bounds [{}, {}] are empty", coeff.lo, coeff.hi)));
    }
    let edges = topo.edges()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(topo.seed, &[tag("coefficients")]));
    let mut constraints = Vec::with_capacity(edges.len());
    for (i, j) in edges {
        let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(coeff.lo..coeff.hi));
        constraints.push(BinaryConstraint::quadratic(i, j, QuadraticCoefficients::from_array(c)?)?);
    }
    Ok(CdcopInstance::new(vec![domain; topo.n], constraints)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: Topology, n: usize, seed: u64) -> TopologyConfig {
        TopologyConfig { kind, n, seed }
    }

    fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
        let mut d = vec![0; n];
        for &(a, b) in edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    #[test]
    fn full_density_is_complete() {
        let e = cfg(Topology::ErdosRenyi { p: 1.0 }, 10, 1).edges().unwrap();
        assert_eq!(e.len(), 45);
    }

    #[test]
    fn attachment_gives_min_degree() {
        for seed in 0..20 {
            let e = cfg(Topology::BarabasiAlbert { m_edges: 3 }, 5, seed).edges().unwrap();
            assert_eq!(e.len(), 6 + 3);
            assert!(degrees(5, &e).into_iter().all(|d| d >= 3));
            let e = cfg(Topology::BarabasiAlbert { m_edges: 3 }, 40, seed).edges().unwrap();
            assert_eq!(e.len(), 6 + 3 * 36);
            assert!(degrees(40, &e).into_iter().all(|d| d >= 3));
        }
    }

    #[test]
    fn unrewired_ring_is_a_lattice() {
        assert_eq!(ring_degree(3), 4);
        assert_eq!(ring_degree(1), 2);
        let e = cfg(Topology::WattsStrogatz { k: 3, rewire: 0.0 }, 10, 4).edges().unwrap();
        assert_eq!(e.len(), 20);
        assert!(degrees(10, &e).into_iter().all(|d| d == 4));
        assert!(e.contains(&(0, 9)) && e.contains(&(0, 8)) && e.contains(&(3, 5)));
    }

    #[test]
    fn rewiring_keeps_edge_count() {
        for seed in 0..10 {
            let e = cfg(Topology::WattsStrogatz { k: 4, rewire: 0.5 }, 30, seed).edges().unwrap();
            assert_eq!(e.len(), 60);
            assert!(e.iter().all(|&(a, b)| a < b));
        }
    }

    #[test]
    fn sparse_graphs_retry_until_connected() {
        for seed in 0..10 {
            let e = cfg(Topology::ErdosRenyi { p: 0.15 }, 20, seed).edges().unwrap();
            assert!(connected(20, &e.into_iter().collect()));
        }
        let err = cfg(Topology::ErdosRenyi { p: 0.0 }, 5, 0).edges().unwrap_err();
        assert!(matches!(err, HarnessError::Disconnected { .. }));
    }

    #[test]
    fn generation_is_deterministic() {
        let t = cfg(Topology::ErdosRenyi { p: 0.3 }, 12, 99);
        let dom = IntervalDomain::new(-10.0, 10.0).unwrap();
        let a = generate_problem(&t, CoefficientSpec::default(), dom).unwrap();
        let b = generate_problem(&t, CoefficientSpec::default(), dom).unwrap();
        let text = |i: &CdcopInstance| crate::problem_file::render_problem(i, &[]).unwrap();
        assert_eq!(text(&a), text(&b));
        for c in a.constraints() {
            let q = c.function().as_quadratic().unwrap().to_array();
            assert!(q.iter().all(|v| (-5.0..5.0).contains(v)));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(cfg(Topology::BarabasiAlbert { m_edges: 5 }, 5, 0).edges().is_err());
        assert!(cfg(Topology::WattsStrogatz { k: 4, rewire: 0.1 }, 4, 0).edges().is_err());
        assert!(cfg(Topology::ErdosRenyi { p: 1.5 }, 4, 0).edges().is_err());
        let dom = IntervalDomain::new(-1.0, 1.0).unwrap();
        let t = cfg(Topology::ErdosRenyi { p: 1.0 }, 3, 0);
        assert!(generate_problem(&t, CoefficientSpec { lo: 1.0, hi: 1.0 }, dom).is_err());
    }
}
