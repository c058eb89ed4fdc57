//! Breadth-first pseudo-tree over the constraint graph.
//!
//! The tree is the communication backbone of the solver: fitness sums flow
//! towards the root along parent edges and every broadcast flows away from it
//! along child edges.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::model::{AgentId, CdcopInstance};
use crate::rng::tree_stream;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("constraint graph is disconnected: agent {unreachable} is unreachable from root {root}")]
    Disconnected { root: AgentId, unreachable: AgentId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootSelection {
    /// Highest-degree agent, lowest id among ties.
    #[default]
    HighestDegree,
    LowestId,
    Fixed(AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoTree {
    root: AgentId,
    parent: Vec<Option<AgentId>>,
    children: Vec<Vec<AgentId>>,
    neighbors: Vec<Vec<AgentId>>,
    depth: Vec<usize>,
    /// Rank 0 is the highest priority.
    priority: Vec<usize>,
}

impl PseudoTree {
    pub fn build(inst: &CdcopInstance, seed: u64) -> Result<Self, TreeError> {
        Self::build_with(inst, seed, RootSelection::default())
    }

    pub fn build_with(inst: &CdcopInstance, seed: u64, selection: RootSelection) -> Result<Self, TreeError> {
        let n = inst.n();
        let root = match selection {
            RootSelection::HighestDegree => (0..n).max_by_key(|&a| (inst.degree(a), std::cmp::Reverse(a))).unwrap_or(0),
            RootSelection::LowestId => 0,
            RootSelection::Fixed(a) => a,
        };
        let neighbors: Vec<Vec<AgentId>> = (0..n).map(|a| inst.neighbors(a).to_vec()).collect();

        let mut parent = vec![None; n];
        let mut depth = vec![usize::MAX; n];
        let mut children = vec![Vec::new(); n];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for &b in &neighbors[a] {
                if depth[b] == usize::MAX {
                    depth[b] = depth[a] + 1;
                    parent[b] = Some(a);
                    children[a].push(b);
                    queue.push_back(b);
                }
            }
        }
        if let Some(unreachable) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(TreeError::Disconnected { root, unreachable });
        }

        // Depth first, random order within a level.
        let mut order: Vec<AgentId> = (0..n).collect();
        let mut rng = tree_stream(seed);
        order.shuffle(&mut rng);
        order.sort_by_key(|&a| depth[a]);
        let mut priority = vec![0; n];
        for (rank, &a) in order.iter().enumerate() {
            priority[a] = rank;
        }

        Ok(Self { root, parent, children, neighbors, depth, priority })
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn parent(&self, a: AgentId) -> Option<AgentId> {
        self.parent[a]
    }

    /// Children in ascending id order.
    pub fn children(&self, a: AgentId) -> &[AgentId] {
        &self.children[a]
    }

    pub fn neighbors(&self, a: AgentId) -> &[AgentId] {
        &self.neighbors[a]
    }

    pub fn depth(&self, a: AgentId) -> usize {
        self.depth[a]
    }

    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn priority(&self, a: AgentId) -> usize {
        self.priority[a]
    }

    /// Number of tree edges on the path between `a` and `b`.
    pub fn path_len(&self, mut a: AgentId, mut b: AgentId) -> usize {
        let mut hops = 0;
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("non-root has parent");
            hops += 1;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("non-root has parent");
            hops += 1;
        }
        while a != b {
            a = self.parent[a].expect("non-root has parent");
            b = self.parent[b].expect("non-root has parent");
            hops += 2;
        }
        hops
    }

    /// Agents by nondecreasing depth, ties by id. The root comes first.
    pub fn broadcast_order(&self) -> Vec<AgentId> {
        let mut order: Vec<AgentId> = (0..self.len()).collect();
        order.sort_by_key(|&a| (self.depth[a], a));
        order
    }

    /// One `id depth parent priority` line per agent; the root's parent is `-`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for a in 0..self.len() {
            let parent = self.parent[a].map_or_else(|| "-".to_string(), |p| p.to_string());
            writeln!(out, "{a} {} {parent} {}", self.depth[a], self.priority[a]).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::four_agent_example;
    use crate::model::{BinaryConstraint, IntervalDomain, QuadraticCoefficients};

    fn graph(n: usize, edges: &[(usize, usize)]) -> CdcopInstance {
        let dom = IntervalDomain::new(-1.0, 1.0).unwrap();
        let q = QuadraticCoefficients::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0).unwrap();
        let cs = edges.iter().map(|&(i, j)| BinaryConstraint::quadratic(i, j, q).unwrap()).collect();
        CdcopInstance::new_allow_disconnected(vec![dom; n], cs).unwrap()
    }

    #[test]
    fn chain_forces_the_tree() {
        let t = PseudoTree::build_with(&graph(3, &[(0, 1), (1, 2)]), 0, RootSelection::LowestId).unwrap();
        assert_eq!(t.root(), 0);
        assert_eq!((0..3).map(|a| t.parent(a)).collect::<Vec<_>>(), vec![None, Some(0), Some(1)]);
        assert_eq!((0..3).map(|a| t.depth(a)).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(t.broadcast_order(), vec![0, 1, 2]);
        assert_eq!(t.path_len(2, 0), 2);
    }

    #[test]
    fn example_problem_tree() {
        let t = PseudoTree::build(&four_agent_example(), 5).unwrap();
        assert_eq!(t.root(), 0);
        assert_eq!(t.children(0), &[1, 2, 3]);
        assert!((1..4).all(|a| t.depth(a) == 1));
        // 1-2 is a constraint edge but not a tree edge
        assert!(t.neighbors(1).contains(&2));
        assert_ne!(t.parent(2), Some(1));
        assert_eq!(t.broadcast_order(), vec![0, 1, 2, 3]);
        assert_eq!(t.priority(0), 0);
        assert_eq!(t.path_len(1, 2), 2);
    }

    #[test]
    fn single_agent_tree() {
        let t = PseudoTree::build(&graph(1, &[]), 0).unwrap();
        assert_eq!(t.root(), 0);
        assert!(t.children(0).is_empty());
        assert_eq!(t.height(), 0);
    }

    #[test]
    fn star_order() {
        let t = PseudoTree::build(&graph(6, &[(5, 1), (5, 2), (5, 0), (5, 3), (5, 4)]), 0).unwrap();
        assert_eq!(t.root(), 5);
        assert_eq!(t.broadcast_order(), vec![5, 0, 1, 2, 3, 4]);
        let small = PseudoTree::build_with(&graph(6, &[(5, 1), (5, 2), (5, 0), (5, 3), (5, 4)]), 0, RootSelection::Fixed(5)).unwrap();
        assert_eq!(small.broadcast_order()[0], 5);
    }

    #[test]
    fn disconnected_graph_names_unreachable_agent() {
        let err = PseudoTree::build_with(&graph(4, &[(0, 1), (2, 3)]), 0, RootSelection::LowestId).unwrap_err();
        assert_eq!(err, TreeError::Disconnected { root: 0, unreachable: 2 });
    }

    #[test]
    fn dump_lists_every_agent() {
        let t = PseudoTree::build_with(&graph(3, &[(0, 1), (1, 2)]), 0, RootSelection::LowestId).unwrap();
        assert_eq!(t.dump(), "0 0 - 0\n1 1 0 1\n2 2 1 2\n");
    }

    #[test]
    fn same_seed_same_tree_and_ties_by_seed() {
        let inst = graph(7, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6)]);
        let a = PseudoTree::build(&inst, 11).unwrap();
        assert_eq!(a, PseudoTree::build(&inst, 11).unwrap());
        let differs = (0..20).any(|s| PseudoTree::build(&inst, s).unwrap().priority != a.priority);
        assert!(differs, "equal-depth priorities should depend on the seed");
    }
}
