//! Bipartite adjacency and unweighted shortest-path machinery.
//!
//! Nodes are numbered globally: BP nodes (partition U) occupy `0..n_bp` and
//! FA nodes (partition V) occupy `n_bp..n_bp + n_fa`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsn::FinancialStatementsNetwork;

pub type NodeId = usize;

/// Distance marker for nodes not reachable from the BFS source.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("diameter undefined: graph has no edges")]
    DiameterUndefined,
    #[error("edge ({0}, {1}) is out of range")]
    EdgeOutOfRange(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// Business-process nodes, U.
    Bp,
    /// Financial-account nodes, V.
    Fa,
}

impl Partition {
    pub fn other(self) -> Self {
        match self {
            Partition::Bp => Partition::Fa,
            Partition::Fa => Partition::Bp,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Bp => "bp",
            Partition::Fa => "fa",
        }
    }
}

/// Compressed adjacency for both partitions. Symmetric and simple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    n_bp: usize,
    n_fa: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl BipartiteGraph {
    /// Builds from `(bp_index, fa_index)` pairs. Duplicate pairs are collapsed.
    pub fn from_edges(n_bp: usize, n_fa: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let n = n_bp + n_fa;
        let mut degree = vec![0usize; n];
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(edges.len());
        for &(b, f) in edges {
            if b as usize >= n_bp || f as usize >= n_fa {
                return Err(GraphError::EdgeOutOfRange(b, f));
            }
            pairs.push((b, f));
        }
        pairs.sort_unstable();
        pairs.dedup();
        for &(b, f) in &pairs {
            degree[b as usize] += 1;
            degree[n_bp + f as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        // pairs are sorted by (b, f), so every adjacency list ends up sorted.
        for &(b, f) in &pairs {
            let (u, v) = (b as usize, n_bp + f as usize);
            neighbors[fill[u]] = v as u32;
            fill[u] += 1;
            neighbors[fill[v]] = u as u32;
            fill[v] += 1;
        }
        Ok(BipartiteGraph {
            n_bp,
            n_fa,
            offsets,
            neighbors,
        })
    }

    pub fn from_network(net: &FinancialStatementsNetwork) -> Self {
        Self::from_edges(net.n_bp(), net.n_fa(), net.edges()).expect("network edges are validated")
    }

    pub fn n_nodes(&self) -> usize {
        self.n_bp + self.n_fa
    }

    pub fn n_bp(&self) -> usize {
        self.n_bp
    }

    pub fn n_fa(&self) -> usize {
        self.n_fa
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn partition_size(&self, p: Partition) -> usize {
        match p {
            Partition::Bp => self.n_bp,
            Partition::Fa => self.n_fa,
        }
    }

    pub fn partition(&self, node: NodeId) -> Partition {
        if node < self.n_bp {
            Partition::Bp
        } else {
            Partition::Fa
        }
    }

    /// Global id of the `index`-th node of a partition.
    pub fn node(&self, p: Partition, index: usize) -> NodeId {
        match p {
            Partition::Bp => index,
            Partition::Fa => self.n_bp + index,
        }
    }

    /// Position of a node within its own partition.
    pub fn local_index(&self, node: NodeId) -> usize {
        if node < self.n_bp {
            node
        } else {
            node - self.n_bp
        }
    }

    #[inline]
    pub fn neighbors(&self, node: NodeId) -> &[u32] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn degree(&self, node: NodeId) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degree_sequence(&self, p: Partition) -> Vec<usize> {
        (0..self.partition_size(p))
            .map(|i| self.degree(self.node(p, i)))
            .collect()
    }

    /// Hop distances from `source`; unreachable nodes hold [`UNREACHABLE`].
    pub fn bfs_distances(&self, source: NodeId) -> Vec<u32> {
        let mut ws = BfsWorkspace::new(self.n_nodes());
        ws.run(self, source);
        ws.dist.clone()
    }

    pub fn connected_components(&self) -> Components {
        let n = self.n_nodes();
        let mut labels = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut components = Vec::new();
        for start in 0..n {
            if labels[start] != usize::MAX {
                continue;
            }
            // Scanning in id order makes `start` the smallest id of its component.
            let mut comp = Component {
                label: start,
                size: 0,
                n_bp: 0,
                n_fa: 0,
            };
            labels[start] = start;
            stack.push(start);
            while let Some(v) = stack.pop() {
                comp.size += 1;
                match self.partition(v) {
                    Partition::Bp => comp.n_bp += 1,
                    Partition::Fa => comp.n_fa += 1,
                }
                for &w in self.neighbors(v) {
                    let w = w as usize;
                    if labels[w] == usize::MAX {
                        labels[w] = start;
                        stack.push(w);
                    }
                }
            }
            components.push(comp);
        }
        Components { labels, components }
    }

    /// Eccentricity and farness of each source.
    ///
    /// Sources are swept 64 at a time by a bit-parallel BFS: bit `i` of a
    /// node's word says whether lane `i`'s source has reached it, and each
    /// level is one pass over the adjacency lists.
    pub fn distance_profiles(&self, sources: &[NodeId]) -> Vec<DistanceProfile> {
        let n = self.n_nodes();
        sources
            .par_chunks(LANES)
            .map_init(
                || LaneWorkspace::new(n),
                |ws, chunk| ws.run(self, chunk),
            )
            .flatten()
            .collect()
    }

    /// Exact diameter of the largest connected component: the largest
    /// eccentricity over its members.
    pub fn diameter(&self) -> Result<Diameter, GraphError> {
        if self.n_edges() == 0 {
            return Err(GraphError::DiameterUndefined);
        }
        let comps = self.connected_components();
        let largest = comps.largest().expect("graph with edges has a component");
        let members = comps.members(largest.label);
        let value = self
            .distance_profiles(&members)
            .iter()
            .map(|p| p.eccentricity)
            .max()
            .unwrap_or(0);
        Ok(Diameter {
            value,
            policy: ComponentPolicy::LargestComponent,
            component_label: largest.label,
            component_size: largest.size,
            n_components: comps.components.len(),
        })
    }
}

const LANES: usize = 64;

struct LaneWorkspace {
    seen: Vec<u64>,
    frontier: Vec<u64>,
    next: Vec<u64>,
}

impl LaneWorkspace {
    fn new(n: usize) -> Self {
        LaneWorkspace {
            seen: vec![0; n],
            frontier: vec![0; n],
            next: vec![0; n],
        }
    }

    fn run(&mut self, g: &BipartiteGraph, sources: &[NodeId]) -> Vec<DistanceProfile> {
        debug_assert!(sources.len() <= LANES);
        self.seen.fill(0);
        self.frontier.fill(0);
        let mut profiles = vec![
            DistanceProfile {
                eccentricity: 0,
                farness: 0,
                reached: 0,
            };
            sources.len()
        ];
        for (lane, &s) in sources.iter().enumerate() {
            self.seen[s] |= 1 << lane;
            self.frontier[s] |= 1 << lane;
        }
        let full = if sources.len() == LANES { u64::MAX } else { (1u64 << sources.len()) - 1 };
        let mut level = 0u32;
        loop {
            level += 1;
            let mut any = 0u64;
            for v in 0..g.n_nodes() {
                let seen = self.seen[v];
                if seen == full {
                    self.next[v] = 0;
                    continue;
                }
                let mut bits = 0u64;
                for &w in g.neighbors(v) {
                    bits |= self.frontier[w as usize];
                }
                bits &= !seen;
                self.next[v] = bits;
                any |= bits;
                while bits != 0 {
                    let p = &mut profiles[bits.trailing_zeros() as usize];
                    p.farness += level as u64;
                    p.reached += 1;
                    bits &= bits - 1;
                }
            }
            if any == 0 {
                break;
            }
            let mut lanes = any;
            while lanes != 0 {
                profiles[lanes.trailing_zeros() as usize].eccentricity = level;
                lanes &= lanes - 1;
            }
            for (seen, &next) in self.seen.iter_mut().zip(&self.next) {
                *seen |= next;
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
        }
        profiles
    }
}

/// Reusable BFS buffers.
pub struct BfsWorkspace {
    pub dist: Vec<u32>,
    pub order: Vec<u32>,
}

impl BfsWorkspace {
    pub fn new(n: usize) -> Self {
        BfsWorkspace {
            dist: vec![UNREACHABLE; n],
            order: Vec::with_capacity(n),
        }
    }

    /// Runs BFS from `source`. Afterwards `order` lists reached nodes by
    /// non-decreasing distance.
    pub fn run(&mut self, g: &BipartiteGraph, source: NodeId) {
        for &v in &self.order {
            self.dist[v as usize] = UNREACHABLE;
        }
        self.order.clear();
        self.dist[source] = 0;
        self.order.push(source as u32);
        let mut head = 0;
        while head < self.order.len() {
            let v = self.order[head] as usize;
            head += 1;
            let next = self.dist[v] + 1;
            for &w in g.neighbors(v) {
                let slot = &mut self.dist[w as usize];
                if *slot == UNREACHABLE {
                    *slot = next;
                    self.order.push(w);
                }
            }
        }
    }

    /// Eccentricity, farness and reach of the last `run`.
    pub fn profile(&self) -> DistanceProfile {
        let mut farness = 0u64;
        for &v in &self.order {
            farness += self.dist[v as usize] as u64;
        }
        let last = *self.order.last().expect("source is always reached");
        DistanceProfile {
            eccentricity: self.dist[last as usize],
            farness,
            reached: self.order.len() - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceProfile {
    /// Largest distance to a reachable node.
    pub eccentricity: u32,
    /// Sum of distances to all reachable nodes.
    pub farness: u64,
    /// Reachable nodes, excluding the source.
    pub reached: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    /// Smallest node id in the component.
    pub label: NodeId,
    pub size: usize,
    pub n_bp: usize,
    pub n_fa: usize,
}

#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<NodeId>,
    /// Sorted by label.
    pub components: Vec<Component>,
}

impl Components {
    /// The biggest component; ties go to the smaller label.
    pub fn largest(&self) -> Option<&Component> {
        self.components
            .iter()
            .max_by(|a, b| a.size.cmp(&b.size).then(b.label.cmp(&a.label)))
    }

    pub fn members(&self, label: NodeId) -> Vec<NodeId> {
        (0..self.labels.len())
            .filter(|&v| self.labels[v] == label)
            .collect()
    }

    pub fn of(&self, node: NodeId) -> &Component {
        let label = self.labels[node];
        let i = self
            .components
            .binary_search_by_key(&label, |c| c.label)
            .expect("every label names a component");
        &self.components[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentPolicy {
    LargestComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diameter {
    pub value: u32,
    pub policy: ComponentPolicy,
    pub component_label: NodeId,
    pub component_size: usize,
    pub n_components: usize,
}
