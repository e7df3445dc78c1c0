//! Degree, closeness and betweenness centrality with two-mode normalization.
//!
//! Raw scores follow the usual one-mode definitions on the bipartite graph.
//! Normalized scores divide by the best value a node could reach given the
//! sizes of the two partitions, so they are comparable across partitions.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsn::FinancialStatementsNetwork;
use crate::graph::{BipartiteGraph, NodeId, Partition, UNREACHABLE};

/// Upper node count for [`BetweennessMode::LengthWeighted`], which keeps a
/// reachability bitset per node.
pub const LENGTH_WEIGHTED_MAX_NODES: usize = 20_000;

#[derive(Debug, Error)]
pub enum CentralityError {
    #[error("partition {0} is empty")]
    EmptyPartition(&'static str),
    #[error("length-weighted betweenness supports at most {LENGTH_WEIGHTED_MAX_NODES} nodes, graph has {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Degree,
    Closeness,
    Betweenness,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Degree => "degree",
            Measure::Closeness => "closeness",
            Measure::Betweenness => "betweenness",
        }
    }
}

/// Which partition's bound divides a node's betweenness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Bound computed with the node's own partition as `n`.
    #[default]
    OwnPartition,
    /// Bounds assigned crosswise: FA nodes get the BP-side bound and vice versa.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetweennessMode {
    /// Fraction of shortest k-j paths passing through the node.
    #[default]
    GeodesicFraction,
    /// 1 / d(k, j) for every pair with at least one shortest path through the node.
    LengthWeighted,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CentralityOptions {
    pub normalization: NormalizationMode,
    pub betweenness: BetweennessMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node: NodeId,
    pub partition: Partition,
    pub raw: f64,
    pub normalized: f64,
}

/// Per-partition normalization constants. For degree and betweenness these
/// divide the raw score; for closeness they are the minimum farness of the
/// whole graph (component-local values are used when it is disconnected).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub bp: f64,
    pub fa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub measure: Measure,
    pub n_bp: usize,
    pub n_fa: usize,
    pub constants: Constants,
    /// True when pair sums and closeness bounds were taken per component.
    pub component_local: bool,
    /// One score per node, in node-id order.
    pub scores: Vec<NodeScore>,
    pub warnings: Vec<String>,
}

impl CentralityReport {
    /// All nodes ordered by normalized score, highest first, ties by node id.
    pub fn ranking(&self) -> Vec<&NodeScore> {
        let mut ranked: Vec<&NodeScore> = self.scores.iter().collect();
        ranked.sort_by(|a, b| {
            b.normalized
                .total_cmp(&a.normalized)
                .then(a.node.cmp(&b.node))
        });
        ranked
    }
}

fn require_partitions(g: &BipartiteGraph) -> Result<(), CentralityError> {
    if g.n_bp() == 0 {
        return Err(CentralityError::EmptyPartition("bp"));
    }
    if g.n_fa() == 0 {
        return Err(CentralityError::EmptyPartition("fa"));
    }
    Ok(())
}

/// Degree over the size of the opposite partition.
pub fn degree_centrality(g: &BipartiteGraph) -> Result<CentralityReport, CentralityError> {
    require_partitions(g)?;
    let (n_bp, n_fa) = (g.n_bp() as f64, g.n_fa() as f64);
    let scores = (0..g.n_nodes())
        .map(|v| {
            let partition = g.partition(v);
            let k = g.degree(v) as f64;
            let bound = match partition {
                Partition::Bp => n_fa,
                Partition::Fa => n_bp,
            };
            NodeScore {
                node: v,
                partition,
                raw: k,
                normalized: k / bound,
            }
        })
        .collect();
    Ok(CentralityReport {
        measure: Measure::Degree,
        n_bp: g.n_bp(),
        n_fa: g.n_fa(),
        constants: Constants { bp: n_fa, fa: n_bp },
        component_local: false,
        scores,
        warnings: Vec::new(),
    })
}

/// Smallest possible farness of a node whose partition has `own` nodes
/// when the other partition has `other`.
pub fn min_farness(own: usize, other: usize) -> f64 {
    (other + 2 * own.saturating_sub(1)) as f64
}

/// Raw closeness is 1/farness; normalized closeness is min farness over farness.
pub fn closeness_centrality(g: &BipartiteGraph) -> Result<CentralityReport, CentralityError> {
    require_partitions(g)?;
    let comps = g.connected_components();
    let component_local = comps.components.len() > 1;
    let mut warnings = Vec::new();
    if g.n_edges() == 0 {
        warnings.push("graph has no edges; every closeness score is 0".to_string());
    } else if component_local {
        warnings.push(format!(
            "graph has {} components; farness and bounds are taken per component",
            comps.components.len()
        ));
    }

    let nodes: Vec<NodeId> = (0..g.n_nodes()).collect();
    let profiles = g.distance_profiles(&nodes);
    let scores = profiles
        .iter()
        .enumerate()
        .map(|(v, p)| {
            let partition = g.partition(v);
            let comp = comps.of(v);
            let (own, other) = match partition {
                Partition::Bp => (comp.n_bp, comp.n_fa),
                Partition::Fa => (comp.n_fa, comp.n_bp),
            };
            let (raw, normalized) = if p.reached == 0 {
                (0.0, 0.0)
            } else {
                let f = p.farness as f64;
                (1.0 / f, min_farness(own, other) / f)
            };
            NodeScore {
                node: v,
                partition,
                raw,
                normalized,
            }
        })
        .collect();
    Ok(CentralityReport {
        measure: Measure::Closeness,
        n_bp: g.n_bp(),
        n_fa: g.n_fa(),
        constants: Constants {
            bp: min_farness(g.n_bp(), g.n_fa()),
            fa: min_farness(g.n_fa(), g.n_bp()),
        },
        component_local,
        scores,
        warnings,
    })
}

/// Maximum betweenness of a node in a two-mode graph whose own partition has
/// `n` nodes and whose other partition has `m` nodes, with `s` and `t` the
/// quotient and remainder of `(n - 1) / m`.
pub fn max_betweenness(n: u64, m: u64) -> f64 {
    if n == 0 || m == 0 {
        return 0.0;
    }
    let (n, m) = (n as i128, m as i128);
    let s = (n - 1) / m;
    let t = (n - 1) % m;
    let twice = m * m * (s + 1) * (s + 1) + m * (s + 1) * (2 * t - s - 1) - t * (2 * s - t + 3);
    twice as f64 / 2.0
}

/// Betweenness bound applied to nodes of `partition`.
pub fn betweenness_bound(g: &BipartiteGraph, partition: Partition, mode: NormalizationMode) -> f64 {
    let (n_bp, n_fa) = (g.n_bp() as u64, g.n_fa() as u64);
    let (b_bp_side, b_fa_side) = (max_betweenness(n_bp, n_fa), max_betweenness(n_fa, n_bp));
    match (mode, partition) {
        (NormalizationMode::OwnPartition, Partition::Bp) => b_bp_side,
        (NormalizationMode::OwnPartition, Partition::Fa) => b_fa_side,
        (NormalizationMode::PaperLiteral, Partition::Bp) => b_fa_side,
        (NormalizationMode::PaperLiteral, Partition::Fa) => b_bp_side,
    }
}

pub fn betweenness_centrality(
    g: &BipartiteGraph,
    options: &CentralityOptions,
) -> Result<CentralityReport, CentralityError> {
    require_partitions(g)?;
    let raw = match options.betweenness {
        BetweennessMode::GeodesicFraction => geodesic_betweenness(g),
        BetweennessMode::LengthWeighted => length_weighted_betweenness(g)?,
    };
    let bound_bp = betweenness_bound(g, Partition::Bp, options.normalization);
    let bound_fa = betweenness_bound(g, Partition::Fa, options.normalization);
    let mut warnings = Vec::new();
    let comps = g.connected_components();
    let component_local = comps.components.len() > 1;
    if component_local {
        warnings.push(format!(
            "graph has {} components; pairs in different components contribute nothing",
            comps.components.len()
        ));
    }
    let mut undefined = 0usize;
    let scores = raw
        .into_iter()
        .enumerate()
        .map(|(v, raw)| {
            let partition = g.partition(v);
            let bound = match partition {
                Partition::Bp => bound_bp,
                Partition::Fa => bound_fa,
            };
            let normalized = if bound > 0.0 {
                raw / bound
            } else if raw == 0.0 {
                0.0
            } else {
                undefined += 1;
                f64::NAN
            };
            NodeScore {
                node: v,
                partition,
                raw,
                normalized,
            }
        })
        .collect();
    if undefined > 0 {
        warnings.push(format!(
            "{undefined} nodes have positive betweenness but a zero bound; their normalized score is NaN"
        ));
    }
    Ok(CentralityReport {
        measure: Measure::Betweenness,
        n_bp: g.n_bp(),
        n_fa: g.n_fa(),
        constants: Constants {
            bp: bound_bp,
            fa: bound_fa,
        },
        component_local,
        scores,
        warnings,
    })
}

/// Level code of a node not yet reached from the current source.
const UNSEEN: u8 = u8::MAX;

/// Per-source Brandes state sized to stay cache resident on large graphs.
///
/// Neighbours in a bipartite graph sit exactly one BFS level apart, so the
/// level modulo 4 is enough to tell a successor from a predecessor. Each
/// level is expanded from whichever side has the smaller degree sum: a deep
/// level of many low-degree nodes is cheaper to reach by pulling from the few
/// nodes left beyond it.
struct BrandesWorkspace {
    degree: Vec<u32>,
    level: Vec<u8>,
    /// Path count `sigma[v]` until `v` is settled in the backward pass, then
    /// `(1 + delta[v]) / sigma[v]`.
    weight: Vec<f64>,
    /// Dependency sums pushed down from successors; zero between uses.
    pending: Vec<f64>,
    /// BFS order; one spare slot absorbs the unconditional write.
    order: Vec<u32>,
    reached: usize,
    /// `order[level_start[l]..level_start[l + 1]]` holds level `l`.
    level_start: Vec<usize>,
    level_degree: Vec<usize>,
    unvisited: Vec<u32>,
}

impl BrandesWorkspace {
    fn new(g: &BipartiteGraph) -> Self {
        let n = g.n_nodes();
        BrandesWorkspace {
            degree: (0..n).map(|v| g.degree(v) as u32).collect(),
            level: vec![UNSEEN; n],
            weight: vec![0.0; n],
            pending: vec![0.0; n],
            order: vec![0; n + 1],
            reached: 0,
            level_start: Vec::new(),
            level_degree: Vec::new(),
            unvisited: Vec::new(),
        }
    }

    /// Adds the dependencies of `source` on every other node to `acc`.
    fn accumulate(&mut self, g: &BipartiteGraph, source: NodeId, acc: &mut [f64]) {
        self.forward(g, source);
        self.backward(g, acc);
    }

    fn forward(&mut self, g: &BipartiteGraph, source: NodeId) {
        let (level, weight, order) = (&mut self.level[..], &mut self.weight[..], &mut self.order[..]);
        for &v in &order[..self.reached] {
            level[v as usize] = UNSEEN;
            weight[v as usize] = 0.0;
        }
        level[source] = 0;
        weight[source] = 1.0;
        order[0] = source as u32;
        self.level_start.clear();
        self.level_start.extend([0, 1]);
        self.level_degree.clear();
        self.level_degree.push(self.degree[source] as usize);
        let mut unseen_degree = 2 * g.n_edges() - self.degree[source] as usize;
        let mut listed = false;
        let mut tail = 1;
        for l in 0.. {
            let (start, end) = (self.level_start[l], self.level_start[l + 1]);
            let (here, next) = ((l & 3) as u8, ((l + 1) & 3) as u8);
            if unseen_degree < self.level_degree[l] {
                if !listed {
                    self.unvisited.clear();
                    self.unvisited.extend((0..level.len() as u32).filter(|&v| level[v as usize] == UNSEEN));
                    listed = true;
                }
                let mut kept = 0;
                for i in 0..self.unvisited.len() {
                    let u = self.unvisited[i] as usize;
                    if level[u] != UNSEEN {
                        continue;
                    }
                    let mut sigma = 0.0;
                    for &w in g.neighbors(u) {
                        let w = w as usize;
                        sigma += if level[w] == here { weight[w] } else { 0.0 };
                    }
                    if sigma > 0.0 {
                        level[u] = next;
                        weight[u] = sigma;
                        order[tail] = u as u32;
                        tail += 1;
                    } else {
                        self.unvisited[kept] = u as u32;
                        kept += 1;
                    }
                }
                self.unvisited.truncate(kept);
            } else {
                for i in start..end {
                    let v = order[i] as usize;
                    let sv = weight[v];
                    // Branch-free: every neighbour is written to the queue
                    // slot, which only advances for a first visit.
                    for &w in g.neighbors(v) {
                        let w = w as usize;
                        let lw = level[w];
                        let fresh = lw == UNSEEN;
                        order[tail] = w as u32;
                        tail += fresh as usize;
                        let lw = if fresh { next } else { lw };
                        level[w] = lw;
                        weight[w] += if lw == next { sv } else { 0.0 };
                    }
                }
            }
            if tail == end {
                break;
            }
            let reached_degree: usize = order[end..tail].iter().map(|&v| self.degree[v as usize] as usize).sum();
            unseen_degree -= reached_degree;
            self.level_start.push(tail);
            self.level_degree.push(reached_degree);
        }
        self.reached = tail;
    }

    fn backward(&mut self, g: &BipartiteGraph, acc: &mut [f64]) {
        let (level, weight, pending) = (&self.level[..], &mut self.weight[..], &mut self.pending[..]);
        let (order, starts) = (&self.order[..], &self.level_start[..]);
        let depth = starts.len() - 1;
        for &v in &order[starts[depth - 1]..starts[depth]] {
            weight[v as usize] = 1.0 / weight[v as usize];
        }
        for l in (1..depth - 1).rev() {
            let nodes = &order[starts[l]..starts[l + 1]];
            let (here, next) = ((l & 3) as u8, ((l + 1) & 3) as u8);
            let push = self.level_degree[l + 1] < self.level_degree[l];
            if push {
                for &w in &order[starts[l + 1]..starts[l + 2]] {
                    let cw = weight[w as usize];
                    for &v in g.neighbors(w as usize) {
                        let v = v as usize;
                        pending[v] += if level[v] == here { cw } else { 0.0 };
                    }
                }
            }
            for &v in nodes {
                let v = v as usize;
                let sum = if push {
                    std::mem::take(&mut pending[v])
                } else {
                    // Successors are already settled; predecessors still hold
                    // path counts and are masked out.
                    let mut sum = 0.0;
                    for &w in g.neighbors(v) {
                        let w = w as usize;
                        sum += if level[w] == next { weight[w] } else { 0.0 };
                    }
                    sum
                };
                let sigma = weight[v];
                let delta = sigma * sum;
                acc[v] += delta;
                weight[v] = (1.0 + delta) / sigma;
            }
        }
    }
}

/// Sources per partial sum. Fixed so the reduction order never depends on the
/// number of worker threads.
const SOURCE_CHUNK: usize = 256;

fn chunked_source_sum<W, Init, Acc>(g: &BipartiteGraph, init: Init, accumulate: Acc) -> Vec<f64>
where
    W: Send,
    Init: Fn() -> W + Sync + Send,
    Acc: Fn(&mut W, NodeId, &mut [f64]) + Sync + Send,
{
    let n = g.n_nodes();
    let sources: Vec<NodeId> = (0..n).collect();
    let chunks: Vec<&[NodeId]> = sources.chunks(SOURCE_CHUNK).collect();
    let wave = (rayon::current_num_threads() * 2).max(1);
    let mut total = vec![0.0; n];
    for group in chunks.chunks(wave) {
        let partials: Vec<Vec<f64>> = group
            .par_iter()
            .map_init(&init, |ws, chunk| {
                let mut acc = vec![0.0; n];
                for &s in chunk.iter() {
                    accumulate(ws, s, &mut acc);
                }
                acc
            })
            .collect();
        for partial in partials {
            for (t, p) in total.iter_mut().zip(partial) {
                *t += p;
            }
        }
    }
    total
}

/// Brandes accumulation over all sources; each unordered pair counted once.
pub fn geodesic_betweenness(g: &BipartiteGraph) -> Vec<f64> {
    let mut total = chunked_source_sum(
        g,
        || BrandesWorkspace::new(g),
        |ws, s, acc| ws.accumulate(g, s, acc),
    );
    for x in &mut total {
        *x /= 2.0;
    }
    total
}

struct ReachWorkspace {
    dist: Vec<u32>,
    order: Vec<u32>,
    words: usize,
    /// Row `v` holds the targets `t` for which `v` lies on a shortest source-t path.
    below: Vec<u64>,
}

impl ReachWorkspace {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64);
        ReachWorkspace {
            dist: vec![UNREACHABLE; n],
            order: Vec::with_capacity(n),
            words,
            below: vec![0; words * n],
        }
    }

    fn accumulate(&mut self, g: &BipartiteGraph, source: NodeId, acc: &mut [f64]) {
        let words = self.words;
        for &v in &self.order {
            let v = v as usize;
            self.dist[v] = UNREACHABLE;
            self.below[v * words..(v + 1) * words].fill(0);
        }
        self.order.clear();
        self.dist[source] = 0;
        self.order.push(source as u32);
        let mut head = 0;
        while head < self.order.len() {
            let v = self.order[head] as usize;
            head += 1;
            for &w in g.neighbors(v) {
                if self.dist[w as usize] == UNREACHABLE {
                    self.dist[w as usize] = self.dist[v] + 1;
                    self.order.push(w);
                }
            }
        }
        for i in (0..self.order.len()).rev() {
            let v = self.order[i] as usize;
            let dv = self.dist[v];
            for &w in g.neighbors(v) {
                let w = w as usize;
                if self.dist[w] == dv + 1 {
                    let (lo, hi) = (v.min(w), v.max(w));
                    let (head_rows, tail_rows) = self.below.split_at_mut(hi * words);
                    let (dst, src) = if v < w {
                        (&mut head_rows[lo * words..(lo + 1) * words], &tail_rows[..words])
                    } else {
                        (&mut tail_rows[..words], &head_rows[lo * words..(lo + 1) * words])
                    };
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d |= s;
                    }
                    dst[w / 64] |= 1 << (w % 64);
                }
            }
            if v != source {
                let row = &self.below[v * words..(v + 1) * words];
                let mut sum = 0.0;
                for (wi, &bits) in row.iter().enumerate() {
                    let mut bits = bits;
                    while bits != 0 {
                        let t = wi * 64 + bits.trailing_zeros() as usize;
                        sum += 1.0 / self.dist[t] as f64;
                        bits &= bits - 1;
                    }
                }
                acc[v] += sum;
            }
        }
    }
}

/// Sum over unordered pairs {k, j} with a shortest k-j path through the node of 1/d(k, j).
pub fn length_weighted_betweenness(g: &BipartiteGraph) -> Result<Vec<f64>, CentralityError> {
    let n = g.n_nodes();
    if n > LENGTH_WEIGHTED_MAX_NODES {
        return Err(CentralityError::TooLarge(n));
    }
    let mut total = chunked_source_sum(g, || ReachWorkspace::new(n), |ws, s, acc| ws.accumulate(g, s, acc));
    for x in &mut total {
        *x /= 2.0;
    }
    Ok(total)
}

pub fn compute(
    g: &BipartiteGraph,
    measure: Measure,
    options: &CentralityOptions,
) -> Result<CentralityReport, CentralityError> {
    match measure {
        Measure::Degree => degree_centrality(g),
        Measure::Closeness => closeness_centrality(g),
        Measure::Betweenness => betweenness_centrality(g, options),
    }
}

/// Display names for nodes: account ids for FA nodes, `bp:<index>` for BP nodes.
#[derive(Debug, Clone)]
pub struct NodeLabels {
    ids: Vec<String>,
    names: Vec<Option<String>>,
}

impl NodeLabels {
    pub fn from_network(net: &FinancialStatementsNetwork) -> Self {
        let mut ids = Vec::with_capacity(net.n_nodes());
        let mut names = Vec::with_capacity(net.n_nodes());
        for i in 0..net.n_bp() {
            ids.push(format!("bp:{i}"));
            names.push(Some(net.bp_nodes()[i].pattern.to_string()));
        }
        for fa in net.fa_nodes() {
            ids.push(fa.id.clone());
            names.push(fa.name.clone());
        }
        NodeLabels { ids, names }
    }

    /// Labels `U1..Un`, `V1..Vm` for graphs without a source network.
    pub fn generic(g: &BipartiteGraph) -> Self {
        let ids = (0..g.n_nodes())
            .map(|v| match g.partition(v) {
                Partition::Bp => format!("U{}", g.local_index(v) + 1),
                Partition::Fa => format!("V{}", g.local_index(v) + 1),
            })
            .collect();
        NodeLabels {
            ids,
            names: vec![None; g.n_nodes()],
        }
    }

    pub fn id(&self, node: NodeId) -> &str {
        &self.ids[node]
    }

    pub fn name(&self, node: NodeId) -> Option<&str> {
        self.names[node].as_deref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNode {
    pub node: NodeId,
    pub id: String,
    pub partition: Partition,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub account_name: Option<String>,
    pub raw: f64,
    pub normalized: f64,
}

/// The `k` best nodes by normalized score, ties broken by ascending node id.
pub fn top_nodes(report: &CentralityReport, k: usize, labels: &NodeLabels) -> Vec<TopNode> {
    report
        .ranking()
        .into_iter()
        .take(k)
        .map(|s| TopNode {
            node: s.node,
            id: labels.id(s.node).to_string(),
            partition: s.partition,
            account_name: match s.partition {
                Partition::Fa => labels.name(s.node).map(str::to_string),
                Partition::Bp => None,
            },
            raw: s.raw,
            normalized: s.normalized,
        })
        .collect()
}

/// Writes `node_id,partition,raw,normalized`, one row per node in id order.
pub fn write_report_csv<W: Write>(report: &CentralityReport, labels: &NodeLabels, sink: W) -> Result<(), CentralityError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["node_id", "partition", "raw", "normalized"])?;
    for s in &report.scores {
        w.write_record([
            labels.id(s.node).to_string(),
            s.partition.as_str().to_string(),
            s.raw.to_string(),
            s.normalized.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
