//! Exhaustive reference implementations for small bipartite graphs.
//!
//! Nodes are numbered as in `BipartiteGraph`: BP nodes first, then FA nodes.

#![allow(dead_code)]

use rand::Rng;

pub struct SmallGraph {
    pub n_bp: usize,
    pub n_fa: usize,
    /// `(bp_index, fa_index)` pairs.
    pub edges: Vec<(u32, u32)>,
}

impl SmallGraph {
    pub fn n(&self) -> usize {
        self.n_bp + self.n_fa
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n()];
        for &(b, f) in &self.edges {
            let (u, v) = (b as usize, self.n_bp + f as usize);
            if !adj[u].contains(&v) {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        adj
    }
}

/// Connected bipartite graph with both partitions non-empty and at most
/// `max_nodes` nodes: a random spanning tree plus random extra edges.
pub fn random_connected<R: Rng>(rng: &mut R, max_nodes: usize) -> SmallGraph {
    let total = rng.random_range(2..=max_nodes);
    let n_bp = rng.random_range(1..total);
    let n_fa = total - n_bp;
    let mut edges = vec![(0u32, 0u32)];
    let (mut bp_in, mut fa_in) = (1usize, 1usize);
    while bp_in < n_bp || fa_in < n_fa {
        let add_bp = fa_in == n_fa || (bp_in < n_bp && rng.random_bool(0.5));
        if add_bp {
            edges.push((bp_in as u32, rng.random_range(0..fa_in) as u32));
            bp_in += 1;
        } else {
            edges.push((rng.random_range(0..bp_in) as u32, fa_in as u32));
            fa_in += 1;
        }
    }
    let density = rng.random_range(0.0..0.6);
    for b in 0..n_bp {
        for f in 0..n_fa {
            if rng.random_bool(density) {
                edges.push((b as u32, f as u32));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    SmallGraph { n_bp, n_fa, edges }
}

pub struct PathOracle {
    /// Σ over unordered pairs {s, t} (v ∉ {s, t}) of σ_st(v) / σ_st.
    pub betweenness: Vec<f64>,
    /// Σ over unordered pairs with some shortest path through v of 1 / d(s, t).
    pub length_weighted: Vec<f64>,
    /// Sum of shortest-path lengths to every reachable node.
    pub farness: Vec<u64>,
    /// `dist[s][t]`, `None` when unreachable.
    pub dist: Vec<Vec<Option<usize>>>,
}

struct Search<'a> {
    adj: &'a [Vec<usize>],
    target: usize,
    on_path: Vec<bool>,
    path: Vec<usize>,
    best: usize,
    through: Vec<u64>,
    count: u64,
}

impl Search<'_> {
    fn walk(&mut self, u: usize) {
        let len = self.path.len() - 1;
        if len > self.best {
            return;
        }
        if u == self.target {
            if len < self.best {
                self.best = len;
                self.count = 0;
                self.through.iter_mut().for_each(|c| *c = 0);
            }
            self.count += 1;
            for &v in &self.path[1..self.path.len() - 1] {
                self.through[v] += 1;
            }
            return;
        }
        for i in 0..self.adj[u].len() {
            let v = self.adj[u][i];
            if !self.on_path[v] {
                self.on_path[v] = true;
                self.path.push(v);
                self.walk(v);
                self.path.pop();
                self.on_path[v] = false;
            }
        }
    }
}

/// Enumerates every simple path between every pair and keeps the shortest ones.
pub fn path_oracle(g: &SmallGraph) -> PathOracle {
    let adj = g.adjacency();
    let n = g.n();
    let mut out = PathOracle {
        betweenness: vec![0.0; n],
        length_weighted: vec![0.0; n],
        farness: vec![0; n],
        dist: vec![vec![None; n]; n],
    };
    for s in 0..n {
        out.dist[s][s] = Some(0);
        for t in s + 1..n {
            let mut search = Search {
                adj: &adj,
                target: t,
                on_path: vec![false; n],
                path: vec![s],
                best: usize::MAX,
                through: vec![0; n],
                count: 0,
            };
            search.on_path[s] = true;
            search.walk(s);
            if search.count == 0 {
                continue;
            }
            let d = search.best;
            out.dist[s][t] = Some(d);
            out.dist[t][s] = Some(d);
            out.farness[s] += d as u64;
            out.farness[t] += d as u64;
            for v in 0..n {
                if search.through[v] > 0 {
                    out.betweenness[v] += search.through[v] as f64 / search.count as f64;
                    out.length_weighted[v] += 1.0 / d as f64;
                }
            }
        }
    }
    out
}

/// Largest betweenness any BP node reaches over every bipartite graph with
/// `n` BP and `m` FA nodes. Exponential in `n * m`.
pub fn brute_max_betweenness(n: usize, m: usize) -> f64 {
    let slots = n * m;
    assert!(slots <= 16, "{n}x{m} is too large to enumerate");
    let mut best: f64 = 0.0;
    for mask in 0u32..(1 << slots) {
        let edges = (0..slots)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| ((i / m) as u32, (i % m) as u32))
            .collect();
        let g = SmallGraph { n_bp: n, n_fa: m, edges };
        let b = path_oracle(&g).betweenness;
        best = b[..n].iter().copied().fold(best, f64::max);
    }
    best
}
