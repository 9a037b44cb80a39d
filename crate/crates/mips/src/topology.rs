//! Cluster network topologies (Fat-Tree, Jellyfish) and the hop-count cost
//! matrix θ derived from them.
//!
//! Link bandwidth is recorded as metadata only; no objective uses it. Note
//! that a canonical k=4 fat-tree has 20 switches, not the 24 used for
//! Jellyfish here; hop costs between servers are unaffected by that choice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterState, ResourceVector, Server};

const JELLYFISH_MAX_RETRIES: u64 = 32;

/// Graph over servers and switches. Server ids `0..server_count` align with
/// [`ClusterState`] server ids; switches occupy ids
/// `server_count..server_count + switch_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub server_count: usize,
    pub switch_count: usize,
    /// Undirected adjacency lists over all node ids.
    pub adjacency: Vec<Vec<usize>>,
    /// Metadata only; never constrains placement.
    pub link_bandwidth_gbps: f64,
    pub kind: String,
}

impl NetworkGraph {
    fn with_nodes(server_count: usize, switch_count: usize, kind: &str) -> Self {
        Self {
            server_count,
            switch_count,
            adjacency: vec![Vec::new(); server_count + switch_count],
            link_bandwidth_gbps: 40.0,
            kind: kind.to_string(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.server_count + self.switch_count
    }

    fn add_link(&mut self, a: usize, b: usize) {
        self.adjacency[a].push(b);
        self.adjacency[b].push(a);
    }

    fn has_link(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    /// Undirected edge list with each link reported once, sorted.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, neighbors) in self.adjacency.iter().enumerate() {
            for &b in neighbors {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push(w);
                }
            }
        }
        count == n
    }
}

/// Canonical k-ary fat-tree: (k/2)² core switches, k pods of k switches
/// (k/2 aggregation, k/2 edge), k/2 servers per edge switch, k³/4 servers
/// total.
pub fn build_fat_tree(k: usize) -> Result<NetworkGraph> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "fat-tree arity must be even and >= 2, got {k}"
        )));
    }
    let half = k / 2;
    let server_count = k * half * half;
    let switch_count = half * half + k * k;
    let mut g = NetworkGraph::with_nodes(server_count, switch_count, "fat-tree");

    // switch ids, offset past the servers
    let base = server_count;
    let core = |i: usize| base + i;
    let agg = |pod: usize, j: usize| base + half * half + pod * k + j;
    let edge = |pod: usize, j: usize| base + half * half + pod * k + half + j;

    for pod in 0..k {
        for e in 0..half {
            // servers under this edge switch
            for h in 0..half {
                let server = (pod * half + e) * half + h;
                g.add_link(server, edge(pod, e));
            }
            // edge <-> aggregation, full bipartite within the pod
            for a in 0..half {
                g.add_link(edge(pod, e), agg(pod, a));
            }
        }
        // aggregation j serves core group j
        for a in 0..half {
            for c in 0..half {
                g.add_link(agg(pod, a), core(a * half + c));
            }
        }
    }
    Ok(g)
}

/// Jellyfish: a random regular-ish graph among switches built by the
/// incremental link-swap procedure, with servers attached round-robin.
/// Deterministic given `seed`.
pub fn build_jellyfish(
    n_switches: usize,
    n_ports: usize,
    n_servers: usize,
    seed: u64,
) -> Result<NetworkGraph> {
    if n_switches == 0 || n_ports == 0 {
        return Err(Error::InvalidArgument(
            "jellyfish needs at least one switch and one port".into(),
        ));
    }
    if n_servers > n_switches * (n_ports - 1) {
        return Err(Error::InvalidArgument(format!(
            "{n_servers} servers exceed {n_switches} switches x {} server ports",
            n_ports - 1
        )));
    }
    for attempt in 0..JELLYFISH_MAX_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        if let Some(g) = try_build_jellyfish(n_switches, n_ports, n_servers, &mut rng) {
            if g.is_connected() {
                return Ok(g);
            }
        }
    }
    Err(Error::Topology(format!(
        "could not build a connected jellyfish graph for {n_switches} switches, \
         {n_ports} ports, {n_servers} servers"
    )))
}

fn try_build_jellyfish(
    n_switches: usize,
    n_ports: usize,
    n_servers: usize,
    rng: &mut ChaCha8Rng,
) -> Option<NetworkGraph> {
    let mut g = NetworkGraph::with_nodes(n_servers, n_switches, "jellyfish");
    let switch = |i: usize| n_servers + i;

    let mut free = vec![n_ports; n_switches];
    for s in 0..n_servers {
        let sw = s % n_switches;
        g.add_link(s, switch(sw));
        free[sw] -= 1;
    }
    if n_switches == 1 {
        return Some(g);
    }

    let max_steps = n_switches * n_ports * 4;
    for _ in 0..max_steps {
        let candidates: Vec<(usize, usize)> = (0..n_switches)
            .flat_map(|u| ((u + 1)..n_switches).map(move |v| (u, v)))
            .filter(|&(u, v)| free[u] > 0 && free[v] > 0 && !g.has_link(switch(u), switch(v)))
            .collect();
        if let Some(&(u, v)) = pick(rng, &candidates) {
            g.add_link(switch(u), switch(v));
            free[u] -= 1;
            free[v] -= 1;
            continue;
        }
        // no linkable pair left: splice a stuck switch into an existing link
        let Some(stuck) = (0..n_switches).find(|&u| free[u] >= 2) else {
            break;
        };
        let edges: Vec<(usize, usize)> = g
            .links()
            .into_iter()
            .filter(|&(a, b)| {
                a >= n_servers
                    && b >= n_servers
                    && a != switch(stuck)
                    && b != switch(stuck)
                    && !g.has_link(switch(stuck), a)
                    && !g.has_link(switch(stuck), b)
            })
            .collect();
        let &(a, b) = pick(rng, &edges)?;
        g.adjacency[a].retain(|&x| x != b);
        g.adjacency[b].retain(|&x| x != a);
        g.add_link(switch(stuck), a);
        g.add_link(switch(stuck), b);
        free[stuck] -= 2;
    }
    Some(g)
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[rng.gen_range(0..items.len())])
    }
}

/// θ[s][s'] = hop count of the shortest path between servers s and s'
/// (breadth-first search); zero diagonal, symmetric.
pub fn hop_cost_matrix(g: &NetworkGraph) -> Result<Vec<Vec<f64>>> {
    let mut theta = vec![vec![0.0; g.server_count]; g.server_count];
    for (s, row) in theta.iter_mut().enumerate() {
        let dist = bfs(g, s);
        for (t, cost) in row.iter_mut().enumerate() {
            match dist[t] {
                Some(d) => *cost = d as f64,
                None => {
                    return Err(Error::Topology(format!(
                        "servers {s} and {t} are unreachable from each other"
                    )))
                }
            }
        }
    }
    Ok(theta)
}

fn bfs(g: &NetworkGraph, start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.node_count()];
    dist[start] = Some(0);
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &w in &g.adjacency[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Topology kind and parameters, as set via CLI or config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologyParams {
    FatTree {
        k: usize,
    },
    Jellyfish {
        switches: usize,
        ports: usize,
        servers: usize,
        seed: u64,
    },
}

impl TopologyParams {
    pub fn build(&self) -> Result<NetworkGraph> {
        match *self {
            TopologyParams::FatTree { k } => build_fat_tree(k),
            TopologyParams::Jellyfish {
                switches,
                ports,
                servers,
                seed,
            } => build_jellyfish(switches, ports, servers, seed),
        }
    }
}

/// Cluster generation settings: topology plus per-server capacity ranges
/// (uniform integers, inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub topology: TopologyParams,
    pub cores_range: (u64, u64),
    pub memory_range: (u64, u64),
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            topology: TopologyParams::FatTree { k: 4 },
            cores_range: (16, 64),
            memory_range: (8, 32),
            seed: 0,
        }
    }
}

/// Builds the network, derives θ, and samples heterogeneous server
/// capacities. Deterministic given the config.
pub fn generate_cluster(cfg: &ClusterConfig) -> Result<(NetworkGraph, ClusterState)> {
    if cfg.cores_range.0 > cfg.cores_range.1 || cfg.memory_range.0 > cfg.memory_range.1 {
        return Err(Error::InvalidConfig(
            "server capacity ranges must satisfy low <= high".into(),
        ));
    }
    let graph = cfg.topology.build()?;
    let theta = hop_cost_matrix(&graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let servers = (0..graph.server_count)
        .map(|id| {
            let cores = rng.gen_range(cfg.cores_range.0..=cfg.cores_range.1) as f64;
            let mem = rng.gen_range(cfg.memory_range.0..=cfg.memory_range.1) as f64;
            Server {
                id,
                capacity: ResourceVector::new(vec![cores, mem]).expect("positive capacity"),
            }
        })
        .collect();
    let state = ClusterState::new(servers, theta)?;
    Ok((graph, state))
}
