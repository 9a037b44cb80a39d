//! Seeded random generator of online request streams: layered DAG
//! topologies with per-component parallelism and demands, plus the container
//! budget sizing.
//!
//! Generation is a pure function of (config, request index). The component
//! count is drawn uniformly from its range first, then the depth from
//! `[depth_lo, min(depth_hi, m)]`, which keeps the component-count histogram
//! uniform while guaranteeing one component per layer. Every non-source
//! component receives an edge from the immediately previous layer and every
//! non-sink an edge to a later layer; extra bridge edges join any remaining
//! weak components, so the DAG is connected with depth exactly d.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AppRequest, ResourceVector, StreamEdge};

/// Splits one base seed into independent per-index seeds (splitmix64).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub n_requests: usize,
    pub depth_range: (usize, usize),
    pub components_range: (usize, usize),
    pub parallelism_range: (usize, usize),
    /// Per-instance demand ranges, uniform integers, inclusive.
    pub cores_range: (u64, u64),
    pub memory_range: (u64, u64),
    /// Stream rate range, uniform reals.
    pub rate_range: (f64, f64),
    /// Containers allocated beyond the packing lower bound.
    pub container_slack: usize,
    /// Container capacity as a multiple of the largest instance demand.
    pub capacity_headroom: f64,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            n_requests: 10,
            depth_range: (3, 5),
            components_range: (3, 6),
            parallelism_range: (2, 6),
            cores_range: (2, 6),
            memory_range: (4, 8),
            rate_range: (1.0, 10.0),
            container_slack: 1,
            capacity_headroom: 2.0,
            seed: 0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ordered(self.depth_range)
            || !ordered(self.components_range)
            || !ordered(self.parallelism_range)
        {
            return Err(Error::InvalidConfig(
                "depth, component, and parallelism ranges need 1 <= low <= high".into(),
            ));
        }
        if self.components_range.0 < self.depth_range.0 {
            return Err(Error::InvalidConfig(format!(
                "minimum component count {} cannot go below minimum depth {}",
                self.components_range.0, self.depth_range.0
            )));
        }
        if self.depth_range.0 == 1 && self.components_range != (1, 1) {
            return Err(Error::InvalidConfig(
                "depth 1 admits no connected multi-component topology; \
                 use components_range (1, 1)"
                    .into(),
            ));
        }
        if self.cores_range.0 > self.cores_range.1
            || self.cores_range.0 == 0
            || self.memory_range.0 > self.memory_range.1
            || self.memory_range.0 == 0
        {
            return Err(Error::InvalidConfig(
                "demand ranges need 1 <= low <= high".into(),
            ));
        }
        if !(self.rate_range.0 > 0.0 && self.rate_range.0 <= self.rate_range.1) {
            return Err(Error::InvalidConfig(
                "rate range needs 0 < low <= high".into(),
            ));
        }
        if self.capacity_headroom < 1.0 {
            return Err(Error::InvalidConfig(
                "capacity headroom below 1 rejects every request at intake".into(),
            ));
        }
        Ok(())
    }
}

/// Builds the `index`-th request of the stream. Identical (config, index)
/// pairs produce identical requests.
pub fn generate_request(cfg: &WorkloadConfig, index: usize) -> Result<AppRequest> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));

    let m = rng.gen_range(cfg.components_range.0..=cfg.components_range.1);
    let depth_hi = cfg.depth_range.1.min(m);
    let d = rng.gen_range(cfg.depth_range.0..=depth_hi);

    // partition the m components into d nonempty layers
    let layer_of = sample_layers(&mut rng, m, d);
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (comp, &l) in layer_of.iter().enumerate() {
        layers[l].push(comp);
    }

    let mut edges = std::collections::BTreeSet::new();
    // every non-source hangs off the previous layer, which pins the depth
    for l in 1..d {
        for &comp in &layers[l] {
            let parent = layers[l - 1][rng.gen_range(0..layers[l - 1].len())];
            edges.insert((parent, comp));
        }
    }
    // every non-sink feeds something downstream
    for l in 0..d.saturating_sub(1) {
        for &comp in &layers[l] {
            if edges.iter().any(|&(src, _)| src == comp) {
                continue;
            }
            let later: Vec<usize> = layers[l + 1..].iter().flatten().copied().collect();
            let target = later[rng.gen_range(0..later.len())];
            edges.insert((comp, target));
        }
    }
    bridge_components(&mut edges, &layers, &layer_of);

    let edges: Vec<StreamEdge> = edges
        .into_iter()
        .map(|(src, dst)| StreamEdge {
            src,
            dst,
            rate: rng.gen_range(cfg.rate_range.0..=cfg.rate_range.1),
        })
        .collect();

    let components: Vec<(usize, ResourceVector)> = (0..m)
        .map(|_| {
            let parallelism = rng.gen_range(cfg.parallelism_range.0..=cfg.parallelism_range.1);
            let cores = rng.gen_range(cfg.cores_range.0..=cfg.cores_range.1) as f64;
            let memory = rng.gen_range(cfg.memory_range.0..=cfg.memory_range.1) as f64;
            (
                parallelism,
                ResourceVector::new(vec![cores, memory]).expect("positive demand"),
            )
        })
        .collect();

    // capacity wraps the largest instance with headroom; the budget covers
    // the dominant dimension's packing bound plus slack
    let dim = 2;
    let mut max_demand = vec![0.0; dim];
    let mut total_demand = vec![0.0; dim];
    for (parallelism, demand) in &components {
        for k in 0..dim {
            max_demand[k] = f64::max(max_demand[k], demand[k]);
            total_demand[k] += demand[k] * *parallelism as f64;
        }
    }
    let capacity: Vec<f64> = max_demand
        .iter()
        .map(|&q| (q * cfg.capacity_headroom).ceil())
        .collect();
    let packing_bound = (0..dim)
        .map(|k| (total_demand[k] / capacity[k]).ceil() as usize)
        .max()
        .unwrap_or(0);
    let container_count = packing_bound + cfg.container_slack;

    AppRequest::expand(
        index,
        components,
        edges,
        container_count,
        ResourceVector::new(capacity).expect("positive capacity"),
    )
}

/// Random surjective assignment of m components onto d ordered layers:
/// d - 1 distinct cut points over the component sequence.
fn sample_layers(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (1..m).collect();
    for i in 0..d.saturating_sub(1) {
        let j = rng.gen_range(i..cuts.len());
        cuts.swap(i, j);
    }
    let mut cuts: Vec<usize> = cuts[..d - 1].to_vec();
    cuts.sort_unstable();
    cuts.push(m);
    let mut layer_of = vec![0; m];
    let mut layer = 0;
    for (comp, slot) in layer_of.iter_mut().enumerate() {
        if comp == cuts[layer] {
            layer += 1;
        }
        *slot = layer;
    }
    layer_of
}

/// Joins remaining weak components with forward edges. Every weak component
/// touches layer 0 (each non-source has a parent) and, when d >= 2, some
/// later layer as well, so a source-to-later bridge always exists.
fn bridge_components(
    edges: &mut std::collections::BTreeSet<(usize, usize)>,
    layers: &[Vec<usize>],
    layer_of: &[usize],
) {
    let m = layer_of.len();
    let mut dsu: Vec<usize> = (0..m).collect();
    fn find(dsu: &mut Vec<usize>, x: usize) -> usize {
        if dsu[x] != x {
            let root = find(dsu, dsu[x]);
            dsu[x] = root;
        }
        dsu[x]
    }
    for &(a, b) in edges.iter() {
        let (ra, rb) = (find(&mut dsu, a), find(&mut dsu, b));
        dsu[ra] = rb;
    }
    loop {
        let first = find(&mut dsu, 0);
        let Some(stranded) = (0..m).find(|&v| find(&mut dsu, v) != first) else {
            return;
        };
        // bridge from a source of one component to a deeper node of the other
        let (src, dst) = if layer_of[stranded] > 0 {
            let source = layers[0]
                .iter()
                .copied()
                .find(|&v| find(&mut dsu, v) == first)
                .expect("every weak component reaches layer 0");
            (source, stranded)
        } else {
            let deeper = (0..m)
                .find(|&v| find(&mut dsu, v) == first && layer_of[v] > 0)
                .expect("connected part spans beyond layer 0 when d >= 2");
            (stranded, deeper)
        };
        edges.insert((src, dst));
        let (ra, rb) = (find(&mut dsu, src), find(&mut dsu, dst));
        dsu[ra] = rb;
    }
}

/// The full arrival stream, in arrival order.
pub fn generate_stream(cfg: &WorkloadConfig) -> Result<Vec<AppRequest>> {
    (0..cfg.n_requests)
        .map(|i| generate_request(cfg, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_config() {
        let cfg = WorkloadConfig {
            depth_range: (1, 1),
            components_range: (1, 1),
            parallelism_range: (1, 1),
            ..WorkloadConfig::default()
        };
        let req = generate_request(&cfg, 0).unwrap();
        assert_eq!(req.components.len(), 1);
        assert!(req.edges.is_empty());
        assert_eq!(req.instances.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = WorkloadConfig::default();
        let a = generate_request(&cfg, 3).unwrap();
        let b = generate_request(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_request(&cfg, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_stream() {
        let cfg = WorkloadConfig {
            n_requests: 0,
            ..WorkloadConfig::default()
        };
        assert!(generate_stream(&cfg).unwrap().is_empty());
    }

    #[test]
    fn stream_requests_all_validate() {
        let cfg = WorkloadConfig {
            n_requests: 50,
            seed: 9,
            ..WorkloadConfig::default()
        };
        let stream = generate_stream(&cfg).unwrap();
        assert_eq!(stream.len(), 50);
        for (i, req) in stream.iter().enumerate() {
            assert_eq!(req.id, i);
            req.validate().unwrap();
        }
    }

    /// Longest directed path length in edges over the component graph.
    fn longest_path(req: &AppRequest) -> usize {
        let n = req.components.len();
        let mut depth = vec![0usize; n];
        // edges always point from a smaller layer to a larger one, but not
        // necessarily from smaller id; iterate to a fixed point
        let mut changed = true;
        while changed {
            changed = false;
            for e in &req.edges {
                if depth[e.dst] < depth[e.src] + 1 {
                    depth[e.dst] = depth[e.src] + 1;
                    changed = true;
                }
            }
        }
        depth.into_iter().max().unwrap_or(0)
    }

    fn weakly_connected(req: &AppRequest) -> bool {
        let n = req.components.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for e in &req.edges {
                for w in [e.src, e.dst] {
                    if (e.src == v || e.dst == v) && !seen[w] {
                        seen[w] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
        }
        count == n
    }

    #[test]
    fn topology_shape_over_many_seeds() {
        let base = WorkloadConfig::default();
        for seed in 0..1000 {
            let cfg = WorkloadConfig { seed, ..base.clone() };
            let req = generate_request(&cfg, 0).unwrap();
            req.validate().unwrap();
            let m = req.components.len();
            assert!((3..=6).contains(&m));
            let depth_edges = longest_path(&req);
            // depth in nodes lies within the configured range, capped by m
            assert!(depth_edges + 1 >= 3 && depth_edges < 5.min(m));
            assert!(weakly_connected(&req), "seed {seed} built a disconnected DAG");
            for c in &req.components {
                assert!((2..=6).contains(&c.parallelism));
            }
            for inst in &req.instances {
                assert!((2.0..=6.0).contains(&inst.demand[0]));
                assert!((4.0..=8.0).contains(&inst.demand[1]));
            }
            for e in &req.edges {
                assert!((1.0..=10.0).contains(&e.rate));
            }
        }
    }

    #[test]
    fn container_budget_matches_policy() {
        let cfg = WorkloadConfig { seed: 21, ..WorkloadConfig::default() };
        let req = generate_request(&cfg, 5).unwrap();
        let cap = req.container_capacity().unwrap();
        let max_c = req.instances.iter().map(|i| i.demand[0]).fold(0.0, f64::max);
        let max_m = req.instances.iter().map(|i| i.demand[1]).fold(0.0, f64::max);
        assert_eq!(cap[0], (2.0 * max_c).ceil());
        assert_eq!(cap[1], (2.0 * max_m).ceil());
        let total_c: f64 = req.instances.iter().map(|i| i.demand[0]).sum();
        let total_m: f64 = req.instances.iter().map(|i| i.demand[1]).sum();
        let bound = ((total_c / cap[0]).ceil() as usize).max((total_m / cap[1]).ceil() as usize);
        assert_eq!(req.containers.len(), bound + 1);
    }

    #[test]
    fn component_count_histogram_is_uniform() {
        // chi-square against uniform over {3,4,5,6} at the 5% level
        // (3 degrees of freedom, critical value 7.815)
        let cfg = WorkloadConfig {
            n_requests: 2000,
            seed: 1234,
            ..WorkloadConfig::default()
        };
        let mut counts = [0usize; 4];
        for req in generate_stream(&cfg).unwrap() {
            counts[req.components.len() - 3] += 1;
        }
        let expected = 2000.0 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        assert!(chi2 < 7.815, "chi-square {chi2} rejects uniformity: {counts:?}");
    }

    #[test]
    fn inconsistent_ranges_rejected() {
        let cfg = WorkloadConfig {
            depth_range: (4, 5),
            components_range: (3, 6),
            ..WorkloadConfig::default()
        };
        assert!(matches!(
            generate_request(&cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
        let cfg = WorkloadConfig {
            depth_range: (1, 3),
            components_range: (1, 4),
            ..WorkloadConfig::default()
        };
        assert!(matches!(
            generate_request(&cfg, 0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
