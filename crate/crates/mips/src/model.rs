//! Domain types for clusters, streaming applications, instances, containers,
//! and the two placement decisions, plus validation and request expansion.
//!
//! All quantities are real-valued. Capacity comparisons use an absolute
//! tolerance of [`RESOURCE_EPSILON`]; on integral inputs this coincides with
//! exact comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for resource and objective comparisons.
pub const RESOURCE_EPSILON: f64 = 1e-9;

/// A K-dimensional vector of nonnegative resource quantities
/// (by default K=2: CPU cores, memory GB).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(Vec<f64>);

impl ResourceVector {
    pub fn new(quantities: Vec<f64>) -> Result<Self> {
        if quantities.iter().any(|&q| !q.is_finite() || q < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resource quantities must be finite and nonnegative, got {quantities:?}"
            )));
        }
        Ok(Self(quantities))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Componentwise partial order: `self` ⪯ `other` within tolerance.
    pub fn fits_within(&self, other: &Self) -> bool {
        assert_eq!(self.dim(), other.dim(), "resource dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .all(|(a, b)| *a <= *b + RESOURCE_EPSILON)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&q| q > 0.0)
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "resource dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }

    /// Componentwise subtraction, clamping float dust in [-ε, 0) to zero.
    /// Panics if any entry would go more than ε negative; callers must
    /// validate feasibility first.
    pub fn sub_assign_clamped(&mut self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "resource dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            let next = *a - *b;
            assert!(
                next >= -RESOURCE_EPSILON,
                "resource underflow: {a} - {b} (validate before committing)"
            );
            *a = next.max(0.0);
        }
    }

    pub fn euclidean_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "resource dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for ResourceVector {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// A cluster server with a fixed resource capacity Γ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Server {
    pub id: usize,
    pub capacity: ResourceVector,
}

/// A logical processing unit of an application; runs as `parallelism`
/// parallel instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: usize,
    pub parallelism: usize,
}

/// A directed data stream between two components with traffic rate w(e).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamEdge {
    pub src: usize,
    pub dst: usize,
    pub rate: f64,
}

/// One executable replica of a component with a resource demand d(i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub component: usize,
    pub demand: ResourceVector,
}

/// A resource-bounded unit hosting instances; the unit submitted to the
/// cluster scheduler in stage two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub id: usize,
    pub capacity: ResourceVector,
}

/// One application deployment request: a DAG of components with expanded
/// instances and a container budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRequest {
    pub id: usize,
    pub components: Vec<Component>,
    pub edges: Vec<StreamEdge>,
    pub instances: Vec<Instance>,
    pub containers: Vec<Container>,
}

impl AppRequest {
    /// Builds a request by expanding each component into `parallelism`
    /// instances sharing the component's demand, and allocating
    /// `container_count` identical containers.
    pub fn expand(
        id: usize,
        components: Vec<(usize, ResourceVector)>,
        edges: Vec<StreamEdge>,
        container_count: usize,
        container_capacity: ResourceVector,
    ) -> Result<Self> {
        let mut comps = Vec::with_capacity(components.len());
        let mut instances = Vec::new();
        for (cid, (parallelism, demand)) in components.into_iter().enumerate() {
            comps.push(Component {
                id: cid,
                parallelism,
            });
            for _ in 0..parallelism {
                instances.push(Instance {
                    id: instances.len(),
                    component: cid,
                    demand: demand.clone(),
                });
            }
        }
        let containers = (0..container_count)
            .map(|cid| Container {
                id: cid,
                capacity: container_capacity.clone(),
            })
            .collect();
        let req = Self {
            id,
            components: comps,
            edges,
            instances,
            containers,
        };
        req.validate()?;
        Ok(req)
    }

    /// Structural validation: ids consistent, edges form a DAG, every
    /// component has exactly `parallelism` instances, containers identical,
    /// and no single instance exceeds the container capacity (the latter is
    /// reported as the distinct [`Error::OversizedInstance`] intake verdict).
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.components.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidRequest(format!(
                    "component ids must be dense and ordered, got {} at {i}",
                    c.id
                )));
            }
            if c.parallelism == 0 {
                return Err(Error::InvalidRequest(format!(
                    "component {i} has parallelism 0"
                )));
            }
        }
        for e in &self.edges {
            if e.src == e.dst {
                return Err(Error::InvalidRequest(format!(
                    "self-loop on component {}",
                    e.src
                )));
            }
            if e.src >= self.components.len() || e.dst >= self.components.len() {
                return Err(Error::InvalidRequest(format!(
                    "edge ({}, {}) references unknown component",
                    e.src, e.dst
                )));
            }
            if !e.rate.is_finite() || e.rate < 0.0 {
                return Err(Error::InvalidRequest(format!(
                    "edge ({}, {}) has invalid rate {}",
                    e.src, e.dst, e.rate
                )));
            }
        }
        if !self.is_dag() {
            return Err(Error::InvalidRequest("stream edges contain a cycle".into()));
        }

        let mut counts = vec![0usize; self.components.len()];
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.id != i {
                return Err(Error::InvalidRequest(format!(
                    "instance ids must be dense and ordered, got {} at {i}",
                    inst.id
                )));
            }
            if inst.component >= self.components.len() {
                return Err(Error::InvalidRequest(format!(
                    "instance {i} references unknown component {}",
                    inst.component
                )));
            }
            counts[inst.component] += 1;
        }
        for c in &self.components {
            if counts[c.id] != c.parallelism {
                return Err(Error::InvalidRequest(format!(
                    "component {} has {} instances, expected parallelism {}",
                    c.id, counts[c.id], c.parallelism
                )));
            }
        }

        for (i, c) in self.containers.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidRequest(format!(
                    "container ids must be dense and ordered, got {} at {i}",
                    c.id
                )));
            }
            if !c.capacity.is_strictly_positive() {
                return Err(Error::InvalidRequest(format!(
                    "container {i} capacity must be strictly positive"
                )));
            }
            if c.capacity != self.containers[0].capacity {
                return Err(Error::InvalidRequest(
                    "containers of one request must share identical capacity".into(),
                ));
            }
        }
        if !self.containers.is_empty() {
            let cap = &self.containers[0].capacity;
            for inst in &self.instances {
                if !inst.demand.fits_within(cap) {
                    return Err(Error::OversizedInstance {
                        request: self.id,
                        instance: inst.id,
                    });
                }
            }
        } else if !self.instances.is_empty() {
            return Err(Error::InvalidRequest(
                "request has instances but no containers".into(),
            ));
        }
        Ok(())
    }

    fn is_dag(&self) -> bool {
        // Kahn's algorithm over the component graph.
        let n = self.components.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            indeg[e.dst] += 1;
            out[e.src].push(e.dst);
        }
        let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push(w);
                }
            }
        }
        seen == n
    }

    /// Rate of the directed stream (v1, v2) if present.
    pub fn edge_rate(&self, v1: usize, v2: usize) -> Option<f64> {
        self.edges
            .iter()
            .find(|e| e.src == v1 && e.dst == v2)
            .map(|e| e.rate)
    }

    /// Sum of all stream rates, an upper bound on cross-container traffic.
    pub fn total_edge_rate(&self) -> f64 {
        self.edges.iter().map(|e| e.rate).sum()
    }

    pub fn container_capacity(&self) -> Option<&ResourceVector> {
        self.containers.first().map(|c| &c.capacity)
    }
}

/// Per-instance traffic rate under the even-spread assumption:
/// w(i1, i2) = w(v(i1), v(i2)) / (p(v(i1)) · p(v(i2))), directed;
/// zero for instances of non-adjacent components.
pub fn instance_traffic_rate(req: &AppRequest, i1: usize, i2: usize) -> Result<f64> {
    let a = req
        .instances
        .get(i1)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown instance id {i1}")))?;
    let b = req
        .instances
        .get(i2)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown instance id {i2}")))?;
    match req.edge_rate(a.component, b.component) {
        Some(rate) => {
            let p1 = req.components[a.component].parallelism as f64;
            let p2 = req.components[b.component].parallelism as f64;
            Ok(rate / (p1 * p2))
        }
        None => Ok(0.0),
    }
}

/// Stage-one decision: instance → container (the nonzero entries of X).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcmpAssignment {
    pub request: usize,
    pub placement: BTreeMap<usize, usize>,
}

impl IcmpAssignment {
    pub fn empty(request: usize) -> Self {
        Self {
            request,
            placement: BTreeMap::new(),
        }
    }

    /// Ids of containers hosting at least one instance.
    pub fn used_containers(&self) -> BTreeSet<usize> {
        self.placement.values().copied().collect()
    }
}

/// Stage-two decision: container → server (the nonzero entries of Y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsmpAssignment {
    pub request: usize,
    pub placement: BTreeMap<usize, usize>,
}

impl CsmpAssignment {
    pub fn empty(request: usize) -> Self {
        Self {
            request,
            placement: BTreeMap::new(),
        }
    }
}

/// The first constraint violated by an assignment, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    UnknownInstance { instance: usize },
    UnknownContainer { container: usize },
    UnknownServer { server: usize },
    ContainerOverCapacity { container: usize },
    ServerOverCapacity { server: usize },
    UnmappedInstance { instance: usize },
    UnmappedContainer { container: usize },
}

/// Feasibility is a verdict, not an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    Infeasible(Violation),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }
}

/// Checks an instance-container mapping: referenced ids exist, per-container
/// load stays within capacity, and (unless `partial`) every instance is
/// mapped exactly once.
pub fn validate_icmp(req: &AppRequest, a: &IcmpAssignment, partial: bool) -> Verdict {
    for (&i, &c) in &a.placement {
        if i >= req.instances.len() {
            return Verdict::Infeasible(Violation::UnknownInstance { instance: i });
        }
        if c >= req.containers.len() {
            return Verdict::Infeasible(Violation::UnknownContainer { container: c });
        }
    }
    let dim = req
        .container_capacity()
        .map(|c| c.dim())
        .unwrap_or_default();
    let mut load = vec![ResourceVector::zeros(dim); req.containers.len()];
    for (&i, &c) in &a.placement {
        load[c].add_assign(&req.instances[i].demand);
    }
    for c in &req.containers {
        if !load[c.id].fits_within(&c.capacity) {
            return Verdict::Infeasible(Violation::ContainerOverCapacity { container: c.id });
        }
    }
    if !partial {
        for inst in &req.instances {
            if !a.placement.contains_key(&inst.id) {
                return Verdict::Infeasible(Violation::UnmappedInstance { instance: inst.id });
            }
        }
    }
    Verdict::Feasible
}

/// Checks a container-server mapping against the cluster's free resources.
/// With `partial == false`, every container must be mapped; when `icmp` is
/// given, only containers holding at least one instance are required.
pub fn validate_csmp(
    state: &ClusterState,
    req: &AppRequest,
    icmp: Option<&IcmpAssignment>,
    a: &CsmpAssignment,
    partial: bool,
) -> Verdict {
    for (&c, &s) in &a.placement {
        if c >= req.containers.len() {
            return Verdict::Infeasible(Violation::UnknownContainer { container: c });
        }
        if s >= state.servers.len() {
            return Verdict::Infeasible(Violation::UnknownServer { server: s });
        }
    }
    let dim = state.resource_dim();
    let mut extra = vec![ResourceVector::zeros(dim); state.servers.len()];
    for (&c, &s) in &a.placement {
        extra[s].add_assign(&req.containers[c].capacity);
    }
    for s in &state.servers {
        if !extra[s.id].fits_within(state.free(s.id)) {
            return Verdict::Infeasible(Violation::ServerOverCapacity { server: s.id });
        }
    }
    if !partial {
        let required: BTreeSet<usize> = match icmp {
            Some(x) => x.used_containers(),
            None => req.containers.iter().map(|c| c.id).collect(),
        };
        for c in required {
            if !a.placement.contains_key(&c) {
                return Verdict::Infeasible(Violation::UnmappedContainer { container: c });
            }
        }
    }
    Verdict::Feasible
}

/// Servers, the hop-cost matrix θ, and the containers committed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub servers: Vec<Server>,
    /// θ[s][s']: shortest-path hop count between servers, symmetric with
    /// zero diagonal.
    pub hop_cost: Vec<Vec<f64>>,
    /// Capacities of containers already deployed, per server.
    pub committed: Vec<Vec<ResourceVector>>,
    free: Vec<ResourceVector>,
}

impl ClusterState {
    pub fn new(servers: Vec<Server>, hop_cost: Vec<Vec<f64>>) -> Result<Self> {
        let n = servers.len();
        if hop_cost.len() != n || hop_cost.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "hop cost matrix must be {n}x{n}"
            )));
        }
        for (i, row) in hop_cost.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "hop cost [{i}][{j}] = {v} must be finite and nonnegative"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "hop cost diagonal [{i}][{i}] must be zero"
                    )));
                }
                if hop_cost[j][i] != v {
                    return Err(Error::InvalidArgument(format!(
                        "hop cost matrix must be symmetric, [{i}][{j}] != [{j}][{i}]"
                    )));
                }
            }
        }
        for (i, s) in servers.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidArgument(format!(
                    "server ids must be dense and ordered, got {} at {i}",
                    s.id
                )));
            }
            if !s.capacity.is_strictly_positive() {
                return Err(Error::InvalidArgument(format!(
                    "server {i} capacity must be strictly positive"
                )));
            }
        }
        let free = servers.iter().map(|s| s.capacity.clone()).collect();
        let committed = vec![Vec::new(); n];
        Ok(Self {
            servers,
            hop_cost,
            committed,
            free,
        })
    }

    pub fn resource_dim(&self) -> usize {
        self.servers.first().map(|s| s.capacity.dim()).unwrap_or(0)
    }

    /// Remaining capacity of server `s` (Γ_s minus committed containers).
    pub fn free(&self, s: usize) -> &ResourceVector {
        &self.free[s]
    }

    pub fn theta(&self, s1: usize, s2: usize) -> f64 {
        self.hop_cost[s1][s2]
    }
}

/// Enforces a validated two-stage deployment, returning the updated cluster
/// state; the input state is left untouched. Both assignments must be
/// complete and feasible, and the stage-two mapping must cover exactly the
/// containers that host instances.
pub fn commit(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    csmp: &CsmpAssignment,
) -> Result<ClusterState> {
    if let Verdict::Infeasible(v) = validate_icmp(req, icmp, false) {
        return Err(Error::ContractViolation(format!(
            "commit of infeasible instance mapping: {v:?}"
        )));
    }
    let used = icmp.used_containers();
    for &c in csmp.placement.keys() {
        if !used.contains(&c) {
            return Err(Error::ContractViolation(format!(
                "commit maps empty container {c}"
            )));
        }
    }
    if let Verdict::Infeasible(v) = validate_csmp(state, req, Some(icmp), csmp, false) {
        return Err(Error::ContractViolation(format!(
            "commit of infeasible container mapping: {v:?}"
        )));
    }
    let mut next = state.clone();
    for (&c, &s) in &csmp.placement {
        let cap = req.containers[c].capacity.clone();
        next.free[s].sub_assign_clamped(&cap);
        next.committed[s].push(cap);
    }
    Ok(next)
}
