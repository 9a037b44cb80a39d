//! Objective functions for both mapping stages, incremental deltas for
//! greedy rollouts, and exhaustive oracles for small instances.
//!
//! Stage one minimizes `alpha * T(X) + (1 - alpha) * U(X)` where T is the
//! cross-container traffic and U the number of utilized containers; stage
//! two minimizes the hop-weighted cross-server traffic W(Y). Streams are
//! directed and all double sums run over ordered pairs. Intra-container
//! traffic is excluded from T: counting it would make T a constant
//! independent of the mapping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AppRequest, ClusterState, CsmpAssignment, IcmpAssignment, ResourceVector, RESOURCE_EPSILON,
};

/// Default cap on the enumeration size of the brute-force oracles.
pub const DEFAULT_BRUTE_FORCE_CAP: f64 = 1e7;

/// Weight of traffic reduction versus container utilization in the
/// stage-one objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub alpha: f64,
}

impl ObjectiveConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// Directed traffic from container `c1` into container `c2`: the sum of
/// per-instance rates over mapped instance pairs.
pub fn container_pair_traffic(
    req: &AppRequest,
    icmp: &IcmpAssignment,
    c1: usize,
    c2: usize,
) -> Result<f64> {
    if c1 == c2 {
        return Err(Error::InvalidArgument(
            "intra-container traffic is excluded; container pair must differ".into(),
        ));
    }
    let mut total = 0.0;
    for e in &req.edges {
        let p1 = req.components[e.src].parallelism as f64;
        let p2 = req.components[e.dst].parallelism as f64;
        let rate = e.rate / (p1 * p2);
        for i in req.instances.iter().filter(|i| i.component == e.src) {
            if icmp.placement.get(&i.id) != Some(&c1) {
                continue;
            }
            for j in req.instances.iter().filter(|j| j.component == e.dst) {
                if icmp.placement.get(&j.id) == Some(&c2) {
                    total += rate;
                }
            }
        }
    }
    Ok(total)
}

/// Total cross-container traffic T(X): streams between instances mapped to
/// different containers. Unmapped instances contribute nothing.
pub fn cross_container_traffic(req: &AppRequest, icmp: &IcmpAssignment) -> f64 {
    let mut total = 0.0;
    for e in &req.edges {
        let p1 = req.components[e.src].parallelism as f64;
        let p2 = req.components[e.dst].parallelism as f64;
        let rate = e.rate / (p1 * p2);
        for i in req.instances.iter().filter(|i| i.component == e.src) {
            let Some(&ci) = icmp.placement.get(&i.id) else {
                continue;
            };
            for j in req.instances.iter().filter(|j| j.component == e.dst) {
                if let Some(&cj) = icmp.placement.get(&j.id) {
                    if ci != cj {
                        total += rate;
                    }
                }
            }
        }
    }
    total
}

/// U(X): the number of containers hosting at least one mapped instance.
pub fn container_utilization(req: &AppRequest, icmp: &IcmpAssignment) -> usize {
    let _ = req;
    icmp.used_containers().len()
}

/// Stage-one objective: `alpha * T + (1 - alpha) * U`, raw values.
pub fn icmp_objective(req: &AppRequest, icmp: &IcmpAssignment, cfg: &ObjectiveConfig) -> f64 {
    cfg.alpha * cross_container_traffic(req, icmp)
        + (1.0 - cfg.alpha) * container_utilization(req, icmp) as f64
}

/// Cost between one ordered server pair: θ(s1, s2) times the traffic of all
/// container pairs mapped to (s1, s2).
pub fn csmp_pair_cost(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    csmp: &CsmpAssignment,
    s1: usize,
    s2: usize,
) -> f64 {
    let theta = state.theta(s1, s2);
    if theta == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (&c1, &sc1) in &csmp.placement {
        if sc1 != s1 {
            continue;
        }
        for (&c2, &sc2) in &csmp.placement {
            if sc2 != s2 || c1 == c2 {
                continue;
            }
            total += container_pair_traffic(req, icmp, c1, c2).expect("distinct containers");
        }
    }
    theta * total
}

/// Stage-two objective W(Y): total hop-weighted cross-server traffic, summed
/// over all ordered server pairs.
pub fn csmp_objective(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    csmp: &CsmpAssignment,
) -> f64 {
    let mut total = 0.0;
    for (&c1, &s1) in &csmp.placement {
        for (&c2, &s2) in &csmp.placement {
            if c1 == c2 {
                continue;
            }
            let theta = state.theta(s1, s2);
            if theta > 0.0 {
                total +=
                    theta * container_pair_traffic(req, icmp, c1, c2).expect("distinct containers");
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Incremental evaluation
// ---------------------------------------------------------------------------

/// Per-request precomputation for fast incremental stage-one evaluation.
#[derive(Debug, Clone)]
pub struct IcmpContext {
    pub alpha: f64,
    demands: Vec<ResourceVector>,
    capacities: Vec<ResourceVector>,
    /// For each instance, the traffic-linked peers with the combined rate
    /// w(i, j) + w(j, i).
    adjacency: Vec<Vec<(usize, f64)>>,
    total_rate: f64,
}

/// A partial instance-container mapping with running objective terms.
/// Cheap to clone; all bookkeeping is updated in O(degree) per placement.
#[derive(Debug, Clone)]
pub struct IcmpPartial {
    pub assigned: Vec<Option<u32>>,
    load: Vec<ResourceVector>,
    members: Vec<u32>,
    pub cross_traffic: f64,
    pub used: u32,
    pub placed: u32,
}

impl IcmpContext {
    pub fn new(req: &AppRequest, cfg: &ObjectiveConfig) -> Self {
        let n = req.instances.len();
        let mut by_component: Vec<Vec<usize>> = vec![Vec::new(); req.components.len()];
        for inst in &req.instances {
            by_component[inst.component].push(inst.id);
        }
        let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for e in &req.edges {
            let p1 = req.components[e.src].parallelism as f64;
            let p2 = req.components[e.dst].parallelism as f64;
            let rate = e.rate / (p1 * p2);
            for &i in &by_component[e.src] {
                for &j in &by_component[e.dst] {
                    adjacency[i].push((j, rate));
                    adjacency[j].push((i, rate));
                }
            }
        }
        Self {
            alpha: cfg.alpha,
            demands: req.instances.iter().map(|i| i.demand.clone()).collect(),
            capacities: req.containers.iter().map(|c| c.capacity.clone()).collect(),
            adjacency,
            total_rate: req.total_edge_rate(),
        }
    }

    pub fn instance_count(&self) -> usize {
        self.demands.len()
    }

    pub fn container_count(&self) -> usize {
        self.capacities.len()
    }

    pub fn empty_partial(&self) -> IcmpPartial {
        let dim = self
            .demands
            .first()
            .or(self.capacities.first())
            .map(|v| v.dim())
            .unwrap_or(0);
        IcmpPartial {
            assigned: vec![None; self.demands.len()],
            load: vec![ResourceVector::zeros(dim); self.capacities.len()],
            members: vec![0; self.capacities.len()],
            cross_traffic: 0.0,
            used: 0,
            placed: 0,
        }
    }

    /// Reconstructs the running state of an existing (feasible) partial map.
    pub fn from_assignment(&self, icmp: &IcmpAssignment) -> Result<IcmpPartial> {
        let mut p = self.empty_partial();
        for (&i, &c) in &icmp.placement {
            if i >= self.instance_count() || c >= self.container_count() {
                return Err(Error::InvalidArgument(format!(
                    "assignment entry ({i} -> {c}) out of range"
                )));
            }
            if !self.action_feasible(&p, i, c) {
                return Err(Error::ContractViolation(format!(
                    "partial assignment is infeasible at instance {i} -> container {c}"
                )));
            }
            self.place(&mut p, i, c);
        }
        Ok(p)
    }

    pub fn action_feasible(&self, p: &IcmpPartial, instance: usize, container: usize) -> bool {
        if p.assigned[instance].is_some() {
            return false;
        }
        let mut load = p.load[container].clone();
        load.add_assign(&self.demands[instance]);
        load.fits_within(&self.capacities[container])
    }

    /// Objective change of placing `instance` into `container`, in
    /// O(degree). The action must be feasible.
    pub fn delta(&self, p: &IcmpPartial, instance: usize, container: usize) -> f64 {
        let mut traffic = 0.0;
        for &(peer, rate) in &self.adjacency[instance] {
            if let Some(pc) = p.assigned[peer] {
                if pc as usize != container {
                    traffic += rate;
                }
            }
        }
        let opens = if p.members[container] == 0 { 1.0 } else { 0.0 };
        self.alpha * traffic + (1.0 - self.alpha) * opens
    }

    /// Applies the action, returning the objective delta it incurred.
    pub fn place(&self, p: &mut IcmpPartial, instance: usize, container: usize) -> f64 {
        let delta = self.delta(p, instance, container);
        let mut traffic = 0.0;
        for &(peer, rate) in &self.adjacency[instance] {
            if let Some(pc) = p.assigned[peer] {
                if pc as usize != container {
                    traffic += rate;
                }
            }
        }
        p.cross_traffic += traffic;
        if p.members[container] == 0 {
            p.used += 1;
        }
        p.members[container] += 1;
        p.load[container].add_assign(&self.demands[instance]);
        p.assigned[instance] = Some(container as u32);
        p.placed += 1;
        delta
    }

    pub fn objective(&self, p: &IcmpPartial) -> f64 {
        self.alpha * p.cross_traffic + (1.0 - self.alpha) * p.used as f64
    }

    pub fn is_complete(&self, p: &IcmpPartial) -> bool {
        p.placed as usize == self.instance_count()
    }

    /// Full constraint re-check for a complete mapping.
    pub fn complete_and_feasible(&self, p: &IcmpPartial) -> bool {
        self.is_complete(p)
            && p.load
                .iter()
                .zip(&self.capacities)
                .all(|(load, cap)| load.fits_within(cap))
    }

    /// Capacity left in `container` under the partial mapping.
    pub fn remaining_capacity(&self, p: &IcmpPartial, container: usize) -> ResourceVector {
        let mut free = self.capacities[container].clone();
        free.sub_assign_clamped(&p.load[container]);
        free
    }

    /// Whether `container` already hosts an instance exchanging traffic
    /// with `instance`.
    pub fn has_linked_peer_in(
        &self,
        p: &IcmpPartial,
        instance: usize,
        container: usize,
    ) -> bool {
        self.adjacency[instance]
            .iter()
            .any(|&(peer, _)| p.assigned[peer] == Some(container as u32))
    }

    /// Upper bound on any stage-one leaf cost:
    /// `alpha * total rate + (1 - alpha) * |containers|`.
    pub fn cost_upper_bound(&self) -> f64 {
        self.alpha * self.total_rate + (1.0 - self.alpha) * self.container_count() as f64
    }

    pub fn to_assignment(&self, p: &IcmpPartial, request: usize) -> IcmpAssignment {
        let mut a = IcmpAssignment::empty(request);
        for (i, c) in p.assigned.iter().enumerate() {
            if let Some(c) = c {
                a.placement.insert(i, *c as usize);
            }
        }
        a
    }
}

/// Objective change of mapping `instance` into `container` from a feasible
/// partial assignment, without full re-evaluation.
pub fn icmp_delta(
    req: &AppRequest,
    partial_icmp: &IcmpAssignment,
    instance: usize,
    container: usize,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    let ctx = IcmpContext::new(req, cfg);
    let p = ctx.from_assignment(partial_icmp)?;
    if instance >= ctx.instance_count() || container >= ctx.container_count() {
        return Err(Error::InvalidArgument(format!(
            "action ({instance} -> {container}) out of range"
        )));
    }
    if !ctx.action_feasible(&p, instance, container) {
        return Err(Error::ContractViolation(format!(
            "action ({instance} -> {container}) is infeasible from this partial assignment"
        )));
    }
    Ok(ctx.delta(&p, instance, container))
}

/// Per-request precomputation for fast incremental stage-two evaluation
/// over the containers actually holding instances.
#[derive(Debug, Clone)]
pub struct CsmpContext<'a> {
    state: &'a ClusterState,
    /// Original container ids, ascending; stage-two items are indices into
    /// this list.
    pub used_containers: Vec<usize>,
    capacities: Vec<ResourceVector>,
    /// Directed traffic between used containers, indexed by position in
    /// `used_containers`.
    pair_traffic: Vec<Vec<f64>>,
}

/// A partial container-server mapping with running cost.
#[derive(Debug, Clone)]
pub struct CsmpPartial {
    pub assigned: Vec<Option<u32>>,
    free: Vec<ResourceVector>,
    pub cost: f64,
    pub placed: u32,
}

impl<'a> CsmpContext<'a> {
    pub fn new(state: &'a ClusterState, req: &AppRequest, icmp: &IcmpAssignment) -> Self {
        let used: Vec<usize> = icmp.used_containers().into_iter().collect();
        let index_of = |c: usize| used.binary_search(&c).ok();
        let m = used.len();
        let mut pair_traffic = vec![vec![0.0; m]; m];
        let mut by_component: Vec<Vec<usize>> = vec![Vec::new(); req.components.len()];
        for inst in &req.instances {
            by_component[inst.component].push(inst.id);
        }
        for e in &req.edges {
            let p1 = req.components[e.src].parallelism as f64;
            let p2 = req.components[e.dst].parallelism as f64;
            let rate = e.rate / (p1 * p2);
            for &i in &by_component[e.src] {
                let Some(ci) = icmp.placement.get(&i).and_then(|&c| index_of(c)) else {
                    continue;
                };
                for &j in &by_component[e.dst] {
                    let Some(cj) = icmp.placement.get(&j).and_then(|&c| index_of(c)) else {
                        continue;
                    };
                    if ci != cj {
                        pair_traffic[ci][cj] += rate;
                    }
                }
            }
        }
        let capacities = used
            .iter()
            .map(|&c| req.containers[c].capacity.clone())
            .collect();
        Self {
            state,
            used_containers: used,
            capacities,
            pair_traffic,
        }
    }

    pub fn item_count(&self) -> usize {
        self.used_containers.len()
    }

    pub fn server_count(&self) -> usize {
        self.state.servers.len()
    }

    pub fn empty_partial(&self) -> CsmpPartial {
        CsmpPartial {
            assigned: vec![None; self.item_count()],
            free: (0..self.server_count())
                .map(|s| self.state.free(s).clone())
                .collect(),
            cost: 0.0,
            placed: 0,
        }
    }

    pub fn from_assignment(&self, csmp: &CsmpAssignment) -> Result<CsmpPartial> {
        let mut p = self.empty_partial();
        for (&c, &s) in &csmp.placement {
            let idx = self.used_containers.binary_search(&c).map_err(|_| {
                Error::InvalidArgument(format!("container {c} is not part of this stage"))
            })?;
            if s >= self.server_count() {
                return Err(Error::InvalidArgument(format!("unknown server {s}")));
            }
            if !self.action_feasible(&p, idx, s) {
                return Err(Error::ContractViolation(format!(
                    "partial assignment is infeasible at container {c} -> server {s}"
                )));
            }
            self.place(&mut p, idx, s);
        }
        Ok(p)
    }

    pub fn action_feasible(&self, p: &CsmpPartial, item: usize, server: usize) -> bool {
        p.assigned[item].is_none() && self.capacities[item].fits_within(&p.free[server])
    }

    /// Free resources of `server` under the partial mapping, including
    /// containers of this request placed so far.
    pub fn remaining_free(&self, p: &CsmpPartial, server: usize) -> ResourceVector {
        p.free[server].clone()
    }

    /// Cost change of mapping used-container `item` onto `server`: the
    /// hop-weighted traffic toward every already-placed container, both
    /// directions.
    pub fn delta(&self, p: &CsmpPartial, item: usize, server: usize) -> f64 {
        let mut cost = 0.0;
        for (other, assigned) in p.assigned.iter().enumerate() {
            if let Some(os) = assigned {
                let theta = self.state.theta(server, *os as usize);
                if theta > 0.0 {
                    cost += theta
                        * (self.pair_traffic[item][other] + self.pair_traffic[other][item]);
                }
            }
        }
        cost
    }

    pub fn place(&self, p: &mut CsmpPartial, item: usize, server: usize) -> f64 {
        let delta = self.delta(p, item, server);
        p.cost += delta;
        p.free[server].sub_assign_clamped(&self.capacities[item]);
        p.assigned[item] = Some(server as u32);
        p.placed += 1;
        delta
    }

    pub fn objective(&self, p: &CsmpPartial) -> f64 {
        p.cost
    }

    pub fn is_complete(&self, p: &CsmpPartial) -> bool {
        p.placed as usize == self.item_count()
    }

    /// Full constraint re-check: complete, and no server's free resources
    /// are exceeded.
    pub fn complete_and_feasible(&self, p: &CsmpPartial) -> bool {
        if !self.is_complete(p) {
            return false;
        }
        let dim = self.state.resource_dim();
        let mut extra = vec![ResourceVector::zeros(dim); self.server_count()];
        for (item, assigned) in p.assigned.iter().enumerate() {
            if let Some(s) = assigned {
                extra[*s as usize].add_assign(&self.capacities[item]);
            }
        }
        (0..self.server_count()).all(|s| extra[s].fits_within(self.state.free(s)))
    }

    /// Upper bound on any stage-two leaf cost: total pair traffic times the
    /// largest hop cost.
    pub fn cost_upper_bound(&self) -> f64 {
        let total: f64 = self.pair_traffic.iter().flatten().sum();
        let theta_max = self
            .state
            .hop_cost
            .iter()
            .flatten()
            .cloned()
            .fold(0.0, f64::max);
        total * theta_max
    }

    /// Whether two used containers exchange any traffic.
    pub fn pair_linked(&self, a: usize, b: usize) -> bool {
        self.pair_traffic[a][b] > 0.0 || self.pair_traffic[b][a] > 0.0
    }

    pub fn to_assignment(&self, p: &CsmpPartial, request: usize) -> CsmpAssignment {
        let mut a = CsmpAssignment::empty(request);
        for (idx, s) in p.assigned.iter().enumerate() {
            if let Some(s) = s {
                a.placement.insert(self.used_containers[idx], *s as usize);
            }
        }
        a
    }
}

/// Cost change of mapping `container` onto `server` from a feasible partial
/// stage-two assignment.
pub fn csmp_delta(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    partial_csmp: &CsmpAssignment,
    container: usize,
    server: usize,
) -> Result<f64> {
    let ctx = CsmpContext::new(state, req, icmp);
    let p = ctx.from_assignment(partial_csmp)?;
    let idx = ctx.used_containers.binary_search(&container).map_err(|_| {
        Error::InvalidArgument(format!("container {container} holds no instances"))
    })?;
    if server >= ctx.server_count() {
        return Err(Error::InvalidArgument(format!("unknown server {server}")));
    }
    if !ctx.action_feasible(&p, idx, server) {
        return Err(Error::ContractViolation(format!(
            "action ({container} -> {server}) is infeasible from this partial assignment"
        )));
    }
    Ok(ctx.delta(&p, idx, server))
}

// ---------------------------------------------------------------------------
// Brute-force oracles
// ---------------------------------------------------------------------------

/// Exhaustive stage-one optimum with the default enumeration cap.
pub fn brute_force_icmp(req: &AppRequest, cfg: &ObjectiveConfig) -> Result<(IcmpAssignment, f64)> {
    brute_force_icmp_capped(req, cfg, DEFAULT_BRUTE_FORCE_CAP)
}

/// Enumerates every feasible instance-container mapping and returns the
/// minimum objective; ties go to the lexicographically smallest placement
/// map. Refuses when |C|^|I| exceeds `cap`.
pub fn brute_force_icmp_capped(
    req: &AppRequest,
    cfg: &ObjectiveConfig,
    cap: f64,
) -> Result<(IcmpAssignment, f64)> {
    let n = req.instances.len();
    let m = req.containers.len();
    if n == 0 {
        return Ok((IcmpAssignment::empty(req.id), 0.0));
    }
    if m == 0 {
        return Err(Error::Infeasible);
    }
    if (m as f64).powi(n as i32) > cap {
        return Err(Error::SearchSpaceTooLarge(format!(
            "{m}^{n} assignments exceed the cap of {cap}"
        )));
    }
    let ctx = IcmpContext::new(req, cfg);
    let mut best: Option<(IcmpPartial, f64)> = None;
    let mut partial = ctx.empty_partial();
    icmp_dfs(&ctx, &mut partial, 0, 0.0, &mut best);
    match best {
        Some((p, value)) => Ok((ctx.to_assignment(&p, req.id), value)),
        None => Err(Error::Infeasible),
    }
}

fn icmp_dfs(
    ctx: &IcmpContext,
    partial: &mut IcmpPartial,
    instance: usize,
    cost: f64,
    best: &mut Option<(IcmpPartial, f64)>,
) {
    if let Some((_, bound)) = best {
        // deltas are nonnegative, so the running cost lower-bounds every
        // completion; pruning ties keeps the first (lexicographically
        // smallest) optimum
        if cost >= *bound {
            return;
        }
    }
    if instance == ctx.instance_count() {
        *best = Some((partial.clone(), cost));
        return;
    }
    for c in 0..ctx.container_count() {
        if ctx.action_feasible(partial, instance, c) {
            let mut next = partial.clone();
            let delta = ctx.place(&mut next, instance, c);
            icmp_dfs(ctx, &mut next, instance + 1, cost + delta, best);
        }
    }
}

/// Exhaustive stage-two optimum with the default enumeration cap.
pub fn brute_force_csmp(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
) -> Result<(CsmpAssignment, f64)> {
    brute_force_csmp_capped(state, req, icmp, DEFAULT_BRUTE_FORCE_CAP)
}

pub fn brute_force_csmp_capped(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    cap: f64,
) -> Result<(CsmpAssignment, f64)> {
    let ctx = CsmpContext::new(state, req, icmp);
    let m = ctx.item_count();
    if m == 0 {
        return Ok((CsmpAssignment::empty(req.id), 0.0));
    }
    let s = ctx.server_count();
    if s == 0 {
        return Err(Error::Infeasible);
    }
    if (s as f64).powi(m as i32) > cap {
        return Err(Error::SearchSpaceTooLarge(format!(
            "{s}^{m} assignments exceed the cap of {cap}"
        )));
    }
    let mut best: Option<(CsmpPartial, f64)> = None;
    let mut partial = ctx.empty_partial();
    csmp_dfs(&ctx, &mut partial, 0, 0.0, &mut best);
    match best {
        Some((p, value)) => Ok((ctx.to_assignment(&p, req.id), value)),
        None => Err(Error::Infeasible),
    }
}

fn csmp_dfs(
    ctx: &CsmpContext,
    partial: &mut CsmpPartial,
    item: usize,
    cost: f64,
    best: &mut Option<(CsmpPartial, f64)>,
) {
    if let Some((_, bound)) = best {
        if cost >= *bound {
            return;
        }
    }
    if item == ctx.item_count() {
        *best = Some((partial.clone(), cost));
        return;
    }
    for s in 0..ctx.server_count() {
        if ctx.action_feasible(partial, item, s) {
            let mut next = partial.clone();
            let delta = ctx.place(&mut next, item, s);
            csmp_dfs(ctx, &mut next, item + 1, cost + delta, best);
        }
    }
}

/// Convenience check used by telescoping tests and the harness: two
/// objective values agree within the shared tolerance.
pub fn objectives_agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= RESOURCE_EPSILON.max(1e-9 * a.abs().max(b.abs()))
}
