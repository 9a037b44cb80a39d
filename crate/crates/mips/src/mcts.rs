//! Monte Carlo tree search with UCT over a generic sequential placement
//! problem, used for both mapping stages.
//!
//! Each decision step draws up to `max_samples_per_step` valid samples
//! (traverse, expand, simulate, back-propagate), then commits to the child
//! minimizing the mean cost `Q/(N+1)` and continues the search on that
//! child's subtree. Costs are minimized throughout; there is no sign flip
//! to rewards.
//!
//! Randomness comes from one ChaCha8 generator seeded with the caller's
//! 64-bit seed per stage run, so identical inputs, config, and seed yield
//! bit-identical assignments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageId};
use crate::model::{validate_csmp, validate_icmp, AppRequest, ClusterState};
use crate::model::{CsmpAssignment, IcmpAssignment};
use crate::objectives::{CsmpContext, CsmpPartial, IcmpContext, IcmpPartial, ObjectiveConfig};

/// One placement decision: put `item` onto `target`. Ordered by
/// (item, target) for deterministic tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Action {
    pub item: u32,
    pub target: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutPolicy {
    /// Complete the mapping with uniformly random feasible actions.
    Uniform,
    /// Repeatedly pick a random unplaced item and map it to the feasible
    /// target with the smallest incremental cost.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpansionPolicy {
    /// Expand a uniformly random untried action.
    Uniform,
    /// Prefer actions that place an item next to something it exchanges
    /// traffic with, falling back to uniform when nothing is adjacent.
    Scored,
}

/// Search parameters for one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    /// Valid samples drawn per decision step (MAX_SAMPLE_NUM).
    pub max_samples_per_step: usize,
    /// Exploration weight ω used during traversal.
    pub exploration_weight: f64,
    pub rollout_policy: RolloutPolicy,
    pub expansion_policy: ExpansionPolicy,
    /// Seed children of zero-scored actions with one phantom visit at an
    /// unfavorably high cost.
    pub prior_bias: bool,
    /// Total attempts allowed per step, as a multiple of
    /// `max_samples_per_step`; guards against livelock when most rollouts
    /// are infeasible.
    pub max_attempts_factor: usize,
}

impl Default for MctsConfig {
    fn default() -> Self {
        Self {
            max_samples_per_step: 500,
            exploration_weight: std::f64::consts::SQRT_2,
            rollout_policy: RolloutPolicy::Greedy,
            expansion_policy: ExpansionPolicy::Scored,
            prior_bias: false,
            max_attempts_factor: 10,
        }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.exploration_weight.is_finite() || self.exploration_weight < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "exploration weight must be finite and nonnegative, got {}",
                self.exploration_weight
            )));
        }
        if self.max_attempts_factor == 0 {
            return Err(Error::InvalidConfig(
                "max_attempts_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// UCB1 selection value: `Q/(N+1) - ω sqrt(2 ln N(parent) / N)`, minimized.
/// An unvisited node scores −∞ and is therefore chosen with precedence.
pub fn ucb1_score(total_cost: f64, visits: u64, parent_visits: u64, omega: f64) -> Result<f64> {
    if total_cost < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "accumulated cost must be nonnegative, got {total_cost}"
        )));
    }
    if omega < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "exploration weight must be nonnegative, got {omega}"
        )));
    }
    if visits == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if parent_visits < 1 {
        return Err(Error::InvalidArgument(
            "a visited node requires a visited parent".into(),
        ));
    }
    let n = visits as f64;
    let exploration = (2.0 * (parent_visits as f64).ln() / n).sqrt();
    Ok(total_cost / (n + 1.0) - omega * exploration)
}

/// A sequential placement problem: place every item onto some target
/// without violating the stage constraints; leaves score the stage
/// objective.
pub trait PlacementStage {
    type State: Clone;

    fn stage_id(&self) -> StageId;
    fn item_count(&self) -> usize;
    fn target_count(&self) -> usize;
    fn initial_state(&self) -> Self::State;
    fn is_leaf(&self, state: &Self::State) -> bool;
    fn unplaced_items(&self, state: &Self::State, out: &mut Vec<u32>);
    fn feasible_targets(&self, state: &Self::State, item: u32, out: &mut Vec<u32>);
    fn apply(&self, state: &mut Self::State, action: Action);
    /// Constraint check at a leaf.
    fn leaf_feasible(&self, state: &Self::State) -> bool;
    /// Δ(η): the stage objective of a complete state.
    fn leaf_reward(&self, state: &Self::State) -> f64;
    /// Incremental cost of a feasible action, for greedy rollouts.
    fn action_delta(&self, state: &Self::State, action: Action) -> f64;
    /// 1 when the action places an item adjacent to traffic it exchanges,
    /// else 0; drives scored expansion and prior bias.
    fn action_score(&self, state: &Self::State, action: Action) -> u32;
    /// An upper bound on any leaf cost, used as the prior-bias cost.
    fn prior_cost(&self) -> f64;
}

/// Accepted-sample and attempt counters across a stage run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub accepted_samples: u64,
    pub attempts: u64,
}

struct Node<S> {
    state: S,
    parent: Option<usize>,
    action: Option<Action>,
    visits: u64,
    total_cost: f64,
    untried: Vec<Action>,
    children: Vec<usize>,
}

enum Traversal {
    /// A freshly expanded node to simulate from.
    Expanded(usize),
    /// Reached an existing leaf.
    Leaf(usize),
    /// A fully expanded node with no children left: nothing feasible
    /// completes through it.
    DeadEnd(usize),
}

/// One search tree, owned by a single stage run. Statistics of the chosen
/// child survive into the next decision step.
pub struct SearchTree<'s, St: PlacementStage> {
    stage: &'s St,
    cfg: MctsConfig,
    nodes: Vec<Node<St::State>>,
    root: usize,
    rng: ChaCha8Rng,
    stats: SearchStats,
    // scratch buffers for rollouts
    items_buf: Vec<u32>,
    targets_buf: Vec<u32>,
}

impl<'s, St: PlacementStage> SearchTree<'s, St> {
    pub fn new(stage: &'s St, cfg: MctsConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let state = stage.initial_state();
        let mut tree = Self {
            stage,
            cfg,
            nodes: Vec::new(),
            root: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: SearchStats::default(),
            items_buf: Vec::new(),
            targets_buf: Vec::new(),
        };
        let untried = tree.feasible_actions(&state);
        tree.nodes.push(Node {
            state,
            parent: None,
            action: None,
            visits: 0,
            total_cost: 0.0,
            untried,
            children: Vec::new(),
        });
        Ok(tree)
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    fn feasible_actions(&mut self, state: &St::State) -> Vec<Action> {
        let mut actions = Vec::new();
        let mut items = std::mem::take(&mut self.items_buf);
        let mut targets = std::mem::take(&mut self.targets_buf);
        self.stage.unplaced_items(state, &mut items);
        for &item in &items {
            self.stage.feasible_targets(state, item, &mut targets);
            actions.extend(targets.iter().map(|&target| Action { item, target }));
        }
        self.items_buf = items;
        self.targets_buf = targets;
        actions
    }

    /// Minimum-UCB child; ties go to the smallest (item, target) action.
    fn best_child(&self, node: usize, omega: f64) -> Option<usize> {
        let parent_visits = self.nodes[node].visits.max(1);
        self.nodes[node]
            .children
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let key = |idx: usize| {
                    let n = &self.nodes[idx];
                    let score = ucb1_score(n.total_cost, n.visits, parent_visits, omega)
                        .expect("validated search statistics");
                    (score, n.action)
                };
                key(a)
                    .partial_cmp(&key(b))
                    .expect("scores are never NaN")
            })
    }

    /// Descends by best child while fully expanded; expands the first node
    /// with untried actions; stops at leaves and dead ends.
    fn traverse(&mut self) -> Traversal {
        let mut cur = self.root;
        loop {
            if self.stage.is_leaf(&self.nodes[cur].state) {
                return Traversal::Leaf(cur);
            }
            if !self.nodes[cur].untried.is_empty() {
                return Traversal::Expanded(self.expand(cur));
            }
            match self.best_child(cur, self.cfg.exploration_weight) {
                Some(child) => cur = child,
                None => return Traversal::DeadEnd(cur),
            }
        }
    }

    /// Moves one untried action into a child node. The scored policy picks
    /// uniformly among the highest-scoring actions; with every score zero
    /// that is plain uniform choice.
    fn expand(&mut self, node: usize) -> usize {
        let pick = match self.cfg.expansion_policy {
            ExpansionPolicy::Uniform => self.rng.gen_range(0..self.nodes[node].untried.len()),
            ExpansionPolicy::Scored => {
                let scores: Vec<u32> = self.nodes[node]
                    .untried
                    .iter()
                    .map(|&a| self.stage.action_score(&self.nodes[node].state, a))
                    .collect();
                let best = *scores.iter().max().expect("untried is non-empty");
                let candidates: Vec<usize> = (0..scores.len())
                    .filter(|&i| scores[i] == best)
                    .collect();
                candidates[self.rng.gen_range(0..candidates.len())]
            }
        };
        let action = self.nodes[node].untried.remove(pick);
        let mut state = self.nodes[node].state.clone();
        self.stage.apply(&mut state, action);
        let untried = self.feasible_actions(&state);
        let biased =
            self.cfg.prior_bias && self.stage.action_score(&self.nodes[node].state, action) == 0;
        let (visits, total_cost) = if biased {
            (1, self.stage.prior_cost())
        } else {
            (0, 0.0)
        };
        let idx = self.nodes.len();
        self.nodes.push(Node {
            state,
            parent: Some(node),
            action: Some(action),
            visits,
            total_cost,
            untried,
            children: Vec::new(),
        });
        self.nodes[node].children.push(idx);
        idx
    }

    /// Completes the mapping from `node`'s state; `None` marks a rollout
    /// that got stuck or ended infeasible.
    fn simulate(&mut self, node: usize) -> Option<f64> {
        let mut state = self.nodes[node].state.clone();
        let mut items = std::mem::take(&mut self.items_buf);
        let mut targets = std::mem::take(&mut self.targets_buf);
        let outcome = self.rollout(&mut state, &mut items, &mut targets);
        self.items_buf = items;
        self.targets_buf = targets;
        outcome
    }

    fn rollout(
        &mut self,
        state: &mut St::State,
        items: &mut Vec<u32>,
        targets: &mut Vec<u32>,
    ) -> Option<f64> {
        self.stage.unplaced_items(state, items);
        while !items.is_empty() {
            let action = match self.cfg.rollout_policy {
                RolloutPolicy::Greedy => {
                    let slot = self.rng.gen_range(0..items.len());
                    let item = items[slot];
                    self.stage.feasible_targets(state, item, targets);
                    let mut best: Option<(f64, u32)> = None;
                    for &target in targets.iter() {
                        let delta = self.stage.action_delta(state, Action { item, target });
                        // strict comparison over ascending targets keeps the
                        // smallest index on ties
                        if best.is_none_or(|(d, _)| delta < d) {
                            best = Some((delta, target));
                        }
                    }
                    let (_, target) = best?;
                    items.swap_remove(slot);
                    Action { item, target }
                }
                RolloutPolicy::Uniform => {
                    let mut actions = Vec::new();
                    for &item in items.iter() {
                        self.stage.feasible_targets(state, item, targets);
                        actions.extend(targets.iter().map(|&target| Action { item, target }));
                    }
                    if actions.is_empty() {
                        return None;
                    }
                    let action = actions[self.rng.gen_range(0..actions.len())];
                    items.retain(|&i| i != action.item);
                    action
                }
            };
            self.stage.apply(state, action);
        }
        if self.stage.leaf_feasible(state) {
            Some(self.stage.leaf_reward(state))
        } else {
            None
        }
    }

    /// Adds the sampled cost to `node` and every ancestor up to and
    /// including the current step root, so the root visit count equals the
    /// accepted samples of this step.
    fn back_prop(&mut self, node: usize, delta: f64) {
        debug_assert!(delta >= 0.0);
        let mut cur = node;
        loop {
            self.nodes[cur].visits += 1;
            self.nodes[cur].total_cost += delta;
            if cur == self.root {
                break;
            }
            cur = self.nodes[cur].parent.expect("non-root nodes have parents");
        }
    }

    /// Detaches a node that provably completes nothing, so selection stops
    /// revisiting it; ancestors that become empty die with it.
    fn prune(&mut self, node: usize) -> bool {
        let mut cur = node;
        loop {
            let Some(parent) = self.nodes[cur].parent else {
                return true; // the step root itself is dead
            };
            if cur == self.root {
                return true;
            }
            self.nodes[parent].children.retain(|&c| c != cur);
            let parent_dead = self.nodes[parent].children.is_empty()
                && self.nodes[parent].untried.is_empty()
                && !self.stage.is_leaf(&self.nodes[parent].state);
            if !parent_dead {
                return false;
            }
            cur = parent;
        }
    }

    fn is_dead(&self, node: usize) -> bool {
        self.nodes[node].children.is_empty()
            && self.nodes[node].untried.is_empty()
            && !self.stage.is_leaf(&self.nodes[node].state)
    }

    fn step_failure(&self, reason: &str) -> Error {
        let mut items = Vec::new();
        self.stage.unplaced_items(&self.nodes[self.root].state, &mut items);
        Error::PlacementFailed {
            stage: self.stage.stage_id(),
            step: self.stage.item_count() - items.len(),
            reason: reason.into(),
        }
    }

    /// Runs one decision step: samples until `max_samples_per_step` valid
    /// rollouts (or the attempt cap), then commits to the best root child
    /// and re-roots the tree there.
    pub fn next_action(&mut self) -> Result<Action> {
        let max_samples = self.cfg.max_samples_per_step;
        let max_attempts = max_samples.saturating_mul(self.cfg.max_attempts_factor);
        if self.is_dead(self.root) {
            return Err(self.step_failure("no feasible action"));
        }
        let mut valid = 0usize;
        let mut attempts = 0usize;
        while valid < max_samples && attempts < max_attempts {
            attempts += 1;
            self.stats.attempts += 1;
            let node = match self.traverse() {
                Traversal::Expanded(n) | Traversal::Leaf(n) => n,
                Traversal::DeadEnd(n) => {
                    if self.prune(n) {
                        return Err(self.step_failure("search space is exhausted"));
                    }
                    continue;
                }
            };
            match self.simulate(node) {
                // a zero cost is a legitimate optimal leaf, so accept Δ >= 0
                Some(delta) => {
                    self.back_prop(node, delta);
                    valid += 1;
                    self.stats.accepted_samples += 1;
                }
                None => {
                    if self.is_dead(node) && self.prune(node) {
                        return Err(self.step_failure("search space is exhausted"));
                    }
                }
            }
        }
        if valid == 0 {
            return Err(self.step_failure("no valid sample produced within the attempt budget"));
        }
        let chosen = self
            .best_child(self.root, 0.0)
            .ok_or_else(|| self.step_failure("no visited child to commit to"))?;
        self.root = chosen;
        Ok(self.nodes[chosen].action.expect("child has an action"))
    }

    /// Decides every item in sequence, returning the complete action list.
    pub fn run(mut self) -> Result<(Vec<Action>, SearchStats)> {
        let steps = self.stage.item_count();
        let mut actions = Vec::with_capacity(steps);
        for _ in 0..steps {
            actions.push(self.next_action()?);
        }
        Ok((actions, self.stats))
    }
}

// ---------------------------------------------------------------------------
// Stage one: instances onto containers
// ---------------------------------------------------------------------------

/// Sequential decision process for the instance-container mapping.
pub struct IcmpStage {
    ctx: IcmpContext,
}

impl IcmpStage {
    pub fn new(req: &AppRequest, cfg: &ObjectiveConfig) -> Self {
        Self {
            ctx: IcmpContext::new(req, cfg),
        }
    }

    pub fn context(&self) -> &IcmpContext {
        &self.ctx
    }
}

impl PlacementStage for IcmpStage {
    type State = IcmpPartial;

    fn stage_id(&self) -> StageId {
        StageId::Icmp
    }

    fn item_count(&self) -> usize {
        self.ctx.instance_count()
    }

    fn target_count(&self) -> usize {
        self.ctx.container_count()
    }

    fn initial_state(&self) -> IcmpPartial {
        self.ctx.empty_partial()
    }

    fn is_leaf(&self, state: &IcmpPartial) -> bool {
        self.ctx.is_complete(state)
    }

    fn unplaced_items(&self, state: &IcmpPartial, out: &mut Vec<u32>) {
        out.clear();
        out.extend(
            state
                .assigned
                .iter()
                .enumerate()
                .filter(|(_, a)| a.is_none())
                .map(|(i, _)| i as u32),
        );
    }

    fn feasible_targets(&self, state: &IcmpPartial, item: u32, out: &mut Vec<u32>) {
        out.clear();
        out.extend(
            (0..self.ctx.container_count())
                .filter(|&c| self.ctx.action_feasible(state, item as usize, c))
                .map(|c| c as u32),
        );
    }

    fn apply(&self, state: &mut IcmpPartial, action: Action) {
        self.ctx
            .place(state, action.item as usize, action.target as usize);
    }

    fn leaf_feasible(&self, state: &IcmpPartial) -> bool {
        self.ctx.complete_and_feasible(state)
    }

    fn leaf_reward(&self, state: &IcmpPartial) -> f64 {
        self.ctx.objective(state)
    }

    fn action_delta(&self, state: &IcmpPartial, action: Action) -> f64 {
        self.ctx
            .delta(state, action.item as usize, action.target as usize)
    }

    fn action_score(&self, state: &IcmpPartial, action: Action) -> u32 {
        u32::from(self.ctx.has_linked_peer_in(
            state,
            action.item as usize,
            action.target as usize,
        ))
    }

    fn prior_cost(&self) -> f64 {
        self.ctx.cost_upper_bound()
    }
}

// ---------------------------------------------------------------------------
// Stage two: containers onto servers
// ---------------------------------------------------------------------------

/// Sequential decision process for the container-server mapping, over the
/// containers that actually hold instances.
pub struct CsmpStage<'a> {
    ctx: CsmpContext<'a>,
}

impl<'a> CsmpStage<'a> {
    pub fn new(state: &'a ClusterState, req: &AppRequest, icmp: &IcmpAssignment) -> Self {
        Self {
            ctx: CsmpContext::new(state, req, icmp),
        }
    }

    pub fn context(&self) -> &CsmpContext<'a> {
        &self.ctx
    }
}

impl<'a> PlacementStage for CsmpStage<'a> {
    type State = CsmpPartial;

    fn stage_id(&self) -> StageId {
        StageId::Csmp
    }

    fn item_count(&self) -> usize {
        self.ctx.item_count()
    }

    fn target_count(&self) -> usize {
        self.ctx.server_count()
    }

    fn initial_state(&self) -> CsmpPartial {
        self.ctx.empty_partial()
    }

    fn is_leaf(&self, state: &CsmpPartial) -> bool {
        self.ctx.is_complete(state)
    }

    fn unplaced_items(&self, state: &CsmpPartial, out: &mut Vec<u32>) {
        out.clear();
        out.extend(
            state
                .assigned
                .iter()
                .enumerate()
                .filter(|(_, a)| a.is_none())
                .map(|(i, _)| i as u32),
        );
    }

    fn feasible_targets(&self, state: &CsmpPartial, item: u32, out: &mut Vec<u32>) {
        out.clear();
        out.extend(
            (0..self.ctx.server_count())
                .filter(|&s| self.ctx.action_feasible(state, item as usize, s))
                .map(|s| s as u32),
        );
    }

    fn apply(&self, state: &mut CsmpPartial, action: Action) {
        self.ctx
            .place(state, action.item as usize, action.target as usize);
    }

    fn leaf_feasible(&self, state: &CsmpPartial) -> bool {
        self.ctx.complete_and_feasible(state)
    }

    fn leaf_reward(&self, state: &CsmpPartial) -> f64 {
        self.ctx.objective(state)
    }

    fn action_delta(&self, state: &CsmpPartial, action: Action) -> f64 {
        self.ctx
            .delta(state, action.item as usize, action.target as usize)
    }

    fn action_score(&self, state: &CsmpPartial, action: Action) -> u32 {
        let item = action.item as usize;
        let server = action.target;
        let linked = state.assigned.iter().enumerate().any(|(other, assigned)| {
            *assigned == Some(server) && other != item && self.ctx.pair_linked(item, other)
        });
        u32::from(linked)
    }

    fn prior_cost(&self) -> f64 {
        self.ctx.cost_upper_bound()
    }
}

// ---------------------------------------------------------------------------
// Stage runners
// ---------------------------------------------------------------------------

/// Runs the stage-one search and returns the complete, validated mapping.
pub fn mips_icmp(
    req: &AppRequest,
    objective: &ObjectiveConfig,
    cfg: &MctsConfig,
    seed: u64,
) -> Result<(IcmpAssignment, SearchStats)> {
    let stage = IcmpStage::new(req, objective);
    if stage.item_count() == 0 {
        return Ok((IcmpAssignment::empty(req.id), SearchStats::default()));
    }
    let tree = SearchTree::new(&stage, *cfg, seed)?;
    let (actions, stats) = tree.run()?;
    let mut partial = stage.ctx.empty_partial();
    for a in actions {
        stage.ctx.place(&mut partial, a.item as usize, a.target as usize);
    }
    let assignment = stage.ctx.to_assignment(&partial, req.id);
    if !validate_icmp(req, &assignment, false).is_feasible() {
        return Err(Error::ContractViolation(
            "stage-one search produced an infeasible assignment".into(),
        ));
    }
    Ok((assignment, stats))
}

/// Runs the stage-two search over the containers used by `icmp` and returns
/// the complete, validated mapping.
pub fn mips_csmp(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
    cfg: &MctsConfig,
    seed: u64,
) -> Result<(CsmpAssignment, SearchStats)> {
    let stage = CsmpStage::new(state, req, icmp);
    if stage.item_count() == 0 {
        return Ok((CsmpAssignment::empty(req.id), SearchStats::default()));
    }
    let tree = SearchTree::new(&stage, *cfg, seed)?;
    let (actions, stats) = tree.run()?;
    let mut partial = stage.ctx.empty_partial();
    for a in actions {
        stage.ctx.place(&mut partial, a.item as usize, a.target as usize);
    }
    let assignment = stage.ctx.to_assignment(&partial, req.id);
    if !validate_csmp(state, req, Some(icmp), &assignment, false).is_feasible() {
        return Err(Error::ContractViolation(
            "stage-two search produced an infeasible assignment".into(),
        ));
    }
    Ok((assignment, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ResourceVector, Server, StreamEdge};
    use crate::objectives::{brute_force_icmp, icmp_objective};

    fn rv(q: &[f64]) -> ResourceVector {
        ResourceVector::new(q.to_vec()).unwrap()
    }

    fn chain_req(rates: &[f64], container_count: usize, cap: &[f64]) -> AppRequest {
        AppRequest::expand(
            0,
            (0..=rates.len()).map(|_| (1, rv(&[1.0, 1.0]))).collect(),
            rates
                .iter()
                .enumerate()
                .map(|(i, &r)| StreamEdge {
                    src: i,
                    dst: i + 1,
                    rate: r,
                })
                .collect(),
            container_count,
            rv(cap),
        )
        .unwrap()
    }

    fn cfg_with(samples: usize) -> MctsConfig {
        MctsConfig {
            max_samples_per_step: samples,
            ..MctsConfig::default()
        }
    }

    #[test]
    fn ucb1_unvisited_is_neg_infinity() {
        assert_eq!(
            ucb1_score(0.0, 0, 5, 1.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(
            ucb1_score(3.0, 0, 0, 0.0).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn ucb1_pure_exploitation() {
        assert_eq!(ucb1_score(10.0, 4, 8, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn ucb1_hand_computed() {
        // Q=10, N=4, parent=8, ω=√2: 10/5 − √2·√(2 ln 8 / 4) = 2 − √(ln 8)
        let expected = 2.0 - 8.0_f64.ln().sqrt();
        let got = ucb1_score(10.0, 4, 8, std::f64::consts::SQRT_2).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn ucb1_rejects_negative_inputs() {
        assert!(ucb1_score(-1.0, 4, 8, 1.0).is_err());
        assert!(ucb1_score(1.0, 4, 8, -0.5).is_err());
        assert!(ucb1_score(1.0, 4, 0, 1.0).is_err());
    }

    #[test]
    fn best_child_single_and_exploit() {
        let req = chain_req(&[3.0], 2, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();

        let child = tree.expand(0);
        assert_eq!(tree.best_child(0, 0.0), Some(child));

        // second child; give both synthetic statistics and check the argmin
        let other = tree.expand(0);
        tree.nodes[0].visits = 8;
        tree.nodes[child].visits = 4;
        tree.nodes[child].total_cost = 8.0; // mean cost 2.0 per 1/(N+1)
        tree.nodes[other].visits = 4;
        tree.nodes[other].total_cost = 6.0; // 1.5
        assert_eq!(tree.best_child(0, 0.0), Some(other));

        // an unvisited child outranks both under any ω
        let third = tree.expand(0);
        assert_eq!(tree.best_child(0, 0.0), Some(third));
        assert_eq!(
            tree.best_child(0, std::f64::consts::SQRT_2),
            Some(third)
        );
    }

    #[test]
    fn traverse_expands_fresh_root_and_descends() {
        let req = chain_req(&[3.0], 2, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();

        // fresh root with untried actions expands a new child
        let n = match tree.traverse() {
            Traversal::Expanded(n) => n,
            _ => panic!("expected expansion"),
        };
        assert_eq!(tree.nodes[n].parent, Some(0));

        // exhaust the root's untried actions, then traversal must descend
        while !tree.nodes[0].untried.is_empty() {
            let c = tree.expand(0);
            tree.back_prop(c, 1.0);
        }
        match tree.traverse() {
            Traversal::Expanded(n) => {
                let parent = tree.nodes[n].parent.unwrap();
                assert_ne!(parent, 0, "expansion must happen below the root");
            }
            Traversal::Leaf(_) => {}
            Traversal::DeadEnd(_) => panic!("live tree reported dead end"),
        }
    }

    #[test]
    fn traverse_returns_leaf_root() {
        let req = AppRequest::expand(0, vec![], vec![], 1, rv(&[1.0, 1.0])).unwrap();
        let objective = ObjectiveConfig { alpha: 0.5 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();
        assert!(matches!(tree.traverse(), Traversal::Leaf(0)));
    }

    #[test]
    fn expand_single_untried_action() {
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[1.0, 1.0]))],
            vec![],
            1,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let objective = ObjectiveConfig { alpha: 0.5 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();
        let child = tree.expand(0);
        assert_eq!(
            tree.nodes[child].action,
            Some(Action { item: 0, target: 0 })
        );
        assert!(tree.nodes[0].untried.is_empty());
    }

    #[test]
    fn scored_expansion_prefers_adjacent_container() {
        // i0 already sits in container 0; expanding i1 should co-locate
        let req = chain_req(&[5.0], 8, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        for seed in 0..20 {
            let mut tree = SearchTree::new(&stage, cfg_with(10), seed).unwrap();
            let first = tree
                .nodes[0]
                .untried
                .iter()
                .position(|&a| a == Action { item: 0, target: 0 })
                .unwrap();
            tree.nodes[0].untried.remove(first);
            let mut state = tree.nodes[0].state.clone();
            stage.apply(&mut state, Action { item: 0, target: 0 });
            let untried = tree.feasible_actions(&state);
            tree.nodes.push(Node {
                state,
                parent: Some(0),
                action: Some(Action { item: 0, target: 0 }),
                visits: 0,
                total_cost: 0.0,
                untried,
                children: Vec::new(),
            });
            let node = tree.nodes.len() - 1;
            let child = tree.expand(node);
            assert_eq!(
                tree.nodes[child].action,
                Some(Action { item: 1, target: 0 }),
                "scored expansion must pick the container hosting the peer"
            );
        }
    }

    #[test]
    fn scored_expansion_falls_back_to_uniform() {
        // nothing placed yet: every action scores zero, all are eligible
        let req = chain_req(&[5.0], 3, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..60 {
            let mut tree = SearchTree::new(&stage, cfg_with(10), seed).unwrap();
            let child = tree.expand(0);
            seen.insert(tree.nodes[child].action.unwrap());
        }
        assert!(seen.len() > 3, "expected a spread over actions, got {seen:?}");
    }

    #[test]
    fn simulate_on_leaf_returns_objective() {
        let req = chain_req(&[3.0], 2, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();
        let mut state = stage.initial_state();
        stage.apply(&mut state, Action { item: 0, target: 0 });
        stage.apply(&mut state, Action { item: 1, target: 1 });
        tree.nodes[0].state = state;
        assert_eq!(tree.simulate(0), Some(3.0));
    }

    #[test]
    fn simulate_stuck_rollout_is_invalid() {
        // two unit instances, one container of capacity (1,1): the second
        // placement is impossible
        let req = AppRequest::expand(
            0,
            vec![(2, rv(&[1.0, 1.0]))],
            vec![],
            1,
            rv(&[1.0, 1.0]),
        )
        .unwrap();
        let objective = ObjectiveConfig { alpha: 0.5 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();
        assert_eq!(tree.simulate(0), None);
    }

    #[test]
    fn greedy_rollout_colocates_chain() {
        let req = chain_req(&[2.0, 3.0, 4.0], 4, &[16.0, 16.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        for seed in 0..20 {
            let mut tree = SearchTree::new(&stage, cfg_with(10), seed).unwrap();
            assert_eq!(tree.simulate(0), Some(0.0));
        }
    }

    #[test]
    fn back_prop_updates_to_step_root() {
        let req = chain_req(&[3.0], 2, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(10), 1).unwrap();
        let child = tree.expand(0);
        tree.back_prop(child, 3.0);
        assert_eq!(tree.nodes[child].visits, 1);
        assert_eq!(tree.nodes[child].total_cost, 3.0);
        assert_eq!(tree.nodes[0].visits, 1);
        assert_eq!(tree.nodes[0].total_cost, 3.0);

        tree.back_prop(child, 2.0);
        tree.back_prop(child, 4.0);
        assert_eq!(tree.nodes[child].visits, 3);
        assert_eq!(tree.nodes[child].total_cost, 9.0);

        // zero-cost samples still count as visits
        tree.back_prop(child, 0.0);
        assert_eq!(tree.nodes[child].visits, 4);
        assert_eq!(tree.nodes[child].total_cost, 9.0);
    }

    #[test]
    fn mean_cost_matches_recorded_samples() {
        // drive the sampling loop by hand and reconcile Q/N per node
        let req = chain_req(&[2.0, 5.0], 3, &[2.0, 2.0]);
        let objective = ObjectiveConfig { alpha: 0.5 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(
            &stage,
            MctsConfig {
                rollout_policy: RolloutPolicy::Uniform,
                expansion_policy: ExpansionPolicy::Uniform,
                ..cfg_with(64)
            },
            3,
        )
        .unwrap();
        let mut recorded: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for _ in 0..64 {
            let node = match tree.traverse() {
                Traversal::Expanded(n) | Traversal::Leaf(n) => n,
                Traversal::DeadEnd(_) => continue,
            };
            if let Some(delta) = tree.simulate(node) {
                tree.back_prop(node, delta);
                let mut cur = node;
                loop {
                    recorded.entry(cur).or_default().push(delta);
                    if cur == tree.root {
                        break;
                    }
                    cur = tree.nodes[cur].parent.unwrap();
                }
            }
        }
        for (node, samples) in recorded {
            let mean = samples.iter().sum::<f64>() / samples.len() as f64;
            let n = tree.nodes[node].visits as f64;
            assert_eq!(n as usize, samples.len());
            assert!((tree.nodes[node].total_cost / n - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn root_visits_equal_accepted_samples() {
        let req = chain_req(&[2.0, 5.0], 3, &[2.0, 2.0]);
        let objective = ObjectiveConfig { alpha: 0.5 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(40), 9).unwrap();
        tree.next_action().unwrap();
        // the old root recorded every accepted sample of the step
        assert_eq!(tree.nodes[0].visits, tree.stats.accepted_samples);
        let child_sum: u64 = tree.nodes[0]
            .children
            .iter()
            .map(|&c| tree.nodes[c].visits)
            .sum();
        assert!(child_sum <= tree.nodes[0].visits);
    }

    #[test]
    fn next_action_single_feasible() {
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[1.0, 1.0]))],
            vec![],
            1,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let objective = ObjectiveConfig { alpha: 0.5 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(5), 1).unwrap();
        assert_eq!(
            tree.next_action().unwrap(),
            Action { item: 0, target: 0 }
        );
    }

    #[test]
    fn next_action_zero_samples_fails() {
        let req = chain_req(&[3.0], 2, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let mut tree = SearchTree::new(&stage, cfg_with(0), 1).unwrap();
        assert!(matches!(
            tree.next_action(),
            Err(Error::PlacementFailed { .. })
        ));
    }

    #[test]
    fn next_action_colocates_two_instances() {
        let req = chain_req(&[4.0], 2, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        for seed in 0..10 {
            let (a, _) = mips_icmp(&req, &objective, &cfg_with(100), seed).unwrap();
            assert_eq!(
                a.placement.get(&0),
                a.placement.get(&1),
                "seed {seed} split a single stream across containers"
            );
        }
    }

    #[test]
    fn run_stage_empty_and_singleton() {
        let empty = AppRequest::expand(0, vec![], vec![], 0, rv(&[1.0, 1.0])).unwrap();
        let objective = ObjectiveConfig { alpha: 0.5 };
        let (a, stats) = mips_icmp(&empty, &objective, &cfg_with(10), 0).unwrap();
        assert!(a.placement.is_empty());
        assert_eq!(stats, SearchStats::default());

        let single = AppRequest::expand(
            0,
            vec![(1, rv(&[1.0, 1.0]))],
            vec![],
            1,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let (a, _) = mips_icmp(&single, &objective, &cfg_with(10), 0).unwrap();
        assert_eq!(a.placement.get(&0), Some(&0));
    }

    #[test]
    fn run_stage_matches_oracle_on_diamond() {
        // diamond: v0 fans out to v1, v2; both feed v3
        let req = AppRequest::expand(
            0,
            (0..4).map(|_| (1, rv(&[1.0, 1.0]))).collect(),
            vec![
                StreamEdge { src: 0, dst: 1, rate: 3.0 },
                StreamEdge { src: 0, dst: 2, rate: 1.0 },
                StreamEdge { src: 1, dst: 3, rate: 2.0 },
                StreamEdge { src: 2, dst: 3, rate: 4.0 },
            ],
            2,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let objective = ObjectiveConfig { alpha: 0.5 };
        let (_, optimum) = brute_force_icmp(&req, &objective).unwrap();
        let mut hits = 0;
        for seed in 0..100 {
            let (a, _) = mips_icmp(&req, &objective, &cfg_with(500), seed).unwrap();
            let value = icmp_objective(&req, &a, &objective);
            assert!(value >= optimum - 1e-9);
            if value <= optimum * 1.05 + 1e-9 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 runs within 5% of the optimum");
    }

    #[test]
    fn run_stage_deterministic_per_seed() {
        let req = chain_req(&[2.0, 7.0, 1.0, 4.0], 3, &[3.0, 3.0]);
        let objective = ObjectiveConfig { alpha: 0.5 };
        let cfg = cfg_with(200);
        let (a, s1) = mips_icmp(&req, &objective, &cfg, 77).unwrap();
        let (b, s2) = mips_icmp(&req, &objective, &cfg, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(s1, s2);
        let (c, _) = mips_icmp(&req, &objective, &cfg, 78).unwrap();
        assert!(validate_icmp(&req, &c, false).is_feasible());
    }

    #[test]
    fn run_stage_outputs_validate() {
        let req = chain_req(&[2.0, 7.0, 1.0, 4.0], 4, &[2.0, 2.0]);
        let objective = ObjectiveConfig { alpha: 0.3 };
        for seed in 0..20 {
            let (a, _) = mips_icmp(&req, &objective, &cfg_with(60), seed).unwrap();
            assert!(validate_icmp(&req, &a, false).is_feasible());
        }
    }

    #[test]
    fn prior_bias_never_preempts_unbiased_unvisited() {
        let req = chain_req(&[5.0], 4, &[4.0, 4.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let stage = IcmpStage::new(&req, &objective);
        let cfg = MctsConfig {
            prior_bias: true,
            ..cfg_with(10)
        };
        let mut tree = SearchTree::new(&stage, cfg, 5).unwrap();
        // put i0 into container 0 by hand, then expand every action of the
        // resulting node: (i1 -> c0) scores 1 (unbiased), the rest score 0
        // (biased with a phantom visit)
        let root_action = Action { item: 0, target: 0 };
        let pos = tree.nodes[0]
            .untried
            .iter()
            .position(|&a| a == root_action)
            .unwrap();
        tree.nodes[0].untried.remove(pos);
        let mut state = tree.nodes[0].state.clone();
        stage.apply(&mut state, root_action);
        let untried = tree.feasible_actions(&state);
        tree.nodes.push(Node {
            state,
            parent: Some(0),
            action: Some(root_action),
            visits: 1,
            total_cost: 0.0,
            untried,
            children: Vec::new(),
        });
        let node = tree.nodes.len() - 1;
        while !tree.nodes[node].untried.is_empty() {
            tree.expand(node);
        }
        let children = tree.nodes[node].children.clone();
        // biased children carry the phantom visit at the prior cost
        let is_biased = |c: usize| tree.nodes[c].visits == 1 && tree.nodes[c].total_cost > 0.0;
        let colocate: Vec<usize> = children
            .iter()
            .copied()
            .filter(|&c| !is_biased(c))
            .collect();
        assert_eq!(colocate.len(), 1, "exactly one adjacent action expected");
        assert!(children.iter().any(|&c| is_biased(c)));
        for &b in &children {
            if is_biased(b) {
                assert_eq!(tree.nodes[b].total_cost, stage.prior_cost());
            }
        }
        // the unvisited unbiased child wins selection at any ω
        assert_eq!(tree.best_child(node, 0.0), Some(colocate[0]));
        assert_eq!(
            tree.best_child(node, std::f64::consts::SQRT_2),
            Some(colocate[0])
        );
    }

    #[test]
    fn csmp_stage_end_to_end() {
        let req = chain_req(&[4.0, 2.0], 3, &[2.0, 2.0]);
        let objective = ObjectiveConfig { alpha: 1.0 };
        let servers = (0..3)
            .map(|id| Server {
                id,
                capacity: rv(&[4.0, 4.0]),
            })
            .collect();
        let hop = vec![
            vec![0.0, 2.0, 4.0],
            vec![2.0, 0.0, 2.0],
            vec![4.0, 2.0, 0.0],
        ];
        let state = ClusterState::new(servers, hop).unwrap();
        let (icmp, _) = mips_icmp(&req, &objective, &cfg_with(200), 3).unwrap();
        let (csmp, _) = mips_csmp(&state, &req, &icmp, &cfg_with(200), 4).unwrap();
        assert!(validate_csmp(&state, &req, Some(&icmp), &csmp, false).is_feasible());
        // identical seeds reproduce the mapping bit-exactly
        let (again, _) = mips_csmp(&state, &req, &icmp, &cfg_with(200), 4).unwrap();
        assert_eq!(csmp, again);
    }
}
