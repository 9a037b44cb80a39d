//! Comparison schemes: FFD, R-Heron, and T-Heron for the instance-container
//! stage, best-fit for the container-server stage.
//!
//! R-Heron ranks containers by added cross-container traffic plus the
//! Euclidean distance between the instance demand and the container's
//! remaining resources; the two terms are summed unweighted, mixing traffic
//! units with resource units.

use std::collections::VecDeque;

use crate::error::{Error, Result, StageId};
use crate::model::{AppRequest, ClusterState, CsmpAssignment, IcmpAssignment, ResourceVector};
use crate::objectives::{CsmpContext, IcmpContext, ObjectiveConfig};

fn icmp_failure(step: usize, reason: &str) -> Error {
    Error::PlacementFailed {
        stage: StageId::Icmp,
        step,
        reason: reason.into(),
    }
}

/// First-fit decreasing over an active container list: each instance goes to
/// the first active container (sorted by descending available resources,
/// lexicographic over the dimensions, then id) with room; a fresh container
/// is activated only when none fits.
pub fn ffd_icmp(req: &AppRequest) -> Result<IcmpAssignment> {
    let cfg = ObjectiveConfig { alpha: 1.0 };
    let ctx = IcmpContext::new(req, &cfg);
    let mut partial = ctx.empty_partial();
    let mut active: Vec<usize> = Vec::new();
    let mut next_unused = 0usize;

    for (step, inst) in req.instances.iter().enumerate() {
        active.sort_by(|&a, &b| {
            let fa = ctx.remaining_capacity(&partial, a);
            let fb = ctx.remaining_capacity(&partial, b);
            fb.as_slice()
                .iter()
                .zip(fa.as_slice())
                .find_map(|(x, y)| x.partial_cmp(y).filter(|o| o.is_ne()))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let chosen = active
            .iter()
            .copied()
            .find(|&c| ctx.action_feasible(&partial, inst.id, c));
        let target = match chosen {
            Some(c) => c,
            None => {
                if next_unused >= req.containers.len() {
                    return Err(icmp_failure(step, "no unused container left"));
                }
                let c = next_unused;
                next_unused += 1;
                active.push(c);
                if !ctx.action_feasible(&partial, inst.id, c) {
                    return Err(icmp_failure(step, "instance does not fit an empty container"));
                }
                c
            }
        };
        ctx.place(&mut partial, inst.id, target);
    }
    Ok(ctx.to_assignment(&partial, req.id))
}

/// Components in breadth-first order over reversed streams, starting from
/// the sink side; with several sinks, a virtual root preceding all of them
/// makes this a multi-source BFS. Components unreachable from any sink are
/// appended in id order.
fn sink_side_bfs_order(req: &AppRequest) -> Vec<usize> {
    let n = req.components.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut has_out = vec![false; n];
    for e in &req.edges {
        reverse[e.dst].push(e.src);
        has_out[e.src] = true;
    }
    for preds in &mut reverse {
        preds.sort_unstable();
    }
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| !has_out[v]).collect();
    for &v in &queue {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &p in &reverse[v] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    order.extend((0..n).filter(|&v| !seen[v]));
    order
}

/// R-Heron: walk components from the sink side and drop every instance into
/// the feasible container with minimum resource distance, defined as the
/// cross-container traffic the placement adds plus the Euclidean distance
/// between the demand and the container's remaining resources.
pub fn r_heron_icmp(req: &AppRequest) -> Result<IcmpAssignment> {
    let cfg = ObjectiveConfig { alpha: 1.0 };
    let ctx = IcmpContext::new(req, &cfg);
    let mut partial = ctx.empty_partial();
    let mut step = 0usize;
    for component in sink_side_bfs_order(req) {
        for inst in req.instances.iter().filter(|i| i.component == component) {
            let mut best: Option<(f64, usize)> = None;
            for c in 0..req.containers.len() {
                if !ctx.action_feasible(&partial, inst.id, c) {
                    continue;
                }
                let added_traffic = ctx.delta(&partial, inst.id, c);
                let distance = inst
                    .demand
                    .euclidean_distance(&ctx.remaining_capacity(&partial, c));
                let score = added_traffic + distance;
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, c));
                }
            }
            let Some((_, c)) = best else {
                return Err(icmp_failure(step, "no container has enough resources"));
            };
            ctx.place(&mut partial, inst.id, c);
            step += 1;
        }
    }
    Ok(ctx.to_assignment(&partial, req.id))
}

/// Total incident stream rate of one instance (incoming plus outgoing).
fn total_incident_rate(req: &AppRequest, instance: usize) -> f64 {
    let v = req.instances[instance].component;
    let p = req.components[v].parallelism as f64;
    req.edges
        .iter()
        .filter(|e| e.src == v || e.dst == v)
        .map(|e| e.rate)
        .sum::<f64>()
        / p
}

/// T-Heron: instances in descending order of incident traffic, each mapped
/// to the feasible container adding minimum cross-container traffic.
pub fn t_heron_icmp(req: &AppRequest) -> Result<IcmpAssignment> {
    let cfg = ObjectiveConfig { alpha: 1.0 };
    let ctx = IcmpContext::new(req, &cfg);
    let mut partial = ctx.empty_partial();

    let mut order: Vec<usize> = (0..req.instances.len()).collect();
    order.sort_by(|&a, &b| {
        total_incident_rate(req, b)
            .partial_cmp(&total_incident_rate(req, a))
            .expect("rates are finite")
            .then(a.cmp(&b))
    });

    for (step, &i) in order.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..req.containers.len() {
            if !ctx.action_feasible(&partial, i, c) {
                continue;
            }
            let added = ctx.delta(&partial, i, c);
            if best.is_none_or(|(d, _)| added < d) {
                best = Some((added, c));
            }
        }
        let Some((_, c)) = best else {
            return Err(icmp_failure(step, "no feasible container"));
        };
        ctx.place(&mut partial, i, c);
    }
    Ok(ctx.to_assignment(&partial, req.id))
}

/// Best-fit: containers in id order, each to the feasible server whose free
/// resources most tightly wrap the container capacity (minimum Euclidean
/// norm of the residual), ties to the smallest server id.
pub fn best_fit_csmp(
    state: &ClusterState,
    req: &AppRequest,
    icmp: &IcmpAssignment,
) -> Result<CsmpAssignment> {
    let ctx = CsmpContext::new(state, req, icmp);
    let mut partial = ctx.empty_partial();
    let zero = ResourceVector::zeros(state.resource_dim());
    for item in 0..ctx.item_count() {
        let cap = &req.containers[ctx.used_containers[item]].capacity;
        let mut best: Option<(f64, usize)> = None;
        for s in 0..ctx.server_count() {
            if !ctx.action_feasible(&partial, item, s) {
                continue;
            }
            let mut residual = ctx.remaining_free(&partial, s);
            residual.sub_assign_clamped(cap);
            let norm = residual.euclidean_distance(&zero);
            if best.is_none_or(|(n, _)| norm < n) {
                best = Some((norm, s));
            }
        }
        let Some((_, s)) = best else {
            return Err(Error::PlacementFailed {
                stage: StageId::Csmp,
                step: item,
                reason: format!(
                    "no server fits container {}",
                    ctx.used_containers[item]
                ),
            });
        };
        ctx.place(&mut partial, item, s);
    }
    Ok(ctx.to_assignment(&partial, req.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_csmp, validate_icmp, Server, StreamEdge};
    use crate::objectives::{
        brute_force_csmp, cross_container_traffic, csmp_objective, icmp_delta,
    };

    fn rv(q: &[f64]) -> ResourceVector {
        ResourceVector::new(q.to_vec()).unwrap()
    }

    #[test]
    fn ffd_packs_into_one_container() {
        let req = AppRequest::expand(
            0,
            vec![(3, rv(&[1.0, 1.0]))],
            vec![],
            3,
            rv(&[8.0, 8.0]),
        )
        .unwrap();
        let a = ffd_icmp(&req).unwrap();
        assert!(validate_icmp(&req, &a, false).is_feasible());
        assert_eq!(a.used_containers().len(), 1);
    }

    #[test]
    fn ffd_pairs_into_two_containers() {
        // three (4,4) instances, (8,8) containers: two go together
        let req = AppRequest::expand(
            0,
            vec![(3, rv(&[4.0, 4.0]))],
            vec![],
            3,
            rv(&[8.0, 8.0]),
        )
        .unwrap();
        let a = ffd_icmp(&req).unwrap();
        assert_eq!(a.used_containers().len(), 2);
        assert_eq!(a.placement[&0], a.placement[&1]);
        assert_ne!(a.placement[&0], a.placement[&2]);
    }

    #[test]
    fn ffd_oversized_instance_fails() {
        // bypass intake validation to exercise the scheme's own guard
        let req = AppRequest {
            id: 0,
            components: vec![crate::model::Component {
                id: 0,
                parallelism: 1,
            }],
            edges: vec![],
            instances: vec![crate::model::Instance {
                id: 0,
                component: 0,
                demand: rv(&[9.0, 9.0]),
            }],
            containers: vec![crate::model::Container {
                id: 0,
                capacity: rv(&[4.0, 4.0]),
            }],
        };
        assert!(matches!(
            ffd_icmp(&req),
            Err(Error::PlacementFailed { .. })
        ));
    }

    #[test]
    fn ffd_prefers_roomiest_active_container() {
        // two actives with different headroom: the roomier one sorts first
        let req = AppRequest::expand(
            0,
            vec![
                (1, rv(&[4.0, 4.0])),
                (1, rv(&[2.0, 2.0])),
                (1, rv(&[1.0, 1.0])),
            ],
            vec![],
            3,
            rv(&[8.0, 8.0]),
        )
        .unwrap();
        // i0 (4,4) -> c0; i1 (2,2) -> c0 (still roomy); i2 -> c0 as well
        let a = ffd_icmp(&req).unwrap();
        assert_eq!(a.used_containers().len(), 1);
    }

    fn multi_sink_request() -> AppRequest {
        // 0 -> 1, 0 -> 2: two sinks (1, 2)
        AppRequest::expand(
            0,
            (0..3).map(|_| (1, rv(&[1.0, 1.0]))).collect(),
            vec![
                StreamEdge {
                    src: 0,
                    dst: 1,
                    rate: 2.0,
                },
                StreamEdge {
                    src: 0,
                    dst: 2,
                    rate: 3.0,
                },
            ],
            3,
            rv(&[4.0, 4.0]),
        )
        .unwrap()
    }

    #[test]
    fn bfs_order_starts_at_sinks() {
        let req = multi_sink_request();
        assert_eq!(sink_side_bfs_order(&req), vec![1, 2, 0]);
        // single sink chain: sink first, then its predecessors
        let chain = AppRequest::expand(
            0,
            (0..3).map(|_| (1, rv(&[1.0, 1.0]))).collect(),
            vec![
                StreamEdge {
                    src: 0,
                    dst: 1,
                    rate: 1.0,
                },
                StreamEdge {
                    src: 1,
                    dst: 2,
                    rate: 1.0,
                },
            ],
            3,
            rv(&[4.0, 4.0]),
        )
        .unwrap();
        assert_eq!(sink_side_bfs_order(&chain), vec![2, 1, 0]);
    }

    #[test]
    fn r_heron_single_choice() {
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[1.0, 1.0]))],
            vec![],
            1,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let a = r_heron_icmp(&req).unwrap();
        assert_eq!(a.placement[&0], 0);
    }

    #[test]
    fn r_heron_tie_breaks_to_first_container() {
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[1.0, 1.0]))],
            vec![],
            2,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let a = r_heron_icmp(&req).unwrap();
        assert_eq!(a.placement[&0], 0);
    }

    #[test]
    fn r_heron_keeps_successive_instances_together() {
        // ample capacity: the second instance joins its peer, because the
        // distance term shrinks alongside the zero added traffic
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[2.0, 2.0])), (1, rv(&[2.0, 2.0]))],
            vec![StreamEdge {
                src: 0,
                dst: 1,
                rate: 5.0,
            }],
            2,
            rv(&[8.0, 8.0]),
        )
        .unwrap();
        let a = r_heron_icmp(&req).unwrap();
        assert_eq!(a.placement[&0], a.placement[&1]);
        assert!(validate_icmp(&req, &a, false).is_feasible());
    }

    #[test]
    fn r_heron_full_containers_fail() {
        let req = AppRequest::expand(
            0,
            vec![(3, rv(&[2.0, 2.0]))],
            vec![],
            1,
            rv(&[4.0, 4.0]),
        )
        .unwrap();
        assert!(matches!(
            r_heron_icmp(&req),
            Err(Error::PlacementFailed { .. })
        ));
    }

    #[test]
    fn incident_rate_finds_star_hub() {
        // hub 0 feeds leaves 1..3, each rate 2: hub rate 6, leaves 2
        let req = AppRequest::expand(
            0,
            (0..4).map(|_| (1, rv(&[1.0, 1.0]))).collect(),
            (1..4)
                .map(|dst| StreamEdge {
                    src: 0,
                    dst,
                    rate: 2.0,
                })
                .collect(),
            4,
            rv(&[4.0, 4.0]),
        )
        .unwrap();
        assert_eq!(total_incident_rate(&req, 0), 6.0);
        for leaf in 1..4 {
            assert_eq!(total_incident_rate(&req, leaf), 2.0);
        }
    }

    #[test]
    fn t_heron_colocates_when_roomy() {
        let req = AppRequest::expand(
            0,
            vec![(2, rv(&[1.0, 1.0])), (2, rv(&[1.0, 1.0]))],
            vec![StreamEdge {
                src: 0,
                dst: 1,
                rate: 8.0,
            }],
            4,
            rv(&[16.0, 16.0]),
        )
        .unwrap();
        let a = t_heron_icmp(&req).unwrap();
        assert_eq!(cross_container_traffic(&req, &a), 0.0);
        assert_eq!(a.used_containers().len(), 1);
    }

    #[test]
    fn t_heron_split_follows_greedy_deltas() {
        // chain A -> B -> C rates (2, 4); containers hold two unit
        // instances, so one split is forced
        let req = AppRequest::expand(
            0,
            (0..3).map(|_| (1, rv(&[1.0, 1.0]))).collect(),
            vec![
                StreamEdge {
                    src: 0,
                    dst: 1,
                    rate: 2.0,
                },
                StreamEdge {
                    src: 1,
                    dst: 2,
                    rate: 4.0,
                },
            ],
            3,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let a = t_heron_icmp(&req).unwrap();
        // order by incident rate: B (6), C (4), A (2); B and C co-locate,
        // A pays the lighter 2-unit stream
        assert_eq!(a.placement[&1], a.placement[&2]);
        assert_ne!(a.placement[&0], a.placement[&1]);
        assert_eq!(cross_container_traffic(&req, &a), 2.0);

        // per-step deltas telescoped along T-Heron's own order equal T(X)
        let cfg = ObjectiveConfig { alpha: 1.0 };
        let mut partial = IcmpAssignment::empty(0);
        let mut total = 0.0;
        for &i in &[1usize, 2, 0] {
            let c = a.placement[&i];
            total += icmp_delta(&req, &partial, i, c, &cfg).unwrap();
            partial.placement.insert(i, c);
        }
        assert!((total - cross_container_traffic(&req, &a)).abs() < 1e-9);
    }

    fn cluster(capacities: &[&[f64]], theta: f64) -> ClusterState {
        let servers = capacities
            .iter()
            .enumerate()
            .map(|(id, c)| Server {
                id,
                capacity: rv(c),
            })
            .collect::<Vec<_>>();
        let n = servers.len();
        let hop = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { theta })
                    .collect::<Vec<_>>()
            })
            .collect();
        ClusterState::new(servers, hop).unwrap()
    }

    #[test]
    fn best_fit_single_server() {
        let req = AppRequest::expand(
            0,
            vec![(2, rv(&[1.0, 1.0]))],
            vec![],
            2,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        let mut icmp = IcmpAssignment::empty(0);
        icmp.placement.insert(0, 0);
        icmp.placement.insert(1, 1);
        let state = cluster(&[&[8.0, 8.0]], 2.0);
        let a = best_fit_csmp(&state, &req, &icmp).unwrap();
        assert!(a.placement.values().all(|&s| s == 0));
        assert_eq!(csmp_objective(&state, &req, &icmp, &a), 0.0);
    }

    #[test]
    fn best_fit_picks_tightest_server() {
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[4.0, 4.0]))],
            vec![],
            1,
            rv(&[4.0, 4.0]),
        )
        .unwrap();
        let mut icmp = IcmpAssignment::empty(0);
        icmp.placement.insert(0, 0);
        let state = cluster(&[&[16.0, 8.0], &[4.0, 4.0]], 2.0);
        let a = best_fit_csmp(&state, &req, &icmp).unwrap();
        assert_eq!(a.placement[&0], 1, "zero residual beats the big server");
    }

    #[test]
    fn best_fit_no_room_fails() {
        let req = AppRequest::expand(
            0,
            vec![(1, rv(&[4.0, 4.0]))],
            vec![],
            1,
            rv(&[4.0, 4.0]),
        )
        .unwrap();
        let mut icmp = IcmpAssignment::empty(0);
        icmp.placement.insert(0, 0);
        let state = cluster(&[&[2.0, 2.0], &[3.0, 3.0]], 2.0);
        assert!(matches!(
            best_fit_csmp(&state, &req, &icmp),
            Err(Error::PlacementFailed { .. })
        ));
    }

    /// Misaligned objectives between the stages: stage one splits a
    /// three-container pipeline X-Y-Z; best-fit then separates all three
    /// and pays 2 units of cross-server traffic, while the optimum keeps
    /// Y and Z together and pays 1.
    #[test]
    fn stage_two_misalignment_fixture() {
        let req = AppRequest::expand(
            0,
            (0..3).map(|_| (1, rv(&[2.0, 2.0]))).collect(),
            vec![
                StreamEdge {
                    src: 0,
                    dst: 1,
                    rate: 1.0,
                },
                StreamEdge {
                    src: 1,
                    dst: 2,
                    rate: 1.0,
                },
            ],
            3,
            rv(&[2.0, 2.0]),
        )
        .unwrap();
        // stage-one outcome: one instance per container
        let mut icmp = IcmpAssignment::empty(0);
        for i in 0..3 {
            icmp.placement.insert(i, i);
        }
        let state = cluster(&[&[2.0, 2.0], &[4.0, 4.0], &[2.0, 2.0]], 2.0);

        let crossing = |a: &CsmpAssignment| {
            let mut t = 0.0;
            for (&c1, &s1) in &a.placement {
                for (&c2, &s2) in &a.placement {
                    if c1 != c2 && s1 != s2 {
                        t += crate::objectives::container_pair_traffic(&req, &icmp, c1, c2)
                            .unwrap();
                    }
                }
            }
            t
        };

        let bf = best_fit_csmp(&state, &req, &icmp).unwrap();
        assert_eq!(bf.placement[&0], 0);
        assert_eq!(bf.placement[&1], 2);
        assert_eq!(bf.placement[&2], 1);
        assert_eq!(crossing(&bf), 2.0);
        assert_eq!(csmp_objective(&state, &req, &icmp, &bf), 4.0);

        let (opt, value) = brute_force_csmp(&state, &req, &icmp).unwrap();
        assert_eq!(value, 2.0);
        assert_eq!(opt.placement[&1], opt.placement[&2], "Y and Z share a server");
        assert_ne!(opt.placement[&0], opt.placement[&1]);
        assert_eq!(crossing(&opt), 1.0);
        assert!(validate_csmp(&state, &req, Some(&icmp), &opt, false).is_feasible());
    }
}
