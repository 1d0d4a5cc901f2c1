//! Graph-based route search over the drivable lanelets.
//!
//! Each edge `i -> j` costs `w1 * d(i) + w2 / p(i)`, where `d(i)` is the
//! centerline length of lanelet `i` and `p(i)` its preference under the
//! active profile. The k cheapest loopless routes are found with Yen's
//! algorithm; equal-cost routes are ordered by their id sequence.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map::{Lanelet, LaneletId, LaneletMap};
use crate::odd::{lanelet_preference, CostWeights, OddError, OddProfile};

/// Default number of route candidates offered to the operator.
pub const DEFAULT_K: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("lanelet {0} is not part of the routing graph")]
    NotInGraph(LaneletId),
    #[error("k must be positive")]
    ZeroK,
    #[error("edge {from} -> {to} has invalid cost {cost}")]
    InvalidEdgeCost {
        from: LaneletId,
        to: LaneletId,
        cost: f64,
    },
    #[error(transparent)]
    Odd(#[from] OddError),
}

/// Cost of leaving lanelet `from` toward `to`.
pub fn edge_cost(
    from: &Lanelet,
    _to: &Lanelet,
    profile: &OddProfile,
    weights: &CostWeights,
) -> Result<f64, RouteError> {
    let p = lanelet_preference(from, profile)?;
    if p <= 0.0 {
        return Err(OddError::NotDrivable(from.id()).into());
    }
    Ok(weights.distance() * from.length() + weights.preference() / p)
}

/// Weighted successor graph restricted to a drivable area.
///
/// Nodes are stored densely in ascending id order, so comparing index
/// sequences is the same as comparing id sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingGraph {
    ids: Vec<LaneletId>,
    index: BTreeMap<LaneletId, usize>,
    // adjacency sorted by target index
    adjacency: Vec<Vec<(usize, f64)>>,
    lengths: Vec<f64>,
}

impl RoutingGraph {
    /// Builds the graph over `area`, keeping successor edges whose both ends lie in it.
    pub fn build(
        map: &LaneletMap,
        area: &BTreeSet<LaneletId>,
        profile: &OddProfile,
        weights: &CostWeights,
    ) -> Result<Self, RouteError> {
        let mut edges = Vec::new();
        let mut lengths = BTreeMap::new();
        for &id in area {
            let from = map.get(id).ok_or(RouteError::NotInGraph(id))?;
            lengths.insert(id, from.length());
            for &succ in from.successors() {
                if area.contains(&succ) {
                    let to = map.get(succ).ok_or(RouteError::NotInGraph(succ))?;
                    edges.push((id, succ, edge_cost(from, to, profile, weights)?));
                }
            }
        }
        Self::from_parts(lengths, edges)
    }

    /// Builds a graph from explicit edges; every node has unit length.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = LaneletId>,
        edges: impl IntoIterator<Item = (LaneletId, LaneletId, f64)>,
    ) -> Result<Self, RouteError> {
        let lengths = nodes.into_iter().map(|id| (id, 1.0)).collect();
        Self::from_parts(lengths, edges.into_iter().collect())
    }

    fn from_parts(
        lengths: BTreeMap<LaneletId, f64>,
        edges: Vec<(LaneletId, LaneletId, f64)>,
    ) -> Result<Self, RouteError> {
        let ids: Vec<LaneletId> = lengths.keys().copied().collect();
        let index: BTreeMap<LaneletId, usize> =
            ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        for (from, to, cost) in edges {
            if !(cost.is_finite() && cost >= 0.0) {
                return Err(RouteError::InvalidEdgeCost { from, to, cost });
            }
            let f = *index.get(&from).ok_or(RouteError::NotInGraph(from))?;
            let t = *index.get(&to).ok_or(RouteError::NotInGraph(to))?;
            adjacency[f].push((t, cost));
        }
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            list.dedup_by_key(|e| e.0);
        }
        Ok(Self {
            lengths: ids.iter().map(|id| lengths[id]).collect(),
            ids,
            index,
            adjacency,
        })
    }

    pub fn contains(&self, id: LaneletId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn nodes(&self) -> &[LaneletId] {
        &self.ids
    }

    pub fn edges(&self) -> impl Iterator<Item = (LaneletId, LaneletId, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(move |(f, list)| {
                list.iter()
                    .map(move |&(t, c)| (self.ids[f], self.ids[t], c))
            })
    }

    pub fn edge_cost(&self, from: LaneletId, to: LaneletId) -> Option<f64> {
        let f = *self.index.get(&from)?;
        let t = *self.index.get(&to)?;
        self.cost_idx(f, t)
    }

    fn cost_idx(&self, f: usize, t: usize) -> Option<f64> {
        self.adjacency[f]
            .binary_search_by_key(&t, |e| e.0)
            .ok()
            .map(|i| self.adjacency[f][i].1)
    }

    fn to_route(&self, path: &[usize]) -> Route {
        Route {
            lanelet_ids: path.iter().map(|&i| self.ids[i]).collect(),
            total_cost: self.path_cost(path),
            total_distance: path.iter().map(|&i| self.lengths[i]).sum(),
        }
    }

    /// Sum of edge costs in path order.
    fn path_cost(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .map(|w| self.cost_idx(w[0], w[1]).expect("path follows graph edges"))
            .sum()
    }

    /// Cheapest path from `source` to `target` avoiding removed nodes and
    /// edges; among equal-cost paths the lexicographically smallest.
    fn shortest_path(
        &self,
        source: usize,
        target: usize,
        removed_nodes: &[bool],
        removed_edges: &HashSet<(usize, usize)>,
    ) -> Option<Vec<usize>> {
        let n = self.ids.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(QueueEntry {
            cost: 0.0,
            node: source,
        });
        while let Some(QueueEntry { cost, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for &(next, c) in &self.adjacency[node] {
                if removed_nodes[next] || removed_edges.contains(&(node, next)) {
                    continue;
                }
                let candidate = cost + c;
                if candidate < dist[next] {
                    dist[next] = candidate;
                    heap.push(QueueEntry {
                        cost: candidate,
                        node: next,
                    });
                }
            }
        }
        if !dist[target].is_finite() {
            return None;
        }
        // Nodes that reach the target over tight edges (dist[u] + c == dist[v]).
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        for u in 0..n {
            if !dist[u].is_finite() {
                continue;
            }
            for &(v, c) in &self.adjacency[u] {
                if !removed_nodes[v] && !removed_edges.contains(&(u, v)) && dist[u] + c == dist[v] {
                    reverse[v].push(u);
                }
            }
        }
        let mut reaches = vec![false; n];
        let mut stack = vec![target];
        reaches[target] = true;
        while let Some(v) = stack.pop() {
            for &u in &reverse[v] {
                if !reaches[u] {
                    reaches[u] = true;
                    stack.push(u);
                }
            }
        }
        // Lexicographically first simple tight path; backtracking is only
        // ever needed with zero-cost edges.
        let mut path = vec![source];
        let mut on_path = vec![false; n];
        on_path[source] = true;
        if self.lex_first(
            target,
            &dist,
            &reaches,
            removed_nodes,
            removed_edges,
            &mut path,
            &mut on_path,
        ) {
            Some(path)
        } else {
            None
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn lex_first(
        &self,
        target: usize,
        dist: &[f64],
        reaches: &[bool],
        removed_nodes: &[bool],
        removed_edges: &HashSet<(usize, usize)>,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
    ) -> bool {
        let u = *path.last().unwrap();
        if u == target {
            return true;
        }
        for &(v, c) in &self.adjacency[u] {
            if on_path[v]
                || !reaches[v]
                || removed_nodes[v]
                || removed_edges.contains(&(u, v))
                || dist[u] + c != dist[v]
            {
                continue;
            }
            path.push(v);
            on_path[v] = true;
            if self.lex_first(
                target,
                dist,
                reaches,
                removed_nodes,
                removed_edges,
                path,
                on_path,
            ) {
                return true;
            }
            on_path[v] = false;
            path.pop();
        }
        false
    }
}

#[derive(PartialEq)]
struct QueueEntry {
    cost: f64,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A loopless lanelet sequence with its accumulated cost and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub lanelet_ids: Vec<LaneletId>,
    pub total_cost: f64,
    pub total_distance: f64,
}

impl Route {
    pub fn start(&self) -> LaneletId {
        self.lanelet_ids[0]
    }

    pub fn goal(&self) -> LaneletId {
        *self.lanelet_ids.last().unwrap()
    }
}

/// Candidate ordering: ascending cost, then id sequence.
fn route_order(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// The `k` cheapest loopless routes from `start` to `goal`, ascending by
/// cost. Fewer are returned only when fewer exist.
pub fn k_best_routes(
    graph: &RoutingGraph,
    start: LaneletId,
    goal: LaneletId,
    k: usize,
) -> Result<Vec<Route>, RouteError> {
    if k == 0 {
        return Err(RouteError::ZeroK);
    }
    let s = *graph
        .index
        .get(&start)
        .ok_or(RouteError::NotInGraph(start))?;
    let t = *graph.index.get(&goal).ok_or(RouteError::NotInGraph(goal))?;
    let n = graph.ids.len();

    let no_nodes = vec![false; n];
    let Some(first) = graph.shortest_path(s, t, &no_nodes, &HashSet::new()) else {
        return Ok(Vec::new());
    };
    let mut accepted: Vec<Vec<usize>> = vec![first];
    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = accepted.iter().cloned().collect();

    while accepted.len() < k {
        let previous = accepted.last().unwrap().clone();
        for i in 0..previous.len().saturating_sub(1) {
            let spur = previous[i];
            let root = &previous[..=i];
            let mut removed_edges = HashSet::new();
            for path in &accepted {
                if path.len() > i + 1 && &path[..=i] == root {
                    removed_edges.insert((path[i], path[i + 1]));
                }
            }
            let mut removed_nodes = vec![false; n];
            for &node in &root[..i] {
                removed_nodes[node] = true;
            }
            if let Some(spur_path) = graph.shortest_path(spur, t, &removed_nodes, &removed_edges) {
                let mut total = root[..i].to_vec();
                total.extend(spur_path);
                if seen.insert(total.clone()) {
                    candidates.push((graph.path_cost(&total), total));
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| route_order(a.1, b.1))
            .map(|(i, _)| i)
            .unwrap();
        accepted.push(candidates.swap_remove(best).1);
    }

    Ok(accepted.iter().map(|p| graph.to_route(p)).collect())
}
