//! Exhaustive simple-path enumeration over small random graphs.

use dcpp_core::map::LaneletId;
use dcpp_core::route::RoutingGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Edge = (u64, u64, f64);

/// Every simple path from `s` to `t`, with its in-order edge cost sum.
pub fn all_simple_paths(edges: &[Edge], s: u64, t: u64) -> Vec<(f64, Vec<u64>)> {
    fn walk(
        u: u64,
        t: u64,
        edges: &[Edge],
        path: &mut Vec<u64>,
        cost: f64,
        out: &mut Vec<(f64, Vec<u64>)>,
    ) {
        if u == t {
            out.push((cost, path.clone()));
            return;
        }
        for &(a, b, c) in edges {
            if a == u && !path.contains(&b) {
                path.push(b);
                walk(b, t, edges, path, cost + c, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(s, t, edges, &mut vec![s], 0.0, &mut out);
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    out
}

pub fn random_graph(rng: &mut ChaCha8Rng, integer_costs: bool) -> (u64, Vec<Edge>) {
    let n = rng.random_range(2..=10u64);
    let density = rng.random_range(0.15..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.random_bool(density) {
                let c = if integer_costs {
                    rng.random_range(0..4) as f64
                } else {
                    rng.random_range(0.01..10.0)
                };
                edges.push((a, b, c));
            }
        }
    }
    (n, edges)
}

pub fn build(n: u64, edges: &[Edge]) -> RoutingGraph {
    RoutingGraph::from_edges(
        (0..n).map(LaneletId),
        edges
            .iter()
            .map(|&(a, b, c)| (LaneletId(a), LaneletId(b), c)),
    )
    .unwrap()
}
