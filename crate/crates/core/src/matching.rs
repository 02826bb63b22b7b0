//! Maximum-weight one-to-one matching on association graph components.

use crate::graph::{connected_components, AssociationGraph, Edge};
use crate::model::MatchSolver;

/// Pairs of `(prev_index, next_index)` sorted by `prev_index`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub total_weight: f64,
}

impl Matching {
    /// Checks that the matching is one-to-one and only uses edges of `g`.
    pub fn validate(&self, g: &AssociationGraph) -> Result<(), String> {
        let mut prev_seen = vec![false; g.prev_nodes.len()];
        let mut next_seen = vec![false; g.next_nodes.len()];
        for &(p, n) in &self.pairs {
            if g.edge(p, n).is_none() {
                return Err(format!("pair ({p}, {n}) is not an edge"));
            }
            if std::mem::replace(&mut prev_seen[p], true) {
                return Err(format!("prev node {p} matched twice"));
            }
            if std::mem::replace(&mut next_seen[n], true) {
                return Err(format!("next node {n} matched twice"));
            }
        }
        Ok(())
    }
}

/// Above this many next-side nodes the exact solver switches from the
/// subset DP to the Hungarian method.
const DP_MAX_NEXT: usize = 16;

/// Maximum total weight matching using only edges with `weight >= min_weight`.
///
/// Among optimal matchings the lexicographically smallest pair list (sorted
/// by prev index) is returned. Components with more than 16 next-side nodes
/// are solved with the Hungarian method, which is still optimal but breaks
/// ties by its own deterministic order.
pub fn solve_component(c: &AssociationGraph, min_weight: f64) -> Matching {
    let edges: Vec<Edge> = c.edges.iter().copied().filter(|e| e.weight >= min_weight).collect();
    if edges.is_empty() {
        return Matching::default();
    }
    let (np, nn) = (c.prev_nodes.len(), c.next_nodes.len());
    if nn <= DP_MAX_NEXT {
        subset_dp(np, nn, &edges)
    } else {
        hungarian(np, nn, &edges)
    }
}

fn subset_dp(np: usize, nn: usize, edges: &[Edge]) -> Matching {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); np];
    for e in edges {
        adj[e.prev].push((e.next, e.weight));
    }
    adj.iter_mut().for_each(|a| a.sort_by_key(|&(j, _)| j));

    let masks = 1usize << nn;
    // best[i * masks + m]: optimum over prev nodes i.. with next set m taken
    let mut best = vec![0.0f64; (np + 1) * masks];
    for i in (0..np).rev() {
        for m in 0..masks {
            let mut v = best[(i + 1) * masks + m];
            for &(j, w) in &adj[i] {
                if m & (1 << j) == 0 {
                    v = v.max(w + best[(i + 1) * masks + (m | (1 << j))]);
                }
            }
            best[i * masks + m] = v;
        }
    }

    let total = best[0];
    let eps = 1e-12 * total.abs().max(1.0);
    let mut pairs = Vec::new();
    let mut m = 0usize;
    let mut sum = 0.0;
    for i in 0..np {
        let remaining = best[i * masks + m];
        // nothing left to gain: the empty continuation is the smallest list
        if remaining <= eps {
            break;
        }
        // a non-empty continuation exists, so matching i now (smallest j)
        // beats every list that starts at a later prev index
        let pick = adj[i]
            .iter()
            .find(|&&(j, w)| m & (1 << j) == 0 && w + best[(i + 1) * masks + (m | (1 << j))] >= remaining - eps);
        if let Some(&(j, w)) = pick {
            pairs.push((i, j));
            m |= 1 << j;
            sum += w;
        }
    }
    Matching {
        pairs,
        total_weight: sum,
    }
}

/// Hungarian method on the square completion of the weight matrix, with
/// missing edges as zero-weight "unmatched" slots.
fn hungarian(np: usize, nn: usize, edges: &[Edge]) -> Matching {
    let n = np.max(nn);
    let mut cost = vec![0.0f64; n * n];
    for e in edges {
        cost[e.prev * n + e.next] = -e.weight;
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let weight_of = |i: usize, j: usize| edges.iter().find(|e| e.prev == i && e.next == j).map(|e| e.weight);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (j, &i) in p.iter().enumerate().take(n + 1).skip(1) {
        if i == 0 || i > np || j > nn {
            continue;
        }
        if let Some(w) = weight_of(i - 1, j - 1) {
            if w > 0.0 {
                pairs.push((i - 1, j - 1));
                total += w;
            }
        }
    }
    pairs.sort_unstable();
    Matching {
        pairs,
        total_weight: total,
    }
}

/// Repeatedly takes the heaviest remaining edge whose endpoints are free.
pub fn solve_greedy(c: &AssociationGraph, min_weight: f64) -> Matching {
    let mut edges: Vec<Edge> = c.edges.iter().copied().filter(|e| e.weight >= min_weight).collect();
    edges.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then_with(|| (a.prev, a.next).cmp(&(b.prev, b.next)))
    });
    let mut prev_used = vec![false; c.prev_nodes.len()];
    let mut next_used = vec![false; c.next_nodes.len()];
    let mut pairs = Vec::new();
    let mut total = 0.0;
    for e in edges {
        if !prev_used[e.prev] && !next_used[e.next] {
            prev_used[e.prev] = true;
            next_used[e.next] = true;
            pairs.push((e.prev, e.next));
            total += e.weight;
        }
    }
    pairs.sort_unstable();
    Matching {
        pairs,
        total_weight: total,
    }
}

/// Splits `g` into components, solves each and merges the result back into
/// the indices of `g`.
pub fn solve_graph(g: &AssociationGraph, min_weight: f64, solver: MatchSolver) -> Matching {
    let mut out = Matching::default();
    for comp in connected_components(g) {
        if comp.graph.edges.is_empty() {
            continue;
        }
        let m = match solver {
            MatchSolver::Exact => solve_component(&comp.graph, min_weight),
            MatchSolver::Greedy => solve_greedy(&comp.graph, min_weight),
        };
        out.total_weight += m.total_weight;
        out.pairs
            .extend(m.pairs.iter().map(|&(p, n)| (comp.prev_index[p], comp.next_index[n])));
    }
    out.pairs.sort_unstable();
    out
}
