//! Constraint-graph construction, feasibility checks, normalized edit
//! distance, the greedy node-weight baseline, and brute-force oracles.

use crate::error::{Error, Result};

/// Pairwise constraint over candidate items.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// No constraint: the graph is complete.
    None,
    /// Titles of adjacent items must satisfy ned(a, b) >= tau.
    MinNed { tau: f64 },
}

/// Undirected constraint graph over the N candidates of one sample.
/// Nodes are candidate indices 0..n; `item_ids[i]` maps back to items.
#[derive(Debug, Clone)]
pub struct ConstraintGraph {
    n: usize,
    adjacency: Vec<bool>, // n*n, symmetric, no self-loops
    item_ids: Vec<u32>,
}

impl ConstraintGraph {
    pub fn complete(item_ids: Vec<u32>) -> Self {
        let n = item_ids.len();
        let mut adjacency = vec![true; n * n];
        for i in 0..n {
            adjacency[i * n + i] = false;
        }
        ConstraintGraph { n, adjacency, item_ids }
    }

    /// Graph from an explicit undirected edge list over node indices.
    pub fn from_edges(item_ids: Vec<u32>, edges: &[(usize, usize)]) -> Self {
        let n = item_ids.len();
        let mut adjacency = vec![false; n * n];
        for &(i, j) in edges {
            assert!(i < n && j < n && i != j, "bad edge ({i},{j}) for n={n}");
            adjacency[i * n + j] = true;
            adjacency[j * n + i] = true;
        }
        ConstraintGraph { n, adjacency, item_ids }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn item_ids(&self) -> &[u32] {
        &self.item_ids
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|i| (i + 1..self.n).filter(|&j| self.adjacent(i, j)).count())
            .sum()
    }

    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        for (a, &i) in nodes.iter().enumerate() {
            for &j in &nodes[a + 1..] {
                if i == j || !self.adjacent(i, j) {
                    return false;
                }
            }
        }
        true
    }
}

/// Unit-cost Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Normalized edit distance: Levenshtein over max(|a|, |b|), in [0, 1].
/// Two empty strings give 0 by convention.
pub fn ned(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let max = la.max(lb);
    if max == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / max as f64
}

/// Build the constraint graph over items; `titles` is required for the
/// min-ned constraint and ignored otherwise.
pub fn build_graph(
    item_ids: &[u32],
    titles: Option<&[String]>,
    constraint: &Constraint,
) -> Result<ConstraintGraph> {
    let n = item_ids.len();
    if n < 2 {
        return Err(Error::Config(format!("graph needs >= 2 items, got {n}")));
    }
    match constraint {
        Constraint::None => Ok(ConstraintGraph::complete(item_ids.to_vec())),
        Constraint::MinNed { tau } => {
            let titles = titles.ok_or_else(|| {
                Error::Config("min_ned constraint requires item titles".into())
            })?;
            if titles.len() != n {
                return Err(Error::Config(format!(
                    "have {} titles for {n} items",
                    titles.len()
                )));
            }
            let mut adjacency = vec![false; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    if ned(&titles[i], &titles[j]) >= *tau {
                        adjacency[i * n + j] = true;
                        adjacency[j * n + i] = true;
                    }
                }
            }
            Ok(ConstraintGraph {
                n,
                adjacency,
                item_ids: item_ids.to_vec(),
            })
        }
    }
}

/// True iff `candidate` extends the clique `chosen` to a larger clique.
/// `chosen` must itself be a clique.
pub fn is_feasible_extension(graph: &ConstraintGraph, chosen: &[usize], candidate: usize) -> bool {
    assert!(graph.is_clique(chosen), "chosen set is not a clique");
    !chosen.contains(&candidate) && chosen.iter().all(|&c| graph.adjacent(c, candidate))
}

/// Greedy node-weight card: pick the max-weight node, drop it and every
/// non-adjacent node, repeat K times. Ties break on the lowest index.
pub fn greedy_node_weight(graph: &ConstraintGraph, weights: &[f64], k: usize) -> Result<Vec<usize>> {
    assert_eq!(weights.len(), graph.n(), "one weight per node required");
    assert!(weights.iter().all(|w| w.is_finite()), "weights must be finite");
    assert!(k <= graph.n(), "K={k} exceeds node count {}", graph.n());
    let mut remaining: Vec<usize> = (0..graph.n()).collect();
    let mut card = Vec::with_capacity(k);
    for step in 0..k {
        let &best = remaining
            .iter()
            .reduce(|a, b| if weights[*b] > weights[*a] { b } else { a })
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "greedy ran out of feasible nodes at step {} of {k}",
                    step + 1
                ))
            })?;
        card.push(best);
        remaining.retain(|&j| j != best && graph.adjacent(best, j));
    }
    Ok(card)
}

/// Exhaustive argmax over all K-cliques; ties break lexicographically.
/// Guarded to C(n, K) <= 10^6 combinations.
pub fn brute_force_best_card(
    graph: &ConstraintGraph,
    score_fn: impl Fn(&[usize]) -> f64,
    k: usize,
) -> Result<Vec<usize>> {
    let n = graph.n();
    assert!(k <= n, "K={k} exceeds node count {n}");
    assert!(
        n_choose_k(n, k) <= 1_000_000,
        "C({n},{k}) exceeds the brute-force budget"
    );
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        if graph.is_clique(&combo) {
            let s = score_fn(&combo);
            let better = match &best {
                None => true,
                Some((bs, bc)) => s > *bs || (s == *bs && combo < *bc),
            };
            if better {
                best = Some((s, combo.clone()));
            }
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return best.map(|(_, c)| c).ok_or_else(|| {
                    Error::Infeasible(format!("graph has no clique of size {k}"))
                });
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

fn n_choose_k(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > 10_000_000 {
            return acc;
        }
    }
    acc
}
