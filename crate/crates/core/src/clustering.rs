//! Rule similarity graph and seeded Louvain community detection.
//!
//! Modularity with resolution `γ` over a symmetric weight matrix `A`:
//!
//! ```text
//! Q = (1/2m) Σ_ij [A_ij − γ k_i k_j / 2m] δ(c_i, c_j)
//! ```
//!
//! where `k_i = Σ_j A_ij` and `2m = Σ_ij A_ij`. The rule graph has no self loops;
//! aggregated graphs carry each community's internal weight on the diagonal so
//! that `Q` is preserved exactly between levels.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dedup::CanonicalRule;
use crate::error::ClusteringError;
use crate::model::Rule;

/// Shared antecedent plus shared consequent items over the corresponding unions.
pub fn rule_similarity(a: &Rule, b: &Rule) -> f64 {
    let shared = a.antecedent().intersection_len(b.antecedent())
        + a.consequent().intersection_len(b.consequent());
    let total = a.antecedent().union_len(b.antecedent()) + a.consequent().union_len(b.consequent());
    shared as f64 / total as f64
}

/// Undirected weighted graph without self loops. Zero-weight pairs are not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl SimilarityGraph {
    /// Builds a graph from `(i, j, w)` triples; later duplicates overwrite earlier ones.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut maps: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n];
        for (i, j, w) in edges {
            assert!(i < n && j < n, "edge endpoint out of range");
            if i == j {
                continue;
            }
            if w == 0.0 {
                maps[i].remove(&j);
                maps[j].remove(&i);
            } else {
                maps[i].insert(j, w);
                maps[j].insert(i, w);
            }
        }
        let adjacency = maps
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, f64)> = m.into_iter().collect();
                v.sort_by_key(|&(j, _)| j);
                v
            })
            .collect();
        SimilarityGraph { adjacency }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.adjacency[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency[i].iter().map(|&(_, w)| w).sum()
    }

    /// Sum of all edge weights, each undirected edge counted once.
    pub fn total_weight(&self) -> f64 {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().filter(move |&&(j, _)| j > i))
            .map(|&(_, w)| w)
            .sum()
    }
}

/// Complete pairwise similarity graph; node `i` is `rules[i]`.
pub fn build_similarity_graph(rules: &[CanonicalRule]) -> SimilarityGraph {
    let adjacency = (0..rules.len())
        .into_par_iter()
        .map(|i| {
            (0..rules.len())
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let w = rule_similarity(&rules[i].rule, &rules[j].rule);
                    (w > 0.0).then_some((j, w))
                })
                .collect()
        })
        .collect();
    SimilarityGraph { adjacency }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Cluster id per node; ids are dense `0..k`, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub resolution: f64,
    pub seed: u64,
    pub modularity: f64,
}

impl Partition {
    pub fn cluster_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |&m| m + 1)
    }

    /// Node ids per cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

/// Weighted modularity of `assignment` at `resolution`. Edgeless graphs score 0.
pub fn modularity(graph: &SimilarityGraph, assignment: &[usize], resolution: f64) -> f64 {
    let two_m: f64 = (0..graph.node_count()).map(|i| graph.degree(i)).sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let k = assignment.iter().max().map_or(0, |&m| m + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for i in 0..graph.node_count() {
        let c = assignment[i];
        total[c] += graph.degree(i);
        for &(j, w) in graph.neighbors(i) {
            if assignment[j] == c {
                internal[c] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&total)
        .map(|(&inner, &tot)| inner / two_m - resolution * (tot / two_m) * (tot / two_m))
        .sum()
}

struct Level {
    /// Off-diagonal neighbours, both directions stored.
    adjacency: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_graph(graph: &SimilarityGraph) -> Self {
        let n = graph.node_count();
        Level {
            adjacency: graph.adjacency.clone(),
            self_loops: vec![0.0; n],
            degree: (0..n).map(|i| graph.degree(i)).collect(),
        }
    }

    fn len(&self) -> usize {
        self.degree.len()
    }

    /// One local-moving phase; returns the community of each node and whether anything moved.
    fn local_moves(&self, resolution: f64, two_m: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        const EPS: f64 = 1e-12;
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut total = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut to_comm = vec![0.0; n];
        let mut seen = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let own = community[i];
                let ki = self.degree[i];
                touched.clear();
                for &(j, w) in &self.adjacency[i] {
                    let c = community[j];
                    if !seen[c] {
                        seen[c] = true;
                        touched.push(c);
                    }
                    to_comm[c] += w;
                }
                total[own] -= ki;
                let gain = |c: usize, w: f64, total: &[f64]| w - resolution * total[c] * ki / two_m;
                let mut best = own;
                let mut best_gain = gain(own, to_comm[own], &total);
                for &c in &touched {
                    let g = gain(c, to_comm[c], &total);
                    if g > best_gain + EPS {
                        best = c;
                        best_gain = g;
                    }
                }
                total[best] += ki;
                community[i] = best;
                if best != own {
                    moved = true;
                }
                for &c in &touched {
                    to_comm[c] = 0.0;
                    seen[c] = false;
                }
            }
            if !moved {
                break;
            }
            any_move = true;
        }
        (community, any_move)
    }

    /// Collapses communities into nodes. Returns the new level and the dense
    /// community index of each current node.
    fn aggregate(&self, community: &[usize]) -> (Level, Vec<usize>) {
        let mut dense = vec![usize::MAX; self.len()];
        let mut next = 0;
        let mapping: Vec<usize> = community
            .iter()
            .map(|&c| {
                if dense[c] == usize::MAX {
                    dense[c] = next;
                    next += 1;
                }
                dense[c]
            })
            .collect();
        let mut maps: Vec<HashMap<usize, f64>> = vec![HashMap::new(); next];
        let mut self_loops = vec![0.0; next];
        let mut degree = vec![0.0; next];
        for i in 0..self.len() {
            let ci = mapping[i];
            degree[ci] += self.degree[i];
            self_loops[ci] += self.self_loops[i];
            for &(j, w) in &self.adjacency[i] {
                let cj = mapping[j];
                if ci == cj {
                    self_loops[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_default() += w;
                }
            }
        }
        let adjacency = maps
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, f64)> = m.into_iter().collect();
                v.sort_by_key(|&(j, _)| j);
                v
            })
            .collect();
        (
            Level {
                adjacency,
                self_loops,
                degree,
            },
            mapping,
        )
    }
}

fn relabel(assignment: &mut [usize]) {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    for c in assignment.iter_mut() {
        let next = ids.len();
        *c = *ids.entry(*c).or_insert(next);
    }
}

/// Louvain with resolution scaling on the null-model term. Node visit order
/// at every level is a shuffle drawn from a ChaCha8 stream seeded by `seed`.
pub fn louvain(
    graph: &SimilarityGraph,
    resolution: f64,
    seed: u64,
) -> Result<Partition, ClusteringError> {
    louvain_traced(graph, resolution, seed).map(|(p, _)| p)
}

/// As [`louvain`], also returning the modularity after each aggregation level.
pub fn louvain_traced(
    graph: &SimilarityGraph,
    resolution: f64,
    seed: u64,
) -> Result<(Partition, Vec<f64>), ClusteringError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(ClusteringError::EmptyGraph);
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(ClusteringError::InvalidResolution);
    }
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut trace = vec![modularity(graph, &assignment, resolution)];
    let two_m: f64 = (0..n).map(|i| graph.degree(i)).sum();
    if two_m > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = Level::from_graph(graph);
        loop {
            let (community, moved) = level.local_moves(resolution, two_m, &mut rng);
            if !moved {
                break;
            }
            let (next, mapping) = level.aggregate(&community);
            for a in assignment.iter_mut() {
                *a = mapping[*a];
            }
            trace.push(modularity(graph, &assignment, resolution));
            if next.len() == level.len() {
                break;
            }
            level = next;
        }
    }
    relabel(&mut assignment);
    let modularity = modularity(graph, &assignment, resolution);
    Ok((
        Partition {
            assignment,
            resolution,
            seed,
            modularity,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_util::rule;

    fn two_triangles() -> SimilarityGraph {
        SimilarityGraph::from_edges(
            6,
            [
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
                (2, 3, 0.01),
            ],
        )
    }

    #[test]
    fn similarity_examples() {
        let a = rule(&["A:1", "B:2"], &["C:3"]);
        assert_eq!(rule_similarity(&a, &a), 1.0);
        assert_eq!(rule_similarity(&a, &rule(&["A:1"], &["C:3"])), 2.0 / 3.0);
        assert_eq!(rule_similarity(&a, &rule(&["D:1"], &["E:1"])), 0.0);
        // Same items, different sides.
        assert_eq!(
            rule_similarity(&rule(&["A:1"], &["B:1"]), &rule(&["B:1"], &["A:1"])),
            0.0
        );
    }

    #[test]
    fn graph_shapes() {
        let one = build_similarity_graph(&[CanonicalRule::new(rule(&["A:1"], &["B:1"]))]);
        assert_eq!(one.node_count(), 1);
        assert!(one.neighbors(0).is_empty());
        let three: Vec<CanonicalRule> = [
            rule(&["A:1"], &["B:1"]),
            rule(&["A:1"], &["C:1"]),
            rule(&["A:1", "D:1"], &["B:1"]),
        ]
        .into_iter()
        .map(CanonicalRule::new)
        .collect();
        let g = build_similarity_graph(&three);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
        assert_eq!(g.weight(0, 1), 1.0 / 3.0);
        assert_eq!(g.weight(0, 2), 2.0 / 3.0);
        assert_eq!(g.weight(1, 2), 1.0 / 4.0);
    }

    #[test]
    fn two_triangles_split() {
        let p = louvain(&two_triangles(), 1.0, 0).unwrap();
        assert_eq!(p.assignment, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn single_node() {
        let g = SimilarityGraph::from_edges(1, []);
        let p = louvain(&g, 1.0, 0).unwrap();
        assert_eq!(p.assignment, vec![0]);
    }

    #[test]
    fn empty_graph_is_an_error() {
        let g = SimilarityGraph::from_edges(0, []);
        assert_eq!(
            louvain(&g, 1.0, 0).unwrap_err(),
            ClusteringError::EmptyGraph
        );
        assert_eq!(
            louvain(&two_triangles(), 0.0, 0).unwrap_err(),
            ClusteringError::InvalidResolution
        );
    }

    #[test]
    fn tiny_resolution_merges_complete_graph() {
        let n = 7;
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j, 0.5)));
        let g = SimilarityGraph::from_edges(n, edges);
        let p = louvain(&g, 1e-6, 3).unwrap();
        assert_eq!(p.cluster_count(), 1);
    }

    #[test]
    fn edgeless_graph_stays_singletons() {
        let g = SimilarityGraph::from_edges(3, []);
        let p = louvain(&g, 1.0, 0).unwrap();
        assert_eq!(p.assignment, vec![0, 1, 2]);
        assert_eq!(p.modularity, 0.0);
    }

    #[test]
    fn modularity_closed_forms() {
        let g = two_triangles();
        // Degrees: 2,2,2.01,2.01,2,2; 2m = 12.02.
        let two_m = 12.02;
        let sum_sq: f64 = [2.0, 2.0, 2.01, 2.01, 2.0, 2.0]
            .iter()
            .map(|k: &f64| (k / two_m).powi(2))
            .sum();
        for gamma in [0.5, 1.0, 2.5] {
            let all_one = modularity(&g, &[0; 6], gamma);
            assert!((all_one - (1.0 - gamma)).abs() < 1e-12);
            let singles = modularity(&g, &[0, 1, 2, 3, 4, 5], gamma);
            assert!((singles + gamma * sum_sq).abs() < 1e-12);
        }
    }

    #[test]
    fn levels_do_not_decrease_modularity() {
        let g = two_triangles();
        let (_, trace) = louvain_traced(&g, 1.0, 11).unwrap();
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn resolution_controls_granularity() {
        let mut edges = Vec::new();
        for block in 0..4 {
            let base = block * 4;
            for i in 0..4 {
                for j in i + 1..4 {
                    edges.push((base + i, base + j, 1.0));
                }
            }
        }
        for block in 0..4 {
            for other in block + 1..4 {
                edges.push((block * 4, other * 4, 0.3));
            }
        }
        let g = SimilarityGraph::from_edges(16, edges);
        let coarse = louvain(&g, 0.05, 0).unwrap().cluster_count();
        let fine = louvain(&g, 1.0, 0).unwrap().cluster_count();
        assert!(coarse < fine, "{coarse} !< {fine}");
    }
}
