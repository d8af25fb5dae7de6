//! Seeded Louvain refinement.
//!
//! Each phase runs local moves on the current (possibly aggregated) graph and
//! then collapses communities into super nodes. The first phase starts from
//! the caller's partition rather than from singletons. Community labels of
//! the seed are carried through aggregation, so surviving communities keep
//! their original label. A local-move phase also splits communities that
//! are internally disconnected, which single-node moves cannot do.
//!
//! Graphs use the adjacency-matrix convention throughout: `d_i = Σ_j w_ij`
//! and `2L = Σ_ij w_ij`, where a diagonal entry `w_ii` is counted once.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{Partition, PartitionSequence};
use crate::error::{Error, Result};
use crate::metrics::modularity;
use crate::temporal::{SliceEdges, TemporalNetwork};

/// Minimum modularity gain for a move or a phase to count.
pub const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SliceGraph {
    /// Sorted `(neighbor, w)` lists; `i`'s diagonal entry appears once in its own list.
    adjacency: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    two_l: f64,
}

impl SliceGraph {
    /// Builds from symmetric matrix entries `(i, j, w_ij)`. Entries are
    /// summed per ordered pair; callers supply both orientations for `i != j`.
    fn from_entries(n: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in entries {
            if w != 0.0 {
                *acc.entry((i, j)).or_insert(0.0) += w;
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for ((i, j), w) in acc {
            adjacency[i].push((j, w));
        }
        let degree: Vec<f64> = adjacency
            .iter()
            .map(|row| row.iter().map(|e| e.1).sum())
            .collect();
        let two_l = degree.iter().sum();
        Self {
            adjacency,
            degree,
            two_l,
        }
    }

    /// Undirected edges `{u, v}` with weight `w`. A loop `(u, u, w)` sets the
    /// diagonal entry `w_uu += w`.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let entries = edges.into_iter().flat_map(|(u, v, w)| {
            if u == v {
                vec![(u, u, w)]
            } else {
                vec![(u, v, w), (v, u, w)]
            }
        });
        Self::from_entries(n, entries)
    }

    /// Subgraph of `slice` induced on `nodes`; local index `k` is `nodes[k]`.
    pub fn induced(slice: &SliceEdges, nodes: &[usize]) -> Self {
        let local: BTreeMap<usize, usize> =
            nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        let edges = slice
            .edges()
            .iter()
            .filter_map(|&(i, j, w)| Some((*local.get(&i)?, *local.get(&j)?, w)));
        Self::from_edges(nodes.len(), edges)
    }

    pub fn from_dense(w: &ndarray::Array2<f64>) -> Self {
        let entries = w.indexed_iter().map(|((i, j), &x)| (i, j, x));
        Self::from_entries(w.nrows(), entries)
    }

    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degree[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn two_l(&self) -> f64 {
        self.two_l
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|p| self.adjacency[i][p].1)
            .unwrap_or(0.0)
    }

    pub fn is_edgeless(&self) -> bool {
        self.two_l <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMoveOutcome {
    pub partition: Vec<usize>,
    pub improved: bool,
    /// Sum of the modularity gains of all applied moves.
    pub gain: f64,
}

/// Maps arbitrary labels onto `0..c` preserving their order.
fn densify(partition: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut labels: Vec<usize> = partition.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let dense = partition
        .iter()
        .map(|l| labels.binary_search(l).expect("label present"))
        .collect();
    (dense, labels)
}

pub fn local_move_phase(g: &SliceGraph, partition: &[usize]) -> LocalMoveOutcome {
    let order: Vec<usize> = (0..g.n()).collect();
    local_move_phase_ordered(g, partition, &order)
}

/// Splits every community whose members form several connected pieces
/// (through intra-community edges) into one community per piece. Pieces
/// without any weight stay with the first piece. Split-off pieces take fresh
/// dense ids appended after `labels.len()`; each split is applied only when
/// it raises modularity by more than [`MIN_GAIN`]. Returns the total gain.
fn split_disconnected(
    g: &SliceGraph,
    comm: &mut [usize],
    labels: &mut Vec<usize>,
    total: &mut Vec<f64>,
) -> f64 {
    let n = g.n();
    let two_l = g.two_l();
    let mut piece = vec![usize::MAX; n];
    // Pieces per community in discovery order: (member list, degree sum).
    let mut pieces: Vec<Vec<(Vec<usize>, f64)>> = vec![Vec::new(); labels.len()];
    let mut stack = Vec::new();
    for start in 0..n {
        if piece[start] != usize::MAX {
            continue;
        }
        let c = comm[start];
        let id = pieces[c].len();
        let mut members = Vec::new();
        let mut weight = 0.0;
        piece[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            members.push(i);
            weight += g.degree(i);
            for &(j, _) in g.neighbors(i) {
                if comm[j] == c && piece[j] == usize::MAX {
                    piece[j] = id;
                    stack.push(j);
                }
            }
        }
        pieces[c].push((members, weight));
    }

    let mut gain = 0.0;
    for (c, parts) in pieces.into_iter().enumerate() {
        let weighted: Vec<&(Vec<usize>, f64)> = parts.iter().filter(|p| p.1 > 0.0).collect();
        if weighted.len() < 2 {
            continue;
        }
        let whole: f64 = weighted.iter().map(|p| p.1).sum();
        let split_gain =
            (whole * whole - weighted.iter().map(|p| p.1 * p.1).sum::<f64>()) / (two_l * two_l);
        if split_gain <= MIN_GAIN {
            continue;
        }
        gain += split_gain;
        let mut next_label = labels.last().map_or(0, |l| l + 1);
        for (members, weight) in weighted.into_iter().skip(1) {
            let id = labels.len();
            labels.push(next_label);
            next_label += 1;
            total.push(*weight);
            total[c] -= weight;
            for &i in members {
                comm[i] = id;
            }
        }
    }
    gain
}

/// Local moves visiting nodes in `order` each sweep. A node moves to the
/// neighboring community with the largest gain (lowest label on ties) only
/// when that gain exceeds [`MIN_GAIN`]; sweeps repeat until none moves.
/// Before the sweeps, and again whenever they moved a node, communities that
/// are internally disconnected are split into their connected pieces.
pub fn local_move_phase_ordered(
    g: &SliceGraph,
    partition: &[usize],
    order: &[usize],
) -> LocalMoveOutcome {
    assert_eq!(partition.len(), g.n(), "partition must cover every node");
    if g.is_edgeless() || g.n() == 0 {
        return LocalMoveOutcome {
            partition: partition.to_vec(),
            improved: false,
            gain: 0.0,
        };
    }
    let (mut comm, mut labels) = densify(partition);
    let two_l = g.two_l();
    let mut total = vec![0.0; labels.len()];
    for (i, &c) in comm.iter().enumerate() {
        total[c] += g.degree(i);
    }

    let mut improved = false;
    let mut gain_sum = 0.0;
    loop {
        let split_gain = split_disconnected(g, &mut comm, &mut labels, &mut total);
        if split_gain > 0.0 {
            improved = true;
            gain_sum += split_gain;
        }
        let (moved, move_gain) = sweep_until_stable(g, &mut comm, &mut total, order, two_l);
        gain_sum += move_gain;
        improved |= moved;
        if !moved {
            break;
        }
    }

    LocalMoveOutcome {
        partition: comm.into_iter().map(|c| labels[c]).collect(),
        improved,
        gain: gain_sum,
    }
}

fn sweep_until_stable(
    g: &SliceGraph,
    comm: &mut [usize],
    total: &mut [f64],
    order: &[usize],
    two_l: f64,
) -> (bool, f64) {
    let mut link = vec![0.0; total.len()];
    let mut seen = vec![false; total.len()];
    let mut touched: Vec<usize> = Vec::new();
    let mut any = false;
    let mut gain_sum = 0.0;
    loop {
        let mut moved = false;
        for &i in order {
            let own = comm[i];
            let di = g.degree(i);
            for &(j, w) in g.neighbors(i) {
                if j == i {
                    continue;
                }
                let c = comm[j];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            total[own] -= di;
            let score = |c: usize, link: &[f64], total: &[f64]| link[c] - total[c] * di / two_l;
            let stay = score(own, &link, total);

            touched.sort_unstable();
            let mut best = own;
            let mut best_score = f64::NEG_INFINITY;
            for &c in &touched {
                if c == own {
                    continue;
                }
                let s = score(c, &link, total);
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            let delta = if best == own {
                0.0
            } else {
                2.0 * (best_score - stay) / two_l
            };
            let target = if delta > MIN_GAIN { best } else { own };
            if target != own {
                moved = true;
                gain_sum += delta;
                comm[i] = target;
            }
            total[target] += di;

            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        any = true;
    }
    (any, gain_sum)
}

/// Quotient graph with one super node per distinct label (ascending label
/// order). Returns the graph and the label of each super node.
pub fn aggregate(g: &SliceGraph, partition: &[usize]) -> (SliceGraph, Vec<usize>) {
    assert_eq!(partition.len(), g.n(), "partition must cover every node");
    let (dense, labels) = densify(partition);
    let entries = (0..g.n()).flat_map(|i| {
        let ci = dense[i];
        let dense = &dense;
        g.neighbors(i).iter().map(move |&(j, w)| (ci, dense[j], w))
    });
    (SliceGraph::from_entries(labels.len(), entries), labels)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineOptions {
    /// Visit nodes in a seeded random order instead of ascending index order.
    pub shuffle_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult {
    pub partition: Vec<usize>,
    pub modularity_before: f64,
    pub modularity_after: f64,
    pub phases_run: usize,
}

pub fn refine_partition(g: &SliceGraph, initial: &[usize]) -> RefineResult {
    refine_partition_with(g, initial, &RefineOptions::default())
}

pub fn refine_partition_with(
    g: &SliceGraph,
    initial: &[usize],
    options: &RefineOptions,
) -> RefineResult {
    assert_eq!(initial.len(), g.n(), "seed partition must cover every node");
    if g.is_edgeless() {
        return RefineResult {
            partition: initial.to_vec(),
            modularity_before: 0.0,
            modularity_after: 0.0,
            phases_run: 0,
        };
    }

    let mut rng = options.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let q_before = modularity(g, initial).value;
    let mut current = initial.to_vec();
    let mut q = q_before;

    let mut level_graph = g.clone();
    let mut level_part = initial.to_vec();
    // Original node -> node of the current level graph.
    let mut to_level: Vec<usize> = (0..g.n()).collect();
    let mut phases = 0;
    loop {
        phases += 1;
        let mut order: Vec<usize> = (0..level_graph.n()).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let moved = local_move_phase_ordered(&level_graph, &level_part, &order);
        if !moved.improved {
            break;
        }
        let projected: Vec<usize> = to_level.iter().map(|&s| moved.partition[s]).collect();
        let q_new = modularity(g, &projected).value;
        if q_new < q {
            break;
        }
        current = projected;
        let progressed = q_new - q > MIN_GAIN;
        q = q_new;
        if !progressed {
            break;
        }

        let (next_graph, labels) = aggregate(&level_graph, &moved.partition);
        for s in to_level.iter_mut() {
            *s = labels
                .binary_search(&moved.partition[*s])
                .expect("label present");
        }
        level_graph = next_graph;
        level_part = labels;
    }

    RefineResult {
        partition: current,
        modularity_before: q_before,
        modularity_after: q,
        phases_run: phases,
    }
}

/// Refines every slice independently on the subgraph induced by its present
/// nodes. Slices may run on parallel workers; results keep slice order.
pub fn refine_sequence(
    net: &TemporalNetwork,
    parts: &PartitionSequence,
    options: &RefineOptions,
) -> Result<PartitionSequence> {
    if parts.num_slices() != net.num_slices() {
        return Err(Error::Dimension(format!(
            "{} partitions for {} slices",
            parts.num_slices(),
            net.num_slices()
        )));
    }
    let refined: Vec<Result<Partition>> = (0..net.num_slices())
        .into_par_iter()
        .map(|t| {
            refine_slice(net.slice(t), parts.slice(t), options).map_err(|e| Error::Slice {
                slice: t,
                source: Box::new(e),
            })
        })
        .collect();
    let assignments = refined.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PartitionSequence::new(assignments))
}

fn refine_slice(
    slice: &SliceEdges,
    seed: &Partition,
    options: &RefineOptions,
) -> Result<Partition> {
    let nodes = slice.active_nodes();
    if seed.len() != nodes.len() || !nodes.iter().all(|v| seed.contains_key(v)) {
        return Err(Error::Dimension(
            "partition does not cover exactly the present nodes".into(),
        ));
    }
    if nodes.is_empty() {
        return Ok(Partition::new());
    }
    let g = SliceGraph::induced(slice, &nodes);
    let initial: Vec<usize> = nodes.iter().map(|v| seed[v]).collect();
    let result = refine_partition_with(&g, &initial, options);
    Ok(nodes.into_iter().zip(result.partition).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangles() -> SliceGraph {
        SliceGraph::from_edges(
            6,
            [
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
            ],
        )
    }

    fn bridged() -> SliceGraph {
        SliceGraph::from_edges(
            6,
            [
                (0, 1, 1.0),
                (1, 2, 1.0),
                (0, 2, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (3, 5, 1.0),
                (2, 3, 1.0),
            ],
        )
    }

    #[test]
    fn graph_bookkeeping() {
        let g = bridged();
        assert_eq!(g.two_l(), 14.0);
        assert_eq!(g.degree(2), 3.0);
        assert_eq!(g.weight(2, 3), 1.0);
        assert_eq!(g.weight(3, 2), 1.0);
        assert_eq!(g.weight(0, 5), 0.0);
    }

    #[test]
    fn local_optimum_is_stable() {
        let out = local_move_phase(&triangles(), &[0, 0, 0, 1, 1, 1]);
        assert!(!out.improved);
        assert_eq!(out.partition, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn single_community_splits_into_triangles() {
        let g = triangles();
        let out = local_move_phase(&g, &[0; 6]);
        assert!(out.improved);
        let q = modularity(&g, &out.partition).value;
        assert!((q - 0.5).abs() < 1e-12, "q = {q}");
        assert!((out.gain - q).abs() < 1e-10);
    }

    #[test]
    fn single_node_never_moves() {
        let g = SliceGraph::from_edges(1, [(0, 0, 2.0)]);
        let out = local_move_phase(&g, &[5]);
        assert!(!out.improved);
        assert_eq!(out.partition, vec![5]);
    }

    #[test]
    fn singleton_aggregate_is_identity() {
        let g = bridged();
        let (agg, labels) = aggregate(&g, &[0, 1, 2, 3, 4, 5]);
        assert_eq!(agg, g);
        assert_eq!(labels, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn aggregate_two_triangles_with_bridge() {
        let g = bridged();
        let (agg, labels) = aggregate(&g, &[4, 4, 4, 9, 9, 9]);
        assert_eq!(labels, vec![4, 9]);
        assert_eq!(agg.n(), 2);
        assert_eq!(agg.weight(0, 0), 6.0);
        assert_eq!(agg.weight(1, 1), 6.0);
        assert_eq!(agg.weight(0, 1), 1.0);
        assert_eq!(agg.two_l(), 14.0);
        let q_agg = modularity(&agg, &[0, 1]).value;
        let q = modularity(&g, &[4, 4, 4, 9, 9, 9]).value;
        assert!((q_agg - q).abs() < 1e-12);
    }

    #[test]
    fn optimal_seed_is_kept() {
        let g = bridged();
        let res = refine_partition(&g, &[3, 3, 3, 8, 8, 8]);
        assert_eq!(res.partition, vec![3, 3, 3, 8, 8, 8]);
        assert_eq!(res.phases_run, 1);
        assert!((res.modularity_after - 5.0 / 14.0).abs() < 1e-12);
    }

    #[test]
    fn singletons_reach_two_triangles() {
        let g = bridged();
        let res = refine_partition(&g, &[0, 1, 2, 3, 4, 5]);
        assert!((res.modularity_after - 5.0 / 14.0).abs() < 1e-12);
        let p = &res.partition;
        assert!(p[0] == p[1] && p[1] == p[2] && p[3] == p[4] && p[4] == p[5] && p[0] != p[3]);
    }

    #[test]
    fn edgeless_is_noop() {
        let g = SliceGraph::from_edges(3, []);
        let res = refine_partition(&g, &[0, 1, 1]);
        assert_eq!(res.partition, vec![0, 1, 1]);
        assert_eq!(res.modularity_after, 0.0);
        assert_eq!(res.phases_run, 0);
    }

    #[test]
    fn shuffled_order_is_seed_deterministic() {
        let g = bridged();
        let opts = RefineOptions {
            shuffle_seed: Some(11),
        };
        let a = refine_partition_with(&g, &[0, 1, 2, 3, 4, 5], &opts);
        let b = refine_partition_with(&g, &[0, 1, 2, 3, 4, 5], &opts);
        assert_eq!(a, b);
        assert!(a.modularity_after >= a.modularity_before);
    }
}
