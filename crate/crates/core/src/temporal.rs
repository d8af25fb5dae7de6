//! Edge-event ingestion, time slicing and dense tensor materialization.
//!
//! Events are read from a tab-separated text format:
//!
//! ```text
//! # time  u  v  [weight]
//! 0	a	b
//! 0	b	c	2.5
//! ```
//!
//! Slicing maps each event onto a slice index, aggregates repeated contacts
//! (binary or summed) and drops self-loops. The resulting [`TemporalNetwork`]
//! shares one node universe across all slices; nodes without incident edges
//! at a slice keep zero rows in the tensor and are reported absent by the
//! [`PresenceMask`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling for dense tensor storage: 4 GiB.
pub const DEFAULT_TENSOR_BUDGET: u128 = 4 << 30;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeEvent {
    pub time: f64,
    pub u: String,
    pub v: String,
    pub weight: f64,
}

impl EdgeEvent {
    pub fn new(time: f64, u: impl Into<String>, v: impl Into<String>, weight: f64) -> Self {
        Self {
            time,
            u: u.into(),
            v: v.into(),
            weight,
        }
    }

    pub fn is_self_loop(&self) -> bool {
        self.u == self.v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SlicingSpec {
    /// The time column is already an integer slice id.
    PreLabeled,
    /// Slice index is `floor((time - origin) / window)`.
    UniformWindow { window: f64, origin: f64 },
}

impl SlicingSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SlicingSpec::PreLabeled => Ok(()),
            SlicingSpec::UniformWindow { window, origin } => {
                if !(window.is_finite() && window > 0.0) {
                    return Err(Error::Config(format!(
                        "window must be positive, got {window}"
                    )));
                }
                if !origin.is_finite() {
                    return Err(Error::Config(format!(
                        "origin must be finite, got {origin}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn slice_index(&self, time: f64) -> Result<usize> {
        match *self {
            SlicingSpec::PreLabeled => {
                if time < 0.0 || time.fract() != 0.0 || time > u32::MAX as f64 {
                    return Err(Error::Config(format!(
                        "pre-labeled slice id must be a nonnegative integer, got {time}"
                    )));
                }
                Ok(time as usize)
            }
            SlicingSpec::UniformWindow { window, origin } => {
                if time < origin {
                    return Err(Error::BeforeOrigin { time, origin });
                }
                Ok(((time - origin) / window).floor() as usize)
            }
        }
    }

    /// A timestamp that maps back onto slice `t`.
    pub fn representative_time(&self, t: usize) -> f64 {
        match *self {
            SlicingSpec::PreLabeled => t as f64,
            SlicingSpec::UniformWindow { window, origin } => origin + (t as f64 + 0.5) * window,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// 1 if at least one positive-weight event touched the pair in the slice.
    #[default]
    Binary,
    /// Sum of event weights for the pair within the slice.
    CountSum,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses one event per line. Blank lines and `#` comments are skipped;
/// every other malformed line is an error naming its 1-based line number.
pub fn load_edge_events<R: BufRead>(source: R) -> Result<Vec<EdgeEvent>> {
    let mut events = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(parse_error(
                lineno,
                format!(
                    "expected 3 or 4 tab-separated fields, found {}",
                    fields.len()
                ),
            ));
        }
        let time: f64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(lineno, format!("invalid time {:?}", fields[0])))?;
        if !time.is_finite() || time < 0.0 {
            return Err(parse_error(
                lineno,
                format!("time must be finite and nonnegative, got {time}"),
            ));
        }
        let u = fields[1].trim();
        let v = fields[2].trim();
        if u.is_empty() || v.is_empty() {
            return Err(parse_error(lineno, "empty node identifier"));
        }
        let weight = match fields.get(3) {
            None => 1.0,
            Some(raw) => raw
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_error(lineno, format!("invalid weight {raw:?}")))?,
        };
        if !weight.is_finite() {
            return Err(parse_error(
                lineno,
                format!("weight must be finite, got {weight}"),
            ));
        }
        if weight < 0.0 {
            return Err(Error::NegativeWeight {
                line: lineno,
                weight,
            });
        }
        events.push(EdgeEvent::new(time, u, v, weight));
    }
    Ok(events)
}

/// Orders identifiers numerically when they all parse as integers, else
/// lexicographically. The order is independent of event order, so a
/// reloaded network gets the same dense indices.
pub fn sort_node_ids(ids: &mut [String]) {
    let numeric: Option<Vec<i64>> = ids.iter().map(|s| s.parse::<i64>().ok()).collect();
    if numeric.is_some() {
        ids.sort_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
}

/// Upper-triangle edge list of one slice, `(i, j, w)` with `i < j`, sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceEdges {
    edges: Vec<(usize, usize, f64)>,
}

impl SliceEdges {
    /// Builds from arbitrary `(u, v, w)` triples; self-loops and zero weights
    /// are dropped, duplicates are summed.
    pub fn from_triples(triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (u, v, w) in triples {
            if u == v || w <= 0.0 {
                continue;
            }
            *acc.entry((u.min(v), u.max(v))).or_insert(0.0) += w;
        }
        Self {
            edges: acc.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        }
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|pos| self.edges[pos].2)
            .unwrap_or(0.0)
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Nodes with at least one incident edge, ascending.
    pub fn active_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.edges.iter().flat_map(|&(i, j, _)| [i, j]).collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalNetwork {
    node_ids: Vec<String>,
    node_index: HashMap<String, usize>,
    slices: Vec<SliceEdges>,
}

impl TemporalNetwork {
    pub fn new(node_ids: Vec<String>, slices: Vec<SliceEdges>) -> Result<Self> {
        if node_ids.is_empty() {
            return Err(Error::Config("network needs at least one node".into()));
        }
        if slices.is_empty() {
            return Err(Error::NoSlices);
        }
        let node_index: HashMap<String, usize> = node_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        if node_index.len() != node_ids.len() {
            return Err(Error::Config("duplicate node identifier".into()));
        }
        let n = node_ids.len();
        for s in &slices {
            if let Some(&(_, j, _)) = s.edges.iter().find(|&&(_, j, _)| j >= n) {
                return Err(Error::Dimension(format!(
                    "edge endpoint {j} outside 0..{n}"
                )));
            }
        }
        Ok(Self {
            node_ids,
            node_index,
            slices,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn node_id(&self, index: usize) -> &str {
        &self.node_ids[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub fn slices(&self) -> &[SliceEdges] {
        &self.slices
    }

    pub fn slice(&self, t: usize) -> &SliceEdges {
        &self.slices[t]
    }

    /// Writes the network back out in the event format. Nodes that never have
    /// an edge, and an empty final slice, are pinned with zero-weight
    /// self-loop events so that reloading with `spec` restores `N` and `T`.
    pub fn write_events<W: Write>(&self, spec: &SlicingSpec, mut out: W) -> Result<()> {
        writeln!(out, "# time\tu\tv\tweight")?;
        let mut touched = vec![false; self.num_nodes()];
        for (t, slice) in self.slices.iter().enumerate() {
            let time = spec.representative_time(t);
            for &(i, j, w) in slice.edges() {
                touched[i] = true;
                touched[j] = true;
                writeln!(
                    out,
                    "{time}\t{}\t{}\t{w}",
                    self.node_ids[i], self.node_ids[j]
                )?;
            }
        }
        let first = spec.representative_time(0);
        for (i, _) in touched.iter().enumerate().filter(|(_, &seen)| !seen) {
            writeln!(out, "{first}\t{0}\t{0}\t0", self.node_ids[i])?;
        }
        if self.slices.last().is_some_and(SliceEdges::is_empty) {
            let last = spec.representative_time(self.num_slices() - 1);
            writeln!(out, "{last}\t{0}\t{0}\t0", self.node_ids[0])?;
        }
        Ok(())
    }
}

/// Groups events into slices. Every event (including self-loops and
/// zero-weight events) registers its endpoints in the node universe and
/// extends the timeline; only positive-weight events between distinct nodes
/// produce adjacency entries.
pub fn slice_events(
    events: &[EdgeEvent],
    spec: &SlicingSpec,
    weighting: Weighting,
) -> Result<TemporalNetwork> {
    spec.validate()?;
    if events.is_empty() {
        return Err(Error::NoSlices);
    }

    let mut ids: Vec<String> = events
        .iter()
        .flat_map(|e| [e.u.as_str(), e.v.as_str()])
        .collect::<HashSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    sort_node_ids(&mut ids);
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut buckets: Vec<BTreeMap<(usize, usize), f64>> = Vec::new();
    for e in events {
        let t = spec.slice_index(e.time)?;
        if buckets.len() <= t {
            buckets.resize_with(t + 1, BTreeMap::new);
        }
        if e.is_self_loop() || e.weight <= 0.0 {
            continue;
        }
        let (a, b) = (index[e.u.as_str()], index[e.v.as_str()]);
        let entry = buckets[t].entry((a.min(b), a.max(b))).or_insert(0.0);
        match weighting {
            Weighting::Binary => *entry = 1.0,
            Weighting::CountSum => *entry += e.weight,
        }
    }

    let slices = buckets
        .into_iter()
        .map(|m| SliceEdges {
            edges: m.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        })
        .collect();
    TemporalNetwork::new(ids, slices)
}

/// Dense `N x N x T` tensor; slice `t` is the symmetric adjacency matrix of
/// time step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyTensor {
    n: usize,
    slices: Vec<Array2<f64>>,
}

impl AdjacencyTensor {
    pub fn from_slices(slices: Vec<Array2<f64>>) -> Result<Self> {
        let n = slices.first().map(|s| s.nrows()).ok_or(Error::NoSlices)?;
        for (t, s) in slices.iter().enumerate() {
            if s.dim() != (n, n) {
                return Err(Error::Dimension(format!(
                    "slice {t} has shape {:?}, expected ({n}, {n})",
                    s.dim()
                )));
            }
            if s.iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
                return Err(Error::Dimension(format!(
                    "slice {t} has negative or non-finite entries"
                )));
            }
        }
        Ok(Self { n, slices })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.n, self.slices.len())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn slice(&self, t: usize) -> &Array2<f64> {
        &self.slices[t]
    }

    pub fn slices(&self) -> &[Array2<f64>] {
        &self.slices
    }

    pub fn get(&self, i: usize, j: usize, t: usize) -> f64 {
        self.slices[t][[i, j]]
    }

    /// Returns a copy with node indices relabeled so that old node `i` becomes
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let slices = self
            .slices
            .iter()
            .map(|s| {
                let mut out = Array2::zeros((self.n, self.n));
                for ((i, j), &w) in s.indexed_iter() {
                    out[[perm[i], perm[j]]] = w;
                }
                out
            })
            .collect();
        Self { n: self.n, slices }
    }
}

pub fn build_adjacency_tensor(
    network: &TemporalNetwork,
    budget_bytes: u128,
) -> Result<AdjacencyTensor> {
    let n = network.num_nodes() as u128;
    let required = n * n * network.num_slices() as u128 * std::mem::size_of::<f64>() as u128;
    if required > budget_bytes {
        return Err(Error::TensorTooLarge {
            required,
            budget: budget_bytes,
        });
    }
    let n = network.num_nodes();
    let slices = network
        .slices()
        .iter()
        .map(|s| {
            let mut w = Array2::zeros((n, n));
            for &(i, j, x) in s.edges() {
                w[[i, j]] = x;
                w[[j, i]] = x;
            }
            w
        })
        .collect();
    Ok(AdjacencyTensor { n, slices })
}

/// `present[[i, t]]` is true iff node `i` has an incident edge at slice `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceMask {
    present: Array2<bool>,
}

impl PresenceMask {
    pub fn from_table(present: Array2<bool>) -> Self {
        Self { present }
    }

    pub fn num_nodes(&self) -> usize {
        self.present.nrows()
    }

    pub fn num_slices(&self) -> usize {
        self.present.ncols()
    }

    pub fn is_present(&self, node: usize, t: usize) -> bool {
        self.present[[node, t]]
    }

    pub fn present_nodes(&self, t: usize) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.present[[i, t]])
            .collect()
    }

    pub fn count(&self, t: usize) -> usize {
        self.present.column(t).iter().filter(|&&p| p).count()
    }
}

pub fn presence_mask(tensor: &AdjacencyTensor) -> PresenceMask {
    let (n, _, t_count) = tensor.dims();
    let mut present = Array2::from_elem((n, t_count), false);
    for (t, slice) in tensor.slices().iter().enumerate() {
        for (i, row) in slice.rows().into_iter().enumerate() {
            present[[i, t]] = row.iter().any(|&w| w > 0.0);
        }
    }
    PresenceMask { present }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<EdgeEvent>> {
        load_edge_events(text.as_bytes())
    }

    #[test]
    fn default_weight_is_one() {
        let ev = parse("3\ta\tb\n").unwrap();
        assert_eq!(ev, vec![EdgeEvent::new(3.0, "a", "b", 1.0)]);
    }

    #[test]
    fn self_loop_parses() {
        let ev = parse("0\tx\tx\t2.5").unwrap();
        assert_eq!(ev, vec![EdgeEvent::new(0.0, "x", "x", 2.5)]);
        assert!(ev[0].is_self_loop());
    }

    #[test]
    fn arity_violation_names_line() {
        match parse("1\ta") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse("# header\n0\ta\tb\n1\ta\tb\t1\textra\n") {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(matches!(
            parse("0\ta\tb\t-1"),
            Err(Error::NegativeWeight { line: 1, .. })
        ));
    }

    #[test]
    fn bad_numbers_rejected() {
        assert!(matches!(
            parse("zero\ta\tb"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse("0\ta\tb\tNaN"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse("0\t\tb"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn binary_collapses_repeats() {
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(0.0, "a", "b", 1.0),
        ];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        assert_eq!(net.num_slices(), 1);
        let x = build_adjacency_tensor(&net, DEFAULT_TENSOR_BUDGET).unwrap();
        assert_eq!(x.get(0, 1, 0), 1.0);
        assert_eq!(x.get(1, 0, 0), 1.0);
    }

    #[test]
    fn count_sum_adds() {
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(0.0, "b", "a", 1.0),
        ];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::CountSum).unwrap();
        assert_eq!(net.slice(0).weight(0, 1), 2.0);
    }

    #[test]
    fn window_binning_floors() {
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(9.0, "a", "c", 1.0),
        ];
        let spec = SlicingSpec::UniformWindow {
            window: 5.0,
            origin: 0.0,
        };
        let net = slice_events(&ev, &spec, Weighting::Binary).unwrap();
        assert_eq!(net.num_slices(), 2);
        assert_eq!(net.slice(0).num_edges(), 1);
        assert_eq!(net.slice(1).weight(0, 2), 1.0);
    }

    #[test]
    fn empty_intermediate_slices_kept() {
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(3.0, "a", "b", 1.0),
        ];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        assert_eq!(net.num_slices(), 4);
        assert!(net.slice(1).is_empty() && net.slice(2).is_empty());
    }

    #[test]
    fn slicing_errors() {
        assert!(matches!(
            slice_events(&[], &SlicingSpec::PreLabeled, Weighting::Binary),
            Err(Error::NoSlices)
        ));
        let ev = vec![EdgeEvent::new(1.0, "a", "b", 1.0)];
        let spec = SlicingSpec::UniformWindow {
            window: 1.0,
            origin: 2.0,
        };
        assert!(matches!(
            slice_events(&ev, &spec, Weighting::Binary),
            Err(Error::BeforeOrigin { .. })
        ));
        let spec = SlicingSpec::UniformWindow {
            window: 0.0,
            origin: 0.0,
        };
        assert!(matches!(
            slice_events(&ev, &spec, Weighting::Binary),
            Err(Error::Config(_))
        ));
        let ev = vec![EdgeEvent::new(1.5, "a", "b", 1.0)];
        assert!(slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).is_err());
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let mut ids: Vec<String> = ["10", "2", "1"].iter().map(|s| s.to_string()).collect();
        sort_node_ids(&mut ids);
        assert_eq!(ids, ["1", "2", "10"]);
        let mut ids: Vec<String> = ["b", "10", "a"].iter().map(|s| s.to_string()).collect();
        sort_node_ids(&mut ids);
        assert_eq!(ids, ["10", "a", "b"]);
    }

    #[test]
    fn single_node_edgeless_tensor() {
        let ev = vec![EdgeEvent::new(0.0, "a", "a", 1.0)];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        let x = build_adjacency_tensor(&net, DEFAULT_TENSOR_BUDGET).unwrap();
        assert_eq!(x.dims(), (1, 1, 1));
        assert_eq!(x.get(0, 0, 0), 0.0);
    }

    #[test]
    fn tensor_budget_enforced() {
        let ev = vec![EdgeEvent::new(0.0, "a", "b", 1.0)];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        match build_adjacency_tensor(&net, 16) {
            Err(Error::TensorTooLarge {
                required: 32,
                budget: 16,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn presence_single_slice_edge() {
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(1.0, "a", "b", 1.0),
            EdgeEvent::new(2.0, "c", "a", 1.0),
        ];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        let mask = presence_mask(&build_adjacency_tensor(&net, DEFAULT_TENSOR_BUDGET).unwrap());
        let c = net.index_of("c").unwrap();
        assert_eq!(
            (0..3).map(|t| mask.is_present(c, t)).collect::<Vec<_>>(),
            [false, false, true]
        );
    }

    #[test]
    fn presence_empty_slice() {
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(2.0, "a", "b", 1.0),
        ];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        let mask = presence_mask(&build_adjacency_tensor(&net, DEFAULT_TENSOR_BUDGET).unwrap());
        assert_eq!(mask.count(1), 0);
        assert!(mask.present_nodes(1).is_empty());
    }

    #[test]
    fn self_loop_only_node_is_absent() {
        // Hand example: a-b edge, c has only a self-loop.
        let ev = vec![
            EdgeEvent::new(0.0, "a", "b", 1.0),
            EdgeEvent::new(0.0, "c", "c", 3.0),
        ];
        let net = slice_events(&ev, &SlicingSpec::PreLabeled, Weighting::Binary).unwrap();
        assert_eq!(net.num_nodes(), 3);
        let x = build_adjacency_tensor(&net, DEFAULT_TENSOR_BUDGET).unwrap();
        let mask = presence_mask(&x);
        for i in 0..3 {
            let row_zero = (0..3).all(|j| x.get(i, j, 0) == 0.0);
            let col_zero = (0..3).all(|j| x.get(j, i, 0) == 0.0);
            assert_eq!(mask.is_present(i, 0), !(row_zero && col_zero));
        }
        assert!(!mask.is_present(net.index_of("c").unwrap(), 0));
    }
}
