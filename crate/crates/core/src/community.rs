//! Soft indicators `B_t = A R_t` and hard per-slice partitions by row argmax.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rescal::DecompositionState;
use crate::temporal::{PresenceMask, TemporalNetwork};

/// Node index → community label for one slice.
pub type Partition = BTreeMap<usize, usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    pub b: Vec<Array2<f64>>,
}

impl IndicatorSet {
    pub fn num_slices(&self) -> usize {
        self.b.len()
    }

    /// Writes `t,node,c0,...,c{k-1}` rows for every node and slice.
    pub fn write_csv<W: Write>(&self, network: &TemporalNetwork, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.b.first().map_or(0, |m| m.ncols());
        let mut header = vec!["t".to_owned(), "node".to_owned()];
        header.extend((0..k).map(|c| format!("c{c}")));
        w.write_record(&header)?;
        for (t, bt) in self.b.iter().enumerate() {
            for (i, row) in bt.rows().into_iter().enumerate() {
                let mut rec = vec![t.to_string(), network.node_id(i).to_owned()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn indicator_matrices(state: &DecompositionState) -> IndicatorSet {
    IndicatorSet {
        b: state.r.iter().map(|rt| state.a.dot(rt)).collect(),
    }
}

/// What to do with a present node whose indicator row is all zeros.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroRowPolicy {
    #[default]
    Error,
    AssignFirst,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSequence {
    pub assignments: Vec<Partition>,
    pub labels_are_canonical: bool,
}

impl PartitionSequence {
    pub fn new(assignments: Vec<Partition>) -> Self {
        Self {
            assignments,
            labels_are_canonical: false,
        }
    }

    pub fn num_slices(&self) -> usize {
        self.assignments.len()
    }

    pub fn slice(&self, t: usize) -> &Partition {
        &self.assignments[t]
    }

    /// Number of distinct labels in slice `t`.
    pub fn community_count(&self, t: usize) -> usize {
        let mut labels: Vec<usize> = self.assignments[t].values().copied().collect();
        labels.sort_unstable();
        labels.dedup();
        labels.len()
    }

    /// Relabels each slice to `0..k'` in order of first appearance when nodes
    /// are visited in ascending index order.
    pub fn canonicalized(&self) -> Self {
        Self {
            assignments: self.assignments.iter().map(canonicalize).collect(),
            labels_are_canonical: true,
        }
    }
}

pub fn canonicalize(partition: &Partition) -> Partition {
    let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
    partition
        .iter()
        .map(|(&node, &label)| {
            let next = relabel.len();
            (node, *relabel.entry(label).or_insert(next))
        })
        .collect()
}

/// Column of the row maximum; ties go to the lowest column.
pub fn row_argmax(row: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (c, v) in row.into_iter().enumerate() {
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((c, v));
        }
    }
    best.map(|(c, _)| c)
}

pub fn assign_partition(
    ind: &IndicatorSet,
    mask: &PresenceMask,
    policy: ZeroRowPolicy,
) -> Result<PartitionSequence> {
    if ind.num_slices() != mask.num_slices() {
        return Err(Error::Dimension(format!(
            "{} indicator slices but mask has {}",
            ind.num_slices(),
            mask.num_slices()
        )));
    }
    let mut assignments = Vec::with_capacity(ind.num_slices());
    for (t, bt) in ind.b.iter().enumerate() {
        if bt.nrows() != mask.num_nodes() {
            return Err(Error::Dimension(format!(
                "indicator slice {t} has {} rows, mask has {} nodes",
                bt.nrows(),
                mask.num_nodes()
            )));
        }
        let k = bt.ncols();
        let mut part = Partition::new();
        for node in mask.present_nodes(t) {
            let row = bt.row(node);
            if k > 1 && row.iter().all(|&v| v == 0.0) && policy == ZeroRowPolicy::Error {
                return Err(Error::DegenerateRow { slice: t, node });
            }
            part.insert(node, row_argmax(row.iter().copied()).unwrap_or(0));
        }
        assignments.push(part);
    }
    Ok(PartitionSequence::new(assignments))
}
