//! Partition quality scores: per-slice modularity, NMI against ground truth,
//! and mean ± population std summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refine::SliceGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modularity {
    pub value: f64,
    /// Set when the graph has no edges; `value` is then defined as 0.
    pub degenerate: bool,
}

/// `Q = (1/2L) Σ_ij [w_ij − d_i d_j / 2L] δ(c_i, c_j)` over all ordered pairs,
/// evaluated per community as `Σ_c (in_c − tot_c² / 2L) / 2L`.
pub fn modularity(g: &SliceGraph, partition: &[usize]) -> Modularity {
    assert_eq!(partition.len(), g.n(), "partition must cover every node");
    let two_l = g.two_l();
    if two_l <= 0.0 {
        return Modularity {
            value: 0.0,
            degenerate: true,
        };
    }
    let mut per_comm: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for i in 0..g.n() {
        let ci = partition[i];
        let inside: f64 = g
            .neighbors(i)
            .iter()
            .filter(|&&(j, _)| partition[j] == ci)
            .map(|e| e.1)
            .sum();
        let entry = per_comm.entry(ci).or_insert((0.0, 0.0));
        entry.0 += inside;
        entry.1 += g.degree(i);
    }
    let q = per_comm
        .values()
        .map(|&(inside, total)| inside - total * total / two_l)
        .sum::<f64>()
        / two_l;
    Modularity {
        value: q,
        degenerate: false,
    }
}

/// Contingency counts between two labelings over their common nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTable {
    pub counts: Vec<Vec<usize>>,
    pub row_sums: Vec<usize>,
    pub col_sums: Vec<usize>,
    pub total: usize,
}

impl ConfusionTable {
    pub fn from_partitions<K: Ord>(u: &BTreeMap<K, usize>, v: &BTreeMap<K, usize>) -> Self {
        let pairs: Vec<(usize, usize)> = u
            .iter()
            .filter_map(|(node, &cu)| v.get(node).map(|&cv| (cu, cv)))
            .collect();
        let index = |labels: Vec<usize>| -> BTreeMap<usize, usize> {
            labels
                .into_iter()
                .enumerate()
                .map(|(i, l)| (l, i))
                .collect::<BTreeMap<_, _>>()
        };
        let mut us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let mut vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        us.sort_unstable();
        us.dedup();
        vs.sort_unstable();
        vs.dedup();
        let (ui, vi) = (index(us), index(vs));

        let mut counts = vec![vec![0usize; vi.len()]; ui.len()];
        for &(a, b) in &pairs {
            counts[ui[&a]][vi[&b]] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..vi.len())
            .map(|j| counts.iter().map(|r| r[j]).sum())
            .collect();
        Self {
            counts,
            row_sums,
            col_sums,
            total: pairs.len(),
        }
    }
}

/// Normalized mutual information over the nodes present in both partitions:
///
/// ```text
///            −2 Σ_ij N_ij ln(N_ij N / (N_i N_j))
/// NMI = ─────────────────────────────────────────────
///        Σ_i N_i ln(N_i / N) + Σ_j N_j ln(N_j / N)
/// ```
///
/// Two single-community partitions score 1.
pub fn nmi<K: Ord>(truth: &BTreeMap<K, usize>, detected: &BTreeMap<K, usize>) -> Result<f64> {
    let table = ConfusionTable::from_partitions(truth, detected);
    if table.total == 0 {
        return Err(Error::EmptyComparison);
    }
    let n = table.total as f64;
    let mut numer = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                numer +=
                    nij * (nij * n / (table.row_sums[i] as f64 * table.col_sums[j] as f64)).ln();
            }
        }
    }
    numer *= -2.0;
    let entropy =
        |sums: &[usize]| -> f64 { sums.iter().map(|&s| s as f64 * (s as f64 / n).ln()).sum() };
    let denom = entropy(&table.row_sums) + entropy(&table.col_sums);
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((numer / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub per_slice: Vec<(usize, f64)>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl fmt::Display for ScoreSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}±{:.2}", self.mean, self.std)
    }
}

pub fn score_series(values: &[(usize, f64)]) -> Result<ScoreSeries> {
    if values.is_empty() {
        return Err(Error::Config(
            "score series needs at least one value".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.1).sum::<f64>() / n;
    let var = values.iter().map(|v| (v.1 - mean).powi(2)).sum::<f64>() / n;
    Ok(ScoreSeries {
        per_slice: values.to_vec(),
        mean,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceScore {
    pub slice: usize,
    /// `None` for an edgeless slice.
    pub modularity: Option<f64>,
    /// `None` without ground truth or without overlapping nodes.
    pub nmi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub slices: Vec<SliceScore>,
    pub modularity: Option<ScoreSeries>,
    pub nmi: Option<ScoreSeries>,
}

impl MetricsReport {
    pub fn from_slices(slices: Vec<SliceScore>) -> Self {
        let q: Vec<(usize, f64)> = slices
            .iter()
            .filter_map(|s| Some((s.slice, s.modularity?)))
            .collect();
        let nmi: Vec<(usize, f64)> = slices
            .iter()
            .filter_map(|s| Some((s.slice, s.nmi?)))
            .collect();
        Self {
            modularity: score_series(&q).ok(),
            nmi: score_series(&nmi).ok(),
            slices,
        }
    }

    /// `slice,modularity,nmi` rows followed by `mean` and `std` rows. Missing
    /// values are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record(["slice", "modularity", "nmi"])?;
        for s in &self.slices {
            w.write_record([s.slice.to_string(), cell(s.modularity), cell(s.nmi)])?;
        }
        w.write_record([
            "mean".to_owned(),
            cell(self.modularity.as_ref().map(|s| s.mean)),
            cell(self.nmi.as_ref().map(|s| s.mean)),
        ])?;
        w.write_record([
            "std".to_owned(),
            cell(self.modularity.as_ref().map(|s| s.std)),
            cell(self.nmi.as_ref().map(|s| s.std)),
        ])?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}
