//! On-disk artifacts of a pipeline run.
//!
//! ```text
//! <out>/manifest.json           config, resolved k, per-run seeds, version
//! <out>/summary.csv|json        per-slice scores averaged over runs
//! <out>/table.tsv               one mean±std row per score, table layout
//! <out>/run_<r>/partitions.csv  t,node,community (canonical labels)
//! <out>/run_<r>/metrics.csv|json
//! <out>/run_<r>/objective.csv   iter,objective (decomposition variants)
//! <out>/run_<r>/factors.txt     fitted A and R_t (decomposition variants)
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::pipeline::{PipelineConfig, PipelineReport};
use crate::community::{Partition, PartitionSequence};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::rescal::{write_factors, write_objective_csv};
use crate::temporal::TemporalNetwork;

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    k: Option<usize>,
    nodes: usize,
    slices: usize,
    runs: Vec<RunEntry>,
}

#[derive(Debug, Serialize)]
struct RunEntry {
    run: usize,
    seed: u64,
    iterations: Option<usize>,
    converged: Option<bool>,
    final_objective: Option<f64>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn with_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_partitions<W: Write>(
    net: &TemporalNetwork,
    parts: &PartitionSequence,
    out: W,
) -> Result<()> {
    let canonical = if parts.labels_are_canonical {
        parts.clone()
    } else {
        parts.canonicalized()
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "node", "community"])?;
    for (t, part) in canonical.assignments.iter().enumerate() {
        for (&node, &c) in part {
            w.write_record([t.to_string(), net.node_id(node).to_owned(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_partitions<R: Read>(source: R, net: &TemporalNetwork) -> Result<PartitionSequence> {
    let mut reader = csv::Reader::from_reader(source);
    let mut assignments = vec![Partition::new(); net.num_slices()];
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let bad = |message: String| Error::Parse { line, message };
        if record.len() != 3 {
            return Err(bad("expected t,node,community".into()));
        }
        let t: usize = record[0]
            .parse()
            .map_err(|_| bad(format!("invalid slice {:?}", &record[0])))?;
        let node = net
            .index_of(&record[1])
            .ok_or_else(|| bad(format!("unknown node {:?}", &record[1])))?;
        let c: usize = record[2]
            .parse()
            .map_err(|_| bad(format!("invalid community {:?}", &record[2])))?;
        assignments
            .get_mut(t)
            .ok_or_else(|| bad(format!("slice {t} out of range")))?
            .insert(node, c);
    }
    Ok(PartitionSequence {
        assignments,
        labels_are_canonical: true,
    })
}

/// Table layout: a header naming the variant and one `mean±std` row per
/// available score.
pub fn write_table<W: Write>(reports: &[&PipelineReport], dataset: &str, mut out: W) -> Result<()> {
    let names: Vec<&str> = reports
        .iter()
        .map(|r| r.config.variant.display_name())
        .collect();
    writeln!(out, "Models\t{}", names.join("\t"))?;
    let row = |pick: fn(&MetricsReport) -> Option<String>| -> Vec<String> {
        reports
            .iter()
            .map(|r| pick(&r.aggregate).unwrap_or_else(|| "-".into()))
            .collect()
    };
    let nmi = row(|m| m.nmi.as_ref().map(|s| s.to_string()));
    let q = row(|m| m.modularity.as_ref().map(|s| s.to_string()));
    if nmi.iter().any(|c| c != "-") {
        writeln!(out, "{dataset} NMI\t{}", nmi.join("\t"))?;
    }
    writeln!(out, "{dataset} Q\t{}", q.join("\t"))?;
    Ok(())
}

pub fn run_dir(out_dir: &Path, run: usize) -> PathBuf {
    out_dir.join(format!("run_{run:02}"))
}

pub fn emit_report(report: &PipelineReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let net = &report.network;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
        k: report.k,
        nodes: net.num_nodes(),
        slices: net.num_slices(),
        runs: report
            .runs
            .iter()
            .map(|r| RunEntry {
                run: r.run,
                seed: r.seed,
                iterations: r.decomposition.as_ref().map(|d| d.iterations_run),
                converged: r.decomposition.as_ref().map(|d| d.converged),
                final_objective: r.decomposition.as_ref().and_then(|d| d.final_objective()),
            })
            .collect(),
    };
    let path = out_dir.join("manifest.json");
    with_file(&path, |w| Ok(serde_json::to_writer_pretty(w, &manifest)?))?;
    written.push(path);

    let path = out_dir.join("summary.csv");
    with_file(&path, |w| report.aggregate.write_csv(w))?;
    written.push(path);
    let path = out_dir.join("summary.json");
    with_file(&path, |w| report.aggregate.write_json(w))?;
    written.push(path);
    let path = out_dir.join("table.tsv");
    let dataset = report
        .config
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("data")
        .to_owned();
    with_file(&path, |w| write_table(&[report], &dataset, w))?;
    written.push(path);

    for run in &report.runs {
        let dir = run_dir(out_dir, run.run);
        fs::create_dir_all(&dir)?;
        let path = dir.join("partitions.csv");
        with_file(&path, |w| write_partitions(net, &run.partitions, w))?;
        written.push(path);
        let path = dir.join("metrics.csv");
        with_file(&path, |w| run.metrics.write_csv(w))?;
        written.push(path);
        let path = dir.join("metrics.json");
        with_file(&path, |w| run.metrics.write_json(w))?;
        written.push(path);
        if let Some(state) = &run.decomposition {
            let path = dir.join("objective.csv");
            with_file(&path, |w| write_objective_csv(&state.objective_history, w))?;
            written.push(path);
            let path = dir.join("factors.txt");
            with_file(&path, |w| write_factors(state, w))?;
            written.push(path);
        }
    }
    Ok(written)
}
