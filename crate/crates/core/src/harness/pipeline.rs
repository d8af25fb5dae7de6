use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::{
    assign_partition, indicator_matrices, Partition, PartitionSequence, ZeroRowPolicy,
};
use crate::error::{Error, Result};
use crate::metrics::{modularity, nmi, MetricsReport, SliceScore};
use crate::refine::{refine_sequence, RefineOptions, SliceGraph};
use crate::rescal::{fit_best_of, DecompositionState, Hyperparams};
use crate::temporal::{
    build_adjacency_tensor, load_edge_events, presence_mask, slice_events, AdjacencyTensor,
    SlicingSpec, TemporalNetwork, Weighting, DEFAULT_TENSOR_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Decomposition followed by modularity refinement.
    Mntd,
    /// Decomposition only.
    Nrd,
    /// Refinement from singletons, no decomposition.
    Merandom,
}

impl Variant {
    pub fn display_name(&self) -> &'static str {
        match self {
            Variant::Mntd => "MNTD",
            Variant::Nrd => "NRD",
            Variant::Merandom => "MERandom",
        }
    }

    fn uses_decomposition(&self) -> bool {
        !matches!(self, Variant::Merandom)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mntd" => Ok(Variant::Mntd),
            "nrd" => Ok(Variant::Nrd),
            "merandom" => Ok(Variant::Merandom),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub slicing: SlicingSpec,
    pub weighting: Weighting,
    /// Community count; taken from the ground truth when absent.
    pub k: Option<usize>,
    pub lambda_a: f64,
    pub lambda_r: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub epsilon: f64,
    /// Initializations per decomposition; the lowest final objective wins.
    pub restarts: usize,
    pub variant: Variant,
    pub truth: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub runs: usize,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
    pub zero_rows: ZeroRowPolicy,
    pub tensor_budget: u128,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let defaults = Hyperparams::new(1);
        Self {
            input: input.into(),
            slicing: SlicingSpec::PreLabeled,
            weighting: Weighting::Binary,
            k: None,
            lambda_a: defaults.lambda_a,
            lambda_r: defaults.lambda_r,
            max_iters: defaults.max_iters,
            tol: defaults.tol,
            epsilon: defaults.epsilon,
            restarts: DEFAULT_RESTARTS,
            variant: Variant::Mntd,
            truth: None,
            out_dir: out_dir.into(),
            runs: 20,
            seed: 0,
            zero_rows: ZeroRowPolicy::Error,
            tensor_budget: DEFAULT_TENSOR_BUDGET,
        }
    }

    pub fn hyperparams(&self, k: usize, seed: u64) -> Hyperparams {
        Hyperparams {
            k,
            lambda_a: self.lambda_a,
            lambda_r: self.lambda_r,
            max_iters: self.max_iters,
            tol: self.tol,
            epsilon: self.epsilon,
            seed,
        }
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        self.slicing.validate()?;
        if self.k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.k.is_none() && self.truth.is_none() && self.variant.uses_decomposition() {
            return Err(Error::Config(
                "k is required when no ground truth is given".into(),
            ));
        }
        if self.variant.uses_decomposition() {
            self.hyperparams(self.k.unwrap_or(1), self.seed)
                .validate()?;
        }
        Ok(())
    }
}

/// Per-slice ground-truth labels keyed by node index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    pub slices: Vec<Partition>,
    /// Community names in label order.
    pub communities: Vec<String>,
}

impl GroundTruth {
    pub fn num_communities(&self) -> usize {
        self.communities.len()
    }
}

/// Reads `slice<TAB>node<TAB>community` rows. The slice column goes through
/// the same slicing rule as event times. Rows for nodes or slices outside the
/// network are ignored.
pub fn load_ground_truth<R: BufRead>(
    source: R,
    net: &TemporalNetwork,
    spec: &SlicingSpec,
) -> Result<GroundTruth> {
    let mut rows = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                line: lineno,
                message: "expected slice, node and community".into(),
            });
        }
        let time: f64 = fields[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid slice {:?}", fields[0]),
        })?;
        let t = spec.slice_index(time).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        rows.push((lineno, t, fields[1].to_owned(), fields[2].to_owned()));
    }

    let mut names: Vec<String> = rows.iter().map(|r| r.3.clone()).collect();
    crate::temporal::sort_node_ids(&mut names);
    names.dedup();
    let label: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    let mut slices = vec![Partition::new(); net.num_slices()];
    for (lineno, t, node, community) in &rows {
        let (Some(part), Some(i)) = (slices.get_mut(*t), net.index_of(node)) else {
            continue;
        };
        let c = label[community.as_str()];
        if part.insert(i, c).is_some_and(|prev| prev != c) {
            return Err(Error::Parse {
                line: *lineno,
                message: format!("conflicting community for node {node} at slice {t}"),
            });
        }
    }
    Ok(GroundTruth {
        slices,
        communities: names,
    })
}

/// Decomposition-only partitions: fit (best of `restarts`), take `B_t = A R_t`,
/// argmax per present node.
pub fn decompose(
    x: &AdjacencyTensor,
    hyper: &Hyperparams,
    restarts: usize,
    policy: ZeroRowPolicy,
) -> Result<(DecompositionState, PartitionSequence)> {
    let state = fit_best_of(x, hyper, restarts).map_err(|e| e.in_stage("fit"))?;
    let mask = presence_mask(x);
    let parts = assign_partition(&indicator_matrices(&state), &mask, policy)
        .map_err(|e| e.in_stage("assign"))?;
    Ok((state, parts))
}

/// Every present node in its own community, labeled by its node index.
pub fn singleton_partitions(net: &TemporalNetwork) -> PartitionSequence {
    PartitionSequence::new(
        net.slices()
            .iter()
            .map(|s| s.active_nodes().into_iter().map(|v| (v, v)).collect())
            .collect(),
    )
}

/// Scores each slice on its present-node subgraph and, when given, against
/// the ground truth over the nodes both sides cover.
pub fn score_partitions(
    net: &TemporalNetwork,
    parts: &PartitionSequence,
    truth: Option<&GroundTruth>,
) -> Result<MetricsReport> {
    if parts.num_slices() != net.num_slices() {
        return Err(Error::Dimension(format!(
            "{} partitions for {} slices",
            parts.num_slices(),
            net.num_slices()
        )));
    }
    let mut scores = Vec::with_capacity(net.num_slices());
    for t in 0..net.num_slices() {
        let nodes = net.slice(t).active_nodes();
        let part = parts.slice(t);
        let labels: Vec<usize> = nodes
            .iter()
            .map(|v| {
                part.get(v).copied().ok_or_else(|| Error::Slice {
                    slice: t,
                    source: Box::new(Error::Dimension(format!(
                        "present node {v} has no community"
                    ))),
                })
            })
            .collect::<Result<_>>()?;
        let q = modularity(&SliceGraph::induced(net.slice(t), &nodes), &labels);
        let nmi = match truth.map(|g| &g.slices[t]) {
            Some(gt) => match nmi(gt, part) {
                Ok(v) => Some(v),
                Err(Error::EmptyComparison) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        scores.push(SliceScore {
            slice: t,
            modularity: (!q.degenerate).then_some(q.value),
            nmi,
        });
    }
    Ok(MetricsReport::from_slices(scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run: usize,
    pub seed: u64,
    pub partitions: PartitionSequence,
    /// `None` for merandom.
    pub decomposition: Option<DecompositionState>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub k: Option<usize>,
    pub network: TemporalNetwork,
    pub runs: Vec<RunReport>,
    /// Per-slice scores averaged over runs, summarized across slices.
    pub aggregate: MetricsReport,
}

fn run_once(
    config: &PipelineConfig,
    net: &TemporalNetwork,
    x: Option<&AdjacencyTensor>,
    truth: Option<&GroundTruth>,
    k: Option<usize>,
    run: usize,
) -> Result<RunReport> {
    let seed = config.run_seed(run);
    let (decomposition, partitions) = match config.variant {
        Variant::Merandom => {
            let options = RefineOptions {
                shuffle_seed: Some(seed),
            };
            let parts = refine_sequence(net, &singleton_partitions(net), &options)
                .map_err(|e| e.in_stage("refine"))?;
            (None, parts)
        }
        Variant::Mntd | Variant::Nrd => {
            let x = x.expect("tensor built for decomposition variants");
            let hyper = config.hyperparams(k.expect("k resolved"), seed);
            let (state, parts) = decompose(x, &hyper, config.restarts, config.zero_rows)?;
            let parts = if config.variant == Variant::Mntd {
                refine_sequence(net, &parts, &RefineOptions::default())
                    .map_err(|e| e.in_stage("refine"))?
            } else {
                parts
            };
            (Some(state), parts)
        }
    };
    let metrics = score_partitions(net, &partitions, truth).map_err(|e| e.in_stage("score"))?;
    Ok(RunReport {
        run,
        seed,
        partitions,
        decomposition,
        metrics,
    })
}

fn average_over_runs(runs: &[RunReport], slices: usize) -> MetricsReport {
    let mean =
        |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let scores = (0..slices)
        .map(|t| SliceScore {
            slice: t,
            modularity: mean(
                runs.iter()
                    .filter_map(|r| r.metrics.slices[t].modularity)
                    .collect(),
            ),
            nmi: mean(
                runs.iter()
                    .filter_map(|r| r.metrics.slices[t].nmi)
                    .collect(),
            ),
        })
        .collect();
    MetricsReport::from_slices(scores)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let file = File::open(&config.input).map_err(|e| Error::from(e).in_stage("load"))?;
    let events = load_edge_events(BufReader::new(file)).map_err(|e| e.in_stage("load"))?;
    let net = slice_events(&events, &config.slicing, config.weighting)
        .map_err(|e| e.in_stage("slice"))?;

    let truth = match &config.truth {
        Some(path) => {
            let file = File::open(path).map_err(|e| Error::from(e).in_stage("truth"))?;
            Some(
                load_ground_truth(BufReader::new(file), &net, &config.slicing)
                    .map_err(|e| e.in_stage("truth"))?,
            )
        }
        None => None,
    };

    let (k, x) = if config.variant.uses_decomposition() {
        let k = match (config.k, &truth) {
            (Some(k), _) => k,
            (None, Some(gt)) if gt.num_communities() > 0 => gt.num_communities(),
            _ => {
                return Err(Error::Config(
                    "cannot infer k: ground truth is empty".into(),
                ))
            }
        };
        let x =
            build_adjacency_tensor(&net, config.tensor_budget).map_err(|e| e.in_stage("tensor"))?;
        (Some(k), Some(x))
    } else {
        (None, None)
    };

    let runs: Vec<RunReport> = (0..config.runs)
        .into_par_iter()
        .map(|run| run_once(config, &net, x.as_ref(), truth.as_ref(), k, run))
        .collect::<Result<_>>()?;
    let aggregate = average_over_runs(&runs, net.num_slices());
    Ok(PipelineReport {
        config: config.clone(),
        k,
        network: net,
        runs,
        aggregate,
    })
}
