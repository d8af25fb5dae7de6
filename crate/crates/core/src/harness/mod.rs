//! End-to-end pipeline, ablation variants, synthetic data and reports.

pub mod pipeline;
pub mod report;
pub mod synth;

pub use pipeline::{
    decompose, load_ground_truth, run_pipeline, score_partitions, singleton_partitions,
    GroundTruth, PipelineConfig, PipelineReport, RunReport, Variant, DEFAULT_RESTARTS,
};
pub use report::{emit_report, load_partitions, write_partitions, write_table};
pub use synth::{generate_dynamic_sbm, DynamicSbm, SbmParams};
