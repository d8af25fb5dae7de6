//! Dynamic community detection in temporal networks.
//!
//! The pipeline stacks per-slice adjacency matrices into a tensor, fits a
//! regularized nonnegative RESCAL decomposition `X_t ≈ A R_t Aᵀ`, reads hard
//! communities off `B_t = A R_t`, and refines each slice with a Louvain pass
//! seeded by that partition.
//!
//! ```no_run
//! use dyncom::harness::{run_pipeline, PipelineConfig};
//!
//! let mut config = PipelineConfig::new("events.tsv", "out");
//! config.truth = Some("truth.tsv".into());
//! let report = run_pipeline(&config)?;
//! println!("NMI {}", report.aggregate.nmi.unwrap());
//! # Ok::<(), dyncom::Error>(())
//! ```

pub mod community;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod refine;
pub mod rescal;
pub mod temporal;

pub use error::{Error, Result};
