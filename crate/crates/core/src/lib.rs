//! Event-guided spatiotemporal fusion for monocular depth under adverse
//! imaging conditions.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`evio`]: event-stream ingestion and voxel-grid conversion
//! - [`imagery`]: image/depth/flow containers, file formats, gradients, warping
//! - [`easf`]: entropy-aware spatial fusion (entropy maps, weight maps, spatial loss)
//! - [`mgtc`]: motion-guided temporal correction (region localization, contrastive loss)
//! - [`degrade`]: synthetic illumination and motion-blur degradation
//! - [`fusenet`]: toy differentiable fusion network and two-step training
//! - [`metrics`]: AbsRel, threshold accuracy, edge gradient error, MAE
//! - [`synth`]: procedural scenes used to exercise the whole pipeline
//! - [`experiment`]: fixed training and comparison protocols on synthetic scenes

pub mod degrade;
pub mod easf;
pub mod evio;
pub mod experiment;
pub mod fusenet;
pub mod imagery;
pub mod metrics;
pub mod mgtc;
pub mod rng;
pub mod synth;
pub mod tensor;

/// Version string written into every reproducibility header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
