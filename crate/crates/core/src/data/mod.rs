//! Pose datasets: JSON Lines ingestion, the synthetic generator, occlusion
//! plans and the train/test split.

mod dataset;
mod occlusion;
mod synth;

pub use dataset::{split_dataset, Dataset, PoseRecord, Provenance, CATEGORIES};
pub use occlusion::{sample_masks, sample_occlusions, OcclusionPlan, Regime, PLAN_FORMAT, PLAN_FORMAT_VERSION};
pub use synth::{archetype_of, synth_poses, Archetype, Camera, BONES, SPINE};
