//! Screens scene collections for statistically rare object configurations.
//!
//! The pipeline: ingest object records grouped into scenes, reconstruct
//! missed-detection labels from detector geometry, learn the conditional
//! tables of a discrete network by counting, score held-out scenes by the
//! empirical rarity of each object's realized probability, and judge
//! proposed structural edits by whether they shrink the set of flagged
//! scenes.

pub mod annotations;
pub mod bn;
pub mod dataset;
pub mod error;
pub mod hypothesis;
pub mod learning;
pub mod refinement;
pub mod synthgen;

pub use annotations::{export_annotations, import_annotations, AnnotationFile, AnnotationNode};
pub use bn::{
    build_structure, BnModel, BnStructure, Cbt, CbtRow, NodeSpec, ParentConfig, ZeroCountPolicy,
};
pub use dataset::{
    derive_fn_dataset, ingest, split, Dataset, IngestResult, MatchConfig, MatchStats,
    ObjectInstance, RawObjectRecord, SceneRecord, Source,
};
pub use error::{Error, Result};
pub use hypothesis::{
    pvalue_range, score_scenes, significance, AnalysisConfig, PValueRange, RunReport, SceneReport,
};
pub use learning::{learn_cbts, log_likelihood, LearnConfig};
pub use refinement::{
    apply_refinement, confounder_workflow, validate, ConfounderReport, Proposition, RefinementOp,
    ValidationConfig, ValidationReport,
};
pub use synthgen::{generate, truth_sidecar, GeneratorConfig};
