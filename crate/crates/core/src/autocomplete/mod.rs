//! Target prediction, σ-snapping refinement and the suggestion modes.

mod refine;
mod suggest;

pub use refine::{
    element_group_proposal, group_run, multimodal_proposal, normalize_raw, on_line, refine, refine_step,
    Confidence, Field, GroupProposal, GroupRun, RefineConfig, RefineInput, Refined, SnapStep,
};
pub use suggest::{accept, cold_start, RawBox, RawPrediction, ScoredConstraint, Suggester, Suggestion, TargetPredictor};
