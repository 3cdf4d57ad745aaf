//! Synthetic branch and tree generation.

pub mod branch;
pub mod corrupt;
pub mod render;
pub mod sample;
pub mod skeleton;
pub mod spline;
pub mod tree;

pub use branch::{fit_spline, BranchModel, Frame, TaperProfile};
pub use corrupt::{corrupt_gaps, jitter, occlude_lateral, occlude_side};
pub use render::{render_partial, ViewConfig};
pub use sample::{resample_skeleton, sample_complete, SweptModel};
pub use skeleton::{SkeletalSphere, Skeleton};
pub use tree::{generate_tree_unit, TreeModel, TreeUnitParams};
