//! Per-frame bone labels from a CT mesh: intersection, pose refinement, validation and filtering.

pub mod index;
pub mod intersect;
pub mod mask;
pub mod objective;
pub mod pipeline;
pub mod refine;

pub use index::MeshIndex;
pub use intersect::{compute_intersection, incidence_filter, shadow_filter, IntersectionPixel, IntersectionSet};
pub use mask::{rasterize_label, IntensityClass, LabelMask, LabelProvenance};
pub use objective::{FrameContext, ObjectiveValue, Scratch};
pub use pipeline::{final_label, initial_labels, label_sweep, select_lambda, LabelConfig, LabelSummary, LambdaTrial, SweepLabels, LAMBDA_CANDIDATES};
pub use refine::{contour_distance_mm, label_centerline, refine_frame, validate, PerturbationResult, DEFAULT_VALIDATION_MM};
