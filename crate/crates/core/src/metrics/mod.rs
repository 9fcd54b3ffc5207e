//! Label quality metrics and rating statistics.

pub mod distance;
pub mod otsu;
pub mod report;
pub mod wilcoxon;

pub use distance::{accuracy, chamfer_one_sided, completeness, f1, nearest_distances, point_to_set_distance, MaskPointSet, SetRole};
pub use otsu::{label_histogram, otsu_threshold, IntensitySplit};
pub use report::{evaluate, AggregateMetrics, ClassFilter, EvalReport, FrameMask, FrameMetrics};
pub use wilcoxon::{average_ranks, bonferroni, exact_p, wilcoxon_signed_rank, PMethod, WilcoxonResult};
