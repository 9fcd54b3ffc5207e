//! Blinded alignment-rating study: session building, the HTTP service, and score statistics.

pub mod server;
pub mod session;
pub mod stats;
pub mod store;

pub use server::{router, serve, AppState};
pub use session::{build_rating_session, BlindingKey, BuiltSession, KeyEntry, MethodMasks, RatingFrame, RatingSession, ScaleBar, SessionItem};
pub use stats::{rating_stats, MethodMean, PairComparison, RatingStats};
pub use store::{latest_per_item, read_ratings, RatingLog, RatingRecord};

/// Score descriptions shown to the rater, highest first.
pub const CRITERIA: [(u8, &str); 4] = [
    (3, "Overlay sits on the bone echo everywhere; no offset is visible against the scale bar."),
    (2, "Overlay sits on the bone echo apart from small offsets, each shorter than the 1 mm bar."),
    (1, "Parts of the overlay are offset from the bone echo by roughly 1 to 3 mm on the scale bar."),
    (0, "Large parts of the overlay are offset from the bone echo by more than the 3 mm bar."),
];
