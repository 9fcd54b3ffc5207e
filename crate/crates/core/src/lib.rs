pub mod calibration;
pub mod de;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod labeler;
pub mod mesh;
pub mod metrics;
pub mod phantom;
pub mod rating;
pub mod sweep;
pub mod cli;

pub use error::{Error, Result};
