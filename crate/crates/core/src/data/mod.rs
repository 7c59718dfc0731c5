//! Where series come from: synthetic generators, CSV files, and the
//! chronological train/validation/test split.

mod csv;
mod rng;
mod split;
mod synthetic;

pub use self::csv::load_csv;
pub use rng::GaussianStream;
pub use split::{split, SplitPolicy, SplitSpec, SplitView, Splits, Standardizer};
pub use synthetic::{generate_synthetic, SyntheticKind, SyntheticSpec};
