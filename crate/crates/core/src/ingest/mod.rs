//! Check-in ingestion: raw file parsers, cleaning, the leave-one-out split,
//! the dataset file format, and a synthetic mobility generator.

mod geo;
mod parse;
mod preprocess;
mod split;
mod store;
mod synth;

use serde::{Deserialize, Serialize};

pub use geo::{haversine, EARTH_RADIUS_KM};
pub use parse::{parse_foursquare, parse_foursquare_lines, parse_gowalla, parse_gowalla_lines, Parsed};
pub use preprocess::{preprocess, Summary, DEFAULT_MIN_POI, DEFAULT_MIN_USER};
pub use split::{
    split_leave_one_out, Catalog, DatasetSplit, Gap, Poi, RankingInstance, Sequence, SplitKind, Step, Trajectory,
    UserSplit,
};
pub use store::write_atomic;
pub use store::{read_dataset, write_dataset, Dataset, DATASET_VERSION};
pub use synth::{synth_generate, KernelSpec, RegimeConfig, SynthConfig};

/// One visit: user, POI, UTC epoch seconds, and coordinates in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: u64,
    pub poi_id: u64,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl CheckIn {
    pub fn coords(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }

    pub fn is_valid(&self) -> bool {
        self.timestamp > 0
            && self.lat.is_finite()
            && self.lon.is_finite()
            && self.lat.abs() <= 90.0
            && self.lon.abs() <= 180.0
    }
}
