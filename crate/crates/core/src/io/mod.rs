//! Measure files, run configuration and JSON reports.

mod config;
mod measure_file;
mod report;

pub use config::RunConfig;
pub use measure_file::{
    decode_measure, decode_raw, encode_measure, load_measure, load_raw, save_measure, RawMeasure,
    MAGIC, VERSION,
};
pub use report::{
    to_json, write_json, DistanceReport, FlowReport, FrameEntry, GeodesicIndex, SphericalReport,
    ValidateReport,
};
