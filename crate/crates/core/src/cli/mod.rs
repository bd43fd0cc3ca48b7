//! Configuration, the end-to-end pipeline and report types behind the `epg`
//! binary.

mod config;
mod pipeline;
mod report;

pub use config::{load_config, parse_config, ConfigFileError};
pub use pipeline::{
    analyze, build, named_traversal, run_detectors, AnalyzeOptions, Built, Detector, PipelineError, TraversalOutput,
    TraversalRequestError, TRAVERSALS,
};
pub use report::{AnalysisReport, Stats, REPORT_SCHEMA};
