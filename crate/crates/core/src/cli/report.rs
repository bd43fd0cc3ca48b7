use serde::Serialize;

use super::pipeline::Detector;
use crate::detect::Finding;

/// JSON Schema for [`AnalysisReport`] documents.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Stats {
    pub vertex_count: usize,
    pub edge_count: usize,
    pub build_millis: u64,
    pub traversal_millis: u64,
}

/// Result of analyzing one transaction.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalysisReport {
    pub tx_hash: String,
    pub detectors_run: Vec<Detector>,
    /// Ordered by rule, then witness ids.
    pub findings: Vec<Finding>,
    pub stats: Stats,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    /// 0 when clean, 2 when anything was found.
    pub fn exit_code(&self) -> u8 {
        if self.findings.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }
}
