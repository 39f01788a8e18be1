//! Command pipelines and their file outputs: evaluation reports, model
//! comparisons, feature-space explanations and SVG plots.

mod compare;
mod evaluate;
mod explain;
mod json;
mod output;
pub mod svg;

pub use compare::{
    compare, write_comparison_csv, CompareOptions, CompareTest, ComparisonRow, FdrFamily, MetricTable, DEFAULT_METRICS,
};
pub use evaluate::{
    evaluate, read_pairs_manifest, AggregateRow, Conventions, EvaluateOptions, EvaluationReport, NdscR, PairRecord,
    RunMetadata, ScanFailure, ScanRow, ALL, DEFAULT_BINS_PER_DECADE, TOOL_NAME, VERSION,
};
pub use explain::{
    explain, load_feature_vectors, read_scan_metadata, write_correlations_csv, write_embedding_csv, CorrelationRow,
    Covariates, EmbeddingRow, ExplainOptions, ExplainReport, ExplainResult, Partition, ScanMeta,
};
pub use json::{to_report_json, write_report_json};
pub use output::{
    read_evaluation, write_evaluation, AGGREGATES_CSV, HISTOGRAM_CSV, PER_SCAN_CSV, REPORT_JSON, TYPED_ERRORS_CSV,
};
