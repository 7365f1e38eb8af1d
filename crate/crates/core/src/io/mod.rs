//! Graph documents, DOT export and CSV metrics.

mod document;
mod dot;
mod metrics;

pub use document::{
    load_graph, rules_to_json, save_graph, trace_to_json, training_trace_to_json, IoError, FORMAT_VERSION,
};
pub use dot::{export_dot, format_real_g6};
pub use metrics::{read_trace_csv, write_trace_csv, CsvRow};
