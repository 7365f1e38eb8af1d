use serde::{Deserialize, Serialize};

use crate::model::TrainingTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub cycle: usize,
    pub global_error: f64,
    pub delta: f64,
}

/// Header `cycle,global_error,delta` and one row per cycle. Reals use the
/// shortest text that reads back to the same value.
pub fn write_trace_csv(trace: &TrainingTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cycle", "global_error", "delta"]).unwrap();
    for c in &trace.cycles {
        w.write_record([c.index.to_string(), format!("{:?}", c.global_error), format!("{:?}", c.delta)]).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn read_trace_csv(text: &str) -> Result<Vec<CsvRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}
