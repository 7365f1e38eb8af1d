//! Control language: functions, sequencing, `alap` loops and rule calls.

pub mod ast;
pub mod interp;
pub mod parser;
pub mod printer;

pub use ast::{Arg, ControlProgram, Function, Statement};
pub use interp::{
    exec, exec_observed, ExecError, ExecObserver, ExecOptions, ExecStatus, ExecutionTrace, MetricProbe, MetricSample,
    PathStep, StepOutcome, StmtPath, TraceEntry,
};
pub use parser::{parse_program, ParseError};
pub use printer::pretty_print;
