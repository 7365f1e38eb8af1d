//! Command-line front end: `run`, `demo` and `validate`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::control::{
    exec_observed, parse_program, ControlProgram, ExecError, ExecObserver, ExecOptions, ExecStatus, ExecutionTrace,
    Statement,
};
use crate::graph::HostGraph;
use crate::io::{export_dot, load_graph, save_graph, trace_to_json, write_trace_csv};
use crate::model::{
    check_model, grenn_rules, seed_graph, Cycle, CycleRecorder, GrennConfig, TrainingTrace, DEMO_PROGRAM,
};

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_BLOCKED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "grenn", version, about = "Graph rewriting recommender: training, inference and updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a control program over a graph document.
    Run {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        program: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run the built-in scenario on the built-in seed graph.
    Demo {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Check a graph document against its schema and the model invariants.
    Validate {
        #[arg(long)]
        graph: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunOpts {
    /// Learning rate.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Training stops once the change in global error falls below this.
    #[arg(long, default_value_t = 1e-4)]
    pub theta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_cycles: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also write a DOT file per snapshot.
    #[arg(long)]
    pub dot: bool,
    /// Write one CSV per training phase (always on for `demo`).
    #[arg(long)]
    pub csv: bool,
}

impl RunOpts {
    fn config(&self) -> GrennConfig {
        GrennConfig { eta: self.eta, theta: self.theta, max_cycles: self.max_cycles, ..Default::default() }
    }
}

/// Result of running a program with snapshots taken after every top-level
/// statement that reaches `infer`.
pub struct Session {
    /// `(name, graph)` in order: `start`, intermediate snapshots, `final`.
    pub snapshots: Vec<(String, HostGraph)>,
    pub phases: Vec<TrainingTrace>,
    pub result: Result<ExecutionTrace, ExecError>,
}

fn calls_rule(program: &ControlProgram, stmt: &Statement, rule: &str) -> bool {
    match stmt {
        Statement::RuleCall { name, .. } => name == rule,
        Statement::FunctionCall(f) => {
            program.function(f).is_some_and(|f| f.body.iter().any(|s| calls_rule(program, s, rule)))
        }
        Statement::Alap(body) => body.iter().any(|s| calls_rule(program, s, rule)),
        Statement::NodeDecl(_) => false,
    }
}

struct Snapshots<'a> {
    program: &'a ControlProgram,
    taken: Vec<(usize, HostGraph)>,
}

impl ExecObserver for Snapshots<'_> {
    fn main_step(&mut self, index: usize, stmt: &Statement, g: &HostGraph) {
        if calls_rule(self.program, stmt, "infer") {
            self.taken.push((index, g.clone()));
        }
    }
}

/// Runs `program` on `g`. `extra` sees every step as well.
pub fn run_session(
    program: &ControlProgram,
    mut g: HostGraph,
    cfg: &GrennConfig,
    extra: &mut dyn ExecObserver,
) -> Session {
    let start = g.clone();
    let mut snaps = Snapshots { program, taken: vec![] };
    let mut rec = CycleRecorder::new();
    let opts = ExecOptions { max_alap_iterations: cfg.max_cycles, ..Default::default() };
    let result = exec_observed(program, &mut g, &grenn_rules(cfg), &opts, &mut ((&mut snaps, &mut rec), extra));

    let mut taken = snaps.taken;
    let completed = matches!(&result, Ok(t) if t.is_completed());
    if completed && taken.last().is_some_and(|(i, _)| i + 1 == program.main.len()) {
        taken.pop();
    }
    let mut snapshots = vec![("start".to_owned(), start)];
    let n = taken.len();
    for (i, (_, s)) in taken.into_iter().enumerate() {
        let name = if n == 1 { "intermediate".to_owned() } else { format!("intermediate-{}", i + 1) };
        snapshots.push((name, s));
    }
    snapshots.push(("final".to_owned(), g));
    let phases = rec
        .into_phases()
        .into_iter()
        .map(|cycles: Vec<Cycle>| TrainingTrace { cycles_run: cycles.len(), cycles, terminated: true })
        .collect();
    Session { snapshots, phases, result }
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes the session's graph documents, DOT files, CSV traces and the
/// execution trace into `dir`.
pub fn write_artifacts(session: &Session, dir: &Path, dot: bool, csv: bool) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, g) in &session.snapshots {
        write_file(&dir.join(format!("{name}.json")), &save_graph(g))?;
        if dot {
            write_file(&dir.join(format!("{name}.dot")), &export_dot(g))?;
        }
    }
    if csv {
        for (i, t) in session.phases.iter().enumerate() {
            write_file(&dir.join(format!("training-{}.csv", i + 1)), &write_trace_csv(t))?;
        }
    }
    if let Ok(trace) = &session.result {
        write_file(&dir.join("trace.json"), &trace_to_json(trace))?;
    }
    Ok(())
}

fn finish(session: Session, opts: &RunOpts, csv: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    for phase in &session.phases {
        for c in &phase.cycles {
            let _ = writeln!(out, "cycle={} global_error={:?} delta={:?}", c.index, c.global_error, c.delta);
        }
    }
    if let Err(e) = write_artifacts(&session, &opts.out, opts.dot, csv) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_ERROR;
    }
    match &session.result {
        Ok(trace) => match &trace.status {
            ExecStatus::Completed => EXIT_COMPLETED,
            ExecStatus::Blocked { at, rule } => {
                let _ = writeln!(err, "blocked: rule `{rule}` has no match at {at}");
                EXIT_BLOCKED
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_model_graph(path: &Path) -> Result<HostGraph, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    load_graph(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_run(graph: &Path, program: &Path, opts: &RunOpts, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = opts.config();
    if let Err(e) = cfg.validate() {
        let _ = writeln!(err, "error: {e}");
        return EXIT_ERROR;
    }
    let g = match load_model_graph(graph) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let problems = check_model(&g);
    if !problems.is_empty() {
        for p in problems {
            let _ = writeln!(err, "{}: {p}", graph.display());
        }
        return EXIT_ERROR;
    }
    let text = match fs::read_to_string(program) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", program.display());
            return EXIT_ERROR;
        }
    };
    let program_ast = match parse_program(&text) {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "{}:{e}", program.display());
            return EXIT_ERROR;
        }
    };
    let session = run_session(&program_ast, g, &cfg, &mut ());
    finish(session, opts, opts.csv, out, err)
}

fn cmd_demo(opts: &RunOpts, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cfg = opts.config();
    if let Err(e) = cfg.validate() {
        let _ = writeln!(err, "error: {e}");
        return EXIT_ERROR;
    }
    let program = parse_program(DEMO_PROGRAM).expect("demo program parses");
    let session = run_session(&program, seed_graph(), &cfg, &mut ());
    finish(session, opts, true, out, err)
}

fn cmd_validate(graph: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match fs::read_to_string(graph) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", graph.display());
            return EXIT_ERROR;
        }
    };
    let g = match load_graph(&text) {
        Ok(g) => g,
        Err(e) => {
            let _ = writeln!(err, "{}: {e}", graph.display());
            return EXIT_ERROR;
        }
    };
    let problems = check_model(&g);
    for p in &problems {
        let _ = writeln!(out, "{p}");
    }
    if problems.is_empty() {
        let _ = writeln!(out, "ok: {} nodes, {} edges", g.node_count(), g.edge_count());
        EXIT_COMPLETED
    } else {
        EXIT_ERROR
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_ERROR;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_COMPLETED;
        }
    };
    match &cli.command {
        Command::Run { graph, program, opts } => cmd_run(graph, program, opts, out, err),
        Command::Demo { opts } => cmd_demo(opts, out, err),
        Command::Validate { graph } => cmd_validate(graph, out, err),
    }
}
