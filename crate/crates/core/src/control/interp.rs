//! Control-program interpreter.
//!
//! A rule call applies the rule once (first match in deterministic order) and
//! fails if the rule has no match. `alap` repeats its body until a statement
//! in it fails; effects of the statements before the failing one are kept and
//! the loop itself succeeds. A failure outside any `alap` blocks the program.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::{Arg, ControlProgram, Statement};
use crate::graph::{HostGraph, NodeId, Value};
use crate::rewrite::{apply_once, ApplicationRecord, ApplyError, ParamBindings, ParamDir, RuleSet};

pub const DEFAULT_MAX_ALAP_ITERATIONS: usize = 10_000;

/// Attribute values sampled from the first node of `node_type` after every
/// successful application of `rule`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricProbe {
    pub rule: String,
    pub node_type: String,
    pub attrs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOptions {
    pub max_alap_iterations: usize,
    pub probes: Vec<MetricProbe>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { max_alap_iterations: DEFAULT_MAX_ALAP_ITERATIONS, probes: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStep {
    /// Statement index within `main` or a function body.
    Stmt { block: String, index: usize },
    /// Iteration (1-based) of an enclosing alap loop.
    Iteration(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StmtPath(pub Vec<PathStep>);

impl StmtPath {
    /// Index of the top-level `main` statement this path runs under.
    pub fn main_index(&self) -> Option<usize> {
        match self.0.first() {
            Some(PathStep::Stmt { block, index }) if block == "main" => Some(*index),
            _ => None,
        }
    }
}

impl fmt::Display for StmtPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            match s {
                PathStep::Stmt { block, index } => write!(f, "{block}:{index}")?,
                PathStep::Iteration(k) => write!(f, "#{k}")?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepOutcome {
    Applied(ApplicationRecord),
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub path: StmtPath,
    pub rule: String,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecStatus {
    Completed,
    Blocked { at: StmtPath, rule: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSample {
    /// Index of the trace entry that produced the sample.
    pub entry: usize,
    pub rule: String,
    pub values: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub entries: Vec<TraceEntry>,
    pub status: ExecStatus,
    pub metrics: Vec<MetricSample>,
}

impl ExecutionTrace {
    pub fn records(&self) -> impl Iterator<Item = &ApplicationRecord> {
        self.entries.iter().filter_map(|e| match &e.outcome {
            StepOutcome::Applied(r) => Some(r),
            StepOutcome::Failed => None,
        })
    }

    /// Folds every recorded application over `g`.
    pub fn replay(&self, g: &mut HostGraph) -> Result<(), ApplyError> {
        for r in self.records() {
            r.replay(g)?;
        }
        Ok(())
    }

    pub fn is_completed(&self) -> bool {
        self.status == ExecStatus::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("alap loop at {path} exceeded {limit} iterations")]
    AlapLimit { path: StmtPath, limit: usize },
    #[error("rule `{rule}` takes {expected} arguments, {got} given")]
    Arity { rule: String, expected: usize, got: usize },
    #[error("argument for parameter `{param}` of `{rule}` must be {}", if *.out { "`out`" } else { "an input" })]
    ArgDirection { rule: String, param: String, out: bool },
    #[error("variable `{0}` is not bound to a node")]
    UnboundVariable(String),
    #[error("{path}: {source}")]
    Apply {
        path: StmtPath,
        #[source]
        source: Box<ApplyError>,
    },
}

/// Hooks called while a program runs.
pub trait ExecObserver {
    /// After every rule call, successful or not.
    fn rule_step(&mut self, _entry: &TraceEntry, _g: &HostGraph) {}
    /// After each top-level statement of `main` completes.
    fn main_step(&mut self, _index: usize, _stmt: &Statement, _g: &HostGraph) {}
}

impl ExecObserver for () {}

impl<T: ExecObserver + ?Sized> ExecObserver for &mut T {
    fn rule_step(&mut self, entry: &TraceEntry, g: &HostGraph) {
        (**self).rule_step(entry, g)
    }
    fn main_step(&mut self, index: usize, stmt: &Statement, g: &HostGraph) {
        (**self).main_step(index, stmt, g)
    }
}

impl<A: ExecObserver, B: ExecObserver> ExecObserver for (A, B) {
    fn rule_step(&mut self, entry: &TraceEntry, g: &HostGraph) {
        self.0.rule_step(entry, g);
        self.1.rule_step(entry, g);
    }
    fn main_step(&mut self, index: usize, stmt: &Statement, g: &HostGraph) {
        self.0.main_step(index, stmt, g);
        self.1.main_step(index, stmt, g);
    }
}

struct Interp<'a> {
    program: &'a ControlProgram,
    rules: &'a RuleSet,
    opts: &'a ExecOptions,
    observer: &'a mut dyn ExecObserver,
    trace: ExecutionTrace,
}

type Scope = BTreeMap<String, Option<NodeId>>;

impl Interp<'_> {
    /// Runs a block; `Ok(false)` means a statement failed.
    fn block(
        &mut self,
        g: &mut HostGraph,
        name: &str,
        stmts: &[Statement],
        path: &mut StmtPath,
        scope: &mut Scope,
    ) -> Result<bool, ExecError> {
        for (index, s) in stmts.iter().enumerate() {
            path.0.push(PathStep::Stmt { block: name.to_owned(), index });
            let ok = self.stmt(g, name, s, path, scope)?;
            path.0.pop();
            if !ok {
                return Ok(false);
            }
            if path.0.is_empty() {
                self.observer.main_step(index, s, g);
            }
        }
        Ok(true)
    }

    fn stmt(
        &mut self,
        g: &mut HostGraph,
        block: &str,
        s: &Statement,
        path: &mut StmtPath,
        scope: &mut Scope,
    ) -> Result<bool, ExecError> {
        match s {
            Statement::NodeDecl(v) => {
                scope.insert(v.clone(), None);
                Ok(true)
            }
            Statement::FunctionCall(f) => {
                let func = self.program.function(f).ok_or_else(|| ExecError::UnknownFunction(f.clone()))?;
                self.block(g, &func.name, &func.body, path, &mut Scope::new())
            }
            Statement::Alap(body) => {
                if body.is_empty() {
                    return Ok(true);
                }
                let mut iteration = 0;
                loop {
                    iteration += 1;
                    if iteration > self.opts.max_alap_iterations {
                        return Err(ExecError::AlapLimit { path: path.clone(), limit: self.opts.max_alap_iterations });
                    }
                    path.0.push(PathStep::Iteration(iteration));
                    let ok = self.block(g, block, body, path, scope)?;
                    path.0.pop();
                    if !ok {
                        return Ok(true);
                    }
                }
            }
            Statement::RuleCall { name, args } => self.call(g, name, args, path, scope),
        }
    }

    fn call(
        &mut self,
        g: &mut HostGraph,
        name: &str,
        args: &[Arg],
        path: &StmtPath,
        scope: &mut Scope,
    ) -> Result<bool, ExecError> {
        let rule = self.rules.get(name).ok_or_else(|| ExecError::UnknownRule(name.to_owned()))?;
        if rule.params.len() != args.len() {
            return Err(ExecError::Arity { rule: name.to_owned(), expected: rule.params.len(), got: args.len() });
        }
        let mut bindings = ParamBindings::new();
        for (param, arg) in rule.params.iter().zip(args) {
            match (param.dir, arg) {
                (ParamDir::In, Arg::Var(v)) => {
                    let node = scope.get(v).copied().flatten().ok_or_else(|| ExecError::UnboundVariable(v.clone()))?;
                    bindings.insert(param.name.clone(), node);
                }
                (ParamDir::Out, Arg::Out(_)) => {}
                (dir, _) => {
                    return Err(ExecError::ArgDirection {
                        rule: name.to_owned(),
                        param: param.name.clone(),
                        out: dir == ParamDir::Out,
                    })
                }
            }
        }
        let result = apply_once(rule, g, &bindings)
            .map_err(|source| ExecError::Apply { path: path.clone(), source: Box::new(source) })?;
        let ok = result.is_some();
        let outcome = match result {
            Some(record) => {
                for (param, arg) in rule.params.iter().zip(args) {
                    if let (ParamDir::Out, Arg::Out(v)) = (param.dir, arg) {
                        scope.insert(v.clone(), record.out_bindings.get(&param.name).copied());
                    }
                }
                StepOutcome::Applied(record)
            }
            None => StepOutcome::Failed,
        };
        let entry = TraceEntry { path: path.clone(), rule: name.to_owned(), outcome };
        let index = self.trace.entries.len();
        if ok {
            for probe in self.opts.probes.iter().filter(|p| p.rule == name) {
                if let Some(node) = g.nodes_of_type(&probe.node_type).next() {
                    let values =
                        probe.attrs.iter().filter_map(|a| g.attr(node, a).map(|v| (a.clone(), v.clone()))).collect();
                    self.trace.metrics.push(MetricSample { entry: index, rule: name.to_owned(), values });
                }
            }
        }
        self.observer.rule_step(&entry, g);
        if !ok {
            self.trace.status = ExecStatus::Blocked { at: entry.path.clone(), rule: name.to_owned() };
        }
        self.trace.entries.push(entry);
        Ok(ok)
    }
}

/// Checks that every called rule exists before anything runs.
fn check_names(program: &ControlProgram, rules: &RuleSet) -> Result<(), ExecError> {
    for r in program.rule_names() {
        if rules.get(r).is_none() {
            return Err(ExecError::UnknownRule(r.to_owned()));
        }
    }
    Ok(())
}

pub fn exec(
    program: &ControlProgram,
    g: &mut HostGraph,
    rules: &RuleSet,
    opts: &ExecOptions,
) -> Result<ExecutionTrace, ExecError> {
    exec_observed(program, g, rules, opts, &mut ())
}

pub fn exec_observed(
    program: &ControlProgram,
    g: &mut HostGraph,
    rules: &RuleSet,
    opts: &ExecOptions,
    observer: &mut dyn ExecObserver,
) -> Result<ExecutionTrace, ExecError> {
    check_names(program, rules)?;
    let mut interp = Interp {
        program,
        rules,
        opts,
        observer,
        trace: ExecutionTrace { entries: vec![], status: ExecStatus::Completed, metrics: vec![] },
    };
    let completed = interp.block(g, "main", &program.main, &mut StmtPath::default(), &mut Scope::new())?;
    if completed {
        interp.trace.status = ExecStatus::Completed;
    }
    Ok(interp.trace)
}
