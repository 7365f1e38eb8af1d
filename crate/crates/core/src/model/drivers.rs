use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{check_model, error_node, grenn_rules, real, ConfigError, GrennConfig, ModelViolation};
use super::{INFERENCE_PROGRAM, TRAINING_PROGRAM, UPDATE_PROGRAM};
use crate::control::{
    exec_observed, parse_program, ExecError, ExecObserver, ExecOptions, ExecStatus, ExecutionTrace, PathStep,
    StepOutcome, TraceEntry,
};
use crate::graph::{HostGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub index: usize,
    pub global_error: f64,
    pub delta: f64,
    /// Post weights at the end of the cycle.
    pub post_weights: BTreeMap<NodeId, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub cycles: Vec<Cycle>,
    pub terminated: bool,
    pub cycles_run: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceOutcome {
    pub created: Vec<NodeId>,
    /// `infer` found no match, i.e. no user was flagged.
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub user: NodeId,
    pub post: NodeId,
    pub engagements: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("graph is not a valid model graph: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Precondition(Vec<ModelViolation>),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("training did not converge within {limit} cycles")]
    MaxCyclesExceeded { limit: usize, trace: Box<TrainingTrace> },
    #[error("blocked: rule `{rule}` has no match")]
    Blocked { rule: String },
}

/// Collects training cycles from `error` and `delta` applications. Each
/// alap loop instance that calls `error` yields one phase, possibly empty.
#[derive(Debug, Default)]
pub struct CycleRecorder {
    phases: Vec<(Vec<PathStep>, Vec<Cycle>)>,
}

impl CycleRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phases(&self) -> impl Iterator<Item = &[Cycle]> {
        self.phases.iter().map(|(_, c)| c.as_slice())
    }

    pub fn into_phases(self) -> Vec<Vec<Cycle>> {
        self.phases.into_iter().map(|(_, c)| c).collect()
    }
}

fn post_weights(g: &HostGraph) -> BTreeMap<NodeId, f64> {
    g.nodes_of_type("Post").map(|p| (p, real(g, p, "weight"))).collect()
}

impl ExecObserver for CycleRecorder {
    fn rule_step(&mut self, entry: &TraceEntry, g: &HostGraph) {
        let applied = matches!(entry.outcome, StepOutcome::Applied(_));
        let steps = &entry.path.0;
        let split = steps.iter().rposition(|s| matches!(s, PathStep::Iteration(_)));
        let (key, index) = match split {
            Some(i) => match steps[i] {
                PathStep::Iteration(k) => (steps[..i].to_vec(), k),
                _ => unreachable!(),
            },
            None => (steps.clone(), 1),
        };
        let same_phase = |phases: &[(Vec<PathStep>, Vec<Cycle>)]| phases.last().is_some_and(|(k, _)| *k == key);
        match entry.rule.as_str() {
            "error" if !applied => {
                if !same_phase(&self.phases) {
                    self.phases.push((key, vec![]));
                }
            }
            "error" => {
                let Some(er) = error_node(g) else { return };
                let cycle = Cycle {
                    index,
                    global_error: real(g, er, "error"),
                    delta: real(g, er, "delta"),
                    post_weights: post_weights(g),
                };
                match self.phases.last_mut() {
                    Some((k, cycles)) if *k == key => cycles.push(cycle),
                    _ => self.phases.push((key, vec![cycle])),
                }
            }
            "delta" if applied => {
                if let Some((k, cycles)) = self.phases.last_mut() {
                    if *k == key {
                        if let Some(last) = cycles.last_mut() {
                            last.post_weights = post_weights(g);
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

fn precheck(g: &HostGraph, cfg: &GrennConfig) -> Result<(), ModelError> {
    cfg.validate()?;
    let problems = check_model(g);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ModelError::Precondition(problems))
    }
}

fn run_program(
    text: &str,
    g: &mut HostGraph,
    cfg: &GrennConfig,
    observer: &mut dyn ExecObserver,
) -> Result<ExecutionTrace, ExecError> {
    let program = parse_program(text).expect("built-in program parses");
    let opts = ExecOptions { max_alap_iterations: cfg.max_cycles, ..Default::default() };
    exec_observed(&program, g, &grenn_rules(cfg), &opts, observer)
}

/// Runs `alap{error; delta;}` and reports every cycle.
pub fn run_training(g: &mut HostGraph, cfg: &GrennConfig) -> Result<TrainingTrace, ModelError> {
    precheck(g, cfg)?;
    let mut rec = CycleRecorder::new();
    let result = run_program(TRAINING_PROGRAM, g, cfg, &mut rec);
    let cycles = rec.into_phases().into_iter().next().unwrap_or_default();
    let mut trace = TrainingTrace { cycles_run: cycles.len(), cycles, terminated: false };
    match result {
        Ok(_) => {
            trace.terminated = true;
            Ok(trace)
        }
        Err(ExecError::AlapLimit { limit, .. }) => Err(ModelError::MaxCyclesExceeded { limit, trace: Box::new(trace) }),
        Err(e) => Err(e.into()),
    }
}

/// One application of `infer`. Returns the created engagements.
pub fn run_inference(g: &mut HostGraph, cfg: &GrennConfig) -> Result<InferenceOutcome, ModelError> {
    precheck(g, cfg)?;
    let trace = run_program(INFERENCE_PROGRAM, g, cfg, &mut ())?;
    let created = trace
        .records()
        .flat_map(|r| r.created_nodes.iter())
        .filter(|(_, n)| n.ty == "Engagement")
        .map(|(id, _)| *id)
        .collect();
    Ok(InferenceOutcome { created, blocked: !trace.is_completed() })
}

/// Adds a new user with one post and two observed engagements on it.
pub fn run_update(g: &mut HostGraph, cfg: &GrennConfig) -> Result<UpdateRecord, ModelError> {
    precheck(g, cfg)?;
    let trace = run_program(UPDATE_PROGRAM, g, cfg, &mut ())?;
    if let ExecStatus::Blocked { rule, .. } = trace.status {
        return Err(ModelError::Blocked { rule });
    }
    let out = |rule: &str, param: &str| {
        trace.records().find(|r| r.rule == rule).and_then(|r| r.out_bindings.get(param).copied())
    };
    let user = out("newUser", "u").expect("newUser applied");
    let post = out("newPost", "p").expect("newPost applied");
    let engagements = trace
        .records()
        .filter(|r| r.rule.starts_with("newEngagement"))
        .flat_map(|r| r.created_nodes.iter().map(|(id, _)| *id))
        .collect();
    Ok(UpdateRecord { user, post, engagements })
}
