//! The recommender model: users, posts and engagements, trained and queried
//! entirely by graph rewriting.

mod check;
mod drivers;
mod oracle;
mod rules;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeType, HostGraph, NodeId, NodeType, Sort, TypeGraph, Value};

pub use check::{check_model, ModelViolation};
pub use drivers::{
    run_inference, run_training, run_update, Cycle, CycleRecorder, InferenceOutcome, ModelError, TrainingTrace,
    UpdateRecord,
};
pub use oracle::{oracle_global_error, oracle_inferred_strength, oracle_l2_error, OracleError};
pub use rules::{engagement_rule_name, grenn_rules};

/// The demo control program: training, inference, a data update, then training and inference again.
pub const DEMO_PROGRAM: &str = "function training(){
   alap{error; delta;}
}
function inference(){
   infer;
}
function update(){
   node u; newUser(out u);
   node p; newPost(u, out p);\x20
   newEngagement02(p); newEngagement04(p);\x20
}
training; inference;
update;
training; inference;
";

pub const TRAINING_PROGRAM: &str = "alap{error; delta;}";
pub const INFERENCE_PROGRAM: &str = "infer;";
pub const UPDATE_PROGRAM: &str = "node u; newUser(out u);
node p; newPost(u, out p);
newEngagement02(p); newEngagement04(p);
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrennConfig {
    pub eta: f64,
    pub theta: f64,
    pub max_cycles: usize,
    pub engagement_strengths: Vec<f64>,
}

impl Default for GrennConfig {
    fn default() -> Self {
        GrennConfig { eta: 1.0, theta: 1e-4, max_cycles: 10_000, engagement_strengths: vec![0.2, 0.4, 0.8] }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("eta must be a positive finite number, got {0}")]
    Eta(f64),
    #[error("theta must be a positive finite number, got {0}")]
    Theta(f64),
    #[error("max_cycles must be at least 1")]
    MaxCycles,
    #[error("engagement strength {0} is not finite")]
    Strength(f64),
    #[error("engagement strengths {0} and {1} give the same rule name")]
    StrengthName(f64, f64),
}

impl GrennConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.eta) {
            return Err(ConfigError::Eta(self.eta));
        }
        if !positive(self.theta) {
            return Err(ConfigError::Theta(self.theta));
        }
        if self.max_cycles == 0 {
            return Err(ConfigError::MaxCycles);
        }
        for (i, &s) in self.engagement_strengths.iter().enumerate() {
            if !s.is_finite() {
                return Err(ConfigError::Strength(s));
            }
            if let Some(&t) =
                self.engagement_strengths[..i].iter().find(|&&t| engagement_rule_name(t) == engagement_rule_name(s))
            {
                return Err(ConfigError::StrengthName(t, s));
            }
        }
        Ok(())
    }
}

pub fn grenn_type_graph() -> TypeGraph {
    TypeGraph::build(
        vec![
            NodeType::new("User", &[("upd", Sort::Bool)]),
            NodeType::new("Post", &[("weight", Sort::Real)]),
            NodeType::new(
                "Engagement",
                &[
                    ("strength", Sort::Real),
                    ("error", Sort::Real),
                    ("obs", Sort::Bool),
                    ("upd", Sort::Bool),
                    ("count", Sort::Int),
                ],
            ),
            NodeType::new("Error", &[("error", Sort::Real), ("delta", Sort::Real)]),
        ],
        vec![
            EdgeType::new("by", "Engagement", "User"),
            EdgeType::new("on", "Engagement", "Post"),
            EdgeType::new("author", "Post", "User"),
        ],
    )
    .expect("schema is well formed")
}

/// Builds a model graph from plain lists. Ids are assigned in the order
/// users, posts, engagements, the Error node, then edges.
pub struct GraphBuilder {
    pub graph: HostGraph,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder { graph: HostGraph::new(Arc::new(grenn_type_graph())) }
    }

    pub fn user(&mut self, upd: bool) -> NodeId {
        self.graph.add_node("User", [("upd", Value::Bool(upd))]).unwrap()
    }

    pub fn post(&mut self, weight: f64) -> NodeId {
        self.graph.add_node("Post", [("weight", Value::Real(weight))]).unwrap()
    }

    /// Engagement node only; link it with [`GraphBuilder::link`].
    pub fn engagement(&mut self, strength: f64, obs: bool) -> NodeId {
        self.graph
            .add_node(
                "Engagement",
                [
                    ("strength", Value::Real(strength)),
                    ("error", Value::Real(0.0)),
                    ("obs", Value::Bool(obs)),
                    ("upd", Value::Bool(false)),
                    ("count", Value::Int(1)),
                ],
            )
            .unwrap()
    }

    pub fn error_node(&mut self) -> NodeId {
        self.graph.add_node("Error", [("error", Value::Real(0.0)), ("delta", Value::Real(1.0))]).unwrap()
    }

    pub fn author(&mut self, post: NodeId, user: NodeId) {
        self.graph.add_edge("author", post, user).unwrap();
    }

    pub fn link(&mut self, engagement: NodeId, user: NodeId, post: NodeId) {
        self.graph.add_edge("by", engagement, user).unwrap();
        self.graph.add_edge("on", engagement, post).unwrap();
    }
}

/// Ids of the nodes in [`mini_graph`].
pub mod mini {
    use crate::graph::NodeId;
    pub const U1: NodeId = NodeId(0);
    pub const U2: NodeId = NodeId(1);
    pub const P1: NodeId = NodeId(2);
    pub const P2: NodeId = NodeId(3);
    pub const P3: NodeId = NodeId(4);
    pub const E1: NodeId = NodeId(5);
    pub const E2: NodeId = NodeId(6);
    pub const ERROR: NodeId = NodeId(7);
}

/// Two users; u2 is flagged and authors p1, p2 and p3. u1 engages p1 and p2.
pub fn mini_graph() -> HostGraph {
    let mut b = GraphBuilder::new();
    let u1 = b.user(false);
    let u2 = b.user(true);
    let p1 = b.post(0.5);
    let p2 = b.post(1.0);
    let p3 = b.post(1.0);
    let e1 = b.engagement(0.4, true);
    let e2 = b.engagement(0.8, true);
    b.error_node();
    for p in [p1, p2, p3] {
        b.author(p, u2);
    }
    b.link(e1, u1, p1);
    b.link(e2, u1, p2);
    b.graph
}

/// Three flagged users, each authoring one post and engaging the other two.
pub fn seed_graph() -> HostGraph {
    let mut b = GraphBuilder::new();
    let u: Vec<_> = (0..3).map(|_| b.user(true)).collect();
    let p: Vec<_> = (0..3).map(|_| b.post(1.0)).collect();
    let observed = [(1, 0, 0.8), (2, 0, 0.4), (0, 1, 0.2), (2, 1, 0.8), (0, 2, 0.4), (1, 2, 0.2)];
    let e: Vec<_> = observed.iter().map(|&(_, _, s)| b.engagement(s, true)).collect();
    b.error_node();
    for i in 0..3 {
        b.author(p[i], u[i]);
    }
    for (e, &(ui, pi, _)) in e.iter().zip(&observed) {
        b.link(*e, u[ui], p[pi]);
    }
    b.graph
}

/// The unique Error node, if there is exactly one.
pub fn error_node(g: &HostGraph) -> Option<NodeId> {
    let mut it = g.nodes_of_type("Error");
    let first = it.next()?;
    it.next().is_none().then_some(first)
}

pub(crate) fn real(g: &HostGraph, id: NodeId, attr: &str) -> f64 {
    g.attr(id, attr).and_then(Value::as_real).unwrap_or(f64::NAN)
}

pub(crate) fn flag(g: &HostGraph, id: NodeId, attr: &str) -> bool {
    g.attr(id, attr).and_then(Value::as_bool).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_shape() {
        let tg = grenn_type_graph();
        assert_eq!(tg.node_types().len(), 4);
        assert_eq!(tg.edge_types().len(), 3);
        assert_eq!(tg.node_type("Engagement").unwrap().attrs.len(), 5);
        let err = tg.node_type("Error").unwrap();
        assert_eq!(err.attr_sort("error"), Some(Sort::Real));
        assert_eq!(err.attr_sort("delta"), Some(Sort::Real));
    }

    #[test]
    fn seed_fixture() {
        let g = seed_graph();
        assert_eq!(g.node_count(), 13);
        assert_eq!(["User", "Post", "Engagement", "Error"].map(|t| g.count_of_type(t)), [3, 3, 6, 1]);
        assert!(g.check_conformance().is_empty());
        for u in g.nodes_of_type("User") {
            let engaged: Vec<_> = g
                .in_edges(u)
                .filter(|&e| g.edge(e).unwrap().ty == "by")
                .map(|e| g.follow(g.edge(e).unwrap().src, "on").unwrap())
                .collect();
            assert_eq!(engaged.len(), 2);
            assert!(engaged.iter().all(|&p| g.follow(p, "author") != Some(u)));
        }
        assert_eq!(error_node(&g), Some(NodeId(12)));
    }

    #[test]
    fn mini_fixture() {
        let g = mini_graph();
        assert_eq!(g.node_count(), 8);
        assert_eq!(g.edge_count(), 7);
        assert_eq!(g.follow(mini::E1, "on"), Some(mini::P1));
        assert_eq!(g.follow(mini::P3, "author"), Some(mini::U2));
        assert!(flag(&g, mini::U2, "upd") && !flag(&g, mini::U1, "upd"));
        assert_eq!(error_node(&g), Some(mini::ERROR));
    }

    #[test]
    fn config_validation() {
        assert!(GrennConfig::default().validate().is_ok());
        let bad = |f: fn(&mut GrennConfig)| {
            let mut c = GrennConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.eta = 0.0));
        assert!(bad(|c| c.theta = -1.0));
        assert!(bad(|c| c.theta = f64::NAN));
        assert!(bad(|c| c.max_cycles = 0));
        assert!(bad(|c| c.engagement_strengths = vec![0.2, 0.2]));
    }
}
