use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{HostGraph, NodeId, Value, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelViolation {
    Conformance(Violation),
    ErrorNodeCount(usize),
    CountNotOne(NodeId),
    /// `node` has `found` outgoing edges of type `edge` instead of one.
    Arity {
        node: NodeId,
        edge: String,
        found: usize,
    },
    DuplicateEngagement {
        user: NodeId,
        post: NodeId,
        first: NodeId,
        second: NodeId,
    },
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelViolation::Conformance(v) => write!(f, "{v}"),
            ModelViolation::ErrorNodeCount(n) => write!(f, "expected exactly one Error node, found {n}"),
            ModelViolation::CountNotOne(n) => write!(f, "engagement {n} has count different from 1"),
            ModelViolation::Arity { node, edge, found } => {
                write!(f, "{node} has {found} outgoing `{edge}` edges, expected 1")
            }
            ModelViolation::DuplicateEngagement { user, post, first, second } => {
                write!(f, "engagements {first} and {second} both link user {user} to post {post}")
            }
        }
    }
}

fn out_count(g: &HostGraph, n: NodeId, ty: &str) -> usize {
    g.out_edges(n).filter(|&e| g.edge(e).is_some_and(|e| e.ty == ty)).count()
}

/// Structural checks on a model graph beyond type conformance.
pub fn check_model(g: &HostGraph) -> Vec<ModelViolation> {
    let mut out: Vec<_> = g.check_conformance().into_iter().map(ModelViolation::Conformance).collect();
    let errors = g.count_of_type("Error");
    if errors != 1 {
        out.push(ModelViolation::ErrorNodeCount(errors));
    }
    let mut arity = |n: NodeId, ty: &str| {
        let found = out_count(g, n, ty);
        if found != 1 {
            out.push(ModelViolation::Arity { node: n, edge: ty.to_owned(), found });
        }
    };
    for p in g.nodes_of_type("Post") {
        arity(p, "author");
    }
    for e in g.nodes_of_type("Engagement") {
        arity(e, "by");
        arity(e, "on");
    }
    let mut seen = BTreeMap::new();
    for e in g.nodes_of_type("Engagement") {
        if g.attr(e, "count") != Some(&Value::Int(1)) {
            out.push(ModelViolation::CountNotOne(e));
        }
        if let (Some(user), Some(post)) = (g.follow(e, "by"), g.follow(e, "on")) {
            if let Some(&first) = seen.get(&(user, post)) {
                out.push(ModelViolation::DuplicateEngagement { user, post, first, second: e });
            } else {
                seen.insert((user, post), e);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mini_graph, seed_graph, GraphBuilder};

    #[test]
    fn fixtures_are_valid() {
        assert!(check_model(&seed_graph()).is_empty());
        assert!(check_model(&mini_graph()).is_empty());
    }

    #[test]
    fn detects_problems() {
        let mut b = GraphBuilder::new();
        let u = b.user(false);
        let p = b.post(1.0);
        b.author(p, u);
        let e1 = b.engagement(0.2, true);
        let e2 = b.engagement(0.4, true);
        b.link(e1, u, p);
        b.link(e2, u, p);
        b.error_node();
        b.error_node();
        let mut g = b.graph;
        g.set_attr(e2, "count", Value::Int(2)).unwrap();
        let v = check_model(&g);
        assert!(v.contains(&ModelViolation::ErrorNodeCount(2)));
        assert!(v.contains(&ModelViolation::CountNotOne(e2)));
        assert!(v.contains(&ModelViolation::DuplicateEngagement { user: u, post: p, first: e1, second: e2 }));
    }
}
