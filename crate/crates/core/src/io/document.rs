use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value as Json};
use thiserror::Error;

use crate::control::ExecutionTrace;
use crate::graph::{Edge, EdgeId, GraphError, HostGraph, Node, NodeId, Sort, TypeGraph, Value, Violation};
use crate::model::TrainingTrace;
use crate::rewrite::RuleSet;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    FormatVersion(u64),
    #[error("node {node}, attribute `{attr}`: {detail}")]
    Value { node: u64, attr: String, detail: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("graph does not conform to its type graph:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Conformance(Vec<Violation>),
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: u64,
    #[serde(rename = "type")]
    ty: String,
    attrs: BTreeMap<String, Json>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    id: u64,
    #[serde(rename = "type")]
    ty: String,
    src: u64,
    tgt: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    format_version: u64,
    type_graph: TypeGraph,
    next_id: u64,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

fn encode(v: &Value) -> Json {
    match v {
        Value::Bool(b) => Json::Bool(*b),
        Value::Int(i) => Json::Number((*i).into()),
        Value::Real(x) => match Number::from_f64(*x) {
            Some(n) => Json::Number(n),
            None if x.is_nan() => Json::String("NaN".into()),
            None if *x > 0.0 => Json::String("inf".into()),
            None => Json::String("-inf".into()),
        },
        Value::Str(s) => Json::String(s.clone()),
    }
}

fn decode(j: &Json, sort: Option<Sort>) -> Result<Value, String> {
    match (sort, j) {
        (Some(Sort::Bool) | None, Json::Bool(b)) => Ok(Value::Bool(*b)),
        (Some(Sort::Int), Json::Number(n)) => {
            n.as_i64().map(Value::Int).ok_or_else(|| format!("{n} is not an integer"))
        }
        (None, Json::Number(n)) if n.is_i64() => Ok(Value::Int(n.as_i64().unwrap())),
        (Some(Sort::Real) | None, Json::Number(n)) => Ok(Value::Real(n.as_f64().unwrap())),
        (Some(Sort::Real), Json::String(s)) => match s.as_str() {
            "NaN" => Ok(Value::Real(f64::NAN)),
            "inf" => Ok(Value::Real(f64::INFINITY)),
            "-inf" => Ok(Value::Real(f64::NEG_INFINITY)),
            _ => Err(format!("`{s}` is not a real")),
        },
        (Some(Sort::String) | None, Json::String(s)) => Ok(Value::Str(s.clone())),
        (Some(s), other) => Err(format!("expected {s:?}, found {other}")),
        (None, other) => Err(format!("unsupported value {other}")),
    }
}

/// Canonical JSON text of a graph: nodes then edges, ascending id, with the
/// type graph embedded. Equal graphs give identical bytes.
pub fn save_graph(g: &HostGraph) -> String {
    let doc = GraphDoc {
        format_version: FORMAT_VERSION,
        type_graph: g.type_graph().clone(),
        next_id: g.next_id(),
        nodes: g
            .nodes()
            .map(|(id, n)| NodeDoc {
                id: id.0,
                ty: n.ty.clone(),
                attrs: n.attrs.iter().map(|(k, v)| (k.clone(), encode(v))).collect(),
            })
            .collect(),
        edges: g.edges().map(|(id, e)| EdgeDoc { id: id.0, ty: e.ty.clone(), src: e.src.0, tgt: e.tgt.0 }).collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("graph documents serialize");
    s.push('\n');
    s
}

/// Parses a graph document and checks that the graph conforms to its
/// embedded type graph.
pub fn load_graph(text: &str) -> Result<HostGraph, IoError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != FORMAT_VERSION {
        return Err(IoError::FormatVersion(probe.format_version));
    }
    let doc: GraphDoc = serde_json::from_str(text)?;
    let tg = Arc::new(doc.type_graph);
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in doc.nodes {
        let nt = tg.node_type(&n.ty);
        let mut attrs = BTreeMap::new();
        for (k, j) in n.attrs {
            let sort = nt.and_then(|t| t.attr_sort(&k));
            let v = decode(&j, sort).map_err(|detail| IoError::Value { node: n.id, attr: k.clone(), detail })?;
            attrs.insert(k, v);
        }
        nodes.push((NodeId(n.id), Node { ty: n.ty, attrs }));
    }
    let edges = doc
        .edges
        .into_iter()
        .map(|e| (EdgeId(e.id), Edge { ty: e.ty, src: NodeId(e.src), tgt: NodeId(e.tgt) }))
        .collect();
    let g = HostGraph::from_raw_parts(tg, nodes, edges, doc.next_id)?;
    let violations = g.check_conformance();
    if violations.is_empty() {
        Ok(g)
    } else {
        Err(IoError::Conformance(violations))
    }
}

pub fn rules_to_json(rules: &RuleSet) -> String {
    let all: Vec<_> = rules.rules().collect();
    serde_json::to_string_pretty(&all).expect("rules serialize")
}

pub fn trace_to_json(trace: &ExecutionTrace) -> String {
    serde_json::to_string_pretty(trace).expect("traces serialize")
}

pub fn training_trace_to_json(trace: &TrainingTrace) -> String {
    serde_json::to_string_pretty(trace).expect("traces serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeType, ViolationKind};
    use crate::model::{mini_graph, seed_graph};

    #[test]
    fn round_trip_preserves_ids() {
        for g in [seed_graph(), mini_graph()] {
            let text = save_graph(&g);
            let back = load_graph(&text).unwrap();
            assert_eq!(back, g);
            assert_eq!(save_graph(&back), text);
        }
    }

    #[test]
    fn mini_document_counts() {
        let doc: Json = serde_json::from_str(&save_graph(&mini_graph())).unwrap();
        assert_eq!(doc["nodes"].as_array().unwrap().len(), 8);
        assert_eq!(doc["edges"].as_array().unwrap().len(), 7);
    }

    #[test]
    fn reals_keep_their_sort() {
        let text = save_graph(&seed_graph());
        assert!(text.contains("\"weight\": 1.0"));
        assert!(text.contains("\"count\": 1\n") || text.contains("\"count\": 1,"));
    }

    #[test]
    fn non_finite_reals() {
        let tg = Arc::new(TypeGraph::build(vec![NodeType::new("X", &[("r", Sort::Real)])], vec![]).unwrap());
        let mut g = HostGraph::new(tg);
        for x in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY, -0.0, 1e-300] {
            g.add_node("X", [("r", Value::Real(x))]).unwrap();
        }
        let back = load_graph(&save_graph(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn dangling_edge_is_reported() {
        let mut doc: Json = serde_json::from_str(&save_graph(&mini_graph())).unwrap();
        doc["edges"][0]["tgt"] = Json::from(99);
        match load_graph(&doc.to_string()) {
            Err(IoError::Conformance(v)) => assert!(v.iter().any(|v| v.kind == ViolationKind::DanglingEdge)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let text = save_graph(&mini_graph()).replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(load_graph(&text), Err(IoError::FormatVersion(7))));
    }

    #[test]
    fn empty_graph() {
        let g = HostGraph::new(Arc::new(crate::model::grenn_type_graph()));
        let back = load_graph(&save_graph(&g)).unwrap();
        assert_eq!(back.node_count() + back.edge_count(), 0);
        assert!(back.is_conformant());
    }
}
