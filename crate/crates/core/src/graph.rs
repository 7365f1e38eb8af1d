//! Typed attributed directed graphs.
//!
//! A [`TypeGraph`] declares node types (with sorted attributes) and edge
//! types (with fixed source and target node types). A [`HostGraph`] is an
//! instance of a type graph. Every mutating operation keeps the host graph
//! conformant; [`HostGraph::check_conformance`] reports what is wrong with a
//! graph assembled from untrusted parts (for example a loaded document).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The sort of an attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sort {
    Bool,
    Int,
    Real,
    String,
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sort::Bool => "bool",
            Sort::Int => "int",
            Sort::Real => "real",
            Sort::String => "string",
        })
    }
}

/// An attribute value. Reals compare bit-wise so that graph equality is exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

impl Value {
    pub fn sort(&self) -> Sort {
        match self {
            Value::Bool(_) => Sort::Bool,
            Value::Int(_) => Sort::Int,
            Value::Real(_) => Sort::Real,
            Value::Str(_) => Sort::String,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Reals as-is, ints widened; `None` for other sorts.
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(r) => Some(*r),
            Value::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Real(a), Value::Real(b)) => a.to_bits() == b.to_bits(),
            (Value::Str(a), Value::Str(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(r: f64) -> Self {
        Value::Real(r)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrDecl {
    pub name: String,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeType {
    pub name: String,
    pub attrs: Vec<AttrDecl>,
}

impl NodeType {
    pub fn new(name: impl Into<String>, attrs: &[(&str, Sort)]) -> Self {
        NodeType {
            name: name.into(),
            attrs: attrs.iter().map(|(n, s)| AttrDecl { name: (*n).to_owned(), sort: *s }).collect(),
        }
    }

    pub fn attr_sort(&self, attr: &str) -> Option<Sort> {
        self.attrs.iter().find(|a| a.name == attr).map(|a| a.sort)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeType {
    pub name: String,
    pub source: String,
    pub target: String,
}

impl EdgeType {
    pub fn new(name: impl Into<String>, source: impl Into<String>, target: impl Into<String>) -> Self {
        EdgeType { name: name.into(), source: source.into(), target: target.into() }
    }
}

/// A validated schema: unique type names, unique attribute names per node
/// type, and edge endpoints that reference declared node types.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct TypeGraph {
    node_types: Vec<NodeType>,
    edge_types: Vec<EdgeType>,
}

impl TypeGraph {
    pub fn build(node_types: Vec<NodeType>, edge_types: Vec<EdgeType>) -> Result<Self, GraphError> {
        let mut names = BTreeSet::new();
        for nt in &node_types {
            if !names.insert(nt.name.as_str()) {
                return Err(GraphError::DuplicateType(nt.name.clone()));
            }
            let mut attrs = BTreeSet::new();
            for a in &nt.attrs {
                if !attrs.insert(a.name.as_str()) {
                    return Err(GraphError::DuplicateAttr { ty: nt.name.clone(), attr: a.name.clone() });
                }
            }
        }
        for et in &edge_types {
            if !names.insert(et.name.as_str()) {
                return Err(GraphError::DuplicateType(et.name.clone()));
            }
        }
        for et in &edge_types {
            for endpoint in [&et.source, &et.target] {
                if !node_types.iter().any(|nt| &nt.name == endpoint) {
                    return Err(GraphError::BadEndpointType { edge_type: et.name.clone(), endpoint: endpoint.clone() });
                }
            }
        }
        Ok(TypeGraph { node_types, edge_types })
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeType] {
        &self.edge_types
    }

    pub fn node_type(&self, name: &str) -> Option<&NodeType> {
        self.node_types.iter().find(|t| t.name == name)
    }

    pub fn edge_type(&self, name: &str) -> Option<&EdgeType> {
        self.edge_types.iter().find(|t| t.name == name)
    }
}

impl<'de> Deserialize<'de> for TypeGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            node_types: Vec<NodeType>,
            edge_types: Vec<EdgeType>,
        }
        let raw = Raw::deserialize(d)?;
        TypeGraph::build(raw.node_types, raw.edge_types).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub ty: String,
    pub attrs: BTreeMap<String, Value>,
}

impl Node {
    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub ty: String,
    pub src: NodeId,
    pub tgt: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ViolationKind {
    UnknownType,
    MissingAttr,
    ExtraAttr,
    SortMismatch,
    DanglingEdge,
    BadEndpointType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Id of the offending node or edge.
    pub subject: u64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.kind, self.subject, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate type name `{0}`")]
    DuplicateType(String),
    #[error("duplicate attribute `{attr}` on node type `{ty}`")]
    DuplicateAttr { ty: String, attr: String },
    #[error("edge type `{edge_type}` references undeclared node type `{endpoint}`")]
    BadEndpointType { edge_type: String, endpoint: String },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("node type `{ty}` requires attribute `{attr}`")]
    MissingAttr { ty: String, attr: String },
    #[error("node type `{ty}` declares no attribute `{attr}`")]
    ExtraAttr { ty: String, attr: String },
    #[error("attribute `{attr}` expects {expected}, got {found}")]
    SortMismatch { attr: String, expected: Sort, found: Sort },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("edge endpoint {0} does not exist")]
    DanglingEndpoint(NodeId),
    #[error("edge type `{edge_type}` needs a `{expected}` endpoint, {node} is a `{found}`")]
    BadEndpoint { edge_type: String, node: NodeId, expected: String, found: String },
    #[error("id {0} is already allocated")]
    IdInUse(u64),
}

/// Elements removed by [`HostGraph::delete_node`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Removed {
    pub node: NodeId,
    pub edges: Vec<EdgeId>,
}

/// An instance graph over a shared [`TypeGraph`].
///
/// Nodes and edges draw ids from one counter, so an id names at most one
/// element over the graph's whole lifetime.
#[derive(Debug, Clone)]
pub struct HostGraph {
    type_graph: Arc<TypeGraph>,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    next_id: u64,
    out_adj: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    in_adj: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    by_type: BTreeMap<String, BTreeSet<NodeId>>,
    version: u64,
}

impl PartialEq for HostGraph {
    fn eq(&self, other: &Self) -> bool {
        self.type_graph == other.type_graph
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.next_id == other.next_id
    }
}

impl HostGraph {
    pub fn new(type_graph: Arc<TypeGraph>) -> Self {
        HostGraph {
            type_graph,
            nodes: BTreeMap::new(),
            edges: BTreeMap::new(),
            next_id: 0,
            out_adj: BTreeMap::new(),
            in_adj: BTreeMap::new(),
            by_type: BTreeMap::new(),
            version: 0,
        }
    }

    /// Assembles a graph without conformance checks. Ids must be distinct and
    /// below `next_id`; everything else is left to [`Self::check_conformance`].
    pub fn from_raw_parts(
        type_graph: Arc<TypeGraph>,
        nodes: Vec<(NodeId, Node)>,
        edges: Vec<(EdgeId, Edge)>,
        next_id: u64,
    ) -> Result<Self, GraphError> {
        let mut g = HostGraph::new(type_graph);
        let mut seen = BTreeSet::new();
        for id in nodes.iter().map(|(n, _)| n.0).chain(edges.iter().map(|(e, _)| e.0)) {
            if !seen.insert(id) || id >= next_id {
                return Err(GraphError::IdInUse(id));
            }
        }
        for (id, node) in nodes {
            g.insert_node_unchecked(id, node);
        }
        for (id, edge) in edges {
            g.insert_edge_unchecked(id, edge);
        }
        g.next_id = next_id;
        Ok(g)
    }

    pub fn type_graph(&self) -> &TypeGraph {
        &self.type_graph
    }

    pub fn shared_type_graph(&self) -> Arc<TypeGraph> {
        Arc::clone(&self.type_graph)
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Bumped on every mutation; used to detect stale matches.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node)> {
        self.nodes.iter().map(|(id, n)| (*id, n))
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().map(|(id, e)| (*id, e))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Node ids of the given type, ascending.
    pub fn nodes_of_type<'a>(&'a self, ty: &str) -> impl Iterator<Item = NodeId> + 'a {
        self.by_type.get(ty).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn count_of_type(&self, ty: &str) -> usize {
        self.by_type.get(ty).map_or(0, BTreeSet::len)
    }

    pub fn out_edges<'a>(&'a self, id: NodeId) -> impl Iterator<Item = EdgeId> + 'a {
        self.out_adj.get(&id).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn in_edges<'a>(&'a self, id: NodeId) -> impl Iterator<Item = EdgeId> + 'a {
        self.in_adj.get(&id).into_iter().flat_map(|s| s.iter().copied())
    }

    /// Target of the unique outgoing edge of type `ty`, if there is exactly one.
    pub fn follow(&self, id: NodeId, ty: &str) -> Option<NodeId> {
        let mut targets = self.out_edges(id).filter_map(|e| self.edges.get(&e)).filter(|e| e.ty == ty).map(|e| e.tgt);
        let first = targets.next()?;
        targets.next().is_none().then_some(first)
    }

    pub fn attr(&self, id: NodeId, attr: &str) -> Option<&Value> {
        self.nodes.get(&id).and_then(|n| n.attrs.get(attr))
    }

    pub fn add_node<K, I>(&mut self, ty: &str, attrs: I) -> Result<NodeId, GraphError>
    where
        K: Into<String>,
        I: IntoIterator<Item = (K, Value)>,
    {
        let attrs: BTreeMap<String, Value> = attrs.into_iter().map(|(k, v)| (k.into(), v)).collect();
        let id = NodeId(self.next_id);
        self.create_node_with_id(id, ty, attrs)?;
        Ok(id)
    }

    /// Adds a node whose id was allocated ahead of time (used when replaying
    /// application records). `id` must not be below `next_id`.
    pub(crate) fn create_node_with_id(
        &mut self,
        id: NodeId,
        ty: &str,
        attrs: BTreeMap<String, Value>,
    ) -> Result<(), GraphError> {
        if id.0 < self.next_id {
            return Err(GraphError::IdInUse(id.0));
        }
        self.check_node_attrs(ty, &attrs)?;
        self.insert_node_unchecked(id, Node { ty: ty.to_owned(), attrs });
        self.next_id = id.0 + 1;
        Ok(())
    }

    fn check_node_attrs(&self, ty: &str, attrs: &BTreeMap<String, Value>) -> Result<(), GraphError> {
        let nt = self.type_graph.node_type(ty).ok_or_else(|| GraphError::UnknownType(ty.to_owned()))?;
        for decl in &nt.attrs {
            match attrs.get(&decl.name) {
                None => return Err(GraphError::MissingAttr { ty: ty.to_owned(), attr: decl.name.clone() }),
                Some(v) if v.sort() != decl.sort => {
                    return Err(GraphError::SortMismatch {
                        attr: decl.name.clone(),
                        expected: decl.sort,
                        found: v.sort(),
                    })
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = attrs.keys().find(|k| nt.attr_sort(k).is_none()) {
            return Err(GraphError::ExtraAttr { ty: ty.to_owned(), attr: extra.clone() });
        }
        Ok(())
    }

    pub fn add_edge(&mut self, ty: &str, src: NodeId, tgt: NodeId) -> Result<EdgeId, GraphError> {
        let id = EdgeId(self.next_id);
        self.create_edge_with_id(id, ty, src, tgt)?;
        Ok(id)
    }

    pub(crate) fn create_edge_with_id(
        &mut self,
        id: EdgeId,
        ty: &str,
        src: NodeId,
        tgt: NodeId,
    ) -> Result<(), GraphError> {
        if id.0 < self.next_id {
            return Err(GraphError::IdInUse(id.0));
        }
        let et = self.type_graph.edge_type(ty).ok_or_else(|| GraphError::UnknownType(ty.to_owned()))?;
        for (node, expected) in [(src, &et.source), (tgt, &et.target)] {
            let n = self.nodes.get(&node).ok_or(GraphError::DanglingEndpoint(node))?;
            if &n.ty != expected {
                return Err(GraphError::BadEndpoint {
                    edge_type: ty.to_owned(),
                    node,
                    expected: expected.clone(),
                    found: n.ty.clone(),
                });
            }
        }
        self.insert_edge_unchecked(id, Edge { ty: ty.to_owned(), src, tgt });
        self.next_id = id.0 + 1;
        Ok(())
    }

    /// Removes a node together with every incident edge.
    pub fn delete_node(&mut self, id: NodeId) -> Result<Removed, GraphError> {
        let node = self.nodes.remove(&id).ok_or(GraphError::UnknownNode(id))?;
        let incident: BTreeSet<EdgeId> = self.out_edges(id).chain(self.in_edges(id)).collect();
        for e in &incident {
            self.remove_edge_entry(*e);
        }
        self.out_adj.remove(&id);
        self.in_adj.remove(&id);
        if let Some(s) = self.by_type.get_mut(&node.ty) {
            s.remove(&id);
        }
        self.version += 1;
        Ok(Removed { node: id, edges: incident.into_iter().collect() })
    }

    pub fn delete_edge(&mut self, id: EdgeId) -> Result<Edge, GraphError> {
        let edge = self.remove_edge_entry(id).ok_or(GraphError::UnknownEdge(id))?;
        self.version += 1;
        Ok(edge)
    }

    /// Updates one attribute and returns its previous value.
    pub fn set_attr(&mut self, id: NodeId, attr: &str, value: Value) -> Result<Value, GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        let sort = self
            .type_graph
            .node_type(&node.ty)
            .and_then(|t| t.attr_sort(attr))
            .ok_or_else(|| GraphError::ExtraAttr { ty: node.ty.clone(), attr: attr.to_owned() })?;
        if value.sort() != sort {
            return Err(GraphError::SortMismatch { attr: attr.to_owned(), expected: sort, found: value.sort() });
        }
        let old = node.attrs.insert(attr.to_owned(), value);
        self.version += 1;
        old.ok_or_else(|| GraphError::MissingAttr { ty: node.ty.clone(), attr: attr.to_owned() })
    }

    /// Restores the id counter (undo of an application record).
    pub(crate) fn reset_next_id(&mut self, next_id: u64) {
        self.next_id = next_id;
        self.version += 1;
    }

    /// Re-inserts a previously removed element under its old id.
    pub(crate) fn restore_node(&mut self, id: NodeId, node: Node) -> Result<(), GraphError> {
        if self.nodes.contains_key(&id) {
            return Err(GraphError::IdInUse(id.0));
        }
        self.check_node_attrs(&node.ty, &node.attrs)?;
        self.insert_node_unchecked(id, node);
        Ok(())
    }

    pub(crate) fn restore_edge(&mut self, id: EdgeId, edge: Edge) -> Result<(), GraphError> {
        if self.edges.contains_key(&id) {
            return Err(GraphError::IdInUse(id.0));
        }
        for n in [edge.src, edge.tgt] {
            if !self.nodes.contains_key(&n) {
                return Err(GraphError::DanglingEndpoint(n));
            }
        }
        self.insert_edge_unchecked(id, edge);
        Ok(())
    }

    fn insert_node_unchecked(&mut self, id: NodeId, node: Node) {
        self.by_type.entry(node.ty.clone()).or_default().insert(id);
        self.nodes.insert(id, node);
        self.version += 1;
    }

    fn insert_edge_unchecked(&mut self, id: EdgeId, edge: Edge) {
        self.out_adj.entry(edge.src).or_default().insert(id);
        self.in_adj.entry(edge.tgt).or_default().insert(id);
        self.edges.insert(id, edge);
        self.version += 1;
    }

    fn remove_edge_entry(&mut self, id: EdgeId) -> Option<Edge> {
        let edge = self.edges.remove(&id)?;
        if let Some(s) = self.out_adj.get_mut(&edge.src) {
            s.remove(&id);
        }
        if let Some(s) = self.in_adj.get_mut(&edge.tgt) {
            s.remove(&id);
        }
        Some(edge)
    }

    /// All schema violations, ordered by subject id. Empty iff conformant.
    pub fn check_conformance(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (id, node) in &self.nodes {
            let Some(nt) = self.type_graph.node_type(&node.ty) else {
                out.push(Violation {
                    kind: ViolationKind::UnknownType,
                    subject: id.0,
                    detail: format!("node type `{}` is not declared", node.ty),
                });
                continue;
            };
            for decl in &nt.attrs {
                match node.attrs.get(&decl.name) {
                    None => out.push(Violation {
                        kind: ViolationKind::MissingAttr,
                        subject: id.0,
                        detail: format!("`{}` lacks attribute `{}`", node.ty, decl.name),
                    }),
                    Some(v) if v.sort() != decl.sort => out.push(Violation {
                        kind: ViolationKind::SortMismatch,
                        subject: id.0,
                        detail: format!("`{}.{}` expects {}, got {}", node.ty, decl.name, decl.sort, v.sort()),
                    }),
                    Some(_) => {}
                }
            }
            for name in node.attrs.keys().filter(|k| nt.attr_sort(k).is_none()) {
                out.push(Violation {
                    kind: ViolationKind::ExtraAttr,
                    subject: id.0,
                    detail: format!("`{}` declares no attribute `{}`", node.ty, name),
                });
            }
        }
        for (id, edge) in &self.edges {
            let Some(et) = self.type_graph.edge_type(&edge.ty) else {
                out.push(Violation {
                    kind: ViolationKind::UnknownType,
                    subject: id.0,
                    detail: format!("edge type `{}` is not declared", edge.ty),
                });
                continue;
            };
            for (end, expected) in [(edge.src, &et.source), (edge.tgt, &et.target)] {
                match self.nodes.get(&end) {
                    None => out.push(Violation {
                        kind: ViolationKind::DanglingEdge,
                        subject: id.0,
                        detail: format!("`{}` endpoint {} does not exist", edge.ty, end),
                    }),
                    Some(n) if &n.ty != expected => out.push(Violation {
                        kind: ViolationKind::BadEndpointType,
                        subject: id.0,
                        detail: format!("`{}` endpoint {} is `{}`, expected `{}`", edge.ty, end, n.ty, expected),
                    }),
                    Some(_) => {}
                }
            }
        }
        out.sort_by_key(|v| v.subject);
        out
    }

    pub fn is_conformant(&self) -> bool {
        self.check_conformance().is_empty()
    }
}
