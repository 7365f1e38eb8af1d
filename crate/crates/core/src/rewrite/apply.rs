//! Rule application with snapshot semantics.
//!
//! [`plan`] evaluates every expression of a match forest against the current
//! graph and produces an [`ApplicationRecord`] without touching the graph.
//! [`apply`] then commits the record with [`ApplicationRecord::replay`], so the
//! record is by construction exactly what happened.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{eval, EvalContext, EvalError};
use super::matcher::{find_match_forests, read_attr, LevelMatch, MatchError, MatchForest, ParamBindings};
use super::rule::{ElementId, LevelId, ParamDir, Role, Rule, Shape};
use crate::graph::{Edge, EdgeId, GraphError, HostGraph, Node, NodeId, Sort, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrWrite {
    pub node: NodeId,
    pub attr: String,
    pub old: Value,
    pub new: Value,
}

/// Everything one rule application changed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicationRecord {
    pub rule: String,
    pub created_nodes: Vec<(NodeId, Node)>,
    pub created_edges: Vec<(EdgeId, Edge)>,
    pub deleted_nodes: Vec<(NodeId, Node)>,
    /// Includes edges removed because an endpoint was deleted.
    pub deleted_edges: Vec<(EdgeId, Edge)>,
    pub writes: Vec<AttrWrite>,
    pub out_bindings: BTreeMap<String, NodeId>,
    pub next_id_before: u64,
    pub next_id_after: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("expression evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("match forest for `{0}` is stale: the graph changed since matching")]
    StaleForest(String),
    #[error("conflicting writes to {node}.{attr}: {first} vs {second}")]
    ConflictingWrites { node: NodeId, attr: String, first: Value, second: Value },
    #[error("{node}.{attr} written by a rule that deletes {node}")]
    WriteToDeleted { node: NodeId, attr: String },
    #[error("created edge would attach to deleted node {0}")]
    AttachToDeleted(NodeId),
    #[error("{node}.{attr} expects {expected}, expression gave {found}")]
    Sort { node: String, attr: String, expected: Sort, found: Sort },
    #[error("`out` parameter `{0}` has no node to bind")]
    UnboundOut(String),
    #[error("record does not fit this graph: {0}")]
    StaleRecord(String),
}

impl ApplicationRecord {
    pub fn created_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> =
            self.created_nodes.iter().map(|(n, _)| n.0).chain(self.created_edges.iter().map(|(e, _)| e.0)).collect();
        ids.sort_unstable();
        ids
    }

    pub fn deleted_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> =
            self.deleted_nodes.iter().map(|(n, _)| n.0).chain(self.deleted_edges.iter().map(|(e, _)| e.0)).collect();
        ids.sort_unstable();
        ids
    }

    pub fn is_noop(&self) -> bool {
        self.created_nodes.is_empty()
            && self.created_edges.is_empty()
            && self.deleted_nodes.is_empty()
            && self.deleted_edges.is_empty()
            && self.writes.is_empty()
    }

    /// Re-applies the recorded changes to a graph in the recorded pre-state.
    pub fn replay(&self, g: &mut HostGraph) -> Result<(), ApplyError> {
        if g.next_id() != self.next_id_before {
            return Err(ApplyError::StaleRecord(format!(
                "next id is {}, record expects {}",
                g.next_id(),
                self.next_id_before
            )));
        }
        for w in &self.writes {
            if g.attr(w.node, &w.attr) != Some(&w.old) {
                return Err(ApplyError::StaleRecord(format!("{}.{} does not hold {}", w.node, w.attr, w.old)));
            }
        }
        for (id, _) in &self.deleted_edges {
            g.delete_edge(*id)?;
        }
        for (id, _) in &self.deleted_nodes {
            g.delete_node(*id)?;
        }
        // ids were allocated in one sequence across nodes and edges
        let (mut nodes, mut edges) = (self.created_nodes.iter().peekable(), self.created_edges.iter().peekable());
        loop {
            let node_next = match (nodes.peek(), edges.peek()) {
                (Some((n, _)), Some((e, _))) => n.0 < e.0,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if node_next {
                let (id, node) = nodes.next().expect("peeked");
                g.create_node_with_id(*id, &node.ty, node.attrs.clone())?;
            } else {
                let (id, edge) = edges.next().expect("peeked");
                g.create_edge_with_id(*id, &edge.ty, edge.src, edge.tgt)?;
            }
        }
        for w in &self.writes {
            g.set_attr(w.node, &w.attr, w.new.clone())?;
        }
        g.reset_next_id(self.next_id_after);
        Ok(())
    }

    /// Undoes [`Self::replay`] on the post-state, restoring the pre-state.
    pub fn revert(&self, g: &mut HostGraph) -> Result<(), ApplyError> {
        for w in self.writes.iter().rev() {
            g.set_attr(w.node, &w.attr, w.old.clone())?;
        }
        for (id, _) in self.created_edges.iter().rev() {
            g.delete_edge(*id)?;
        }
        for (id, _) in self.created_nodes.iter().rev() {
            g.delete_node(*id)?;
        }
        for (id, node) in &self.deleted_nodes {
            g.restore_node(*id, node.clone())?;
        }
        for (id, edge) in &self.deleted_edges {
            g.restore_edge(*id, edge.clone())?;
        }
        g.reset_next_id(self.next_id_before);
        Ok(())
    }
}

/// Evaluation context of one level match inside a forest.
struct MatchCtx<'a> {
    g: &'a HostGraph,
    m: &'a LevelMatch,
}

impl EvalContext for MatchCtx<'_> {
    fn attr(&self, elem: ElementId, attr: &str) -> Result<Value, EvalError> {
        read_attr(self.g, self.m.binding(), elem, attr)
    }

    fn for_each_sub(
        &self,
        level: LevelId,
        f: &mut dyn FnMut(&dyn EvalContext) -> Result<(), EvalError>,
    ) -> Result<usize, EvalError> {
        let subs = self.m.sub_matches(level).ok_or(EvalError::NoSuchLevel(level))?;
        for s in subs {
            f(&MatchCtx { g: self.g, m: s })?;
        }
        Ok(subs.len())
    }
}

/// Evaluates `expr` in the context of `ctx`, a level match of some forest.
/// Aggregates fold over the sub-matches of `ctx`'s child levels.
pub fn eval_expr(expr: &super::expr::Expr, ctx: &LevelMatch, g: &HostGraph) -> Result<Value, EvalError> {
    eval(expr, &MatchCtx { g, m: ctx })
}

fn coerce(value: Value, sort: Sort, node: &str, attr: &str) -> Result<Value, ApplyError> {
    match (value, sort) {
        (Value::Int(i), Sort::Real) => Ok(Value::Real(i as f64)),
        (v, s) if v.sort() == s => Ok(v),
        (v, s) => Err(ApplyError::Sort { node: node.to_owned(), attr: attr.to_owned(), expected: s, found: v.sort() }),
    }
}

struct Planner<'a> {
    rule: &'a Rule,
    g: &'a HostGraph,
    next_id: u64,
    created_nodes: Vec<(NodeId, Node)>,
    created_edges: Vec<(EdgeId, Edge)>,
    erase_nodes: BTreeSet<NodeId>,
    erase_edges: BTreeSet<EdgeId>,
    writes: BTreeMap<(NodeId, String), Value>,
    root_created: Vec<Option<NodeId>>,
}

impl Planner<'_> {
    fn alloc(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn visit(&mut self, m: &LevelMatch, inherited: &[Option<NodeId>]) -> Result<(), ApplyError> {
        let rule = self.rule;
        let g = self.g;
        let ctx = MatchCtx { g, m };
        let level = m.level;
        let here = |e: &&super::rule::PatternElement| e.level == level;

        for el in rule.elements.iter().filter(here).filter(|e| e.role == Role::Eraser) {
            match el.shape {
                Shape::Node => {
                    self.erase_nodes.insert(m.node(el.id).expect("eraser is matched"));
                }
                Shape::Edge { .. } => {
                    self.erase_edges.insert(m.edge(el.id).expect("eraser is matched"));
                }
            }
        }

        for a in rule.assignments.iter().filter(|a| a.level == level) {
            let target = rule.element(a.target);
            if !target.role.is_matched() {
                continue;
            }
            let node = m.node(a.target).expect("assignment target is bound");
            let host_ty = &g.node(node).expect("bound node exists").ty;
            let sort = g.type_graph().node_type(host_ty).and_then(|t| t.attr_sort(&a.attr)).expect("validated");
            let value = coerce(eval(&a.expr, &ctx)?, sort, &target.name, &a.attr)?;
            match self.writes.get(&(node, a.attr.clone())) {
                Some(prev) if *prev != value => {
                    return Err(ApplyError::ConflictingWrites {
                        node,
                        attr: a.attr.clone(),
                        first: prev.clone(),
                        second: value,
                    })
                }
                _ => {
                    self.writes.insert((node, a.attr.clone()), value);
                }
            }
        }

        let mut created: Vec<Option<NodeId>> = inherited.to_vec();
        for el in rule.elements.iter().filter(here).filter(|e| e.role.is_created() && e.is_node()) {
            if el.role == Role::CreatorIfAbsent && self.has_counterpart(m, el.id) {
                continue;
            }
            let nt = g.type_graph().node_type(&el.ty).expect("validated");
            let mut attrs = BTreeMap::new();
            for a in rule.assignments.iter().filter(|a| a.level == level && a.target == el.id) {
                let sort = nt.attr_sort(&a.attr).expect("validated");
                attrs.insert(a.attr.clone(), coerce(eval(&a.expr, &ctx)?, sort, &el.name, &a.attr)?);
            }
            let id = NodeId(self.alloc());
            self.created_nodes.push((id, Node { ty: el.ty.clone(), attrs }));
            created[el.id.0] = Some(id);
        }
        for el in rule.elements.iter().filter(here).filter(|e| e.role.is_created() && !e.is_node()) {
            let Shape::Edge { src, tgt } = el.shape else { unreachable!() };
            let resolve = |e: ElementId| -> Option<NodeId> {
                if rule.element(e).role.is_created() {
                    created[e.0]
                } else {
                    m.node(e)
                }
            };
            // endpoints of a skipped conditional creator are absent
            let (Some(s), Some(t)) = (resolve(src), resolve(tgt)) else { continue };
            let id = EdgeId(self.alloc());
            self.created_edges.push((id, Edge { ty: el.ty.clone(), src: s, tgt: t }));
        }

        if level == LevelId::ROOT {
            self.root_created = created.clone();
        }
        for sub in &m.children {
            for child in &sub.matches {
                self.visit(child, &created)?;
            }
        }
        Ok(())
    }

    /// A pre-state node of the same type, joined by edges of the same types and
    /// directions to the same matched endpoints as the conditional creator.
    fn has_counterpart(&self, m: &LevelMatch, elem: ElementId) -> bool {
        let rule = self.rule;
        let g = self.g;
        let mut needs = Vec::new();
        for el in &rule.elements {
            let Shape::Edge { src, tgt } = el.shape else { continue };
            if src == elem && tgt != elem {
                if let Some(other) = m.node(tgt) {
                    needs.push((true, el.ty.as_str(), other));
                }
            } else if tgt == elem && src != elem {
                if let Some(other) = m.node(src) {
                    needs.push((false, el.ty.as_str(), other));
                }
            }
        }
        g.nodes_of_type(&rule.element(elem).ty).any(|cand| {
            needs.iter().all(|(outgoing, ty, other)| {
                if *outgoing {
                    g.out_edges(cand).any(|e| g.edge(e).is_some_and(|x| &x.ty == ty && x.tgt == *other))
                } else {
                    g.in_edges(cand).any(|e| g.edge(e).is_some_and(|x| &x.ty == ty && x.src == *other))
                }
            })
        })
    }
}

/// Computes the record of applying `forest` to `g` without modifying `g`.
pub fn plan(rule: &Rule, g: &HostGraph, forest: &MatchForest) -> Result<ApplicationRecord, ApplyError> {
    if forest.graph_version != g.version() || forest.rule != rule.name {
        return Err(ApplyError::StaleForest(rule.name.clone()));
    }
    let mut p = Planner {
        rule,
        g,
        next_id: g.next_id(),
        created_nodes: vec![],
        created_edges: vec![],
        erase_nodes: BTreeSet::new(),
        erase_edges: BTreeSet::new(),
        writes: BTreeMap::new(),
        root_created: vec![],
    };
    p.visit(&forest.root, &vec![None; rule.elements.len()])?;

    for (node, attr) in p.writes.keys() {
        if p.erase_nodes.contains(node) {
            return Err(ApplyError::WriteToDeleted { node: *node, attr: attr.clone() });
        }
    }
    for (_, e) in &p.created_edges {
        for end in [e.src, e.tgt] {
            if p.erase_nodes.contains(&end) {
                return Err(ApplyError::AttachToDeleted(end));
            }
        }
    }

    let mut dangling: BTreeSet<EdgeId> = p.erase_edges.clone();
    for n in &p.erase_nodes {
        dangling.extend(g.out_edges(*n));
        dangling.extend(g.in_edges(*n));
    }
    let deleted_edges = dangling.into_iter().map(|e| (e, g.edge(e).expect("matched edge").clone())).collect();
    let deleted_nodes = p.erase_nodes.iter().map(|n| (*n, g.node(*n).expect("matched node").clone())).collect();

    let writes = p
        .writes
        .into_iter()
        .map(|((node, attr), new)| {
            let old = g.attr(node, &attr).cloned().expect("validated attribute");
            AttrWrite { node, attr, old, new }
        })
        .collect();

    let mut out_bindings = BTreeMap::new();
    for param in rule.params.iter().filter(|p| p.dir == ParamDir::Out) {
        let el = rule.element(param.element);
        let node = if el.role.is_created() { p.root_created[el.id.0] } else { forest.root.node(el.id) };
        out_bindings.insert(param.name.clone(), node.ok_or_else(|| ApplyError::UnboundOut(param.name.clone()))?);
    }

    Ok(ApplicationRecord {
        rule: rule.name.clone(),
        created_nodes: p.created_nodes,
        created_edges: p.created_edges,
        deleted_nodes,
        deleted_edges,
        writes,
        out_bindings,
        next_id_before: g.next_id(),
        next_id_after: p.next_id,
    })
}

/// Applies one forest atomically: every value is computed from the pre-state,
/// then deletions, creations and writes are committed together.
pub fn apply(rule: &Rule, g: &mut HostGraph, forest: &MatchForest) -> Result<ApplicationRecord, ApplyError> {
    let record = plan(rule, g, forest)?;
    let mut next = g.clone();
    record.replay(&mut next)?;
    *g = next;
    Ok(record)
}

/// Applies the first forest in match order, or returns `None` if the rule
/// has no match.
pub fn apply_once(
    rule: &Rule,
    g: &mut HostGraph,
    params: &ParamBindings,
) -> Result<Option<ApplicationRecord>, ApplyError> {
    let forests = find_match_forests(rule, g, params)?;
    match forests.first() {
        Some(f) => apply(rule, g, f).map(Some),
        None => Ok(None),
    }
}
