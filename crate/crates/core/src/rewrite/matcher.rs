//! Match-forest enumeration.
//!
//! Each quantification level is matched by a backtracking search over its
//! own elements, given the binding of its parent match. Edges leaving an
//! already-bound node are expanded before unconstrained nodes are scanned, and
//! guards are checked as soon as every element they mention is bound.
//!
//! Injectivity holds among the nodes (and edges) a level introduces; a level
//! may map an element to the same host node as an ancestor-level element.
//! Embargo elements must also be injective with respect to the nodes of the
//! level they belong to.

use std::collections::BTreeMap;

use thiserror::Error;

use super::expr::{compare, eval, Cond, EvalContext, EvalError};
use super::rule::{ElementId, LevelId, Quantifier, Role, Rule, RuleError, Shape};
use crate::graph::{EdgeId, HostGraph, NodeId, Value};

/// Host element an element is mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HostRef {
    Node(NodeId),
    Edge(EdgeId),
}

pub type Binding = Vec<Option<HostRef>>;

/// Host ids bound to rule parameters, by parameter name.
pub type ParamBindings = BTreeMap<String, NodeId>;

/// A match of one level together with the complete sub-match sets of each of
/// its child levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMatch {
    pub level: LevelId,
    binding: Binding,
    pub children: Vec<SubMatches>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubMatches {
    pub level: LevelId,
    pub matches: Vec<LevelMatch>,
}

impl LevelMatch {
    /// Host node of a node element visible at this level.
    pub fn node(&self, elem: ElementId) -> Option<NodeId> {
        match self.binding.get(elem.0).copied().flatten() {
            Some(HostRef::Node(n)) => Some(n),
            _ => None,
        }
    }

    pub fn edge(&self, elem: ElementId) -> Option<EdgeId> {
        match self.binding.get(elem.0).copied().flatten() {
            Some(HostRef::Edge(e)) => Some(e),
            _ => None,
        }
    }

    pub fn binding(&self) -> &[Option<HostRef>] {
        &self.binding
    }

    pub fn sub_matches(&self, level: LevelId) -> Option<&[LevelMatch]> {
        self.children.iter().find(|c| c.level == level).map(|c| c.matches.as_slice())
    }

    /// Every level match in this subtree, pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a LevelMatch)) {
        f(self);
        for c in &self.children {
            for m in &c.matches {
                m.walk(f);
            }
        }
    }
}

/// One root match plus its universal extensions: the unit of application.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchForest {
    pub rule: String,
    pub root: LevelMatch,
    pub(crate) graph_version: u64,
}

impl MatchForest {
    /// Graph version the forest was computed on.
    pub fn graph_version(&self) -> u64 {
        self.graph_version
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error(transparent)]
    InvalidRule(#[from] RuleError),
    #[error("rule `{rule}`: `in` parameter `{param}` is not bound")]
    UnboundParam { rule: String, param: String },
    #[error("rule `{rule}` has no parameter `{param}` to bind")]
    UnknownParam { rule: String, param: String },
    #[error("rule `{rule}`: parameter `{param}` expects a `{expected}` node, {node} is {found}")]
    ParamType { rule: String, param: String, expected: String, node: NodeId, found: String },
    #[error("guard evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

/// Attribute lookup against a binding only; no aggregates.
pub(crate) struct BindingCtx<'a> {
    pub g: &'a HostGraph,
    pub binding: &'a [Option<HostRef>],
}

impl EvalContext for BindingCtx<'_> {
    fn attr(&self, elem: ElementId, attr: &str) -> Result<Value, EvalError> {
        read_attr(self.g, self.binding, elem, attr)
    }

    fn for_each_sub(
        &self,
        level: LevelId,
        _f: &mut dyn FnMut(&dyn EvalContext) -> Result<(), EvalError>,
    ) -> Result<usize, EvalError> {
        Err(EvalError::NoSuchLevel(level))
    }
}

pub(crate) fn read_attr(
    g: &HostGraph,
    binding: &[Option<HostRef>],
    elem: ElementId,
    attr: &str,
) -> Result<Value, EvalError> {
    let Some(Some(HostRef::Node(n))) = binding.get(elem.0) else {
        return Err(EvalError::Unbound(elem));
    };
    g.attr(*n, attr).cloned().ok_or_else(|| EvalError::UnknownAttr { node: *n, attr: attr.to_owned() })
}

fn holds(cond: &Cond, g: &HostGraph, binding: &[Option<HostRef>]) -> Result<bool, EvalError> {
    match cond {
        Cond::NodeNeq(a, b) => {
            let x = binding.get(a.0).copied().flatten().ok_or(EvalError::Unbound(*a))?;
            let y = binding.get(b.0).copied().flatten().ok_or(EvalError::Unbound(*b))?;
            Ok(x != y)
        }
        Cond::Cmp { op, lhs, rhs } => {
            let ctx = BindingCtx { g, binding };
            compare(*op, &eval(lhs, &ctx)?, &eval(rhs, &ctx)?)
        }
    }
}
/// Edge taken and node bound by one search step.
type Candidate = (Option<EdgeId>, Option<(ElementId, NodeId)>);

#[derive(Debug, Clone, Copy)]
enum Step {
    Scan(ElementId),
    /// Edge whose source is bound; binds the edge and possibly its target.
    FromSrc(ElementId),
    /// Edge whose target is bound; binds the edge and its source.
    FromTgt(ElementId),
}

/// Backtracking search for one set of pattern elements.
struct Search<'a> {
    g: &'a HostGraph,
    rule: &'a Rule,
    steps: Vec<Step>,
    /// Guards to check after each step (index 0: before any step).
    checks: Vec<Vec<&'a Cond>>,
    /// Host nodes the new nodes must avoid.
    avoid_nodes: Vec<NodeId>,
    avoid_edges: Vec<EdgeId>,
}

impl<'a> Search<'a> {
    fn plan(
        g: &'a HostGraph,
        rule: &'a Rule,
        binding: &Binding,
        nodes: &[ElementId],
        edges: &[ElementId],
        guards: Vec<&'a Cond>,
    ) -> Self {
        let mut bound: Vec<bool> = binding.iter().map(Option::is_some).collect();
        let mut todo_nodes: Vec<ElementId> = nodes.iter().copied().filter(|n| !bound[n.0]).collect();
        let mut todo_edges: Vec<ElementId> = edges.to_vec();
        let mut steps = Vec::new();
        while !todo_nodes.is_empty() || !todo_edges.is_empty() {
            let ends = |e: ElementId| match rule.element(e).shape {
                Shape::Edge { src, tgt } => (src, tgt),
                Shape::Node => unreachable!("edge list holds edges only"),
            };
            // edges anchored at a bound node first, both-bound ones before one-bound
            let pick = todo_edges
                .iter()
                .position(|e| {
                    let (s, t) = ends(*e);
                    bound[s.0] && bound[t.0]
                })
                .or_else(|| {
                    todo_edges.iter().position(|e| {
                        let (s, t) = ends(*e);
                        bound[s.0] || bound[t.0]
                    })
                });
            if let Some(i) = pick {
                let e = todo_edges.remove(i);
                let (s, t) = ends(e);
                if bound[s.0] {
                    steps.push(Step::FromSrc(e));
                } else {
                    steps.push(Step::FromTgt(e));
                }
                bound[s.0] = true;
                bound[t.0] = true;
                bound[e.0] = true;
                todo_nodes.retain(|n| !bound[n.0]);
                continue;
            }
            // otherwise scan the unbound node type with the fewest candidates
            let (i, _) = todo_nodes
                .iter()
                .enumerate()
                .min_by_key(|(_, n)| (g.count_of_type(&rule.element(**n).ty), n.0))
                .expect("unbound edges always have an unbound endpoint node");
            let n = todo_nodes.remove(i);
            bound[n.0] = true;
            steps.push(Step::Scan(n));
        }

        // schedule each guard right after the step that completes its elements
        let mut checks: Vec<Vec<&Cond>> = vec![Vec::new(); steps.len() + 1];
        let mut bound_at: Vec<Option<usize>> = binding.iter().map(|b| b.map(|_| 0)).collect();
        for (k, s) in steps.iter().enumerate() {
            let newly: Vec<ElementId> = match *s {
                Step::Scan(n) => vec![n],
                Step::FromSrc(e) | Step::FromTgt(e) => {
                    let Shape::Edge { src, tgt } = rule.element(e).shape else { unreachable!() };
                    vec![e, src, tgt]
                }
            };
            for x in newly {
                bound_at[x.0].get_or_insert(k + 1);
            }
        }
        for c in guards {
            let at = c.elements().iter().map(|e| bound_at[e.0].unwrap_or(0)).max().unwrap_or(0);
            checks[at].push(c);
        }
        Search { g, rule, steps, checks, avoid_nodes: Vec::new(), avoid_edges: Vec::new() }
    }

    fn run(&self, binding: &mut Binding, first_only: bool, out: &mut Vec<Binding>) -> Result<(), EvalError> {
        for c in &self.checks[0] {
            if !holds(c, self.g, binding)? {
                return Ok(());
            }
        }
        let mut used_nodes = self.avoid_nodes.clone();
        let mut used_edges = self.avoid_edges.clone();
        self.dfs(0, binding, &mut used_nodes, &mut used_edges, first_only, out)
    }

    fn dfs(
        &self,
        k: usize,
        binding: &mut Binding,
        used_nodes: &mut Vec<NodeId>,
        used_edges: &mut Vec<EdgeId>,
        first_only: bool,
        out: &mut Vec<Binding>,
    ) -> Result<(), EvalError> {
        if first_only && !out.is_empty() {
            return Ok(());
        }
        if k == self.steps.len() {
            out.push(binding.clone());
            return Ok(());
        }
        let g = self.g;
        let mut candidates: Vec<Candidate> = Vec::new();
        match self.steps[k] {
            Step::Scan(n) => {
                let ty = &self.rule.element(n).ty;
                for host in g.nodes_of_type(ty) {
                    candidates.push((None, Some((n, host))));
                }
            }
            Step::FromSrc(e) | Step::FromTgt(e) => {
                let el = self.rule.element(e);
                let Shape::Edge { src, tgt } = el.shape else { unreachable!() };
                let from_src = matches!(self.steps[k], Step::FromSrc(_));
                let (anchor, other) = if from_src { (src, tgt) } else { (tgt, src) };
                let Some(HostRef::Node(anchor_host)) = binding[anchor.0] else { unreachable!() };
                let incident: Vec<EdgeId> =
                    if from_src { g.out_edges(anchor_host).collect() } else { g.in_edges(anchor_host).collect() };
                for he in incident {
                    let edge = g.edge(he).expect("adjacency is consistent");
                    if edge.ty != el.ty || used_edges.contains(&he) {
                        continue;
                    }
                    let far = if from_src { edge.tgt } else { edge.src };
                    match binding[other.0] {
                        Some(HostRef::Node(b)) => {
                            if b == far {
                                candidates.push((Some(he), None));
                            }
                        }
                        Some(HostRef::Edge(_)) => unreachable!("node element bound to an edge"),
                        None => {
                            let ok = g.node(far).is_some_and(|n| n.ty == self.rule.element(other).ty);
                            if ok {
                                candidates.push((Some(he), Some((other, far))));
                            }
                        }
                    }
                }
            }
        }

        let edge_elem = match self.steps[k] {
            Step::FromSrc(e) | Step::FromTgt(e) => Some(e),
            Step::Scan(_) => None,
        };
        'cand: for (he, node) in candidates {
            if let Some((_, host)) = node {
                if used_nodes.contains(&host) {
                    continue;
                }
            }
            if let (Some(e), Some(he)) = (edge_elem, he) {
                binding[e.0] = Some(HostRef::Edge(he));
                used_edges.push(he);
            }
            if let Some((n, host)) = node {
                binding[n.0] = Some(HostRef::Node(host));
                used_nodes.push(host);
            }
            let mut ok = true;
            for c in &self.checks[k + 1] {
                if !holds(c, g, binding)? {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.dfs(k + 1, binding, used_nodes, used_edges, first_only, out)?;
            }
            if let Some((n, _)) = node {
                binding[n.0] = None;
                used_nodes.pop();
            }
            if let (Some(e), Some(_)) = (edge_elem, he) {
                binding[e.0] = None;
                used_edges.pop();
            }
            if first_only && !out.is_empty() {
                break 'cand;
            }
        }
        Ok(())
    }
}

struct LevelParts<'a> {
    nodes: Vec<ElementId>,
    edges: Vec<ElementId>,
    guards: Vec<&'a Cond>,
    nac_nodes: Vec<ElementId>,
    nac_edges: Vec<ElementId>,
    nac_guards: Vec<&'a Cond>,
}

fn parts(rule: &Rule, level: LevelId) -> LevelParts<'_> {
    let mut p = LevelParts {
        nodes: vec![],
        edges: vec![],
        guards: vec![],
        nac_nodes: vec![],
        nac_edges: vec![],
        nac_guards: vec![],
    };
    for el in rule.elements.iter().filter(|e| e.level == level) {
        match (el.role, el.is_node()) {
            (r, true) if r.is_matched() => p.nodes.push(el.id),
            (r, false) if r.is_matched() => p.edges.push(el.id),
            (Role::Embargo, true) => p.nac_nodes.push(el.id),
            (Role::Embargo, false) => p.nac_edges.push(el.id),
            _ => {}
        }
    }
    for g in rule.guards.iter().filter(|g| g.level == level) {
        if g.cond.elements().iter().any(|e| rule.element(*e).role == Role::Embargo) {
            p.nac_guards.push(&g.cond);
        } else {
            p.guards.push(&g.cond);
        }
    }
    p
}

/// Sort key: own node images in element order, then own edge images.
fn match_key(parts: &LevelParts<'_>, binding: &Binding) -> Vec<u64> {
    let id = |e: &ElementId| match binding[e.0] {
        Some(HostRef::Node(n)) => n.0,
        Some(HostRef::Edge(x)) => x.0,
        None => u64::MAX,
    };
    parts.nodes.iter().map(id).chain(parts.edges.iter().map(id)).collect()
}

fn match_level(
    rule: &Rule,
    g: &HostGraph,
    level: LevelId,
    parent: &Binding,
    avoid: &[NodeId],
) -> Result<Vec<LevelMatch>, EvalError> {
    let p = parts(rule, level);
    let mut search = Search::plan(g, rule, parent, &p.nodes, &p.edges, p.guards.clone());
    search.avoid_nodes = avoid.to_vec();
    let mut found = Vec::new();
    search.run(&mut parent.clone(), false, &mut found)?;
    found.sort_by_cached_key(|b| match_key(&p, b));

    let children: Vec<LevelId> = rule.children(level).collect();
    let mut out = Vec::new();
    'matches: for b in found {
        if !p.nac_nodes.is_empty() || !p.nac_edges.is_empty() || !p.nac_guards.is_empty() {
            let mut nac = Search::plan(g, rule, &b, &p.nac_nodes, &p.nac_edges, p.nac_guards.clone());
            nac.avoid_nodes = p.nodes.iter().filter_map(|n| as_node(b[n.0])).chain(avoid.iter().copied()).collect();
            nac.avoid_edges = p.edges.iter().filter_map(|e| as_edge(b[e.0])).collect();
            let mut witness = Vec::new();
            nac.run(&mut b.clone(), true, &mut witness)?;
            if !witness.is_empty() {
                continue;
            }
        }
        let mut subs = Vec::with_capacity(children.len());
        for c in &children {
            let matches = match_level(rule, g, *c, &b, &[])?;
            if rule.level(*c).kind == Quantifier::UniversalNonEmpty && matches.is_empty() {
                continue 'matches;
            }
            subs.push(SubMatches { level: *c, matches });
        }
        out.push(LevelMatch { level, binding: b, children: subs });
    }
    Ok(out)
}

fn as_node(r: Option<HostRef>) -> Option<NodeId> {
    match r {
        Some(HostRef::Node(n)) => Some(n),
        _ => None,
    }
}

fn as_edge(r: Option<HostRef>) -> Option<EdgeId> {
    match r {
        Some(HostRef::Edge(e)) => Some(e),
        _ => None,
    }
}

/// Every valid root match of `rule` in `g` with complete universal
/// extensions, in ascending order of mapped host ids.
pub fn find_match_forests(rule: &Rule, g: &HostGraph, params: &ParamBindings) -> Result<Vec<MatchForest>, MatchError> {
    rule.validate(g.type_graph())?;
    for name in params.keys() {
        if rule.param(name).is_none() {
            return Err(MatchError::UnknownParam { rule: rule.name.clone(), param: name.clone() });
        }
    }
    let mut binding: Binding = vec![None; rule.elements.len()];
    let mut pinned = Vec::new();
    for p in rule.params.iter().filter(|p| p.dir == super::rule::ParamDir::In) {
        let host = *params
            .get(&p.name)
            .ok_or_else(|| MatchError::UnboundParam { rule: rule.name.clone(), param: p.name.clone() })?;
        let found = g.node(host).map_or_else(|| "missing".to_owned(), |n| format!("a `{}`", n.ty));
        if g.node(host).is_none_or(|n| n.ty != p.node_type) {
            return Err(MatchError::ParamType {
                rule: rule.name.clone(),
                param: p.name.clone(),
                expected: p.node_type.clone(),
                node: host,
                found,
            });
        }
        if pinned.contains(&host) {
            // injectivity: two parameters cannot share a node
            return Ok(vec![]);
        }
        pinned.push(host);
        binding[p.element.0] = Some(HostRef::Node(host));
    }
    let roots = match_level(rule, g, LevelId::ROOT, &binding, &pinned)?;
    Ok(roots
        .into_iter()
        .map(|root| MatchForest { rule: rule.name.clone(), root, graph_version: g.version() })
        .collect())
}
