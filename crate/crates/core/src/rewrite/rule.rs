//! Rule representation: a tree of quantification levels, pattern elements
//! with roles, guards and attribute assignments.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{Cond, Expr};
use crate::graph::TypeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LevelId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub usize);

impl LevelId {
    pub const ROOT: LevelId = LevelId(0);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantifier {
    Root,
    /// All matches, possibly none.
    Universal,
    /// All matches; the parent match is invalid without at least one.
    UniversalNonEmpty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantLevel {
    pub id: LevelId,
    pub kind: Quantifier,
    pub parent: Option<LevelId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reader,
    Eraser,
    Creator,
    /// Negative condition: the match is invalid if these elements can be found.
    Embargo,
    /// Created only when no equivalent node is already connected to the same
    /// matched endpoints.
    CreatorIfAbsent,
}

impl Role {
    pub fn is_matched(self) -> bool {
        matches!(self, Role::Reader | Role::Eraser)
    }

    pub fn is_created(self) -> bool {
        matches!(self, Role::Creator | Role::CreatorIfAbsent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Node,
    Edge { src: ElementId, tgt: ElementId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternElement {
    pub id: ElementId,
    pub name: String,
    pub shape: Shape,
    pub ty: String,
    pub level: LevelId,
    pub role: Role,
}

impl PatternElement {
    pub fn is_node(&self) -> bool {
        self.shape == Shape::Node
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamDir {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub dir: ParamDir,
    pub node_type: String,
    pub element: ElementId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub level: LevelId,
    pub cond: Cond,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub level: LevelId,
    pub target: ElementId,
    pub attr: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub params: Vec<Param>,
    pub levels: Vec<QuantLevel>,
    pub elements: Vec<PatternElement>,
    pub guards: Vec<Guard>,
    pub assignments: Vec<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule `{rule}`: {reason}")]
pub struct RuleError {
    pub rule: String,
    pub reason: String,
}

impl Rule {
    pub fn element(&self, id: ElementId) -> &PatternElement {
        &self.elements[id.0]
    }

    pub fn level(&self, id: LevelId) -> &QuantLevel {
        &self.levels[id.0]
    }

    pub fn children(&self, level: LevelId) -> impl Iterator<Item = LevelId> + '_ {
        self.levels.iter().filter(move |l| l.parent == Some(level)).map(|l| l.id)
    }

    /// Whether `anc` is `level` or one of its ancestors.
    pub fn is_visible_from(&self, anc: LevelId, level: LevelId) -> bool {
        let mut cur = Some(level);
        while let Some(l) = cur {
            if l == anc {
                return true;
            }
            cur = self.levels.get(l.0).and_then(|q| q.parent);
        }
        false
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Checks structural well-formedness and agreement with the schema.
    pub fn validate(&self, tg: &TypeGraph) -> Result<(), RuleError> {
        let fail = |reason: String| Err(RuleError { rule: self.name.clone(), reason });

        // levels: index 0 is the only root, parents precede children
        for (i, l) in self.levels.iter().enumerate() {
            if l.id.0 != i {
                return fail(format!("level {i} has id {:?}", l.id));
            }
            match (i, l.kind, l.parent) {
                (0, Quantifier::Root, None) => {}
                (0, _, _) => return fail("level 0 must be the root".into()),
                (_, Quantifier::Root, _) | (_, _, None) => return fail(format!("level {i} is a second root")),
                (_, _, Some(p)) if p.0 >= i => return fail(format!("level {i} has a later parent")),
                _ => {}
            }
        }
        if self.levels.is_empty() {
            return fail("no root level".into());
        }

        for (i, el) in self.elements.iter().enumerate() {
            if el.id.0 != i {
                return fail(format!("element {i} has id {:?}", el.id));
            }
            if el.level.0 >= self.levels.len() {
                return fail(format!("element `{}` at unknown level", el.name));
            }
            match el.shape {
                Shape::Node => {
                    if tg.node_type(&el.ty).is_none() {
                        return fail(format!("element `{}` has unknown node type `{}`", el.name, el.ty));
                    }
                }
                Shape::Edge { src, tgt } => self.validate_edge(tg, el, src, tgt).or_else(fail)?,
            }
        }

        // edges incident to a conditional creator belong to its group
        for el in &self.elements {
            if let Shape::Edge { src, tgt } = el.shape {
                for end in [src, tgt] {
                    let n = self.element(end);
                    if n.role == Role::CreatorIfAbsent && (!el.role.is_created() || el.level != n.level) {
                        return fail(format!(
                            "edge `{}` attached to `{}` must be created at its level",
                            el.name, n.name
                        ));
                    }
                }
            }
        }

        let mut names = BTreeSet::new();
        for p in &self.params {
            if !names.insert(p.name.as_str()) {
                return fail(format!("duplicate parameter `{}`", p.name));
            }
            let Some(el) = self.elements.get(p.element.0) else {
                return fail(format!("parameter `{}` names no element", p.name));
            };
            if el.level != LevelId::ROOT || !el.is_node() || el.ty != p.node_type {
                return fail(format!("parameter `{}` must be a root node of type `{}`", p.name, p.node_type));
            }
            match p.dir {
                ParamDir::In if !el.role.is_matched() => {
                    return fail(format!("`in` parameter `{}` must be a matched node", p.name))
                }
                ParamDir::Out if el.role == Role::Embargo => {
                    return fail(format!("`out` parameter `{}` cannot be an embargo", p.name))
                }
                _ => {}
            }
        }

        for g in &self.guards {
            if g.level.0 >= self.levels.len() {
                return fail("guard at unknown level".into());
            }
            if let Cond::Cmp { lhs, rhs, .. } = &g.cond {
                if lhs.has_aggregate() || rhs.has_aggregate() {
                    return fail("guards must not aggregate".into());
                }
            }
            for e in g.cond.elements() {
                let Some(el) = self.elements.get(e.0) else {
                    return fail(format!("guard names unknown element {e:?}"));
                };
                if el.role.is_created() || !self.is_visible_from(el.level, g.level) {
                    return fail(format!("guard cannot see `{}`", el.name));
                }
                if el.role == Role::Embargo && el.level != g.level {
                    return fail(format!("embargo `{}` used outside its level", el.name));
                }
            }
            if let Cond::NodeNeq(a, b) = g.cond {
                if !self.element(a).is_node() || !self.element(b).is_node() {
                    return fail("node inequality over edges".into());
                }
            }
        }

        let mut assigned = BTreeSet::new();
        for a in &self.assignments {
            if a.level.0 >= self.levels.len() {
                return fail("assignment at unknown level".into());
            }
            let Some(target) = self.elements.get(a.target.0) else {
                return fail("assignment to unknown element".into());
            };
            if !target.is_node() || target.role == Role::Embargo || !self.is_visible_from(target.level, a.level) {
                return fail(format!("cannot assign to `{}` at level {:?}", target.name, a.level));
            }
            if target.role.is_created() && target.level != a.level {
                return fail(format!("created `{}` must be initialised at its own level", target.name));
            }
            let nt = tg.node_type(&target.ty).expect("checked above");
            if nt.attr_sort(&a.attr).is_none() {
                return fail(format!("`{}` has no attribute `{}`", target.ty, a.attr));
            }
            if !assigned.insert((a.level, a.target, a.attr.as_str())) {
                return fail(format!("`{}.{}` assigned twice", target.name, a.attr));
            }
            self.validate_expr(&a.expr, a.level).or_else(fail)?;
        }
        for el in self.elements.iter().filter(|e| e.role.is_created() && e.is_node()) {
            let nt = tg.node_type(&el.ty).expect("checked above");
            for decl in &nt.attrs {
                if !assigned.contains(&(el.level, el.id, decl.name.as_str())) {
                    return fail(format!("created `{}` lacks a value for `{}`", el.name, decl.name));
                }
            }
        }
        Ok(())
    }

    fn validate_edge(&self, tg: &TypeGraph, el: &PatternElement, src: ElementId, tgt: ElementId) -> Result<(), String> {
        let et = tg.edge_type(&el.ty).ok_or_else(|| format!("edge `{}` has unknown type `{}`", el.name, el.ty))?;
        for (end, expected) in [(src, &et.source), (tgt, &et.target)] {
            let n = self.elements.get(end.0).ok_or_else(|| format!("edge `{}` endpoint missing", el.name))?;
            if !n.is_node() {
                return Err(format!("edge `{}` endpoint `{}` is not a node", el.name, n.name));
            }
            if &n.ty != expected {
                return Err(format!("edge `{}` needs a `{expected}` endpoint, `{}` is `{}`", el.name, n.name, n.ty));
            }
            if !self.is_visible_from(n.level, el.level) {
                return Err(format!("edge `{}` cannot see `{}`", el.name, n.name));
            }
            let ok = match el.role {
                Role::Reader | Role::Eraser => n.role.is_matched(),
                Role::Embargo => n.role.is_matched() || (n.role == Role::Embargo && n.level == el.level),
                Role::Creator | Role::CreatorIfAbsent => n.role != Role::Embargo,
            };
            if !ok {
                return Err(format!("edge `{}` ({:?}) cannot attach to `{}` ({:?})", el.name, el.role, n.name, n.role));
            }
        }
        Ok(())
    }

    fn validate_expr(&self, expr: &Expr, level: LevelId) -> Result<(), String> {
        match expr {
            Expr::Lit(_) => Ok(()),
            Expr::Attr { elem, .. } => {
                let el = self.elements.get(elem.0).ok_or("reference to unknown element")?;
                if !el.is_node() || !el.role.is_matched() || !self.is_visible_from(el.level, level) {
                    return Err(format!("`{}` is not readable at level {level:?}", el.name));
                }
                Ok(())
            }
            Expr::Neg(e) | Expr::Abs(e) => self.validate_expr(e, level),
            Expr::Bin { lhs, rhs, .. } => {
                self.validate_expr(lhs, level)?;
                self.validate_expr(rhs, level)
            }
            Expr::Count { level: child } => self.check_child(*child, level),
            Expr::Sum { level: child, body } => {
                self.check_child(*child, level)?;
                self.validate_expr(body, *child)
            }
        }
    }

    fn check_child(&self, child: LevelId, level: LevelId) -> Result<(), String> {
        match self.levels.get(child.0) {
            Some(l) if l.parent == Some(level) => Ok(()),
            _ => Err(format!("aggregate over {child:?} is not a child of {level:?}")),
        }
    }
}

/// Incremental construction of a [`Rule`].
#[derive(Debug, Clone)]
pub struct RuleBuilder {
    rule: Rule,
}

impl RuleBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        RuleBuilder {
            rule: Rule {
                name: name.into(),
                params: vec![],
                levels: vec![QuantLevel { id: LevelId::ROOT, kind: Quantifier::Root, parent: None }],
                elements: vec![],
                guards: vec![],
                assignments: vec![],
            },
        }
    }

    pub fn root(&self) -> LevelId {
        LevelId::ROOT
    }

    pub fn level(&mut self, parent: LevelId, kind: Quantifier) -> LevelId {
        let id = LevelId(self.rule.levels.len());
        self.rule.levels.push(QuantLevel { id, kind, parent: Some(parent) });
        id
    }

    pub fn node(&mut self, level: LevelId, role: Role, ty: &str, name: &str) -> ElementId {
        self.push(level, role, ty, name, Shape::Node)
    }

    pub fn edge(&mut self, level: LevelId, role: Role, ty: &str, src: ElementId, tgt: ElementId) -> ElementId {
        let name = format!("{}:{}->{}", ty, self.rule.elements[src.0].name, self.rule.elements[tgt.0].name);
        self.push(level, role, ty, &name, Shape::Edge { src, tgt })
    }

    fn push(&mut self, level: LevelId, role: Role, ty: &str, name: &str, shape: Shape) -> ElementId {
        let id = ElementId(self.rule.elements.len());
        self.rule.elements.push(PatternElement { id, name: name.to_owned(), shape, ty: ty.to_owned(), level, role });
        id
    }

    pub fn guard(&mut self, level: LevelId, cond: Cond) -> &mut Self {
        self.rule.guards.push(Guard { level, cond });
        self
    }

    pub fn assign(&mut self, level: LevelId, target: ElementId, attr: &str, expr: Expr) -> &mut Self {
        self.rule.assignments.push(Assignment { level, target, attr: attr.to_owned(), expr });
        self
    }

    pub fn param(&mut self, name: &str, dir: ParamDir, element: ElementId) -> &mut Self {
        let node_type = self.rule.elements[element.0].ty.clone();
        self.rule.params.push(Param { name: name.to_owned(), dir, node_type, element });
        self
    }

    pub fn build(self, tg: &TypeGraph) -> Result<Rule, RuleError> {
        self.rule.validate(tg)?;
        Ok(self.rule)
    }
}

/// A named collection of rules validated against one schema.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    rules: BTreeMap<String, Rule>,
}

impl RuleSet {
    pub fn new(tg: &TypeGraph, rules: impl IntoIterator<Item = Rule>) -> Result<Self, RuleError> {
        let mut map = BTreeMap::new();
        for r in rules {
            r.validate(tg)?;
            let name = r.name.clone();
            if map.insert(name.clone(), r).is_some() {
                return Err(RuleError { rule: name, reason: "defined twice".into() });
            }
        }
        Ok(RuleSet { rules: map })
    }

    pub fn get(&self, name: &str) -> Option<&Rule> {
        self.rules.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rules.keys().map(String::as_str)
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.values()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}
