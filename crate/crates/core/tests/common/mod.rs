#![allow(dead_code)]

use std::collections::BTreeSet;

use grenn::control::{Arg, ControlProgram, Function, Statement};
use grenn::graph::{HostGraph, NodeId, Value};
use grenn::model::GraphBuilder;
use grenn::rewrite::{
    find_match_forests, BinOp, CmpOp, Cond, ElementId, Expr, HostRef, LevelId, LevelMatch, ParamBindings, ParamDir,
    Quantifier, Role, Rule, Shape,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const STRENGTHS: [f64; 3] = [0.2, 0.4, 0.8];

pub struct Bounds {
    pub users: usize,
    pub posts: usize,
    pub observed: usize,
    pub inferred: usize,
}

pub const CORPUS_BOUNDS: Bounds = Bounds { users: 10, posts: 20, observed: 60, inferred: 5 };
pub const SMALL_BOUNDS: Bounds = Bounds { users: 4, posts: 5, observed: 8, inferred: 2 };

/// A random conformant model graph with one Error node and no duplicate
/// (user, post) engagements.
pub fn random_model_graph(rng: &mut impl Rng, b: &Bounds) -> HostGraph {
    let mut gb = GraphBuilder::new();
    let n_users = rng.gen_range(1..=b.users);
    let n_posts = rng.gen_range(1..=b.posts);
    let users: Vec<NodeId> = (0..n_users).map(|_| gb.user(rng.gen_bool(0.6))).collect();
    let posts: Vec<NodeId> = (0..n_posts).map(|_| gb.post(rng.gen_range(0.1..2.0))).collect();
    let mut pairs: Vec<(usize, usize)> = (0..n_users).flat_map(|u| (0..n_posts).map(move |p| (u, p))).collect();
    pairs.shuffle(rng);
    let n_obs = rng.gen_range(0..=b.observed.min(pairs.len()));
    let n_inf = rng.gen_range(0..=b.inferred.min(pairs.len() - n_obs));
    let mut links = Vec::new();
    for (k, &(u, p)) in pairs.iter().take(n_obs + n_inf).enumerate() {
        let obs = k < n_obs;
        let s = if obs { *STRENGTHS.choose(rng).unwrap() } else { rng.gen_range(0.0..1.0) };
        links.push((gb.engagement(s, obs), users[u], posts[p]));
    }
    gb.error_node();
    for &p in &posts {
        gb.author(p, *users.choose(rng).unwrap());
    }
    for (e, u, p) in links {
        gb.link(e, u, p);
    }
    gb.graph
}

// ---------------------------------------------------------------------------
// Exhaustive matcher used as a reference for the engine's match forests.

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Canon {
    pub own: Vec<(usize, HostRef)>,
    pub children: Vec<(usize, Vec<Canon>)>,
}

fn own_matched(rule: &Rule, level: LevelId) -> (Vec<ElementId>, Vec<ElementId>) {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for el in &rule.elements {
        if el.level == level && el.role.is_matched() {
            match el.shape {
                Shape::Node => nodes.push(el.id),
                Shape::Edge { .. } => edges.push(el.id),
            }
        }
    }
    (nodes, edges)
}

fn embargo_elements(rule: &Rule, level: LevelId) -> (Vec<ElementId>, Vec<ElementId>) {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for el in &rule.elements {
        if el.level == level && el.role == Role::Embargo {
            match el.shape {
                Shape::Node => nodes.push(el.id),
                Shape::Edge { .. } => edges.push(el.id),
            }
        }
    }
    (nodes, edges)
}

fn num(v: &Value) -> Option<f64> {
    v.as_real()
}

fn eval(expr: &Expr, g: &HostGraph, b: &[Option<HostRef>]) -> Option<Value> {
    Some(match expr {
        Expr::Lit(v) => v.clone(),
        Expr::Attr { elem, attr } => match b[elem.0]? {
            HostRef::Node(n) => g.attr(n, attr)?.clone(),
            HostRef::Edge(_) => return None,
        },
        Expr::Neg(x) => Value::Real(-num(&eval(x, g, b)?)?),
        Expr::Abs(x) => Value::Real(num(&eval(x, g, b)?)?.abs()),
        Expr::Bin { op, lhs, rhs } => {
            let (x, y) = (num(&eval(lhs, g, b)?)?, num(&eval(rhs, g, b)?)?);
            Value::Real(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div => x / y,
            })
        }
        Expr::Sum { .. } | Expr::Count { .. } => return None,
    })
}

fn cond_holds(c: &Cond, g: &HostGraph, b: &[Option<HostRef>]) -> bool {
    match c {
        Cond::NodeNeq(x, y) => b[x.0] != b[y.0],
        Cond::Cmp { op, lhs, rhs } => {
            let (Some(l), Some(r)) = (eval(lhs, g, b), eval(rhs, g, b)) else { return false };
            match (&l, &r) {
                (Value::Bool(x), Value::Bool(y)) => match op {
                    CmpOp::Eq => x == y,
                    CmpOp::Ne => x != y,
                    _ => false,
                },
                _ => {
                    let (Some(x), Some(y)) = (num(&l), num(&r)) else { return false };
                    match op {
                        CmpOp::Lt => x < y,
                        CmpOp::Le => x <= y,
                        CmpOp::Eq => x == y,
                        CmpOp::Ne => x != y,
                        CmpOp::Ge => x >= y,
                        CmpOp::Gt => x > y,
                    }
                }
            }
        }
    }
}

/// All ways to bind `nodes` (injectively, avoiding `avoid`) and then `edges`
/// (injectively) on top of `base`.
fn enumerate(
    rule: &Rule,
    g: &HostGraph,
    base: &[Option<HostRef>],
    nodes: &[ElementId],
    edges: &[ElementId],
    avoid: &[NodeId],
) -> Vec<Vec<Option<HostRef>>> {
    let mut partial = vec![base.to_vec()];
    for &n in nodes {
        if base[n.0].is_some() {
            continue;
        }
        let ty = &rule.element(n).ty;
        let mut next = Vec::new();
        for b in &partial {
            for h in g.nodes_of_type(ty) {
                let taken = nodes.iter().any(|m| b[m.0] == Some(HostRef::Node(h)));
                if !taken && !avoid.contains(&h) {
                    let mut nb = b.clone();
                    nb[n.0] = Some(HostRef::Node(h));
                    next.push(nb);
                }
            }
        }
        partial = next;
    }
    for &e in edges {
        let el = rule.element(e);
        let Shape::Edge { src, tgt } = el.shape else { unreachable!() };
        let mut next = Vec::new();
        for b in &partial {
            let (Some(HostRef::Node(s)), Some(HostRef::Node(t))) = (b[src.0], b[tgt.0]) else { continue };
            for (id, he) in g.edges() {
                let taken = edges.iter().any(|f| b[f.0] == Some(HostRef::Edge(id)));
                if he.ty == el.ty && he.src == s && he.tgt == t && !taken {
                    let mut nb = b.clone();
                    nb[e.0] = Some(HostRef::Edge(id));
                    next.push(nb);
                }
            }
        }
        partial = next;
    }
    partial
}

fn mentions_any(c: &Cond, elems: &[ElementId]) -> bool {
    c.elements().iter().any(|e| elems.contains(e))
}

/// Whether some extension of `b` by the level's embargo elements satisfies
/// the embargo guards.
pub fn embargo_hit(rule: &Rule, g: &HostGraph, level: LevelId, b: &[Option<HostRef>]) -> bool {
    let (en, ee) = embargo_elements(rule, level);
    if en.is_empty() && ee.is_empty() {
        return false;
    }
    let all: Vec<ElementId> = en.iter().chain(&ee).copied().collect();
    let (own, _) = own_matched(rule, level);
    let avoid: Vec<NodeId> = own
        .iter()
        .chain(rule.params.iter().map(|p| &p.element))
        .filter_map(|e| match b[e.0] {
            Some(HostRef::Node(n)) => Some(n),
            _ => None,
        })
        .collect();
    let guards: Vec<&Cond> =
        rule.guards.iter().filter(|gd| gd.level == level && mentions_any(&gd.cond, &all)).map(|gd| &gd.cond).collect();
    enumerate(rule, g, b, &en, &ee, &avoid).iter().any(|x| guards.iter().all(|c| cond_holds(c, g, x)))
}

fn brute_level(rule: &Rule, g: &HostGraph, level: LevelId, base: &[Option<HostRef>]) -> Vec<Canon> {
    let (nodes, edges) = own_matched(rule, level);
    let (en, ee) = embargo_elements(rule, level);
    let banned: Vec<ElementId> = en.iter().chain(&ee).copied().collect();
    let guards: Vec<&Cond> = rule
        .guards
        .iter()
        .filter(|gd| gd.level == level && !mentions_any(&gd.cond, &banned))
        .map(|gd| &gd.cond)
        .collect();
    let children: Vec<LevelId> = rule.levels.iter().filter(|l| l.parent == Some(level)).map(|l| l.id).collect();
    let mut out = Vec::new();
    for b in enumerate(rule, g, base, &nodes, &edges, &[]) {
        if !guards.iter().all(|c| cond_holds(c, g, &b)) || embargo_hit(rule, g, level, &b) {
            continue;
        }
        let mut kids = Vec::new();
        let mut ok = true;
        for &c in &children {
            let subs = brute_level(rule, g, c, &b);
            if subs.is_empty() && rule.level(c).kind == Quantifier::UniversalNonEmpty {
                ok = false;
                break;
            }
            kids.push((c.0, subs));
        }
        if ok {
            let own = nodes.iter().chain(&edges).map(|e| (e.0, b[e.0].unwrap())).collect();
            out.push(Canon { own, children: kids });
        }
    }
    out.sort();
    out
}

/// Reference forests: every root binding with its complete sub-match sets.
pub fn brute_forests(rule: &Rule, g: &HostGraph, params: &ParamBindings) -> Vec<Canon> {
    let mut base = vec![None; rule.elements.len()];
    for p in &rule.params {
        if p.dir == ParamDir::In {
            base[p.element.0] = Some(HostRef::Node(params[&p.name]));
        }
    }
    brute_level(rule, g, LevelId::ROOT, &base)
}

pub fn canon(rule: &Rule, m: &LevelMatch) -> Canon {
    let (nodes, edges) = own_matched(rule, m.level);
    let own = nodes.iter().chain(&edges).map(|e| (e.0, m.binding()[e.0].unwrap())).collect();
    let mut children: Vec<(usize, Vec<Canon>)> = m
        .children
        .iter()
        .map(|c| {
            let mut v: Vec<Canon> = c.matches.iter().map(|x| canon(rule, x)).collect();
            v.sort();
            (c.level.0, v)
        })
        .collect();
    children.sort();
    Canon { own, children }
}

pub fn engine_forests(rule: &Rule, g: &HostGraph, params: &ParamBindings) -> Vec<Canon> {
    let mut v: Vec<Canon> = find_match_forests(rule, g, params).unwrap().iter().map(|f| canon(rule, &f.root)).collect();
    v.sort();
    v
}

/// Every assignment of the rule's `in` parameters to nodes of their type.
pub fn param_choices(rule: &Rule, g: &HostGraph) -> Vec<ParamBindings> {
    let mut out = vec![ParamBindings::new()];
    for p in rule.params.iter().filter(|p| p.dir == ParamDir::In) {
        out = out
            .into_iter()
            .flat_map(|b| {
                g.nodes_of_type(&p.node_type)
                    .map(|n| {
                        let mut b = b.clone();
                        b.insert(p.name.clone(), n);
                        b
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    // distinct nodes for distinct parameters, as the matcher requires
    out.retain(|b| b.values().collect::<BTreeSet<_>>().len() == b.len());
    out
}

/// Whether any match in any forest of `rule` has an embargo extension.
pub fn embargo_violations(rule: &Rule, g: &HostGraph, params: &ParamBindings) -> usize {
    let mut bad = 0;
    for f in find_match_forests(rule, g, params).unwrap() {
        f.root.walk(&mut |m| {
            if embargo_hit(rule, g, m.level, m.binding()) {
                bad += 1;
            }
        });
    }
    bad
}

// ---------------------------------------------------------------------------
// Random control programs.

struct ProgGen<'a, R: Rng> {
    rng: &'a mut R,
    fresh: usize,
}

impl<R: Rng> ProgGen<'_, R> {
    fn name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn block(&mut self, depth: usize, funcs: &[String], vars: &mut Vec<String>, len: usize) -> Vec<Statement> {
        let rules = ["error", "delta", "infer", "r_a", "r_b", "newPost"];
        let mut out = Vec::new();
        for _ in 0..len {
            let pick = self.rng.gen_range(0..10);
            let s = match pick {
                0 | 1 if depth < 3 => {
                    let n = self.rng.gen_range(0..4);
                    Statement::Alap(self.block(depth + 1, funcs, vars, n))
                }
                2 if !funcs.is_empty() => Statement::FunctionCall(funcs.choose(self.rng).unwrap().clone()),
                3 => {
                    let v = self.name("v");
                    vars.push(v.clone());
                    Statement::NodeDecl(v)
                }
                _ => {
                    let name = rules.choose(self.rng).unwrap().to_string();
                    let n_args = if vars.is_empty() { 0 } else { self.rng.gen_range(0..3) };
                    let args = (0..n_args)
                        .map(|_| {
                            let v = vars.choose(self.rng).unwrap().clone();
                            if self.rng.gen_bool(0.5) {
                                Arg::Out(v)
                            } else {
                                Arg::Var(v)
                            }
                        })
                        .collect();
                    Statement::RuleCall { name, args }
                }
            };
            out.push(s);
        }
        out
    }
}

/// A random well-formed program: acyclic calls, variables declared before use.
pub fn random_program(rng: &mut impl Rng) -> ControlProgram {
    let mut gen = ProgGen { rng, fresh: 0 };
    let n_funcs = gen.rng.gen_range(0..4);
    let mut functions: Vec<Function> = Vec::new();
    for _ in 0..n_funcs {
        let callable: Vec<String> = functions.iter().map(|f| f.name.clone()).collect();
        let name = gen.name("f");
        let len = gen.rng.gen_range(0..5);
        let body = gen.block(0, &callable, &mut Vec::new(), len);
        functions.push(Function { name, body });
    }
    let callable: Vec<String> = functions.iter().map(|f| f.name.clone()).collect();
    let len = gen.rng.gen_range(0..6);
    let main = gen.block(0, &callable, &mut Vec::new(), len);
    ControlProgram { functions, main }
}
