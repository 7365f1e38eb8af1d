use crate::rewrite::{CmpOp, Cond, ElementId, Expr, LevelId, ParamDir, Quantifier, Role, Rule, RuleBuilder, RuleSet};

use super::{grenn_type_graph, GrennConfig};

/// `newEngagement` followed by the strength with the decimal point removed,
/// so 0.2 gives `newEngagement02`.
pub fn engagement_rule_name(strength: f64) -> String {
    let digits: String = format!("{strength}").chars().filter(|c| *c != '.').collect();
    format!("newEngagement{digits}")
}

fn engagement_attrs(b: &mut RuleBuilder, level: LevelId, e: ElementId, strength: Expr, obs: bool) {
    b.assign(level, e, "strength", strength);
    b.assign(level, e, "error", Expr::lit(0.0));
    b.assign(level, e, "obs", Expr::lit(obs));
    b.assign(level, e, "upd", Expr::lit(false));
    b.assign(level, e, "count", Expr::lit(1i64));
}

/// Adds the observed engagements of `u` on posts by `a` as a non-empty
/// universal level under `parent`; returns the level and `weight × strength`.
fn observed_level(b: &mut RuleBuilder, parent: LevelId, u: ElementId, a: ElementId) -> (LevelId, Expr) {
    let m = b.level(parent, Quantifier::UniversalNonEmpty);
    let e = b.node(m, Role::Reader, "Engagement", "e");
    let p = b.node(m, Role::Reader, "Post", "p");
    b.edge(m, Role::Reader, "by", e, u);
    b.edge(m, Role::Reader, "on", e, p);
    b.edge(m, Role::Reader, "author", p, a);
    b.guard(m, Cond::attr_eq(e, "obs", true));
    (m, Expr::attr(p, "weight") * Expr::attr(e, "strength"))
}

fn inferred_strength(m: LevelId, product: Expr) -> Expr {
    Expr::sum(m, product) / Expr::count(m)
}

fn theta_guard(b: &mut RuleBuilder, er: ElementId, theta: f64) {
    b.guard(LevelId::ROOT, Cond::cmp(CmpOp::Ge, Expr::attr(er, "delta"), Expr::lit(theta)));
}

fn new_user() -> RuleBuilder {
    let mut b = RuleBuilder::new("newUser");
    let u = b.node(LevelId::ROOT, Role::Creator, "User", "u");
    b.assign(LevelId::ROOT, u, "upd", Expr::lit(false));
    b.param("u", ParamDir::Out, u);
    b
}

fn new_post() -> RuleBuilder {
    let mut b = RuleBuilder::new("newPost");
    let u = b.node(LevelId::ROOT, Role::Reader, "User", "u");
    let p = b.node(LevelId::ROOT, Role::Creator, "Post", "p");
    b.edge(LevelId::ROOT, Role::Creator, "author", p, u);
    b.assign(LevelId::ROOT, p, "weight", Expr::lit(1.0));
    b.param("u", ParamDir::In, u);
    b.param("p", ParamDir::Out, p);
    b
}

fn new_engagement(strength: f64) -> RuleBuilder {
    let root = LevelId::ROOT;
    let mut b = RuleBuilder::new(engagement_rule_name(strength));
    let p = b.node(root, Role::Reader, "Post", "p");
    let a = b.node(root, Role::Reader, "User", "a");
    let w = b.node(root, Role::Reader, "User", "w");
    b.edge(root, Role::Reader, "author", p, a);
    b.guard(root, Cond::NodeNeq(w, a));
    let e0 = b.node(root, Role::Embargo, "Engagement", "e0");
    b.edge(root, Role::Embargo, "by", e0, w);
    b.edge(root, Role::Embargo, "on", e0, p);
    let e = b.node(root, Role::Creator, "Engagement", "e");
    b.edge(root, Role::Creator, "by", e, w);
    b.edge(root, Role::Creator, "on", e, p);
    engagement_attrs(&mut b, root, e, Expr::lit(strength), true);
    b.assign(root, a, "upd", Expr::lit(true));
    b.param("p", ParamDir::In, p);
    b
}

fn error_rule(cfg: &GrennConfig) -> RuleBuilder {
    let root = LevelId::ROOT;
    let mut b = RuleBuilder::new("error");
    let er = b.node(root, Role::Reader, "Error", "er");
    theta_guard(&mut b, er, cfg.theta);

    let l1 = b.level(root, Quantifier::Universal);
    let u = b.node(l1, Role::Reader, "User", "u");
    let a = b.node(l1, Role::Reader, "User", "a");
    let es = b.node(l1, Role::Reader, "Engagement", "es");
    let ps = b.node(l1, Role::Reader, "Post", "ps");
    b.edge(l1, Role::Reader, "by", es, u);
    b.edge(l1, Role::Reader, "on", es, ps);
    b.edge(l1, Role::Reader, "author", ps, a);
    b.guard(l1, Cond::attr_eq(a, "upd", true));
    b.guard(l1, Cond::attr_eq(es, "obs", true));
    b.guard(l1, Cond::NodeNeq(u, a));

    let (l2, product) = observed_level(&mut b, l1, u, a);
    let residual = Expr::attr(es, "strength") - inferred_strength(l2, product);
    b.assign(l1, es, "error", residual.clone());

    let global = Expr::sum(l1, residual.abs());
    b.assign(root, er, "delta", (Expr::attr(er, "error") - global.clone()).abs());
    b.assign(root, er, "error", global);
    b
}

fn delta_rule(cfg: &GrennConfig) -> RuleBuilder {
    let root = LevelId::ROOT;
    let mut b = RuleBuilder::new("delta");
    let er = b.node(root, Role::Reader, "Error", "er");
    theta_guard(&mut b, er, cfg.theta);

    let l1 = b.level(root, Quantifier::Universal);
    let p = b.node(l1, Role::Reader, "Post", "p");
    let a = b.node(l1, Role::Reader, "User", "a");
    b.edge(l1, Role::Reader, "author", p, a);
    b.guard(l1, Cond::attr_eq(a, "upd", true));

    let l2 = b.level(l1, Quantifier::UniversalNonEmpty);
    let e = b.node(l2, Role::Reader, "Engagement", "e");
    b.edge(l2, Role::Reader, "on", e, p);
    b.guard(l2, Cond::attr_eq(e, "obs", true));

    let step = Expr::sum(l2, Expr::attr(e, "error") * Expr::attr(e, "strength")) / Expr::count(l2);
    b.assign(l1, p, "weight", Expr::attr(p, "weight") + Expr::lit(cfg.eta) * step);
    b
}

fn infer_rule() -> RuleBuilder {
    let root = LevelId::ROOT;
    let mut b = RuleBuilder::new("infer");

    let l1 = b.level(root, Quantifier::Universal);
    let u = b.node(l1, Role::Reader, "User", "u");
    let a = b.node(l1, Role::Reader, "User", "a");
    let ps = b.node(l1, Role::Reader, "Post", "ps");
    b.edge(l1, Role::Reader, "author", ps, a);
    b.guard(l1, Cond::attr_eq(a, "upd", true));
    b.guard(l1, Cond::NodeNeq(u, a));
    let e0 = b.node(l1, Role::Embargo, "Engagement", "e0");
    b.edge(l1, Role::Embargo, "by", e0, u);
    b.edge(l1, Role::Embargo, "on", e0, ps);
    let e = b.node(l1, Role::CreatorIfAbsent, "Engagement", "e");
    b.edge(l1, Role::CreatorIfAbsent, "by", e, u);
    b.edge(l1, Role::CreatorIfAbsent, "on", e, ps);

    let (l2, product) = observed_level(&mut b, l1, u, a);
    engagement_attrs(&mut b, l1, e, inferred_strength(l2, product), false);

    let reset = b.level(root, Quantifier::UniversalNonEmpty);
    let f = b.node(reset, Role::Reader, "User", "f");
    b.guard(reset, Cond::attr_eq(f, "upd", true));
    b.assign(reset, f, "upd", Expr::lit(false));
    b
}

/// The model's rules: `newUser`, `newPost`, one `newEngagement` per
/// configured strength, `error`, `delta` and `infer`.
pub fn grenn_rules(cfg: &GrennConfig) -> RuleSet {
    let tg = grenn_type_graph();
    let mut builders = vec![new_user(), new_post()];
    builders.extend(cfg.engagement_strengths.iter().map(|&s| new_engagement(s)));
    builders.extend([error_rule(cfg), delta_rule(cfg), infer_rule()]);
    let rules: Vec<Rule> = builders.into_iter().map(|b| b.build(&tg).expect("model rule is valid")).collect();
    RuleSet::new(&tg, rules).expect("rule names are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_names() {
        let rules = grenn_rules(&GrennConfig::default());
        let names: Vec<_> = rules.names().collect();
        for n in
            ["newUser", "newPost", "newEngagement02", "newEngagement04", "newEngagement08", "error", "delta", "infer"]
        {
            assert!(names.contains(&n), "{n} missing");
        }
        assert_eq!(rules.len(), 8);
        assert_eq!(engagement_rule_name(0.25), "newEngagement025");
    }
}
