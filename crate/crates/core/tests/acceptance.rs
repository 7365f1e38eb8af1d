//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` cannot hold for the fixture data
//! as defined; they are still evaluated in full and reported as FAIL. The
//! target exits non-zero if any other criterion fails, or if a listed one
//! starts passing.

mod common;

use std::collections::BTreeSet;
use std::path::Path;

use common::{
    brute_forests, embargo_violations, engine_forests, param_choices, random_model_graph, Canon, CORPUS_BOUNDS,
    SMALL_BOUNDS, STRENGTHS,
};
use grenn::cli::{run_cli, run_session};
use grenn::control::{parse_program, pretty_print, ExecObserver, Statement, StepOutcome, TraceEntry};
use grenn::graph::{HostGraph, NodeId, Value};
use grenn::model::{
    check_model, error_node, grenn_rules, mini, mini_graph, oracle_global_error, oracle_inferred_strength,
    oracle_l2_error, run_inference, run_training, run_update, seed_graph, GrennConfig, ModelViolation, DEMO_PROGRAM,
};
use grenn::rewrite::{apply_once, ParamBindings, Role, Rule};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KNOWN_UNATTAINABLE: &[usize] = &[5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(checks: &[(&str, bool)], extra: String) -> Outcome {
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    let detail = if failed.is_empty() { extra } else { format!("{extra}; failed: {}", failed.join(", ")) };
    Outcome { pass: failed.is_empty(), detail }
}

fn real(g: &HostGraph, n: NodeId, a: &str) -> f64 {
    g.attr(n, a).and_then(Value::as_real).unwrap_or(f64::NAN)
}

fn flagged(g: &HostGraph, n: NodeId) -> bool {
    g.attr(n, "upd") == Some(&Value::Bool(true))
}

fn criterion_1() -> Outcome {
    let mut g = mini_graph();
    let t = run_training(&mut g, &GrennConfig::default()).expect("training runs");
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let c = &t.cycles;
    let checks = [
        ("2 cycles", t.cycles_run == 2 && t.terminated),
        ("cycle 1 (0.4, 0.4)", !c.is_empty() && near(c[0].global_error, 0.4) && near(c[0].delta, 0.4)),
        ("cycle 2 (0.4, 0.0)", c.len() >= 2 && near(c[1].global_error, 0.4) && near(c[1].delta, 0.0)),
        ("p1 = 0.46", near(real(&g, mini::P1, "weight"), 0.46)),
        ("p2 = 1.24", near(real(&g, mini::P2, "weight"), 1.24)),
    ];
    let rows: Vec<String> = c.iter().map(|c| format!("({:?}, {:?})", c.global_error, c.delta)).collect();
    outcome(&checks, format!("cycles {}", rows.join(" ")))
}

fn criterion_2() -> Outcome {
    let cfg = GrennConfig::default();
    let rules = grenn_rules(&cfg);
    let (mut graphs, mut error_apps, mut inferred) = (0, 0, 0);
    let (mut worst_g, mut worst_s) = (0.0f64, 0.0f64);
    let mut bounds_ok = true;
    for seed in 0..120u64 {
        let mut g = random_model_graph(&mut ChaCha8Rng::seed_from_u64(seed), &CORPUS_BOUNDS);
        graphs += 1;
        let obs = g.nodes_of_type("Engagement").filter(|&e| g.attr(e, "obs") == Some(&Value::Bool(true))).count();
        bounds_ok &= g.count_of_type("User") <= 10 && g.count_of_type("Post") <= 20 && obs <= 60;
        bounds_ok &= g
            .nodes_of_type("Engagement")
            .filter(|&e| g.attr(e, "obs") == Some(&Value::Bool(true)))
            .all(|e| STRENGTHS.contains(&real(&g, e, "strength")));
        for _ in 0..3 {
            let want = oracle_global_error(&g);
            if apply_once(rules.get("error").unwrap(), &mut g, &Default::default()).unwrap().is_none() {
                break;
            }
            error_apps += 1;
            worst_g = worst_g.max((real(&g, error_node(&g).unwrap(), "error") - want).abs());
            apply_once(rules.get("delta").unwrap(), &mut g, &Default::default()).unwrap();
        }
        let pre = g.clone();
        if let Some(rec) = apply_once(rules.get("infer").unwrap(), &mut g, &Default::default()).unwrap() {
            for (id, _) in &rec.created_nodes {
                let (u, p) = (g.follow(*id, "by").unwrap(), g.follow(*id, "on").unwrap());
                let a = g.follow(p, "author").unwrap();
                let want = oracle_inferred_strength(&pre, u, a).map(|w| (real(&g, *id, "strength") - w).abs());
                worst_s = worst_s.max(want.unwrap_or(f64::INFINITY));
                inferred += 1;
            }
        }
    }
    let checks = [
        ("at least 100 graphs", graphs >= 100),
        ("corpus within bounds", bounds_ok),
        ("non-vacuous", error_apps > 0 && inferred > 0),
        ("strength within 1e-12", worst_s <= 1e-12),
        ("global error within 1e-12", worst_g <= 1e-12),
    ];
    outcome(
        &checks,
        format!(
            "{graphs} graphs, {inferred} inferred engagements (max dev {worst_s:e}), {error_apps} error applications (max dev {worst_g:e})"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut g = seed_graph();
    let initial = oracle_global_error(&g);
    match run_training(&mut g, &GrennConfig::default()) {
        Ok(t) => {
            let last = t.cycles.last();
            let checks = [
                ("terminated", t.terminated && t.cycles_run <= 10_000),
                ("delta < 1e-4", last.is_some_and(|c| c.delta < 1e-4)),
                ("final <= initial", last.is_some_and(|c| c.global_error <= initial)),
            ];
            let detail = format!(
                "cycles run {}, initial G {initial:?}, final G {:?}, final delta {:?}",
                t.cycles_run,
                last.map(|c| c.global_error).unwrap_or(f64::NAN),
                last.map(|c| c.delta).unwrap_or(f64::NAN)
            );
            outcome(&checks, detail)
        }
        Err(e) => Outcome { pass: false, detail: e.to_string() },
    }
}

fn criterion_4() -> Outcome {
    let mut g = mini_graph();
    let rules = grenn_rules(&GrennConfig { eta: 0.01, ..Default::default() });
    let before = oracle_l2_error(&g);
    let e = apply_once(rules.get("error").unwrap(), &mut g, &Default::default()).unwrap().is_some();
    let d = apply_once(rules.get("delta").unwrap(), &mut g, &Default::default()).unwrap().is_some();
    let after = oracle_l2_error(&g);
    let checks = [
        ("one cycle applied", e && d),
        ("pre = 0.1000", (before - 0.1).abs() <= 1e-6),
        ("post = 0.09965", (after - 0.09965).abs() <= 1e-6),
        ("strict decrease", after < before),
    ];
    outcome(&checks, format!("L2 {before:?} -> {after:?}"))
}

fn new_user_engagements(g: &HostGraph, start: &HostGraph) -> Option<(NodeId, usize, usize)> {
    let user = g.nodes_of_type("User").find(|u| start.node(*u).is_none())?;
    let post = g.nodes_of_type("Post").find(|&p| g.follow(p, "author") == Some(user))?;
    let (mut obs, mut inf) = (0, 0);
    for e in g.nodes_of_type("Engagement") {
        if g.follow(e, "on") == Some(post) {
            if g.attr(e, "obs") == Some(&Value::Bool(true)) {
                obs += 1;
            } else {
                inf += 1;
            }
        }
    }
    Some((user, obs, inf))
}

fn criterion_5() -> Outcome {
    let cfg = GrennConfig::default();
    let mut g = seed_graph();
    run_training(&mut g, &cfg).unwrap();
    run_inference(&mut g, &cfg).unwrap();
    run_update(&mut g, &cfg).unwrap();
    let before = g.clone();
    run_training(&mut g, &cfg).unwrap();

    let mut unflagged_same = true;
    let mut flagged_changed = 0;
    let mut flagged_posts = 0;
    for p in before.nodes_of_type("Post") {
        let a = before.follow(p, "author").unwrap();
        let same = real(&g, p, "weight").to_bits() == real(&before, p, "weight").to_bits();
        if flagged(&before, a) {
            flagged_posts += 1;
            flagged_changed += usize::from(!same);
        } else {
            unflagged_same &= same;
        }
    }

    let program = parse_program(DEMO_PROGRAM).unwrap();
    let session = run_session(&program, seed_graph(), &cfg, &mut ());
    let start = &session.snapshots[0].1;
    let last = &session.snapshots.last().unwrap().1;
    let found = new_user_engagements(last, start);
    let (obs, inf) = found.map(|(_, o, i)| (o, i)).unwrap_or((0, 0));

    let checks = [
        ("unflagged posts bit-identical", unflagged_same),
        ("flagged author weight modified", flagged_changed > 0),
        ("new user has 2 observed + 1 inferred", obs == 2 && inf == 1),
    ];
    outcome(
        &checks,
        format!(
            "{flagged_changed}/{flagged_posts} flagged-author posts changed; new user's post has {obs} observed, {inf} inferred engagements"
        ),
    )
}

/// Records model violations after every successful rule application.
#[derive(Default)]
struct Watch {
    applications: usize,
    duplicates: usize,
    nonconformant: usize,
    other: Vec<String>,
}

impl ExecObserver for Watch {
    fn rule_step(&mut self, entry: &TraceEntry, g: &HostGraph) {
        if !matches!(entry.outcome, StepOutcome::Applied(_)) {
            return;
        }
        self.applications += 1;
        if !g.is_conformant() {
            self.nonconformant += 1;
        }
        for v in check_model(g) {
            match v {
                ModelViolation::DuplicateEngagement { .. } => self.duplicates += 1,
                other => self.other.push(other.to_string()),
            }
        }
    }
}

fn criterion_6() -> Outcome {
    let cfg = GrennConfig::default();
    let mut idempotent = true;
    let mut first_created = 0;
    for mut g in [mini_graph(), seed_graph()] {
        run_training(&mut g, &cfg).unwrap();
        first_created += run_inference(&mut g, &cfg).unwrap().created.len();
        let nodes = g.node_count();
        let second = run_inference(&mut g, &cfg).unwrap();
        idempotent &= second.created.is_empty() && g.node_count() == nodes;
    }
    let program = parse_program(DEMO_PROGRAM).unwrap();
    let mut watch = Watch::default();
    run_session(&program, seed_graph(), &cfg, &mut watch);
    let checks = [
        ("second inference creates nothing", idempotent && first_created > 0),
        ("no duplicate engagement during demo", watch.duplicates == 0 && watch.applications > 0),
    ];
    outcome(&checks, format!("{} demo applications checked", watch.applications))
}

fn criterion_7() -> Outcome {
    let listing = parse_program(DEMO_PROGRAM);
    let listing_ok = listing.as_ref().is_ok_and(|p| {
        p.functions.len() == 3 && p.main.len() == 5 && p.main.iter().all(|s| matches!(s, Statement::FunctionCall(_)))
    });
    let listing_fixpoint = listing.as_ref().is_ok_and(|p| {
        let text = pretty_print(p);
        parse_program(&text).is_ok_and(|q| &q == p && pretty_print(&q) == text)
    });
    let mut n = 0;
    let mut fixpoints = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let p = common::random_program(&mut rng);
        let text = pretty_print(&p);
        n += 1;
        if parse_program(&text).is_ok_and(|q| q == p && pretty_print(&q) == text) {
            fixpoints += 1;
        }
    }
    let checks = [
        ("listing parses", listing_ok),
        ("listing fixpoint", listing_fixpoint),
        ("generated fixpoints", fixpoints == n && n >= 20),
    ];
    outcome(&checks, format!("{fixpoints}/{n} generated programs"))
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(Result::ok)
                .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn criterion_8() -> Outcome {
    let cfg = GrennConfig::default();
    let program = parse_program(DEMO_PROGRAM).unwrap();
    let mut watch = Watch::default();
    let session = run_session(&program, seed_graph(), &cfg, &mut watch);
    let conformant = watch.applications > 0 && watch.nonconformant == 0 && watch.other.is_empty();

    let mut corpus: Vec<HostGraph> = vec![mini_graph(), seed_graph()];
    corpus.extend(session.snapshots.iter().map(|(_, g)| g.clone()));
    for seed in 0..120u64 {
        corpus.push(random_model_graph(&mut ChaCha8Rng::seed_from_u64(seed), &CORPUS_BOUNDS));
        corpus.push(random_model_graph(&mut ChaCha8Rng::seed_from_u64(seed), &SMALL_BOUNDS));
    }
    corpus.retain(|g| g.node_count() <= 20);
    let rules = grenn_rules(&cfg);
    let (mut checked, mut disagreements, mut violations, mut blocked_matches) = (0, 0, 0, 0);
    for g in &corpus {
        for rule in rules.rules().filter(|r| r.elements.iter().any(|e| e.role == Role::Embargo)) {
            for params in param_choices(rule, g) {
                checked += 1;
                let engine = engine_forests(rule, g, &params);
                let reference = brute_forests(rule, g, &params);
                if engine != reference {
                    disagreements += 1;
                }
                violations += embargo_violations(rule, g, &params);
                blocked_matches +=
                    usize::from(match_count(&reference) < match_count(&without_embargo(rule, g, &params)));
            }
        }
    }

    let root = std::env::temp_dir().join(format!("grenn-acceptance-{}", std::process::id()));
    let mut sink = Vec::new();
    let mut codes = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let out = out.to_str().unwrap();
        codes.push(run_cli(["grenn", "demo", "--dot", "--out", out], &mut sink, &mut Vec::new()));
    }
    let (a, b) = (files_in(&root.join("a")), files_in(&root.join("b")));
    let _ = std::fs::remove_dir_all(&root);
    let names: BTreeSet<&str> = a.iter().map(|(n, _)| n.as_str()).collect();

    let checks = [
        ("conformance after every application", conformant),
        ("matches equal exhaustive search", disagreements == 0 && checked > 0),
        ("no match has an embargo extension", violations == 0),
        ("embargo exercised", blocked_matches > 0),
        ("demo outputs byte-identical", codes == [0, 0] && !a.is_empty() && a == b),
    ];
    outcome(
        &checks,
        format!(
            "{} demo applications; {} graphs <= 20 nodes, {checked} rule/parameter cases ({blocked_matches} with embargoed candidates); {} demo files compared",
            watch.applications,
            corpus.len(),
            names.len()
        ),
    )
}

fn match_count(forests: &[Canon]) -> usize {
    forests.iter().map(|c| 1 + c.children.iter().map(|(_, v)| match_count(v)).sum::<usize>()).sum()
}

/// Reference forests of `rule` with its embargo elements and their guards removed.
fn without_embargo(rule: &Rule, g: &HostGraph, params: &ParamBindings) -> Vec<Canon> {
    let mut r = rule.clone();
    let embargo: Vec<usize> = r.elements.iter().filter(|e| e.role == Role::Embargo).map(|e| e.id.0).collect();
    r.guards.retain(|gd| gd.cond.elements().iter().all(|e| !embargo.contains(&e.0)));
    for e in r.elements.iter_mut().filter(|e| e.role == Role::Embargo) {
        // created elements take no part in matching
        e.role = Role::Creator;
    }
    brute_forests(&r, g, params)
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(usize, &str, Criterion); 8] = [
        (1, "MINI trace exactness", criterion_1),
        (2, "inferred strength and global error match the oracles", criterion_2),
        (3, "convergence on the seed graph", criterion_3),
        (4, "descent with eta = 0.01", criterion_4),
        (5, "incrementality", criterion_5),
        (6, "idempotence and uniqueness", criterion_6),
        (7, "parser fidelity", criterion_7),
        (8, "engine invariants", criterion_8),
    ];
    let mut unexpected = 0;
    for (n, title, check) in criteria {
        let o = check();
        let known = KNOWN_UNATTAINABLE.contains(&n);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = match (o.pass, known) {
            (false, true) => " (unattainable on the defined fixtures)",
            (true, true) => " (listed as unattainable but passed)",
            _ => "",
        };
        println!("criterion {n}: {tag} {title}{note}: {}", o.detail);
        if o.pass == known {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria did not give the expected result");
        std::process::exit(1);
    }
}
