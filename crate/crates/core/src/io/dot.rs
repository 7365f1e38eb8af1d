use std::fmt::Write;

use crate::graph::{HostGraph, Value};

/// `x` with six significant digits, trailing zeros dropped, in the style of C's `%g`.
pub fn format_real_g6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s.to_owned()
        }
    };
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn label_value(v: &Value) -> String {
    match v {
        Value::Real(x) => format_real_g6(*x),
        Value::Str(s) => format!("\\\"{}\\\"", escape(s)),
        other => other.to_string(),
    }
}

/// Graphviz rendering: one node statement per node labelled with its type
/// and attributes, one edge statement per edge labelled with its type.
pub fn export_dot(g: &HostGraph) -> String {
    let mut out = String::from("digraph G {\n");
    for (id, n) in g.nodes() {
        let mut label = format!("{id}: {}", escape(&n.ty));
        for (k, v) in &n.attrs {
            write!(label, "\\n{} = {}", escape(k), label_value(v)).unwrap();
        }
        writeln!(out, "  {id} [label=\"{label}\"];").unwrap();
    }
    for (_, e) in g.edges() {
        writeln!(out, "  {} -> {} [label=\"{}\"];", e.src, e.tgt, escape(&e.ty)).unwrap();
    }
    out.push_str("}\n");
    out
}
