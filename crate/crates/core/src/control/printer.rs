use std::fmt::Write;

use super::ast::{Arg, ControlProgram, Statement};

const INDENT: &str = "    ";

/// Canonical text of a program: one statement per line, four-space indent,
/// a blank line between top-level blocks.
pub fn pretty_print(program: &ControlProgram) -> String {
    let mut blocks = Vec::new();
    for f in &program.functions {
        let mut s = format!("function {}() {{\n", f.name);
        write_block(&mut s, &f.body, 1);
        s.push_str("}\n");
        blocks.push(s);
    }
    if !program.main.is_empty() {
        let mut s = String::new();
        write_block(&mut s, &program.main, 0);
        blocks.push(s);
    }
    blocks.join("\n")
}

fn write_block(out: &mut String, stmts: &[Statement], depth: usize) {
    for s in stmts {
        let pad = INDENT.repeat(depth);
        match s {
            Statement::NodeDecl(v) => writeln!(out, "{pad}node {v};").unwrap(),
            Statement::FunctionCall(f) => writeln!(out, "{pad}{f};").unwrap(),
            Statement::RuleCall { name, args } if args.is_empty() => writeln!(out, "{pad}{name};").unwrap(),
            Statement::RuleCall { name, args } => {
                let args: Vec<String> = args
                    .iter()
                    .map(|a| match a {
                        Arg::Var(v) => v.clone(),
                        Arg::Out(v) => format!("out {v}"),
                    })
                    .collect();
                writeln!(out, "{pad}{name}({});", args.join(", ")).unwrap();
            }
            Statement::Alap(body) => {
                writeln!(out, "{pad}alap {{").unwrap();
                write_block(out, body, depth + 1);
                writeln!(out, "{pad}}}").unwrap();
            }
        }
    }
}
