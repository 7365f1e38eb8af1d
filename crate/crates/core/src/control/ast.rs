use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ControlProgram {
    pub functions: Vec<Function>,
    pub main: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    RuleCall { name: String, args: Vec<Arg> },
    FunctionCall(String),
    Alap(Vec<Statement>),
    NodeDecl(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arg {
    Var(String),
    Out(String),
}

impl Arg {
    pub fn var(&self) -> &str {
        match self {
            Arg::Var(v) | Arg::Out(v) => v,
        }
    }
}

impl ControlProgram {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Names of all rules called anywhere in the program.
    pub fn rule_names(&self) -> Vec<&str> {
        fn walk<'a>(stmts: &'a [Statement], out: &mut Vec<&'a str>) {
            for s in stmts {
                match s {
                    Statement::RuleCall { name, .. } => {
                        if !out.contains(&name.as_str()) {
                            out.push(name);
                        }
                    }
                    Statement::Alap(body) => walk(body, out),
                    Statement::FunctionCall(_) | Statement::NodeDecl(_) => {}
                }
            }
        }
        let mut out = Vec::new();
        for f in &self.functions {
            walk(&f.body, &mut out);
        }
        walk(&self.main, &mut out);
        out
    }
}
