//! Rule representation, matching and application.

pub mod apply;
pub mod expr;
pub mod matcher;
pub mod rule;

pub use apply::{apply, apply_once, eval_expr, plan, ApplicationRecord, ApplyError, AttrWrite};
pub use expr::{BinOp, CmpOp, Cond, EvalError, Expr};
pub use matcher::{find_match_forests, HostRef, LevelMatch, MatchError, MatchForest, ParamBindings, SubMatches};
pub use rule::{
    ElementId, LevelId, Param, ParamDir, PatternElement, QuantLevel, Quantifier, Role, Rule, RuleBuilder, RuleError,
    RuleSet, Shape,
};
