//! Typed attributed graph rewriting with nested quantified rules, negative
//! application conditions and a small control language, together with a
//! rule-based recommender model trained and queried entirely by rewriting.

pub mod cli;
pub mod control;
pub mod graph;
pub mod io;
pub mod model;
pub mod rewrite;
