//! Direct computations of the model's quantities, independent of the rewrite
//! engine. All sums run in ascending engagement id order.

use thiserror::Error;

use super::{flag, real};
use crate::graph::{HostGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("user {user} has no observed engagement with posts by {author}")]
    EmptyM { user: NodeId, author: NodeId },
}

struct Observed {
    strength: f64,
    user: NodeId,
    author: NodeId,
    weight: f64,
}

fn observed(g: &HostGraph) -> Vec<Observed> {
    let mut out = Vec::new();
    for e in g.nodes_of_type("Engagement") {
        if !flag(g, e, "obs") {
            continue;
        }
        let (Some(user), Some(post)) = (g.follow(e, "by"), g.follow(e, "on")) else { continue };
        let Some(author) = g.follow(post, "author") else { continue };
        out.push(Observed { strength: real(g, e, "strength"), user, author, weight: real(g, post, "weight") });
    }
    out
}

fn mean_product(obs: &[Observed], user: NodeId, author: NodeId) -> Result<f64, OracleError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for o in obs.iter().filter(|o| o.user == user && o.author == author) {
        sum += o.weight * o.strength;
        n += 1;
    }
    if n == 0 {
        Err(OracleError::EmptyM { user, author })
    } else {
        Ok(sum / n as f64)
    }
}

/// Mean of `weight × strength` over the observed engagements of `user` on
/// posts by `author`.
pub fn oracle_inferred_strength(g: &HostGraph, user: NodeId, author: NodeId) -> Result<f64, OracleError> {
    mean_product(&observed(g), user, author)
}

fn residuals(g: &HostGraph) -> Vec<f64> {
    let obs = observed(g);
    obs.iter()
        .filter(|o| o.user != o.author && flag(g, o.author, "upd"))
        .map(|o| o.strength - mean_product(&obs, o.user, o.author).expect("o itself is in M"))
        .collect()
}

/// Sum of absolute residuals over observed engagements on posts of flagged authors.
pub fn oracle_global_error(g: &HostGraph) -> f64 {
    residuals(g).into_iter().map(f64::abs).sum()
}

/// Sum of squared residuals over the same engagements as [`oracle_global_error`].
pub fn oracle_l2_error(g: &HostGraph) -> f64 {
    residuals(g).into_iter().map(|r| r * r).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Value;
    use crate::model::{mini, mini_graph, GraphBuilder};

    #[test]
    fn mini_values() {
        let g = mini_graph();
        assert!((oracle_inferred_strength(&g, mini::U1, mini::U2).unwrap() - 0.5).abs() < 1e-12);
        assert!((oracle_global_error(&g) - 0.4).abs() < 1e-12);
        assert!((oracle_l2_error(&g) - 0.1).abs() < 1e-12);
        assert_eq!(
            oracle_inferred_strength(&g, mini::U2, mini::U1),
            Err(OracleError::EmptyM { user: mini::U2, author: mini::U1 })
        );
    }

    #[test]
    fn single_engagement_identity() {
        let mut b = GraphBuilder::new();
        let u = b.user(false);
        let a = b.user(true);
        let p = b.post(0.7);
        let e = b.engagement(0.4, true);
        b.author(p, a);
        b.link(e, u, p);
        b.error_node();
        assert_eq!(oracle_inferred_strength(&b.graph, u, a).unwrap(), 0.7 * 0.4);
    }

    #[test]
    fn no_flagged_authors() {
        let mut g = mini_graph();
        g.set_attr(mini::U2, "upd", Value::Bool(false)).unwrap();
        assert_eq!(oracle_global_error(&g), 0.0);
    }
}
