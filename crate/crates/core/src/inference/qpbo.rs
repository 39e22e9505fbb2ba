//! Roof-duality relaxation of binary pairwise energy minimization.
//!
//! Every variable gets a primal and a mirror node; each energy term is split
//! in half between them, which makes all arc capacities nonnegative without
//! requiring submodularity. After a max-flow, variables whose primal and
//! mirror land on opposite cut sides are labeled; the rest are reported
//! unlabeled and stand for the half-integral value 0.5. The cut value is the
//! relaxation's lower bound on the energy, and the labeled variables keep
//! their value in some optimal integral solution (weak persistence).

use crate::inference::maxflow::FlowGraph;

pub struct QpboSolution {
    /// Some(bit) for labeled variables, None for the 0.5 ones.
    pub labels: Vec<Option<bool>>,
    /// Lower bound on the minimum energy (equals it when all labeled).
    pub lower_bound: f64,
}

/// Minimize `const_term + sum unary[v] * x_v + sum (a, b, d): d * x_a * x_b`
/// over x in {0,1}^n, approximately: returns the roof-dual bound and a
/// partial labeling. Variables not referenced by any nonzero term default to
/// 0 (any value is optimal for them).
pub fn solve_qpbo(
    n_vars: usize,
    unary: &[f64],
    pairs: &[(usize, usize, f64)],
    const_term: f64,
) -> QpboSolution {
    debug_assert_eq!(unary.len(), n_vars);
    let prim = |v: usize| 2 + 2 * v;
    let mirr = |v: usize| 2 + 2 * v + 1;
    let (s, t) = (0usize, 1usize);

    let mut g = FlowGraph::new(2 + 2 * n_vars);
    let mut lambda = unary.to_vec();
    let mut constant = const_term;
    let mut touched = vec![false; n_vars];

    for &(a, b, d) in pairs {
        if d == 0.0 {
            continue;
        }
        touched[a] = true;
        touched[b] = true;
        if d > 0.0 {
            // cost when both are 1: cut arcs mirror(b)->a and mirror(a)->b
            g.add_edge(mirr(b), prim(a), d / 2.0);
            g.add_edge(mirr(a), prim(b), d / 2.0);
        } else {
            // d*x_a*x_b = d*x_b + (-d)*(1-x_a)*x_b
            lambda[b] += d;
            g.add_edge(prim(a), prim(b), -d / 2.0);
            g.add_edge(mirr(b), mirr(a), -d / 2.0);
        }
    }
    for v in 0..n_vars {
        let l = lambda[v];
        if l == 0.0 {
            continue;
        }
        touched[v] = true;
        if l > 0.0 {
            g.add_edge(s, prim(v), l / 2.0);
            g.add_edge(mirr(v), t, l / 2.0);
        } else {
            constant += l;
            g.add_edge(prim(v), t, -l / 2.0);
            g.add_edge(s, mirr(v), -l / 2.0);
        }
    }

    let flow = g.max_flow(s, t);
    let reach = g.residual_reachable(s);
    let labels = (0..n_vars)
        .map(|v| {
            if !touched[v] {
                return Some(false);
            }
            match (reach[prim(v)], reach[mirr(v)]) {
                (true, false) => Some(false),
                (false, true) => Some(true),
                _ => None,
            }
        })
        .collect();
    QpboSolution { labels, lower_bound: constant + flow }
}
