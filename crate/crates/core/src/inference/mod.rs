//! Labeling inference: the relaxed half-integral solver (roof duality over
//! a max-flow graph) and exact branch-and-bound on top of it.

mod maxflow;
mod qpbo;

pub use qpbo::{solve_qpbo, QpboSolution};

use crate::error::{Error, Result};
use crate::model::Weights;
use crate::scene::{LabelMode, Labeling, SceneGraph};
use std::time::{Duration, Instant};

/// The discriminant flattened to one binary variable per (segment, class):
/// unary score coefficients plus one pairwise coefficient per stored edge
/// and ordered class pair (covering both edge orientations).
pub struct BinaryPairwiseProblem {
    pub num_nodes: usize,
    pub num_classes: usize,
    /// [node * K + class]
    pub unary: Vec<f64>,
    /// Graph edges (i < j), aligned with `pair_coeff` blocks.
    pub edges: Vec<(usize, usize)>,
    /// [edge * K * K + l * K + k]: coefficient of the activation of
    /// (y_i^l, y_j^k).
    pub pair_coeff: Vec<f64>,
}

impl BinaryPairwiseProblem {
    pub fn from_model(weights: &Weights, graph: &SceneGraph) -> Result<BinaryPairwiseProblem> {
        weights.check_graph(graph)?;
        let k_total = weights.structure().num_classes();
        let n = graph.segments.len();
        let layout = weights.layout();
        let mut unary = vec![0.0; n * k_total];
        for i in 0..n {
            for k in 0..k_total {
                unary[i * k_total + k] = weights
                    .node_block(k)
                    .iter()
                    .zip(graph.node_binned[i].iter())
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        let mut edges = Vec::with_capacity(graph.edges.len());
        let mut pair_coeff = vec![0.0; graph.edges.len() * k_total * k_total];
        for (ei, (e, feats)) in graph.edges.iter().zip(graph.edge_binned.iter()).enumerate() {
            edges.push((e.i, e.j));
            for l in 0..k_total {
                for k in 0..k_total {
                    let mut c = 0.0;
                    for t in 0..layout.edge_dims.len() {
                        if let Some(block) = weights.edge_block(t, l, k) {
                            c += block.iter().zip(feats.forward[t].iter()).map(|(a, b)| a * b).sum::<f64>();
                        }
                        if let Some(block) = weights.edge_block(t, k, l) {
                            c += block.iter().zip(feats.backward[t].iter()).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    pair_coeff[ei * k_total * k_total + l * k_total + k] = c;
                }
            }
        }
        Ok(BinaryPairwiseProblem { num_nodes: n, num_classes: k_total, unary, edges, pair_coeff })
    }

    pub fn num_vars(&self) -> usize {
        self.num_nodes * self.num_classes
    }

    fn var(&self, node: usize, class: usize) -> usize {
        node * self.num_classes + class
    }

    /// Optimal pair activation for a fractional assignment: the coupling
    /// constraints allow any z in [max(0, ya+yb-1), min(ya, yb)], so a
    /// maximizer takes the top of the interval for positive coefficients and
    /// the bottom for negative ones. Both ends coincide on integral values.
    fn best_z(coeff: f64, ya: f64, yb: f64) -> f64 {
        if coeff >= 0.0 {
            ya.min(yb)
        } else {
            (ya + yb - 1.0).max(0.0)
        }
    }

    /// Objective of a (possibly fractional) assignment with optimally chosen
    /// pair activations: the value of the corresponding relaxation vertex.
    pub fn lp_value(&self, y: &[f64]) -> f64 {
        let k = self.num_classes;
        let mut v: f64 = y.iter().zip(self.unary.iter()).map(|(a, b)| a * b).sum();
        for (ei, &(i, j)) in self.edges.iter().enumerate() {
            for l in 0..k {
                for kk in 0..k {
                    let c = self.pair_coeff[ei * k * k + l * k + kk];
                    if c != 0.0 {
                        v += c * Self::best_z(c, y[self.var(i, l)], y[self.var(j, kk)]);
                    }
                }
            }
        }
        v
    }

    /// The per-(edge, l, k) activations behind `lp_value`.
    pub fn z_vector(&self, y: &[f64]) -> Vec<f64> {
        let k = self.num_classes;
        let mut z = vec![0.0; self.edges.len() * k * k];
        for (ei, &(i, j)) in self.edges.iter().enumerate() {
            for l in 0..k {
                for kk in 0..k {
                    let idx = ei * k * k + l * k + kk;
                    z[idx] = Self::best_z(self.pair_coeff[idx], y[self.var(i, l)], y[self.var(j, kk)]);
                }
            }
        }
        z
    }

    /// Objective of an integral assignment (bits as 0.0/1.0).
    pub fn integral_value(&self, y: &[f64]) -> f64 {
        let k = self.num_classes;
        let mut v: f64 = y.iter().zip(self.unary.iter()).map(|(a, b)| a * b).sum();
        for (ei, &(i, j)) in self.edges.iter().enumerate() {
            for l in 0..k {
                if y[self.var(i, l)] == 0.0 {
                    continue;
                }
                for kk in 0..k {
                    if y[self.var(j, kk)] != 0.0 {
                        v += self.pair_coeff[ei * k * k + l * k + kk];
                    }
                }
            }
        }
        v
    }

    /// Roof-duality relaxation with some variables clamped (-1 free, 0/1
    /// fixed); returns the half-integral assignment over all vars and an
    /// upper bound on the best assignment consistent with the clamps.
    pub fn solve_relaxed(&self, fixed: &[i8]) -> (Vec<f64>, f64) {
        // Fold clamps into a reduced problem over the free variables.
        let mut free_ids = Vec::new();
        let mut map = vec![usize::MAX; self.num_vars()];
        for v in 0..self.num_vars() {
            if fixed[v] < 0 {
                map[v] = free_ids.len();
                free_ids.push(v);
            }
        }
        let mut constant = 0.0;
        let mut unary = vec![0.0; free_ids.len()];
        for v in 0..self.num_vars() {
            if fixed[v] < 0 {
                unary[map[v]] = -self.unary[v];
            } else if fixed[v] == 1 {
                constant -= self.unary[v];
            }
        }
        let k = self.num_classes;
        let mut pairs = Vec::new();
        for (ei, &(i, j)) in self.edges.iter().enumerate() {
            for l in 0..k {
                let a = self.var(i, l);
                if fixed[a] == 0 {
                    continue;
                }
                for kk in 0..k {
                    let b = self.var(j, kk);
                    if fixed[b] == 0 {
                        continue;
                    }
                    let c = self.pair_coeff[ei * k * k + l * k + kk];
                    if c == 0.0 {
                        continue;
                    }
                    match (fixed[a] < 0, fixed[b] < 0) {
                        (true, true) => pairs.push((map[a], map[b], -c)),
                        (true, false) => unary[map[a]] += -c,
                        (false, true) => unary[map[b]] += -c,
                        (false, false) => constant += -c,
                    }
                }
            }
        }
        let sol = solve_qpbo(free_ids.len(), &unary, &pairs, constant);
        let mut y = vec![0.0; self.num_vars()];
        for v in 0..self.num_vars() {
            if fixed[v] >= 0 {
                y[v] = fixed[v] as f64;
            } else {
                y[v] = match sol.labels[map[v]] {
                    Some(true) => 1.0,
                    Some(false) => 0.0,
                    None => 0.5,
                };
            }
        }
        (y, -sol.lower_bound)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolverStats {
    /// Branch-and-bound nodes expanded (0 for single relaxed solves).
    pub nodes_expanded: usize,
    /// Value of the relaxation at the root.
    pub root_bound: f64,
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub labeling: Labeling,
    pub objective: f64,
    pub integrality_fraction: f64,
    /// False when a time limit cut the search short.
    pub optimal: bool,
    pub stats: SolverStats,
    /// Pair activations of the relaxed solution, indexed
    /// [edge * K * K + l * K + k]; present on relaxed results.
    pub z: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExactConfig {
    pub time_limit: Duration,
    /// Enumerate instead of branch-and-bound when num_nodes * num_classes is
    /// at most this (and the assignment count stays small).
    pub enumeration_threshold: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig { time_limit: Duration::from_secs(60), enumeration_threshold: 20 }
    }
}

fn labeling_from_bits(y: &[f64], n: usize, k: usize, mode: LabelMode) -> Labeling {
    let mut l = Labeling::zeros(mode, n, k);
    l.values.copy_from_slice(y);
    l
}

/// Half-integral relaxation of the labeling problem, with no per-segment
/// label-count constraint. Integral variables of the result agree with some
/// optimal integral solution.
pub fn infer_relaxed(weights: &Weights, graph: &SceneGraph) -> Result<InferenceResult> {
    let start = Instant::now();
    let problem = BinaryPairwiseProblem::from_model(weights, graph)?;
    Ok(relax_on_problem(&problem, start))
}

fn relax_on_problem(problem: &BinaryPairwiseProblem, start: Instant) -> InferenceResult {
    let fixed = vec![-1i8; problem.num_vars()];
    let (y, bound) = problem.solve_relaxed(&fixed);
    let labeling = labeling_from_bits(&y, problem.num_nodes, problem.num_classes, LabelMode::Multilabel);
    let objective = problem.lp_value(&y);
    let z = problem.z_vector(&y);
    InferenceResult {
        integrality_fraction: labeling.integrality_fraction(),
        labeling,
        objective,
        optimal: true,
        stats: SolverStats { nodes_expanded: 0, root_bound: bound, wall: start.elapsed() },
        z: Some(z),
    }
}

/// Node assignment choice during search: a class index, or `num_classes` for
/// "unlabeled" in the at-most-one mode.
fn apply_node_choice(fixed: &mut [i8], node: usize, choice: usize, k: usize) {
    for c in 0..k {
        fixed[node * k + c] = (c == choice) as i8;
    }
}

/// Lexicographic preference among equal-objective assignments: the larger
/// flat bit vector wins, which for one-label modes means ties break toward
/// the lowest class index (and unlabeled loses to any class).
fn lex_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x != y {
            return x > y;
        }
    }
    false
}

struct Incumbent {
    value: f64,
    bits: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, value: f64, bits: &[f64]) {
        if value > self.value || (value == self.value && lex_greater(bits, &self.bits)) {
            self.value = value;
            self.bits = bits.to_vec();
        }
    }
}

fn mode_feasible(y: &[f64], n: usize, k: usize, mode: LabelMode) -> bool {
    match mode {
        LabelMode::Multilabel => true,
        _ => (0..n).all(|i| {
            let ones = (0..k).filter(|&c| y[i * k + c] == 1.0).count();
            match mode {
                LabelMode::ExactlyOne => ones == 1,
                LabelMode::AtMostOne => ones <= 1,
                LabelMode::Multilabel => unreachable!(),
            }
        }),
    }
}

/// Exact maximization by depth-first branch-and-bound with the roof-duality
/// bound; falls back to exhaustive enumeration on tiny instances. `clamps`
/// pin individual (segment, class) variables. Ties in the argmax break
/// deterministically (see `lex_greater`).
pub fn infer_exact_clamped(
    weights: &Weights,
    graph: &SceneGraph,
    mode: LabelMode,
    config: &ExactConfig,
    clamps: &[(usize, usize, bool)],
) -> Result<InferenceResult> {
    let start = Instant::now();
    let problem = BinaryPairwiseProblem::from_model(weights, graph)?;
    let (n, k) = (problem.num_nodes, problem.num_classes);

    let mut base_fixed = vec![-1i8; problem.num_vars()];
    for &(i, c, bit) in clamps {
        if i >= n || c >= k {
            return Err(Error::DimensionMismatch(format!("clamp ({i},{c}) outside {n}x{k}")));
        }
        base_fixed[i * k + c] = bit as i8;
    }

    let assignment_count_small = {
        let per_node: f64 = match mode {
            LabelMode::ExactlyOne => k as f64,
            LabelMode::AtMostOne => k as f64 + 1.0,
            LabelMode::Multilabel => (2f64).powi(k as i32),
        };
        per_node.powi(n as i32) <= 250_000.0
    };
    if n * k <= config.enumeration_threshold && assignment_count_small {
        return Ok(enumerate_exact(&problem, mode, &base_fixed, start));
    }

    let mut stats = SolverStats::default();
    let mut incumbent = Incumbent { value: f64::NEG_INFINITY, bits: vec![0.0; problem.num_vars()] };
    let mut timed_out = false;

    let (root_y, root_bound) = problem.solve_relaxed(&base_fixed);
    stats.root_bound = root_bound;
    // Greedy rounding of the root relaxation seeds the incumbent.
    if let Some(bits) = round_to_mode(&root_y, n, k, mode, &base_fixed) {
        incumbent.offer(problem.integral_value(&bits), &bits);
    }

    let mut stack: Vec<Vec<i8>> = vec![base_fixed.clone()];
    while let Some(fixed) = stack.pop() {
        if start.elapsed() > config.time_limit {
            timed_out = true;
            break;
        }
        stats.nodes_expanded += 1;
        let (y, bound) = problem.solve_relaxed(&fixed);
        let prune_margin = 1e-12 * (1.0 + incumbent.value.abs());
        if incumbent.value.is_finite() && bound <= incumbent.value - prune_margin {
            continue;
        }
        let integral = y.iter().all(|&v| v == 0.0 || v == 1.0);
        if integral && mode_feasible(&y, n, k, mode) {
            incumbent.offer(problem.integral_value(&y), &y);
            continue;
        }

        match mode {
            LabelMode::Multilabel => {
                // branch on the first fractional free variable
                let target = (0..problem.num_vars())
                    .find(|&v| fixed[v] < 0 && y[v] == 0.5)
                    .or_else(|| (0..problem.num_vars()).find(|&v| fixed[v] < 0));
                match target {
                    Some(v) => {
                        for bit in [0i8, 1i8] {
                            let mut child = fixed.clone();
                            child[v] = bit;
                            stack.push(child);
                        }
                    }
                    None => {
                        // fully fixed but infeasible can't happen in multilabel
                        incumbent.offer(problem.integral_value(&y), &y);
                    }
                }
            }
            LabelMode::ExactlyOne | LabelMode::AtMostOne => {
                let node_free = |i: usize, fixed: &[i8]| (0..k).any(|c| fixed[i * k + c] < 0);
                let target = (0..n)
                    .find(|&i| node_free(i, &fixed) && (0..k).any(|c| y[i * k + c] == 0.5))
                    .or_else(|| {
                        (0..n).find(|&i| {
                            node_free(i, &fixed) && {
                                let ones = (0..k).filter(|&c| y[i * k + c] == 1.0).count();
                                match mode {
                                    LabelMode::ExactlyOne => ones != 1,
                                    _ => ones > 1,
                                }
                            }
                        })
                    })
                    .or_else(|| (0..n).find(|&i| node_free(i, &fixed)));
                match target {
                    Some(i) => {
                        let mut choices: Vec<usize> = (0..k).collect();
                        if mode == LabelMode::AtMostOne {
                            choices.push(k); // unlabeled
                        }
                        // push in reverse so the lowest class pops first
                        for &choice in choices.iter().rev() {
                            // respect clamps: skip contradictory choices
                            let ok = (0..k).all(|c| {
                                let want = (c == choice) as i8;
                                fixed[i * k + c] < 0 || fixed[i * k + c] == want
                            });
                            if !ok {
                                continue;
                            }
                            let mut child = fixed.clone();
                            apply_node_choice(&mut child, i, choice, k);
                            stack.push(child);
                        }
                    }
                    None => {
                        // all nodes fixed; feasibility by construction
                        if mode_feasible(&y, n, k, mode) {
                            incumbent.offer(problem.integral_value(&y), &y);
                        }
                    }
                }
            }
        }
    }

    if !incumbent.value.is_finite() {
        return Err(Error::InvalidData(
            "search found no feasible labeling (contradictory clamps?)".into(),
        ));
    }
    let labeling = labeling_from_bits(&incumbent.bits, n, k, mode);
    stats.wall = start.elapsed();
    Ok(InferenceResult {
        integrality_fraction: 1.0,
        objective: incumbent.value,
        labeling,
        optimal: !timed_out,
        stats,
        z: None,
    })
}

/// Round a half-integral assignment to a mode-feasible integral one
/// (per-node argmax; used only to seed the incumbent).
fn round_to_mode(y: &[f64], n: usize, k: usize, mode: LabelMode, fixed: &[i8]) -> Option<Vec<f64>> {
    let mut bits = vec![0.0; n * k];
    for v in 0..n * k {
        if fixed[v] >= 0 {
            bits[v] = fixed[v] as f64;
        }
    }
    match mode {
        LabelMode::Multilabel => {
            for v in 0..n * k {
                if fixed[v] < 0 {
                    bits[v] = if y[v] > 0.5 { 1.0 } else { 0.0 };
                }
            }
            Some(bits)
        }
        _ => {
            for i in 0..n {
                let pre_set: Vec<usize> = (0..k).filter(|&c| bits[i * k + c] == 1.0).collect();
                if pre_set.len() > 1 {
                    return None;
                }
                if pre_set.len() == 1 {
                    continue;
                }
                let free: Vec<usize> = (0..k).filter(|&c| fixed[i * k + c] < 0).collect();
                let best = free
                    .iter()
                    .copied()
                    .max_by(|&a, &b| {
                        y[i * k + a]
                            .partial_cmp(&y[i * k + b])
                            .unwrap()
                            .then(b.cmp(&a))
                    });
                match best {
                    Some(c) => {
                        if mode == LabelMode::ExactlyOne || y[i * k + c] >= 0.5 {
                            bits[i * k + c] = 1.0;
                        }
                    }
                    None if mode == LabelMode::ExactlyOne => return None,
                    None => {}
                }
            }
            Some(bits)
        }
    }
}

fn enumerate_exact(
    problem: &BinaryPairwiseProblem,
    mode: LabelMode,
    base_fixed: &[i8],
    start: Instant,
) -> InferenceResult {
    let (n, k) = (problem.num_nodes, problem.num_classes);
    let mut incumbent = Incumbent { value: f64::NEG_INFINITY, bits: vec![0.0; n * k] };
    let mut bits = vec![0.0; n * k];
    let mut count = 0usize;

    fn respects(bits: &[f64], fixed: &[i8]) -> bool {
        bits.iter()
            .zip(fixed.iter())
            .all(|(&b, &f)| f < 0 || b == f as f64)
    }

    match mode {
        LabelMode::Multilabel => {
            let total = 1usize << (n * k);
            for mask in 0..total {
                for v in 0..n * k {
                    bits[v] = (mask >> v & 1) as f64;
                }
                if respects(&bits, base_fixed) {
                    incumbent.offer(problem.integral_value(&bits), &bits);
                }
                count += 1;
            }
        }
        _ => {
            let per_node = if mode == LabelMode::AtMostOne { k + 1 } else { k };
            let total = per_node.pow(n as u32);
            for mut code in 0..total {
                for v in bits.iter_mut() {
                    *v = 0.0;
                }
                for i in 0..n {
                    let choice = code % per_node;
                    code /= per_node;
                    if choice < k {
                        bits[i * k + choice] = 1.0;
                    }
                }
                if respects(&bits, base_fixed) {
                    incumbent.offer(problem.integral_value(&bits), &bits);
                }
                count += 1;
            }
        }
    }

    let labeling = labeling_from_bits(&incumbent.bits, n, k, mode);
    InferenceResult {
        integrality_fraction: 1.0,
        objective: incumbent.value,
        labeling,
        optimal: true,
        stats: SolverStats { nodes_expanded: count, root_bound: incumbent.value, wall: start.elapsed() },
        z: None,
    }
}

/// Globally optimal integral labeling under the given per-segment mode.
pub fn infer_exact(
    weights: &Weights,
    graph: &SceneGraph,
    mode: LabelMode,
    time_limit: Duration,
) -> Result<InferenceResult> {
    infer_exact_clamped(
        weights,
        graph,
        mode,
        &ExactConfig { time_limit, ..Default::default() },
        &[],
    )
}

/// Exact inference with independent per-class indicators (any number of
/// labels per segment), the integer counterpart of `infer_relaxed`.
pub fn infer_multilabel(weights: &Weights, graph: &SceneGraph, time_limit: Duration) -> Result<InferenceResult> {
    infer_exact(weights, graph, LabelMode::Multilabel, time_limit)
}

#[derive(Debug, Clone)]
pub struct PersistenceReport {
    pub clamped_objective: f64,
    pub exact_objective: f64,
    pub holds: bool,
    /// Individually failing (segment, class) variables; empty unless a
    /// violation was detected (which indicates an implementation bug).
    pub violations: Vec<(usize, usize)>,
}

/// Verify that every integral variable of a relaxed solution is consistent
/// with some optimal integral solution: re-solve exactly with those
/// variables clamped and compare objectives (the unconstrained integer
/// problem, matching the relaxation).
pub fn check_persistence(
    weights: &Weights,
    graph: &SceneGraph,
    relaxed: &InferenceResult,
    exact: &InferenceResult,
    config: &ExactConfig,
) -> Result<PersistenceReport> {
    let k = relaxed.labeling.num_classes;
    let mut clamps = Vec::new();
    for i in 0..relaxed.labeling.num_segments() {
        for c in 0..k {
            let v = relaxed.labeling.get(i, c);
            if v == 0.0 || v == 1.0 {
                clamps.push((i, c, v == 1.0));
            }
        }
    }
    let clamped = infer_exact_clamped(weights, graph, LabelMode::Multilabel, config, &clamps)?;
    let tol = 1e-9 * (1.0 + exact.objective.abs());
    let holds = (clamped.objective - exact.objective).abs() <= tol;
    let mut violations = Vec::new();
    if !holds {
        // Identify which individual clamps already break optimality.
        for &(i, c, bit) in &clamps {
            let single = infer_exact_clamped(weights, graph, LabelMode::Multilabel, config, &[(i, c, bit)])?;
            if (single.objective - exact.objective).abs() > tol {
                violations.push((i, c));
            }
        }
    }
    Ok(PersistenceReport {
        clamped_objective: clamped.objective,
        exact_objective: exact.objective,
        holds,
        violations,
    })
}
