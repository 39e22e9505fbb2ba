//! Max-margin training: 1-slack cutting-plane with a relaxed separation
//! oracle.
//!
//! Each round solves a small quadratic program over the working set of
//! aggregated constraints, asks the oracle for the most violated labeling of
//! every example under the current weights (Hamming-loss-augmented relaxed
//! inference), and adds the averaged constraint. Training stops when the new
//! constraint is violated by at most `xi + epsilon`. Because the oracle
//! searches the half-integral relaxation, the slack at the solution upper
//! bounds the integral training loss.

use crate::error::{Error, Result};
use crate::inference::BinaryPairwiseProblem;
use crate::model::{build_joint_feature, build_joint_feature_with_z, ModelStructure, Weights};
use crate::scene::{Labeling, SceneGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Regularization trade-off: larger C fits the data harder.
    pub c: f64,
    /// Cutting-plane convergence tolerance.
    pub epsilon: f64,
    pub max_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { c: 1.0, epsilon: 0.01, max_iterations: 300 }
    }
}

pub struct TrainExample {
    pub graph: SceneGraph,
    pub labels: Labeling,
}

/// Elementwise L1 distance over all (segment, class) entries.
pub fn hamming_loss(y: &Labeling, y_hat: &Labeling) -> Result<f64> {
    if y.num_classes != y_hat.num_classes || y.values.len() != y_hat.values.len() {
        return Err(Error::DimensionMismatch(format!(
            "labelings are {}x{} vs {}x{}",
            y.num_segments(),
            y.num_classes,
            y_hat.num_segments(),
            y_hat.num_classes
        )));
    }
    Ok(y.values.iter().zip(y_hat.values.iter()).map(|(a, b)| (a - b).abs()).sum())
}

pub struct OracleResult {
    pub labeling: Labeling,
    pub loss: f64,
    /// w . Psi(x, y_bar) + loss: the loss-augmented objective.
    pub augmented_objective: f64,
    /// Joint feature of the returned labeling (with the oracle's own pair
    /// activations, so `w . psi` reproduces its objective).
    pub psi: Vec<f64>,
}

/// Most violated labeling of one example: maximize
/// `w . Psi(x, y_bar) + Delta(y, y_bar)` over half-integral labelings. The
/// Hamming loss is linear in `y_bar` for integral ground truth, so it folds
/// into the node scores and one relaxed solve finds the maximizer.
pub fn separation_oracle(weights: &Weights, example: &TrainExample) -> Result<OracleResult> {
    if !example.labels.is_integral() {
        return Err(Error::InvalidData("ground-truth labelings must be integral".into()));
    }
    let mut problem = BinaryPairwiseProblem::from_model(weights, &example.graph)?;
    let gt = &example.labels.values;
    if gt.len() != problem.num_vars() {
        return Err(Error::DimensionMismatch("labels do not match graph".into()));
    }
    // |y - y_bar| = y + (1 - 2y) y_bar for integral y
    let loss_const: f64 = gt.iter().sum();
    for (u, &g) in problem.unary.iter_mut().zip(gt.iter()) {
        *u += 1.0 - 2.0 * g;
    }
    let fixed = vec![-1i8; problem.num_vars()];
    let (y_bar, _) = problem.solve_relaxed(&fixed);
    let augmented_objective = problem.lp_value(&y_bar) + loss_const;

    // Undo the loss absorption to get the plain model-side quantities.
    for (u, &g) in problem.unary.iter_mut().zip(gt.iter()) {
        *u -= 1.0 - 2.0 * g;
    }
    let z = problem.z_vector(&y_bar);
    let mut labeling =
        Labeling::zeros(crate::scene::LabelMode::Multilabel, problem.num_nodes, problem.num_classes);
    labeling.values.copy_from_slice(&y_bar);
    let loss: f64 = gt.iter().zip(y_bar.iter()).map(|(a, b)| (a - b).abs()).sum();
    let psi = build_joint_feature_with_z(weights.layout(), &example.graph, &labeling, &z);
    Ok(OracleResult { labeling, loss, augmented_objective, psi })
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Mean over examples of Psi(x, y) - Psi(x, y_bar).
    pub delta_psi: Vec<f64>,
    /// Mean loss of the y_bar batch.
    pub loss: f64,
}

/// Working set of cutting planes; constraints are only ever added.
#[derive(Default)]
pub struct WorkingSet {
    pub constraints: Vec<Constraint>,
    hashes: std::collections::HashSet<u64>,
    /// Gram matrix of the delta_psi vectors, row-major, grown incrementally.
    gram: Vec<f64>,
}

impl WorkingSet {
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    fn hash_of(v: &[f64]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in v {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1_0000_0000_01b3);
            }
        }
        h
    }

    /// Returns false when an identical constraint is already present.
    pub fn push(&mut self, c: Constraint) -> bool {
        if !self.hashes.insert(Self::hash_of(&c.delta_psi)) {
            return false;
        }
        let m = self.constraints.len();
        let mut new_gram = vec![0.0; (m + 1) * (m + 1)];
        for i in 0..m {
            for j in 0..m {
                new_gram[i * (m + 1) + j] = self.gram[i * m + j];
            }
        }
        for (i, old) in self.constraints.iter().enumerate() {
            let dp: f64 = old.delta_psi.iter().zip(c.delta_psi.iter()).map(|(a, b)| a * b).sum();
            new_gram[i * (m + 1) + m] = dp;
            new_gram[m * (m + 1) + i] = dp;
        }
        new_gram[m * (m + 1) + m] = c.delta_psi.iter().map(|v| v * v).sum();
        self.gram = new_gram;
        self.constraints.push(c);
        true
    }
}

/// Solve `min 1/2 ||w||^2 + C xi` subject to `w . delta_psi_j >= loss_j - xi`
/// for every working-set constraint and `xi >= 0`, in the dual (one
/// multiplier per constraint, sum bounded by C) by coordinate ascent with
/// pairwise exchanges, to duality gap at most `1e-8 * C`.
pub fn solve_working_set_qp(ws: &WorkingSet, c: f64, alpha: &mut Vec<f64>) -> (Vec<f64>, f64) {
    let m = ws.constraints.len();
    alpha.resize(m, 0.0);
    if m == 0 {
        return (Vec::new(), 0.0);
    }
    let dim = ws.constraints[0].delta_psi.len();
    let q = |i: usize, j: usize| ws.gram[i * m + j];

    // keep g = Q alpha incrementally
    let mut g = vec![0.0; m];
    for j in 0..m {
        if alpha[j] != 0.0 {
            for i in 0..m {
                g[i] += q(i, j) * alpha[j];
            }
        }
    }
    let mut budget: f64 = alpha.iter().sum();
    let gap_target = 1e-8 * c + 1e-12;

    for _sweep in 0..10_000 {
        // single-coordinate moves
        for j in 0..m {
            let qjj = q(j, j);
            if qjj <= 0.0 {
                // zero-norm constraint: the quadratic term cannot grow, so
                // spend remaining budget on it if its loss is positive
                let grad = ws.constraints[j].loss - g[j];
                if grad > 0.0 && budget < c {
                    let t = c - budget;
                    alpha[j] += t;
                    budget += t;
                }
                continue;
            }
            let grad = ws.constraints[j].loss - g[j];
            let mut t = grad / qjj;
            t = t.max(-alpha[j]).min(c - budget);
            if t.abs() > 1e-15 {
                alpha[j] += t;
                budget += t;
                for i in 0..m {
                    g[i] += q(i, j) * t;
                }
            }
        }
        // pairwise exchanges keep progress possible at the budget boundary
        if budget >= c - 1e-12 && m > 1 {
            for j in 0..m {
                for k in 0..m {
                    if j == k {
                        continue;
                    }
                    let denom = q(j, j) + q(k, k) - 2.0 * q(j, k);
                    if denom <= 1e-15 {
                        continue;
                    }
                    let grad = (ws.constraints[j].loss - g[j]) - (ws.constraints[k].loss - g[k]);
                    let mut t = grad / denom;
                    t = t.max(-alpha[j]).min(alpha[k]);
                    if t.abs() > 1e-15 {
                        alpha[j] += t;
                        alpha[k] -= t;
                        for i in 0..m {
                            g[i] += (q(i, j) - q(i, k)) * t;
                        }
                    }
                }
            }
        }

        // duality gap check
        let mut w = vec![0.0; dim];
        for (j, cst) in ws.constraints.iter().enumerate() {
            if alpha[j] != 0.0 {
                for (wd, pd) in w.iter_mut().zip(cst.delta_psi.iter()) {
                    *wd += alpha[j] * pd;
                }
            }
        }
        let wnorm2: f64 = w.iter().map(|v| v * v).sum();
        let xi = ws
            .constraints
            .iter()
            .map(|cst| {
                let wd: f64 = w.iter().zip(cst.delta_psi.iter()).map(|(a, b)| a * b).sum();
                cst.loss - wd
            })
            .fold(0.0f64, f64::max);
        let primal = 0.5 * wnorm2 + c * xi;
        let dual: f64 = ws
            .constraints
            .iter()
            .enumerate()
            .map(|(j, cst)| alpha[j] * cst.loss)
            .sum::<f64>()
            - 0.5 * wnorm2;
        if primal - dual <= gap_target {
            return (w, xi.max(0.0));
        }
    }
    // return the last iterate even if the gap target was not met
    let mut w = vec![0.0; dim];
    for (j, cst) in ws.constraints.iter().enumerate() {
        for (wd, pd) in w.iter_mut().zip(cst.delta_psi.iter()) {
            *wd += alpha[j] * pd;
        }
    }
    let xi = ws
        .constraints
        .iter()
        .map(|cst| {
            let wd: f64 = w.iter().zip(cst.delta_psi.iter()).map(|(a, b)| a * b).sum();
            cst.loss - wd
        })
        .fold(0.0f64, f64::max);
    (w, xi.max(0.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub xi: f64,
    pub violation: f64,
    /// Primal objective 1/2 ||w||^2 + C xi.
    pub objective: f64,
    pub constraints: usize,
    pub wall_ms: u128,
}

pub struct TrainOutput {
    pub weights: Weights,
    pub xi: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

/// Cutting-plane training over a dataset of labeled graphs.
pub fn train(structure: ModelStructure, dataset: &[TrainExample], config: &TrainConfig) -> Result<TrainOutput> {
    if dataset.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    if config.c <= 0.0 || config.epsilon <= 0.0 {
        return Err(Error::InvalidData("C and epsilon must be positive".into()));
    }
    let layout = structure.layout();
    let mut weights = Weights::zeros(structure);
    for ex in dataset {
        weights.check_graph(&ex.graph)?;
        ex.labels.validate()?;
        if !ex.labels.is_integral() {
            return Err(Error::InvalidData("training labels must be integral".into()));
        }
    }
    let n = dataset.len() as f64;
    let psi_gt: Vec<Vec<f64>> = dataset
        .par_iter()
        .map(|ex| build_joint_feature(&layout, &ex.graph, &ex.labels))
        .collect();

    let mut ws = WorkingSet::default();
    let mut alpha: Vec<f64> = Vec::new();
    let mut xi = 0.0f64;
    let mut history = Vec::new();
    let mut converged = false;
    let start = std::time::Instant::now();

    for iteration in 0..config.max_iterations {
        let oracle: Vec<OracleResult> = dataset
            .par_iter()
            .map(|ex| separation_oracle(&weights, ex))
            .collect::<Result<Vec<_>>>()?;

        let mut delta_psi = vec![0.0; layout.total];
        let mut loss = 0.0;
        for (o, gt) in oracle.iter().zip(psi_gt.iter()) {
            for (d, (g, b)) in delta_psi.iter_mut().zip(gt.iter().zip(o.psi.iter())) {
                *d += (g - b) / n;
            }
            loss += o.loss / n;
        }
        let w_dot: f64 = weights.flat().iter().zip(delta_psi.iter()).map(|(a, b)| a * b).sum();
        let violation = loss - w_dot;
        history.push(IterationRecord {
            iteration,
            xi,
            violation,
            objective: 0.5 * weights.flat().iter().map(|v| v * v).sum::<f64>() + config.c * xi,
            constraints: ws.len(),
            wall_ms: start.elapsed().as_millis(),
        });
        if violation <= xi + config.epsilon {
            converged = true;
            break;
        }
        if !ws.push(Constraint { delta_psi, loss }) {
            // identical constraint already present: the QP cannot move
            converged = true;
            break;
        }
        let (w, new_xi) = solve_working_set_qp(&ws, config.c, &mut alpha);
        debug_assert!(alpha.iter().all(|&a| a >= -1e-12));
        debug_assert!(alpha.iter().sum::<f64>() <= config.c + 1e-9 * config.c.max(1.0));
        weights.set_flat(w)?;
        xi = new_xi;
    }

    Ok(TrainOutput { weights, xi, history, converged })
}
