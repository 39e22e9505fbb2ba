//! Evaluation: per-class and aggregate precision/recall, confusion matrices,
//! the majority-class baseline, and scene-level cross-validation.

use crate::error::{Error, Result};
use crate::features::{apply_binner, fit_binner};
use crate::inference::infer_exact;
use crate::learning::{train, TrainConfig, TrainExample};
use crate::model::{ModelStructure, Variant, Weights};
use crate::scene::{LabelMode, Labeling, SceneGraph, Taxonomy};
use serde::{Deserialize, Serialize};

/// Per-segment predicted / ground-truth class sets (singletons for ordinary
/// labeling, empty for unlabeled, several entries for attribute data).
pub type ClassSets = Vec<Vec<usize>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub predicted: usize,
    pub actual: usize,
    pub correct: usize,
    pub precision: f64,
    pub recall: f64,
    /// True when the class was never predicted; its precision is reported
    /// as 0 so the macro average stays a plain mean over all classes.
    pub no_predictions: bool,
}

/// Rows are ground-truth classes, columns are predicted classes plus a final
/// "unlabeled" column. Only segments with a single ground-truth label enter
/// the matrix; set-valued metrics live in `Metrics`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gt\\pred");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",UNLABELED\n");
        for (r, row) in self.counts.iter().enumerate() {
            out.push_str(&self.classes[r]);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision/recall in the usual per-class form. A prediction of class k on
/// a segment whose ground truth is unlabeled costs precision but no recall;
/// unpredicted classes contribute zero precision to the macro mean.
pub fn metrics(pred: &ClassSets, gt: &ClassSets, taxonomy: &Taxonomy) -> Result<Metrics> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted segments vs {} ground-truth segments",
            pred.len(),
            gt.len()
        )));
    }
    let k_total = taxonomy.num_classes();
    let mut predicted = vec![0usize; k_total];
    let mut actual = vec![0usize; k_total];
    let mut correct = vec![0usize; k_total];
    for (p, g) in pred.iter().zip(gt.iter()) {
        for &k in p {
            predicted[k] += 1;
            if g.contains(&k) {
                correct[k] += 1;
            }
        }
        for &k in g {
            actual[k] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..k_total)
        .map(|k| ClassMetrics {
            class: taxonomy.classes[k].clone(),
            predicted: predicted[k],
            actual: actual[k],
            correct: correct[k],
            precision: ratio(correct[k], predicted[k]),
            recall: ratio(correct[k], actual[k]),
            no_predictions: predicted[k] == 0,
        })
        .collect();

    let mut counts = vec![vec![0usize; k_total + 1]; k_total];
    for (p, g) in pred.iter().zip(gt.iter()) {
        if g.len() == 1 {
            let row = g[0];
            match p.first() {
                Some(&col) if p.len() == 1 => counts[row][col] += 1,
                None => counts[row][k_total] += 1,
                _ => {}
            }
        }
    }

    Ok(Metrics {
        micro_precision: ratio(correct.iter().sum(), predicted.iter().sum()),
        micro_recall: ratio(correct.iter().sum(), actual.iter().sum()),
        macro_precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k_total as f64,
        macro_recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k_total as f64,
        per_class,
        confusion: ConfusionMatrix { classes: taxonomy.classes.clone(), counts },
    })
}

/// The most frequent training class, used to label everything.
pub fn max_class(train_gt: &ClassSets, num_classes: usize) -> Result<usize> {
    let mut counts = vec![0usize; num_classes];
    for g in train_gt {
        for &k in g {
            counts[k] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InvalidData("no classes".into()))
}

/// Label every test segment with the most frequent training class.
pub fn max_class_baseline(train_gt: &ClassSets, test_sizes: &[usize], num_classes: usize) -> Result<Vec<ClassSets>> {
    let top = max_class(train_gt, num_classes)?;
    Ok(test_sizes.iter().map(|&n| vec![vec![top]; n]).collect())
}

/// Seeded scene-to-fold assignment: shuffled round-robin.
pub fn assign_folds(num_scenes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds == 0 || num_scenes < folds {
        return Err(Error::InvalidData(format!(
            "cannot split {num_scenes} scenes into {folds} folds"
        )));
    }
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..num_scenes).collect();
    order.shuffle(&mut crate::rng::substream(seed, "cv-fold-split"));
    let mut fold = vec![0usize; num_scenes];
    for (pos, &scene) in order.iter().enumerate() {
        fold[scene] = pos % folds;
    }
    Ok(fold)
}

/// One scene prepared for cross-validation: a graph with raw features
/// already computed (binned features are fitted per training fold) and
/// integral ground-truth labels.
pub struct CvScene {
    pub graph: SceneGraph,
    pub gt: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: Metrics,
    pub xi: f64,
    pub train_iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub mean_micro_precision: f64,
    pub mean_micro_recall: f64,
    pub mean_macro_precision: f64,
    pub mean_macro_recall: f64,
    pub std_micro_precision: f64,
}

#[derive(Debug, Clone)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub bins: usize,
    pub train: TrainConfig,
    pub inference_time_limit: std::time::Duration,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 4,
            seed: 0,
            bins: 10,
            train: TrainConfig::default(),
            inference_time_limit: std::time::Duration::from_secs(60),
        }
    }
}

/// Scene-level k-fold cross-validation: fit the binner on the training
/// folds only, train, predict test scenes with exact exactly-one inference,
/// and average the metrics.
pub fn cross_validate(
    scenes: &[CvScene],
    taxonomy: &Taxonomy,
    variant: Variant,
    config: &CvConfig,
) -> Result<CvResult> {
    let fold_of = assign_folds(scenes.len(), config.folds, config.seed)?;
    let mut folds = Vec::new();
    for fold in 0..config.folds {
        let train_graphs: Vec<&SceneGraph> = scenes
            .iter()
            .zip(fold_of.iter())
            .filter(|(_, &f)| f != fold)
            .map(|(s, _)| &s.graph)
            .collect();
        let binner = fit_binner(&train_graphs, config.bins)?;
        let structure = ModelStructure::from_binner(taxonomy.clone(), variant, &binner)?;

        let mut examples = Vec::new();
        let mut tests = Vec::new();
        for (scene, &f) in scenes.iter().zip(fold_of.iter()) {
            let mut g = scene.graph.clone();
            apply_binner(&binner, &mut g)?;
            if f == fold {
                tests.push((g, &scene.gt));
            } else {
                let labels = Labeling::from_classes(&scene.gt, taxonomy.num_classes());
                examples.push(TrainExample { graph: g, labels });
            }
        }
        let out = train(structure, &examples, &config.train)?;

        let mut pred: ClassSets = Vec::new();
        let mut gt: ClassSets = Vec::new();
        for (g, scene_gt) in &tests {
            let r = infer_exact(&out.weights, g, LabelMode::ExactlyOne, config.inference_time_limit)?;
            for i in 0..g.num_segments() {
                pred.push(r.labeling.predicted_classes(i));
                gt.push(vec![scene_gt[i]]);
            }
        }
        let m = metrics(&pred, &gt, taxonomy)?;
        folds.push(FoldResult {
            fold,
            metrics: m,
            xi: out.xi,
            train_iterations: out.history.len(),
        });
    }

    let n = folds.len() as f64;
    let mean = |f: &dyn Fn(&FoldResult) -> f64| folds.iter().map(|r| f(r)).sum::<f64>() / n;
    let mean_mp = mean(&|r| r.metrics.micro_precision);
    let var_mp = folds
        .iter()
        .map(|r| (r.metrics.micro_precision - mean_mp).powi(2))
        .sum::<f64>()
        / n;
    Ok(CvResult {
        mean_micro_precision: mean_mp,
        mean_micro_recall: mean(&|r| r.metrics.micro_recall),
        mean_macro_precision: mean(&|r| r.metrics.macro_precision),
        mean_macro_recall: mean(&|r| r.metrics.macro_recall),
        std_micro_precision: var_mp.sqrt(),
        folds,
    })
}

/// Pull predicted class sets out of an integral labeling.
pub fn labeling_to_class_sets(labeling: &Labeling) -> ClassSets {
    (0..labeling.num_segments())
        .map(|i| labeling.predicted_classes(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn taxonomy(k: usize) -> Taxonomy {
        let classes: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let objects: BTreeMap<String, String> =
            classes.iter().map(|c| (c.clone(), c.clone())).collect();
        Taxonomy::new(classes, objects).unwrap()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let tax = taxonomy(3);
        let gt: ClassSets = vec![vec![0], vec![1], vec![2], vec![1]];
        let m = metrics(&gt, &gt, &tax).unwrap();
        assert_eq!(m.micro_precision, 1.0);
        assert_eq!(m.micro_recall, 1.0);
        assert_eq!(m.macro_precision, 1.0);
        assert_eq!(m.macro_recall, 1.0);
    }

    #[test]
    fn exactly_one_mode_collapses_micro_to_accuracy() {
        let tax = taxonomy(3);
        let gt: ClassSets = vec![vec![0], vec![1], vec![2], vec![1], vec![0]];
        let pred: ClassSets = vec![vec![0], vec![2], vec![2], vec![1], vec![1]];
        let m = metrics(&pred, &gt, &tax).unwrap();
        assert_eq!(m.micro_precision, m.micro_recall);
        assert!((m.micro_precision - 3.0 / 5.0).abs() < 1e-12);
    }

    /// Hand-checked confusion matrix [[2,1,0],[0,3,0],[1,0,3]] (rows gt,
    /// cols pred): micro 8/10, per-class P (2/3, 3/4, 1), R (2/3, 1, 3/4).
    #[test]
    fn hand_confusion_matrix_reproduces_exactly() {
        let tax = taxonomy(3);
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        let matrix = [[2, 1, 0], [0, 3, 0], [1, 0, 3]];
        for (g, row) in matrix.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                for _ in 0..count {
                    gt.push(vec![g]);
                    pred.push(vec![p]);
                }
            }
        }
        let m = metrics(&pred, &gt, &tax).unwrap();
        assert!((m.micro_precision - 0.8).abs() < 1e-12);
        assert!((m.micro_recall - 0.8).abs() < 1e-12);
        let want_p = [2.0 / 3.0, 3.0 / 4.0, 1.0];
        let want_r = [2.0 / 3.0, 1.0, 3.0 / 4.0];
        for k in 0..3 {
            assert!((m.per_class[k].precision - want_p[k]).abs() < 1e-12, "precision {k}");
            assert!((m.per_class[k].recall - want_r[k]).abs() < 1e-12, "recall {k}");
        }
        // the confusion matrix itself round-trips
        for (g, row) in matrix.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                assert_eq!(m.confusion.counts[g][p], count);
            }
            assert_eq!(m.confusion.counts[g][3], 0);
        }
        // rows sum to ground-truth class counts
        for (g, row) in m.confusion.counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            assert_eq!(total, m.per_class[g].actual);
        }
    }

    #[test]
    fn max_class_baseline_hits_top_class_share() {
        let tax = taxonomy(4);
        // top class covers 2633 of 10000 segments
        let mut gt: ClassSets = Vec::new();
        for _ in 0..2633 {
            gt.push(vec![0]);
        }
        for i in 0..(10000 - 2633) {
            gt.push(vec![1 + (i % 3)]);
        }
        let pred = max_class_baseline(&gt, &[gt.len()], 4).unwrap();
        let m = metrics(&pred[0], &gt, &tax).unwrap();
        assert!((m.micro_precision - 0.2633).abs() < 1e-12);
        assert!((m.micro_recall - 0.2633).abs() < 1e-12);
    }

    #[test]
    fn max_class_macro_recall_is_one_over_k() {
        // 17 classes, top class always predicted: its recall is 1, all other
        // recalls 0, so macro recall is 1/17 = 5.88%.
        let tax = taxonomy(17);
        let mut gt: ClassSets = Vec::new();
        for k in 0..17 {
            let copies = if k == 0 { 40 } else { 10 };
            for _ in 0..copies {
                gt.push(vec![k]);
            }
        }
        let pred = max_class_baseline(&gt, &[gt.len()], 17).unwrap();
        let m = metrics(&pred[0], &gt, &tax).unwrap();
        assert!((m.macro_recall - 1.0 / 17.0).abs() < 1e-12);
        assert!((m.macro_recall * 100.0 - 5.88).abs() < 0.01);
    }

    #[test]
    fn unlabeled_gt_counts_against_precision_not_recall() {
        let tax = taxonomy(2);
        // seg0: gt c0 pred c0; seg1: gt unlabeled, wrongly claimed c0;
        // seg2: gt c1, left unlabeled
        let gt: ClassSets = vec![vec![0], vec![], vec![1]];
        let pred: ClassSets = vec![vec![0], vec![0], vec![]];
        let m = metrics(&pred, &gt, &tax).unwrap();
        assert!((m.per_class[0].precision - 0.5).abs() < 1e-12);
        assert_eq!(m.per_class[0].recall, 1.0);
        assert_eq!(m.per_class[1].recall, 0.0);
        assert!(m.per_class[1].no_predictions);
        assert!((m.micro_precision - 0.5).abs() < 1e-12);
        assert!((m.micro_recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn metrics_invariant_under_segment_permutation() {
        let tax = taxonomy(3);
        let gt: ClassSets = vec![vec![0], vec![1], vec![2], vec![1], vec![0]];
        let pred: ClassSets = vec![vec![0], vec![2], vec![2], vec![1], vec![1]];
        let m1 = metrics(&pred, &gt, &tax).unwrap();
        let perm = [4, 2, 0, 3, 1];
        let gt2: ClassSets = perm.iter().map(|&i| gt[i].clone()).collect();
        let pred2: ClassSets = perm.iter().map(|&i| pred[i].clone()).collect();
        let m2 = metrics(&pred2, &gt2, &tax).unwrap();
        assert_eq!(m1.micro_precision, m2.micro_precision);
        assert_eq!(m1.macro_recall, m2.macro_recall);
        assert_eq!(m1.confusion.counts, m2.confusion.counts);
    }

    #[test]
    fn fold_assignment_is_deterministic_and_balanced() {
        let a = assign_folds(10, 4, 7).unwrap();
        let b = assign_folds(10, 4, 7).unwrap();
        assert_eq!(a, b);
        let c = assign_folds(10, 4, 8).unwrap();
        assert_ne!(a, c, "different seeds should shuffle differently");
        let mut sizes = vec![0usize; 4];
        for &f in &a {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        assert!(assign_folds(3, 4, 0).is_err());
    }
}
