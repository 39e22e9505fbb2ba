//! Contextual search: score 3D locations for a missing object class against
//! the labeled scene.
//!
//! Each sampled location stands for a hallucinated segment of the target
//! class, connected to the labeled segments within context range. Only the
//! location-dependent feature components can differ between samples (height,
//! boundary distance, horizontal/vertical displacement, closest distance,
//! relative camera depth); everything else contributes a constant that is
//! omitted from the reported scores. The literal augmented-graph route is
//! kept alongside the fast scorer so the two can be cross-checked: their
//! scores differ exactly by that constant.

use crate::error::{Error, Result};
use crate::features::{edge_type_index, node_scalar, Binner, EdgeType, EDGE_TYPES};
use crate::geom::{horizontal, horizontal_distance, Aabb};
use crate::model::{discriminant, Weights};
use crate::scene::{DirectedFeatures, GraphEdge, LabelMode, Labeling, SceneGraph, Segment};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Regular lattice of cell centers covering the box: the cube root of
/// `n_samples` rounded up per axis (1000 gives a 10 x 10 x 10 grid). Sample
/// index order is x-major, then y, then z.
pub fn sample_grid(bbox: &Aabb, n_samples: usize) -> Result<(Vec<Vector3<f64>>, usize)> {
    if bbox.is_empty() || (0..3).any(|a| bbox.extent(a) <= 0.0) {
        return Err(Error::InvalidData("bounding box must have positive volume".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidData("need at least one sample".into()));
    }
    let m = (n_samples as f64).cbrt().ceil() as usize;
    let mut out = Vec::with_capacity(m * m * m);
    for ix in 0..m {
        for iy in 0..m {
            for iz in 0..m {
                let f = |axis: usize, i: usize| {
                    bbox.min[axis] + (i as f64 + 0.5) * bbox.extent(axis) / m as f64
                };
                out.push(Vector3::new(f(0, ix), f(1, iy), f(2, iz)));
            }
        }
    }
    Ok((out, m))
}

/// Location-dependent node features of a hallucinated segment, binned into a
/// full-width node vector (all other components zero).
pub fn location_node_features(location: &Vector3<f64>, scene_bbox: &Aabb, binner: &Binner) -> Vec<f64> {
    let mut out = vec![0.0; binner.node_binned_dim()];
    binner.bin_node_scalar_into(node_scalar::CENTROID_Z, location.z, &mut out);
    binner.bin_node_scalar_into(
        node_scalar::BOUNDARY_DIST,
        scene_bbox.horizontal_boundary_distance(location),
        &mut out,
    );
    out
}

/// Raw location-dependent edge scalars for the (hallucinated -> segment)
/// orientation; the reverse orientation flips the antisymmetric entries.
/// `camera` is the pose of the robot's current view: both depth terms use it
/// because the hallucinated segment has no capture history of its own.
fn location_edge_raw(location: &Vector3<f64>, seg: &Segment, camera: &Vector3<f64>) -> [f64; 4] {
    let c = seg.centroid_v();
    let e3 = horizontal_distance(location, &c);
    let e4 = location.z - c.z;
    let e8 = seg.distance_to_point(location);
    let e9 = horizontal(&(c - camera)).norm() - horizontal(&(location - camera)).norm();
    [e3, e4, e8, e9]
}

/// Binned per-type vectors for one orientation of a hallucinated edge; the
/// non-location types stay zero.
pub fn location_edge_features(
    location: &Vector3<f64>,
    seg: &Segment,
    camera: &Vector3<f64>,
    binner: &Binner,
    reverse: bool,
) -> Vec<Vec<f64>> {
    let [e3, mut e4, e8, mut e9] = location_edge_raw(location, seg, camera);
    if reverse {
        e4 = -e4;
        e9 = -e9;
    }
    EDGE_TYPES
        .iter()
        .map(|&ty| match ty {
            EdgeType::HorizontalDist => binner.apply_edge(ty, &[e3]),
            EdgeType::VerticalDisp => binner.apply_edge(ty, &[e4]),
            EdgeType::MinDist => binner.apply_edge(ty, &[e8]),
            EdgeType::CameraDepthDiff => binner.apply_edge(ty, &[e9]),
            _ => vec![0.0; binner.edge_binned_dim(ty)],
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchField {
    pub samples: Vec<[f64; 3]>,
    pub grid_per_axis: usize,
    pub scores: Vec<f64>,
    /// Scores shifted/scaled to [0, 1] for visualization.
    pub normalized: Vec<f64>,
    pub best_index: usize,
    /// True when no sample had any labeled neighbor: scores carry node terms
    /// only.
    pub no_context: bool,
    /// True when every sample scored identically (argmax is arbitrary and
    /// falls on the first cell).
    pub flat: bool,
}

impl SearchField {
    pub fn best_location(&self) -> [f64; 3] {
        self.samples[self.best_index]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,score,normalized\n");
        for (s, (&score, &norm)) in self.samples.iter().zip(self.scores.iter().zip(self.normalized.iter())) {
            out.push_str(&format!("{},{},{},{},{}\n", s[0], s[1], s[2], score, norm));
        }
        out
    }
}

fn resolve_labels(graph: &SceneGraph, weights: &Weights, labels: Option<&[Option<usize>]>) -> Result<Vec<Option<usize>>> {
    match labels {
        Some(l) => {
            if l.len() != graph.segments.len() {
                return Err(Error::DimensionMismatch("label list does not match graph".into()));
            }
            Ok(l.to_vec())
        }
        None => {
            let names = graph.labels.as_ref().ok_or_else(|| {
                Error::InvalidData("graph carries no labels; provide them explicitly".into())
            })?;
            names
                .iter()
                .map(|n| {
                    n.as_ref()
                        .map(|s| weights.structure().taxonomy.class_index(s))
                        .transpose()
                })
                .collect()
        }
    }
}

/// Score every grid sample for the target class and return the field with
/// its argmax (ties fall to the lowest grid index). Labeled segments within
/// context range of a sample form its neighbor set; unlabeled segments never
/// join it.
pub fn optimal_location(
    weights: &Weights,
    binner: &Binner,
    graph: &SceneGraph,
    labels: Option<&[Option<usize>]>,
    target_class: usize,
    n_samples: usize,
    camera: &Vector3<f64>,
) -> Result<SearchField> {
    use rayon::prelude::*;
    weights.check_graph(graph)?;
    let k_total = weights.structure().num_classes();
    if target_class >= k_total {
        return Err(Error::DimensionMismatch(format!(
            "class {target_class} outside 0..{k_total}"
        )));
    }
    let labels = resolve_labels(graph, weights, labels)?;
    if !labels.iter().any(|l| l.is_some()) {
        return Err(Error::InvalidData("no labeled segments to search against".into()));
    }
    let (samples, grid_per_axis) = sample_grid(&graph.scene_bbox, n_samples)?;
    let layout = weights.layout();

    let scored: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|loc| {
            let node_feat = location_node_features(loc, &graph.scene_bbox, binner);
            let mut score: f64 = weights
                .node_block(target_class)
                .iter()
                .zip(node_feat.iter())
                .map(|(a, b)| a * b)
                .sum();
            let mut had_neighbor = false;
            for (j, seg) in graph.segments.iter().enumerate() {
                let Some(label_j) = labels[j] else { continue };
                if seg.distance_to_point(loc) >= graph.context_range {
                    continue;
                }
                had_neighbor = true;
                let fwd = location_edge_features(loc, seg, camera, binner, false);
                let bwd = location_edge_features(loc, seg, camera, binner, true);
                for t in 0..EDGE_TYPES.len() {
                    if let Some(block) = weights.edge_block(t, target_class, label_j) {
                        score += block.iter().zip(fwd[t].iter()).map(|(a, b)| a * b).sum::<f64>();
                    }
                    if let Some(block) = weights.edge_block(t, label_j, target_class) {
                        score += block.iter().zip(bwd[t].iter()).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            (score, had_neighbor)
        })
        .collect();
    let _ = layout;

    let scores: Vec<f64> = scored.iter().map(|&(s, _)| s).collect();
    let no_context = !scored.iter().any(|&(_, n)| n);
    let mut best_index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best_index] {
            best_index = i;
        }
    }
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let flat = hi - lo <= 0.0;
    let normalized = scores
        .iter()
        .map(|&s| if flat { 0.0 } else { (s - lo) / (hi - lo) })
        .collect();
    Ok(SearchField {
        samples: samples.iter().map(|p| [p.x, p.y, p.z]).collect(),
        grid_per_axis,
        scores,
        normalized,
        best_index,
        no_context,
        flat,
    })
}

/// Literally append the hallucinated segment to the graph: a one-point
/// segment at the location with zeroed non-location features, connected to
/// every labeled segment within context range. Returns the augmented graph
/// and the labeling with the target class on the new node. Scoring this
/// graph with the full discriminant reproduces the fast scorer up to a
/// location-independent constant.
pub fn augment_graph(
    graph: &SceneGraph,
    weights: &Weights,
    binner: &Binner,
    labels: Option<&[Option<usize>]>,
    location: &Vector3<f64>,
    target_class: usize,
    camera: &Vector3<f64>,
) -> Result<(SceneGraph, Labeling)> {
    let labels = resolve_labels(graph, weights, labels)?;
    let k_total = weights.structure().num_classes();
    let mut g = graph.clone();
    let h = g.segments.len();
    let ray = location - camera;
    g.segments.push(Segment {
        point_indices: vec![],
        points: vec![[location.x, location.y, location.z]],
        centroid: [location.x, location.y, location.z],
        normal: [0.0, 0.0, 0.0],
        camera_ray: [ray.x, ray.y, ray.z],
        horizontal_ray: {
            let hr = horizontal(&ray);
            [hr.x, hr.y, hr.z]
        },
        eigenvalues: [0.0; 3],
        camera_index: 0,
        degenerate: true,
        bbox: Aabb { min: [location.x, location.y, location.z], max: [location.x, location.y, location.z] },
    });
    g.node_raw.push(vec![0.0; crate::features::NODE_RAW_DIM]);
    g.node_binned.push(location_node_features(location, &graph.scene_bbox, binner));

    for (j, seg) in graph.segments.iter().enumerate() {
        if labels[j].is_none() {
            continue;
        }
        let d = seg.distance_to_point(location);
        if d >= graph.context_range {
            continue;
        }
        // stored edge (j, h) with j < h: forward is the (j -> h) orientation
        g.edges.push(GraphEdge { i: j, j: h, min_distance: d });
        let fwd = location_edge_features(location, seg, camera, binner, true);
        let bwd = location_edge_features(location, seg, camera, binner, false);
        g.edge_raw.push(DirectedFeatures { forward: Vec::new(), backward: Vec::new() });
        g.edge_binned.push(DirectedFeatures { forward: fwd, backward: bwd });
    }

    let mut labeling = Labeling::zeros(LabelMode::AtMostOne, h + 1, k_total);
    for (j, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            labeling.set(j, *c, 1.0);
        }
    }
    labeling.set(h, target_class, 1.0);
    Ok((g, labeling))
}

/// Score one augmented location through the full discriminant (the slow,
/// reference route).
pub fn augmented_score(
    graph: &SceneGraph,
    weights: &Weights,
    binner: &Binner,
    labels: Option<&[Option<usize>]>,
    location: &Vector3<f64>,
    target_class: usize,
    camera: &Vector3<f64>,
) -> Result<f64> {
    let (g, labeling) = augment_graph(graph, weights, binner, labels, location, target_class, camera)?;
    discriminant(weights, &g, &labeling)
}
