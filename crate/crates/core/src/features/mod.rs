//! Raw node and edge features and their conversion to binary vectors.
//!
//! Node features per segment: HSV histogram (14), mean HSV (3), gradient
//! descriptor (31), linearness/planarness (2), scatter (1), vertical normal
//! component (1), centroid height (1), bounding-box vertical extent and
//! horizontal diagonal (2), and distance from the scene's horizontal boundary
//! (1) — 56 scalars. Edge features come in eight typesubdivided into
//! object-associative (color difference, coplanarity+convexity) and
//! non-associative (geometric arrangement) sets.

mod binning;
mod hog;
mod hsv;

pub use binning::{Binner, ScalarBinner};
pub use hog::{CameraRaster, HOG_DIM};
pub use hsv::{color_summary, rgb_to_hsv, HSV_HIST_DIM};

use crate::error::{Error, Result};
use crate::geom::{horizontal_distance, Aabb};
use crate::scene::{DirectedFeatures, Scene, SceneGraph, Segment};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub const NODE_RAW_DIM: usize = 56;

/// Offsets into the 56-scalar node layout.
pub mod node_scalar {
    pub const HSV_HIST: usize = 0; // ..14
    pub const HSV_MEAN: usize = 14; // ..17
    pub const HOG: usize = 17; // ..48
    pub const LINEARNESS: usize = 48;
    pub const PLANARNESS: usize = 49;
    pub const SCATTER: usize = 50;
    pub const NORMAL_Z: usize = 51;
    pub const CENTROID_Z: usize = 52;
    pub const EXTENT_VERTICAL: usize = 53;
    pub const EXTENT_HORIZONTAL: usize = 54;
    pub const BOUNDARY_DIST: usize = 55;
}

/// Edge feature types, in canonical storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeType {
    /// Absolute difference of mean HSV (3 scalars). Object-associative.
    ColorDiff,
    /// Coplanarity and convexity (2 scalars). Object-associative.
    SurfaceJoin,
    /// Horizontal distance between centroids.
    HorizontalDist,
    /// Vertical displacement between centroids; positive when the first
    /// segment sits on top of the second.
    VerticalDisp,
    /// Dot product of the unit normals.
    NormalDot,
    /// Difference of the normals' angles to the vertical.
    VerticalAngleDiff,
    /// Closest distance between the two point sets.
    MinDist,
    /// Relative horizontal camera depth; positive when the first segment is
    /// in front of the second.
    CameraDepthDiff,
}

pub const EDGE_TYPES: [EdgeType; 8] = [
    EdgeType::ColorDiff,
    EdgeType::SurfaceJoin,
    EdgeType::HorizontalDist,
    EdgeType::VerticalDisp,
    EdgeType::NormalDot,
    EdgeType::VerticalAngleDiff,
    EdgeType::MinDist,
    EdgeType::CameraDepthDiff,
];

pub struct EdgeTypeLayout {
    pub raw_dim: usize,
    /// Scalar offsets within the type that are already 0/1 and bypass
    /// binning.
    pub binary_scalars: &'static [usize],
    /// Whether the type belongs to the object-associative set.
    pub object_associative: bool,
}

pub fn edge_type_layout(ty: EdgeType) -> EdgeTypeLayout {
    match ty {
        EdgeType::ColorDiff => EdgeTypeLayout { raw_dim: 3, binary_scalars: &[], object_associative: true },
        EdgeType::SurfaceJoin => EdgeTypeLayout { raw_dim: 2, binary_scalars: &[1], object_associative: true },
        _ => EdgeTypeLayout { raw_dim: 1, binary_scalars: &[], object_associative: false },
    }
}

pub fn edge_type_index(ty: EdgeType) -> usize {
    EDGE_TYPES.iter().position(|&t| t == ty).unwrap()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeatureParams {
    /// Bins per non-binary scalar.
    pub bins: usize,
    /// Parallel-normal tolerance for coplanarity/convexity, degrees.
    pub alpha_deg: f64,
    /// Minimum-distance tolerance for convexity, meters.
    pub tau: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams { bins: 10, alpha_deg: 30.0, tau: 0.05 }
    }
}

/// Coplanarity of an ordered segment pair: -1 when the normals are not
/// parallel within `alpha`; otherwise the inverse of the centroid-ray
/// distance along the first normal, clamped to at most 100 (distance floor
/// of 0.01 m removes the singularity at touching coplanar segments).
pub fn coplanarity(si: &Segment, sj: &Segment, alpha_deg: f64) -> f64 {
    if si.degenerate || sj.degenerate {
        return -1.0;
    }
    let ni = si.normal_v();
    let nj = sj.normal_v();
    if ni.dot(&nj).abs() <= alpha_deg.to_radians().cos() {
        return -1.0;
    }
    let d = (si.camera_ray_v() - sj.camera_ray_v()).dot(&ni).abs();
    1.0 / d.max(0.01)
}

/// 1 when the two adjoined segments form a convex shape: they must be within
/// `tau` of each other, and either both normals point away from the other
/// segment's centroid ray or the normals are far from parallel.
pub fn convexity(si: &Segment, sj: &Segment, min_distance: f64, tau: f64, alpha_deg: f64) -> f64 {
    if si.degenerate || sj.degenerate {
        return 0.0;
    }
    if min_distance >= tau {
        return 0.0;
    }
    let ni = si.normal_v();
    let nj = sj.normal_v();
    let d_ij = sj.camera_ray_v() - si.camera_ray_v();
    let convex_dot = ni.dot(&d_ij) <= 0.0 && nj.dot(&(-d_ij)) <= 0.0;
    let bent = ni.dot(&nj) <= alpha_deg.to_radians().cos();
    if convex_dot || bent {
        1.0
    } else {
        0.0
    }
}

/// Reusable per-scene state for feature extraction.
pub struct FeatureContext {
    pub scene_bbox: Aabb,
    rasters: Vec<Option<CameraRaster>>,
}

impl FeatureContext {
    pub fn new(scene: &Scene) -> FeatureContext {
        let rasters = (0..scene.cameras.len())
            .map(|c| CameraRaster::build(scene, c))
            .collect();
        FeatureContext { scene_bbox: scene.bbox(), rasters }
    }

    /// Skip the raster construction when node features will be injected.
    pub fn without_rasters(scene: &Scene) -> FeatureContext {
        FeatureContext { scene_bbox: scene.bbox(), rasters: Vec::new() }
    }
}

/// The 56 raw node scalars for one segment. Degenerate segments get zeroed
/// eigen- and normal-derived shape scalars; position and extent scalars stay.
pub fn node_features_raw_with(scene: &Scene, segment: &Segment, ctx: &FeatureContext) -> Vec<f64> {
    let mut out = vec![0.0; NODE_RAW_DIM];
    let (hist, mean) = color_summary(segment.point_indices.iter().map(|&i| scene.points[i].color));
    out[node_scalar::HSV_HIST..node_scalar::HSV_HIST + HSV_HIST_DIM].copy_from_slice(&hist);
    out[node_scalar::HSV_MEAN..node_scalar::HSV_MEAN + 3].copy_from_slice(&mean);

    if let Some(Some(raster)) = ctx.rasters.get(segment.camera_index) {
        let pts: Vec<Vector3<f64>> = segment.points.iter().map(|p| Vector3::from(*p)).collect();
        let hog = raster.segment_descriptor(&pts);
        out[node_scalar::HOG..node_scalar::HOG + HOG_DIM].copy_from_slice(&hog);
    }

    if !segment.degenerate {
        let [small, mid, large] = segment.eigenvalues;
        out[node_scalar::LINEARNESS] = large - mid;
        out[node_scalar::PLANARNESS] = mid - small;
        out[node_scalar::SCATTER] = small;
        out[node_scalar::NORMAL_Z] = segment.normal[2];
    }
    out[node_scalar::CENTROID_Z] = segment.centroid[2];
    out[node_scalar::EXTENT_VERTICAL] = segment.bbox.extent(2);
    out[node_scalar::EXTENT_HORIZONTAL] =
        (segment.bbox.extent(0).powi(2) + segment.bbox.extent(1).powi(2)).sqrt();
    out[node_scalar::BOUNDARY_DIST] = ctx
        .scene_bbox
        .horizontal_boundary_distance(&segment.centroid_v());
    out
}

pub fn node_features_raw(scene: &Scene, segment: &Segment) -> Vec<f64> {
    node_features_raw_with(scene, segment, &FeatureContext::new(scene))
}

/// Raw edge feature vectors for the (i, j) orientation, one per type.
/// `mean_hsv_*` are the already-computed mean-HSV node scalars.
pub fn edge_features_raw(
    si: &Segment,
    sj: &Segment,
    min_distance: f64,
    mean_hsv_i: &[f64],
    mean_hsv_j: &[f64],
    params: &FeatureParams,
) -> Vec<Vec<f64>> {
    let ci = si.centroid_v();
    let cj = sj.centroid_v();
    let color: Vec<f64> = (0..3).map(|c| (mean_hsv_i[c] - mean_hsv_j[c]).abs()).collect();
    let surface = vec![
        coplanarity(si, sj, params.alpha_deg),
        convexity(si, sj, min_distance, params.tau, params.alpha_deg),
    ];
    let normal_dot = if si.degenerate || sj.degenerate {
        0.0
    } else {
        si.normal_v().dot(&sj.normal_v())
    };
    vec![
        color,
        surface,
        vec![horizontal_distance(&ci, &cj)],
        vec![ci.z - cj.z],
        vec![normal_dot],
        vec![si.normal[2].clamp(-1.0, 1.0).acos() - sj.normal[2].clamp(-1.0, 1.0).acos()],
        vec![min_distance],
        vec![sj.horizontal_ray_v().norm() - si.horizontal_ray_v().norm()],
    ]
}

/// Fill `graph.node_raw` and `graph.edge_raw`. Pass `node_override` to inject
/// precomputed node features (bypassing the raster descriptor); it must have
/// one 56-vector per segment.
pub fn compute_raw_features(
    scene: &Scene,
    graph: &mut SceneGraph,
    params: &FeatureParams,
    node_override: Option<Vec<Vec<f64>>>,
) -> Result<()> {
    let node_raw = match node_override {
        Some(rows) => {
            if rows.len() != graph.segments.len() || rows.iter().any(|r| r.len() != NODE_RAW_DIM) {
                return Err(Error::DimensionMismatch(format!(
                    "injected node features must be {} x {NODE_RAW_DIM}",
                    graph.segments.len()
                )));
            }
            rows
        }
        None => {
            let ctx = FeatureContext::new(scene);
            graph
                .segments
                .iter()
                .map(|s| node_features_raw_with(scene, s, &ctx))
                .collect()
        }
    };

    let edge_raw: Vec<DirectedFeatures> = graph
        .edges
        .iter()
        .map(|e| {
            let (si, sj) = (&graph.segments[e.i], &graph.segments[e.j]);
            let mi = &node_raw[e.i][node_scalar::HSV_MEAN..node_scalar::HSV_MEAN + 3];
            let mj = &node_raw[e.j][node_scalar::HSV_MEAN..node_scalar::HSV_MEAN + 3];
            DirectedFeatures {
                forward: edge_features_raw(si, sj, e.min_distance, mi, mj, params),
                backward: edge_features_raw(sj, si, e.min_distance, mj, mi, params),
            }
        })
        .collect();

    graph.node_raw = node_raw;
    graph.edge_raw = edge_raw;
    Ok(())
}

/// Fit a binner over the raw features of a set of graphs (training folds
/// only; the same binner is reused verbatim at test time).
pub fn fit_binner(graphs: &[&SceneGraph], bins: usize) -> Result<Binner> {
    let mut node_cols = vec![Vec::new(); NODE_RAW_DIM];
    let mut edge_cols: Vec<Vec<Vec<f64>>> = EDGE_TYPES
        .iter()
        .map(|&t| vec![Vec::new(); edge_type_layout(t).raw_dim])
        .collect();
    for g in graphs {
        if g.node_raw.is_empty() {
            return Err(Error::InvalidData("graph has no raw features; featurize first".into()));
        }
        for row in &g.node_raw {
            for (s, &v) in row.iter().enumerate() {
                node_cols[s].push(v);
            }
        }
        for e in &g.edge_raw {
            for dir in [&e.forward, &e.backward] {
                for (t, vals) in dir.iter().enumerate() {
                    for (s, &v) in vals.iter().enumerate() {
                        edge_cols[t][s].push(v);
                    }
                }
            }
        }
    }
    if edge_cols[0][0].is_empty() {
        // No edges anywhere in the dataset: fit degenerate edge binners on a
        // single zero so the layout stays well-formed.
        for cols in edge_cols.iter_mut() {
            for col in cols.iter_mut() {
                col.push(0.0);
            }
        }
    }
    Binner::fit(&node_cols, &edge_cols, bins)
}

/// Apply a fitted binner to a graph, filling the binned vectors.
pub fn apply_binner(binner: &Binner, graph: &mut SceneGraph) -> Result<()> {
    if graph.node_raw.is_empty() {
        return Err(Error::InvalidData("graph has no raw features; featurize first".into()));
    }
    graph.node_binned = graph.node_raw.iter().map(|r| binner.apply_node(r)).collect();
    graph.edge_binned = graph
        .edge_raw
        .iter()
        .map(|e| DirectedFeatures {
            forward: EDGE_TYPES
                .iter()
                .enumerate()
                .map(|(t, &ty)| binner.apply_edge(ty, &e.forward[t]))
                .collect(),
            backward: EDGE_TYPES
                .iter()
                .enumerate()
                .map(|(t, &ty)| binner.apply_edge(ty, &e.backward[t]))
                .collect(),
        })
        .collect();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_graph, segment_geometry, ScenePoint};

    fn grid_patch(
        origin: [f64; 3],
        du: [f64; 3],
        dv: [f64; 3],
        n: usize,
        color: [f64; 3],
        cam: usize,
    ) -> Vec<ScenePoint> {
        let mut pts = Vec::new();
        for iu in 0..n {
            for iv in 0..n {
                let p = [
                    origin[0] + du[0] * iu as f64 + dv[0] * iv as f64,
                    origin[1] + du[1] * iu as f64 + dv[1] * iv as f64,
                    origin[2] + du[2] * iu as f64 + dv[2] * iv as f64,
                ];
                pts.push(ScenePoint { position: p, color, camera_index: cam });
            }
        }
        pts
    }

    fn one_segment_scene(points: Vec<ScenePoint>, cameras: Vec<[f64; 3]>) -> (Scene, Segment) {
        let scene = Scene { name: None, points, cameras };
        let idx: Vec<usize> = (0..scene.points.len()).collect();
        let seg = segment_geometry(&scene, &idx).unwrap();
        (scene, seg)
    }

    #[test]
    fn horizontal_table_has_vertical_normal_and_height() {
        let pts = grid_patch([0.0, 0.0, 0.7], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 10, [0.5; 3], 0);
        let (scene, seg) = one_segment_scene(pts, vec![[0.25, 0.25, 2.0]]);
        let raw = node_features_raw(&scene, &seg);
        assert!((raw[node_scalar::NORMAL_Z] - 1.0).abs() < 1e-9);
        assert!((raw[node_scalar::CENTROID_Z] - 0.7).abs() < 1e-9);
        assert!(raw[node_scalar::EXTENT_VERTICAL].abs() < 1e-9);
        let want_diag = (0.45f64.powi(2) * 2.0).sqrt();
        assert!((raw[node_scalar::EXTENT_HORIZONTAL] - want_diag).abs() < 1e-9);
    }

    #[test]
    fn pure_red_segment_color_features() {
        let pts = grid_patch([0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 5, [1.0, 0.0, 0.0], 0);
        let (scene, seg) = one_segment_scene(pts, vec![[0.1, 0.1, 1.0]]);
        let raw = node_features_raw(&scene, &seg);
        assert_eq!(raw[node_scalar::HSV_HIST], 1.0); // all mass in hue bin 0
        assert_eq!(&raw[node_scalar::HSV_MEAN..node_scalar::HSV_MEAN + 3], &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn degenerate_segment_zeroes_shape_scalars() {
        let pts: Vec<ScenePoint> = (0..5)
            .map(|i| ScenePoint { position: [i as f64 * 0.1, 0.0, 0.4], color: [0.5; 3], camera_index: 0 })
            .collect();
        let (scene, seg) = one_segment_scene(pts, vec![[0.0, 0.0, 2.0]]);
        assert!(seg.degenerate);
        let raw = node_features_raw(&scene, &seg);
        assert_eq!(raw[node_scalar::LINEARNESS], 0.0);
        assert_eq!(raw[node_scalar::PLANARNESS], 0.0);
        assert_eq!(raw[node_scalar::SCATTER], 0.0);
        assert_eq!(raw[node_scalar::NORMAL_Z], 0.0);
        assert_eq!(raw[node_scalar::CENTROID_Z], 0.4);
    }

    fn flat_segment_at(z: f64, xy: [f64; 2], cam: [f64; 3]) -> (Scene, Segment) {
        let pts = grid_patch(
            [xy[0], xy[1], z],
            [0.05, 0.0, 0.0],
            [0.0, 0.05, 0.0],
            5,
            [0.5; 3],
            0,
        );
        one_segment_scene(pts, vec![cam])
    }

    #[test]
    fn coplanarity_branches() {
        // Perpendicular normals: dot = 0 <= cos 30 -> -1.
        let (_, flat) = flat_segment_at(0.0, [0.0, 0.0], [0.1, 0.1, 2.0]);
        let wall_pts = grid_patch([1.0, 0.0, 0.0], [0.0, 0.05, 0.0], [0.0, 0.0, 0.05], 5, [0.5; 3], 0);
        let (_, wall) = one_segment_scene(wall_pts, vec![[3.0, 0.1, 0.1]]);
        assert_eq!(coplanarity(&flat, &wall, 30.0), -1.0);

        // Parallel planes offset 0.5 along the normal: 1 / 0.5 = 2.
        // Same camera, so the ray difference equals the centroid difference.
        let scene_pts = [
            grid_patch([0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 5, [0.5; 3], 0),
            grid_patch([0.0, 0.0, 0.5], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 5, [0.5; 3], 0),
        ]
        .concat();
        let scene = Scene { name: None, points: scene_pts, cameras: vec![[0.1, 0.1, 3.0]] };
        let a = segment_geometry(&scene, &(0..25).collect::<Vec<_>>()).unwrap();
        let b = segment_geometry(&scene, &(25..50).collect::<Vec<_>>()).unwrap();
        assert!((coplanarity(&a, &b, 30.0) - 2.0).abs() < 1e-9);

        // Truly coplanar: clamped at 100.
        let scene_pts = [
            grid_patch([0.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 5, [0.5; 3], 0),
            grid_patch([1.0, 0.0, 0.0], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 5, [0.5; 3], 0),
        ]
        .concat();
        let scene = Scene { name: None, points: scene_pts, cameras: vec![[0.5, 0.1, 3.0]] };
        let a = segment_geometry(&scene, &(0..25).collect::<Vec<_>>()).unwrap();
        let b = segment_geometry(&scene, &(25..50).collect::<Vec<_>>()).unwrap();
        assert_eq!(coplanarity(&a, &b, 30.0), 100.0);
    }

    #[test]
    fn convexity_branches() {
        // Floor and adjoining wall: perpendicular normals satisfy the bent
        // clause when the segments are close enough.
        let pts = [
            grid_patch([0.0, 0.0, 0.0], [0.04, 0.0, 0.0], [0.0, 0.04, 0.0], 6, [0.5; 3], 0),
            grid_patch([0.0, 0.0, 0.04], [0.0, 0.04, 0.0], [0.0, 0.0, 0.04], 6, [0.5; 3], 0),
        ]
        .concat();
        let scene = Scene { name: None, points: pts, cameras: vec![[1.0, 0.1, 1.0]] };
        let floor = segment_geometry(&scene, &(0..36).collect::<Vec<_>>()).unwrap();
        let wall = segment_geometry(&scene, &(36..72).collect::<Vec<_>>()).unwrap();
        let dmin = {
            let mut d = f64::INFINITY;
            for a in &floor.points {
                for b in &wall.points {
                    d = d.min((Vector3::from(*a) - Vector3::from(*b)).norm());
                }
            }
            d
        };
        assert!(dmin < 0.05);
        assert_eq!(convexity(&floor, &wall, dmin, 0.05, 30.0), 1.0);
        // Same pair with dmin = 2 tau: distance gate shuts.
        assert_eq!(convexity(&floor, &wall, 0.1, 0.05, 30.0), 0.0);

        // Convex ridge: two tilted planes whose normals lean away from each
        // other; both displacement dot products are <= 0.
        let n = 6;
        let mut pts = Vec::new();
        for iu in 0..n {
            for iv in 0..n {
                let u = iu as f64 * 0.04;
                // left face rises toward the ridge at x = 0
                pts.push(ScenePoint {
                    position: [-0.2 + u * 0.8, iv as f64 * 0.04, u * 0.6],
                    color: [0.5; 3],
                    camera_index: 0,
                });
            }
        }
        for iu in 0..n {
            for iv in 0..n {
                let u = iu as f64 * 0.04;
                pts.push(ScenePoint {
                    position: [0.01 + u * 0.8, iv as f64 * 0.04, 0.12 - u * 0.6],
                    color: [0.5; 3],
                    camera_index: 0,
                });
            }
        }
        let scene = Scene { name: None, points: pts, cameras: vec![[0.0, 0.1, 3.0]] };
        let left = segment_geometry(&scene, &(0..36).collect::<Vec<_>>()).unwrap();
        let right = segment_geometry(&scene, &(36..72).collect::<Vec<_>>()).unwrap();
        let d_ij = right.camera_ray_v() - left.camera_ray_v();
        assert!(left.normal_v().dot(&d_ij) <= 0.0);
        assert!(right.normal_v().dot(&(-d_ij)) <= 0.0);
        assert_eq!(convexity(&left, &right, 0.02, 0.05, 30.0), 1.0);
    }

    #[test]
    fn edge_feature_identity_and_direction_cases() {
        // Monitor-like patch whose centroid sits 0.3 above the table patch.
        let pts = [
            grid_patch([0.0, 0.0, 0.7], [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 5, [0.4, 0.4, 0.4], 0),
            grid_patch([0.05, 0.05, 0.9], [0.05, 0.0, 0.0], [0.0, 0.0, 0.05], 5, [0.4, 0.4, 0.4], 0),
        ]
        .concat();
        let scene = Scene { name: None, points: pts, cameras: vec![[0.1, -2.0, 1.0]] };
        let graph = build_graph(
            &scene,
            &[(0..25).collect::<Vec<_>>(), (25..50).collect::<Vec<_>>()],
            2.0,
        )
        .unwrap();
        let (table, monitor) = (&graph.segments[0], &graph.segments[1]);
        let params = FeatureParams::default();
        let fwd = edge_features_raw(
            monitor,
            table,
            graph.edges[0].min_distance,
            &[0.0, 0.0, 0.4],
            &[0.0, 0.0, 0.4],
            &params,
        );
        let e4 = fwd[edge_type_index(EdgeType::VerticalDisp)][0];
        assert!((e4 - 0.3).abs() < 1e-9, "monitor above table: {e4}");
        // identical segments: zero color diff, zero horizontal distance, unit dot
        let same = edge_features_raw(table, table, 0.0, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], &params);
        assert_eq!(same[edge_type_index(EdgeType::ColorDiff)], vec![0.0, 0.0, 0.0]);
        assert_eq!(same[edge_type_index(EdgeType::HorizontalDist)], vec![0.0]);
        assert!((same[edge_type_index(EdgeType::NormalDot)][0] - 1.0).abs() < 1e-9);
        assert_eq!(same[edge_type_index(EdgeType::VerticalDisp)], vec![0.0]);
    }

    #[test]
    fn directional_antisymmetry_and_symmetry() {
        use rand::Rng;
        let mut rng = crate::rng::substream(31, "edge-sym");
        for _ in 0..10 {
            let o1 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
            let o2 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0)];
            let pts = [
                grid_patch(o1, [0.05, 0.0, 0.0], [0.0, 0.05, 0.0], 4, [0.2, 0.5, 0.7], 0),
                grid_patch(o2, [0.05, 0.0, 0.01], [0.0, 0.05, 0.0], 4, [0.7, 0.2, 0.1], 0),
            ]
            .concat();
            let scene = Scene { name: None, points: pts, cameras: vec![[0.0, 0.0, 3.0]] };
            let a = segment_geometry(&scene, &(0..16).collect::<Vec<_>>()).unwrap();
            let b = segment_geometry(&scene, &(16..32).collect::<Vec<_>>()).unwrap();
            let params = FeatureParams::default();
            let mi = [0.1, 0.5, 0.9];
            let mj = [0.3, 0.2, 0.8];
            let f = edge_features_raw(&a, &b, 0.1, &mi, &mj, &params);
            let g = edge_features_raw(&b, &a, 0.1, &mj, &mi, &params);
            let t = edge_type_index;
            assert!((f[t(EdgeType::VerticalDisp)][0] + g[t(EdgeType::VerticalDisp)][0]).abs() < 1e-12);
            assert!((f[t(EdgeType::CameraDepthDiff)][0] + g[t(EdgeType::CameraDepthDiff)][0]).abs() < 1e-12);
            assert_eq!(f[t(EdgeType::HorizontalDist)], g[t(EdgeType::HorizontalDist)]);
            assert_eq!(f[t(EdgeType::NormalDot)], g[t(EdgeType::NormalDot)]);
            assert_eq!(f[t(EdgeType::MinDist)], g[t(EdgeType::MinDist)]);
            assert_eq!(f[t(EdgeType::ColorDiff)], g[t(EdgeType::ColorDiff)]);
            let cop_f = f[t(EdgeType::SurfaceJoin)][0];
            assert!(cop_f == -1.0 || (cop_f > 0.0 && cop_f <= 100.0));
            let cvx = f[t(EdgeType::SurfaceJoin)][1];
            assert!(cvx == 0.0 || cvx == 1.0);
        }
    }

    #[test]
    fn min_distance_matches_brute_force_on_random_pairs() {
        use rand::Rng;
        let mut rng = crate::rng::substream(37, "edge-dmin");
        let mut pts = Vec::new();
        for _ in 0..2 {
            let cx = rng.gen_range(-0.5..0.5);
            for _ in 0..30 {
                pts.push(ScenePoint {
                    position: [
                        cx + rng.gen_range(-0.3..0.3),
                        rng.gen_range(-0.3..0.3),
                        rng.gen_range(0.0..0.6),
                    ],
                    color: [0.5; 3],
                    camera_index: 0,
                });
            }
        }
        let scene = Scene { name: None, points: pts, cameras: vec![[0.0, 0.0, 3.0]] };
        let segs = vec![(0..30).collect::<Vec<_>>(), (30..60).collect::<Vec<_>>()];
        let graph = build_graph(&scene, &segs, 5.0).unwrap();
        assert_eq!(graph.edges.len(), 1);
        let mut want = f64::INFINITY;
        for &a in &segs[0] {
            for &b in &segs[1] {
                want = want.min((scene.points[a].pos() - scene.points[b].pos()).norm());
            }
        }
        assert!((graph.edges[0].min_distance - want).abs() < 1e-12);
    }

    /// Horizontal rigid motions of scene + cameras leave every raw feature
    /// unchanged (rotations by multiples of 90 degrees keep the axis-aligned
    /// boxes exact).
    #[test]
    fn features_invariant_under_horizontal_rigid_motion() {
        use rand::Rng;
        let mut rng = crate::rng::substream(41, "invariance");
        let mut pts = Vec::new();
        for _ in 0..3 {
            let o = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(0.0..0.8)];
            pts.extend(grid_patch(
                o,
                [0.04, 0.0, 0.0],
                [0.0, 0.03, 0.02],
                6,
                [rng.gen(), rng.gen(), rng.gen()],
                0,
            ));
        }
        let scene = Scene { name: None, points: pts, cameras: vec![[0.2, -1.5, 1.2]] };
        let segs: Vec<Vec<usize>> = (0..3).map(|s| (s * 36..(s + 1) * 36).collect()).collect();
        let mut g1 = build_graph(&scene, &segs, 5.0).unwrap();
        compute_raw_features(&scene, &mut g1, &FeatureParams::default(), None).unwrap();

        // rotate 90 degrees about z and translate
        let rot = |p: [f64; 3]| [-p[1] + 2.0, p[0] - 1.0, p[2]];
        let scene2 = Scene {
            name: None,
            points: scene
                .points
                .iter()
                .map(|p| ScenePoint { position: rot(p.position), color: p.color, camera_index: p.camera_index })
                .collect(),
            cameras: scene.cameras.iter().map(|&c| rot(c)).collect(),
        };
        let mut g2 = build_graph(&scene2, &segs, 5.0).unwrap();
        compute_raw_features(&scene2, &mut g2, &FeatureParams::default(), None).unwrap();

        for (a, b) in g1.node_raw.iter().zip(g2.node_raw.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-7, "node feature moved: {x} vs {y}");
            }
        }
        for (ea, eb) in g1.edge_raw.iter().zip(g2.edge_raw.iter()) {
            for (ta, tb) in ea.forward.iter().zip(eb.forward.iter()) {
                for (x, y) in ta.iter().zip(tb.iter()) {
                    assert!((x - y).abs() < 1e-7, "edge feature moved: {x} vs {y}");
                }
            }
        }
    }
}
