use crate::error::{Error, Result};
use crate::geom::Aabb;
use crate::scene::{segment_geometry, Scene, Segment};
use crate::spatial::PointIndex;
use serde::{Deserialize, Serialize};

/// Undirected proximity edge, stored once with `i < j`. `min_distance` is the
/// exact closest distance between the two point sets and is kept because
/// several edge features reuse it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub min_distance: f64,
}

/// Feature vectors for one edge direction, one inner vector per edge feature
/// type (in the canonical order defined by the features module).
pub type TypeVectors = Vec<Vec<f64>>;

/// Both orientations of an edge's features. Some scalars are directional
/// (vertical displacement, relative camera depth, coplanarity), so the two
/// orientations are stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedFeatures {
    /// Features for the (i, j) orientation.
    pub forward: TypeVectors,
    /// Features for the (j, i) orientation.
    pub backward: TypeVectors,
}

/// Segments as vertices, proximity edges, and (after featurization) the raw
/// and binned feature vectors the model consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub segments: Vec<Segment>,
    pub edges: Vec<GraphEdge>,
    pub context_range: f64,
    /// Bounding box of the whole scene the graph was built from.
    pub scene_bbox: Aabb,
    pub node_raw: Vec<Vec<f64>>,
    pub node_binned: Vec<Vec<f64>>,
    pub edge_raw: Vec<DirectedFeatures>,
    pub edge_binned: Vec<DirectedFeatures>,
    /// Optional per-segment class names (ground truth or predictions).
    pub labels: Option<Vec<Option<String>>>,
}

impl SceneGraph {
    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges.iter().any(|e| e.i == a && e.j == b)
    }

    /// Neighbor segment indices of `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.i == i {
                out.push(e.j);
            } else if e.j == i {
                out.push(e.i);
            }
        }
        out
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }

    pub fn load(path: &std::path::Path) -> Result<SceneGraph> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }
}

/// Build the proximity graph over the given segments: an edge connects two
/// segments exactly when some point of one lies strictly closer than
/// `context_range` to some point of the other. Feature vectors are left
/// empty; the features module fills them.
pub fn build_graph(scene: &Scene, segments: &[Vec<usize>], context_range: f64) -> Result<SceneGraph> {
    if context_range <= 0.0 {
        return Err(Error::InvalidData("context_range must be positive".into()));
    }
    let mut owner = vec![usize::MAX; scene.points.len()];
    for (sid, idxs) in segments.iter().enumerate() {
        if idxs.is_empty() {
            return Err(Error::InvalidData(format!("segment {sid} is empty")));
        }
        for &p in idxs {
            if p >= scene.points.len() {
                return Err(Error::InvalidData(format!(
                    "segment {sid} references point {p} outside the scene"
                )));
            }
            if owner[p] != usize::MAX {
                return Err(Error::InvalidData(format!(
                    "point {p} belongs to segments {} and {sid}",
                    owner[p]
                )));
            }
            owner[p] = sid;
        }
    }

    let positions = scene.positions();
    let index = PointIndex::new(&positions, context_range.max(1e-6));
    let mut min_dist: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    for (p, pos) in positions.iter().enumerate() {
        let sp = owner[p];
        if sp == usize::MAX {
            continue;
        }
        for q in index.within_radius(pos, context_range) {
            let sq = owner[q];
            if sq == usize::MAX || sq == sp {
                continue;
            }
            let key = (sp.min(sq), sp.max(sq));
            let d = (positions[p] - positions[q]).norm();
            let entry = min_dist.entry(key).or_insert(f64::INFINITY);
            if d < *entry {
                *entry = d;
            }
        }
    }

    let mut edges: Vec<GraphEdge> = min_dist
        .into_iter()
        .filter(|&(_, d)| d < context_range)
        .map(|((i, j), min_distance)| GraphEdge { i, j, min_distance })
        .collect();
    edges.sort_by_key(|e| (e.i, e.j));

    let segs = segments
        .iter()
        .map(|idxs| segment_geometry(scene, idxs))
        .collect::<Result<Vec<_>>>()?;

    Ok(SceneGraph {
        segments: segs,
        edges,
        context_range,
        scene_bbox: scene.bbox(),
        node_raw: Vec::new(),
        node_binned: Vec::new(),
        edge_raw: Vec::new(),
        edge_binned: Vec::new(),
        labels: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ScenePoint;
    use nalgebra::Vector3;

    fn scene_from_positions(groups: &[Vec<[f64; 3]>]) -> (Scene, Vec<Vec<usize>>) {
        let mut points = Vec::new();
        let mut segments = Vec::new();
        for g in groups {
            let start = points.len();
            for p in g {
                points.push(ScenePoint {
                    position: *p,
                    color: [0.2, 0.4, 0.6],
                    camera_index: 0,
                });
            }
            segments.push((start..points.len()).collect());
        }
        (
            Scene {
                name: None,
                points,
                cameras: vec![[0.0, 0.0, 3.0]],
            },
            segments,
        )
    }

    #[test]
    fn edge_exists_within_range_and_not_beyond() {
        let (scene, segs) = scene_from_positions(&[
            vec![[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]],
            vec![[0.3, 0.0, 0.0], [0.4, 0.0, 0.0], [0.3, 0.1, 0.0]],
        ]);
        // closest pair is 0.2 m apart
        let g = build_graph(&scene, &segs, 0.3).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert!((g.edges[0].min_distance - 0.2).abs() < 1e-12);

        let g2 = build_graph(&scene, &segs, 0.1).unwrap();
        assert!(g2.edges.is_empty());
    }

    #[test]
    fn strictly_less_than_range() {
        let (scene, segs) = scene_from_positions(&[
            vec![[0.0, 0.0, 0.0], [0.0, 0.1, 0.0], [0.1, 0.0, 0.0]],
            vec![[0.2, 0.0, 0.0], [0.2, 0.1, 0.0], [0.3, 0.0, 0.0]],
        ]);
        // closest distance exactly equals the range: no edge
        let g = build_graph(&scene, &segs, 0.1).unwrap();
        assert!(g.edges.is_empty());
    }

    #[test]
    fn rejects_overlapping_segments_and_bad_range() {
        let (scene, mut segs) = scene_from_positions(&[
            vec![[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [0.0, 0.1, 0.0]],
            vec![[1.0, 0.0, 0.0], [1.1, 0.0, 0.0], [1.0, 0.1, 0.0]],
        ]);
        assert!(build_graph(&scene, &segs, 0.0).is_err());
        segs[1][0] = segs[0][0];
        assert!(build_graph(&scene, &segs, 0.3).is_err());
    }

    #[test]
    fn random_segments_match_brute_force_edge_oracle() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for trial in 0..10 {
            let groups: Vec<Vec<[f64; 3]>> = (0..10)
                .map(|_| {
                    let center = Vector3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    );
                    (0..rng.gen_range(3..12))
                        .map(|_| {
                            let p = center
                                + Vector3::new(
                                    rng.gen_range(-0.2..0.2),
                                    rng.gen_range(-0.2..0.2),
                                    rng.gen_range(-0.2..0.2),
                                );
                            [p.x, p.y, p.z]
                        })
                        .collect()
                })
                .collect();
            let (scene, segs) = scene_from_positions(&groups);
            let range = rng.gen_range(0.2..0.8);
            let g = build_graph(&scene, &segs, range).unwrap();

            // O(n^2 * points^2) oracle over all segment pairs.
            let mut want = Vec::new();
            for i in 0..segs.len() {
                for j in i + 1..segs.len() {
                    let mut dmin = f64::INFINITY;
                    for &a in &segs[i] {
                        for &b in &segs[j] {
                            let d = (scene.points[a].pos() - scene.points[b].pos()).norm();
                            dmin = dmin.min(d);
                        }
                    }
                    if dmin < range {
                        want.push((i, j, dmin));
                    }
                }
            }
            let got: Vec<(usize, usize, f64)> =
                g.edges.iter().map(|e| (e.i, e.j, e.min_distance)).collect();
            assert_eq!(got.len(), want.len(), "trial {trial}");
            for (g, w) in got.iter().zip(want.iter()) {
                assert_eq!((g.0, g.1), (w.0, w.1));
                assert!((g.2 - w.2).abs() < 1e-12);
            }
        }
    }
}
