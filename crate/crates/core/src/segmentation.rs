//! Region-growing over-segmentation.
//!
//! Seeds are visited in a seeded random order. A segment grows by absorbing
//! points whose distance to the segment point that reached them is below a
//! camera-distance-proportional threshold and whose local normal deviates by
//! less than an angle threshold. The result intentionally over-segments:
//! downstream labeling is robust to that.

use crate::error::{Error, Result};
use crate::scene::segment::{covariance_eigen, orient_normal};
use crate::scene::Scene;
use crate::spatial::PointIndex;
use nalgebra::Vector3;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy)]
pub struct SegParams {
    /// Distance threshold = factor x candidate's distance from its camera.
    pub distance_factor: f64,
    /// Maximum angle between local normals, degrees, in (0, 90].
    pub angle_threshold_deg: f64,
    /// Segments smaller than this become noise (id -1).
    pub min_points: usize,
    /// Neighborhood size for local normal estimation.
    pub normal_neighborhood: usize,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            distance_factor: 0.1,
            angle_threshold_deg: 30.0,
            min_points: 50,
            normal_neighborhood: 12,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        if self.distance_factor <= 0.0
            || self.angle_threshold_deg <= 0.0
            || self.angle_threshold_deg > 90.0
            || self.min_points == 0
            || self.normal_neighborhood == 0
        {
            return Err(Error::InvalidData(
                "segmentation parameters must be positive (angle in (0, 90])".into(),
            ));
        }
        Ok(())
    }
}

/// Smallest-eigenvector normal of each point's k-nearest neighborhood,
/// oriented toward the point's capturing camera.
pub fn estimate_local_normals(scene: &Scene, k: usize) -> Result<Vec<Vector3<f64>>> {
    if k < 3 {
        return Err(Error::InvalidData("normal estimation needs k >= 3".into()));
    }
    if scene.points.len() < k {
        return Err(Error::InvalidData(format!(
            "scene has {} points, fewer than the {k} needed for normals",
            scene.points.len()
        )));
    }
    let positions = scene.positions();
    let cell = neighborhood_cell(&positions, k);
    let index = PointIndex::new(&positions, cell);
    let normals: Vec<Vector3<f64>> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nbrs = index.nearest(p, k);
            let pts: Vec<Vector3<f64>> = nbrs.iter().map(|&j| positions[j]).collect();
            let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
            let (vals, vecs) = covariance_eigen(&pts, &centroid);
            if vals[2] <= 0.0 {
                return Vector3::zeros();
            }
            let ray = p - scene.camera_pos(scene.points[i].camera_index);
            orient_normal(vecs[0].normalize(), &ray)
        })
        .collect();
    Ok(normals)
}

/// Pick a grid cell size so a typical k-neighborhood spans a few cells.
fn neighborhood_cell(positions: &[Vector3<f64>], k: usize) -> f64 {
    let bbox = crate::geom::Aabb::from_points(positions.iter());
    let volume: f64 = (0..3).map(|a| bbox.extent(a).max(1e-3)).product();
    let per_point = volume / positions.len() as f64;
    (per_point * k as f64).cbrt().max(1e-3)
}

/// Assign each point a segment id (-1 = noise). Deterministic for a fixed
/// seed.
pub fn segment_cloud(scene: &Scene, params: &SegParams, seed: u64) -> Result<Vec<i64>> {
    params.validate()?;
    if scene.points.is_empty() {
        return Err(Error::InvalidData("cannot segment an empty scene".into()));
    }
    let normals = estimate_local_normals(scene, params.normal_neighborhood)?;
    let positions = scene.positions();
    let cos_thresh = params.angle_threshold_deg.to_radians().cos();

    let cam_dist: Vec<f64> = scene
        .points
        .iter()
        .map(|p| (p.pos() - scene.camera_pos(p.camera_index)).norm())
        .collect();

    // Query radius around a frontier point must cover every candidate q with
    // |p - q| < factor * d(q); since d(q) <= d(p) + r, r = factor*d(p)/(1-factor)
    // suffices for factor < 1.
    let radius_for = |i: usize| -> f64 {
        let f = params.distance_factor.min(0.9);
        (f * cam_dist[i] / (1.0 - f)).max(1e-6)
    };
    let max_radius = (0..positions.len()).map(radius_for).fold(0.0f64, f64::max);
    let index = PointIndex::new(&positions, (max_radius / 2.0).max(1e-3));

    let mut order: Vec<usize> = (0..positions.len()).collect();
    let mut rng = crate::rng::substream(seed, "segmentation-seed-order");
    order.shuffle(&mut rng);

    let mut ids = vec![-1i64; positions.len()];
    let mut assigned = vec![false; positions.len()];
    let mut next_id = 0i64;
    let mut members: Vec<usize> = Vec::new();

    for &seed_pt in &order {
        if assigned[seed_pt] {
            continue;
        }
        members.clear();
        let mut frontier = vec![seed_pt];
        assigned[seed_pt] = true;
        members.push(seed_pt);
        while let Some(p) = frontier.pop() {
            for q in index.within_radius(&positions[p], radius_for(p)) {
                if assigned[q] {
                    continue;
                }
                let dist = (positions[p] - positions[q]).norm();
                if dist >= params.distance_factor * cam_dist[q] {
                    continue;
                }
                if normals[p].dot(&normals[q]).abs() < cos_thresh {
                    continue;
                }
                assigned[q] = true;
                members.push(q);
                frontier.push(q);
            }
        }
        if members.len() >= params.min_points {
            for &m in &members {
                ids[m] = next_id;
            }
            next_id += 1;
        }
        // undersized groups stay -1 but remain assigned: noise
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ScenePoint;

    /// Regular grid on a plane z = z0 over [0,ext]x[0,ext], with jitter.
    fn plane_points(z0: f64, ext: f64, spacing: f64, sigma: f64, cam: usize, seed: u64) -> Vec<ScenePoint> {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, "test-plane");
        let n = (ext / spacing) as usize + 1;
        let mut pts = Vec::new();
        for iy in 0..n {
            for ix in 0..n {
                let jitter = if sigma > 0.0 {
                    [
                        rng.gen_range(-sigma..sigma),
                        rng.gen_range(-sigma..sigma),
                        rng.gen_range(-sigma..sigma),
                    ]
                } else {
                    [0.0; 3]
                };
                pts.push(ScenePoint {
                    position: [
                        ix as f64 * spacing + jitter[0],
                        iy as f64 * spacing + jitter[1],
                        z0 + jitter[2],
                    ],
                    color: [0.5, 0.5, 0.5],
                    camera_index: cam,
                });
            }
        }
        pts
    }

    fn scene(points: Vec<ScenePoint>, cameras: Vec<[f64; 3]>) -> Scene {
        Scene { name: None, points, cameras }
    }

    #[test]
    fn normals_on_plane_point_up_toward_camera() {
        let s = scene(plane_points(0.0, 0.5, 0.02, 0.0, 0, 1), vec![[0.25, 0.25, 2.0]]);
        let normals = estimate_local_normals(&s, 8).unwrap();
        for n in normals {
            assert!((n - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn sphere_normals_face_outside_camera() {
        use rand::Rng;
        let mut rng = crate::rng::substream(3, "sphere");
        let mut pts = Vec::new();
        for _ in 0..800 {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            pts.push(ScenePoint { position: [v.x, v.y, v.z], color: [0.5; 3], camera_index: 0 });
        }
        // camera far outside the sphere on +x
        let s = scene(pts, vec![[5.0, 0.0, 0.0]]);
        let normals = estimate_local_normals(&s, 10).unwrap();
        for (p, n) in s.points.iter().zip(normals.iter()) {
            let ray = p.pos() - s.camera_pos(0);
            assert!(ray.dot(n) <= 1e-9);
        }
    }

    #[test]
    fn noisy_plane_mean_angular_error_below_two_degrees() {
        let s = scene(plane_points(0.0, 0.6, 0.01, 0.001, 0, 7), vec![[0.3, 0.3, 2.0]]);
        let normals = estimate_local_normals(&s, 12).unwrap();
        let up = Vector3::new(0.0, 0.0, 1.0);
        let mean_err: f64 = normals
            .iter()
            .map(|n| n.dot(&up).clamp(-1.0, 1.0).acos().to_degrees())
            .sum::<f64>()
            / normals.len() as f64;
        assert!(mean_err < 2.0, "mean angular error {mean_err}");
    }

    #[test]
    fn two_parallel_planes_give_two_segments() {
        let mut pts = plane_points(0.0, 0.5, 0.02, 0.0, 0, 1);
        pts.extend(plane_points(1.0, 0.5, 0.02, 0.0, 0, 2));
        let s = scene(pts, vec![[0.25, 0.25, 2.0]]);
        let params = SegParams { min_points: 20, ..Default::default() };
        let ids = segment_cloud(&s, &params, 1).unwrap();
        let distinct: std::collections::BTreeSet<i64> = ids.iter().copied().filter(|&i| i >= 0).collect();
        assert_eq!(distinct.len(), 2);
        assert!(ids.iter().all(|&i| i >= 0), "no noise expected");
    }

    #[test]
    fn single_plane_is_one_segment() {
        let s = scene(plane_points(0.0, 0.6, 0.02, 0.0, 0, 1), vec![[0.3, 0.3, 1.5]]);
        let params = SegParams { min_points: 20, ..Default::default() };
        let ids = segment_cloud(&s, &params, 9).unwrap();
        assert!(ids.iter().all(|&i| i == 0));
    }

    /// Two planes meeting at 90 degrees: the normal test must keep them
    /// apart. The wall starts a few sampling rows above the crease so the
    /// local normal estimates stay pure on each face; the faces are still
    /// well within each other's distance threshold, so only the normal test
    /// separates them.
    #[test]
    fn l_shape_splits_into_two_segments() {
        let spacing = 0.04;
        let mut pts = plane_points(0.0, 0.6, spacing, 0.0, 0, 1);
        let n = 16;
        for iz in 3..n {
            for iy in 0..n {
                pts.push(ScenePoint {
                    position: [0.0, iy as f64 * spacing, iz as f64 * spacing],
                    color: [0.5; 3],
                    camera_index: 0,
                });
            }
        }
        let s = scene(pts, vec![[1.5, 0.3, 1.5]]);
        let params = SegParams {
            min_points: 20,
            normal_neighborhood: 6,
            ..Default::default()
        };
        let ids = segment_cloud(&s, &params, 4).unwrap();
        let distinct: std::collections::BTreeSet<i64> = ids.iter().copied().filter(|&i| i >= 0).collect();
        assert_eq!(distinct.len(), 2, "expected the fold to split, got {distinct:?}");

        // Oracle: no floor/wall point pair passes the 30-degree normal test
        // (their normals differ by ~90 degrees), so growth cannot cross.
        let normals = estimate_local_normals(&s, params.normal_neighborhood).unwrap();
        let cos30 = 30f64.to_radians().cos();
        for (i, p) in s.points.iter().enumerate() {
            if !(p.position[0] < 1e-9 && p.position[2] > 0.01) {
                continue; // wall points only
            }
            for (j, q) in s.points.iter().enumerate() {
                if q.position[2] > 0.01 || (p.pos() - q.pos()).norm() > 0.25 {
                    continue; // floor points within reach only
                }
                assert!(
                    normals[i].dot(&normals[j]).abs() < cos30,
                    "cross-face pair ({i},{j}) passes the normal test"
                );
            }
        }

        // And the two faces really do end up in different segments.
        let floor_id = ids[0];
        for (i, p) in s.points.iter().enumerate() {
            if p.position[0] < 1e-9 && p.position[2] > 0.0 {
                assert_ne!(ids[i], floor_id, "wall point {i} merged into the floor");
            }
        }
    }

    #[test]
    fn deterministic_under_fixed_seed_and_coverage() {
        let mut pts = plane_points(0.0, 0.4, 0.02, 0.001, 0, 2);
        pts.extend(plane_points(0.8, 0.4, 0.02, 0.001, 0, 3));
        let s = scene(pts, vec![[0.2, 0.2, 2.0]]);
        let params = SegParams { min_points: 10, ..Default::default() };
        let a = segment_cloud(&s, &params, 42).unwrap();
        let b = segment_cloud(&s, &params, 42).unwrap();
        assert_eq!(a, b);
        // coverage: ids partition the non-noise points
        for seg in crate::scene::segmentation_to_segments(&a, 1) {
            assert!(!seg.is_empty());
        }
    }

    #[test]
    fn wider_angle_threshold_never_increases_segment_count() {
        // Gently curved sheet: z = 0.15 sin(2x). Stricter angle thresholds
        // fracture it into more strips.
        let mut pts = Vec::new();
        for iy in 0..30 {
            for ix in 0..120 {
                let x = ix as f64 * 0.01;
                pts.push(ScenePoint {
                    position: [x, iy as f64 * 0.01, 0.15 * (2.0 * x).sin()],
                    color: [0.5; 3],
                    camera_index: 0,
                });
            }
        }
        let s = scene(pts, vec![[0.6, 0.15, 2.0]]);
        let mut last = usize::MAX;
        for angle in [3.0, 6.0, 12.0, 25.0, 50.0] {
            let params = SegParams {
                angle_threshold_deg: angle,
                min_points: 1,
                ..Default::default()
            };
            let ids = segment_cloud(&s, &params, 5).unwrap();
            let count = ids.iter().collect::<std::collections::BTreeSet<_>>().len();
            assert!(count <= last, "angle {angle}: {count} segments after {last}");
            last = count;
        }
    }
}
