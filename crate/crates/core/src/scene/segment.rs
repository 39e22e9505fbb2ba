use crate::error::{Error, Result};
use crate::geom::{horizontal, Aabb};
use crate::scene::Scene;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// An atomic surface patch of the cloud: the unit that receives a label.
///
/// Geometry is derived once from the member points and then treated as
/// immutable. Eigenvalues come from the covariance of the member points and
/// are sorted ascending, so `eigenvalues[0]` is the out-of-plane scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub point_indices: Vec<usize>,
    /// Cached positions of the member points, in `point_indices` order.
    pub points: Vec<[f64; 3]>,
    pub centroid: [f64; 3],
    /// Unit normal oriented to face the capturing camera (ray . normal < 0).
    /// Zero for degenerate segments.
    pub normal: [f64; 3],
    /// Ray from the capturing camera to the centroid.
    pub camera_ray: [f64; 3],
    /// `camera_ray` with the vertical component zeroed.
    pub horizontal_ray: [f64; 3],
    /// Covariance eigenvalues, ascending: [small, mid, large].
    pub eigenvalues: [f64; 3],
    /// Majority camera over the member points.
    pub camera_index: usize,
    /// True when the normal is not well defined (fewer than 3 points, or a
    /// rank-deficient point set such as a line).
    pub degenerate: bool,
    pub bbox: Aabb,
}

impl Segment {
    pub fn centroid_v(&self) -> Vector3<f64> {
        Vector3::from(self.centroid)
    }
    pub fn normal_v(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }
    pub fn camera_ray_v(&self) -> Vector3<f64> {
        Vector3::from(self.camera_ray)
    }
    pub fn horizontal_ray_v(&self) -> Vector3<f64> {
        Vector3::from(self.horizontal_ray)
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    /// Distance from an arbitrary location to the nearest member point.
    pub fn distance_to_point(&self, q: &Vector3<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| (Vector3::from(*p) - q).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Relative eigenvalue floor under which the point set is treated as
/// rank-deficient (no reliable surface normal).
const RANK_EPS: f64 = 1e-9;

/// Covariance eigenvalues (ascending) and their eigenvectors (columns match).
pub(crate) fn covariance_eigen(points: &[Vector3<f64>], centroid: &Vector3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let n = points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let se = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals = [
        se.eigenvalues[order[0]].max(0.0),
        se.eigenvalues[order[1]].max(0.0),
        se.eigenvalues[order[2]].max(0.0),
    ];
    let vecs = [
        se.eigenvectors.column(order[0]).into_owned(),
        se.eigenvectors.column(order[1]).into_owned(),
        se.eigenvectors.column(order[2]).into_owned(),
    ];
    (vals, vecs)
}

/// Orient `n` so it faces the camera (`ray . n < 0`). When the ray is
/// perpendicular to the normal the sign is fixed by preferring positive z,
/// then y, then x.
pub(crate) fn orient_normal(n: Vector3<f64>, ray: &Vector3<f64>) -> Vector3<f64> {
    let d = ray.dot(&n);
    if d < -1e-12 {
        n
    } else if d > 1e-12 {
        -n
    } else {
        for axis in [2, 1, 0] {
            if n[axis].abs() > 1e-12 {
                return if n[axis] > 0.0 { n } else { -n };
            }
        }
        n
    }
}

/// Derive the geometric summary of one segment.
///
/// The capturing camera is the majority `camera_index` over the member
/// points (ties break toward the lower camera index). Degenerate segments
/// (fewer than 3 points, or rank-deficient) keep their centroid, bounding
/// box, and eigenvalues but get a zero normal and the `degenerate` flag.
pub fn segment_geometry(scene: &Scene, point_indices: &[usize]) -> Result<Segment> {
    if point_indices.is_empty() {
        return Err(Error::InvalidData("segment with no points".into()));
    }
    let points: Vec<Vector3<f64>> = point_indices.iter().map(|&i| scene.points[i].pos()).collect();
    let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let bbox = Aabb::from_points(points.iter());

    let mut votes = vec![0usize; scene.cameras.len()];
    for &i in point_indices {
        votes[scene.points[i].camera_index] += 1;
    }
    let camera_index = votes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap();

    let camera_ray = centroid - scene.camera_pos(camera_index);
    let (eigenvalues, eigenvectors) = if points.len() >= 2 {
        covariance_eigen(&points, &centroid)
    } else {
        ([0.0; 3], [Vector3::x(), Vector3::y(), Vector3::z()])
    };

    let degenerate = point_indices.len() < 3
        || eigenvalues[2] <= 0.0
        || eigenvalues[1] <= RANK_EPS * eigenvalues[2];

    let normal = if degenerate {
        Vector3::zeros()
    } else {
        orient_normal(eigenvectors[0].normalize(), &camera_ray)
    };

    Ok(Segment {
        point_indices: point_indices.to_vec(),
        points: points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        centroid: [centroid.x, centroid.y, centroid.z],
        normal: [normal.x, normal.y, normal.z],
        camera_ray: [camera_ray.x, camera_ray.y, camera_ray.z],
        horizontal_ray: {
            let h = horizontal(&camera_ray);
            [h.x, h.y, h.z]
        },
        eigenvalues,
        camera_index,
        degenerate,
        bbox,
    })
}
