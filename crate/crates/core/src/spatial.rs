//! Uniform voxel-hash index over a fixed point set. Supports radius queries
//! and k-nearest-neighbor queries; both are exact (the grid only prunes).

use nalgebra::Vector3;
use std::collections::HashMap;

pub struct PointIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    grid: HashMap<(i64, i64, i64), Vec<usize>>,
}

fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

impl<'a> PointIndex<'a> {
    /// `cell` should be on the order of the typical query radius.
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(key(p, cell)).or_default().push(i);
        }
        PointIndex { points, cell, grid }
    }

    /// Indices of all points within `radius` of `q` (inclusive), in ascending
    /// index order. `q` itself is included when it is part of the set.
    pub fn within_radius(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let lo = key(&(q - Vector3::repeat(radius)), self.cell);
        let hi = key(&(q + Vector3::repeat(radius)), self.cell);
        let mut out = Vec::new();
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                for cz in lo.2..=hi.2 {
                    if let Some(ids) = self.grid.get(&(cx, cy, cz)) {
                        for &i in ids {
                            if (self.points[i] - q).norm_squared() <= r2 {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `q`, nearest first. Ties break on index so
    /// results are deterministic. Returns fewer than `k` only if the set is
    /// smaller than `k`.
    pub fn nearest(&self, q: &Vector3<f64>, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        // Expand rings of cells until the k-th best distance is covered.
        let mut best: Vec<(f64, usize)> = Vec::new();
        let center = key(q, self.cell);
        let mut ring = 0i64;
        loop {
            let mut visited_any = false;
            for cx in center.0 - ring..=center.0 + ring {
                for cy in center.1 - ring..=center.1 + ring {
                    for cz in center.2 - ring..=center.2 + ring {
                        let on_shell = (cx - center.0).abs() == ring
                            || (cy - center.1).abs() == ring
                            || (cz - center.2).abs() == ring;
                        if !on_shell {
                            continue;
                        }
                        if let Some(ids) = self.grid.get(&(cx, cy, cz)) {
                            visited_any = true;
                            for &i in ids {
                                let d2 = (self.points[i] - q).norm_squared();
                                best.push((d2, i));
                            }
                        }
                    }
                }
            }
            let _ = visited_any;
            best.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            best.truncate(k.max(64));
            // A shell at distance `ring` guarantees coverage of radius
            // (ring) * cell from the query cell's near face.
            let covered = ring as f64 * self.cell;
            if best.len() >= k && best[k - 1].0.sqrt() <= covered {
                break;
            }
            ring += 1;
            if ring as usize > self.max_ring() {
                break;
            }
        }
        best.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        best.truncate(k);
        best.into_iter().map(|(_, i)| i).collect()
    }

    fn max_ring(&self) -> usize {
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for k in self.grid.keys() {
            lo = (lo.0.min(k.0), lo.1.min(k.1), lo.2.min(k.2));
            hi = (hi.0.max(k.0), hi.1.max(k.1), hi.2.max(k.2));
        }
        ((hi.0 - lo.0).max(hi.1 - lo.1).max(hi.2 - lo.2).max(1) + 2) as usize
    }
}
