//! Gradient-orientation descriptor on a synthetic camera raster.
//!
//! Segments are projected into their capturing camera's image plane (pinhole,
//! 57 degree horizontal field of view, 640x480) using the point brightness as
//! intensity. Per 8x8-pixel cell we build an 18-bin signed orientation
//! histogram and reduce it to the 31-dimensional descriptor (18 signed + 9
//! unsigned sums + 4 block-normalization energies); a segment's descriptor is
//! the average over the cells its points land in. This stands in for a
//! photo-based descriptor when no RGB frames exist; precomputed node features
//! can be injected instead to bypass it entirely.

use crate::features::hsv::rgb_to_hsv;
use crate::scene::Scene;
use nalgebra::Vector3;

pub const HOG_DIM: usize = 31;
const WIDTH: usize = 640;
const HEIGHT: usize = 480;
const FOV_H_DEG: f64 = 57.0;
const CELL: usize = 8;
const CELLS_X: usize = WIDTH / CELL;
const CELLS_Y: usize = HEIGHT / CELL;
const ORIENTATIONS: usize = 9; // unsigned; signed histogram has 2x
const TRUNCATE: f64 = 0.2;

struct CameraBasis {
    position: Vector3<f64>,
    forward: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    focal: f64,
}

impl CameraBasis {
    /// Look-at basis: the camera faces the centroid of the points it
    /// captured, with world z as the up reference.
    fn new(scene: &Scene, camera_index: usize) -> Option<CameraBasis> {
        let position = scene.camera_pos(camera_index);
        let mut target = Vector3::zeros();
        let mut n = 0usize;
        for p in &scene.points {
            if p.camera_index == camera_index {
                target += p.pos();
                n += 1;
            }
        }
        if n == 0 {
            return None;
        }
        target /= n as f64;
        let forward = (target - position).normalize();
        let up_ref = if forward.z.abs() > 0.99 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let right = forward.cross(&up_ref).normalize();
        let up = right.cross(&forward);
        let focal = (WIDTH as f64 / 2.0) / (FOV_H_DEG.to_radians() / 2.0).tan();
        Some(CameraBasis { position, forward, right, up, focal })
    }

    fn project(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let d = p - self.position;
        let z = d.dot(&self.forward);
        if z < 1e-6 {
            return None;
        }
        let u = self.focal * d.dot(&self.right) / z + WIDTH as f64 / 2.0;
        let v = -self.focal * d.dot(&self.up) / z + HEIGHT as f64 / 2.0;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (ui, vi) = (u as usize, v as usize);
        if ui >= WIDTH || vi >= HEIGHT {
            return None;
        }
        Some((ui, vi))
    }
}

/// Per-camera raster with precomputed cell orientation histograms.
pub struct CameraRaster {
    basis: CameraBasis,
    /// [cell][bin], 18 signed orientation bins.
    cell_hist: Vec<[f64; 2 * ORIENTATIONS]>,
    cell_energy: Vec<f64>,
}

impl CameraRaster {
    pub fn build(scene: &Scene, camera_index: usize) -> Option<CameraRaster> {
        let basis = CameraBasis::new(scene, camera_index)?;
        let mut intensity = vec![0.0f64; WIDTH * HEIGHT];
        let mut depth = vec![f64::INFINITY; WIDTH * HEIGHT];
        // World-space splat footprint; closes the holes between samples so
        // gradients reflect the colors, not the sampling pattern.
        const SPLAT_M: f64 = 0.02;
        for p in &scene.points {
            if p.camera_index != camera_index {
                continue;
            }
            let pos = p.pos();
            if let Some((u, v)) = basis.project(&pos) {
                let z = (pos - basis.position).dot(&basis.forward);
                let half = ((basis.focal * SPLAT_M / (2.0 * z)).ceil() as i64).clamp(0, 8);
                for dv in -half..=half {
                    for du in -half..=half {
                        let (uu, vv) = (u as i64 + du, v as i64 + dv);
                        if uu < 0 || vv < 0 || uu >= WIDTH as i64 || vv >= HEIGHT as i64 {
                            continue;
                        }
                        let px = vv as usize * WIDTH + uu as usize;
                        if z < depth[px] {
                            depth[px] = z;
                            let (_, _, val) = rgb_to_hsv(p.color[0], p.color[1], p.color[2]);
                            intensity[px] = val;
                        }
                    }
                }
            }
        }

        let mut cell_hist = vec![[0.0; 2 * ORIENTATIONS]; CELLS_X * CELLS_Y];
        for y in 1..HEIGHT - 1 {
            for x in 1..WIDTH - 1 {
                let gx = intensity[y * WIDTH + x + 1] - intensity[y * WIDTH + x - 1];
                let gy = intensity[(y + 1) * WIDTH + x] - intensity[(y - 1) * WIDTH + x];
                let mag = (gx * gx + gy * gy).sqrt();
                if mag <= 0.0 {
                    continue;
                }
                let angle = gy.atan2(gx).rem_euclid(2.0 * std::f64::consts::PI);
                let bin = ((angle / (2.0 * std::f64::consts::PI) * (2 * ORIENTATIONS) as f64)
                    as usize)
                    .min(2 * ORIENTATIONS - 1);
                cell_hist[(y / CELL) * CELLS_X + (x / CELL)][bin] += mag;
            }
        }
        let cell_energy = cell_hist
            .iter()
            .map(|h| {
                (0..ORIENTATIONS)
                    .map(|d| (h[d] + h[d + ORIENTATIONS]).powi(2))
                    .sum::<f64>()
            })
            .collect();
        Some(CameraRaster { basis, cell_hist, cell_energy })
    }

    fn energy_at(&self, cx: i64, cy: i64) -> f64 {
        if cx < 0 || cy < 0 || cx >= CELLS_X as i64 || cy >= CELLS_Y as i64 {
            0.0
        } else {
            self.cell_energy[cy as usize * CELLS_X + cx as usize]
        }
    }

    fn cell_descriptor(&self, cx: usize, cy: usize) -> [f64; HOG_DIM] {
        let h = &self.cell_hist[cy * CELLS_X + cx];
        let (cx, cy) = (cx as i64, cy as i64);
        let eps = 1e-8;
        let block = |dx: i64, dy: i64| {
            (self.energy_at(cx, cy)
                + self.energy_at(cx + dx, cy)
                + self.energy_at(cx, cy + dy)
                + self.energy_at(cx + dx, cy + dy)
                + eps)
                .sqrt()
        };
        let norms = [block(1, 1), block(-1, 1), block(1, -1), block(-1, -1)];

        let mut out = [0.0; HOG_DIM];
        // 18 contrast-sensitive orientation features
        for d in 0..2 * ORIENTATIONS {
            out[d] = 0.5 * norms.iter().map(|&n| (h[d] / n).min(TRUNCATE)).sum::<f64>();
        }
        // 9 contrast-insensitive
        for d in 0..ORIENTATIONS {
            let s = h[d] + h[d + ORIENTATIONS];
            out[2 * ORIENTATIONS + d] =
                0.5 * norms.iter().map(|&n| (s / n).min(TRUNCATE)).sum::<f64>();
        }
        // 4 texture-energy features
        for (k, &n) in norms.iter().enumerate() {
            let t: f64 = (0..2 * ORIENTATIONS).map(|d| (h[d] / n).min(TRUNCATE)).sum();
            out[2 * ORIENTATIONS + ORIENTATIONS + k] = 0.2357 * t;
        }
        out
    }

    /// Average descriptor over the cells the given points project into.
    pub fn segment_descriptor(&self, points: &[Vector3<f64>]) -> [f64; HOG_DIM] {
        let mut cells = std::collections::BTreeSet::new();
        for p in points {
            if let Some((u, v)) = self.basis.project(p) {
                cells.insert((u / CELL, v / CELL));
            }
        }
        let mut out = [0.0; HOG_DIM];
        if cells.is_empty() {
            return out;
        }
        for &(cx, cy) in &cells {
            let d = self.cell_descriptor(cx, cy);
            for i in 0..HOG_DIM {
                out[i] += d[i];
            }
        }
        for v in out.iter_mut() {
            *v /= cells.len() as f64;
        }
        out
    }
}
