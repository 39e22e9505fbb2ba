//! On-disk formats.
//!
//! A scene bundle is a directory holding `points.csv` (x,y,z,r,g,b,cam) and
//! `meta.json` (camera positions, optional name). Segmentations are
//! `segments.csv` (point_row,segment_id; -1 marks noise), labelings are
//! `labels.csv` (segment_id,class_name or UNLABELED), taxonomies are
//! `taxonomy.json` (class -> parent object map; class order is the sorted
//! key order). Numeric text uses the shortest representation that round-trips
//! exactly.

use crate::error::{Error, Result};
use crate::scene::{Scene, ScenePoint, Taxonomy};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct SceneMeta {
    cameras: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("expected a number, got `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite coordinate `{field}`")));
    }
    Ok(v)
}

fn is_header(line: &str) -> bool {
    line.split(',')
        .next()
        .map(|f| f.trim().parse::<f64>().is_err())
        .unwrap_or(false)
}

pub fn load_scene(dir: &Path) -> Result<Scene> {
    let meta_path = dir.join("meta.json");
    let meta: SceneMeta = {
        let f = std::fs::File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Json { path: meta_path.clone(), source: e })?
    };

    let pts_path = dir.join("points.csv");
    let f = std::fs::File::open(&pts_path).map_err(|e| Error::io(&pts_path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in std::io::BufReader::new(f).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(&pts_path, e))?;
        let line = line.trim();
        if line.is_empty() || (lineno == 1 && is_header(line)) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                &pts_path,
                lineno,
                format!("expected 7 fields (x,y,z,r,g,b,cam), got {}", fields.len()),
            ));
        }
        let mut nums = [0.0; 6];
        for (i, n) in nums.iter_mut().enumerate() {
            *n = parse_f64(&pts_path, lineno, fields[i])?;
        }
        let cam: usize = fields[6]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&pts_path, lineno, format!("bad camera index `{}`", fields[6])))?;
        if cam >= meta.cameras.len() {
            return Err(Error::parse(
                &pts_path,
                lineno,
                format!("camera index out of range: {cam} of {}", meta.cameras.len()),
            ));
        }
        points.push(ScenePoint {
            position: [nums[0], nums[1], nums[2]],
            color: [nums[3], nums[4], nums[5]],
            camera_index: cam,
        });
    }

    let scene = Scene {
        name: meta.name,
        points,
        cameras: meta.cameras,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(dir: &Path, scene: &Scene) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta_path = dir.join("meta.json");
    let meta = SceneMeta {
        cameras: scene.cameras.clone(),
        name: scene.name.clone(),
    };
    let f = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &meta)
        .map_err(|e| Error::Json { path: meta_path, source: e })?;

    let pts_path = dir.join("points.csv");
    let f = std::fs::File::create(&pts_path).map_err(|e| Error::io(&pts_path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "x,y,z,r,g,b,cam").map_err(|e| Error::io(&pts_path, e))?;
    for p in &scene.points {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.position[0], p.position[1], p.position[2], p.color[0], p.color[1], p.color[2], p.camera_index
        )
        .map_err(|e| Error::io(&pts_path, e))?;
    }
    Ok(())
}

/// Per-point segment ids; -1 is noise.
pub fn save_segmentation(path: &Path, ids: &[i64]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "point_row,segment_id").map_err(|e| Error::io(path, e))?;
    for (row, id) in ids.iter().enumerate() {
        writeln!(w, "{row},{id}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn load_segmentation(path: &Path, num_points: usize) -> Result<Vec<i64>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = vec![-1i64; num_points];
    for (lineno, line) in std::io::BufReader::new(f).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (lineno == 1 && is_header(line)) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, lineno, "expected 2 fields (point_row,segment_id)"));
        }
        let row: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad point row `{}`", fields[0])))?;
        let id: i64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad segment id `{}`", fields[1])))?;
        if row >= num_points {
            return Err(Error::parse(path, lineno, format!("point row {row} outside scene ({num_points} points)")));
        }
        ids[row] = id;
    }
    Ok(ids)
}

/// Group per-point ids into per-segment point index lists, ordered by id.
/// Noise (-1) is dropped; segments smaller than `min_points` are dropped too.
pub fn segmentation_to_segments(ids: &[i64], min_points: usize) -> Vec<Vec<usize>> {
    let mut by_id: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (row, &id) in ids.iter().enumerate() {
        if id >= 0 {
            by_id.entry(id).or_default().push(row);
        }
    }
    by_id
        .into_values()
        .filter(|v| v.len() >= min_points)
        .collect()
}

/// One row per (segment, class); unlabeled segments get an UNLABELED row.
pub fn save_labels(path: &Path, per_segment: &[Vec<String>]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    writeln!(w, "segment_id,class_name").map_err(|e| Error::io(path, e))?;
    for (sid, classes) in per_segment.iter().enumerate() {
        if classes.is_empty() {
            writeln!(w, "{sid},UNLABELED").map_err(|e| Error::io(path, e))?;
        } else {
            for c in classes {
                writeln!(w, "{sid},{c}").map_err(|e| Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

pub fn load_labels(path: &Path, num_segments: Option<usize>) -> Result<Vec<Vec<String>>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<(usize, Option<String>)> = Vec::new();
    let mut max_id = 0usize;
    for (lineno, line) in std::io::BufReader::new(f).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (lineno == 1 && is_header(line)) {
            continue;
        }
        let (sid, class) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno, "expected 2 fields (segment_id,class_name)"))?;
        let sid: usize = sid
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad segment id `{sid}`")))?;
        max_id = max_id.max(sid);
        let class = class.trim();
        rows.push((
            sid,
            if class == "UNLABELED" { None } else { Some(class.to_string()) },
        ));
    }
    let n = num_segments.unwrap_or(if rows.is_empty() { 0 } else { max_id + 1 });
    let mut out = vec![Vec::new(); n];
    for (sid, class) in rows {
        if sid >= n {
            return Err(Error::InvalidData(format!(
                "label references segment {sid} but only {n} segments exist"
            )));
        }
        if let Some(c) = class {
            out[sid].push(c);
        }
    }
    Ok(out)
}

pub fn save_taxonomy(path: &Path, taxonomy: &Taxonomy) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &taxonomy.objects)
        .map_err(|e| Error::Json { path: path.into(), source: e })
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let objects: BTreeMap<String, String> = serde_json::from_reader(std::io::BufReader::new(f))
        .map_err(|e| Error::Json { path: path.into(), source: e })?;
    let classes: Vec<String> = objects.keys().cloned().collect();
    Taxonomy::new(classes, objects)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scene() -> Scene {
        Scene {
            name: Some("tiny".into()),
            points: vec![
                ScenePoint { position: [0.0, 0.0, 0.0], color: [1.0, 0.0, 0.0], camera_index: 0 },
                ScenePoint { position: [0.1, 0.2, 0.3], color: [0.0, 1.0, 0.0], camera_index: 0 },
                ScenePoint { position: [0.5, 0.25, 0.125], color: [0.0, 0.0, 1.0], camera_index: 0 },
            ],
            cameras: vec![[0.0, 0.0, 2.0]],
        }
    }

    #[test]
    fn three_point_bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let scene = tiny_scene();
        save_scene(dir.path(), &scene).unwrap();
        let back = load_scene(dir.path()).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn camera_index_out_of_range_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("meta.json"), r#"{"cameras": [[0,0,2],[1,1,2]]}"#).unwrap();
        std::fs::write(
            dir.path().join("points.csv"),
            "x,y,z,r,g,b,cam\n0,0,0,1,1,1,0\n1,0,0,1,1,1,5\n",
        )
        .unwrap();
        let err = load_scene(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("camera index out of range"), "{msg}");
        assert!(msg.contains(":3:"), "line number missing: {msg}");
    }

    #[test]
    fn non_finite_coordinate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("meta.json"), r#"{"cameras": [[0,0,2]]}"#).unwrap();
        std::fs::write(dir.path().join("points.csv"), "0,0,NaN,1,1,1,0\n").unwrap();
        let err = load_scene(dir.path()).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn labels_round_trip_including_unlabeled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![vec!["wall".to_string()], vec![], vec!["floor".to_string(), "flat".to_string()]];
        save_labels(&path, &labels).unwrap();
        let back = load_labels(&path, Some(3)).unwrap();
        assert_eq!(labels, back);
    }

    #[test]
    fn segmentation_round_trip_and_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("segments.csv");
        let ids = vec![0, 0, 1, -1, 1, 2];
        save_segmentation(&path, &ids).unwrap();
        let back = load_segmentation(&path, 6).unwrap();
        assert_eq!(ids, back);
        let segs = segmentation_to_segments(&back, 2);
        assert_eq!(segs, vec![vec![0, 1], vec![2, 4]]);
    }

    proptest::proptest! {
        #[test]
        fn scene_round_trip_is_bit_identical(seed in 0u64..500) {
            use rand::Rng;
            use rand_chacha::rand_core::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n_cams = rng.gen_range(1..4);
            let cameras: Vec<[f64;3]> = (0..n_cams)
                .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.5..3.0)])
                .collect();
            let points: Vec<ScenePoint> = (0..rng.gen_range(3..40))
                .map(|_| ScenePoint {
                    position: [rng.gen::<f64>() * 10.0 - 5.0, rng.gen::<f64>(), rng.gen::<f64>() / 3.0],
                    color: [rng.gen(), rng.gen(), rng.gen()],
                    camera_index: rng.gen_range(0..n_cams),
                })
                .collect();
            let scene = Scene { name: None, points, cameras };
            let dir = tempfile::tempdir().unwrap();
            save_scene(dir.path(), &scene).unwrap();
            let back = load_scene(dir.path()).unwrap();
            proptest::prop_assert_eq!(scene, back);
        }
    }
}
