//! Synthetic scene generation with known ground truth.
//!
//! A template declares object blueprints (planar patches or boxes with a
//! class, a color, and a placement rule relative to earlier blueprints) plus
//! room size, camera ring, sampling density, and noise levels. Generation
//! samples poses respecting the placement rules, rasterizes surface points,
//! and emits ground-truth segments (one per face patch) alongside the
//! labels. These scenes drive the quantitative acceptance experiments, with
//! contextual regularities controlled entirely by the placement rules.

use crate::error::{Error, Result};
use crate::geom::horizontal;
use crate::scene::{save_labels, save_scene, save_segmentation, save_taxonomy, Scene, ScenePoint, Taxonomy};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Rectangular patch in a horizontal plane, extents x by y.
    HorizontalPatch { x: f64, y: f64 },
    /// Rectangular patch in a vertical plane facing the room center.
    VerticalPatch { width: f64, height: f64 },
    /// Axis-aligned box; every face becomes its own ground-truth segment.
    Box { x: f64, y: f64, z: f64 },
}

/// Where a blueprint's center goes. Anchors must name earlier blueprints,
/// so the placement rules always form a DAG.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    At { position: [f64; 3] },
    /// Uniform in the room interior with the given wall margin; center
    /// height sampled from the range.
    InRoom { margin: f64, z: [f64; 2] },
    /// Above the anchor: vertical offset and horizontal offset (random
    /// direction) sampled from the ranges.
    OnTopOf { anchor: String, dz: [f64; 2], offset: [f64; 2] },
    /// Displaced from the anchor horizontally toward the room center, which
    /// is also where the cameras sit, so the object ends up in front of the
    /// anchor as seen from the capturing cameras.
    InFrontOf { anchor: String, distance: [f64; 2], dz: [f64; 2] },
    /// Displaced from the anchor in a random horizontal direction.
    Beside { anchor: String, distance: [f64; 2], dz: [f64; 2] },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Blueprint {
    pub name: String,
    pub class: String,
    pub object: String,
    pub shape: Shape,
    pub placement: Placement,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneTemplate {
    pub name: String,
    /// Room extents; the floor is z = 0, one corner at the origin.
    pub room: [f64; 3],
    pub camera_count: usize,
    pub camera_radius: f64,
    pub camera_height: f64,
    pub point_spacing: f64,
    pub position_noise: f64,
    pub color_noise: f64,
    /// Scenes the default suite generates from this template.
    pub scene_count: usize,
    pub blueprints: Vec<Blueprint>,
}

pub struct SynthScene {
    pub scene: Scene,
    /// Per-point segment id.
    pub segmentation: Vec<i64>,
    /// Point indices per ground-truth segment.
    pub gt_segments: Vec<Vec<usize>>,
    /// Class name per ground-truth segment.
    pub gt_classes: Vec<String>,
    pub taxonomy: Taxonomy,
}

impl SceneTemplate {
    pub fn taxonomy(&self) -> Result<Taxonomy> {
        let mut objects: BTreeMap<String, String> = BTreeMap::new();
        for b in &self.blueprints {
            if let Some(prev) = objects.insert(b.class.clone(), b.object.clone()) {
                if prev != b.object {
                    return Err(Error::InvalidData(format!(
                        "class `{}` maps to objects `{prev}` and `{}`",
                        b.class, b.object
                    )));
                }
            }
        }
        let classes: Vec<String> = objects.keys().cloned().collect();
        Taxonomy::new(classes, objects)
    }

    pub fn validate(&self) -> Result<()> {
        if self.room.iter().any(|&v| v <= 0.0) || self.point_spacing <= 0.0 || self.camera_count == 0 {
            return Err(Error::InvalidData("room, spacing and cameras must be positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for b in &self.blueprints {
            let anchor = match &b.placement {
                Placement::OnTopOf { anchor, .. }
                | Placement::InFrontOf { anchor, .. }
                | Placement::Beside { anchor, .. } => Some(anchor),
                _ => None,
            };
            if let Some(a) = anchor {
                if !seen.contains(a.as_str()) {
                    return Err(Error::InvalidData(format!(
                        "blueprint `{}` anchors on `{a}`, which is not declared earlier",
                        b.name
                    )));
                }
            }
            if !seen.insert(b.name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate blueprint name `{}`", b.name)));
            }
        }
        self.taxonomy().map(|_| ())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }

    pub fn load(path: &Path) -> Result<SceneTemplate> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let t: SceneTemplate = serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Json { path: path.into(), source: e })?;
        t.validate()?;
        Ok(t)
    }

    /// Look up a built-in template by name.
    pub fn builtin(name: &str) -> Option<SceneTemplate> {
        match name {
            "office_small" => Some(office_small()),
            "ambiguous_pair" => Some(ambiguous_pair()),
            _ => None,
        }
    }
}

fn sample(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] >= range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

struct Face {
    center: Vector3<f64>,
    u: Vector3<f64>, // half-extent vector
    v: Vector3<f64>, // half-extent vector
}

fn faces_of(shape: &Shape, center: Vector3<f64>, toward_center: Vector3<f64>) -> Vec<Face> {
    match *shape {
        Shape::HorizontalPatch { x, y } => vec![Face {
            center,
            u: Vector3::new(x / 2.0, 0.0, 0.0),
            v: Vector3::new(0.0, y / 2.0, 0.0),
        }],
        Shape::VerticalPatch { width, height } => {
            let n = {
                let h = horizontal(&toward_center);
                if h.norm() < 1e-9 {
                    Vector3::x()
                } else {
                    h.normalize()
                }
            };
            let u = Vector3::z().cross(&n) * (width / 2.0);
            vec![Face { center, u, v: Vector3::new(0.0, 0.0, height / 2.0) }]
        }
        Shape::Box { x, y, z } => {
            let hx = Vector3::new(x / 2.0, 0.0, 0.0);
            let hy = Vector3::new(0.0, y / 2.0, 0.0);
            let hz = Vector3::new(0.0, 0.0, z / 2.0);
            vec![
                Face { center: center + hz, u: hx, v: hy },
                Face { center: center - hz, u: hx, v: hy },
                Face { center: center + hx, u: hy, v: hz },
                Face { center: center - hx, u: hy, v: hz },
                Face { center: center + hy, u: hx, v: hz },
                Face { center: center - hy, u: hx, v: hz },
            ]
        }
    }
}

/// Generate one scene from a template. Deterministic in (template, seed).
pub fn generate(template: &SceneTemplate, seed: u64) -> Result<SynthScene> {
    template.validate()?;
    let taxonomy = template.taxonomy()?;
    let mut rng = crate::rng::substream(seed, "synth-generate");
    let room_center = Vector3::new(template.room[0] / 2.0, template.room[1] / 2.0, 0.0);

    // resolve blueprint centers in declaration order
    let mut centers: BTreeMap<&str, Vector3<f64>> = BTreeMap::new();
    let mut placed: Vec<(usize, Vector3<f64>)> = Vec::new();
    for (bi, b) in template.blueprints.iter().enumerate() {
        let center = match &b.placement {
            Placement::At { position } => Vector3::from(*position),
            Placement::InRoom { margin, z } => Vector3::new(
                rng.gen_range(*margin..template.room[0] - margin),
                rng.gen_range(*margin..template.room[1] - margin),
                sample(&mut rng, *z),
            ),
            Placement::OnTopOf { anchor, dz, offset } => {
                let a = centers[anchor.as_str()];
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = sample(&mut rng, *offset);
                a + Vector3::new(d * angle.cos(), d * angle.sin(), sample(&mut rng, *dz))
            }
            Placement::InFrontOf { anchor, distance, dz } => {
                let a = centers[anchor.as_str()];
                let dir = {
                    let h = horizontal(&(room_center - a));
                    if h.norm() < 1e-9 {
                        Vector3::x()
                    } else {
                        h.normalize()
                    }
                };
                a + dir * sample(&mut rng, *distance) + Vector3::new(0.0, 0.0, sample(&mut rng, *dz))
            }
            Placement::Beside { anchor, distance, dz } => {
                let a = centers[anchor.as_str()];
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let d = sample(&mut rng, *distance);
                a + Vector3::new(d * angle.cos(), d * angle.sin(), sample(&mut rng, *dz))
            }
        };
        centers.insert(b.name.as_str(), center);
        placed.push((bi, center));
    }

    // cameras on a ring around the room center
    let cameras: Vec<[f64; 3]> = (0..template.camera_count)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / template.camera_count as f64;
            [
                room_center.x + template.camera_radius * a.cos(),
                room_center.y + template.camera_radius * a.sin(),
                template.camera_height,
            ]
        })
        .collect();
    let cam_pos: Vec<Vector3<f64>> = cameras.iter().map(|&c| Vector3::from(c)).collect();

    let mut points: Vec<ScenePoint> = Vec::new();
    let mut segmentation: Vec<i64> = Vec::new();
    let mut gt_segments: Vec<Vec<usize>> = Vec::new();
    let mut gt_classes: Vec<String> = Vec::new();

    for &(bi, center) in &placed {
        let b = &template.blueprints[bi];
        let toward = room_center - center;
        for face in faces_of(&b.shape, center, toward) {
            // bounds check before noise: every corner inside the room
            for (su, sv) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
                let corner = face.center + face.u * su + face.v * sv;
                if corner.x < -1e-9
                    || corner.y < -1e-9
                    || corner.z < -1e-9
                    || corner.x > template.room[0] + 1e-9
                    || corner.y > template.room[1] + 1e-9
                    || corner.z > template.room[2] + 1e-9
                {
                    return Err(Error::InvalidData(format!(
                        "blueprint `{}` does not fit inside the room (corner at {:?})",
                        b.name, corner
                    )));
                }
            }
            let nu = ((2.0 * face.u.norm() / template.point_spacing).ceil() as usize).max(2);
            let nv = ((2.0 * face.v.norm() / template.point_spacing).ceil() as usize).max(2);
            let seg_id = gt_segments.len() as i64;
            let mut members = Vec::new();
            for iu in 0..=nu {
                for iv in 0..=nv {
                    let fu = iu as f64 / nu as f64 * 2.0 - 1.0;
                    let fv = iv as f64 / nv as f64 * 2.0 - 1.0;
                    let mut p = face.center + face.u * fu + face.v * fv;
                    if template.position_noise > 0.0 {
                        for a in 0..3 {
                            p[a] += rng.gen_range(-template.position_noise..template.position_noise);
                        }
                    }
                    let camera_index = cam_pos
                        .iter()
                        .enumerate()
                        .min_by(|(_, a), (_, b)| {
                            (*a - p).norm_squared().partial_cmp(&(*b - p).norm_squared()).unwrap()
                        })
                        .map(|(i, _)| i)
                        .unwrap();
                    let mut color = b.color;
                    if template.color_noise > 0.0 {
                        for c in color.iter_mut() {
                            *c = (*c + rng.gen_range(-template.color_noise..template.color_noise))
                                .clamp(0.0, 1.0);
                        }
                    }
                    members.push(points.len());
                    segmentation.push(seg_id);
                    points.push(ScenePoint { position: [p.x, p.y, p.z], color, camera_index });
                }
            }
            gt_segments.push(members);
            gt_classes.push(b.class.clone());
        }
    }

    let scene = Scene { name: Some(format!("{}-{seed}", template.name)), points, cameras };
    scene.validate()?;
    Ok(SynthScene { scene, segmentation, gt_segments, gt_classes, taxonomy })
}

impl SynthScene {
    /// Ground-truth class indices per segment.
    pub fn gt_class_indices(&self) -> Result<Vec<usize>> {
        self.gt_classes.iter().map(|c| self.taxonomy.class_index(c)).collect()
    }

    /// Write the scene as a bundle directory in the standard formats.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_scene(dir, &self.scene)?;
        save_segmentation(&dir.join("segments.csv"), &self.segmentation)?;
        let labels: Vec<Vec<String>> = self.gt_classes.iter().map(|c| vec![c.clone()]).collect();
        save_labels(&dir.join("labels.csv"), &labels)?;
        save_taxonomy(&dir.join("taxonomy.json"), &self.taxonomy)?;
        Ok(())
    }
}

/// Remove every segment of one class, keeping the removed centroids as
/// hidden ground truth for search evaluation.
pub fn ablate(scene: &SynthScene, class: &str) -> Result<(SynthScene, Vec<[f64; 3]>)> {
    let victim_segments: Vec<usize> = scene
        .gt_classes
        .iter()
        .enumerate()
        .filter(|(_, c)| c.as_str() == class)
        .map(|(i, _)| i)
        .collect();
    if victim_segments.is_empty() {
        return Err(Error::UnknownClass(format!("{class} (not present in the scene)")));
    }
    let mut hidden = Vec::new();
    for &s in &victim_segments {
        let pts = &scene.gt_segments[s];
        let c = pts
            .iter()
            .fold(Vector3::zeros(), |acc, &p| acc + scene.scene.points[p].pos())
            / pts.len() as f64;
        hidden.push([c.x, c.y, c.z]);
    }

    let keep_point: Vec<bool> = {
        let mut keep = vec![true; scene.scene.points.len()];
        for &s in &victim_segments {
            for &p in &scene.gt_segments[s] {
                keep[p] = false;
            }
        }
        keep
    };
    let mut new_index = vec![usize::MAX; scene.scene.points.len()];
    let mut points = Vec::new();
    for (i, p) in scene.scene.points.iter().enumerate() {
        if keep_point[i] {
            new_index[i] = points.len();
            points.push(*p);
        }
    }
    let mut gt_segments = Vec::new();
    let mut gt_classes = Vec::new();
    let mut segmentation = vec![-1i64; points.len()];
    for (s, members) in scene.gt_segments.iter().enumerate() {
        if victim_segments.contains(&s) {
            continue;
        }
        let remapped: Vec<usize> = members.iter().map(|&p| new_index[p]).collect();
        for &p in &remapped {
            segmentation[p] = gt_segments.len() as i64;
        }
        gt_segments.push(remapped);
        gt_classes.push(scene.gt_classes[s].clone());
    }
    Ok((
        SynthScene {
            scene: Scene {
                name: scene.scene.name.as_ref().map(|n| format!("{n}-no-{class}")),
                points,
                cameras: scene.scene.cameras.clone(),
            },
            segmentation,
            gt_segments,
            gt_classes,
            taxonomy: scene.taxonomy.clone(),
        },
        hidden,
    ))
}

fn bp(
    name: &str,
    class: &str,
    object: &str,
    shape: Shape,
    placement: Placement,
    color: [f64; 3],
) -> Blueprint {
    Blueprint {
        name: name.into(),
        class: class.into(),
        object: object.into(),
        shape,
        placement,
        color,
    }
}

/// Office-like rooms with deliberately ambiguous appearance: table tops and
/// chair bases share color, size, and height range, as do monitors and chair
/// back rests. Only the relative arrangement (what sits above, beside, or in
/// front of what) disambiguates them, which is exactly what the context
/// experiments need.
pub fn office_small() -> SceneTemplate {
    let slab = [0.5, 0.55, 0.6];
    let panel = [0.55, 0.5, 0.6];
    let z_top = [0.55, 0.8];
    let dz_panel = [0.2, 0.3];
    let mut blueprints = vec![
        bp(
            "floor",
            "floor",
            "floor",
            Shape::HorizontalPatch { x: 3.6, y: 3.6 },
            Placement::At { position: [2.0, 2.0, 0.0] },
            [0.45, 0.35, 0.25],
        ),
        bp(
            "wall",
            "wall",
            "wall",
            Shape::VerticalPatch { width: 3.6, height: 2.2 },
            Placement::At { position: [2.0, 0.02, 1.12] },
            [0.8, 0.75, 0.65],
        ),
    ];
    for t in 0..2 {
        let table = format!("table{t}");
        blueprints.push(bp(
            &table,
            "tableTop",
            "table",
            Shape::HorizontalPatch { x: 0.9, y: 0.6 },
            Placement::InRoom { margin: 1.0, z: z_top },
            slab,
        ));
        blueprints.push(bp(
            &format!("leg{t}"),
            "tableLeg",
            "table",
            Shape::VerticalPatch { width: 0.08, height: 0.42 },
            Placement::OnTopOf { anchor: table.clone(), dz: [-0.24, -0.23], offset: [0.1, 0.25] },
            [0.25, 0.25, 0.28],
        ));
    }
    blueprints.push(bp(
        "monitor",
        "monitor",
        "monitor",
        Shape::VerticalPatch { width: 0.45, height: 0.35 },
        Placement::OnTopOf { anchor: "table0".into(), dz: dz_panel, offset: [0.05, 0.15] },
        panel,
    ));
    blueprints.push(bp(
        "keyboard",
        "keyboard",
        "keyboard",
        Shape::HorizontalPatch { x: 0.4, y: 0.15 },
        Placement::InFrontOf { anchor: "monitor".into(), distance: [0.25, 0.35], dz: [-0.28, -0.2] },
        [0.1, 0.1, 0.12],
    ));
    for c in 0..2 {
        let base = format!("chair{c}");
        blueprints.push(bp(
            &base,
            "chairBase",
            "chair",
            Shape::HorizontalPatch { x: 0.9, y: 0.6 },
            Placement::InRoom { margin: 1.0, z: z_top },
            slab,
        ));
        blueprints.push(bp(
            &format!("rest{c}"),
            "chairBackRest",
            "chair",
            Shape::VerticalPatch { width: 0.45, height: 0.35 },
            Placement::Beside { anchor: base.clone(), distance: [0.38, 0.48], dz: dz_panel },
            panel,
        ));
    }
    SceneTemplate {
        name: "office_small".into(),
        room: [4.0, 4.0, 2.5],
        camera_count: 3,
        camera_radius: 1.2,
        camera_height: 1.3,
        point_spacing: 0.04,
        position_noise: 0.003,
        color_noise: 0.02,
        scene_count: 20,
        blueprints,
    }
}

/// Two identical-looking slabs whose only difference is which one sits on
/// top of the other: appearance alone cannot do much better than chance.
pub fn ambiguous_pair() -> SceneTemplate {
    let color = [0.5, 0.5, 0.55];
    SceneTemplate {
        name: "ambiguous_pair".into(),
        room: [3.0, 3.0, 2.2],
        camera_count: 2,
        camera_radius: 1.0,
        camera_height: 1.1,
        point_spacing: 0.03,
        position_noise: 0.002,
        color_noise: 0.02,
        scene_count: 16,
        blueprints: vec![
            bp(
                "base",
                "blockBase",
                "blockBase",
                Shape::HorizontalPatch { x: 0.5, y: 0.4 },
                Placement::InRoom { margin: 0.8, z: [0.2, 1.6] },
                color,
            ),
            bp(
                "top",
                "blockTop",
                "blockTop",
                Shape::HorizontalPatch { x: 0.5, y: 0.4 },
                Placement::OnTopOf { anchor: "base".into(), dz: [0.15, 0.25], offset: [0.0, 0.05] },
                color,
            ),
        ],
    }
}
