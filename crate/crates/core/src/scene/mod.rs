//! Data model for scenes, segments, scene graphs, labelings, and class
//! taxonomies, plus the on-disk formats for all of them.
//!
//! Scenes are assumed to be pre-aligned: the z-axis is vertical and the
//! ground sits at zero height. No registration is performed here.

mod graph;
mod io;
pub(crate) mod segment;

pub use graph::{build_graph, DirectedFeatures, GraphEdge, SceneGraph, TypeVectors};
pub use io::{
    load_labels, load_scene, load_segmentation, load_taxonomy, save_labels, save_scene,
    save_segmentation, save_taxonomy, segmentation_to_segments,
};
pub use segment::{segment_geometry, Segment};

use crate::error::{Error, Result};
use crate::geom::Aabb;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A colored point with the index of the camera that captured it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    pub position: [f64; 3],
    pub color: [f64; 3],
    pub camera_index: usize,
}

impl ScenePoint {
    pub fn pos(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// An aligned, stitched point cloud together with the camera positions the
/// views were captured from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub name: Option<String>,
    pub points: Vec<ScenePoint>,
    pub cameras: Vec<[f64; 3]>,
}

impl Scene {
    pub fn camera_pos(&self, index: usize) -> Vector3<f64> {
        Vector3::from(self.cameras[index])
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.pos()).collect()
    }

    pub fn bbox(&self) -> Aabb {
        let mut b = Aabb::empty();
        for p in &self.points {
            b.grow(&p.pos());
        }
        b
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidData("scene has no points".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("non-finite coordinate at point {i}")));
            }
            if p.camera_index >= self.cameras.len() {
                return Err(Error::InvalidData(format!(
                    "camera index out of range at point {i}: {} of {}",
                    p.camera_index,
                    self.cameras.len()
                )));
            }
        }
        if self.bbox().diagonal() <= 0.0 {
            return Err(Error::InvalidData("scene bounding box is degenerate".into()));
        }
        Ok(())
    }
}

/// Class set plus the grouping of classes into parent objects
/// (e.g. chairBase and chairBackRest are both parts of chair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    /// Ordered class list; class index everywhere refers to this order.
    pub classes: Vec<String>,
    /// class name -> parent object name. Every class has exactly one parent.
    pub objects: BTreeMap<String, String>,
}

impl Taxonomy {
    pub fn new(classes: Vec<String>, objects: BTreeMap<String, String>) -> Result<Self> {
        let t = Taxonomy { classes, objects };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidData("taxonomy has no classes".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c.clone()) {
                return Err(Error::InvalidData(format!("duplicate class `{c}`")));
            }
            if !self.objects.contains_key(c) {
                return Err(Error::InvalidData(format!("class `{c}` has no parent object")));
            }
        }
        for c in self.objects.keys() {
            if !seen.contains(c) {
                return Err(Error::InvalidData(format!(
                    "object map mentions unknown class `{c}`"
                )));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    /// True when classes `l` and `k` are parts of the same parent object.
    /// Self pairs are always true since every class belongs to one object.
    pub fn same_object(&self, l: usize, k: usize) -> bool {
        self.objects[&self.classes[l]] == self.objects[&self.classes[k]]
    }

    /// Stable content hash used to detect model/taxonomy mismatches.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |s: &str| {
            for &b in s.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x1_0000_0000_01b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x1_0000_0000_01b3);
        };
        for c in &self.classes {
            eat(c);
            eat(&self.objects[c]);
        }
        h
    }
}

/// Which per-segment label-count constraint a labeling lives under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    /// Every segment carries exactly one class.
    ExactlyOne,
    /// A segment may remain unlabeled but never carries two classes.
    AtMostOne,
    /// Independent binary attributes; any number per segment.
    Multilabel,
}

/// Per-segment, per-class indicator values. Integral labelings use {0,1};
/// relaxed labelings are half-integral with values in {0, 0.5, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub mode: LabelMode,
    pub num_classes: usize,
    /// Row-major [segment][class].
    pub values: Vec<f64>,
}

impl Labeling {
    pub fn zeros(mode: LabelMode, num_segments: usize, num_classes: usize) -> Self {
        Labeling {
            mode,
            num_classes,
            values: vec![0.0; num_segments * num_classes],
        }
    }

    /// Integral exactly-one labeling from per-segment class indices.
    pub fn from_classes(classes: &[usize], num_classes: usize) -> Self {
        let mut l = Labeling::zeros(LabelMode::ExactlyOne, classes.len(), num_classes);
        for (i, &k) in classes.iter().enumerate() {
            l.set(i, k, 1.0);
        }
        l
    }

    /// At-most-one labeling from optional per-segment class indices.
    pub fn from_optional_classes(classes: &[Option<usize>], num_classes: usize) -> Self {
        let mut l = Labeling::zeros(LabelMode::AtMostOne, classes.len(), num_classes);
        for (i, k) in classes.iter().enumerate() {
            if let Some(k) = k {
                l.set(i, *k, 1.0);
            }
        }
        l
    }

    pub fn num_segments(&self) -> usize {
        if self.num_classes == 0 {
            0
        } else {
            self.values.len() / self.num_classes
        }
    }

    pub fn get(&self, segment: usize, class: usize) -> f64 {
        self.values[segment * self.num_classes + class]
    }

    pub fn set(&mut self, segment: usize, class: usize, v: f64) {
        self.values[segment * self.num_classes + class] = v;
    }

    pub fn is_integral(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn is_half_integral(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 0.5 || v == 1.0)
    }

    /// Fraction of entries that are integral.
    pub fn integrality_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 1.0;
        }
        let n = self.values.iter().filter(|&&v| v == 0.0 || v == 1.0).count();
        n as f64 / self.values.len() as f64
    }

    /// The class predicted for a segment: the class with value exactly 1.
    /// Fractional or all-zero segments yield `None`.
    pub fn predicted_class(&self, segment: usize) -> Option<usize> {
        (0..self.num_classes).find(|&k| self.get(segment, k) == 1.0)
    }

    /// All classes set to 1 on a segment (multilabel view).
    pub fn predicted_classes(&self, segment: usize) -> Vec<usize> {
        (0..self.num_classes)
            .filter(|&k| self.get(segment, k) == 1.0)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_half_integral() {
            return Err(Error::InvalidData(
                "labeling values must lie in {0, 0.5, 1}".into(),
            ));
        }
        if self.is_integral() {
            for i in 0..self.num_segments() {
                let s: f64 = (0..self.num_classes).map(|k| self.get(i, k)).sum();
                match self.mode {
                    LabelMode::ExactlyOne if s != 1.0 => {
                        return Err(Error::InvalidData(format!(
                            "segment {i} carries {s} labels in exactly-one mode"
                        )))
                    }
                    LabelMode::AtMostOne if s > 1.0 => {
                        return Err(Error::InvalidData(format!(
                            "segment {i} carries {s} labels in at-most-one mode"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
