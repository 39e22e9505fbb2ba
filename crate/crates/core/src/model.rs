//! The linear discriminant over a scene graph and its weight layout.
//!
//! A labeling scores as the sum of per-segment class terms and per-edge
//! class-pair terms. Each edge feature type carries a class-pair graph that
//! decides which ordered pairs (l, k) get their own weight block: self loops
//! only (associative), all ordered pairs (non-associative), or pairs of
//! classes belonging to the same parent object. The parsimonious variant
//! assigns the visual-similarity types to the object-associative set and the
//! geometric-arrangement types to the non-associative set, which keeps the
//! parameter count far below a fully non-associative model when classes
//! outnumber object parts.

use crate::error::{Error, Result};
use crate::features::{edge_type_layout, Binner, EDGE_TYPES};
use crate::scene::{Labeling, SceneGraph, Taxonomy};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NodeOnly,
    Assoc,
    Nonassoc,
    Parsimon,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "node_only" => Ok(Variant::NodeOnly),
            "assoc" => Ok(Variant::Assoc),
            "nonassoc" => Ok(Variant::Nonassoc),
            "parsimon" => Ok(Variant::Parsimon),
            _ => Err(Error::InvalidData(format!("unknown variant `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructure {
    pub taxonomy: Taxonomy,
    pub variant: Variant,
    /// Binned node feature dimension.
    pub node_dim: usize,
    /// Binned edge feature dimension per type, parallel to `EDGE_TYPES`.
    pub edge_dims: Vec<usize>,
}

/// Flat-weight addressing derived from a structure: node blocks first (one
/// per class), then per edge type the blocks of its class pairs in
/// lexicographic (l, k) order.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    pub num_classes: usize,
    pub node_dim: usize,
    pub edge_dims: Vec<usize>,
    /// Ordered pairs carrying a weight block, per type.
    pub pairs: Vec<Vec<(usize, usize)>>,
    /// [t][l * K + k] -> index into `pairs[t]`.
    pair_lookup: Vec<Vec<Option<usize>>>,
    /// Flat offset of each type's first block.
    type_offsets: Vec<usize>,
    pub total: usize,
}

impl ModelStructure {
    pub fn new(taxonomy: Taxonomy, variant: Variant, node_dim: usize, edge_dims: Vec<usize>) -> Result<Self> {
        taxonomy.validate()?;
        if edge_dims.len() != EDGE_TYPES.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} edge dims, got {}",
                EDGE_TYPES.len(),
                edge_dims.len()
            )));
        }
        Ok(ModelStructure { taxonomy, variant, node_dim, edge_dims })
    }

    pub fn from_binner(taxonomy: Taxonomy, variant: Variant, binner: &Binner) -> Result<Self> {
        let edge_dims = EDGE_TYPES.iter().map(|&t| binner.edge_binned_dim(t)).collect();
        ModelStructure::new(taxonomy, variant, binner.node_binned_dim(), edge_dims)
    }

    pub fn num_classes(&self) -> usize {
        self.taxonomy.num_classes()
    }

    fn type_pairs(&self, type_idx: usize) -> Vec<(usize, usize)> {
        let k_total = self.num_classes();
        let object_associative = edge_type_layout(EDGE_TYPES[type_idx]).object_associative;
        let mut pairs = Vec::new();
        for l in 0..k_total {
            for k in 0..k_total {
                let keep = match self.variant {
                    Variant::NodeOnly => false,
                    Variant::Assoc => l == k,
                    Variant::Nonassoc => true,
                    Variant::Parsimon => {
                        if object_associative {
                            self.taxonomy.same_object(l, k)
                        } else {
                            true
                        }
                    }
                };
                if keep {
                    pairs.push((l, k));
                }
            }
        }
        pairs
    }

    pub fn layout(&self) -> BlockLayout {
        let k_total = self.num_classes();
        let mut pairs = Vec::new();
        let mut pair_lookup = Vec::new();
        let mut type_offsets = Vec::new();
        let mut offset = k_total * self.node_dim;
        for t in 0..EDGE_TYPES.len() {
            let p = self.type_pairs(t);
            let mut lookup = vec![None; k_total * k_total];
            for (idx, &(l, k)) in p.iter().enumerate() {
                lookup[l * k_total + k] = Some(idx);
            }
            type_offsets.push(offset);
            offset += p.len() * self.edge_dims[t];
            pairs.push(p);
            pair_lookup.push(lookup);
        }
        BlockLayout {
            num_classes: k_total,
            node_dim: self.node_dim,
            edge_dims: self.edge_dims.clone(),
            pairs,
            pair_lookup,
            type_offsets,
            total: offset,
        }
    }

    /// Total number of parameters.
    pub fn parameter_count(&self) -> usize {
        self.layout().total
    }
}

impl BlockLayout {
    pub fn node_offset(&self, class: usize) -> usize {
        class * self.node_dim
    }

    /// Flat offset of the (l, k) block of type `t`, when that pair is
    /// modeled.
    pub fn edge_offset(&self, t: usize, l: usize, k: usize) -> Option<usize> {
        self.pair_lookup[t][l * self.num_classes + k]
            .map(|idx| self.type_offsets[t] + idx * self.edge_dims[t])
    }
}

/// Structure plus a flat weight vector in the layout above.
#[derive(Debug, Clone)]
pub struct Weights {
    structure: ModelStructure,
    layout: BlockLayout,
    w: Vec<f64>,
}

impl Weights {
    pub fn zeros(structure: ModelStructure) -> Weights {
        let layout = structure.layout();
        let w = vec![0.0; layout.total];
        Weights { structure, layout, w }
    }

    pub fn from_flat(structure: ModelStructure, w: Vec<f64>) -> Result<Weights> {
        let layout = structure.layout();
        if w.len() != layout.total {
            return Err(Error::DimensionMismatch(format!(
                "weight vector has {} entries, layout needs {}",
                w.len(),
                layout.total
            )));
        }
        Ok(Weights { structure, layout, w })
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn flat(&self) -> &[f64] {
        &self.w
    }

    pub fn set_flat(&mut self, w: Vec<f64>) -> Result<()> {
        if w.len() != self.layout.total {
            return Err(Error::DimensionMismatch("weight length changed".into()));
        }
        self.w = w;
        Ok(())
    }

    pub fn node_block(&self, class: usize) -> &[f64] {
        let o = self.layout.node_offset(class);
        &self.w[o..o + self.layout.node_dim]
    }

    pub fn edge_block(&self, t: usize, l: usize, k: usize) -> Option<&[f64]> {
        self.layout
            .edge_offset(t, l, k)
            .map(|o| &self.w[o..o + self.layout.edge_dims[t]])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            structure: self.structure.clone(),
            taxonomy_digest: self.structure.taxonomy.digest(),
            weights: self.w.clone(),
        };
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), &file)
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }

    pub fn load(path: &Path) -> Result<Weights> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Json { path: path.into(), source: e })?;
        if file.taxonomy_digest != file.structure.taxonomy.digest() {
            return Err(Error::StructureMismatch(
                "taxonomy digest does not match the stored taxonomy".into(),
            ));
        }
        Weights::from_flat(file.structure, file.weights)
    }

    /// Check that a featurized graph matches this model's dimensions.
    pub fn check_graph(&self, graph: &SceneGraph) -> Result<()> {
        if graph.node_binned.len() != graph.segments.len() {
            return Err(Error::InvalidData("graph is not featurized (no binned features)".into()));
        }
        for row in &graph.node_binned {
            if row.len() != self.structure.node_dim {
                return Err(Error::StructureMismatch(format!(
                    "graph node feature dim {} vs model {}",
                    row.len(),
                    self.structure.node_dim
                )));
            }
        }
        for e in &graph.edge_binned {
            for dir in [&e.forward, &e.backward] {
                for (t, v) in dir.iter().enumerate() {
                    if v.len() != self.structure.edge_dims[t] {
                        return Err(Error::StructureMismatch(format!(
                            "graph edge type {t} dim {} vs model {}",
                            v.len(),
                            self.structure.edge_dims[t]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    structure: ModelStructure,
    taxonomy_digest: u64,
    weights: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn check_dims(weights: &Weights, graph: &SceneGraph, labeling: &Labeling) -> Result<()> {
    if labeling.num_classes != weights.structure.num_classes()
        || labeling.num_segments() != graph.segments.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "labeling is {} x {}, graph has {} segments, model has {} classes",
            labeling.num_segments(),
            labeling.num_classes,
            graph.segments.len(),
            weights.structure.num_classes()
        )));
    }
    weights.check_graph(graph)
}

/// Score a (possibly fractional) labeling. Each undirected edge contributes
/// through both of its stored orientations. Pair activations for fractional
/// labels use `min(y_i^l, y_j^k)`, the largest value admitted by the linear
/// coupling constraints; on integral labelings that equals the product.
pub fn discriminant(weights: &Weights, graph: &SceneGraph, labeling: &Labeling) -> Result<f64> {
    check_dims(weights, graph, labeling)?;
    let k_total = labeling.num_classes;
    let mut score = 0.0;
    for i in 0..graph.segments.len() {
        for k in 0..k_total {
            let y = labeling.get(i, k);
            if y != 0.0 {
                score += y * dot(weights.node_block(k), &graph.node_binned[i]);
            }
        }
    }
    for (e, feats) in graph.edges.iter().zip(graph.edge_binned.iter()) {
        for (a, b, dir) in [(e.i, e.j, &feats.forward), (e.j, e.i, &feats.backward)] {
            for t in 0..EDGE_TYPES.len() {
                for &(l, k) in &weights.layout.pairs[t] {
                    let z = labeling.get(a, l).min(labeling.get(b, k));
                    if z != 0.0 {
                        if let Some(block) = weights.edge_block(t, l, k) {
                            score += z * dot(block, &dir[t]);
                        }
                    }
                }
            }
        }
    }
    Ok(score)
}

/// Stacked feature map with the same layout as the weights, so that
/// `w . joint_feature(x, y) == discriminant(w, x, y)` exactly.
pub fn build_joint_feature(layout: &BlockLayout, graph: &SceneGraph, labeling: &Labeling) -> Vec<f64> {
    build_joint_feature_inner(layout, graph, labeling, None)
}

/// Variant taking explicit pair activations, indexed
/// `[edge * K * K + l * K + k]` for the (l on i, k on j) pair of each stored
/// edge (i < j). Relaxed inference returns these; they differ from the
/// min rule only on fractional solutions with negative pair coefficients.
pub fn build_joint_feature_with_z(
    layout: &BlockLayout,
    graph: &SceneGraph,
    labeling: &Labeling,
    z: &[f64],
) -> Vec<f64> {
    build_joint_feature_inner(layout, graph, labeling, Some(z))
}

fn build_joint_feature_inner(
    layout: &BlockLayout,
    graph: &SceneGraph,
    labeling: &Labeling,
    z_override: Option<&[f64]>,
) -> Vec<f64> {
    let k_total = labeling.num_classes;
    let mut psi = vec![0.0; layout.total];
    for i in 0..graph.segments.len() {
        for k in 0..k_total {
            let y = labeling.get(i, k);
            if y != 0.0 {
                let o = layout.node_offset(k);
                for (d, &f) in graph.node_binned[i].iter().enumerate() {
                    psi[o + d] += y * f;
                }
            }
        }
    }
    for (ei, (e, feats)) in graph.edges.iter().zip(graph.edge_binned.iter()).enumerate() {
        for t in 0..EDGE_TYPES.len() {
            for &(l, k) in &layout.pairs[t] {
                // forward orientation: l on i, k on j
                let z_fwd = match z_override {
                    Some(z) => z[ei * k_total * k_total + l * k_total + k],
                    None => labeling.get(e.i, l).min(labeling.get(e.j, k)),
                };
                // backward orientation: l on j, k on i
                let z_bwd = match z_override {
                    Some(z) => z[ei * k_total * k_total + k * k_total + l],
                    None => labeling.get(e.j, l).min(labeling.get(e.i, k)),
                };
                if z_fwd == 0.0 && z_bwd == 0.0 {
                    continue;
                }
                let o = layout.edge_offset(t, l, k).unwrap();
                for d in 0..layout.edge_dims[t] {
                    psi[o + d] += z_fwd * feats.forward[t][d] + z_bwd * feats.backward[t][d];
                }
            }
        }
    }
    psi
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::geom::Aabb;
    use crate::scene::{DirectedFeatures, GraphEdge, Segment};
    use std::collections::BTreeMap;

    /// Classes c0..c{k-1} grouped pairwise into objects, so parsimonious
    /// layouts have real multi-part objects to work with.
    pub fn toy_taxonomy(k: usize) -> Taxonomy {
        let classes: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let mut objects = BTreeMap::new();
        for (i, c) in classes.iter().enumerate() {
            objects.insert(c.clone(), format!("obj{}", i / 2));
        }
        Taxonomy::new(classes, objects).unwrap()
    }

    /// A featurized graph with random 0/1 feature vectors; segments are
    /// placeholders (one synthetic point each).
    pub fn tiny_graph(
        n: usize,
        edges: &[(usize, usize)],
        node_dim: usize,
        edge_dims: &[usize],
        rng: &mut impl rand::Rng,
    ) -> SceneGraph {
        let segments: Vec<Segment> = (0..n)
            .map(|i| Segment {
                point_indices: vec![i],
                points: vec![[i as f64, 0.0, 0.0]],
                centroid: [i as f64, 0.0, 0.0],
                normal: [0.0, 0.0, 1.0],
                camera_ray: [0.0, 0.0, -1.0],
                horizontal_ray: [0.0, 0.0, 0.0],
                eigenvalues: [0.0, 0.1, 0.2],
                camera_index: 0,
                degenerate: false,
                bbox: Aabb { min: [i as f64, 0.0, 0.0], max: [i as f64, 0.0, 0.0] },
            })
            .collect();
        fn rand_vec(rng: &mut impl rand::Rng, d: usize) -> Vec<f64> {
            (0..d).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect()
        }
        let mut g = SceneGraph {
            segments,
            edges: edges.iter().map(|&(i, j)| GraphEdge { i, j, min_distance: 0.1 }).collect(),
            context_range: 0.3,
            scene_bbox: Aabb { min: [0.0; 3], max: [n as f64, 1.0, 1.0] },
            node_raw: Vec::new(),
            node_binned: (0..n).map(|_| rand_vec(rng, node_dim)).collect(),
            edge_raw: Vec::new(),
            edge_binned: edges
                .iter()
                .map(|_| DirectedFeatures {
                    forward: edge_dims.iter().map(|&d| rand_vec(rng, d)).collect(),
                    backward: edge_dims.iter().map(|&d| rand_vec(rng, d)).collect(),
                })
                .collect(),
            labels: None,
        };
        g.node_raw = g.node_binned.clone();
        g.edge_raw = g.edge_binned.clone();
        g
    }
}
