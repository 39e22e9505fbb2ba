//! Cumulative binning: each scalar becomes `n` nested binary indicators.
//!
//! Thresholds are dataset percentiles (nearest-rank). Bit i is set when the
//! value lies in [dataset_min, th_i); the last interval is closed on the
//! right so the dataset maximum stays representable. Smaller values set more
//! bits, and bit i implies bit i+1. Scalars that are already binary pass
//! through unchanged.

use crate::error::{Error, Result};
use crate::features::{edge_type_layout, EdgeType, EDGE_TYPES, NODE_RAW_DIM};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarBinner {
    /// Emit the raw value untouched (already 0/1).
    PassThrough,
    Binned { min: f64, thresholds: Vec<f64> },
}

impl ScalarBinner {
    /// Nearest-rank percentiles: threshold i (1-based) is the
    /// (100 i / n)-th percentile of the samples.
    pub fn fit(samples: &[f64], bins: usize) -> Result<ScalarBinner> {
        if samples.is_empty() {
            return Err(Error::InvalidData("cannot fit a binner on no samples".into()));
        }
        if bins == 0 {
            return Err(Error::InvalidData("need at least one bin".into()));
        }
        let mut sorted: Vec<f64> = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let thresholds = (1..=bins)
            .map(|i| sorted[(i * n).div_ceil(bins) - 1])
            .collect();
        Ok(ScalarBinner::Binned { min: sorted[0], thresholds })
    }

    pub fn width(&self) -> usize {
        match self {
            ScalarBinner::PassThrough => 1,
            ScalarBinner::Binned { thresholds, .. } => thresholds.len(),
        }
    }

    pub fn apply_into(&self, value: f64, out: &mut Vec<f64>) {
        match self {
            ScalarBinner::PassThrough => out.push(value),
            ScalarBinner::Binned { min, thresholds } => {
                let n = thresholds.len();
                for (i, &th) in thresholds.iter().enumerate() {
                    let hit = if i + 1 < n {
                        value >= *min && value < th
                    } else {
                        value >= *min && value <= th
                    };
                    out.push(if hit { 1.0 } else { 0.0 });
                }
            }
        }
    }

    pub fn apply(&self, value: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        self.apply_into(value, &mut out);
        out
    }
}

/// Binners for the full node layout and for every edge feature type, fitted
/// on a training dataset and reused verbatim at test time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    pub bins: usize,
    pub node: Vec<ScalarBinner>,
    /// Indexed parallel to [`EDGE_TYPES`]; inner index is the scalar within
    /// the type.
    pub edge: Vec<Vec<ScalarBinner>>,
}

impl Binner {
    /// Fit from per-scalar sample columns. `node_samples[s]` holds every
    /// observed value of node scalar `s`; `edge_samples[t][s]` likewise for
    /// edge type `t` (both edge orientations pooled).
    pub fn fit(node_samples: &[Vec<f64>], edge_samples: &[Vec<Vec<f64>>], bins: usize) -> Result<Binner> {
        if node_samples.len() != NODE_RAW_DIM {
            return Err(Error::DimensionMismatch(format!(
                "expected {NODE_RAW_DIM} node scalar columns, got {}",
                node_samples.len()
            )));
        }
        let node = node_samples
            .iter()
            .map(|col| ScalarBinner::fit(col, bins))
            .collect::<Result<Vec<_>>>()?;
        let mut edge = Vec::new();
        for (t, ty) in EDGE_TYPES.iter().enumerate() {
            let layout = edge_type_layout(*ty);
            let cols = &edge_samples[t];
            if cols.len() != layout.raw_dim {
                return Err(Error::DimensionMismatch(format!(
                    "edge type {ty:?}: expected {} scalar columns, got {}",
                    layout.raw_dim,
                    cols.len()
                )));
            }
            let mut per_scalar = Vec::new();
            for (s, col) in cols.iter().enumerate() {
                if layout.binary_scalars.contains(&s) {
                    per_scalar.push(ScalarBinner::PassThrough);
                } else {
                    per_scalar.push(ScalarBinner::fit(col, bins)?);
                }
            }
            edge.push(per_scalar);
        }
        Ok(Binner { bins, node, edge })
    }

    pub fn node_binned_dim(&self) -> usize {
        self.node.iter().map(|b| b.width()).sum()
    }

    /// Bit offset of one node scalar within the binned node vector.
    pub fn node_scalar_offset(&self, scalar: usize) -> usize {
        self.node[..scalar].iter().map(|b| b.width()).sum()
    }

    /// Bin a single node scalar into its slot of a full binned node vector.
    pub fn bin_node_scalar_into(&self, scalar: usize, value: f64, out: &mut [f64]) {
        let offset = self.node_scalar_offset(scalar);
        let mut bits = Vec::new();
        self.node[scalar].apply_into(value, &mut bits);
        out[offset..offset + bits.len()].copy_from_slice(&bits);
    }

    pub fn edge_binned_dim(&self, ty: EdgeType) -> usize {
        let t = EDGE_TYPES.iter().position(|&x| x == ty).unwrap();
        self.edge[t].iter().map(|b| b.width()).sum()
    }

    pub fn apply_node(&self, raw: &[f64]) -> Vec<f64> {
        debug_assert_eq!(raw.len(), NODE_RAW_DIM);
        let mut out = Vec::with_capacity(self.node_binned_dim());
        for (b, &v) in self.node.iter().zip(raw.iter()) {
            b.apply_into(v, &mut out);
        }
        out
    }

    pub fn apply_edge(&self, ty: EdgeType, raw: &[f64]) -> Vec<f64> {
        let t = EDGE_TYPES.iter().position(|&x| x == ty).unwrap();
        let mut out = Vec::new();
        for (b, &v) in self.edge[t].iter().zip(raw.iter()) {
            b.apply_into(v, &mut out);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }

    pub fn load(path: &Path) -> Result<Binner> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Json { path: path.into(), source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_thresholds_on_one_to_hundred() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let b = ScalarBinner::fit(&values, 10).unwrap();
        match &b {
            ScalarBinner::Binned { min, thresholds } => {
                assert_eq!(*min, 1.0);
                let want: Vec<f64> = (1..=10).map(|i| (10 * i) as f64).collect();
                assert_eq!(thresholds, &want);
            }
            _ => panic!("expected a binned scalar"),
        }
        let bits = b.apply(25.0);
        assert_eq!(bits, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn dataset_max_sets_only_the_last_bit() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let b = ScalarBinner::fit(&values, 10).unwrap();
        let bits = b.apply(100.0);
        assert_eq!(bits, vec![0.0; 9].iter().chain([1.0].iter()).copied().collect::<Vec<_>>());
    }

    #[test]
    fn constant_feature_gives_all_zeros_below_and_last_bit_at_value() {
        let b = ScalarBinner::fit(&[5.0, 5.0, 5.0], 4).unwrap();
        assert_eq!(b.apply(4.9), vec![0.0; 4]);
        assert_eq!(b.apply(5.0), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(b.apply(5.1), vec![0.0; 4]);
    }

    #[test]
    fn out_of_range_values_are_all_zero() {
        let values: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let b = ScalarBinner::fit(&values, 10).unwrap();
        assert_eq!(b.apply(0.5), vec![0.0; 10]);
        assert_eq!(b.apply(101.0), vec![0.0; 10]);
    }

    #[test]
    fn bits_are_cumulative_and_monotone_in_value() {
        use rand::Rng;
        let mut rng = crate::rng::substream(13, "binning");
        let values: Vec<f64> = (0..500).map(|_| rng.gen_range(-3.0..7.0)).collect();
        let b = ScalarBinner::fit(&values, 10).unwrap();
        let min = match &b {
            ScalarBinner::Binned { min, .. } => *min,
            _ => unreachable!(),
        };
        // Monotonicity is over the represented range [min, inf); below the
        // dataset minimum every bit is zero by construction.
        let mut draws: Vec<f64> = (0..200)
            .map(|_| rng.gen_range(-3.0..7.0))
            .filter(|&v| v >= min)
            .collect();
        draws.extend_from_slice(&values[..50]);
        for &v in &draws {
            let bits = b.apply(v);
            for i in 0..bits.len() - 1 {
                assert!(bits[i] <= bits[i + 1], "bit {i} set without bit {}", i + 1);
            }
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in draws.windows(2) {
            let lo = b.apply(w[0]);
            let hi = b.apply(w[1]);
            for (a, c) in lo.iter().zip(hi.iter()) {
                assert!(a >= c, "bits must be elementwise non-increasing in the value");
            }
        }
    }
}
