use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::imaging::ImageTile;
use crate::nn::{normal_tensor, Container, Graph, ParamSet, Tensor};

const KIND: &str = "fid_encoder";
const SLOPE: f64 = 0.2;

/// Which feature encoder to use. Both kinds share one topology:
/// conv 3→16 (3×3, stride 2) → leaky ReLU → conv 16→32 (3×3, stride 2) →
/// leaky ReLU → conv 32→d (3×3) → global average pooling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EncoderSpec {
    /// Weights loaded from a tensor container file.
    FileWeights { feature_dim: usize, path: PathBuf },
    /// He-initialized random weights drawn from `seed`.
    SeededRandom { feature_dim: usize, seed: u64 },
}

impl EncoderSpec {
    pub fn feature_dim(&self) -> usize {
        match self {
            Self::FileWeights { feature_dim, .. } | Self::SeededRandom { feature_dim, .. } => *feature_dim,
        }
    }
}

/// A built encoder.
#[derive(Clone, Debug)]
pub struct Encoder {
    feature_dim: usize,
    params: ParamSet<f32>,
}

const LAYERS: [(&str, usize); 3] = [("conv1", 16), ("conv2", 32), ("conv3", 0)];

fn layer_shapes(d: usize) -> Vec<(String, Vec<usize>, Vec<usize>)> {
    let mut cin = 3;
    LAYERS
        .iter()
        .map(|(name, c)| {
            let cout = if *c == 0 { d } else { *c };
            let s = (name.to_string(), vec![cout, cin, 3, 3], vec![cout]);
            cin = cout;
            s
        })
        .collect()
}

impl Encoder {
    pub fn from_spec(spec: &EncoderSpec) -> Result<Self, MetricsError> {
        let d = spec.feature_dim();
        if d < 8 {
            return Err(MetricsError::BadWeights(format!("feature_dim must be at least 8, got {d}")));
        }
        match spec {
            EncoderSpec::SeededRandom { seed, .. } => Ok(Self::seeded(d, *seed)),
            EncoderSpec::FileWeights { path, .. } => {
                let e = Self::load(path)?;
                if e.feature_dim != d {
                    return Err(MetricsError::BadWeights(format!(
                        "file has feature_dim {}, spec asks for {d}",
                        e.feature_dim
                    )));
                }
                Ok(e)
            }
        }
    }

    fn seeded(d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, w, b) in layer_shapes(d) {
            let fan_in = (w[1] * 9) as f64;
            params.insert(format!("{name}.w"), normal_tensor(&mut rng, w, (2.0 / fan_in).sqrt()));
            params.insert(format!("{name}.b"), Tensor::zeros(b));
        }
        Self { feature_dim: d, params }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Writes the weights in the tensor container format read by
    /// [`EncoderSpec::FileWeights`].
    pub fn save(&self, path: &Path) -> Result<(), MetricsError> {
        let mut c = Container::new(serde_json::json!({"kind": KIND, "feature_dim": self.feature_dim}));
        for (n, t) in self.params.iter() {
            c.push(n, t.clone());
        }
        crate::io_util::write_atomic(path, &c.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let bytes = std::fs::read(path)?;
        let c = Container::from_bytes(&bytes).map_err(|e| MetricsError::BadWeights(e.to_string()))?;
        if c.meta.get("kind").and_then(|k| k.as_str()) != Some(KIND) {
            return Err(MetricsError::BadWeights("container is not an encoder".into()));
        }
        let d = c
            .meta
            .get("feature_dim")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| MetricsError::BadWeights("missing feature_dim".into()))? as usize;
        if c.tensors.len() != 2 * LAYERS.len() {
            return Err(MetricsError::BadWeights(format!("expected 6 tensors, found {}", c.tensors.len())));
        }
        let mut params = ParamSet::new();
        for (name, w, b) in layer_shapes(d) {
            for (suffix, shape) in [("w", w), ("b", b)] {
                let key = format!("{name}.{suffix}");
                let t = c.require(&key).map_err(|e| MetricsError::BadWeights(e.to_string()))?;
                if t.shape() != shape.as_slice() || !t.all_finite() {
                    return Err(MetricsError::BadWeights(format!("tensor {key} has shape {:?}", t.shape())));
                }
                params.insert(key, t.clone());
            }
        }
        Ok(Self { feature_dim: d, params })
    }

    fn encode_one(&self, tile: &ImageTile) -> Vec<f64> {
        let (w, h) = (tile.width(), tile.height());
        let hw = w * h;
        let mut data = Vec::with_capacity(3 * hw);
        for c in 0..3 {
            data.extend(tile.pixels().iter().skip(c).step_by(3).copied());
        }
        let mut g = Graph::<f32>::new();
        let p = self.params.bind(&mut g, false);
        let mut x = g.constant(Tensor::new(vec![1, 3, h, w], data));
        for (i, (name, _)) in LAYERS.iter().enumerate() {
            let stride = if i < 2 { 2 } else { 1 };
            x = g.conv2d(x, p.var(&format!("{name}.w")), Some(p.var(&format!("{name}.b"))), stride, 1);
            if i < 2 {
                x = g.leaky_relu(x, SLOPE);
            }
        }
        let pooled = g.global_avg_pool(x);
        g.value(pooled).data().iter().map(|v| *v as f64).collect()
    }

    /// Features of every tile as the rows of an `N×d` matrix. Tiles are
    /// encoded independently, so the result does not depend on the thread count.
    pub fn encode(&self, tiles: &[ImageTile]) -> Result<DMatrix<f64>, MetricsError> {
        if tiles.is_empty() {
            return Err(MetricsError::TooFewSamples { found: 0, required: 1 });
        }
        if let Some(t) = tiles.iter().find(|t| t.width() < 4 || t.height() < 4) {
            return Err(MetricsError::ShapeMismatch(format!("tile of {}x{} is too small to encode", t.width(), t.height())));
        }
        let rows: Vec<Vec<f64>> = tiles.par_iter().map(|t| self.encode_one(t)).collect();
        Ok(DMatrix::from_fn(rows.len(), self.feature_dim, |r, c| rows[r][c]))
    }
}

/// Builds the encoder described by `spec` and encodes `tiles`.
pub fn encode_features(spec: &EncoderSpec, tiles: &[ImageTile]) -> Result<DMatrix<f64>, MetricsError> {
    Encoder::from_spec(spec)?.encode(tiles)
}
