//! Checkpoint files: the shared tensor container with a header describing
//! the configurations, counters and random-generator states.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::buffer::ImageBuffer;
use super::config::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
use super::state::GanWeights;
use super::MsganError;
use crate::nn::{Adam, AdamConfig, Container, ParamSet, Tensor};

const KIND: &str = "msgan_checkpoint";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngState {
    seed_hex: String,
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn of(rng: &ChaCha8Rng) -> Self {
        let seed_hex = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        Self { seed_hex, stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    fn restore(&self) -> Result<ChaCha8Rng, MsganError> {
        let bad = || MsganError::Checkpoint("bad rng state".into());
        if self.seed_hex.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed_hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    kind: String,
    format_version: u32,
    generator: GeneratorConfig,
    discriminator: DiscriminatorConfig,
    train: Option<TrainConfig>,
    adam: AdamConfig,
    epoch: usize,
    steps: u64,
    init_seed: u64,
    optimizer_steps: [u64; 4],
    buffer_capacity: usize,
    buffer_x_len: usize,
    buffer_y_len: usize,
    rng_buffer_x: RngState,
    rng_buffer_y: RngState,
}

const NETS: [&str; 4] = ["g", "f", "d_x", "d_y"];

fn nets(w: &GanWeights) -> [&ParamSet<f32>; 4] {
    [&w.g, &w.f, &w.d_x, &w.d_y]
}

fn opts(w: &GanWeights) -> [&Adam<f32>; 4] {
    [&w.opt_g, &w.opt_f, &w.opt_dx, &w.opt_dy]
}

/// Serializes weights, optimizer moments, power-iteration vectors and image
/// buffers. `train` is stored for resuming.
pub fn to_bytes(w: &GanWeights, train: Option<&TrainConfig>) -> Vec<u8> {
    let meta = Meta {
        kind: KIND.into(),
        format_version: FORMAT_VERSION,
        generator: w.generator,
        discriminator: w.discriminator,
        train: train.copied(),
        adam: w.opt_g.config,
        epoch: w.epoch,
        steps: w.steps,
        init_seed: w.init_seed,
        optimizer_steps: opts(w).map(|o| o.step),
        buffer_capacity: w.buffer_x.capacity(),
        buffer_x_len: w.buffer_x.len(),
        buffer_y_len: w.buffer_y.len(),
        rng_buffer_x: RngState::of(&w.buffer_x.rng),
        rng_buffer_y: RngState::of(&w.buffer_y.rng),
    };
    let mut c = Container::new(serde_json::to_value(&meta).expect("checkpoint metadata serializes"));
    for (net, (params, opt)) in NETS.iter().zip(nets(w).iter().zip(opts(w))) {
        for (i, (name, t)) in params.iter().enumerate() {
            c.push(format!("{net}/{name}"), t.clone());
            c.push(format!("adam_m/{net}/{name}"), opt.m[i].clone());
            c.push(format!("adam_v/{net}/{name}"), opt.v[i].clone());
        }
    }
    for (tag, us) in [("sn/d_x", &w.sn_x), ("sn/d_y", &w.sn_y)] {
        for (i, u) in us.iter().enumerate() {
            c.push(format!("{tag}/{i}"), Tensor::new(vec![u.len()], u.clone()));
        }
    }
    for (tag, b) in [("buffer/x", &w.buffer_x), ("buffer/y", &w.buffer_y)] {
        for (i, img) in b.images().iter().enumerate() {
            c.push(format!("{tag}/{i}"), img.clone());
        }
    }
    c.to_bytes()
}

/// A decoded checkpoint.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub weights: GanWeights,
    pub train: Option<TrainConfig>,
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, MsganError> {
    let c = Container::from_bytes(bytes).map_err(|e| MsganError::Checkpoint(e.to_string()))?;
    let meta: Meta =
        serde_json::from_value(c.meta.clone()).map_err(|e| MsganError::Checkpoint(format!("header: {e}")))?;
    if meta.kind != KIND || meta.format_version != FORMAT_VERSION {
        return Err(MsganError::Checkpoint(format!("unsupported checkpoint {} v{}", meta.kind, meta.format_version)));
    }
    // Rebuild the layout from the configs, then fill every tensor from the file.
    let mut w = GanWeights::init(meta.generator, meta.discriminator, meta.buffer_capacity, meta.adam, meta.init_seed)?;
    let need = |name: String, like: &Tensor<f32>| -> Result<Tensor<f32>, MsganError> {
        let t = c.require(&name).map_err(|e| MsganError::Checkpoint(e.to_string()))?;
        if t.shape() != like.shape() {
            return Err(MsganError::Checkpoint(format!("tensor {name} has shape {:?}", t.shape())));
        }
        Ok(t.clone())
    };
    {
        let GanWeights { g, f, d_x, d_y, opt_g, opt_f, opt_dx, opt_dy, .. } = &mut w;
        let pairs: [(&mut ParamSet<f32>, &mut Adam<f32>); 4] = [(g, opt_g), (f, opt_f), (d_x, opt_dx), (d_y, opt_dy)];
        for ((net, (params, opt)), step) in NETS.iter().zip(pairs).zip(meta.optimizer_steps) {
            let names = params.names().to_vec();
            for (i, name) in names.iter().enumerate() {
                let t = params.get_mut(name).expect("name from the set");
                *t = need(format!("{net}/{name}"), t)?;
                opt.m[i] = need(format!("adam_m/{net}/{name}"), &opt.m[i])?;
                opt.v[i] = need(format!("adam_v/{net}/{name}"), &opt.v[i])?;
            }
            opt.step = step;
        }
    }
    for (tag, us) in [("sn/d_x", &mut w.sn_x), ("sn/d_y", &mut w.sn_y)] {
        for (i, u) in us.iter_mut().enumerate() {
            *u = need(format!("{tag}/{i}"), &Tensor::zeros(vec![u.len()]))?.into_data();
        }
    }
    let image_shape = vec![1, 3, meta.generator.input_size, meta.generator.input_size];
    let buffer = |tag: &str, len: usize, rng: &RngState| -> Result<ImageBuffer, MsganError> {
        let images = (0..len)
            .map(|i| need(format!("{tag}/{i}"), &Tensor::zeros(image_shape.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        if len > meta.buffer_capacity {
            return Err(MsganError::Checkpoint("buffer exceeds its capacity".into()));
        }
        Ok(ImageBuffer::from_parts(meta.buffer_capacity, images, rng.restore()?))
    };
    w.buffer_x = buffer("buffer/x", meta.buffer_x_len, &meta.rng_buffer_x)?;
    w.buffer_y = buffer("buffer/y", meta.buffer_y_len, &meta.rng_buffer_y)?;
    let expected = c.tensors.len();
    let used = nets(&w).iter().map(|p| 3 * p.len()).sum::<usize>()
        + w.sn_x.len()
        + w.sn_y.len()
        + meta.buffer_x_len
        + meta.buffer_y_len;
    if used != expected {
        return Err(MsganError::Checkpoint(format!("{} unexpected tensors", expected.abs_diff(used))));
    }
    w.epoch = meta.epoch;
    w.steps = meta.steps;
    if !w.all_finite() {
        return Err(MsganError::Checkpoint("non-finite parameters".into()));
    }
    Ok(Checkpoint { weights: w, train: meta.train })
}

/// Writes a checkpoint atomically (temporary file, then rename).
pub fn save(path: &Path, w: &GanWeights, train: Option<&TrainConfig>) -> Result<(), MsganError> {
    crate::io_util::write_atomic(path, &to_bytes(w, train))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, MsganError> {
    from_bytes(&std::fs::read(path)?)
}
