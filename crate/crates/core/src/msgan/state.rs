use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffer::ImageBuffer;
use super::config::{DiscriminatorConfig, GeneratorConfig};
use super::networks::{init_discriminator, init_generator};
use super::{derive_seed, MsganError};
use crate::nn::{Adam, AdamConfig, ParamSet};

/// Complete training state of the two generators and two discriminators.
///
/// `g` restores domain Y from the intermediate domain and `f` restores
/// domain X; `d_x` and `d_y` judge the respective domains.
#[derive(Clone, Debug, PartialEq)]
pub struct GanWeights {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub g: ParamSet<f32>,
    pub f: ParamSet<f32>,
    pub d_x: ParamSet<f32>,
    pub d_y: ParamSet<f32>,
    /// Power-iteration vectors, one per discriminator convolution.
    pub sn_x: Vec<Vec<f32>>,
    pub sn_y: Vec<Vec<f32>>,
    pub opt_g: Adam<f32>,
    pub opt_f: Adam<f32>,
    pub opt_dx: Adam<f32>,
    pub opt_dy: Adam<f32>,
    /// Buffers of generated X and Y images.
    pub buffer_x: ImageBuffer,
    pub buffer_y: ImageBuffer,
    /// Number of completed epochs.
    pub epoch: usize,
    pub steps: u64,
    pub init_seed: u64,
}

impl GanWeights {
    /// Fresh networks drawn from `seed`.
    pub fn init(
        generator: GeneratorConfig,
        discriminator: DiscriminatorConfig,
        buffer_size: usize,
        adam: AdamConfig,
        seed: u64,
    ) -> Result<Self, MsganError> {
        generator.validate()?;
        discriminator.validate()?;
        if discriminator.score_size(generator.input_size).is_none() {
            return Err(MsganError::InvalidConfig(format!(
                "a {}-pixel input is too small for {} discriminator blocks",
                generator.input_size, discriminator.blocks
            )));
        }
        if buffer_size == 0 {
            return Err(MsganError::InvalidConfig("buffer_size must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = init_generator(&generator, &mut rng);
        let f = init_generator(&generator, &mut rng);
        let (d_x, sn_x) = init_discriminator(&discriminator, &mut rng);
        let (d_y, sn_y) = init_discriminator(&discriminator, &mut rng);
        Ok(Self {
            generator,
            discriminator,
            opt_g: Adam::new(adam, &g),
            opt_f: Adam::new(adam, &f),
            opt_dx: Adam::new(adam, &d_x),
            opt_dy: Adam::new(adam, &d_y),
            g,
            f,
            d_x,
            d_y,
            sn_x,
            sn_y,
            buffer_x: ImageBuffer::new(buffer_size, derive_seed(&[seed, 0xB0F_0001])),
            buffer_y: ImageBuffer::new(buffer_size, derive_seed(&[seed, 0xB0F_0002])),
            epoch: 0,
            steps: 0,
            init_seed: seed,
        })
    }

    pub fn all_finite(&self) -> bool {
        [&self.g, &self.f, &self.d_x, &self.d_y].iter().all(|p| p.all_finite())
            && self.sn_x.iter().chain(&self.sn_y).flatten().all(|v| v.is_finite())
    }
}
