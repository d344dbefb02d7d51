use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::Tensor;

/// History of generated images fed to a discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    capacity: usize,
    images: Vec<Tensor<f32>>,
    pub(crate) rng: ChaCha8Rng,
}

impl ImageBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self::from_parts(capacity, Vec::new(), ChaCha8Rng::seed_from_u64(seed))
    }

    pub(crate) fn from_parts(capacity: usize, images: Vec<Tensor<f32>>, rng: ChaCha8Rng) -> Self {
        Self { capacity, images, rng }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor<f32>] {
        &self.images
    }

    /// Returns one image per fresh image. While filling, fresh images are
    /// stored and returned. Once full, each image is swapped with a uniformly
    /// chosen stored one with probability ½ (the stored one is returned),
    /// and passed through otherwise.
    pub fn sample(&mut self, fresh: &[Tensor<f32>]) -> Vec<Tensor<f32>> {
        fresh
            .iter()
            .map(|img| {
                if self.images.len() < self.capacity {
                    self.images.push(img.clone());
                    img.clone()
                } else if self.rng.random::<f64>() < 0.5 {
                    let i = self.rng.random_range(0..self.images.len());
                    std::mem::replace(&mut self.images[i], img.clone())
                } else {
                    img.clone()
                }
            })
            .collect()
    }
}
