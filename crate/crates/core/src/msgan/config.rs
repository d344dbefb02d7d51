use serde::{Deserialize, Serialize};

use super::MsganError;
use crate::imaging::JitterParams;
use crate::nn::AdamConfig;

/// U-Net generator shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of down/up block pairs.
    pub depth: usize,
    /// Channel count of the two innermost blocks; widths halve outward from
    /// there with a floor of 4.
    pub innermost_filters: usize,
    pub input_size: usize,
    pub leaky_slope: f64,
    /// Even kernel size of the stride-2 convolutions; padding is `(k − 2) / 2`.
    pub kernel_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { depth: 6, innermost_filters: 32, input_size: 256, leaky_slope: 0.2, kernel_size: 4 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), MsganError> {
        let bad = |m: String| Err(MsganError::InvalidConfig(m));
        if self.depth == 0 || self.depth > 16 {
            return bad(format!("generator depth must lie in 1..=16, got {}", self.depth));
        }
        if self.innermost_filters < 4 {
            return bad(format!("innermost_filters must be at least 4, got {}", self.innermost_filters));
        }
        if self.input_size % (1 << self.depth) != 0 {
            return bad(format!("input_size {} is not divisible by 2^{}", self.input_size, self.depth));
        }
        if self.input_size >> self.depth < 2 {
            return bad(format!(
                "input_size {} leaves a 1x1 innermost map at depth {}; instance normalization needs at least 2x2",
                self.input_size, self.depth
            ));
        }
        if self.kernel_size < 2 || self.kernel_size % 2 != 0 {
            return bad(format!("kernel_size must be even and at least 2, got {}", self.kernel_size));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return bad("leaky_slope must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Encoder widths from the outermost block to the innermost one.
    pub fn widths(&self) -> Vec<usize> {
        (0..self.depth)
            .map(|i| {
                let from_inner = self.depth - i;
                (self.innermost_filters >> from_inner.saturating_sub(2).min(63)).max(4)
            })
            .collect()
    }

    pub fn padding(&self) -> usize {
        (self.kernel_size - 2) / 2
    }
}

/// PatchGAN discriminator shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub blocks: usize,
    /// Block `i` has `base_filters · (i + 1)²` channels.
    pub base_filters: usize,
    pub power_iterations: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { blocks: 3, base_filters: 16, power_iterations: 1, leaky_slope: 0.2 }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<(), MsganError> {
        let bad = |m: &str| Err(MsganError::InvalidConfig(m.into()));
        if self.blocks == 0 {
            return bad("discriminator needs at least one block");
        }
        if self.base_filters == 0 {
            return bad("base_filters must be positive");
        }
        if self.power_iterations == 0 {
            return bad("power_iterations must be positive");
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return bad("leaky_slope must be finite and non-negative");
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..self.blocks).map(|i| self.base_filters * (i + 1) * (i + 1)).collect()
    }

    /// Side of the score map for a square input, or `None` if the input is too small.
    pub fn score_size(&self, input: usize) -> Option<usize> {
        let mut s = input;
        for _ in 0..self.blocks {
            if s < 2 {
                return None;
            }
            s = (s + 2 - 4) / 2 + 1;
        }
        (s >= 3).then(|| s - 2)
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_cyc: f64,
    pub lambda_idt: f64,
    pub learning_rate: f64,
    pub total_epochs: usize,
    pub decay_epochs: usize,
    pub buffer_size: usize,
    /// A discriminator whose loss falls below this value skips its update.
    pub d_loss_threshold: f64,
    pub jitter: JitterParams,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_cyc: 10.0,
            lambda_idt: 0.5,
            learning_rate: 1e-5,
            total_epochs: 100,
            decay_epochs: 50,
            buffer_size: 50,
            d_loss_threshold: 0.1,
            jitter: JitterParams::training_default(),
            batch_size: 1,
            rng_seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MsganError> {
        let bad = |m: &str| Err(MsganError::InvalidConfig(m.into()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.lambda_cyc) && positive(self.lambda_idt)) {
            return bad("lambda_cyc and lambda_idt must be positive");
        }
        if !positive(self.learning_rate) {
            return bad("learning_rate must be positive");
        }
        if !positive(self.d_loss_threshold) {
            return bad("d_loss_threshold must be positive");
        }
        if self.total_epochs == 0 || self.decay_epochs > self.total_epochs {
            return bad("need 0 < total_epochs and decay_epochs <= total_epochs");
        }
        if self.buffer_size == 0 || self.batch_size == 0 {
            return bad("buffer_size and batch_size must be positive");
        }
        self.jitter.validate().map_err(|e| MsganError::InvalidConfig(e.to_string()))
    }
}
