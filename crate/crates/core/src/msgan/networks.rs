//! U-Net generator and spectrally normalized PatchGAN discriminator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{DiscriminatorConfig, GeneratorConfig};
use crate::nn::{normal_tensor, Bound, Graph, ParamSet, Real, Tensor, Var};

/// Standard deviation of the initial weights.
pub const INIT_STD: f64 = 0.02;

const IN_EPS: f64 = 1e-5;

/// Draws generator parameters: `N(0, 0.02²)` kernels and zero biases.
pub fn init_generator<T: Real>(cfg: &GeneratorConfig, rng: &mut impl Rng) -> ParamSet<T> {
    let k = cfg.kernel_size;
    let widths = cfg.widths();
    let mut p = ParamSet::new();
    let mut cin = 3;
    for (i, &w) in widths.iter().enumerate() {
        p.insert(format!("down{}.w", i + 1), normal_tensor(rng, vec![w, cin, k, k], INIT_STD));
        p.insert(format!("down{}.b", i + 1), Tensor::zeros(vec![w]));
        cin = w;
    }
    let depth = widths.len();
    for i in (0..depth).rev() {
        let cin = if i + 1 == depth { widths[i] } else { 2 * widths[i] };
        let cout = if i == 0 { 3 } else { widths[i - 1] };
        p.insert(format!("up{}.w", i + 1), normal_tensor(rng, vec![cin, cout, k, k], INIT_STD));
        p.insert(format!("up{}.b", i + 1), Tensor::zeros(vec![cout]));
    }
    p
}

/// Shapes of every intermediate map for a batch of one, outermost first:
/// the down-block outputs followed by the up-block outputs.
pub fn generator_schedule(cfg: &GeneratorConfig) -> (Vec<[usize; 3]>, Vec<[usize; 3]>) {
    let widths = cfg.widths();
    let down = widths.iter().enumerate().map(|(i, &w)| [w, cfg.input_size >> (i + 1), cfg.input_size >> (i + 1)]).collect();
    let up = (0..widths.len())
        .rev()
        .map(|i| {
            let c = if i == 0 { 3 } else { widths[i - 1] };
            [c, cfg.input_size >> i, cfg.input_size >> i]
        })
        .collect();
    (down, up)
}

/// Runs the generator on `x` (`N×3×S×S`) inside `g`.
pub fn generator_forward<T: Real>(g: &mut Graph<T>, cfg: &GeneratorConfig, p: &Bound, x: Var) -> Var {
    let pad = cfg.padding();
    let depth = cfg.depth;
    let mut skips = Vec::with_capacity(depth);
    let mut h = x;
    for i in 1..=depth {
        let c = g.conv2d(h, p.var(&format!("down{i}.w")), Some(p.var(&format!("down{i}.b"))), 2, pad);
        let a = g.leaky_relu(c, cfg.leaky_slope);
        h = g.instance_norm(a, IN_EPS);
        skips.push(h);
    }
    for i in (1..=depth).rev() {
        let input = if i == depth { h } else { g.concat_channels(h, skips[i - 1]) };
        let c = g.conv_transpose2d(input, p.var(&format!("up{i}.w")), Some(p.var(&format!("up{i}.b"))), 2, pad);
        h = if i == 1 {
            g.sigmoid(c)
        } else {
            let a = g.relu(c);
            g.instance_norm(a, IN_EPS)
        };
    }
    h
}

/// Names of the discriminator convolutions, in order.
fn disc_layers(cfg: &DiscriminatorConfig) -> Vec<String> {
    (1..=cfg.blocks).map(|i| format!("block{i}")).chain(std::iter::once("score".to_string())).collect()
}

/// Discriminator parameters and one unit power-iteration vector per convolution.
pub fn init_discriminator<T: Real>(cfg: &DiscriminatorConfig, rng: &mut impl Rng) -> (ParamSet<T>, Vec<Vec<T>>) {
    let mut p = ParamSet::new();
    let mut us = Vec::new();
    let mut cin = 3;
    let widths = cfg.widths();
    for (name, (cout, k)) in disc_layers(cfg)
        .into_iter()
        .zip(widths.iter().map(|w| (*w, 4)).chain(std::iter::once((1, 3))))
    {
        p.insert(format!("{name}.w"), normal_tensor(rng, vec![cout, cin, k, k], INIT_STD));
        p.insert(format!("{name}.b"), Tensor::zeros(vec![cout]));
        let raw: Vec<f64> = (0..cout).map(|_| StandardNormal.sample(rng)).collect();
        let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        us.push(raw.iter().map(|v| T::lit(v / n)).collect());
        cin = cout;
    }
    (p, us)
}

/// Runs the discriminator on `x`; returns the raw score map (`N×1×h×w`) and
/// the power-iteration vectors after this pass.
pub fn discriminator_forward<T: Real>(
    g: &mut Graph<T>,
    cfg: &DiscriminatorConfig,
    p: &Bound,
    us: &[Vec<T>],
    x: Var,
) -> (Var, Vec<Vec<T>>) {
    let mut h = x;
    let mut next_us = Vec::with_capacity(us.len());
    let layers = disc_layers(cfg);
    for (li, name) in layers.iter().enumerate() {
        let (w, u) = g.spectral_normalize(p.var(&format!("{name}.w")), &us[li], cfg.power_iterations);
        next_us.push(u);
        let b = Some(p.var(&format!("{name}.b")));
        h = if li + 1 < layers.len() {
            let c = g.conv2d(h, w, b, 2, 1);
            g.leaky_relu(c, cfg.leaky_slope)
        } else {
            g.conv2d(h, w, b, 1, 0)
        };
    }
    (h, next_us)
}
