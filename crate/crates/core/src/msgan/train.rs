use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
use super::losses::{cycle_loss, idt_rec_loss, lsgan_loss_d, lsgan_loss_g, total_objective, LossParts};
use super::networks::{discriminator_forward, generator_forward};
use super::state::GanWeights;
use super::{derive_seed, lr_at_epoch, tiles_to_tensor, MsganError};
use crate::imaging::{augment_to_intermediate, rgb_to_grayscale3, ImageTile};
use crate::nn::{Bound, Graph, ParamSet, Real, Tensor, Var};

/// Bound networks taking part in one generator pass.
pub struct GanNets<'a, T> {
    pub generator: &'a GeneratorConfig,
    pub discriminator: &'a DiscriminatorConfig,
    pub g: &'a Bound,
    pub f: &'a Bound,
    pub d_x: &'a Bound,
    pub d_y: &'a Bound,
    pub sn_x: &'a [Vec<T>],
    pub sn_y: &'a [Vec<T>],
}

/// Graph inputs of one step: the originals, their intermediate-domain
/// projections `w = H(·)` and their plain grayscale versions `H′(·)`.
#[derive(Clone, Copy, Debug)]
pub struct StepInputs {
    pub x: Var,
    pub y: Var,
    pub w_x: Var,
    pub w_y: Var,
    pub x_prime: Var,
    pub y_prime: Var,
}

/// Nodes produced by [`generator_objective`].
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub fake_x: Var,
    pub fake_y: Var,
    pub parts: LossParts<Var>,
    pub total: Var,
}

/// The generator side of one step: `fake_y = G(w_x)`, `fake_x = F(w_y)`,
/// cycles through the grayscale of each fake, the domain-faithful
/// reconstructions of `x′` and `y′`, and the weighted total.
pub fn generator_objective<T: Real>(
    g: &mut Graph<T>,
    nets: &GanNets<T>,
    inp: &StepInputs,
    lambda_cyc: f64,
    lambda_idt: f64,
) -> ObjectiveVars {
    let gen = nets.generator;
    let fake_y = generator_forward(g, gen, nets.g, inp.w_x);
    let fake_x = generator_forward(g, gen, nets.f, inp.w_y);
    let gray_fake_y = g.grayscale3(fake_y);
    let rec_x = generator_forward(g, gen, nets.f, gray_fake_y);
    let gray_fake_x = g.grayscale3(fake_x);
    let rec_y = generator_forward(g, gen, nets.g, gray_fake_x);
    let g_of_yprime = generator_forward(g, gen, nets.g, inp.y_prime);
    let f_of_xprime = generator_forward(g, gen, nets.f, inp.x_prime);
    let (score_y, _) = discriminator_forward(g, nets.discriminator, nets.d_y, nets.sn_y, fake_y);
    let (score_x, _) = discriminator_forward(g, nets.discriminator, nets.d_x, nets.sn_x, fake_x);
    let parts = LossParts {
        gan_g: lsgan_loss_g(g, score_y),
        gan_f: lsgan_loss_g(g, score_x),
        cycle: cycle_loss(g, inp.x, rec_x, inp.y, rec_y),
        idt_rec: idt_rec_loss(g, g_of_yprime, inp.y, f_of_xprime, inp.x),
    };
    let total = total_objective(g, &parts, lambda_cyc, lambda_idt);
    ObjectiveVars { fake_x, fake_y, parts, total }
}

/// Discriminator loss on a real and a fake batch; returns the loss node and
/// the power-iteration vectors after both passes.
pub fn discriminator_objective<T: Real>(
    g: &mut Graph<T>,
    cfg: &DiscriminatorConfig,
    d: &Bound,
    us: &[Vec<T>],
    real: Var,
    fake: Var,
) -> (Var, Vec<Vec<T>>) {
    let (s_real, us) = discriminator_forward(g, cfg, d, us, real);
    let (s_fake, us) = discriminator_forward(g, cfg, d, &us, fake);
    (lsgan_loss_d(g, s_real, s_fake), us)
}

/// Tiles of one step with the jitter seed of every tile.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub x: Vec<ImageTile>,
    pub y: Vec<ImageTile>,
    pub x_seeds: Vec<u64>,
    pub y_seeds: Vec<u64>,
}

/// Loss values of one step and whether each discriminator was updated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub gan_g: f64,
    pub gan_f: f64,
    pub cycle: f64,
    pub idt_rec: f64,
    pub total: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub d_x_updated: bool,
    pub d_y_updated: bool,
}

fn finite_or(name: &str, v: f64) -> Result<f64, MsganError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MsganError::NonFiniteLoss { term: name.to_string(), value: v })
    }
}

fn grads_finite(name: &str, grads: &[Tensor<f32>]) -> Result<(), MsganError> {
    if grads.iter().all(Tensor::all_finite) {
        Ok(())
    } else {
        Err(MsganError::NonFiniteLoss { term: format!("gradient of {name}"), value: f64::NAN })
    }
}

fn prepare(
    tiles: &[ImageTile],
    seeds: &[u64],
    cfg: &TrainConfig,
    size: usize,
) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>), MsganError> {
    if tiles.len() != seeds.len() {
        return Err(MsganError::ShapeMismatch(format!("{} tiles but {} jitter seeds", tiles.len(), seeds.len())));
    }
    let w: Vec<ImageTile> = tiles
        .iter()
        .zip(seeds)
        .map(|(t, s)| augment_to_intermediate(t, &cfg.jitter, *s))
        .collect::<Result<_, _>>()
        .map_err(|e| MsganError::InvalidConfig(e.to_string()))?;
    let prime: Vec<ImageTile> = tiles.iter().map(rgb_to_grayscale3).collect();
    Ok((tiles_to_tensor(tiles, size)?, tiles_to_tensor(&w, size)?, tiles_to_tensor(&prime, size)?))
}

fn update_discriminator(
    params: &ParamSet<f32>,
    cfg: &DiscriminatorConfig,
    us: &[Vec<f32>],
    real: &Tensor<f32>,
    fake: &Tensor<f32>,
) -> (f64, Vec<Tensor<f32>>, Vec<Vec<f32>>) {
    let mut g = Graph::new();
    let bound = params.bind(&mut g, true);
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let (loss, next_us) = discriminator_objective(&mut g, cfg, &bound, us, r, f);
    let mut grads = g.backward(loss);
    (g.value(loss).item() as f64, params.collect_grads(&bound, &mut grads), next_us)
}

/// One optimization step at the learning rate of the current epoch.
///
/// The generators are updated jointly on the total objective with the
/// discriminators frozen. Each discriminator then sees its real batch and a
/// buffered fake batch and is updated only if its loss is at least
/// `d_loss_threshold`. Every quantity is computed before anything is
/// committed, so a non-finite loss leaves `state` untouched.
pub fn train_step(state: &mut GanWeights, batch: &TrainBatch, cfg: &TrainConfig) -> Result<StepReport, MsganError> {
    let lr = lr_at_epoch(cfg, state.epoch)?;
    let size = state.generator.input_size;
    if batch.x.is_empty() || batch.y.is_empty() {
        return Err(MsganError::ShapeMismatch("empty batch".into()));
    }
    let (x, w_x, x_prime) = prepare(&batch.x, &batch.x_seeds, cfg, size)?;
    let (y, w_y, y_prime) = prepare(&batch.y, &batch.y_seeds, cfg, size)?;

    let mut g = Graph::<f32>::new();
    let bg = state.g.bind(&mut g, true);
    let bf = state.f.bind(&mut g, true);
    let bdx = state.d_x.bind(&mut g, false);
    let bdy = state.d_y.bind(&mut g, false);
    let inputs = StepInputs {
        x: g.constant(x.clone()),
        y: g.constant(y.clone()),
        w_x: g.constant(w_x),
        w_y: g.constant(w_y),
        x_prime: g.constant(x_prime),
        y_prime: g.constant(y_prime),
    };
    let nets = GanNets {
        generator: &state.generator,
        discriminator: &state.discriminator,
        g: &bg,
        f: &bf,
        d_x: &bdx,
        d_y: &bdy,
        sn_x: &state.sn_x,
        sn_y: &state.sn_y,
    };
    let obj = generator_objective(&mut g, &nets, &inputs, cfg.lambda_cyc, cfg.lambda_idt);
    let value = |v: Var| g.value(v).item() as f64;
    let parts = LossParts {
        gan_g: finite_or("gan_g", value(obj.parts.gan_g))?,
        gan_f: finite_or("gan_f", value(obj.parts.gan_f))?,
        cycle: finite_or("cycle", value(obj.parts.cycle))?,
        idt_rec: finite_or("idt_rec", value(obj.parts.idt_rec))?,
    };
    let total = finite_or("total", value(obj.total))?;
    let mut grads = g.backward(obj.total);
    let grads_g = state.g.collect_grads(&bg, &mut grads);
    let grads_f = state.f.collect_grads(&bf, &mut grads);
    grads_finite("total", &grads_g)?;
    grads_finite("total", &grads_f)?;
    let fake_x = g.value(obj.fake_x).clone();
    let fake_y = g.value(obj.fake_y).clone();
    drop(g);

    let split = |t: &Tensor<f32>| (0..t.shape()[0]).map(|i| t.sample(i)).collect::<Vec<_>>();
    let mut buffer_x = state.buffer_x.clone();
    let mut buffer_y = state.buffer_y.clone();
    let hist_x = Tensor::stack(&buffer_x.sample(&split(&fake_x)));
    let hist_y = Tensor::stack(&buffer_y.sample(&split(&fake_y)));

    let (loss_dx, grads_dx, us_x) = update_discriminator(&state.d_x, &state.discriminator, &state.sn_x, &x, &hist_x);
    let (loss_dy, grads_dy, us_y) = update_discriminator(&state.d_y, &state.discriminator, &state.sn_y, &y, &hist_y);
    finite_or("d_x", loss_dx)?;
    finite_or("d_y", loss_dy)?;
    let dx_update = loss_dx >= cfg.d_loss_threshold;
    let dy_update = loss_dy >= cfg.d_loss_threshold;
    if dx_update {
        grads_finite("d_x", &grads_dx)?;
    }
    if dy_update {
        grads_finite("d_y", &grads_dy)?;
    }

    state.opt_g.update(&mut state.g, &grads_g, lr);
    state.opt_f.update(&mut state.f, &grads_f, lr);
    if dx_update {
        state.opt_dx.update(&mut state.d_x, &grads_dx, lr);
        state.sn_x = us_x;
    }
    if dy_update {
        state.opt_dy.update(&mut state.d_y, &grads_dy, lr);
        state.sn_y = us_y;
    }
    state.buffer_x = buffer_x;
    state.buffer_y = buffer_y;
    state.steps += 1;

    Ok(StepReport {
        gan_g: parts.gan_g,
        gan_f: parts.gan_f,
        cycle: parts.cycle,
        idt_rec: parts.idt_rec,
        total,
        d_x: loss_dx,
        d_y: loss_dy,
        d_x_updated: dx_update,
        d_y_updated: dy_update,
    })
}

/// Mean losses over one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub gan_g: f64,
    pub gan_f: f64,
    pub cycle: f64,
    pub idt_rec: f64,
    pub total: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub d_x_updates: usize,
    pub d_y_updates: usize,
    /// Steps aborted because of a non-finite loss.
    pub skipped_steps: usize,
}

const DOMAIN_X: u64 = 1;
const DOMAIN_Y: u64 = 2;

/// Jitter seed of tile `index` of a domain in `epoch`.
pub fn jitter_seed(rng_seed: u64, epoch: usize, domain: u64, index: usize) -> u64 {
    derive_seed(&[rng_seed, epoch as u64, domain, index as u64])
}

fn epoch_order(rng_seed: u64, epoch: usize, domain: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[rng_seed, epoch as u64, domain, 0x5_4FF1E]));
    order.shuffle(&mut rng);
    order
}

/// One pass over the data. Each domain is shuffled from `(rng_seed, epoch)`,
/// the shorter one wraps around, and every tile is jittered with a seed derived
/// from `(rng_seed, epoch, tile index)`. Steps with a non-finite loss are
/// skipped and counted.
pub fn train_epoch(
    state: &mut GanWeights,
    data_x: &[ImageTile],
    data_y: &[ImageTile],
    cfg: &TrainConfig,
) -> Result<EpochReport, MsganError> {
    cfg.validate()?;
    if data_x.is_empty() || data_y.is_empty() {
        return Err(MsganError::ShapeMismatch("both domains need at least one tile".into()));
    }
    let epoch = state.epoch;
    let learning_rate = lr_at_epoch(cfg, epoch)?;
    let order_x = epoch_order(cfg.rng_seed, epoch, DOMAIN_X, data_x.len());
    let order_y = epoch_order(cfg.rng_seed, epoch, DOMAIN_Y, data_y.len());
    let n = data_x.len().max(data_y.len());
    let mut sums = [0.0f64; 7];
    let (mut steps, mut skipped, mut dxu, mut dyu) = (0, 0, 0, 0);
    for start in (0..n).step_by(cfg.batch_size) {
        let idx: Vec<usize> = (start..(start + cfg.batch_size).min(n)).collect();
        let pick = |order: &[usize], i: usize| order[i % order.len()];
        let xi: Vec<usize> = idx.iter().map(|i| pick(&order_x, *i)).collect();
        let yi: Vec<usize> = idx.iter().map(|i| pick(&order_y, *i)).collect();
        let batch = TrainBatch {
            x: xi.iter().map(|i| data_x[*i].clone()).collect(),
            y: yi.iter().map(|i| data_y[*i].clone()).collect(),
            x_seeds: xi.iter().map(|i| jitter_seed(cfg.rng_seed, epoch, DOMAIN_X, *i)).collect(),
            y_seeds: yi.iter().map(|i| jitter_seed(cfg.rng_seed, epoch, DOMAIN_Y, *i)).collect(),
        };
        match train_step(state, &batch, cfg) {
            Ok(r) => {
                for (s, v) in sums.iter_mut().zip([r.gan_g, r.gan_f, r.cycle, r.idt_rec, r.total, r.d_x, r.d_y]) {
                    *s += v;
                }
                steps += 1;
                dxu += r.d_x_updated as usize;
                dyu += r.d_y_updated as usize;
            }
            Err(MsganError::NonFiniteLoss { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    state.epoch += 1;
    let mean = |i: usize| if steps == 0 { f64::NAN } else { sums[i] / steps as f64 };
    Ok(EpochReport {
        epoch,
        learning_rate,
        steps,
        gan_g: mean(0),
        gan_f: mean(1),
        cycle: mean(2),
        idt_rec: mean(3),
        total: mean(4),
        d_x: mean(5),
        d_y: mean(6),
        d_x_updates: dxu,
        d_y_updates: dyu,
        skipped_steps: skipped,
    })
}
