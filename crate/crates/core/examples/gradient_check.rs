//! Checks the reverse-mode gradients of the CycleGAN objective against
//! central finite differences on a tiny generator.
//!
//! cargo run --release --example gradient_check

use multistain::msgan::networks::{generator_forward, init_generator};
use multistain::msgan::{losses, GeneratorConfig};
use multistain::nn::{Graph, ParamSet, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn loss(cfg: &GeneratorConfig, p: &ParamSet<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> (f64, Vec<Tensor<f64>>) {
    let mut g = Graph::new();
    let bound = p.bind(&mut g, true);
    let xv = g.constant(x.clone());
    let yv = g.constant(y.clone());
    let out = generator_forward(&mut g, cfg, &bound, xv);
    let back = generator_forward(&mut g, cfg, &bound, out);
    let l = losses::cycle_loss(&mut g, yv, back, yv, out);
    let mut grads = g.backward(l);
    (g.value(l).item(), p.collect_grads(&bound, &mut grads))
}

fn main() {
    let cfg = GeneratorConfig { depth: 2, innermost_filters: 4, input_size: 8, kernel_size: 2, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params: ParamSet<f64> = init_generator(&cfg, &mut rng);
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v *= 10.0;
        }
    }
    let x = multistain::nn::normal_tensor::<f64>(&mut rng, vec![1, 3, 8, 8], 0.3).map(|v| v.abs().min(1.0));
    let y = multistain::nn::normal_tensor::<f64>(&mut rng, vec![1, 3, 8, 8], 0.3).map(|v| v.abs().min(1.0));
    let (_, grads) = loss(&cfg, &params, &x, &y);
    println!("{} parameters", params.scalar_count());

    let h = 1e-5;
    let mut worst = 0.0f64;
    for (ti, grad) in grads.iter().enumerate() {
        for i in (0..grad.len()).step_by(7) {
            let orig = params.tensors()[ti].data()[i];
            params.tensors_mut()[ti].data_mut()[i] = orig + h;
            let up = loss(&cfg, &params, &x, &y).0;
            params.tensors_mut()[ti].data_mut()[i] = orig - h;
            let down = loss(&cfg, &params, &x, &y).0;
            params.tensors_mut()[ti].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.data()[i];
            worst = worst.max((numeric - analytic).abs() / (numeric.abs().max(analytic.abs()) + 1e-6));
        }
    }
    println!("largest relative gradient error: {worst:.2e}");
}
