//! Helpers shared by the integration and acceptance tests.
#![allow(dead_code)]

use multistain::imaging::{augment_to_intermediate, rgb_to_grayscale3, ImageTile, JitterParams};
use multistain::msgan::losses::identity_loss_legacy;
use multistain::msgan::networks::{generator_forward, init_discriminator, init_generator};
use multistain::msgan::{
    discriminator_objective, generator_objective, tiles_to_tensor, DiscriminatorConfig, GanNets, GeneratorConfig,
    StepInputs,
};
use multistain::nn::{power_iteration, Graph, ParamSet, Tensor};
use multistain::synthetic::Palette;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A term of the objective whose gradient is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Term {
    GanG,
    GanF,
    Cycle,
    IdtRec,
    /// The color-identity term of the original CycleGAN.
    IdtLegacy,
    Total,
    DiscX,
    DiscY,
}

pub const TERMS: [Term; 8] =
    [Term::GanG, Term::GanF, Term::Cycle, Term::IdtRec, Term::IdtLegacy, Term::Total, Term::DiscX, Term::DiscY];

/// Two depth-2 U-Nets with 2×2 kernels and two one-block PatchGANs on 8×8
/// inputs, in f64. The power-iteration vectors start converged so the
/// spectral norm is a smooth function of the weights.
pub struct TinyGan {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// G, F, D_x, D_y.
    pub nets: [ParamSet<f64>; 4],
    pub sn_x: Vec<Vec<f64>>,
    pub sn_y: Vec<Vec<f64>>,
    pub x: Tensor<f64>,
    pub y: Tensor<f64>,
    pub w_x: Tensor<f64>,
    pub w_y: Tensor<f64>,
    pub x_prime: Tensor<f64>,
    pub y_prime: Tensor<f64>,
    /// Stand-in for buffered fakes in the discriminator terms.
    pub fake: Tensor<f64>,
    pub lambda_cyc: f64,
    pub lambda_idt: f64,
}

fn converged(p: &ParamSet<f64>, us: &[Vec<f64>]) -> Vec<Vec<f64>> {
    ["block1.w", "score.w"]
        .iter()
        .zip(us)
        .map(|(name, u)| power_iteration(p.get(name).expect("layer exists"), u, 2000).0)
        .collect()
}

impl TinyGan {
    pub fn new(seed: u64) -> Self {
        let generator = GeneratorConfig { depth: 2, innermost_filters: 4, input_size: 8, kernel_size: 2, ..Default::default() };
        let discriminator = DiscriminatorConfig { blocks: 1, base_filters: 2, power_iterations: 20, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale_up = |mut p: ParamSet<f64>| {
            // Larger weights than the training init keep activations away
            // from the flat region while staying smooth.
            for t in p.tensors_mut() {
                t.data_mut().iter_mut().for_each(|v| *v *= 20.0);
            }
            p
        };
        let g = scale_up(init_generator(&generator, &mut rng));
        let f = scale_up(init_generator(&generator, &mut rng));
        let (dx, ux) = init_discriminator(&discriminator, &mut rng);
        let (dy, uy) = init_discriminator(&discriminator, &mut rng);
        let (dx, dy) = (scale_up(dx), scale_up(dy));
        let sn_x = converged(&dx, &ux);
        let sn_y = converged(&dy, &uy);

        let xs = Palette::target().tiles(8, 2, seed * 10);
        let ys = Palette::source().tiles(8, 2, seed * 10 + 5);
        let jitter = JitterParams::training_default();
        let project = |ts: &[ImageTile], s: u64| -> Vec<ImageTile> {
            ts.iter().enumerate().map(|(i, t)| augment_to_intermediate(t, &jitter, s + i as u64).unwrap()).collect()
        };
        let gray = |ts: &[ImageTile]| -> Vec<ImageTile> { ts.iter().map(rgb_to_grayscale3).collect() };
        let t = |ts: &[ImageTile]| tiles_to_tensor::<f64>(ts, 8).unwrap();
        let fake = t(&Palette::unseen().tiles(8, 2, seed * 10 + 9));
        Self {
            generator,
            discriminator,
            nets: [g, f, dx, dy],
            sn_x,
            sn_y,
            w_x: t(&project(&xs, 100)),
            w_y: t(&project(&ys, 200)),
            x_prime: t(&gray(&xs)),
            y_prime: t(&gray(&ys)),
            x: t(&xs),
            y: t(&ys),
            fake,
            lambda_cyc: 10.0,
            lambda_idt: 0.5,
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(ParamSet::scalar_count).sum()
    }

    /// Value of `term` and its gradient with respect to every network.
    pub fn eval(&self, term: Term) -> (f64, [Vec<Tensor<f64>>; 4]) {
        let mut g = Graph::<f64>::new();
        let b: Vec<_> = self.nets.iter().map(|p| p.bind(&mut g, true)).collect();
        let loss = match term {
            Term::DiscX | Term::DiscY => {
                let (real, d, us) =
                    if term == Term::DiscX { (&self.x, &b[2], &self.sn_x) } else { (&self.y, &b[3], &self.sn_y) };
                let r = g.constant(real.clone());
                let f = g.constant(self.fake.clone());
                discriminator_objective(&mut g, &self.discriminator, d, us, r, f).0
            }
            Term::IdtLegacy => {
                let x = g.constant(self.x.clone());
                let y = g.constant(self.y.clone());
                let g_of_y = generator_forward(&mut g, &self.generator, &b[0], y);
                let f_of_x = generator_forward(&mut g, &self.generator, &b[1], x);
                identity_loss_legacy(&mut g, g_of_y, y, f_of_x, x)
            }
            _ => {
                let inp = StepInputs {
                    x: g.constant(self.x.clone()),
                    y: g.constant(self.y.clone()),
                    w_x: g.constant(self.w_x.clone()),
                    w_y: g.constant(self.w_y.clone()),
                    x_prime: g.constant(self.x_prime.clone()),
                    y_prime: g.constant(self.y_prime.clone()),
                };
                let nets = GanNets {
                    generator: &self.generator,
                    discriminator: &self.discriminator,
                    g: &b[0],
                    f: &b[1],
                    d_x: &b[2],
                    d_y: &b[3],
                    sn_x: &self.sn_x,
                    sn_y: &self.sn_y,
                };
                let obj = generator_objective(&mut g, &nets, &inp, self.lambda_cyc, self.lambda_idt);
                match term {
                    Term::GanG => obj.parts.gan_g,
                    Term::GanF => obj.parts.gan_f,
                    Term::Cycle => obj.parts.cycle,
                    Term::IdtRec => obj.parts.idt_rec,
                    _ => obj.total,
                }
            }
        };
        let value = g.value(loss).item();
        let mut grads = g.backward(loss);
        let out = std::array::from_fn(|i| self.nets[i].collect_grads(&b[i], &mut grads));
        (value, out)
    }
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter, with relative error
/// `|a − n| / max(|a|, |n|, 1e-6)` so that parameters a term does not depend
/// on must have an exactly zero analytic gradient.
pub fn max_gradient_error(gan: &mut TinyGan, term: Term, h: f64) -> f64 {
    let (_, analytic) = gan.eval(term);
    let mut worst = 0.0f64;
    for net in 0..4 {
        for t in 0..analytic[net].len() {
            for i in 0..analytic[net][t].len() {
                let orig = gan.nets[net].tensors()[t].data()[i];
                gan.nets[net].tensors_mut()[t].data_mut()[i] = orig + h;
                let up = gan.eval(term).0;
                gan.nets[net].tensors_mut()[t].data_mut()[i] = orig - h;
                let down = gan.eval(term).0;
                gan.nets[net].tensors_mut()[t].data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[net][t].data()[i];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(err);
            }
        }
    }
    worst
}

/// A small trainable f32 setup at 16×16 with a few tiles per domain.
pub fn small_setup(seed: u64, tiles: usize) -> (multistain::msgan::GanWeights, multistain::msgan::TrainConfig, Vec<ImageTile>, Vec<ImageTile>) {
    use multistain::msgan::{GanWeights, TrainConfig};
    let generator = GeneratorConfig { depth: 2, innermost_filters: 8, input_size: 16, ..Default::default() };
    let discriminator = DiscriminatorConfig { blocks: 2, base_filters: 4, ..Default::default() };
    let cfg = TrainConfig { learning_rate: 2e-4, total_epochs: 4, decay_epochs: 2, buffer_size: 3, rng_seed: seed, ..Default::default() };
    let w = GanWeights::init(generator, discriminator, cfg.buffer_size, cfg.adam, seed).unwrap();
    let xs = Palette::target().tiles(16, tiles, 1000 + seed);
    let ys = Palette::source().tiles(16, tiles, 2000 + seed);
    (w, cfg, xs, ys)
}

/// Angle between two unit vectors.
pub fn angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d: f64 = (0..3).map(|i| a[i] * b[i]).sum();
    d.clamp(-1.0, 1.0).acos()
}

/// Mean angular error of the two stain columns.
pub fn column_error(fit: &multistain::stainsep::StainModel, truth: &multistain::stainsep::StainModel) -> f64 {
    (angle(fit.column(0), truth.column(0)) + angle(fit.column(1), truth.column(1))) / 2.0
}

/// Smallest `‖od − M·c‖` over the grid `c ∈ {0, step, 2·step, …}²` up to
/// `limit`.
pub fn grid_residual(od: [f64; 3], m: &multistain::stainsep::StainModel, step: f64, limit: f64) -> f64 {
    let (h, e) = (m.hematoxylin(), m.eosin());
    let n = (limit / step).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        let a = i as f64 * step;
        let r: [f64; 3] = std::array::from_fn(|k| od[k] - h[k] * a);
        // For fixed `a` the residual is a convex quadratic in `b`; scan only
        // the grid points next to its non-negative minimizer.
        let ee: f64 = e.iter().map(|v| v * v).sum();
        let re: f64 = (0..3).map(|k| r[k] * e[k]).sum();
        let b_star = (re / ee).max(0.0);
        let j0 = (b_star / step).floor() as usize;
        for j in [j0.saturating_sub(1), j0, j0 + 1, j0 + 2] {
            let b = j as f64 * step;
            if b > limit {
                continue;
            }
            let s: f64 = (0..3).map(|k| (r[k] - e[k] * b).powi(2)).sum();
            best = best.min(s);
        }
    }
    best.sqrt()
}

/// Runs the binary in `dir` and returns the exit code, stdout and stderr.
pub fn run_cli(dir: &std::path::Path, args: &[&str]) -> (i32, String, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_multistain"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Every file under `dir` with its contents, sorted by relative path.
pub fn read_tree(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Synthetic slides, a template, an encoder spec and classifier numbers for
/// a pipeline run in `dir`.
pub fn write_pipeline_inputs(dir: &std::path::Path) {
    use multistain::imaging::io::write_png;
    use multistain::synthetic::{Palette, TissueField};
    std::fs::create_dir_all(dir.join("slides")).unwrap();
    write_png(&TissueField::generate(192, 160, 1).render(&Palette::source()), &dir.join("slides/center_b.png")).unwrap();
    write_png(&TissueField::generate(160, 128, 5).render(&Palette::source()), &dir.join("slides/center_c.png")).unwrap();
    write_png(&TissueField::generate(96, 96, 2).render(&Palette::target()), &dir.join("template.png")).unwrap();
    std::fs::write(dir.join("encoder.json"), r#"{"kind":"seeded_random","feature_dim":8,"seed":7}"#).unwrap();
    std::fs::write(
        dir.join("classifier.json"),
        r#"[{"kind":"classifier","label":"unnormalized","tumor_accuracy":{"mean":0.90,"std":0.005}},
            {"kind":"classifier","label":"macenko","tumor_accuracy":{"mean":0.88,"std":0.01}}]"#,
    )
    .unwrap();
}

/// tiles → fit → normalize → eval fid → eval ssim → report, with relative
/// paths. Returns each step's exit code.
pub fn run_pipeline(dir: &std::path::Path) -> Vec<i32> {
    let mut codes = Vec::new();
    let mut step = |args: &[&str]| {
        let (code, _, err) = run_cli(dir, args);
        assert!(code == 0, "{args:?} exited {code}: {err}");
        codes.push(code);
    };
    step(&["--seed", "3", "tiles", "--in", "slides", "--out", "tiles", "--tile", "64", "--tissue", "0.3", "--label", "B"]);
    step(&["--seed", "3", "fit", "--method", "macenko", "--template", "template.png", "--out", "macenko.json"]);
    step(&["--seed", "3", "normalize", "--method", "macenko", "--model", "macenko.json", "--in", "tiles/tiles", "--out", "normalized"]);
    step(&[
        "--seed", "3", "eval", "fid", "--ref", "tiles/tiles", "--cand", "normalized", "--encoder", "encoder.json", "--out",
        "fid.json", "--label", "macenko",
    ]);
    let manifest = std::fs::read_to_string(dir.join("tiles/manifest.csv")).unwrap();
    let mut pairs = String::from("reference,candidate\n");
    for line in manifest.lines().skip(1) {
        let rel = line.split(',').nth(3).unwrap();
        pairs += &format!("tiles/{rel},normalized/{}\n", rel.trim_start_matches("tiles/"));
    }
    std::fs::write(dir.join("pairs.csv"), pairs).unwrap();
    step(&["--seed", "3", "eval", "ssim", "--pairs", "pairs.csv", "--out", "ssim.csv", "--label", "macenko"]);
    step(&["--seed", "3", "report", "ssim.csv", "fid.json", "classifier.json", "--out", "report"]);
    codes
}
