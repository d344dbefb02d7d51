//! Objective terms, built on the tape so every term is differentiable.

use serde::{Deserialize, Serialize};

use crate::nn::{Graph, Real, Var};

/// `½·mean((real − 1)²) + ½·mean(fake²)`. The halving makes a fully
/// confused discriminator (all scores ½) score 0.25.
pub fn lsgan_loss_d<T: Real>(g: &mut Graph<T>, scores_real: Var, scores_fake: Var) -> Var {
    let r = g.squared_mean(scores_real, 1.0);
    let f = g.squared_mean(scores_fake, 0.0);
    let s = g.add(r, f);
    g.scale(s, 0.5)
}

/// `mean((fake − 1)²)`.
pub fn lsgan_loss_g<T: Real>(g: &mut Graph<T>, scores_fake: Var) -> Var {
    g.squared_mean(scores_fake, 1.0)
}

/// `mean|F(G(x)) − x| + mean|G(F(y)) − y|`.
pub fn cycle_loss<T: Real>(g: &mut Graph<T>, x: Var, rec_x: Var, y: Var, rec_y: Var) -> Var {
    let a = g.l1_mean(rec_x, x);
    let b = g.l1_mean(rec_y, y);
    g.add(a, b)
}

/// The color-identity term of the original CycleGAN,
/// `mean|G(y) − y| + mean|F(x) − x|`. Not part of the grayscale objective;
/// kept for ablations.
pub fn identity_loss_legacy<T: Real>(g: &mut Graph<T>, g_of_y: Var, y: Var, f_of_x: Var, x: Var) -> Var {
    let a = g.l1_mean(g_of_y, y);
    let b = g.l1_mean(f_of_x, x);
    g.add(a, b)
}

/// Domain-faithful reconstruction, `mean|G(y′) − y| + mean|F(x′) − x|`,
/// where the primes are the unaugmented grayscale inputs.
pub fn idt_rec_loss<T: Real>(g: &mut Graph<T>, g_of_yprime: Var, y: Var, f_of_xprime: Var, x: Var) -> Var {
    let a = g.l1_mean(g_of_yprime, y);
    let b = g.l1_mean(f_of_xprime, x);
    g.add(a, b)
}

/// The four generator-side terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts<V> {
    /// Adversarial term of G against D_y.
    pub gan_g: V,
    /// Adversarial term of F against D_x.
    pub gan_f: V,
    pub cycle: V,
    pub idt_rec: V,
}

impl LossParts<f64> {
    pub fn total(&self, lambda_cyc: f64, lambda_idt: f64) -> f64 {
        self.gan_g + self.gan_f + lambda_cyc * self.cycle + lambda_idt * self.idt_rec
    }
}

/// `L_GAN(G) + L_GAN(F) + λ_cyc·L_cyc + λ_idt·L_idt_rec`.
pub fn total_objective<T: Real>(g: &mut Graph<T>, parts: &LossParts<Var>, lambda_cyc: f64, lambda_idt: f64) -> Var {
    let cyc = g.scale(parts.cycle, lambda_cyc);
    let idt = g.scale(parts.idt_rec, lambda_idt);
    g.sum(&[parts.gan_g, parts.gan_f, cyc, idt])
}
