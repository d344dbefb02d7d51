mod common;

use common::{max_gradient_error, TinyGan, Term, TERMS};

#[test]
fn tiny_nets_are_small() {
    let gan = TinyGan::new(1);
    assert!(gan.param_count() <= 1000, "{}", gan.param_count());
}

#[test]
fn every_term_matches_finite_differences() {
    let mut gan = TinyGan::new(1);
    for term in TERMS {
        let nonzero = gan.eval(term).1.iter().flatten().flat_map(|t| t.data().iter()).filter(|v| **v != 0.0).count();
        assert!(nonzero > 50, "{term:?} has only {nonzero} nonzero gradient entries");
        let err = max_gradient_error(&mut gan, term, 1e-4);
        assert!(err < 1e-3, "{term:?}: relative error {err:e}");
    }
}

#[test]
fn total_gradient_is_the_weighted_sum_of_part_gradients() {
    let gan = TinyGan::new(2);
    let (total, g_total) = gan.eval(Term::Total);
    let parts = [(Term::GanG, 1.0), (Term::GanF, 1.0), (Term::Cycle, 10.0), (Term::IdtRec, 0.5)];
    let mut value = 0.0;
    let evals: Vec<_> = parts.iter().map(|(t, w)| (gan.eval(*t), *w)).collect();
    for ((v, _), w) in &evals {
        value += w * v;
    }
    assert!((value - total).abs() <= 1e-12 * total.abs());
    for net in 0..4 {
        for t in 0..g_total[net].len() {
            for i in 0..g_total[net][t].len() {
                let combined: f64 = evals.iter().map(|((_, g), w)| w * g[net][t].data()[i]).sum();
                let a = g_total[net][t].data()[i];
                assert!((a - combined).abs() <= 1e-10 * (1.0 + a.abs()), "net {net} tensor {t}[{i}]");
            }
        }
    }
}

#[test]
fn discriminator_terms_do_not_touch_generators() {
    let gan = TinyGan::new(3);
    let (_, g) = gan.eval(Term::DiscX);
    for net in [0, 1, 3] {
        assert!(g[net].iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
    }
    assert!(g[2].iter().any(|t| t.data().iter().any(|v| *v != 0.0)));
}
