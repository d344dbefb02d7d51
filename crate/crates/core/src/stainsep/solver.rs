//! Small exact solvers shared by the stain separation methods.

/// Minimizes `‖o − D·c‖² + λ·(c₀ + c₁)` over `c ≥ 0` for a 3×2 dictionary
/// given by its columns. With `λ = 0` this is non-negative least squares.
///
/// The problem is a convex quadratic in two variables, so the minimizer is
/// selected by its optimality conditions: the interior stationary point if
/// it is feasible, otherwise the face whose free coordinate is positive and
/// whose clamped coordinate has a non-negative gradient, otherwise the origin.
/// Selecting by conditions rather than by comparing objective values keeps
/// the solution continuous in the data.
pub fn nn_lasso2(od: [f64; 3], d0: [f64; 3], d1: [f64; 3], lambda: f64) -> [f64; 2] {
    let g00 = dot(d0, d0);
    let g01 = dot(d0, d1);
    let g11 = dot(d1, d1);
    let r0 = dot(d0, od) - 0.5 * lambda;
    let r1 = dot(d1, od) - 0.5 * lambda;

    let det = g00 * g11 - g01 * g01;
    if det > 1e-12 * g00 * g11 {
        let c0 = (g11 * r0 - g01 * r1) / det;
        let c1 = (g00 * r1 - g01 * r0) / det;
        if c0 >= 0.0 && c1 >= 0.0 {
            return [c0, c1];
        }
    }
    if g00 > 0.0 && r0 > 0.0 {
        let c0 = r0 / g00;
        if g01 * c0 >= r1 {
            return [c0, 0.0];
        }
    }
    if g11 > 0.0 && r1 > 0.0 {
        let c1 = r1 / g11;
        if g01 * c1 >= r0 {
            return [0.0, c1];
        }
    }
    [0.0, 0.0]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared reconstruction residual `‖o − D·c‖²`.
pub fn residual2(od: [f64; 3], d0: [f64; 3], d1: [f64; 3], c: [f64; 2]) -> f64 {
    (0..3).map(|i| (od[i] - d0[i] * c[0] - d1[i] * c[1]).powi(2)).sum()
}

/// Percentile with linear interpolation between order statistics
/// (`rank = p/100 · (n − 1)`). `values` is sorted in place.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(f64::total_cmp);
    let rank = (p / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}
