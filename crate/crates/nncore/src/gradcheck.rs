//! Finite-difference utilities shared by gradient tests across crates.

/// Central difference of `f` with respect to `x[idx]`. The actual f32
/// perturbation is used as the denominator, which removes the error from
/// `orig + h` not being exactly `h` away from `orig`.
pub fn central_diff<F>(mut f: F, x: &mut [f32], idx: usize, h: f32) -> f64
where
    F: FnMut(&[f32]) -> f64,
{
    let orig = x[idx];
    let xp = orig + h;
    let xm = orig - h;
    x[idx] = xp;
    let fp = f(x);
    x[idx] = xm;
    let fm = f(x);
    x[idx] = orig;
    (fp - fm) / (xp as f64 - xm as f64)
}

/// Mixed absolute/relative comparison used for all gradient checks:
/// |a - b| <= tol * max(1, |a|, |b|).
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Evenly spaced sample of component indices for spot-checking large
/// buffers; includes both endpoints when n > 1.
pub fn sample_indices(numel: usize, n: usize) -> Vec<usize> {
    if numel <= n {
        return (0..numel).collect();
    }
    (0..n).map(|i| i * (numel - 1) / (n - 1)).collect()
}
