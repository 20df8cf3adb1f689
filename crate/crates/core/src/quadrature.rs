//! Adaptive Simpson quadrature on bounded intervals and rectangles.

const MAX_DEPTH: u32 = 50;

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
        + refine(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
}

/// `int_a^b f`, absolute tolerance `tol`. The interval is pre-split into 16
/// panels so narrow peaks are not missed by the first estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = if i + 1 == PANELS { b } else { lo + h };
            let (flo, fhi) = (f(lo), f(hi));
            let (m, fm, whole) = simpson(&f, lo, flo, hi, fhi);
            refine(&f, lo, flo, hi, fhi, m, fm, whole, tol / PANELS as f64, MAX_DEPTH)
        })
        .sum()
}

/// Iterated integral over `[a0, b0] x [a1, b1]`.
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(f: F, (a0, b0): (f64, f64), (a1, b1): (f64, f64), tol: f64) -> f64 {
    let width = (b0 - a0).abs().max(1.0);
    integrate(|x| integrate(|y| f(x, y), a1, b1, tol / width), a0, b0, tol)
}
