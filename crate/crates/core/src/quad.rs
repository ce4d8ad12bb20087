//! One-dimensional quadrature helpers and the uniform evaluation grid.

use serde::{Deserialize, Serialize};

/// Uniform grid `lo = x_0 < x_1 < ... < x_{n-1} = hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        assert!(n >= 2, "a grid needs at least two points");
        assert!(hi > lo, "grid bounds must be increasing");
        Self { lo, hi, n }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.hi
        } else {
            self.lo + j as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Smallest grid with the same point count covering both grids.
    pub fn union(&self, other: &UniformGrid) -> UniformGrid {
        UniformGrid::new(
            self.lo.min(other.lo),
            self.hi.max(other.hi),
            self.n.max(other.n),
        )
    }
}

/// Pairwise (cascade) summation; deterministic and accurate for long sums.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Trapezoid rule for samples on a uniform grid with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior = pairwise_sum(&values[1..n - 1]);
            h * (interior + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral from the first sample; `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            acc += 0.5 * h * (values[j - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // absolute target from a coarse magnitude estimate; floor avoids chasing zero integrals
    let scale = ((b - a) / 6.0 * (fa.abs() + 4.0 * fm.abs() + fb.abs())).max(1e-300);
    simpson_step(f, a, b, fa, fm, fb, whole, rel_tol * scale, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    ols_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_handles_smooth_and_kinked_integrands() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
        let kink = adaptive_simpson(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((kink - (0.045 + 0.245)).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let g = UniformGrid::new(0.0, 2.0, 11);
        let vals: Vec<f64> = g.points().iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&vals, g.spacing()) - 8.0).abs() < 1e-12);
        let cum = cumulative_trapezoid(&vals, g.spacing());
        assert_eq!(cum[0], 0.0);
        assert!((cum[10] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }

    #[test]
    fn loglog_slope_recovers_power() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.7)).collect();
        assert!((loglog_slope(&x, &y) + 0.7).abs() < 1e-12);
    }
}
