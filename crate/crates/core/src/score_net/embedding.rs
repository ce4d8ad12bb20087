use serde::{Deserialize, Serialize};

/// Bounded time embedding `e(t) = (t/T, sin 2πt/T, cos 2πt/T, sin 4πt/T, ...)`
/// truncated to `dim` entries; every component lies in `[-1, 1]` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub horizon: f64,
}

impl TimeEmbedding {
    pub const DEFAULT_DIM: usize = 4;

    pub fn new(dim: usize, horizon: f64) -> Self {
        Self { dim, horizon }
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let s = t / self.horizon;
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == 0 {
                s
            } else {
                let k = j.div_ceil(2) as f64;
                let phase = 2.0 * std::f64::consts::PI * k * s;
                if j % 2 == 1 {
                    phase.sin()
                } else {
                    phase.cos()
                }
            };
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }
}
