//! Soft dynamic time warping with squared-difference ground cost.
//!
//! `R[i,j] = (x_i - y_j)² + softmin_γ(R[i-1,j-1], R[i-1,j], R[i,j-1])` with
//! `R[0,0] = 0` and an infinite border; the loss is `R[n,m]`. The gradient
//! comes from the backward recursion over expected alignments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stand-in for `+∞` in the DP tables. Any argument at or above it is
/// ignored by [`softmin3`].
pub const INF: f64 = 1e30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdtwConfig {
    pub gamma: f64,
}

impl Default for SdtwConfig {
    fn default() -> Self {
        Self { gamma: 0.1 }
    }
}

impl SdtwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::arg(format!("gamma must be positive, got {}", self.gamma)))
        }
    }
}

/// `-γ·log(e^{-a/γ} + e^{-b/γ} + e^{-c/γ})`, shifted by the minimum.
pub fn softmin3(a: f64, b: f64, c: f64, gamma: f64) -> f64 {
    let lo = a.min(b).min(c);
    if lo >= INF {
        return INF;
    }
    let term = |v: f64| if v >= INF { 0.0 } else { (-(v - lo) / gamma).exp() };
    lo - gamma * (term(a) + term(b) + term(c)).ln()
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::arg("soft-DTW needs two non-empty sequences"));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::Numerical {
            context: "soft-DTW input".into(),
        });
    }
    Ok(())
}

/// Accumulated-cost table with an `(n+2)×(m+2)` layout so the backward
/// pass can use the extra row and column.
struct Tables {
    n: usize,
    m: usize,
    r: Vec<f64>,
}

impl Tables {
    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.m + 2) + j
    }

    fn forward(x: &[f64], y: &[f64], gamma: f64) -> Tables {
        let (n, m) = (x.len(), y.len());
        let mut t = Tables {
            n,
            m,
            r: vec![INF; (n + 2) * (m + 2)],
        };
        t.r[0] = 0.0;
        for i in 1..=n {
            for j in 1..=m {
                let d = (x[i - 1] - y[j - 1]).powi(2);
                let prev = softmin3(
                    t.r[t.idx(i - 1, j - 1)],
                    t.r[t.idx(i - 1, j)],
                    t.r[t.idx(i, j - 1)],
                    gamma,
                );
                let k = t.idx(i, j);
                t.r[k] = d + prev;
            }
        }
        t
    }

    fn value(&self) -> f64 {
        self.r[self.idx(self.n, self.m)]
    }

    /// Gradient of `R[n,m]` wrt `x`.
    fn backward(mut self, x: &[f64], y: &[f64], gamma: f64) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let cost = |i: usize, j: usize| {
            if i >= 1 && i <= n && j >= 1 && j <= m {
                (x[i - 1] - y[j - 1]).powi(2)
            } else {
                0.0
            }
        };
        for i in 1..=n {
            let k = self.idx(i, m + 1);
            self.r[k] = -INF;
        }
        for j in 1..=m {
            let k = self.idx(n + 1, j);
            self.r[k] = -INF;
        }
        let corner = self.idx(n + 1, m + 1);
        self.r[corner] = self.value();

        let mut e = vec![0.0; (n + 2) * (m + 2)];
        e[corner] = 1.0;
        let mut grad = vec![0.0; n];
        for i in (1..=n).rev() {
            for j in (1..=m).rev() {
                let here = self.r[self.idx(i, j)];
                let w = |ii: usize, jj: usize| {
                    ((self.r[self.idx(ii, jj)] - here - cost(ii, jj)) / gamma).exp()
                };
                let v = e[self.idx(i + 1, j)] * w(i + 1, j)
                    + e[self.idx(i, j + 1)] * w(i, j + 1)
                    + e[self.idx(i + 1, j + 1)] * w(i + 1, j + 1);
                let k = self.idx(i, j);
                e[k] = v;
                grad[i - 1] += v * 2.0 * (x[i - 1] - y[j - 1]);
            }
        }
        grad
    }
}

pub fn sdtw(x: &[f64], y: &[f64], cfg: &SdtwConfig) -> Result<f64> {
    check_inputs(x, y)?;
    Ok(Tables::forward(x, y, cfg.gamma).value())
}

/// Gradient of [`sdtw`] wrt `x`.
pub fn sdtw_grad(x: &[f64], y: &[f64], cfg: &SdtwConfig) -> Result<Vec<f64>> {
    Ok(sdtw_value_and_grad(x, y, cfg)?.1)
}

/// Value and gradient from a single forward table.
pub fn sdtw_value_and_grad(x: &[f64], y: &[f64], cfg: &SdtwConfig) -> Result<(f64, Vec<f64>)> {
    check_inputs(x, y)?;
    let t = Tables::forward(x, y, cfg.gamma);
    let v = t.value();
    Ok((v, t.backward(x, y, cfg.gamma)))
}

/// Pairwise soft-DTW of `k` row-major windows of length `w`.
pub fn sdtw_batch(xs: &[f64], ys: &[f64], w: usize, cfg: &SdtwConfig) -> Result<Vec<f64>> {
    if w == 0 || xs.len() != ys.len() || !xs.len().is_multiple_of(w) {
        return Err(Error::arg("batch soft-DTW needs equal, whole batches of windows"));
    }
    xs.chunks(w)
        .zip(ys.chunks(w))
        .map(|(x, y)| sdtw(x, y, cfg))
        .collect()
}

/// Classic DTW with the same ground cost and boundary conditions.
pub fn dtw_exact(x: &[f64], y: &[f64]) -> Result<f64> {
    check_inputs(x, y)?;
    let (n, m) = (x.len(), y.len());
    let mut r = vec![f64::INFINITY; (n + 1) * (m + 1)];
    r[0] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = r[(i - 1) * (m + 1) + j - 1]
                .min(r[(i - 1) * (m + 1) + j])
                .min(r[i * (m + 1) + j - 1]);
            r[i * (m + 1) + j] = (x[i - 1] - y[j - 1]).powi(2) + best;
        }
    }
    Ok(r[n * (m + 1) + m])
}

/// Mean squared difference over aligned indices.
pub fn euclidean(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::arg(format!(
            "euclidean loss needs equal non-empty lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// `(2/n)(x - y)`
pub fn euclidean_grad(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    euclidean(x, y)?;
    let n = x.len() as f64;
    Ok(x.iter().zip(y).map(|(a, b)| 2.0 * (a - b) / n).collect())
}
