use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `(batch, channels, length)` array, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self {
            batch,
            channels,
            len,
            data: vec![0.0; batch * channels * len],
        }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::arg(format!(
                "{} values cannot fill a ({batch}, {channels}, {len}) tensor",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            channels,
            len,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, t: usize) -> f64 {
        self.data[(b * self.channels + c) * self.len + t]
    }

    /// All channels of one batch item.
    pub fn item(&self, b: usize) -> &[f64] {
        let n = self.channels * self.len;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.channels * self.len;
        &mut self.data[b * n..(b + 1) * n]
    }

    /// Copies the listed batch items into a new tensor.
    pub fn select(&self, items: &[usize]) -> Tensor3 {
        let mut data = Vec::with_capacity(items.len() * self.channels * self.len);
        for &b in items {
            data.extend_from_slice(self.item(b));
        }
        Tensor3 {
            batch: items.len(),
            channels: self.channels,
            len: self.len,
            data,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(b, c, t)` to a `(c, b·len + t)` matrix.
    pub(crate) fn to_channel_major(&self) -> Vec<f64> {
        let (nb, nc, nl) = self.shape();
        let mut out = vec![0.0; self.data.len()];
        for b in 0..nb {
            for c in 0..nc {
                let src = &self.data[(b * nc + c) * nl..(b * nc + c + 1) * nl];
                out[c * nb * nl + b * nl..c * nb * nl + (b + 1) * nl].copy_from_slice(src);
            }
        }
        out
    }

    /// Inverse of [`Tensor3::to_channel_major`].
    pub(crate) fn from_channel_major(nb: usize, nc: usize, nl: usize, m: &[f64]) -> Tensor3 {
        let mut out = Tensor3::zeros(nb, nc, nl);
        for b in 0..nb {
            for c in 0..nc {
                out.data[(b * nc + c) * nl..(b * nc + c + 1) * nl]
                    .copy_from_slice(&m[c * nb * nl + b * nl..c * nb * nl + (b + 1) * nl]);
            }
        }
        out
    }
}

/// `C = op(A)·op(B) + beta·C` for row-major contiguous matrices, where
/// `op(A)` is `m×k` and `op(B)` is `k×n`. A transposed operand is stored in
/// its untransposed layout (`k×m` for A, `n×k` for B).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: A has the wrong size");
    assert_eq!(b.len(), k * n, "gemm: B has the wrong size");
    assert_eq!(c.len(), m * n, "gemm: C has the wrong size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above guarantee every index reachable through
    // these strides lies inside the three slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
