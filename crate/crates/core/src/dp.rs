//! The renewal convolution W_m = z_m Σ_{j<m} W_j K(m-j) shared by the pure
//! and quenched partition functions.
//!
//! Values are kept in linear space under a common power-of-two scale, which
//! is shifted (exactly) whenever the newest entry grows past 2^512. Entries
//! that underflow after a shift are at least 2^-560 times smaller than the
//! current front and cannot affect later terms at double precision.

use crate::kernels::InterArrivalLaw;

const RESCALE_BITS: i32 = 512;

/// K(1..=n) stored reversed so each convolution is a contiguous dot product.
pub(crate) struct ReversedKernel {
    rev: Vec<f64>,
}

impl ReversedKernel {
    pub(crate) fn new(law: &InterArrivalLaw, n: usize) -> Self {
        let rev = (0..n).map(|i| law.k((n - i) as u64)).collect();
        ReversedKernel { rev }
    }

    pub(crate) fn len(&self) -> usize {
        self.rev.len()
    }

    /// K(m), K(m-1), ..., K(1).
    pub(crate) fn window(&self, m: usize) -> &[f64] {
        &self.rev[self.rev.len() - m..]
    }
}

/// Fixed-order dot product; the association is independent of the thread
/// or platform, keeping results bit-reproducible.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// log W_0..=log W_n with W_0 = 1 and per-step weights z_m = exp(log_z(m)).
pub(crate) fn log_partition_series(
    kernel: &ReversedKernel,
    n: usize,
    mut log_z: impl FnMut(usize) -> f64,
) -> Vec<f64> {
    assert!(n <= kernel.len(), "horizon {n} exceeds kernel length {}", kernel.len());
    let up = 2f64.powi(RESCALE_BITS);
    let down = 2f64.powi(-RESCALE_BITS);
    let mut w = Vec::with_capacity(n + 1);
    let mut out = Vec::with_capacity(n + 1);
    let mut shift = 0i64;
    w.push(1.0);
    out.push(0.0);
    for m in 1..=n {
        let mut v = dot(&w[..m], kernel.window(m)) * log_z(m).exp();
        if v > up {
            for x in w.iter_mut() {
                *x *= down;
            }
            v *= down;
            shift += RESCALE_BITS as i64;
        }
        w.push(v);
        out.push(v.ln() + shift as f64 * std::f64::consts::LN_2);
    }
    out
}

/// Constant weight e^h.
pub(crate) fn pure_log_partition(kernel: &ReversedKernel, h: f64, n: usize) -> Vec<f64> {
    log_partition_series(kernel, n, |_| h)
}
