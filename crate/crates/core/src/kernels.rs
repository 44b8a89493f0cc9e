//! Single-pass loss and gradient kernels over row-major feature rows.
//!
//! Each feature row is read once per call: logits, loss and the weight
//! gradient contribution are all computed while the row is in cache.

use crate::classifier::{softmax_in_place, PROB_FLOOR};

/// Sets flush-to-zero and denormals-are-zero for its lifetime.
///
/// Far-away kernel responses sit near the bottom of the f64 range, and
/// arithmetic that touches subnormals is roughly 100x slower on x86. Flushing
/// them changes no result above 1e-308 in magnitude.
pub(crate) struct FlushSubnormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

impl FlushSubnormals {
    pub(crate) fn new() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            let mut saved = 0u32;
            // SAFETY: reads and writes MXCSR through a valid stack slot; both bits only affect subnormal handling.
            unsafe {
                std::arch::asm!("stmxcsr [{}]", in(reg) &mut saved, options(nostack));
                let flushed = saved | 0x8040;
                std::arch::asm!("ldmxcsr [{}]", in(reg) &flushed, options(nostack));
            }
            Self { saved }
        }
        #[cfg(not(target_arch = "x86_64"))]
        Self {}
    }
}

impl Drop for FlushSubnormals {
    fn drop(&mut self) {
        #[cfg(target_arch = "x86_64")]
        // SAFETY: restores the value read in `new`.
        unsafe {
            std::arch::asm!("ldmxcsr [{}]", in(reg) &self.saved, options(nostack));
        }
    }
}

const LANES: usize = 16;

/// Dot product with `LANES` independent accumulators so the compiler can vectorise it.
#[inline(always)]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] = x[l].mul_add(y[l], acc[l]);
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail = x.mul_add(*y, tail);
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    acc[0] + tail
}

/// `y += alpha * x`.
#[inline(always)]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = alpha.mul_add(*xi, *yi);
    }
}

/// Selected rows: all of them, or an index list.
#[derive(Clone, Copy)]
pub(crate) enum Rows<'a> {
    All(usize),
    Subset(&'a [usize]),
}

impl Rows<'_> {
    fn len(&self) -> usize {
        match self {
            Rows::All(n) => *n,
            Rows::Subset(idx) => idx.len(),
        }
    }

    fn get(&self, t: usize) -> usize {
        match self {
            Rows::All(_) => t,
            Rows::Subset(idx) => idx[t],
        }
    }
}

/// Mean softmax NLL of a single `k x w` row-major weight matrix; gradient overwrites `grad`.
pub(crate) fn softmax_nll_grad(
    features: &[f64],
    w: usize,
    rows: Rows<'_>,
    labels: &[u32],
    params: &[f64],
    k: usize,
    grad: &mut [f64],
) -> f64 {
    let _ftz = FlushSubnormals::new();
    macro_rules! fixed {
        ($k:literal) => {{
            #[cfg(target_arch = "x86_64")]
            if has_simd() {
                // SAFETY: the CPU supports AVX2 and FMA.
                return unsafe { softmax_fixed_simd::<$k>(features, w, rows, labels, params, grad) };
            }
            softmax_fixed::<$k>(features, w, rows, labels, params, grad)
        }};
    }
    match k {
        2 => fixed!(2),
        3 => fixed!(3),
        4 => fixed!(4),
        5 => fixed!(5),
        6 => fixed!(6),
        7 => fixed!(7),
        8 => fixed!(8),
        _ => {
            #[cfg(target_arch = "x86_64")]
            if has_simd() {
                // SAFETY: the CPU supports AVX2 and FMA.
                return unsafe { softmax_any_simd(features, w, rows, labels, params, k, grad) };
            }
            softmax_any(features, w, rows, labels, params, k, grad)
        }
    }
}

/// Wider vectors change instruction selection only: every sum keeps its order and
/// products are fused through `mul_add` on both paths, so results are bit-identical.
#[cfg(target_arch = "x86_64")]
fn has_simd() -> bool {
    std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn softmax_fixed_simd<const K: usize>(
    features: &[f64],
    w: usize,
    rows: Rows<'_>,
    labels: &[u32],
    params: &[f64],
    grad: &mut [f64],
) -> f64 {
    softmax_fixed::<K>(features, w, rows, labels, params, grad)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn softmax_any_simd(
    features: &[f64],
    w: usize,
    rows: Rows<'_>,
    labels: &[u32],
    params: &[f64],
    k: usize,
    grad: &mut [f64],
) -> f64 {
    softmax_any(features, w, rows, labels, params, k, grad)
}

/// `out[c] += <rows[c], phi>`, reading `phi` once.
#[inline(always)]
fn multi_dot<const K: usize>(rows: &[&[f64]; K], phi: &[f64], out: &mut [f64; K]) {
    const L: usize = 4;
    let w = phi.len();
    let mut acc = [[0.0; L]; K];
    let body = w / L * L;
    let mut j = 0;
    while j < body {
        for l in 0..L {
            let p = phi[j + l];
            for c in 0..K {
                acc[c][l] = rows[c][j + l].mul_add(p, acc[c][l]);
            }
        }
        j += L;
    }
    for c in 0..K {
        let mut t = (acc[c][0] + acc[c][2]) + (acc[c][1] + acc[c][3]);
        for jj in body..w {
            t = rows[c][jj].mul_add(phi[jj], t);
        }
        out[c] += t;
    }
}

/// `rows[c] += d[c] * phi`, reading `phi` once.
#[inline(always)]
fn multi_axpy<const K: usize>(d: &[f64; K], phi: &[f64], rows: &mut [&mut [f64]; K]) {
    for (j, &p) in phi.iter().enumerate() {
        for c in 0..K {
            rows[c][j] = d[c].mul_add(p, rows[c][j]);
        }
    }
}

const ROW_BLOCK: usize = 32;
const COL_TILE: usize = 256;

/// Shared driver for linear models with `K` outputs over `w`-wide rows.
///
/// Rows are processed in blocks and columns in tiles so the weight and
/// gradient tiles stay in L1 whatever the width. `head` receives a row index
/// and its logits, returns that row's loss and overwrites the logits with
/// `d loss / d logits`.
#[inline(always)]
fn linear_nll_grad<const K: usize>(
    features: &[f64],
    w: usize,
    rows: Rows<'_>,
    params: &[f64],
    grad: &mut [f64],
    mut head: impl FnMut(usize, &mut [f64; K]) -> f64,
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = rows.len();
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut z = [[0.0; K]; ROW_BLOCK];
    let mut idx = [0usize; ROW_BLOCK];
    let mut start = 0;
    while start < n {
        let b = ROW_BLOCK.min(n - start);
        for r in 0..b {
            idx[r] = rows.get(start + r);
            z[r] = [0.0; K];
        }
        let mut c0 = 0;
        while c0 < w {
            let c1 = (c0 + COL_TILE).min(w);
            let wt: [&[f64]; K] = std::array::from_fn(|c| &params[c * w + c0..c * w + c1]);
            for r in 0..b {
                let base = idx[r] * w;
                multi_dot::<K>(&wt, &features[base + c0..base + c1], &mut z[r]);
            }
            c0 = c1;
        }
        for r in 0..b {
            loss += head(idx[r], &mut z[r]);
            z[r].iter_mut().for_each(|d| *d *= inv_n);
        }
        let mut c0 = 0;
        while c0 < w {
            let c1 = (c0 + COL_TILE).min(w);
            let mut rest = &mut grad[..];
            let mut gt: [&mut [f64]; K] = std::array::from_fn(|_| {
                let (row, tail) = std::mem::take(&mut rest).split_at_mut(w);
                rest = tail;
                &mut row[c0..c1]
            });
            for r in 0..b {
                let base = idx[r] * w;
                multi_axpy::<K>(&z[r], &features[base + c0..base + c1], &mut gt);
            }
            c0 = c1;
        }
        start += b;
    }
    loss * inv_n
}

#[inline(always)]
fn softmax_fixed<const K: usize>(
    features: &[f64],
    w: usize,
    rows: Rows<'_>,
    labels: &[u32],
    params: &[f64],
    grad: &mut [f64],
) -> f64 {
    linear_nll_grad::<K>(features, w, rows, params, grad, |i, z| {
        softmax_in_place(z);
        let y = labels[i] as usize - 1;
        let nll = -z[y].max(PROB_FLOOR).ln();
        z[y] -= 1.0;
        nll
    })
}

#[inline(always)]
fn softmax_any(features: &[f64], w: usize, rows: Rows<'_>, labels: &[u32], params: &[f64], k: usize, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = rows.len();
    let inv_n = 1.0 / n as f64;
    let mut z = vec![0.0; k];
    let mut loss = 0.0;
    for t in 0..n {
        let i = rows.get(t);
        let phi = &features[i * w..(i + 1) * w];
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = dot(&params[c * w..(c + 1) * w], phi);
        }
        softmax_in_place(&mut z);
        let y = labels[i] as usize - 1;
        loss -= z[y].max(PROB_FLOOR).ln();
        z[y] -= 1.0;
        for (c, &d) in z.iter().enumerate() {
            if d != 0.0 {
                axpy(d * inv_n, phi, &mut grad[c * w..(c + 1) * w]);
            }
        }
    }
    loss * inv_n
}

/// Mean binary cross-entropy of a logistic model; gradient overwrites `grad`.
pub(crate) fn logistic_nll_grad(features: &[f64], rows: Rows<'_>, targets: &[f64], params: &[f64], grad: &mut [f64]) -> f64 {
    let _ftz = FlushSubnormals::new();
    #[cfg(target_arch = "x86_64")]
    if has_simd() {
        // SAFETY: the CPU supports AVX2 and FMA.
        return unsafe { logistic_simd(features, rows, targets, params, grad) };
    }
    logistic_body(features, rows, targets, params, grad)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn logistic_simd(features: &[f64], rows: Rows<'_>, targets: &[f64], params: &[f64], grad: &mut [f64]) -> f64 {
    logistic_body(features, rows, targets, params, grad)
}

#[inline(always)]
fn logistic_body(features: &[f64], rows: Rows<'_>, targets: &[f64], params: &[f64], grad: &mut [f64]) -> f64 {
    use crate::baselines::{sigmoid, softplus};
    linear_nll_grad::<1>(features, params.len(), rows, params, grad, |i, z| {
        let y = targets[i];
        let nll = softplus(z[0]) - y * z[0];
        z[0] = sigmoid(z[0]) - y;
        nll
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_and_generic_softmax_agree() {
        let (n, w) = (9, 7);
        let features: Vec<f64> = (0..n * w).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        for k in 2..=10 {
            let params: Vec<f64> = (0..k * w).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.2).collect();
            let labels: Vec<u32> = (0..n).map(|i| (i % k) as u32 + 1).collect();
            let idx = [4, 0, 8, 8, 2];
            for rows in [Rows::All(n), Rows::Subset(&idx)] {
                let mut g1 = vec![1.0; k * w];
                let mut g2 = vec![0.0; k * w];
                let l1 = softmax_nll_grad(&features, w, rows, &labels, &params, k, &mut g1);
                let l2 = softmax_any(&features, w, rows, &labels, &params, k, &mut g2);
                assert!((l1 - l2).abs() < 1e-12);
                for (a, b) in g1.iter().zip(&g2) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flush_guard_restores_subnormals() {
        let tiny = std::hint::black_box(f64::MIN_POSITIVE);
        {
            let _g = FlushSubnormals::new();
            #[cfg(target_arch = "x86_64")]
            assert_eq!(std::hint::black_box(tiny) / 2.0, 0.0);
        }
        assert!(std::hint::black_box(tiny) / 2.0 > 0.0);
    }

    #[test]
    fn dot_matches_naive_sum() {
        for n in [0, 1, 3, 4, 5, 16, 17, 40] {
            let a: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
            let b: Vec<f64> = (0..n).map(|i| 2.0 - i as f64 * 0.25).collect();
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
        }
    }
}
