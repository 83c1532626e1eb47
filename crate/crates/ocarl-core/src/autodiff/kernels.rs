//! Dense kernels behind the graph ops.
//!
//! Everything here is written so the inner loops autovectorize: row slices of
//! a fixed length, no index arithmetic inside the hot loop, and unrolled
//! independent accumulators. All kernels are deterministic — accumulation
//! order is fixed by the loop structure, never by thread scheduling.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// Micro-tile height: rows of `a` broadcast per kernel invocation.
const MR: usize = 4;
/// Micro-tile width: output columns carried in vector accumulators.
const NR: usize = 16;

/// Packs `a` rows `i0..i0+MR` (layout selected by `trans`) into `k`
/// consecutive groups of `MR` scalars, zero-padded past `m`.
fn pack_a<T: Scalar>(trans: bool, m: usize, k: usize, a: &[T], i0: usize, panel: &mut [T]) {
    for p in 0..k {
        let group = &mut panel[p * MR..(p + 1) * MR];
        for (r, slot) in group.iter_mut().enumerate() {
            let i = i0 + r;
            *slot = if i < m {
                if trans { a[p * m + i] } else { a[i * k + p] }
            } else {
                T::zero()
            };
        }
    }
}

/// Packs `b` columns `j0..j0+NR` (layout selected by `trans`) into `k`
/// consecutive groups of `NR` scalars, zero-padded past `n`.
fn pack_b<T: Scalar>(trans: bool, k: usize, n: usize, b: &[T], j0: usize, panel: &mut [T]) {
    let cols = NR.min(n - j0);
    if trans {
        // p-major order writes the panel sequentially and turns the reads
        // into NR parallel forward streams, one per source row.
        for p in 0..k {
            let group = &mut panel[p * NR..(p + 1) * NR];
            for (c, slot) in group[..cols].iter_mut().enumerate() {
                *slot = b[(j0 + c) * k + p];
            }
            for slot in &mut group[cols..] {
                *slot = T::zero();
            }
        }
    } else {
        for p in 0..k {
            let row = &b[p * n + j0..p * n + j0 + cols];
            let group = &mut panel[p * NR..(p + 1) * NR];
            group[..cols].copy_from_slice(row);
            for slot in &mut group[cols..] {
                *slot = T::zero();
            }
        }
    }
}

/// `MR x NR` register-tiled product of two packed panels.
///
/// Every accumulator lane sums its `k` terms in ascending order, so results
/// match the naive triple loop exactly, independent of tiling.
fn microkernel<T: Scalar>(k: usize, ap: &[T], bp: &[T]) -> [[T; NR]; MR] {
    let mut acc = [[T::zero(); NR]; MR];
    for p in 0..k {
        let av: &[T; MR] = ap[p * MR..(p + 1) * MR].try_into().unwrap();
        let bv: &[T; NR] = bp[p * NR..(p + 1) * NR].try_into().unwrap();
        for r in 0..MR {
            let ar = av[r];
            for j in 0..NR {
                acc[r][j] = acc[r][j] + ar * bv[j];
            }
        }
    }
    acc
}

/// Shared packed-panel driver for all three gemm layouts.
///
/// `a` panels are packed once up front (the workload keeps `m*k` small enough
/// to stay cache-resident); each `b` panel is packed once and reused across
/// every row block, so `b` streams through memory exactly once per call.
fn gemm_packed<T: Scalar>(
    a_trans: bool,
    b_trans: bool,
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    c: &mut [T],
) {
    let row_blocks = m.div_ceil(MR);
    let mut ap = vec![T::zero(); row_blocks * k * MR];
    for bi in 0..row_blocks {
        pack_a(a_trans, m, k, a, bi * MR, &mut ap[bi * k * MR..(bi + 1) * k * MR]);
    }
    let mut bp = vec![T::zero(); k * NR];
    let mut j0 = 0;
    while j0 < n {
        pack_b(b_trans, k, n, b, j0, &mut bp);
        let cols = NR.min(n - j0);
        for bi in 0..row_blocks {
            let tile = microkernel(k, &ap[bi * k * MR..(bi + 1) * k * MR], &bp);
            let rows = MR.min(m - bi * MR);
            for r in 0..rows {
                let crow = &mut c[(bi * MR + r) * n + j0..][..cols];
                crow.copy_from_slice(&tile[r][..cols]);
            }
        }
        j0 += NR;
    }
}

/// `c = a @ b` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
pub fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    gemm_packed(false, false, m, k, n, a, b, c);
}

/// `c = a @ bᵀ` for row-major `a: [m,k]`, `b: [n,k]`, `c: [m,n]`.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    gemm_packed(false, true, m, k, n, a, b, c);
}

/// `c = aᵀ @ b` for row-major `a: [k,m]`, `b: [k,n]`, `c: [m,n]`.
pub fn gemm_tn<T: Scalar>(k: usize, m: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    gemm_packed(true, false, m, k, n, a, b, c);
}

/// Dot product with eight independent accumulators.
pub fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [T::zero(); 8];
    let chunks = x.len() / 8;
    for q in 0..chunks {
        let xv = &x[q * 8..q * 8 + 8];
        let yv = &y[q * 8..q * 8 + 8];
        for l in 0..8 {
            acc[l] = acc[l] + xv[l] * yv[l];
        }
    }
    let mut tail = T::zero();
    for idx in chunks * 8..x.len() {
        tail = tail + x[idx] * y[idx];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `y += alpha * x`.
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + alpha * xi;
    }
}

/// `dst = srcᵀ` for row-major `src: [r,c]`, `dst: [c,r]`.
pub fn transpose<T: Scalar>(r: usize, c: usize, src: &[T], dst: &mut [T]) {
    debug_assert_eq!(src.len(), r * c);
    debug_assert_eq!(dst.len(), r * c);
    for i in 0..r {
        let row = &src[i * c..(i + 1) * c];
        for j in 0..c {
            dst[j * r + i] = row[j];
        }
    }
}

/// Output side length of a convolution, if integral.
pub fn conv_out_side(side: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = side + 2 * pad;
    if kernel > padded || stride == 0 {
        return None;
    }
    // Floor division: positions whose window would overrun the padded edge
    // are dropped, so even sides halve cleanly under stride 2.
    Some((padded - kernel) / stride + 1)
}

/// Lowers `x: [c_in,h,w]` to a patch matrix `col: [c_in*kh*kw, ho*wo]`.
///
/// Row `(ci*kh + ki)*kw + kj`, column `ho*wo_len + wo` holds
/// `x[ci, ho*stride + ki - pad, wo*stride + kj - pad]`, zero outside bounds.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Scalar>(
    x: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    col: &mut [T],
) {
    debug_assert_eq!(x.len(), c_in * h * w);
    debug_assert_eq!(col.len(), c_in * kh * kw * ho * wo);
    let cols = ho * wo;
    for ci in 0..c_in {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            for kj in 0..kw {
                let row = &mut col[((ci * kh + ki) * kw + kj) * cols..][..cols];
                let (oj_lo, oj_hi) = tap_span(kj, pad, stride, w, wo);
                for oi in 0..ho {
                    let si = (oi * stride + ki) as isize - pad as isize;
                    let out = &mut row[oi * wo..(oi + 1) * wo];
                    if si < 0 || si >= h as isize {
                        for v in out.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src = &plane[si as usize * w..(si as usize + 1) * w];
                    for v in out[..oj_lo].iter_mut() {
                        *v = T::zero();
                    }
                    for v in out[oj_hi..].iter_mut() {
                        *v = T::zero();
                    }
                    if stride == 1 {
                        let sj0 = oj_lo + kj - pad;
                        out[oj_lo..oj_hi].copy_from_slice(&src[sj0..sj0 + (oj_hi - oj_lo)]);
                    } else {
                        for (oj, v) in out[oj_lo..oj_hi].iter_mut().enumerate() {
                            *v = src[(oj_lo + oj) * stride + kj - pad];
                        }
                    }
                }
            }
        }
    }
}

/// Output-coordinate range `[lo, hi)` whose source index `o*stride + k - pad`
/// lands inside `[0, extent)`.
fn tap_span(k: usize, pad: usize, stride: usize, extent: usize, out_extent: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if extent + pad > k {
        ((extent - 1 + pad - k) / stride + 1).min(out_extent)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Scatter-adds a patch-matrix gradient back onto the input image.
///
/// `dcol` is the patch gradient in the same `[c_in*kh*kw, ho*wo]` layout
/// `im2col` produces; `dx: [c_in,h,w]` is accumulated into. Each kernel tap
/// contributes one shifted copy of the output grid, so the inner loops are
/// branch-free row adds.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Scalar>(
    dcol: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    dx: &mut [T],
) {
    debug_assert_eq!(dcol.len(), c_in * kh * kw * ho * wo);
    debug_assert_eq!(dx.len(), c_in * h * w);
    let pixels = ho * wo;
    for ci in 0..c_in {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ki in 0..kh {
            let (oi_lo, oi_hi) = tap_span(ki, pad, stride, h, ho);
            for kj in 0..kw {
                let row = &dcol[((ci * kh + ki) * kw + kj) * pixels..][..pixels];
                let (oj_lo, oj_hi) = tap_span(kj, pad, stride, w, wo);
                for oi in oi_lo..oi_hi {
                    let si = oi * stride + ki - pad;
                    let src = &row[oi * wo + oj_lo..oi * wo + oj_hi];
                    let dst = &mut plane[si * w..(si + 1) * w];
                    if stride == 1 {
                        let sj0 = oj_lo + kj - pad;
                        for (d, &s) in dst[sj0..sj0 + src.len()].iter_mut().zip(src) {
                            *d = *d + s;
                        }
                    } else {
                        for (oj, &s) in src.iter().enumerate() {
                            let sj = (oj_lo + oj) * stride + kj - pad;
                            dst[sj] = dst[sj] + s;
                        }
                    }
                }
            }
        }
    }
}

/// Reference matrix product kept deliberately naive; tests compare the
/// optimized kernels against it.
pub fn gemm_naive<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T]) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = T::zero();
            for p in 0..k {
                s = s + a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}
