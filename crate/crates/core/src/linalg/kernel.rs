//! Register-blocked matrix product kernels.
//!
//! `C = A * B` where `B` is row-major and `A` is addressed through a row and a
//! column stride, so the same kernel serves both `A * B` and `A^T * B`. The
//! widest instruction set available at runtime is selected once and cached.
//! Each output entry is accumulated in a fixed order over the inner index, so
//! results are reproducible on a given machine.

use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Isa {
    Generic,
    #[cfg(target_arch = "x86_64")]
    Avx2Fma,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn isa() -> Isa {
    static ISA: OnceLock<Isa> = OnceLock::new();
    *ISA.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("fma") {
                return Isa::Avx512;
            }
            if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
                return Isa::Avx2Fma;
            }
        }
        Isa::Generic
    })
}

/// Name of the kernel variant in use, for reports.
pub fn kernel_name() -> &'static str {
    match isa() {
        Isa::Generic => "generic",
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2Fma => "avx2-fma",
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 => "avx512",
    }
}

/// Strided view of the left operand: element `(i, p)` lives at `data[i * rs + p * cs]`.
#[derive(Clone, Copy)]
pub(crate) struct Lhs<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

/// Below this many multiply-adds the plain triple loop wins.
const SMALL: usize = 2048;

/// Returns the row-major `m x n` product of `lhs` (`m x k`) and row-major `b` (`k x n`).
pub(crate) fn gemm(lhs: Lhs<'_>, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(b.len(), k * n);
    if m == 0 || n == 0 {
        return vec![0.0; m * n];
    }
    if k == 0 {
        return vec![0.0; m * n];
    }
    if m * k * n <= SMALL {
        return gemm_small(lhs, b, m, k, n);
    }
    match isa() {
        Isa::Generic => gemm_generic(lhs, b, m, k, n),
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2Fma => unsafe { gemm_avx2(lhs, b, m, k, n) },
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 => unsafe { gemm_avx512(lhs, b, m, k, n) },
    }
}

fn gemm_small(lhs: Lhs<'_>, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = lhs.data[i * lhs.rs + p * lhs.cs];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += s * bv;
            }
        }
    }
    out
}

#[inline(always)]
fn fused(a: f64, b: f64, c: f64) -> f64 {
    a.mul_add(b, c)
}

#[inline(always)]
fn plain(a: f64, b: f64, c: f64) -> f64 {
    a * b + c
}

/// Expands to a blocked product over 8-column tiles; `$mr` is the row-block height.
macro_rules! blocked_gemm {
    ($lhs:expr, $b:expr, $m:expr, $k:expr, $n:expr, $madd:ident, $mr:expr) => {{
        #[inline(always)]
        fn column_block<const NR: usize>(lhs: Lhs<'_>, b: &[f64], c: &mut [f64], m: usize, k: usize, ldb: usize, j0: usize) {
            let mut i0 = 0;
            while i0 + $mr <= m {
                tile::<{ $mr }, NR>(lhs, b, c, k, ldb, i0, j0);
                i0 += $mr;
            }
            while i0 < m {
                tile::<1, NR>(lhs, b, c, k, ldb, i0, j0);
                i0 += 1;
            }
        }
        #[inline(always)]
        fn tile<const MR: usize, const NR: usize>(lhs: Lhs<'_>, b: &[f64], c: &mut [f64], k: usize, ldb: usize, i0: usize, j0: usize) {
            assert!((i0 + MR - 1) * lhs.rs + (k - 1) * lhs.cs < lhs.data.len());
            assert!((k - 1) * ldb + j0 + NR <= b.len());
            let mut acc = [[0.0f64; NR]; MR];
            let ap = lhs.data.as_ptr();
            let bp = b.as_ptr();
            for p in 0..k {
                // SAFETY: both bounds were asserted above for the largest indices touched.
                let brow = unsafe { &*(bp.wrapping_add(p.wrapping_mul(ldb).wrapping_add(j0)) as *const [f64; NR]) };
                let pc = p.wrapping_mul(lhs.cs);
                for q in 0..MR {
                    let s = unsafe { *ap.wrapping_add((i0 + q).wrapping_mul(lhs.rs).wrapping_add(pc)) };
                    for j in 0..NR {
                        acc[q][j] = $madd(s, brow[j], acc[q][j]);
                    }
                }
            }
            for q in 0..MR {
                let row = (i0 + q) * ldb + j0;
                c[row..row + NR].copy_from_slice(&acc[q]);
            }
        }
        let (lhs, b, m, k, n): (Lhs<'_>, &[f64], usize, usize, usize) = ($lhs, $b, $m, $k, $n);
        let np = n.div_ceil(8) * 8;
        let padded: Vec<f64>;
        let bb: &[f64] = if np == n {
            b
        } else {
            let mut v = vec![0.0; k * np];
            for p in 0..k {
                v[p * np..p * np + n].copy_from_slice(&b[p * n..(p + 1) * n]);
            }
            padded = v;
            &padded
        };
        let mut cp = vec![0.0; m * np];
        let mut j0 = 0;
        while j0 < np {
            column_block::<8>(lhs, bb, &mut cp, m, k, np, j0);
            j0 += 8;
        }
        if np == n {
            cp
        } else {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                out[i * n..(i + 1) * n].copy_from_slice(&cp[i * np..i * np + n]);
            }
            out
        }
    }};
}

fn gemm_generic(lhs: Lhs<'_>, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    blocked_gemm!(lhs, b, m, k, n, plain, 4)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn gemm_avx2(lhs: Lhs<'_>, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    blocked_gemm!(lhs, b, m, k, n, fused, 6)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn gemm_avx512(lhs: Lhs<'_>, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    use std::arch::x86_64::__mmask8;
    assert!((m - 1) * lhs.rs + (k - 1) * lhs.cs < lhs.data.len());
    let mut c = vec![0.0; m * n];
    let mut j0 = 0;
    while j0 < n {
        let w = (n - j0).min(24);
        let nv = w.div_ceil(8);
        let rem = w - (nv - 1) * 8;
        let mask: __mmask8 = if rem == 8 { 0xff } else { ((1u16 << rem) - 1) as u8 };
        let mut i0 = 0;
        while i0 < m {
            // 8-row tiles keep 24 accumulators plus the loaded row of b in registers
            let mr = match m - i0 {
                rest if rest >= 8 => 8,
                rest if rest >= 4 => 4,
                _ => 1,
            };
            // SAFETY: lhs bounds asserted above; b and c column ranges stay below n with the mask.
            match (mr, nv) {
                (8, 3) => avx512_tile::<8, 3>(lhs, b, &mut c, k, n, i0, j0, mask),
                (8, 2) => avx512_tile::<8, 2>(lhs, b, &mut c, k, n, i0, j0, mask),
                (8, _) => avx512_tile::<8, 1>(lhs, b, &mut c, k, n, i0, j0, mask),
                (4, 3) => avx512_tile::<4, 3>(lhs, b, &mut c, k, n, i0, j0, mask),
                (4, 2) => avx512_tile::<4, 2>(lhs, b, &mut c, k, n, i0, j0, mask),
                (4, _) => avx512_tile::<4, 1>(lhs, b, &mut c, k, n, i0, j0, mask),
                (_, 3) => avx512_tile::<1, 3>(lhs, b, &mut c, k, n, i0, j0, mask),
                (_, 2) => avx512_tile::<1, 2>(lhs, b, &mut c, k, n, i0, j0, mask),
                _ => avx512_tile::<1, 1>(lhs, b, &mut c, k, n, i0, j0, mask),
            }
            i0 += mr;
        }
        j0 += w;
    }
    c
}

/// `MR x (8 NV)` block of the product; the last vector column is masked.
#[cfg(target_arch = "x86_64")]
#[inline]
#[target_feature(enable = "avx512f,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn avx512_tile<const MR: usize, const NV: usize>(
    lhs: Lhs<'_>,
    b: &[f64],
    c: &mut [f64],
    k: usize,
    n: usize,
    i0: usize,
    j0: usize,
    mask: std::arch::x86_64::__mmask8,
) {
    use std::arch::x86_64::*;
    let mut acc = [[_mm512_setzero_pd(); NV]; MR];
    // wrapping index arithmetic: the bounds were checked by the caller and
    // overflow checks in this loop cost more than the arithmetic itself
    let ap = lhs.data.as_ptr();
    let bp = b.as_ptr().wrapping_add(j0);
    let mut arow = [0usize; MR];
    for (q, a) in arow.iter_mut().enumerate() {
        *a = (i0 + q) * lhs.rs;
    }
    for p in 0..k {
        let brow = bp.wrapping_add(p.wrapping_mul(n));
        let pc = p.wrapping_mul(lhs.cs);
        let mut bv = [_mm512_setzero_pd(); NV];
        for (v, slot) in bv.iter_mut().enumerate() {
            *slot =
                if v + 1 == NV { _mm512_maskz_loadu_pd(mask, brow.wrapping_add(v * 8)) } else { _mm512_loadu_pd(brow.wrapping_add(v * 8)) };
        }
        for (q, row) in acc.iter_mut().enumerate() {
            let s = _mm512_set1_pd(*ap.wrapping_add(arow[q].wrapping_add(pc)));
            for (a, bvv) in row.iter_mut().zip(&bv) {
                *a = _mm512_fmadd_pd(s, *bvv, *a);
            }
        }
    }
    let cp = c.as_mut_ptr();
    for (q, row) in acc.iter().enumerate() {
        let out = cp.wrapping_add((i0 + q) * n + j0);
        for (v, a) in row.iter().enumerate() {
            if v + 1 == NV {
                _mm512_mask_storeu_pd(out.wrapping_add(v * 8), mask, *a);
            } else {
                _mm512_storeu_pd(out.wrapping_add(v * 8), *a);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(lhs: Lhs<'_>, b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += lhs.data[i * lhs.rs + p * lhs.cs] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn blocked_paths_agree_with_reference() {
        for &(m, k, n) in &[(1, 1, 1), (7, 5, 3), (13, 40, 20), (50, 30, 9), (31, 17, 33), (64, 64, 64)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 37 % 101) as f64) / 50.0 - 1.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 53 % 97) as f64) / 40.0 - 1.2).collect();
            let lhs = Lhs { data: &a, rs: k, cs: 1 };
            let want = reference(lhs, &b, m, k, n);
            for got in [gemm(lhs, &b, m, k, n), gemm_generic(lhs, &b, m, k, n)] {
                for (x, y) in got.iter().zip(&want) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{m}x{k}x{n}: {x} vs {y}");
                }
            }
            // transposed addressing: treat `a` as k x m and multiply its transpose
            if m * k == a.len() {
                let lhs_t = Lhs { data: &a, rs: 1, cs: m };
                let want_t = reference(lhs_t, &b[..k * n], m, k, n);
                let got_t = gemm(lhs_t, &b[..k * n], m, k, n);
                for (x, y) in got_t.iter().zip(&want_t) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
                }
            }
        }
    }
}
