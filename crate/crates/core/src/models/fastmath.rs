//! Vectorized `exp`, `tanh` and logistic on four lanes, with scalar wrappers
//! that share the same arithmetic.

use wide::f64x4;

const MAX_ARG: f64 = 708.0;

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
/// Adding then subtracting this rounds to the nearest integer, leaving the
/// integer in the low mantissa bits.
const ROUND: f64 = 6_755_399_441_055_744.0;

/// `e^x` by range reduction to `|r| <= ln2 / 2` and a degree-13 Taylor
/// polynomial evaluated in Estrin form.
#[inline(always)]
pub fn exp4(x: f64x4) -> f64x4 {
    let s = f64x4::splat;
    let x = x.max(s(-MAX_ARG)).min(s(MAX_ARG));
    let shifted = x * s(LOG2E) + s(ROUND);
    let k = shifted - s(ROUND);
    let r = x - k * s(LN2_HI) - k * s(LN2_LO);
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let c = |i: u32| s(1.0 / (1..=i).map(f64::from).product::<f64>());
    let p01 = s(1.0) + r;
    let p23 = c(2) + c(3) * r;
    let p45 = c(4) + c(5) * r;
    let p67 = c(6) + c(7) * r;
    let p89 = c(8) + c(9) * r;
    let p1011 = c(10) + c(11) * r;
    let p1213 = c(12) + c(13) * r;
    let q0 = p01 + p23 * r2;
    let q1 = p45 + p67 * r2;
    let q2 = p89 + p1011 * r2;
    let lo = q0 + q1 * r4;
    let hi = q2 + p1213 * r4;
    let p = lo + hi * r8;
    p * pow2_from_shifted(shifted)
}

/// `2^k` from `k + ROUND`, whose low mantissa bits hold `k`.
#[cfg(all(target_arch = "x86_64", target_feature = "avx2"))]
#[inline(always)]
fn pow2_from_shifted(shifted: f64x4) -> f64x4 {
    use std::arch::x86_64::{__m256d, _mm256_add_epi64, _mm256_castpd_si256, _mm256_castsi256_pd, _mm256_set1_epi64x, _mm256_slli_epi64};
    let v: __m256d = bytemuck::cast(shifted);
    // SAFETY: the avx2 target feature is enabled at compile time.
    let out = unsafe {
        let bits = _mm256_add_epi64(_mm256_castpd_si256(v), _mm256_set1_epi64x(1023));
        _mm256_castsi256_pd(_mm256_slli_epi64::<52>(bits))
    };
    bytemuck::cast(out)
}

#[cfg(not(all(target_arch = "x86_64", target_feature = "avx2")))]
#[inline(always)]
fn pow2_from_shifted(shifted: f64x4) -> f64x4 {
    f64x4::from(shifted.to_array().map(|b| f64::from_bits(b.to_bits().wrapping_add(1023) << 52)))
}

/// Absolute error below 1e-16 everywhere.
#[inline(always)]
pub fn tanh4(x: f64x4) -> f64x4 {
    let e = exp4(x.abs() * f64x4::splat(-2.0));
    ((f64x4::ONE - e) / (f64x4::ONE + e)).copysign(x)
}

#[inline(always)]
pub fn logistic4(x: f64x4) -> f64x4 {
    f64x4::ONE / (f64x4::ONE + exp4(-x))
}

/// Dot product accumulated in four-lane partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ca, cb) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = f64x4::ZERO;
    for (x, y) in ca.zip(cb) {
        let x = f64x4::from(<[f64; 4]>::try_from(x).expect("chunk of 4"));
        let y = f64x4::from(<[f64; 4]>::try_from(y).expect("chunk of 4"));
        acc = x.mul_add(y, acc);
    }
    acc.reduce_add() + ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>()
}

fn lane0(f: impl Fn(f64x4) -> f64x4, x: f64) -> f64 {
    f(f64x4::splat(x)).to_array()[0]
}

pub fn exp(x: f64) -> f64 {
    lane0(exp4, x)
}

pub fn tanh(x: f64) -> f64 {
    lane0(tanh4, x)
}

pub fn logistic(x: f64) -> f64 {
    lane0(logistic4, x)
}
