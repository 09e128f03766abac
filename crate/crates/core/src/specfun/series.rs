//! Convergent large-argument expansion of the kernel family.
//!
//! With `t = s + 2` and `x = 2 cos(theta) / t`, the folded bracket is
//! `t^-a [(1 - x)^-a - (1 + x)^-a] = 2 t^-a sum_{k odd} (a)_k / k! x^k`, so
//! `F(s) = sum_{k odd} c_k t^(-a-k)` with `c_k = 2^(k+1) (a)_k / k! M_(k+1)` and
//! `M_m = int_0^(pi/2) sin^(d-3) cos^m`. The ratio of successive terms is
//! below `4 / t^2` times a bounded factor, so a handful of terms suffice once
//! `s` is a few dozen.

use super::{Dimension, KernelDerivs};

/// Smallest `s` for which [`large_s`] is used.
pub(crate) const SERIES_MIN_S: f64 = 32.0;

/// `int_0^(pi/2) sin^n`.
fn wallis(n: u32) -> f64 {
    let mut w = if n.is_multiple_of(2) { std::f64::consts::FRAC_PI_2 } else { 1.0 };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        w *= (k - 1) as f64 / k as f64;
        k += 2;
    }
    w
}

pub(crate) fn large_s(dim: Dimension, s: f64) -> Option<KernelDerivs> {
    if !(s >= SERIES_MIN_S) || !s.is_finite() {
        return None;
    }
    let d = dim.d() as f64;
    let a = dim.alpha();
    let t = s + 2.0;
    let inv_t = 1.0 / t;
    let inv_t2 = inv_t * inv_t;

    // m = k + 1 runs over even values; M_m = (m-1)/(d-3+m) M_(m-2).
    let mut moment = wallis(dim.d() - 3) / (d - 1.0); // M_2
    let mut poch = a; // (a)_k / k! at k = 1
    let mut pow2 = 4.0; // 2^(k+1)
    let mut tpow = t.powf(-a) * inv_t; // t^(-a-k)

    let (mut f, mut fp, mut fpp) = (0.0, 0.0, 0.0);
    let mut k = 1u32;
    loop {
        let kf = k as f64;
        let c = pow2 * poch * moment;
        let term = c * tpow;
        f += term;
        fp -= term * (a + kf) * inv_t;
        fpp += term * (a + kf) * (a + kf + 1.0) * inv_t2;
        if term <= 1e-18 * f || k > 120 {
            break;
        }
        // advance k -> k + 2
        poch *= (a + kf) * (a + kf + 1.0) / ((kf + 1.0) * (kf + 2.0));
        pow2 *= 4.0;
        let m = kf + 3.0;
        moment *= (m - 1.0) / (d - 3.0 + m);
        tpow *= inv_t2;
        k += 2;
    }
    Some(KernelDerivs { f, fp, fpp })
}
