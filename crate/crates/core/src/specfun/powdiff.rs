//! Cancellation-free first and second differences of `f(x) = x^(-alpha)`.

use crate::{Error, Result};

/// `1 - (1 + u)^(-alpha)` for `u >= 0`, accurate to a few ulps for any `u`.
#[inline]
fn one_minus_pow(alpha: f64, u: f64) -> f64 {
    -(-alpha * u.ln_1p()).exp_m1()
}

/// `x^(-alpha) - (x + y)^(-alpha)` without subtracting nearly equal numbers.
///
/// No domain checks; see [`stable_pow_diff`] for the checked entry point.
#[inline]
pub(crate) fn pow_diff(alpha: f64, x: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    if alpha == 1.0 {
        return y / (x * (x + y));
    }
    x.powf(-alpha) * one_minus_pow(alpha, y / x)
}

/// `G(p, q) = 1 - h(p) - h(q) + h(p + q)` with `h(u) = (1 + u)^(-alpha)`.
fn second_diff_unit(alpha: f64, p: f64, q: f64) -> f64 {
    if p == 0.0 || q == 0.0 {
        return 0.0;
    }
    let (big, small) = if p >= q { (p, q) } else { (q, p) };
    if big < 0.25 {
        // Taylor series of h around 0. The bracket (p+q)^k - p^k - q^k is built
        // by a positive recurrence so no term suffers cancellation.
        let s = p + q;
        let pq = p * q;
        let mut bracket = 0.0; // T_1
        let mut p_pow = 1.0; // p^(k-2)
        let mut q_pow = 1.0;
        let mut coeff = alpha; // (alpha)_k / k!, starting at k = 1
        let mut total = 0.0;
        for k in 2..200 {
            coeff *= (alpha + (k - 1) as f64) / k as f64;
            bracket = s * bracket + pq * (p_pow + q_pow);
            p_pow *= p;
            q_pow *= q;
            let term = coeff * bracket;
            if k % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
            if term.abs() <= 1e-18 * total.abs() {
                break;
            }
        }
        return total;
    }
    // G = E(small) - h(big) E(small / (1 + big)), E(u) = 1 - h(u); the relative
    // cancellation is bounded by 1/big.
    let h_big = (-alpha * big.ln_1p()).exp();
    one_minus_pow(alpha, small) - h_big * one_minus_pow(alpha, small / (1.0 + big))
}

/// `f(x) - f(x+y) - f(x+z) + f(x+y+z)` for `f(x) = x^(-alpha)`, unchecked.
#[inline]
pub(crate) fn pow_diff2(alpha: f64, x: f64, y: f64, z: f64) -> f64 {
    if y == 0.0 || z == 0.0 {
        return 0.0;
    }
    x.powf(-alpha) * second_diff_unit(alpha, y / x, z / x)
}

fn check(alpha: f64, x: f64, rest: &[f64]) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    for &v in rest {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("increments must be non-negative, got {v}")));
        }
    }
    Ok(())
}

/// First difference `x^(-alpha) - (x + y)^(-alpha)`, in `[0, x^(-alpha)]`.
pub fn stable_pow_diff(alpha: f64, x: f64, y: f64) -> Result<f64> {
    check(alpha, x, &[y])?;
    Ok(pow_diff(alpha, x, y))
}

/// Second difference `f(x) - f(x+y) - f(x+z) + f(x+y+z)` of `f(x) = x^(-alpha)`;
/// always non-negative.
pub fn stable_pow_diff2(alpha: f64, x: f64, y: f64, z: f64) -> Result<f64> {
    check(alpha, x, &[y, z])?;
    Ok(pow_diff2(alpha, x, y, z))
}
