//! The kernel family of the axisymmetric Biot-Savart law.
//!
//! For `s > 0` and dimension `d >= 3`,
//!
//! ```text
//! F(s)  = int_0^pi sin^(d-3)(t) cos(t) / [2(1 - cos t) + s]^(d/2 - 1) dt
//! F*(s) = (d-2)/2 F(s) - s F'(s)
//! ```
//!
//! The integrand of `F` changes sign on `[0, pi]`, so every evaluation here
//! folds `t -> pi - t` onto `[0, pi/2]`. With `A = 2(1 - cos t) + s` and
//! `B = 2(1 + cos t) + s` the folded integrands of `F`, `-F'` and `F''` are
//! positive multiples of `A^-p - B^-p`, which is computed by
//! [`stable_pow_diff`] rather than by subtraction.

mod powdiff;
mod quad;
mod series;
mod table;

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use powdiff::{stable_pow_diff, stable_pow_diff2};
pub use table::{build_kernel_table, table_eval, KernelTable, TableOptions};

use crate::{Error, Result};

/// Spatial dimension `d >= 3` together with `C_d`, the area of the unit
/// `(d-2)`-sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dimension {
    d: u32,
    c_d: f64,
}

impl Dimension {
    pub fn new(d: u32) -> Result<Self> {
        if d < 3 {
            return Err(Error::Config(format!("dim ≥ 3 required, got {d}")));
        }
        if d > 64 {
            return Err(Error::Config(format!("dim {d} is unreasonably large")));
        }
        // |S^1| = 2 pi, |S^2| = 4 pi, |S^(n+2)| = 2 pi |S^n| / (n + 1).
        let (mut n, mut area) = if d % 2 == 1 { (1, 2.0 * PI) } else { (2, 4.0 * PI) };
        while n < d - 2 {
            area *= 2.0 * PI / (n + 1) as f64;
            n += 2;
        }
        Ok(Dimension { d, c_d: area })
    }

    #[inline]
    pub fn d(&self) -> u32 {
        self.d
    }

    /// `C_d = 2 pi^((d-1)/2) / Gamma((d-1)/2)`.
    #[inline]
    pub fn c_d(&self) -> f64 {
        self.c_d
    }

    /// Exponent `d/2 - 1` of the stream-function kernel.
    #[inline]
    pub fn alpha(&self) -> f64 {
        0.5 * self.d as f64 - 1.0
    }

    /// `x^(d/2)` for `x > 0`, using `powi` and at most one `sqrt`.
    #[inline]
    pub fn half_d_power(&self, x: f64) -> f64 {
        let p = x.powi((self.d / 2) as i32);
        if self.d % 2 == 1 {
            p * x.sqrt()
        } else {
            p
        }
    }
}

impl TryFrom<u32> for Dimension {
    type Error = Error;

    fn try_from(d: u32) -> Result<Self> {
        Dimension::new(d)
    }
}

impl From<Dimension> for u32 {
    fn from(dim: Dimension) -> u32 {
        dim.d
    }
}

/// Quadrature controls for direct evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            rel_tol: 1e-12,
            max_panels: 4000,
        }
    }
}

/// `F`, `F'` and `F''` at one argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelDerivs {
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

impl KernelDerivs {
    #[inline]
    pub fn fstar(&self, dim: Dimension, s: f64) -> f64 {
        0.5 * (dim.d() as f64 - 2.0) * self.f - s * self.fp
    }

    /// `(F*)'(s) = (d-4)/2 F'(s) - s F''(s)`.
    #[inline]
    pub fn fstar_deriv(&self, dim: Dimension, s: f64) -> f64 {
        0.5 * (dim.d() as f64 - 4.0) * self.fp - s * self.fpp
    }

    fn values(&self, dim: Dimension, s: f64) -> KernelValues {
        KernelValues {
            f: self.f,
            fp: self.fp,
            fstar: self.fstar(dim, s),
        }
    }
}

/// The triple `(F, F', F*)` consumed by the Biot-Savart kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelValues {
    pub f: f64,
    pub fp: f64,
    pub fstar: f64,
}

/// Differences `g(s) - g(s_bar)` for `s <= s_bar` and `g` in `{F, F', F*}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelDiffs {
    /// `F(s) - F(s_bar) >= 0`.
    pub df: f64,
    /// `F'(s) - F'(s_bar) <= 0`.
    pub dfp: f64,
    /// `F*(s) - F*(s_bar)`.
    pub dfstar: f64,
    /// `F'(s_bar)`.
    pub fp_bar: f64,
}

fn check_s(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "kernel argument must be finite and positive, got {s}"
        )))
    }
}

/// Breakpoints on `[0, pi/2]` clustered where the folded integrand for
/// argument `s` varies: it peaks at `theta ~ sqrt(s)` and behaves like
/// `1/theta` out to `pi/4`.
fn seed_breaks(s_values: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.push(0.0);
    for &s in s_values {
        let mut b = s.sqrt();
        while b < FRAC_PI_4 {
            out.push(b);
            b *= 2.0;
        }
    }
    out.push(FRAC_PI_4);
    out.push(FRAC_PI_2);
    out.sort_by(f64::total_cmp);
    out.dedup();
}

/// Angular weight `sin^(d-3) cos` and the two folded denominators' base
/// `A = 4 sin^2(t/2) + s` (written to avoid cancellation in `1 - cos t`),
/// plus `B - A = 4 cos t`.
#[inline]
fn angular(dim: Dimension, theta: f64) -> (f64, f64, f64) {
    let (sin, cos) = theta.sin_cos();
    let half = (0.5 * theta).sin();
    let weight = sin.powi(dim.d() as i32 - 3) * cos;
    (weight, 4.0 * half * half, 4.0 * cos)
}

/// Direct quadrature of `F`, `F'`, `F''` at `s` on shared abscissae.
pub fn kernel_direct(dim: Dimension, s: f64, opts: QuadOptions) -> Result<KernelDerivs> {
    check_s(s)?;
    let a = dim.alpha();
    let mut breaks = Vec::with_capacity(48);
    seed_breaks(&[s], &mut breaks);
    let r = quad::integrate(
        |theta| {
            let (w, base, gap) = angular(dim, theta);
            if w == 0.0 {
                return [0.0; 3];
            }
            let x = base + s;
            let u = gap / x;
            let l = u.ln_1p();
            let xa = x.powf(-a);
            let xa1 = xa / x;
            let xa2 = xa1 / x;
            [
                w * xa * -(-a * l).exp_m1(),
                w * xa1 * -(-(a + 1.0) * l).exp_m1(),
                w * xa2 * -(-(a + 2.0) * l).exp_m1(),
            ]
        },
        &breaks,
        opts.rel_tol,
        opts.max_panels,
    )?;
    let d = dim.d() as f64;
    Ok(KernelDerivs {
        f: r[0],
        fp: -0.5 * (d - 2.0) * r[1],
        fpp: 0.25 * d * (d - 2.0) * r[2],
    })
}

/// `F(s)` by adaptive quadrature of the folded integrand.
pub fn eval_f(dim: Dimension, s: f64) -> Result<f64> {
    Ok(kernel_direct(dim, s, QuadOptions::default())?.f)
}

/// `F'(s) < 0`.
pub fn eval_f_deriv(dim: Dimension, s: f64) -> Result<f64> {
    Ok(kernel_direct(dim, s, QuadOptions::default())?.fp)
}

/// `F''(s) > 0`.
pub fn eval_f_second(dim: Dimension, s: f64) -> Result<f64> {
    Ok(kernel_direct(dim, s, QuadOptions::default())?.fpp)
}

/// `F*(s) = (d-2)/2 F(s) - s F'(s)`.
pub fn eval_f_star(dim: Dimension, s: f64) -> Result<f64> {
    let k = kernel_direct(dim, s, QuadOptions::default())?;
    Ok(k.fstar(dim, s))
}

/// Differences of the kernel family between `s <= s_bar`, each computed as a
/// single quadrature of a sign-definite second difference so that nearby
/// arguments lose no precision.
pub fn kernel_differences_direct(dim: Dimension, s: f64, s_bar: f64, opts: QuadOptions) -> Result<KernelDiffs> {
    check_s(s)?;
    check_s(s_bar)?;
    if s_bar < s {
        return Err(Error::Domain(format!("expected s ≤ s_bar, got {s} > {s_bar}")));
    }
    let a = dim.alpha();
    let delta = s_bar - s;
    let mut breaks = Vec::with_capacity(64);
    seed_breaks(&[s, s_bar], &mut breaks);
    let r = quad::integrate(
        |theta| {
            let (w, base, gap) = angular(dim, theta);
            if w == 0.0 {
                return [0.0; 3];
            }
            let x = base + s;
            let x_bar = base + s_bar;
            [
                w * powdiff::pow_diff2(a, x, gap, delta),
                w * powdiff::pow_diff2(a + 1.0, x, gap, delta),
                w * powdiff::pow_diff(a + 1.0, x_bar, gap),
            ]
        },
        &breaks,
        opts.rel_tol,
        opts.max_panels,
    )?;
    let d = dim.d() as f64;
    let df = r[0];
    let dfp = -0.5 * (d - 2.0) * r[1];
    let fp_bar = -0.5 * (d - 2.0) * r[2];
    // F*(s) - F*(s_bar) = (d-2)/2 dF - s dF' + (s_bar - s) F'(s_bar)
    let dfstar = 0.5 * (d - 2.0) * df - s * dfp + delta * fp_bar;
    Ok(KernelDiffs {
        df,
        dfp,
        dfstar,
        fp_bar,
    })
}

/// Something that can produce kernel values; the Biot-Savart sums and the
/// property suite are generic over it.
pub trait KernelSource: Sync {
    fn dim(&self) -> Dimension;

    fn values(&self, s: f64) -> Result<KernelValues>;

    /// `(F'(s), F*(s))`, the pair needed by velocities.
    fn velocity_values(&self, s: f64) -> Result<(f64, f64)> {
        let v = self.values(s)?;
        Ok((v.fp, v.fstar))
    }

    fn differences(&self, s: f64, s_bar: f64) -> Result<KernelDiffs> {
        let lo = self.values(s)?;
        let hi = self.values(s_bar)?;
        Ok(KernelDiffs {
            df: lo.f - hi.f,
            dfp: lo.fp - hi.fp,
            dfstar: lo.fstar - hi.fstar,
            fp_bar: hi.fp,
        })
    }
}

impl<T: KernelSource + ?Sized> KernelSource for Box<T> {
    fn dim(&self) -> Dimension {
        (**self).dim()
    }

    fn values(&self, s: f64) -> Result<KernelValues> {
        (**self).values(s)
    }

    fn velocity_values(&self, s: f64) -> Result<(f64, f64)> {
        (**self).velocity_values(s)
    }

    fn differences(&self, s: f64, s_bar: f64) -> Result<KernelDiffs> {
        (**self).differences(s, s_bar)
    }
}

/// Kernel values and differences straight from quadrature; the reference
/// path.
#[derive(Clone, Copy, Debug)]
pub struct DirectKernel {
    dim: Dimension,
    opts: QuadOptions,
}

impl DirectKernel {
    pub fn new(dim: Dimension) -> Self {
        DirectKernel {
            dim,
            opts: QuadOptions::default(),
        }
    }

    pub fn with_options(dim: Dimension, opts: QuadOptions) -> Self {
        DirectKernel { dim, opts }
    }
}

impl KernelSource for DirectKernel {
    fn dim(&self) -> Dimension {
        self.dim
    }

    fn values(&self, s: f64) -> Result<KernelValues> {
        Ok(kernel_direct(self.dim, s, self.opts)?.values(self.dim, s))
    }

    fn differences(&self, s: f64, s_bar: f64) -> Result<KernelDiffs> {
        kernel_differences_direct(self.dim, s, s_bar, self.opts)
    }
}

/// Production kernel: table lookup inside the tabulated range, the
/// convergent large-`s` expansion above it, quadrature otherwise.
#[derive(Clone, Debug)]
pub struct Kernel {
    dim: Dimension,
    table: Option<Arc<KernelTable>>,
    opts: QuadOptions,
}

impl Kernel {
    pub fn direct(dim: Dimension) -> Self {
        Kernel {
            dim,
            table: None,
            opts: QuadOptions::default(),
        }
    }

    pub fn tabulated(table: Arc<KernelTable>) -> Self {
        Kernel {
            dim: table.dim(),
            table: Some(table),
            opts: QuadOptions::default(),
        }
    }

    pub fn table(&self) -> Option<&KernelTable> {
        self.table.as_deref()
    }

    fn fallback(&self, s: f64) -> Result<KernelDerivs> {
        match series::large_s(self.dim, s) {
            Some(k) => Ok(k),
            None => kernel_direct(self.dim, s, self.opts),
        }
    }
}

impl KernelSource for Kernel {
    fn dim(&self) -> Dimension {
        self.dim
    }

    #[inline]
    fn values(&self, s: f64) -> Result<KernelValues> {
        if let Some(t) = &self.table {
            if t.contains(s) {
                return t.eval(s);
            }
        }
        check_s(s)?;
        Ok(self.fallback(s)?.values(self.dim, s))
    }

    #[inline]
    fn velocity_values(&self, s: f64) -> Result<(f64, f64)> {
        if let Some(t) = &self.table {
            if t.contains(s) {
                return t.eval_velocity(s);
            }
        }
        check_s(s)?;
        let k = self.fallback(s)?;
        Ok((k.fp, k.fstar(self.dim, s)))
    }

    /// Table differences unless the arguments are so close that rounding in
    /// the interpolant could dominate; those fall back to quadrature of the
    /// second difference.
    fn differences(&self, s: f64, s_bar: f64) -> Result<KernelDiffs> {
        if s_bar - s < NEAR_EQUAL * s {
            return kernel_differences_direct(self.dim, s, s_bar, self.opts);
        }
        let lo = self.values(s)?;
        let hi = self.values(s_bar)?;
        Ok(KernelDiffs {
            df: lo.f - hi.f,
            dfp: lo.fp - hi.fp,
            dfstar: lo.fstar - hi.fstar,
            fp_bar: hi.fp,
        })
    }
}

/// Relative separation below which [`Kernel`] differences are computed by
/// quadrature instead of subtraction.
const NEAR_EQUAL: f64 = 1e-6;

/// Rows `(s, F, F', F*)` on `n` log-spaced points of `[s_min, s_max]`.
pub fn kernel_samples(dim: Dimension, s_min: f64, s_max: f64, n: usize) -> Result<Vec<[f64; 4]>> {
    check_s(s_min)?;
    check_s(s_max)?;
    if s_max < s_min || n == 0 {
        return Err(Error::Config(format!(
            "need 0 < smin ≤ smax and n ≥ 1 (got smin={s_min}, smax={s_max}, n={n})"
        )));
    }
    let (l0, l1) = (s_min.ln(), s_max.ln());
    (0..n)
        .map(|i| {
            let s = if i == 0 {
                s_min
            } else if i == n - 1 {
                s_max
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            };
            let k = kernel_direct(dim, s, QuadOptions::default())?;
            Ok([s, k.f, k.fp, k.fstar(dim, s)])
        })
        .collect()
}
