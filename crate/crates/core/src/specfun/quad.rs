//! Adaptive Gauss-Kronrod (7/15) quadrature for small vectors of
//! sign-definite integrands sharing the same abscissae.

use crate::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    abs: [f64; N],
    err: [f64; N],
}

fn gk15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Panel<N> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut abs = [0.0; N];
    for k in 0..N {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
        abs[k] = WGK[7] * fc[k].abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for k in 0..N {
            let pair = f1[k] + f2[k];
            kron[k] += WGK[j] * pair;
            abs[k] += WGK[j] * (f1[k].abs() + f2[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * pair;
            }
        }
    }
    let mut value = [0.0; N];
    let mut err = [0.0; N];
    for k in 0..N {
        value[k] = kron[k] * half;
        abs[k] *= half.abs();
        err[k] = ((kron[k] - gauss[k]) * half).abs();
    }
    Panel { a, b, value, abs, err }
}

/// Integrates each component of `f` over `[breaks[0], breaks.last()]`, bisecting
/// the worst panel until every component's error estimate is below
/// `rel_tol` times the integral of its absolute value.
pub(crate) fn integrate<const N: usize, F: Fn(f64) -> [f64; N]>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    max_panels: usize,
) -> Result<[f64; N]> {
    debug_assert!(breaks.len() >= 2);
    let mut panels: Vec<Panel<N>> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&f, w[0], w[1]))
        .collect();

    loop {
        let mut value = [0.0; N];
        let mut abs = [0.0; N];
        let mut err = [0.0; N];
        for p in &panels {
            for k in 0..N {
                value[k] += p.value[k];
                abs[k] += p.abs[k];
                err[k] += p.err[k];
            }
        }
        let mut worst_ratio = 0.0f64;
        for k in 0..N {
            if abs[k] > 0.0 {
                worst_ratio = worst_ratio.max(err[k] / abs[k]);
            } else if err[k] > 0.0 {
                worst_ratio = f64::INFINITY;
            }
        }
        if worst_ratio <= rel_tol {
            return Ok(value);
        }
        if panels.len() >= max_panels {
            return Err(Error::Accuracy {
                requested: rel_tol,
                achieved: worst_ratio,
            });
        }

        // Bisect the panel contributing the largest normalised error.
        let (idx, _) = panels
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let score = (0..N)
                    .map(|k| if abs[k] > 0.0 { p.err[k] / abs[k] } else { p.err[k] })
                    .fold(0.0f64, f64::max);
                (i, score)
            })
            .fold(
                (0, f64::NEG_INFINITY),
                |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                },
            );
        let p = panels.swap_remove(idx);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Accuracy {
                requested: rel_tol,
                achieved: worst_ratio,
            });
        }
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact_on_single_panel() {
        let r = integrate(|x| [x.powi(6), 1.0], &[0.0, 2.0], 1e-14, 1).unwrap();
        assert!((r[0] - 128.0 / 7.0).abs() < 1e-12);
        assert!((r[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn peaked_integrand_converges() {
        let eps = 1e-6f64;
        let r = integrate(|x| [eps / (x * x + eps * eps)], &[0.0, 1.0], 1e-12, 500).unwrap();
        let exact = (1.0 / eps).atan();
        assert!((r[0] - exact).abs() < 1e-11 * exact);
    }

    #[test]
    fn reports_failure_with_achieved_estimate() {
        let err = integrate(|x: f64| [x.abs().sqrt().recip()], &[0.0, 1.0], 1e-15, 4).unwrap_err();
        assert!(matches!(err, Error::Accuracy { achieved, .. } if achieved > 1e-15));
    }
}
