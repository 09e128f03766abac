//! Piecewise cubic Hermite tables for `F`, `F'` and `F*`.
//!
//! Nodes sit at `2^e (1 + j/N)` for `j = 0..N` in every octave `e`, so the
//! cell containing `s` and the local coordinate are read straight from the
//! exponent and mantissa bits of `s`. Each node stores `F, F', F'', F*, F*'`
//! from quadrature; every interpolant uses exact end-point slopes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{kernel_direct, Dimension, KernelValues, QuadOptions};
use crate::{Error, Result};

/// Construction parameters for a [`KernelTable`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableOptions {
    pub s_min: f64,
    pub s_max: f64,
    /// Target relative error of every tabulated quantity.
    pub rel_tol: f64,
    /// Number of seeded log-uniform audit points.
    pub audit_points: usize,
    pub seed: u64,
    /// Largest allowed `log2` of the nodes per octave.
    pub max_level: u32,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions {
            s_min: 1e-8,
            s_max: 1e8,
            rel_tol: 1e-8,
            audit_points: 1000,
            seed: 0x5e1_7ab1e,
            max_level: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Node {
    f: f64,
    fp: f64,
    fpp: f64,
    fs: f64,
    fsp: f64,
}

#[derive(Clone, Debug)]
pub struct KernelTable {
    dim: Dimension,
    s_min: f64,
    s_max: f64,
    level: u32,
    first_exp: i64,
    nodes: Vec<Node>,
    audit_error: f64,
}

#[inline]
fn hermite(t: f64, h: f64, y0: f64, m0: f64, y1: f64, m1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = 3.0 * t2 - 2.0 * t3;
    let h11 = t3 - t2;
    h00 * y0 + h * (h10 * m0 + h11 * m1) + h01 * y1
}

fn relerr(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

impl KernelTable {
    /// Tabulates at increasing resolution until the audit against direct
    /// quadrature meets `opts.rel_tol`.
    pub fn build(dim: Dimension, opts: TableOptions) -> Result<Self> {
        if !(opts.s_min > 0.0 && opts.s_min.is_finite()) || !(opts.s_max > opts.s_min) || !opts.s_max.is_finite() {
            return Err(Error::Config(format!(
                "table range must satisfy 0 < s_min < s_max < inf, got [{}, {}]",
                opts.s_min, opts.s_max
            )));
        }
        if !(opts.rel_tol > 0.0 && opts.rel_tol <= 1e-3) {
            return Err(Error::Config(format!(
                "table rel_tol must lie in (0, 1e-3], got {}",
                opts.rel_tol
            )));
        }
        let quad = QuadOptions {
            rel_tol: (opts.rel_tol * 1e-2).clamp(1e-14, 1e-12),
            max_panels: 4000,
        };
        // Cubic Hermite error of F' on a cell of relative width 1/N is about
        // (1/N)^4 / 16; start one level below the estimate.
        let estimate = ((1.0 / (16.0 * opts.rel_tol)).powf(0.25)).log2().ceil() as u32;
        let mut level = estimate.saturating_sub(1).clamp(2, opts.max_level);

        let audit = audit_points(dim, &opts, quad)?;
        loop {
            let mut table = Self::tabulate(dim, &opts, level, quad)?;
            let worst = audit
                .iter()
                .map(|&(s, want)| -> Result<f64> {
                    let got = table.eval_unchecked(s);
                    Ok(relerr(got.f, want.f)
                        .max(relerr(got.fp, want.fp))
                        .max(relerr(got.fstar, want.fstar)))
                })
                .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)))?;
            table.audit_error = worst;
            if worst <= opts.rel_tol {
                return Ok(table);
            }
            if level >= opts.max_level {
                return Err(Error::Accuracy {
                    requested: opts.rel_tol,
                    achieved: worst,
                });
            }
            level += 1;
        }
    }

    fn tabulate(dim: Dimension, opts: &TableOptions, level: u32, quad: QuadOptions) -> Result<Self> {
        let first_exp = exponent(opts.s_min);
        let last_exp = exponent(opts.s_max);
        let per_octave = 1usize << level;
        let octaves = (last_exp - first_exp + 1) as usize;
        let count = octaves * per_octave + 1;
        let nodes = (0..count)
            .map(|i| {
                let e = first_exp + (i / per_octave) as i64;
                let j = i % per_octave;
                let s = 2f64.powi(e as i32) * (1.0 + j as f64 / per_octave as f64);
                let k = kernel_direct(dim, s, quad)?;
                Ok(Node {
                    f: k.f,
                    fp: k.fp,
                    fpp: k.fpp,
                    fs: k.fstar(dim, s),
                    fsp: k.fstar_deriv(dim, s),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelTable {
            dim,
            s_min: opts.s_min,
            s_max: opts.s_max,
            level,
            first_exp,
            nodes,
            audit_error: f64::NAN,
        })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn range(&self) -> (f64, f64) {
        (self.s_min, self.s_max)
    }

    /// Nodes per octave.
    pub fn nodes_per_octave(&self) -> usize {
        1 << self.level
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Worst relative error seen in the construction audit.
    pub fn audit_error(&self) -> f64 {
        self.audit_error
    }

    #[inline]
    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_min && s <= self.s_max
    }

    #[inline]
    fn locate(&self, s: f64) -> (usize, f64, f64) {
        let bits = s.to_bits();
        let e = ((bits >> 52) & 0x7ff) as i64 - 1023;
        let mant = bits & ((1u64 << 52) - 1);
        let shift = 52 - self.level;
        let j = (mant >> shift) as usize;
        let frac = (mant & ((1u64 << shift) - 1)) as f64 / (1u64 << shift) as f64;
        let idx = ((e - self.first_exp) as usize) * self.nodes_per_octave() + j;
        let h = f64::from_bits(((e + 1023) as u64) << 52) / self.nodes_per_octave() as f64;
        (idx, frac, h)
    }

    #[inline]
    fn eval_unchecked(&self, s: f64) -> KernelValues {
        let (i, t, h) = self.locate(s);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        KernelValues {
            f: hermite(t, h, a.f, a.fp, b.f, b.fp),
            fp: hermite(t, h, a.fp, a.fpp, b.fp, b.fpp),
            fstar: hermite(t, h, a.fs, a.fsp, b.fs, b.fsp),
        }
    }

    fn out_of_range(&self, s: f64) -> Error {
        Error::Range {
            s,
            min: self.s_min,
            max: self.s_max,
        }
    }

    /// `(F, F', F*)` at `s`, falling back to quadrature if the interpolant
    /// would violate `F' < 0 < F*`.
    #[inline]
    pub fn eval(&self, s: f64) -> Result<KernelValues> {
        if !self.contains(s) {
            return Err(self.out_of_range(s));
        }
        let v = self.eval_unchecked(s);
        if v.fp < 0.0 && v.fstar > 0.0 {
            Ok(v)
        } else {
            let k = kernel_direct(self.dim, s, QuadOptions::default())?;
            Ok(KernelValues {
                f: k.f,
                fp: k.fp,
                fstar: k.fstar(self.dim, s),
            })
        }
    }

    /// `(F'(s), F*(s))` only.
    #[inline]
    pub fn eval_velocity(&self, s: f64) -> Result<(f64, f64)> {
        if !self.contains(s) {
            return Err(self.out_of_range(s));
        }
        let (i, t, h) = self.locate(s);
        let (a, b) = (&self.nodes[i], &self.nodes[i + 1]);
        let fp = hermite(t, h, a.fp, a.fpp, b.fp, b.fpp);
        let fs = hermite(t, h, a.fs, a.fsp, b.fs, b.fsp);
        if fp < 0.0 && fs > 0.0 {
            Ok((fp, fs))
        } else {
            let k = kernel_direct(self.dim, s, QuadOptions::default())?;
            Ok((k.fp, k.fstar(self.dim, s)))
        }
    }
}

fn exponent(s: f64) -> i64 {
    ((s.to_bits() >> 52) & 0x7ff) as i64 - 1023
}

fn audit_points(dim: Dimension, opts: &TableOptions, quad: QuadOptions) -> Result<Vec<(f64, KernelValues)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (l0, l1) = (opts.s_min.ln(), opts.s_max.ln());
    let points: Vec<f64> = (0..opts.audit_points)
        .map(|_| {
            (l0 + (l1 - l0) * rng.random::<f64>())
                .exp()
                .clamp(opts.s_min, opts.s_max)
        })
        .collect();
    points
        .into_iter()
        .map(|s| {
            let k = kernel_direct(dim, s, quad)?;
            Ok((
                s,
                KernelValues {
                    f: k.f,
                    fp: k.fp,
                    fstar: k.fstar(dim, s),
                },
            ))
        })
        .collect()
}

/// Builds a table for `dim`; see [`KernelTable::build`].
pub fn build_kernel_table(dim: Dimension, opts: TableOptions) -> Result<KernelTable> {
    KernelTable::build(dim, opts)
}

/// Interpolated `(F, F', F*)`; [`Error::Range`] outside the table.
pub fn table_eval(table: &KernelTable, s: f64) -> Result<KernelValues> {
    table.eval(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_opts() -> TableOptions {
        TableOptions {
            s_min: 1e-3,
            s_max: 10.0,
            rel_tol: 1e-8,
            audit_points: 200,
            ..TableOptions::default()
        }
    }

    #[test]
    fn reproduces_nodes_exactly() {
        let dim = Dimension::new(3).unwrap();
        let t = KernelTable::build(dim, small_opts()).unwrap();
        let s = 0.75;
        let k = kernel_direct(dim, s, QuadOptions::default()).unwrap();
        let v = t.eval(s).unwrap();
        assert!((v.f - k.f).abs() <= 1e-13 * k.f);
        assert!((v.fp - k.fp).abs() <= 1e-13 * k.fp.abs());
    }

    #[test]
    fn audit_meets_tolerance() {
        let dim = Dimension::new(5).unwrap();
        let t = KernelTable::build(dim, small_opts()).unwrap();
        assert!(t.audit_error() <= 1e-8);
        assert!(t.nodes_per_octave() >= 4);
    }

    #[test]
    fn range_errors_outside() {
        let dim = Dimension::new(4).unwrap();
        let t = KernelTable::build(dim, small_opts()).unwrap();
        assert!(matches!(t.eval(1e-4), Err(Error::Range { .. })));
        assert!(matches!(t.eval(11.0), Err(Error::Range { .. })));
        assert!(t.eval(10.0).is_ok());
        assert!(t.eval(1e-3).is_ok());
    }

    #[test]
    fn rejects_bad_options() {
        let dim = Dimension::new(3).unwrap();
        let bad = TableOptions {
            s_min: 2.0,
            s_max: 1.0,
            ..small_opts()
        };
        assert!(matches!(KernelTable::build(dim, bad), Err(Error::Config(_))));
    }

    #[test]
    fn unreachable_tolerance_reports_accuracy() {
        let dim = Dimension::new(3).unwrap();
        let opts = TableOptions {
            rel_tol: 1e-13,
            max_level: 3,
            audit_points: 20,
            ..small_opts()
        };
        assert!(matches!(KernelTable::build(dim, opts), Err(Error::Accuracy { .. })));
    }
}
