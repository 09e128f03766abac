//! Stream function, velocities and pairwise kernels for a mirror-symmetric
//! particle state.
//!
//! For a target `(r, z)` and source `(r', z')` with weight `w'`, the
//! regularised arguments are
//!
//! ```text
//! S  = [(r - r')^2 + (z - z')^2 + delta^2] / (r r')
//! S~ = [(r - r')^2 + (z + z')^2 + delta^2] / (r r')
//! ```
//!
//! and the source contributes, with `a = r^(-d/2)` and `b' = r'^(d/2-2) w'`,
//!
//! ```text
//! u_r += a b' [F'(S)(z - z') - F'(S~)(z + z')] / pi
//! u_z -= a b' [2(r - r')(F'(S) - F'(S~)) + r'(F*(S) - F*(S~))] / (2 pi)
//! ```
//!
//! `S` is computed symmetrically in the two points, so one kernel
//! evaluation serves both members of a pair.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::specfun::{Dimension, KernelSource};
use crate::state::VortexState;
use crate::sum::{Accumulate, Compensated, Plain};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairGeometry {
    pub s_direct: f64,
    pub s_mirror: f64,
    pub r: f64,
    pub z: f64,
    pub r_bar: f64,
    pub z_bar: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Velocity {
    pub u_r: f64,
    pub u_z: f64,
}

/// `(S, S~)`; bitwise symmetric under swapping the two points.
#[inline]
pub(crate) fn pair_s(delta2: f64, r: f64, z: f64, r_bar: f64, z_bar: f64) -> (f64, f64) {
    let dr = r - r_bar;
    let dz = z - z_bar;
    let sz = z + z_bar;
    let rr = r * r_bar;
    let radial = dr * dr + delta2;
    ((radial + dz * dz) / rr, (radial + sz * sz) / rr)
}

pub fn pair_geometry(delta: f64, r: f64, z: f64, r_bar: f64, z_bar: f64) -> Result<PairGeometry> {
    if !(r > 0.0 && r_bar > 0.0 && r.is_finite() && r_bar.is_finite()) {
        return Err(Error::Domain(format!(
            "radii must be positive, got r={r}, r_bar={r_bar}"
        )));
    }
    if !(z >= 0.0 && z_bar >= 0.0 && z.is_finite() && z_bar.is_finite()) {
        return Err(Error::Domain(format!("heights must be ≥ 0, got z={z}, z_bar={z_bar}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("delta must be ≥ 0, got {delta}")));
    }
    let (s_direct, s_mirror) = pair_s(delta * delta, r, z, r_bar, z_bar);
    Ok(PairGeometry {
        s_direct,
        s_mirror,
        r,
        z,
        r_bar,
        z_bar,
    })
}

/// `r^(-d/2)`, the target factor.
#[inline]
pub(crate) fn target_factor(dim: Dimension, r: f64) -> f64 {
    1.0 / dim.half_d_power(r)
}

/// `r^(d/2-2) w`, the source factor.
#[inline]
pub(crate) fn source_factor(dim: Dimension, r: f64, w: f64) -> f64 {
    dim.half_d_power(r) / (r * r) * w
}

/// Kernel values for one pair, shared by both of its members.
#[derive(Clone, Copy, Debug)]
struct PairKernel {
    fp: f64,
    fp_bar: f64,
    fs: f64,
    fs_bar: f64,
}

#[inline]
fn pair_kernel<K: KernelSource>(kernel: &K, s: f64, s_bar: f64, index: usize) -> Result<PairKernel> {
    if s <= 0.0 {
        return Err(Error::Singularity { index });
    }
    let (fp, fs) = kernel.velocity_values(s)?;
    let (fp_bar, fs_bar) = if s_bar == s {
        (fp, fs)
    } else {
        kernel.velocity_values(s_bar)?
    };
    Ok(PairKernel { fp, fp_bar, fs, fs_bar })
}

/// Unscaled `(u_r, u_z)` contribution of source `(rs, zs)` at target `(rt, zt)`.
#[inline]
fn contribution(k: &PairKernel, rt: f64, zt: f64, rs: f64, zs: f64) -> (f64, f64) {
    let cr = k.fp * (zt - zs) - k.fp_bar * (zt + zs);
    let cz = 2.0 * (rt - rs) * (k.fp - k.fp_bar) + rs * (k.fs - k.fs_bar);
    (cr, cz)
}

#[inline]
fn finish(a: f64, sum_r: f64, sum_z: f64) -> Velocity {
    Velocity {
        u_r: a * sum_r / PI,
        u_z: -(a * sum_z) / (2.0 * PI),
    }
}

fn check_target(r: f64, z: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() && z >= 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "evaluation point must satisfy r > 0, z ≥ 0; got ({r}, {z})"
        )))
    }
}

fn velocity_at_with<A: Accumulate, K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    r: f64,
    z: f64,
) -> Result<Velocity> {
    check_target(r, z)?;
    let dim = state.dim;
    let delta2 = state.delta * state.delta;
    let (mut ur, mut uz) = (A::default(), A::default());
    for (j, p) in state.particles.iter().enumerate() {
        let (s, s_bar) = pair_s(delta2, r, z, p.r, p.z);
        let k = pair_kernel(kernel, s, s_bar, j)?;
        let b = source_factor(dim, p.r, p.w);
        let (cr, cz) = contribution(&k, r, z, p.r, p.z);
        ur.add(b * cr);
        uz.add(b * cz);
    }
    Ok(finish(target_factor(dim, r), ur.value(), uz.value()))
}

/// Velocity induced at `(r, z)` by all particles and their mirror images.
/// With `delta = 0`, landing exactly on a particle is a singularity error.
pub fn velocity_at<K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    r: f64,
    z: f64,
    deterministic: bool,
) -> Result<Velocity> {
    if deterministic {
        velocity_at_with::<Compensated, K>(state, kernel, r, z)
    } else {
        velocity_at_with::<Plain, K>(state, kernel, r, z)
    }
}

struct Soa {
    r: Vec<f64>,
    z: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Soa {
    fn new(state: &VortexState) -> Self {
        let dim = state.dim;
        let p = &state.particles;
        Soa {
            r: p.iter().map(|p| p.r).collect(),
            z: p.iter().map(|p| p.z).collect(),
            a: p.iter().map(|p| target_factor(dim, p.r)).collect(),
            b: p.iter().map(|p| source_factor(dim, p.r, p.w)).collect(),
        }
    }
}

/// Every pair once, each target receiving its sources in ascending index.
fn velocity_all_symmetric<A: Accumulate, K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    soa: &Soa,
) -> Result<Vec<Velocity>> {
    let n = state.len();
    let delta2 = state.delta * state.delta;
    let self_terms = state.delta > 0.0;
    let mut ur = vec![A::default(); n];
    let mut uz = vec![A::default(); n];
    for i in 0..n {
        let (ri, zi, bi) = (soa.r[i], soa.z[i], soa.b[i]);
        let start = if self_terms { i } else { i + 1 };
        for j in start..n {
            let (rj, zj, bj) = (soa.r[j], soa.z[j], soa.b[j]);
            let (s, s_bar) = pair_s(delta2, ri, zi, rj, zj);
            let k = pair_kernel(kernel, s, s_bar, j)?;
            let (cr, cz) = contribution(&k, ri, zi, rj, zj);
            ur[i].add(bj * cr);
            uz[i].add(bj * cz);
            if j != i {
                let (cr, cz) = contribution(&k, rj, zj, ri, zi);
                ur[j].add(bi * cr);
                uz[j].add(bi * cz);
            }
        }
    }
    Ok((0..n).map(|i| finish(soa.a[i], ur[i].value(), uz[i].value())).collect())
}

/// One target per task; the arithmetic per target equals the symmetric loop.
fn velocity_all_parallel<A: Accumulate, K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    soa: &Soa,
) -> Result<Vec<Velocity>> {
    let n = state.len();
    let delta2 = state.delta * state.delta;
    let self_terms = state.delta > 0.0;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (ri, zi) = (soa.r[i], soa.z[i]);
            let (mut ur, mut uz) = (A::default(), A::default());
            for j in 0..n {
                if j == i && !self_terms {
                    continue;
                }
                let (s, s_bar) = pair_s(delta2, ri, zi, soa.r[j], soa.z[j]);
                let k = pair_kernel(kernel, s, s_bar, j.max(i))?;
                let (cr, cz) = contribution(&k, ri, zi, soa.r[j], soa.z[j]);
                ur.add(soa.b[j] * cr);
                uz.add(soa.b[j] * cz);
            }
            Ok(finish(soa.a[i], ur.value(), uz.value()))
        })
        .collect()
}

/// Velocities at every particle. The result does not depend on the number
/// of rayon worker threads; with `deterministic` the sums are compensated.
pub fn velocity_all<K: KernelSource>(state: &VortexState, kernel: &K, deterministic: bool) -> Result<Vec<Velocity>> {
    let soa = Soa::new(state);
    let parallel = rayon::current_num_threads() > 1 && state.len() > 64;
    match (deterministic, parallel) {
        (true, false) => velocity_all_symmetric::<Compensated, K>(state, kernel, &soa),
        (true, true) => velocity_all_parallel::<Compensated, K>(state, kernel, &soa),
        (false, false) => velocity_all_symmetric::<Plain, K>(state, kernel, &soa),
        (false, true) => velocity_all_parallel::<Plain, K>(state, kernel, &soa),
    }
}

/// `psi(r, z) = -(1/2 pi) sum [F(S) - F(S~)] (r r')^(d/2-1) w'`; exactly zero
/// on `z = 0`.
pub fn stream_at<K: KernelSource>(state: &VortexState, kernel: &K, r: f64, z: f64) -> Result<f64> {
    check_target(r, z)?;
    let dim = state.dim;
    let delta2 = state.delta * state.delta;
    let mut acc = Compensated::default();
    for (j, p) in state.particles.iter().enumerate() {
        let (s, s_bar) = pair_s(delta2, r, z, p.r, p.z);
        if s <= 0.0 {
            return Err(Error::Singularity { index: j });
        }
        let rr = r * p.r;
        let scale = dim.half_d_power(rr) / rr;
        acc.add(kernel.differences(s, s_bar)?.df * scale * p.w);
    }
    Ok(-acc.value() / (2.0 * PI))
}

fn check_pair(g: &PairGeometry) -> Result<()> {
    if g.s_direct > 0.0 && g.s_direct <= g.s_mirror && g.s_mirror.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "pair geometry needs 0 < S ≤ S~ < inf, got S={}, S~={}",
            g.s_direct, g.s_mirror
        )))
    }
}

/// `r^(d-2)`, `r^(d-1)` without `powf`.
#[inline]
fn powers(dim: Dimension, r: f64) -> (f64, f64) {
    let p = r.powi(dim.d() as i32 - 2);
    (p, p * r)
}

/// `K~ = H(S) - H(S~)` with
/// `H(s) = -2(r^(d-2) - r'^(d-2))(r - r') F'(s) + (r^(d-1) + r'^(d-1)) F*(s)`.
pub fn ktilde<K: KernelSource>(kernel: &K, g: &PairGeometry) -> Result<f64> {
    check_pair(g)?;
    let diff = kernel.differences(g.s_direct, g.s_mirror)?;
    Ok(ktilde_from(kernel.dim(), g.r, g.r_bar, diff.dfp, diff.dfstar))
}

#[inline]
pub(crate) fn ktilde_from(dim: Dimension, r: f64, r_bar: f64, dfp: f64, dfstar: f64) -> f64 {
    let (p, q) = powers(dim, r);
    let (pb, qb) = powers(dim, r_bar);
    -2.0 * (p - pb) * (r - r_bar) * dfp + (q + qb) * dfstar
}

/// Pair integrand of `dR_(d-1)/dt`: `((d-1)/pi) [-F'(S~)] (z + z') (r r')^(d/2-2) w w'`.
pub fn rdot_pair<K: KernelSource>(kernel: &K, g: &PairGeometry, w: f64, w_bar: f64) -> Result<f64> {
    if !(g.s_mirror > 0.0 && g.s_mirror.is_finite()) {
        return Err(Error::Domain(format!(
            "mirror argument must be positive, got {}",
            g.s_mirror
        )));
    }
    let dim = kernel.dim();
    let fp_bar = kernel.velocity_values(g.s_mirror)?.0;
    let rr = g.r * g.r_bar;
    let scale = dim.half_d_power(rr) / (rr * rr);
    Ok((dim.d() as f64 - 1.0) / PI * (-fp_bar) * (g.z + g.z_bar) * scale * w * w_bar)
}

/// Pair integrand of the energy: `(C_d / 2 pi) [F(S) - F(S~)] (r r')^(d/2-1) w w'`.
pub fn energy_pair<K: KernelSource>(kernel: &K, g: &PairGeometry, w: f64, w_bar: f64) -> Result<f64> {
    check_pair(g)?;
    let dim = kernel.dim();
    let df = kernel.differences(g.s_direct, g.s_mirror)?.df;
    let rr = g.r * g.r_bar;
    Ok(dim.c_d() / (2.0 * PI) * df * dim.half_d_power(rr) / rr * w * w_bar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{DirectKernel, Kernel};
    use crate::state::VortexParticle;

    fn one_particle(d: u32, delta: f64) -> VortexState {
        VortexState::new(
            Dimension::new(d).unwrap(),
            delta,
            vec![VortexParticle::new(1.0, 1.0, 1.0)],
        )
    }

    #[test]
    fn geometry_examples() {
        let g = pair_geometry(0.1, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((g.s_direct - 0.01).abs() < 1e-15 && (g.s_mirror - 4.01).abs() < 1e-14);
        let g = pair_geometry(0.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!((g.s_direct, g.s_mirror), (1.0, 9.0));
        assert!(pair_geometry(0.0, -1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_ring_moves_down_and_out() {
        let s = one_particle(3, 0.05);
        let k = DirectKernel::new(s.dim);
        let v = velocity_at(&s, &k, 1.0, 1.0, true).unwrap();
        assert!(v.u_z < 0.0 && v.u_r > 0.0, "{v:?}");
    }

    #[test]
    fn off_particle_radial_velocity() {
        let s = one_particle(3, 0.0);
        let k = DirectKernel::new(s.dim);
        let v = velocity_at(&s, &k, 1.0, 2.0, true).unwrap();
        let expect = (-0.285_828_619_484_083_2 * 1.0 + 0.006_091_009_223_716_109 * 3.0) / PI;
        assert!((v.u_r - expect).abs() < 1e-12, "{} vs {expect}", v.u_r);
        assert!(v.u_r < 0.0);
    }

    #[test]
    fn coincident_point_vortex_is_singular() {
        let s = one_particle(3, 0.0);
        let k = DirectKernel::new(s.dim);
        assert!(matches!(
            velocity_at(&s, &k, 1.0, 1.0, true),
            Err(Error::Singularity { index: 0 })
        ));
        assert!(matches!(stream_at(&s, &k, 1.0, 1.0), Err(Error::Singularity { .. })));
    }

    #[test]
    fn ktilde_examples() {
        let dim = Dimension::new(3).unwrap();
        let k = DirectKernel::new(dim);
        let g = pair_geometry(0.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        assert!(ktilde(&k, &g).unwrap() > 0.0);
        let g = pair_geometry(0.1, 1.5, 0.0, 0.7, 0.0).unwrap();
        assert_eq!(ktilde(&k, &g).unwrap(), 0.0);
    }

    #[test]
    fn rdot_d3_reference() {
        let dim = Dimension::new(3).unwrap();
        let k = DirectKernel::new(dim);
        let g = pair_geometry(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let got = rdot_pair(&k, &g, 1.0, 1.0).unwrap();
        let expect = 2.0 / PI * 0.030_386_348_434_833_025 * 2.0;
        assert!((got - expect).abs() < 1e-13, "{got} vs {expect}");
        let flat = pair_geometry(0.1, 1.0, 0.0, 2.0, 0.0).unwrap();
        assert_eq!(rdot_pair(&k, &flat, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn energy_pair_d4_closed_form() {
        let dim = Dimension::new(4).unwrap();
        let k = DirectKernel::new(dim);
        let g = pair_geometry(0.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        let got = energy_pair(&k, &g, 1.0, 1.0).unwrap();
        // (C_4 / 2 pi) [F(1) - F(9)] with C_4 = 4 pi
        assert!((got - 2.0 * 0.195_835_288_980_952_56).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_parallel_paths_agree_bitwise() {
        let dim = Dimension::new(3).unwrap();
        let parts: Vec<_> = (0..90)
            .map(|i| {
                let x = i as f64;
                VortexParticle::new(
                    0.5 + (x * 0.37).sin().abs(),
                    0.02 + (x * 0.71).cos().abs(),
                    0.1 + 0.01 * x,
                )
            })
            .collect();
        let s = VortexState::new(dim, 0.05, parts);
        let k = Kernel::direct(dim);
        let soa = Soa::new(&s);
        let a = velocity_all_symmetric::<Compensated, _>(&s, &k, &soa).unwrap();
        let b = velocity_all_parallel::<Compensated, _>(&s, &k, &soa).unwrap();
        assert_eq!(a, b);
        for (i, p) in s.particles.iter().enumerate() {
            assert_eq!(velocity_at(&s, &k, p.r, p.z, true).unwrap(), a[i]);
        }
    }
}
