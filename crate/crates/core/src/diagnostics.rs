//! Moments, energy and the symmetrised kernel forms of `dZ/dt` and `dR/dt`.
//!
//! All pairwise functionals are evaluated in one pass over unordered pairs,
//! counting off-diagonal pairs twice. Rows are summed in parallel and then
//! combined in index order, so results do not depend on the thread count.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::biot_savart::{ktilde_from, pair_s, Velocity};
use crate::specfun::{Dimension, KernelSource};
use crate::state::{total_mass, VortexState};
use crate::sum::{Accumulate, Compensated, Plain};
use crate::{Error, Result};

/// Fixed CSV columns; extra moments follow as `R_j_<j>`.
pub const CSV_HEADER: &str = "t,R0,Z,E,R_dm1,dRdt_k,dZdt_k,ur_max,ke_bound,logmom";

#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSample {
    pub t: f64,
    pub r0: f64,
    pub z: f64,
    pub e: f64,
    /// `R_(d-1)`.
    pub r_dm1: f64,
    pub drdt_k: f64,
    pub dzdt_k: f64,
    /// `(d-1) sum r^(d-2) u_r w`, the unsymmetrised cross-check of `drdt_k`.
    pub drdt_direct: f64,
    /// `sum u_z w`, the unsymmetrised cross-check of `dzdt_k`.
    pub dzdt_direct: f64,
    pub ur_max: f64,
    /// `ur_max^2 / (2 sup_ratio sum r^(d-2) w)`.
    pub ur_ratio: f64,
    pub ke_bound: f64,
    pub logmom: f64,
    /// Extra `(j, R_j)` moments.
    pub moments: Vec<(f64, f64)>,
}

impl DiagnosticsSample {
    /// `R_j` if it was recorded.
    pub fn moment(&self, j: f64, dim: Dimension) -> Option<f64> {
        if j == dim.d() as f64 - 1.0 {
            return Some(self.r_dm1);
        }
        self.moments.iter().find(|(k, _)| *k == j).map(|&(_, v)| v)
    }

    pub fn csv_row(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.r0,
            self.z,
            self.e,
            self.r_dm1,
            self.drdt_k,
            self.dzdt_k,
            self.ur_max,
            self.ke_bound,
            self.logmom
        );
        for (_, v) in &self.moments {
            let _ = write!(s, ",{v}");
        }
        s
    }
}

pub fn csv_header(moments_j: &[f64]) -> String {
    let mut s = CSV_HEADER.to_string();
    for j in moments_j {
        let _ = write!(s, ",R_j_{j}");
    }
    s
}

/// The whole series as CSV text with a trailing newline.
pub fn to_csv(samples: &[DiagnosticsSample], moments_j: &[f64]) -> String {
    let mut s = csv_header(moments_j);
    s.push('\n');
    for row in samples {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

/// `sum r^j w`.
pub fn moment_r(state: &VortexState, j: f64) -> f64 {
    state.particles.iter().map(|p| p.r.powf(j) * p.w).sum()
}

/// `sum z w`.
pub fn moment_z(state: &VortexState) -> f64 {
    state.particles.iter().map(|p| p.z * p.w).sum()
}

/// Results of one pass over all pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairSums {
    pub dzdt: f64,
    pub drdt: f64,
    pub energy: f64,
    pub ke_bound: f64,
    /// Unnormalised `sum log^p(2 + 1/S) w w'`.
    pub log_sum: f64,
}

#[derive(Clone, Copy, Default)]
struct RowAcc<A> {
    k: A,
    rdot: A,
    e: A,
    ke: A,
    log: A,
}

fn row<A: Accumulate, K: KernelSource>(state: &VortexState, kernel: &K, p: f64, i: usize) -> Result<RowAcc<A>> {
    let dim = state.dim;
    let delta2 = state.delta * state.delta;
    let d = dim.d() as i32;
    let parts = &state.particles;
    let pi = parts[i];
    let mut acc = RowAcc::<A>::default();
    let start = if state.delta > 0.0 { i } else { i + 1 };
    for (j, pj) in parts.iter().enumerate().skip(start) {
        let (s, s_bar) = pair_s(delta2, pi.r, pi.z, pj.r, pj.z);
        if s <= 0.0 {
            return Err(Error::Singularity { index: j });
        }
        let diff = kernel.differences(s, s_bar)?;
        let mult = if j == i { 1.0 } else { 2.0 };
        let ww = pi.w * pj.w * mult;
        let rr = pi.r * pj.r;
        let hp = dim.half_d_power(rr);
        acc.k.add(ktilde_from(dim, pi.r, pj.r, diff.dfp, diff.dfstar) / hp * ww);
        acc.rdot.add(-diff.fp_bar * (pi.z + pj.z) * hp / (rr * rr) * ww);
        acc.e.add(diff.df * hp / rr * ww);
        let log = (2.0 + 1.0 / s).ln();
        let sum_r = pi.r + pj.r;
        let dz = pi.z - pj.z;
        let far = dim.half_d_power(sum_r * sum_r + dz * dz + delta2);
        acc.ke.add(pi.z * pj.z * rr.powi(d - 1) * log / (s_bar * rr * far) * ww);
        acc.log.add(log.powf(p) * ww);
    }
    Ok(acc)
}

fn pair_sums_with<A: Accumulate, K: KernelSource>(state: &VortexState, kernel: &K, p: f64) -> Result<PairSums> {
    let rows: Vec<RowAcc<A>> = (0..state.len())
        .into_par_iter()
        .map(|i| row::<A, K>(state, kernel, p, i))
        .collect::<Result<_>>()?;
    let mut total = RowAcc::<A>::default();
    for r in &rows {
        total.k.add(r.k.value());
        total.rdot.add(r.rdot.value());
        total.e.add(r.e.value());
        total.ke.add(r.ke.value());
        total.log.add(r.log.value());
    }
    let dim = state.dim;
    Ok(PairSums {
        dzdt: -total.k.value() / (4.0 * PI),
        drdt: (dim.d() as f64 - 1.0) / PI * total.rdot.value(),
        energy: dim.c_d() / (2.0 * PI) * total.e.value(),
        ke_bound: total.ke.value(),
        log_sum: total.log.value(),
    })
}

/// Every pairwise functional in one pass; `p` is the log-moment exponent.
pub fn pair_sums<K: KernelSource>(state: &VortexState, kernel: &K, p: f64, deterministic: bool) -> Result<PairSums> {
    if deterministic {
        pair_sums_with::<Compensated, K>(state, kernel, p)
    } else {
        pair_sums_with::<Plain, K>(state, kernel, p)
    }
}

/// `-(1/4 pi) sum_ij K~_ij w_i w_j / (r_i r_j)^(d/2)`, including `i = j` when `delta > 0`.
pub fn dzdt_kernel<K: KernelSource>(state: &VortexState, kernel: &K) -> Result<f64> {
    Ok(pair_sums(state, kernel, 1.0, true)?.dzdt)
}

/// `sum_ij` of the pair integrand of `dR_(d-1)/dt`.
pub fn drdt_kernel<K: KernelSource>(state: &VortexState, kernel: &K) -> Result<f64> {
    Ok(pair_sums(state, kernel, 1.0, true)?.drdt)
}

/// `(C_d / 2 pi) sum_ij [F(S) - F(S~)] (r_i r_j)^(d/2-1) w_i w_j` over ordered pairs.
pub fn energy<K: KernelSource>(state: &VortexState, kernel: &K) -> Result<f64> {
    Ok(pair_sums(state, kernel, 1.0, true)?.energy)
}

/// Discrete right-hand side of the kinetic-energy upper bound.
pub fn ke_bound_rhs<K: KernelSource>(state: &VortexState, kernel: &K) -> Result<f64> {
    Ok(pair_sums(state, kernel, 1.0, true)?.ke_bound)
}

fn normalise_log(log_sum: f64, mass: f64, p: f64) -> f64 {
    if mass > 0.0 {
        (log_sum / (mass * mass)).powf(1.0 / p)
    } else {
        0.0
    }
}

/// `(sum_ij log^p(2 + 1/S_ij) w_i w_j / (sum w)^2)^(1/p)`.
pub fn log_moment(state: &VortexState, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("log-moment exponent must be ≥ 1, got {p}")));
    }
    let delta2 = state.delta * state.delta;
    let parts = &state.particles;
    let mut acc = Compensated::default();
    for (i, a) in parts.iter().enumerate() {
        for (j, b) in parts.iter().enumerate() {
            if i == j && state.delta == 0.0 {
                continue;
            }
            let (s, _) = pair_s(delta2, a.r, a.z, b.r, b.z);
            if s <= 0.0 {
                return Err(Error::Singularity { index: j.max(i) });
            }
            acc.add((2.0 + 1.0 / s).ln().powf(p) * a.w * b.w);
        }
    }
    Ok(normalise_log(acc.value(), total_mass(state), p))
}

/// `(sum u_z w, (d-1) sum r^(d-2) u_r w)` from particle velocities.
pub fn direct_derivatives(state: &VortexState, velocities: &[Velocity]) -> (f64, f64) {
    let d = state.dim.d() as i32;
    let (mut z, mut r) = (Compensated::default(), Compensated::default());
    for (p, v) in state.particles.iter().zip(velocities) {
        z.add(v.u_z * p.w);
        r.add(p.r.powi(d - 2) * v.u_r * p.w);
    }
    (z.value(), (d as f64 - 1.0) * r.value())
}

/// `max |u_r|^2 / (2 sup_ratio sum r^(d-2) w)`.
pub fn ur_bound_ratio(state: &VortexState, velocities: &[Velocity]) -> Result<f64> {
    if state.is_empty() {
        return Err(Error::Domain("ur_bound_ratio needs a nonempty state".into()));
    }
    let d = state.dim.d() as i32;
    let l1: f64 = 2.0 * state.particles.iter().map(|p| p.r.powi(d - 2) * p.w).sum::<f64>();
    let ur = velocities.iter().map(|v| v.u_r.abs()).fold(0.0, f64::max);
    Ok(ur * ur / (state.sup_ratio * l1))
}

/// `|dR_j/dt| / R_j^(1 + (d-4)/(2j))` from two consecutive samples, with the
/// derivative taken as a difference quotient and `R_j` at the midpoint.
pub fn diff_inequality_ratio(
    prev: &DiagnosticsSample,
    next: &DiagnosticsSample,
    j: f64,
    dim: Dimension,
) -> Result<f64> {
    let (a, b) = match (prev.moment(j, dim), next.moment(j, dim)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config(format!("moment R_{j} was not recorded"))),
    };
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "samples must be increasing in time, got dt = {dt}"
        )));
    }
    Ok(((b - a) / dt).abs() / (0.5 * (a + b)).powf(diff_inequality_exponent(j, dim)))
}

/// `1 + (d-4)/(2j)`.
pub fn diff_inequality_exponent(j: f64, dim: Dimension) -> f64 {
    1.0 + (dim.d() as f64 - 4.0) / (2.0 * j)
}

/// Full diagnostics of `state` given its particle velocities.
pub fn sample<K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    velocities: &[Velocity],
    moments_j: &[f64],
    logmom_p: f64,
    deterministic: bool,
) -> Result<DiagnosticsSample> {
    let sums = pair_sums(state, kernel, logmom_p, deterministic)?;
    let (dzdt_direct, drdt_direct) = direct_derivatives(state, velocities);
    let r0 = total_mass(state);
    Ok(DiagnosticsSample {
        t: state.t,
        r0,
        z: moment_z(state),
        e: sums.energy,
        r_dm1: moment_r(state, state.dim.d() as f64 - 1.0),
        drdt_k: sums.drdt,
        dzdt_k: sums.dzdt,
        drdt_direct,
        dzdt_direct,
        ur_max: velocities.iter().map(|v| v.u_r.abs()).fold(0.0, f64::max),
        ur_ratio: if state.is_empty() {
            0.0
        } else {
            ur_bound_ratio(state, velocities)?
        },
        ke_bound: sums.ke_bound,
        logmom: normalise_log(sums.log_sum, r0, logmom_p),
        moments: moments_j.iter().map(|&j| (j, moment_r(state, j))).collect(),
    })
}
