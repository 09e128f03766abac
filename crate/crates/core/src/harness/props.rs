//! Randomized invariant suites over the kernel and the pair sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Verdict;
use crate::biot_savart::{ktilde, pair_geometry, stream_at, velocity_all, velocity_at};
use crate::diagnostics::{direct_derivatives, pair_sums, ur_bound_ratio};
use crate::specfun::{
    kernel_direct, stable_pow_diff, stable_pow_diff2, Dimension, Kernel, KernelSource, KernelTable, QuadOptions,
    TableOptions,
};
use crate::state::{make_initial_state, InitialData, VortexParticle, VortexState};
use crate::Result;

/// Builds the kernel under test for a dimension.
pub type KernelFactory<'a> = dyn Fn(Dimension) -> Result<Box<dyn KernelSource>> + 'a;

/// Sizes and seed of [`property_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyOptions {
    pub seed: u64,
    pub lemma_dims: Vec<u32>,
    pub lemma_samples: usize,
    pub ktilde_dims: Vec<u32>,
    pub ktilde_samples: usize,
    pub deltas: Vec<f64>,
    pub states: usize,
    pub ur_sizes: Vec<usize>,
}

impl Default for PropertyOptions {
    fn default() -> Self {
        PropertyOptions {
            seed: 0,
            lemma_dims: vec![3, 4, 5, 7],
            lemma_samples: 10_000,
            ktilde_dims: vec![3, 4, 5, 7],
            ktilde_samples: 100_000,
            deltas: vec![0.0, 0.1],
            states: 100,
            ur_sizes: vec![100, 400, 1600],
        }
    }
}

impl PropertyOptions {
    /// A reduced suite for smoke tests.
    pub fn quick(seed: u64) -> Self {
        PropertyOptions {
            seed,
            lemma_samples: 200,
            ktilde_samples: 2_000,
            states: 10,
            ur_sizes: vec![100, 400],
            ..PropertyOptions::default()
        }
    }
}

pub const JEST_ENVELOPE_TOL: f64 = 100.0;
pub const POW_EXACT_TOL: f64 = 1e-12;
pub const POW_COMPARATOR_BOUND: f64 = 10.0;
pub const BOUNDARY_TOL: f64 = 1e-12;
pub const FLAT_KTILDE_TOL: f64 = 1e-12;
pub const UR_ENVELOPE_TOL: f64 = 4.0;
const LEMMA_RANGE: (f64, f64) = (1e-8, 1e8);

fn log_spaced(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| match i {
        0 => lo,
        i if i + 1 == n => hi,
        i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
    })
}

/// Sign violations of `F' < 0`, `F'' > 0` and the centred difference of
/// `F*` over `n` log-spaced points of `[1e-8, 1e8]`.
pub fn kernel_sign_violations(dim: Dimension, n: usize) -> Result<[usize; 3]> {
    let opts = QuadOptions::default();
    let mut bad = [0usize; 3];
    for s in log_spaced(LEMMA_RANGE.0, LEMMA_RANGE.1, n) {
        let k = kernel_direct(dim, s, opts)?;
        let h = 1e-5 * s;
        let lo = kernel_direct(dim, s - h, opts)?;
        let hi = kernel_direct(dim, s + h, opts)?;
        bad[0] += usize::from(!(k.fp < 0.0));
        bad[1] += usize::from(!(k.fpp > 0.0));
        bad[2] += usize::from(!(hi.fstar(dim, s + h) - lo.fstar(dim, s - h) < 0.0));
    }
    Ok(bad)
}

/// `max / min` of `-F'(s) s (1 + s)^(d/2)` over `n` log-spaced points.
pub fn jest_envelope(dim: Dimension, n: usize) -> Result<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for s in log_spaced(LEMMA_RANGE.0, LEMMA_RANGE.1, n) {
        let fp = kernel_direct(dim, s, QuadOptions::default())?.fp;
        let v = -fp * s * dim.half_d_power(1.0 + s);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(hi / lo)
}

/// Non-positive `K~` count over `n` random quadruples, and the largest
/// `|K~|` at `z = z' = 0` over `n / 100` further pairs.
pub fn ktilde_check<K: KernelSource>(kernel: &K, n: usize, delta: f64, seed: u64) -> Result<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    let pow10 = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| 10f64.powf(rng.random_range(lo..hi));
    for _ in 0..n {
        let r = pow10(&mut rng, -2.0, 2.0);
        let rb = pow10(&mut rng, -2.0, 2.0);
        let z = pow10(&mut rng, -3.0, 2.0);
        let zb = pow10(&mut rng, -3.0, 2.0);
        let g = pair_geometry(delta, r, z, rb, zb)?;
        if !(ktilde(kernel, &g)? > 0.0) {
            bad += 1;
        }
    }
    let mut flat = 0.0f64;
    for _ in 0..(n / 100).max(1) {
        let r = pow10(&mut rng, -2.0, 2.0);
        let rb = pow10(&mut rng, -2.0, 2.0);
        let g = pair_geometry(delta.max(1e-3), r, 0.0, rb, 0.0)?;
        flat = flat.max(ktilde(kernel, &g)?.abs());
    }
    Ok((bad, flat))
}

/// Verdicts on the power-difference comparators over a dyadic grid.
pub fn pow_diff_checks() -> Result<Vec<Verdict>> {
    let grid: Vec<f64> = (-10..=10).map(|k| 2f64.powi(k)).collect();
    let mut out = Vec::new();
    let mut exact = 0.0f64;
    for &x in &grid {
        for &y in &grid {
            let r = stable_pow_diff(1.0, x, y)? / (y / (x * (x + y)));
            exact = exact.max((r - 1.0).abs());
        }
    }
    out.push(Verdict::at_most("pow_diff_alpha1_exact", exact, POW_EXACT_TOL));
    for alpha in [0.5, 2.0] {
        let f = |x: f64| x.powf(-alpha);
        let inside = |r: f64| (1.0 / POW_COMPARATOR_BOUND..=POW_COMPARATOR_BOUND).contains(&r);
        let mut first = (0usize, f64::INFINITY, 0.0f64);
        let mut second = first;
        let tally = |acc: &mut (usize, f64, f64), r: f64| {
            acc.0 += usize::from(!inside(r));
            acc.1 = acc.1.min(r);
            acc.2 = acc.2.max(r);
        };
        for &x in &grid {
            for &y in &grid {
                tally(&mut first, stable_pow_diff(alpha, x, y)? / (f(x) * y / (x + y)));
                for &z in &grid {
                    tally(
                        &mut second,
                        stable_pow_diff2(alpha, x, y, z)? / (f(x) * y / (x + y) * z / (x + z)),
                    );
                }
            }
        }
        for (name, (bad, lo, hi)) in [("pow_diff", first), ("pow_diff2", second)] {
            out.push(Verdict::new(
                format!("{name}_comparator_a{alpha}"),
                bad == 0,
                bad as f64,
                format!("{bad} ratios outside [0.1, 10]; observed range [{lo:.4}, {hi:.4}]"),
            ));
        }
    }
    Ok(out)
}

/// A random state of `n` particles in `[0.3, 2] x [0.01, 1]`.
pub fn random_state(dim: Dimension, delta: f64, n: usize, rng: &mut impl Rng) -> VortexState {
    let particles = (0..n)
        .map(|_| {
            VortexParticle::new(
                rng.random_range(0.3..2.0),
                rng.random_range(0.01..1.0),
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    VortexState::new(dim, delta, particles)
}

/// Largest boundary value `max(|u_z(r, 0)|, |psi(r, 0)|)` and largest
/// relative disagreement of the two `dZ/dt` and `dR/dt` assemblies.
pub fn boundary_checks<K: KernelSource>(
    kernel: &K,
    state: &VortexState,
    rng: &mut impl Rng,
) -> Result<(f64, f64, f64)> {
    let mut edge = 0.0f64;
    for _ in 0..5 {
        let r = rng.random_range(0.1..3.0);
        edge = edge.max(velocity_at(state, kernel, r, 0.0, true)?.u_z.abs());
        edge = edge.max(stream_at(state, kernel, r, 0.0)?.abs());
    }
    let vel = velocity_all(state, kernel, true)?;
    let (dz, dr) = direct_derivatives(state, &vel);
    let sums = pair_sums(state, kernel, 1.0, true)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    Ok((edge, rel(dz, sums.dzdt), rel(dr, sums.drdt)))
}

/// `max / min` of the `u_r` bound ratio over Gaussian-pair states of
/// roughly the given sizes.
pub fn ur_bound_envelope<K: KernelSource>(kernel: &K, sizes: &[usize]) -> Result<(f64, Vec<f64>)> {
    let dim = kernel.dim();
    let mut ratios = Vec::new();
    for &n in sizes {
        let grid_n = ((4.0 * n as f64 / std::f64::consts::PI).sqrt().round() as usize).max(1);
        let data = InitialData::gaussian_pair(1.0, 0.5, 0.15, 1.0, grid_n, 3.0);
        let state = make_initial_state(dim, 0.05, &data, 0)?;
        let vel = velocity_all(&state, kernel, true)?;
        ratios.push(ur_bound_ratio(&state, &vel)?);
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((hi / lo, ratios))
}

/// `dR/dt` against the double sum that bounds it, for one state.
fn rdot_ratio<K: KernelSource>(kernel: &K, state: &VortexState) -> Result<f64> {
    let d = state.dim.d() as i32;
    let delta2 = state.delta * state.delta;
    let mut rhs = 0.0;
    for (i, a) in state.particles.iter().enumerate() {
        for (j, b) in state.particles.iter().enumerate() {
            if i == j && state.delta == 0.0 {
                continue;
            }
            let zs = a.z + b.z;
            let near = (a.r - b.r).powi(2) + zs * zs + delta2;
            let far = state.dim.half_d_power((a.r + b.r).powi(2) + zs * zs);
            rhs += (a.r * b.r).powi(d - 1) * zs * a.w * b.w / (near * far);
        }
    }
    Ok(pair_sums(state, kernel, 1.0, true)?.drdt / rhs)
}

/// The default kernel under test: the interpolation table.
pub fn table_factory(seed: u64) -> impl Fn(Dimension) -> Result<Box<dyn KernelSource>> {
    move |dim| {
        let opts = TableOptions {
            seed,
            ..TableOptions::default()
        };
        let k: Box<dyn KernelSource> = Box::new(Kernel::tabulated(KernelTable::build(dim, opts)?.into()));
        Ok(k)
    }
}

/// [`property_suite_with`] on the interpolation table.
pub fn property_suite(opts: &PropertyOptions) -> Result<Vec<Verdict>> {
    property_suite_with(opts, &table_factory(opts.seed))
}

fn kernel_index(kernels: &mut Vec<(u32, Box<dyn KernelSource>)>, factory: &KernelFactory<'_>, d: u32) -> Result<usize> {
    if let Some(i) = kernels.iter().position(|(k, _)| *k == d) {
        return Ok(i);
    }
    kernels.push((d, factory(Dimension::new(d)?)?));
    Ok(kernels.len() - 1)
}

/// Runs every randomized invariant suite against kernels from `factory`.
pub fn property_suite_with(opts: &PropertyOptions, factory: &KernelFactory<'_>) -> Result<Vec<Verdict>> {
    let mut out = Vec::new();
    let mut kernels: Vec<(u32, Box<dyn KernelSource>)> = Vec::new();

    for &d in &opts.lemma_dims {
        let dim = Dimension::new(d)?;
        let bad = kernel_sign_violations(dim, opts.lemma_samples)?;
        let total: usize = bad.iter().sum();
        out.push(Verdict::new(
            format!("kernel_signs_d{d}"),
            total == 0,
            total as f64,
            format!(
                "violations of F'<0: {}, F''>0: {}, (F*)'<0: {} over {} samples",
                bad[0], bad[1], bad[2], opts.lemma_samples
            ),
        ));
        out.push(Verdict::at_most(
            format!("jest_envelope_d{d}"),
            jest_envelope(dim, opts.lemma_samples)?,
            JEST_ENVELOPE_TOL,
        ));
    }

    let mut idx = 0u64;
    let mut ktilde_results = Vec::new();
    for &d in &opts.ktilde_dims {
        let i = kernel_index(&mut kernels, factory, d)?;
        for &delta in &opts.deltas {
            idx += 1;
            let (bad, flat) = ktilde_check(&kernels[i].1, opts.ktilde_samples, delta, opts.seed.wrapping_add(idx))?;
            ktilde_results.push((d, delta, bad, flat));
        }
    }
    for (d, delta, bad, _) in &ktilde_results {
        out.push(Verdict::new(
            format!("ktilde_positive_d{d}_delta{delta}"),
            *bad == 0,
            *bad as f64,
            format!("{bad} non-positive of {}", opts.ktilde_samples),
        ));
    }
    let flat = ktilde_results.iter().map(|r| r.3).fold(0.0, f64::max);
    out.push(Verdict::at_most("ktilde_zero_on_boundary", flat, FLAT_KTILDE_TOL));

    out.extend(pow_diff_checks()?);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let (mut edge, mut az, mut ar) = (0.0f64, 0.0f64, 0.0f64);
    let (mut rlo, mut rhi) = (f64::INFINITY, 0.0f64);
    let dims = if opts.ktilde_dims.is_empty() {
        vec![3]
    } else {
        opts.ktilde_dims.clone()
    };
    for k in 0..opts.states {
        let d = dims[k % dims.len()];
        let i = kernel_index(&mut kernels, factory, d)?;
        let kernel = &kernels[i].1;
        let delta = if k % 2 == 0 { 0.05 } else { 0.0 };
        let state = random_state(kernel.dim(), delta, 20, &mut rng);
        let (e, z, r) = boundary_checks(kernel, &state, &mut rng)?;
        edge = edge.max(e);
        az = az.max(z);
        ar = ar.max(r);
        let q = rdot_ratio(kernel, &state)?;
        rlo = rlo.min(q);
        rhi = rhi.max(q);
    }
    if opts.states == 0 {
        out.push(Verdict::insufficient("boundary_zero"));
    } else {
        out.push(Verdict::at_most("boundary_zero", edge, BOUNDARY_TOL));
        out.push(Verdict::at_most("dZdt_assembly", az, super::ASSEMBLY_TOL));
        out.push(Verdict::at_most("dRdt_assembly", ar, super::ASSEMBLY_TOL));
        out.push(Verdict::new(
            "rdot_comparability",
            rlo > 0.0 && rhi.is_finite(),
            rhi / rlo,
            format!("dR/dt over its bounding sum lies in [{rlo:e}, {rhi:e}]; recorded envelope"),
        ));
    }

    if !opts.ur_sizes.is_empty() {
        let i = kernel_index(&mut kernels, factory, 3)?;
        let (spread, ratios) = ur_bound_envelope(&kernels[i].1, &opts.ur_sizes)?;
        out.push(Verdict::new(
            "ur_bound_envelope",
            spread <= UR_ENVELOPE_TOL,
            spread,
            format!(
                "ratios {ratios:?} for sizes {:?}; max/min limit {UR_ENVELOPE_TOL}",
                opts.ur_sizes
            ),
        ));
    }
    Ok(out)
}
