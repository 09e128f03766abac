//! Particles, initial data and checkpoints.
//!
//! A state stores only the upper half-plane `z >= 0`; each particle carries a
//! fixed share `w` of the transported measure `omega dr dz`, and its mirror
//! image at `-z` with weight `-w` is implicit in every kernel.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::{read_to_string, write_atomic};
use crate::specfun::Dimension;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VortexParticle {
    pub r: f64,
    pub z: f64,
    pub w: f64,
}

impl VortexParticle {
    pub fn new(r: f64, z: f64, w: f64) -> Self {
        VortexParticle { r, z, w }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VortexState {
    pub dim: Dimension,
    /// Blob regularisation length; `0` means point vortices.
    pub delta: f64,
    pub particles: Vec<VortexParticle>,
    pub t: f64,
    /// Frozen `sup |omega / r^(d-2)|` of the initial data.
    pub sup_ratio: f64,
}

impl VortexState {
    pub fn new(dim: Dimension, delta: f64, particles: Vec<VortexParticle>) -> Self {
        VortexState {
            dim,
            delta,
            particles,
            t: 0.0,
            sup_ratio: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `phi = exp(-rho^2 / 2)`, truncated at `rho <= cutoff`.
    GaussianPair,
    /// Indicator of the disc `rho <= 1`; `sigma` is the patch radius.
    PatchPair,
}

/// Anti-parallel initial vorticity `omega = strength r^(d-2) phi(rho)` with
/// `rho = |(r, z) - (r0, z0)| / sigma`, restricted to `z >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub kind: InitialKind,
    pub r0: f64,
    pub z0: f64,
    pub sigma: f64,
    #[serde(default = "one")]
    pub strength: f64,
    /// Sample cells across the support diameter.
    pub grid_n: usize,
    /// Truncation radius in units of `sigma` (Gaussian profile only).
    #[serde(default = "three")]
    pub cutoff: f64,
    /// Uniform random displacement of each sample, as a fraction of the
    /// cell width; `0` keeps the midpoint rule.
    #[serde(default)]
    pub jitter: f64,
}

fn one() -> f64 {
    1.0
}

fn three() -> f64 {
    3.0
}

impl InitialData {
    pub fn gaussian_pair(r0: f64, z0: f64, sigma: f64, strength: f64, grid_n: usize, cutoff: f64) -> Self {
        InitialData {
            kind: InitialKind::GaussianPair,
            r0,
            z0,
            sigma,
            strength,
            grid_n,
            cutoff,
            jitter: 0.0,
        }
    }

    pub fn patch_pair(r0: f64, z0: f64, radius: f64, strength: f64, grid_n: usize) -> Self {
        InitialData {
            kind: InitialKind::PatchPair,
            r0,
            z0,
            sigma: radius,
            strength,
            grid_n,
            cutoff: 1.0,
            jitter: 0.0,
        }
    }

    /// Support radius in units of `sigma`.
    fn extent(&self) -> f64 {
        match self.kind {
            InitialKind::GaussianPair => self.cutoff,
            InitialKind::PatchPair => 1.0,
        }
    }

    fn profile(&self, rho: f64) -> f64 {
        match self.kind {
            InitialKind::GaussianPair if rho <= self.cutoff => (-0.5 * rho * rho).exp(),
            InitialKind::PatchPair if rho <= 1.0 => 1.0,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "init.{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("r0", self.r0)?;
        positive("sigma", self.sigma)?;
        positive("strength", self.strength)?;
        positive("cutoff", self.cutoff)?;
        if !(self.z0 >= 0.0 && self.z0.is_finite()) {
            return Err(Error::Config(format!("init.z0 must be ≥ 0, got {}", self.z0)));
        }
        if self.grid_n == 0 {
            return Err(Error::Config("init.grid_n must be ≥ 1".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!(
                "init.jitter must lie in [0, 0.5), got {}",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// `C^1` ramp from 0 at `z = 0` to 1 at `z = eps`.
fn taper(z: f64, eps: f64) -> f64 {
    if z >= eps {
        1.0
    } else if z <= 0.0 {
        0.0
    } else {
        let x = z / eps;
        x * x * (3.0 - 2.0 * x)
    }
}

/// Samples `data` by the midpoint rule on a square grid over its support,
/// clipped to `r > 0, z >= 0`. `seed` drives the optional jitter.
pub fn make_initial_state(dim: Dimension, delta: f64, data: &InitialData, seed: u64) -> Result<VortexState> {
    data.validate()?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!("delta must be ≥ 0, got {delta}")));
    }
    let half = data.extent() * data.sigma;
    let h = 2.0 * half / data.grid_n as f64;
    let eps = data.sigma / data.grid_n as f64;
    let r_lo = data.r0 - half;
    let z_lo = (data.z0 - half).max(0.0);
    let z_hi = data.z0 + half;
    let nz = ((z_hi - z_lo) / h).ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut particles = Vec::new();
    for i in 0..data.grid_n {
        for k in 0..nz {
            let (jr, jz) = if data.jitter > 0.0 {
                (
                    data.jitter * (2.0 * rng.random::<f64>() - 1.0),
                    data.jitter * (2.0 * rng.random::<f64>() - 1.0),
                )
            } else {
                (0.0, 0.0)
            };
            let r = r_lo + (i as f64 + 0.5 + jr) * h;
            let z = z_lo + (k as f64 + 0.5 + jz) * h;
            if r <= 0.0 || z < 0.0 || z > z_hi {
                continue;
            }
            let rho = (r - data.r0).hypot(z - data.z0) / data.sigma;
            let phi = data.profile(rho) * taper(z, eps);
            let w = data.strength * r.powi(dim.d() as i32 - 2) * phi * h * h;
            if w > 0.0 {
                particles.push(VortexParticle { r, z, w });
            }
        }
    }
    if particles.is_empty() {
        return Err(Error::Config(
            "initial data has empty support after truncation to z ≥ 0".into(),
        ));
    }
    Ok(VortexState {
        dim,
        delta,
        particles,
        t: 0.0,
        sup_ratio: data.strength,
    })
}

/// Discrete `R_0 = sum w_i`.
pub fn total_mass(state: &VortexState) -> f64 {
    state.particles.iter().map(|p| p.w).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// Offending particle, or `None` for state-level fields.
    pub index: Option<usize>,
    pub invariant: &'static str,
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "particle {i}: {} violated (value {})", self.invariant, self.value),
            None => write!(f, "state: {} violated (value {})", self.invariant, self.value),
        }
    }
}

/// Every broken invariant, one entry per field and particle.
pub fn validate(state: &VortexState) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, index, invariant, value| {
        if !ok {
            out.push(Violation {
                index,
                invariant,
                value,
            });
        }
    };
    check(
        state.delta >= 0.0 && state.delta.is_finite(),
        None,
        "delta ≥ 0",
        state.delta,
    );
    check(state.t >= 0.0 && state.t.is_finite(), None, "t ≥ 0", state.t);
    check(
        state.sup_ratio > 0.0 && state.sup_ratio.is_finite(),
        None,
        "sup_ratio > 0",
        state.sup_ratio,
    );
    for (i, p) in state.particles.iter().enumerate() {
        check(p.r > 0.0 && p.r.is_finite(), Some(i), "r > 0", p.r);
        check(p.z >= 0.0 && p.z.is_finite(), Some(i), "z ≥ 0", p.z);
        check(p.w > 0.0 && p.w.is_finite(), Some(i), "w > 0", p.w);
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    dim: u32,
    delta: f64,
    t: f64,
    sup_ratio: f64,
}

/// Path of the JSON sidecar belonging to a checkpoint CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn checkpoint_csv(state: &VortexState) -> String {
    let mut s = String::with_capacity(16 + 64 * state.len());
    s.push_str("r,z,w\n");
    for p in &state.particles {
        s.push_str(&format!("{},{},{}\n", p.r, p.z, p.w));
    }
    s
}

/// Writes `r,z,w` rows to `csv` and `{dim, delta, t, sup_ratio}` next to it.
/// Floats use shortest round-trip formatting, so reading back is bit-exact.
pub fn write_checkpoint(state: &VortexState, csv: &Path) -> Result<()> {
    let side = Sidecar {
        dim: state.dim.d(),
        delta: state.delta,
        t: state.t,
        sup_ratio: state.sup_ratio,
    };
    let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Json {
        context: "checkpoint sidecar".into(),
        source: e,
    })?;
    write_atomic(csv, checkpoint_csv(state).as_bytes())?;
    write_atomic(&sidecar_path(csv), json.as_bytes())
}

pub fn read_checkpoint(csv: &Path) -> Result<VortexState> {
    let side_path = sidecar_path(csv);
    let side: Sidecar = serde_json::from_str(&read_to_string(&side_path)?).map_err(|e| Error::Json {
        context: side_path.display().to_string(),
        source: e,
    })?;
    let text = read_to_string(csv)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("r,z,w") {
        return Err(Error::Parse(format!("{}: expected header r,z,w", csv.display())));
    }
    let mut particles = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |k: usize| -> Result<f64> {
            fields
                .get(k)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::Parse(format!("{}: bad row {}: {line}", csv.display(), n + 2)))
        };
        if fields.len() != 3 {
            return Err(Error::Parse(format!("{}: row {} needs 3 fields", csv.display(), n + 2)));
        }
        particles.push(VortexParticle {
            r: parse(0)?,
            z: parse(1)?,
            w: parse(2)?,
        });
    }
    Ok(VortexState {
        dim: Dimension::new(side.dim)?,
        delta: side.delta,
        particles,
        t: side.t,
        sup_ratio: side.sup_ratio,
    })
}
