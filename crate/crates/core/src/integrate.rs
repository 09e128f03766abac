//! Explicit Runge-Kutta integration of `dr/dt = u_r`, `dz/dt = u_z`.

use serde::{Deserialize, Serialize};

use crate::biot_savart::{velocity_all, Velocity};
use crate::specfun::KernelSource;
use crate::state::{VortexParticle, VortexState};
use crate::{Error, Result};

/// Tolerated rounding below `z = 0`; deeper crossings are errors.
pub const HALF_PLANE_SLACK: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    Rk2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    #[serde(default)]
    pub scheme: Scheme,
    /// Fixed step; exclusive with `cfl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    pub t_end: f64,
    /// Diagnostic cadence; defaults to `t_end / 100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_every: Option<f64>,
    /// Largest CFL step; defaults to `output_every`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
}

/// CFL number used when neither `dt` nor `cfl` is given.
pub const DEFAULT_CFL: f64 = 0.25;

impl StepControl {
    pub fn with_cfl(t_end: f64, cfl: f64, output_every: f64) -> Self {
        StepControl {
            scheme: Scheme::Rk4,
            dt: None,
            cfl: Some(cfl),
            t_end,
            output_every: Some(output_every),
            dt_max: None,
        }
    }

    pub fn with_dt(t_end: f64, dt: f64, output_every: f64) -> Self {
        StepControl {
            scheme: Scheme::Rk4,
            dt: Some(dt),
            cfl: None,
            t_end,
            output_every: Some(output_every),
            dt_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(Error::Config(format!("control.{name} must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("control.t_end must be ≥ 0, got {}", self.t_end)));
        }
        if self.dt.is_some() && self.cfl.is_some() {
            return Err(Error::Config(
                "control.dt and control.cfl are mutually exclusive".into(),
            ));
        }
        pos("dt", self.dt)?;
        pos("cfl", self.cfl)?;
        pos("output_every", self.output_every)?;
        pos("dt_max", self.dt_max)
    }

    pub fn output_every(&self) -> f64 {
        self.output_every.unwrap_or(self.t_end / 100.0)
    }

    fn dt_max(&self) -> f64 {
        self.dt_max.unwrap_or_else(|| self.output_every())
    }

    /// Output times `0, h, 2h, ..., t_end`.
    pub fn output_times(&self) -> Vec<f64> {
        if self.t_end == 0.0 {
            return vec![0.0];
        }
        let h = self.output_every();
        let n = (self.t_end / h - 1e-9).ceil().max(1.0) as usize;
        (0..=n)
            .map(|k| if k == n { self.t_end } else { k as f64 * h })
            .collect()
    }
}

fn displaced(
    state: &VortexState,
    base: &[VortexParticle],
    vel: &[&[Velocity]],
    coef: &[f64],
    dt: f64,
) -> Result<VortexState> {
    let mut next = VortexState {
        particles: Vec::with_capacity(base.len()),
        ..state.clone_header()
    };
    for (i, p) in base.iter().enumerate() {
        let (mut dr, mut dz) = (0.0, 0.0);
        for (v, &c) in vel.iter().zip(coef) {
            dr += c * v[i].u_r;
            dz += c * v[i].u_z;
        }
        let r = p.r + dt * dr;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Axis { index: i, r });
        }
        next.particles.push(VortexParticle {
            r,
            z: p.z + dt * dz,
            w: p.w,
        });
    }
    Ok(next)
}

impl VortexState {
    fn clone_header(&self) -> VortexState {
        VortexState {
            dim: self.dim,
            delta: self.delta,
            particles: Vec::new(),
            t: self.t,
            sup_ratio: self.sup_ratio,
        }
    }
}

/// One step from `state`, reusing `k1 = velocity_all(state)` if supplied.
pub fn step_with<K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    dt: f64,
    scheme: Scheme,
    deterministic: bool,
    k1: Option<Vec<Velocity>>,
) -> Result<VortexState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let base = &state.particles;
    let k1 = match k1 {
        Some(k) => k,
        None => velocity_all(state, kernel, deterministic)?,
    };
    let mut next = match scheme {
        Scheme::Rk2 => {
            let mid = displaced(state, base, &[&k1], &[0.5], dt)?;
            let k2 = velocity_all(&mid, kernel, deterministic)?;
            displaced(state, base, &[&k2], &[1.0], dt)?
        }
        Scheme::Rk4 => {
            let s2 = displaced(state, base, &[&k1], &[0.5], dt)?;
            let k2 = velocity_all(&s2, kernel, deterministic)?;
            let s3 = displaced(state, base, &[&k2], &[0.5], dt)?;
            let k3 = velocity_all(&s3, kernel, deterministic)?;
            let s4 = displaced(state, base, &[&k3], &[1.0], dt)?;
            let k4 = velocity_all(&s4, kernel, deterministic)?;
            let c = 1.0 / 6.0;
            displaced(state, base, &[&k1, &k2, &k3, &k4], &[c, 2.0 * c, 2.0 * c, c], dt)?
        }
    };
    for (i, p) in next.particles.iter_mut().enumerate() {
        if p.z < 0.0 {
            if p.z < -HALF_PLANE_SLACK {
                return Err(Error::HalfPlane { index: i, z: p.z });
            }
            p.z = 0.0;
        }
    }
    next.t = state.t + dt;
    Ok(next)
}

/// Advances `state` by `dt`; weights are copied unchanged.
pub fn step<K: KernelSource>(
    state: &VortexState,
    kernel: &K,
    dt: f64,
    scheme: Scheme,
    deterministic: bool,
) -> Result<VortexState> {
    step_with(state, kernel, dt, scheme, deterministic, None)
}

/// Median nearest-neighbour distance, or `inf` for fewer than two particles.
pub fn median_spacing(state: &VortexState) -> f64 {
    let p = &state.particles;
    if p.len() < 2 {
        return f64::INFINITY;
    }
    let mut nn: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, a)| {
            p.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a.r - b.r).hypot(a.z - b.z))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    nn[nn.len() / 2]
}

/// `cfl * min(delta, spacing) / max speed`, at least `1e-8 t_end`, or
/// `dt_max` when nothing moves. `delta = 0` uses the spacing alone.
pub fn cfl_dt(state: &VortexState, velocities: &[Velocity], cfl: f64, t_end: f64, dt_max: f64) -> Result<f64> {
    if state.is_empty() {
        return Err(Error::Config("cfl_dt needs a nonempty state".into()));
    }
    let vmax = velocities.iter().map(|v| v.u_r.hypot(v.u_z)).fold(0.0, f64::max);
    if vmax == 0.0 {
        return Ok(dt_max);
    }
    let spacing = median_spacing(state);
    let length = if state.delta > 0.0 {
        state.delta.min(spacing)
    } else {
        spacing
    };
    Ok((cfl * length / vmax).max(1e-8 * t_end).min(dt_max))
}

/// Receives the state and its velocities at every output time.
pub trait Sink {
    fn sample(&mut self, state: &VortexState, velocities: &[Velocity]) -> Result<()>;
}

impl<F: FnMut(&VortexState, &[Velocity]) -> Result<()>> Sink for F {
    fn sample(&mut self, state: &VortexState, velocities: &[Velocity]) -> Result<()> {
        self(state, velocities)
    }
}

/// Integrates to `control.t_end`, hitting every output time exactly. The
/// step within each output interval is fixed at its start.
pub fn run<K: KernelSource, S: Sink>(
    state: VortexState,
    kernel: &K,
    control: &StepControl,
    deterministic: bool,
    sink: &mut S,
) -> Result<VortexState> {
    control.validate()?;
    let times = control.output_times();
    let mut state = state;
    let mut vel = velocity_all(&state, kernel, deterministic)?;
    sink.sample(&state, &vel)?;
    let mut steps = 0usize;
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let span = t1 - t0;
        let dt_target = match control.dt {
            Some(dt) => dt,
            None if state.is_empty() => span,
            None => cfl_dt(
                &state,
                &vel,
                control.cfl.unwrap_or(DEFAULT_CFL),
                control.t_end,
                control.dt_max(),
            )?,
        };
        let n = (span / dt_target - 1e-9).ceil().max(1.0) as usize;
        let dt = span / n as f64;
        for k in 0..n {
            let k1 = if k == 0 { Some(std::mem::take(&mut vel)) } else { None };
            state = step_with(&state, kernel, dt, control.scheme, deterministic, k1).map_err(|e| Error::Step {
                step: steps,
                t: state.t,
                source: Box::new(e),
            })?;
            state.t = t0 + (k + 1) as f64 * dt;
            steps += 1;
        }
        state.t = t1;
        vel = velocity_all(&state, kernel, deterministic)?;
        sink.sample(&state, &vel)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{Dimension, DirectKernel};

    fn d3() -> Dimension {
        Dimension::new(3).unwrap()
    }

    #[test]
    fn empty_state_only_advances_time() {
        let s = VortexState::new(d3(), 0.05, vec![]);
        let k = DirectKernel::new(d3());
        let next = step(&s, &k, 0.5, Scheme::Rk4, true).unwrap();
        assert!(next.is_empty());
        assert_eq!(next.t, 0.5);
    }

    #[test]
    fn single_ring_descends_and_expands() {
        let s = VortexState::new(d3(), 0.05, vec![VortexParticle::new(1.0, 1.0, 1.0)]);
        let k = DirectKernel::new(d3());
        let next = step(&s, &k, 0.1, Scheme::Rk4, true).unwrap();
        let (a, b) = (s.particles[0], next.particles[0]);
        assert!(b.z < a.z && b.r > a.r);
        assert_eq!(a.w.to_bits(), b.w.to_bits());
    }

    #[test]
    fn deep_crossing_is_an_error() {
        let s = VortexState::new(d3(), 0.05, vec![VortexParticle::new(1.0, 1e-3, 1.0)]);
        let k = DirectKernel::new(d3());
        let err = step(&s, &k, 50.0, Scheme::Rk2, true).unwrap_err();
        assert!(matches!(err, Error::HalfPlane { .. } | Error::Axis { .. }), "{err}");
    }

    #[test]
    fn cfl_examples() {
        let s = VortexState::new(
            d3(),
            0.5,
            vec![VortexParticle::new(1.0, 1.0, 1.0), VortexParticle::new(1.0, 1.2, 1.0)],
        );
        let v = vec![Velocity { u_r: 0.3, u_z: 0.4 }; 2];
        let dt = cfl_dt(&s, &v, 0.25, 10.0, 1.0).unwrap();
        assert!((dt - 0.25 * 0.2 / 0.5).abs() < 1e-14);
        let still = vec![Velocity::default(); 2];
        assert_eq!(cfl_dt(&s, &still, 0.25, 10.0, 0.7).unwrap(), 0.7);
    }

    #[test]
    fn output_times_hit_end() {
        let c = StepControl::with_cfl(1.0, 0.25, 0.3);
        assert_eq!(c.output_times(), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        let c = StepControl::with_cfl(0.0, 0.25, 0.3);
        assert_eq!(c.output_times(), vec![0.0]);
    }

    #[test]
    fn zero_horizon_emits_initial_sample_only() {
        let s = VortexState::new(d3(), 0.05, vec![VortexParticle::new(1.0, 1.0, 1.0)]);
        let k = DirectKernel::new(d3());
        let mut count = 0;
        let out = run(
            s.clone(),
            &k,
            &StepControl::with_cfl(0.0, 0.25, 1.0),
            true,
            &mut |_: &VortexState, _: &[Velocity]| {
                count += 1;
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(count, 1);
        assert_eq!(out, s);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let s = VortexState::new(
            d3(),
            0.05,
            vec![
                VortexParticle::new(1.0, 0.3, 1.0),
                VortexParticle::new(1.1, 0.2, 0.7),
                VortexParticle::new(0.9, 0.25, 0.5),
            ],
        );
        let k = DirectKernel::new(d3());
        let advance = |n: usize| {
            let mut st = s.clone();
            let dt = 0.4 / n as f64;
            for _ in 0..n {
                st = step(&st, &k, dt, Scheme::Rk4, true).unwrap();
            }
            st
        };
        let (a, b, c) = (advance(4), advance(8), advance(16));
        let err = |x: &VortexState| {
            x.particles
                .iter()
                .zip(&c.particles)
                .map(|(p, q)| (p.r - q.r).hypot(p.z - q.z))
                .fold(0.0, f64::max)
        };
        let ratio = err(&a) / err(&b);
        assert!((16.0 * 0.7..=16.0 * 1.3).contains(&ratio), "ratio {ratio}");
    }
}
