//! Experiments and verdicts.
//!
//! [`run_experiment`] integrates a configured initial state, records
//! diagnostics at every output time and checks the theorem-level statements
//! against them. [`property_suite`] runs the randomized kernel and assembly
//! invariants. Both report through [`Verdict`]s.

mod props;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::diagnostics::{self, DiagnosticsSample};
use crate::integrate;
use crate::io::write_atomic;
use crate::specfun::{Dimension, Kernel, KernelTable};
use crate::state::{self, VortexState};
use crate::{Error, Result};

pub use props::{
    boundary_checks, jest_envelope, kernel_sign_violations, ktilde_check, pow_diff_checks, property_suite,
    property_suite_with, random_state, table_factory, ur_bound_envelope, KernelFactory, PropertyOptions,
};

/// Least-squares fit of `R(t) ~ C (1 + t)^b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub b: f64,
    pub stderr: f64,
    pub window: [f64; 2],
    pub n_points: usize,
}

/// Slope of `ln R` against `ln(1 + t)` over the samples with `t` in `window`.
pub fn fit_growth_exponent(series: &[(f64, f64)], window: [f64; 2]) -> Result<ExponentFit> {
    let [ta, tb] = window;
    if !(ta < tb) {
        return Err(Error::Config(format!("fit window needs t_a < t_b, got [{ta}, {tb}]")));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= ta && *t <= tb)
        .map(|&(t, r)| (t, r))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Config(format!(
            "exponent fit needs ≥ 5 samples in [{ta}, {tb}], got {}",
            pts.len()
        )));
    }
    if let Some(&(t, r)) = pts.iter().find(|(t, r)| !(*r > 0.0) || !(*t > -1.0)) {
        return Err(Error::Config(format!(
            "exponent fit needs R > 0 and t > -1, got R({t}) = {r}"
        )));
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|&(t, r)| (t.ln_1p(), r.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Config("exponent fit needs distinct sample times".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = xy.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let stderr = if xy.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ExponentFit {
        b,
        stderr,
        window,
        n_points: xy.len(),
    })
}

/// Outcome of one named check. `detail` is never empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check_name: String,
    pub pass: bool,
    pub measured: f64,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, pass: bool, measured: f64, detail: impl Into<String>) -> Self {
        let mut detail = detail.into();
        if detail.is_empty() {
            detail = if pass { "ok".into() } else { "failed".into() };
        }
        Verdict {
            check_name: name.into(),
            pass,
            measured,
            detail,
        }
    }

    /// A vacuous pass.
    pub fn insufficient(name: impl Into<String>) -> Self {
        Verdict::new(name, true, 0.0, "insufficient data")
    }

    /// `measured ≤ limit`.
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        let pass = measured <= limit;
        Verdict::new(
            name,
            pass,
            measured,
            format!("{measured:e} {} {limit:e}", if pass { "≤" } else { ">" }),
        )
    }
}

/// Serialized verdict file contents.
pub fn verdicts_json(verdicts: &[Verdict]) -> String {
    let mut s = serde_json::to_string_pretty(verdicts).expect("verdicts serialise");
    s.push('\n');
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotone {
    ZDecreasing,
    RIncreasing,
    R0Constant,
}

impl Monotone {
    pub fn name(self) -> &'static str {
        match self {
            Monotone::ZDecreasing => "Z_decreasing",
            Monotone::RIncreasing => "R_increasing",
            Monotone::R0Constant => "R0_constant",
        }
    }
}

/// Strict comparison of consecutive values; `R0Constant` compares bits.
/// `measured` is the number of offending pairs.
pub fn check_monotone(series: &[f64], which: Monotone) -> Verdict {
    if series.len() < 2 {
        return Verdict::insufficient(which.name());
    }
    let ok = |a: f64, b: f64| match which {
        Monotone::ZDecreasing => b < a,
        Monotone::RIncreasing => b > a,
        Monotone::R0Constant => a.to_bits() == b.to_bits(),
    };
    let bad: Vec<usize> = series
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !ok(w[0], w[1]))
        .map(|(i, _)| i + 1)
        .collect();
    let detail = match bad.first() {
        None => format!("{} samples", series.len()),
        Some(&i) => format!(
            "{} violations, first at sample {i}: {:e} -> {:e}",
            bad.len(),
            series[i - 1],
            series[i]
        ),
    };
    Verdict::new(which.name(), bad.is_empty(), bad.len() as f64, detail)
}

/// Asymptotic lower-bound exponent of `R_(d-1)` (minus an arbitrary epsilon).
pub fn lower_bound_exponent(dim: Dimension) -> f64 {
    match dim.d() {
        3 => 0.75,
        4 => 2.0 / 3.0,
        d => {
            let d = d as f64;
            d / (d * d - 2.0 * d - 2.0)
        }
    }
}

/// Tolerances for the run verdicts.
pub const ENERGY_DRIFT_TOL: f64 = 0.02;
pub const FD_TOL: f64 = 0.01;
pub const ASSEMBLY_TOL: f64 = 1e-10;
pub const UPPER_EXPONENT_D3: f64 = 4.5;
pub const DIFF_GROWTH_TOL: f64 = 10.0;
pub const KE_RATIO_FLOOR: f64 = 0.01;

/// In-memory results of one run.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub samples: Vec<DiagnosticsSample>,
    pub verdicts: Vec<Verdict>,
    pub fit: Option<ExponentFit>,
    pub final_state: VortexState,
    pub files: Vec<PathBuf>,
}

impl Experiment {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// The kernel a config asks for.
pub fn build_kernel(config: &SimConfig) -> Result<Kernel> {
    let dim = config.dimension()?;
    if config.kernel.table {
        let table = KernelTable::build(dim, config.kernel.table_options(config.seed))?;
        Ok(Kernel::tabulated(Arc::new(table)))
    } else {
        Ok(Kernel::direct(dim))
    }
}

fn checkpoint_name(t: f64) -> String {
    format!("checkpoint_{t}.csv")
}

/// Builds, runs and checks one experiment, writing its files under
/// `config.run_dir()`.
pub fn run_experiment(config: &SimConfig) -> Result<Experiment> {
    config.validate()?;
    let dim = config.dimension()?;
    let kernel = build_kernel(config)?;
    let initial = state::make_initial_state(dim, config.delta, &config.init, config.seed)?;
    let moments = config.extra_moments();
    let mut samples = Vec::new();
    let mut sink = |s: &VortexState, v: &[crate::biot_savart::Velocity]| -> Result<()> {
        samples.push(diagnostics::sample(
            s,
            &kernel,
            v,
            &moments,
            config.logmom_p,
            config.deterministic,
        )?);
        Ok(())
    };
    let final_state = integrate::run(
        initial.clone(),
        &kernel,
        &config.control,
        config.deterministic,
        &mut sink,
    )?;
    let (verdicts, fit) = evaluate_run(config, &samples, &initial, &final_state)?;

    let dir = config.run_dir();
    let mut files = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        files.push(path);
        Ok(())
    };
    put("diagnostics.csv", &diagnostics::to_csv(&samples, &moments))?;
    put("verdicts.json", &verdicts_json(&verdicts))?;
    for s in [&initial, &final_state] {
        let path = dir.join(checkpoint_name(s.t));
        if !files.contains(&path) {
            state::write_checkpoint(s, &path)?;
            files.push(state::sidecar_path(&path));
            files.push(path);
        }
    }
    Ok(Experiment {
        samples,
        verdicts,
        fit,
        final_state,
        files,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Every run-level verdict for a recorded series.
pub fn evaluate_run(
    config: &SimConfig,
    samples: &[DiagnosticsSample],
    initial: &VortexState,
    final_state: &VortexState,
) -> Result<(Vec<Verdict>, Option<ExponentFit>)> {
    let dim = config.dimension()?;
    let t_end = config.control.t_end;
    let mut out = Vec::new();
    let col = |f: fn(&DiagnosticsSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();

    out.push(check_monotone(&col(|s| s.r0), Monotone::R0Constant));
    let weights_same = initial.particles.len() == final_state.particles.len()
        && initial
            .particles
            .iter()
            .zip(&final_state.particles)
            .all(|(a, b)| a.w.to_bits() == b.w.to_bits());
    out.push(Verdict::new(
        "weights_unchanged",
        weights_same,
        if weights_same { 0.0 } else { 1.0 },
        if weights_same {
            "bitwise equal"
        } else {
            "weights changed"
        },
    ));
    out.push(check_monotone(&col(|s| s.z), Monotone::ZDecreasing));
    out.push(check_monotone(&col(|s| s.r_dm1), Monotone::RIncreasing));

    let nonempty = samples.iter().filter(|s| s.z > 0.0).collect::<Vec<_>>();
    let bad_z = nonempty.iter().filter(|s| !(s.dzdt_k < 0.0)).count();
    let bad_r = nonempty.iter().filter(|s| !(s.drdt_k > 0.0)).count();
    out.push(Verdict::new(
        "dZdt_kernel_negative",
        bad_z == 0,
        bad_z as f64,
        format!("{bad_z} of {} samples violate", nonempty.len()),
    ));
    out.push(Verdict::new(
        "dRdt_kernel_positive",
        bad_r == 0,
        bad_r as f64,
        format!("{bad_r} of {} samples violate", nonempty.len()),
    ));

    match samples.split_first() {
        Some((first, rest)) if !rest.is_empty() => {
            let z0 = first.z;
            let worst = rest.iter().map(|s| s.z / z0).fold(f64::NEG_INFINITY, f64::max);
            let lowest = rest.iter().map(|s| s.z).fold(f64::INFINITY, f64::min);
            let pass = lowest > 0.0 && worst < 1.0;
            out.push(Verdict::new(
                "Z_bounds",
                pass,
                worst,
                format!("0 < Z(t) < Z(0) needs min Z > 0 (got {lowest:e}) and max Z/Z(0) < 1"),
            ));
            let e0 = first.e;
            let drift = rest.iter().map(|s| rel(s.e, e0)).fold(0.0, f64::max);
            out.push(Verdict::at_most("energy_drift", drift, ENERGY_DRIFT_TOL));
        }
        _ => {
            out.push(Verdict::insufficient("Z_bounds"));
            out.push(Verdict::insufficient("energy_drift"));
        }
    }

    let mid: Vec<usize> = (1..samples.len().saturating_sub(1))
        .filter(|&k| samples[k].t >= 0.25 * t_end && samples[k].t <= 0.75 * t_end)
        .collect();
    if mid.is_empty() {
        out.push(Verdict::insufficient("dZdt_finite_difference"));
        out.push(Verdict::insufficient("dRdt_finite_difference"));
    } else {
        let fd = |k: usize, f: fn(&DiagnosticsSample) -> f64| {
            (f(&samples[k + 1]) - f(&samples[k - 1])) / (samples[k + 1].t - samples[k - 1].t)
        };
        let ez = mid
            .iter()
            .map(|&k| rel(fd(k, |s| s.z), samples[k].dzdt_k))
            .fold(0.0, f64::max);
        let er = mid
            .iter()
            .map(|&k| rel(fd(k, |s| s.r_dm1), samples[k].drdt_k))
            .fold(0.0, f64::max);
        out.push(Verdict::at_most("dZdt_finite_difference", ez, FD_TOL));
        out.push(Verdict::at_most("dRdt_finite_difference", er, FD_TOL));
    }

    let az = samples.iter().map(|s| rel(s.dzdt_direct, s.dzdt_k)).fold(0.0, f64::max);
    let ar = samples.iter().map(|s| rel(s.drdt_direct, s.drdt_k)).fold(0.0, f64::max);
    out.push(Verdict::at_most("dZdt_assembly", az, ASSEMBLY_TOL));
    out.push(Verdict::at_most("dRdt_assembly", ar, ASSEMBLY_TOL));

    let series: Vec<(f64, f64)> = samples.iter().map(|s| (s.t, s.r_dm1)).collect();
    let window = match config.fit_window {
        Some(w) => w,
        None => {
            let half = samples.len() / 2;
            match (samples.get(half), samples.last()) {
                (Some(a), Some(b)) => [a.t, b.t],
                _ => [0.0, 0.0],
            }
        }
    };
    let fit = fit_growth_exponent(&series, window).ok();
    out.push(match (fit, dim.d()) {
        (None, _) => Verdict::insufficient("growth_exponent"),
        (Some(f), 3) => Verdict::new(
            "growth_exponent",
            f.b > 0.0 && f.b <= UPPER_EXPONENT_D3,
            f.b,
            format!(
                "b = {:e} ± {:e} over [{}, {}]; need 0 < b ≤ {UPPER_EXPONENT_D3}",
                f.b, f.stderr, f.window[0], f.window[1]
            ),
        ),
        (Some(f), _) => Verdict::new(
            "growth_exponent",
            true,
            f.b,
            format!(
                "b = {:e} ± {:e} over [{}, {}]; recorded only",
                f.b, f.stderr, f.window[0], f.window[1]
            ),
        ),
    });
    let lower = lower_bound_exponent(dim);
    out.push(Verdict::new(
        "lower_bound_exponent_reference",
        true,
        lower,
        format!("asymptotic lower-bound exponent {lower} minus epsilon; metadata, not asserted"),
    ));

    out.push(diff_inequality_verdict(samples, dim)?);

    if let Some(first) = samples.first().filter(|s| s.e > 0.0 && samples.len() > 1) {
        let r0 = first.ke_bound / first.e;
        let worst = samples
            .iter()
            .map(|s| s.ke_bound / s.e / r0)
            .fold(f64::INFINITY, f64::min);
        out.push(Verdict::new(
            "ke_bound_ratio",
            worst >= KE_RATIO_FLOOR,
            worst,
            format!("min (ke_bound/E) relative to initial = {worst:e}; floor {KE_RATIO_FLOOR}"),
        ));
    } else {
        out.push(Verdict::insufficient("ke_bound_ratio"));
    }
    let lm = samples
        .iter()
        .map(|s| s.logmom / (2.0 + s.r_dm1).ln())
        .fold(0.0, f64::max);
    out.push(Verdict::new(
        "logmom_ratio",
        lm.is_finite(),
        lm,
        format!("max logmom/log(2+R) = {lm:e}; recorded envelope"),
    ));
    let ur = samples.iter().map(|s| s.ur_ratio).fold(0.0, f64::max);
    out.push(Verdict::new(
        "ur_bound_ratio",
        ur.is_finite(),
        ur,
        format!("max ur_bound_ratio = {ur:e}; recorded envelope"),
    ));

    let violations = state::validate(final_state);
    out.push(Verdict::new(
        "final_state_valid",
        violations.is_empty(),
        violations.len() as f64,
        match violations.first() {
            None => "all invariants hold".to_string(),
            Some(v) => format!("{} violations, first: {v}", violations.len()),
        },
    ));
    Ok((out, fit))
}

/// Running max of the `R_(d-1)` differential-inequality ratio must grow by
/// less than [`DIFF_GROWTH_TOL`] after the first 10% of the run.
fn diff_inequality_verdict(samples: &[DiagnosticsSample], dim: Dimension) -> Result<Verdict> {
    let name = "diff_inequality_growth";
    let j = dim.d() as f64 - 1.0;
    let Some(last) = samples.last() else {
        return Ok(Verdict::insufficient(name));
    };
    let t_cut = samples[0].t + 0.1 * (last.t - samples[0].t);
    let mut running = 0.0f64;
    let mut at_cut = None;
    for w in samples.windows(2) {
        running = running.max(diagnostics::diff_inequality_ratio(&w[0], &w[1], j, dim)?);
        if w[1].t >= t_cut && at_cut.is_none() {
            at_cut = Some(running);
        }
    }
    match at_cut {
        Some(base) if base > 0.0 && samples.len() > 2 => {
            let growth = running / base;
            Ok(Verdict::new(
                name,
                growth < DIFF_GROWTH_TOL,
                growth,
                format!("running max grew ×{growth:.4} after t = {t_cut}; limit ×{DIFF_GROWTH_TOL}"),
            ))
        }
        _ => Ok(Verdict::insufficient(name)),
    }
}

/// Reads a verdict file back.
pub fn read_verdicts(path: &Path) -> Result<Vec<Verdict>> {
    let text = crate::io::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn exact_power_law() {
        let series: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, (1.0 + k as f64).powi(2))).collect();
        let f = fit_growth_exponent(&series, [0.0, 9.0]).unwrap();
        assert!((f.b - 2.0).abs() < 1e-12, "{f:?}");
        assert_eq!(f.n_points, 10);
        let flat: Vec<(f64, f64)> = (0..6).map(|k| (k as f64, 3.0)).collect();
        assert_eq!(fit_growth_exponent(&flat, [0.0, 5.0]).unwrap().b, 0.0);
    }

    #[test]
    fn fit_needs_five_points() {
        let series: Vec<(f64, f64)> = (0..4).map(|k| (k as f64, 1.0)).collect();
        assert!(fit_growth_exponent(&series, [0.0, 3.0]).unwrap_err().is_config());
    }

    #[test]
    fn monotone_checks() {
        assert!(check_monotone(&[3.0, 2.0, 1.0], Monotone::ZDecreasing).pass);
        let v = check_monotone(&[3.0, 2.0, 2.0], Monotone::ZDecreasing);
        assert!(!v.pass);
        assert!(v.detail.contains("sample 2"), "{}", v.detail);
        assert!(check_monotone(&[1.0, 1.5], Monotone::RIncreasing).pass);
        assert!(!check_monotone(&[1.0, 1.0 + f64::EPSILON], Monotone::R0Constant).pass);
        let v = check_monotone(&[1.0], Monotone::R0Constant);
        assert!(v.pass && v.detail == "insufficient data");
    }

    #[test]
    fn lower_exponents() {
        let e = |d| lower_bound_exponent(Dimension::new(d).unwrap());
        assert_eq!(e(3), 0.75);
        assert_eq!(e(5), 5.0 / 13.0);
    }

    #[test]
    fn zero_length_run_is_vacuous() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            r#"{{"dim":3,"init":{{"kind":"gaussian_pair","r0":1,"z0":0.5,"sigma":0.15,"grid_n":6}},
               "control":{{"t_end":0}},"kernel":{{"table":false}},"output_dir":{:?},"run_id":"zero"}}"#,
            dir.path()
        );
        let cfg = parse_config(&text).unwrap();
        let exp = run_experiment(&cfg).unwrap();
        assert_eq!(exp.samples.len(), 1);
        assert!(exp.passed(), "{:#?}", exp.verdicts);
        let z = exp.verdicts.iter().find(|v| v.check_name == "Z_decreasing").unwrap();
        assert_eq!(z.detail, "insufficient data");
        let run = dir.path().join("zero");
        for f in [
            "diagnostics.csv",
            "verdicts.json",
            "checkpoint_0.csv",
            "checkpoint_0.json",
        ] {
            assert!(run.join(f).exists(), "{f}");
        }
        assert_eq!(read_verdicts(&run.join("verdicts.json")).unwrap(), exp.verdicts);
    }
}
