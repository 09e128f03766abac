//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are pinned here, independent of library defaults.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sel_core::config::{parse_config, SimConfig};
use sel_core::harness::{
    boundary_checks, jest_envelope, kernel_sign_violations, ktilde_check, pow_diff_checks, random_state,
    run_experiment, table_factory, Experiment, Verdict,
};
use sel_core::specfun::{eval_f, eval_f_deriv};
use sel_core::Dimension;

const CLOSED_FORM_F_TOL: f64 = 1e-10;
const CLOSED_FORM_FP_TOL: f64 = 1e-9;
const CLOSED_FORM_SECONDS: f64 = 5.0;
const LEMMA_DIMS: [u32; 4] = [3, 4, 5, 7];
const LEMMA_SAMPLES: usize = 10_000;
const JEST_TOL: f64 = 100.0;
const KTILDE_SAMPLES: usize = 100_000;
const KTILDE_DELTAS: [f64; 2] = [0.0, 0.1];
const FLAT_KTILDE_TOL: f64 = 1e-12;
const RUN_SECONDS: f64 = 600.0;
const ENERGY_TOL: f64 = 0.02;
const FD_TOL: f64 = 0.01;
const UPPER_EXPONENT: f64 = 4.5;
const DIFF_GROWTH: f64 = 10.0;
const BOUNDARY_TOL: f64 = 1e-12;
const ASSEMBLY_TOL: f64 = 1e-10;
const RANDOM_STATES: usize = 100;

struct Gate {
    failed: usize,
}

impl Gate {
    fn line(&mut self, n: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "{} criterion {n:>2} {name}: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

/// `a atanh(1/a) - 1` and its `s`-derivative for `a = 1 + s/2`.
fn closed_form_d4(s: f64) -> (f64, f64) {
    let a = 1.0 + 0.5 * s;
    if a < 10.0 {
        let l = 0.5 * ((a + 1.0) / (a - 1.0)).ln();
        (a * l - 1.0, 0.5 * (l - a / (a * a - 1.0)))
    } else {
        let mut f = 0.0;
        let mut fa = 0.0;
        for k in (1..40).rev() {
            let c = 1.0 / (2 * k + 1) as f64;
            f += c * a.powi(-2 * k);
            fa -= 2.0 * k as f64 * c * a.powi(-2 * k - 1);
        }
        (f, 0.5 * fa)
    }
}

fn criterion_1(g: &mut Gate) {
    let d4 = Dimension::new(4).unwrap();
    let start = Instant::now();
    let (mut ef, mut efp) = (0.0f64, 0.0f64);
    let n = 10_000;
    for i in 0..n {
        let s = 10f64.powf(-4.0 + 8.0 * i as f64 / (n - 1) as f64);
        let (f, fp) = closed_form_d4(s);
        ef = ef.max((eval_f(d4, s).unwrap() / f - 1.0).abs());
        efp = efp.max((eval_f_deriv(d4, s).unwrap() / fp - 1.0).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    g.line(
        1,
        "d=4 closed form",
        ef <= CLOSED_FORM_F_TOL && efp <= CLOSED_FORM_FP_TOL && secs < CLOSED_FORM_SECONDS,
        format!(
            "max rel err F {ef:.2e} (≤ {CLOSED_FORM_F_TOL:e}), F' {efp:.2e} (≤ {CLOSED_FORM_FP_TOL:e}), {secs:.2} s"
        ),
    );
}

fn criteria_2_3(g: &mut Gate) {
    let mut bad = Vec::new();
    let mut env = Vec::new();
    for d in LEMMA_DIMS {
        let dim = Dimension::new(d).unwrap();
        bad.push((d, kernel_sign_violations(dim, LEMMA_SAMPLES).unwrap()));
        env.push((d, jest_envelope(dim, LEMMA_SAMPLES).unwrap()));
    }
    let total: usize = bad.iter().map(|(_, b)| b.iter().sum::<usize>()).sum();
    g.line(
        2,
        "kernel sign lemma",
        total == 0,
        format!("violations [F', F'', F*'] per d: {bad:?}"),
    );
    let worst = env.iter().map(|e| e.1).fold(0.0, f64::max);
    g.line(
        3,
        "derivative envelope",
        worst <= JEST_TOL,
        format!("max/min per d: {env:.3?} (≤ {JEST_TOL})"),
    );
}

fn criterion_4(g: &mut Gate) {
    let factory = table_factory(0);
    let mut bad = 0;
    let mut flat = 0.0f64;
    let mut seed = 0u64;
    for d in LEMMA_DIMS {
        let kernel = factory(Dimension::new(d).unwrap()).unwrap();
        for delta in KTILDE_DELTAS {
            seed += 1;
            let (b, f) = ktilde_check(&kernel, KTILDE_SAMPLES, delta, seed).unwrap();
            bad += b;
            flat = flat.max(f);
        }
    }
    g.line(
        4,
        "K~ positivity",
        bad == 0 && flat <= FLAT_KTILDE_TOL,
        format!(
            "{bad} non-positive of {}; max |K~| on z=0: {flat:e}",
            KTILDE_SAMPLES * 8
        ),
    );
}

fn config(dim: u32, t_end: f64, dir: &Path, run_id: &str) -> SimConfig {
    parse_config(&format!(
        r#"{{"dim":{dim},"delta":0.05,
            "init":{{"kind":"gaussian_pair","r0":1,"z0":0.5,"sigma":0.15,"strength":1,"grid_n":50}},
            "control":{{"scheme":"rk4","cfl":0.25,"t_end":{t_end},"output_every":0.1}},
            "moments_j":[2],"output_dir":{dir:?},"run_id":{run_id:?}}}"#
    ))
    .unwrap()
}

fn verdict<'a>(e: &'a Experiment, name: &str) -> &'a Verdict {
    e.verdicts.iter().find(|v| v.check_name == name).unwrap()
}

/// The run requirements shared by criteria 5 and 6.
fn run_suite(e: &Experiment) -> (bool, String) {
    let pass = |n: &str| verdict(e, n).pass;
    let strict = ["R0_constant", "Z_decreasing", "R_increasing"].iter().all(|n| pass(n));
    let energy = verdict(e, "energy_drift").measured;
    let fd_z = verdict(e, "dZdt_finite_difference").measured;
    let fd_r = verdict(e, "dRdt_finite_difference").measured;
    let all = e.verdicts.iter().all(|v| v.pass);
    let failing: Vec<&str> = e
        .verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| v.check_name.as_str())
        .collect();
    (
        strict && energy <= ENERGY_TOL && fd_z <= FD_TOL && fd_r <= FD_TOL && all,
        format!(
            "N={} samples={} monotone={strict} energy drift {energy:.2e} FD dZ {fd_z:.2e} FD dR {fd_r:.2e} failing={failing:?}",
            e.final_state.len(),
            e.samples.len()
        ),
    )
}

fn timed(cfg: &SimConfig) -> (Experiment, f64) {
    let start = Instant::now();
    let e = run_experiment(cfg).unwrap();
    (e, start.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let mut g = Gate { failed: 0 };
    let dir = tempfile::tempdir().unwrap();

    criterion_1(&mut g);
    criteria_2_3(&mut g);
    criterion_4(&mut g);

    let cfg3 = config(3, 10.0, dir.path(), "d3");
    let (e3, secs) = timed(&cfg3);
    let (ok, detail) = run_suite(&e3);
    g.line(
        5,
        "d=3 run",
        ok && secs <= RUN_SECONDS,
        format!("{detail} time {secs:.0} s"),
    );

    let mut detail6 = Vec::new();
    let mut ok6 = true;
    for (d, t_end) in [(4, 6.0), (5, 2.0)] {
        let (e, secs) = timed(&config(d, t_end, dir.path(), &format!("d{d}")));
        let (ok, detail) = run_suite(&e);
        ok6 &= ok;
        detail6.push(format!("d={d}: {detail} time {secs:.0} s"));
        if d == 5 {
            let v = verdict(&e, "diff_inequality_growth");
            ok6 &= v.pass && v.measured < DIFF_GROWTH;
            detail6.push(format!("d=5 running-max growth ×{:.3} (< {DIFF_GROWTH})", v.measured));
        }
    }
    g.line(6, "dimension sweep", ok6, detail6.join("; "));

    let fit = e3.fit.expect("fit over the late window");
    let lower = verdict(&e3, "lower_bound_exponent_reference");
    g.line(
        7,
        "upper-bound exponent",
        fit.b <= UPPER_EXPONENT && lower.measured == 0.75,
        format!(
            "b = {:.4} ± {:.4} over [{}, {}] (≤ {UPPER_EXPONENT}); lower-bound reference {} recorded",
            fit.b, fit.stderr, fit.window[0], fit.window[1], lower.measured
        ),
    );

    let pd = pow_diff_checks().unwrap();
    g.line(
        8,
        "power differences",
        pd.iter().all(|v| v.pass),
        pd.iter()
            .map(|v| format!("{}={}", v.check_name, v.measured))
            .collect::<Vec<_>>()
            .join(" "),
    );

    let factory = table_factory(0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut edge, mut az, mut ar) = (0.0f64, 0.0f64, 0.0f64);
    let kernels: Vec<_> = LEMMA_DIMS
        .iter()
        .map(|&d| factory(Dimension::new(d).unwrap()).unwrap())
        .collect();
    for k in 0..RANDOM_STATES {
        let kernel = &kernels[k % kernels.len()];
        let delta = if k % 2 == 0 { 0.05 } else { 0.0 };
        let state = random_state(kernel.dim(), delta, 20, &mut rng);
        let (e, z, r) = boundary_checks(kernel, &state, &mut rng).unwrap();
        edge = edge.max(e);
        az = az.max(z);
        ar = ar.max(r);
    }
    g.line(
        9,
        "boundary and symmetry",
        edge <= BOUNDARY_TOL && az <= ASSEMBLY_TOL && ar <= ASSEMBLY_TOL,
        format!("max |u_z|,|psi| on z=0 {edge:e}; assembly rel diff dZ {az:.2e} dR {ar:.2e}"),
    );

    let threads = if rayon::current_num_threads() == 1 { 3 } else { 1 };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let again_dir = tempfile::tempdir().unwrap();
    let cfg_again = config(3, 10.0, again_dir.path(), "d3");
    pool.install(|| run_experiment(&cfg_again).unwrap());
    let same = |name: &str| {
        std::fs::read(dir.path().join("d3").join(name)).unwrap()
            == std::fs::read(again_dir.path().join("d3").join(name)).unwrap()
    };
    let (csv, json) = (same("diagnostics.csv"), same("verdicts.json"));
    g.line(
        10,
        "determinism",
        csv && json,
        format!(
            "threads {} vs {threads}: diagnostics.csv identical={csv}, verdicts.json identical={json}",
            rayon::current_num_threads()
        ),
    );

    if g.failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", g.failed);
        ExitCode::FAILURE
    }
}
