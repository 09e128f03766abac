use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use sel_core::biot_savart::{ktilde, pair_geometry, velocity_all};
use sel_core::config::parse_config;
use sel_core::diagnostics::{energy, pair_sums, ur_bound_ratio};
use sel_core::specfun::{stable_pow_diff, stable_pow_diff2, Kernel, KernelSource, KernelTable, TableOptions};
use sel_core::state::{read_checkpoint, write_checkpoint, VortexParticle, VortexState};
use sel_core::Dimension;

fn table(d: u32) -> Kernel {
    static TABLES: OnceLock<Vec<Arc<KernelTable>>> = OnceLock::new();
    let all = TABLES.get_or_init(|| {
        [3, 4, 5]
            .iter()
            .map(|&d| Arc::new(KernelTable::build(Dimension::new(d).unwrap(), TableOptions::default()).unwrap()))
            .collect()
    });
    Kernel::tabulated(all[(d - 3) as usize].clone())
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

fn particles(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<VortexParticle>> {
    prop::collection::vec(
        (0.2f64..3.0, 0.01f64..2.0, 0.05f64..1.0).prop_map(|(r, z, w)| VortexParticle::new(r, z, w)),
        n,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn pow_diff_within_bounds(alpha in 0.05f64..5.0, x in log_uniform(1e-6, 1e6), y in log_uniform(1e-9, 1e9)) {
        let g = stable_pow_diff(alpha, x, y).unwrap();
        prop_assert!(g >= 0.0 && g <= x.powf(-alpha) * (1.0 + 1e-14));
    }

    #[test]
    fn pow_diff2_nonnegative_and_symmetric(
        alpha in 0.05f64..5.0,
        x in log_uniform(1e-6, 1e6),
        y in log_uniform(1e-9, 1e9),
        z in log_uniform(1e-9, 1e9),
    ) {
        let g = stable_pow_diff2(alpha, x, y, z).unwrap();
        let h = stable_pow_diff2(alpha, x, z, y).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!((g - h).abs() <= 1e-12 * g.abs().max(h.abs()));
    }

    #[test]
    fn pair_arguments_ordered_and_symmetric(
        delta in 0.0f64..0.5,
        r in log_uniform(1e-3, 1e3),
        z in 0.0f64..10.0,
        rb in log_uniform(1e-3, 1e3),
        zb in 0.0f64..10.0,
    ) {
        let g = pair_geometry(delta, r, z, rb, zb).unwrap();
        let h = pair_geometry(delta, rb, zb, r, z).unwrap();
        prop_assert!(g.s_direct <= g.s_mirror);
        prop_assert_eq!(g.s_direct.to_bits(), h.s_direct.to_bits());
        prop_assert_eq!(g.s_mirror.to_bits(), h.s_mirror.to_bits());
    }

    #[test]
    fn ktilde_positive_off_the_plane(
        d in 3u32..6,
        delta in prop_oneof![Just(0.0), Just(0.1)],
        r in log_uniform(1e-2, 1e2),
        rb in log_uniform(1e-2, 1e2),
        z in log_uniform(1e-3, 1e2),
        zb in log_uniform(1e-3, 1e2),
    ) {
        let g = pair_geometry(delta, r, z, rb, zb).unwrap();
        prop_assert!(ktilde(&table(d), &g).unwrap() > 0.0);
    }

    #[test]
    fn velocity_is_linear_in_weights(parts in particles(1..12), lambda in 0.1f64..10.0) {
        let k = table(3);
        let dim = k.dim();
        let a = VortexState::new(dim, 0.05, parts.clone());
        let scaled = parts.iter().map(|p| VortexParticle::new(p.r, p.z, lambda * p.w)).collect();
        let b = VortexState::new(dim, 0.05, scaled);
        let va = velocity_all(&a, &k, true).unwrap();
        let vb = velocity_all(&b, &k, true).unwrap();
        let scale = va.iter().map(|v| v.u_r.abs().max(v.u_z.abs())).fold(0.0, f64::max);
        for (x, y) in va.iter().zip(&vb) {
            prop_assert!((lambda * x.u_r - y.u_r).abs() <= 1e-12 * lambda * scale);
            prop_assert!((lambda * x.u_z - y.u_z).abs() <= 1e-12 * lambda * scale);
        }
        let (ra, rb) = (ur_bound_ratio(&a, &va).unwrap(), ur_bound_ratio(&b, &vb).unwrap());
        let mut b_sup = b.clone();
        b_sup.sup_ratio = lambda;
        let rb_sup = ur_bound_ratio(&b_sup, &vb).unwrap();
        prop_assert!((ra - rb_sup).abs() <= 1e-10 * ra, "{} {} {}", ra, rb, rb_sup);
    }

    #[test]
    fn kernel_form_signs(d in 3u32..6, parts in particles(1..15), delta in prop_oneof![Just(0.0), Just(0.05)]) {
        let k = table(d);
        let state = VortexState::new(k.dim(), delta, parts);
        let sums = pair_sums(&state, &k, 2.0, true).unwrap();
        if state.len() > 1 || delta > 0.0 {
            prop_assert!(sums.dzdt < 0.0);
            prop_assert!(sums.drdt > 0.0);
            prop_assert!(sums.energy > 0.0);
            prop_assert!(sums.ke_bound > 0.0);
        }
        prop_assert!((energy(&state, &k).unwrap() - sums.energy).abs() <= 1e-12 * sums.energy.abs());
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(parts in particles(0..20), t in 0.0f64..100.0, delta in 0.0f64..0.2) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut state = VortexState::new(Dimension::new(4).unwrap(), delta, parts);
        state.t = t;
        write_checkpoint(&state, &path).unwrap();
        prop_assert_eq!(read_checkpoint(&path).unwrap(), state);
    }

    #[test]
    fn config_round_trip(
        dim in 3u32..9,
        delta in 0.0f64..1.0,
        grid_n in 1usize..200,
        t_end in 0.0f64..50.0,
        j in prop::collection::vec(0.0f64..6.0, 0..4),
        det in any::<bool>(),
    ) {
        let text = format!(
            r#"{{"dim":{dim},"delta":{delta},"init":{{"kind":"patch_pair","r0":1,"z0":0.5,"sigma":0.2,"grid_n":{grid_n}}},
                "control":{{"t_end":{t_end}}},"moments_j":{j:?},"deterministic":{det}}}"#
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
    }
}
