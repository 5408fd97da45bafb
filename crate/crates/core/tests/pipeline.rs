//! Solver-to-analysis pipeline through the public API.

use dweuler::diagnostics::{stability_report, ConsistencyAccumulator};
use dweuler::ic::{constant_state, kelvin_helmholtz, KHConfig};
use dweuler::kconv::{cesaro_cauchy_table, trace_compatibility, DefectField, EnsembleSnapshot};
use dweuler::solver::{run, step, summarize, Observer};
use dweuler::{io, Field, GasParams, Grid, Scheme, SchemeConfig};
use proptest::prelude::*;

fn kh(n_x: usize) -> Field {
    kelvin_helmholtz(&KHConfig::default(), Grid::new(n_x).unwrap(), &GasParams::default()).unwrap()
}

fn config(scheme: Scheme, t_end: f64) -> SchemeConfig {
    SchemeConfig {
        scheme,
        t_end,
        ..SchemeConfig::default()
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn thread_count_does_not_change_results() {
    let gas = GasParams::default();
    let initial = kh(64);
    for scheme in [Scheme::LaxFriedrichs, Scheme::Vfv] {
        let cfg = config(scheme, 0.05);
        let go = || {
            let mut acc = ConsistencyAccumulator::with_default_basis(*initial.grid(), cfg.t_end).unwrap();
            let rec = run(&initial, &cfg, &gas, &mut [&mut acc as &mut dyn Observer]).unwrap();
            (rec, acc.finalize().unwrap())
        };
        let one = in_pool(1, go);
        let four = in_pool(4, go);
        assert_eq!(one.0, four.0, "{scheme} record differs");
        assert_eq!(one.1, four.1, "{scheme} residuals differ");
    }
}

#[test]
fn kh_ladder_feeds_the_defect_analysis() {
    let gas = GasParams::default();
    let finals: Vec<Field> = [32, 64, 128]
        .into_iter()
        .map(|n| {
            let rec = run(&kh(n), &config(Scheme::Vfv, 0.1), &gas, &mut []).unwrap();
            let rep = stability_report(&rec, None);
            assert!(!rep.entropy_bound_violated);
            assert!(rep.min_density > 0.0);
            rec.final_state
        })
        .collect();
    let ens = EnsembleSnapshot::from_states(&finals, &gas).unwrap();
    assert_eq!(ens.grid().n_x(), 32);
    for n in 2..=3 {
        let d = DefectField::compute(&ens, n, &gas).unwrap();
        let t = trace_compatibility(&ens, &d, &gas).unwrap();
        assert!(t.passes(), "N={n}: {t:?}");
        assert!(t.min_energy_defect >= -1e-12);
    }
    let table = cesaro_cauchy_table(&ens, &gas).unwrap();
    assert_eq!(table.len(), 2);
    assert!(table.iter().all(|r| r.density.is_finite() && r.wasserstein >= 0.0));
}

#[test]
fn constant_mode_residuals_telescope() {
    let gas = GasParams::default();
    let initial = kh(32);
    let cfg = config(Scheme::LaxFriedrichs, 0.2);
    let mut acc = ConsistencyAccumulator::with_default_basis(*initial.grid(), cfg.t_end).unwrap();
    run(&initial, &cfg, &gas, &mut [&mut acc as &mut dyn Observer]).unwrap();
    assert!(acc.is_complete());
    let rows = acc.finalize().unwrap();
    let k0 = rows.iter().find(|r| r.test.is_constant()).unwrap();
    assert!(k0.continuity.abs() <= 1e-12);
    assert!(k0.momentum.iter().all(|m| m.abs() <= 1e-12));
}

#[test]
fn final_state_round_trips_through_disk() {
    let gas = GasParams::default();
    let rec = run(&kh(32), &config(Scheme::Vfv, 0.05), &gas, &mut []).unwrap();
    let dir = tempdir();
    let path = dir.join("state.dwf");
    io::save(&path, &rec.final_state, rec.t_final, gas.gamma()).unwrap();
    let (back, hdr) = io::load(&path).unwrap();
    assert_eq!(back, rec.final_state);
    assert_eq!(hdr.time, rec.t_final);
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dweuler-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_conserve_and_stay_admissible(
        rho in 0.5f64..2.0,
        u in -1.0f64..1.0,
        v in -1.0f64..1.0,
        p in 0.5f64..2.0,
        amp in 0.0f64..0.3,
        vfv in any::<bool>(),
    ) {
        let gas = GasParams::default();
        let grid = Grid::new(16).unwrap();
        let base = constant_state(grid, [rho, u, v, p], &gas).unwrap();
        let mut state = Field::from_fn(grid, |i, j| {
            let c = base.at(i, j);
            let w = 1.0 + amp * ((i * 7 + j * 3) as f64).sin();
            [c[0] * w, c[1], c[2], c[3] * w]
        });
        let cfg = config(if vfv { Scheme::Vfv } else { Scheme::LaxFriedrichs }, 1.0);
        let first = summarize(&state, &gas, 0.0).unwrap();
        for _ in 0..10 {
            let dt = 0.5 * cfg.cfl * grid.h() / dweuler::solver::signal_speed(&state, &gas, &cfg).unwrap();
            state = step(&state, dt, &gas, &cfg).unwrap();
        }
        let last = summarize(&state, &gas, 0.0).unwrap();
        prop_assert!((last.mass - first.mass).abs() <= 1e-13 * first.mass);
        prop_assert!((last.energy - first.energy).abs() <= 1e-13 * first.energy.abs() || vfv);
        prop_assert!(last.energy <= first.energy * (1.0 + 1e-13));
        prop_assert!(last.min_density > 0.0 && last.min_internal_energy > 0.0);
        prop_assert!(last.entropy >= first.entropy - 1e-12 * first.entropy.abs().max(1.0));
    }
}
