//! The four subcommands. Each returns an in-memory summary in addition to
//! the artifacts it writes, so the pipeline can be driven from tests.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use dweuler::diagnostics::{
    refinement_errors, stability_report, ConsistencyAccumulator, RefinementRow, ResidualRow,
    StabilityReport,
};
use dweuler::eos::{relative_energy, PointState};
use dweuler::ic::{constant_state, kelvin_helmholtz, VortexConfig};
use dweuler::io;
use dweuler::kconv::{
    cesaro, cesaro_cauchy_table, entropy_flux_mean, trace_compatibility, CesaroCauchyRow,
    DefectField, EnsembleSnapshot, TraceReport,
};
use dweuler::solver::{run, Observer, StepInfo};
use dweuler::{Field, GasParams, Grid, RunRecord};

use crate::config::{ExperimentConfig, Problem};
use crate::output::{float, io_err, read_manifest, snapshot_name, write_csv, Manifest, Provenance};
use crate::CliError;

/// Result of one resolution of a ladder.
#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub level: u32,
    pub record: RunRecord,
    pub stability: StabilityReport,
    pub residuals: Option<Vec<ResidualRow>>,
    /// ∫₀ᵀ ‖ρ − ρ_exact‖_L¹ dt for the vortex problem.
    pub spacetime_l1_density: Option<f64>,
    pub wall_time: f64,
}

impl LevelOutcome {
    pub fn n_x(&self) -> usize {
        self.record.final_state.grid().n_x()
    }
}

pub fn initial_data(cfg: &ExperimentConfig, grid: Grid, gas: &GasParams) -> Result<Field, CliError> {
    Ok(match cfg.problem {
        Problem::KelvinHelmholtz => kelvin_helmholtz(&cfg.kh, grid, gas)?,
        Problem::Vortex => cfg.vortex.field_at(grid, 0.0, gas)?,
        Problem::Constant => constant_state(grid, cfg.constant, gas)?,
    })
}

/// Dumps every `every`-th accepted step.
struct SnapshotWriter<'a> {
    dir: &'a Path,
    level: u32,
    every: usize,
}

impl Observer for SnapshotWriter<'_> {
    fn observe(&mut self, _prev: &Field, next: &Field, info: &StepInfo, gas: &GasParams) -> dweuler::Result<()> {
        let step = info.index + 1;
        if step.is_multiple_of(self.every) {
            let path = self.dir.join(format!("state_n{}_step{step:06}.dwf", self.level));
            io::save(&path, next, info.t_next(), gas.gamma())?;
        }
        Ok(())
    }
}

/// Space-time L¹ density error against the translated exact vortex,
/// trapezoidal in time.
struct VortexError<'a> {
    vortex: &'a VortexConfig,
    last: f64,
    total: f64,
}

impl VortexError<'_> {
    fn error(&self, state: &Field, t: f64, gas: &GasParams) -> dweuler::Result<f64> {
        let exact = self.vortex.field_at(*state.grid(), t, gas)?;
        dweuler::grid::l1_distance(&state.select(&[0]), &exact.select(&[0]))
    }
}

impl Observer for VortexError<'_> {
    fn start(&mut self, initial: &Field, gas: &GasParams) -> dweuler::Result<()> {
        self.last = self.error(initial, 0.0, gas)?;
        Ok(())
    }

    fn observe(&mut self, _prev: &Field, next: &Field, info: &StepInfo, gas: &GasParams) -> dweuler::Result<()> {
        let e = self.error(next, info.t_next(), gas)?;
        self.total += 0.5 * info.dt * (self.last + e);
        self.last = e;
        Ok(())
    }
}

const STABILITY_HEADER: [&str; 18] = [
    "step",
    "t",
    "dt",
    "retries",
    "wave_speed",
    "mass",
    "momentum_1",
    "momentum_2",
    "energy",
    "entropy",
    "min_density",
    "max_density",
    "min_internal_energy",
    "min_specific_entropy",
    "max_total_energy",
    "density_norm",
    "entropy_norm",
    "momentum_norm",
];

fn write_stability(path: &Path, prov: &Provenance, record: &RunRecord) -> Result<(), CliError> {
    let meta = std::iter::once((0, 0.0, 0, f64::NAN))
        .chain(record.steps.iter().map(|s| (s.index + 1, s.dt, s.retries, s.wave_speed)));
    let rows = meta.zip(record.samples()).map(|((step, dt, retries, speed), s)| {
        vec![
            step.to_string(),
            float(s.t),
            float(dt),
            retries.to_string(),
            if speed.is_nan() { String::new() } else { float(speed) },
            float(s.mass),
            float(s.momentum[0]),
            float(s.momentum[1]),
            float(s.energy),
            float(s.entropy),
            float(s.min_density),
            float(s.max_density),
            float(s.min_internal_energy),
            float(s.min_specific_entropy),
            float(s.max_total_energy),
            float(s.norms.density),
            float(s.norms.entropy),
            float(s.norms.momentum),
        ]
    });
    write_csv(path, prov, &STABILITY_HEADER, rows)
}

fn write_residuals(path: &Path, prov: &Provenance, rows: &[ResidualRow]) -> Result<(), CliError> {
    write_csv(
        path,
        prov,
        &["mode", "k1", "k2", "continuity", "momentum_1", "momentum_2", "entropy_production"],
        rows.iter().map(|r| {
            vec![
                r.test.label(),
                r.test.k[0].to_string(),
                r.test.k[1].to_string(),
                float(r.continuity),
                float(r.momentum[0]),
                float(r.momentum[1]),
                float(r.entropy_production),
            ]
        }),
    )
}

/// Runs one resolution and writes its snapshot, stability and consistency
/// tables.
pub fn run_level(cfg: &ExperimentConfig, level: u32, consistency: bool) -> Result<LevelOutcome, CliError> {
    let gas = cfg.gas()?;
    let grid = Grid::from_level(level)?;
    let initial = initial_data(cfg, grid, &gas)?;
    let dir = cfg.out.as_path();
    let started = Instant::now();

    let mut acc = if consistency && cfg.scheme.t_end > 0.0 {
        Some(ConsistencyAccumulator::with_default_basis(grid, cfg.scheme.t_end)?)
    } else {
        None
    };
    let mut snaps = SnapshotWriter {
        dir,
        level,
        every: cfg.snapshot_every,
    };
    let mut vortex_error = VortexError {
        vortex: &cfg.vortex,
        last: 0.0,
        total: 0.0,
    };
    let mut observers: Vec<&mut dyn Observer> = Vec::new();
    if let Some(a) = acc.as_mut() {
        observers.push(a);
    }
    if cfg.problem == Problem::Vortex {
        observers.push(&mut vortex_error);
    }
    if cfg.snapshot_every > 0 {
        observers.push(&mut snaps);
    }

    let record = match run(&initial, &cfg.scheme, &gas, &mut observers) {
        Ok(r) => r,
        Err(dweuler::Error::RunFailed { t, reason, last_state }) => {
            let dump = dir.join(format!("failed_n{level}.dwf"));
            io::save(&dump, &last_state, t, gas.gamma())?;
            return Err(CliError::Numerical {
                level,
                message: format!("step rejected at t = {t}: {reason}"),
                dump,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let wall_time = started.elapsed().as_secs_f64();

    let prov = Provenance::of(cfg);
    io::save(&dir.join(snapshot_name(level)), &record.final_state, record.t_final, gas.gamma())?;
    write_stability(&dir.join(format!("stability_n{level}.csv")), &prov, &record)?;
    let residuals = acc.map(|a| a.finalize()).transpose()?;
    write_residuals(
        &dir.join(format!("consistency_n{level}.csv")),
        &prov,
        residuals.as_deref().unwrap_or(&[]),
    )?;
    let spacetime_l1_density = (cfg.problem == Problem::Vortex).then_some(vortex_error.total);
    Ok(LevelOutcome {
        level,
        stability: stability_report(&record, None),
        record,
        residuals,
        spacetime_l1_density,
        wall_time,
    })
}

/// Runs all levels, at most `cfg.workers` at a time, and writes the manifest.
pub fn run_ladder(cfg: &ExperimentConfig, command: &str, consistency: bool) -> Result<Vec<LevelOutcome>, CliError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let started = Instant::now();
    let levels: Vec<u32> = cfg.levels().collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<LevelOutcome, CliError>>>> =
        Mutex::new((0..levels.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(levels.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&level) = levels.get(k) else { break };
                let out = run_level(cfg, level, consistency);
                if let Ok(o) = &out {
                    eprintln!(
                        "n={level} ({0}x{0}): {1} steps to t={2} in {3:.1} s",
                        o.n_x(),
                        o.record.steps.len(),
                        o.record.t_final,
                        o.wall_time
                    );
                }
                results.lock().unwrap()[k] = Some(out);
            });
        }
    });
    let outcomes = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every level is claimed by a worker"))
        .collect::<Result<Vec<_>, _>>()?;

    let mut manifest = Manifest::new(command, cfg);
    manifest.push("tool.wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    manifest.push("run.count", outcomes.len());
    for o in &outcomes {
        let p = format!("run.n{}", o.level);
        manifest.push(format!("{p}.n_x"), o.n_x());
        manifest.push(format!("{p}.snapshot"), snapshot_name(o.level));
        manifest.push(format!("{p}.steps"), o.record.steps.len());
        manifest.push(format!("{p}.t_final"), float(o.record.t_final));
        manifest.push(
            format!("{p}.retries"),
            o.record.steps.iter().map(|s| s.retries as usize).sum::<usize>(),
        );
        manifest.push(format!("{p}.min_density"), float(o.stability.min_density));
        manifest.push(format!("{p}.min_specific_entropy"), float(o.stability.min_specific_entropy));
        manifest.push(format!("{p}.entropy_bound_violated"), o.stability.entropy_bound_violated);
        manifest.push(
            format!("{p}.energy_residual"),
            float(dweuler::diagnostics::energy_residual(&o.record)),
        );
        manifest.push(format!("{p}.wall_time_s"), format!("{:.3}", o.wall_time));
    }
    manifest.write(&cfg.out)?;
    Ok(outcomes)
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<LevelOutcome>, CliError> {
    run_ladder(cfg, "run", cfg.consistency)
}

/// One residual of the ladder table.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderResidual {
    pub mode: String,
    pub form: &'static str,
    pub level: u32,
    pub residual: f64,
    /// residual(n) / residual(n + 1); `None` on the finest level.
    pub ratio: Option<f64>,
}

pub const FORMS: [&str; 4] = ["continuity", "momentum_1", "momentum_2", "entropy"];

pub fn cmd_consistency(cfg: &ExperimentConfig) -> Result<Vec<LadderResidual>, CliError> {
    if !(cfg.scheme.t_end > 0.0) {
        return Err(CliError::Config("consistency residuals need t_end > 0".into()));
    }
    let outcomes = run_ladder(cfg, "consistency", true)?;
    let tables: Vec<&Vec<ResidualRow>> = outcomes
        .iter()
        .map(|o| o.residuals.as_ref().expect("consistency enabled"))
        .collect();
    let mut out = Vec::new();
    for (b, row0) in tables[0].iter().enumerate() {
        for (f, form) in FORMS.iter().enumerate() {
            for (k, o) in outcomes.iter().enumerate() {
                let r = tables[k][b].magnitudes()[f];
                let ratio = tables.get(k + 1).map(|t| r / t[b].magnitudes()[f]);
                out.push(LadderResidual {
                    mode: row0.test.label(),
                    form,
                    level: o.level,
                    residual: r,
                    ratio,
                });
            }
        }
    }
    write_csv(
        &cfg.out.join("consistency_ladder.csv"),
        &Provenance::of(cfg),
        &["mode", "form", "n", "n_x", "residual", "ratio_to_next"],
        out.iter().map(|r| {
            vec![
                r.mode.clone(),
                r.form.to_string(),
                r.level.to_string(),
                (32usize << r.level).to_string(),
                float(r.residual),
                r.ratio.map(float).unwrap_or_default(),
            ]
        }),
    )?;
    Ok(out)
}

/// Error of one level against the translated exact vortex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub level: u32,
    pub n_x: usize,
    pub l1_density: f64,
    pub l1_momentum: f64,
    pub l1_energy: f64,
    /// ∫₀ᵀ ‖ρ − ρ_exact‖_L¹ dt.
    pub l1_density_spacetime: f64,
    pub relative_energy: f64,
    /// log2 of the error ratio to the previous level.
    pub order_density: Option<f64>,
    pub order_relative_energy: Option<f64>,
}

/// Vortex ladder against the exact translated solution.
pub fn cmd_convergence(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>, CliError> {
    let mut cfg = cfg.clone();
    cfg.problem = Problem::Vortex;
    let gas = cfg.gas()?;
    let outcomes = run_ladder(&cfg, "convergence", false)?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for o in &outcomes {
        let num = &o.record.final_state;
        let grid = *num.grid();
        let exact = cfg.vortex.field_at(grid, o.record.t_final, &gas)?;
        let l1 = |c: &[usize]| dweuler::grid::l1_distance(&num.select(c), &exact.select(c));
        let mut rel = 0.0;
        for cell in 0..grid.cells() {
            let point = |c: &[f64]| PointState::from_conservative(c[0], [c[1], c[2]], c[3], &gas);
            rel += relative_energy(&point(num.cell(cell))?, &point(exact.cell(cell))?, &gas)?;
        }
        let mut row = ConvergenceRow {
            level: o.level,
            n_x: grid.n_x(),
            l1_density: l1(&[0])?,
            l1_momentum: l1(&[1, 2])?,
            l1_energy: l1(&[3])?,
            l1_density_spacetime: o.spacetime_l1_density.expect("vortex run tracks its error"),
            relative_energy: rel * grid.cell_area(),
            order_density: None,
            order_relative_energy: None,
        };
        if let Some(prev) = rows.last() {
            row.order_density = Some((prev.l1_density / row.l1_density).log2());
            row.order_relative_energy = Some((prev.relative_energy / row.relative_energy).log2());
        }
        rows.push(row);
    }
    let opt = |v: Option<f64>| v.map(float).unwrap_or_default();
    write_csv(
        &cfg.out.join("convergence.csv"),
        &Provenance::of(&cfg),
        &[
            "n",
            "n_x",
            "l1_density",
            "l1_momentum",
            "l1_energy",
            "l1_density_spacetime",
            "relative_energy",
            "order_density",
            "order_relative_energy",
        ],
        rows.iter().map(|r| {
            vec![
                r.level.to_string(),
                r.n_x.to_string(),
                float(r.l1_density),
                float(r.l1_momentum),
                float(r.l1_energy),
                float(r.l1_density_spacetime),
                float(r.relative_energy),
                opt(r.order_density),
                opt(r.order_relative_energy),
            ]
        }),
    )?;
    Ok(rows)
}

/// Defects of one Cesàro level together with their trace check.
#[derive(Debug, Clone)]
pub struct DefectLevel {
    /// Finest ladder level included in the average.
    pub level: u32,
    pub defects: DefectField,
    pub trace: TraceReport,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub levels: Vec<u32>,
    pub ensemble: EnsembleSnapshot,
    pub refinement: Vec<RefinementRow>,
    pub cesaro_cauchy: Option<Vec<CesaroCauchyRow>>,
    pub defects: Vec<DefectLevel>,
}

impl Analysis {
    pub fn trace_passes(&self) -> bool {
        self.defects.iter().all(|d| d.trace.passes())
    }
}

/// Loads a finished run directory and writes refinement, Cesàro-Cauchy,
/// defect and trace-compatibility artifacts next to it.
pub fn cmd_analyze(dir: &Path) -> Result<Analysis, CliError> {
    let cfg = read_manifest(dir)?;
    let gas = cfg.gas()?;
    let levels: Vec<u32> = cfg.levels().collect();
    if levels.len() < 2 {
        return Err(CliError::Input(format!(
            "analysis needs at least two resolutions, manifest lists {}",
            levels.len()
        )));
    }
    let paths: Vec<PathBuf> = levels.iter().map(|&n| dir.join(snapshot_name(n))).collect();
    let missing: Vec<String> = paths
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Input(format!("missing snapshot files: {}", missing.join(", "))));
    }
    let mut states = Vec::new();
    let mut time = 0.0;
    for p in &paths {
        let (field, hdr) = io::load(p)?;
        if hdr.gamma != cfg.gamma || field.components() != 4 {
            return Err(CliError::Input(format!(
                "{}: expected a 4-component state with gamma {}, found {} components, gamma {}",
                p.display(),
                cfg.gamma,
                field.components(),
                hdr.gamma
            )));
        }
        time = hdr.time;
        states.push(field);
    }

    let prov = Provenance::of(&cfg);
    let refinement = refinement_errors(&states, &gas)?;
    write_csv(
        &dir.join("refinement_errors.csv"),
        &prov,
        &["n_coarse", "n_fine", "n_x_coarse", "n_x_fine", "density", "momentum", "entropy", "energy"],
        refinement.iter().zip(&levels).map(|(r, &n)| {
            vec![
                n.to_string(),
                (n + 1).to_string(),
                r.n_x_coarse.to_string(),
                r.n_x_fine.to_string(),
                float(r.density),
                float(r.momentum),
                float(r.entropy),
                float(r.energy),
            ]
        }),
    )?;

    let ensemble = EnsembleSnapshot::from_states(&states, &gas)?;
    let cesaro_cauchy = if ensemble.len() >= 3 {
        let table = cesaro_cauchy_table(&ensemble, &gas)?;
        write_csv(
            &dir.join("cesaro_cauchy.csv"),
            &prov,
            &[
                "n_from",
                "n_to",
                "members_from",
                "density",
                "momentum",
                "entropy",
                "energy",
                "reynolds",
                "energy_defect",
                "wasserstein_1",
            ],
            table.iter().map(|r| {
                let from = cfg.n_lo + r.n as u32 - 1;
                vec![
                    from.to_string(),
                    (from + 1).to_string(),
                    r.n.to_string(),
                    float(r.density),
                    float(r.momentum),
                    float(r.entropy),
                    float(r.energy),
                    float(r.reynolds),
                    float(r.energy_defect),
                    float(r.wasserstein),
                ]
            }),
        )?;
        Some(table)
    } else {
        None
    };

    let mut defects = Vec::new();
    for (k, &level) in levels.iter().enumerate() {
        let members = k + 1;
        io::save(
            &dir.join(format!("cesaro_N{level}.dwf")),
            &cesaro(&ensemble, members)?,
            time,
            gas.gamma(),
        )?;
        if members < 2 {
            continue;
        }
        let d = DefectField::compute(&ensemble, members, &gas)?;
        io::save(&dir.join(format!("defects_N{level}.dwf")), &d.to_field6(), time, gas.gamma())?;
        io::save(
            &dir.join(format!("entropy_flux_N{level}.dwf")),
            &entropy_flux_mean(&ensemble, members)?,
            time,
            gas.gamma(),
        )?;
        let trace = trace_compatibility(&ensemble, &d, &gas)?;
        defects.push(DefectLevel {
            level,
            defects: d,
            trace,
        });
    }
    write_csv(
        &dir.join("trace_compatibility.csv"),
        &prov,
        &[
            "N",
            "members",
            "cells",
            "lower_factor",
            "upper_factor",
            "lower_violations",
            "upper_violations",
            "max_trace_residual",
            "max_split_residual",
            "min_kinetic",
            "min_internal",
            "min_energy_defect",
            "min_eigenvalue",
            "passes",
        ],
        defects.iter().map(|d| {
            let t = &d.trace;
            vec![
                d.level.to_string(),
                d.defects.n.to_string(),
                t.cells.to_string(),
                float(t.lower_factor),
                float(t.upper_factor),
                t.lower_violations.to_string(),
                t.upper_violations.to_string(),
                float(t.max_trace_residual),
                float(t.max_split_residual),
                float(t.min_kinetic),
                float(t.min_internal),
                float(t.min_energy_defect),
                float(t.min_eigenvalue),
                t.passes().to_string(),
            ]
        }),
    )?;
    Ok(Analysis {
        levels,
        ensemble,
        refinement,
        cesaro_cauchy,
        defects,
    })
}
