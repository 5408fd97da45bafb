//! Explicit finite-volume time integration on the periodic unit square.
//!
//! Both schemes share one conservative two-phase kernel: face fluxes are
//! computed for every x- and y-face, then each cell is updated from the
//! difference of its four face fluxes. Time stepping is forward Euler with
//! `dt = cfl · h / signal_speed`, the last step clipped onto `t_end`.
//!
//! * **Lax–Friedrichs** (Rusanov): `F = ½(f_L + f_R) - ½λ(U_R - U_L)` with
//!   `λ = max(|u_n| + c)` over the two neighbours, or the global maximum.
//! * **VFV**: central flux plus artificial viscosity. Every conserved
//!   variable is diffused with face coefficient `max(½λ, h^(α_ρ - 1))`,
//!   which adds `h^(α_ρ) Δ_h ρ` to the mass update on the meshes of
//!   interest, and the momentum receives `h^(α_u) div_h(ρ̄ ∇_h u)` with the
//!   matching work term in the energy flux. This is a documented stand-in
//!   for the viscosity finite-volume method, not a reproduction of it; both
//!   exponents are configurable.
//!
//! A step is rejected, and retried with half the time step, when density or
//! internal energy drops below [`POSITIVITY_FLOOR`], when the minimum
//! specific entropy decreases, or when the total entropy decreases (beyond
//! [`ENTROPY_GUARD_TOL`]). States are never clipped.

use crate::eos::GasParams;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::par;

/// Smallest admissible density and internal energy density.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Allowed decrease of the minimum specific entropy and of the total entropy
/// in one step, relative to `1 + |value|`.
pub const ENTROPY_GUARD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    LaxFriedrichs,
    Vfv,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::LaxFriedrichs => "lf",
            Scheme::Vfv => "vfv",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lf" | "lax-friedrichs" | "laxfriedrichs" => Ok(Scheme::LaxFriedrichs),
            "vfv" => Ok(Scheme::Vfv),
            other => Err(Error::Usage(format!("unknown scheme '{other}' (expected lf or vfv)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub cfl: f64,
    /// Exponent α_u of the velocity viscosity `h^(α_u) div(ρ∇u)`.
    pub vfv_alpha_velocity: f64,
    /// Exponent α_ρ of the density-type viscosity `h^(α_ρ) Δρ`.
    pub vfv_alpha_density: f64,
    pub t_end: f64,
    /// Use the global maximum wave speed in the Lax–Friedrichs flux.
    pub global_lambda: bool,
    /// dt-halving retries before a run is abandoned.
    pub max_retries: u32,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::LaxFriedrichs,
            cfl: 0.3,
            vfv_alpha_velocity: 1.8,
            vfv_alpha_density: 0.8,
            t_end: 2.0,
            global_lambda: false,
            max_retries: 10,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::Usage(format!("cfl must lie in (0, 1), got {}", self.cfl)));
        }
        for (name, a) in [
            ("vfv_alpha_velocity", self.vfv_alpha_velocity),
            ("vfv_alpha_density", self.vfv_alpha_density),
        ] {
            if !(a > 0.0 && a < 2.0) {
                return Err(Error::Usage(format!("{name} must lie in (0, 2), got {a}")));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Usage(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        Ok(())
    }
}

/// Per-cell primitive quantities used by the flux kernel.
#[derive(Debug, Clone, Copy, Default)]
struct Prim {
    u: [f64; 2],
    p: f64,
    c: f64,
}

fn primitives(state: &Field, gas: &GasParams) -> Result<Vec<Prim>> {
    check_state(state)?;
    let g = gas.gamma();
    let n = state.grid().n_x();
    let rows = par::try_map_indexed(n, |j| {
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            let idx = j * n + i;
            let c = state.cell(idx);
            let rho = c[0];
            let u = [c[1] / rho, c[2] / rho];
            let p = (g - 1.0) * (c[3] - 0.5 * (c[1] * u[0] + c[2] * u[1]));
            if !(rho > 0.0 && p > 0.0) {
                return Err(Error::InvalidState(format!(
                    "cell ({i}, {j}): density {rho:e}, pressure {p:e}"
                )));
            }
            row.push(Prim {
                u,
                p,
                c: (g * p / rho).sqrt(),
            });
        }
        Ok(row)
    })?;
    Ok(rows.into_iter().flatten().collect())
}

fn check_state(state: &Field) -> Result<()> {
    if state.components() != 4 {
        return Err(Error::Usage(format!(
            "expected a 4-component conservative state, got {} components",
            state.components()
        )));
    }
    Ok(())
}

/// Maximum over cells and axes of |u_axis| + c.
pub fn max_wave_speed(state: &Field, gas: &GasParams) -> Result<f64> {
    let prim = primitives(state, gas)?;
    Ok(prim
        .iter()
        .map(|q| q.u[0].abs().max(q.u[1].abs()) + q.c)
        .fold(0.0, f64::max))
}

/// Face coefficient of the VFV density-type viscosity, `h^(α_ρ - 1)`.
pub fn vfv_density_coefficient(grid: &Grid, cfg: &SchemeConfig) -> f64 {
    grid.h().powf(cfg.vfv_alpha_density - 1.0)
}

/// Face coefficient of the VFV velocity viscosity, `h^(α_u - 1)`.
pub fn vfv_velocity_coefficient(grid: &Grid, cfg: &SchemeConfig) -> f64 {
    grid.h().powf(cfg.vfv_alpha_velocity - 1.0)
}

/// Speed entering the CFL time step. For VFV the artificial viscosity acts
/// as an additional signal speed `2 (h^(α_ρ-1) + h^(α_u-1))`.
pub fn signal_speed(state: &Field, gas: &GasParams, cfg: &SchemeConfig) -> Result<f64> {
    let waves = max_wave_speed(state, gas)?;
    Ok(match cfg.scheme {
        Scheme::LaxFriedrichs => waves,
        Scheme::Vfv => {
            let g = state.grid();
            waves.max(2.0 * (vfv_density_coefficient(g, cfg) + vfv_velocity_coefficient(g, cfg)))
        }
    })
}

#[derive(Debug, Clone, Copy)]
enum Dissipation {
    Rusanov { global: Option<f64> },
    Vfv { nu_rho: f64, nu_u: f64 },
}

#[inline]
fn physical_flux(u: &[f64], q: &Prim, dir: usize) -> [f64; 4] {
    let un = q.u[dir];
    let mut f = [u[dir + 1], u[1] * un, u[2] * un, (u[3] + q.p) * un];
    f[dir + 1] += q.p;
    f
}

#[inline]
fn face_flux(ul: &[f64], ql: &Prim, ur: &[f64], qr: &Prim, dir: usize, diss: Dissipation) -> [f64; 4] {
    let fl = physical_flux(ul, ql, dir);
    let fr = physical_flux(ur, qr, dir);
    let local = || (ql.u[dir].abs() + ql.c).max(qr.u[dir].abs() + qr.c);
    let d = match diss {
        Dissipation::Rusanov { global } => 0.5 * global.unwrap_or_else(local),
        Dissipation::Vfv { nu_rho, .. } => (0.5 * local()).max(nu_rho),
    };
    let mut f = [0.0; 4];
    for k in 0..4 {
        f[k] = 0.5 * (fl[k] + fr[k]) - d * (ur[k] - ul[k]);
    }
    if let Dissipation::Vfv { nu_u, .. } = diss {
        let rho_bar = 0.5 * (ul[0] + ur[0]);
        let du = [qr.u[0] - ql.u[0], qr.u[1] - ql.u[1]];
        let u_bar = [0.5 * (ql.u[0] + qr.u[0]), 0.5 * (ql.u[1] + qr.u[1])];
        let visc = nu_u * rho_bar;
        f[1] -= visc * du[0];
        f[2] -= visc * du[1];
        f[3] -= visc * (du[0] * u_bar[0] + du[1] * u_bar[1]);
    }
    f
}

fn conservative_step(state: &Field, dt: f64, gas: &GasParams, diss: Dissipation) -> Result<Field> {
    if !(dt >= 0.0) {
        return Err(Error::Usage(format!("time step must be non-negative, got {dt}")));
    }
    let prim = primitives(state, gas)?;
    let grid = *state.grid();
    let n = grid.n_x();
    let lambda = dt / grid.h();

    // Phase 1: fx[j n + i] is the flux through the face between (i, j) and
    // (i + 1, j); fy[j n + i] the one between (i, j) and (i, j + 1).
    let mut fx = vec![[0.0; 4]; n * n];
    let mut fy = vec![[0.0; 4]; n * n];
    par::for_each_row(&mut fx, n, |j, row| {
        for (i, out) in row.iter_mut().enumerate() {
            let a = j * n + i;
            let b = j * n + (i + 1) % n;
            *out = face_flux(state.cell(a), &prim[a], state.cell(b), &prim[b], 0, diss);
        }
    });
    par::for_each_row(&mut fy, n, |j, row| {
        for (i, out) in row.iter_mut().enumerate() {
            let a = j * n + i;
            let b = ((j + 1) % n) * n + i;
            *out = face_flux(state.cell(a), &prim[a], state.cell(b), &prim[b], 1, diss);
        }
    });

    // Phase 2: cell update.
    let mut next = state.clone();
    par::for_each_row(next.data_mut(), 4 * n, |j, row| {
        let jm = (j + n - 1) % n;
        for i in 0..n {
            let im = (i + n - 1) % n;
            let (e, w) = (&fx[j * n + i], &fx[j * n + im]);
            let (no, so) = (&fy[j * n + i], &fy[jm * n + i]);
            let cell = &mut row[4 * i..4 * i + 4];
            for k in 0..4 {
                cell[k] -= lambda * ((e[k] - w[k]) + (no[k] - so[k]));
            }
        }
    });
    check_positivity(&next)?;
    Ok(next)
}

fn check_positivity(state: &Field) -> Result<()> {
    let n = state.grid().n_x();
    for (idx, c) in state.data().chunks_exact(4).enumerate() {
        let rho = c[0];
        let rho_e = c[3] - 0.5 * (c[1] * c[1] + c[2] * c[2]) / rho;
        if !(rho > POSITIVITY_FLOOR && rho_e > POSITIVITY_FLOOR) {
            return Err(Error::StepRejected(format!(
                "cell ({}, {}): density {rho:e}, internal energy {rho_e:e}",
                idx % n,
                idx / n
            )));
        }
    }
    Ok(())
}

/// One forward-Euler step of the local Lax–Friedrichs scheme.
pub fn step_lax_friedrichs(state: &Field, dt: f64, gas: &GasParams) -> Result<Field> {
    conservative_step(state, dt, gas, Dissipation::Rusanov { global: None })
}

/// Lax–Friedrichs step with the global maximum wave speed in every face.
pub fn step_lax_friedrichs_global(state: &Field, dt: f64, gas: &GasParams) -> Result<Field> {
    let lambda = max_wave_speed(state, gas)?;
    conservative_step(state, dt, gas, Dissipation::Rusanov { global: Some(lambda) })
}

/// One forward-Euler step of the viscous finite-volume scheme.
pub fn step_vfv(state: &Field, dt: f64, gas: &GasParams, cfg: &SchemeConfig) -> Result<Field> {
    let g = state.grid();
    let diss = Dissipation::Vfv {
        nu_rho: vfv_density_coefficient(g, cfg),
        nu_u: vfv_velocity_coefficient(g, cfg),
    };
    conservative_step(state, dt, gas, diss)
}

/// Dispatches on `cfg.scheme`.
pub fn step(state: &Field, dt: f64, gas: &GasParams, cfg: &SchemeConfig) -> Result<Field> {
    match (cfg.scheme, cfg.global_lambda) {
        (Scheme::LaxFriedrichs, false) => step_lax_friedrichs(state, dt, gas),
        (Scheme::LaxFriedrichs, true) => step_lax_friedrichs_global(state, dt, gas),
        (Scheme::Vfv, _) => step_vfv(state, dt, gas, cfg),
    }
}

/// Integral norms monitored for the a-priori stability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Norms {
    /// ‖ρ‖ in L^γ.
    pub density: f64,
    /// ‖S‖ in L^γ.
    pub entropy: f64,
    /// ‖m‖ in L^(2γ/(γ+1)).
    pub momentum: f64,
}

/// Totals and extrema of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub mass: f64,
    pub momentum: [f64; 2],
    pub energy: f64,
    /// ∫ S dx.
    pub entropy: f64,
    pub min_density: f64,
    pub max_density: f64,
    /// Minimum of the internal energy density ρe.
    pub min_internal_energy: f64,
    pub min_specific_entropy: f64,
    pub max_total_energy: f64,
    pub norms: Norms,
}

#[derive(Clone, Copy)]
struct RowSummary {
    sums: [f64; 5],
    powers: [f64; 3],
    min_rho: f64,
    max_rho: f64,
    min_rho_e: f64,
    min_s: f64,
    max_e: f64,
}

/// Computes totals, extrema and norms with a fixed reduction order.
pub fn summarize(state: &Field, gas: &GasParams, t: f64) -> Result<Sample> {
    check_state(state)?;
    let g = gas.gamma();
    let c_v = gas.c_v();
    let q = 2.0 * g / (g + 1.0);
    let n = state.grid().n_x();
    let rows = par::try_map_indexed(n, |j| {
        let mut r = RowSummary {
            sums: [0.0; 5],
            powers: [0.0; 3],
            min_rho: f64::INFINITY,
            max_rho: f64::NEG_INFINITY,
            min_rho_e: f64::INFINITY,
            min_s: f64::INFINITY,
            max_e: f64::NEG_INFINITY,
        };
        for i in 0..n {
            let c = state.cell(j * n + i);
            let rho = c[0];
            let m2 = c[1] * c[1] + c[2] * c[2];
            let rho_e = c[3] - 0.5 * m2 / rho;
            if !(rho > 0.0 && rho_e > 0.0) {
                return Err(Error::InvalidState(format!(
                    "cell ({i}, {j}): density {rho:e}, internal energy {rho_e:e}"
                )));
            }
            let ln_rho = rho.ln();
            let s = c_v * (((g - 1.0) * rho_e).ln() - g * ln_rho);
            let s_total = rho * s;
            r.sums[0] += rho;
            r.sums[1] += c[1];
            r.sums[2] += c[2];
            r.sums[3] += c[3];
            r.sums[4] += s_total;
            r.powers[0] += (g * ln_rho).exp();
            r.powers[1] += s_total.abs().powf(g);
            r.powers[2] += m2.powf(0.5 * q);
            r.min_rho = r.min_rho.min(rho);
            r.max_rho = r.max_rho.max(rho);
            r.min_rho_e = r.min_rho_e.min(rho_e);
            r.min_s = r.min_s.min(s);
            r.max_e = r.max_e.max(c[3]);
        }
        Ok(r)
    })?;
    let mut acc = rows[0];
    for r in &rows[1..] {
        for k in 0..5 {
            acc.sums[k] += r.sums[k];
        }
        for k in 0..3 {
            acc.powers[k] += r.powers[k];
        }
        acc.min_rho = acc.min_rho.min(r.min_rho);
        acc.max_rho = acc.max_rho.max(r.max_rho);
        acc.min_rho_e = acc.min_rho_e.min(r.min_rho_e);
        acc.min_s = acc.min_s.min(r.min_s);
        acc.max_e = acc.max_e.max(r.max_e);
    }
    let area = state.grid().cell_area();
    Ok(Sample {
        t,
        mass: acc.sums[0] * area,
        momentum: [acc.sums[1] * area, acc.sums[2] * area],
        energy: acc.sums[3] * area,
        entropy: acc.sums[4] * area,
        min_density: acc.min_rho,
        max_density: acc.max_rho,
        min_internal_energy: acc.min_rho_e,
        min_specific_entropy: acc.min_s,
        max_total_energy: acc.max_e,
        norms: Norms {
            density: (acc.powers[0] * area).powf(1.0 / g),
            entropy: (acc.powers[1] * area).powf(1.0 / g),
            momentum: (acc.powers[2] * area).powf(1.0 / q),
        },
    })
}

/// Outcome of one accepted time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub index: usize,
    pub dt: f64,
    /// Speed used for the CFL time step.
    pub wave_speed: f64,
    /// Number of dt halvings before the step was accepted.
    pub retries: u32,
    /// State summary after the step.
    pub after: Sample,
}

/// Position of an accepted step, handed to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub index: usize,
    pub t_prev: f64,
    pub dt: f64,
}

impl StepInfo {
    pub fn t_next(&self) -> f64 {
        self.t_prev + self.dt
    }
}

/// Hook invoked by [`run`] on every accepted step.
pub trait Observer {
    fn start(&mut self, _initial: &Field, _gas: &GasParams) -> Result<()> {
        Ok(())
    }

    fn observe(&mut self, prev: &Field, next: &Field, info: &StepInfo, gas: &GasParams) -> Result<()>;

    fn finish(&mut self, _last: &Field, _t: f64, _gas: &GasParams) -> Result<()> {
        Ok(())
    }
}

/// Time series and final state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scheme: SchemeConfig,
    pub gas: GasParams,
    pub initial: Sample,
    pub steps: Vec<StepReport>,
    pub final_state: Field,
    pub t_final: f64,
}

impl RunRecord {
    /// Initial sample followed by the post-step samples.
    pub fn samples(&self) -> impl Iterator<Item = &Sample> + '_ {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.after))
    }
}

fn guard_entropy(prev: &Sample, next: &Sample) -> std::result::Result<(), String> {
    let tol = |v: f64| ENTROPY_GUARD_TOL * (1.0 + v.abs());
    if next.min_specific_entropy < prev.min_specific_entropy - tol(prev.min_specific_entropy) {
        return Err(format!(
            "minimum specific entropy decreased from {:.17e} to {:.17e}",
            prev.min_specific_entropy, next.min_specific_entropy
        ));
    }
    if next.entropy < prev.entropy - tol(prev.entropy) {
        return Err(format!(
            "total entropy decreased from {:.17e} to {:.17e}",
            prev.entropy, next.entropy
        ));
    }
    Ok(())
}

/// Advances `initial` to `cfg.t_end`.
pub fn run(
    initial: &Field,
    cfg: &SchemeConfig,
    gas: &GasParams,
    observers: &mut [&mut dyn Observer],
) -> Result<RunRecord> {
    cfg.validate()?;
    let h = initial.grid().h();
    let initial_sample = summarize(initial, gas, 0.0)?;
    for obs in observers.iter_mut() {
        obs.start(initial, gas)?;
    }

    let mut state = initial.clone();
    let mut current = initial_sample;
    let mut t = 0.0;
    let mut steps = Vec::new();
    let fail = |t: f64, reason: String, state: &Field| Error::RunFailed {
        t,
        reason,
        last_state: Box::new(state.clone()),
    };

    while t < cfg.t_end {
        let speed = signal_speed(&state, gas, cfg)?;
        let dt_cfl = cfg.cfl * h / speed;
        let remaining = cfg.t_end - t;
        let (mut dt, mut lands) = if remaining <= dt_cfl {
            (remaining, true)
        } else {
            (dt_cfl, false)
        };

        let mut retries = 0;
        let (next, sample) = loop {
            let t_next = if lands { cfg.t_end } else { t + dt };
            let outcome = step(&state, dt, gas, cfg).and_then(|next| {
                let sample = summarize(&next, gas, t_next)?;
                guard_entropy(&current, &sample).map_err(Error::StepRejected)?;
                Ok((next, sample))
            });
            match outcome {
                Ok(accepted) => break accepted,
                Err(Error::StepRejected(reason)) => {
                    if retries >= cfg.max_retries {
                        return Err(fail(t, reason, &state));
                    }
                    retries += 1;
                    dt *= 0.5;
                    lands = false;
                }
                Err(other) => return Err(other),
            }
        };

        let info = StepInfo {
            index: steps.len(),
            t_prev: t,
            dt,
        };
        for obs in observers.iter_mut() {
            obs.observe(&state, &next, &info, gas)?;
        }
        t = sample.t;
        steps.push(StepReport {
            index: info.index,
            dt,
            wave_speed: speed,
            retries,
            after: sample,
        });
        current = sample;
        state = next;
    }

    for obs in observers.iter_mut() {
        obs.finish(&state, t, gas)?;
    }
    Ok(RunRecord {
        scheme: cfg.clone(),
        gas: *gas,
        initial: initial_sample,
        steps,
        final_state: state,
        t_final: t,
    })
}
