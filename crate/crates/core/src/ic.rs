//! Initial-data generators.

use std::f64::consts::PI;

use crate::eos::{GasParams, PointState};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Counter-based 64-bit generator used for the interface coefficients.
///
/// Draw number `k` (zero based) of stream `seed` is computed as
///
/// ```text
/// z = seed + (k + 1) * 0x9E3779B97F4A7C15          (wrapping u64 arithmetic)
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// z =  z ^ (z >> 31)
/// ```
///
/// and mapped to a double in [0, 1) as `(z >> 11) * 2^-53`. Any
/// implementation following these lines reproduces the same coefficients.
#[derive(Debug, Clone, Copy)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn bits(&self, counter: u64) -> u64 {
        let mut z = self
            .seed
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform double in [0, 1).
    pub fn uniform(&self, counter: u64) -> f64 {
        (self.bits(counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Primitive tuple (ρ, u₁, u₂, p).
pub type Primitive = [f64; 4];

/// Kelvin–Helmholtz configuration with two randomly perturbed interfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct KHConfig {
    /// Unperturbed heights of the lower and upper interface.
    pub j1: f64,
    pub j2: f64,
    pub eps: f64,
    pub modes: usize,
    pub seed: u64,
    pub inner_state: Primitive,
    pub outer_state: Primitive,
}

impl Default for KHConfig {
    fn default() -> Self {
        Self {
            j1: 0.25,
            j2: 0.75,
            eps: 0.01,
            modes: 10,
            seed: 0,
            inner_state: [2.0, -0.5, 0.0, 2.5],
            outer_state: [1.0, 0.5, 0.0, 2.5],
        }
    }
}

/// Fourier coefficients of the two interface perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceCoeffs {
    /// Amplitudes `a[j][m]`, each row normalised to sum to one.
    pub a: [Vec<f64>; 2],
    /// Phases `b[j][m]` in [-π, π].
    pub b: [Vec<f64>; 2],
}

impl InterfaceCoeffs {
    /// Perturbation profile Y_j(x₁) = Σ_m a_j^m cos(b_j^m + 2mπx₁).
    pub fn profile(&self, interface: usize, x1: f64) -> f64 {
        self.a[interface]
            .iter()
            .zip(&self.b[interface])
            .enumerate()
            .map(|(m, (a, b))| a * (b + 2.0 * (m + 1) as f64 * PI * x1).cos())
            .sum()
    }
}

/// Draws the interface coefficients for `modes` Fourier modes.
///
/// Counters `0..M` give the raw amplitudes of interface 1, `M..2M` those of
/// interface 2, then `2M..3M` and `3M..4M` the phases.
pub fn sample_interface_coeffs(seed: u64, modes: usize) -> Result<InterfaceCoeffs> {
    if modes == 0 {
        return Err(Error::Usage("at least one interface mode is required".into()));
    }
    let rng = CounterRng::new(seed);
    let m = modes as u64;
    let amplitudes = |j: u64| -> Vec<f64> {
        let raw: Vec<f64> = (0..m).map(|k| rng.uniform(j * m + k)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter().map(|r| r / total).collect()
        } else {
            vec![1.0 / modes as f64; modes]
        }
    };
    let phases = |j: u64| -> Vec<f64> {
        (0..m)
            .map(|k| -PI + 2.0 * PI * rng.uniform((2 + j) * m + k))
            .collect()
    };
    Ok(InterfaceCoeffs {
        a: [amplitudes(0), amplitudes(1)],
        b: [phases(0), phases(1)],
    })
}

impl KHConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || self.modes == 0 {
            return Err(Error::Usage("KH config needs eps >= 0 and at least one mode".into()));
        }
        if !(self.j1 - self.eps > 0.0 && self.j1 + self.eps < self.j2 - self.eps && self.j2 + self.eps < 1.0) {
            return Err(Error::Usage(format!(
                "interfaces J1={} J2={} with eps={} overlap or leave the unit cell",
                self.j1, self.j2, self.eps
            )));
        }
        for st in [self.inner_state, self.outer_state] {
            if !(st[0] > 0.0 && st[3] > 0.0) {
                return Err(Error::Usage(format!("KH state {st:?} must have positive density and pressure")));
            }
        }
        Ok(())
    }

    /// Interface heights I₁(x₁), I₂(x₁).
    pub fn interfaces(&self, coeffs: &InterfaceCoeffs, x1: f64) -> [f64; 2] {
        [
            self.j1 + self.eps * coeffs.profile(0, x1),
            self.j2 + self.eps * coeffs.profile(1, x1),
        ]
    }
}

fn conservative(prim: Primitive, gas: &GasParams) -> Result<[f64; 4]> {
    PointState::from_primitive(prim[0], [prim[1], prim[2]], prim[3], gas)?.to_conservative(gas)
}

/// Kelvin–Helmholtz data: `inner_state` where I₁(x₁) < x₂ < I₂(x₁) at the
/// cell centre, `outer_state` elsewhere.
pub fn kelvin_helmholtz(cfg: &KHConfig, grid: Grid, gas: &GasParams) -> Result<Field> {
    cfg.validate()?;
    let coeffs = sample_interface_coeffs(cfg.seed, cfg.modes)?;
    let inner = conservative(cfg.inner_state, gas)?;
    let outer = conservative(cfg.outer_state, gas)?;
    let n = grid.n_x();
    let heights: Vec<[f64; 2]> = (0..n)
        .map(|i| cfg.interfaces(&coeffs, grid.center(i, 0)[0]))
        .collect();
    Ok(Field::from_fn(grid, |i, j| {
        let x2 = grid.center(i, j)[1];
        let [lo, hi] = heights[i];
        if lo < x2 && x2 < hi {
            inner
        } else {
            outer
        }
    }))
}

/// Uniform state from a primitive tuple.
pub fn constant_state(grid: Grid, prim: Primitive, gas: &GasParams) -> Result<Field> {
    Ok(Field::constant(grid, &conservative(prim, gas)?))
}

/// Compactly supported isentropic vortex advected by a uniform background flow.
///
/// With `r = |x - x_c| / R` (periodic minimum-image distance) and `β` the
/// strength, for `r < 1`:
///
/// ```text
/// δu = β (1 - r²)⁴ (-(x₂ - x_c₂), x₁ - x_c₁) / R
/// T  = 1 - (γ - 1)/γ · β² (1 - r²)⁹ / 18
/// ρ  = T^{1/(γ-1)},   p = ρ T
/// ```
///
/// and the background state ρ = p = 1, u = `velocity` for `r ≥ 1`. The
/// pressure balances the centripetal force exactly, p/ρ^γ ≡ 1 (so S ≡ 0), and
/// the exact solution at time t is the initial profile translated by
/// `velocity · t`. The perturbation is C³ and vanishes identically outside
/// the disk, so any `radius ≤ 0.5` is periodic-safe.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexConfig {
    pub center: [f64; 2],
    pub radius: f64,
    pub strength: f64,
    pub velocity: [f64; 2],
}

impl Default for VortexConfig {
    fn default() -> Self {
        Self {
            center: [0.5, 0.5],
            radius: 0.4,
            strength: 2.0,
            velocity: [1.0, 0.5],
        }
    }
}

impl VortexConfig {
    pub fn validate(&self, gas: &GasParams) -> Result<()> {
        if !(self.radius > 0.0 && self.radius <= 0.5) {
            return Err(Error::Usage(format!("vortex radius {} must lie in (0, 0.5]", self.radius)));
        }
        if self.min_temperature(gas) <= 0.0 {
            return Err(Error::Usage(format!(
                "vortex strength {} drives the core temperature negative",
                self.strength
            )));
        }
        Ok(())
    }

    /// Temperature p/ρ at the vortex core, the minimum over the domain.
    pub fn min_temperature(&self, gas: &GasParams) -> f64 {
        let g = gas.gamma();
        1.0 - (g - 1.0) / g * self.strength * self.strength / 18.0
    }

    /// Primitive state (ρ, u₁, u₂, p) at point `x` and time `t`.
    pub fn primitive_at(&self, x: [f64; 2], t: f64, gas: &GasParams) -> Primitive {
        let g = gas.gamma();
        let c = [
            (self.center[0] + self.velocity[0] * t).rem_euclid(1.0),
            (self.center[1] + self.velocity[1] * t).rem_euclid(1.0),
        ];
        let wrap = |d: f64| d - d.round();
        let d = [wrap(x[0] - c[0]), wrap(x[1] - c[1])];
        let r2 = (d[0] * d[0] + d[1] * d[1]) / (self.radius * self.radius);
        if r2 >= 1.0 {
            return [1.0, self.velocity[0], self.velocity[1], 1.0];
        }
        let bump = 1.0 - r2;
        let b4 = bump.powi(4);
        let swirl = self.strength * b4 / self.radius;
        let temp = 1.0 - (g - 1.0) / g * self.strength * self.strength * b4 * b4 * bump / 18.0;
        let rho = temp.powf(1.0 / (g - 1.0));
        [
            rho,
            self.velocity[0] - swirl * d[1],
            self.velocity[1] + swirl * d[0],
            rho * temp,
        ]
    }

    /// Cell-centre samples of the exact solution at time `t`.
    pub fn field_at(&self, grid: Grid, t: f64, gas: &GasParams) -> Result<Field> {
        self.validate(gas)?;
        let n = grid.n_x();
        let mut out = Field::zeros(grid, 4);
        for j in 0..n {
            for i in 0..n {
                let prim = self.primitive_at(grid.center(i, j), t, gas);
                out.cell_mut(j * n + i).copy_from_slice(&conservative(prim, gas)?);
            }
        }
        Ok(out)
    }
}

/// Vortex initial data with the default geometry and the given strength.
pub fn isentropic_vortex(grid: Grid, gas: &GasParams, strength: f64) -> Result<Field> {
    VortexConfig {
        strength,
        ..VortexConfig::default()
    }
    .field_at(grid, 0.0, gas)
}
