//! Perfect-gas thermodynamics in (density, total entropy) variables.
//!
//! The internal energy density is
//!
//! ```text
//! ρe(ρ, S) = c_v ρ^γ exp(S / (c_v ρ)),     p = (γ - 1) ρe = ρ^γ exp(S / (c_v ρ))
//! ```
//!
//! with `c_v = 1 / (γ - 1)` and `S = ρ s` the total entropy. Nothing in this
//! module clamps: callers are responsible for keeping densities positive.

use crate::error::{Error, Result};

/// Adiabatic exponent and the derived specific heat at constant volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    gamma: f64,
    c_v: f64,
}

impl GasParams {
    /// Physically reasonable upper bound for gases.
    pub const GAMMA_MONATOMIC: f64 = 5.0 / 3.0;

    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must be > 1, got {gamma}")));
        }
        Ok(Self {
            gamma,
            c_v: 1.0 / (gamma - 1.0),
        })
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn c_v(&self) -> f64 {
        self.c_v
    }
}

impl Default for GasParams {
    /// Diatomic gas, γ = 1.4.
    fn default() -> Self {
        Self::new(1.4).expect("1.4 is a valid adiabatic exponent")
    }
}

/// A single thermodynamic state (ρ, m, S).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub rho: f64,
    pub m: [f64; 2],
    /// Total entropy ρ·s.
    pub s_total: f64,
}

impl PointState {
    pub fn new(rho: f64, m: [f64; 2], s_total: f64) -> Self {
        Self { rho, m, s_total }
    }

    /// Builds a state from primitive variables (ρ, u, p).
    pub fn from_primitive(rho: f64, u: [f64; 2], p: f64, gas: &GasParams) -> Result<Self> {
        let s_total = entropy_from_primitive(rho, p, gas)?;
        Ok(Self {
            rho,
            m: [rho * u[0], rho * u[1]],
            s_total,
        })
    }

    /// Builds a state from conservative variables (ρ, m, E).
    pub fn from_conservative(rho: f64, m: [f64; 2], energy: f64, gas: &GasParams) -> Result<Self> {
        check_density(rho)?;
        let rho_e = energy - 0.5 * (m[0] * m[0] + m[1] * m[1]) / rho;
        if !(rho_e > 0.0) {
            return Err(Error::Domain(format!(
                "non-positive internal energy {rho_e:e} (rho = {rho:e})"
            )));
        }
        let s_total = entropy_from_primitive(rho, (gas.gamma() - 1.0) * rho_e, gas)?;
        Ok(Self { rho, m, s_total })
    }

    #[inline]
    pub fn velocity(&self) -> [f64; 2] {
        [self.m[0] / self.rho, self.m[1] / self.rho]
    }

    /// Specific entropy s = S/ρ.
    #[inline]
    pub fn specific_entropy(&self) -> f64 {
        self.s_total / self.rho
    }

    pub fn pressure(&self, gas: &GasParams) -> Result<f64> {
        pressure(self, gas)
    }

    /// Internal energy density ρe.
    pub fn internal_energy(&self, gas: &GasParams) -> Result<f64> {
        internal_energy(self.rho, self.s_total, gas)
    }

    pub fn total_energy(&self, gas: &GasParams) -> Result<f64> {
        let kinetic = 0.5 * (self.m[0] * self.m[0] + self.m[1] * self.m[1]) / self.rho;
        Ok(kinetic + self.internal_energy(gas)?)
    }

    pub fn sound_speed(&self, gas: &GasParams) -> Result<f64> {
        Ok((gas.gamma() * self.pressure(gas)? / self.rho).sqrt())
    }

    /// Conservative variables (ρ, m₁, m₂, E).
    pub fn to_conservative(&self, gas: &GasParams) -> Result<[f64; 4]> {
        Ok([self.rho, self.m[0], self.m[1], self.total_energy(gas)?])
    }
}

#[inline]
fn check_density(rho: f64) -> Result<()> {
    if rho > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("non-positive density {rho:e}")))
    }
}

/// p(ρ, S) = ρ^γ exp(S / (c_v ρ)).
pub fn pressure(state: &PointState, gas: &GasParams) -> Result<f64> {
    check_density(state.rho)?;
    Ok(state.rho.powf(gas.gamma()) * (state.s_total / (gas.c_v() * state.rho)).exp())
}

/// Inverse of the pressure law: S = c_v ρ ln(p ρ^{-γ}).
pub fn entropy_from_primitive(rho: f64, p: f64, gas: &GasParams) -> Result<f64> {
    check_density(rho)?;
    if !(p > 0.0) {
        return Err(Error::Domain(format!("non-positive pressure {p:e}")));
    }
    Ok(gas.c_v() * rho * (p.ln() - gas.gamma() * rho.ln()))
}

/// E = |m|²/(2ρ) + p/(γ-1).
pub fn total_energy(rho: f64, m: [f64; 2], p: f64, gas: &GasParams) -> Result<f64> {
    check_density(rho)?;
    Ok(0.5 * (m[0] * m[0] + m[1] * m[1]) / rho + p * gas.c_v())
}

/// ρe(ρ, S) = c_v ρ^γ exp(S / (c_v ρ)).
pub fn internal_energy(rho: f64, s_total: f64, gas: &GasParams) -> Result<f64> {
    check_density(rho)?;
    Ok(gas.c_v() * rho.powf(gas.gamma()) * (s_total / (gas.c_v() * rho)).exp())
}

/// Analytic partial derivatives (∂ρe/∂ρ, ∂ρe/∂S) at fixed S and fixed ρ respectively.
pub fn internal_energy_partials(rho: f64, s_total: f64, gas: &GasParams) -> Result<(f64, f64)> {
    let rho_e = internal_energy(rho, s_total, gas)?;
    let d_rho = rho_e * (gas.gamma() / rho - s_total / (gas.c_v() * rho * rho));
    let d_s = rho_e / (gas.c_v() * rho);
    Ok((d_rho, d_s))
}

/// Relative energy of `state` with respect to the reference `reference`.
///
/// ```text
/// ½ρ|m/ρ - ũ|² + ρe(ρ,S) - ∂_ρ(ρ̃ẽ)(ρ - ρ̃) - ∂_S(ρ̃ẽ)(S - S̃) - ρ̃ẽ
/// ```
///
/// Non-negative by convexity of ρe in (ρ, S); zero iff the states coincide.
pub fn relative_energy(state: &PointState, reference: &PointState, gas: &GasParams) -> Result<f64> {
    check_density(state.rho)?;
    check_density(reference.rho)?;
    let u = state.velocity();
    let u_ref = reference.velocity();
    let du = [u[0] - u_ref[0], u[1] - u_ref[1]];
    let kinetic = 0.5 * state.rho * (du[0] * du[0] + du[1] * du[1]);

    let rho_e = internal_energy(state.rho, state.s_total, gas)?;
    let rho_e_ref = internal_energy(reference.rho, reference.s_total, gas)?;
    let (d_rho, d_s) = internal_energy_partials(reference.rho, reference.s_total, gas)?;
    let internal = rho_e
        - d_rho * (state.rho - reference.rho)
        - d_s * (state.s_total - reference.s_total)
        - rho_e_ref;
    Ok(kinetic + internal)
}
