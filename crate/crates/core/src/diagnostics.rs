//! Verification of the consistent-approximation conditions on computed runs.
//!
//! Weak-form residuals are measured against a fixed basis of test functions
//! `φ(t, x) = ψ(t) X(x)` with `ψ(t) = (1 - t/T)²` and `X` a tensor product of
//! 1-periodic cosines/sines. For a run on `[0, T]` the finalized residuals are
//!
//! ```text
//! continuity  ∫∫ ρ ∂_tφ + m·∇φ                         + ∫ ρ₀ φ(0)
//! momentum_i  ∫∫ m_i ∂_tφ + (m_i m/ρ)·∇φ + p ∂_iφ       + ∫ m₀_i φ(0)
//! entropy    -∫∫ S ∂_tφ⁺ + (S m/ρ)·∇φ⁺                 - ∫ S₀ φ⁺(0)
//! ```
//!
//! where `φ⁺ = ψ (1 + X)` is non-negative (`φ⁺ = ψ` for the constant mode).
//! The entropy entry is the signed entropy production, which is ≥ 0 for an
//! admissible solution. Space integrals use cell-centre values of `X` and its
//! analytic gradient; time integrals use the midpoint rule on the averaged
//! state `(prev + next) / 2` of each step.

use std::f64::consts::PI;

use crate::eos::GasParams;
use crate::error::{Error, Result};
use crate::grid::{l1_distance, Field, Grid};
use crate::kconv::entropy_variables;
use crate::par;
use crate::solver::{Observer, RunRecord, StepInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Cos,
    Sin,
}

impl Flavor {
    fn tag(self) -> char {
        match self {
            Flavor::Cos => 'c',
            Flavor::Sin => 's',
        }
    }

    /// Value and derivative of `f(2πk x)`.
    #[inline]
    fn eval(self, k: u32, x: f64) -> (f64, f64) {
        let w = 2.0 * PI * k as f64;
        let (s, c) = (w * x).sin_cos();
        match self {
            Flavor::Cos => (c, -w * s),
            Flavor::Sin => (s, w * c),
        }
    }
}

/// Spatial factor of a test function: `f₁(2πk₁x₁) f₂(2πk₂x₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestFunction {
    pub k: [u32; 2],
    pub flavor: [Flavor; 2],
}

impl TestFunction {
    pub fn new(k: [u32; 2], flavor: [Flavor; 2]) -> Result<Self> {
        for axis in 0..2 {
            if k[axis] == 0 && flavor[axis] == Flavor::Sin {
                return Err(Error::Usage("sin flavor needs a non-zero wave number".into()));
            }
        }
        Ok(Self { k, flavor })
    }

    pub fn constant() -> Self {
        Self {
            k: [0, 0],
            flavor: [Flavor::Cos, Flavor::Cos],
        }
    }

    pub fn is_constant(&self) -> bool {
        self.k == [0, 0]
    }

    /// Short label such as `c1s2`.
    pub fn label(&self) -> String {
        format!(
            "{}{}{}{}",
            self.flavor[0].tag(),
            self.k[0],
            self.flavor[1].tag(),
            self.k[1]
        )
    }

    /// `(X, ∂₁X, ∂₂X)` at `x`.
    pub fn spatial(&self, x: [f64; 2]) -> [f64; 3] {
        let (a, da) = self.flavor[0].eval(self.k[0], x[0]);
        let (b, db) = self.flavor[1].eval(self.k[1], x[1]);
        [a * b, da * b, a * db]
    }

    /// Constant added to `X` to obtain the non-negative entropy test function.
    pub fn entropy_shift(&self) -> f64 {
        if self.is_constant() {
            0.0
        } else {
            1.0
        }
    }

    /// Temporal ramp ψ(t) = (1 - t/T)².
    pub fn ramp(t: f64, t_end: f64) -> f64 {
        let r = 1.0 - t / t_end;
        r * r
    }

    /// ψ'(t) = -2 (1 - t/T) / T.
    pub fn ramp_derivative(t: f64, t_end: f64) -> f64 {
        -2.0 * (1.0 - t / t_end) / t_end
    }
}

/// Tensor trigonometric modes with |k| ≤ 3 (Euclidean), including k = 0.
pub fn default_basis() -> Vec<TestFunction> {
    let mut out = Vec::new();
    for k1 in 0..=3u32 {
        for k2 in 0..=3u32 {
            if k1 * k1 + k2 * k2 > 9 {
                continue;
            }
            let f1: &[Flavor] = if k1 == 0 { &[Flavor::Cos] } else { &[Flavor::Cos, Flavor::Sin] };
            let f2: &[Flavor] = if k2 == 0 { &[Flavor::Cos] } else { &[Flavor::Cos, Flavor::Sin] };
            for &a in f1 {
                for &b in f2 {
                    out.push(TestFunction {
                        k: [k1, k2],
                        flavor: [a, b],
                    });
                }
            }
        }
    }
    out
}

/// Number of space integrals tracked per test function.
const MOMENTS: usize = 8;

/// Per-cell quantities entering the weak forms.
#[derive(Clone, Copy, Default)]
struct CellTerms {
    rho: f64,
    m: [f64; 2],
    s: f64,
    /// Momentum flux rows (m_i m/ρ + p e_i).
    flux: [[f64; 2]; 2],
    /// Entropy flux S u.
    s_flux: [f64; 2],
}

fn cell_terms(c: &[f64], gas: &GasParams) -> Result<CellTerms> {
    let g = gas.gamma();
    let rho = c[0];
    let u = [c[1] / rho, c[2] / rho];
    let p = (g - 1.0) * (c[3] - 0.5 * (c[1] * u[0] + c[2] * u[1]));
    if !(rho > 0.0 && p > 0.0) {
        return Err(Error::InvalidState(format!(
            "density {rho:e}, pressure {p:e} in weak-form quadrature"
        )));
    }
    let s = gas.c_v() * rho * (p.ln() - g * rho.ln());
    Ok(CellTerms {
        rho,
        m: [c[1], c[2]],
        s,
        flux: [
            [c[1] * u[0] + p, c[1] * u[1]],
            [c[2] * u[0], c[2] * u[1] + p],
        ],
        s_flux: [s * u[0], s * u[1]],
    })
}

/// Weak-form residuals of one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub test: TestFunction,
    pub continuity: f64,
    pub momentum: [f64; 2],
    /// Signed entropy production; ≥ 0 up to quadrature error.
    pub entropy_production: f64,
}

impl ResidualRow {
    /// Magnitudes in the order continuity, momentum₁, momentum₂, entropy.
    pub fn magnitudes(&self) -> [f64; 4] {
        [
            self.continuity.abs(),
            self.momentum[0].abs(),
            self.momentum[1].abs(),
            self.entropy_production.abs(),
        ]
    }
}

/// Values and derivatives of one 1D factor `f(2πk x)` at the cell centres.
#[derive(Debug, Clone)]
struct AxisFactor {
    key: (u32, Flavor),
    val: Vec<f64>,
    der: Vec<f64>,
}

fn axis_factors(keys: impl Iterator<Item = (u32, Flavor)>, grid: &Grid) -> Vec<AxisFactor> {
    let mut out: Vec<AxisFactor> = Vec::new();
    for key in keys {
        if out.iter().any(|f| f.key == key) {
            continue;
        }
        let (val, der) = (0..grid.n_x())
            .map(|i| key.1.eval(key.0, grid.center(i, 0)[0]))
            .unzip();
        out.push(AxisFactor { key, val, der });
    }
    out
}

/// Online space-time quadrature of the continuity, momentum and entropy
/// weak forms over a basis of test functions.
///
/// The test functions are tensor products, so each space integral is
/// evaluated as a sum over rows of row sums against the x₁ factor.
#[derive(Debug, Clone)]
pub struct ConsistencyAccumulator {
    grid: Grid,
    t_end: f64,
    basis: Vec<TestFunction>,
    /// Distinct x₁ factors; entry 0 is the constant.
    x1: Vec<AxisFactor>,
    x2: Vec<AxisFactor>,
    /// Per test function: indices into `x1` and `x2`.
    index: Vec<(usize, usize)>,
    /// Per test function: continuity, momentum₁, momentum₂, entropy sums.
    sums: Vec<[f64; 4]>,
    initial: Option<Vec<[f64; 4]>>,
    last_t: f64,
    steps: usize,
}

/// Row sums against `f(x₁)`: ρ, m₁, m₂, S, then the ∂₂ partners
/// m₂, m₁u₂, m₂u₂+p, Su₂.
const ROW_VAL: usize = 8;
/// Row sums against `f'(x₁)`: m₁, m₁u₁+p, m₂u₁, Su₁.
const ROW_DER: usize = 4;

impl ConsistencyAccumulator {
    pub fn new(grid: Grid, t_end: f64, basis: Vec<TestFunction>) -> Result<Self> {
        if !(t_end > 0.0) {
            return Err(Error::Usage(format!(
                "weak-form residuals need a positive horizon, got T = {t_end}"
            )));
        }
        let constant = (0, Flavor::Cos);
        let x1 = axis_factors(
            std::iter::once(constant).chain(basis.iter().map(|b| (b.k[0], b.flavor[0]))),
            &grid,
        );
        let x2 = axis_factors(basis.iter().map(|b| (b.k[1], b.flavor[1])), &grid);
        let find = |axis: &[AxisFactor], key| axis.iter().position(|f| f.key == key).unwrap();
        let index = basis
            .iter()
            .map(|b| (find(&x1, (b.k[0], b.flavor[0])), find(&x2, (b.k[1], b.flavor[1]))))
            .collect();
        Ok(Self {
            grid,
            t_end,
            sums: vec![[0.0; 4]; basis.len()],
            basis,
            x1,
            x2,
            index,
            initial: None,
            last_t: 0.0,
            steps: 0,
        })
    }

    pub fn with_default_basis(grid: Grid, t_end: f64) -> Result<Self> {
        Self::new(grid, t_end, default_basis())
    }

    pub fn basis(&self) -> &[TestFunction] {
        &self.basis
    }

    /// Space integrals against every test function, in the order
    /// `∫ρX, ∫m·∇X, ∫m₁X, ∫(m₁u+pe₁)·∇X, ∫m₂X, ∫(m₂u+pe₂)·∇X, ∫S(X+shift), ∫Su·∇X`.
    pub fn space_integrals(&self, state: &Field, gas: &GasParams) -> Result<Vec<[f64; MOMENTS]>> {
        if state.grid() != &self.grid || state.components() != 4 {
            return Err(Error::Usage("state does not match the accumulator grid".into()));
        }
        let n = self.grid.n_x();
        let nf = self.x1.len();
        // rows[j][a] = (value sums, derivative sums) of row j against factor a.
        let rows = par::try_map_indexed(n, |j| {
            let mut v = vec![[0.0; ROW_VAL]; nf];
            let mut d = vec![[0.0; ROW_DER]; nf];
            for i in 0..n {
                let ct = cell_terms(state.cell(j * n + i), gas)?;
                let qv = [
                    ct.rho,
                    ct.m[0],
                    ct.m[1],
                    ct.s,
                    ct.m[1],
                    ct.flux[0][1],
                    ct.flux[1][1],
                    ct.s_flux[1],
                ];
                let qd = [ct.m[0], ct.flux[0][0], ct.flux[1][0], ct.s_flux[0]];
                for (a, f) in self.x1.iter().enumerate() {
                    let (fv, fd) = (f.val[i], f.der[i]);
                    for (acc, q) in v[a].iter_mut().zip(qv) {
                        *acc += fv * q;
                    }
                    for (acc, q) in d[a].iter_mut().zip(qd) {
                        *acc += fd * q;
                    }
                }
            }
            Ok::<_, Error>((v, d))
        })?;
        let area = self.grid.cell_area();
        let total_entropy: f64 = rows.iter().map(|(v, _)| v[0][3]).sum();
        Ok(par::map_indexed(self.basis.len(), |b| {
            let (a, c) = self.index[b];
            let g = &self.x2[c];
            let mut acc = [0.0; MOMENTS];
            for (j, (v, d)) in rows.iter().enumerate() {
                let (gv, gd) = (g.val[j], g.der[j]);
                let (v, d) = (&v[a], &d[a]);
                acc[0] += gv * v[0];
                acc[1] += gv * d[0] + gd * v[4];
                acc[2] += gv * v[1];
                acc[3] += gv * d[1] + gd * v[5];
                acc[4] += gv * v[2];
                acc[5] += gv * d[2] + gd * v[6];
                acc[6] += gv * v[3];
                acc[7] += gv * d[3] + gd * v[7];
            }
            acc[6] += self.basis[b].entropy_shift() * total_entropy;
            acc.map(|x| x * area)
        }))
    }

    /// Records the initial-data boundary terms.
    pub fn start(&mut self, initial: &Field, gas: &GasParams) -> Result<()> {
        let ints = self.space_integrals(initial, gas)?;
        self.initial = Some(ints.iter().map(|m| [m[0], m[2], m[4], m[6]]).collect());
        self.last_t = 0.0;
        self.steps = 0;
        self.sums.iter_mut().for_each(|s| *s = [0.0; 4]);
        Ok(())
    }

    /// Adds the midpoint-rule contribution of one step `[t_prev, t_prev + dt]`.
    pub fn accumulate(
        &mut self,
        prev: &Field,
        next: &Field,
        t_prev: f64,
        dt: f64,
        gas: &GasParams,
    ) -> Result<()> {
        if self.initial.is_none() {
            return Err(Error::Usage("accumulate called before start".into()));
        }
        let slack = 1e-12 * self.t_end;
        if (t_prev - self.last_t).abs() > slack || !(dt >= 0.0) {
            return Err(Error::Usage(format!(
                "out-of-order weak-form step: expected t = {}, got t = {t_prev}",
                self.last_t
            )));
        }
        if t_prev + dt > self.t_end + slack {
            return Err(Error::Usage(format!(
                "step ends at {} beyond the horizon {}",
                t_prev + dt,
                self.t_end
            )));
        }
        let mut mid = prev.clone();
        for (m, n) in mid.data_mut().iter_mut().zip(next.data()) {
            *m = 0.5 * (*m + n);
        }
        let ints = self.space_integrals(&mid, gas)?;
        let t_mid = t_prev + 0.5 * dt;
        let psi = TestFunction::ramp(t_mid, self.t_end);
        let dpsi = TestFunction::ramp_derivative(t_mid, self.t_end);
        for (s, m) in self.sums.iter_mut().zip(&ints) {
            s[0] += dt * (dpsi * m[0] + psi * m[1]);
            s[1] += dt * (dpsi * m[2] + psi * m[3]);
            s[2] += dt * (dpsi * m[4] + psi * m[5]);
            s[3] += dt * (dpsi * m[6] + psi * m[7]);
        }
        self.last_t = t_prev + dt;
        self.steps += 1;
        Ok(())
    }

    /// Final residuals, one row per test function.
    pub fn finalize(&self) -> Result<Vec<ResidualRow>> {
        let initial = self
            .initial
            .as_ref()
            .ok_or_else(|| Error::Usage("finalize called before start".into()))?;
        let rows: Vec<ResidualRow> = self
            .basis
            .iter()
            .zip(&self.sums)
            .zip(initial)
            .map(|((tf, s), i0)| ResidualRow {
                test: *tf,
                continuity: s[0] + i0[0],
                momentum: [s[1] + i0[1], s[2] + i0[2]],
                entropy_production: -(s[3] + i0[3]),
            })
            .collect();
        if rows
            .iter()
            .any(|r| !r.magnitudes().iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidState("non-finite weak-form residual".into()));
        }
        Ok(rows)
    }

    /// True once the accumulated steps cover the whole horizon.
    pub fn is_complete(&self) -> bool {
        (self.last_t - self.t_end).abs() <= 1e-12 * self.t_end
    }
}

impl Observer for ConsistencyAccumulator {
    fn start(&mut self, initial: &Field, gas: &GasParams) -> Result<()> {
        ConsistencyAccumulator::start(self, initial, gas)
    }

    fn observe(&mut self, prev: &Field, next: &Field, info: &StepInfo, gas: &GasParams) -> Result<()> {
        self.accumulate(prev, next, info.t_prev, info.dt, gas)
    }
}

/// Largest increase of the total energy over the run, `max_t (E(t) - E(0))⁺`.
pub fn energy_residual(record: &RunRecord) -> f64 {
    let e0 = record.initial.energy;
    record
        .samples()
        .map(|s| (s.energy - e0).max(0.0))
        .fold(0.0, f64::max)
}

/// Suprema of the a-priori bounds over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub sup_density_norm: f64,
    pub sup_entropy_norm: f64,
    pub sup_momentum_norm: f64,
    pub min_specific_entropy: f64,
    pub min_density: f64,
    pub max_density: f64,
    pub max_total_energy: f64,
    pub s_lower: f64,
    /// Set when `S ≥ ρ s_lower` fails somewhere (beyond 1e-10).
    pub entropy_bound_violated: bool,
}

/// Summarises the stability bounds of a run. `s_lower` defaults to the
/// minimum initial specific entropy.
pub fn stability_report(record: &RunRecord, s_lower: Option<f64>) -> StabilityReport {
    let s_lower = s_lower.unwrap_or(record.initial.min_specific_entropy);
    let mut rep = StabilityReport {
        sup_density_norm: 0.0,
        sup_entropy_norm: 0.0,
        sup_momentum_norm: 0.0,
        min_specific_entropy: f64::INFINITY,
        min_density: f64::INFINITY,
        max_density: f64::NEG_INFINITY,
        max_total_energy: f64::NEG_INFINITY,
        s_lower,
        entropy_bound_violated: false,
    };
    for s in record.samples() {
        rep.sup_density_norm = rep.sup_density_norm.max(s.norms.density);
        rep.sup_entropy_norm = rep.sup_entropy_norm.max(s.norms.entropy);
        rep.sup_momentum_norm = rep.sup_momentum_norm.max(s.norms.momentum);
        rep.min_specific_entropy = rep.min_specific_entropy.min(s.min_specific_entropy);
        rep.min_density = rep.min_density.min(s.min_density);
        rep.max_density = rep.max_density.max(s.max_density);
        rep.max_total_energy = rep.max_total_energy.max(s.max_total_energy);
    }
    rep.entropy_bound_violated =
        rep.min_specific_entropy < s_lower - 1e-10 * (1.0 + s_lower.abs());
    rep
}

/// L¹ distances between consecutive resolutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow {
    /// Resolution of the coarser member of the pair.
    pub n_x_coarse: usize,
    pub n_x_fine: usize,
    pub density: f64,
    /// Summed over both momentum components.
    pub momentum: f64,
    pub entropy: f64,
    pub energy: f64,
}

/// Row `n` compares the final states at resolutions `n` and `n + 1`, both
/// restricted to the coarser grid. Entropy is evaluated per fine cell before
/// restriction.
pub fn refinement_errors(snapshots: &[Field], gas: &GasParams) -> Result<Vec<RefinementRow>> {
    if snapshots.len() < 2 {
        return Err(Error::Usage(format!(
            "refinement errors need at least two resolutions, got {}",
            snapshots.len()
        )));
    }
    let with_entropy = snapshots
        .iter()
        .map(|s| entropy_variables(s, gas))
        .collect::<Result<Vec<_>>>()?;
    snapshots
        .windows(2)
        .zip(with_entropy.windows(2))
        .map(|(cons, ent)| {
            let (a, b) = (&cons[0], &cons[1]);
            let (ea, eb) = (&ent[0], &ent[1]);
            Ok(RefinementRow {
                n_x_coarse: a.grid().n_x().min(b.grid().n_x()),
                n_x_fine: a.grid().n_x().max(b.grid().n_x()),
                density: l1_distance(&a.select(&[0]), &b.select(&[0]))?,
                momentum: l1_distance(&a.select(&[1, 2]), &b.select(&[1, 2]))?,
                entropy: l1_distance(&ea.select(&[3]), &eb.select(&[3]))?,
                energy: l1_distance(&a.select(&[3]), &b.select(&[3]))?,
            })
        })
        .collect()
}
