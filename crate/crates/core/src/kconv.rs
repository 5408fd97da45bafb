//! K-convergence post-processing across a ladder of resolutions.
//!
//! All members of an [`EnsembleSnapshot`] live on one common grid and are
//! stored in entropy variables `(ρ, m₁, m₂, S)`. From the first `N` members we
//! form Cesàro averages, the Reynolds stress defect
//!
//! ```text
//! 𝕽_N = (1/N) Σ (m_n⊗m_n/ρ_n + p(ρ_n,S_n) 𝕀) - (m̃⊗m̃/ρ̃ + p(ρ̃,S̃) 𝕀)
//! ```
//!
//! the energy defect `𝕰_N = (1/N) Σ E_n - E(ρ̃, m̃, S̃)` and per-cell
//! empirical measures with `N` equally weighted atoms.

use crate::assignment;
use crate::eos::{internal_energy, GasParams};
use crate::error::{Error, Result};
use crate::grid::{common_grid, kind, l1_distance, restrict, Field, Grid};
use crate::par;

/// Space dimension.
const DIM: f64 = 2.0;

/// Largest atom count per measure accepted by [`wasserstein`].
pub const MAX_ATOMS: usize = 8;
/// Largest replicated problem size accepted by [`wasserstein`].
pub const MAX_REPLICATED: usize = 64;

/// Builds a field on `grid` from a per-cell function of the cell index.
fn cellwise<const K: usize, F>(grid: Grid, f: F) -> Result<Field>
where
    F: Fn(usize) -> Result<[f64; K]> + Sync + Send,
{
    let n = grid.n_x();
    let rows = par::try_map_indexed(n, |j| {
        let mut row = Vec::with_capacity(n * K);
        for i in 0..n {
            row.extend_from_slice(&f(j * n + i)?);
        }
        Ok::<_, Error>(row)
    })?;
    Field::from_vec(grid, K, rows.concat())
}

/// Converts a conservative state `(ρ, m₁, m₂, E)` to `(ρ, m₁, m₂, S)` per cell.
pub fn entropy_variables(state: &Field, gas: &GasParams) -> Result<Field> {
    if state.components() != kind::STATE {
        return Err(Error::Usage(format!(
            "expected a 4-component state, got {}",
            state.components()
        )));
    }
    let g = gas.gamma();
    cellwise(*state.grid(), |idx| {
        let c = state.cell(idx);
        let rho = c[0];
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("non-positive density {rho:e} in cell {idx}")));
        }
        let p = (g - 1.0) * (c[3] - 0.5 * (c[1] * c[1] + c[2] * c[2]) / rho);
        if !(p > 0.0) {
            return Err(Error::Domain(format!("non-positive pressure {p:e} in cell {idx}")));
        }
        Ok([c[0], c[1], c[2], gas.c_v() * rho * (p.ln() - g * rho.ln())])
    })
}

/// Mean of the first `n` atoms, summed in order. Both the Cesàro averages
/// and the empirical-measure moments go through here.
fn mean_of<'a>(atoms: impl Iterator<Item = &'a [f64]>, n: usize) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for a in atoms.take(n) {
        for (s, v) in acc.iter_mut().zip(a) {
            *s += v;
        }
    }
    acc.map(|s| s / n as f64)
}

#[inline]
fn kinetic(a: &[f64]) -> f64 {
    0.5 * (a[1] * a[1] + a[2] * a[2]) / a[0]
}

/// Final-time states of a resolution ladder on their common (coarsest) grid.
#[derive(Debug, Clone)]
pub struct EnsembleSnapshot {
    grid: Grid,
    members: Vec<Field>,
    source_resolutions: Vec<usize>,
}

impl EnsembleSnapshot {
    /// Converts each conservative state to entropy variables on its own grid,
    /// then restricts to the coarsest grid. Order is preserved.
    pub fn from_states(states: &[Field], gas: &GasParams) -> Result<Self> {
        let grid = common_grid(states)?;
        let members = states
            .iter()
            .map(|s| restrict(&entropy_variables(s, gas)?, &grid))
            .collect::<Result<Vec<_>>>()?;
        let source_resolutions = states.iter().map(|s| s.grid().n_x()).collect();
        Self::build(grid, members, source_resolutions)
    }

    /// Members already in entropy variables on a single grid.
    pub fn from_entropy_variables(members: Vec<Field>) -> Result<Self> {
        let grid = *members
            .first()
            .ok_or_else(|| Error::Usage("empty ensemble".into()))?
            .grid();
        let res = vec![grid.n_x(); members.len()];
        Self::build(grid, members, res)
    }

    fn build(grid: Grid, members: Vec<Field>, source_resolutions: Vec<usize>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Usage("empty ensemble".into()));
        }
        for (k, m) in members.iter().enumerate() {
            if m.grid() != &grid || m.components() != 4 {
                return Err(Error::Usage(format!(
                    "member {k} is not a 4-component field on the {}² grid",
                    grid.n_x()
                )));
            }
            if let Some(idx) = (0..grid.cells()).find(|&c| !(m.cell(c)[0] > 0.0)) {
                return Err(Error::Domain(format!(
                    "member {k}: non-positive density {:e} in cell {idx}",
                    m.cell(idx)[0]
                )));
            }
        }
        Ok(Self {
            grid,
            members,
            source_resolutions,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn member(&self, k: usize) -> &Field {
        &self.members[k]
    }

    /// n_x of each member before restriction.
    pub fn source_resolutions(&self) -> &[usize] {
        &self.source_resolutions
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.len() {
            return Err(Error::Usage(format!(
                "Cesàro index N = {n} outside 1..={}",
                self.len()
            )));
        }
        Ok(())
    }

    fn atoms(&self, cell: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.members.iter().map(move |m| m.cell(cell))
    }
}

/// Cesàro average `(ρ̃, m̃₁, m̃₂, S̃)` of the first `n` members.
pub fn cesaro(ens: &EnsembleSnapshot, n: usize) -> Result<Field> {
    ens.check_n(n)?;
    cellwise(ens.grid, |c| Ok(mean_of(ens.atoms(c), n)))
}

/// Cesàro average `Ẽ_N` of the member total energies.
pub fn cesaro_energy(ens: &EnsembleSnapshot, n: usize, gas: &GasParams) -> Result<Field> {
    ens.check_n(n)?;
    cellwise(ens.grid, |c| {
        let mut sum = 0.0;
        for a in ens.atoms(c).take(n) {
            sum += kinetic(a) + internal_energy(a[0], a[3], gas)?;
        }
        Ok([sum / n as f64])
    })
}

/// Reynolds stress defect `(R11, R12, R22)` per cell.
pub fn reynolds_defect(ens: &EnsembleSnapshot, n: usize, gas: &GasParams) -> Result<Field> {
    ens.check_n(n)?;
    let g1 = gas.gamma() - 1.0;
    let flux = |a: &[f64]| -> Result<[f64; 3]> {
        let p = g1 * internal_energy(a[0], a[3], gas)?;
        Ok([
            a[1] * a[1] / a[0] + p,
            a[1] * a[2] / a[0],
            a[2] * a[2] / a[0] + p,
        ])
    };
    cellwise(ens.grid, |c| {
        let mut avg = [0.0; 3];
        for a in ens.atoms(c).take(n) {
            let f = flux(a)?;
            for (s, v) in avg.iter_mut().zip(f) {
                *s += v;
            }
        }
        let at_mean = flux(&mean_of(ens.atoms(c), n))?;
        Ok([0, 1, 2].map(|k| avg[k] / n as f64 - at_mean[k]))
    })
}

/// Energy defect `𝕰_N = Ẽ_N - E(ρ̃, m̃, S̃)` per cell.
pub fn energy_defect(ens: &EnsembleSnapshot, n: usize, gas: &GasParams) -> Result<Field> {
    let e_avg = cesaro_energy(ens, n, gas)?;
    cellwise(ens.grid, |c| {
        let mean = mean_of(ens.atoms(c), n);
        let e_mean = kinetic(&mean) + internal_energy(mean[0], mean[3], gas)?;
        Ok([e_avg.cell(c)[0] - e_mean])
    })
}

/// Kinetic and internal parts `(K, I)` of the energy defect, each a Jensen gap:
/// `K = avg |m|²/2ρ - |m̃|²/2ρ̃`, `I = avg ρe - ρe(ρ̃, S̃)`.
pub fn defect_parts(ens: &EnsembleSnapshot, n: usize, gas: &GasParams) -> Result<Field> {
    ens.check_n(n)?;
    cellwise(ens.grid, |c| {
        let (mut k, mut i) = (0.0, 0.0);
        for a in ens.atoms(c).take(n) {
            k += kinetic(a);
            i += internal_energy(a[0], a[3], gas)?;
        }
        let mean = mean_of(ens.atoms(c), n);
        Ok([
            k / n as f64 - kinetic(&mean),
            i / n as f64 - internal_energy(mean[0], mean[3], gas)?,
        ])
    })
}

/// Eigenvalues `(λ₁, λ₂)`, λ₁ ≥ λ₂, of a symmetric matrix field.
pub fn eigenvalues(reynolds: &Field) -> Result<Field> {
    if reynolds.components() != kind::SYM_MATRIX {
        return Err(Error::Usage("eigenvalues need a symmetric matrix field".into()));
    }
    cellwise(*reynolds.grid(), |c| {
        let r = reynolds.cell(c);
        let tr = r[0] + r[2];
        let d = r[0] - r[2];
        let disc = (d * d + 4.0 * r[1] * r[1]).sqrt();
        Ok([0.5 * (tr + disc), 0.5 * (tr - disc)])
    })
}

/// Reynolds and energy defects of one Cesàro level.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectField {
    pub n: usize,
    /// `(R11, R12, R22)`.
    pub reynolds: Field,
    pub energy: Field,
    /// `(λ₁, λ₂)` with λ₁ ≥ λ₂.
    pub eigenvalues: Field,
}

impl DefectField {
    pub fn compute(ens: &EnsembleSnapshot, n: usize, gas: &GasParams) -> Result<Self> {
        let reynolds = reynolds_defect(ens, n, gas)?;
        let eigenvalues = eigenvalues(&reynolds)?;
        Ok(Self {
            n,
            energy: energy_defect(ens, n, gas)?,
            reynolds,
            eigenvalues,
        })
    }

    /// Six-component field `(R11, R12, R22, Edef, λ₁, λ₂)` for dumping.
    pub fn to_field6(&self) -> Field {
        Field::stack(&[&self.reynolds, &self.energy, &self.eigenvalues])
            .expect("defect parts share one grid")
    }

    pub fn grid(&self) -> &Grid {
        self.reynolds.grid()
    }
}

/// Per-cell check of `min{2, d(γ-1)} 𝕰 ≤ trace 𝕽 ≤ max{2, d(γ-1)} 𝕰` and of
/// the decomposition `trace 𝕽 = 2K + d(γ-1)I`, `𝕰 = K + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub cells: usize,
    pub lower_factor: f64,
    pub upper_factor: f64,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// max |trace 𝕽 - 2K - d(γ-1)I|.
    pub max_trace_residual: f64,
    /// max |𝕰 - K - I|.
    pub max_split_residual: f64,
    pub min_kinetic: f64,
    pub min_internal: f64,
    pub min_energy_defect: f64,
    pub min_eigenvalue: f64,
}

impl TraceReport {
    pub const IDENTITY_TOL: f64 = 1e-12;

    pub fn passes(&self) -> bool {
        self.lower_violations == 0
            && self.upper_violations == 0
            && self.max_trace_residual <= Self::IDENTITY_TOL
            && self.max_split_residual <= Self::IDENTITY_TOL
            && self.min_kinetic >= -Self::IDENTITY_TOL
            && self.min_internal >= -Self::IDENTITY_TOL
    }
}

/// Verifies trace compatibility of `defects` against `(K, I)` recomputed from
/// the ensemble they came from.
pub fn trace_compatibility(
    ens: &EnsembleSnapshot,
    defects: &DefectField,
    gas: &GasParams,
) -> Result<TraceReport> {
    if defects.grid() != ens.grid() {
        return Err(Error::Usage("defects and ensemble live on different grids".into()));
    }
    let parts = defect_parts(ens, defects.n, gas)?;
    let c = DIM * (gas.gamma() - 1.0);
    let mut rep = TraceReport {
        cells: ens.grid.cells(),
        lower_factor: c.min(2.0),
        upper_factor: c.max(2.0),
        lower_violations: 0,
        upper_violations: 0,
        max_trace_residual: 0.0,
        max_split_residual: 0.0,
        min_kinetic: f64::INFINITY,
        min_internal: f64::INFINITY,
        min_energy_defect: f64::INFINITY,
        min_eigenvalue: f64::INFINITY,
    };
    for cell in 0..rep.cells {
        let r = defects.reynolds.cell(cell);
        let e = defects.energy.cell(cell)[0];
        let [k, i] = [parts.cell(cell)[0], parts.cell(cell)[1]];
        let tr = r[0] + r[2];
        let tol = 1e-10 * (1.0 + tr.abs());
        if tr < rep.lower_factor * e - tol {
            rep.lower_violations += 1;
        }
        if tr > rep.upper_factor * e + tol {
            rep.upper_violations += 1;
        }
        rep.max_trace_residual = rep.max_trace_residual.max((tr - 2.0 * k - c * i).abs());
        rep.max_split_residual = rep.max_split_residual.max((e - k - i).abs());
        rep.min_kinetic = rep.min_kinetic.min(k);
        rep.min_internal = rep.min_internal.min(i);
        rep.min_energy_defect = rep.min_energy_defect.min(e);
        rep.min_eigenvalue = rep.min_eigenvalue.min(defects.eigenvalues.cell(cell)[1]);
    }
    Ok(rep)
}

/// Empirical entropy flux `(1/N) Σ S_n m_n / ρ_n`.
pub fn entropy_flux_mean(ens: &EnsembleSnapshot, n: usize) -> Result<Field> {
    ens.check_n(n)?;
    cellwise(ens.grid, |c| {
        let mut acc = [0.0; 2];
        for a in ens.atoms(c).take(n) {
            acc[0] += a[3] * a[1] / a[0];
            acc[1] += a[3] * a[2] / a[0];
        }
        Ok(acc.map(|s| s / n as f64))
    })
}

/// Per-cell empirical measures `(1/N) Σ δ_{(ρ_n, m_n, S_n)}`.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    grid: Grid,
    n: usize,
    /// Cell-major: atoms of cell `c` are `atoms[c*n..(c+1)*n]`.
    atoms: Vec<[f64; 4]>,
}

impl EmpiricalMeasure {
    pub fn from_ensemble(ens: &EnsembleSnapshot, n: usize) -> Result<Self> {
        ens.check_n(n)?;
        let mut atoms = Vec::with_capacity(ens.grid.cells() * n);
        for c in 0..ens.grid.cells() {
            for a in ens.atoms(c).take(n) {
                atoms.push([a[0], a[1], a[2], a[3]]);
            }
        }
        Ok(Self {
            grid: ens.grid,
            n,
            atoms,
        })
    }

    pub fn atom_count(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn atoms(&self, cell: usize) -> &[[f64; 4]] {
        &self.atoms[cell * self.n..(cell + 1) * self.n]
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Mean of the atoms of `cell`.
    pub fn first_moment(&self, cell: usize) -> [f64; 4] {
        mean_of(self.atoms(cell).iter().map(|a| &a[..]), self.n)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact order-`r` Wasserstein distance between two uniform atom lists under
/// the Euclidean ground metric.
///
/// Both lists are replicated to `lcm(N_A, N_B)` equally weighted copies, for
/// which an optimal plan is a permutation, and the assignment is solved
/// exactly.
pub fn wasserstein<const D: usize>(a: &[[f64; D]], b: &[[f64; D]], r: f64) -> Result<f64> {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return Err(Error::Usage("Wasserstein distance of an empty atom list".into()));
    }
    if na > MAX_ATOMS || nb > MAX_ATOMS {
        return Err(Error::Usage(format!(
            "atom counts {na}, {nb} exceed the cap of {MAX_ATOMS}"
        )));
    }
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::Usage(format!("order r = {r} must be a finite number ≥ 1")));
    }
    let size = na / gcd(na, nb) * nb;
    if size > MAX_REPLICATED {
        return Err(Error::Usage(format!(
            "replicated problem of size {size} exceeds {MAX_REPLICATED}"
        )));
    }
    let (ra, rb) = (size / na, size / nb);
    let mut cost = Vec::with_capacity(size * size);
    for i in 0..size {
        let x = &a[i / ra];
        for j in 0..size {
            let y = &b[j / rb];
            let d = x
                .iter()
                .zip(y)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt();
            cost.push(if r == 1.0 { d } else { d.powf(r) });
        }
    }
    let plan = assignment::solve(size, &cost)?;
    let mean = plan.cost / size as f64;
    Ok(if r == 1.0 { mean } else { mean.powf(1.0 / r) })
}

/// Cell average of the per-cell W_r distances between two empirical measures.
pub fn mean_wasserstein(a: &EmpiricalMeasure, b: &EmpiricalMeasure, r: f64) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Usage("empirical measures on different grids".into()));
    }
    let n = a.grid.n_x();
    let rows = par::try_map_indexed(n, |j| {
        let mut s = 0.0;
        for i in 0..n {
            let c = j * n + i;
            s += wasserstein(a.atoms(c), b.atoms(c), r)?;
        }
        Ok::<_, Error>(s)
    })?;
    Ok(rows.iter().sum::<f64>() / a.grid.cells() as f64)
}

/// One row of the Cesàro-Cauchy table: distances between levels `n` and `n + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CesaroCauchyRow {
    pub n: usize,
    pub density: f64,
    /// Summed over both components.
    pub momentum: f64,
    pub entropy: f64,
    /// Cesàro-averaged total energy Ẽ.
    pub energy: f64,
    /// `|ΔR11| + 2|ΔR12| + |ΔR22|` integrated (entrywise matrix L¹).
    pub reynolds: f64,
    pub energy_defect: f64,
    /// Cell-averaged W₁ between the empirical measures.
    pub wasserstein: f64,
}

/// L¹ distances between consecutive Cesàro levels, rows `N = 1..len-1`.
pub fn cesaro_cauchy_table(ens: &EnsembleSnapshot, gas: &GasParams) -> Result<Vec<CesaroCauchyRow>> {
    if ens.len() < 3 {
        return Err(Error::Usage(format!(
            "Cesàro-Cauchy table needs at least 3 members, got {}",
            ens.len()
        )));
    }
    struct Level {
        mean: Field,
        energy: Field,
        defects: DefectField,
        measure: EmpiricalMeasure,
    }
    let levels = (1..=ens.len())
        .map(|n| {
            Ok(Level {
                mean: cesaro(ens, n)?,
                energy: cesaro_energy(ens, n, gas)?,
                defects: DefectField::compute(ens, n, gas)?,
                measure: EmpiricalMeasure::from_ensemble(ens, n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    levels
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (a, b) = (&w[0], &w[1]);
            let ra = &a.defects.reynolds;
            let rb = &b.defects.reynolds;
            Ok(CesaroCauchyRow {
                n: k + 1,
                density: l1_distance(&a.mean.select(&[0]), &b.mean.select(&[0]))?,
                momentum: l1_distance(&a.mean.select(&[1, 2]), &b.mean.select(&[1, 2]))?,
                entropy: l1_distance(&a.mean.select(&[3]), &b.mean.select(&[3]))?,
                energy: l1_distance(&a.energy, &b.energy)?,
                reynolds: l1_distance(&ra.select(&[0, 2]), &rb.select(&[0, 2]))?
                    + 2.0 * l1_distance(&ra.select(&[1]), &rb.select(&[1]))?,
                energy_defect: l1_distance(&a.defects.energy, &b.defects.energy)?,
                wasserstein: mean_wasserstein(&a.measure, &b.measure, 1.0)?,
            })
        })
        .collect()
}
