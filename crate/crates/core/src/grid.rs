//! Uniform periodic meshes on the unit torus and cell-averaged fields.
//!
//! Storage is row-major over `(j, i)` with `j` the x₂ index and `i` the x₁
//! index; the `k` components of a cell are interleaved, so component `c` of
//! cell `(i, j)` lives at `(j * n_x + i) * k + c`.

use crate::error::{Error, Result};
use crate::par;

/// Component counts of the field kinds used across the crate.
pub mod kind {
    pub const SCALAR: usize = 1;
    pub const VECTOR: usize = 2;
    /// Symmetric 2×2 matrix stored as (a₁₁, a₁₂, a₂₂).
    pub const SYM_MATRIX: usize = 3;
    /// Conservative state (ρ, m₁, m₂, E).
    pub const STATE: usize = 4;
}

/// `n_x × n_x` periodic Cartesian mesh over [0,1)².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    n_x: usize,
}

impl Grid {
    pub fn new(n_x: usize) -> Result<Self> {
        if n_x < 2 || !n_x.is_power_of_two() {
            return Err(Error::Usage(format!(
                "grid resolution must be a power of two >= 2, got {n_x}"
            )));
        }
        Ok(Self { n_x })
    }

    /// Mesh of the resolution ladder, `n_x = 2^(5 + level)`.
    pub fn from_level(level: u32) -> Result<Self> {
        if level > 20 {
            return Err(Error::Usage(format!("resolution level {level} out of range")));
        }
        Self::new(1usize << (5 + level))
    }

    #[inline]
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n_x * self.n_x
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = self.h();
        h * h
    }

    /// Cell centre of cell `(i, j)`.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.h();
        [(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]
    }

    /// Flat cell index with periodic wrap in both directions.
    #[inline]
    pub fn wrap_index(&self, i: isize, j: isize) -> usize {
        let n = self.n_x as isize;
        (j.rem_euclid(n) * n + i.rem_euclid(n)) as usize
    }

    /// Refinement ratio `self / coarse`, when `coarse` is a dyadic coarsening of `self`.
    pub fn ratio_to(&self, coarse: &Grid) -> Result<usize> {
        if coarse.n_x > self.n_x || !self.n_x.is_multiple_of(coarse.n_x) {
            return Err(Error::Usage(format!(
                "grid {} is not a refinement of grid {}",
                self.n_x, coarse.n_x
            )));
        }
        Ok(self.n_x / coarse.n_x)
    }
}

/// Cell averages with a fixed number of components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    components: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        assert!(components > 0, "a field needs at least one component");
        Self {
            grid,
            components,
            data: vec![0.0; grid.cells() * components],
        }
    }

    pub fn from_vec(grid: Grid, components: usize, data: Vec<f64>) -> Result<Self> {
        if components == 0 || data.len() != grid.cells() * components {
            return Err(Error::Usage(format!(
                "field payload has {} values, expected {} cells x {} components",
                data.len(),
                grid.cells(),
                components
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!(
                "non-finite value at payload index {pos}"
            )));
        }
        Ok(Self {
            grid,
            components,
            data,
        })
    }

    /// Fills every cell from `f(i, j)`.
    pub fn from_fn<const K: usize>(grid: Grid, f: impl Fn(usize, usize) -> [f64; K]) -> Self {
        let n = grid.n_x();
        let mut data = Vec::with_capacity(grid.cells() * K);
        for j in 0..n {
            for i in 0..n {
                data.extend_from_slice(&f(i, j));
            }
        }
        Self {
            grid,
            components: K,
            data,
        }
    }

    /// Uniform field.
    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(grid.cells() * value.len());
        for _ in 0..grid.cells() {
            data.extend_from_slice(value);
        }
        Self {
            grid,
            components: value.len(),
            data,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.components
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.components..(idx + 1) * self.components]
    }

    #[inline]
    pub fn cell_mut(&mut self, idx: usize) -> &mut [f64] {
        &mut self.data[idx * self.components..(idx + 1) * self.components]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &[f64] {
        self.cell(j * self.grid.n_x() + i)
    }

    /// Copies out a subset of components, in the given order.
    pub fn select(&self, comps: &[usize]) -> Field {
        assert!(comps.iter().all(|&c| c < self.components));
        let mut data = Vec::with_capacity(self.grid.cells() * comps.len());
        for cell in self.data.chunks_exact(self.components) {
            data.extend(comps.iter().map(|&c| cell[c]));
        }
        Field {
            grid: self.grid,
            components: comps.len(),
            data,
        }
    }

    /// Concatenates the components of several fields on one grid.
    pub fn stack(parts: &[&Field]) -> Result<Field> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("cannot stack zero fields".into()))?;
        let grid = first.grid;
        if parts.iter().any(|p| p.grid != grid) {
            return Err(Error::Usage("stacked fields must share a grid".into()));
        }
        let components = parts.iter().map(|p| p.components).sum();
        let mut data = Vec::with_capacity(grid.cells() * components);
        for idx in 0..grid.cells() {
            for p in parts {
                data.extend_from_slice(p.cell(idx));
            }
        }
        Ok(Field {
            grid,
            components,
            data,
        })
    }

    /// Periodic shift: the result at cell `(i, j)` is `self` at `(i - di, j - dj)`.
    pub fn shifted(&self, di: isize, dj: isize) -> Field {
        let n = self.grid.n_x();
        let k = self.components;
        let mut out = Field::zeros(self.grid, k);
        for j in 0..n {
            for i in 0..n {
                let src = self.grid.wrap_index(i as isize - di, j as isize - dj);
                let dst = j * n + i;
                out.data[dst * k..(dst + 1) * k].copy_from_slice(self.cell(src));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Conservative restriction onto a coarser nested grid: each coarse cell is
/// the arithmetic mean of its fine children.
pub fn restrict(field: &Field, coarse: &Grid) -> Result<Field> {
    let ratio = field.grid.ratio_to(coarse)?;
    if ratio == 1 {
        return Ok(field.clone());
    }
    let k = field.components;
    let n_fine = field.grid.n_x();
    let n_coarse = coarse.n_x();
    let inv = 1.0 / (ratio * ratio) as f64;
    let mut out = Field::zeros(*coarse, k);
    par::for_each_row(&mut out.data, n_coarse * k, |jc, row| {
        for ic in 0..n_coarse {
            let acc = &mut row[ic * k..(ic + 1) * k];
            for jf in jc * ratio..(jc + 1) * ratio {
                for i_f in ic * ratio..(ic + 1) * ratio {
                    let src = &field.data[(jf * n_fine + i_f) * k..(jf * n_fine + i_f + 1) * k];
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += s;
                    }
                }
            }
            for a in acc.iter_mut() {
                *a *= inv;
            }
        }
    });
    Ok(out)
}

/// Integral over the torus of each component: `h² Σ_cells value`.
///
/// Rows are summed in index order and the row sums combined sequentially, so
/// the result does not depend on the thread count.
pub fn integrate(field: &Field) -> Vec<f64> {
    let k = field.components;
    let n = field.grid.n_x();
    let rows = par::map_indexed(n, |j| {
        let mut acc = vec![0.0; k];
        for cell in field.data[j * n * k..(j + 1) * n * k].chunks_exact(k) {
            for (a, v) in acc.iter_mut().zip(cell) {
                *a += v;
            }
        }
        acc
    });
    let mut total = vec![0.0; k];
    for row in rows {
        for (t, r) in total.iter_mut().zip(row) {
            *t += r;
        }
    }
    let area = field.grid.cell_area();
    total.iter_mut().for_each(|t| *t *= area);
    total
}

/// Coarsest grid among the given fields, checking that all are nested.
pub fn common_grid<'a>(fields: impl IntoIterator<Item = &'a Field>) -> Result<Grid> {
    let mut coarse: Option<Grid> = None;
    let mut grids = Vec::new();
    for f in fields {
        grids.push(f.grid);
        coarse = Some(match coarse {
            Some(g) if g.n_x() <= f.grid.n_x() => g,
            _ => f.grid,
        });
    }
    let coarse = coarse.ok_or_else(|| Error::Usage("no fields given".into()))?;
    for g in &grids {
        g.ratio_to(&coarse)?;
    }
    Ok(coarse)
}

/// L¹(𝕋²) distance summed over components, after restricting both fields to
/// the coarser of the two grids.
pub fn l1_distance(a: &Field, b: &Field) -> Result<f64> {
    if a.components != b.components {
        return Err(Error::Usage(format!(
            "component mismatch: {} vs {}",
            a.components, b.components
        )));
    }
    let coarse = common_grid([a, b])?;
    let ra = restrict(a, &coarse)?;
    let rb = restrict(b, &coarse)?;
    let diff: Vec<f64> = ra.data.iter().zip(&rb.data).map(|(x, y)| (x - y).abs()).collect();
    let diff = Field {
        grid: coarse,
        components: a.components,
        data: diff,
    };
    Ok(integrate(&diff).iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: Grid, k: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..grid.cells() * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_vec(grid, k, data).unwrap()
    }

    /// Direct summation without the row split.
    fn oracle_integral(f: &Field) -> Vec<f64> {
        let k = f.components();
        let mut acc = vec![0.0; k];
        for (idx, v) in f.data().iter().enumerate() {
            acc[idx % k] += v;
        }
        acc.iter().map(|a| a * f.grid().cell_area()).collect()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1).is_err());
        assert!(Grid::new(48).is_err());
        let g = Grid::new(64).unwrap();
        assert_eq!(g.h() * g.n_x() as f64, 1.0);
        assert_eq!(Grid::from_level(1).unwrap().n_x(), 64);
        assert_eq!(Grid::from_level(6).unwrap().n_x(), 2048);
    }

    #[test]
    fn restrict_constant() {
        let fine = Field::constant(Grid::new(128).unwrap(), &[2.5]);
        let coarse = restrict(&fine, &Grid::new(32).unwrap()).unwrap();
        assert!(coarse.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn restrict_checkerboard_cancels() {
        let g = Grid::new(64).unwrap();
        let f = Field::from_fn(g, |i, j| [if (i + j) % 2 == 0 { 1.0 } else { -1.0 }]);
        let c = restrict(&f, &Grid::new(32).unwrap()).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn restrict_preserves_integral() {
        let f = random_field(Grid::new(128).unwrap(), 3, 3);
        let c = restrict(&f, &Grid::new(32).unwrap()).unwrap();
        for (a, b) in oracle_integral(&f).iter().zip(integrate(&c)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn restrict_composes() {
        let f = random_field(Grid::new(128).unwrap(), 2, 4);
        let mid = restrict(&f, &Grid::new(64).unwrap()).unwrap();
        let two_step = restrict(&mid, &Grid::new(16).unwrap()).unwrap();
        let one_step = restrict(&f, &Grid::new(16).unwrap()).unwrap();
        for (a, b) in two_step.data().iter().zip(one_step.data()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn restrict_rejects_non_nested() {
        let f = Field::zeros(Grid::new(32).unwrap(), 1);
        assert!(matches!(restrict(&f, &Grid::new(64).unwrap()), Err(Error::Usage(_))));
    }

    #[test]
    fn integrate_examples() {
        for n in [2, 16, 64] {
            let g = Grid::new(n).unwrap();
            assert_abs_diff_eq!(integrate(&Field::constant(g, &[3.0]))[0], 3.0, epsilon = 1e-14);
        }
        let g = Grid::new(64).unwrap();
        // Exact cell averages of sin(2πx₁).
        let h = g.h();
        let sin_avg = Field::from_fn(g, |i, _| {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            [((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI * h)]
        });
        assert_abs_diff_eq!(integrate(&sin_avg)[0], 0.0, epsilon = 1e-14);
        // Cell average of x₁ is the centre coordinate; the integral is ½.
        let x1 = Field::from_fn(g, |i, j| [g.center(i, j)[0]]);
        assert_abs_diff_eq!(integrate(&x1)[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn l1_examples() {
        let g = Grid::new(32).unwrap();
        let f = random_field(g, 1, 9);
        assert_eq!(l1_distance(&f, &f).unwrap(), 0.0);
        let zero = Field::zeros(g, 1);
        let two = Field::constant(g, &[2.0]);
        assert_abs_diff_eq!(l1_distance(&zero, &two).unwrap(), 2.0, epsilon = 1e-14);

        let a = random_field(Grid::new(64).unwrap(), 1, 10);
        let b = random_field(Grid::new(128).unwrap(), 1, 11);
        // Oracle: restrict by explicit 2x2 block means, then sum.
        let mut acc = 0.0;
        for j in 0..64 {
            for i in 0..64 {
                let mut s = 0.0;
                for dj in 0..2 {
                    for di in 0..2 {
                        s += b.at(2 * i + di, 2 * j + dj)[0];
                    }
                }
                acc += (a.at(i, j)[0] - s / 4.0).abs();
            }
        }
        let oracle = acc / (64.0 * 64.0);
        assert_abs_diff_eq!(l1_distance(&a, &b).unwrap(), oracle, epsilon = 1e-13);
        assert_abs_diff_eq!(l1_distance(&b, &a).unwrap(), oracle, epsilon = 1e-13);
    }

    #[test]
    fn l1_rejects_mismatch() {
        let a = Field::zeros(Grid::new(32).unwrap(), 1);
        let b = Field::zeros(Grid::new(32).unwrap(), 2);
        assert!(l1_distance(&a, &b).is_err());
    }

    #[test]
    fn full_period_shift_is_identity() {
        let f = random_field(Grid::new(16).unwrap(), 2, 12);
        assert_eq!(f.shifted(16, 0), f);
        assert_eq!(f.shifted(0, -16), f);
        assert_eq!(f.shifted(3, 5).shifted(-3, -5), f);
    }

    #[test]
    fn from_vec_rejects_nan() {
        let g = Grid::new(2).unwrap();
        assert!(Field::from_vec(g, 1, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(Field::from_vec(g, 1, vec![0.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn l1_triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
                let a = random_field(Grid::new(16).unwrap(), 2, s1);
                let b = random_field(Grid::new(32).unwrap(), 2, s2);
                let c = random_field(Grid::new(8).unwrap(), 2, s3);
                let ab = l1_distance(&a, &b).unwrap();
                let bc = l1_distance(&b, &c).unwrap();
                let ac = l1_distance(&a, &c).unwrap();
                // Each pair is compared on its own coarse grid; all three restrict to 8².
                let (ra, rb) = (restrict(&a, &Grid::new(8).unwrap()).unwrap(), restrict(&b, &Grid::new(8).unwrap()).unwrap());
                let ab8 = l1_distance(&ra, &rb).unwrap();
                prop_assert!(ac <= ab8 + bc + 1e-12);
                prop_assert!(ab8 <= ab + 1e-12);
            }

            #[test]
            fn restriction_is_conservative(seed in any::<u64>(), k in 1usize..5) {
                let f = random_field(Grid::new(64).unwrap(), k, seed);
                let c = restrict(&f, &Grid::new(4).unwrap()).unwrap();
                for (a, b) in integrate(&f).iter().zip(integrate(&c)) {
                    prop_assert!((a - b).abs() <= 1e-13);
                }
            }
        }
    }
}
