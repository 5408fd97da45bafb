//! Exact linear assignment on dense square cost matrices.
//!
//! Shortest augmenting path with row/column potentials (Hungarian method),
//! O(n³). The returned cost is re-summed from the matrix entries of the
//! optimal permutation rather than read off the potentials.

use crate::error::{Error, Result};

/// Optimal assignment: `row_to_col[i]` is the column matched with row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

/// Solves `min_σ Σ_i cost[i][σ(i)]` over permutations σ.
///
/// `cost` is row-major with `n * n` finite entries.
pub fn solve(n: usize, cost: &[f64]) -> Result<Assignment> {
    if cost.len() != n * n {
        return Err(Error::Usage(format!(
            "cost matrix has {} entries, expected {n}x{n}",
            cost.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Usage("cost matrix contains non-finite entries".into()));
    }
    if n == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            cost: 0.0,
        });
    }
    let at = |i: usize, j: usize| cost[(i - 1) * n + (j - 1)];

    // 1-based potentials; column 0 is a virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = at(i0, j) - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[matched_row[j] - 1] = j - 1;
    }
    let cost = row_to_col
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    Ok(Assignment { row_to_col, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(n: usize, cost: &[f64]) -> f64 {
        fn rec(n: usize, cost: &[f64], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(n, cost, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(n, cost, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn known_instance() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = solve(3, &cost).unwrap();
        assert_eq!(a.cost, 5.0);
        let mut cols = a.row_to_col.clone();
        cols.sort();
        assert_eq!(cols, vec![0, 1, 2]);
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=7 {
            for _ in 0..40 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-3.0..10.0)).collect();
                let a = solve(n, &cost).unwrap();
                assert!((a.cost - brute_force(n, &cost)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(solve(0, &[]).unwrap().cost, 0.0);
        assert!(solve(2, &[1.0; 3]).is_err());
        assert!(solve(1, &[f64::NAN]).is_err());
        // All-equal costs: any permutation is optimal.
        assert_eq!(solve(4, &[1.5; 16]).unwrap().cost, 6.0);
    }
}
