//! The scaled standard (Kuhn) triangulation of `R^d`.
//!
//! Each lattice cell `h * (c + [0,1]^d)` is split into the `d!` simplices
//! `S_sigma = { 0 <= u_sigma(1) <= ... <= u_sigma(d) <= 1 }` in local
//! coordinates `u = x / h - c`. The triangulation is never stored; simplices
//! and vertex neighbourhoods are enumerated combinatorially on integer
//! lattice coordinates.

use itertools::Itertools;

use crate::error::{invalid, Error, Result};

/// Tolerance (in local, cell-size-relative units) for barycentric membership.
pub const BARYCENTRIC_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KuhnGrid {
    dim: usize,
    cell_size: f64,
}

/// A simplex: lattice cell corner plus the coordinate order `perm`
/// (0-based) in which local coordinates ascend.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimplexRef {
    pub cell: Vec<i64>,
    pub perm: Vec<usize>,
}

/// A lattice vertex; its world position is `h * coords`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexRef {
    pub coords: Vec<i64>,
}

impl VertexRef {
    pub fn new(coords: Vec<i64>) -> Self {
        Self { coords }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0; dim],
        }
    }
}

impl KuhnGrid {
    pub fn new(dim: usize, cell_size: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("grid dimension must be positive"));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(invalid(format!(
                "cell size must be positive and finite, got {cell_size}"
            )));
        }
        Ok(Self { dim, cell_size })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Largest simplex diameter, `h * sqrt(d)`.
    pub fn fineness(&self) -> f64 {
        self.cell_size * (self.dim as f64).sqrt()
    }

    /// Number of simplices meeting at every vertex, `(d+1)!`.
    pub fn max_neighbors(&self) -> usize {
        (1..=self.dim + 1).product()
    }

    pub fn world(&self, v: &VertexRef) -> Vec<f64> {
        v.coords
            .iter()
            .map(|&c| c as f64 * self.cell_size)
            .collect()
    }

    /// Finds a simplex containing `x` together with the local coordinates of
    /// `x` in its cell. Ties between equal fractional parts keep ascending
    /// coordinate order.
    pub fn locate(&self, x: &[f64]) -> Result<(SimplexRef, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, grid dimension is {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cannot locate a non-finite point"));
        }
        let scaled: Vec<f64> = x.iter().map(|v| v / self.cell_size).collect();
        let cell: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
        let local: Vec<f64> = scaled
            .iter()
            .zip(&cell)
            .map(|(s, &c)| (s - c as f64).clamp(0.0, 1.0))
            .collect();
        let mut perm: Vec<usize> = (0..self.dim).collect();
        perm.sort_by(|&a, &b| local[a].total_cmp(&local[b]));
        Ok((SimplexRef { cell, perm }, local))
    }

    /// The `d+1` vertices of `s`, starting at the cell corner: vertex `j`
    /// adds the unit vectors of the last `j` coordinates of the permutation.
    pub fn simplex_vertices(&self, s: &SimplexRef) -> Vec<VertexRef> {
        let d = self.dim;
        let mut coords = s.cell.clone();
        let mut out = Vec::with_capacity(d + 1);
        out.push(VertexRef::new(coords.clone()));
        for j in 1..=d {
            coords[s.perm[d - j]] += 1;
            out.push(VertexRef::new(coords.clone()));
        }
        out
    }

    /// Barycentric weights of `x` with respect to `simplex_vertices(s)`.
    pub fn barycentric(&self, s: &SimplexRef, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim || s.cell.len() != self.dim || s.perm.len() != self.dim {
            return Err(Error::Dimension(
                "point and simplex dimensions disagree".into(),
            ));
        }
        let local: Vec<f64> = x
            .iter()
            .zip(&s.cell)
            .map(|(v, &c)| v / self.cell_size - c as f64)
            .collect();
        let weights = kuhn_weights(&s.perm, &local);
        let min_weight = weights.iter().copied().fold(f64::INFINITY, f64::min);
        if min_weight < -BARYCENTRIC_TOL {
            return Err(Error::OutsideSimplex { min_weight });
        }
        Ok(weights)
    }

    /// All simplices containing `v`; always `(d+1)!` of them.
    pub fn neighborhood(&self, v: &VertexRef) -> Vec<SimplexRef> {
        let d = self.dim;
        let mut out = Vec::with_capacity(self.max_neighbors());
        // v = cell + b with b in {0,1}^d; b is a vertex of S_sigma iff the
        // coordinates where b = 1 come last in sigma
        for mask in 0u64..(1u64 << d) {
            let (ones, zeros): (Vec<usize>, Vec<usize>) =
                (0..d).partition(|&i| mask & (1 << i) != 0);
            let cell: Vec<i64> = (0..d)
                .map(|i| v.coords[i] - i64::from(mask & (1 << i) != 0))
                .collect();
            for pz in zeros.iter().copied().permutations(zeros.len()) {
                for po in ones.iter().copied().permutations(ones.len()) {
                    let perm = pz.iter().chain(&po).copied().collect();
                    out.push(SimplexRef {
                        cell: cell.clone(),
                        perm,
                    });
                }
            }
        }
        out
    }
}

/// Closed-form barycentric weights in local cell coordinates:
/// `w_0 = 1 - u_p(d-1)`, `w_j = u_p(d-j) - u_p(d-j-1)`, `w_d = u_p(0)`.
pub(crate) fn kuhn_weights(perm: &[usize], local: &[f64]) -> Vec<f64> {
    let d = perm.len();
    let mut w = Vec::with_capacity(d + 1);
    w.push(1.0 - local[perm[d - 1]]);
    for j in 1..d {
        w.push(local[perm[d - j]] - local[perm[d - j - 1]]);
    }
    w.push(local[perm[0]]);
    w
}

/// Membership in `Omega(0) = { z in [-1,1]^d : z_i <= z_j + 1 for all i, j }`,
/// the union of the simplices around the origin of the unit grid.
pub fn omega_zero_contains(z: &[f64]) -> bool {
    if z.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return false;
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = z.iter().copied().fold(f64::INFINITY, f64::min);
    max <= min + 1.0
}
