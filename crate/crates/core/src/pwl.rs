//! Piecewise-linear interpolation on the scaled standard triangulation and
//! exact compilation of PWL functions into ReLU networks.
//!
//! Each nodal basis function is realised as `min_k relu(g_k(y))` over the
//! affine pieces `g_k` of the hat function on the `(d+1)!` simplices around
//! its vertex. This min-form equals the hat function on all of `R^d`
//! because the standard triangulation is locally convex. A PWL function is
//! then a weighted sum of nodal networks, one scalar network per output
//! coordinate.

use std::collections::BTreeMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{kuhn_weights, KuhnGrid, SimplexRef, VertexRef};
use crate::linalg;
use crate::network::{
    chain_networks, complexity, min_tree_network, stack_networks, sum_networks, zero_network,
    AffineMap, ComplexityReport, FreeMask, NetworkParams,
};

/// Vertex-value representation of a PWL function supported in `[-r, r]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PwlFunction {
    grid: KuhnGrid,
    cube_radius: f64,
    cells_per_side: i64,
    output_dim: usize,
    values: BTreeMap<VertexRef, Vec<f64>>,
}

impl PwlFunction {
    /// Empty (identically zero) function. `cube_radius` must be a whole
    /// number of cells.
    pub fn new(grid: KuhnGrid, cube_radius: f64, output_dim: usize) -> Result<Self> {
        if !(cube_radius.is_finite() && cube_radius > 0.0) {
            return Err(invalid(format!(
                "cube radius must be positive, got {cube_radius}"
            )));
        }
        if output_dim == 0 {
            return Err(invalid("output dimension must be positive"));
        }
        let ratio = cube_radius / grid.cell_size();
        let cells = ratio.round();
        if !((1.0..1e12).contains(&cells) && (ratio - cells).abs() <= 1e-9 * cells) {
            return Err(invalid(format!(
                "cube radius {cube_radius} is not a whole number of cells of size {}",
                grid.cell_size()
            )));
        }
        Ok(Self {
            grid,
            cube_radius,
            cells_per_side: cells as i64,
            output_dim,
            values: BTreeMap::new(),
        })
    }

    pub fn grid(&self) -> &KuhnGrid {
        &self.grid
    }

    pub fn cube_radius(&self) -> f64 {
        self.cube_radius
    }

    /// `r / h`, the number of cells between the origin and a cube face.
    pub fn cells_per_side(&self) -> i64 {
        self.cells_per_side
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn contains_vertex(&self, v: &VertexRef) -> bool {
        v.coords.len() == self.dim() && v.coords.iter().all(|c| c.abs() <= self.cells_per_side)
    }

    pub fn set(&mut self, v: VertexRef, value: Vec<f64>) -> Result<()> {
        if !self.contains_vertex(&v) {
            return Err(invalid(format!(
                "vertex {:?} lies outside the cube",
                v.coords
            )));
        }
        if value.len() != self.output_dim {
            return Err(Error::Dimension(format!(
                "vertex value has length {}, expected {}",
                value.len(),
                self.output_dim
            )));
        }
        if value.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite vertex value"));
        }
        self.values.insert(v, value);
        Ok(())
    }

    /// Stored value, zero for vertices that carry none.
    pub fn value(&self, v: &VertexRef) -> Option<&[f64]> {
        self.values.get(v).map(Vec::as_slice)
    }

    pub fn vertices(&self) -> impl Iterator<Item = (&VertexRef, &[f64])> {
        self.values.iter().map(|(v, x)| (v, x.as_slice()))
    }

    /// Number of stored vertices (including explicit zeros).
    pub fn stored_vertices(&self) -> usize {
        self.values.len()
    }

    /// `|V(f)|`: vertices with a nonzero value.
    pub fn degrees_of_freedom(&self) -> usize {
        self.values
            .values()
            .filter(|v| v.iter().any(|x| *x != 0.0))
            .count()
    }

    /// Largest Euclidean norm over vertex values; bounds `|f|` everywhere.
    pub fn max_value_norm(&self) -> f64 {
        self.values.values().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// Largest absolute vertex value entry.
    pub fn max_abs_value(&self) -> f64 {
        self.values
            .values()
            .flat_map(|v| v.iter())
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    }

    /// Barycentric interpolation of the vertex values.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (s, local) = self.grid.locate(x)?;
        let weights = kuhn_weights(&s.perm, &local);
        let mut out = vec![0.0; self.output_dim];
        for (w, v) in weights.iter().zip(self.grid.simplex_vertices(&s)) {
            if let Some(val) = self.values.get(&v) {
                for (o, y) in out.iter_mut().zip(val) {
                    *o += w * y;
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let doc = PwlDoc {
            dim: self.dim(),
            h: self.grid.cell_size(),
            r: self.cube_radius,
            values: self
                .values
                .iter()
                .map(|(v, x)| VertexValueDoc {
                    vertex: v.coords.clone(),
                    value: x.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("PWL serialization is infallible")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: PwlDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let doc: PwlDoc = serde_json::from_slice(bytes)?;
        doc.try_into()
    }
}

/// `{"dim": d, "h": h, "r": r, "values": [{"vertex": [..], "value": [..]}]}`
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PwlDoc {
    dim: usize,
    h: f64,
    r: f64,
    values: Vec<VertexValueDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VertexValueDoc {
    vertex: Vec<i64>,
    value: Vec<f64>,
}

impl TryFrom<PwlDoc> for PwlFunction {
    type Error = Error;

    fn try_from(doc: PwlDoc) -> Result<Self> {
        let grid = KuhnGrid::new(doc.dim, doc.h)?;
        let m = doc.values.first().map_or(1, |e| e.value.len());
        let mut f = PwlFunction::new(grid, doc.r, m)?;
        for entry in doc.values {
            if entry.vertex.len() != doc.dim {
                return Err(Error::Parse(format!(
                    "vertex {:?} does not have {} coordinates",
                    entry.vertex, doc.dim
                )));
            }
            let v = VertexRef::new(entry.vertex);
            if f.values.contains_key(&v) {
                return Err(Error::Parse(format!("duplicate vertex {:?}", v.coords)));
            }
            f.set(v, entry.value)?;
        }
        Ok(f)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The affine pieces `g_k` of the nodal basis function at `vertex`, one per
/// neighbouring simplex.
#[derive(Clone, Debug)]
pub struct NodalPieces {
    pub vertex: VertexRef,
    pub pieces: Vec<(SimplexRef, AffineMap)>,
}

pub fn nodal_pieces(grid: &KuhnGrid, v: &VertexRef) -> Result<NodalPieces> {
    let d = grid.dim();
    let h = grid.cell_size();
    let mut pieces = Vec::with_capacity(grid.max_neighbors());
    for s in grid.neighborhood(v) {
        // g(u) = a.u + b in lattice coordinates relative to v
        let mut a = Vec::with_capacity(d + 1);
        let mut rhs = Vec::with_capacity(d + 1);
        for w in grid.simplex_vertices(&s) {
            let mut row: Vec<f64> = w
                .coords
                .iter()
                .zip(&v.coords)
                .map(|(p, q)| (p - q) as f64)
                .collect();
            row.push(1.0);
            rhs.push(if w == *v { 1.0 } else { 0.0 });
            a.push(row);
        }
        let sol = linalg::solve(a, rhs).ok_or_else(|| {
            Error::Internal(format!(
                "degenerate simplex {:?} at vertex {:?}",
                s, v.coords
            ))
        })?;
        // back to world coordinates: g(y) = (a/h).y + (b - a.v)
        let weights: Vec<(usize, f64)> = (0..d).map(|i| (i, sol[i] / h)).collect();
        let bias = sol[d] - (0..d).map(|i| sol[i] * v.coords[i] as f64).sum::<f64>();
        pieces.push((
            s,
            AffineMap::from_sparse_rows(d, vec![weights], vec![bias])?,
        ));
    }
    Ok(NodalPieces {
        vertex: v.clone(),
        pieces,
    })
}

/// Depth of every compiled nodal basis and PWL network: `ceil(log2 k_T) + 2`.
pub fn compiled_depth(dim: usize) -> usize {
    let k: usize = (1..=dim + 1).product();
    k.next_power_of_two().trailing_zeros() as usize + 2
}

/// `y -> min_k relu(g_k(y))`, the nodal basis function at `v`.
pub fn nodal_basis_network(grid: &KuhnGrid, v: &VertexRef) -> Result<NetworkParams> {
    let np = nodal_pieces(grid, v)?;
    let d = grid.dim();
    let mut rows = Vec::with_capacity(np.pieces.len());
    let mut bias = Vec::with_capacity(np.pieces.len());
    for (_, g) in &np.pieces {
        rows.push(g.row(0).collect());
        bias.push(g.bias()[0]);
    }
    let first = NetworkParams::new(d, vec![AffineMap::from_sparse_rows(d, rows, bias)?])?;
    chain_networks(&min_tree_network(np.pieces.len())?, &first)
}

/// Compiles `f` and returns the network together with the mask of weights
/// that depend on `f` (the first layer).
pub fn compile_pwl_with_mask(f: &PwlFunction) -> Result<(NetworkParams, FreeMask)> {
    let d = f.dim();
    let m = f.output_dim();
    let depth = compiled_depth(d);
    let mut scalars: Vec<Option<NetworkParams>> = Vec::with_capacity(m);
    for j in 0..m {
        let support: Vec<(&VertexRef, f64)> = f
            .values
            .iter()
            .filter(|(_, val)| val[j] != 0.0)
            .map(|(v, val)| (v, val[j]))
            .collect();
        if support.is_empty() {
            scalars.push(None);
            continue;
        }
        let nets = support
            .par_iter()
            .map(|(v, _)| nodal_basis_network(&f.grid, v))
            .collect::<Result<Vec<_>>>()?;
        let coefficients: Vec<f64> = support.iter().map(|(_, c)| *c).collect();
        scalars.push(Some(sum_networks(&nets, &coefficients)?));
    }
    if scalars.iter().all(Option::is_none) {
        return Ok((zero_network(d, m, 1)?, FreeMask::none()));
    }
    let scalars = scalars
        .into_iter()
        .map(|s| s.map_or_else(|| zero_network(d, 1, depth), Ok))
        .collect::<Result<Vec<_>>>()?;
    let net = if m == 1 {
        scalars.into_iter().next().expect("m == 1")
    } else {
        stack_networks(&scalars)?
    };
    Ok((net, FreeMask::first_layer()))
}

/// ReLU network equal to `f` on all of `R^d`.
pub fn compile_pwl(f: &PwlFunction) -> Result<NetworkParams> {
    compile_pwl_with_mask(f).map(|(net, _)| net)
}

/// Cell count per half-side for a target fineness: `ceil(sqrt(d) r / delta)`.
pub fn cells_for_fineness(dim: usize, r: f64, delta: f64) -> Result<i64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(invalid(format!("cube radius must be positive, got {r}")));
    }
    if !(delta > 0.0) || delta.is_nan() {
        return Err(invalid(format!("fineness must be positive, got {delta}")));
    }
    let k = ((dim as f64).sqrt() * r / delta).ceil().max(1.0);
    if k > 1e9 {
        return Err(invalid(format!(
            "fineness {delta} too small for radius {r}"
        )));
    }
    Ok(k as i64)
}

/// Samples `f` at every grid vertex of `[-r, r]^d` on the grid of cell size
/// `h = r / ceil(sqrt(d) r / delta)`, whose fineness is at most `delta`.
pub fn interpolate(
    dim: usize,
    output_dim: usize,
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    r: f64,
    delta: f64,
) -> Result<PwlFunction> {
    let k = cells_for_fineness(dim, r, delta)?;
    let grid = KuhnGrid::new(dim, r / k as f64)?;
    let mut pwl = PwlFunction::new(grid, r, output_dim)?;
    let verts: Vec<VertexRef> = (0..dim)
        .map(|_| -k..=k)
        .multi_cartesian_product()
        .map(VertexRef::new)
        .collect();
    let samples: Vec<Vec<f64>> = verts.par_iter().map(|v| f(&grid.world(v))).collect();
    for (v, val) in verts.into_iter().zip(samples) {
        pwl.set(v, val)?;
    }
    Ok(pwl)
}

/// A Lipschitz target `f: R^d -> R^m` with declared constant and bound.
pub struct LipschitzTarget<'a> {
    pub dim: usize,
    pub output_dim: usize,
    pub f: &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync),
    pub lipschitz: f64,
    pub bound: f64,
}

/// Interpolates on a grid of fineness `eps / L` and compiles the interpolant.
/// The network is within `eps` of `f` on `[-r, r]^d` and bounded by the
/// largest sampled value everywhere.
pub fn approximate_lipschitz(
    target: &LipschitzTarget<'_>,
    r: f64,
    eps: f64,
) -> Result<(NetworkParams, ComplexityReport)> {
    if !(eps > 0.0) || eps.is_nan() {
        return Err(invalid(format!("accuracy must be positive, got {eps}")));
    }
    if !(target.lipschitz >= 0.0) {
        return Err(invalid("Lipschitz constant must be non-negative"));
    }
    let delta = if target.lipschitz > 0.0 {
        eps / target.lipschitz
    } else {
        (target.dim as f64).sqrt() * r
    };
    let pwl = interpolate(target.dim, target.output_dim, target.f, r, delta)?;
    let max_norm = pwl.max_value_norm();
    if max_norm > target.bound * (1.0 + 1e-12) {
        log::warn!(
            "sampled value norm {max_norm} exceeds the declared bound {}",
            target.bound
        );
    }
    let (net, mask) = compile_pwl_with_mask(&pwl)?;
    let report = complexity(&net, Some(&mask));
    Ok((net, report))
}
