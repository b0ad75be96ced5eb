//! Residual networks as space-time maps: `x_{k+1} = x_k + n^{-1} R_{k+1}(x_k)`
//! at `t_k = k/n`, linear in between.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{ComplexityReport, NetworkDoc, NetworkParams};
use crate::ode::{perturbed_euler_bound, time_index, RhsSpec, Trajectory};
use crate::pwl::{approximate_lipschitz, LipschitzTarget};

/// Blocks are indices into a parameter pool; repeating an index shares the
/// parameters.
#[derive(Clone, Debug)]
pub struct ResNetParams {
    dim: usize,
    pool: Vec<NetworkParams>,
    block_refs: Vec<usize>,
    declared_bound: Option<f64>,
}

impl ResNetParams {
    pub fn new(dim: usize, pool: Vec<NetworkParams>, block_refs: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if block_refs.is_empty() {
            return Err(invalid("a residual network needs at least one block"));
        }
        for (i, net) in pool.iter().enumerate() {
            if net.input_dim() != dim || net.output_dim() != dim {
                return Err(Error::Dimension(format!(
                    "pool entry {i} maps R^{} to R^{}, blocks must map R^{dim} to itself",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        if let Some(&r) = block_refs.iter().find(|&&r| r >= pool.len()) {
            return Err(invalid(format!(
                "block reference {r} outside a pool of {}",
                pool.len()
            )));
        }
        Ok(Self {
            dim,
            pool,
            block_refs,
            declared_bound: None,
        })
    }

    /// Records a bound `|R_k(x)| <= c` valid for every block.
    pub fn with_declared_bound(mut self, c: f64) -> Self {
        self.declared_bound = Some(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.block_refs.len()
    }

    pub fn pool(&self) -> &[NetworkParams] {
        &self.pool
    }

    pub fn block_refs(&self) -> &[usize] {
        &self.block_refs
    }

    pub fn declared_bound(&self) -> Option<f64> {
        self.declared_bound
    }

    /// Block `R_{k+1}` acting on `[t_k, t_{k+1})`, `k` zero-based.
    pub fn block(&self, k: usize) -> &NetworkParams {
        &self.pool[self.block_refs[k]]
    }

    pub fn distinct_parameter_count(&self) -> usize {
        let mut refs = self.block_refs.clone();
        refs.sort_unstable();
        refs.dedup();
        refs.len()
    }

    fn check_input(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::Dimension(format!(
                "initial value has length {}, expected {}",
                y.len(),
                self.dim
            )));
        }
        Ok(())
    }

    fn step(&self, x: &mut [f64], k: usize, step: f64) -> Result<()> {
        let r = self.block(k).eval(x)?;
        for (xi, ri) in x.iter_mut().zip(&r) {
            *xi += step * ri;
        }
        Ok(())
    }

    /// States `x(t_0), ..., x(t_n)`.
    pub fn node_states(&self, y: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(y)?;
        let step = 1.0 / self.n() as f64;
        let mut x = y.to_vec();
        let mut out = Vec::with_capacity(self.n() + 1);
        out.push(x.clone());
        for k in 0..self.n() {
            self.step(&mut x, k, step)?;
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Node states as a piecewise linear trajectory on the uniform mesh.
    pub fn trajectory(&self, y: &[f64]) -> Result<Trajectory> {
        let n = self.n();
        let times = (0..=n).map(|i| i as f64 / n as f64).collect();
        Trajectory::new(self.dim, times, self.node_states(y)?)
    }

    pub fn to_json(&self) -> String {
        let doc = ResNetDoc {
            n: self.n(),
            dim: self.dim,
            pool: self.pool.iter().map(NetworkDoc::from).collect(),
            block_refs: self.block_refs.clone(),
        };
        serde_json::to_string(&doc).expect("resnet serialization is infallible")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(s)?)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        Self::from_doc(serde_json::from_slice(bytes)?)
    }

    fn from_doc(doc: ResNetDoc) -> Result<Self> {
        if doc.n != doc.block_refs.len() {
            return Err(Error::Parse(format!(
                "n = {} but {} block references",
                doc.n,
                doc.block_refs.len()
            )));
        }
        let pool = doc
            .pool
            .into_iter()
            .map(NetworkParams::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.dim, pool, doc.block_refs)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResNetDoc {
    n: usize,
    dim: usize,
    pool: Vec<NetworkDoc>,
    block_refs: Vec<usize>,
}

/// Forward recursion to the interval containing `t`, then the next block's
/// increment scaled by the fraction of the step. Exact at the nodes.
pub fn eval_resnet(net: &ResNetParams, t: f64, y: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("time {t} outside [0, 1]")));
    }
    net.check_input(y)?;
    let n = net.n();
    let step = 1.0 / n as f64;
    let k = time_index(t, n);
    let mut frac = t * n as f64 - k as f64;
    if frac.abs() <= 1e-9 {
        frac = 0.0;
    } else if (frac - 1.0).abs() <= 1e-9 {
        frac = 1.0;
    }
    let mut x = y.to_vec();
    for i in 0..k {
        net.step(&mut x, i, step)?;
    }
    if frac > 0.0 {
        net.step(&mut x, k, frac * step)?;
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildReport {
    pub blocks: Vec<ComplexityReport>,
    pub cube_radius: f64,
    pub block_accuracy: f64,
    pub apriori_bound: f64,
}

impl BuildReport {
    /// Largest per-block report; all blocks share depth and differ in width
    /// only through vertices where the sampled function vanishes.
    pub fn max_block(&self) -> ComplexityReport {
        ComplexityReport {
            depth: self.blocks.iter().map(|b| b.depth).max().unwrap_or(0),
            neurons: self.blocks.iter().map(|b| b.neurons).max().unwrap_or(0),
            nonzero_weights: self
                .blocks
                .iter()
                .map(|b| b.nonzero_weights)
                .max()
                .unwrap_or(0),
            free_weights: self
                .blocks
                .iter()
                .map(|b| b.free_weights)
                .max()
                .unwrap_or(0),
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("cube radius must be positive, got {r}")))
    }
}

pub(crate) fn build_block(
    rhs: &RhsSpec,
    t: f64,
    r: f64,
    eps: f64,
) -> Result<(NetworkParams, ComplexityReport)> {
    let f = rhs.func().clone();
    let slice = move |x: &[f64]| f(t, x);
    let target = LipschitzTarget {
        dim: rhs.dim(),
        output_dim: rhs.dim(),
        f: &slice,
        lipschitz: rhs.lipschitz_l(),
        bound: rhs.bound_c(),
    };
    approximate_lipschitz(&target, r, eps)
}

/// One block per time node with per-block accuracy `1/n` on `[-r_n, r_n]^d`.
pub fn build_resnet(rhs: &RhsSpec, n: usize, r_n: f64) -> Result<(ResNetParams, BuildReport)> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    build_resnet_with_accuracy(rhs, n, r_n, 1.0 / n as f64)
}

/// As [`build_resnet`] with an explicit per-block accuracy.
///
/// The a-priori bound feeds `block_eps + (L + L_t)/n` as the direction error
/// into the perturbed Euler estimate, `L_t` being the declared time Lipschitz
/// constant (zero if undeclared). For an autonomous rhs and `block_eps = 1/n`
/// this is `(1 + L)/n`.
pub fn build_resnet_with_accuracy(
    rhs: &RhsSpec,
    n: usize,
    r_n: f64,
    block_eps: f64,
) -> Result<(ResNetParams, BuildReport)> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    check_radius(r_n)?;
    let built = (0..n)
        .into_par_iter()
        .map(|k| build_block(rhs, k as f64 / n as f64, r_n, block_eps))
        .collect::<Result<Vec<_>>>()?;
    let (pool, blocks): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let l = rhs.lipschitz_l();
    let lt = rhs.time_lipschitz().unwrap_or(0.0);
    let eps = block_eps + (l + lt) / n as f64;
    let report = BuildReport {
        blocks,
        cube_radius: r_n,
        block_accuracy: block_eps,
        apriori_bound: perturbed_euler_bound(eps, rhs.bound_c(), n, l)?,
    };
    let net =
        ResNetParams::new(rhs.dim(), pool, (0..n).collect())?.with_declared_bound(rhs.bound_c());
    Ok((net, report))
}

/// For `f` constant in time on each of its `n` pieces: one parameter set per
/// piece, each repeated `k` times, giving `k n` blocks.
pub fn build_shared_resnet(
    rhs: &RhsSpec,
    k: usize,
    r: f64,
    block_eps: f64,
) -> Result<(ResNetParams, BuildReport)> {
    let n = rhs.piecewise_constant_pieces().ok_or_else(|| {
        invalid("weight sharing needs a right-hand side declared piecewise constant in time")
    })?;
    if k == 0 {
        return Err(invalid("repetition factor k must be at least 1"));
    }
    check_radius(r)?;
    let built = (0..n)
        .into_par_iter()
        .map(|i| build_block(rhs, i as f64 / n as f64, r, block_eps))
        .collect::<Result<Vec<_>>>()?;
    let (pool, piece_reports): (Vec<_>, Vec<_>) = built.into_iter().unzip();
    let refs: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect();
    let blocks = refs.iter().map(|&i| piece_reports[i]).collect();
    let report = BuildReport {
        blocks,
        cube_radius: r,
        block_accuracy: block_eps,
        apriori_bound: perturbed_euler_bound(block_eps, rhs.bound_c(), k * n, rhs.lipschitz_l())?,
    };
    let net = ResNetParams::new(rhs.dim(), pool, refs)?.with_declared_bound(rhs.bound_c());
    Ok((net, report))
}

/// Product of layer Frobenius norms, an upper bound on the Lipschitz
/// constant of a ReLU network.
fn lipschitz_upper_bound(net: &NetworkParams) -> f64 {
    net.layers()
        .iter()
        .map(|l| l.weight_values().map(|w| w * w).sum::<f64>().sqrt())
        .product()
}

/// The piecewise-constant-in-time rhs `f(t, x) = R_{i+1}(x)` on
/// `[t_i, t_{i+1})`. Its Euler scheme on the uniform `n`-partition is the
/// residual network itself.
pub fn resnet_as_rhs(net: &ResNetParams) -> RhsSpec {
    let n = net.n();
    let lipschitz = net
        .pool
        .iter()
        .map(lipschitz_upper_bound)
        .fold(0.0, f64::max);
    let bound = net.declared_bound.unwrap_or(f64::INFINITY);
    let shared = Arc::new(net.clone());
    let f = move |t: f64, x: &[f64]| shared.block(time_index(t, n)).eval(x).unwrap_or_default();
    RhsSpec::new(net.dim(), f, bound, lipschitz)
        .and_then(|s| s.with_piecewise_constant(n))
        .expect("a validated residual network yields a valid rhs")
}
