//! Explicit ReLU networks: parameter lists, evaluation, exact gadgets and
//! combinators with exact complexity accounting.
//!
//! A network with layers `T_1, ..., T_L` realises
//! `x -> T_L(relu(T_{L-1}(... relu(T_1(x)))))`. Weight matrices are stored
//! in compressed sparse row form because the constructed networks (block
//! diagonal min trees, stacked nodal bases) are overwhelmingly sparse.
//! Exact zeros are never stored, so the stored entry count is the nonzero
//! weight count.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[inline]
pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Affine map `x -> A x + b` with a sparse row-major weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    bias: Vec<f64>,
}

impl AffineMap {
    /// Builds a map from dense rows. Every row must have `cols` entries.
    pub fn from_dense(weights: &[Vec<f64>], bias: Vec<f64>, cols: usize) -> Result<Self> {
        if weights.len() != bias.len() {
            return Err(Error::Dimension(format!(
                "weight matrix has {} rows but bias has length {}",
                weights.len(),
                bias.len()
            )));
        }
        let mut rows = Vec::with_capacity(weights.len());
        for (r, row) in weights.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Dimension(format!(
                    "weight row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            rows.push(row.iter().copied().enumerate().collect::<Vec<_>>());
        }
        Self::from_sparse_rows(cols, rows, bias)
    }

    /// Builds a map from per-row `(column, value)` lists. Zeros are dropped;
    /// repeated columns within a row are summed.
    pub fn from_sparse_rows(
        cols: usize,
        rows: Vec<Vec<(usize, f64)>>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if rows.len() != bias.len() {
            return Err(Error::Dimension(format!(
                "weight matrix has {} rows but bias has length {}",
                rows.len(),
                bias.len()
            )));
        }
        if let Some(b) = bias.iter().find(|b| !b.is_finite()) {
            return Err(invalid(format!("non-finite bias entry {b}")));
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let start = col_idx.len();
            for (c, v) in row {
                if c >= cols {
                    return Err(Error::Dimension(format!(
                        "column index {c} out of range for {cols} columns"
                    )));
                }
                if !v.is_finite() {
                    return Err(invalid(format!("non-finite weight entry {v}")));
                }
                if col_idx.len() > start && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            // drop entries that are (or summed to) exactly zero
            let mut w = start;
            for r in start..col_idx.len() {
                if values[r] != 0.0 {
                    col_idx[w] = col_idx[r];
                    values[w] = values[r];
                    w += 1;
                }
            }
            col_idx.truncate(w);
            values.truncate(w);
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows: bias.len(),
            cols,
            row_ptr,
            col_idx,
            values,
            bias,
        })
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            bias: vec![0.0; rows],
        }
    }

    /// Output dimension.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Input dimension.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Nonzero entries of row `r` as `(column, value)` pairs, ascending by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    /// Number of nonzero matrix entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over all stored (nonzero) weight values.
    pub fn weight_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| {
                let mut row = vec![0.0; self.cols];
                for (c, v) in self.row(r) {
                    row[c] = v;
                }
                row
            })
            .collect()
    }

    /// Writes `A x + b` into `out`. Dimensions are the caller's responsibility.
    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.rows).map(|r| {
            let mut acc = self.bias[r];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            acc
        }));
    }

    fn sparse_rows(&self) -> Vec<Vec<(usize, f64)>> {
        (0..self.rows).map(|r| self.row(r).collect()).collect()
    }
}

/// Parameters `((A_1, b_1), ..., (A_L, b_L))` of a ReLU network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    input_dim: usize,
    layers: Vec<AffineMap>,
}

impl NetworkParams {
    pub fn new(input_dim: usize, layers: Vec<AffineMap>) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("input dimension must be positive"));
        }
        if layers.is_empty() {
            return Err(invalid("a network needs at least one affine map"));
        }
        let mut dim = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.cols() != dim {
                return Err(Error::LayerDimension {
                    layer: l + 1,
                    expected: dim,
                    found: layer.cols(),
                });
            }
            if layer.rows() == 0 {
                return Err(Error::Dimension(format!(
                    "layer {} has zero outputs",
                    l + 1
                )));
            }
            dim = layer.rows();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").rows()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[AffineMap] {
        &self.layers
    }

    /// Layer widths `N_0, ..., N_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(AffineMap::rows))
            .collect()
    }

    /// `N(theta)`: sum of all layer widths including input and output.
    pub fn neurons(&self) -> usize {
        self.widths().iter().sum()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::LayerDimension {
                layer: 1,
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply_into(&cur, &mut next);
            if l < last {
                next.iter_mut().for_each(|v| *v = relu(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDoc::from(self);
        serde_json::to_string(&doc).expect("network serialization is infallible")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let doc: NetworkDoc = serde_json::from_slice(bytes)?;
        doc.try_into()
    }
}

/// On-disk form: `{"input_dim": d, "layers": [{"weights": [[..]], "bias": [..]}]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct NetworkDoc {
    input_dim: usize,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl From<&NetworkParams> for NetworkDoc {
    fn from(net: &NetworkParams) -> Self {
        NetworkDoc {
            input_dim: net.input_dim,
            layers: net
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.to_dense(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkDoc> for NetworkParams {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        let mut dim = doc.input_dim;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (l, layer) in doc.layers.into_iter().enumerate() {
            if let Some(row) = layer.weights.iter().find(|r| r.len() != dim) {
                return Err(Error::LayerDimension {
                    layer: l + 1,
                    expected: dim,
                    found: row.len(),
                });
            }
            let map = AffineMap::from_dense(&layer.weights, layer.bias, dim)?;
            dim = map.rows();
            layers.push(map);
        }
        NetworkParams::new(doc.input_dim, layers)
    }
}

/// Marks which layers hold weights that are not fixed by a construction.
/// A free layer contributes all of its matrix positions and biases.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreeMask {
    free_layers: Vec<bool>,
}

impl FreeMask {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn first_layer() -> Self {
        Self {
            free_layers: vec![true],
        }
    }

    pub fn is_free(&self, layer: usize) -> bool {
        self.free_layers.get(layer).copied().unwrap_or(false)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub depth: usize,
    pub neurons: usize,
    /// Nonzero entries over all weight matrices and bias vectors.
    pub nonzero_weights: usize,
    pub free_weights: usize,
}

pub fn complexity(net: &NetworkParams, free_mask: Option<&FreeMask>) -> ComplexityReport {
    let nonzero_weights = net
        .layers
        .iter()
        .map(|l| l.nnz() + l.bias.iter().filter(|b| **b != 0.0).count())
        .sum();
    let free_weights = free_mask.map_or(0, |mask| {
        net.layers
            .iter()
            .enumerate()
            .filter(|(l, _)| mask.is_free(*l))
            .map(|(_, layer)| layer.rows() * (layer.cols() + 1))
            .sum()
    });
    ComplexityReport {
        depth: net.depth(),
        neurons: net.neurons(),
        nonzero_weights,
        free_weights,
    }
}

// ---------------------------------------------------------------------------
// Gadgets

/// `x = relu(x) - relu(-x)` with `depth - 2` extra identity hidden layers of
/// width `2d`.
pub fn identity_network(d: usize, depth: usize) -> Result<NetworkParams> {
    if d == 0 {
        return Err(invalid("identity network needs d >= 1"));
    }
    if depth < 2 {
        return Err(invalid(format!(
            "identity network needs depth >= 2, got {depth}"
        )));
    }
    let split = (0..2 * d)
        .map(|r| {
            if r < d {
                vec![(r, 1.0)]
            } else {
                vec![(r - d, -1.0)]
            }
        })
        .collect();
    let mut layers = vec![AffineMap::from_sparse_rows(d, split, vec![0.0; 2 * d])?];
    for _ in 0..depth - 2 {
        let eye = (0..2 * d).map(|r| vec![(r, 1.0)]).collect();
        layers.push(AffineMap::from_sparse_rows(2 * d, eye, vec![0.0; 2 * d])?);
    }
    let merge = (0..d).map(|r| vec![(r, 1.0), (r + d, -1.0)]).collect();
    layers.push(AffineMap::from_sparse_rows(2 * d, merge, vec![0.0; d])?);
    NetworkParams::new(d, layers)
}

/// `|x| = relu(x) + relu(-x)` on the real line, depth 2, width 2.
pub fn abs_network() -> NetworkParams {
    let split = AffineMap::from_sparse_rows(1, vec![vec![(0, 1.0)], vec![(0, -1.0)]], vec![0.0; 2])
        .expect("static shape");
    let merge = AffineMap::from_sparse_rows(2, vec![vec![(0, 1.0), (1, 1.0)]], vec![0.0])
        .expect("static shape");
    NetworkParams::new(1, vec![split, merge]).expect("static shape")
}

/// Hidden rows computing `x+y, -x-y, x-y, -x+y` of the inputs at columns
/// `a` and `b`, each input given as a weighted combination of columns.
fn min2_hidden_rows(a: &[(usize, f64)], b: &[(usize, f64)]) -> [Vec<(usize, f64)>; 4] {
    let combo = |sa: f64, sb: f64| -> Vec<(usize, f64)> {
        a.iter()
            .map(|&(c, w)| (c, sa * w))
            .chain(b.iter().map(|&(c, w)| (c, sb * w)))
            .collect()
    };
    [
        combo(1.0, 1.0),
        combo(-1.0, -1.0),
        combo(1.0, -1.0),
        combo(-1.0, 1.0),
    ]
}

/// Output weights `min(x, y) = (h1 - h2 - h3 - h4) / 2` over a block of four
/// hidden units starting at column `base`.
fn min2_readout(base: usize) -> Vec<(usize, f64)> {
    vec![
        (base, 0.5),
        (base + 1, -0.5),
        (base + 2, -0.5),
        (base + 3, -0.5),
    ]
}

/// Shallow width-4 network for `min(x, y)`.
pub fn min2_network() -> NetworkParams {
    min_tree_network(2).expect("d = 2 is valid")
}

/// Binary tree of `min2` gadgets computing `min(x_1, ..., x_d)`.
///
/// For `d = 2^m` the network has depth `m + 1` and `5d - 3` neurons. Other
/// `d` are padded to the next power of two by feeding duplicated inputs into
/// the extra leaves through the first affine map. Leaf `i >= d` reads
/// `x_{i-d}`, so no pair of leaves reads the same input twice and the weights
/// stay in `{0, +-1/2, +-1}`.
pub fn min_tree_network(d: usize) -> Result<NetworkParams> {
    if d == 0 {
        return Err(invalid("minimum of zero arguments"));
    }
    if d == 1 {
        let id = AffineMap::from_sparse_rows(1, vec![vec![(0, 1.0)]], vec![0.0])?;
        return NetworkParams::new(1, vec![id]);
    }
    let padded = d.next_power_of_two();
    let leaf = |i: usize| -> Vec<(usize, f64)> { vec![(if i < d { i } else { i - d }, 1.0)] };

    // first level reads the (padded) inputs directly
    let mut rows = Vec::with_capacity(2 * padded);
    for p in 0..padded / 2 {
        rows.extend(min2_hidden_rows(&leaf(2 * p), &leaf(2 * p + 1)));
    }
    let mut layers = vec![AffineMap::from_sparse_rows(d, rows, vec![0.0; 2 * padded])?];

    // each further level folds the previous readout into its own hidden layer
    let mut pairs = padded / 2;
    while pairs > 1 {
        let prev_width = 4 * pairs;
        let mut rows = Vec::with_capacity(2 * pairs);
        for p in 0..pairs / 2 {
            rows.extend(min2_hidden_rows(
                &min2_readout(8 * p),
                &min2_readout(8 * p + 4),
            ));
        }
        let n = rows.len();
        layers.push(AffineMap::from_sparse_rows(prev_width, rows, vec![0.0; n])?);
        pairs /= 2;
    }
    layers.push(AffineMap::from_sparse_rows(
        4,
        vec![min2_readout(0)],
        vec![0.0],
    )?);
    NetworkParams::new(d, layers)
}

/// Network of the given depth whose output is identically zero.
pub fn zero_network(input_dim: usize, output_dim: usize, depth: usize) -> Result<NetworkParams> {
    if depth == 0 || output_dim == 0 {
        return Err(invalid("zero network needs depth >= 1 and output_dim >= 1"));
    }
    let mut layers = Vec::with_capacity(depth);
    let mut dim = input_dim;
    for _ in 0..depth - 1 {
        layers.push(AffineMap::zero(1, dim));
        dim = 1;
    }
    layers.push(AffineMap::zero(output_dim, dim));
    NetworkParams::new(input_dim, layers)
}

// ---------------------------------------------------------------------------
// Combinators

fn common_depth(nets: &[NetworkParams], what: &str) -> Result<usize> {
    let first = nets
        .first()
        .ok_or_else(|| invalid(format!("{what} needs at least one network")))?;
    let depth = first.depth();
    if let Some((i, n)) = nets.iter().enumerate().find(|(_, n)| n.depth() != depth) {
        return Err(Error::Depth(format!(
            "{what}: network {i} has depth {}, expected {depth} (pad with depth_pad first)",
            n.depth()
        )));
    }
    Ok(depth)
}

/// How the first and last layers of a multi-network combination are wired.
#[derive(Clone, Copy, PartialEq)]
enum Wiring {
    /// Separate inputs, separate outputs.
    Parallel,
    /// Shared input, separate outputs.
    Stacked,
    /// Shared input, outputs summed with coefficients.
    Summed,
}

fn combine(nets: &[NetworkParams], coefficients: &[f64], wiring: Wiring) -> Result<NetworkParams> {
    let depth = common_depth(nets, "combination")?;
    let shared_input = wiring != Wiring::Parallel;
    let input_dim = if shared_input {
        nets[0].input_dim()
    } else {
        nets.iter().map(NetworkParams::input_dim).sum()
    };
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let first = l == 0;
        let last = l + 1 == depth;
        let cols = if first && shared_input {
            input_dim
        } else {
            nets.iter().map(|n| n.layers[l].cols()).sum()
        };
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut bias = Vec::new();
        if last && wiring == Wiring::Summed {
            let m = nets[0].output_dim();
            rows = vec![Vec::new(); m];
            bias = vec![0.0; m];
        }
        let mut col_off = 0;
        for (i, net) in nets.iter().enumerate() {
            let layer = &net.layers[l];
            let off = if first && shared_input { 0 } else { col_off };
            if last && wiring == Wiring::Summed {
                let c = coefficients[i];
                for r in 0..layer.rows() {
                    rows[r].extend(layer.row(r).map(|(j, v)| (j + off, c * v)));
                    bias[r] += c * layer.bias[r];
                }
            } else {
                for r in 0..layer.rows() {
                    rows.push(layer.row(r).map(|(j, v)| (j + off, v)).collect());
                }
                bias.extend_from_slice(&layer.bias);
            }
            col_off += layer.cols();
        }
        layers.push(AffineMap::from_sparse_rows(cols, rows, bias)?);
    }
    NetworkParams::new(input_dim, layers)
}

/// Block-diagonal stacking: `(x_1, ..., x_k) -> (net_1(x_1), ..., net_k(x_k))`.
pub fn parallelize(nets: &[NetworkParams]) -> Result<NetworkParams> {
    combine(nets, &[], Wiring::Parallel)
}

/// Shared-input stacking: `x -> (net_1(x), ..., net_k(x))`.
pub fn stack_networks(nets: &[NetworkParams]) -> Result<NetworkParams> {
    let d = nets.first().map(NetworkParams::input_dim).unwrap_or(0);
    if nets.iter().any(|n| n.input_dim() != d) {
        return Err(Error::Dimension(
            "stacked networks must share the input dimension".into(),
        ));
    }
    combine(nets, &[], Wiring::Stacked)
}

/// `x -> sum_i c_i net_i(x)`.
pub fn sum_networks(nets: &[NetworkParams], coefficients: &[f64]) -> Result<NetworkParams> {
    if nets.len() != coefficients.len() {
        return Err(invalid(format!(
            "{} networks but {} coefficients",
            nets.len(),
            coefficients.len()
        )));
    }
    if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
        return Err(invalid(format!("non-finite coefficient {c}")));
    }
    let (d, m) = match nets.first() {
        Some(n) => (n.input_dim(), n.output_dim()),
        None => return Err(invalid("sum needs at least one network")),
    };
    if let Some(n) = nets
        .iter()
        .find(|n| n.input_dim() != d || n.output_dim() != m)
    {
        return Err(Error::Dimension(format!(
            "summands must all map R^{d} -> R^{m}, found R^{} -> R^{}",
            n.input_dim(),
            n.output_dim()
        )));
    }
    combine(nets, coefficients, Wiring::Summed)
}

/// `outer ∘ inner`, merging inner's last affine map into outer's first one,
/// so `depth = depth(inner) + depth(outer) - 1`.
pub fn compose_networks(outer: &NetworkParams, inner: &NetworkParams) -> Result<NetworkParams> {
    if inner.output_dim() != outer.input_dim() {
        return Err(Error::Dimension(format!(
            "inner output dim {} does not match outer input dim {}",
            inner.output_dim(),
            outer.input_dim()
        )));
    }
    let a = &outer.layers[0];
    let b = inner.layers.last().expect("nonempty");
    let mut acc = vec![0.0; b.cols()];
    let mut touched = Vec::new();
    let mut rows = Vec::with_capacity(a.rows());
    let mut bias = Vec::with_capacity(a.rows());
    for r in 0..a.rows() {
        let mut bb = a.bias[r];
        for (k, w) in a.row(r) {
            bb += w * b.bias[k];
            for (c, v) in b.row(k) {
                if acc[c] == 0.0 {
                    touched.push(c);
                }
                acc[c] += w * v;
            }
        }
        touched.sort_unstable();
        touched.dedup();
        rows.push(touched.iter().map(|&c| (c, acc[c])).collect());
        for &c in &touched {
            acc[c] = 0.0;
        }
        touched.clear();
        bias.push(bb);
    }
    let merged = AffineMap::from_sparse_rows(b.cols(), rows, bias)?;
    let mut layers = inner.layers[..inner.layers.len() - 1].to_vec();
    layers.push(merged);
    layers.extend_from_slice(&outer.layers[1..]);
    NetworkParams::new(inner.input_dim(), layers)
}

/// `outer ∘ relu ∘ inner`: concatenates the layer lists so a ReLU sits
/// between them; `depth = depth(inner) + depth(outer)`.
pub fn chain_networks(outer: &NetworkParams, inner: &NetworkParams) -> Result<NetworkParams> {
    if inner.output_dim() != outer.input_dim() {
        return Err(Error::Dimension(format!(
            "inner output dim {} does not match outer input dim {}",
            inner.output_dim(),
            outer.input_dim()
        )));
    }
    let mut layers = inner.layers.clone();
    layers.extend_from_slice(&outer.layers);
    NetworkParams::new(inner.input_dim(), layers)
}

/// Extends `net` to exactly `depth` layers by composing identity layers onto
/// its output. The realised function is unchanged.
pub fn depth_pad(net: &NetworkParams, depth: usize) -> Result<NetworkParams> {
    match depth.cmp(&net.depth()) {
        std::cmp::Ordering::Less => Err(Error::Depth(format!(
            "cannot pad a depth-{} network down to depth {depth}",
            net.depth()
        ))),
        std::cmp::Ordering::Equal => Ok(net.clone()),
        std::cmp::Ordering::Greater => {
            let extra = depth - net.depth();
            compose_networks(&identity_network(net.output_dim(), extra + 1)?, net)
        }
    }
}

/// Scales the output of `net` by `c` (folded into the last affine map).
pub fn scale_network(net: &NetworkParams, c: f64) -> Result<NetworkParams> {
    let last = net.layers.last().expect("nonempty");
    let rows = last
        .sparse_rows()
        .into_iter()
        .map(|row| row.into_iter().map(|(j, v)| (j, c * v)).collect())
        .collect();
    let bias = last.bias.iter().map(|b| c * b).collect();
    let mut layers = net.layers[..net.layers.len() - 1].to_vec();
    layers.push(AffineMap::from_sparse_rows(last.cols(), rows, bias)?);
    NetworkParams::new(net.input_dim(), layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_net(input_dim: usize, layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> NetworkParams {
        let mut dim = input_dim;
        let mut maps = Vec::new();
        for (w, b) in layers {
            let m = AffineMap::from_dense(w, b.clone(), dim).unwrap();
            dim = m.rows();
            maps.push(m);
        }
        NetworkParams::new(input_dim, maps).unwrap()
    }

    /// Independent forward pass over dense matrices.
    fn dense_eval(net: &NetworkParams, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (l, layer) in net.layers().iter().enumerate() {
            let w = layer.to_dense();
            let mut out: Vec<f64> = w
                .iter()
                .zip(layer.bias())
                .map(|(row, b)| row.iter().zip(&cur).map(|(a, x)| a * x).sum::<f64>() + b)
                .collect();
            if l + 1 < net.depth() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cur = out;
        }
        cur
    }

    fn random_net(rng: &mut ChaCha8Rng, widths: &[usize]) -> NetworkParams {
        let layers: Vec<_> = widths
            .windows(2)
            .map(|w| {
                let m: Vec<Vec<f64>> = (0..w[1])
                    .map(|_| (0..w[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let b = (0..w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                (m, b)
            })
            .collect();
        dense_net(widths[0], &layers)
    }

    #[test]
    fn gadget_values() {
        assert_eq!(abs_network().eval(&[-3.0]).unwrap(), vec![3.0]);
        assert_eq!(
            identity_network(1, 2).unwrap().eval(&[-2.0]).unwrap(),
            vec![-2.0]
        );
        assert_eq!(
            identity_network(1, 2).unwrap().eval(&[7.5]).unwrap(),
            vec![7.5]
        );
        assert_eq!(
            identity_network(3, 5)
                .unwrap()
                .eval(&[-1.0, 0.0, 2.0])
                .unwrap(),
            vec![-1.0, 0.0, 2.0]
        );
        assert_eq!(min2_network().eval(&[3.0, -1.0]).unwrap(), vec![-1.0]);
        assert_eq!(min2_network().eval(&[0.25, 0.25]).unwrap(), vec![0.25]);
        assert_eq!(
            min_tree_network(2).unwrap().eval(&[3.0, -1.0]).unwrap(),
            vec![-1.0]
        );
        assert_eq!(
            min_tree_network(3).unwrap().eval(&[2.0, 5.0, 1.0]).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn hand_composed_two_layer_net() {
        let net = dense_net(
            2,
            &[
                (vec![vec![2.0, 0.0], vec![0.0, 1.0]], vec![-1.0, 0.0]),
                (vec![vec![1.0, 1.0]], vec![0.0]),
            ],
        );
        assert_eq!(net.eval(&[1.0, 1.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn eval_rejects_wrong_input_length() {
        let err = min2_network().eval(&[1.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::LayerDimension {
                layer: 1,
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn constructor_names_offending_layer() {
        let a = AffineMap::from_dense(&[vec![1.0, 2.0]], vec![0.0], 2).unwrap();
        let b = AffineMap::from_dense(&[vec![1.0, 2.0]], vec![0.0], 2).unwrap();
        let err = NetworkParams::new(2, vec![a, b]).unwrap_err();
        assert!(matches!(
            err,
            Error::LayerDimension {
                layer: 2,
                expected: 1,
                found: 2
            }
        ));
        assert!(AffineMap::from_dense(&[vec![1.0]], vec![0.0, 1.0], 1).is_err());
        assert!(AffineMap::from_dense(&[vec![f64::NAN]], vec![0.0], 1).is_err());
    }

    #[test]
    fn identity_depth_validation_and_neurons() {
        assert!(identity_network(1, 1).is_err());
        assert_eq!(identity_network(2, 2).unwrap().neurons(), 8);
        assert_eq!(
            complexity(&identity_network(1, 2).unwrap(), None).neurons,
            4
        );
        assert_eq!(identity_network(3, 5).unwrap().depth(), 5);
    }

    #[test]
    fn min2_shape_and_weights() {
        let net = min2_network();
        assert_eq!(net.widths(), vec![2, 4, 1]);
        let allowed = [0.5, -0.5, 1.0, -1.0];
        for layer in net.layers() {
            assert!(layer.weight_values().all(|w| allowed.contains(&w)));
            assert!(layer.bias().iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn min_tree_complexity_laws() {
        for d in [1usize, 2, 4, 8, 16] {
            let net = min_tree_network(d).unwrap();
            assert_eq!(net.neurons(), 5 * d - 3, "d = {d}");
            let log2 = (d as f64).log2().ceil() as usize;
            assert_eq!(net.depth(), log2 + 1, "d = {d}");
        }
        assert!(min_tree_network(0).is_err());
    }

    #[test]
    fn min_tree_nonzero_weight_count() {
        // Hand count of the construction: 4d weights in the first level,
        // 8 per hidden unit of every merged level (widths d, d/2, ..., 4)
        // and 4 in the readout, i.e. 20d - 28 for d >= 4 and 12 for d = 2.
        assert_eq!(
            complexity(&min_tree_network(2).unwrap(), None).nonzero_weights,
            12
        );
        for d in [4usize, 8, 16, 32] {
            let report = complexity(&min_tree_network(d).unwrap(), None);
            assert_eq!(report.nonzero_weights, 20 * d - 28, "d = {d}");
            assert_eq!(report.free_weights, 0);
        }
    }

    #[test]
    fn min_tree_general_d_weight_set() {
        let allowed = [0.5, -0.5, 1.0, -1.0];
        for d in 1..=20 {
            let net = min_tree_network(d).unwrap();
            for layer in net.layers() {
                assert!(
                    layer.weight_values().all(|w| allowed.contains(&w)),
                    "d = {d}"
                );
            }
        }
    }

    #[test]
    fn parallelize_examples() {
        let id = identity_network(1, 2).unwrap();
        let p = parallelize(&[id.clone(), id.clone()]).unwrap();
        assert_eq!(p.eval(&[1.0, -1.0]).unwrap(), vec![1.0, -1.0]);
        let q = parallelize(&[abs_network(), id.clone()]).unwrap();
        assert_eq!(q.eval(&[-2.0, -2.0]).unwrap(), vec![2.0, -2.0]);
        assert_eq!(q.neurons(), abs_network().neurons() + id.neurons());
        assert!(parallelize(&[abs_network(), identity_network(1, 3).unwrap()]).is_err());
    }

    #[test]
    fn sum_examples() {
        let id = identity_network(1, 2).unwrap();
        let s = sum_networks(&[abs_network(), id], &[1.0, 1.0]).unwrap();
        assert_eq!(s.eval(&[-1.0]).unwrap(), vec![0.0]);
        let neg = sum_networks(&[abs_network()], &[-1.0]).unwrap();
        assert_eq!(neg.eval(&[4.0]).unwrap(), vec![-4.0]);
        assert!(sum_networks(&[abs_network()], &[1.0, 2.0]).is_err());
        assert!(sum_networks(&[abs_network(), min2_network()], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sum_with_single_net_is_pointwise_equal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = random_net(&mut rng, &[3, 5, 4, 2]);
        let s = sum_networks(std::slice::from_ref(&net), &[1.0]).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(s.eval(&x).unwrap(), net.eval(&x).unwrap());
        }
    }

    #[test]
    fn compose_examples() {
        let id = identity_network(1, 2).unwrap();
        let c = compose_networks(&id, &abs_network()).unwrap();
        assert_eq!(c.eval(&[-5.0]).unwrap(), vec![5.0]);
        let inner = parallelize(&[min2_network(), min2_network()]).unwrap();
        let tree = compose_networks(&min2_network(), &inner).unwrap();
        assert_eq!(tree.depth(), 3);
        assert_eq!(tree.eval(&[4.0, 2.0, 3.0, 7.0]).unwrap(), vec![2.0]);
        assert!(compose_networks(&min2_network(), &abs_network()).is_err());
    }

    #[test]
    fn compose_matches_two_stage_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inner = random_net(&mut rng, &[2, 6, 3]);
        let outer = random_net(&mut rng, &[3, 4, 5, 2]);
        let c = compose_networks(&outer, &inner).unwrap();
        assert_eq!(c.depth(), inner.depth() + outer.depth() - 1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let two_stage = dense_eval(&outer, &dense_eval(&inner, &x));
            for (a, b) in c.eval(&x).unwrap().iter().zip(&two_stage) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn depth_pad_preserves_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = random_net(&mut rng, &[2, 3, 2]);
        let padded = depth_pad(&net, 5).unwrap();
        assert_eq!(padded.depth(), 5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(padded.eval(&x).unwrap(), net.eval(&x).unwrap());
        }
        assert!(depth_pad(&net, 1).is_err());
    }

    #[test]
    fn zero_network_is_zero() {
        let z = zero_network(3, 2, 4).unwrap();
        assert_eq!(z.depth(), 4);
        assert_eq!(z.eval(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(complexity(&z, None).nonzero_weights, 0);
    }

    #[test]
    fn sparse_eval_matches_dense_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = random_net(&mut rng, &[4, 7, 7, 3]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            for (a, b) in net.eval(&x).unwrap().iter().zip(dense_eval(&net, &x)) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn json_round_trip_is_value_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_net(&mut rng, &[3, 5, 2]);
        let back = NetworkParams::from_json_str(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let tree = min_tree_network(5).unwrap();
        assert_eq!(NetworkParams::from_json_str(&tree.to_json()).unwrap(), tree);
    }

    #[test]
    fn json_rejects_bad_documents() {
        for doc in [
            r#"{"input_dim": 0, "layers": [{"weights": [], "bias": []}]}"#,
            r#"{"input_dim": 1, "layers": []}"#,
            r#"{"input_dim": 2, "layers": [{"weights": [[1.0]], "bias": [0.0]}]}"#,
            r#"{"input_dim": 1, "layers": [{"weights": [[1.0]], "bias": [0.0, 1.0]}]}"#,
            r#"{"input_dim": 1, "layers": [{"weights": [], "bias": []}]}"#,
            r#"{"input_dim": 1, "layers": [{"weights": [[1e999]], "bias": [0.0]}]}"#,
            r#"{"input_dim": 1}"#,
            "not json",
        ] {
            assert!(NetworkParams::from_json_str(doc).is_err(), "{doc}");
        }
    }
}
