//! Euler discretisation, an RK4 reference solver, and the explicit error
//! bounds (generalised Grönwall constant, continuity of the solution map,
//! perturbed Euler estimate, growth bound).

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub type RhsFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Right-hand side `f(t, x)` on `[0, 1] x R^d` with caller-declared
/// regularity: `|f| <= bound_c` and spatial Lipschitz constant `lipschitz_l`.
#[derive(Clone)]
pub struct RhsSpec {
    f: RhsFn,
    dim: usize,
    bound_c: f64,
    lipschitz_l: f64,
    time_lipschitz: Option<f64>,
    piecewise_constant_pieces: Option<usize>,
}

impl fmt::Debug for RhsSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RhsSpec")
            .field("dim", &self.dim)
            .field("bound_c", &self.bound_c)
            .field("lipschitz_l", &self.lipschitz_l)
            .field("time_lipschitz", &self.time_lipschitz)
            .field("piecewise_constant_pieces", &self.piecewise_constant_pieces)
            .finish_non_exhaustive()
    }
}

impl RhsSpec {
    pub fn new(
        dim: usize,
        f: impl Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
        bound_c: f64,
        lipschitz_l: f64,
    ) -> Result<Self> {
        Self::from_arc(dim, Arc::new(f), bound_c, lipschitz_l)
    }

    pub fn from_arc(dim: usize, f: RhsFn, bound_c: f64, lipschitz_l: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("state dimension must be positive"));
        }
        if !(bound_c >= 0.0) || !(lipschitz_l >= 0.0) {
            return Err(invalid(format!(
                "bound ({bound_c}) and Lipschitz constant ({lipschitz_l}) must be non-negative"
            )));
        }
        Ok(Self {
            f,
            dim,
            bound_c,
            lipschitz_l,
            time_lipschitz: None,
            piecewise_constant_pieces: None,
        })
    }

    pub fn with_time_lipschitz(mut self, lt: f64) -> Result<Self> {
        if !(lt >= 0.0) {
            return Err(invalid("time Lipschitz constant must be non-negative"));
        }
        self.time_lipschitz = Some(lt);
        Ok(self)
    }

    /// Declares `f` constant in time on every `[i/n, (i+1)/n)`.
    pub fn with_piecewise_constant(mut self, pieces: usize) -> Result<Self> {
        if pieces == 0 {
            return Err(invalid("piece count must be positive"));
        }
        self.piecewise_constant_pieces = Some(pieces);
        Ok(self)
    }

    /// Freezes time at the left endpoint of each of `pieces` intervals,
    /// giving a piecewise-constant-in-time right-hand side.
    pub fn frozen_in_time(&self, pieces: usize) -> Result<Self> {
        if pieces == 0 {
            return Err(invalid("piece count must be positive"));
        }
        let inner = self.f.clone();
        let f = move |t: f64, x: &[f64]| inner(time_index(t, pieces) as f64 / pieces as f64, x);
        let mut spec = Self::from_arc(self.dim, Arc::new(f), self.bound_c, self.lipschitz_l)?;
        spec.time_lipschitz = self.time_lipschitz;
        spec.with_piecewise_constant(pieces)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bound_c(&self) -> f64 {
        self.bound_c
    }

    pub fn lipschitz_l(&self) -> f64 {
        self.lipschitz_l
    }

    pub fn time_lipschitz(&self) -> Option<f64> {
        self.time_lipschitz
    }

    pub fn piecewise_constant_pieces(&self) -> Option<usize> {
        self.piecewise_constant_pieces
    }

    pub fn func(&self) -> &RhsFn {
        &self.f
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let y = (self.f)(t, x);
        if y.len() != self.dim {
            return Err(Error::Dimension(format!(
                "right-hand side returned {} components, expected {}",
                y.len(),
                self.dim
            )));
        }
        Ok(y)
    }

    /// Samples random `(t, x, y)` in `[0,1] x [-radius, radius]^{2d}` and
    /// compares against the declared bound and Lipschitz constant. Violations
    /// are logged, not returned as errors.
    pub fn check_declared(&self, radius: f64, samples: usize, seed: u64) -> DeclaredCheck {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut check = DeclaredCheck::default();
        for _ in 0..samples {
            let t = rng.random_range(0.0..1.0);
            let x: Vec<f64> = (0..self.dim)
                .map(|_| rng.random_range(-radius..=radius))
                .collect();
            let y: Vec<f64> = (0..self.dim)
                .map(|_| rng.random_range(-radius..=radius))
                .collect();
            let fx = (self.f)(t, &x);
            let fy = (self.f)(t, &y);
            let nx = norm(&fx);
            check.max_norm = check.max_norm.max(nx).max(norm(&fy));
            let gap = dist(&x, &y);
            if gap > 0.0 {
                check.max_ratio = check.max_ratio.max(dist(&fx, &fy) / gap);
            }
        }
        check.bound_ok = check.max_norm <= self.bound_c * (1.0 + 1e-9) + 1e-12;
        check.lipschitz_ok = check.max_ratio <= self.lipschitz_l * (1.0 + 1e-9) + 1e-12;
        if !check.bound_ok {
            log::warn!(
                "sampled |f| = {} exceeds the declared bound {}",
                check.max_norm,
                self.bound_c
            );
        }
        if !check.lipschitz_ok {
            log::warn!(
                "sampled Lipschitz ratio {} exceeds the declared constant {}",
                check.max_ratio,
                self.lipschitz_l
            );
        }
        check
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DeclaredCheck {
    pub max_norm: f64,
    pub max_ratio: f64,
    pub bound_ok: bool,
    pub lipschitz_ok: bool,
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Index `i` of the interval `[i/n, (i+1)/n)` containing `t`. Times within
/// rounding of a node `k/n` are assigned to interval `k`; `t = 1` belongs to
/// the last interval.
pub fn time_index(t: f64, n: usize) -> usize {
    let s = t * n as f64;
    let r = s.round();
    let k = if (s - r).abs() <= 1e-9 { r } else { s.floor() };
    (k.max(0.0) as usize).min(n - 1)
}

/// Partition `0 = t_0 < ... < t_n = 1`. Uniform partitions use the exact
/// step `1.0 / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
    uniform: Option<usize>,
}

impl Partition {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("partition needs at least one interval"));
        }
        let times = (0..=n).map(|i| i as f64 / n as f64).collect();
        Ok(Self {
            times,
            uniform: Some(n),
        })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(invalid("partition must start at 0 and end at 1"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("partition must be strictly increasing"));
        }
        Ok(Self {
            times,
            uniform: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn step(&self, i: usize) -> f64 {
        match self.uniform {
            Some(n) => 1.0 / n as f64,
            None => self.times[i + 1] - self.times[i],
        }
    }
}

/// States on a time mesh, linearly interpolated in between.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return Err(invalid("need one state per time and at least one time"));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "trajectory times must start at 0 and increase strictly",
            ));
        }
        let mut flat = Vec::with_capacity(dim * states.len());
        for s in &states {
            if s.len() != dim {
                return Err(Error::Dimension(format!(
                    "state of length {} in dimension {dim}",
                    s.len()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(invalid("trajectory states must be finite"));
            }
            flat.extend_from_slice(s);
        }
        Ok(Self {
            dim,
            times,
            states: flat,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let last = *self.times.last().unwrap();
        if !(0.0..=last).contains(&t) {
            return Err(invalid(format!("time {t} outside [0, {last}]")));
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == self.times.len() {
            return Ok(self.final_state().to_vec());
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        if t == t0 {
            return Ok(self.state(i - 1).to_vec());
        }
        let w = (t - t0) / (t1 - t0);
        Ok(self
            .state(i - 1)
            .iter()
            .zip(self.state(i))
            .map(|(a, b)| a + w * (b - a))
            .collect())
    }

    /// Largest state norm; attained at a mesh node since the interpolant is
    /// piecewise linear.
    pub fn max_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| norm(self.state(i)))
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x1,...,xd`, full round-trip precision, LF endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.dim {
            out.push_str(&format!(",x{i}"));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:?}"));
            for x in self.state(i) {
                out.push_str(&format!(",{x:?}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `x(t_{i+1}) = x(t_i) + (t_{i+1} - t_i) f(t_i, x(t_i))`.
pub fn euler_solve(rhs: &RhsSpec, y0: &[f64], partition: &Partition) -> Result<Trajectory> {
    check_initial(rhs, y0)?;
    let mut states = Vec::with_capacity(partition.times().len());
    let mut x = y0.to_vec();
    states.push(x.clone());
    for i in 0..partition.intervals() {
        let fx = rhs.eval(partition.times()[i], &x)?;
        let dt = partition.step(i);
        for (xi, fi) in x.iter_mut().zip(&fx) {
            *xi += dt * fi;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "Euler iterate became non-finite at step {i}"
            )));
        }
        states.push(x.clone());
    }
    Trajectory::new(rhs.dim(), partition.times().to_vec(), states)
}

fn check_initial(rhs: &RhsSpec, y0: &[f64]) -> Result<()> {
    if y0.len() != rhs.dim() {
        return Err(Error::Dimension(format!(
            "initial value has length {}, expected {}",
            y0.len(),
            rhs.dim()
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial value must be finite"));
    }
    Ok(())
}

const MAX_HALVINGS: usize = 20;

/// Classical RK4 on `steps` uniform steps. For piecewise-constant rhs the
/// steps are aligned with the pieces and every stage reads the piece at the
/// step's left endpoint.
fn rk4(rhs: &RhsSpec, y0: &[f64], steps: usize) -> Result<Trajectory> {
    let h = 1.0 / steps as f64;
    let frozen = rhs.piecewise_constant_pieces().is_some();
    let d = rhs.dim();
    let mut x = y0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x.clone());
    let mut tmp = vec![0.0; d];
    for i in 0..steps {
        let t = i as f64 / steps as f64;
        let (tm, te) = if frozen { (t, t) } else { (t + 0.5 * h, t + h) };
        let k1 = rhs.eval(t, &x)?;
        tmp.iter_mut()
            .zip(&x)
            .zip(&k1)
            .for_each(|((o, a), k)| *o = a + 0.5 * h * k);
        let k2 = rhs.eval(tm, &tmp)?;
        tmp.iter_mut()
            .zip(&x)
            .zip(&k2)
            .for_each(|((o, a), k)| *o = a + 0.5 * h * k);
        let k3 = rhs.eval(tm, &tmp)?;
        tmp.iter_mut()
            .zip(&x)
            .zip(&k3)
            .for_each(|((o, a), k)| *o = a + h * k);
        let k4 = rhs.eval(te, &tmp)?;
        for j in 0..d {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Oracle(format!(
                "RK4 iterate became non-finite at step {i}"
            )));
        }
        times.push((i + 1) as f64 / steps as f64);
        states.push(x.clone());
    }
    Trajectory::new(d, times, states)
}

/// Sup over the fine mesh of the distance between the fine trajectory and
/// the linear interpolant of the coarse one (fine has twice the steps).
fn refinement_gap(coarse: &Trajectory, fine: &Trajectory) -> f64 {
    let mut gap: f64 = 0.0;
    for i in 0..fine.len() {
        let f = fine.state(i);
        let g = if i % 2 == 0 {
            dist(f, coarse.state(i / 2))
        } else {
            let a = coarse.state(i / 2);
            let b = coarse.state(i / 2 + 1);
            let mid: Vec<f64> = a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect();
            dist(f, &mid)
        };
        gap = gap.max(g);
    }
    gap
}

/// High-accuracy stand-in for the exact solution: RK4 with step halving until
/// two successive piecewise-linear trajectories differ by less than `tol/10`.
pub fn reference_solve(rhs: &RhsSpec, y0: &[f64], tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    check_initial(rhs, y0)?;
    let pieces = rhs.piecewise_constant_pieces().unwrap_or(1);
    let mut steps = pieces * 16usize.div_ceil(pieces);
    let mut coarse = rk4(rhs, y0, steps)?;
    for _ in 0..MAX_HALVINGS {
        steps *= 2;
        let fine = rk4(rhs, y0, steps)?;
        if refinement_gap(&coarse, &fine) < tol / 10.0 {
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(Error::Oracle(format!(
        "no convergence to tolerance {tol} after {MAX_HALVINGS} step halvings ({steps} steps); \
         the right-hand side may be non-smooth or mis-declared"
    )))
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be finite and non-negative, got {v}"
        )))
    }
}

/// `1 + b exp(b)` for `b = |beta|_{L^1}`.
pub fn gronwall_constant(beta_l1: f64) -> Result<f64> {
    non_negative("beta L1 norm", beta_l1)?;
    Ok(1.0 + beta_l1 * beta_l1.exp())
}

/// `sup |x - y| <= C(|x0 - y0| + |f - g|_{L^1 L^inf})` with `C` the Grönwall
/// constant of the Lipschitz modulus.
pub fn solution_map_bound(init_gap: f64, rhs_gap_l1: f64, lipschitz_l1: f64) -> Result<f64> {
    non_negative("initial gap", init_gap)?;
    non_negative("rhs gap", rhs_gap_l1)?;
    Ok(gronwall_constant(lipschitz_l1)? * (init_gap + rhs_gap_l1))
}

/// Error bound for an Euler scheme whose directions are `eps`-accurate and
/// bounded by `c`: `C (eps + c/n |h|_{L^1})`.
pub fn perturbed_euler_bound(eps: f64, c: f64, n: usize, lipschitz_l1: f64) -> Result<f64> {
    non_negative("eps", eps)?;
    non_negative("c", c)?;
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    Ok(gronwall_constant(lipschitz_l1)? * (eps + c / n as f64 * lipschitz_l1))
}

/// `|x(t)| <= |x0| + c`.
pub fn growth_bound(y0_norm: f64, c: f64) -> f64 {
    y0_norm + c
}
