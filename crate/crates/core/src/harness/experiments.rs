//! The four experiments behind the command-line front end. Each writes its
//! data files into the output directory and returns the rows it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::registry::{rhs_by_name, target_by_name};
use crate::error::{invalid, Error, Result};
use crate::network::{complexity, NetworkParams};
use crate::ode::{growth_bound, norm, reference_solve, RhsSpec};
use crate::pwl::{compile_pwl_with_mask, interpolate, PwlFunction};
use crate::resnet::{build_block, build_resnet_with_accuracy, build_shared_resnet, ResNetParams};

/// Default per-block accuracy for weight-sharing runs.
pub const SHARED_BLOCK_EPS: f64 = 0.01;

/// Largest admissible deviation of a compiled network from its PWL source,
/// relative to `1 + max |value|`.
pub const COMPILE_TOL: f64 = 1e-9;

pub const COMPILE_SAMPLES: usize = 10_000;

/// Uniform `(t, y)` sample grid on `[0, 1] x [-k, k]^d`.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl SampleGrid {
    pub fn new(dim: usize, k: f64, time_samples: usize, space_samples: usize) -> Self {
        let axis = |m: usize, lo: f64, hi: f64| -> Vec<f64> {
            (0..m)
                .map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64)
                .collect()
        };
        let times = axis(time_samples, 0.0, 1.0);
        let ax = axis(space_samples, -k, k);
        let mut points = vec![Vec::new()];
        for _ in 0..dim {
            points = points
                .into_iter()
                .flat_map(|p| {
                    ax.iter().map(move |&a| {
                        let mut q = p.clone();
                        q.push(a);
                        q
                    })
                })
                .collect();
        }
        Self { times, points }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self::new(cfg.dim, cfg.k_radius, cfg.time_samples, cfg.space_samples)
    }
}

/// Reference solutions `x(t, y)` for every sample, indexed `[y][t]`.
pub fn reference_values(rhs: &RhsSpec, grid: &SampleGrid, tol: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    grid.points
        .par_iter()
        .map(|y| {
            let tr = reference_solve(rhs, y, tol)?;
            grid.times.iter().map(|&t| tr.eval(t)).collect()
        })
        .collect()
}

/// Sup error of a residual network against reference values, and the
/// largest excess of a node state over the growth bound `|y| + c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub sup_error: f64,
    pub growth_excess: f64,
}

pub fn measure(
    net: &ResNetParams,
    grid: &SampleGrid,
    refs: &[Vec<Vec<f64>>],
    c: f64,
) -> Result<Measured> {
    let per_y = grid
        .points
        .par_iter()
        .zip(refs)
        .map(|(y, r)| {
            let tr = net.trajectory(y)?;
            let mut err: f64 = 0.0;
            for (&t, x_ref) in grid.times.iter().zip(r) {
                let x = tr.eval(t)?;
                let d = x
                    .iter()
                    .zip(x_ref)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                err = err.max(d);
            }
            let excess = tr.max_norm() - growth_bound(norm(y), c);
            Ok(Measured {
                sup_error: err,
                growth_excess: excess,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_y.into_iter().fold(
        Measured {
            sup_error: 0.0,
            growth_excess: f64::NEG_INFINITY,
        },
        |a, b| Measured {
            sup_error: a.sup_error.max(b.sup_error),
            growth_excess: a.growth_excess.max(b.growth_excess),
        },
    ))
}

/// Least-squares slope of `log e` against `log n`; `None` if fewer than two
/// points or any error is not positive.
pub fn loglog_slope(ns: &[usize], errs: &[f64]) -> Option<f64> {
    if ns.len() < 2 || ns.len() != errs.len() || errs.iter().any(|e| !(*e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn experiment_rhs(cfg: &ExperimentConfig) -> Result<RhsSpec> {
    let rhs = rhs_by_name(&cfg.rhs, cfg.dim, &cfg.coeffs)?;
    let radius = cfg.base_radius(rhs.bound_c());
    rhs.check_declared(radius, 1000, cfg.seed);
    Ok(rhs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub r_n: f64,
    pub sup_error: f64,
    pub apriori_bound: f64,
    pub block_neurons: usize,
    pub block_depth: usize,
    pub free_weights: usize,
    pub growth_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    pub rhs: String,
    pub dim: usize,
    pub rows: Vec<ConvergenceRow>,
    pub slope: Option<f64>,
    pub oracle_tol: f64,
}

impl ErrorReport {
    pub fn bounds_hold(&self) -> bool {
        self.rows.iter().all(|r| r.sup_error <= r.apriori_bound)
    }
}

/// Builds a residual network for each `n`, measures its sup error against
/// the reference flow on the sample grid, and writes `convergence.csv` and
/// `convergence_summary.json`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ErrorReport> {
    cfg.validate()?;
    let rhs = experiment_rhs(cfg)?;
    let grid = SampleGrid::from_config(cfg);
    let refs = reference_values(&rhs, &grid, cfg.oracle_tol)?;
    let base = cfg.base_radius(rhs.bound_c());
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let r_n = cfg.r_rule.radius(base, n);
        let eps = cfg.block_eps.unwrap_or(1.0 / n as f64);
        let (net, report) = build_resnet_with_accuracy(&rhs, n, r_n, eps)?;
        let m = measure(&net, &grid, &refs, rhs.bound_c())?;
        let block = report.max_block();
        log::info!(
            "n = {n}: sup error {:e}, bound {:e}",
            m.sup_error,
            report.apriori_bound
        );
        rows.push(ConvergenceRow {
            n,
            r_n,
            sup_error: m.sup_error,
            apriori_bound: report.apriori_bound,
            block_neurons: block.neurons,
            block_depth: block.depth,
            free_weights: block.free_weights,
            growth_excess: m.growth_excess,
        });
    }
    let ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
    let report = ErrorReport {
        rhs: cfg.rhs.clone(),
        dim: cfg.dim,
        slope: loglog_slope(&ns, &errs),
        oracle_tol: cfg.oracle_tol,
        rows,
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let lines: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{:?},{:?},{},{},{}",
                r.n, r.sup_error, r.apriori_bound, r.block_neurons, r.block_depth, r.free_weights
            )
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("convergence.csv"),
        "n,sup_error,apriori_bound,block_neurons,block_depth,free_weights",
        &lines,
    )?;
    write_json(&cfg.out_dir.join("convergence_summary.json"), &report)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub n: usize,
    pub r_n: f64,
    pub neurons: usize,
    pub depth: usize,
    pub free_weights: usize,
    pub bound_const: f64,
}

/// Largest admissible spread `max/min` of `neurons / (r_n n)^d`.
pub const BOUND_CONST_SPREAD: f64 = 4.0;

/// Per-block size against `(r_n n)^d`, written to `complexity.csv`. The
/// block at `t = 0` is measured. Fails with a verification error (after
/// writing) if the normalised size varies by more than a factor 4.
pub fn run_complexity(cfg: &ExperimentConfig) -> Result<Vec<ComplexityRow>> {
    cfg.validate()?;
    let rhs = experiment_rhs(cfg)?;
    let base = cfg.base_radius(rhs.bound_c());
    let d = cfg.dim as i32;
    let rows = cfg
        .n_list
        .iter()
        .map(|&n| {
            let r_n = cfg.r_rule.radius(base, n);
            let eps = cfg.block_eps.unwrap_or(1.0 / n as f64);
            let (_, report) = build_block(&rhs, 0.0, r_n, eps)?;
            Ok(ComplexityRow {
                n,
                r_n,
                neurons: report.neurons,
                depth: report.depth,
                free_weights: report.free_weights,
                bound_const: report.neurons as f64 / (r_n.powi(d) * (n as f64).powi(d)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{:?},{},{},{},{:?}",
                r.n, r.r_n, r.neurons, r.depth, r.free_weights, r.bound_const
            )
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("complexity.csv"),
        "n,r_n,neurons,depth,free_weights,bound_const",
        &lines,
    )?;
    let hi = rows.iter().map(|r| r.bound_const).fold(f64::MIN, f64::max);
    let lo = rows.iter().map(|r| r.bound_const).fold(f64::MAX, f64::min);
    if lo > 0.0 && hi / lo > BOUND_CONST_SPREAD {
        return Err(Error::Verification(format!(
            "normalised block size varies by {:.3} (limit {BOUND_CONST_SPREAD})",
            hi / lo
        )));
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub enum CompileSource {
    PwlFile(PathBuf),
    Function {
        name: String,
        dim: usize,
        radius: f64,
        delta: f64,
        coeffs: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompileSummary {
    pub dim: usize,
    pub output_dim: usize,
    pub depth: usize,
    pub neurons: usize,
    pub nonzero_weights: usize,
    pub free_weights: usize,
    pub degrees_of_freedom: usize,
    pub samples: usize,
    pub max_deviation: f64,
    pub scale: f64,
}

impl CompileSummary {
    pub fn verified(&self) -> bool {
        self.max_deviation <= COMPILE_TOL * self.scale
    }
}

pub fn load_source(source: &CompileSource) -> Result<PwlFunction> {
    match source {
        CompileSource::PwlFile(path) => {
            let bytes = fs::read(path)
                .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
            PwlFunction::from_json_slice(&bytes)
        }
        CompileSource::Function {
            name,
            dim,
            radius,
            delta,
            coeffs,
        } => {
            let target = target_by_name(name, *dim, coeffs)?;
            let f = target.f.clone();
            interpolate(*dim, *dim, &move |x: &[f64]| f(x), *radius, *delta)
        }
    }
}

/// Max deviation between `net` and the PWL oracle over `samples` uniform
/// points of `[-r-1, r+1]^d`.
pub fn max_deviation(
    net: &NetworkParams,
    pwl: &PwlFunction,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = pwl.cube_radius() + 1.0;
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| (0..pwl.dim()).map(|_| rng.random_range(-w..=w)).collect())
        .collect();
    let devs = points
        .par_iter()
        .map(|x| {
            let a = net.eval(x)?;
            let b = pwl.eval(x)?;
            Ok(a.iter()
                .zip(&b)
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// Compiles a PWL function into `network.json`, checks it against the
/// oracle on random points, and writes `compile_summary.json`.
pub fn run_compile(source: &CompileSource, out_dir: &Path, seed: u64) -> Result<CompileSummary> {
    let pwl = load_source(source)?;
    let (net, mask) = compile_pwl_with_mask(&pwl)?;
    let report = complexity(&net, Some(&mask));
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("network.json"), net.to_json())?;
    let dev = max_deviation(&net, &pwl, COMPILE_SAMPLES, seed)?;
    let summary = CompileSummary {
        dim: pwl.dim(),
        output_dim: pwl.output_dim(),
        depth: report.depth,
        neurons: report.neurons,
        nonzero_weights: report.nonzero_weights,
        free_weights: report.free_weights,
        degrees_of_freedom: pwl.degrees_of_freedom(),
        samples: COMPILE_SAMPLES,
        max_deviation: dev,
        scale: 1.0 + pwl.max_abs_value(),
    };
    write_json(&out_dir.join("compile_summary.json"), &summary)?;
    if !summary.verified() {
        return Err(Error::Verification(format!(
            "compiled network deviates by {dev:e} from the PWL oracle (limit {:e})",
            COMPILE_TOL * summary.scale
        )));
    }
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SharedRow {
    pub k: usize,
    pub blocks: usize,
    pub distinct_params: usize,
    pub sup_error: f64,
}

/// Weight-sharing runs: the rhs is frozen to `pieces` time pieces and each
/// piece's block is repeated `k` times. Writes `shared.csv`.
pub fn run_shared(cfg: &ExperimentConfig) -> Result<Vec<SharedRow>> {
    cfg.validate()?;
    let rhs = experiment_rhs(cfg)?.frozen_in_time(cfg.pieces)?;
    let grid = SampleGrid::from_config(cfg);
    let refs = reference_values(&rhs, &grid, cfg.oracle_tol)?;
    let r = cfg.base_radius(rhs.bound_c());
    let eps = cfg.block_eps.unwrap_or(SHARED_BLOCK_EPS);
    let mut rows = Vec::with_capacity(cfg.k_list.len());
    for &k in &cfg.k_list {
        let (net, _) = build_shared_resnet(&rhs, k, r, eps)?;
        let m = measure(&net, &grid, &refs, rhs.bound_c())?;
        rows.push(SharedRow {
            k,
            blocks: net.n(),
            distinct_params: net.distinct_parameter_count(),
            sup_error: m.sup_error,
        });
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{:?}",
                r.k, r.blocks, r.distinct_params, r.sup_error
            )
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("shared.csv"),
        "k,blocks,distinct_params,sup_error",
        &lines,
    )?;
    if rows.iter().any(|r| r.distinct_params != cfg.pieces) {
        return Err(Error::Internal("parameter count changed with k".into()));
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        if last.sup_error > first.sup_error {
            log::warn!(
                "sup error grew from {:e} at k = {} to {:e} at k = {}",
                first.sup_error,
                first.k,
                last.sup_error,
                last.k
            );
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            time_samples: 9,
            space_samples: 5,
            n_list: vec![4, 8],
            k_list: vec![1, 4],
            out_dir: out.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let ns = [8, 16, 32, 64];
        let errs: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        assert!((loglog_slope(&ns, &errs).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&ns, &[0.0, 1.0, 1.0, 1.0]), None);
        assert_eq!(loglog_slope(&[8], &[1.0]), None);
    }

    #[test]
    fn sample_grid_shape() {
        let g = SampleGrid::new(2, 1.0, 3, 4);
        assert_eq!(g.times, vec![0.0, 0.5, 1.0]);
        assert_eq!(g.points.len(), 16);
        assert_eq!(g.points[0], vec![-1.0, -1.0]);
        assert_eq!(g.points[15], vec![1.0, 1.0]);
    }

    #[test]
    fn zero_rhs_convergence_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            rhs: "zero".into(),
            ..quick(dir.path())
        };
        let report = run_convergence(&cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.sup_error <= cfg.oracle_tol));
        assert_eq!(report.slope, None);
        let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert!(
            csv.starts_with("n,sup_error,apriori_bound,block_neurons,block_depth,free_weights\n4,")
        );
    }

    #[test]
    fn complexity_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run_complexity(&quick(dir.path())).unwrap();
        assert!(rows.iter().all(|r| r.depth == 3));
        assert!(rows[1].neurons as f64 / rows[0].neurons as f64 <= 3.0);
    }

    #[test]
    fn shared_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run_shared(&quick(dir.path())).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.blocks).collect::<Vec<_>>(),
            vec![1, 4]
        );
        assert!(rows.iter().all(|r| r.distinct_params == 1));
        assert!(rows[1].sup_error < rows[0].sup_error);
    }

    #[test]
    fn compile_from_function() {
        let dir = tempfile::tempdir().unwrap();
        let src = CompileSource::Function {
            name: "sin".into(),
            dim: 2,
            radius: 1.0,
            delta: 0.5,
            coeffs: vec![],
        };
        let summary = run_compile(&src, dir.path(), 1).unwrap();
        assert_eq!(summary.depth, 5);
        assert!(summary.verified());
        let net =
            NetworkParams::from_json_slice(&fs::read(dir.path().join("network.json")).unwrap())
                .unwrap();
        assert_eq!(net.depth(), 5);
    }
}
