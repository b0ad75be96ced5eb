//! Built-in right-hand sides and target functions, addressed by name. All act
//! componentwise on `R^d`.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::ode::RhsSpec;

pub const NAMES: &[&str] = &["zero", "sin", "cos", "tanh", "poly", "const", "sin_t"];

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar map with its sup bound and Lipschitz constant.
struct Component {
    g: Scalar,
    bound: f64,
    lipschitz: f64,
}

fn component(name: &str, coeffs: &[f64]) -> Result<Component> {
    let c = |g: fn(f64) -> f64, bound, lipschitz| Component {
        g: Arc::new(g),
        bound,
        lipschitz,
    };
    Ok(match name {
        "zero" => c(|_| 0.0, 0.0, 0.0),
        "sin" | "sin_t" => c(f64::sin, 1.0, 1.0),
        "cos" => c(f64::cos, 1.0, 1.0),
        "tanh" => c(f64::tanh, 1.0, 1.0),
        "const" => {
            let a = *coeffs
                .first()
                .ok_or_else(|| invalid("`const` needs one coefficient"))?;
            Component {
                g: Arc::new(move |_| a),
                bound: a.abs(),
                lipschitz: 0.0,
            }
        }
        "poly" => {
            // p(clamp(x, -1, 1)) keeps the map bounded and Lipschitz
            if coeffs.is_empty() {
                return Err(invalid("`poly` needs coefficients a0, a1, ..."));
            }
            let a = coeffs.to_vec();
            let bound = a.iter().map(|x| x.abs()).sum();
            let lipschitz = a.iter().enumerate().map(|(j, x)| j as f64 * x.abs()).sum();
            Component {
                g: Arc::new(move |x| {
                    let x = x.clamp(-1.0, 1.0);
                    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
                }),
                bound,
                lipschitz,
            }
        }
        other => {
            return Err(invalid(format!(
                "unknown function `{other}`; known: {}",
                NAMES.join(", ")
            )))
        }
    })
}

/// A named map `R^d -> R^d` with declared sup-norm bound and Lipschitz
/// constant (Euclidean norms).
pub struct Target {
    pub f: VectorFn,
    pub dim: usize,
    pub bound: f64,
    pub lipschitz: f64,
}

pub fn target_by_name(name: &str, dim: usize, coeffs: &[f64]) -> Result<Target> {
    if name == "sin_t" {
        return Err(invalid(
            "`sin_t` depends on time and is not a spatial target",
        ));
    }
    let comp = component(name, coeffs)?;
    let g = comp.g;
    Ok(Target {
        f: Arc::new(move |x: &[f64]| x.iter().map(|&v| g(v)).collect()),
        dim,
        bound: comp.bound * (dim as f64).sqrt(),
        lipschitz: comp.lipschitz,
    })
}

/// Right-hand side `f(t, x)`. All names are autonomous except `sin_t`,
/// which is `sin(x_i) cos(t)`.
pub fn rhs_by_name(name: &str, dim: usize, coeffs: &[f64]) -> Result<RhsSpec> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let comp = component(name, coeffs)?;
    let g = comp.g;
    let bound = comp.bound * (dim as f64).sqrt();
    if name == "sin_t" {
        let f = move |t: f64, x: &[f64]| x.iter().map(|&v| g(v) * t.cos()).collect();
        return RhsSpec::new(dim, f, bound, comp.lipschitz)?.with_time_lipschitz(bound);
    }
    let f = move |_: f64, x: &[f64]| x.iter().map(|&v| g(v)).collect();
    RhsSpec::new(dim, f, bound, comp.lipschitz)?.with_time_lipschitz(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_constants_hold_on_samples() {
        for name in NAMES {
            for dim in [1, 2] {
                let rhs = rhs_by_name(name, dim, &[0.5, -1.0, 0.25]).unwrap();
                let check = rhs.check_declared(3.0, 2000, 7);
                assert!(check.bound_ok && check.lipschitz_ok, "{name} d = {dim}");
            }
        }
    }

    #[test]
    fn poly_is_clamped_horner() {
        let t = target_by_name("poly", 1, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((t.f)(&[0.5]), vec![1.0 + 1.0 + 0.75]);
        assert_eq!((t.f)(&[4.0]), vec![6.0]);
        assert_eq!(t.bound, 6.0);
        assert_eq!(t.lipschitz, 8.0);
    }

    #[test]
    fn unknown_names_rejected() {
        assert!(rhs_by_name("exp", 1, &[]).is_err());
        assert!(rhs_by_name("poly", 1, &[]).is_err());
        assert!(target_by_name("sin_t", 1, &[]).is_err());
    }
}
