//! A(-theta) = b E e^{-theta Z} - 1 with its derivatives, the admissible
//! real region, d=1 range endpoints, and the inverse of theta -> DA(-theta).

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::weight_model::{MarginalLaw, WeightModel};
#[cfg(test)]
use crate::weight_model::Atom;

/// Width at which bisection stops, relative to the root.
const ROOT_RTOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 200;
/// Bracketing for range roots stops at 2^60 in either direction.
const MAX_EXPANSIONS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPoint {
    pub theta: Vec<f64>,
    /// A(-theta) = b E e^{-theta Z} - 1.
    pub a: f64,
    /// DA(-theta) = b E Z e^{-theta Z}.
    pub grad: Vec<f64>,
    /// b E Z Z^T e^{-theta Z}.
    pub hess: DMatrix<f64>,
    pub det_hess: f64,
}

/// d=1 admissible interval in z = e^{-theta} and its images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeD1 {
    /// Lower root; 0 when f stays negative down to 0.
    pub z0: f64,
    /// Upper root; infinite when f stays negative up to infinity.
    pub z1: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    /// Lambda* = (DA at z0, DA at z1).
    pub c_low: f64,
    pub c_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDomain {
    pub dim: usize,
    /// Present for d = 1; d > 1 membership is predicate-only.
    pub interval: Option<RangeD1>,
}

fn dot(theta: &[f64], z: &[i64]) -> f64 {
    theta.iter().zip(z).map(|(t, &x)| t * x as f64).sum()
}

fn point_from_law(law: &MarginalLaw, b: usize, theta: &[f64]) -> SpectralPoint {
    let d = theta.len();
    let bf = b as f64;
    let mut m = 0.0;
    let mut grad = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for (z, p) in &law.atoms {
        let w = bf * p * (-dot(theta, z)).exp();
        m += w;
        for i in 0..d {
            grad[i] += w * z[i] as f64;
            for j in 0..d {
                hess[(i, j)] += w * (z[i] * z[j]) as f64;
            }
        }
    }
    let det_hess = hess.determinant();
    SpectralPoint {
        theta: theta.to_vec(),
        a: m - 1.0,
        grad,
        hess,
        det_hess,
    }
}

fn check_dim(model: &WeightModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.d {
        return Err(Error::param(
            "theta",
            format!("dimension {} does not match model dimension {}", theta.len(), model.d),
        ));
    }
    Ok(())
}

pub fn spectral_point(model: &WeightModel, theta: &[f64]) -> Result<SpectralPoint> {
    check_dim(model, theta)?;
    Ok(point_from_law(&model.marginal()?, model.b, theta))
}

/// Whether the support of Z spans R^d linearly.
pub fn is_nondegenerate(model: &WeightModel) -> bool {
    let Ok(law) = model.marginal() else {
        return false;
    };
    let d = model.d;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for (z, _) in &law.atoms {
        for i in 0..d {
            for j in 0..d {
                gram[(i, j)] += (z[i] * z[j]) as f64;
            }
        }
    }
    gram.cholesky().is_some()
}

/// theta . DA(-theta) + A(-theta); positive exactly on the admissible region.
pub fn lambda_tilde_slack(model: &WeightModel, theta: &[f64]) -> Result<f64> {
    let sp = spectral_point(model, theta)?;
    Ok(dot_f(theta, &sp.grad) + sp.a)
}

fn dot_f(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 1 - b E e^{-theta Z} < b theta . E Z e^{-theta Z}.
pub fn in_lambda_tilde(model: &WeightModel, theta: &[f64]) -> Result<bool> {
    let sp = spectral_point(model, theta)?;
    Ok(-sp.a < dot_f(theta, &sp.grad))
}

/// f(z) = 1 - b E z^Z + log(z) b E Z z^Z for d = 1.
pub fn range_function(law: &MarginalLaw, b: usize, z: f64) -> f64 {
    let lz = z.ln();
    let bf = b as f64;
    let mut m = 0.0;
    let mut g = 0.0;
    for (v, p) in &law.atoms {
        let w = bf * p * (v[0] as f64 * lz).exp();
        m += w;
        g += w * v[0] as f64;
    }
    1.0 - m + lz * g
}

fn grad_d1(law: &MarginalLaw, b: usize, z: f64) -> f64 {
    // Endpoints at 0 or infinity only occur when every term Z z^Z vanishes there.
    if z == 0.0 || z.is_infinite() {
        return 0.0;
    }
    let lz = z.ln();
    law.atoms
        .iter()
        .map(|(v, p)| b as f64 * p * v[0] as f64 * (v[0] as f64 * lz).exp())
        .sum()
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) and f(hi) have opposite signs.
    let up = f(hi) > 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_RTOL * hi.abs() || mid == lo || mid == hi {
            break;
        }
        if (f(mid) > 0.0) == up {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Endpoints of the admissible d=1 interval.
pub fn range_d1(model: &WeightModel) -> Result<ThetaDomain> {
    if model.d != 1 {
        return Err(Error::Domain(format!("range_d1 needs d = 1, got d = {}", model.d)));
    }
    if !is_nondegenerate(model) {
        return Err(Error::Domain("degenerate model: Z is identically 0".into()));
    }
    let law = model.marginal()?;
    let b = model.b;
    let f = |z: f64| range_function(&law, b, z);
    let min_z = law.atoms.first().map(|(v, _)| v[0]).unwrap_or(0);
    let max_z = law.atoms.last().map(|(v, _)| v[0]).unwrap_or(0);

    // f is decreasing on (0,1), increasing on (1,inf), f(1) = 1 - b < 0.
    let mut z = 0.5;
    let mut z0 = None;
    for _ in 0..MAX_EXPANSIONS {
        if f(z) > 0.0 {
            z0 = Some(bisect(z, 2.0 * z.min(0.5), f));
            break;
        }
        z *= 0.5;
    }
    let z0 = match z0 {
        Some(r) => r,
        None if min_z >= 0 && 1.0 - b as f64 * law.p_zero() <= 0.0 => 0.0,
        None => return Err(Error::Numeric("no lower root of the range function found".into())),
    };

    let mut z = 2.0;
    let mut z1 = None;
    for _ in 0..MAX_EXPANSIONS {
        if f(z) > 0.0 {
            z1 = Some(bisect((z * 0.5).max(1.0), z, f));
            break;
        }
        z *= 2.0;
    }
    let z1 = match z1 {
        Some(r) => r,
        None if max_z <= 0 && 1.0 - b as f64 * law.p_zero() <= 0.0 => f64::INFINITY,
        None => return Err(Error::Numeric("no upper root of the range function found".into())),
    };

    Ok(ThetaDomain {
        dim: 1,
        interval: Some(RangeD1 {
            z0,
            z1,
            theta_low: -z1.ln(),
            theta_high: -z0.ln(),
            c_low: grad_d1(&law, b, z0),
            c_high: grad_d1(&law, b, z1),
        }),
    })
}

/// The theta with DA(-theta) = c, without checking admissibility.
pub fn solve_gradient(model: &WeightModel, c: &[f64]) -> Result<Vec<f64>> {
    check_dim(model, c)?;
    if !is_nondegenerate(model) {
        return Err(Error::Domain("degenerate model".into()));
    }
    let law = model.marginal()?;
    if model.d == 1 {
        solve_d1(&law, model.b, c[0]).map(|t| vec![t])
    } else {
        solve_newton(&law, model.b, c)
    }
}

/// theta(c): the admissible theta with DA(-theta(c)) = c.
pub fn theta_of_c(model: &WeightModel, c: &[f64]) -> Result<Vec<f64>> {
    let theta = solve_gradient(model, c)?;
    if !in_lambda_tilde(model, &theta)? {
        return Err(Error::Domain(format!(
            "c = {c:?} is outside Lambda*: theta = {theta:?} is not admissible"
        )));
    }
    Ok(theta)
}

fn solve_d1(law: &MarginalLaw, b: usize, c: f64) -> Result<f64> {
    // g(theta) = b E Z e^{-theta Z} is strictly decreasing.
    let g = |t: f64| point_from_law(law, b, &[t]).grad[0] - c;
    let out_of_range = || Error::Domain(format!("c = {c} is not attained by b E Z e^(-theta Z)"));
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut tries = 0;
    while g(lo) < 0.0 || g(hi) > 0.0 {
        if g(lo) < 0.0 {
            lo *= 2.0;
        }
        if g(hi) > 0.0 {
            hi *= 2.0;
        }
        tries += 1;
        if tries > 10 {
            return Err(out_of_range());
        }
    }
    let mut t = 0.0;
    let tol = 1e-14 * c.abs().max(1.0);
    for _ in 0..NEWTON_MAX_ITERS {
        let sp = point_from_law(law, b, &[t]);
        let r = sp.grad[0] - c;
        if r.abs() <= tol {
            return Ok(t);
        }
        if r > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        // d/dtheta of grad is -hess.
        let newton = t + r / sp.hess[(0, 0)];
        t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * t.abs().max(1.0) {
            return Ok(t);
        }
    }
    let r = g(t);
    if r.abs() < 1e-10 {
        Ok(t)
    } else {
        Err(Error::Numeric(format!("theta(c) did not converge, residual {r}")))
    }
}

fn solve_newton(law: &MarginalLaw, b: usize, c: &[f64]) -> Result<Vec<f64>> {
    let d = c.len();
    let cv = DVector::from_column_slice(c);
    let residual = |sp: &SpectralPoint| DVector::from_column_slice(&sp.grad) - &cv;
    let tol = 1e-13 * cv.amax().max(1.0);
    let mut theta = DVector::<f64>::zeros(d);
    let mut sp = point_from_law(law, b, theta.as_slice());
    let mut r = residual(&sp);
    for _ in 0..NEWTON_MAX_ITERS {
        if r.amax() <= tol {
            return Ok(theta.as_slice().to_vec());
        }
        let chol = sp
            .hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("Hessian is not positive definite".into()))?;
        // grad decreases along +hess, so theta += H^{-1} (grad - c).
        let step = chol.solve(&r);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta + &step * scale;
            let csp = point_from_law(law, b, cand.as_slice());
            let cr = residual(&csp);
            if cr.iter().all(|x| x.is_finite()) && cr.norm() < r.norm() {
                theta = cand;
                sp = csp;
                r = cr;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.amax() < 1e-10 {
        return Ok(theta.as_slice().to_vec());
    }
    Err(Error::Numeric(format!(
        "theta(c) did not converge after {NEWTON_MAX_ITERS} iterations, residual {}",
        r.amax()
    )))
}
