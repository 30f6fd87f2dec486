//! Profile martingales and their normalizers, at real or complex lambda.
//!
//! Levels enter every martingale relative to the root, so models with a
//! nonzero `root_shift` still start from W_0 = 1.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::normalize::log_gamma;
use crate::tree_sim::Profile;
use crate::weight_model::WeightModel;

/// lambda = theta + i eta.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPoint {
    pub theta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl LambdaPoint {
    pub fn real(theta: Vec<f64>) -> Self {
        let eta = vec![0.0; theta.len()];
        LambdaPoint { theta, eta }
    }

    pub fn new(theta: Vec<f64>, eta: Vec<f64>) -> Self {
        LambdaPoint { theta, eta }
    }

    /// The d=1 point with e^{-lambda} = z.
    pub fn from_z(z: f64) -> Self {
        LambdaPoint::real(vec![-z.ln()])
    }

    pub fn conj(&self) -> Self {
        LambdaPoint {
            theta: self.theta.clone(),
            eta: self.eta.iter().map(|e| -e).collect(),
        }
    }

    fn check(&self, model: &WeightModel) -> Result<()> {
        if self.theta.len() != model.d || self.eta.len() != model.d {
            return Err(Error::param(
                "lambda",
                format!("dimension {} does not match model dimension {}", self.theta.len(), model.d),
            ));
        }
        Ok(())
    }

    /// -lambda . l as a complex number.
    fn neg_dot(&self, level: &[i64]) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for k in 0..level.len() {
            re -= self.theta[k] * level[k] as f64;
            im -= self.eta[k] * level[k] as f64;
        }
        Complex64::new(re, im)
    }
}

/// value * exp(log_scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleValue {
    pub value: Complex64,
    pub log_scale: f64,
}

impl MartingaleValue {
    /// From log-magnitude and phase.
    pub fn from_polar_log(log_abs: f64, phase: f64) -> Self {
        MartingaleValue {
            value: Complex64::from_polar(1.0, phase),
            log_scale: log_abs,
        }
    }

    pub fn ln_abs(&self) -> f64 {
        self.log_scale + self.value.norm().ln()
    }

    pub fn arg(&self) -> f64 {
        self.value.arg()
    }

    pub fn to_complex(&self) -> Complex64 {
        self.value * self.log_scale.exp()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// b E e^{-lambda . Z}.
pub fn m_exponent(model: &WeightModel, lambda: &LambdaPoint) -> Result<Complex64> {
    lambda.check(model)?;
    let law = model.marginal()?;
    let b = model.b as f64;
    Ok(law
        .atoms
        .iter()
        .map(|(z, p)| b * p * lambda.neg_dot(z).exp())
        .sum())
}

pub(crate) fn m_exponent_real(model: &WeightModel, theta: &[f64]) -> Result<f64> {
    Ok(m_exponent(model, &LambdaPoint::real(theta.to_vec()))?.re)
}

/// C_n for a known m = b E e^{-lambda Z}.
pub fn c_n_from_m(b: usize, m: Complex64, n: u64) -> Result<MartingaleValue> {
    let step = (b - 1) as f64;
    let w0 = m - 1.0;
    let mut log_abs = CompensatedSum::default();
    let mut phase = CompensatedSum::default();
    for j in 0..n {
        let a = step * j as f64 + 1.0;
        // factor = 1 + w with w = (m - 1) / a
        let w = w0 / a;
        let numerator_size = step * j as f64 + m.norm();
        if (w * a + a).norm() <= 1e-14 * numerator_size.max(1.0) {
            return Err(Error::Domain(format!(
                "lambda lies in the zero set: factor j={j} of C_n vanishes"
            )));
        }
        if w.im == 0.0 {
            let f = 1.0 + w.re;
            log_abs.add(if w.re > -0.5 { w.re.ln_1p() } else { f.abs().ln() });
            if f < 0.0 {
                phase.add(std::f64::consts::PI);
            }
        } else {
            log_abs.add(0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p());
            phase.add(w.im.atan2(1.0 + w.re));
        }
    }
    let phi = phase.value().rem_euclid(std::f64::consts::TAU);
    Ok(MartingaleValue::from_polar_log(log_abs.value(), phi))
}

/// C_n(lambda) = prod_{j<n} ((b-1)j + m) / ((b-1)j + 1).
pub fn c_n(model: &WeightModel, lambda: &LambdaPoint, n: u64) -> Result<MartingaleValue> {
    let m = m_exponent(model, lambda)?;
    c_n_from_m(model.b, m, n)
}

/// sum_l U_l e^{-lambda . (l - root_shift)} in log scale.
pub fn profile_sum(profile: &Profile, model: &WeightModel, lambda: &LambdaPoint) -> Result<MartingaleValue> {
    lambda.check(model)?;
    let shift = &model.root_shift;
    let mut rel = vec![0i64; model.d];
    let exps: Vec<(Complex64, u64)> = profile
        .counts
        .iter()
        .map(|(l, &u)| {
            for k in 0..model.d {
                rel[k] = l[k] - shift[k];
            }
            (lambda.neg_dot(&rel), u)
        })
        .collect();
    let top = exps
        .iter()
        .map(|(e, u)| e.re + (*u as f64).ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("profile sum is empty or not finite".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (e, u) in exps {
        acc += u as f64 * Complex64::from_polar((e.re - top).exp(), e.im);
    }
    Ok(MartingaleValue {
        value: acc,
        log_scale: top,
    })
}

fn ratio(num: MartingaleValue, den: MartingaleValue) -> Complex64 {
    num.value / den.value * (num.log_scale - den.log_scale).exp()
}

/// W_n(lambda) for a realized profile.
pub fn w_n(profile: &Profile, model: &WeightModel, lambda: &LambdaPoint) -> Result<Complex64> {
    let c = c_n(model, lambda, profile.n)?;
    Ok(ratio(profile_sum(profile, model, lambda)?, c))
}

/// W_n(lambda) with C_n supplied, for repeated evaluation at one (lambda, n).
pub fn w_n_with(profile: &Profile, model: &WeightModel, lambda: &LambdaPoint, c: MartingaleValue) -> Result<Complex64> {
    Ok(ratio(profile_sum(profile, model, lambda)?, c))
}

/// W^(t)(lambda) = sum_u e^{-lambda D_u} exp(-t (b E e^{-lambda Z} - 1)).
pub fn w_continuous(profile: &Profile, t: f64, model: &WeightModel, lambda: &LambdaPoint) -> Result<Complex64> {
    if t < 0.0 {
        return Err(Error::param("t", "negative time"));
    }
    let m = m_exponent(model, lambda)?;
    let s = profile_sum(profile, model, lambda)?;
    let e = -t * (m - 1.0);
    Ok(s.value * Complex64::from_polar((s.log_scale + e.re).exp(), e.im))
}

/// H_n(lambda) = C_n(lambda) e^{tau_n (1 - b E e^{-lambda Z})}.
pub fn h_n(model: &WeightModel, lambda: &LambdaPoint, tau_n: f64, n: u64) -> Result<Complex64> {
    let m = m_exponent(model, lambda)?;
    let c = c_n_from_m(model.b, m, n)?;
    let e = tau_n * (1.0 - m);
    Ok(c.value * Complex64::from_polar((c.log_scale + e.re).exp(), e.im))
}

/// log of n^{(m-1)/(b-1)} Gamma(1/(b-1)) / Gamma(m/(b-1)), m = b E e^{-theta Z}.
pub fn log_c_n_asymptotic(model: &WeightModel, theta: &[f64], n: u64) -> Result<f64> {
    let m = m_exponent_real(model, theta)?;
    if m <= 0.0 {
        return Err(Error::Domain(format!("b E e^(-theta Z) = {m} is not positive")));
    }
    let step = (model.b - 1) as f64;
    Ok((m - 1.0) / step * (n as f64).ln() + log_gamma(1.0 / step)? - log_gamma(m / step)?)
}

pub fn c_n_asymptotic(model: &WeightModel, theta: &[f64], n: u64) -> Result<f64> {
    Ok(log_c_n_asymptotic(model, theta, n)?.exp())
}

/// E e^{s tau_n} as the exact product and its Gamma-form asymptotic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauTransform {
    pub product: f64,
    pub log_product: f64,
    pub asymptotic: f64,
}

pub fn expected_tau_transform(b: usize, s: f64, n: u64) -> Result<TauTransform> {
    if !(s < 1.0) {
        return Err(Error::Domain(format!("transform diverges for s = {s} >= 1")));
    }
    let step = (b - 1) as f64;
    let mut log = CompensatedSum::default();
    for j in 0..n {
        let a = step * j as f64 + 1.0;
        // a / (a - s) = 1 / (1 - s/a)
        log.add(-(-s / a).ln_1p());
    }
    let log_product = log.value();
    let alpha = 1.0 / step;
    let log_asym = s / step * (n as f64).ln() + log_gamma((1.0 - s) / step)? - log_gamma(alpha)?;
    Ok(TauTransform {
        product: log_product.exp(),
        log_product,
        asymptotic: log_asym.exp(),
    })
}
