//! Exact small-n ground truth: the law of the profile by enumeration, the
//! mean profile by recursion, one-step martingale checks, and a direct
//! quadrature of the local-limit Fourier integral.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::martingale::{w_n, LambdaPoint};
use crate::tree_sim::Profile;
use crate::weight_model::{Level, WeightModel};

/// Default bound on the number of raw histories an enumeration may stand for.
pub const DEFAULT_HISTORY_CAP: f64 = 1e7;

/// Exact law of the profile after n splits.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryDistribution {
    pub n: u64,
    /// Distinct profiles in canonical order with their probabilities.
    pub entries: Vec<(BigRational, Profile)>,
}

impl HistoryDistribution {
    pub fn total_probability(&self) -> BigRational {
        self.entries.iter().map(|(p, _)| p.clone()).sum()
    }

    /// E U_l(n) for every level that occurs.
    pub fn mean_profile(&self) -> BTreeMap<Level, BigRational> {
        let mut out: BTreeMap<Level, BigRational> = BTreeMap::new();
        for (p, prof) in &self.entries {
            for (l, &u) in &prof.counts {
                *out.entry(l.clone()).or_insert_with(BigRational::zero) += p * BigRational::from_integer(BigInt::from(u));
            }
        }
        out
    }
}

/// Number of labeled histories of length n: prod_k ((b-1)(k-1)+1) |atoms|.
pub fn history_count(model: &WeightModel, n: u64) -> f64 {
    (1..=n)
        .map(|k| ((model.b - 1) as f64 * (k - 1) as f64 + 1.0) * model.atoms.len() as f64)
        .product()
}

fn int(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// All one-step successors of a profile with their conditional probabilities.
fn successors(model: &WeightModel, profile: &Profile) -> Vec<(BigRational, Profile)> {
    let a = int((model.b as u64 - 1) * profile.n + 1);
    let mut out = Vec::with_capacity(profile.counts.len() * model.atoms.len());
    for (l, &u) in &profile.counts {
        let pick = int(u) / &a;
        for atom in &model.atoms {
            out.push((&pick * &atom.p_exact, profile.after_split(l, &atom.weights)));
        }
    }
    out
}

/// Exact law of the profile at n, with histories merged by profile.
pub fn enumerate_histories(model: &WeightModel, n: u64) -> Result<HistoryDistribution> {
    enumerate_histories_capped(model, n, DEFAULT_HISTORY_CAP)
}

pub fn enumerate_histories_capped(model: &WeightModel, n: u64, cap: f64) -> Result<HistoryDistribution> {
    let report = model.validate();
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.issues.join("; ")));
    }
    let count = history_count(model, n);
    if count > cap {
        return Err(Error::Resource(format!(
            "{count:.3e} histories at n = {n} exceed the cap {cap:.3e}"
        )));
    }
    let mut states: BTreeMap<Profile, BigRational> = BTreeMap::new();
    states.insert(Profile::single_leaf(model), BigRational::one());
    for _ in 0..n {
        let mut next: BTreeMap<Profile, BigRational> = BTreeMap::new();
        for (prof, p) in &states {
            for (q, child) in successors(model, prof) {
                *next.entry(child).or_insert_with(BigRational::zero) += p * q;
            }
        }
        states = next;
    }
    Ok(HistoryDistribution {
        n,
        entries: states.into_iter().map(|(prof, p)| (p, prof)).collect(),
    })
}

/// E U_l(n) for every level with a nonzero mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanProfile {
    pub n: u64,
    pub means: BTreeMap<Level, f64>,
}

impl MeanProfile {
    pub fn get(&self, level: &[i64]) -> f64 {
        self.means.get(level).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.means.values().sum()
    }

    /// CSV with rows `l_1,...,l_d,mean`.
    pub fn to_csv(&self, d: usize) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=d).map(|k| format!("l_{k}")).collect();
        let _ = writeln!(out, "{},mean", header.join(","));
        for (l, m) in &self.means {
            let cols: Vec<String> = l.iter().map(i64::to_string).collect();
            let _ = writeln!(out, "{},{m:e}", cols.join(","));
        }
        out
    }
}

/// Mean profile by the one-step recursion
/// E U_l(n+1) = E U_l(n) (1 - 1/a_n) + (b/a_n) sum_z P(Z = z) E U_{l-z}(n).
pub fn exact_mean_profile(model: &WeightModel, n: u64) -> Result<MeanProfile> {
    let law = model.marginal()?;
    if model.d == 1 {
        Ok(mean_profile_d1(model, &law.atoms, n))
    } else {
        Ok(mean_profile_sparse(model, &law.atoms, n))
    }
}

fn mean_profile_d1(model: &WeightModel, law: &[(Level, f64)], n: u64) -> MeanProfile {
    let b = model.b as f64;
    let support: Vec<(i64, f64)> = law.iter().map(|(v, p)| (v[0], *p)).collect();
    let zmin = support.iter().map(|s| s.0).min().unwrap_or(0);
    let zmax = support.iter().map(|s| s.0).max().unwrap_or(0);
    // Dense window: means[i] is level lo + i. Entries that underflow to 0 at
    // either edge are trimmed.
    let mut lo = model.root_shift[0];
    let mut means = vec![1.0];
    let mut next = Vec::new();
    for k in 0..n {
        let a = (b - 1.0) * k as f64 + 1.0;
        let keep = 1.0 - 1.0 / a;
        let spread = b / a;
        let new_lo = lo + zmin.min(0);
        let len = means.len() + (zmax.max(0) - zmin.min(0)) as usize;
        next.clear();
        next.resize(len, 0.0);
        for (i, &u) in means.iter().enumerate() {
            next[i + (lo - new_lo) as usize] += keep * u;
            for &(z, p) in &support {
                next[(i as i64 + lo + z - new_lo) as usize] += spread * p * u;
            }
        }
        let first = next.iter().position(|&x| x != 0.0).unwrap_or(0);
        let last = next.iter().rposition(|&x| x != 0.0).unwrap_or(0);
        means.clear();
        means.extend_from_slice(&next[first..=last]);
        lo = new_lo + first as i64;
    }
    MeanProfile {
        n,
        means: means
            .into_iter()
            .enumerate()
            .filter(|&(_, m)| m != 0.0)
            .map(|(i, m)| (vec![lo + i as i64], m))
            .collect(),
    }
}

fn mean_profile_sparse(model: &WeightModel, law: &[(Level, f64)], n: u64) -> MeanProfile {
    let b = model.b as f64;
    let mut means: BTreeMap<Level, f64> = BTreeMap::new();
    means.insert(model.root_shift.clone(), 1.0);
    for k in 0..n {
        let a = (b - 1.0) * k as f64 + 1.0;
        let mut next: BTreeMap<Level, f64> = BTreeMap::new();
        for (l, &u) in &means {
            *next.entry(l.clone()).or_insert(0.0) += (1.0 - 1.0 / a) * u;
            for (z, p) in law {
                let child: Level = l.iter().zip(z).map(|(x, y)| x + y).collect();
                *next.entry(child).or_insert(0.0) += b / a * p * u;
            }
        }
        next.retain(|_, v| *v != 0.0);
        means = next;
    }
    MeanProfile { n, means }
}

/// {-log 2, 0, log 2}^d.
pub fn martingale_grid(d: usize) -> Vec<LambdaPoint> {
    let values = [-(2f64.ln()), 0.0, 2f64.ln()];
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(LambdaPoint::real).collect()
}

/// max over profiles h reachable at n and grid points of
/// |E[W_{n+1} | h] - W_n(h)|, by explicit one-step expansion.
pub fn conditional_martingale_check(model: &WeightModel, n: u64, grid: &[LambdaPoint]) -> Result<f64> {
    let dist = enumerate_histories(model, n)?;
    let mut worst: f64 = 0.0;
    for (_, prof) in &dist.entries {
        let next = successors(model, prof);
        for lambda in grid {
            let now = w_n(prof, model, lambda)?;
            let mut expect = Complex64::new(0.0, 0.0);
            for (q, child) in &next {
                let q = q.to_f64().ok_or_else(|| Error::Numeric("probability underflow".into()))?;
                expect += q * w_n(child, model, lambda)?;
            }
            worst = worst.max((expect - now).norm());
        }
    }
    Ok(worst)
}

fn rational_pow(z: &BigRational, e: i64) -> BigRational {
    let base = if e < 0 { z.recip() } else { z.clone() };
    num_traits::pow(base, e.unsigned_abs() as usize)
}

/// W_n at e^{-lambda} = z (componentwise) in exact arithmetic.
fn exact_w(model: &WeightModel, prof: &Profile, z: &[BigRational], c: &BigRational) -> BigRational {
    let mut sum = BigRational::zero();
    for (l, &u) in &prof.counts {
        let mut term = int(u);
        for k in 0..model.d {
            term *= rational_pow(&z[k], l[k] - model.root_shift[k]);
        }
        sum += term;
    }
    sum / c
}

/// The same check in exact arithmetic at a rational point z = e^{-lambda}.
/// Returns the largest |E[W_{n+1} | h] - W_n(h)|, which should be 0.
pub fn conditional_martingale_check_exact(model: &WeightModel, n: u64, z: &[BigRational]) -> Result<BigRational> {
    if z.len() != model.d || z.iter().any(|x| !x.is_positive()) {
        return Err(Error::param("z", "need d positive rationals"));
    }
    let law = model.marginal()?;
    let mut m = BigRational::zero();
    for ((v, _), p) in law.atoms.iter().zip(&law.exact) {
        let mut term = p.clone();
        for k in 0..model.d {
            term *= rational_pow(&z[k], v[k]);
        }
        m += term;
    }
    m *= int(model.b as u64);
    let step = int(model.b as u64 - 1);
    let c_at = |k: u64| -> Result<BigRational> {
        let mut c = BigRational::one();
        for j in 0..k {
            let num = &step * int(j) + &m;
            if num.is_zero() {
                return Err(Error::Domain("z lies in the zero set of C_n".into()));
            }
            c *= num / (&step * int(j) + BigRational::one());
        }
        Ok(c)
    };
    let c_now = c_at(n)?;
    let c_next = c_at(n + 1)?;
    let dist = enumerate_histories(model, n)?;
    let mut worst = BigRational::zero();
    for (_, prof) in &dist.entries {
        let now = exact_w(model, prof, z, &c_now);
        let mut expect = BigRational::zero();
        for (q, child) in successors(model, prof) {
            expect += q * exact_w(model, &child, z, &c_next);
        }
        let dev = (expect - now).abs();
        if dev > worst {
            worst = dev;
        }
    }
    Ok(worst)
}

/// Absolute tolerance between successive trapezoid refinements.
const QUAD_TOL: f64 = 1e-13;
const IMAG_TOL: f64 = 1e-10;

/// (2 pi)^{-d} times the integral over [-pi, pi]^d of
/// exp(-b t E[e^{-theta Z} (1 - e^{i eta Z})]) e^{-i eta l}.
/// The integrand is a trigonometric series, so the periodic trapezoid rule
/// converges geometrically; the grid is doubled until two rules agree.
pub fn numeric_fourier_profile(model: &WeightModel, t: f64, theta: &[f64], l: &[i64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::param("t", "must be positive"));
    }
    if theta.len() != model.d || l.len() != model.d {
        return Err(Error::param("theta", "dimension mismatch"));
    }
    if model.d > 2 {
        return Err(Error::Domain("Fourier quadrature supports d <= 2".into()));
    }
    let law = model.marginal()?;
    let b = model.b as f64;
    let weights: Vec<(Vec<f64>, f64)> = law
        .atoms
        .iter()
        .map(|(z, p)| {
            let zf: Vec<f64> = z.iter().map(|&x| x as f64).collect();
            let e = (-theta.iter().zip(&zf).map(|(a, b)| a * b).sum::<f64>()).exp();
            (zf, b * t * p * e)
        })
        .collect();
    let integrand = |eta: &[f64]| -> Complex64 {
        let mut expo = Complex64::new(0.0, 0.0);
        for (z, w) in &weights {
            let phase: f64 = eta.iter().zip(z).map(|(a, b)| a * b).sum();
            expo -= w * (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, phase));
        }
        let lphase: f64 = eta.iter().zip(l).map(|(a, &b)| a * b as f64).sum();
        expo.exp() * Complex64::from_polar(1.0, -lphase)
    };
    let rule = |n: usize| -> Complex64 {
        let h = std::f64::consts::TAU / n as f64;
        let node = |k: usize| -std::f64::consts::PI + k as f64 * h;
        let mut acc = Complex64::new(0.0, 0.0);
        if model.d == 1 {
            for k in 0..n {
                acc += integrand(&[node(k)]);
            }
            acc / n as f64
        } else {
            for i in 0..n {
                for j in 0..n {
                    acc += integrand(&[node(i), node(j)]);
                }
            }
            acc / (n * n) as f64
        }
    };
    let max_n = if model.d == 1 { 1 << 18 } else { 1 << 11 };
    let mut n = 16;
    let mut prev = rule(n);
    while n < max_n {
        n *= 2;
        let cur = rule(n);
        if (cur - prev).norm() <= QUAD_TOL {
            if cur.im.abs() >= IMAG_TOL {
                return Err(Error::Numeric(format!("imaginary part {} is not negligible", cur.im)));
            }
            return Ok(cur.re);
        }
        prev = cur;
    }
    Err(Error::Numeric(format!("Fourier quadrature did not converge with {max_n} nodes")))
}
