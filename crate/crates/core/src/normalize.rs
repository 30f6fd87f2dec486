//! Normalizing constants for the profile at linear-in-log-n levels, and the
//! Poisson-mixture coefficients of the local shape.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{in_lambda_tilde, range_d1, spectral_point, theta_of_c, RangeD1};
use crate::weight_model::WeightModel;

/// Distance to the admissible boundary below which a warning is raised.
pub const BOUNDARY_WARN: f64 = 1e-6;

/// log Gamma(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Componentwise floor(c log n / (b - 1)).
pub fn l_n(c: &[f64], n: u64, b: usize) -> Result<Vec<i64>> {
    if n < 2 {
        return Err(Error::param("n", "l_n needs n >= 2"));
    }
    Ok(l_n_at(c, (n as f64).ln(), b))
}

/// l_n with log n given directly.
pub fn l_n_at(c: &[f64], log_n: f64, b: usize) -> Vec<i64> {
    let s = log_n / (b - 1) as f64;
    c.iter().map(|x| (x * s).floor() as i64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Normalization {
    pub c: Vec<f64>,
    pub theta: Vec<f64>,
    /// Level used in the e^{-theta l} factor.
    pub l: Vec<i64>,
    pub log_value: f64,
    /// Distance of theta to the edge of the admissible region.
    pub boundary_distance: f64,
    pub boundary_warning: bool,
}

impl Normalization {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// How far theta sits inside the admissible region: the theta-distance to
/// the nearest endpoint for d = 1, the defining slack otherwise.
pub fn boundary_distance(model: &WeightModel, theta: &[f64]) -> Result<f64> {
    if model.d == 1 {
        let r: RangeD1 = range_d1(model)?.interval.expect("d = 1 has an interval");
        Ok((theta[0] - r.theta_low).abs().min((r.theta_high - theta[0]).abs()))
    } else {
        crate::spectral::lambda_tilde_slack(model, theta)
    }
}

fn log_normalizer(model: &WeightModel, n: u64, theta: &[f64], l: &[f64]) -> Result<f64> {
    let sp = spectral_point(model, theta)?;
    let m = sp.a + 1.0;
    let step = (model.b - 1) as f64;
    let log_n = (n as f64).ln();
    if sp.det_hess <= 0.0 {
        return Err(Error::Numeric(format!("det of the Hessian is {}", sp.det_hess)));
    }
    let theta_l: f64 = theta.iter().zip(l).map(|(t, x)| t * x).sum();
    let log_sqrt = 0.5 * (model.d as f64 * (2.0 * std::f64::consts::PI * log_n / step).ln() + sp.det_hess.ln());
    Ok((m - 1.0) / step * log_n + theta_l - log_sqrt + log_gamma(1.0 / step)? - log_gamma(m / step)?)
}

fn finish(model: &WeightModel, n: u64, c: Vec<f64>, theta: Vec<f64>, l: Vec<i64>) -> Result<Normalization> {
    let lf: Vec<f64> = l.iter().map(|&x| x as f64).collect();
    let log_value = log_normalizer(model, n, &theta, &lf)?;
    let boundary_distance = boundary_distance(model, &theta)?;
    Ok(Normalization {
        c,
        theta,
        l,
        log_value,
        boundary_distance,
        boundary_warning: boundary_distance < BOUNDARY_WARN,
    })
}

/// A_c(n) with the floored level l_n(c).
pub fn a_c(model: &WeightModel, n: u64, c: &[f64]) -> Result<Normalization> {
    let theta = theta_of_c(model, c)?;
    let l = l_n(c, n, model.b)?;
    finish(model, n, c.to_vec(), theta, l)
}

/// A-bar at an integer level l, with c = (b-1) l / log n.
pub fn a_bar(model: &WeightModel, n: u64, l: &[i64]) -> Result<Normalization> {
    if n < 2 {
        return Err(Error::param("n", "needs n >= 2"));
    }
    let step = (model.b - 1) as f64;
    let log_n = (n as f64).ln();
    let c: Vec<f64> = l.iter().map(|&x| step * x as f64 / log_n).collect();
    let theta = theta_of_c(model, &c)?;
    finish(model, n, c, theta, l.to_vec())
}

/// The d = 1 constant written in z = e^{-theta}, with z solved directly from
/// b E Z z^Z = (b-1) l / log n. Returns log A-hat and z.
pub fn a_hat_d1(model: &WeightModel, n: u64, l: i64) -> Result<(f64, f64)> {
    if model.d != 1 {
        return Err(Error::Domain(format!("a_hat_d1 needs d = 1, got d = {}", model.d)));
    }
    if n < 2 {
        return Err(Error::param("n", "needs n >= 2"));
    }
    let law = model.marginal()?;
    let b = model.b as f64;
    let step = b - 1.0;
    let log_n = (n as f64).ln();
    let target = step * l as f64 / log_n;
    let moments = |z: f64| {
        let lz = z.ln();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (v, p) in &law.atoms {
            let k = v[0] as f64;
            let w = b * p * (k * lz).exp();
            m0 += w;
            m1 += w * k;
            m2 += w * k * k;
        }
        (m0, m1, m2)
    };
    // b E Z z^Z is increasing in z; bisect in log z.
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut tries = 0;
    while moments(lo.exp()).1 > target || moments(hi.exp()).1 < target {
        if moments(lo.exp()).1 > target {
            lo *= 2.0;
        }
        if moments(hi.exp()).1 < target {
            hi *= 2.0;
        }
        tries += 1;
        if tries > 10 {
            return Err(Error::Domain(format!("level {l} is not attainable at n = {n}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if moments(mid.exp()).1 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let log_z = 0.5 * (lo + hi);
    let z = log_z.exp();
    if !in_lambda_tilde(model, &[-log_z])? {
        return Err(Error::Domain(format!("z = {z} for level {l} is outside the admissible range")));
    }
    let (m0, _, m2) = moments(z);
    let log_value = (m0 - 1.0) / step * log_n
        - l as f64 * log_z
        - 0.5 * (2.0 * std::f64::consts::PI * log_n / step * m2).ln()
        + log_gamma(1.0 / step)?
        - log_gamma(m0 / step)?;
    Ok((log_value, z))
}

/// A_0 .. A_{l_max} with A_l = l! [x^l] exp(b t sum_k p_k x^k).
pub fn poisson_profile_coeffs(model: &WeightModel, t: f64, l_max: usize) -> Result<Vec<f64>> {
    if model.d != 1 {
        return Err(Error::Domain("Poisson coefficients need d = 1".into()));
    }
    if !(t > 0.0) {
        return Err(Error::param("t", "must be positive"));
    }
    let law = model.marginal()?;
    if law.atoms.iter().any(|(v, _)| v[0] < 0) {
        return Err(Error::Domain("Poisson coefficients need a nonnegative support".into()));
    }
    let top = law.atoms.iter().map(|(v, _)| v[0] as usize).max().unwrap_or(0);
    let mut g = vec![0.0; top + 1];
    for (v, p) in &law.atoms {
        g[v[0] as usize] = model.b as f64 * t * p;
    }
    // From l f_l = sum_k k g_k f_{l-k} with A_l = l! f_l:
    // A_l = sum_k g_k A_{l-k} k (l-1)! / (l-k)!.
    let mut a = vec![0.0; l_max + 1];
    a[0] = g[0].exp();
    for l in 1..=l_max {
        let mut acc = 0.0;
        let mut falling = 1.0;
        for k in 1..=top.min(l) {
            if k > 1 {
                falling *= (l - k + 1) as f64;
            }
            acc += g[k] * a[l - k] * k as f64 * falling;
        }
        a[l] = acc;
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight_model::{preset, preset_default, Params, PRESETS};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn log_gamma_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-15);
        let half = 0.5 * std::f64::consts::PI.ln();
        assert!(rel(log_gamma(0.5).unwrap(), half) < 1e-13);
        assert!(rel(log_gamma(11.0).unwrap(), 3_628_800f64.ln()) < 1e-13);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.0).is_err());
    }

    #[test]
    fn level_index() {
        assert_eq!(l_n_at(&[2.0], 5.0, 2), vec![10]);
        assert_eq!(l_n(&[1.5], 100, 2).unwrap(), vec![6]);
        assert_eq!(l_n(&[-0.5], 100, 2).unwrap(), vec![-3]);
        assert_eq!(l_n(&[2.0, 1.0], 100, 3).unwrap(), vec![4, 2]);
    }

    #[test]
    fn bst_at_c_two() {
        let bst = preset_default("bst").unwrap();
        for n in [100u64, 10_000, 1_000_000] {
            let a = a_c(&bst, n, &[2.0]).unwrap();
            let ln = (n as f64).ln();
            let want = n as f64 / (4.0 * std::f64::consts::PI * ln).sqrt();
            assert!(rel(a.value(), want) < 1e-12);
            assert_eq!(a.theta, vec![0.0]);
            assert!(!a.boundary_warning);
        }
    }

    #[test]
    fn rrt_a_bar_at_theta_zero() {
        let rrt = preset_default("rrt").unwrap();
        // l / log n = 1 needs n = e^l.
        let l = 12i64;
        let n = (l as f64).exp();
        let n_int = n.round() as u64;
        let a = a_bar(&rrt, n_int, &[l]).unwrap();
        let ln = (n_int as f64).ln();
        // theta is near (not exactly) 0 since n is rounded; compare with A-hat.
        let (hat, _) = a_hat_d1(&rrt, n_int, l).unwrap();
        assert!((a.log_value - hat).abs() < 1e-12);
        let want = (n_int as f64).ln() - 0.5 * (2.0 * std::f64::consts::PI * ln).ln();
        assert!((a.log_value - want).abs() < 1e-6);
    }

    #[test]
    fn rrt_a_hat_closed_form() {
        let rrt = preset_default("rrt").unwrap();
        for (n, l) in [(1_000u64, 5i64), (100_000, 12), (1_000_000, 17)] {
            let ln = (n as f64).ln();
            let x = l as f64 / ln;
            let (hat, z) = a_hat_d1(&rrt, n, l).unwrap();
            assert!(rel(z, x) < 1e-12);
            let want = x * ln - log_gamma(1.0 + x).unwrap() - l as f64 * x.ln()
                - 0.5 * (2.0 * std::f64::consts::PI * l as f64).ln();
            assert!((hat - want).abs() < 1e-11, "n={n} l={l}");
        }
    }

    #[test]
    fn rrt_a_hat_against_stirling_form() {
        // With z = l / log n the Stirling form is algebraically the same
        // constant, so the ratio is 1 up to rounding.
        let rrt = preset_default("rrt").unwrap();
        for n in [1e3, 1e5, 1e7, 1e9] {
            let ln = f64::ln(n);
            for frac in [0.5, 0.8, 1.5] {
                let l = (frac * ln).round() as i64;
                let (hat, _) = a_hat_d1(&rrt, n as u64, l).unwrap();
                let lf = l as f64;
                let b_l = lf * ln.ln() + lf * (1.0 - lf.ln())
                    - log_gamma(1.0 + lf / ln).unwrap()
                    - 0.5 * (2.0 * std::f64::consts::PI * lf).ln();
                assert!((hat - b_l).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn port_a_hat_uses_z_equal_two_l_over_log_n() {
        let port = preset_default("port").unwrap();
        let (n, l) = (100_000u64, 9i64);
        let (_, z) = a_hat_d1(&port, n, l).unwrap();
        assert!(rel(z, 2.0 * l as f64 / (n as f64).ln()) < 1e-12);
    }

    #[test]
    fn a_bar_vs_a_c_at_integral_points() {
        let bst = preset_default("bst").unwrap();
        let n = 1_000_000u64;
        let ln = (n as f64).ln();
        for l in [10i64, 20, 30] {
            let c = l as f64 / ln;
            let a = a_c(&bst, n, &[c]).unwrap();
            let b = a_bar(&bst, n, &[l]).unwrap();
            // Floor lands on l or l - 1; the theta l factor is the only difference.
            let dl = (l - a.l[0]) as f64;
            assert!(dl == 0.0 || dl == 1.0);
            assert!((b.log_value - a.log_value - a.theta[0] * dl).abs() < 1e-9);
        }
    }

    #[test]
    fn a_hat_equals_a_bar_on_d1_presets() {
        let n = 1_000_000u64;
        for name in PRESETS {
            let m = preset_default(name).unwrap();
            if m.d != 1 {
                continue;
            }
            let r = range_d1(&m).unwrap().interval.unwrap();
            let ln = (n as f64).ln();
            let step = (m.b - 1) as f64;
            let hi = if r.c_high.is_finite() { r.c_high } else { r.c_low + 5.0 };
            let lo_l = (r.c_low * ln / step).ceil() as i64 + 1;
            let hi_l = (hi * ln / step).floor() as i64 - 1;
            for l in lo_l..=hi_l {
                let bar = a_bar(&m, n, &[l]).unwrap();
                let (hat, _) = a_hat_d1(&m, n, l).unwrap();
                assert!((bar.log_value - hat).abs() < 1e-12, "{name} l={l}");
            }
        }
    }

    #[test]
    fn near_boundary_levels_warn() {
        let rrt = preset_default("rrt").unwrap();
        let r = range_d1(&rrt).unwrap().interval.unwrap();
        let c = r.c_high * (1.0 - 1e-9);
        let a = a_c(&rrt, 10_000, &[c]).unwrap();
        assert!(a.boundary_warning);
        assert!(a_c(&rrt, 10_000, &[r.c_high * 1.01]).is_err());
    }

    #[test]
    fn poisson_coefficients_closed_forms() {
        let t = 1.5f64;
        let bst = preset_default("bst").unwrap();
        for (l, a) in poisson_profile_coeffs(&bst, t, 20).unwrap().into_iter().enumerate() {
            assert!(rel(a, (2.0 * t).powi(l as i32)) < 1e-10);
        }
        let rrt = preset_default("rrt").unwrap();
        for (l, a) in poisson_profile_coeffs(&rrt, t, 20).unwrap().into_iter().enumerate() {
            assert!(rel(a, t.exp() * t.powi(l as i32)) < 1e-10);
        }
        assert!(poisson_profile_coeffs(&preset_default("lmr").unwrap(), t, 5).is_err());
    }

    #[test]
    fn poisson_coefficients_by_multinomial_sum() {
        // Brute force over compositions sum j a_j = l for a support {0,1,2}.
        let mut params = Params::new();
        params.insert("c".into(), "1,2".into());
        let m = preset("lopsided", &params).unwrap();
        let t = 0.7f64;
        let coeffs = poisson_profile_coeffs(&m, t, 12).unwrap();
        let g1 = 2.0 * t * 0.5;
        let g2 = 2.0 * t * 0.5;
        for l in 0..=12usize {
            let mut s = 0.0;
            for a2 in 0..=l / 2 {
                let a1 = l - 2 * a2;
                let lf = log_gamma(l as f64 + 1.0).unwrap()
                    - log_gamma(a1 as f64 + 1.0).unwrap()
                    - log_gamma(a2 as f64 + 1.0).unwrap();
                s += lf.exp() * g1.powi(a1 as i32) * g2.powi(a2 as i32);
            }
            assert!(rel(coeffs[l], s) < 1e-12, "l={l}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn normalizations_positive_and_finite(idx in 0usize..10, u in 0.05f64..0.95, logn in 1.0f64..16.1) {
            let m = preset_default(PRESETS[idx]).unwrap();
            let n = logn.exp() as u64;
            prop_assume!(n >= 2);
            let c = if m.d == 1 {
                let r = range_d1(&m).unwrap().interval.unwrap();
                let hi = if r.c_high.is_finite() { r.c_high } else { r.c_low + 5.0 };
                vec![r.c_low + u * (hi - r.c_low)]
            } else {
                spectral_point(&m, &[u - 0.5, 0.3 - u]).unwrap().grad
            };
            if let Ok(a) = a_c(&m, n, &c) {
                prop_assert!(a.log_value.is_finite());
            }
        }

        #[test]
        fn a_c_has_no_jumps_away_from_floor_steps(u in 0.1f64..0.9) {
            let bst = preset_default("bst").unwrap();
            let n = 10_000u64;
            let r = range_d1(&bst).unwrap().interval.unwrap();
            let c = r.c_low + u * (r.c_high - r.c_low);
            let a = a_c(&bst, n, &[c]).unwrap();
            let b = a_c(&bst, n, &[c + 0.01]).unwrap();
            prop_assume!(a.l == b.l);
            prop_assert!((b.log_value - a.log_value).abs() < 0.1f64.ln_1p());
        }
    }
}
