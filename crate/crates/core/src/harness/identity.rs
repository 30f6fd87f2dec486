//! The identity suite: every exact identity and distributional law the
//! modules promise, run as pass/fail gates against one model.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand_distr::{Distribution, Gamma};

use super::config::{theta_grid, ExperimentConfig, IdentitySizes, Thresholds};
use super::ks;
use super::report::{Gate, GateStatus, IdentityReport};
use crate::error::{Error, Result};
use crate::fixedpoint::{dirichlet_fractions, fixpoint_continue, fixpoint_iterate};
use crate::martingale::{
    c_n, expected_tau_transform, h_n, log_c_n_asymptotic, m_exponent, w_continuous, w_n, LambdaPoint,
};
use crate::normalize::{log_gamma, poisson_profile_coeffs};
use crate::oracle::{
    conditional_martingale_check, conditional_martingale_check_exact, enumerate_histories, exact_mean_profile,
    history_count, martingale_grid, DEFAULT_HISTORY_CAP,
};
use crate::par::{map_range, Execution};
use crate::rng::{label, stream, Purpose};
use crate::spectral::{is_nondegenerate, range_d1, range_function};
use crate::tree_sim::{grow, grow_profile, sample_tau, subtree_fractions, yule_limit_cdf, yule_limit_samples};
use crate::weight_model::WeightModel;

/// Gate names in report order.
pub const GATES: &[&str] = &[
    "validation",
    "nondegenerate",
    "martingale_grid",
    "martingale_rational",
    "tau_product",
    "c_n_asymptotic",
    "bridge",
    "limit_connection",
    "gamma_limit",
    "dirichlet_subtrees",
    "dirichlet_sampler",
    "tau_transform_mc",
    "mean_profile_enumeration",
    "mean_profile_mc",
    "mean_martingale",
    "hwang_rrt",
    "range_endpoints",
    "poisson_fourier",
    "fixpoint_mean",
    "fixpoint_ks",
    "fixpoint_self_consistency",
    "fixpoint_theta_zero",
];

/// Largest d = 2 size for the mean-profile identity; the sparse recursion
/// is quadratic in n there.
const MEAN_IDENTITY_N_D2: u64 = 200;

struct Ctx<'a> {
    model: &'a WeightModel,
    sizes: IdentitySizes,
    th: Thresholds,
    seed: u64,
    exec: Execution,
    pool: (usize, u64),
}

/// Real grid: the interior theta table and {-log 2, 0, log 2}^d.
fn real_grid(d: usize) -> Vec<Vec<f64>> {
    let mut out = theta_grid(d);
    out.extend(martingale_grid(d).into_iter().map(|l| l.theta));
    out
}

fn largest_feasible_n(model: &WeightModel, n_max: u64) -> Option<u64> {
    (0..=n_max).rev().find(|&n| history_count(model, n) <= DEFAULT_HISTORY_CAP)
}

pub fn run_identity_suite(model: &WeightModel, config: &ExperimentConfig, exec: Execution) -> IdentityReport {
    let mut gates = Vec::with_capacity(GATES.len());
    let report = model.validate();
    gates.push(Gate {
        name: "validation".into(),
        hard: true,
        status: GateStatus::from_bool(report.is_ok()),
        statistic: None,
        threshold: None,
        detail: report.issues.join("; "),
    });
    if !report.is_ok() {
        for name in &GATES[1..] {
            gates.push(Gate::skip(name, true, "model failed validation"));
        }
        return IdentityReport {
            preset: model.name.clone(),
            seed: config.seed,
            gates,
        };
    }
    let ctx = Ctx {
        model,
        sizes: config.identity,
        th: config.thresholds,
        seed: config.seed,
        exec,
        pool: (config.pool.size, config.pool.iterations),
    };
    gates.push(Gate {
        name: "nondegenerate".into(),
        hard: true,
        status: GateStatus::from_bool(is_nondegenerate(model)),
        statistic: None,
        threshold: None,
        detail: String::new(),
    });
    let run = |name: &str, f: &dyn Fn(&Ctx) -> Result<Gate>| f(&ctx).unwrap_or_else(|e| Gate::error(name, true, &e));
    gates.push(run("martingale_grid", &martingale_grid_gate));
    gates.push(run("martingale_rational", &martingale_rational_gate));
    gates.push(run("tau_product", &tau_product_gate));
    gates.push(run("c_n_asymptotic", &asymptotic_gate));
    gates.push(run("bridge", &bridge_gate));
    gates.push(run("limit_connection", &limit_connection_gate));
    gates.push(run("gamma_limit", &gamma_limit_gate));
    gates.push(run("dirichlet_subtrees", &dirichlet_subtree_gate));
    gates.push(run("dirichlet_sampler", &dirichlet_sampler_gate));
    gates.push(run("tau_transform_mc", &tau_mc_gate));
    gates.push(run("mean_profile_enumeration", &enumeration_gate));
    gates.push(run("mean_profile_mc", &profile_mc_gate));
    gates.push(run("mean_martingale", &mean_martingale_gate));
    gates.push(run("hwang_rrt", &hwang_gate));
    gates.push(run("range_endpoints", &range_gate));
    gates.push(run("poisson_fourier", &fourier_gate));
    match fixpoint_gates(&ctx) {
        Ok(gs) => gates.extend(gs),
        Err(e) => {
            for name in &GATES[GATES.len() - 4..] {
                gates.push(Gate::error(name, true, &e));
            }
        }
    }
    IdentityReport {
        preset: model.name.clone(),
        seed: config.seed,
        gates,
    }
}

fn martingale_grid_gate(ctx: &Ctx) -> Result<Gate> {
    let grid = martingale_grid(ctx.model.d);
    let top = largest_feasible_n(ctx.model, ctx.sizes.martingale_n)
        .ok_or_else(|| Error::Resource("no feasible enumeration size".into()))?;
    let mut worst: f64 = 0.0;
    for n in 0..=top {
        worst = worst.max(conditional_martingale_check(ctx.model, n, &grid)?);
    }
    Ok(Gate::below(
        "martingale_grid",
        true,
        worst,
        ctx.th.martingale,
        format!("n <= {top}, {} grid points", grid.len()),
    ))
}

fn martingale_rational_gate(ctx: &Ctx) -> Result<Gate> {
    let top = largest_feasible_n(ctx.model, ctx.sizes.martingale_n)
        .ok_or_else(|| Error::Resource("no feasible enumeration size".into()))?;
    let mut worst = BigRational::zero();
    for (p, q) in [(1, 2), (1, 1), (2, 1)] {
        let z = vec![BigRational::new(BigInt::from(p), BigInt::from(q)); ctx.model.d];
        for n in 0..=top {
            let dev = conditional_martingale_check_exact(ctx.model, n, &z)?;
            if dev > worst {
                worst = dev;
            }
        }
    }
    Ok(Gate {
        name: "martingale_rational".into(),
        hard: true,
        status: GateStatus::from_bool(worst.is_zero()),
        statistic: worst.to_f64(),
        threshold: Some(0.0),
        detail: format!("exact, z in {{1/2, 1, 2}}, n <= {top}"),
    })
}

/// C_n (log-scale, compensated) times prod_j a_j / (a_j - (1 - m)) as a plain
/// running product.
fn tau_product_gate(ctx: &Ctx) -> Result<Gate> {
    let mut worst: f64 = 0.0;
    let sizes = [1, 10, 100, 1000, ctx.sizes.product_n];
    let step = (ctx.model.b - 1) as f64;
    for theta in real_grid(ctx.model.d) {
        let lambda = LambdaPoint::real(theta);
        let s = 1.0 - m_exponent(ctx.model, &lambda)?.re;
        let mut product = 1.0;
        let mut j = 0u64;
        for &n in &sizes {
            while j < n {
                let a = step * j as f64 + 1.0;
                product *= a / (a - s);
                j += 1;
            }
            let c = c_n(ctx.model, &lambda, n)?;
            worst = worst.max((c.to_complex().re * product - 1.0).abs());
        }
    }
    Ok(Gate::below(
        "tau_product",
        true,
        worst,
        ctx.th.product_identity,
        format!("n <= {}", ctx.sizes.product_n),
    ))
}

fn asymptotic_gate(ctx: &Ctx) -> Result<Gate> {
    let n = ctx.sizes.asymptotic_n;
    let mut worst: f64 = 0.0;
    for theta in real_grid(ctx.model.d) {
        let c = c_n(ctx.model, &LambdaPoint::real(theta.clone()), n)?;
        let asym = log_c_n_asymptotic(ctx.model, &theta, n)?;
        worst = worst.max(((c.ln_abs() - asym).exp() - 1.0).abs());
    }
    Ok(Gate::below("c_n_asymptotic", true, worst, ctx.th.asymptotic, format!("n = {n}")))
}

/// W^(tau_n) = H_n W_n per replication, tau_n drawn independently of the tree.
fn bridge_gate(ctx: &Ctx) -> Result<Gate> {
    let n = ctx.sizes.bridge_n;
    let grid: Vec<LambdaPoint> = real_grid(ctx.model.d).into_iter().map(LambdaPoint::real).collect();
    let devs = map_range(ctx.exec, 0..ctx.sizes.bridge_reps, |r| -> Result<f64> {
        let profile = grow_profile(ctx.model, n, &mut stream(ctx.seed, Purpose::Replication, r))?;
        let tau = sample_tau(ctx.model.b, n, &mut stream(ctx.seed, Purpose::Tau, r));
        let mut worst: f64 = 0.0;
        for lambda in &grid {
            let cont = w_continuous(&profile, tau, ctx.model, lambda)?;
            let bridged = h_n(ctx.model, lambda, tau, n)? * w_n(&profile, ctx.model, lambda)?;
            worst = worst.max((cont - bridged).norm() / cont.norm().max(1.0));
        }
        Ok(worst)
    });
    let worst = devs.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
    Ok(Gate::below(
        "bridge",
        true,
        worst,
        ctx.th.bridge,
        format!("n = {n}, {} reps", ctx.sizes.bridge_reps),
    ))
}

/// H_n(theta) against (Y/(b-1))^{(m-1)/(b-1)} Gamma(1/(b-1)) / Gamma(m/(b-1))
/// with Y drawn from the Gamma limit.
fn limit_connection_gate(ctx: &Ctx) -> Result<Gate> {
    let theta = theta_grid(ctx.model.d).pop().expect("nonempty grid");
    let lambda = LambdaPoint::real(theta);
    let b = ctx.model.b;
    let step = (b - 1) as f64;
    let m = m_exponent(ctx.model, &lambda)?.re;
    let n = ctx.sizes.gamma_n;
    let reps = ctx.sizes.gamma_reps;
    let h = map_range(ctx.exec, 0..reps, |r| {
        let tau = sample_tau(b, n, &mut stream(ctx.seed, Purpose::Aux(label("limit-tau")), r));
        h_n(ctx.model, &lambda, tau, n).map(|v| v.re)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let log_ratio = log_gamma(1.0 / step)? - log_gamma(m / step)?;
    let gamma = Gamma::new(1.0 / step, step).map_err(|e| Error::Numeric(e.to_string()))?;
    let limit = map_range(ctx.exec, 0..reps, |r| {
        let y: f64 = gamma.sample(&mut stream(ctx.seed, Purpose::Aux(label("limit-gamma")), r));
        ((m - 1.0) / step * (y / step).ln() + log_ratio).exp()
    });
    let d = ks::two_sample(&h, &limit)?;
    let p = ks::p_value(d, ks::effective_size(h.len(), limit.len()));
    Ok(Gate::above(
        "limit_connection",
        true,
        p,
        ctx.th.ks_level,
        format!("KS D = {d:.5}, n = {n}, {reps} reps, m = {m:.6}"),
    ))
}

fn gamma_limit_gate(ctx: &Ctx) -> Result<Gate> {
    let b = ctx.model.b;
    let s = yule_limit_samples(b, ctx.sizes.gamma_n, ctx.sizes.gamma_reps, ctx.seed, ctx.exec);
    let d = ks::one_sample(&s, |x| yule_limit_cdf(b, x))?;
    let p = ks::p_value(d, s.len());
    Ok(Gate::above(
        "gamma_limit",
        true,
        p,
        ctx.th.ks_level,
        format!("KS D = {d:.5}, n = {}, {} draws", ctx.sizes.gamma_n, s.len()),
    ))
}

/// First root-subtree fraction against its Beta(1/(b-1), 1) limit.
fn dirichlet_subtree_gate(ctx: &Ctx) -> Result<Gate> {
    let alpha = 1.0 / (ctx.model.b - 1) as f64;
    let n = ctx.sizes.dirichlet_n;
    let firsts = map_range(ctx.exec, 0..ctx.sizes.dirichlet_reps, |r| -> Result<f64> {
        let mut rng = stream(ctx.seed, Purpose::Aux(label("dirichlet")), r);
        let (tree, _) = grow(ctx.model, n, &mut rng, false)?;
        Ok(subtree_fractions(&tree)?[0])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let d = ks::one_sample(&firsts, |x| x.clamp(0.0, 1.0).powf(alpha))?;
    let p = ks::p_value(d, firsts.len());
    Ok(Gate::above(
        "dirichlet_subtrees",
        true,
        p,
        ctx.th.ks_level,
        format!("KS D = {d:.5}, n = {n}, {} reps", firsts.len()),
    ))
}

fn dirichlet_sampler_gate(ctx: &Ctx) -> Result<Gate> {
    let b = ctx.model.b;
    let alpha = 1.0 / (b - 1) as f64;
    let mut rng = stream(ctx.seed, Purpose::Aux(label("dirichlet-sampler")), 0);
    let firsts: Vec<f64> = (0..ctx.sizes.dirichlet_draws)
        .map(|_| dirichlet_fractions(b, &mut rng)[0])
        .collect();
    let d = ks::one_sample(&firsts, |x| x.clamp(0.0, 1.0).powf(alpha))?;
    let p = ks::p_value(d, firsts.len());
    Ok(Gate::above(
        "dirichlet_sampler",
        true,
        p,
        ctx.th.ks_level,
        format!("KS D = {d:.5}, {} draws", firsts.len()),
    ))
}

/// Monte Carlo mean of e^{s tau_n} against the exact product, in standard errors.
fn tau_mc_gate(ctx: &Ctx) -> Result<Gate> {
    let (b, n, s) = (ctx.model.b, ctx.sizes.tau_n, ctx.sizes.tau_s);
    let draws = map_range(ctx.exec, 0..ctx.sizes.tau_reps, |r| {
        (s * sample_tau(b, n, &mut stream(ctx.seed, Purpose::Aux(label("tau-mc")), r))).exp()
    });
    let k = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / k;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let exact = expected_tau_transform(b, s, n)?.product;
    let z = (mean - exact).abs() / (var / k).sqrt();
    Ok(Gate::below(
        "tau_transform_mc",
        true,
        z,
        ctx.th.tau_sigmas,
        format!("s = {s}, n = {n}, mean {mean:.6} vs {exact:.6}"),
    ))
}

fn enumeration_gate(ctx: &Ctx) -> Result<Gate> {
    let top = largest_feasible_n(ctx.model, 5).ok_or_else(|| Error::Resource("no feasible size".into()))?;
    let mut worst: f64 = 0.0;
    for n in 0..=top {
        let exact = enumerate_histories(ctx.model, n)?.mean_profile();
        let rec = exact_mean_profile(ctx.model, n)?;
        if exact.len() != rec.means.len() {
            return Ok(Gate::below(
                "mean_profile_enumeration",
                true,
                f64::INFINITY,
                ctx.th.mean_identity,
                format!("level sets differ at n = {n}"),
            ));
        }
        for (l, v) in &exact {
            let v = v.to_f64().unwrap_or(f64::NAN);
            worst = worst.max((rec.get(l) - v).abs() / v.max(1.0));
        }
    }
    Ok(Gate::below(
        "mean_profile_enumeration",
        true,
        worst,
        1e-12,
        format!("n <= {top}"),
    ))
}

/// Largest |Monte Carlo mean - exact mean| over levels, in standard errors.
fn profile_mc_gate(ctx: &Ctx) -> Result<Gate> {
    let n = ctx.sizes.profile_n;
    let reps = ctx.sizes.profile_reps;
    let profiles = map_range(ctx.exec, 0..reps, |r| {
        grow_profile(ctx.model, n, &mut stream(ctx.seed, Purpose::Replication, r))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let exact = exact_mean_profile(ctx.model, n)?;
    let mut sums: std::collections::BTreeMap<Vec<i64>, (f64, f64)> = std::collections::BTreeMap::new();
    for p in &profiles {
        for (l, &u) in &p.counts {
            let e = sums.entry(l.clone()).or_insert((0.0, 0.0));
            e.0 += u as f64;
            e.1 += (u as f64).powi(2);
        }
    }
    let k = reps as f64;
    let mut levels: std::collections::BTreeSet<&Vec<i64>> = exact.means.keys().collect();
    levels.extend(sums.keys());
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for l in levels {
        let (s1, s2) = sums.get(l).copied().unwrap_or((0.0, 0.0));
        let mean = s1 / k;
        let var = ((s2 - k * mean * mean) / (k - 1.0)).max(0.0);
        let want = exact.get(l);
        // U is integer valued, so Var U >= E U (1 - E U). The floor keeps rare
        // levels, whose sample variance is unreliable, from inflating z.
        let floor = (want * (1.0 - want)).max(0.0);
        let se = (var.max(floor) / k).sqrt();
        let diff = (mean - want).abs();
        let z = if diff == 0.0 { 0.0 } else { diff / se };
        if z > worst {
            worst = z;
            at = format!("{l:?}");
        }
    }
    Ok(Gate::below(
        "mean_profile_mc",
        true,
        worst,
        ctx.th.profile_sigmas,
        format!("n = {n}, {reps} reps, worst level {at}"),
    ))
}

/// sum_l E U_l(n) e^{-theta (l - shift)} / C_n(theta) = 1.
fn mean_martingale_gate(ctx: &Ctx) -> Result<Gate> {
    let m = ctx.model;
    let top = if m.d == 1 {
        ctx.sizes.mean_identity_n
    } else {
        ctx.sizes.mean_identity_n.min(MEAN_IDENTITY_N_D2)
    };
    let mut sizes: Vec<u64> = [1, 10, 100, top].into_iter().filter(|&n| n <= top).collect();
    sizes.dedup();
    let mut worst: f64 = 0.0;
    for n in sizes {
        let mp = exact_mean_profile(m, n)?;
        for theta in real_grid(m.d) {
            let s: f64 = mp
                .means
                .iter()
                .map(|(l, u)| {
                    let dot: f64 = (0..m.d).map(|k| theta[k] * (l[k] - m.root_shift[k]) as f64).sum();
                    u * (-dot).exp()
                })
                .sum();
            let c = c_n(m, &LambdaPoint::real(theta), n)?.to_complex().re;
            worst = worst.max((s / c - 1.0).abs());
        }
    }
    Ok(Gate::below(
        "mean_martingale",
        true,
        worst,
        ctx.th.mean_identity,
        format!("n <= {top}"),
    ))
}

fn is_rrt_law(model: &WeightModel) -> bool {
    model.b == 2
        && model.d == 1
        && model.root_shift == vec![0]
        && model
            .marginal()
            .map(|law| law.atoms == vec![(vec![0], 0.5), (vec![1], 0.5)])
            .unwrap_or(false)
        && model.atoms.iter().all(|a| a.weights[0][0] + a.weights[1][0] == 1)
}

/// Exact mean profile against (log N)^l / (l! Gamma(1 + l / log N)), N = n + 1.
fn hwang_gate(ctx: &Ctx) -> Result<Gate> {
    if !is_rrt_law(ctx.model) {
        return Ok(Gate::skip("hwang_rrt", true, "applies to the rrt law only"));
    }
    let n = ctx.sizes.hwang_n;
    let mp = exact_mean_profile(ctx.model, n)?;
    let ln = ((n + 1) as f64).ln();
    let mut worst: f64 = 0.0;
    for l in ((0.8 * ln).ceil() as i64)..=((1.2 * ln).floor() as i64) {
        let lf = l as f64;
        let hwang = (lf * ln.ln() - log_gamma(lf + 1.0)? - log_gamma(1.0 + lf / ln)?).exp();
        worst = worst.max((mp.get(&[l]) / hwang - 1.0).abs());
    }
    Ok(Gate::below(
        "hwang_rrt",
        true,
        worst,
        ctx.th.hwang,
        format!("n = {n}, l in [0.8, 1.2] log n"),
    ))
}

fn range_gate(ctx: &Ctx) -> Result<Gate> {
    if ctx.model.d != 1 {
        return Ok(Gate::skip("range_endpoints", true, "d > 1"));
    }
    let r = range_d1(ctx.model)?.interval.expect("d = 1 has an interval");
    let law = ctx.model.marginal()?;
    let mut worst: f64 = 0.0;
    for z in [r.z0, r.z1] {
        if z > 0.0 && z.is_finite() {
            worst = worst.max(range_function(&law, ctx.model.b, z).abs());
        }
    }
    Ok(Gate::below(
        "range_endpoints",
        true,
        worst,
        ctx.th.range_residual,
        format!("z0 = {}, z1 = {}", r.z0, r.z1),
    ))
}

/// Quadrature of the Fourier integral against e^{-theta l} e^{-t m} A_l / l!.
fn fourier_gate(ctx: &Ctx) -> Result<Gate> {
    let m = ctx.model;
    if m.d != 1 {
        return Ok(Gate::skip("poisson_fourier", true, "d > 1"));
    }
    if m.marginal()?.atoms.iter().any(|(v, _)| v[0] < 0) {
        return Ok(Gate::skip("poisson_fourier", true, "negative support"));
    }
    let t = ctx.sizes.fourier_t;
    let l_max = ctx.sizes.fourier_l_max;
    let a = poisson_profile_coeffs(m, t, l_max)?;
    let mut worst: f64 = 0.0;
    for theta in real_grid(1) {
        let mm = m_exponent(m, &LambdaPoint::real(theta.clone()))?.re;
        for l in 0..=l_max {
            let lf = l as f64;
            let want = (-theta[0] * lf - t * mm + a[l].ln() - log_gamma(lf + 1.0)?).exp();
            let got = crate::oracle::numeric_fourier_profile(m, t, &theta, &[l as i64])?;
            worst = worst.max((got - want).abs());
        }
    }
    Ok(Gate::below(
        "poisson_fourier",
        true,
        worst,
        ctx.th.fourier,
        format!("t = {t}, l <= {l_max}"),
    ))
}

fn fixpoint_gates(ctx: &Ctx) -> Result<Vec<Gate>> {
    let (size, iters) = ctx.pool;
    let mut mean_dev: f64 = 0.0;
    let mut ks_prev: f64 = 0.0;
    let mut ks_again: f64 = 0.0;
    for theta in theta_grid(ctx.model.d) {
        let pool = fixpoint_iterate(ctx.model, &theta, size, iters, ctx.seed, ctx.exec)?;
        mean_dev = mean_dev.max((pool.mean - 1.0).abs());
        ks_prev = ks_prev.max(pool.ks_to_previous);
        let again = fixpoint_continue(ctx.model, &pool, ctx.seed, ctx.exec)?;
        ks_again = ks_again.max(ks::two_sample(&again.samples, &pool.samples)?);
    }
    let zero = fixpoint_iterate(ctx.model, &vec![0.0; ctx.model.d], size.min(10_000), iters.min(5), ctx.seed, ctx.exec)?;
    let zero_dev = zero.samples.iter().map(|w| (w - 1.0).abs()).fold(0.0, f64::max);
    let detail = format!("M = {size}, K = {iters}, 3 interior theta");
    Ok(vec![
        Gate::below("fixpoint_mean", true, mean_dev, ctx.th.fixpoint_mean, detail.clone()),
        Gate::below("fixpoint_ks", true, ks_prev, ctx.th.fixpoint_ks, detail.clone()),
        Gate::below("fixpoint_self_consistency", true, ks_again, ctx.th.fixpoint_ks, detail),
        // Exact up to the rounding of b - 1 additions per slot and iteration.
        Gate::below("fixpoint_theta_zero", true, zero_dev, 64.0 * f64::EPSILON, "theta = 0"),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight_model::preset_default;

    fn quick_config(seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig { seed, ..ExperimentConfig::default() };
        cfg.identity.asymptotic_n = 100_000;
        cfg.identity.dirichlet_reps = 1000;
        cfg.identity.dirichlet_n = 2000;
        cfg.identity.profile_reps = 20_000;
        cfg.pool.size = 20_000;
        cfg.pool.iterations = 20;
        // KS resolution at M = 2e4 is about 0.016 at the 1% level.
        cfg.thresholds.fixpoint_mean = 0.03;
        cfg.thresholds.fixpoint_ks = 0.03;
        cfg
    }

    #[test]
    fn corrupted_model_fails_validation_and_skips_the_rest() {
        let mut m = preset_default("rrt").unwrap();
        m.atoms[0].weights = vec![vec![1], vec![1]];
        let r = run_identity_suite(&m, &quick_config(1), Execution::Parallel);
        assert_eq!(r.gates.len(), GATES.len());
        assert_eq!(r.gates[0].status, GateStatus::Fail);
        assert!(r.gates[0].detail.contains("marginals differ"));
        assert!(r.gates[1..].iter().all(|g| g.status == GateStatus::Skip));
    }

    #[test]
    fn bst_passes_with_identical_pattern_across_seeds() {
        let m = preset_default("bst").unwrap();
        let a = run_identity_suite(&m, &quick_config(1), Execution::Parallel);
        let b = run_identity_suite(&m, &quick_config(2), Execution::Parallel);
        let names: Vec<&str> = a.gates.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, GATES);
        for g in &a.gates {
            assert!(!g.hard_failure(), "{g:?}");
        }
        let pattern = |r: &IdentityReport| r.gates.iter().map(|g| g.status).collect::<Vec<_>>();
        assert_eq!(pattern(&a), pattern(&b));
    }

    #[test]
    fn rrt_runs_the_hwang_gate() {
        let m = preset_default("rrt").unwrap();
        assert!(is_rrt_law(&m));
        assert!(is_rrt_law(&preset_default("dirchange").unwrap()));
        assert!(!is_rrt_law(&preset_default("bst").unwrap()));
        let ctx = Ctx {
            model: &m,
            sizes: IdentitySizes { hwang_n: 20_000, ..IdentitySizes::default() },
            th: Thresholds::default(),
            seed: 0,
            exec: Execution::Sequential,
            pool: (1000, 1),
        };
        assert_eq!(hwang_gate(&ctx).unwrap().status, GateStatus::Pass);
    }
}
