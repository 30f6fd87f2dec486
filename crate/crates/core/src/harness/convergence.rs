//! Monte Carlo campaigns for the normalized profile U_{l_n(c)}(n) / A_c(n)
//! against the fixed-point law at theta(c).

use std::collections::BTreeMap;

use super::config::{ExperimentConfig, GridPoint};
use super::ks;
use super::report::{ConvergencePoint, ConvergenceReport, Gate, TrendRow};
use crate::error::Result;
use crate::fixedpoint::{fixpoint_iterate, mean_and_variance, SamplePool};
use crate::normalize::{a_bar, a_c, Normalization};
use crate::par::{map_range, Execution};
use crate::rng::{stream, Purpose};
use crate::tree_sim::{grow_profile, Profile};
use crate::weight_model::WeightModel;

/// |theta| below which the limit is the constant 1.
const DEGENERATE_THETA: f64 = 1e-12;

fn normalization(model: &WeightModel, n: u64, point: &GridPoint) -> Result<Normalization> {
    match &point.l {
        Some(l) => a_bar(model, n, l),
        None => a_c(model, n, &point.c),
    }
}

/// U at the normalization's level, which is measured from the root.
fn ratio(model: &WeightModel, profile: &Profile, norm: &Normalization) -> f64 {
    let level: Vec<i64> = norm.l.iter().zip(&model.root_shift).map(|(l, s)| l + s).collect();
    profile.get(&level) as f64 / norm.value()
}

fn is_degenerate(theta: &[f64]) -> bool {
    theta.iter().all(|t| t.abs() < DEGENERATE_THETA)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(";")
}

/// Pools keyed by the bit pattern of theta.
struct Pools<'a> {
    model: &'a WeightModel,
    config: &'a ExperimentConfig,
    exec: Execution,
    cache: BTreeMap<Vec<u64>, SamplePool>,
}

impl Pools<'_> {
    fn get(&mut self, theta: &[f64]) -> Result<&SamplePool> {
        let key: Vec<u64> = theta.iter().map(|t| t.to_bits()).collect();
        if !self.cache.contains_key(&key) {
            let pool = fixpoint_iterate(
                self.model,
                theta,
                self.config.pool.size,
                self.config.pool.iterations,
                self.config.seed,
                self.exec,
            )?;
            self.cache.insert(key.clone(), pool);
        }
        Ok(&self.cache[&key])
    }
}

pub fn run_convergence(model: &WeightModel, config: &ExperimentConfig, exec: Execution) -> Result<ConvergenceReport> {
    let th = config.thresholds;
    let mut pools = Pools {
        model,
        config,
        exec,
        cache: BTreeMap::new(),
    };
    let mut points = Vec::new();
    let mut gates = Vec::new();
    for n in config.n.values() {
        let grid = config.grid(model, n)?;
        let norms = grid
            .iter()
            .map(|p| normalization(model, n, p))
            .collect::<Result<Vec<_>>>()?;
        let per_rep = map_range(exec, 0..config.reps, |r| -> Result<Vec<f64>> {
            let profile = grow_profile(model, n, &mut stream(config.seed, Purpose::Replication, r))?;
            Ok(norms.iter().map(|a| ratio(model, &profile, a)).collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for (i, (point, norm)) in grid.iter().zip(&norms).enumerate() {
            let ratios: Vec<f64> = per_rep.iter().map(|r| r[i]).collect();
            let (mean, var) = mean_and_variance(&ratios);
            let pool = pools.get(&point.theta)?;
            let ks_pool = ks::two_sample(&ratios, &pool.samples)?;
            let tag = format!("n={n} c={}", fmt_vec(&point.c));
            gates.push(Gate::below(
                &format!("ratio_mean[{tag}]"),
                true,
                (mean - 1.0).abs(),
                th.ratio_mean,
                format!("mean {mean:.5} over {} reps", config.reps),
            ));
            if is_degenerate(&point.theta) {
                let worst = ratios.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
                gates.push(Gate::below(
                    &format!("ratio_rep[{tag}]"),
                    true,
                    worst,
                    th.ratio_rep,
                    "theta = 0, limit is 1",
                ));
            }
            gates.push(Gate::below(
                &format!("ratio_ks[{tag}]"),
                false,
                ks_pool,
                th.ratio_ks,
                format!("pool mean {:.5}", pool.mean),
            ));
            points.push(ConvergencePoint {
                n,
                c: point.c.clone(),
                l: norm.l.clone(),
                theta: point.theta.clone(),
                reps: config.reps,
                ratio_mean: mean,
                ratio_std: var.sqrt(),
                ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ks_pool,
                pool_mean: pool.mean,
                boundary_distance: norm.boundary_distance,
            });
        }
    }
    let trend = match &config.trend {
        Some(t) => {
            let rows = trend_rows(model, config, &t.sizes, t.seeds, exec, &mut pools)?;
            let medians: Vec<f64> = rows.iter().map(|r| r.median_sup).collect();
            let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
            gates.push(Gate {
                status: super::report::GateStatus::from_bool(monotone),
                ..Gate::below(
                    "trend",
                    false,
                    medians.last().copied().unwrap_or(0.0),
                    medians.first().copied().unwrap_or(0.0),
                    format!("median sup over {} nested trajectories is non-increasing in n", t.seeds),
                )
            });
            rows
        }
        None => Vec::new(),
    };
    Ok(ConvergenceReport {
        preset: model.name.clone(),
        seed: config.seed,
        points,
        trend,
        gates,
    })
}

/// Median over trajectories of max_c |ratio - pool mean|. Trajectory s grows
/// from replication stream s, so the trees at increasing n are nested.
fn trend_rows(
    model: &WeightModel,
    config: &ExperimentConfig,
    sizes: &[u64],
    seeds: u64,
    exec: Execution,
    pools: &mut Pools,
) -> Result<Vec<TrendRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let grid = config.grid(model, n)?;
        let norms = grid
            .iter()
            .map(|p| normalization(model, n, p))
            .collect::<Result<Vec<_>>>()?;
        let means = grid
            .iter()
            .map(|p| pools.get(&p.theta).map(|pool| pool.mean))
            .collect::<Result<Vec<_>>>()?;
        let mut sups = map_range(exec, 0..seeds, |s| -> Result<f64> {
            let profile = grow_profile(model, n, &mut stream(config.seed, Purpose::Replication, s))?;
            Ok(norms
                .iter()
                .zip(&means)
                .map(|(a, m)| (ratio(model, &profile, a) - m).abs())
                .fold(0.0, f64::max))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        sups.sort_by(f64::total_cmp);
        let k = sups.len();
        let median = if k % 2 == 1 { sups[k / 2] } else { 0.5 * (sups[k / 2 - 1] + sups[k / 2]) };
        rows.push(TrendRow { n, median_sup: median });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Point, PoolConfig, Sizes, TrendConfig};
    use crate::harness::report::GateStatus;

    fn config(preset: &str, n: u64, reps: u64, c: &[f64]) -> ExperimentConfig {
        ExperimentConfig {
            preset: preset.into(),
            n: Sizes::One(n),
            reps,
            c_grid: Some(c.iter().map(|&x| Point::Scalar(x)).collect()),
            seed: 3,
            pool: PoolConfig { size: 20_000, iterations: 20 },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn bst_degenerate_point_moves_toward_one() {
        let cfg = config("bst", 100_000, 20, &[2.0]);
        let m = cfg.model().unwrap();
        let r = run_convergence(&m, &cfg, Execution::Parallel).unwrap();
        let p = &r.points[0];
        assert_eq!(p.theta, vec![0.0]);
        assert_eq!(p.pool_mean, 1.0);
        assert!((p.ratio_mean - 1.0).abs() < 0.1, "{}", p.ratio_mean);
        assert!(r.gates.iter().any(|g| g.name.starts_with("ratio_rep")));
    }

    #[test]
    fn report_is_deterministic_and_parallel_safe() {
        let cfg = config("rrt", 5000, 8, &[0.8, 1.5]);
        let m = cfg.model().unwrap();
        let a = run_convergence(&m, &cfg, Execution::Parallel).unwrap();
        let b = run_convergence(&m, &cfg, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| p.ratio_mean.is_finite() && p.ks_pool.is_finite()));
    }

    #[test]
    fn l_grid_uses_fixed_levels() {
        let cfg = ExperimentConfig {
            l_grid: Some(vec![Point::Scalar(9)]),
            c_grid: None,
            ..config("rrt", 10_000, 4, &[])
        };
        let m = cfg.model().unwrap();
        let r = run_convergence(&m, &cfg, Execution::Parallel).unwrap();
        assert_eq!(r.points[0].l, vec![9]);
    }

    #[test]
    fn trend_on_the_degenerate_point() {
        // At theta = 0 the target is the constant 1 and the sup shrinks with n.
        let cfg = ExperimentConfig {
            trend: Some(TrendConfig { sizes: vec![1_000, 10_000, 100_000], seeds: 9 }),
            ..config("bst", 1000, 2, &[2.0])
        };
        let m = cfg.model().unwrap();
        let r = run_convergence(&m, &cfg, Execution::Parallel).unwrap();
        assert_eq!(r.trend.len(), 3);
        let g = r.gates.iter().find(|g| g.name == "trend").unwrap();
        assert_eq!(g.status, GateStatus::Pass, "{:?}", r.trend);
        assert!(!g.hard);
    }
}
