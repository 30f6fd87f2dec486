//! Population-dynamics sampling of the martingale limit from its splitting
//! fixed-point equation.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::ks;
use crate::par::{map_range, Execution};
use crate::rng::{stream, Purpose, Stream};
use crate::spectral::{in_lambda_tilde, spectral_point};
use crate::weight_model::WeightModel;

/// Pools whose mean leaves this band are flagged divergent.
pub const MEAN_BAND: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePool {
    pub theta: Vec<f64>,
    pub samples: Vec<f64>,
    pub iteration: u64,
    pub mean: f64,
    pub variance: f64,
    /// KS distance between this pool and the one before it.
    pub ks_to_previous: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolDiagnostics {
    pub mean: f64,
    pub variance: f64,
    pub ks: f64,
}

/// Normalized vector of b i.i.d. Gamma(1/(b-1)) draws.
pub fn dirichlet_fractions<R: Rng + ?Sized>(b: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(1.0 / (b - 1) as f64, 1.0).expect("positive shape");
    loop {
        let y: Vec<f64> = (0..b).map(|_| gamma.sample(rng)).collect();
        let total: f64 = y.iter().sum();
        if total > 0.0 {
            return y.into_iter().map(|v| v / total).collect();
        }
    }
}

pub fn mean_and_variance(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

pub fn pool_diagnostics(current: &[f64], previous: &[f64]) -> Result<PoolDiagnostics> {
    if current.len() != previous.len() {
        return Err(Error::param("pool", "pools differ in size"));
    }
    let (mean, variance) = mean_and_variance(current);
    Ok(PoolDiagnostics {
        mean,
        variance,
        ks: ks::two_sample(current, previous)?,
    })
}

/// One population update: slot i of iteration k is `slot(rng, pool)` with a
/// stream unique to (seed, k, i).
pub fn population_step<F>(pool: &[f64], iteration: u64, seed: u64, exec: Execution, slot: F) -> Vec<f64>
where
    F: Fn(&mut Stream, &[f64]) -> f64 + Sync + Send,
{
    map_range(exec, 0..pool.len() as u64, |i| {
        let mut rng = stream(seed, Purpose::Pool { iteration }, i);
        slot(&mut rng, pool)
    })
}

/// The splitting map W = sum_j e^{-theta Z_j} U_j^{(m-1)/(b-1)} W_j for a model.
pub struct SplittingMap<'a> {
    model: &'a WeightModel,
    /// e^{-theta Z_j} per atom and child.
    factors: Vec<Vec<f64>>,
    exponent: f64,
}

impl<'a> SplittingMap<'a> {
    pub fn new(model: &'a WeightModel, theta: &[f64]) -> Result<Self> {
        let sp = spectral_point(model, theta)?;
        let exponent = sp.a / (model.b - 1) as f64;
        let factors = model
            .atoms
            .iter()
            .map(|a| {
                a.weights
                    .iter()
                    .map(|z| (-theta.iter().zip(z).map(|(t, &x)| t * x as f64).sum::<f64>()).exp())
                    .collect()
            })
            .collect();
        Ok(SplittingMap {
            model,
            factors,
            exponent,
        })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn apply(&self, rng: &mut Stream, pool: &[f64]) -> f64 {
        let atom = self.model.sample_atom(rng);
        let u = dirichlet_fractions(self.model.b, rng);
        let mut w = 0.0;
        for (j, uj) in u.iter().enumerate() {
            let pick = rng.random_range(0..pool.len());
            w += self.factors[atom][j] * uj.powf(self.exponent) * pool[pick];
        }
        w
    }
}

fn finish_pool(theta: &[f64], samples: Vec<f64>, previous: &[f64], iteration: u64) -> Result<SamplePool> {
    let diag = pool_diagnostics(&samples, previous)?;
    Ok(SamplePool {
        theta: theta.to_vec(),
        samples,
        iteration,
        mean: diag.mean,
        variance: diag.variance,
        ks_to_previous: diag.ks,
        divergent: !(diag.mean >= MEAN_BAND.0 && diag.mean <= MEAN_BAND.1),
    })
}

/// Iterate the splitting map K times on a pool of M samples started at 1.
pub fn fixpoint_iterate(
    model: &WeightModel,
    theta: &[f64],
    pool_size: usize,
    iterations: u64,
    seed: u64,
    exec: Execution,
) -> Result<SamplePool> {
    if !in_lambda_tilde(model, theta)? {
        return Err(Error::Domain(format!("theta = {theta:?} is outside the admissible region")));
    }
    if pool_size < 2 {
        return Err(Error::param("pool", "pool size must be at least 2"));
    }
    if iterations < 1 {
        return Err(Error::param("iters", "need at least one iteration"));
    }
    let map = SplittingMap::new(model, theta)?;
    let mut previous = vec![1.0; pool_size];
    let mut current = previous.clone();
    for k in 1..=iterations {
        let next = population_step(&current, k, seed, exec, |rng, pool| map.apply(rng, pool));
        previous = std::mem::replace(&mut current, next);
    }
    finish_pool(theta, current, &previous, iterations)
}

/// Apply the map once more to a finished pool.
pub fn fixpoint_continue(model: &WeightModel, pool: &SamplePool, seed: u64, exec: Execution) -> Result<SamplePool> {
    let map = SplittingMap::new(model, &pool.theta)?;
    let k = pool.iteration + 1;
    let next = population_step(&pool.samples, k, seed, exec, |rng, p| map.apply(rng, p));
    finish_pool(&pool.theta, next, &pool.samples, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::log_gamma;
    use crate::weight_model::{preset_default, PRESETS};

    /// E W^2 of the fixed point from the second-moment recursion, when finite.
    fn second_moment(model: &WeightModel, theta: &[f64]) -> Option<f64> {
        let b = model.b as f64;
        let alpha = 1.0 / (b - 1.0);
        let m = spectral_point(model, theta).unwrap().a + 1.0;
        let s = (m - 1.0) / (b - 1.0);
        if alpha + 2.0 * s <= 0.0 {
            return None;
        }
        let e = |z: &[i64]| (-theta.iter().zip(z).map(|(t, &x)| t * x as f64).sum::<f64>()).exp();
        // Beta(alpha, 1) marginal and the Dirichlet cross moment.
        let u2 = alpha / (alpha + 2.0 * s);
        let uu = (log_gamma(b * alpha).unwrap() - log_gamma(b * alpha + 2.0 * s).unwrap()
            + 2.0 * log_gamma(alpha + s).unwrap()
            - 2.0 * log_gamma(alpha).unwrap())
        .exp();
        let mut diag = 0.0;
        let mut cross = 0.0;
        for a in &model.atoms {
            for j in 0..model.b {
                diag += a.p * e(&a.weights[j]).powi(2);
                for k in 0..model.b {
                    if k != j {
                        cross += a.p * e(&a.weights[j]) * e(&a.weights[k]);
                    }
                }
            }
        }
        let diag = diag * u2;
        (diag < 1.0).then(|| cross * uu / (1.0 - diag))
    }

    #[test]
    fn dirichlet_binary_is_uniform() {
        let mut rng = stream(31, Purpose::Aux(3), 0);
        let first: Vec<f64> = (0..100_000).map(|_| dirichlet_fractions(2, &mut rng)[0]).collect();
        let d = ks::one_sample(&first, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(ks::p_value(d, first.len()) > 0.01, "D = {d}");
    }

    #[test]
    fn dirichlet_ternary_marginal() {
        let mut rng = stream(32, Purpose::Aux(3), 0);
        let reps = 100_000;
        let first: Vec<f64> = (0..reps).map(|_| dirichlet_fractions(3, &mut rng)[0]).collect();
        let (mean, _) = mean_and_variance(&first);
        // Beta(1/2, 1): mean 1/3, variance 1/2 / (3/2)^2 / (5/2) = 4/45.
        let se = (4.0 / 45.0 / reps as f64).sqrt();
        assert!((mean - 1.0 / 3.0).abs() < 3.0 * se);
    }

    #[test]
    fn dirichlet_sums_to_one() {
        let mut rng = stream(33, Purpose::Aux(3), 0);
        for b in 2..8 {
            for _ in 0..1000 {
                let u = dirichlet_fractions(b, &mut rng);
                assert!((u.iter().sum::<f64>() - 1.0).abs() <= 4.0 * f64::EPSILON);
                assert!(u.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn theta_zero_pool_stays_at_one() {
        for name in PRESETS {
            let m = preset_default(name).unwrap();
            let pool = fixpoint_iterate(&m, &vec![0.0; m.d], 2000, 10, 1, Execution::Parallel).unwrap();
            let worst = pool.samples.iter().map(|w| (w - 1.0).abs()).fold(0.0, f64::max);
            assert!(worst <= 64.0 * f64::EPSILON, "{name}: {worst}");
        }
    }

    #[test]
    fn outside_region_is_rejected() {
        let rrt = preset_default("rrt").unwrap();
        assert!(matches!(
            fixpoint_iterate(&rrt, &[-1.5], 1000, 3, 0, Execution::Sequential),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bst_map_shape() {
        // b = 2, Z = 1: W = z sum_j U_j^{2z-1} W_j.
        let bst = preset_default("bst").unwrap();
        let z = 0.8f64;
        let map = SplittingMap::new(&bst, &[-z.ln()]).unwrap();
        assert!((map.exponent() - (2.0 * z - 1.0)).abs() < 1e-15);
        let pool = vec![1.0, 1.0];
        let mut a = stream(3, Purpose::Aux(4), 0);
        let mut b = a.clone();
        let w = map.apply(&mut a, &pool);
        let u = dirichlet_fractions(2, &mut b);
        let want = z * (u[0].powf(2.0 * z - 1.0) + u[1].powf(2.0 * z - 1.0));
        assert!((w - want).abs() < 1e-14);
    }

    #[test]
    fn sequential_and_parallel_pools_match() {
        let m = preset_default("webgraph").unwrap();
        let a = fixpoint_iterate(&m, &[0.2], 5000, 4, 9, Execution::Sequential).unwrap();
        let b = fixpoint_iterate(&m, &[0.2], 5000, 4, 9, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rrt_pool_mean_and_variance() {
        let rrt = preset_default("rrt").unwrap();
        let theta = [-(1.5f64.ln())];
        let pool = fixpoint_iterate(&rrt, &theta, 100_000, 30, 17, Execution::Parallel).unwrap();
        assert!((pool.mean - 1.0).abs() < 0.01);
        assert!(!pool.divergent);
        let want = second_moment(&rrt, &theta).unwrap() - 1.0;
        // Sample variance of a light-tailed law; 10% relative is ample at M = 1e5.
        assert!((pool.variance - want).abs() < 0.1 * want, "{} vs {want}", pool.variance);
        assert!(pool.ks_to_previous < 0.01);
        let again = fixpoint_continue(&rrt, &pool, 17, Execution::Parallel).unwrap();
        assert!(again.ks_to_previous < 0.01);
    }

    #[test]
    fn published_rrt_form_matches_generic_map() {
        // W = z U^z W_1 + (1 - U)^z W_2 with U uniform.
        let z = 1.3f64;
        for name in ["rrt", "dirchange"] {
            let m = preset_default(name).unwrap();
            let generic = fixpoint_iterate(&m, &[-z.ln()], 100_000, 30, 5, Execution::Parallel).unwrap();
            let mut pool = vec![1.0; 100_000];
            for k in 1..=30 {
                pool = population_step(&pool, k, 6, Execution::Parallel, |rng, p| {
                    let u: f64 = rng.random();
                    let w1 = p[rng.random_range(0..p.len())];
                    let w2 = p[rng.random_range(0..p.len())];
                    z * u.powf(z) * w1 + (1.0 - u).powf(z) * w2
                });
            }
            let d = ks::two_sample(&generic.samples, &pool).unwrap();
            assert!(d < 0.01, "{name}: {d}");
        }
    }

    #[test]
    fn pool_variance_matches_second_moment_oracle() {
        for (name, theta) in [("bst", vec![-0.2]), ("lmr", vec![0.3]), ("combo2d", vec![0.3, -0.15]), ("port", vec![0.3])] {
            let m = preset_default(name).unwrap();
            let pool = fixpoint_iterate(&m, &theta, 50_000, 30, 8, Execution::Parallel).unwrap();
            let want = second_moment(&m, &theta).unwrap() - 1.0;
            assert!((pool.variance - want).abs() < 0.1 * want + 1e-4, "{name}: {} vs {want}", pool.variance);
        }
    }
}
