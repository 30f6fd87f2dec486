//! Experiment configuration. Every acceptance threshold and default size
//! lives here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{lambda_tilde_slack, range_d1, spectral_point, theta_of_c};
use crate::weight_model::{preset, preset_default, Params, WeightModel};

/// Grid points must sit this far inside Lambda* (in c) or the admissible
/// region (in slack, for d > 1).
pub const INTERIOR_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::param("format", format!("`{other}` is not csv or json"))),
        }
    }
}

/// A scalar or an explicit vector, so d = 1 grids can be written as plain numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point<T> {
    Scalar(T),
    Vector(Vec<T>),
}

impl<T: Clone> Point<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Point::Scalar(x) => vec![x.clone()],
            Point::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(u64),
    Many(Vec<u64>),
}

impl Sizes {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Sizes::One(n) => vec![*n],
            Sizes::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub size: usize,
    pub iterations: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            size: 100_000,
            iterations: 30,
        }
    }
}

/// Pass/fail thresholds. Tolerances on the convergence ratios are
/// engineering gates; the rest are numerical or statistical levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// |mean ratio - 1| (hard).
    pub ratio_mean: f64,
    /// Per-replication |ratio - 1| where the limit is degenerate (hard).
    pub ratio_rep: f64,
    /// KS between ratios and the fixed-point pool (soft).
    pub ratio_ks: f64,
    pub martingale: f64,
    pub product_identity: f64,
    pub asymptotic: f64,
    pub bridge: f64,
    /// Significance level of the KS gates.
    pub ks_level: f64,
    /// Standard errors allowed for Monte Carlo profile means.
    pub profile_sigmas: f64,
    /// Standard errors allowed for the Monte Carlo tau transform.
    pub tau_sigmas: f64,
    pub mean_identity: f64,
    pub hwang: f64,
    pub fixpoint_mean: f64,
    pub fixpoint_ks: f64,
    pub range_residual: f64,
    pub fourier: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            ratio_mean: 0.10,
            ratio_rep: 0.25,
            ratio_ks: 0.15,
            martingale: 1e-12,
            product_identity: 1e-12,
            asymptotic: 1e-3,
            bridge: 1e-10,
            ks_level: 0.01,
            profile_sigmas: 4.0,
            tau_sigmas: 4.0,
            mean_identity: 1e-10,
            hwang: 0.05,
            fixpoint_mean: 0.01,
            fixpoint_ks: 0.01,
            range_residual: 1e-8,
            fourier: 1e-8,
        }
    }
}

/// Sizes used by the identity suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentitySizes {
    pub martingale_n: u64,
    pub product_n: u64,
    pub asymptotic_n: u64,
    pub bridge_n: u64,
    pub bridge_reps: u64,
    pub gamma_n: u64,
    pub gamma_reps: u64,
    pub dirichlet_n: u64,
    pub dirichlet_reps: u64,
    pub dirichlet_draws: u64,
    pub tau_n: u64,
    pub tau_reps: u64,
    pub tau_s: f64,
    pub profile_n: u64,
    pub profile_reps: u64,
    pub mean_identity_n: u64,
    pub hwang_n: u64,
    pub fourier_t: f64,
    pub fourier_l_max: usize,
}

impl Default for IdentitySizes {
    fn default() -> Self {
        IdentitySizes {
            martingale_n: 5,
            product_n: 10_000,
            asymptotic_n: 1_000_000,
            bridge_n: 1000,
            bridge_reps: 200,
            gamma_n: 2000,
            gamma_reps: 5000,
            dirichlet_n: 10_000,
            dirichlet_reps: 2000,
            dirichlet_draws: 100_000,
            tau_n: 100,
            tau_reps: 100_000,
            tau_s: 0.3,
            profile_n: 50,
            profile_reps: 100_000,
            mean_identity_n: 1000,
            hwang_n: 100_000,
            fourier_t: 5.0,
            fourier_l_max: 15,
        }
    }
}

/// Nested-tree trend check across increasing n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    pub sizes: Vec<u64>,
    pub seeds: u64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        TrendConfig {
            sizes: vec![10_000, 100_000, 1_000_000],
            seeds: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub preset: String,
    pub params: Params,
    /// JSON model file; overrides `preset` when present.
    pub model_path: Option<PathBuf>,
    pub n: Sizes,
    pub reps: u64,
    pub c_grid: Option<Vec<Point<f64>>>,
    pub l_grid: Option<Vec<Point<i64>>>,
    pub seed: u64,
    pub pool: PoolConfig,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub thresholds: Thresholds,
    pub identity: IdentitySizes,
    pub trend: Option<TrendConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: "bst".into(),
            params: Params::new(),
            model_path: None,
            n: Sizes::One(100_000),
            reps: 50,
            c_grid: None,
            l_grid: None,
            seed: 0,
            pool: PoolConfig::default(),
            format: OutputFormat::Json,
            output: None,
            thresholds: Thresholds::default(),
            identity: IdentitySizes::default(),
            trend: None,
        }
    }
}

/// Three interior theta values used for fixed-point checks and as the
/// default convergence grid. The limit has small variance at all of them
/// for every preset.
pub fn theta_grid(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![-0.2], vec![0.1], vec![0.3]],
        // Along (t, -t/2).
        _ => [-0.2, 0.1, 0.3]
            .iter()
            .map(|&t| {
                let mut v = vec![0.0; d];
                v[0] = t;
                v[1] = -t / 2.0;
                v
            })
            .collect(),
    }
}

/// A grid point resolved against a model.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub c: Vec<f64>,
    /// Fixed level when the grid is given in l.
    pub l: Option<Vec<i64>>,
    pub theta: Vec<f64>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn model(&self) -> Result<WeightModel> {
        if let Some(path) = &self.model_path {
            return WeightModel::from_json_file(path);
        }
        if self.params.is_empty() {
            preset_default(&self.preset)
        } else {
            preset(&self.preset, &self.params)
        }
    }

    /// Like [`ExperimentConfig::model`], but a model file is not validated.
    pub fn model_unvalidated(&self) -> Result<WeightModel> {
        match &self.model_path {
            Some(path) => WeightModel::from_json_file_unvalidated(path),
            None => self.model(),
        }
    }

    /// Grid points for size n, checked against the interior margin.
    pub fn grid(&self, model: &WeightModel, n: u64) -> Result<Vec<GridPoint>> {
        if self.reps < 1 {
            return Err(Error::param("reps", "need at least one replication"));
        }
        if self.c_grid.is_some() && self.l_grid.is_some() {
            return Err(Error::param("grid", "give either c_grid or l_grid, not both"));
        }
        let step = (model.b - 1) as f64;
        let points: Vec<(Vec<f64>, Option<Vec<i64>>)> = if let Some(ls) = &self.l_grid {
            if n < 2 {
                return Err(Error::param("n", "an l grid needs n >= 2"));
            }
            let log_n = (n as f64).ln();
            ls.iter()
                .map(|p| {
                    let l = p.to_vec();
                    (l.iter().map(|&x| step * x as f64 / log_n).collect(), Some(l))
                })
                .collect()
        } else if let Some(cs) = &self.c_grid {
            cs.iter().map(|p| (p.to_vec(), None)).collect()
        } else {
            theta_grid(model.d)
                .into_iter()
                .map(|t| Ok((spectral_point(model, &t)?.grad, None)))
                .collect::<Result<_>>()?
        };
        points
            .into_iter()
            .map(|(c, l)| {
                check_interior(model, &c)?;
                let theta = theta_of_c(model, &c)?;
                Ok(GridPoint { c, l, theta })
            })
            .collect()
    }
}

fn check_interior(model: &WeightModel, c: &[f64]) -> Result<()> {
    if c.len() != model.d {
        return Err(Error::param("grid", format!("point {c:?} has the wrong dimension")));
    }
    if model.d == 1 {
        let r = range_d1(model)?.interval.expect("d = 1 has an interval");
        if !(c[0] > r.c_low + INTERIOR_MARGIN && c[0] < r.c_high - INTERIOR_MARGIN) {
            return Err(Error::Domain(format!(
                "c = {} is not inside ({}, {}) with margin {INTERIOR_MARGIN}",
                c[0], r.c_low, r.c_high
            )));
        }
        return Ok(());
    }
    let theta = theta_of_c(model, c)?;
    let slack = lambda_tilde_slack(model, &theta)?;
    if slack < INTERIOR_MARGIN {
        return Err(Error::Domain(format!("c = {c:?} is within {INTERIOR_MARGIN} of the boundary")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::in_lambda_tilde;
    use crate::weight_model::PRESETS;

    #[test]
    fn theta_grid_is_admissible_everywhere() {
        for name in PRESETS {
            let m = preset_default(name).unwrap();
            for t in theta_grid(m.d) {
                assert!(in_lambda_tilde(&m, &t).unwrap(), "{name} {t:?}");
            }
        }
    }

    #[test]
    fn json_config_with_scalars() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"preset":"bst","n":[1000,2000],"reps":3,"c_grid":[1.2,[3.0]],"seed":9,"format":"csv"}"#,
        )
        .unwrap();
        assert_eq!(cfg.n.values(), vec![1000, 2000]);
        assert_eq!(cfg.format, OutputFormat::Csv);
        assert_eq!(cfg.thresholds, Thresholds::default());
        let m = cfg.model().unwrap();
        let grid = cfg.grid(&m, 1000).unwrap();
        assert_eq!(grid.len(), 2);
        assert_eq!(grid[1].c, vec![3.0]);
    }

    #[test]
    fn grid_outside_margin_is_rejected() {
        let mut cfg = ExperimentConfig {
            c_grid: Some(vec![Point::Scalar(4.3106)]),
            ..ExperimentConfig::default()
        };
        let m = cfg.model().unwrap();
        assert!(matches!(cfg.grid(&m, 1000), Err(Error::Domain(_))));
        cfg.c_grid = Some(vec![Point::Scalar(4.0)]);
        assert!(cfg.grid(&m, 1000).is_ok());
        cfg.reps = 0;
        assert!(cfg.grid(&m, 1000).is_err());
    }

    #[test]
    fn l_grid_maps_to_c() {
        let cfg = ExperimentConfig {
            preset: "rrt".into(),
            l_grid: Some(vec![Point::Scalar(9)]),
            ..ExperimentConfig::default()
        };
        let m = cfg.model().unwrap();
        let g = cfg.grid(&m, 10_000).unwrap();
        assert!((g[0].c[0] - 9.0 / 10_000f64.ln()).abs() < 1e-15);
        assert_eq!(g[0].l, Some(vec![9]));
    }
}
