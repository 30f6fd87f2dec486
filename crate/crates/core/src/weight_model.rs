//! Joint edge-weight laws and the preset catalog.

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice point in Z^d.
pub type Level = Vec<i64>;

/// Names accepted by [`preset`].
pub const PRESETS: &[&str] = &[
    "bst", "rrt", "port", "lopsided", "lmr", "colored", "webgraph", "dirchange", "combo2d",
    "subtree",
];

/// Tolerance on total probability mass and marginal comparisons.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub p: f64,
    /// Exact value of `p`. Floats convert exactly, so this is always present.
    pub p_exact: BigRational,
    /// One weight vector per child, each of length `d`.
    pub weights: Vec<Level>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    pub name: String,
    pub b: usize,
    pub d: usize,
    pub atoms: Vec<Atom>,
    pub root_shift: Level,
}

/// Common law of a single coordinate Z_j.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalLaw {
    /// Distinct values in lexicographic order with their probabilities.
    pub atoms: Vec<(Level, f64)>,
    pub exact: Vec<BigRational>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Preset parameters as given on the command line (`k=v`).
pub type Params = BTreeMap<String, String>;

pub fn parse_params<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<Params> {
    let mut out = Params::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("parameter `{item}` is not of the form k=v")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn exact_of(x: f64) -> Result<BigRational> {
    BigRational::from_float(x).ok_or_else(|| Error::InvalidModel(format!("probability {x} is not finite")))
}

fn atom(p: BigRational, weights: Vec<Level>) -> Atom {
    Atom {
        p: p.to_f64().unwrap_or(f64::NAN),
        p_exact: p,
        weights,
    }
}

impl Atom {
    /// Atom with probability num/den.
    pub fn exact(num: i64, den: i64, weights: Vec<Level>) -> Self {
        atom(rational(num, den), weights)
    }

    pub fn from_f64(p: f64, weights: Vec<Level>) -> Result<Self> {
        Ok(atom(exact_of(p)?, weights))
    }
}

impl WeightModel {
    /// Build and validate a model from explicit atoms.
    pub fn new(name: &str, b: usize, d: usize, atoms: Vec<Atom>, root_shift: Level) -> Result<Self> {
        let model = WeightModel {
            name: name.to_string(),
            b,
            d,
            atoms,
            root_shift,
        };
        let report = model.validate();
        if report.is_ok() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report.issues.join("; ")))
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        if self.b < 2 {
            issues.push(format!("branch factor {} < 2", self.b));
        }
        if self.d < 1 {
            issues.push("lattice dimension 0".to_string());
        }
        if self.root_shift.len() != self.d {
            issues.push(format!(
                "root_shift has length {}, expected {}",
                self.root_shift.len(),
                self.d
            ));
        }
        if self.atoms.is_empty() {
            issues.push("no atoms".to_string());
        }
        let mut mass = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            if !(a.p > 0.0 && a.p <= 1.0) {
                issues.push(format!("atom {i} has probability {} outside (0,1]", a.p));
            }
            mass += a.p;
            if a.weights.len() != self.b {
                issues.push(format!("atom {i} has {} weight vectors, expected {}", a.weights.len(), self.b));
            }
            if a.weights.iter().any(|w| w.len() != self.d) {
                issues.push(format!("atom {i} has a weight vector of the wrong dimension"));
            }
        }
        if (mass - 1.0).abs() > MASS_TOL {
            issues.push(format!("probability mass {mass} != 1"));
        }
        if issues.is_empty() {
            let first = self.coordinate_law(0);
            for j in 1..self.b {
                if !laws_match(&first, &self.coordinate_law(j)) {
                    issues.push(format!("marginals differ (Z_1 vs Z_{})", j + 1));
                    break;
                }
            }
        }
        ValidationReport { issues }
    }

    fn coordinate_law(&self, j: usize) -> BTreeMap<Level, (f64, BigRational)> {
        let mut law: BTreeMap<Level, (f64, BigRational)> = BTreeMap::new();
        for a in &self.atoms {
            let e = law
                .entry(a.weights[j].clone())
                .or_insert_with(|| (0.0, BigRational::zero()));
            e.0 += a.p;
            e.1 += &a.p_exact;
        }
        law
    }

    /// The common law of Z_j.
    pub fn marginal(&self) -> Result<MarginalLaw> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(Error::InvalidModel(report.issues.join("; ")));
        }
        let law = self.coordinate_law(0);
        let mut atoms = Vec::with_capacity(law.len());
        let mut exact = Vec::with_capacity(law.len());
        for (v, (p, q)) in law {
            atoms.push((v, p));
            exact.push(q);
        }
        Ok(MarginalLaw { atoms, exact })
    }

    /// Index of one atom drawn from the joint law. Single-atom models do not
    /// touch the stream.
    pub fn sample_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.atoms.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            acc += a.p;
            if u < acc {
                return i;
            }
        }
        self.atoms.len() - 1
    }

    pub fn sample_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> &[Level] {
        &self.atoms[self.sample_atom(rng)].weights
    }

    /// Whether every atom probability is representable exactly and the exact
    /// masses sum to one.
    pub fn exact_mass_is_one(&self) -> bool {
        let total: BigRational = self.atoms.iter().map(|a| a.p_exact.clone()).sum();
        total.is_one()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let m = Self::from_json_str_unvalidated(text)?;
        WeightModel::new(&m.name, m.b, m.d, m.atoms, m.root_shift)
    }

    /// Parse without validating, so a malformed law can still be reported on.
    pub fn from_json_str_unvalidated(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let atoms = doc
            .atoms
            .into_iter()
            .map(|a| Ok(atom(exact_of(a.p)?, a.w)))
            .collect::<Result<Vec<_>>>()?;
        let root_shift = doc.root_shift.unwrap_or_else(|| vec![0; doc.d]);
        Ok(WeightModel {
            name: "custom".into(),
            b: doc.b,
            d: doc.d,
            atoms,
            root_shift,
        })
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_file_unvalidated(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str_unvalidated(&text)
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            b: self.b,
            d: self.d,
            root_shift: Some(self.root_shift.clone()),
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomDoc {
                    p: a.p,
                    w: a.weights.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("model serializes")
    }
}

impl MarginalLaw {
    pub fn support(&self) -> impl Iterator<Item = &Level> {
        self.atoms.iter().map(|(v, _)| v)
    }

    /// P(Z = 0 vector).
    pub fn p_zero(&self) -> f64 {
        self.atoms
            .iter()
            .find(|(v, _)| v.iter().all(|&x| x == 0))
            .map_or(0.0, |(_, p)| *p)
    }
}

fn laws_match(a: &BTreeMap<Level, (f64, BigRational)>, b: &BTreeMap<Level, (f64, BigRational)>) -> bool {
    let keys: std::collections::BTreeSet<&Level> = a.keys().chain(b.keys()).collect();
    keys.into_iter().all(|k| {
        let pa = a.get(k).map_or(0.0, |e| e.0);
        let pb = b.get(k).map_or(0.0, |e| e.0);
        (pa - pb).abs() <= MASS_TOL
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomDoc {
    p: f64,
    w: Vec<Level>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    b: usize,
    d: usize,
    #[serde(default)]
    root_shift: Option<Level>,
    atoms: Vec<AtomDoc>,
}

fn get_param<'a>(params: &'a Params, key: &str) -> Option<&'a str> {
    params.get(key).map(String::as_str)
}

fn param_f64(params: &Params, key: &str, default: Option<f64>) -> Result<f64> {
    match get_param(params, key) {
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| Error::param(key, format!("`{v}` is not a number"))),
        None => default.ok_or_else(|| Error::param(key, "missing")),
    }
}

fn param_int_list(params: &Params, key: &str) -> Result<Vec<i64>> {
    let raw = get_param(params, key).ok_or_else(|| Error::param(key, "missing"))?;
    raw.split([',', ' ', ';'])
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<i64>()
                .map_err(|_| Error::param(key, format!("`{s}` is not an integer")))
        })
        .collect()
}

fn unit_interval(params: &Params, key: &str, default: Option<f64>) -> Result<BigRational> {
    let x = param_f64(params, key, default)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::param(key, format!("{x} is not in (0,1)")));
    }
    exact_of(x)
}

/// The b cyclic rotations of a deterministic weight tuple, each with mass 1/b.
/// Every coordinate then sees the same uniform law over the tuple entries.
fn rotations(values: &[i64]) -> Vec<Atom> {
    let b = values.len();
    (0..b)
        .map(|r| {
            let weights = (0..b).map(|j| vec![values[(j + r) % b]]).collect();
            atom(rational(1, b as i64), weights)
        })
        .collect()
}

/// Build a preset model by name.
pub fn preset(name: &str, params: &Params) -> Result<WeightModel> {
    let one = BigRational::one();
    let half = rational(1, 2);
    match name {
        "bst" => WeightModel::new(name, 2, 1, vec![atom(one, vec![vec![1], vec![1]])], vec![0]),
        "rrt" | "dirchange" => WeightModel::new(
            name,
            2,
            1,
            vec![
                atom(half.clone(), vec![vec![0], vec![1]]),
                atom(half, vec![vec![1], vec![0]]),
            ],
            vec![0],
        ),
        "port" => {
            let beta = param_f64(params, "beta", Some(1.0))?;
            if beta < 0.0 || beta.fract() != 0.0 || beta > 1e6 {
                return Err(Error::param("beta", format!("{beta} is not a nonnegative integer")));
            }
            let b = beta as usize + 2;
            let atoms = (0..b)
                .map(|k| {
                    let weights = (0..b).map(|j| vec![(j == k) as i64]).collect();
                    atom(rational(1, b as i64), weights)
                })
                .collect();
            WeightModel::new(name, b, 1, atoms, vec![1])
        }
        "lopsided" => {
            let c = param_int_list(params, "c")?;
            if c.len() < 2 {
                return Err(Error::param("c", "need at least two edge lengths"));
            }
            if c.iter().any(|&x| x < 1) {
                return Err(Error::param("c", "edge lengths must be positive integers"));
            }
            if c.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::param("c", "edge lengths must be nondecreasing"));
            }
            WeightModel::new(name, c.len(), 1, rotations(&c), vec![0])
        }
        "subtree" => {
            let depths = param_int_list(params, "depths")?;
            if depths.len() < 2 {
                return Err(Error::param("depths", "the replacement tree needs at least two nodes"));
            }
            if depths.iter().any(|&x| x < 0) {
                return Err(Error::param("depths", "depths must be nonnegative"));
            }
            let mut sorted = depths.clone();
            sorted.sort_unstable();
            WeightModel::new(name, sorted.len(), 1, rotations(&sorted), vec![0])
        }
        "lmr" => WeightModel::new(
            name,
            2,
            1,
            vec![
                atom(half.clone(), vec![vec![1], vec![-1]]),
                atom(half, vec![vec![-1], vec![1]]),
            ],
            vec![0],
        ),
        "colored" => {
            let p = unit_interval(params, "p", Some(0.5))?;
            let q = &one - &p;
            let atoms = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .into_iter()
                .map(|(x, y)| {
                    let px = if x == 1 { p.clone() } else { q.clone() };
                    let py = if y == 1 { p.clone() } else { q.clone() };
                    atom(px * py, vec![vec![x], vec![y]])
                })
                .collect();
            WeightModel::new(name, 2, 1, atoms, vec![0])
        }
        "webgraph" => {
            let alpha = unit_interval(params, "alpha", Some(0.5))?;
            let half_alpha = &alpha * &half;
            WeightModel::new(
                name,
                2,
                1,
                vec![
                    atom(half_alpha.clone(), vec![vec![1], vec![0]]),
                    atom(half_alpha, vec![vec![0], vec![1]]),
                    atom(&one - &alpha, vec![vec![0], vec![0]]),
                ],
                vec![0],
            )
        }
        "combo2d" => {
            let atoms = [(0, 0), (0, 1), (1, 0), (1, 1)]
                .into_iter()
                .map(|(x, y)| atom(rational(1, 4), vec![vec![1, x], vec![1, y]]))
                .collect();
            WeightModel::new(name, 2, 2, atoms, vec![0, 0])
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Preset with default parameters.
pub fn preset_default(name: &str) -> Result<WeightModel> {
    let mut params = Params::new();
    match name {
        "lopsided" => {
            params.insert("c".into(), "1,2".into());
        }
        "subtree" => {
            params.insert("depths".into(), "0,1,1".into());
        }
        _ => {}
    }
    preset(name, &params)
}
