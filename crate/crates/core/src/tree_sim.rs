//! Discrete growth of weighted b-ary trees by uniform leaf replacement.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_range, Execution};
use crate::rng::{stream, Purpose};
use crate::weight_model::{Level, WeightModel};

/// Default cap on arena size (nodes).
pub const DEFAULT_NODE_CAP: u64 = 1 << 31;

const NONE: u32 = u32::MAX;

/// Leaf census by weighted level.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Profile {
    pub n: u64,
    pub counts: BTreeMap<Level, u64>,
}

/// Leaf choices and atom draws of a growth run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GrowthTrace {
    /// (position in the leaf array, atom index) per step.
    pub steps: Vec<(u64, u32)>,
}

/// Arena tree. Children of a node occupy a contiguous id block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    pub b: usize,
    pub d: usize,
    parent: Vec<u32>,
    first_child: Vec<u32>,
    depth: Vec<i64>,
    leaves: Vec<u32>,
    internal: u64,
}

impl Tree {
    pub fn new(model: &WeightModel) -> Self {
        Tree {
            b: model.b,
            d: model.d,
            parent: vec![NONE],
            first_child: vec![NONE],
            depth: model.root_shift.clone(),
            leaves: vec![0],
            internal: 0,
        }
    }

    pub fn internal_count(&self) -> u64 {
        self.internal
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn leaf_ids(&self) -> &[u32] {
        &self.leaves
    }

    pub fn parent(&self, node: u32) -> Option<u32> {
        let p = self.parent[node as usize];
        (p != NONE).then_some(p)
    }

    pub fn children(&self, node: u32) -> Option<std::ops::Range<u32>> {
        let c = self.first_child[node as usize];
        (c != NONE).then(|| c..c + self.b as u32)
    }

    pub fn is_leaf(&self, node: u32) -> bool {
        self.first_child[node as usize] == NONE
    }

    pub fn weighted_depth(&self, node: u32) -> &[i64] {
        let i = node as usize * self.d;
        &self.depth[i..i + self.d]
    }

    /// Replace the leaf at position `pos` of the leaf array using atom `atom`.
    fn split(&mut self, model: &WeightModel, pos: usize, atom: usize) {
        let node = self.leaves[pos];
        let first = self.parent.len() as u32;
        self.first_child[node as usize] = first;
        let base = node as usize * self.d;
        for (j, w) in model.atoms[atom].weights.iter().enumerate() {
            self.parent.push(node);
            self.first_child.push(NONE);
            for k in 0..self.d {
                let v = self.depth[base + k] + w[k];
                self.depth.push(v);
            }
            let child = first + j as u32;
            if j == 0 {
                self.leaves[pos] = child;
            } else {
                self.leaves.push(child);
            }
        }
        self.internal += 1;
    }

    pub fn profile(&self) -> Profile {
        let mut counts: BTreeMap<Level, u64> = BTreeMap::new();
        for &leaf in &self.leaves {
            bump(&mut counts, self.weighted_depth(leaf));
        }
        Profile {
            n: self.internal,
            counts,
        }
    }

    /// Leaf counts below each node.
    fn leaf_counts(&self) -> Vec<u64> {
        let mut counts: Vec<u64> = self.first_child.iter().map(|&c| (c == NONE) as u64).collect();
        // Children always have larger ids than their parent.
        for v in (1..self.parent.len()).rev() {
            let p = self.parent[v] as usize;
            counts[p] += counts[v];
        }
        counts
    }
}

fn bump(counts: &mut BTreeMap<Level, u64>, level: &[i64]) {
    if let Some(c) = counts.get_mut(level) {
        *c += 1;
    } else {
        counts.insert(level.to_vec(), 1);
    }
}

fn check_cap(model: &WeightModel, n: u64, cap: u64) -> Result<()> {
    let nodes = (model.b as u64).checked_mul(n).and_then(|x| x.checked_add(1));
    match nodes {
        Some(nodes) if nodes <= cap && nodes <= u32::MAX as u64 => Ok(()),
        _ => Err(Error::Resource(format!(
            "growing {n} internal nodes with b={} exceeds the node cap {cap}",
            model.b
        ))),
    }
}

fn draw_step<R: Rng + ?Sized>(model: &WeightModel, leaves: usize, rng: &mut R) -> (usize, usize) {
    let pos = rng.random_range(0..leaves as u64) as usize;
    let atom = model.sample_atom(rng);
    (pos, atom)
}

/// Grow a tree with `n` internal nodes.
pub fn grow<R: Rng + ?Sized>(
    model: &WeightModel,
    n: u64,
    rng: &mut R,
    record_trace: bool,
) -> Result<(Tree, Option<GrowthTrace>)> {
    grow_capped(model, n, rng, record_trace, DEFAULT_NODE_CAP)
}

pub fn grow_capped<R: Rng + ?Sized>(
    model: &WeightModel,
    n: u64,
    rng: &mut R,
    record_trace: bool,
    node_cap: u64,
) -> Result<(Tree, Option<GrowthTrace>)> {
    check_cap(model, n, node_cap)?;
    let nodes = 1 + model.b * n as usize;
    let mut tree = Tree::new(model);
    tree.parent.reserve(nodes);
    tree.first_child.reserve(nodes);
    tree.depth.reserve(nodes * model.d);
    tree.leaves.reserve((model.b - 1) * n as usize + 1);
    let mut trace = record_trace.then(|| GrowthTrace {
        steps: Vec::with_capacity(n as usize),
    });
    for _ in 0..n {
        let (pos, atom) = draw_step(model, tree.leaves.len(), rng);
        tree.split(model, pos, atom);
        if let Some(t) = trace.as_mut() {
            t.steps.push((pos as u64, atom as u32));
        }
    }
    Ok((tree, trace))
}

/// Rebuild a tree from a recorded trace.
pub fn replay(model: &WeightModel, trace: &GrowthTrace) -> Result<Tree> {
    check_cap(model, trace.steps.len() as u64, DEFAULT_NODE_CAP)?;
    let mut tree = Tree::new(model);
    for (step, &(pos, atom)) in trace.steps.iter().enumerate() {
        if pos as usize >= tree.leaves.len() || atom as usize >= model.atoms.len() {
            return Err(Error::Parse(format!("trace step {step} is out of range")));
        }
        tree.split(model, pos as usize, atom as usize);
    }
    Ok(tree)
}

/// Profile of a grown tree without building the arena. Consumes the stream
/// exactly as [`grow`] does, so both yield the same profile.
pub fn grow_profile<R: Rng + ?Sized>(model: &WeightModel, n: u64, rng: &mut R) -> Result<Profile> {
    let leaf_depths = grow_leaf_depths(model, n, rng)?;
    let mut counts: BTreeMap<Level, u64> = BTreeMap::new();
    if model.d == 1 {
        let mut depths = leaf_depths;
        depths.sort_unstable();
        for run in depths.chunk_by(|a, b| a == b) {
            counts.insert(vec![run[0]], run.len() as u64);
        }
    } else {
        for leaf in leaf_depths.chunks_exact(model.d) {
            bump(&mut counts, leaf);
        }
    }
    Ok(Profile { n, counts })
}

/// Flat array of leaf weighted depths (d entries per leaf).
pub fn grow_leaf_depths<R: Rng + ?Sized>(model: &WeightModel, n: u64, rng: &mut R) -> Result<Vec<i64>> {
    check_cap(model, n, DEFAULT_NODE_CAP)?;
    let d = model.d;
    let mut leaves: Vec<i64> = Vec::with_capacity(((model.b - 1) * n as usize + 1) * d);
    leaves.extend_from_slice(&model.root_shift);
    if d == 1 {
        // Hot path for the common scalar case.
        for _ in 0..n {
            let (pos, atom) = draw_step(model, leaves.len(), rng);
            let base = leaves[pos];
            let w = &model.atoms[atom].weights;
            leaves[pos] = base + w[0][0];
            for wj in &w[1..] {
                leaves.push(base + wj[0]);
            }
        }
        return Ok(leaves);
    }
    let mut parent = vec![0i64; d];
    for _ in 0..n {
        let (pos, atom) = draw_step(model, leaves.len() / d, rng);
        parent.copy_from_slice(&leaves[pos * d..pos * d + d]);
        let w = &model.atoms[atom].weights;
        for k in 0..d {
            leaves[pos * d + k] = parent[k] + w[0][k];
        }
        for wj in &w[1..] {
            for k in 0..d {
                leaves.push(parent[k] + wj[k]);
            }
        }
    }
    Ok(leaves)
}

impl Profile {
    pub fn single_leaf(model: &WeightModel) -> Self {
        let mut counts = BTreeMap::new();
        counts.insert(model.root_shift.clone(), 1);
        Profile { n: 0, counts }
    }

    pub fn mass(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn get(&self, level: &[i64]) -> u64 {
        self.counts.get(level).copied().unwrap_or(0)
    }

    /// Profile after splitting one leaf at `level` with the given weights.
    pub fn after_split(&self, level: &[i64], weights: &[Level]) -> Profile {
        let mut next = self.clone();
        match next.counts.get_mut(level) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                next.counts.remove(level);
            }
            None => panic!("no leaf at level {level:?}"),
        }
        for w in weights {
            let child: Level = level.iter().zip(w).map(|(a, b)| a + b).collect();
            *next.counts.entry(child).or_insert(0) += 1;
        }
        next.n += 1;
        next
    }

    /// CSV with rows `l_1,...,l_d,count` in lexicographic level order.
    pub fn to_csv(&self, d: usize) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=d).map(|k| format!("l_{k}")).collect();
        let _ = writeln!(out, "{},count", header.join(","));
        for (l, u) in &self.counts {
            let cols: Vec<String> = l.iter().map(i64::to_string).collect();
            let _ = writeln!(out, "{},{u}", cols.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = ProfileDoc {
            n: self.n,
            profile: self
                .counts
                .iter()
                .map(|(l, &u)| ProfileRow { l: l.clone(), u })
                .collect(),
        };
        serde_json::to_string(&doc).expect("profile serializes")
    }
}

#[derive(Serialize)]
struct ProfileRow {
    l: Level,
    u: u64,
}

#[derive(Serialize)]
struct ProfileDoc {
    n: u64,
    profile: Vec<ProfileRow>,
}

/// Root-subtree leaf fractions.
pub fn subtree_fractions(tree: &Tree) -> Result<Vec<f64>> {
    let kids = tree
        .children(0)
        .ok_or_else(|| Error::Domain("subtree fractions need at least one internal node".into()))?;
    let counts = tree.leaf_counts();
    let total = counts[0] as f64;
    Ok(kids.map(|c| counts[c as usize] as f64 / total).collect())
}

/// One draw of the n-th split time of the continuous-time process.
pub fn sample_tau<R: Rng + ?Sized>(b: usize, n: u64, rng: &mut R) -> f64 {
    let step = (b - 1) as f64;
    (0..n)
        .map(|j| {
            let e: f64 = Exp1.sample(rng);
            e / (step * j as f64 + 1.0)
        })
        .sum()
}

/// Draws of (b-1) n exp(-(b-1) tau_n), one stream per draw.
pub fn yule_limit_samples(b: usize, n: u64, reps: u64, seed: u64, exec: Execution) -> Vec<f64> {
    let step = (b - 1) as f64;
    map_range(exec, 0..reps, |r| {
        let mut rng = stream(seed, Purpose::Tau, r);
        let tau = sample_tau(b, n, &mut rng);
        step * n as f64 * (-step * tau).exp()
    })
}

/// cdf of the Gamma(1/(b-1), rate 1/(b-1)) limit of those draws.
pub fn yule_limit_cdf(b: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let alpha = 1.0 / (b - 1) as f64;
    statrs::function::gamma::gamma_lr(alpha, alpha * x)
}
