use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gam::{bin_features, BinnedMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Share of rows drawn (without replacement) for each tree.
    pub bag_fraction: f64,
    /// Shrinkage applied to each boosting step.
    pub learning_rate: f64,
    /// Trees grown side by side on the same residuals per boosting step.
    pub batch: usize,
    pub max_bins: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 96,
            max_depth: 3,
            bag_fraction: 0.5,
            learning_rate: 0.3,
            batch: 8,
            max_bins: 32,
            min_leaf: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with bin code `<= bin` go left.
        bin: u16,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// Axis-aligned regression tree over bin codes; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub depth: usize,
}

impl Tree {
    pub fn predict(&self, binned: &BinnedMatrix, row: usize) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, bin, left, right } => {
                    at = if binned.codes[feature][row] <= bin { left } else { right };
                }
            }
        }
    }

    /// Split count per feature.
    pub fn feature_usage(&self, n_features: usize) -> Vec<usize> {
        let mut usage = vec![0; n_features];
        for n in &self.nodes {
            if let Node::Split { feature, .. } = n {
                usage[*feature] += 1;
            }
        }
        usage
    }

    pub fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// `predictions[t][row]` on the full selection set, centered.
    pub predictions: Vec<Vec<f64>>,
    pub features: Vec<Vec<usize>>,
    pub usage: Vec<Vec<usize>>,
    pub n_features: usize,
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    residual: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    /// Best `(gain, feature, bin)` over all features; ties keep the lowest feature
    /// then the lowest bin.
    fn best_split(&self, rows: &[usize]) -> Option<(f64, usize, u16)> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&i| self.residual[i]).sum();
        let base = total * total / n;
        let mut best: Option<(f64, usize, u16)> = None;
        for f in 0..self.binned.n_features() {
            let nb = self.binned.binning[f].n_bins();
            if nb < 2 {
                continue;
            }
            let codes = &self.binned.codes[f];
            let mut sum = vec![0.0; nb];
            let mut cnt = vec![0usize; nb];
            for &i in rows {
                sum[codes[i] as usize] += self.residual[i];
                cnt[codes[i] as usize] += 1;
            }
            let (mut ls, mut lc) = (0.0, 0usize);
            for b in 0..nb - 1 {
                ls += sum[b];
                lc += cnt[b];
                let rc = rows.len() - lc;
                if lc < self.min_leaf || rc < self.min_leaf {
                    continue;
                }
                let rs = total - ls;
                let gain = ls * ls / lc as f64 + rs * rs / rc as f64 - base;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b as u16));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.residual[i]).sum::<f64>() / rows.len().max(1) as f64;
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return id;
        }
        if let Some((_, feature, bin)) = self.best_split(&rows) {
            let codes = &self.binned.codes[feature];
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| codes[i] <= bin);
            let left = self.grow(l, depth + 1);
            let right = self.grow(r, depth + 1);
            self.nodes[id] = Node::Split { feature, bin, left, right };
        }
        id
    }
}

fn tree_depth(nodes: &[Node], at: usize) -> usize {
    match nodes[at] {
        Node::Leaf(_) => 0,
        Node::Split { left, right, .. } => 1 + tree_depth(nodes, left).max(tree_depth(nodes, right)),
    }
}

/// Grows a forest of shallow regression trees on the labels.
///
/// Trees come in depth stages `1..=max_depth`, an equal share per stage. Within a
/// stage, batches of trees are grown in parallel on bagged rows against the same
/// boosting residuals; the batch mean, shrunk by the learning rate, then updates
/// the residuals.
pub fn grow_forest(rows: &[Vec<f64>], labels: &[bool], config: &ForestConfig) -> Result<Forest> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass("grow_forest"));
    }
    if config.n_trees == 0 || config.max_depth == 0 {
        return Err(Error::InvalidParameter("n_trees and max_depth must be positive".into()));
    }
    if !(config.bag_fraction > 0.0 && config.bag_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "bag_fraction must lie in (0, 1], got {}",
            config.bag_fraction
        )));
    }
    let d = rows[0].len();
    let names = (0..d).map(|f| format!("x{f}")).collect();
    let binned = bin_features(rows, names, config.max_bins)?;
    let m = rows.len();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let y_mean = y.iter().sum::<f64>() / m as f64;
    let mut fitted = vec![y_mean; m];
    let bag = ((m as f64 * config.bag_fraction).round() as usize).clamp(1, m);
    let batch = config.batch.max(1);

    let mut trees = Vec::with_capacity(config.n_trees);
    let mut predictions = Vec::with_capacity(config.n_trees);
    let mut next = 0usize;
    for depth in 1..=config.max_depth {
        let stage = config.n_trees / config.max_depth + usize::from(depth <= config.n_trees % config.max_depth);
        let mut done = 0;
        while done < stage {
            let size = batch.min(stage - done);
            let residual: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
            let grown: Vec<(Tree, Vec<f64>)> = (next..next + size)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(t as u64);
                    let mut idx = sample(&mut rng, m, bag).into_vec();
                    idx.sort_unstable();
                    let mut g = Grower {
                        binned: &binned,
                        residual: &residual,
                        max_depth: depth,
                        min_leaf: config.min_leaf,
                        nodes: Vec::new(),
                    };
                    g.grow(idx, 0);
                    let depth = tree_depth(&g.nodes, 0);
                    let tree = Tree { nodes: g.nodes, depth };
                    let pred = (0..m).map(|i| tree.predict(&binned, i)).collect();
                    (tree, pred)
                })
                .collect();
            let w = config.learning_rate / size as f64;
            for (_, pred) in &grown {
                fitted.iter_mut().zip(pred).for_each(|(f, p)| *f += w * p);
            }
            for (tree, pred) in grown {
                trees.push(tree);
                predictions.push(pred);
            }
            next += size;
            done += size;
        }
    }
    for p in predictions.iter_mut() {
        let mean = p.iter().sum::<f64>() / m as f64;
        p.iter_mut().for_each(|v| *v -= mean);
    }
    let features = trees.iter().map(Tree::features).collect();
    let usage = trees.iter().map(|t| t.feature_usage(d)).collect();
    Ok(Forest {
        trees,
        predictions,
        features,
        usage,
        n_features: d,
    })
}
