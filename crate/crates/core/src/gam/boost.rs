//! Cyclic gradient boosting of shape functions and interaction tables.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sigmoid, BinnedMatrix, GamModel, InteractionTerm, TrainingMeta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GamConfig {
    pub learning_rate: f64,
    pub max_rounds: usize,
    pub n_interactions: usize,
    pub max_bins: usize,
    /// Share of rows held out for early stopping; 0 disables the hold-out.
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    /// Minimum decrease of the held-out mean log-loss that counts as progress.
    pub early_stop_tolerance: f64,
    /// Cuts per feature per round.
    pub max_cuts: usize,
    /// Rows used to rank candidate interaction pairs.
    pub interaction_sample_cap: usize,
    /// Independent fits (different hold-out draws) averaged into one model.
    pub bags: usize,
    pub seed: u64,
}

impl Default for GamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            max_rounds: 5000,
            n_interactions: 20,
            max_bins: 64,
            validation_fraction: 0.15,
            early_stop_patience: 50,
            early_stop_tolerance: 1e-7,
            max_cuts: 2,
            interaction_sample_cap: 50_000,
            bags: 1,
            seed: 0,
        }
    }
}

impl GamConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidParameter(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.max_cuts == 0 {
            return Err(Error::InvalidParameter("max_cuts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Log-loss of a single row at score `s`: `log(1 + e^s) - y s`.
pub fn logloss(score: f64, label: f64) -> f64 {
    let softplus = score.max(0.0) + (-score.abs()).exp().ln_1p();
    softplus - label * score
}

/// Derivative of [`logloss`] with respect to the score: `sigmoid(s) - y`.
pub fn logloss_gradient(score: f64, label: f64) -> f64 {
    sigmoid(score) - label
}

const HESSIAN_FLOOR: f64 = 1e-12;

fn leaf_gain(g: f64, h: f64) -> f64 {
    g * g / (h + HESSIAN_FLOOR)
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: f64,
}

impl std::ops::AddAssign for Stats {
    fn add_assign(&mut self, o: Self) {
        self.g += o.g;
        self.h += o.h;
        self.n += o.n;
    }
}

impl std::ops::Sub for Stats {
    type Output = Stats;
    fn sub(self, o: Self) -> Self {
        Stats {
            g: self.g - o.g,
            h: self.h - o.h,
            n: self.n - o.n,
        }
    }
}

impl Stats {
    fn gain(&self) -> f64 {
        leaf_gain(self.g, self.h)
    }
}

/// Best split of `stats` into at most `max_cuts + 1` contiguous segments.
///
/// Returns the segment index of every bin. Ties go to fewer segments, then to
/// the lowest cut positions.
fn partition_1d(stats: &[Stats], max_cuts: usize) -> Vec<usize> {
    let b = stats.len();
    let mut prefix = vec![Stats::default(); b + 1];
    for i in 0..b {
        prefix[i + 1] = prefix[i];
        prefix[i + 1] += stats[i];
    }
    let seg = |lo: usize, hi: usize| (prefix[hi] - prefix[lo]).gain();
    let segments = (max_cuts + 1).min(b);
    // dp[j][m]: best gain covering bins [0, m) with j + 1 segments
    let mut dp = vec![vec![f64::NEG_INFINITY; b + 1]; segments];
    let mut from = vec![vec![0usize; b + 1]; segments];
    for (m, v) in dp[0].iter_mut().enumerate().skip(1) {
        *v = seg(0, m);
    }
    for j in 1..segments {
        for m in (j + 1)..=b {
            for l in j..m {
                let v = dp[j - 1][l] + seg(l, m);
                if v > dp[j][m] {
                    dp[j][m] = v;
                    from[j][m] = l;
                }
            }
        }
    }
    let mut best_j = 0;
    for j in 1..segments {
        if dp[j][b] > dp[best_j][b] * (1.0 + 1e-12) + 1e-300 {
            best_j = j;
        }
    }
    let mut bounds = vec![b];
    let (mut j, mut m) = (best_j, b);
    while j > 0 {
        m = from[j][m];
        bounds.push(m);
        j -= 1;
    }
    bounds.reverse();
    let mut out = vec![0; b];
    let mut lo = 0;
    for (k, &hi) in bounds.iter().enumerate() {
        out[lo..hi].iter_mut().for_each(|v| *v = k);
        lo = hi;
    }
    out
}

/// Best single cut (or none) of a 1-D stats array: `(gain, Some(last bin of left part))`.
fn best_single_cut(stats: &[Stats]) -> (f64, Option<usize>) {
    let mut total = Stats::default();
    for s in stats {
        total += *s;
    }
    let mut best = (total.gain(), None);
    let mut left = Stats::default();
    for (c, s) in stats.iter().enumerate().take(stats.len().saturating_sub(1)) {
        left += *s;
        let v = left.gain() + (total - left).gain();
        if v > best.0 * (1.0 + 1e-12) + 1e-300 {
            best = (v, Some(c));
        }
    }
    best
}

/// Depth-2 tree on a `rows x cols` grid; returns the leaf of every cell.
fn partition_2d(grid: &[Stats], rows: usize, cols: usize) -> Vec<usize> {
    let mut total = Stats::default();
    for s in grid {
        total += *s;
    }
    let mut best_gain = total.gain();
    let mut best: Option<(bool, usize, Option<usize>, Option<usize>)> = None;

    // first split across rows
    let mut top = vec![Stats::default(); cols];
    let mut col_total = vec![Stats::default(); cols];
    for a in 0..rows {
        for b in 0..cols {
            col_total[b] += grid[a * cols + b];
        }
    }
    for ca in 0..rows - 1 {
        for b in 0..cols {
            top[b] += grid[ca * cols + b];
        }
        let bottom: Vec<Stats> = col_total.iter().zip(&top).map(|(t, p)| *t - *p).collect();
        let (g1, c1) = best_single_cut(&top);
        let (g2, c2) = best_single_cut(&bottom);
        if g1 + g2 > best_gain * (1.0 + 1e-12) + 1e-300 {
            best_gain = g1 + g2;
            best = Some((true, ca, c1, c2));
        }
    }
    // first split across columns
    let mut left = vec![Stats::default(); rows];
    let mut row_total = vec![Stats::default(); rows];
    for a in 0..rows {
        for b in 0..cols {
            row_total[a] += grid[a * cols + b];
        }
    }
    for cb in 0..cols - 1 {
        for a in 0..rows {
            left[a] += grid[a * cols + cb];
        }
        let right: Vec<Stats> = row_total.iter().zip(&left).map(|(t, p)| *t - *p).collect();
        let (g1, c1) = best_single_cut(&left);
        let (g2, c2) = best_single_cut(&right);
        if g1 + g2 > best_gain * (1.0 + 1e-12) + 1e-300 {
            best_gain = g1 + g2;
            best = Some((false, cb, c1, c2));
        }
    }
    let mut leaves = vec![0usize; rows * cols];
    if let Some((by_rows, first, c1, c2)) = best {
        for a in 0..rows {
            for b in 0..cols {
                let (outer, inner) = if by_rows { (a, b) } else { (b, a) };
                let side = usize::from(outer > first);
                let cut = if side == 0 { c1 } else { c2 };
                let sub = usize::from(matches!(cut, Some(c) if inner > c));
                leaves[a * cols + b] = side * 2 + sub;
            }
        }
    }
    leaves
}

struct Booster<'a> {
    binned: &'a BinnedMatrix,
    y: Vec<f64>,
    fit_rows: Vec<usize>,
    val_rows: Vec<usize>,
    scores: Vec<f64>,
    cfg: &'a GamConfig,
}

impl Booster<'_> {
    fn mean_loss(&self, rows: &[usize]) -> f64 {
        if rows.is_empty() {
            return f64::NAN;
        }
        rows.iter()
            .map(|&i| logloss(self.scores[i], self.y[i]))
            .sum::<f64>()
            / rows.len() as f64
    }

    /// Newton leaf values scaled by the learning rate, shrunk where needed so the
    /// training loss of every leaf cannot increase.
    fn leaf_deltas(&self, cell_of_row: &dyn Fn(usize) -> usize, leaf_of_cell: &[usize], leaves: &[Stats]) -> Vec<f64> {
        let lr = self.cfg.learning_rate;
        let mut deltas: Vec<f64> = leaves
            .iter()
            .map(|s| if s.n > 0.0 { -lr * s.g / (s.h + HESSIAN_FLOOR) } else { 0.0 })
            .collect();
        // loss'' <= 1/4 per row, so a step is safe once h >= lr * n / 8
        let unsafe_leaves: Vec<usize> = (0..leaves.len())
            .filter(|&k| deltas[k] != 0.0 && leaves[k].h < lr * leaves[k].n / 8.0)
            .collect();
        if unsafe_leaves.is_empty() {
            return deltas;
        }
        for _ in 0..60 {
            let mut old = vec![0.0; leaves.len()];
            let mut new = vec![0.0; leaves.len()];
            for &i in &self.fit_rows {
                let k = leaf_of_cell[cell_of_row(i)];
                if unsafe_leaves.contains(&k) {
                    old[k] += logloss(self.scores[i], self.y[i]);
                    new[k] += logloss(self.scores[i] + deltas[k], self.y[i]);
                }
            }
            let mut done = true;
            for &k in &unsafe_leaves {
                if deltas[k] != 0.0 && new[k] > old[k] {
                    deltas[k] *= 0.5;
                    done = false;
                }
            }
            if done {
                return deltas;
            }
        }
        for &k in &unsafe_leaves {
            deltas[k] = 0.0;
        }
        deltas
    }

    fn boost_main(&mut self, f: usize, effect: &mut [f64]) {
        let nb = effect.len();
        if nb < 2 {
            return;
        }
        let codes = &self.binned.codes[f];
        let mut stats = vec![Stats::default(); nb];
        for &i in &self.fit_rows {
            let p = sigmoid(self.scores[i]);
            let s = &mut stats[codes[i] as usize];
            s.g += p - self.y[i];
            s.h += p * (1.0 - p);
            s.n += 1.0;
        }
        let leaf_of_bin = partition_1d(&stats, self.cfg.max_cuts);
        let n_leaves = leaf_of_bin.iter().max().map_or(0, |m| m + 1);
        let mut leaves = vec![Stats::default(); n_leaves];
        for (b, &k) in leaf_of_bin.iter().enumerate() {
            leaves[k] += stats[b];
        }
        let deltas = self.leaf_deltas(&|i| codes[i] as usize, &leaf_of_bin, &leaves);
        for (b, &k) in leaf_of_bin.iter().enumerate() {
            effect[b] += deltas[k];
        }
        for (s, &c) in self.scores.iter_mut().zip(codes) {
            *s += deltas[leaf_of_bin[c as usize]];
        }
    }

    fn boost_pair(&mut self, term: &mut InteractionTerm) {
        let (ci, cj) = (&self.binned.codes[term.first], &self.binned.codes[term.second]);
        let rows = self.binned.binning[term.first].n_bins();
        let cols = self.binned.binning[term.second].n_bins();
        let mut grid = vec![Stats::default(); rows * cols];
        for &i in &self.fit_rows {
            let p = sigmoid(self.scores[i]);
            let s = &mut grid[ci[i] as usize * cols + cj[i] as usize];
            s.g += p - self.y[i];
            s.h += p * (1.0 - p);
            s.n += 1.0;
        }
        let leaf_of_cell = partition_2d(&grid, rows, cols);
        let mut leaves = vec![Stats::default(); 4];
        for (c, &k) in leaf_of_cell.iter().enumerate() {
            leaves[k] += grid[c];
        }
        let cell = |i: usize| ci[i] as usize * cols + cj[i] as usize;
        let deltas = self.leaf_deltas(&cell, &leaf_of_cell, &leaves);
        for (c, &k) in leaf_of_cell.iter().enumerate() {
            term.table[c] += deltas[k];
        }
        for i in 0..self.scores.len() {
            self.scores[i] += deltas[leaf_of_cell[cell(i)]];
        }
    }

    fn check_finite(&self, stage: &str, round: usize) -> Result<()> {
        if let Some(i) = self.scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{stage} round {round}: score of row {i} is {}",
                self.scores[i]
            )));
        }
        Ok(())
    }
}

/// Tracks the best held-out loss and decides when to stop.
struct EarlyStop {
    best: f64,
    best_round: usize,
    since: usize,
    patience: usize,
    tolerance: f64,
}

impl EarlyStop {
    fn new(initial: f64, patience: usize, tolerance: f64) -> Self {
        Self {
            best: initial,
            best_round: 0,
            since: 0,
            patience,
            tolerance,
        }
    }

    /// Returns `(improved, stop)`.
    fn update(&mut self, round: usize, loss: f64) -> (bool, bool) {
        if loss < self.best - self.tolerance {
            self.best = loss;
            self.best_round = round;
            self.since = 0;
            (true, false)
        } else {
            self.since += 1;
            (false, self.patience > 0 && self.since >= self.patience)
        }
    }
}

/// Ranks pairs by the gain of the best 2x2 quadrant split of the current gradients.
fn rank_pairs(booster: &Booster<'_>, sample: &[usize]) -> Vec<(usize, usize, f64)> {
    let binned = booster.binned;
    let d = binned.n_features();
    let pairs: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .filter(|&(i, j)| binned.binning[i].n_bins() > 1 && binned.binning[j].n_bins() > 1)
        .collect();
    let grads: Vec<(f64, f64)> = sample
        .iter()
        .map(|&i| {
            let p = sigmoid(booster.scores[i]);
            (p - booster.y[i], p * (1.0 - p))
        })
        .collect();
    let mut ranked: Vec<(usize, usize, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let rows = binned.binning[i].n_bins();
            let cols = binned.binning[j].n_bins();
            // inclusive 2-D prefix sums
            let mut s = vec![Stats::default(); rows * cols];
            for (k, &r) in sample.iter().enumerate() {
                let c = &mut s[binned.codes[i][r] as usize * cols + binned.codes[j][r] as usize];
                c.g += grads[k].0;
                c.h += grads[k].1;
                c.n += 1.0;
            }
            for a in 0..rows {
                for b in 0..cols {
                    let mut v = s[a * cols + b];
                    if a > 0 {
                        v += s[(a - 1) * cols + b];
                    }
                    if b > 0 {
                        v += s[a * cols + b - 1];
                    }
                    if a > 0 && b > 0 {
                        v = v - s[(a - 1) * cols + b - 1];
                    }
                    s[a * cols + b] = v;
                }
            }
            let total = s[rows * cols - 1];
            let base = total.gain();
            let mut best = 0.0f64;
            for a in 0..rows - 1 {
                for b in 0..cols - 1 {
                    let q1 = s[a * cols + b];
                    let q2 = s[a * cols + cols - 1] - q1;
                    let q3 = s[(rows - 1) * cols + b] - q1;
                    let q4 = total - q1 - q2 - q3;
                    let g = q1.gain() + q2.gain() + q3.gain() + q4.gain() - base;
                    best = best.max(g);
                }
            }
            (i, j, best)
        })
        .collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    ranked
}

fn fit_single(binned: &BinnedMatrix, labels: &[bool], cfg: &GamConfig, seed: u64) -> Result<GamModel> {
    let n = binned.n_rows;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
    let prevalence = y.iter().sum::<f64>() / n as f64;
    let intercept = (prevalence / (1.0 - prevalence)).ln();
    let mut model = GamModel::intercept_only(binned, intercept);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_val = if cfg.validation_fraction > 0.0 {
        ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let mut val_rows = order[..n_val].to_vec();
    let mut fit_rows = order[n_val..].to_vec();
    val_rows.sort_unstable();
    fit_rows.sort_unstable();
    let fit_pos = fit_rows.iter().filter(|&&i| labels[i]).count();
    if fit_pos == 0 || fit_pos == fit_rows.len() {
        return Err(Error::SingleClass("boosting (after the hold-out split)"));
    }

    let mut b = Booster {
        binned,
        y,
        fit_rows,
        val_rows,
        scores: vec![intercept; n],
        cfg,
    };
    let mut meta = TrainingMeta {
        learning_rate: cfg.learning_rate,
        bags: 1,
        ..TrainingMeta::default()
    };
    meta.main_loss_history.push(b.mean_loss(&b.fit_rows));
    let monitor = |b: &Booster<'_>| {
        if b.val_rows.is_empty() {
            b.mean_loss(&b.fit_rows)
        } else {
            b.mean_loss(&b.val_rows)
        }
    };

    // stage 1: main effects
    let mut effects = std::mem::take(&mut model.main_effects);
    let mut best_effects = effects.clone();
    let mut stop = EarlyStop::new(monitor(&b), cfg.early_stop_patience, cfg.early_stop_tolerance);
    for round in 1..=cfg.max_rounds {
        for (f, effect) in effects.iter_mut().enumerate() {
            b.boost_main(f, effect);
        }
        b.check_finite("main-effect", round)?;
        meta.main_loss_history.push(b.mean_loss(&b.fit_rows));
        let (improved, halt) = stop.update(round, monitor(&b));
        if improved {
            best_effects.clone_from(&effects);
        }
        if halt {
            break;
        }
    }
    meta.main_rounds = stop.best_round;
    model.main_effects = best_effects;
    let recompute = |model: &GamModel, scores: &mut [f64]| {
        for (i, s) in scores.iter_mut().enumerate() {
            let mut v = model.intercept;
            for (f, e) in model.main_effects.iter().enumerate() {
                v += e[binned.codes[f][i] as usize];
            }
            for t in &model.interactions {
                let w = binned.binning[t.second].n_bins();
                v += t.table[binned.codes[t.first][i] as usize * w + binned.codes[t.second][i] as usize];
            }
            *s = v;
        }
    };
    recompute(&model, &mut b.scores);
    let mut best_val = stop.best;

    // stage 2: interactions on the stage-1 residuals
    if cfg.n_interactions > 0 && cfg.max_rounds > 0 {
        let mut sample = b.fit_rows.clone();
        if sample.len() > cfg.interaction_sample_cap {
            sample.shuffle(&mut rng);
            sample.truncate(cfg.interaction_sample_cap);
            sample.sort_unstable();
        }
        let chosen: Vec<(usize, usize)> = rank_pairs(&b, &sample)
            .into_iter()
            .filter(|p| p.2 > 0.0)
            .take(cfg.n_interactions)
            .map(|p| (p.0, p.1))
            .collect();
        let mut terms: Vec<InteractionTerm> = chosen
            .iter()
            .map(|&(i, j)| {
                let cols = binned.binning[j].n_bins();
                let mut counts = vec![0.0; binned.binning[i].n_bins() * cols];
                for r in 0..n {
                    counts[binned.codes[i][r] as usize * cols + binned.codes[j][r] as usize] += 1.0;
                }
                InteractionTerm {
                    first: i,
                    second: j,
                    table: vec![0.0; counts.len()],
                    counts,
                }
            })
            .collect();
        if !terms.is_empty() {
            let mut best_terms = terms.clone();
            meta.interaction_loss_history.push(b.mean_loss(&b.fit_rows));
            let mut stop = EarlyStop::new(monitor(&b), cfg.early_stop_patience, cfg.early_stop_tolerance);
            for round in 1..=cfg.max_rounds {
                for t in terms.iter_mut() {
                    b.boost_pair(t);
                }
                b.check_finite("interaction", round)?;
                meta.interaction_loss_history.push(b.mean_loss(&b.fit_rows));
                let (improved, halt) = stop.update(round, monitor(&b));
                if improved {
                    best_terms.clone_from(&terms);
                }
                if halt {
                    break;
                }
            }
            meta.interaction_rounds = stop.best_round;
            best_val = best_val.min(stop.best);
            model.interactions = best_terms;
        }
    }
    if !b.val_rows.is_empty() {
        meta.best_validation_loss = Some(best_val);
    }
    model.meta = meta;
    model.center();
    Ok(model)
}

/// Fits the additive model by cyclic boosting.
///
/// Stage 1 visits every feature in order each round, fitting a partition of its
/// bins (at most `max_cuts` cuts) to the log-loss gradients and adding the
/// shrunken Newton leaf values to that feature's table. Stage 2 ranks feature
/// pairs by the gain of a 2x2 split of the stage-1 gradients, keeps the top
/// `n_interactions`, and boosts their 2-D tables the same way with depth-2
/// trees. Both stages stop early on the held-out log-loss and keep the best
/// round. The result is centered.
pub fn fit_gam(binned: &BinnedMatrix, labels: &[bool], config: &GamConfig) -> Result<GamModel> {
    config.validate()?;
    if labels.len() != binned.n_rows {
        return Err(Error::DimensionMismatch {
            expected: binned.n_rows,
            actual: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass("fit_gam"));
    }
    let bags = config.bags.max(1);
    if bags == 1 {
        return fit_single(binned, labels, config, config.seed);
    }
    let models: Vec<GamModel> = (0..bags)
        .into_par_iter()
        .map(|k| fit_single(binned, labels, config, config.seed.wrapping_add(k as u64)))
        .collect::<Result<_>>()?;
    let w = 1.0 / bags as f64;
    let mut avg = GamModel::intercept_only(binned, 0.0);
    for m in &models {
        avg.intercept += w * m.intercept;
        for (a, e) in avg.main_effects.iter_mut().zip(&m.main_effects) {
            a.iter_mut().zip(e).for_each(|(a, e)| *a += w * e);
        }
        for t in &m.interactions {
            match avg
                .interactions
                .iter_mut()
                .find(|a| a.first == t.first && a.second == t.second)
            {
                Some(a) => a.table.iter_mut().zip(&t.table).for_each(|(a, v)| *a += w * v),
                None => avg.interactions.push(InteractionTerm {
                    first: t.first,
                    second: t.second,
                    table: t.table.iter().map(|v| w * v).collect(),
                    counts: t.counts.clone(),
                }),
            }
        }
    }
    avg.interactions.sort_by_key(|t| (t.first, t.second));
    avg.meta = models[0].meta.clone();
    avg.meta.bags = bags;
    avg.center();
    Ok(avg)
}
