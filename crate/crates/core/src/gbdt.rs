//! Gradient boosted decision trees with histogram split finding, Newton leaf
//! values, pointwise logistic and pairwise logistic losses, and optional
//! layer-by-layer boosting (gradients refreshed after every tree level).

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "agentrank-gbdt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Pointwise,
    Pairwise,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(Self::Pointwise),
            "pairwise" => Ok(Self::Pairwise),
            other => Err(Error::Config(format!("unknown loss kind `{other}`"))),
        }
    }
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pointwise => "pointwise",
            Self::Pairwise => "pairwise",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub layer_by_layer: bool,
    pub n_bins: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_samples_leaf: usize,
    pub min_hessian_leaf: f64,
    /// Cap on sampled pairs per planning iteration; `None` keeps all.
    pub pairs_per_scene: Option<usize>,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 2,
            max_depth: 14,
            learning_rate: 0.3,
            loss: LossKind::Pairwise,
            layer_by_layer: true,
            n_bins: 64,
            lambda: 1.0,
            min_samples_leaf: 5,
            min_hessian_leaf: 1e-3,
            pairs_per_scene: Some(64),
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 {
            return Err(Error::Config("gbdt needs at least one tree of depth >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config("learning rate and lambda must be non-negative".into()));
        }
        if !(2..=256).contains(&self.n_bins) {
            return Err(Error::Config(format!("n_bins must be in 2..=256, got {}", self.n_bins)));
        }
        Ok(())
    }
}

/// Training rows grouped by planning iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Samples {
    pub features: Vec<Vec<f64>>,
    pub grades: Vec<u8>,
    pub groups: Vec<Range<usize>>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainPair {
    pub first: usize,
    pub second: usize,
    /// +1 when `first` has the higher grade.
    pub label: i8,
}

/// Cross-grade pairs within each group, at most `per_scene_cap` per group,
/// each presented in random order.
pub fn sample_pairs(grades: &[u8], groups: &[Range<usize>], per_scene_cap: Option<usize>, seed: u64) -> Vec<TrainPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut candidates = Vec::new();
    for g in groups {
        candidates.clear();
        for i in g.clone() {
            for j in i + 1..g.end {
                if grades[i] != grades[j] {
                    candidates.push((i, j));
                }
            }
        }
        if let Some(cap) = per_scene_cap {
            if candidates.len() > cap {
                candidates.partial_shuffle(&mut rng, cap);
                candidates.truncate(cap);
            }
        }
        for &(i, j) in &candidates {
            let (hi, lo) = if grades[i] > grades[j] { (i, j) } else { (j, i) };
            out.push(if rng.gen_bool(0.5) {
                TrainPair { first: hi, second: lo, label: 1 }
            } else {
                TrainPair { first: lo, second: hi, label: -1 }
            });
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Summed pair loss `ln(1 + e^(s_lo - s_hi))`.
pub fn pairwise_loss(scores: &[f64], pairs: &[TrainPair]) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let (hi, lo) = p.ordered();
            softplus(scores[lo] - scores[hi])
        })
        .sum()
}

impl TrainPair {
    /// (more important, less important)
    pub fn ordered(&self) -> (usize, usize) {
        if self.label > 0 {
            (self.first, self.second)
        } else {
            (self.second, self.first)
        }
    }
}

/// Per-record first and second derivatives of the summed pair loss.
pub fn pairwise_gradients(scores: &[f64], pairs: &[TrainPair], grad: &mut [f64], hess: &mut [f64]) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    hess.iter_mut().for_each(|h| *h = 0.0);
    for p in pairs {
        let (hi, lo) = p.ordered();
        let s = sigmoid(scores[lo] - scores[hi]);
        grad[hi] -= s;
        grad[lo] += s;
        let h = s * (1.0 - s);
        hess[hi] += h;
        hess[lo] += h;
    }
}

/// Mean logistic loss on the binary target `grade >= 1`.
pub fn pointwise_loss(scores: &[f64], grades: &[u8]) -> f64 {
    let n = scores.len().max(1) as f64;
    scores
        .iter()
        .zip(grades)
        .map(|(&s, &g)| if g >= 1 { softplus(-s) } else { softplus(s) })
        .sum::<f64>()
        / n
}

pub fn pointwise_gradients(scores: &[f64], grades: &[u8], grad: &mut [f64], hess: &mut [f64]) {
    for i in 0..scores.len() {
        let p = sigmoid(scores[i]);
        let y = if grades[i] >= 1 { 1.0 } else { 0.0 };
        grad[i] = p - y;
        hess[i] = p * (1.0 - p);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub max_depth: usize,
    /// Root at index 0. Leaf values are unscaled.
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    fn check(&self, dim: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Format("tree without nodes".into()));
        }
        // children always come after their parent, so walks terminate
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Split { feature, threshold, left, right } => {
                    let ok = feature < dim
                        && threshold.is_finite()
                        && (left as usize) > i
                        && (right as usize) > i
                        && (left as usize) < self.nodes.len()
                        && (right as usize) < self.nodes.len();
                    if !ok {
                        return Err(Error::Format(format!("malformed split node {i}")));
                    }
                }
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(Error::Format(format!("non-finite leaf value at node {i}")));
                }
                Node::Leaf { .. } => {}
            }
        }
        if self.depth() > self.max_depth {
            return Err(Error::Format("tree deeper than its declared max depth".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub boosting_iterations: usize,
    pub pairs: usize,
    /// Training loss before training and after each boosting iteration.
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub feature_dim: usize,
    pub feature_schema: u32,
    pub trees: Vec<DecisionTree>,
    pub config: GbdtConfig,
    pub training: TrainingLog,
}

impl GbdtModel {
    /// Score for one feature vector: sum of leaf values times the learning rate.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if self.trees.is_empty() {
            return Err(Error::Compatibility("gbdt model has no trees".into()));
        }
        if x.len() != self.feature_dim {
            return Err(Error::Compatibility(format!(
                "gbdt model expects {} features, got {}",
                self.feature_dim,
                x.len()
            )));
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.leaf(x)).sum::<f64>() * self.learning_rate
    }

    pub fn check_schema(&self, schema: u32, dim: usize) -> Result<()> {
        if self.feature_schema != schema || self.feature_dim != dim {
            return Err(Error::Compatibility(format!(
                "gbdt model schema {}/{} features does not match {schema}/{dim}",
                self.feature_schema, self.feature_dim
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let doc = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_vec_pretty(&doc)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header =
            serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("gbdt model header: {e}")))?;
        if header.format != MODEL_FORMAT {
            return Err(Error::Format(format!("not a gbdt model file: `{}`", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion {
                found: header.version,
                supported: MODEL_VERSION,
            });
        }
        let doc: ModelFile = serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("gbdt model body: {e}")))?;
        let model = doc.model;
        if model.trees.is_empty() {
            return Err(Error::Format("gbdt model has no trees".into()));
        }
        for t in &model.trees {
            t.check(model.feature_dim)?;
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: GbdtModel,
}

/// Per-feature cut points; bin `b` holds values `<= cuts[b]`, the last bin the rest.
struct Binned {
    cuts: Vec<Vec<f64>>,
    /// Column-major bin index per (feature, row).
    bins: Vec<Vec<u8>>,
}

fn quantile_cuts(values: &mut [f64], n_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut cuts: Vec<f64> = Vec::new();
    for q in 1..n_bins {
        let v = values[(q * n / n_bins).min(n - 1)];
        let next = values.partition_point(|&x| x <= v);
        if next < n {
            let cut = 0.5 * (v + values[next]);
            if cuts.last().is_none_or(|&c| cut > c) {
                cuts.push(cut);
            }
        }
    }
    // every distinct value gets its own bin when there are few of them
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.dedup();
    if distinct.len() <= n_bins {
        cuts = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    cuts
}

fn bin_features(samples: &Samples, n_bins: usize) -> Binned {
    let dim = samples.dim();
    let mut cuts = Vec::with_capacity(dim);
    let mut bins = Vec::with_capacity(dim);
    let mut column = Vec::with_capacity(samples.len());
    for f in 0..dim {
        column.clear();
        column.extend(samples.features.iter().map(|x| x[f]));
        let c = quantile_cuts(&mut column, n_bins);
        bins.push(
            samples
                .features
                .iter()
                .map(|x| c.partition_point(|&t| t < x[f]) as u8)
                .collect(),
        );
        cuts.push(c);
    }
    Binned { cuts, bins }
}

#[derive(Clone, Copy, Default)]
struct Stat {
    g: f64,
    h: f64,
    n: usize,
}

struct SplitChoice {
    feature: usize,
    bin: usize,
    gain: f64,
    left: Stat,
    right: Stat,
}

struct Grower<'a> {
    cfg: &'a GbdtConfig,
    binned: &'a Binned,
}

impl Grower<'_> {
    fn newton(&self, s: Stat) -> f64 {
        -s.g / (s.h + self.cfg.lambda)
    }

    fn score(&self, s: Stat) -> f64 {
        s.g * s.g / (s.h + self.cfg.lambda)
    }

    fn best_split(&self, rows: &[u32], grad: &[f64], hess: &[f64]) -> (Stat, Option<SplitChoice>) {
        let mut total = Stat::default();
        for &r in rows {
            total.g += grad[r as usize];
            total.h += hess[r as usize];
        }
        total.n = rows.len();
        if rows.len() < 2 * self.cfg.min_samples_leaf.max(1) {
            return (total, None);
        }
        let parent = self.score(total);
        let mut best: Option<SplitChoice> = None;
        let mut hist = vec![Stat::default(); self.cfg.n_bins];
        for (f, col) in self.binned.bins.iter().enumerate() {
            let n_cuts = self.binned.cuts[f].len();
            if n_cuts == 0 {
                continue;
            }
            hist[..=n_cuts].iter_mut().for_each(|s| *s = Stat::default());
            for &r in rows {
                let s = &mut hist[col[r as usize] as usize];
                s.g += grad[r as usize];
                s.h += hess[r as usize];
                s.n += 1;
            }
            let mut left = Stat::default();
            for (b, s) in hist[..n_cuts].iter().enumerate() {
                left.g += s.g;
                left.h += s.h;
                left.n += s.n;
                let right = Stat {
                    g: total.g - left.g,
                    h: total.h - left.h,
                    n: total.n - left.n,
                };
                if left.n < self.cfg.min_samples_leaf.max(1)
                    || right.n < self.cfg.min_samples_leaf.max(1)
                    || left.h < self.cfg.min_hessian_leaf
                    || right.h < self.cfg.min_hessian_leaf
                {
                    continue;
                }
                let gain = self.score(left) + self.score(right) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|c| gain > c.gain) {
                    best = Some(SplitChoice { feature: f, bin: b, gain, left, right });
                }
            }
        }
        (total, best)
    }
}

struct Objective<'a> {
    loss: LossKind,
    grades: &'a [u8],
    pairs: Vec<TrainPair>,
}

impl Objective<'_> {
    fn gradients(&self, scores: &[f64], grad: &mut [f64], hess: &mut [f64]) {
        match self.loss {
            LossKind::Pointwise => pointwise_gradients(scores, self.grades, grad, hess),
            LossKind::Pairwise => pairwise_gradients(scores, &self.pairs, grad, hess),
        }
    }

    fn loss(&self, scores: &[f64]) -> f64 {
        match self.loss {
            LossKind::Pointwise => pointwise_loss(scores, self.grades),
            LossKind::Pairwise => pairwise_loss(scores, &self.pairs),
        }
    }
}

fn check_samples(samples: &Samples) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if samples.grades.len() != samples.len() {
        return Err(Error::Data("grades and features differ in length".into()));
    }
    let dim = samples.dim();
    for (i, x) in samples.features.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::Data(format!("row {i} has {} features, expected {dim}", x.len())));
        }
        if let Some(f) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {i} feature {f} is not finite")));
        }
    }
    Ok(())
}

pub fn train_gbdt(samples: &Samples, cfg: &GbdtConfig) -> Result<GbdtModel> {
    train_gbdt_with_schema(samples, cfg, crate::features::FEATURE_SCHEMA_VERSION)
}

pub fn train_gbdt_with_schema(samples: &Samples, cfg: &GbdtConfig, feature_schema: u32) -> Result<GbdtModel> {
    cfg.validate()?;
    check_samples(samples)?;
    let pairs = match cfg.loss {
        LossKind::Pairwise => {
            let pairs = sample_pairs(&samples.grades, &samples.groups, cfg.pairs_per_scene, cfg.seed);
            if pairs.is_empty() {
                return Err(Error::Training("no cross-grade pairs to train on".into()));
            }
            pairs
        }
        LossKind::Pointwise => Vec::new(),
    };
    let objective = Objective {
        loss: cfg.loss,
        grades: &samples.grades,
        pairs,
    };
    let binned = bin_features(samples, cfg.n_bins);
    let grower = Grower { cfg, binned: &binned };

    let n = samples.len();
    let mut base = vec![0.0; n];
    let mut scores = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut log = TrainingLog {
        pairs: objective.pairs.len(),
        loss_history: vec![objective.loss(&scores)],
        ..TrainingLog::default()
    };
    let mut trees = Vec::with_capacity(cfg.n_trees);

    for _ in 0..cfg.n_trees {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        // (node index, rows) of leaves that may still split
        let mut frontier: Vec<(usize, Vec<u32>)> = vec![(0, (0..n as u32).collect())];
        let mut node_of = vec![0u32; n];
        objective.gradients(&scores, &mut grad, &mut hess);

        for depth in 0..cfg.max_depth {
            if frontier.is_empty() {
                break;
            }
            if cfg.layer_by_layer && depth > 0 {
                objective.gradients(&scores, &mut grad, &mut hess);
            }
            let mut next = Vec::new();
            for (node, rows) in frontier.drain(..) {
                let parent_value = match nodes[node] {
                    Node::Leaf { value } => value,
                    Node::Split { .. } => unreachable!("frontier nodes are leaves"),
                };
                let (total, choice) = grower.best_split(&rows, &grad, &hess);
                let offset = if cfg.layer_by_layer { parent_value } else { 0.0 };
                let Some(c) = choice else {
                    if cfg.layer_by_layer {
                        nodes[node] = Node::Leaf { value: parent_value + grower.newton(total) };
                    } else if depth == 0 {
                        nodes[node] = Node::Leaf { value: grower.newton(total) };
                    }
                    continue;
                };
                let threshold = binned.cuts[c.feature][c.bin];
                let (l, r) = (nodes.len() as u32, nodes.len() as u32 + 1);
                nodes.push(Node::Leaf { value: offset + grower.newton(c.left) });
                nodes.push(Node::Leaf { value: offset + grower.newton(c.right) });
                nodes[node] = Node::Split { feature: c.feature, threshold, left: l, right: r };
                let col = &binned.bins[c.feature];
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                    rows.iter().partition(|&&row| (col[row as usize] as usize) <= c.bin);
                for &row in &left_rows {
                    node_of[row as usize] = l;
                }
                for &row in &right_rows {
                    node_of[row as usize] = r;
                }
                next.push((l as usize, left_rows));
                next.push((r as usize, right_rows));
            }
            frontier = next;
            if cfg.layer_by_layer {
                refresh_scores(&mut scores, &base, &nodes, &node_of, cfg.learning_rate);
                log.boosting_iterations += 1;
                log.loss_history.push(objective.loss(&scores));
            }
        }
        if !cfg.layer_by_layer {
            refresh_scores(&mut scores, &base, &nodes, &node_of, cfg.learning_rate);
            log.boosting_iterations += 1;
            log.loss_history.push(objective.loss(&scores));
        }
        base.copy_from_slice(&scores);
        trees.push(DecisionTree {
            max_depth: cfg.max_depth,
            nodes,
        });
    }

    Ok(GbdtModel {
        loss: cfg.loss,
        learning_rate: cfg.learning_rate,
        feature_dim: samples.dim(),
        feature_schema,
        trees,
        config: cfg.clone(),
        training: log,
    })
}

fn refresh_scores(scores: &mut [f64], base: &[f64], nodes: &[Node], node_of: &[u32], lr: f64) {
    for i in 0..scores.len() {
        let v = match nodes[node_of[i] as usize] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("rows always sit at leaves"),
        };
        scores[i] = base[i] + lr * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_split_model(lr: f64) -> GbdtModel {
        GbdtModel {
            loss: LossKind::Pointwise,
            learning_rate: lr,
            feature_dim: 1,
            feature_schema: 1,
            trees: vec![DecisionTree {
                max_depth: 1,
                nodes: vec![
                    Node::Split { feature: 0, threshold: 1.0, left: 1, right: 2 },
                    Node::Leaf { value: 0.2 },
                    Node::Leaf { value: 0.8 },
                ],
            }],
            config: GbdtConfig::default(),
            training: TrainingLog::default(),
        }
    }

    #[test]
    fn hand_routed_prediction() {
        let m = one_split_model(0.5);
        assert_eq!(m.predict(&[2.0]).unwrap(), 0.8 * 0.5);
        assert_eq!(m.predict(&[1.0]).unwrap(), 0.2 * 0.5);
        assert!(matches!(m.predict(&[1.0, 2.0]), Err(Error::Compatibility(_))));
        let empty = GbdtModel { trees: vec![], ..m };
        assert!(matches!(empty.predict(&[1.0]), Err(Error::Compatibility(_))));
    }

    #[test]
    fn pair_counts() {
        let grades = [2, 2, 1, 0];
        let pairs = sample_pairs(&grades, &[0..4], None, 3);
        assert_eq!(pairs.len(), 5);
        assert!(pairs.iter().all(|p| grades[p.first] != grades[p.second]));
        for p in &pairs {
            let (hi, lo) = p.ordered();
            assert!(grades[hi] > grades[lo]);
        }
        assert!(sample_pairs(&[0, 0, 0], &[0..3], None, 3).is_empty());
        assert_eq!(sample_pairs(&grades, &[0..4], Some(2), 3).len(), 2);
        assert_eq!(sample_pairs(&grades, &[0..4], None, 9), sample_pairs(&grades, &[0..4], None, 9));
    }

    #[test]
    fn cuts_separate_distinct_values() {
        let mut v = vec![3.0, 1.0, 2.0, 2.0, 1.0];
        assert_eq!(quantile_cuts(&mut v, 64), vec![1.5, 2.5]);
        let mut many: Vec<f64> = (0..1000).map(f64::from).collect();
        let cuts = quantile_cuts(&mut many, 64);
        assert_eq!(cuts.len(), 63);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
    }

    fn separable() -> Samples {
        let xs: Vec<f64> = (0..40).map(|i| f64::from(i) / 40.0).collect();
        Samples {
            grades: xs.iter().map(|&x| if x > 0.5 { 2 } else { 0 }).collect(),
            features: xs.iter().map(|&x| vec![x]).collect(),
            groups: (0..4).map(|g| g * 10..(g + 1) * 10).collect(),
        }
    }

    #[test]
    fn separable_data_is_ranked_perfectly() {
        let data = separable();
        for loss in [LossKind::Pointwise, LossKind::Pairwise] {
            let cfg = GbdtConfig {
                n_trees: 1,
                max_depth: 2,
                loss,
                min_samples_leaf: 1,
                pairs_per_scene: None,
                ..GbdtConfig::default()
            };
            let m = train_gbdt(&data, &cfg).unwrap();
            let s: Vec<f64> = data.features.iter().map(|x| m.predict(x).unwrap()).collect();
            let lo = (0..40).filter(|&i| data.grades[i] == 0).map(|i| s[i]).fold(f64::NEG_INFINITY, f64::max);
            let hi = (0..40).filter(|&i| data.grades[i] == 2).map(|i| s[i]).fold(f64::INFINITY, f64::min);
            assert!(hi > lo, "{loss:?}");
        }
    }

    #[test]
    fn zero_rate_and_constant_features() {
        let mut data = separable();
        let cfg = GbdtConfig {
            learning_rate: 0.0,
            ..GbdtConfig::default()
        };
        let m = train_gbdt(&data, &cfg).unwrap();
        assert!(data.features.iter().all(|x| m.predict(x).unwrap() == 0.0));

        data.features.iter_mut().for_each(|x| x[0] = 7.0);
        let m = train_gbdt(&data, &GbdtConfig::default()).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        let s0 = m.predict(&[7.0]).unwrap();
        assert_eq!(m.predict(&[-3.0]).unwrap(), s0);
    }

    #[test]
    fn training_errors() {
        assert!(matches!(train_gbdt(&Samples::default(), &GbdtConfig::default()), Err(Error::Training(_))));
        let mut data = separable();
        data.features[3][0] = f64::NAN;
        assert!(matches!(train_gbdt(&data, &GbdtConfig::default()), Err(Error::Data(_))));
        let flat = Samples {
            grades: vec![0; 4],
            features: vec![vec![1.0]; 4],
            groups: vec![0..4],
        };
        assert!(matches!(train_gbdt(&flat, &GbdtConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn depth_one_layer_by_layer_matches_classic() {
        let data = separable();
        for loss in [LossKind::Pointwise, LossKind::Pairwise] {
            let base = GbdtConfig {
                n_trees: 4,
                max_depth: 1,
                loss,
                min_samples_leaf: 1,
                ..GbdtConfig::default()
            };
            let a = train_gbdt(&data, &GbdtConfig { layer_by_layer: true, ..base.clone() }).unwrap();
            let b = train_gbdt(&data, &GbdtConfig { layer_by_layer: false, ..base }).unwrap();
            assert_eq!(a.trees, b.trees);
        }
    }

    #[test]
    fn serialization_errors() {
        let m = one_split_model(0.3);
        let bytes = m.to_bytes().unwrap();
        assert_eq!(GbdtModel::from_bytes(&bytes).unwrap(), m);
        assert!(matches!(GbdtModel::from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Format(_))));
        let future = String::from_utf8(bytes).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(
            GbdtModel::from_bytes(future.as_bytes()),
            Err(Error::UnsupportedVersion { found: 99, .. })
        ));
    }
}
