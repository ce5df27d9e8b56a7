//! CART regression trees grown by exact squared-error reduction.
//!
//! Features are sorted once per training matrix ([`ColumnData`]); each tree
//! keeps one sorted row list per feature and stably partitions the lists as
//! nodes split, so a level costs `O(rows * features)` without re-sorting.
//! Rows carry integer multiplicities, which is how bootstrap resamples and
//! boosting subsamples are expressed.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::rng::Rng;

/// Number of features examined at each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Count(c) => c,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until another stopping rule applies.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: None, min_samples_split: 2, min_samples_leaf: 1, max_features: MaxFeatures::All }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.min_samples_split < 2 {
            return Err(MlError::InvalidConfig("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(MlError::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(MlError::InvalidConfig("max_features count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted squared-error reduction achieved by this split.
        gain: f64,
    },
}

/// Arena of nodes; index 0 is the root. `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Adds each split's gain to `acc[feature]`.
    pub fn accumulate_gains(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = *n {
                acc[feature] += gain;
            }
        }
    }

    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

/// Column-major copy of a training matrix with per-feature sort orders.
#[derive(Debug, Clone)]
pub struct ColumnData {
    pub n_rows: usize,
    pub cols: Vec<Vec<f64>>,
    /// Row ids sorted by value (ties by row id), one list per feature.
    order: Vec<Vec<u32>>,
}

impl ColumnData {
    pub fn new(x: &[Vec<f64>]) -> Result<Self, MlError> {
        let n_rows = x.len();
        if n_rows == 0 {
            return Err(MlError::Empty);
        }
        let width = x[0].len();
        if let Some(r) = x.iter().find(|r| r.len() != width) {
            return Err(MlError::Width { expected: width, found: r.len() });
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MlError::NonFinite);
        }
        let cols: Vec<Vec<f64>> = (0..width).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..n_rows as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Ok(ColumnData { n_rows, cols, order })
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

struct Builder<'a> {
    data: &'a ColumnData,
    y: &'a [f64],
    w: &'a [u32],
    params: TreeParams,
    /// Per-feature sorted row lists; a node owns the same range in each.
    lists: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

struct Stats {
    w: f64,
    wy: f64,
    y_min: f64,
    y_max: f64,
}

impl Builder<'_> {
    fn stats(&self, start: usize, end: usize) -> Stats {
        let mut s = Stats { w: 0.0, wy: 0.0, y_min: f64::INFINITY, y_max: f64::NEG_INFINITY };
        for &r in &self.lists[0][start..end] {
            let (y, w) = (self.y[r as usize], self.w[r as usize] as f64);
            s.w += w;
            s.wy += w * y;
            s.y_min = s.y_min.min(y);
            s.y_max = s.y_max.max(y);
        }
        s
    }

    fn best_split(&self, start: usize, end: usize, stats: &Stats, features: &[usize]) -> Option<Best> {
        let min_leaf = self.params.min_samples_leaf as f64;
        let parent = stats.wy * stats.wy / stats.w;
        let mut best: Option<Best> = None;
        for &f in features {
            let col = &self.data.cols[f];
            let list = &self.lists[f][start..end];
            let (mut lw, mut lwy) = (0.0, 0.0);
            for i in 0..list.len() - 1 {
                let r = list[i] as usize;
                let w = self.w[r] as f64;
                lw += w;
                lwy += w * self.y[r];
                let (a, b) = (col[r], col[list[i + 1] as usize]);
                if a == b {
                    continue;
                }
                let rw = stats.w - lw;
                if lw < min_leaf || rw < min_leaf {
                    continue;
                }
                let rwy = stats.wy - lwy;
                let gain = lwy * lwy / lw + rwy * rwy / rw - parent;
                if gain > 0.0 && best.as_ref().is_none_or(|bst| gain > bst.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best { feature: f, threshold, gain, n_left: i + 1 });
                }
            }
        }
        best
    }

    fn partition(&mut self, start: usize, end: usize, best: &Best) {
        let col = &self.data.cols[best.feature];
        for &r in &self.lists[best.feature][start..end] {
            self.goes_left[r as usize] = col[r as usize] <= best.threshold;
        }
        for list in &mut self.lists {
            self.scratch.clear();
            let mut k = start;
            for i in start..end {
                let r = list[i];
                if self.goes_left[r as usize] {
                    list[k] = r;
                    k += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            list[k..end].copy_from_slice(&self.scratch);
        }
    }

    fn grow(&mut self, rng: &mut Rng) {
        let n_features = self.data.n_features();
        let m = self.params.max_features.resolve(n_features);
        let all: Vec<usize> = (0..n_features).collect();
        // (node index, start, end, depth)
        let mut stack = vec![(0usize, 0usize, self.lists[0].len(), 0usize)];
        self.nodes.push(Node::Leaf { value: 0.0 });
        while let Some((id, start, end, depth)) = stack.pop() {
            let stats = self.stats(start, end);
            let value = stats.wy / stats.w;
            self.nodes[id] = Node::Leaf { value };
            let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
            if !depth_ok || stats.w < self.params.min_samples_split as f64 || stats.y_min == stats.y_max {
                continue;
            }
            let sampled;
            let features: &[usize] = if m < n_features {
                let mut s = index::sample(rng, n_features, m).into_vec();
                s.sort_unstable();
                sampled = s;
                &sampled
            } else {
                &all
            };
            let Some(best) = self.best_split(start, end, &stats, features) else {
                continue;
            };
            self.partition(start, end, &best);
            let mid = start + best.n_left;
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf { value: 0.0 });
            self.nodes.push(Node::Leaf { value: 0.0 });
            self.nodes[id] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                left,
                right: left + 1,
                gain: best.gain,
            };
            // Right first so the left subtree is expanded first.
            stack.push((left + 1, mid, end, depth + 1));
            stack.push((left, start, mid, depth + 1));
        }
    }
}

/// Grows one tree on the rows with nonzero multiplicity in `weights`.
pub fn fit_tree_weighted(
    data: &ColumnData,
    y: &[f64],
    weights: &[u32],
    params: TreeParams,
    rng: &mut Rng,
) -> Result<RegressionTree, MlError> {
    params.validate()?;
    if y.len() != data.n_rows || weights.len() != data.n_rows {
        return Err(MlError::Width { expected: data.n_rows, found: y.len().min(weights.len()) });
    }
    if !weights.iter().any(|&w| w > 0) {
        return Err(MlError::Empty);
    }
    let lists: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&r| weights[r as usize] > 0).collect())
        .collect();
    let mut b = Builder {
        data,
        y,
        w: weights,
        params,
        lists,
        goes_left: vec![false; data.n_rows],
        scratch: Vec::new(),
        nodes: Vec::new(),
    };
    b.grow(rng);
    Ok(RegressionTree { n_features: data.n_features(), nodes: b.nodes })
}

/// Grows one tree on all rows with unit weight.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: TreeParams, rng: &mut Rng) -> Result<RegressionTree, MlError> {
    let data = ColumnData::new(x)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MlError::NonFinite);
    }
    fit_tree_weighted(&data, y, &vec![1; x.len()], params, rng)
}
