//! CART trees: Gini classification trees for forests and second-order
//! regression trees for boosting.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes stored flat; node 0 is the root. Rows with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Best threshold per candidate feature.
    Best,
    /// One uniformly random threshold per candidate feature.
    Random,
}

pub struct ClassTreeParams {
    pub max_features: usize,
    pub max_depth: usize,
    pub mode: SplitMode,
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Fits a Gini tree on the rows listed in `rows` (repeats allowed, for
/// bootstrap samples). Leaves hold the positive fraction.
pub fn fit_class_tree(x: &[Vec<f64>], y: &[u8], rows: Vec<usize>, params: &ClassTreeParams, rng: &mut ChaCha8Rng) -> Tree {
    let d = x.first().map_or(0, Vec::len);
    let mut nodes = Vec::new();
    let mut stack = vec![(rows, 0usize, usize::MAX, false)];
    let mut features: Vec<usize> = (0..d).collect();
    while let Some((rows, depth, parent, is_left)) = stack.pop() {
        let id = nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        let n = rows.len() as f64;
        let pos = rows.iter().filter(|&&r| y[r] != 0).count() as f64;
        let leaf = Node::Leaf { value: pos / n };
        if pos == 0.0 || pos == n || rows.len() < 2 || depth >= params.max_depth {
            nodes.push(leaf);
            continue;
        }
        // Draw features without replacement; keep drawing past `max_features`
        // only while every drawn feature has been constant on this node.
        features.shuffle(rng);
        let mut best: Option<Candidate> = None;
        for (tried, &f) in features.iter().enumerate() {
            if tried >= params.max_features && best.is_some() {
                break;
            }
            let cand = match params.mode {
                SplitMode::Best => best_threshold(x, y, &rows, f),
                SplitMode::Random => random_threshold(x, y, &rows, f, rng),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        let Some(b) = best else {
            nodes.push(leaf);
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
        nodes.push(Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left: usize::MAX,
            right: usize::MAX,
        });
        stack.push((r, depth + 1, id, false));
        stack.push((l, depth + 1, id, true));
    }
    Tree { nodes }
}

fn best_threshold(x: &[Vec<f64>], y: &[u8], rows: &[usize], f: usize) -> Option<Candidate> {
    let mut v: Vec<(f64, u8)> = rows.iter().map(|&r| (x[r][f], y[r])).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = v.len() as f64;
    let total_pos = v.iter().filter(|p| p.1 != 0).count() as f64;
    let mut left_pos = 0.0;
    let mut best: Option<Candidate> = None;
    for i in 0..v.len() - 1 {
        left_pos += f64::from(v[i].1 != 0);
        if v[i].0 == v[i + 1].0 {
            continue;
        }
        let nl = (i + 1) as f64;
        let nr = n - nl;
        let imp = (nl * gini(left_pos, nl) + nr * gini(total_pos - left_pos, nr)) / n;
        if best.as_ref().is_none_or(|b| imp < b.impurity) {
            let t = v[i].0 + (v[i + 1].0 - v[i].0) / 2.0;
            // Guard against the midpoint rounding up to the right value.
            let t = if t >= v[i + 1].0 { v[i].0 } else { t };
            best = Some(Candidate {
                feature: f,
                threshold: t,
                impurity: imp,
            });
        }
    }
    best
}

fn random_threshold(x: &[Vec<f64>], y: &[u8], rows: &[usize], f: usize, rng: &mut ChaCha8Rng) -> Option<Candidate> {
    let (lo, hi) = rows
        .iter()
        .map(|&r| x[r][f])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo >= hi {
        return None;
    }
    let mut t = rng.gen_range(lo..hi);
    if t >= hi {
        t = lo;
    }
    let (mut nl, mut pl, mut nr, mut pr) = (0.0, 0.0, 0.0, 0.0);
    for &r in rows {
        let p = f64::from(y[r] != 0);
        if x[r][f] <= t {
            nl += 1.0;
            pl += p;
        } else {
            nr += 1.0;
            pr += p;
        }
    }
    Some(Candidate {
        feature: f,
        threshold: t,
        impurity: (nl * gini(pl, nl) + nr * gini(pr, nr)) / (nl + nr),
    })
}

/// Second-order regression tree on gradients `g` and hessians `h`; leaf
/// weight is `-G / (H + lambda)`.
pub fn fit_newton_tree(x: &[Vec<f64>], g: &[f64], h: &[f64], max_depth: usize, lambda: f64) -> Tree {
    let d = x.first().map_or(0, Vec::len);
    let mut nodes = Vec::new();
    let rows: Vec<usize> = (0..x.len()).collect();
    let mut stack = vec![(rows, 0usize, usize::MAX, false)];
    while let Some((rows, depth, parent, is_left)) = stack.pop() {
        let id = nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        let gs: f64 = rows.iter().map(|&r| g[r]).sum();
        let hs: f64 = rows.iter().map(|&r| h[r]).sum();
        let leaf = Node::Leaf { value: -gs / (hs + lambda) };
        if depth >= max_depth || rows.len() < 2 {
            nodes.push(leaf);
            continue;
        }
        let parent_score = gs * gs / (hs + lambda);
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..d {
            let mut v: Vec<(f64, usize)> = rows.iter().map(|&r| (x[r][f], r)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for i in 0..v.len() - 1 {
                gl += g[v[i].1];
                hl += h[v[i].1];
                if v[i].0 == v[i + 1].0 {
                    continue;
                }
                let (gr, hr) = (gs - gl, hs - hl);
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent_score;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    let t = v[i].0 + (v[i + 1].0 - v[i].0) / 2.0;
                    let t = if t >= v[i + 1].0 { v[i].0 } else { t };
                    best = Some((gain, f, t));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            nodes.push(leaf);
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][feature] <= threshold);
        nodes.push(Node::Split {
            feature,
            threshold,
            left: usize::MAX,
            right: usize::MAX,
        });
        stack.push((r, depth + 1, id, false));
        stack.push((l, depth + 1, id, true));
    }
    Tree { nodes }
}
