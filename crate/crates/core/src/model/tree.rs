//! Histogram-binned CART trees shared by the forest and the booster.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Per-feature cut points; bin `b` holds values in `(edges[b-1], edges[b]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    pub edges: Vec<Vec<f64>>,
}

/// Column-major bin codes.
pub struct BinnedMatrix {
    pub cols: Vec<Vec<u8>>,
    pub n_bins: Vec<usize>,
    pub n_rows: usize,
}

impl Binner {
    pub fn fit(x: &[Vec<f64>], max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, 256);
        let d = x.first().map_or(0, |r| r.len());
        let edges = (0..d)
            .map(|j| {
                let mut col: Vec<f64> = x.iter().map(|r| r[j]).collect();
                col.sort_by(f64::total_cmp);
                col.dedup();
                if col.len() <= max_bins {
                    col.pop();
                    return col;
                }
                let mut e: Vec<f64> = Vec::with_capacity(max_bins);
                for q in 1..max_bins {
                    let v = col[q * col.len() / max_bins];
                    if e.last().map_or(true, |&l| v > l) {
                        e.push(v);
                    }
                }
                e
            })
            .collect();
        Self { edges }
    }

    pub fn bin(&self, j: usize, v: f64) -> u8 {
        self.edges[j].partition_point(|&e| e < v) as u8
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> BinnedMatrix {
        let cols = (0..self.edges.len())
            .map(|j| x.iter().map(|r| self.bin(j, r[j])).collect())
            .collect();
        BinnedMatrix {
            cols,
            n_bins: self.edges.iter().map(|e| e.len() + 1).collect(),
            n_rows: x.len(),
        }
    }

    /// Real-valued threshold for "bins ≤ b go left".
    pub fn threshold(&self, j: usize, b: usize) -> f64 {
        self.edges[j][b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_value(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features sampled per split; `None` means all.
    pub max_features: Option<usize>,
}

struct Task {
    node: usize,
    lo: usize,
    hi: usize,
    depth: usize,
}

fn partition(idx: &mut [usize], col: &[u8], bin: u8) -> usize {
    let mut left: Vec<usize> = Vec::with_capacity(idx.len());
    let mut right: Vec<usize> = Vec::with_capacity(idx.len());
    for &i in idx.iter() {
        if col[i] <= bin {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    let n = left.len();
    idx[..n].copy_from_slice(&left);
    idx[n..].copy_from_slice(&right);
    n
}

fn candidate_features<R: Rng>(d: usize, k: Option<usize>, rng: &mut R) -> Vec<usize> {
    match k {
        Some(k) if k < d => {
            let mut f = sample(rng, d, k).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..d).collect(),
    }
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts
        .iter()
        .map(|c| (c / total) * (c / total))
        .sum::<f64>()
}

/// Gini classification tree on weighted rows. Leaves hold the weighted class
/// distribution. `importance` accumulates weighted impurity decrease.
#[allow(clippy::too_many_arguments)]
pub fn fit_classification_tree<R: Rng>(
    binner: &Binner,
    data: &BinnedMatrix,
    labels: &[usize],
    weights: &[f64],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut R,
    importance: &mut [f64],
) -> Tree {
    let mut idx: Vec<usize> = (0..data.n_rows).filter(|&i| weights[i] > 0.0).collect();
    let mut nodes = vec![TreeNode::Leaf { value: vec![] }];
    let mut stack = vec![Task {
        node: 0,
        lo: 0,
        hi: idx.len(),
        depth: 0,
    }];
    let d = data.cols.len();
    while let Some(t) = stack.pop() {
        let rows = &idx[t.lo..t.hi];
        let mut counts = vec![0.0; n_classes];
        for &i in rows {
            counts[labels[i]] += weights[i];
        }
        let total: f64 = counts.iter().sum();
        let leaf_value: Vec<f64> = if total > 0.0 {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / n_classes as f64; n_classes]
        };
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = params.max_depth.is_some_and(|m| t.depth >= m);
        if pure || depth_done || rows.len() < 2 * params.min_samples_leaf.max(1) {
            nodes[t.node] = TreeNode::Leaf { value: leaf_value };
            continue;
        }
        let parent_impurity = total * gini(&counts, total);
        let mut best: Option<(f64, usize, usize)> = None;
        for f in candidate_features(d, params.max_features, rng) {
            let nb = data.n_bins[f];
            if nb < 2 {
                continue;
            }
            let col = &data.cols[f];
            let mut hist = vec![0.0; nb * n_classes];
            let mut n_hist = vec![0usize; nb];
            for &i in rows {
                let b = col[i] as usize;
                hist[b * n_classes + labels[i]] += weights[i];
                n_hist[b] += 1;
            }
            let mut left = vec![0.0; n_classes];
            let mut n_left = 0usize;
            for b in 0..nb - 1 {
                n_left += n_hist[b];
                for k in 0..n_classes {
                    left[k] += hist[b * n_classes + k];
                }
                if n_hist[b] == 0 && b > 0 {
                    continue;
                }
                let n_right = rows.len() - n_left;
                if n_left < params.min_samples_leaf.max(1)
                    || n_right < params.min_samples_leaf.max(1)
                {
                    continue;
                }
                let wl: f64 = left.iter().sum();
                let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let wr = total - wl;
                let gain = parent_impurity - wl * gini(&left, wl) - wr * gini(&right, wr);
                if best.map_or(true, |(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, f, b));
                }
            }
        }
        match best {
            Some((gain, f, b)) if gain > 1e-12 => {
                importance[f] += gain;
                let n_left = partition(&mut idx[t.lo..t.hi], &data.cols[f], b as u8);
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(TreeNode::Leaf { value: vec![] });
                nodes.push(TreeNode::Leaf { value: vec![] });
                nodes[t.node] = TreeNode::Split {
                    feature: f,
                    threshold: binner.threshold(f, b),
                    left: l,
                    right: r,
                };
                stack.push(Task {
                    node: r,
                    lo: t.lo + n_left,
                    hi: t.hi,
                    depth: t.depth + 1,
                });
                stack.push(Task {
                    node: l,
                    lo: t.lo,
                    hi: t.lo + n_left,
                    depth: t.depth + 1,
                });
            }
            _ => nodes[t.node] = TreeNode::Leaf { value: leaf_value },
        }
    }
    Tree { nodes }
}

/// Second-order regression tree: leaves hold `-scale * G / (H + lambda)`.
#[allow(clippy::too_many_arguments)]
pub fn fit_newton_tree(
    binner: &Binner,
    data: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    max_depth: usize,
    min_child_weight: f64,
    lambda: f64,
    scale: f64,
) -> Tree {
    let mut idx: Vec<usize> = (0..data.n_rows).collect();
    let mut nodes = vec![TreeNode::Leaf { value: vec![] }];
    let mut stack = vec![Task {
        node: 0,
        lo: 0,
        hi: idx.len(),
        depth: 0,
    }];
    let score = |g: f64, h: f64| g * g / (h + lambda);
    while let Some(t) = stack.pop() {
        let rows = &idx[t.lo..t.hi];
        let g_tot: f64 = rows.iter().map(|&i| grad[i]).sum();
        let h_tot: f64 = rows.iter().map(|&i| hess[i]).sum();
        let leaf = vec![-scale * g_tot / (h_tot + lambda)];
        if t.depth >= max_depth || rows.len() < 2 {
            nodes[t.node] = TreeNode::Leaf { value: leaf };
            continue;
        }
        let parent = score(g_tot, h_tot);
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, col) in data.cols.iter().enumerate() {
            let nb = data.n_bins[f];
            if nb < 2 {
                continue;
            }
            let mut gh = vec![(0.0, 0.0); nb];
            for &i in rows {
                let e = &mut gh[col[i] as usize];
                e.0 += grad[i];
                e.1 += hess[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for (b, &(g, h)) in gh.iter().enumerate().take(nb - 1) {
                gl += g;
                hl += h;
                let hr = h_tot - hl;
                if hl < min_child_weight || hr < min_child_weight {
                    continue;
                }
                let gain = score(gl, hl) + score(g_tot - gl, hr) - parent;
                if best.map_or(true, |(bg, _, _)| gain > bg + 1e-12) {
                    best = Some((gain, f, b));
                }
            }
        }
        match best {
            Some((gain, f, b)) if gain > 1e-12 => {
                let n_left = partition(&mut idx[t.lo..t.hi], &data.cols[f], b as u8);
                if n_left == 0 || n_left == t.hi - t.lo {
                    nodes[t.node] = TreeNode::Leaf { value: leaf };
                    continue;
                }
                let (l, r) = (nodes.len(), nodes.len() + 1);
                nodes.push(TreeNode::Leaf { value: vec![] });
                nodes.push(TreeNode::Leaf { value: vec![] });
                nodes[t.node] = TreeNode::Split {
                    feature: f,
                    threshold: binner.threshold(f, b),
                    left: l,
                    right: r,
                };
                stack.push(Task {
                    node: r,
                    lo: t.lo + n_left,
                    hi: t.hi,
                    depth: t.depth + 1,
                });
                stack.push(Task {
                    node: l,
                    lo: t.lo,
                    hi: t.lo + n_left,
                    depth: t.depth + 1,
                });
            }
            _ => nodes[t.node] = TreeNode::Leaf { value: leaf },
        }
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn bins_agree_with_thresholds() {
        let x: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![((i * 37) % 101) as f64 * 0.5])
            .collect();
        let b = Binner::fit(&x, 16);
        assert!(b.edges[0].len() <= 15);
        for r in &x {
            let bin = b.bin(0, r[0]) as usize;
            if bin < b.edges[0].len() {
                assert!(r[0] <= b.threshold(0, bin));
            }
            if bin > 0 {
                assert!(r[0] > b.threshold(0, bin - 1));
            }
        }
    }

    #[test]
    fn few_unique_values_get_exact_cuts() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 2.0, 3.0].iter().map(|&v| vec![v]).collect();
        assert_eq!(Binner::fit(&x, 64).edges[0], vec![1.0, 2.0]);
    }

    #[test]
    fn stump_separates_threshold_labels() {
        let x: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64])
            .collect();
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 40)).collect();
        let binner = Binner::fit(&x, 256);
        let data = binner.transform(&x);
        let mut imp = vec![0.0; 2];
        let params = TreeParams {
            max_depth: Some(1),
            min_samples_leaf: 1,
            max_features: None,
        };
        let tree = fit_classification_tree(
            &binner,
            &data,
            &y,
            &vec![1.0; 100],
            2,
            &params,
            &mut ChaCha8Rng::seed_from_u64(0),
            &mut imp,
        );
        assert_eq!(tree.depth(), 1);
        for (r, &l) in x.iter().zip(&y) {
            assert_eq!(tree.leaf_value(r)[l], 1.0);
        }
        assert!(imp[0] > 0.0 && imp[1] == 0.0);
    }

    #[test]
    fn newton_leaf_is_negative_mean_gradient_ratio() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let g = vec![1.0; 10];
        let h = vec![0.5; 10];
        let binner = Binner::fit(&x, 64);
        let tree = fit_newton_tree(&binner, &binner.transform(&x), &g, &h, 0, 1e-3, 0.0, 1.0);
        assert_eq!(tree.leaf_value(&[3.0]), &[-2.0]);
    }
}
