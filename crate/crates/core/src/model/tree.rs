use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Binary regression/classification tree in a flat node arena. Node 0 is the
/// root; a row goes left when `x[feature] <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
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

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Index of the leaf reached by `x`.
    pub fn apply(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { .. } => return at,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.apply(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("apply always stops at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Fits a tree minimizing weighted squared error of `target` over `rows`.
    ///
    /// `rows` may repeat indices (bootstrap samples); each repeat counts once
    /// toward `min_samples_split` and carries the row's weight again. For 0/1
    /// targets the weighted squared error is half the weighted Gini impurity,
    /// so both criteria choose the same splits.
    pub fn fit<R: Rng>(
        x: &[Vec<f64>],
        target: &[f64],
        weights: &[f64],
        rows: Vec<usize>,
        params: &TreeParams,
        rng: &mut R,
    ) -> Tree {
        let width = x.first().map_or(0, Vec::len);
        let mut nodes = Vec::new();
        let mut stack = vec![(rows, 0usize, None::<(usize, bool)>)];
        while let Some((rows, depth, parent)) = stack.pop() {
            let id = nodes.len();
            if let Some((p, is_left)) = parent {
                if let Node::Split { left, right, .. } = &mut nodes[p] {
                    if is_left {
                        *left = id;
                    } else {
                        *right = id;
                    }
                }
            }
            let (w_sum, wy_sum) = rows.iter().fold((0.0, 0.0), |(a, b), &i| {
                (a + weights[i], b + weights[i] * target[i])
            });
            let value = wy_sum / w_sum;
            let pure = rows.iter().all(|&i| target[i] == target[rows[0]]);
            let stop = pure
                || rows.len() < params.min_samples_split.max(2)
                || params.max_depth.is_some_and(|d| depth >= d);
            let split = if stop {
                None
            } else {
                let features: Vec<usize> = match params.max_features {
                    Some(k) if k < width => {
                        let mut f = index::sample(rng, width, k).into_vec();
                        f.sort_unstable();
                        f
                    }
                    _ => (0..width).collect(),
                };
                best_split(x, target, weights, &rows, &features, w_sum, wy_sum)
            };
            match split {
                None => nodes.push(Node::Leaf { value }),
                Some((feature, threshold)) => {
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        rows.into_iter().partition(|&i| x[i][feature] <= threshold);
                    nodes.push(Node::Split {
                        feature,
                        threshold,
                        left: 0,
                        right: 0,
                    });
                    // Right pushed first so the left subtree is numbered first.
                    stack.push((right, depth + 1, Some((id, false))));
                    stack.push((left, depth + 1, Some((id, true))));
                }
            }
        }
        Tree { nodes }
    }
}

/// Best `(feature, threshold)` by weighted squared-error reduction, or `None`
/// when no split improves on the parent.
fn best_split(
    x: &[Vec<f64>],
    target: &[f64],
    weights: &[f64],
    rows: &[usize],
    features: &[usize],
    w_sum: f64,
    wy_sum: f64,
) -> Option<(usize, f64)> {
    // Maximizing S_L^2/W_L + S_R^2/W_R is equivalent to minimizing child SSE.
    let parent_score = wy_sum * wy_sum / w_sum;
    let mut best_score = parent_score + 1e-12 * parent_score.abs().max(w_sum);
    let mut best = None;
    let mut order = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let (mut wl, mut sl) = (0.0, 0.0);
        for t in 0..order.len() - 1 {
            let i = order[t];
            wl += weights[i];
            sl += weights[i] * target[i];
            let lo = x[i][f];
            let hi = x[order[t + 1]][f];
            if lo == hi {
                continue;
            }
            let (wr, sr) = (w_sum - wl, wy_sum - sl);
            if wl <= 0.0 || wr <= 0.0 {
                continue;
            }
            let score = sl * sl / wl + sr * sr / wr;
            if score > best_score {
                best_score = score;
                let mid = lo + (hi - lo) / 2.0;
                best = Some((f, if mid < hi { mid } else { lo }));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(depth: Option<usize>) -> TreeParams {
        TreeParams {
            max_depth: depth,
            min_samples_split: 2,
            max_features: None,
        }
    }

    #[test]
    fn single_threshold_recovered() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| f64::from(u8::from(i >= 6))).collect();
        let w = vec![1.0; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = Tree::fit(&x, &y, &w, (0..10).collect(), &params(None), &mut rng);
        assert_eq!(tree.depth(), 1);
        assert_eq!(
            tree.nodes[0],
            Node::Split {
                feature: 0,
                threshold: 5.5,
                left: 1,
                right: 2
            }
        );
        for (row, t) in x.iter().zip(&y) {
            assert_eq!(tree.predict(row), *t);
        }
    }

    #[test]
    fn depth_limit_and_weighted_leaf_values() {
        let x = vec![vec![0.0], vec![0.0], vec![1.0]];
        let y = vec![0.0, 1.0, 1.0];
        let w = vec![3.0, 1.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stump = Tree::fit(&x, &y, &w, vec![0, 1, 2], &params(Some(0)), &mut rng);
        assert_eq!(stump.nodes, vec![Node::Leaf { value: 0.4 }]);
        let full = Tree::fit(&x, &y, &w, vec![0, 1, 2], &params(None), &mut rng);
        assert_eq!(full.predict(&[0.0]), 0.25);
        assert_eq!(full.predict(&[1.0]), 1.0);
    }

    #[test]
    fn constant_features_give_a_leaf() {
        let x = vec![vec![1.0, 2.0]; 4];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = Tree::fit(&x, &y, &[1.0; 4], (0..4).collect(), &params(None), &mut rng);
        assert_eq!(tree.nodes, vec![Node::Leaf { value: 0.5 }]);
    }
}
