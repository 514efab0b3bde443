//! CART classification trees with Gini impurity and optional
//! reduced-error pruning.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_features: None,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Node {
    Leaf {
        counts: Vec<usize>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        counts: Vec<usize>,
    },
}

impl Node {
    fn counts(&self) -> &[usize] {
        match self {
            Node::Leaf { counts } | Node::Split { counts, .. } => counts,
        }
    }
}

/// Index of the largest count; ties go to the lower index.
pub(crate) fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

struct Builder<'a, R: Rng> {
    rows: &'a [Vec<f64>],
    labels: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &i in idx {
            c[self.labels[i]] += 1;
        }
        c
    }

    /// Best `(feature, threshold, weighted child impurity)` over the examined features.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.rows[idx[0]].len();
        let mut features: Vec<usize> = (0..d).collect();
        let limit = match self.params.max_features {
            Some(k) if k < d => {
                features.shuffle(self.rng);
                k.max(1)
            }
            _ => d,
        };
        let min_leaf = self.params.min_samples_leaf.max(1);
        let n = idx.len();
        let mut best: Option<(usize, f64, f64)> = None;
        let mut examined = 0;
        let mut order = idx.to_vec();
        for &f in &features {
            if examined >= limit && best.is_some() {
                break;
            }
            order.sort_by(|&a, &b| self.rows[a][f].total_cmp(&self.rows[b][f]));
            let lo = self.rows[order[0]][f];
            let hi = self.rows[order[n - 1]][f];
            if lo == hi {
                continue;
            }
            examined += 1;
            let mut left = vec![0; self.n_classes];
            let mut right = self.counts(&order);
            for pos in 0..n - 1 {
                let lab = self.labels[order[pos]];
                left[lab] += 1;
                right[lab] -= 1;
                let (a, b) = (self.rows[order[pos]][f], self.rows[order[pos + 1]][f]);
                let n_left = pos + 1;
                if a == b || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let score =
                    (n_left as f64 * gini(&left, n_left) + (n - n_left) as f64 * gini(&right, n - n_left)) / n as f64;
                if best.is_none_or(|(_, _, s)| score < s) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((f, threshold, score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_deep = self.params.max_depth.is_some_and(|m| depth >= m);
        if pure || too_deep || idx.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&idx) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.rows[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
            counts,
        };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on `rows[idx]`; `idx` may repeat rows (bootstrap samples).
    pub fn fit<R: Rng>(
        rows: &[Vec<f64>],
        labels: &[usize],
        idx: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rng: &mut R,
    ) -> Self {
        assert!(!idx.is_empty(), "cannot grow a tree on zero rows");
        let mut b = Builder {
            rows,
            labels,
            n_classes,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.grow(idx.to_vec(), 0);
        Self {
            nodes: b.nodes,
            n_classes,
        }
    }

    fn leaf_for(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_one(&self, x: &[f64]) -> usize {
        majority(self.nodes[self.leaf_for(x)].counts())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Reduced-error pruning: bottom-up, a subtree becomes a leaf whenever
    /// that does not increase the misclassification count on the held-out
    /// rows reaching it.
    pub fn prune_reduced_error(&mut self, rows: &[Vec<f64>], labels: &[usize], held_out: &[usize]) {
        self.prune_node(0, rows, labels, held_out);
        self.compact();
    }

    fn prune_node(&mut self, id: usize, rows: &[Vec<f64>], labels: &[usize], idx: &[usize]) -> usize {
        let as_leaf = {
            let m = majority(self.nodes[id].counts());
            idx.iter().filter(|&&i| labels[i] != m).count()
        };
        let (feature, threshold, left, right) = match &self.nodes[id] {
            Node::Leaf { .. } => return as_leaf,
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => (*feature, *threshold, *left, *right),
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][feature] <= threshold);
        let subtree = self.prune_node(left, rows, labels, &l) + self.prune_node(right, rows, labels, &r);
        if as_leaf <= subtree {
            let counts = self.nodes[id].counts().to_vec();
            self.nodes[id] = Node::Leaf { counts };
            as_leaf
        } else {
            subtree
        }
    }

    /// Drops nodes no longer reachable from the root.
    fn compact(&mut self) {
        let mut out: Vec<Node> = Vec::new();
        fn copy(src: &[Node], id: usize, out: &mut Vec<Node>) -> usize {
            let new_id = out.len();
            out.push(src[id].clone());
            if let Node::Split { left, right, .. } = &src[id] {
                let (l, r) = (*left, *right);
                let nl = copy(src, l, out);
                let nr = copy(src, r, out);
                if let Node::Split { left, right, .. } = &mut out[new_id] {
                    *left = nl;
                    *right = nr;
                }
            }
            new_id
        }
        copy(&self.nodes, 0, &mut out);
        self.nodes = out;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fit_all(rows: &[Vec<f64>], labels: &[usize], n_classes: usize) -> DecisionTree {
        let idx: Vec<usize> = (0..rows.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        DecisionTree::fit(rows, labels, &idx, n_classes, &TreeParams::default(), &mut rng)
    }

    #[test]
    fn learns_threshold() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 6)).collect();
        let t = fit_all(&rows, &labels, 2);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict_one(&[5.4]), 0);
        assert_eq!(t.predict_one(&[5.6]), 1);
    }

    #[test]
    fn fits_training_data_exactly() {
        // xor needs depth 2
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let labels = vec![0, 1, 1, 0];
        let t = fit_all(&rows, &labels, 2);
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(t.predict_one(r), l);
        }
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(majority(&[2, 2, 1]), 0);
        assert_eq!(majority(&[0, 3, 3]), 1);
    }

    #[test]
    fn pruning_removes_noise_split() {
        // one mislabeled point forces an extra split that held-out data does not support
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let mut labels: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        labels[3] = 1;
        let train: Vec<usize> = (0..20).step_by(2).chain([3]).collect();
        let held: Vec<usize> = (1..20).step_by(2).filter(|&i| i != 3).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut t = DecisionTree::fit(&rows, &labels, &train, 2, &TreeParams::default(), &mut rng);
        let before = t.n_leaves();
        t.prune_reduced_error(&rows, &labels, &held);
        assert!(t.n_leaves() < before);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.n_nodes(), 3);
        assert_eq!(t.predict_one(&[3.0]), 0);
        assert_eq!(t.predict_one(&[15.0]), 1);
    }
}
