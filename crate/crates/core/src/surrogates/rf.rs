//! Random-forest regression with SMAC-style uncertainty: the predictive
//! variance is the spread of the per-tree predictions.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_set, FitError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfConfig {
    pub trees: usize,
    pub min_leaf_size: usize,
    /// Random thresholds tried per candidate coordinate.
    pub thresholds: usize,
}

impl Default for RfConfig {
    fn default() -> Self {
        RfConfig {
            trees: 64,
            min_leaf_size: 3,
            thresholds: 10,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    fn leaves(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(v) => Some(*v),
            _ => None,
        })
    }
}

struct Builder<'a, R: ?Sized> {
    x: &'a [Vec<f64>],
    z: &'a [f64],
    config: &'a RfConfig,
    candidates: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

/// Mean as an offset from the first value, exact for constant input.
fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut values = values.peekable();
    let first = *values.peek().expect("non-empty");
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v - first), n + 1));
    first + sum / n as f64
}

fn sse(z: &[f64], rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| z[i]).sum::<f64>() / n;
    rows.iter().map(|&i| (z[i] - mean).powi(2)).sum()
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mean = shifted_mean(rows.iter().map(|&i| self.z[i]));
        self.nodes.push(Node::Leaf(mean));
        self.nodes.len() - 1
    }

    fn build(&mut self, rows: Vec<usize>) -> usize {
        let min_leaf = self.config.min_leaf_size.max(1);
        let parent_sse = sse(self.z, &rows);
        if rows.len() < 2 * min_leaf || parent_sse <= 0.0 {
            return self.leaf(&rows);
        }
        let d = self.x[0].len();
        let features = index::sample(self.rng, d, self.candidates);
        let mut best: Option<(f64, usize, f64)> = None;
        for feature in features.iter() {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, &i| {
                (acc.0.min(self.x[i][feature]), acc.1.max(self.x[i][feature]))
            });
            if lo >= hi {
                continue;
            }
            for _ in 0..self.config.thresholds {
                let threshold = self.rng.random_range(lo..hi);
                let (left, right): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
                if left.len() < min_leaf || right.len() < min_leaf {
                    continue;
                }
                let gain = parent_sse - sse(self.z, &left) - sse(self.z, &right);
                if gain > 0.0 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(&rows);
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(f64::NAN));
        let left = self.build(left_rows);
        let right = self.build(right_rows);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

#[derive(Debug, Clone)]
pub struct RfModel {
    trees: Vec<Tree>,
    min_leaf_size: usize,
}

pub fn fit_rf<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    z: &[f64],
    config: &RfConfig,
    rng: &mut R,
) -> Result<RfModel, FitError> {
    check_training_set(x, z)?;
    let n = x.len();
    let d = x[0].len();
    let candidates = d.div_ceil(2).max(1).min(d);
    let mut trees = Vec::with_capacity(config.trees.max(1));
    for _ in 0..config.trees.max(1) {
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut builder = Builder {
            x,
            z,
            config,
            candidates,
            rng: &mut *rng,
            nodes: Vec::new(),
        };
        builder.build(rows);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(RfModel {
        trees,
        min_leaf_size: config.min_leaf_size,
    })
}

impl RfModel {
    /// Mean and population variance of the per-tree predictions.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let n = preds.len() as f64;
        let mean = shifted_mean(preds.iter().copied());
        let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (mean, var.max(0.0))
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn min_leaf_size(&self) -> usize {
        self.min_leaf_size
    }

    /// Every leaf value of every tree.
    pub fn leaf_values(&self) -> Vec<f64> {
        self.trees.iter().flat_map(Tree::leaves).collect()
    }

    /// A forest of single-leaf trees, one per value.
    pub fn from_constant_trees(values: &[f64]) -> Self {
        RfModel {
            trees: values
                .iter()
                .map(|&v| Tree {
                    nodes: vec![Node::Leaf(v)],
                })
                .collect(),
            min_leaf_size: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn constant_targets_give_constant_leaves() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64 / 29.0, 0.5]).collect();
        let m = fit_rf(&x, &[4.2; 30], &RfConfig::default(), &mut rng()).unwrap();
        assert_eq!(m.tree_count(), 64);
        assert!(m.leaf_values().iter().all(|&v| v == 4.2));
        assert_eq!(m.predict(&[0.3, 0.1]), (4.2, 0.0));
    }

    #[test]
    fn single_point_forest() {
        let m = fit_rf(&[vec![0.2]], &[-1.5], &RfConfig::default(), &mut rng()).unwrap();
        assert_eq!(m.leaf_values(), vec![-1.5; 64]);
    }

    #[test]
    fn learns_a_step() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 + 0.5) / 200.0]).collect();
        let z: Vec<f64> = x.iter().map(|v| (v[0] > 0.5) as u8 as f64).collect();
        let m = fit_rf(&x, &z, &RfConfig::default(), &mut rng()).unwrap();
        let (mut hits, mut total) = (0, 0);
        for i in 0..=1000 {
            let q = i as f64 / 1000.0;
            if (q - 0.5).abs() <= 0.1 {
                continue;
            }
            total += 1;
            let (mean, _) = m.predict(&[q]);
            if (mean > 0.5) == (q > 0.5) {
                hits += 1;
            }
        }
        assert!(hits as f64 / total as f64 >= 0.95, "{hits}/{total}");
    }

    #[test]
    fn variance_is_population_variance_of_trees() {
        let m = RfModel::from_constant_trees(&[1.0, 3.0]);
        assert_eq!(m.predict(&[0.0]), (2.0, 1.0));
        let single = RfModel::from_constant_trees(&[7.0]);
        assert_eq!(single.predict(&[0.9]).1, 0.0);
    }

    #[test]
    fn prediction_ignores_tree_order() {
        let a = RfModel::from_constant_trees(&[1.0, 2.0, 6.0]);
        let b = RfModel::from_constant_trees(&[6.0, 1.0, 2.0]);
        let (ma, va) = a.predict(&[0.5]);
        let (mb, vb) = b.predict(&[0.5]);
        assert!((ma - mb).abs() < 1e-12 && (va - vb).abs() < 1e-12);
    }

    #[test]
    fn fits_are_deterministic() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i * 7 % 40) as f64 / 40.0, (i * 13 % 40) as f64 / 40.0])
            .collect();
        let z: Vec<f64> = x.iter().map(|v| v[0] * v[0] - v[1]).collect();
        let a = fit_rf(&x, &z, &RfConfig::default(), &mut rng()).unwrap();
        let b = fit_rf(&x, &z, &RfConfig::default(), &mut rng()).unwrap();
        for q in [[0.1, 0.2], [0.7, 0.9]] {
            assert_eq!(a.predict(&q), b.predict(&q));
        }
    }
}
