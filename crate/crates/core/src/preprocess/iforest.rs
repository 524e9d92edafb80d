//! Isolation forest scoring: an ensemble of random binary partition trees;
//! anomaly score s(x, n) = 2^(-E[h(x)] / c(n)) where h is the isolation path
//! length and c(n) the average unsuccessful-search path length of a BST.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PreprocessError;

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// c(n) = 2·H(n−1) − 2(n−1)/n with H(i) ≈ ln(i) + γ; 0 for n ≤ 1.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let n = n as f64;
    2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    trees: Vec<Node>,
    subsample_size: usize,
    height_limit: usize,
    dims: usize,
}

impl IsolationForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn height_limit(&self) -> usize {
        self.height_limit
    }

    /// Maximum split depth over all trees (leaves sit at split depth + 1).
    pub fn max_depth(&self) -> usize {
        fn depth(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        self.trees.iter().map(depth).max().unwrap_or(0)
    }

    fn path_length(&self, node: &Node, point: &[f64], depth: f64) -> f64 {
        match node {
            Node::Leaf { size } => depth + average_path_length(*size),
            Node::Split {
                feature,
                value,
                left,
                right,
            } => {
                if point[*feature] < *value {
                    self.path_length(left, point, depth + 1.0)
                } else {
                    self.path_length(right, point, depth + 1.0)
                }
            }
        }
    }

    /// Anomaly score in (0, 1); higher is more anomalous.
    pub fn score(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.dims, "point dimension mismatch");
        let mean_path = self
            .trees
            .iter()
            .map(|t| self.path_length(t, point, 0.0))
            .sum::<f64>()
            / self.trees.len() as f64;
        2f64.powf(-mean_path / average_path_length(self.subsample_size))
    }
}

/// Method form of [`IsolationForest::score`].
pub fn iforest_score(forest: &IsolationForest, point: &[f64]) -> f64 {
    forest.score(point)
}

fn all_identical(points: &[Vec<f64>], idxs: &[usize]) -> bool {
    let Some((&first, rest)) = idxs.split_first() else {
        return true;
    };
    rest.iter().all(|&i| points[i] == points[first])
}

fn build_tree(
    points: &[Vec<f64>],
    idxs: Vec<usize>,
    depth: usize,
    height_limit: usize,
    rng: &mut ChaCha8Rng,
) -> Node {
    if depth >= height_limit || idxs.len() <= 1 || all_identical(points, &idxs) {
        return Node::Leaf { size: idxs.len() };
    }
    let dims = points[idxs[0]].len();
    // Splittable features only: a feature constant over this partition
    // cannot separate anything.
    let splittable: Vec<(usize, f64, f64)> = (0..dims)
        .filter_map(|f| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &i in &idxs {
                min = min.min(points[i][f]);
                max = max.max(points[i][f]);
            }
            (min < max).then_some((f, min, max))
        })
        .collect();
    if splittable.is_empty() {
        return Node::Leaf { size: idxs.len() };
    }
    let (feature, min, max) = splittable[rng.random_range(0..splittable.len())];
    let mut value = rng.random_range(min..max);
    if value <= min {
        value = (min + max) / 2.0;
    }
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idxs.into_iter().partition(|&i| points[i][feature] < value);
    Node::Split {
        feature,
        value,
        left: Box::new(build_tree(points, left_idx, depth + 1, height_limit, rng)),
        right: Box::new(build_tree(points, right_idx, depth + 1, height_limit, rng)),
    }
}

/// Fits `n_trees` isolation trees, each on a `psi`-subsample (or all points
/// when fewer are available). Deterministic under a fixed seed.
pub fn iforest_fit(
    points: &[Vec<f64>],
    psi: usize,
    n_trees: usize,
    seed: u64,
) -> Result<IsolationForest, PreprocessError> {
    if psi < 2 {
        return Err(PreprocessError::InvalidParam("psi must be >= 2".into()));
    }
    if n_trees < 1 {
        return Err(PreprocessError::InvalidParam("n_trees must be >= 1".into()));
    }
    if points.len() < 2 {
        return Err(PreprocessError::DegenerateData);
    }
    let dims = points[0].len();
    if points.iter().any(|p| p.len() != dims) {
        return Err(PreprocessError::InvalidParam(
            "feature vectors have unequal lengths".into(),
        ));
    }
    let all: Vec<usize> = (0..points.len()).collect();
    if all_identical(points, &all) {
        return Err(PreprocessError::DegenerateData);
    }

    let subsample_size = psi.min(points.len());
    let height_limit = (subsample_size as f64).log2().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_trees)
        .map(|_| {
            let idxs: Vec<usize> = if subsample_size == points.len() {
                all.clone()
            } else {
                let mut chosen: Vec<usize> = sample(&mut rng, points.len(), subsample_size)
                    .into_iter()
                    .collect();
                chosen.sort_unstable();
                chosen
            };
            build_tree(points, idxs, 0, height_limit, &mut rng)
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size,
        height_limit,
        dims,
    })
}
