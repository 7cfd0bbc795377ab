//! Bagged ensemble of regression trees.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tree::{RegressionTree, TreeParams};
use super::FeatureVector;
use crate::rng::stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features scored per split.
    pub max_features: usize,
    /// Draw a bootstrap sample per tree; when false every tree sees all rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 10,
            min_samples_leaf: 2,
            max_features: 3,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn with_size(n_trees: usize, max_depth: usize) -> Self {
        Self {
            n_trees,
            max_depth,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "n_trees, max_depth and min_samples_leaf must be positive".into(),
            ));
        }
        if self.max_features == 0 || self.max_features > super::N_FEATURES {
            return Err(Error::Config(format!(
                "max_features must be in 1..={}",
                super::N_FEATURES
            )));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    params: ForestParams,
    training_seed: u64,
    trees: Vec<RegressionTree>,
}

impl TreeEnsemble {
    /// Fit on `(x, y)` pairs. Tree `i` draws from its own stream of `seed`,
    /// so parallel and sequential training give identical models.
    pub fn fit(xs: &[FeatureVector], ys: &[f64], params: ForestParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if xs.is_empty() {
            return Err(Error::Data("cannot fit on an empty dataset".into()));
        }
        if xs.len() != ys.len() {
            return Err(Error::Invariant("feature and target lengths differ".into()));
        }
        if let Some(i) = ys.iter().position(|y| !y.is_finite()) {
            return Err(Error::Data(format!("non-finite target at row {i}")));
        }
        if let Some(i) = xs.iter().position(|x| x.0.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data(format!("non-finite feature at row {i}")));
        }
        let fit_one = |i: usize| {
            let mut rng = stream(seed, i as u64);
            let n = xs.len();
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            RegressionTree::fit(xs, ys, sample, params.tree_params(), &mut rng)
        };
        #[cfg(feature = "parallel")]
        let trees = {
            use rayon::prelude::*;
            (0..params.n_trees).into_par_iter().map(fit_one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let trees = (0..params.n_trees).map(fit_one).collect();
        Ok(Self {
            params,
            training_seed: seed,
            trees,
        })
    }

    /// Assemble an ensemble from already-built trees.
    pub fn from_trees(params: ForestParams, training_seed: u64, trees: Vec<RegressionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Invariant("ensemble needs at least one tree".into()));
        }
        Ok(Self {
            params: ForestParams {
                n_trees: trees.len(),
                ..params
            },
            training_seed,
            trees,
        })
    }

    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn per_tree_predictions(&self, x: &FeatureVector) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn training_seed(&self) -> u64 {
        self.training_seed
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn row(qp: f64, r: f64) -> FeatureVector {
        FeatureVector([30.0, 10.0, 100.0, r, qp])
    }

    #[test]
    fn constant_target_predicts_constant() {
        let xs: Vec<_> = (0..40).map(|i| row(i as f64, 360.0 + i as f64)).collect();
        let ys = vec![7.0; 40];
        let m = TreeEnsemble::fit(&xs, &ys, ForestParams::with_size(10, 5), 1).unwrap();
        for x in &xs {
            assert_eq!(m.predict(x), 7.0);
        }
        assert_eq!(m.predict(&row(1000.0, 5.0)), 7.0);
    }

    #[test]
    fn single_row_predicts_its_target() {
        let m = TreeEnsemble::fit(&[row(30.0, 720.0)], &[3.25], ForestParams::default(), 2).unwrap();
        assert_eq!(m.predict(&row(30.0, 720.0)), 3.25);
        assert_eq!(m.predict(&row(-5.0, 1.0)), 3.25);
    }

    #[test]
    fn ensemble_mean_of_two_trees() {
        let m = TreeEnsemble::from_trees(
            ForestParams::default(),
            0,
            vec![RegressionTree::leaf(4.0), RegressionTree::leaf(6.0)],
        )
        .unwrap();
        assert_eq!(m.predict(&row(1.0, 1.0)), 5.0);
        assert_eq!(m.per_tree_predictions(&row(1.0, 1.0)), vec![4.0, 6.0]);
        assert_eq!(m.params().n_trees, 2);
    }

    #[test]
    fn one_unlimited_tree_memorises_training_points() {
        let mut rng = seeded(5);
        let xs: Vec<_> = (0..200)
            .map(|_| FeatureVector(std::array::from_fn(|_| rng.random_range(0.0..100.0))))
            .collect();
        let ys: Vec<_> = (0..200).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = ForestParams {
            n_trees: 1,
            max_depth: 1000,
            min_samples_leaf: 1,
            max_features: 5,
            bootstrap: false,
        };
        let m = TreeEnsemble::fit(&xs, &ys, p, 9).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(m.predict(x), *y);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let p = ForestParams::default();
        assert!(matches!(TreeEnsemble::fit(&[], &[], p, 0), Err(Error::Data(_))));
        assert!(matches!(
            TreeEnsemble::fit(&[row(1.0, 1.0)], &[f64::NAN], p, 0),
            Err(Error::Data(_))
        ));
        let bad = ForestParams { n_trees: 0, ..p };
        assert!(matches!(
            TreeEnsemble::fit(&[row(1.0, 1.0)], &[1.0], bad, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = seeded(8);
        let xs: Vec<_> = (0..300)
            .map(|_| FeatureVector(std::array::from_fn(|_| rng.random_range(0.0..10.0))))
            .collect();
        let ys: Vec<_> = xs.iter().map(|x| x.0[0] * x.0[1]).collect();
        let p = ForestParams::with_size(20, 6);
        let a = TreeEnsemble::fit(&xs, &ys, p, 77).unwrap();
        let b = TreeEnsemble::fit(&xs, &ys, p, 77).unwrap();
        assert_eq!(a, b);
        let c = TreeEnsemble::fit(&xs, &ys, p, 78).unwrap();
        assert_ne!(a, c);
    }
}
