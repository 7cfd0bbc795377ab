//! Segment-level data splits and cross-validated hyperparameter search.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, ForestParams};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

const SPLIT_STREAM: u64 = 0x5B17;
const FOLD_STREAM: u64 = 0xF01D;

fn sorted_unique(ids: &[String]) -> Vec<String> {
    let mut v = ids.to_vec();
    v.sort();
    v.dedup();
    v
}

/// Seeded split of segment ids into train and test sets. The train share is
/// `round(train_frac * n)`, kept within `1..n` whenever `n >= 2`.
pub fn split_segments(ids: &[String], train_frac: f64, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::Config(format!("train fraction {train_frac} outside [0, 1]")));
    }
    let mut ids = sorted_unique(ids);
    if ids.is_empty() {
        return Err(Error::Data("no segments to split".into()));
    }
    ids.shuffle(&mut stream(seed, SPLIT_STREAM));
    let n = ids.len();
    let mut n_train = (train_frac * n as f64).round() as usize;
    if n >= 2 {
        n_train = n_train.clamp(1, n - 1);
    }
    let test = ids.split_off(n_train.min(n));
    let mut train = ids;
    train.sort();
    let mut test = test;
    test.sort();
    Ok((train, test))
}

/// Partition segment ids into `k` folds of near-equal size.
pub fn kfold_segments(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Config(format!("k_folds must be >= 2, got {k}")));
    }
    let mut ids = sorted_unique(ids);
    if ids.len() < k {
        return Err(Error::Data(format!("{} segments cannot fill {k} folds", ids.len())));
    }
    ids.shuffle(&mut stream(seed, FOLD_STREAM));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub n_trees: usize,
    pub max_depth: usize,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ForestParams,
    pub table: Vec<CvRow>,
}

/// k-fold cross-validation over `grid`; the winner has the lowest mean fold
/// RMSE, ties going to fewer trees and then to shallower trees.
pub fn grid_search(train: &Dataset, grid: &[ForestParams], k_folds: usize, seed: u64) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    for p in grid {
        p.validate()?;
    }
    let folds = kfold_segments(&train.segments(), k_folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds.len())
        .map(|i| {
            let rest: Vec<String> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .flat_map(|(_, f)| f.iter().cloned())
                .collect();
            (train.select(&rest), train.select(&folds[i]))
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    for (c, params) in grid.iter().enumerate() {
        let fold_rmse = splits
            .iter()
            .enumerate()
            .map(|(i, (fit_on, held))| {
                let model = fit_on.fit(*params, derive_seed(seed, (c * 1000 + i) as u64))?;
                Ok(held.evaluate(&model)?.rmse)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_rmse = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
        table.push(CvRow {
            n_trees: params.n_trees,
            max_depth: params.max_depth,
            fold_rmse,
            mean_rmse,
        });
    }
    let best_idx = (0..grid.len())
        .min_by(|&a, &b| {
            table[a]
                .mean_rmse
                .total_cmp(&table[b].mean_rmse)
                .then(grid[a].n_trees.cmp(&grid[b].n_trees))
                .then(grid[a].max_depth.cmp(&grid[b].max_depth))
        })
        .expect("grid is non-empty");
    Ok(GridSearchResult {
        best: grid[best_idx],
        table,
    })
}
