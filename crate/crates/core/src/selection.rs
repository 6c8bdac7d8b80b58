//! Cross-validated grid search over ranks and the continuum parameter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cr::Gamma;
use crate::data::{CenteringMode, GroupedDataset};
use crate::error::{JicoError, Result};
use crate::fit::{fit, predict, FitOptions, InitStrategy, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::rng::Stream;

pub const DEFAULT_FOLDS: usize = 10;

/// One train/validation split.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: GroupedDataset,
    pub validation: GroupedDataset,
}

/// Splits every group into `folds` nearly equal parts after a seeded
/// shuffle, so each fold holds out a share of every group.
pub fn kfold_split(data: &GroupedDataset, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(JicoError::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let mut assignment: Vec<Vec<usize>> = Vec::with_capacity(data.n_groups());
    for (g, grp) in data.groups().iter().enumerate() {
        if grp.len() < folds {
            return Err(JicoError::GroupTooSmall {
                group: grp.label.clone(),
                size: grp.len(),
                folds,
            });
        }
        let mut order: Vec<usize> = (0..grp.len()).collect();
        Stream::new(seed, &[0xF01D, g as u64]).shuffle(&mut order);
        let mut fold_of = vec![0; grp.len()];
        for (pos, &row) in order.iter().enumerate() {
            fold_of[row] = pos % folds;
        }
        assignment.push(fold_of);
    }
    (0..folds)
        .map(|f| {
            let pick = |holdout: bool| -> Vec<Vec<usize>> {
                assignment
                    .iter()
                    .map(|fold_of| {
                        (0..fold_of.len())
                            .filter(|&r| (fold_of[r] == f) == holdout)
                            .collect()
                    })
                    .collect()
            };
            Ok(Fold {
                train: data.select(&pick(false))?,
                validation: data.select(&pick(true))?,
            })
        })
        .collect()
}

/// Pooled squared error of `opts` fitted on each training part, per fold.
pub fn fold_mses(splits: &[Fold], opts: &FitOptions) -> Result<Vec<f64>> {
    splits
        .iter()
        .map(|fold| {
            let model = fit(&fold.train, opts)?;
            let mut sse = 0.0;
            let mut count = 0usize;
            for (g, grp) in fold.validation.groups().iter().enumerate() {
                let pred = predict(&model, &grp.x, g)?;
                sse += (pred - &grp.y).norm_squared();
                count += grp.len();
            }
            Ok(sse / count as f64)
        })
        .collect()
}

/// Mean over folds of the pooled validation MSE.
pub fn cv_mse(splits: &[Fold], opts: &FitOptions) -> Result<f64> {
    let v = fold_mses(splits, opts)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub max_joint_rank: usize,
    pub max_individual_rank: usize,
    /// Use one individual rank for all groups.
    pub equal_individual_ranks: bool,
    pub a_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub centering: CenteringMode,
    pub init: InitStrategy,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        SelectionGrid {
            max_joint_rank: 2,
            max_individual_rank: 2,
            equal_individual_ranks: true,
            a_grid: default_a_grid(),
            folds: DEFAULT_FOLDS,
            seed: 0,
            centering: CenteringMode::Global,
            init: InitStrategy::ZeroIndividual,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// `0, 0.05, …, 1`.
pub fn default_a_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

impl SelectionGrid {
    fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(JicoError::InvalidParameter(
                "folds must be at least 2".into(),
            ));
        }
        if self.a_grid.is_empty() {
            return Err(JicoError::InvalidParameter("a grid is empty".into()));
        }
        if let Some(a) = self.a_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(JicoError::InvalidParameter(format!(
                "a = {a} outside [0, 1]"
            )));
        }
        Ok(())
    }

    fn rank_combinations(&self, groups: usize) -> Vec<Vec<usize>> {
        if self.equal_individual_ranks {
            return (0..=self.max_individual_rank)
                .map(|k| vec![k; groups])
                .collect();
        }
        let mut out: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..groups {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..=self.max_individual_rank).map(move |k| {
                        let mut v = prefix.clone();
                        v.push(k);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvCell {
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub a: f64,
    pub mean_mse: Option<f64>,
    pub std_err: Option<f64>,
    pub error: Option<String>,
}

impl CvCell {
    fn total_rank(&self) -> usize {
        self.joint_rank + self.individual_ranks.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvReport {
    pub cells: Vec<CvCell>,
    /// Index into `cells` of the selected combination.
    pub best: usize,
}

impl CvReport {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best]
    }
}

/// Evaluates every (K, K_g, a) combination by cross-validation. Cells whose
/// fit fails are kept in the report with their error and skipped when
/// choosing the best one.
pub fn cv_grid(data: &GroupedDataset, grid: &SelectionGrid) -> Result<CvReport> {
    grid.validate()?;
    let splits = kfold_split(data, grid.folds, grid.seed)?;
    let mut specs = Vec::new();
    for k in 0..=grid.max_joint_rank {
        for kg in grid.rank_combinations(data.n_groups()) {
            for &a in &grid.a_grid {
                specs.push((k, kg.clone(), a));
            }
        }
    }
    let cells: Vec<CvCell> = specs
        .into_par_iter()
        .map(|(k, kg, a)| {
            let outcome = Gamma::from_a(a).and_then(|gamma| {
                let opts = FitOptions::new(gamma, k, kg.clone())
                    .with_init(grid.init)
                    .with_tol(grid.tol)
                    .with_max_iter(grid.max_iter)
                    .with_centering(grid.centering);
                fold_mses(&splits, &opts)
            });
            match outcome {
                Ok(v) => {
                    let (mean, se) = mean_and_se(&v);
                    CvCell {
                        joint_rank: k,
                        individual_ranks: kg,
                        a,
                        mean_mse: Some(mean),
                        std_err: Some(se),
                        error: None,
                    }
                }
                Err(e) => CvCell {
                    joint_rank: k,
                    individual_ranks: kg,
                    a,
                    mean_mse: None,
                    std_err: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.mean_mse.is_some_and(f64::is_finite))
        .min_by(|(_, x), (_, y)| {
            x.mean_mse
                .unwrap()
                .total_cmp(&y.mean_mse.unwrap())
                .then(x.total_rank().cmp(&y.total_rank()))
                .then(x.a.total_cmp(&y.a))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| {
            JicoError::AllFailed(
                cells.len(),
                cells.iter().filter_map(|c| c.error.clone()).collect(),
            )
        })?;
    Ok(CvReport { cells, best })
}

/// Sample mean and standard error (sd / √n).
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
