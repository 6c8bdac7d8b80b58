//! Reference regressors: ridge, PLS and PCR, fitted globally or per group.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cr::{extract_directions, CrConstraints, Gamma};
use crate::data::GroupedDataset;
use crate::error::{JicoError, Result};
use crate::linalg::{least_squares, select_rows, thin_svd};
use crate::rng::Stream;

pub const RIDGE_GRID_SIZE: usize = 25;
pub const RIDGE_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RidgePenalty {
    Fixed(f64),
    /// Chosen by k-fold CV over a log-spaced grid scaled to the design.
    CrossValidated {
        folds: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Ridge(RidgePenalty),
    Pls(usize),
    Pcr(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Global,
    GroupSpecific,
}

/// A centered linear predictor `y_mean + (x − x_mean)'β`.
#[derive(Debug, Clone)]
pub struct LinearBlock {
    pub coef: DVector<f64>,
    pub x_mean: DVector<f64>,
    pub y_mean: f64,
    /// Ridge penalty used, if any.
    pub lambda: Option<f64>,
}

impl LinearBlock {
    fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.coef).add_scalar(self.y_mean - self.x_mean.dot(&self.coef))
    }
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub scope: Scope,
    /// One block for `Global`, one per group otherwise.
    pub blocks: Vec<LinearBlock>,
}

fn center_if(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    intercept: bool,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    if !intercept {
        return (x.clone(), y.clone(), DVector::zeros(x.ncols()), 0.0);
    }
    let x_mean = x.row_mean().transpose();
    let y_mean = y.mean();
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= x_mean.transpose();
    }
    (xc, y.add_scalar(-y_mean), x_mean, y_mean)
}

/// Ridge coefficients for every penalty from one SVD of the centered design.
fn ridge_path(x: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64]) -> Vec<DVector<f64>> {
    let svd = thin_svd(x, 1e-12);
    let uty = svd.u.transpose() * y;
    lambdas
        .iter()
        .map(|&l| {
            let shrunk = DVector::from_fn(svd.rank(), |i, _| {
                let s = svd.sigma[i];
                s / (s * s + l) * uty[i]
            });
            &svd.v * shrunk
        })
        .collect()
}

/// 25 log-spaced penalties over `[1e-4, 1e4] · mean(diag(X'X)) / p`.
pub fn ridge_grid(x: &DMatrix<f64>) -> Vec<f64> {
    let p = x.ncols() as f64;
    let scale = x.norm_squared() / p / p;
    (0..RIDGE_GRID_SIZE)
        .map(|i| scale * 10f64.powf(-4.0 + 8.0 * i as f64 / (RIDGE_GRID_SIZE - 1) as f64))
        .collect()
}

/// The grid is scaled to `x` as given; folds are re-centered when an
/// intercept is fitted.
fn ridge_cv(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    folds: usize,
    seed: u64,
    intercept: bool,
) -> Result<f64> {
    let n = x.nrows();
    if n < folds {
        return Err(JicoError::InvalidParameter(format!(
            "{n} rows cannot be split into {folds} ridge folds"
        )));
    }
    let grid = ridge_grid(x);
    let mut order: Vec<usize> = (0..n).collect();
    Stream::new(seed, &[0x5EED]).shuffle(&mut order);
    let mut sse = vec![0.0; grid.len()];
    for f in 0..folds {
        let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| order[i] % folds == f);
        let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
        let (xt, yt, xm, ym) = center_if(&select_rows(x, &train), &yt, intercept);
        let xv = select_rows(x, &val);
        let yv = DVector::from_iterator(val.len(), val.iter().map(|&i| y[i]));
        for (k, coef) in ridge_path(&xt, &yt, &grid).into_iter().enumerate() {
            let block = LinearBlock {
                coef,
                x_mean: xm.clone(),
                y_mean: ym,
                lambda: None,
            };
            sse[k] += (block.predict(&xv) - &yv).norm_squared();
        }
    }
    let best = sse
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    Ok(grid[best])
}

fn fit_block(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    kind: BaselineKind,
    intercept: bool,
) -> Result<LinearBlock> {
    let (xc, yc, x_mean, y_mean) = center_if(x, y, intercept);
    let p = x.ncols();
    let (coef, lambda) = match kind {
        BaselineKind::Ridge(pen) => {
            let l = match pen {
                RidgePenalty::Fixed(l) if l >= 0.0 => l,
                RidgePenalty::Fixed(l) => {
                    return Err(JicoError::InvalidParameter(format!(
                        "ridge penalty {l} is negative"
                    )))
                }
                RidgePenalty::CrossValidated { folds, seed } => {
                    ridge_cv(&xc, &yc, folds, seed, intercept)?
                }
            };
            (ridge_path(&xc, &yc, &[l]).remove(0), Some(l))
        }
        BaselineKind::Pls(k) | BaselineKind::Pcr(k) => {
            let gamma = if matches!(kind, BaselineKind::Pls(_)) {
                Gamma::PLS
            } else {
                Gamma::PCR
            };
            let path = extract_directions(&xc, &yc, gamma, k, &CrConstraints::none(xc.nrows(), p))?;
            let scores = &xc * &path.weights;
            (&path.weights * least_squares(&scores, &yc), None)
        }
    };
    Ok(LinearBlock {
        coef,
        x_mean,
        y_mean,
        lambda,
    })
}

/// Fits a baseline. With `intercept` the design and response are centered
/// within each scope block first; without it the model passes through the
/// origin.
pub fn fit_baseline(
    data: &GroupedDataset,
    kind: BaselineKind,
    scope: Scope,
    intercept: bool,
) -> Result<BaselineModel> {
    let blocks = match scope {
        Scope::Global => {
            let s = data.stack();
            vec![fit_block(&s.x, &s.y, kind, intercept)?]
        }
        Scope::GroupSpecific => data
            .groups()
            .iter()
            .map(|g| fit_block(&g.x, &g.y, kind, intercept))
            .collect::<Result<_>>()?,
    };
    Ok(BaselineModel {
        kind,
        scope,
        blocks,
    })
}

/// `group` is required for group-specific models and ignored otherwise.
pub fn predict_baseline(
    model: &BaselineModel,
    x_new: &DMatrix<f64>,
    group: Option<usize>,
) -> Result<DVector<f64>> {
    let block = match model.scope {
        Scope::Global => &model.blocks[0],
        Scope::GroupSpecific => {
            let g = group.ok_or_else(|| {
                JicoError::InvalidParameter("a group-specific model needs a group index".into())
            })?;
            model.blocks.get(g).ok_or_else(|| {
                JicoError::InvalidParameter(format!("group index {g} out of range"))
            })?
        }
    };
    if x_new.ncols() != block.coef.len() {
        return Err(JicoError::DimensionMismatch(format!(
            "new data has {} columns, model expects {}",
            x_new.ncols(),
            block.coef.len()
        )));
    }
    Ok(block.predict(x_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Group;

    fn tall() -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(9, 3, |i, j| ((i * 3 + j) as f64 * 1.7).sin());
        let y = DVector::from_fn(9, |i, _| (i as f64 * 0.6).cos() + i as f64 * 0.1);
        (x, y)
    }

    #[test]
    fn ridge_limit_is_least_squares() {
        let (x, y) = tall();
        let d = GroupedDataset::new(vec![Group::new("a", x.clone(), y.clone())]).unwrap();
        let m = fit_baseline(
            &d,
            BaselineKind::Ridge(RidgePenalty::Fixed(1e-12)),
            Scope::Global,
            true,
        )
        .unwrap();
        let (xc, yc, _, _) = center_if(&x, &y, true);
        let ls = least_squares(&xc, &yc);
        assert!((&m.blocks[0].coef - ls).norm() < 1e-6);
    }

    #[test]
    fn small_ridge_prediction_by_hand() {
        // Centered X = [[-1, 0], [0, 1], [1, -1]], Y = (-1, 0, 1); λ = 1.
        // X'X + I = [[3, -1], [-1, 3]], X'Y = (2, -1), β = (5/8, -1/8).
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 2.0, 2.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let d = GroupedDataset::new(vec![Group::new("a", x, y)]).unwrap();
        let m = fit_baseline(
            &d,
            BaselineKind::Ridge(RidgePenalty::Fixed(1.0)),
            Scope::Global,
            true,
        )
        .unwrap();
        let pred = predict_baseline(&m, &DMatrix::from_row_slice(1, 2, &[3.0, 3.0]), None).unwrap();
        // 2 + (3 − 1)·5/8 + (3 − 1)·(−1/8) = 3.
        assert!((pred[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_group_scopes_agree() {
        let (x, y) = tall();
        let d = GroupedDataset::new(vec![Group::new("a", x.clone(), y)]).unwrap();
        for kind in [
            BaselineKind::Pls(2),
            BaselineKind::Pcr(2),
            BaselineKind::Ridge(RidgePenalty::Fixed(0.3)),
        ] {
            let a = fit_baseline(&d, kind, Scope::Global, true).unwrap();
            let b = fit_baseline(&d, kind, Scope::GroupSpecific, true).unwrap();
            let pa = predict_baseline(&a, &x, Some(0)).unwrap();
            let pb = predict_baseline(&b, &x, Some(0)).unwrap();
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn group_specific_needs_group() {
        let (x, y) = tall();
        let d = GroupedDataset::new(vec![Group::new("a", x.clone(), y)]).unwrap();
        let m = fit_baseline(&d, BaselineKind::Pls(1), Scope::GroupSpecific, true).unwrap();
        assert!(predict_baseline(&m, &x, None).is_err());
    }

    #[test]
    fn cv_ridge_picks_a_grid_value() {
        let x = DMatrix::from_fn(30, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
        let y = DVector::from_fn(30, |i, _| x[(i, 0)] - 0.5 * x[(i, 2)]);
        let d = GroupedDataset::new(vec![Group::new("a", x.clone(), y)]).unwrap();
        let pen = RidgePenalty::CrossValidated { folds: 5, seed: 1 };
        let m = fit_baseline(&d, BaselineKind::Ridge(pen), Scope::Global, true).unwrap();
        let lambda = m.blocks[0].lambda.unwrap();
        let (xc, _, _, _) = center_if(&x, &DVector::zeros(30), true);
        assert!(ridge_grid(&xc).contains(&lambda));
    }
}
