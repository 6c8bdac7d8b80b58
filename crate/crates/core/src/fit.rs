//! The alternating joint/individual fit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cr::{extract_directions, CrConstraints, CrPath, Gamma, PathStop};
use crate::data::{
    individual_residuals, joint_residuals, BlockState, CenteringInfo, CenteringMode, GroupedDataset,
};
use crate::error::{FitStage, JicoError, Result};
use crate::linalg::{hstack, least_squares, left_pseudo_inverse, max_abs};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 300;

/// How the individual blocks are seeded before the first joint step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum InitStrategy {
    /// `A_g = 0`.
    #[default]
    ZeroIndividual,
    /// Every entry of `A_g` equal to the given value.
    ConstantIndividual(f64),
    /// `A_g` set to the joint matrices of a zero-initialised fit.
    JointWarmStart,
}

/// How successive objective vectors are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceRule {
    /// Distance at most `tol`.
    Absolute,
    /// Distance at most `tol · max(1, ‖previous‖)`. Objective values grow
    /// like a power of the data scale, so for large `γ` an absolute bound
    /// sits below round-off.
    #[default]
    Relative,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub gamma: Gamma,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    pub init: InitStrategy,
    pub tol: f64,
    pub convergence: ConvergenceRule,
    pub max_iter: usize,
    pub centering: CenteringMode,
}

impl FitOptions {
    pub fn new(gamma: Gamma, joint_rank: usize, individual_ranks: Vec<usize>) -> Self {
        FitOptions {
            gamma,
            joint_rank,
            individual_ranks,
            init: InitStrategy::ZeroIndividual,
            tol: DEFAULT_TOL,
            convergence: ConvergenceRule::Relative,
            max_iter: DEFAULT_MAX_ITER,
            centering: CenteringMode::Global,
        }
    }

    /// Same individual rank for each of `groups` groups.
    pub fn equal(gamma: Gamma, joint_rank: usize, individual_rank: usize, groups: usize) -> Self {
        Self::new(gamma, joint_rank, vec![individual_rank; groups])
    }

    pub fn with_init(mut self, init: InitStrategy) -> Self {
        self.init = init;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_convergence(mut self, rule: ConvergenceRule) -> Self {
        self.convergence = rule;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_centering(mut self, centering: CenteringMode) -> Self {
        self.centering = centering;
        self
    }

    fn validate(&self, data: &GroupedDataset) -> Result<()> {
        if self.individual_ranks.len() != data.n_groups() {
            return Err(JicoError::InvalidParameter(format!(
                "{} individual ranks given for {} groups",
                self.individual_ranks.len(),
                data.n_groups()
            )));
        }
        let max_kg = self.individual_ranks.iter().copied().max().unwrap_or(0);
        let min_n = data.group_sizes().into_iter().min().unwrap_or(0);
        if self.joint_rank + max_kg >= min_n {
            return Err(JicoError::InvalidParameter(format!(
                "K + max K_g = {} must be below the smallest group size {min_n}",
                self.joint_rank + max_kg
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(JicoError::InvalidParameter("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(JicoError::InvalidParameter(
                "max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-direction objective values of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVectors {
    pub joint: Vec<f64>,
    pub individual: Vec<Vec<f64>>,
}

fn distance(a: &[f64], b: &[f64]) -> Option<f64> {
    (a.len() == b.len()).then(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

/// True when the joint vector and every individual vector moved by at most
/// `tol` in Euclidean distance. Differing shapes never count as converged.
pub fn converged(prev: &ObjectiveVectors, curr: &ObjectiveVectors, tol: f64) -> bool {
    converged_with(ConvergenceRule::Absolute, prev, curr, tol)
}

/// [`converged`] under an explicit rule; the relative rule scales `tol` per
/// vector by the norm of its previous value.
pub fn converged_with(
    rule: ConvergenceRule,
    prev: &ObjectiveVectors,
    curr: &ObjectiveVectors,
    tol: f64,
) -> bool {
    if prev.individual.len() != curr.individual.len() {
        return false;
    }
    let bound = |a: &[f64]| match rule {
        ConvergenceRule::Absolute => tol,
        ConvergenceRule::Relative => tol * a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0),
    };
    let ok = |a: &[f64], b: &[f64]| distance(a, b).is_some_and(|d| d <= bound(a));
    ok(&prev.joint, &curr.joint)
        && prev
            .individual
            .iter()
            .zip(&curr.individual)
            .all(|(a, b)| ok(a, b))
}

fn direction_objectives(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DMatrix<f64>,
    gamma: Gamma,
) -> Vec<f64> {
    w.column_iter()
        .map(|wk| {
            let xw = x * wk;
            let var = xw.norm_squared();
            if gamma.is_infinite() {
                var
            } else {
                xw.dot(y).powi(2) * var.powf(gamma.value() - 1.0)
            }
        })
        .collect()
}

/// Objective vectors of the weights in `model` evaluated on the residual
/// views implied by `state`. `data` must already be centered.
pub fn objective_vectors(
    data: &GroupedDataset,
    state: &BlockState,
    joint_weights: &DMatrix<f64>,
    individual_weights: &[DMatrix<f64>],
    gamma: Gamma,
) -> Result<ObjectiveVectors> {
    let (xj, yj) = joint_residuals(data, state)?;
    let (xi, yi) = individual_residuals(data, state)?;
    if individual_weights.len() != data.n_groups() {
        return Err(JicoError::DimensionMismatch(
            "one individual weight matrix per group is required".into(),
        ));
    }
    Ok(ObjectiveVectors {
        joint: direction_objectives(&xj, &yj, joint_weights, gamma),
        individual: individual_weights
            .iter()
            .enumerate()
            .map(|(g, wg)| direction_objectives(&xi[g], &yi[g], wg, gamma))
            .collect(),
    })
}

/// Numerical health of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Largest relative fixed-point residual over every solve of the fit.
    pub max_fixed_point_residual: f64,
    pub fixed_point_solves: usize,
    /// Whether any constrained solve needed a pseudo-inverse.
    pub pseudo_inverse_used: bool,
    /// Blocks that returned fewer directions than requested.
    pub truncations: Vec<String>,
}

impl FitDiagnostics {
    fn absorb(&mut self, path: &CrPath, what: &str) {
        for d in &path.directions {
            if let Some(fp) = &d.fixed_point {
                self.fixed_point_solves += 1;
                self.max_fixed_point_residual =
                    self.max_fixed_point_residual.max(fp.relative_residual);
                self.pseudo_inverse_used |= fp.pseudo_inverse_used;
            }
        }
        if let Some(stop) = &path.stop {
            let note = format!("{what}: {stop:?}");
            if !self.truncations.contains(&note) {
                self.truncations.push(note);
            }
        }
    }
}

/// A fitted model. Weights, loadings and coefficients refer to centered data.
#[derive(Debug, Clone)]
pub struct JicoModel {
    pub gamma: Gamma,
    pub joint_rank: usize,
    pub individual_ranks: Vec<usize>,
    /// p × K.
    pub w: DMatrix<f64>,
    /// p × K_g per group.
    pub w_g: Vec<DMatrix<f64>>,
    /// K × p.
    pub u: DMatrix<f64>,
    pub u_g: Vec<DMatrix<f64>>,
    pub alpha: DVector<f64>,
    pub alpha_g: Vec<DVector<f64>>,
    pub centering: CenteringInfo,
    pub history: Vec<ObjectiveVectors>,
    pub converged: bool,
    pub n_iter: usize,
    pub tol: f64,
    pub diagnostics: FitDiagnostics,
}

impl JicoModel {
    pub fn p(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_groups(&self) -> usize {
        self.w_g.len()
    }
}

fn wrap(stage: FitStage, component: usize, source: JicoError) -> JicoError {
    JicoError::Fit {
        stage,
        component,
        source: Box::new(source),
    }
}

fn check_path(path: &CrPath, stage: FitStage, rank: usize) -> Result<()> {
    if let Some(PathStop::RankExhausted { component }) = path.stop {
        return Err(wrap(
            stage,
            component,
            JicoError::RankExhausted {
                rank,
                constraints: component,
            },
        ));
    }
    Ok(())
}

fn split_rows(m: &DMatrix<f64>, sizes: &[usize]) -> Vec<DMatrix<f64>> {
    let mut start = 0;
    sizes
        .iter()
        .map(|&n| {
            let block = m.rows(start, n).into_owned();
            start += n;
            block
        })
        .collect()
}

fn initial_state(data: &GroupedDataset, opts: &FitOptions) -> Result<BlockState> {
    let p = data.p();
    let mut state = BlockState::zero(data, 0, &vec![0; data.n_groups()]);
    match opts.init {
        InitStrategy::ZeroIndividual => {}
        InitStrategy::ConstantIndividual(c) => {
            for (g, grp) in data.groups().iter().enumerate() {
                state.t[g] = DMatrix::from_element(grp.len(), 1, c);
                state.u_g[g] = DMatrix::from_element(1, p, 1.0);
                state.alpha_g[g] = DVector::zeros(1);
            }
        }
        InitStrategy::JointWarmStart => {
            let warm = fit_centered(data, &opts.clone().with_init(InitStrategy::ZeroIndividual))?;
            for (g, grp) in data.groups().iter().enumerate() {
                state.t[g] = &grp.x * &warm.w;
                state.u_g[g] = warm.u.clone();
                state.alpha_g[g] = DVector::zeros(warm.w.ncols());
            }
        }
    }
    Ok(state)
}

/// Fits the model. The data are centered internally according to
/// `opts.centering`; a run that hits `max_iter` is returned with
/// `converged = false`.
pub fn fit(data: &GroupedDataset, opts: &FitOptions) -> Result<JicoModel> {
    opts.validate(data)?;
    let (centered, info) = data.center(opts.centering);
    let mut model = fit_centered(&centered, opts)?;
    model.centering = info;
    Ok(model)
}

fn fit_centered(data: &GroupedDataset, opts: &FitOptions) -> Result<JicoModel> {
    let p = data.p();
    let g_count = data.n_groups();
    let sizes = data.group_sizes();
    let n = data.n_total();
    let gamma = opts.gamma;

    let mut state = initial_state(data, opts)?;
    let mut w = DMatrix::zeros(p, 0);
    let mut w_g: Vec<DMatrix<f64>> = vec![DMatrix::zeros(p, 0); g_count];
    let mut history: Vec<ObjectiveVectors> = Vec::new();
    let mut diagnostics = FitDiagnostics::default();
    let mut is_converged = false;
    let mut n_iter = 0;

    for _ in 0..opts.max_iter {
        n_iter += 1;

        // Joint step under the current individual weights and scores.
        let (xj, yj) = joint_residuals(data, &state)?;
        let weight_refs: Vec<&DMatrix<f64>> = w_g.iter().collect();
        let weight_c = hstack(&weight_refs, p);
        let mut score_c = DMatrix::zeros(n, weight_c.ncols());
        let (mut row, mut col) = (0, 0);
        for g in 0..g_count {
            let k = w_g[g].ncols();
            if k > 0 {
                score_c
                    .view_mut((row, col), (sizes[g], k))
                    .copy_from(&state.t[g]);
            }
            row += sizes[g];
            col += k;
        }
        let path = extract_directions(
            &xj,
            &yj,
            gamma,
            opts.joint_rank,
            &CrConstraints::new(weight_c, score_c),
        )
        .map_err(|e| wrap(FitStage::Joint, 0, e))?;
        check_path(&path, FitStage::Joint, opts.joint_rank)?;
        diagnostics.absorb(&path, "joint");
        let joint_obj: Vec<f64> = path
            .directions
            .iter()
            .map(|d| objective_of(d, gamma))
            .collect();
        w = path.weights;
        let s = &xj * &w;
        state.u = left_pseudo_inverse(&w);
        state.alpha = least_squares(&s, &yj);
        state.s = split_rows(&s, &sizes);

        // Individual steps under the new joint weights.
        let (xi, yi) = individual_residuals(data, &state)?;
        let mut indiv_obj = Vec::with_capacity(g_count);
        for g in 0..g_count {
            let stage = FitStage::Individual(g);
            let constraints = CrConstraints::new(w.clone(), state.s[g].clone());
            let path = extract_directions(
                &xi[g],
                &yi[g],
                gamma,
                opts.individual_ranks[g],
                &constraints,
            )
            .map_err(|e| wrap(stage, 0, e))?;
            check_path(&path, stage, opts.individual_ranks[g])?;
            diagnostics.absorb(&path, &format!("group {g}"));
            indiv_obj.push(
                path.directions
                    .iter()
                    .map(|d| objective_of(d, gamma))
                    .collect(),
            );
            let t = &xi[g] * &path.weights;
            state.u_g[g] = left_pseudo_inverse(&path.weights);
            state.alpha_g[g] = least_squares(&t, &yi[g]);
            state.t[g] = t;
            w_g[g] = path.weights;
        }

        let current = ObjectiveVectors {
            joint: joint_obj,
            individual: indiv_obj,
        };
        let done = history
            .last()
            .is_some_and(|prev| converged_with(opts.convergence, prev, &current, opts.tol));
        history.push(current);
        if done {
            is_converged = true;
            break;
        }
    }
    if !is_converged {
        log::warn!(
            "fit stopped after {n_iter} iterations without meeting tol {:.1e}",
            opts.tol
        );
    }

    Ok(JicoModel {
        gamma,
        joint_rank: opts.joint_rank,
        individual_ranks: opts.individual_ranks.clone(),
        w,
        w_g,
        u: state.u,
        u_g: state.u_g,
        alpha: state.alpha,
        alpha_g: state.alpha_g,
        centering: CenteringInfo::identity(g_count, p),
        history,
        converged: is_converged,
        n_iter,
        tol: opts.tol,
        diagnostics,
    })
}

fn objective_of(d: &crate::cr::CrDirection, gamma: Gamma) -> f64 {
    if gamma.is_infinite() {
        d.rho
    } else {
        d.objective
    }
}

/// Predicts responses for new rows of group `group`.
pub fn predict(model: &JicoModel, x_new: &DMatrix<f64>, group: usize) -> Result<DVector<f64>> {
    if x_new.ncols() != model.p() {
        return Err(JicoError::DimensionMismatch(format!(
            "new data has {} columns, model expects {}",
            x_new.ncols(),
            model.p()
        )));
    }
    if group >= model.n_groups() {
        return Err(JicoError::InvalidParameter(format!(
            "group index {group} out of range for {} groups",
            model.n_groups()
        )));
    }
    let x = model.centering.center_x(x_new, group);
    let joint = (&x * &model.w) * &model.alpha;
    let indiv = (&x * &model.w_g[group]) * &model.alpha_g[group];
    Ok((joint + indiv).add_scalar(model.centering.y_mean(group)))
}

/// Per-group split of centered data into joint, individual and residual parts.
#[derive(Debug, Clone)]
pub struct GroupDecomposition {
    pub joint: DMatrix<f64>,
    pub individual: DMatrix<f64>,
    pub residual: DMatrix<f64>,
    pub joint_response: DVector<f64>,
    pub individual_response: DVector<f64>,
}

pub fn decompose(model: &JicoModel, data: &GroupedDataset) -> Result<Vec<GroupDecomposition>> {
    check_data(model, data)?;
    data.groups()
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let x = model.centering.center_x(&grp.x, g);
            let s = &x * &model.w;
            let joint = &s * &model.u;
            let x_indiv = &x - &joint;
            let t = &x_indiv * &model.w_g[g];
            let individual = &t * &model.u_g[g];
            let residual = &x - &joint - &individual;
            Ok(GroupDecomposition {
                joint,
                individual,
                residual,
                joint_response: s * &model.alpha,
                individual_response: t * &model.alpha_g[g],
            })
        })
        .collect()
}

fn check_data(model: &JicoModel, data: &GroupedDataset) -> Result<()> {
    if data.p() != model.p() || data.n_groups() != model.n_groups() {
        return Err(JicoError::DimensionMismatch(format!(
            "dataset has {} groups and {} columns, model has {} and {}",
            data.n_groups(),
            data.p(),
            model.n_groups(),
            model.p()
        )));
    }
    Ok(())
}

/// Orthogonality between the joint and individual parts of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Identifiability {
    /// `max |W'W_g|`.
    pub weights: f64,
    /// `max |W'X_g'X_g W_g| / ‖X_g‖²`.
    pub gram: f64,
    /// `max |S_g'T_g| / (‖S_g‖ ‖T_g‖)`.
    pub scores: f64,
}

impl Identifiability {
    pub fn max(&self) -> f64 {
        self.weights.max(self.gram).max(self.scores)
    }
}

pub fn identifiability_report(
    model: &JicoModel,
    data: &GroupedDataset,
) -> Result<Vec<Identifiability>> {
    check_data(model, data)?;
    Ok(data
        .groups()
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            let wg = &model.w_g[g];
            if model.w.ncols() == 0 || wg.ncols() == 0 {
                return Identifiability::default();
            }
            let x = model.centering.center_x(&grp.x, g);
            let s = &x * &model.w;
            let t = &x * wg;
            let x_norm2 = x.norm_squared();
            let st_norm = s.norm() * t.norm();
            Identifiability {
                weights: max_abs(&(model.w.transpose() * wg)),
                gram: if x_norm2 > 0.0 {
                    max_abs(&(s.transpose() * &t)) / x_norm2
                } else {
                    0.0
                },
                scores: if st_norm > 0.0 {
                    max_abs(&(s.transpose() * &t)) / st_norm
                } else {
                    0.0
                },
            }
        })
        .collect())
}

/// Outcome of fitting with several initialisations.
#[derive(Debug, Clone)]
pub struct MultiStartReport {
    pub model: JicoModel,
    pub chosen: usize,
    pub strategies: Vec<InitStrategy>,
    /// Cross-validated MSE per strategy, `None` where the strategy failed.
    pub cv_mse: Vec<Option<f64>>,
    /// Final objective vectors of the full-data fit per strategy.
    pub objectives: Vec<Option<ObjectiveVectors>>,
}

/// Fits once per strategy and keeps the one with the smallest
/// cross-validated MSE.
pub fn multi_start_fit(
    data: &GroupedDataset,
    opts: &FitOptions,
    strategies: &[InitStrategy],
    folds: usize,
    seed: u64,
) -> Result<MultiStartReport> {
    if strategies.is_empty() {
        return Err(JicoError::InvalidParameter(
            "at least one strategy is required".into(),
        ));
    }
    let splits = crate::selection::kfold_split(data, folds, seed)?;
    let mut cv_mse = Vec::with_capacity(strategies.len());
    let mut objectives = Vec::with_capacity(strategies.len());
    let mut models = Vec::with_capacity(strategies.len());
    let mut failures = Vec::new();
    for &strategy in strategies {
        let o = opts.clone().with_init(strategy);
        let cv = crate::selection::cv_mse(&splits, &o);
        let full = fit(data, &o);
        match (&cv, &full) {
            (Ok(m), Ok(model)) => {
                cv_mse.push(Some(*m));
                objectives.push(model.history.last().cloned());
            }
            _ => {
                let msg = cv
                    .as_ref()
                    .err()
                    .or(full.as_ref().err())
                    .map(|e| e.to_string())
                    .unwrap_or_default();
                failures.push(format!("{strategy:?}: {msg}"));
                cv_mse.push(None);
                objectives.push(full.as_ref().ok().and_then(|m| m.history.last().cloned()));
            }
        }
        models.push(full.ok());
    }
    let chosen = cv_mse
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .ok_or(JicoError::AllFailed(strategies.len(), failures))?;
    let model = models[chosen].take().expect("chosen strategy has a model");
    Ok(MultiStartReport {
        model,
        chosen,
        strategies: strategies.to_vec(),
        cv_mse,
        objectives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Group;

    fn ov(joint: Vec<f64>, individual: Vec<Vec<f64>>) -> ObjectiveVectors {
        ObjectiveVectors { joint, individual }
    }

    #[test]
    fn convergence_rule() {
        let a = ov(vec![1.0, 2.0], vec![vec![0.5], vec![]]);
        assert!(converged(&a, &a, 1e-12));
        let mut b = a.clone();
        b.joint[1] += 2e-6;
        assert!(!converged(&a, &b, 1e-6));
        let mut c = a.clone();
        c.individual[0][0] += 1e-3;
        assert!(!converged(&a, &c, 1e-6));
        let d = ov(vec![1.0], vec![vec![0.5], vec![]]);
        assert!(!converged(&a, &d, 1.0));
    }

    fn toy() -> GroupedDataset {
        let x1 = DMatrix::from_fn(12, 8, |i, j| ((i * 8 + j) as f64 * 0.77).sin());
        let x2 = DMatrix::from_fn(10, 8, |i, j| {
            ((i * 5 + 2 * j) as f64 * 0.31).cos() + 0.1 * j as f64
        });
        let y1 = DVector::from_fn(12, |i, _| (i as f64 * 0.5).sin());
        let y2 = DVector::from_fn(10, |i, _| (i as f64 * 0.9).cos());
        GroupedDataset::new(vec![Group::new("a", x1, y1), Group::new("b", x2, y2)]).unwrap()
    }

    #[test]
    fn null_model_predicts_the_mean() {
        let data = toy();
        let model = fit(&data, &FitOptions::equal(Gamma::PLS, 0, 0, 2)).unwrap();
        assert!(model.converged);
        let y_mean = data.stack().y.mean();
        let pred = predict(&model, &data.group(1).x, 1).unwrap();
        assert!(pred.iter().all(|v| (v - y_mean).abs() < 1e-12));
    }

    #[test]
    fn objective_vectors_of_zero_response_vanish() {
        let data = toy();
        let zero_y = GroupedDataset::new(
            data.groups()
                .iter()
                .map(|g| Group::new(g.label.clone(), g.x.clone(), DVector::zeros(g.len())))
                .collect(),
        )
        .unwrap();
        let state = BlockState::zero(&zero_y, 0, &[0, 0]);
        let w = DMatrix::from_fn(8, 1, |i, _| {
            if i == 0 {
                0.6
            } else if i == 2 {
                0.8
            } else {
                0.0
            }
        });
        let ov = objective_vectors(
            &zero_y,
            &state,
            &w,
            &[DMatrix::zeros(8, 0), DMatrix::zeros(8, 0)],
            Gamma::PLS,
        )
        .unwrap();
        assert_eq!(ov.joint, vec![0.0]);
    }

    #[test]
    fn pcr_objective_is_the_variance() {
        let data = toy();
        let state = BlockState::zero(&data, 0, &[0, 0]);
        let w = DMatrix::from_fn(8, 1, |i, _| if i == 1 { 1.0 } else { 0.0 });
        let ov = objective_vectors(
            &data,
            &state,
            &w,
            &[DMatrix::zeros(8, 0), DMatrix::zeros(8, 0)],
            Gamma::PCR,
        )
        .unwrap();
        let x = data.stack().x;
        assert!((ov.joint[0] - x.column(1).norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn rank_precondition_is_checked() {
        let data = toy();
        assert!(fit(&data, &FitOptions::equal(Gamma::PLS, 6, 4, 2)).is_err());
        assert!(fit(&data, &FitOptions::new(Gamma::PLS, 1, vec![1])).is_err());
    }

    #[test]
    fn identifiability_holds_after_every_fit() {
        let data = toy();
        for gamma in [Gamma::OLS, Gamma::new(0.5).unwrap(), Gamma::PLS, Gamma::PCR] {
            let model = fit(&data, &FitOptions::equal(gamma, 1, 1, 2).with_max_iter(50)).unwrap();
            for r in identifiability_report(&model, &data).unwrap() {
                assert!(r.max() < 1e-8, "{gamma}: {r:?}");
            }
        }
    }

    #[test]
    fn decomposition_adds_up() {
        let data = toy();
        let model = fit(&data, &FitOptions::equal(Gamma::PLS, 1, 1, 2)).unwrap();
        let parts = decompose(&model, &data).unwrap();
        for (g, part) in parts.iter().enumerate() {
            let x = model.centering.center_x(&data.group(g).x, g);
            assert!((&part.joint + &part.individual + &part.residual - x).norm() < 1e-12);
        }
    }
}
