//! Grouped datasets, centering, stacking and the residualised views used by
//! the alternating fitter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{JicoError, Result};
use crate::linalg::{select_rows, vstack};

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub label: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Group {
    pub fn new(label: impl Into<String>, x: DMatrix<f64>, y: DVector<f64>) -> Self {
        Group {
            label: label.into(),
            x,
            y,
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Per-group design matrices and responses over a shared set of `p` columns.
/// Groups keep their input order; they are addressed by index everywhere and
/// the labels only matter for I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedDataset {
    groups: Vec<Group>,
    p: usize,
}

impl GroupedDataset {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| JicoError::InvalidDataset("at least one group is required".into()))?;
        let p = first.x.ncols();
        for g in &groups {
            if g.x.ncols() != p {
                return Err(JicoError::InvalidDataset(format!(
                    "group `{}` has {} columns, expected {p}",
                    g.label,
                    g.x.ncols()
                )));
            }
            if g.x.nrows() == 0 {
                return Err(JicoError::InvalidDataset(format!(
                    "group `{}` has no samples",
                    g.label
                )));
            }
            if g.y.len() != g.x.nrows() {
                return Err(JicoError::InvalidDataset(format!(
                    "group `{}`: response length {} does not match {} rows",
                    g.label,
                    g.y.len(),
                    g.x.nrows()
                )));
            }
        }
        Ok(GroupedDataset { groups, p })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_total(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    pub fn group(&self, g: usize) -> &Group {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Group::len).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    pub fn group_index_of(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.label == label)
    }

    /// Row-stacks all groups in group order.
    pub fn stack(&self) -> Stacked {
        let xs: Vec<&DMatrix<f64>> = self.groups.iter().map(|g| &g.x).collect();
        let x = vstack(&xs, self.p);
        let y = DVector::from_iterator(
            self.n_total(),
            self.groups.iter().flat_map(|g| g.y.iter().copied()),
        );
        let group_index = self
            .groups
            .iter()
            .enumerate()
            .flat_map(|(i, g)| std::iter::repeat_n(i, g.len()))
            .collect();
        Stacked { x, y, group_index }
    }

    /// Inverse of [`GroupedDataset::stack`].
    pub fn unstack(stacked: &Stacked, labels: &[String]) -> Result<Self> {
        if stacked.group_index.len() != stacked.x.nrows() || stacked.y.len() != stacked.x.nrows() {
            return Err(JicoError::DimensionMismatch(
                "stacked X, Y and group index lengths differ".into(),
            ));
        }
        let mut groups = Vec::with_capacity(labels.len());
        for (g, label) in labels.iter().enumerate() {
            let rows: Vec<usize> = stacked
                .group_index
                .iter()
                .enumerate()
                .filter(|(_, &gi)| gi == g)
                .map(|(r, _)| r)
                .collect();
            let x = select_rows(&stacked.x, &rows);
            let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| stacked.y[r]));
            groups.push(Group::new(label.clone(), x, y));
        }
        if let Some(&bad) = stacked.group_index.iter().find(|&&g| g >= labels.len()) {
            return Err(JicoError::DimensionMismatch(format!(
                "group index {bad} out of range for {} labels",
                labels.len()
            )));
        }
        GroupedDataset::new(groups)
    }

    /// Subset with the given row indices per group (same group order).
    pub fn select(&self, rows: &[Vec<usize>]) -> Result<Self> {
        if rows.len() != self.groups.len() {
            return Err(JicoError::DimensionMismatch(
                "one row list per group is required".into(),
            ));
        }
        let groups = self
            .groups
            .iter()
            .zip(rows)
            .map(|(g, r)| {
                Group::new(
                    g.label.clone(),
                    select_rows(&g.x, r),
                    DVector::from_iterator(r.len(), r.iter().map(|&i| g.y[i])),
                )
            })
            .collect();
        GroupedDataset::new(groups)
    }

    /// Removes column and response means. `Global` uses the stacked means,
    /// `PerGroup` each group's own, `None` returns the data untouched with
    /// zero means recorded.
    pub fn center(&self, mode: CenteringMode) -> (GroupedDataset, CenteringInfo) {
        let info = CenteringInfo::estimate(self, mode);
        let groups = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, grp)| {
                Group::new(
                    grp.label.clone(),
                    info.center_x(&grp.x, g),
                    grp.y.add_scalar(-info.y_means[g]),
                )
            })
            .collect();
        (GroupedDataset { groups, p: self.p }, info)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stacked {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub group_index: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringMode {
    #[default]
    Global,
    PerGroup,
    None,
}

/// Means removed before fitting. For `Global` centering every group carries
/// the same stacked means.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringInfo {
    pub mode: CenteringMode,
    pub x_means: Vec<DVector<f64>>,
    pub y_means: Vec<f64>,
}

impl CenteringInfo {
    fn estimate(data: &GroupedDataset, mode: CenteringMode) -> Self {
        let g_count = data.n_groups();
        let p = data.p();
        match mode {
            CenteringMode::None => CenteringInfo {
                mode,
                x_means: vec![DVector::zeros(p); g_count],
                y_means: vec![0.0; g_count],
            },
            CenteringMode::Global => {
                let n = data.n_total() as f64;
                let mut xm = DVector::zeros(p);
                let mut ym = 0.0;
                for g in data.groups() {
                    xm += g.x.row_sum().transpose();
                    ym += g.y.sum();
                }
                xm /= n;
                ym /= n;
                CenteringInfo {
                    mode,
                    x_means: vec![xm; g_count],
                    y_means: vec![ym; g_count],
                }
            }
            CenteringMode::PerGroup => CenteringInfo {
                mode,
                x_means: data
                    .groups()
                    .iter()
                    .map(|g| g.x.row_mean().transpose())
                    .collect(),
                y_means: data.groups().iter().map(|g| g.y.mean()).collect(),
            },
        }
    }

    /// No-op centering for `groups` groups of `p` columns.
    pub fn identity(groups: usize, p: usize) -> Self {
        CenteringInfo {
            mode: CenteringMode::None,
            x_means: vec![DVector::zeros(p); groups],
            y_means: vec![0.0; groups],
        }
    }

    pub fn n_groups(&self) -> usize {
        self.y_means.len()
    }

    pub fn center_x(&self, x: &DMatrix<f64>, group: usize) -> DMatrix<f64> {
        let mean = &self.x_means[group];
        let mut out = x.clone();
        for mut row in out.row_iter_mut() {
            row -= mean.transpose();
        }
        out
    }

    pub fn uncenter_x(&self, x: &DMatrix<f64>, group: usize) -> DMatrix<f64> {
        let mean = &self.x_means[group];
        let mut out = x.clone();
        for mut row in out.row_iter_mut() {
            row += mean.transpose();
        }
        out
    }

    pub fn y_mean(&self, group: usize) -> f64 {
        self.y_means[group]
    }
}

/// Data with the current joint or individual fit removed.
///
/// `x_joint` stacks `X_g − T_g U_g` over groups; `x_indiv[g]` is `X_g − S_g U`.
#[derive(Debug, Clone)]
pub struct ResidualView {
    pub x_joint: DMatrix<f64>,
    pub y_joint: DVector<f64>,
    pub x_indiv: Vec<DMatrix<f64>>,
    pub y_indiv: Vec<DVector<f64>>,
}

impl ResidualView {
    /// Rows of `x_joint` belonging to group `g`.
    pub fn joint_block(&self, sizes: &[usize], g: usize) -> DMatrix<f64> {
        let start: usize = sizes[..g].iter().sum();
        self.x_joint.rows(start, sizes[g]).into_owned()
    }
}

/// Current score/loading/coefficient blocks of a fit in progress. Any block
/// may have zero columns.
#[derive(Debug, Clone)]
pub struct BlockState {
    /// Joint scores per group, `n_g × K`.
    pub s: Vec<DMatrix<f64>>,
    /// Joint loadings, `K × p`.
    pub u: DMatrix<f64>,
    pub alpha: DVector<f64>,
    /// Individual scores per group, `n_g × K_g`.
    pub t: Vec<DMatrix<f64>>,
    /// Individual loadings per group, `K_g × p`.
    pub u_g: Vec<DMatrix<f64>>,
    pub alpha_g: Vec<DVector<f64>>,
}

impl BlockState {
    pub fn zero(data: &GroupedDataset, joint: usize, individual: &[usize]) -> Self {
        let p = data.p();
        BlockState {
            s: data
                .groups()
                .iter()
                .map(|g| DMatrix::zeros(g.len(), joint))
                .collect(),
            u: DMatrix::zeros(joint, p),
            alpha: DVector::zeros(joint),
            t: data
                .groups()
                .iter()
                .zip(individual)
                .map(|(g, &k)| DMatrix::zeros(g.len(), k))
                .collect(),
            u_g: individual.iter().map(|&k| DMatrix::zeros(k, p)).collect(),
            alpha_g: individual.iter().map(|&k| DVector::zeros(k)).collect(),
        }
    }

    fn check(&self, data: &GroupedDataset) -> Result<()> {
        let g_count = data.n_groups();
        if self.s.len() != g_count
            || self.t.len() != g_count
            || self.u_g.len() != g_count
            || self.alpha_g.len() != g_count
        {
            return Err(JicoError::DimensionMismatch(format!(
                "state has block lists for a different number of groups than {g_count}"
            )));
        }
        let k = self.u.nrows();
        if self.u.ncols() != data.p() || self.alpha.len() != k {
            return Err(JicoError::DimensionMismatch(
                "joint loadings or coefficients do not match p and K".into(),
            ));
        }
        for (g, grp) in data.groups().iter().enumerate() {
            let kg = self.u_g[g].nrows();
            if self.s[g].shape() != (grp.len(), k) {
                return Err(JicoError::DimensionMismatch(format!(
                    "joint scores of group {g} are {:?}, expected {:?}",
                    self.s[g].shape(),
                    (grp.len(), k)
                )));
            }
            if self.t[g].shape() != (grp.len(), kg)
                || self.u_g[g].ncols() != data.p()
                || self.alpha_g[g].len() != kg
            {
                return Err(JicoError::DimensionMismatch(format!(
                    "individual blocks of group {g} are inconsistent"
                )));
            }
        }
        Ok(())
    }
}

/// `X_g − T_g U_g` and `Y_g − T_g α_g`, stacked over groups.
pub fn joint_residuals(
    data: &GroupedDataset,
    state: &BlockState,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    state.check(data)?;
    let blocks: Vec<DMatrix<f64>> = data
        .groups()
        .iter()
        .enumerate()
        .map(|(g, grp)| &grp.x - &state.t[g] * &state.u_g[g])
        .collect();
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    let x = vstack(&refs, data.p());
    let y = DVector::from_iterator(
        data.n_total(),
        data.groups().iter().enumerate().flat_map(|(g, grp)| {
            (&grp.y - &state.t[g] * &state.alpha_g[g])
                .data
                .as_vec()
                .clone()
        }),
    );
    Ok((x, y))
}

/// Per-group designs paired with per-group responses.
pub type GroupBlocks = (Vec<DMatrix<f64>>, Vec<DVector<f64>>);

/// `X_g − S_g U` and `Y_g − S_g α` for every group.
pub fn individual_residuals(data: &GroupedDataset, state: &BlockState) -> Result<GroupBlocks> {
    state.check(data)?;
    Ok(data
        .groups()
        .iter()
        .enumerate()
        .map(|(g, grp)| {
            (
                &grp.x - &state.s[g] * &state.u,
                &grp.y - &state.s[g] * &state.alpha,
            )
        })
        .unzip())
}

pub fn residual_view(data: &GroupedDataset, state: &BlockState) -> Result<ResidualView> {
    let (x_joint, y_joint) = joint_residuals(data, state)?;
    let (x_indiv, y_indiv) = individual_residuals(data, state)?;
    Ok(ResidualView {
        x_joint,
        y_joint,
        x_indiv,
        y_indiv,
    })
}
