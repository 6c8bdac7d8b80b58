//! Constrained continuum regression.
//!
//! Directions maximise `(w'X'Y)^2 (w'X'Xw)^(γ−1)` over unit vectors `w`
//! subject to
//!
//! * `w'X'X w_j = 0` for every previously extracted direction,
//! * `Ŵ'w = 0` (weight constraints),
//! * `Ŝ'X w = 0` (score constraints).
//!
//! The weight constraints are removed by projecting `X` onto the orthogonal
//! complement of `col(Ŵ)` and writing `w = V z` in the right singular basis
//! of the projected matrix `X̂ = U D V'`. What remains is a problem in `z`
//! with `Ẽ = D²`, `d = V'X̂'Y` and the linear constraint block
//! `B = [Ẽ Z_k, D U'Ŝ]`. `γ = 0, 1, ∞` have closed forms; any other `γ` is
//! solved through the scalar fixed point `ρ = z(ρ)'Ẽ z(ρ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{JicoError, Result};
use crate::linalg::{
    column_basis, hstack, orthonormal_complement, pinv_symmetric, sym_eigen_desc, thin_svd,
};

/// Singular values below this fraction of the largest are dropped.
pub const RANK_TOL: f64 = 1e-10;
/// `‖P'd‖ ≤ DEGENERATE_TOL · ‖d‖` means the response carries no signal in
/// the feasible space.
pub const DEGENERATE_TOL: f64 = 1e-10;
/// Required relative residual `|z(ρ)'Ẽz(ρ) − ρ| / ρ` of an accepted fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const FIXED_POINT_STARTS: usize = 16;
pub const FIXED_POINT_MAX_ITER: usize = 200;

const CONSTRAINT_RANK_TOL: f64 = 1e-10;
const PROJECTION_TOL: f64 = 1e-12;
const POLE_OFFSET: f64 = 1e-7;

/// The continuum parameter `γ ∈ [0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Gamma(f64);

impl Gamma {
    pub const OLS: Gamma = Gamma(0.0);
    pub const PLS: Gamma = Gamma(1.0);
    pub const PCR: Gamma = Gamma(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            return Err(JicoError::InvalidParameter(format!(
                "gamma must lie in [0, inf], got {value}"
            )));
        }
        Ok(Gamma(value))
    }

    /// From `a = γ / (γ + 1) ∈ [0, 1]`; `a = 1` is `γ = ∞`.
    pub fn from_a(a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(JicoError::InvalidParameter(format!(
                "a must lie in [0, 1], got {a}"
            )));
        }
        if a == 1.0 {
            Ok(Gamma::PCR)
        } else {
            Ok(Gamma(a / (1.0 - a)))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn a(self) -> f64 {
        if self.0.is_infinite() {
            1.0
        } else {
            self.0 / (self.0 + 1.0)
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Weight constraints `Ŵ` (p × K_c) and score constraints `Ŝ` (n × K_s).
/// Either block may have zero columns.
#[derive(Debug, Clone)]
pub struct CrConstraints {
    pub weights: DMatrix<f64>,
    pub scores: DMatrix<f64>,
}

impl CrConstraints {
    pub fn none(n: usize, p: usize) -> Self {
        CrConstraints {
            weights: DMatrix::zeros(p, 0),
            scores: DMatrix::zeros(n, 0),
        }
    }

    pub fn new(weights: DMatrix<f64>, scores: DMatrix<f64>) -> Self {
        CrConstraints { weights, scores }
    }
}

/// The SVD-reduced problem on which each direction is solved.
#[derive(Debug, Clone)]
pub struct ReducedCrProblem {
    /// Right singular factor of `X̂`, p × m.
    pub v: DMatrix<f64>,
    /// Singular values of `X̂`, non-increasing.
    pub singular_values: DVector<f64>,
    /// Left singular factor of `X̂`, n × m.
    pub left_factor: DMatrix<f64>,
    /// Diagonal of `Ẽ = D²`.
    pub e_tilde: DVector<f64>,
    /// `d = V'X̂'Y`.
    pub d: DVector<f64>,
    /// `D U'Ŝ`, m × K_s.
    pub score_block: DMatrix<f64>,
}

impl ReducedCrProblem {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Constraint block `B = [Ẽ Z_k, D U'Ŝ]`.
    pub fn constraint_block(&self, previous: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.rank();
        let ez = DMatrix::from_diagonal(&self.e_tilde) * previous;
        hstack(&[&ez, &self.score_block], m)
    }

    /// Reconstructs `X̂` from the factors.
    pub fn projected_design(&self) -> DMatrix<f64> {
        &self.left_factor * DMatrix::from_diagonal(&self.singular_values) * self.v.transpose()
    }
}

/// Projects out the weight constraints and reduces to singular coordinates.
pub fn reduce(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    constraints: &CrConstraints,
) -> Result<ReducedCrProblem> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(JicoError::DimensionMismatch(format!(
            "X has {n} rows but Y has length {}",
            y.len()
        )));
    }
    if constraints.weights.nrows() != p {
        return Err(JicoError::DimensionMismatch(format!(
            "weight constraints have {} rows, expected {p}",
            constraints.weights.nrows()
        )));
    }
    if constraints.scores.nrows() != n {
        return Err(JicoError::DimensionMismatch(format!(
            "score constraints have {} rows, expected {n}",
            constraints.scores.nrows()
        )));
    }
    let x_hat = if constraints.weights.ncols() > 0 {
        let q = column_basis(&constraints.weights, RANK_TOL);
        x - (x * &q) * q.transpose()
    } else {
        x.clone()
    };
    let scale = x.norm();
    let svd = thin_svd(&x_hat, RANK_TOL);
    if svd.rank() == 0 || svd.sigma[0] <= PROJECTION_TOL * scale {
        return Err(JicoError::DegenerateProjection);
    }
    let e_tilde = svd.sigma.map(|s| s * s);
    let ut = svd.u.transpose();
    let d = (&ut * y).component_mul(&svd.sigma);
    let mut score_block = &ut * &constraints.scores;
    for (i, s) in svd.sigma.iter().enumerate() {
        score_block.row_mut(i).scale_mut(*s);
    }
    Ok(ReducedCrProblem {
        v: svd.v,
        singular_values: svd.sigma,
        left_factor: svd.u,
        e_tilde,
        d,
        score_block,
    })
}

/// One extracted direction.
#[derive(Debug, Clone)]
pub struct CrDirection {
    /// Reduced coordinates, unit norm.
    pub z: DVector<f64>,
    /// `w = V z`, unit norm.
    pub w: DVector<f64>,
    /// `z'Ẽz = ‖X̂w‖²`.
    pub rho: f64,
    /// `z'd = w'X̂'Y`.
    pub tau: f64,
    /// `τ² ρ^(γ−1)`; for `γ = ∞` the variance `ρ`.
    pub objective: f64,
    /// Present when the direction came from the fixed-point solver.
    pub fixed_point: Option<FixedPointSolution>,
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub rho: f64,
    pub z: DVector<f64>,
    /// `|z(ρ*)'Ẽz(ρ*) − ρ*| / ρ*`.
    pub relative_residual: f64,
    /// Every distinct fixed point found, as `(ρ, log objective)`.
    pub candidates: Vec<(f64, f64)>,
    /// Whether `B'A⁻¹B` had to be pseudo-inverted at the accepted point.
    pub pseudo_inverse_used: bool,
}

fn log_objective(tau: f64, rho: f64, gamma: Gamma) -> f64 {
    if gamma.is_infinite() {
        rho.ln()
    } else {
        2.0 * tau.abs().ln() + (gamma.value() - 1.0) * rho.ln()
    }
}

fn objective_value(tau: f64, rho: f64, gamma: Gamma) -> f64 {
    if gamma.is_infinite() {
        rho
    } else {
        tau * tau * rho.powf(gamma.value() - 1.0)
    }
}

/// Orthonormal basis for the span of the constraint columns, each column
/// normalised first so that differently scaled blocks are treated alike.
fn constraint_basis(b: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = b
        .column_iter()
        .filter_map(|c| {
            let nrm = c.norm();
            (nrm > 0.0 && nrm.is_finite()).then(|| c / nrm)
        })
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(b.nrows(), 0);
    }
    column_basis(&DMatrix::from_columns(&cols), CONSTRAINT_RANK_TOL)
}

/// Solves for the next direction given the reduced coordinates of the
/// directions already extracted (`previous`, m × (k−1)).
pub fn solve_direction(
    reduced: &ReducedCrProblem,
    gamma: Gamma,
    previous: &DMatrix<f64>,
) -> Result<CrDirection> {
    let m = reduced.rank();
    if previous.nrows() != m {
        return Err(JicoError::DimensionMismatch(format!(
            "previous directions have {} rows, expected {m}",
            previous.nrows()
        )));
    }
    let b = constraint_basis(&reduced.constraint_block(previous));
    if b.ncols() >= m {
        return Err(JicoError::RankExhausted {
            rank: m,
            constraints: b.ncols(),
        });
    }
    let p_basis = if b.ncols() == 0 {
        DMatrix::identity(m, m)
    } else {
        orthonormal_complement(&b)
    };
    let e = &reduced.e_tilde;
    let d = &reduced.d;
    let pd = p_basis.transpose() * d;
    if !gamma.is_infinite() {
        let d_norm = d.norm();
        if pd.norm() <= DEGENERATE_TOL * d_norm || d_norm == 0.0 {
            return Err(JicoError::DegenerateDirection { norm: pd.norm() });
        }
    }

    let mut fixed_point = None;
    let mut z = if gamma.is_infinite() {
        let pep = restricted_gram(&p_basis, e);
        let (_, vecs) = sym_eigen_desc(&pep);
        &p_basis * vecs.column(0)
    } else if gamma.value() == 0.0 {
        let pep = restricted_gram(&p_basis, e);
        let (inv, _) = pinv_symmetric(&pep, 1e-14);
        &p_basis * (inv * &pd)
    } else if gamma.value() == 1.0 {
        &p_basis * &pd
    } else {
        let sol = fixed_point_rho(e, &b, d, gamma)?;
        let z = sol.z.clone();
        fixed_point = Some(sol);
        z
    };
    let nrm = z.norm();
    if !(nrm > 0.0 && nrm.is_finite()) {
        return Err(JicoError::DegenerateDirection { norm: 0.0 });
    }
    z /= nrm;

    let mut w = &reduced.v * &z;
    let flip = if gamma.is_infinite() {
        let (imax, _) = w.iter().enumerate().fold((0, 0.0_f64), |acc, (i, v)| {
            if v.abs() > acc.1 {
                (i, v.abs())
            } else {
                acc
            }
        });
        w[imax] < 0.0
    } else {
        z.dot(d) < 0.0
    };
    if flip {
        z.neg_mut();
        w.neg_mut();
    }
    if let Some(fp) = fixed_point.as_mut() {
        fp.z = z.clone();
    }
    let rho = z.component_mul(e).dot(&z);
    let tau = z.dot(d);
    Ok(CrDirection {
        objective: objective_value(tau, rho, gamma),
        z,
        w,
        rho,
        tau,
        fixed_point,
    })
}

fn restricted_gram(p: &DMatrix<f64>, e: &DVector<f64>) -> DMatrix<f64> {
    let mut ep = p.clone();
    for (i, ei) in e.iter().enumerate() {
        ep.row_mut(i).scale_mut(*ei);
    }
    p.transpose() * ep
}

/// `z(ρ) = Mq / ‖Mq‖` with `M = A⁻¹ − A⁻¹B(B'A⁻¹B)⁻¹B'A⁻¹`,
/// `A = γρ^(γ−1) I + (1−γ)ρ^(γ−2) Ẽ` and `q = ρ^(γ−1) d`.
///
/// `A` is evaluated as `ρ^(γ−2) (γρ I + (1−γ)Ẽ)` and the positive factors
/// `ρ^(γ−2)` and `ρ^(γ−1)` are dropped: they rescale `Mq` by `ρ > 0` and
/// vanish under the normalisation, while the powers themselves overflow
/// for large `γ`.
struct FixedPointMap<'a> {
    e: &'a DVector<f64>,
    b: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
    gamma: f64,
}

impl FixedPointMap<'_> {
    fn z(&self, rho: f64) -> Option<(DVector<f64>, bool)> {
        let g = self.gamma;
        let mut a_inv = DVector::zeros(self.e.len());
        for (i, ei) in self.e.iter().enumerate() {
            let den = g * rho + (1.0 - g) * ei;
            let scale = g * rho + (1.0 - g).abs() * ei;
            if den.abs() <= 1e-14 * scale {
                return None;
            }
            a_inv[i] = 1.0 / den;
        }
        let mut mq = a_inv.component_mul(self.d);
        let mut pinv_used = false;
        if self.b.ncols() > 0 {
            let mut ab = self.b.clone();
            for (i, ai) in a_inv.iter().enumerate() {
                ab.row_mut(i).scale_mut(*ai);
            }
            let gram = self.b.transpose() * &ab;
            let (gram_inv, dropped) = pinv_symmetric(&gram, 1e-12);
            pinv_used = dropped;
            let correction = &ab * (gram_inv * (ab.transpose() * self.d));
            mq -= correction;
        }
        let nrm = mq.norm();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return None;
        }
        Some((mq / nrm, pinv_used))
    }

    fn residual(&self, rho: f64) -> Option<f64> {
        let (z, _) = self.z(rho)?;
        Some(z.component_mul(self.e).dot(&z) - rho)
    }

    fn derivative(&self, rho: f64) -> Option<f64> {
        let h = 1e-6 * rho;
        let up = self.residual(rho + h)?;
        let down = self.residual(rho - h)?;
        let der = (up - down) / (2.0 * h);
        der.is_finite().then_some(der)
    }

    /// Damped Newton from `rho0`; returns the last iterate and its residual.
    fn newton(&self, rho0: f64, max_iter: usize) -> Option<(f64, f64)> {
        let mut rho = rho0;
        let mut f = self.residual(rho)?;
        for _ in 0..max_iter {
            if f.abs() <= 1e-13 * rho {
                break;
            }
            let Some(der) = self.derivative(rho) else {
                break;
            };
            if der == 0.0 {
                break;
            }
            let step = f / der;
            let mut accepted = false;
            let mut lambda = 1.0;
            for _ in 0..30 {
                let cand = rho - lambda * step;
                if cand > 0.0 {
                    if let Some(fc) = self.residual(cand) {
                        if fc.abs() < f.abs() {
                            rho = cand;
                            f = fc;
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some((rho, f))
    }

    /// Bisection on a sign change of the residual. The limit may be a pole
    /// rather than a root; the caller checks the residual.
    fn bisect(
        &self,
        mut lo: f64,
        mut hi: f64,
        mut f_lo: f64,
        max_iter: usize,
    ) -> Option<(f64, f64)> {
        for _ in 0..max_iter {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let f_mid = match self.residual(mid) {
                Some(v) => v,
                None => self.residual(mid * (1.0 + 1e-9))?,
            };
            if f_mid == 0.0 {
                return Some((mid, 0.0));
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        let rho = 0.5 * (lo + hi);
        let f = self.residual(rho)?;
        // A few Newton steps polish the bracketed root.
        self.newton(rho, 5).or(Some((rho, f)))
    }
}

/// Solves `ρ = z(ρ)'Ẽ z(ρ)` from a log-spaced grid of starts in
/// `[λ_min(Ẽ)/100, λ_max(Ẽ)]`. Each start runs damped Newton; starts that
/// stall fall back to bisection on the surrounding grid bracket, and every
/// grid sign change is bisected as well. Among the distinct fixed points the
/// one with the largest objective is returned.
pub fn fixed_point_rho(
    e_tilde: &DVector<f64>,
    b: &DMatrix<f64>,
    d: &DVector<f64>,
    gamma: Gamma,
) -> Result<FixedPointSolution> {
    let g = gamma.value();
    if !(g > 0.0 && g.is_finite() && g != 1.0) {
        return Err(JicoError::InvalidParameter(format!(
            "fixed point solve needs 0 < gamma < inf, gamma != 1; got {gamma}"
        )));
    }
    if e_tilde.is_empty() || e_tilde.len() != d.len() || b.nrows() != d.len() {
        return Err(JicoError::DimensionMismatch(
            "fixed point inputs have inconsistent sizes".into(),
        ));
    }
    let map = FixedPointMap {
        e: e_tilde,
        b,
        d,
        gamma: g,
    };
    let e_max = e_tilde.max();
    let e_min = e_tilde.min();
    let lo = e_min * 1e-2;
    let ratio = (e_max / lo).ln();
    let starts: Vec<f64> = (0..FIXED_POINT_STARTS)
        .map(|i| lo * (ratio * i as f64 / (FIXED_POINT_STARTS - 1) as f64).exp())
        .collect();
    // For γ > 1 the map has poles at ρ = (γ − 1)ẽ_i / γ, and the residual
    // keeps its sign across each of them. A pair of roots flanking a pole
    // therefore hides between two grid points, so points just beside every
    // pole join the scan and the Newton starts.
    let mut pole_sides = Vec::new();
    if g > 1.0 {
        for &ei in e_tilde.iter() {
            let pole = (g - 1.0) * ei / g;
            if pole > lo && pole < e_max {
                pole_sides.push(pole * (1.0 - POLE_OFFSET));
                pole_sides.push(pole * (1.0 + POLE_OFFSET));
            }
        }
    }
    let mut scan: Vec<f64> = starts.iter().chain(&pole_sides).copied().collect();
    scan.sort_by(f64::total_cmp);
    scan.dedup();
    let grid: Vec<Option<f64>> = scan.iter().map(|&r| map.residual(r)).collect();
    let sign_changes: Vec<usize> = (0..scan.len() - 1)
        .filter(|&i| matches!((grid[i], grid[i + 1]), (Some(fa), Some(fb)) if fa.signum() != fb.signum()))
        .collect();

    let mut found: Vec<(f64, f64)> = Vec::new();
    let mut start_residuals = Vec::with_capacity(starts.len());
    let accept = |rho: f64, f: f64, found: &mut Vec<(f64, f64)>| {
        if rho > 0.0 && (f / rho).abs() <= FIXED_POINT_TOL {
            found.push((rho, (f / rho).abs()));
        }
    };

    let bracket_around = |rho: f64| -> Option<(f64, f64, f64)> {
        sign_changes
            .iter()
            .map(|&i| {
                let dist = if rho < scan[i] {
                    scan[i] - rho
                } else if rho > scan[i + 1] {
                    rho - scan[i + 1]
                } else {
                    0.0
                };
                (i, dist)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| (scan[i], scan[i + 1], grid[i].unwrap()))
    };

    for (k, &rho0) in starts.iter().chain(&pole_sides).enumerate() {
        let start = if map.residual(rho0).is_some() {
            rho0
        } else {
            rho0 * (1.0 + 1e-7)
        };
        let outcome = map.newton(start, FIXED_POINT_MAX_ITER);
        let converged = matches!(outcome, Some((rho, f)) if (f / rho).abs() <= FIXED_POINT_TOL);
        if k < starts.len() {
            start_residuals.push(outcome.map_or(f64::INFINITY, |(r, f)| (f / r).abs()));
        }
        match outcome {
            Some((rho, f)) if converged => accept(rho, f, &mut found),
            other => {
                let here = other.map(|(r, _)| r).unwrap_or(rho0);
                if let Some((a, b, fa)) = bracket_around(here) {
                    if let Some((rho, f)) = map.bisect(a, b, fa, FIXED_POINT_MAX_ITER) {
                        accept(rho, f, &mut found);
                    }
                }
            }
        }
    }
    for &i in &sign_changes {
        if let Some((rho, f)) =
            map.bisect(scan[i], scan[i + 1], grid[i].unwrap(), FIXED_POINT_MAX_ITER)
        {
            accept(rho, f, &mut found);
        }
    }

    if found.is_empty() {
        return Err(JicoError::FixedPointFailure {
            starts,
            residuals: start_residuals,
        });
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for (rho, res) in found {
        match distinct.last_mut() {
            Some(last) if (rho - last.0).abs() <= 1e-8 * rho => {
                if res < last.1 {
                    *last = (rho, res);
                }
            }
            _ => distinct.push((rho, res)),
        }
    }

    let mut best: Option<(f64, f64, DVector<f64>, bool, f64)> = None;
    let mut candidates = Vec::with_capacity(distinct.len());
    for (rho, res) in distinct {
        let Some((z, pinv)) = map.z(rho) else {
            continue;
        };
        let z_rho = z.component_mul(e_tilde).dot(&z);
        let tau = z.dot(d);
        let lobj = log_objective(tau, z_rho, gamma);
        candidates.push((rho, lobj));
        if best.as_ref().is_none_or(|b| lobj > b.1) {
            best = Some((rho, lobj, z, pinv, res));
        }
    }
    let (rho, _, z, pinv, res) = best.ok_or_else(|| JicoError::FixedPointFailure {
        starts: starts.clone(),
        residuals: start_residuals.clone(),
    })?;
    Ok(FixedPointSolution {
        rho,
        z,
        relative_residual: res,
        candidates,
        pseudo_inverse_used: pinv,
    })
}

/// Why a direction sequence stopped before reaching the requested count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PathStop {
    RankExhausted { component: usize },
    Degenerate { component: usize },
}

/// A sequence of directions extracted from one design.
#[derive(Debug, Clone)]
pub struct CrPath {
    /// p × K' matrix of unit weight vectors.
    pub weights: DMatrix<f64>,
    pub directions: Vec<CrDirection>,
    pub stop: Option<PathStop>,
}

impl CrPath {
    fn empty(p: usize) -> Self {
        CrPath {
            weights: DMatrix::zeros(p, 0),
            directions: Vec::new(),
            stop: None,
        }
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn max_fixed_point_residual(&self) -> Option<f64> {
        self.directions
            .iter()
            .filter_map(|d| d.fixed_point.as_ref().map(|f| f.relative_residual))
            .reduce(f64::max)
    }
}

/// Extracts up to `count` directions sequentially. The sequence stops early,
/// with a warning, if the feasible space is exhausted or the response has no
/// component left in it.
pub fn extract_directions(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: Gamma,
    count: usize,
    constraints: &CrConstraints,
) -> Result<CrPath> {
    let p = x.ncols();
    if count == 0 {
        return Ok(CrPath::empty(p));
    }
    let reduced = reduce(x, y, constraints)?;
    extract_from_reduced(&reduced, gamma, count)
}

pub fn extract_from_reduced(
    reduced: &ReducedCrProblem,
    gamma: Gamma,
    count: usize,
) -> Result<CrPath> {
    let p = reduced.v.nrows();
    let m = reduced.rank();
    let mut path = CrPath::empty(p);
    let mut zs: Vec<DVector<f64>> = Vec::with_capacity(count);
    for k in 0..count {
        let previous = if zs.is_empty() {
            DMatrix::zeros(m, 0)
        } else {
            DMatrix::from_columns(&zs)
        };
        match solve_direction(reduced, gamma, &previous) {
            Ok(dir) => {
                zs.push(dir.z.clone());
                path.directions.push(dir);
            }
            Err(JicoError::RankExhausted { .. }) => {
                log::warn!("direction {k}: feasible space exhausted, stopping at {k} directions");
                path.stop = Some(PathStop::RankExhausted { component: k });
                break;
            }
            Err(JicoError::DegenerateDirection { norm }) => {
                log::warn!(
                    "direction {k}: response orthogonal to feasible space (|P'd| = {norm:.2e})"
                );
                path.stop = Some(PathStop::Degenerate { component: k });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if !path.directions.is_empty() {
        let ws: Vec<DVector<f64>> = path.directions.iter().map(|d| d.w.clone()).collect();
        path.weights = DMatrix::from_columns(&ws);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_toy() -> DMatrix<f64> {
        let r = 2.0_f64.sqrt();
        DMatrix::from_row_slice(4, 2, &[r, 0.0, -r, 0.0, 0.0, 1.0, 0.0, -1.0])
    }

    fn first(x: &DMatrix<f64>, y: &DVector<f64>, gamma: Gamma) -> CrDirection {
        let red = reduce(x, y, &CrConstraints::none(x.nrows(), x.ncols())).unwrap();
        solve_direction(&red, gamma, &DMatrix::zeros(red.rank(), 0)).unwrap()
    }

    #[test]
    fn gamma_a_map() {
        assert!(Gamma::from_a(1.0).unwrap().is_infinite());
        assert_eq!(Gamma::from_a(0.5).unwrap().value(), 1.0);
        assert_eq!(Gamma::from_a(0.0).unwrap().value(), 0.0);
        assert_eq!(Gamma::PCR.a(), 1.0);
        assert!((Gamma::new(3.0).unwrap().a() - 0.75).abs() < 1e-15);
        assert!(Gamma::from_a(1.5).is_err());
        assert!(Gamma::new(-1.0).is_err());
    }

    #[test]
    fn pls_direction_on_diagonal_toy() {
        let y = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let dir = first(&diag_toy(), &y, Gamma::PLS);
        assert!((dir.w[0] - 1.0).abs() < 1e-12 && dir.w[1].abs() < 1e-12);
    }

    #[test]
    fn pcr_direction_on_diagonal_toy() {
        for y in [vec![1.0, -1.0, 0.0, 0.0], vec![0.3, 0.1, -2.0, 1.0]] {
            let dir = first(&diag_toy(), &DVector::from_vec(y), Gamma::PCR);
            assert!((dir.w[0] - 1.0).abs() < 1e-12 && dir.w[1].abs() < 1e-12);
        }
    }

    #[test]
    fn ols_direction_on_diagonal_toy() {
        // (X'X)^{-1} X'Y = (2√2/4, 2/2) = (0.7071, 1), normalised.
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        let dir = first(&diag_toy(), &y, Gamma::OLS);
        let s3 = 3.0_f64.sqrt();
        assert!((dir.w[0] - 1.0 / s3).abs() < 1e-12);
        assert!((dir.w[1] - 2.0_f64.sqrt() / s3).abs() < 1e-12);
    }

    #[test]
    fn isotropic_fixed_point_is_exact() {
        let e = DVector::from_element(3, 2.5);
        let d = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let sol = fixed_point_rho(&e, &DMatrix::zeros(3, 0), &d, Gamma::new(2.0).unwrap()).unwrap();
        assert!((sol.rho - 2.5).abs() < 1e-12);
        assert!((sol.z.dot(&d).abs() - d.norm()).abs() < 1e-10);
    }

    #[test]
    fn fixed_point_rejects_closed_form_gammas() {
        let e = DVector::from_element(2, 1.0);
        let d = DVector::from_element(2, 1.0);
        for g in [Gamma::OLS, Gamma::PLS, Gamma::PCR] {
            assert!(fixed_point_rho(&e, &DMatrix::zeros(2, 0), &d, g).is_err());
        }
    }

    #[test]
    fn previous_direction_constraint_is_honoured() {
        let x = DMatrix::from_fn(8, 3, |i, j| {
            ((i * 3 + j) as f64 * 0.7).sin() + 0.1 * j as f64
        });
        let y = DVector::from_fn(8, |i, _| (i as f64).cos());
        let red = reduce(&x, &y, &CrConstraints::none(8, 3)).unwrap();
        let g = Gamma::new(0.5).unwrap();
        let z1 = solve_direction(&red, g, &DMatrix::zeros(3, 0)).unwrap().z;
        let prev = DMatrix::from_columns(std::slice::from_ref(&z1));
        let z2 = solve_direction(&red, g, &prev).unwrap().z;
        let ez1 = red.e_tilde.component_mul(&z1);
        assert!(z2.dot(&ez1).abs() < 1e-8 * ez1.norm());
    }

    #[test]
    fn degenerate_projection() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -2.0, 0.0, 1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let c = CrConstraints::new(w, DMatrix::zeros(3, 0));
        assert!(matches!(
            reduce(&x, &y, &c),
            Err(JicoError::DegenerateProjection)
        ));
    }

    #[test]
    fn projection_annihilates_constraint() {
        let x = DMatrix::from_row_slice(
            4,
            3,
            &[
                0.2, -1.0, 0.5, 1.3, 0.4, -0.7, -0.6, 0.9, 1.1, -0.9, -0.3, -0.9,
            ],
        );
        let y = DVector::from_vec(vec![1.0, -0.5, 0.25, -0.75]);
        let w = DMatrix::from_row_slice(3, 1, &[0.48, -0.6, 0.64]);
        let red = reduce(&x, &y, &CrConstraints::new(w.clone(), DMatrix::zeros(4, 0))).unwrap();
        let x_hat = red.projected_design();
        assert!((&x_hat * &w).norm() < 1e-12);
        let direct = &x - &x * &w * w.transpose() / w.norm_squared();
        assert!((x_hat - direct).norm() < 1e-8 * x.norm());
    }

    #[test]
    fn zero_response_is_degenerate() {
        let red = reduce(&diag_toy(), &DVector::zeros(4), &CrConstraints::none(4, 2)).unwrap();
        let r = solve_direction(&red, Gamma::PLS, &DMatrix::zeros(2, 0));
        assert!(matches!(r, Err(JicoError::DegenerateDirection { .. })));
    }

    #[test]
    fn ols_has_a_single_direction() {
        let x = DMatrix::from_fn(10, 3, |i, j| ((i + 2 * j) as f64 * 1.3).sin());
        let y = DVector::from_fn(10, |i, _| (i as f64 * 0.4).cos());
        let path = extract_directions(&x, &y, Gamma::OLS, 3, &CrConstraints::none(10, 3)).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(path.stop, Some(PathStop::Degenerate { component: 1 }));
    }

    #[test]
    fn rank_exhaustion_truncates_the_path() {
        let x = DMatrix::from_fn(10, 2, |i, j| ((i + 3 * j) as f64 * 0.9).sin());
        let y = DVector::from_fn(10, |i, _| i as f64);
        let path = extract_directions(&x, &y, Gamma::PCR, 4, &CrConstraints::none(10, 2)).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path.stop, Some(PathStop::RankExhausted { component: 2 }));
    }

    #[test]
    fn zero_count_is_empty() {
        let path = extract_directions(
            &diag_toy(),
            &DVector::zeros(4),
            Gamma::PLS,
            0,
            &CrConstraints::none(4, 2),
        )
        .unwrap();
        assert_eq!(path.weights.shape(), (2, 0));
    }
}
