//! Synthetic two-component benchmarks and the replication harness.
//!
//! Each group's response is `α X_g w + α_g X_g w_g + e_g` with standard
//! normal designs. The weights are built from top singular vectors of the
//! training design, so that either PCR, PLS or OLS directions recover them.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    fit_baseline, predict_baseline, BaselineKind, RidgePenalty, Scope, RIDGE_FOLDS,
};
use crate::cr::Gamma;
use crate::data::{CenteringMode, Group, GroupedDataset};
use crate::error::{JicoError, Result};
use crate::fit::{fit, identifiability_report, predict, FitOptions};
use crate::linalg::thin_svd;
use crate::rng::{derive_seed, Stream};
use crate::selection::mean_and_se;

const PURPOSE_TRAIN: u64 = 1;
const PURPOSE_TEST: u64 = 2;
const PURPOSE_NOISE_TRAIN: u64 = 3;
const PURPOSE_NOISE_TEST: u64 = 4;
const PURPOSE_METHOD: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// Weights are top principal directions; favours γ = ∞.
    Pcr,
    /// Weights average the top half of the principal directions; favours γ = 1.
    Pls,
    /// Global signal only, spread over every direction; favours γ = 0.
    OlsGlobal,
    /// Group signal only, spread over every direction; favours γ = 0.
    OlsGroup,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::Pcr,
        Setting::Pls,
        Setting::OlsGlobal,
        Setting::OlsGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Pcr => "pcr",
            Setting::Pls => "pls",
            Setting::OlsGlobal => "ols-global",
            Setting::OlsGroup => "ols-group",
        }
    }

    /// Accepts the canonical names plus `ols-a` / `ols-b` for the two OLS
    /// settings.
    pub fn parse(s: &str) -> Option<Setting> {
        match s {
            "ols-a" => Some(Setting::OlsGlobal),
            "ols-b" => Some(Setting::OlsGroup),
            _ => Setting::ALL.into_iter().find(|x| x.name() == s),
        }
    }

    /// Joint and individual ranks of the generating model.
    pub fn true_ranks(self) -> (usize, usize) {
        match self {
            Setting::Pcr | Setting::Pls => (1, 1),
            Setting::OlsGlobal => (1, 0),
            Setting::OlsGroup => (0, 1),
        }
    }

    /// Components used by the PLS and PCR baselines.
    pub fn baseline_components(self) -> usize {
        match self {
            Setting::Pcr | Setting::Pls => 2,
            Setting::OlsGlobal | Setting::OlsGroup => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub setting: Setting,
    pub groups: usize,
    pub p: usize,
    /// Training rows per group.
    pub n_train: usize,
    /// Test rows per group.
    pub n_test: usize,
    pub alpha: f64,
    pub alpha_g: f64,
    pub noise_var: f64,
    /// Principal directions averaged into the joint weight.
    pub q: usize,
    /// Principal directions averaged into each individual weight.
    pub q_g: usize,
    pub reps: usize,
    pub seed: u64,
    /// Centering applied by every fit. The generating model has zero means
    /// and no intercept, so the default is `None`.
    pub centering: CenteringMode,
}

impl SimulationSpec {
    pub fn new(setting: Setting) -> Self {
        let groups = 2;
        let n_train = 50;
        let n = groups * n_train;
        let (alpha, alpha_g, q, q_g) = match setting {
            Setting::Pcr => (1.0, 1.0, 1, 1),
            Setting::Pls => (1.0, 0.5, n / 2, n_train / 2),
            Setting::OlsGlobal => (1.0, 0.0, n, n_train),
            Setting::OlsGroup => (0.0, 1.0, n, n_train),
        };
        SimulationSpec {
            setting,
            groups,
            p: 200,
            n_train,
            n_test: 50,
            alpha,
            alpha_g,
            noise_var: 0.04,
            q,
            q_g,
            reps: 50,
            seed: 1,
            centering: CenteringMode::None,
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_centering(mut self, centering: CenteringMode) -> Self {
        self.centering = centering;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(JicoError::InvalidParameter(m));
        if self.groups == 0 || self.n_train == 0 || self.n_test == 0 || self.p == 0 {
            return bad("groups, p and group sizes must be positive".into());
        }
        if self.noise_var.is_nan() || self.noise_var <= 0.0 {
            return bad(format!(
                "noise variance must be positive, got {}",
                self.noise_var
            ));
        }
        let rank = (self.groups * self.n_train).min(self.p);
        if self.q == 0 || self.q > rank {
            return bad(format!("q = {} must lie in 1..={rank}", self.q));
        }
        if self.q_g == 0 || self.q_g > self.n_train.min(self.p - 1) {
            return bad(format!(
                "q_g = {} exceeds the rank of the projected group design",
                self.q_g
            ));
        }
        Ok(())
    }
}

/// Weights used to generate a replicate.
#[derive(Debug, Clone)]
pub struct Truth {
    pub w: DVector<f64>,
    pub w_g: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct Replicate {
    pub train: GroupedDataset,
    pub test: GroupedDataset,
    pub truth: Truth,
}

fn normal_matrix(rows: usize, cols: usize, stream: &mut Stream) -> DMatrix<f64> {
    // Row-major fill keeps the stream layout independent of storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = stream.normal();
        }
    }
    m
}

/// Sign is fixed so that the largest-magnitude entry is positive.
fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    v
}

/// `V_q 1_q / √q` over the top `q` right singular vectors of `x`.
fn averaged_direction(x: &DMatrix<f64>, q: usize) -> Result<DVector<f64>> {
    let svd = thin_svd(x, 1e-10);
    if svd.rank() < q {
        return Err(JicoError::InvalidParameter(format!(
            "design has rank {} but {q} directions were requested",
            svd.rank()
        )));
    }
    let mut w = DVector::zeros(x.ncols());
    for j in 0..q {
        w += canonical_sign(svd.v.column(j).into_owned());
    }
    Ok(w / (q as f64).sqrt())
}

fn response(
    x: &DMatrix<f64>,
    truth: &Truth,
    g: usize,
    spec: &SimulationSpec,
    noise: &mut Stream,
) -> DVector<f64> {
    let signal = (x * &truth.w) * spec.alpha + (x * &truth.w_g[g]) * spec.alpha_g;
    let sd = spec.noise_var.sqrt();
    DVector::from_fn(x.nrows(), |i, _| signal[i] + sd * noise.normal())
}

/// Draws replicate `rep`; identical inputs give bit-identical output.
pub fn gen_replicate(spec: &SimulationSpec, rep: usize) -> Result<Replicate> {
    spec.validate()?;
    let r = rep as u64;
    let x_train: Vec<DMatrix<f64>> = (0..spec.groups)
        .map(|g| {
            normal_matrix(
                spec.n_train,
                spec.p,
                &mut Stream::new(spec.seed, &[r, g as u64, PURPOSE_TRAIN]),
            )
        })
        .collect();
    let refs: Vec<&DMatrix<f64>> = x_train.iter().collect();
    let stacked = crate::linalg::vstack(&refs, spec.p);

    let w = averaged_direction(&stacked, spec.q)?;
    let projector = DMatrix::identity(spec.p, spec.p) - &w * w.transpose();
    let w_g = x_train
        .iter()
        .map(|x| {
            let wg = averaged_direction(&(x * &projector), spec.q_g)?;
            // Remove round-off leakage onto w.
            Ok(&wg - &w * w.dot(&wg))
        })
        .collect::<Result<Vec<_>>>()?;
    let truth = Truth { w, w_g };

    let labels: Vec<String> = (1..=spec.groups).map(|g| format!("g{g}")).collect();
    let mut train = Vec::with_capacity(spec.groups);
    let mut test = Vec::with_capacity(spec.groups);
    for (g, x) in x_train.into_iter().enumerate() {
        let gi = g as u64;
        let y = response(
            &x,
            &truth,
            g,
            spec,
            &mut Stream::new(spec.seed, &[r, gi, PURPOSE_NOISE_TRAIN]),
        );
        train.push(Group::new(labels[g].clone(), x, y));
        let xt = normal_matrix(
            spec.n_test,
            spec.p,
            &mut Stream::new(spec.seed, &[r, gi, PURPOSE_TEST]),
        );
        let yt = response(
            &xt,
            &truth,
            g,
            spec,
            &mut Stream::new(spec.seed, &[r, gi, PURPOSE_NOISE_TEST]),
        );
        test.push(Group::new(labels[g].clone(), xt, yt));
    }
    Ok(Replicate {
        train: GroupedDataset::new(train)?,
        test: GroupedDataset::new(test)?,
        truth,
    })
}

/// A method compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Jico {
        a: f64,
        joint_rank: usize,
        individual_rank: usize,
    },
    Baseline {
        kind: BaselineKind,
        scope: Scope,
    },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Jico {
                a,
                joint_rank,
                individual_rank,
            } => {
                let g = Gamma::from_a(*a)
                    .map(|g| g.to_string())
                    .unwrap_or_else(|_| "?".into());
                format!("JICO gamma={g} K={joint_rank} Kg={individual_rank}")
            }
            Method::Baseline { kind, scope } => {
                let scope = match scope {
                    Scope::Global => "Global",
                    Scope::GroupSpecific => "Group",
                };
                let kind = match kind {
                    BaselineKind::Ridge(_) => "Ridge".to_string(),
                    BaselineKind::Pls(k) => format!("PLS({k})"),
                    BaselineKind::Pcr(k) => format!("PCR({k})"),
                };
                format!("{scope} {kind}")
            }
        }
    }

    /// The nine rows of a standard comparison: JICO at γ = 0, 1, ∞ with
    /// the generating ranks, then ridge, PLS and PCR in both scopes.
    pub fn standard_set(setting: Setting) -> Vec<Method> {
        let (k, kg) = setting.true_ranks();
        let c = setting.baseline_components();
        let mut out: Vec<Method> = [0.0, 0.5, 1.0]
            .into_iter()
            .map(|a| Method::Jico {
                a,
                joint_rank: k,
                individual_rank: kg,
            })
            .collect();
        for scope in [Scope::Global, Scope::GroupSpecific] {
            // The seed here is a placeholder; each replicate derives its own.
            let ridge = BaselineKind::Ridge(RidgePenalty::CrossValidated {
                folds: RIDGE_FOLDS,
                seed: 0,
            });
            for kind in [ridge, BaselineKind::Pls(c), BaselineKind::Pcr(c)] {
                out.push(Method::Baseline { kind, scope });
            }
        }
        out
    }
}

/// Health of the JICO fits run during a benchmark.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitHealth {
    pub fits: usize,
    pub converged: usize,
    pub failed: usize,
    pub max_fixed_point_residual: f64,
    pub fixed_point_solves: usize,
    pub max_identifiability: f64,
    pub max_iterations: usize,
}

impl FitHealth {
    fn merge(&mut self, other: &FitHealth) {
        self.fits += other.fits;
        self.converged += other.converged;
        self.failed += other.failed;
        self.max_fixed_point_residual = self
            .max_fixed_point_residual
            .max(other.max_fixed_point_residual);
        self.fixed_point_solves += other.fixed_point_solves;
        self.max_identifiability = self.max_identifiability.max(other.max_identifiability);
        self.max_iterations = self.max_iterations.max(other.max_iterations);
    }
}

/// Test MSE of one method on one replicate: per group, then pooled.
#[derive(Debug, Clone)]
struct Score {
    groups: Vec<f64>,
    overall: f64,
}

fn score(
    test: &GroupedDataset,
    mut predict_group: impl FnMut(usize, &DMatrix<f64>) -> Result<DVector<f64>>,
) -> Result<Score> {
    let mut groups = Vec::with_capacity(test.n_groups());
    let (mut sse, mut n) = (0.0, 0);
    for (g, grp) in test.groups().iter().enumerate() {
        let e = (predict_group(g, &grp.x)? - &grp.y).norm_squared();
        groups.push(e / grp.len() as f64);
        sse += e;
        n += grp.len();
    }
    Ok(Score {
        groups,
        overall: sse / n as f64,
    })
}

fn run_method(
    method: &Method,
    rep: &Replicate,
    spec: &SimulationSpec,
    seed: u64,
    health: &mut FitHealth,
) -> Result<Score> {
    match *method {
        Method::Jico {
            a,
            joint_rank,
            individual_rank,
        } => {
            let opts =
                FitOptions::equal(Gamma::from_a(a)?, joint_rank, individual_rank, spec.groups)
                    .with_centering(spec.centering);
            health.fits += 1;
            let model = match fit(&rep.train, &opts) {
                Ok(m) => m,
                Err(e) => {
                    health.failed += 1;
                    return Err(e);
                }
            };
            health.max_iterations = health.max_iterations.max(model.n_iter);
            health.fixed_point_solves += model.diagnostics.fixed_point_solves;
            health.max_fixed_point_residual = health
                .max_fixed_point_residual
                .max(model.diagnostics.max_fixed_point_residual);
            if model.converged {
                health.converged += 1;
                for r in identifiability_report(&model, &rep.train)? {
                    health.max_identifiability = health.max_identifiability.max(r.max());
                }
            }
            score(&rep.test, |g, x| predict(&model, x, g))
        }
        Method::Baseline { kind, scope } => {
            let kind = match kind {
                BaselineKind::Ridge(RidgePenalty::CrossValidated { folds, .. }) => {
                    BaselineKind::Ridge(RidgePenalty::CrossValidated { folds, seed })
                }
                other => other,
            };
            let model = fit_baseline(
                &rep.train,
                kind,
                scope,
                spec.centering != CenteringMode::None,
            )?;
            score(&rep.test, |g, x| predict_baseline(&model, x, Some(g)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    /// `(mean, standard error)` per group.
    pub groups: Vec<(f64, f64)>,
    pub overall: (f64, f64),
    /// Replications in which the method failed and was excluded.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub setting: Setting,
    pub reps: usize,
    pub methods: Vec<MethodSummary>,
    pub health: FitHealth,
}

impl BenchmarkReport {
    pub fn overall(&self, label: &str) -> Option<f64> {
        self.methods
            .iter()
            .find(|m| m.label == label)
            .map(|m| m.overall.0)
    }
}

fn summarise(label: String, scores: Vec<Option<Score>>, groups: usize) -> MethodSummary {
    let ok: Vec<&Score> = scores.iter().flatten().collect();
    let failures = scores.len() - ok.len();
    let stat = |f: &dyn Fn(&Score) -> f64| -> (f64, f64) {
        if ok.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_and_se(&ok.iter().map(|s| f(s)).collect::<Vec<_>>())
        }
    };
    MethodSummary {
        label,
        groups: (0..groups)
            .map(|g| stat(&|s: &Score| s.groups[g]))
            .collect(),
        overall: stat(&|s: &Score| s.overall),
        failures,
    }
}

/// Runs every method on `spec.reps` replicates. Replicates run in
/// parallel; results are merged in replicate order.
pub fn run_benchmark(spec: &SimulationSpec, methods: &[Method]) -> Result<BenchmarkReport> {
    spec.validate()?;
    let per_rep: Vec<(Vec<Option<Score>>, FitHealth)> = (0..spec.reps)
        .into_par_iter()
        .map(|r| {
            let rep = gen_replicate(spec, r)?;
            let mut health = FitHealth::default();
            let scores = methods
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let seed = derive_seed(spec.seed, &[r as u64, i as u64, PURPOSE_METHOD]);
                    match run_method(m, &rep, spec, seed, &mut health) {
                        Ok(s) => Some(s),
                        Err(e) => {
                            log::warn!("replicate {r}, {}: {e}", m.label());
                            None
                        }
                    }
                })
                .collect();
            Ok((scores, health))
        })
        .collect::<Result<_>>()?;
    let mut health = FitHealth::default();
    for (_, h) in &per_rep {
        health.merge(h);
    }
    let methods = methods
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let scores = per_rep.iter().map(|(s, _)| s[i].clone()).collect();
            summarise(m.label(), scores, spec.groups)
        })
        .collect();
    Ok(BenchmarkReport {
        setting: spec.setting,
        reps: spec.reps,
        methods,
        health,
    })
}

/// One point of an MSE-versus-a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub joint_rank: usize,
    pub individual_rank: usize,
    pub a: f64,
    pub mean: f64,
    pub std_err: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseCurve {
    pub setting: Setting,
    pub points: Vec<CurvePoint>,
    pub health: FitHealth,
}

impl MseCurve {
    /// The `a` with the smallest mean MSE for a rank combination.
    pub fn argmin(&self, joint_rank: usize, individual_rank: usize) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| {
                p.joint_rank == joint_rank
                    && p.individual_rank == individual_rank
                    && p.mean.is_finite()
            })
            .min_by(|x, y| x.mean.total_cmp(&y.mean))
            .map(|p| p.a)
    }
}

/// Overall test MSE of JICO for every rank combination and every `a`.
pub fn mse_curve(
    spec: &SimulationSpec,
    combos: &[(usize, usize)],
    a_grid: &[f64],
) -> Result<MseCurve> {
    let methods: Vec<Method> = combos
        .iter()
        .flat_map(|&(k, kg)| {
            a_grid.iter().map(move |&a| Method::Jico {
                a,
                joint_rank: k,
                individual_rank: kg,
            })
        })
        .collect();
    let report = run_benchmark(spec, &methods)?;
    let points = methods
        .iter()
        .zip(&report.methods)
        .map(|(m, s)| match *m {
            Method::Jico {
                a,
                joint_rank,
                individual_rank,
            } => CurvePoint {
                joint_rank,
                individual_rank,
                a,
                mean: s.overall.0,
                std_err: s.overall.1,
                failures: s.failures,
            },
            Method::Baseline { .. } => unreachable!("curves contain only JICO fits"),
        })
        .collect();
    Ok(MseCurve {
        setting: spec.setting,
        points,
        health: report.health,
    })
}
