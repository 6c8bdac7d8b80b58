//! `jico`: fit, predict, cross-validate, decompose and benchmark from the
//! command line. Every output file is written atomically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use jico::cr::Gamma;
use jico::data::{CenteringMode, GroupedDataset};
use jico::fit::{decompose, fit, identifiability_report, predict, FitOptions, JicoModel};
use jico::io::{load_model, read_dataset, read_rows, save_model, write_atomic, write_matrix};
use jico::selection::{cv_grid, default_a_grid, CvReport, SelectionGrid, DEFAULT_FOLDS};
use jico::simulation::{mse_curve, run_benchmark, Method, Setting, SimulationSpec};

#[derive(Parser)]
#[command(
    name = "jico",
    version,
    about = "Joint and individual component regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a grouped dataset and save it as JSON.
    Fit(FitArgs),
    /// Predict responses for a feature file with a saved model.
    Predict(PredictArgs),
    /// Cross-validate a grid of ranks and continuum parameters.
    Cv(CvArgs),
    /// Write per-group joint and individual components.
    Decompose(DecomposeArgs),
    /// Run a simulation benchmark and write its tables.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Centering {
    Global,
    PerGroup,
    None,
}

impl From<Centering> for CenteringMode {
    fn from(c: Centering) -> Self {
        match c {
            Centering::Global => CenteringMode::Global,
            Centering::PerGroup => CenteringMode::PerGroup,
            Centering::None => CenteringMode::None,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Largest joint rank in the grid.
    #[arg(long = "max-K", default_value_t = 2)]
    max_joint_rank: usize,
    /// Largest individual rank in the grid.
    #[arg(long = "max-Kg", default_value_t = 2)]
    max_individual_rank: usize,
    /// Search individual ranks per group instead of one shared value.
    #[arg(long)]
    unequal_ranks: bool,
    /// Comma-separated values of a; defaults to 0, 0.05, ..., 1.
    #[arg(long, value_delimiter = ',')]
    a_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Joint rank.
    #[arg(long = "K", default_value_t = 1)]
    joint_rank: usize,
    /// Individual rank, either one value for every group or one per group.
    #[arg(long = "Kg", value_delimiter = ',', default_value = "1")]
    individual_ranks: Vec<usize>,
    /// Continuum parameter a = gamma / (gamma + 1) in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    a: f64,
    #[arg(long, value_enum, default_value_t = Centering::Global)]
    centering: Centering,
    #[arg(long, default_value_t = jico::fit::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = jico::fit::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Choose K, K_g and a by cross-validation before the final fit.
    #[arg(long)]
    cv: bool,
    /// Seed for the cross-validation split; required with --cv.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Also write the fit report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with a `group` column, an optional `y` column and the features.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Centering::Global)]
    centering: Centering,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value = "cv.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// pcr, pls, ols-global (ols-a) or ols-group (ols-b).
    #[arg(long)]
    setting: String,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Centering used by every fit; the generating model has no intercept.
    #[arg(long, value_enum, default_value_t = Centering::None)]
    centering: Centering,
    /// Also write the MSE-versus-a curve.
    #[arg(long)]
    curve: bool,
    /// Rank pairs `K:Kg` for the curve; defaults to the true ranks.
    #[arg(long, value_delimiter = ',')]
    combos: Option<Vec<String>>,
    /// Comma-separated values of a for the curve; defaults to 0, 0.05, ..., 1.
    #[arg(long, value_delimiter = ',')]
    a_grid: Option<Vec<f64>>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_data(path: &Path) -> Result<GroupedDataset> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn expand_ranks(ranks: &[usize], groups: usize) -> Result<Vec<usize>> {
    match ranks.len() {
        1 => Ok(vec![ranks[0]; groups]),
        n if n == groups => Ok(ranks.to_vec()),
        n => bail!("--Kg has {n} values for {groups} groups"),
    }
}

fn selection_grid(grid: &GridArgs, seed: u64, centering: Centering) -> SelectionGrid {
    SelectionGrid {
        max_joint_rank: grid.max_joint_rank,
        max_individual_rank: grid.max_individual_rank,
        equal_individual_ranks: !grid.unequal_ranks,
        a_grid: grid.a_grid.clone().unwrap_or_else(default_a_grid),
        folds: grid.folds,
        seed,
        centering: centering.into(),
        ..SelectionGrid::default()
    }
}

fn join<T: ToString>(items: &[T], sep: &str) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

fn cv_table(report: &CvReport) -> String {
    let mut out = String::from("joint_rank,individual_ranks,a,mean_mse,std_err,error\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &report.cells {
        let error = c.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        let _ = writeln!(
            out,
            "{},{},{},{},{},\"{}\"",
            c.joint_rank,
            join(&c.individual_ranks, ";"),
            c.a,
            opt(c.mean_mse),
            opt(c.std_err),
            error
        );
    }
    out
}

fn fit_report(model: &JicoModel, data: &GroupedDataset) -> Result<String> {
    let mut r = String::new();
    let _ = writeln!(r, "a = {}, gamma = {}", model.gamma.a(), model.gamma);
    let _ = writeln!(r, "joint rank K = {}", model.joint_rank);
    let _ = writeln!(
        r,
        "individual ranks K_g = {}",
        join(&model.individual_ranks, ", ")
    );
    if model.joint_rank == 0 && model.individual_ranks.iter().all(|&k| k == 0) {
        let _ = writeln!(r, "null model: constant predictor per group");
    }
    let _ = writeln!(
        r,
        "iterations = {}, converged = {}",
        model.n_iter, model.converged
    );
    let _ = writeln!(
        r,
        "max fixed-point residual = {:e}",
        model.diagnostics.max_fixed_point_residual
    );
    for note in &model.diagnostics.truncations {
        let _ = writeln!(r, "truncated: {note}");
    }
    let ident = identifiability_report(model, data)?;
    for (g, grp) in data.groups().iter().enumerate() {
        let pred = predict(model, &grp.x, g)?;
        let mse = (pred - &grp.y).norm_squared() / grp.len() as f64;
        let i = &ident[g];
        let _ = writeln!(
            r,
            "group {}: n = {}, in-sample MSE = {mse}, |W'W_g| = {:e}, |W'X'XW_g| = {:e}, |S'T| = {:e}",
            grp.label,
            grp.len(),
            i.weights,
            i.gram,
            i.scores
        );
    }
    Ok(r)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let (gamma, joint_rank, individual_ranks) = if args.cv {
        let seed = args.seed.context("--cv needs --seed")?;
        let report = cv_grid(&data, &selection_grid(&args.grid, seed, args.centering))?;
        let best = report.best_cell();
        println!(
            "cross-validation picked K = {}, K_g = {}, a = {} (MSE {})",
            best.joint_rank,
            join(&best.individual_ranks, ","),
            best.a,
            best.mean_mse.unwrap_or(f64::NAN)
        );
        (
            Gamma::from_a(best.a)?,
            best.joint_rank,
            best.individual_ranks.clone(),
        )
    } else {
        (
            Gamma::from_a(args.a)?,
            args.joint_rank,
            expand_ranks(&args.individual_ranks, data.n_groups())?,
        )
    };
    let opts = FitOptions::new(gamma, joint_rank, individual_ranks)
        .with_tol(args.tol)
        .with_max_iter(args.max_iter)
        .with_centering(args.centering.into());
    let model = fit(&data, &opts)?;
    save_model(&model, &data.labels(), &args.out)?;
    let report = fit_report(&model, &data)?;
    print!("{report}");
    if let Some(path) = &args.report {
        write_atomic(path, report.as_bytes())?;
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let (model, labels) = load_model(&args.model)?;
    let rows =
        read_rows(&args.data, false).with_context(|| format!("reading {}", args.data.display()))?;
    if rows.x.ncols() != model.p() {
        bail!(
            "feature file has {} columns, model expects {}",
            rows.x.ncols(),
            model.p()
        );
    }
    let mut out = String::from("row,group,prediction\n");
    for i in 0..rows.len() {
        let label = &rows.labels[i];
        let g = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| jico::JicoError::UnknownGroup(label.clone()))?;
        let x = DMatrix::from_fn(1, rows.x.ncols(), |_, j| rows.x[(i, j)]);
        let _ = writeln!(out, "{},{},{}", i + 1, label, predict(&model, &x, g)?[0]);
    }
    match &args.out {
        Some(path) => write_atomic(path, out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    let data = load_data(&args.data)?;
    let report = cv_grid(
        &data,
        &selection_grid(&args.grid, args.seed, args.centering),
    )?;
    write_atomic(&args.out, cv_table(&report).as_bytes())?;
    let best = report.best_cell();
    println!(
        "best: K = {}, K_g = {}, a = {}, MSE = {}",
        best.joint_rank,
        join(&best.individual_ranks, ","),
        best.a,
        best.mean_mse.unwrap_or(f64::NAN)
    );
    Ok(())
}

/// Labels become file-name fragments with anything unusual replaced.
fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn matrix_csv(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf)?;
    Ok(buf)
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let (model, labels) = load_model(&args.model)?;
    let data = read_rows(&args.data, true)?.into_dataset_ordered(&labels)?;
    let parts = decompose(&model, &data)?;
    let ident = identifiability_report(&model, &data)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let mut sidecar = Vec::new();
    for (g, part) in parts.iter().enumerate() {
        let stem = file_stem(&labels[g]);
        let as_column =
            |v: &nalgebra::DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        let files = [
            (format!("J_{stem}.csv"), part.joint.clone()),
            (format!("A_{stem}.csv"), part.individual.clone()),
            (format!("J_Y_{stem}.csv"), as_column(&part.joint_response)),
            (
                format!("A_Y_{stem}.csv"),
                as_column(&part.individual_response),
            ),
        ];
        for (name, m) in &files {
            write_atomic(&args.out_dir.join(name), &matrix_csv(m)?)?;
        }
        sidecar.push(serde_json::json!({
            "group": labels[g],
            "files": files.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
            "identifiability": ident[g],
        }));
    }
    let doc = serde_json::json!({
        "groups": sidecar,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "diagnostics": model.diagnostics,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_atomic(
        &args.out_dir.join("decomposition_diagnostics.json"),
        text.as_bytes(),
    )?;
    Ok(())
}

fn parse_combo(s: &str) -> Result<(usize, usize)> {
    let (k, kg) = s
        .split_once(':')
        .with_context(|| format!("combo `{s}` is not K:Kg"))?;
    Ok((k.trim().parse()?, kg.trim().parse()?))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let setting = Setting::parse(&args.setting)
        .with_context(|| format!("unknown setting `{}`", args.setting))?;
    let spec = SimulationSpec::new(setting)
        .with_reps(args.reps)
        .with_seed(args.seed)
        .with_centering(args.centering.into());
    std::fs::create_dir_all(&args.out_dir)?;
    let name = setting.name();

    let report = run_benchmark(&spec, &Method::standard_set(setting))?;
    let mut table = String::from("method,group,mean_mse,std_err,failures\n");
    for m in &report.methods {
        for (g, (mean, se)) in m.groups.iter().enumerate() {
            let _ = writeln!(table, "{},{},{mean},{se},{}", m.label, g + 1, m.failures);
        }
        let _ = writeln!(
            table,
            "{},overall,{},{},{}",
            m.label, m.overall.0, m.overall.1, m.failures
        );
    }
    write_atomic(
        &args.out_dir.join(format!("table1_{name}.csv")),
        table.as_bytes(),
    )?;
    let mut diagnostics = serde_json::json!({ "table": report.health });

    if args.curve {
        let combos = match &args.combos {
            Some(list) => list
                .iter()
                .map(|s| parse_combo(s))
                .collect::<Result<Vec<_>>>()?,
            None => vec![setting.true_ranks()],
        };
        let grid = args.a_grid.clone().unwrap_or_else(default_a_grid);
        let curve = mse_curve(&spec, &combos, &grid)?;
        let mut csv =
            String::from("joint_rank,individual_rank,a,gamma,mean_mse,std_err,failures\n");
        for p in &curve.points {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                p.joint_rank,
                p.individual_rank,
                p.a,
                Gamma::from_a(p.a)?,
                p.mean,
                p.std_err,
                p.failures
            );
        }
        write_atomic(
            &args.out_dir.join(format!("curve_{name}.csv")),
            csv.as_bytes(),
        )?;
        diagnostics["curve"] = serde_json::to_value(&curve.health)?;
    }
    let mut text = serde_json::to_string_pretty(&diagnostics)?;
    text.push('\n');
    write_atomic(
        &args.out_dir.join(format!("diagnostics_{name}.json")),
        text.as_bytes(),
    )?;

    for m in &report.methods {
        println!("{:<32} {:.4} ({:.4})", m.label, m.overall.0, m.overall.1);
    }
    Ok(())
}
