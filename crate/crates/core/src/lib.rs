//! Joint and individual component regression for grouped data.
//!
//! Each group's design and response are split into a part shared by every
//! group and a part specific to the group. Both parts are extracted with
//! continuum regression, which interpolates between ordinary least squares,
//! partial least squares and principal component regression through a single
//! parameter.

pub mod baselines;
pub mod cr;
pub mod data;
mod error;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod selection;
pub mod simulation;

pub use cr::{extract_directions, CrConstraints, CrDirection, CrPath, Gamma};
pub use data::{BlockState, CenteringInfo, CenteringMode, Group, GroupedDataset};
pub use error::{FitStage, JicoError, Result};
pub use fit::{
    decompose, fit, identifiability_report, multi_start_fit, predict, ConvergenceRule, FitOptions,
    InitStrategy, JicoModel, ObjectiveVectors,
};
pub use io::{load_model, read_dataset, save_model, ModelFile};
pub use selection::{cv_grid, kfold_split, CvReport, SelectionGrid};
pub use simulation::{
    gen_replicate, mse_curve, run_benchmark, BenchmarkReport, Method, Setting, SimulationSpec,
};
