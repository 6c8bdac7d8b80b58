//! CSV datasets, CSV matrices and JSON model files.
//!
//! Dataset files have the header `group,y,x1,…,xp`. The `y` column is
//! optional for feature-only files used in prediction. Groups keep the order
//! in which their labels first appear.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cr::Gamma;
use crate::data::{CenteringInfo, CenteringMode, Group, GroupedDataset};
use crate::error::{JicoError, Result};
use crate::fit::{FitDiagnostics, JicoModel, ObjectiveVectors};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Rows of a dataset file in file order.
#[derive(Debug, Clone)]
pub struct LabeledRows {
    pub labels: Vec<String>,
    pub y: Option<DVector<f64>>,
    pub x: DMatrix<f64>,
}

impl LabeledRows {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Groups the rows by label. Fails when the file has no response column.
    pub fn into_dataset(self) -> Result<GroupedDataset> {
        let mut order: Vec<String> = Vec::new();
        for label in &self.labels {
            if !order.contains(label) {
                order.push(label.clone());
            }
        }
        self.into_dataset_ordered(&order)
    }

    /// Groups the rows in the given label order; every label must occur and
    /// no other label may.
    pub fn into_dataset_ordered(self, order: &[String]) -> Result<GroupedDataset> {
        let y = self
            .y
            .ok_or_else(|| JicoError::InvalidDataset("no `y` column".into()))?;
        if let Some(bad) = self.labels.iter().find(|l| !order.contains(l)) {
            return Err(JicoError::UnknownGroup(bad.clone()));
        }
        let mut members: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, label) in self.labels.iter().enumerate() {
            members.entry(label.clone()).or_default().push(i);
        }
        if let Some(missing) = order.iter().find(|l| !members.contains_key(*l)) {
            return Err(JicoError::InvalidDataset(format!(
                "group `{missing}` has no rows"
            )));
        }
        let groups = order
            .iter()
            .map(|label| {
                let rows = &members[label];
                let x = DMatrix::from_fn(rows.len(), self.x.ncols(), |i, j| self.x[(rows[i], j)]);
                let yg = DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r]));
                Group::new(label.clone(), x, yg)
            })
            .collect();
        GroupedDataset::new(groups)
    }
}

fn csv_error(e: csv::Error) -> JicoError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    JicoError::Parse {
        line,
        message: e.to_string(),
    }
}

/// Parses a dataset. With `require_response` a `y` column must follow `group`.
pub fn parse_rows<R: Read>(reader: R, require_response: bool) -> Result<LabeledRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("group") {
        return Err(JicoError::Parse {
            line: 1,
            message: "first column must be `group`".into(),
        });
    }
    let has_y = header.get(1) == Some("y");
    if require_response && !has_y {
        return Err(JicoError::Parse {
            line: 1,
            message: "second column must be `y`".into(),
        });
    }
    let first_feature = if has_y { 2 } else { 1 };
    let p = header.len().saturating_sub(first_feature);
    if p == 0 {
        return Err(JicoError::Parse {
            line: 1,
            message: "no feature columns".into(),
        });
    }
    let mut labels = Vec::new();
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let number = |col: usize| -> Result<f64> {
            let field = &record[col];
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| JicoError::Parse {
                    line,
                    message: format!(
                        "column `{}` is not a finite number: `{field}`",
                        &header[col]
                    ),
                })
        };
        labels.push(record[0].to_string());
        if has_y {
            ys.push(number(1)?);
        }
        for col in first_feature..header.len() {
            xs.push(number(col)?);
        }
    }
    let n = labels.len();
    Ok(LabeledRows {
        labels,
        y: has_y.then(|| DVector::from_vec(ys)),
        x: DMatrix::from_row_slice(n, p, &xs),
    })
}

pub fn read_rows(path: &Path, require_response: bool) -> Result<LabeledRows> {
    parse_rows(fs::File::open(path)?, require_response)
}

pub fn read_dataset(path: &Path) -> Result<GroupedDataset> {
    read_rows(path, true)?.into_dataset()
}

pub fn write_dataset<W: Write>(data: &GroupedDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["group".to_string(), "y".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(csv_error)?;
    for grp in data.groups() {
        for i in 0..grp.len() {
            let mut rec = vec![grp.label.clone(), grp.y[i].to_string()];
            rec.extend(grp.x.row(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Headerless CSV, one matrix row per line, shortest round-trip decimals.
pub fn write_matrix<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(f64::to_string))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix`]; `cols` is needed for the
/// empty case.
pub fn read_matrix<R: Read>(input: R, cols: usize) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut data = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols {
            return Err(JicoError::Parse {
                line,
                message: format!("expected {cols} fields, found {}", record.len()),
            });
        }
        for field in &record {
            data.push(field.parse::<f64>().map_err(|e| JicoError::Parse {
                line,
                message: e.to_string(),
            })?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Writes through a sibling temporary file and a rename, so readers never
/// see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| JicoError::Io(e.error))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl MatrixRecord {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m
                .row_iter()
                .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
                .collect(),
        }
    }

    fn to_matrix(&self, what: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        if self.rows != rows || self.cols != cols || self.data.len() != rows * cols {
            return Err(JicoError::ModelFile(format!(
                "{what} is {}×{} with {} entries, expected {rows}×{cols}",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CenteringRecord {
    mode: CenteringMode,
    x_means: Vec<Vec<f64>>,
    y_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConvergenceRecord {
    converged: bool,
    n_iter: usize,
    tol: f64,
    history: Vec<ObjectiveVectors>,
}

/// The persisted form of a fitted model together with its group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    format_version: u32,
    a: f64,
    /// `null` stands for `γ = ∞`.
    gamma: Option<f64>,
    p: usize,
    joint_rank: usize,
    individual_ranks: Vec<usize>,
    group_labels: Vec<String>,
    w: MatrixRecord,
    w_g: Vec<MatrixRecord>,
    u: MatrixRecord,
    u_g: Vec<MatrixRecord>,
    alpha: Vec<f64>,
    alpha_g: Vec<Vec<f64>>,
    centering: CenteringRecord,
    convergence: ConvergenceRecord,
    diagnostics: FitDiagnostics,
}

impl ModelFile {
    pub fn from_model(model: &JicoModel, labels: &[String]) -> Result<Self> {
        if labels.len() != model.n_groups() {
            return Err(JicoError::ModelFile(format!(
                "{} labels for {} groups",
                labels.len(),
                model.n_groups()
            )));
        }
        Ok(ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            a: model.gamma.a(),
            gamma: (!model.gamma.is_infinite()).then(|| model.gamma.value()),
            p: model.p(),
            joint_rank: model.joint_rank,
            individual_ranks: model.individual_ranks.clone(),
            group_labels: labels.to_vec(),
            w: MatrixRecord::from_matrix(&model.w),
            w_g: model.w_g.iter().map(MatrixRecord::from_matrix).collect(),
            u: MatrixRecord::from_matrix(&model.u),
            u_g: model.u_g.iter().map(MatrixRecord::from_matrix).collect(),
            alpha: model.alpha.iter().copied().collect(),
            alpha_g: model
                .alpha_g
                .iter()
                .map(|a| a.iter().copied().collect())
                .collect(),
            centering: CenteringRecord {
                mode: model.centering.mode,
                x_means: model
                    .centering
                    .x_means
                    .iter()
                    .map(|m| m.iter().copied().collect())
                    .collect(),
                y_means: model.centering.y_means.clone(),
            },
            convergence: ConvergenceRecord {
                converged: model.converged,
                n_iter: model.n_iter,
                tol: model.tol,
                history: model.history.clone(),
            },
            diagnostics: model.diagnostics.clone(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.group_labels
    }

    /// Rebuilds the model, checking every block against the declared ranks
    /// and dimension.
    pub fn to_model(&self) -> Result<JicoModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(JicoError::ModelFile(format!(
                "format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let g_count = self.group_labels.len();
        let (p, k) = (self.p, self.joint_rank);
        let counts = [
            ("individual_ranks", self.individual_ranks.len()),
            ("w_g", self.w_g.len()),
            ("u_g", self.u_g.len()),
            ("alpha_g", self.alpha_g.len()),
            ("x_means", self.centering.x_means.len()),
            ("y_means", self.centering.y_means.len()),
        ];
        if let Some((what, n)) = counts.iter().find(|(_, n)| *n != g_count) {
            return Err(JicoError::ModelFile(format!(
                "{what} has {n} entries for {g_count} groups"
            )));
        }
        if self.alpha.len() != k {
            return Err(JicoError::ModelFile(format!(
                "alpha has {} entries, expected {k}",
                self.alpha.len()
            )));
        }
        let gamma = match self.gamma {
            Some(v) => Gamma::new(v)?,
            None => Gamma::PCR,
        };
        let mut w_g = Vec::with_capacity(g_count);
        let mut u_g = Vec::with_capacity(g_count);
        let mut alpha_g = Vec::with_capacity(g_count);
        for g in 0..g_count {
            let kg = self.individual_ranks[g];
            w_g.push(self.w_g[g].to_matrix(&format!("w_g[{g}]"), p, kg)?);
            u_g.push(self.u_g[g].to_matrix(&format!("u_g[{g}]"), kg, p)?);
            if self.alpha_g[g].len() != kg {
                return Err(JicoError::ModelFile(format!(
                    "alpha_g[{g}] has {} entries, expected {kg}",
                    self.alpha_g[g].len()
                )));
            }
            alpha_g.push(DVector::from_vec(self.alpha_g[g].clone()));
            if self.centering.x_means[g].len() != p {
                return Err(JicoError::ModelFile(format!(
                    "x_means[{g}] has {} entries, expected {p}",
                    self.centering.x_means[g].len()
                )));
            }
        }
        Ok(JicoModel {
            gamma,
            joint_rank: k,
            individual_ranks: self.individual_ranks.clone(),
            w: self.w.to_matrix("w", p, k)?,
            w_g,
            u: self.u.to_matrix("u", k, p)?,
            u_g,
            alpha: DVector::from_vec(self.alpha.clone()),
            alpha_g,
            centering: CenteringInfo {
                mode: self.centering.mode,
                x_means: self
                    .centering
                    .x_means
                    .iter()
                    .map(|m| DVector::from_vec(m.clone()))
                    .collect(),
                y_means: self.centering.y_means.clone(),
            },
            history: self.convergence.history.clone(),
            converged: self.convergence.converged,
            n_iter: self.convergence.n_iter,
            tol: self.convergence.tol,
            diagnostics: self.diagnostics.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_model(model: &JicoModel, labels: &[String], path: &Path) -> Result<()> {
    write_atomic(
        path,
        ModelFile::from_model(model, labels)?.to_json()?.as_bytes(),
    )
}

/// Returns the model and its group labels.
pub fn load_model(path: &Path) -> Result<(JicoModel, Vec<String>)> {
    let file = ModelFile::from_json(&fs::read_to_string(path)?)?;
    Ok((file.to_model()?, file.group_labels))
}
