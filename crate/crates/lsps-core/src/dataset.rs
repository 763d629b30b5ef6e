//! Cohort data: loading, validation, and cross-validation fold assignment.

use std::collections::HashMap;
use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{LspsError, Result};
use crate::rng;
use crate::sparse::{Column, SparseMatrix};

/// The study outcome: one continuous value per subject, or a
/// (time, event-indicator) pair for survival analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Continuous(Vec<f64>),
    TimeToEvent { time: Vec<f64>, event: Vec<u8> },
}

impl Outcome {
    pub fn len(&self) -> usize {
        match self {
            Outcome::Continuous(y) => y.len(),
            Outcome::TimeToEvent { time, .. } => time.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(LspsError::Dimension(format!(
                "outcome length {} != subject count {}",
                self.len(),
                n
            )));
        }
        if let Outcome::TimeToEvent { time, event } = self {
            if let Some(i) = time.iter().position(|&t| !(t > 0.0)) {
                return Err(LspsError::Validation(format!(
                    "event time must be strictly positive; subject {} has {}",
                    i, time[i]
                )));
            }
            if let Some(i) = event.iter().position(|&e| e > 1) {
                return Err(LspsError::Validation(format!(
                    "event flag must be 0 or 1; subject {} has {}",
                    i, event[i]
                )));
            }
        }
        Ok(())
    }

    /// The outcome restricted to the given subjects, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Outcome {
        match self {
            Outcome::Continuous(y) => {
                Outcome::Continuous(rows.iter().map(|&i| y[i]).collect())
            }
            Outcome::TimeToEvent { time, event } => Outcome::TimeToEvent {
                time: rows.iter().map(|&i| time[i]).collect(),
                event: rows.iter().map(|&i| event[i]).collect(),
            },
        }
    }

    /// The vector screened against covariates when looking for instruments:
    /// the outcome itself, or the event indicator for survival outcomes.
    pub fn screening_vector(&self) -> Vec<f64> {
        match self {
            Outcome::Continuous(y) => y.clone(),
            Outcome::TimeToEvent { event, .. } => {
                event.iter().map(|&e| e as f64).collect()
            }
        }
    }
}

/// Immutable cohort: N subjects, M covariates, treatment, outcome.
#[derive(Debug, Clone)]
pub struct CohortDataset {
    n_subjects: usize,
    covariates: SparseMatrix,
    covariate_names: Vec<String>,
    treatment: Vec<u8>,
    outcome: Outcome,
}

impl CohortDataset {
    pub fn new(
        covariates: SparseMatrix,
        covariate_names: Vec<String>,
        treatment: Vec<u8>,
        outcome: Outcome,
    ) -> Result<Self> {
        let n = treatment.len();
        if covariates.n_rows() != n {
            return Err(LspsError::Dimension(format!(
                "covariate rows {} != treatment length {}",
                covariates.n_rows(),
                n
            )));
        }
        if covariate_names.len() != covariates.n_cols() {
            return Err(LspsError::Dimension(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                covariates.n_cols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(LspsError::Validation(format!(
                    "duplicate covariate name '{name}'"
                )));
            }
        }
        if let Some(i) = treatment.iter().position(|&t| t > 1) {
            return Err(LspsError::Validation(format!(
                "treatment must be 0 or 1; subject {} has {}",
                i, treatment[i]
            )));
        }
        outcome.validate(n)?;
        let n_treated = treatment.iter().filter(|&&t| t == 1).count();
        if n_treated == 0 || n_treated == n {
            return Err(LspsError::Validation(
                "cohort must contain at least one treated and one control subject"
                    .into(),
            ));
        }
        Ok(CohortDataset {
            n_subjects: n,
            covariates,
            covariate_names,
            treatment,
            outcome,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_cols()
    }

    pub fn covariates(&self) -> &SparseMatrix {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome(&self) -> &Outcome {
        &self.outcome
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1).count()
    }

    pub fn treated_fraction(&self) -> f64 {
        self.n_treated() as f64 / self.n_subjects as f64
    }

    /// Returns a copy without the named covariates (used by `--exclude`).
    pub fn without_covariates(&self, excluded: &HashSet<String>) -> Result<Self> {
        for name in excluded {
            if !self.covariate_names.contains(name) {
                return Err(LspsError::Validation(format!(
                    "excluded covariate '{name}' is not in the dataset"
                )));
            }
        }
        let keep: Vec<usize> = (0..self.n_covariates())
            .filter(|&j| !excluded.contains(&self.covariate_names[j]))
            .collect();
        let cols = keep
            .iter()
            .map(|&j| self.covariates.col(j).clone())
            .collect();
        let names = keep
            .iter()
            .map(|&j| self.covariate_names[j].clone())
            .collect();
        CohortDataset::new(
            SparseMatrix::new(self.n_subjects, cols),
            names,
            self.treatment.clone(),
            self.outcome.clone(),
        )
    }
}

/// Which columns of a dense CSV play which role.
#[derive(Debug, Clone)]
pub struct DenseSchema {
    pub treatment: String,
    pub outcome: OutcomeSchema,
}

#[derive(Debug, Clone)]
pub enum OutcomeSchema {
    Continuous(String),
    TimeToEvent { time: String, event: String },
}

impl DenseSchema {
    fn role_columns(&self) -> Vec<&str> {
        let mut v = vec![self.treatment.as_str()];
        match &self.outcome {
            OutcomeSchema::Continuous(y) => v.push(y),
            OutcomeSchema::TimeToEvent { time, event } => {
                v.push(time);
                v.push(event);
            }
        }
        v
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| LspsError::Parse {
        row,
        column: column.to_string(),
        message: format!("'{raw}' is not numeric"),
    })
}

fn parse_binary(raw: &str, row: usize, column: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(LspsError::Parse {
            row,
            column: column.to_string(),
            message: format!("expected 0 or 1, found '{other}'"),
        }),
    }
}

/// Loads a dense CSV with a header row. Columns not named in the schema are
/// covariates, in file order.
pub fn load_dense_csv(path: impl AsRef<Path>, schema: &DenseSchema) -> Result<CohortDataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| LspsError::Validation(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| LspsError::Validation(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() {
        return Err(LspsError::Validation(format!(
            "{}: empty file",
            path.display()
        )));
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(LspsError::Validation(format!(
                "duplicate column header '{h}'"
            )));
        }
    }
    let roles = schema.role_columns();
    let mut role_idx = HashMap::new();
    for role in &roles {
        let j = headers.iter().position(|h| h == role).ok_or_else(|| {
            LspsError::Validation(format!("missing required column '{role}'"))
        })?;
        role_idx.insert(*role, j);
    }
    let covariate_cols: Vec<usize> = (0..headers.len())
        .filter(|j| !role_idx.values().any(|r| r == j))
        .collect();

    let t_col = role_idx[schema.treatment.as_str()];
    let mut treatment = Vec::new();
    let mut covariate_rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();

    for (r, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| LspsError::Validation(format!("row {}: {e}", r + 1)))?;
        let row_no = r + 1; // 1-based data row for error messages
        treatment.push(parse_binary(&record[t_col], row_no, &headers[t_col])?);
        match &schema.outcome {
            OutcomeSchema::Continuous(name) => {
                let j = role_idx[name.as_str()];
                y.push(parse_cell(&record[j], row_no, name)?);
            }
            OutcomeSchema::TimeToEvent { time: tn, event: en } => {
                let jt = role_idx[tn.as_str()];
                let je = role_idx[en.as_str()];
                time.push(parse_cell(&record[jt], row_no, tn)?);
                event.push(parse_binary(&record[je], row_no, en)?);
            }
        }
        let row = covariate_cols
            .iter()
            .map(|&j| parse_cell(&record[j], row_no, &headers[j]))
            .collect::<Result<Vec<f64>>>()?;
        covariate_rows.push(row);
    }
    if covariate_rows.is_empty() {
        return Err(LspsError::Validation(format!(
            "{}: empty file (no data rows)",
            path.display()
        )));
    }

    let covariates = SparseMatrix::from_rows(&covariate_rows, covariate_cols.len());
    let names = covariate_cols
        .iter()
        .map(|&j| headers[j].clone())
        .collect();
    let outcome = match &schema.outcome {
        OutcomeSchema::Continuous(_) => Outcome::Continuous(y),
        OutcomeSchema::TimeToEvent { .. } => Outcome::TimeToEvent { time, event },
    };
    CohortDataset::new(covariates, names, treatment, outcome)
}

/// Writes a dataset back to the dense CSV format accepted by
/// [`load_dense_csv`] (treatment/outcome first, covariates in order).
pub fn write_dense_csv(dataset: &CohortDataset, path: impl AsRef<Path>) -> Result<(DenseSchema, ())> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| LspsError::Validation(format!("{}: {e}", path.display())))?;
    let schema = match dataset.outcome() {
        Outcome::Continuous(_) => DenseSchema {
            treatment: "treatment".into(),
            outcome: OutcomeSchema::Continuous("y".into()),
        },
        Outcome::TimeToEvent { .. } => DenseSchema {
            treatment: "treatment".into(),
            outcome: OutcomeSchema::TimeToEvent {
                time: "time".into(),
                event: "event".into(),
            },
        },
    };
    let mut header = vec!["treatment".to_string()];
    match dataset.outcome() {
        Outcome::Continuous(_) => header.push("y".into()),
        Outcome::TimeToEvent { .. } => {
            header.push("time".into());
            header.push("event".into());
        }
    }
    header.extend(dataset.covariate_names().iter().cloned());
    writer
        .write_record(&header)
        .map_err(|e| LspsError::Validation(e.to_string()))?;
    for i in 0..dataset.n_subjects() {
        let mut row = vec![dataset.treatment()[i].to_string()];
        match dataset.outcome() {
            Outcome::Continuous(y) => row.push(format_num(y[i])),
            Outcome::TimeToEvent { time, event } => {
                row.push(format_num(time[i]));
                row.push(event[i].to_string());
            }
        }
        for j in 0..dataset.n_covariates() {
            row.push(format_num(dataset.covariates().get(i, j)));
        }
        writer
            .write_record(&row)
            .map_err(|e| LspsError::Validation(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| LspsError::io(path.display().to_string(), e))?;
    Ok((schema, ()))
}

fn format_num(v: f64) -> String {
    // shortest representation that round-trips through f64
    let mut s = format!("{v}");
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Loads the sparse triplet format: a triplet CSV
/// (`subject_id,covariate_id,value`), a dictionary CSV (`covariate_id,name`),
/// and a subjects CSV (`subject_id,treatment[,y | ,time,event]`).
pub fn load_sparse(
    triplets: impl AsRef<Path>,
    dictionary: impl AsRef<Path>,
    subjects: impl AsRef<Path>,
) -> Result<CohortDataset> {
    // dictionary defines the column order
    let dict_path = dictionary.as_ref();
    let mut dict_reader = csv::Reader::from_path(dict_path)
        .map_err(|e| LspsError::Validation(format!("{}: {e}", dict_path.display())))?;
    let mut covariate_ids = Vec::new();
    let mut covariate_names = Vec::new();
    let mut col_of: HashMap<String, usize> = HashMap::new();
    for (r, record) in dict_reader.records().enumerate() {
        let record =
            record.map_err(|e| LspsError::Validation(format!("dictionary row {}: {e}", r + 1)))?;
        if record.len() < 2 {
            return Err(LspsError::Parse {
                row: r + 1,
                column: "dictionary".into(),
                message: "expected covariate_id,name".into(),
            });
        }
        let id = record[0].trim().to_string();
        if col_of.insert(id.clone(), covariate_ids.len()).is_some() {
            return Err(LspsError::Validation(format!(
                "duplicate covariate_id '{id}' in dictionary"
            )));
        }
        covariate_ids.push(id);
        covariate_names.push(record[1].trim().to_string());
    }

    // subjects file defines the row order
    let subj_path = subjects.as_ref();
    let mut subj_reader = csv::Reader::from_path(subj_path)
        .map_err(|e| LspsError::Validation(format!("{}: {e}", subj_path.display())))?;
    let headers: Vec<String> = subj_reader
        .headers()
        .map_err(|e| LspsError::Validation(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has = |name: &str| headers.iter().any(|h| h == name);
    if !has("subject_id") || !has("treatment") {
        return Err(LspsError::Validation(
            "subjects file must have subject_id and treatment columns".into(),
        ));
    }
    let continuous = has("y");
    if !continuous && !(has("time") && has("event")) {
        return Err(LspsError::Validation(
            "subjects file must have either a y column or time,event columns".into(),
        ));
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();

    let mut row_of: HashMap<String, usize> = HashMap::new();
    let mut treatment = Vec::new();
    let mut y = Vec::new();
    let mut time = Vec::new();
    let mut event = Vec::new();
    for (r, record) in subj_reader.records().enumerate() {
        let record =
            record.map_err(|e| LspsError::Validation(format!("subjects row {}: {e}", r + 1)))?;
        let id = record[idx("subject_id")].trim().to_string();
        if row_of.insert(id.clone(), treatment.len()).is_some() {
            return Err(LspsError::Validation(format!(
                "duplicate subject_id '{id}' in subjects file"
            )));
        }
        treatment.push(parse_binary(&record[idx("treatment")], r + 1, "treatment")?);
        if continuous {
            y.push(parse_cell(&record[idx("y")], r + 1, "y")?);
        } else {
            time.push(parse_cell(&record[idx("time")], r + 1, "time")?);
            event.push(parse_binary(&record[idx("event")], r + 1, "event")?);
        }
    }
    let n = treatment.len();

    let trip_path = triplets.as_ref();
    let mut trip_reader = csv::Reader::from_path(trip_path)
        .map_err(|e| LspsError::Validation(format!("{}: {e}", trip_path.display())))?;
    let mut entries: Vec<Vec<(u32, f64)>> = vec![Vec::new(); covariate_ids.len()];
    let mut seen_pairs = HashSet::new();
    for (r, record) in trip_reader.records().enumerate() {
        let record =
            record.map_err(|e| LspsError::Validation(format!("triplets row {}: {e}", r + 1)))?;
        let sid = record[0].trim();
        let cid = record[1].trim();
        let row = *row_of.get(sid).ok_or_else(|| {
            LspsError::Validation(format!("triplet references unknown subject_id '{sid}'"))
        })?;
        let col = *col_of.get(cid).ok_or_else(|| {
            LspsError::Validation(format!("triplet references unknown covariate_id '{cid}'"))
        })?;
        if !seen_pairs.insert((row, col)) {
            return Err(LspsError::Validation(format!(
                "duplicate triplet for subject '{sid}', covariate '{cid}'"
            )));
        }
        let value = parse_cell(&record[2], r + 1, "value")?;
        if value != 0.0 {
            entries[col].push((row as u32, value));
        }
    }

    let cols = entries
        .into_iter()
        .map(|mut cells| {
            cells.sort_unstable_by_key(|&(i, _)| i);
            if cells.iter().all(|&(_, v)| v == 1.0) {
                Column::Binary {
                    idx: cells.into_iter().map(|(i, _)| i).collect(),
                }
            } else {
                let (idx, val) = cells.into_iter().unzip();
                Column::Sparse { idx, val }
            }
        })
        .collect();
    let outcome = if continuous {
        Outcome::Continuous(y)
    } else {
        Outcome::TimeToEvent { time, event }
    };
    CohortDataset::new(SparseMatrix::new(n, cols), covariate_names, treatment, outcome)
}

/// Deterministic k-fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of: Vec<u32>,
    pub k: usize,
    pub seed: u64,
}

/// Assigns `n` subjects to `k` folds, balanced within one subject. Pure
/// function of `(n, k, seed)`.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(LspsError::Validation(format!(
            "fold count must satisfy 2 <= k <= n (k={k}, n={n})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[0xF01D, n as u64, k as u64]));
    let mut fold_of = vec![0u32; n];
    for (pos, &subject) in order.iter().enumerate() {
        fold_of[subject] = (pos % k) as u32;
    }
    Ok(FoldAssignment { fold_of, k, seed })
}

/// Fold assignment stratified by treatment class, so every fold contains both
/// classes whenever each class has at least `k` members.
pub fn stratified_folds(treatment: &[u8], k: usize, seed: u64) -> Result<Vec<u32>> {
    let treated: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] == 1).collect();
    let control: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] == 0).collect();
    if treated.len() < k || control.len() < k {
        return Err(LspsError::Validation(format!(
            "cannot build {k} folds with both classes: {} treated, {} control",
            treated.len(),
            control.len()
        )));
    }
    let mut fold_of = vec![0u32; treatment.len()];
    for (class, members) in [(1u64, &treated), (0u64, &control)] {
        let assignment = assign_folds(members.len(), k, seed ^ (0x5742A7 + class))?;
        for (local, &subject) in members.iter().enumerate() {
            fold_of[subject] = assignment.fold_of[local];
        }
    }
    Ok(fold_of)
}
