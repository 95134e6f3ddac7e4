//! Experiment tables: schema-driven CSV ingestion, validation and encoding.
//!
//! A table holds the covariate matrix, the arm of every row, a real outcome,
//! and optionally a pair id (paired designs) and a selection flag. Tables are
//! immutable once built; transformations return new tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Ordered set of arm labels with one designated control ("no program") arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmSet {
    labels: Vec<String>,
    control_index: usize,
}

impl ArmSet {
    pub fn new<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        control: &str,
    ) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(Error::Schema("arm labels must be unique".into()));
        }
        if labels.len() < 2 {
            return Err(Error::Schema("at least two arms must be declared".into()));
        }
        let control_index = labels.iter().position(|l| l == control).ok_or_else(|| {
            Error::Schema(format!("control arm '{control}' is not a declared arm"))
        })?;
        Ok(Self {
            labels,
            control_index,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn control_index(&self) -> usize {
        self.control_index
    }

    pub fn control_label(&self) -> &str {
        &self.labels[self.control_index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::Domain(format!("unknown arm '{label}'")))
    }

    /// Non-control arm indices in declaration order.
    pub fn programs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&a| a != self.control_index)
    }

    pub fn n_programs(&self) -> usize {
        self.labels.len() - 1
    }

    /// Position of a program among the non-control arms.
    pub fn program_position(&self, arm: usize) -> Option<usize> {
        if arm == self.control_index || arm >= self.labels.len() {
            None
        } else if arm < self.control_index {
            Some(arm)
        } else {
            Some(arm - 1)
        }
    }

    /// Arm index of the `pos`-th program.
    pub fn program_at(&self, pos: usize) -> usize {
        if pos < self.control_index {
            pos
        } else {
            pos + 1
        }
    }
}

/// What a covariate column holds after encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ColumnKind {
    Binary,
    Numeric,
    /// Indicator for `source == level` produced by one-hot encoding.
    Categorical {
        source: String,
        level: String,
    },
}

/// Role of a CSV column in the schema file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnRole {
    #[serde(rename = "arm")]
    Arm,
    #[serde(rename = "outcome")]
    Outcome,
    #[serde(rename = "covariate:numeric")]
    NumericCovariate,
    #[serde(rename = "covariate:categorical")]
    CategoricalCovariate,
    #[serde(rename = "pair_id")]
    PairId,
    #[serde(rename = "selected")]
    Selected,
}

/// Column-role declaration supplied alongside a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub columns: BTreeMap<String, ColumnRole>,
    pub arms: Vec<String>,
    pub control: String,
    #[serde(default)]
    pub binary_outcome: bool,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    fn single(&self, role: ColumnRole) -> Result<Option<&str>> {
        let mut found = self
            .columns
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(c, _)| c.as_str());
        let first = found.next();
        if found.next().is_some() {
            return Err(Error::Schema(format!(
                "more than one column declared as {role:?}"
            )));
        }
        Ok(first)
    }
}

/// Summary of an ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    /// CSV line numbers of dropped rows.
    pub dropped_lines: Vec<u64>,
    /// Pair ids with a single surviving member.
    pub incomplete_pairs: Vec<i64>,
}

/// Raw pieces for building a table in memory.
#[derive(Debug, Clone)]
pub struct TableParts {
    pub covariates: Matrix,
    pub covariate_names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub arms: ArmSet,
    pub arm: Vec<usize>,
    pub outcome: Vec<f64>,
    pub binary_outcome: bool,
    pub pair_id: Option<Vec<i64>>,
    pub selected: Option<Vec<bool>>,
    pub arm_column: String,
    pub outcome_column: String,
}

impl TableParts {
    /// Parts with default column names and kinds inferred from the values.
    pub fn new(
        covariates: Matrix,
        covariate_names: Vec<String>,
        arms: ArmSet,
        arm: Vec<usize>,
        outcome: Vec<f64>,
    ) -> Self {
        let kinds = (0..covariates.cols())
            .map(|c| infer_kind(covariates.column(c)))
            .collect();
        let binary_outcome = outcome.iter().all(|&y| y == 0.0 || y == 1.0);
        Self {
            covariates,
            covariate_names,
            kinds,
            arms,
            arm,
            outcome,
            binary_outcome,
            pair_id: None,
            selected: None,
            arm_column: "arm".into(),
            outcome_column: "outcome".into(),
        }
    }
}

fn infer_kind(values: impl Iterator<Item = f64>) -> ColumnKind {
    let mut any = false;
    for v in values {
        any = true;
        if v != 0.0 && v != 1.0 {
            return ColumnKind::Numeric;
        }
    }
    if any {
        ColumnKind::Binary
    } else {
        ColumnKind::Numeric
    }
}

/// Validated, immutable experiment table.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    covariates: Matrix,
    covariate_names: Vec<String>,
    kinds: Vec<ColumnKind>,
    arms: ArmSet,
    arm: Vec<usize>,
    outcome: Vec<f64>,
    binary_outcome: bool,
    pair_id: Option<Vec<i64>>,
    selected: Option<Vec<bool>>,
    arm_column: String,
    outcome_column: String,
}

impl ExperimentTable {
    pub fn new(parts: TableParts) -> Result<Self> {
        let n = parts.arm.len();
        if parts.outcome.len() != n || parts.covariates.rows() != n {
            return Err(Error::Validation(
                "arm, outcome and covariate row counts differ".into(),
            ));
        }
        if parts.covariate_names.len() != parts.covariates.cols()
            || parts.kinds.len() != parts.covariates.cols()
        {
            return Err(Error::Validation(
                "covariate names/kinds do not match the matrix width".into(),
            ));
        }
        let unique: BTreeSet<&String> = parts.covariate_names.iter().collect();
        if unique.len() != parts.covariate_names.len() {
            return Err(Error::Validation("covariate names must be unique".into()));
        }
        if !parts.covariates.all_finite() {
            return Err(Error::Validation("covariates must be finite".into()));
        }
        if let Some(&bad) = parts.arm.iter().find(|&&a| a >= parts.arms.len()) {
            return Err(Error::Schema(format!(
                "arm index {bad} outside the declared arm set"
            )));
        }
        let present: BTreeSet<usize> = parts.arm.iter().copied().collect();
        if present.len() < 2 {
            return Err(Error::Validation(
                "at least two arms must be present".into(),
            ));
        }
        for (i, &y) in parts.outcome.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Validation(format!("row {i}: outcome is not finite")));
            }
            if parts.binary_outcome && y != 0.0 && y != 1.0 {
                return Err(Error::Validation(format!(
                    "row {i}: binary outcome must be 0 or 1, got {y}"
                )));
            }
        }
        if let Some(p) = &parts.pair_id {
            if p.len() != n {
                return Err(Error::Validation("pair id column length mismatch".into()));
            }
            let mut seen: HashMap<(i64, usize), usize> = HashMap::new();
            for (i, (&pid, &a)) in p.iter().zip(&parts.arm).enumerate() {
                if let Some(prev) = seen.insert((pid, a), i) {
                    return Err(Error::Validation(format!(
                        "pair {pid} has two rows ({prev}, {i}) in arm '{}'",
                        parts.arms.label(a)
                    )));
                }
            }
        }
        if let Some(s) = &parts.selected {
            if s.len() != n {
                return Err(Error::Validation("selected column length mismatch".into()));
            }
        }
        Ok(Self {
            covariates: parts.covariates,
            covariate_names: parts.covariate_names,
            kinds: parts.kinds,
            arms: parts.arms,
            arm: parts.arm,
            outcome: parts.outcome,
            binary_outcome: parts.binary_outcome,
            pair_id: parts.pair_id,
            selected: parts.selected,
            arm_column: parts.arm_column,
            outcome_column: parts.outcome_column,
        })
    }

    pub fn into_parts(self) -> TableParts {
        TableParts {
            covariates: self.covariates,
            covariate_names: self.covariate_names,
            kinds: self.kinds,
            arms: self.arms,
            arm: self.arm,
            outcome: self.outcome,
            binary_outcome: self.binary_outcome,
            pair_id: self.pair_id,
            selected: self.selected,
            arm_column: self.arm_column,
            outcome_column: self.outcome_column,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.arm.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::Config(format!("unknown covariate column '{name}'")))
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    /// Arm index of every row.
    pub fn arm_indices(&self) -> &[usize] {
        &self.arm
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_column
    }

    pub fn binary_outcome(&self) -> bool {
        self.binary_outcome
    }

    pub fn pair_ids(&self) -> Option<&[i64]> {
        self.pair_id.as_deref()
    }

    pub fn selected(&self) -> Option<&[bool]> {
        self.selected.as_deref()
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.arms.len()];
        for &a in &self.arm {
            counts[a] += 1;
        }
        counts
    }

    /// Rows whose arm is `arm`, in row order.
    pub fn split_by_arm(&self, arm: &str) -> Result<Vec<usize>> {
        let a = self.arms.require(arm)?;
        Ok(self.rows_in_arm(a))
    }

    pub fn rows_in_arm(&self, arm: usize) -> Vec<usize> {
        self.arm
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == arm).then_some(i))
            .collect()
    }

    /// Pair ids that do not have both a row in `treat` and a row in `control`.
    pub fn incomplete_pairs(&self, treat: usize, control: usize) -> Vec<i64> {
        let Some(p) = &self.pair_id else {
            return Vec::new();
        };
        let mut members: BTreeMap<i64, (bool, bool)> = BTreeMap::new();
        for (&pid, &a) in p.iter().zip(&self.arm) {
            let e = members.entry(pid).or_default();
            if a == treat {
                e.0 = true;
            } else if a == control {
                e.1 = true;
            }
        }
        members
            .into_iter()
            .filter(|(_, (t, c))| !(*t && *c))
            .map(|(pid, _)| pid)
            .collect()
    }

    /// New table restricted to `rows` (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let pick = |v: &Vec<usize>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self::new(TableParts {
            covariates: self.covariates.select_rows(rows),
            covariate_names: self.covariate_names.clone(),
            kinds: self.kinds.clone(),
            arms: self.arms.clone(),
            arm: pick(&self.arm),
            outcome: rows.iter().map(|&i| self.outcome[i]).collect(),
            binary_outcome: self.binary_outcome,
            pair_id: self
                .pair_id
                .as_ref()
                .map(|p| rows.iter().map(|&i| p[i]).collect()),
            selected: self
                .selected
                .as_ref()
                .map(|s| rows.iter().map(|&i| s[i]).collect()),
            arm_column: self.arm_column.clone(),
            outcome_column: self.outcome_column.clone(),
        })
    }

    /// Rows flagged as selected; errors when the table has no selection flag.
    pub fn selected_only(&self) -> Result<Self> {
        let s = self
            .selected
            .as_ref()
            .ok_or_else(|| Error::Config("table has no selected column".into()))?;
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&i| s[i]).collect();
        self.subset(&rows)
    }

    /// Same rows with a replacement outcome vector.
    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        let mut parts = self.clone().into_parts();
        parts.binary_outcome = outcome.iter().all(|&y| y == 0.0 || y == 1.0);
        parts.outcome = outcome;
        Self::new(parts)
    }

    /// Keeps covariate columns in the given order.
    pub fn with_covariates(&self, names: &[String]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| self.require_column(n))
            .collect::<Result<Vec<_>>>()?;
        let mut parts = self.clone().into_parts();
        parts.covariates = self.covariates.select_cols(&idx);
        parts.kinds = idx.iter().map(|&c| self.kinds[c].clone()).collect();
        parts.covariate_names = names.to_vec();
        Self::new(parts)
    }

    /// Merges every non-control arm into a single program arm named `label`.
    pub fn pool_programs(&self, label: &str) -> Result<Self> {
        let control = self.arms.control_label().to_string();
        let (labels, new_control) = if self.arms.control_index() == 0 {
            (vec![control.clone(), label.to_string()], 0usize)
        } else {
            (vec![label.to_string(), control.clone()], 1usize)
        };
        let arms = ArmSet::new(labels, &control)?;
        let arm = self
            .arm
            .iter()
            .map(|&a| {
                if a == self.arms.control_index() {
                    new_control
                } else {
                    1 - new_control
                }
            })
            .collect();
        let mut parts = self.clone().into_parts();
        parts.arms = arms;
        parts.arm = arm;
        // pairs may now hold two program rows; they no longer describe the design
        parts.pair_id = None;
        Self::new(parts)
    }

    /// Replaces the arm set with a reordering of the same labels.
    pub fn reorder_arms(&self, labels: &[String]) -> Result<Self> {
        let arms = ArmSet::new(labels.iter().cloned(), self.arms.control_label())?;
        if arms.len() != self.arms.len() {
            return Err(Error::Schema(
                "reordered arm set must contain the same labels".into(),
            ));
        }
        let map = self
            .arms
            .labels()
            .iter()
            .map(|l| {
                arms.index_of(l)
                    .ok_or_else(|| Error::Schema(format!("label '{l}' missing from reordering")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut parts = self.clone().into_parts();
        parts.arm = self.arm.iter().map(|&a| map[a]).collect();
        parts.arms = arms;
        Self::new(parts)
    }

    /// Writes the table as an ingestible CSV and returns the schema that reads it back.
    ///
    /// One-hot columns are collapsed back into their categorical source column.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let (bytes, schema) = self.to_csv_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        Ok(schema)
    }

    /// In-memory form of [`ExperimentTable::write_csv`].
    pub fn to_csv_bytes(&self) -> Result<(Vec<u8>, Schema)> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let (header, schema) = self.csv_layout();
        w.write_record(&header)?;
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            self.fill_record(i, &mut record);
            w.write_record(&record)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Computation(e.to_string()))?;
        Ok((bytes, schema))
    }

    fn csv_layout(&self) -> (Vec<String>, Schema) {
        let mut header = vec![self.arm_column.clone(), self.outcome_column.clone()];
        let mut columns = BTreeMap::new();
        columns.insert(self.arm_column.clone(), ColumnRole::Arm);
        columns.insert(self.outcome_column.clone(), ColumnRole::Outcome);
        if self.pair_id.is_some() {
            header.push("pair_id".into());
            columns.insert("pair_id".into(), ColumnRole::PairId);
        }
        if self.selected.is_some() {
            header.push("selected".into());
            columns.insert("selected".into(), ColumnRole::Selected);
        }
        for (name, kind) in self.covariate_names.iter().zip(&self.kinds) {
            match kind {
                ColumnKind::Categorical { source, .. } => {
                    if !columns.contains_key(source) {
                        header.push(source.clone());
                        columns.insert(source.clone(), ColumnRole::CategoricalCovariate);
                    }
                }
                _ => {
                    header.push(name.clone());
                    columns.insert(name.clone(), ColumnRole::NumericCovariate);
                }
            }
        }
        let schema = Schema {
            columns,
            arms: self.arms.labels().to_vec(),
            control: self.arms.control_label().to_string(),
            binary_outcome: self.binary_outcome,
        };
        (header, schema)
    }

    fn fill_record(&self, i: usize, record: &mut Vec<String>) {
        record.push(self.arms.label(self.arm[i]).to_string());
        record.push(format!("{}", self.outcome[i]));
        if let Some(p) = &self.pair_id {
            record.push(p[i].to_string());
        }
        if let Some(s) = &self.selected {
            record.push(if s[i] { "1".into() } else { "0".into() });
        }
        let mut written: BTreeSet<&str> = BTreeSet::new();
        for (c, kind) in self.kinds.iter().enumerate() {
            match kind {
                ColumnKind::Categorical { source, .. } => {
                    if written.insert(source) {
                        let level = self
                            .kinds
                            .iter()
                            .enumerate()
                            .find_map(|(c2, k)| match k {
                                ColumnKind::Categorical { source: s2, level }
                                    if s2 == source && self.covariates.get(i, c2) == 1.0 =>
                                {
                                    Some(level.clone())
                                }
                                _ => None,
                            })
                            .unwrap_or_default();
                        record.push(level);
                    }
                }
                _ => record.push(format!("{}", self.covariates.get(i, c))),
            }
        }
    }
}

enum CellSpec {
    Numeric(usize),
    Categorical(usize),
}

/// Reads a CSV file according to `schema`.
///
/// Rows with an empty required cell are dropped and counted; unparseable
/// cells fail with the CSV line number.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &Schema,
) -> Result<(ExperimentTable, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, schema)
}

pub fn ingest_reader<R: std::io::Read>(
    reader: R,
    schema: &Schema,
) -> Result<(ExperimentTable, IngestReport)> {
    let arms = ArmSet::new(schema.arms.iter().cloned(), &schema.control)?;
    let arm_col = schema
        .single(ColumnRole::Arm)?
        .ok_or_else(|| Error::Schema("schema must name an arm column".into()))?;
    let outcome_col = schema
        .single(ColumnRole::Outcome)?
        .ok_or_else(|| Error::Schema("schema must name an outcome column".into()))?;
    let pair_col = schema.single(ColumnRole::PairId)?;
    let selected_col = schema.single(ColumnRole::Selected)?;

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in CSV header")))
    };
    for name in schema.columns.keys() {
        position(name)?;
    }
    let arm_pos = position(arm_col)?;
    let outcome_pos = position(outcome_col)?;
    let pair_pos = pair_col.map(position).transpose()?;
    let selected_pos = selected_col.map(position).transpose()?;

    // covariates in header order
    let covariate_cols: Vec<(usize, String, ColumnRole)> = headers
        .iter()
        .enumerate()
        .filter_map(|(p, h)| match schema.columns.get(h) {
            Some(r @ (ColumnRole::NumericCovariate | ColumnRole::CategoricalCovariate)) => {
                Some((p, h.to_string(), *r))
            }
            _ => None,
        })
        .collect();
    let cell_specs: Vec<CellSpec> = {
        let (mut nn, mut nc) = (0, 0);
        covariate_cols
            .iter()
            .map(|(_, _, r)| {
                if *r == ColumnRole::NumericCovariate {
                    nn += 1;
                    CellSpec::Numeric(nn - 1)
                } else {
                    nc += 1;
                    CellSpec::Categorical(nc - 1)
                }
            })
            .collect()
    };
    let n_numeric = cell_specs
        .iter()
        .filter(|c| matches!(c, CellSpec::Numeric(_)))
        .count();

    let mut report = IngestReport::default();
    let mut arm = Vec::new();
    let mut outcome = Vec::new();
    let mut pair = Vec::new();
    let mut selected = Vec::new();
    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); n_numeric];
    let mut categorical: Vec<Vec<String>> = vec![Vec::new(); covariate_cols.len() - n_numeric];

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        let cell = |p: usize| record.get(p).unwrap_or("");
        let required = std::iter::once(arm_pos)
            .chain(std::iter::once(outcome_pos))
            .chain(pair_pos)
            .chain(selected_pos)
            .chain(covariate_cols.iter().map(|(p, _, _)| *p));
        if required.into_iter().any(|p| cell(p).is_empty()) {
            report.rows_dropped += 1;
            report.dropped_lines.push(line);
            continue;
        }
        let label = cell(arm_pos);
        let a = arms.index_of(label).ok_or_else(|| {
            Error::Schema(format!(
                "line {line}: arm label '{label}' is not in the declared arm set"
            ))
        })?;
        let y: f64 = parse_number(cell(outcome_pos), line, outcome_col)?;
        if !y.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("outcome '{}' is not finite", cell(outcome_pos)),
            });
        }
        if schema.binary_outcome && y != 0.0 && y != 1.0 {
            return Err(Error::Parse {
                line,
                message: format!("binary outcome must be 0 or 1, got {y}"),
            });
        }
        if let Some(p) = pair_pos {
            let v = cell(p);
            pair.push(v.parse::<i64>().map_err(|_| Error::Parse {
                line,
                message: format!("pair id '{v}' is not an integer"),
            })?);
        }
        if let Some(p) = selected_pos {
            selected.push(parse_flag(cell(p), line)?);
        }
        for ((p, name, _), spec) in covariate_cols.iter().zip(&cell_specs) {
            match spec {
                CellSpec::Numeric(k) => {
                    let v = parse_number(cell(*p), line, name)?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            line,
                            message: format!("covariate '{name}' is not finite"),
                        });
                    }
                    numeric[*k].push(v);
                }
                CellSpec::Categorical(k) => categorical[*k].push(cell(*p).to_string()),
            }
        }
        arm.push(a);
        outcome.push(y);
    }

    let n = arm.len();
    let mut names = Vec::new();
    let mut kinds = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for ((_, name, _), spec) in covariate_cols.iter().zip(&cell_specs) {
        match spec {
            CellSpec::Numeric(k) => {
                kinds.push(infer_kind(numeric[*k].iter().copied()));
                names.push(name.clone());
                columns.push(std::mem::take(&mut numeric[*k]));
            }
            CellSpec::Categorical(k) => {
                let levels: BTreeSet<&String> = categorical[*k].iter().collect();
                for level in levels {
                    names.push(format!("{name}={level}"));
                    kinds.push(ColumnKind::Categorical {
                        source: name.clone(),
                        level: level.clone(),
                    });
                    columns.push(
                        categorical[*k]
                            .iter()
                            .map(|v| f64::from(u8::from(v == level)))
                            .collect(),
                    );
                }
            }
        }
    }
    let mut data = Vec::with_capacity(n * columns.len());
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }
    let table = ExperimentTable::new(TableParts {
        covariates: Matrix::from_vec(n, columns.len(), data),
        covariate_names: names,
        kinds,
        arms,
        arm,
        outcome,
        binary_outcome: schema.binary_outcome,
        pair_id: pair_pos.map(|_| pair),
        selected: selected_pos.map(|_| selected),
        arm_column: arm_col.to_string(),
        outcome_column: outcome_col.to_string(),
    })?;
    if table.pair_ids().is_some() {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &p in table.pair_ids().unwrap_or(&[]) {
            *counts.entry(p).or_default() += 1;
        }
        report.incomplete_pairs = counts
            .into_iter()
            .filter(|(_, c)| *c < 2)
            .map(|(p, _)| p)
            .collect();
        if !report.incomplete_pairs.is_empty() {
            log::warn!(
                "{} pair ids have a single member",
                report.incomplete_pairs.len()
            );
        }
    }
    if report.rows_dropped > 0 {
        log::info!("{} row(s) dropped for missing values", report.rows_dropped);
    }
    Ok((table, report))
}

fn parse_number(s: &str, line: u64, column: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse '{s}' in column '{column}' as a number"),
    })
}

fn parse_flag(s: &str, line: u64) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(Error::Parse {
            line,
            message: format!("cannot parse '{s}' as a selection flag"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(cols: &[(&str, ColumnRole)], arms: &[&str], control: &str, binary: bool) -> Schema {
        Schema {
            columns: cols.iter().map(|(c, r)| (c.to_string(), *r)).collect(),
            arms: arms.iter().map(|s| s.to_string()).collect(),
            control: control.into(),
            binary_outcome: binary,
        }
    }

    fn basic_schema() -> Schema {
        schema(
            &[
                ("w", ColumnRole::Arm),
                ("y", ColumnRole::Outcome),
                ("x", ColumnRole::NumericCovariate),
            ],
            &["c", "t"],
            "c",
            true,
        )
    }

    #[test]
    fn three_row_file_parses() {
        let csv = "w,y,x\nt,1,0.5\nc,0,1.5\nt,0,2\n";
        let (t, r) = ingest_reader(csv.as_bytes(), &basic_schema()).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_covariates(), 1);
        assert_eq!(r.rows_dropped, 0);
        assert_eq!(t.outcome(), &[1.0, 0.0, 0.0]);
        assert_eq!(t.kinds()[0], ColumnKind::Numeric);
    }

    #[test]
    fn empty_outcome_drops_row() {
        let csv = "w,y,x\nt,1,0.5\nc,,1.5\nc,0,2\n";
        let (t, r) = ingest_reader(csv.as_bytes(), &basic_schema()).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(r.rows_dropped, 1);
        assert_eq!(r.dropped_lines, vec![3]);
    }

    #[test]
    fn categorical_levels_are_lexicographic() {
        let s = schema(
            &[
                ("w", ColumnRole::Arm),
                ("y", ColumnRole::Outcome),
                ("city", ColumnRole::CategoricalCovariate),
            ],
            &["c", "t"],
            "c",
            false,
        );
        let csv = "w,y,city\nt,1,C\nc,0,A\nt,2,B\nc,3,A\n";
        let (t, _) = ingest_reader(csv.as_bytes(), &s).unwrap();
        assert_eq!(t.covariate_names(), &["city=A", "city=B", "city=C"]);
        assert_eq!(t.covariates().row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(t.covariates().row(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "w,y\nt,1\nc,0\n";
        let err = ingest_reader(csv.as_bytes(), &basic_schema()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn bad_cell_reports_line() {
        let csv = "w,y,x\nt,1,0.5\nc,0,abc\n";
        match ingest_reader(csv.as_bytes(), &basic_schema()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_arm_is_schema_error() {
        let csv = "w,y,x\nt,1,0.5\nz,0,1\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &basic_schema()).unwrap_err(),
            Error::Schema(_)
        ));
    }

    #[test]
    fn non_binary_outcome_rejected() {
        let csv = "w,y,x\nt,1,0.5\nc,0.5,1\n";
        assert!(ingest_reader(csv.as_bytes(), &basic_schema()).is_err());
    }

    #[test]
    fn single_arm_rejected() {
        let csv = "w,y,x\nt,1,0.5\nt,0,1\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes(), &basic_schema()).unwrap_err(),
            Error::Validation(_)
        ));
    }

    #[test]
    fn duplicate_pair_arm_rejected() {
        let s = schema(
            &[
                ("w", ColumnRole::Arm),
                ("y", ColumnRole::Outcome),
                ("p", ColumnRole::PairId),
            ],
            &["c", "t"],
            "c",
            true,
        );
        let ok = "w,y,p\nt,1,1\nc,0,1\nt,0,2\n";
        let (t, r) = ingest_reader(ok.as_bytes(), &s).unwrap();
        assert_eq!(r.incomplete_pairs, vec![2]);
        assert_eq!(t.incomplete_pairs(1, 0), vec![2]);
        let bad = "w,y,p\nt,1,1\nt,0,1\nc,0,2\n";
        assert!(ingest_reader(bad.as_bytes(), &s).is_err());
    }

    #[test]
    fn split_by_arm_partitions_rows() {
        let csv = "w,y,x\nt,1,0.5\nc,0,1.5\nt,0,2\n";
        let (t, _) = ingest_reader(csv.as_bytes(), &basic_schema()).unwrap();
        let tr = t.split_by_arm("t").unwrap();
        let c = t.split_by_arm("c").unwrap();
        assert_eq!(tr, vec![0, 2]);
        assert_eq!(c, vec![1]);
        assert!(t.split_by_arm("nope").is_err());
    }

    #[test]
    fn declared_but_absent_arm_is_empty() {
        let s = Schema {
            arms: vec!["c".into(), "t".into(), "u".into()],
            ..basic_schema()
        };
        let csv = "w,y,x\nt,1,0.5\nc,0,1.5\n";
        let (t, _) = ingest_reader(csv.as_bytes(), &s).unwrap();
        assert!(t.split_by_arm("u").unwrap().is_empty());
    }

    #[test]
    fn pooling_merges_programs() {
        let s = Schema {
            arms: vec!["c".into(), "t".into(), "u".into()],
            binary_outcome: false,
            ..basic_schema()
        };
        let csv = "w,y,x\nt,1,0.5\nc,0,1.5\nu,3,1\n";
        let (t, _) = ingest_reader(csv.as_bytes(), &s).unwrap();
        let p = t.pool_programs("any").unwrap();
        assert_eq!(p.arms().labels(), &["c", "any"]);
        assert_eq!(p.arm_indices(), &[1, 0, 1]);
    }

    #[test]
    fn arm_set_program_positions() {
        let a = ArmSet::new(["m", "control", "c"], "control").unwrap();
        assert_eq!(a.programs().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(a.program_position(2), Some(1));
        assert_eq!(a.program_at(1), 2);
        assert_eq!(a.program_position(1), None);
        assert!(ArmSet::new(["a", "a"], "a").is_err());
        assert!(ArmSet::new(["a", "b"], "z").is_err());
    }
}
