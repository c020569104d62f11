use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    featurize_categorical_lab, featurize_continuous_lab, featurize_demographics, featurize_device,
    featurize_medication, featurize_procedure, ContinuousLabSnapshot, Slot,
};
use crate::catalog::{ClinicalCategory, SlotFamily, CATALOG_VERSION};
use crate::record::{
    DeviceInterval, LabEvent, LabValue, MedStatusEvent, PatientRecord, ProcedureEvent, ValueKind,
};
use crate::scalar::Scalar;
use crate::segmentation::PatientStateInstance;

pub const MATRIX_FORMAT_VERSION: &str = "1";
const DEMOGRAPHIC_SOURCE: &str = "DEMO";
const MISSING: &str = "NA";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("instance refers to unknown patient `{0}`")]
    UnknownPatient(String),
    #[error("patient `{patient}` has variable `{variable}` missing from the vocabulary")]
    UnknownVariable { patient: String, variable: String },
    #[error("lab `{0}` is continuous in some records and categorical in others")]
    KindConflict(String),
    #[error("duplicate feature id `{0}`")]
    DuplicateFeature(String),
    #[error("column `{0}` has the wrong length")]
    Shape(String),
}

/// Dataset variables plus per-lab categorical token codes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub continuous_labs: BTreeSet<String>,
    pub categorical_labs: BTreeSet<String>,
    pub medications: BTreeSet<String>,
    pub procedures: BTreeSet<String>,
    pub devices: BTreeSet<String>,
    /// Token list per categorical lab; a token's code is its index.
    pub categorical_codes: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    /// Collects every variable in `records`. Categorical codes follow first
    /// appearance, scanning records in order and results chronologically.
    pub fn from_records(records: &[PatientRecord]) -> Result<Self, BuildError> {
        let mut v = Vocabulary::default();
        for r in records {
            let mut results: Vec<&LabEvent> = r.lab_events.iter().filter(|e| e.result_time.is_some()).collect();
            results.sort_by_key(|e| e.result_time);
            for e in &r.lab_events {
                match e.value_kind {
                    ValueKind::Continuous => v.continuous_labs.insert(e.lab_id.clone()),
                    ValueKind::Categorical => v.categorical_labs.insert(e.lab_id.clone()),
                };
            }
            for e in results {
                if let Some(LabValue::Categorical(tok)) = &e.value {
                    let codes = v.categorical_codes.entry(e.lab_id.clone()).or_default();
                    if !codes.contains(tok) {
                        codes.push(tok.clone());
                    }
                }
            }
            v.medications.extend(r.med_status_events.iter().map(|e| e.med_id.clone()));
            v.procedures.extend(r.procedure_events.iter().map(|e| e.proc_id.clone()));
            v.devices.extend(r.device_intervals.iter().map(|e| e.device_id.clone()));
        }
        if let Some(lab) = v.continuous_labs.intersection(&v.categorical_labs).next() {
            return Err(BuildError::KindConflict(lab.clone()));
        }
        for lab in &v.categorical_labs {
            v.categorical_codes.entry(lab.clone()).or_default();
        }
        Ok(v)
    }

    /// Column plan: demographics first, then labs, medications, procedures and
    /// devices, each ordered by variable id.
    fn plan(&self) -> Vec<(SlotFamily, &str)> {
        let mut out = vec![(SlotFamily::Demographic, DEMOGRAPHIC_SOURCE)];
        let labs: BTreeSet<&String> = self.continuous_labs.iter().chain(&self.categorical_labs).collect();
        for lab in labs {
            let fam = if self.continuous_labs.contains(lab) {
                SlotFamily::ContinuousLab
            } else {
                SlotFamily::CategoricalLab
            };
            out.push((fam, lab));
        }
        out.extend(self.medications.iter().map(|m| (SlotFamily::Medication, m.as_str())));
        out.extend(self.procedures.iter().map(|p| (SlotFamily::Procedure, p.as_str())));
        out.extend(self.devices.iter().map(|d| (SlotFamily::Device, d.as_str())));
        out
    }

    pub fn descriptors(&self) -> Vec<FeatureDescriptor> {
        self.plan()
            .into_iter()
            .flat_map(|(fam, var)| {
                fam.slots().iter().map(move |s| FeatureDescriptor {
                    feature_id: format!("{var}.{}", s.id),
                    clinical_category: fam.clinical(),
                    temporal_category: s.id.to_string(),
                    slot_name: s.name.to_string(),
                    source_variable: var.to_string(),
                    family: fam,
                })
            })
            .collect()
    }

    fn check(&self, r: &PatientRecord) -> Result<(), BuildError> {
        let unknown = |variable: &str| BuildError::UnknownVariable {
            patient: r.patient_id.clone(),
            variable: variable.to_string(),
        };
        for e in &r.lab_events {
            let known = match e.value_kind {
                ValueKind::Continuous => self.continuous_labs.contains(&e.lab_id),
                ValueKind::Categorical => self.categorical_labs.contains(&e.lab_id),
            };
            if !known {
                return Err(unknown(&e.lab_id));
            }
        }
        if let Some(e) = r.med_status_events.iter().find(|e| !self.medications.contains(&e.med_id)) {
            return Err(unknown(&e.med_id));
        }
        if let Some(e) = r.procedure_events.iter().find(|e| !self.procedures.contains(&e.proc_id)) {
            return Err(unknown(&e.proc_id));
        }
        if let Some(e) = r.device_intervals.iter().find(|e| !self.devices.contains(&e.device_id)) {
            return Err(unknown(&e.device_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub feature_id: String,
    pub clinical_category: ClinicalCategory,
    /// Catalog slot id, e.g. `F19`.
    pub temporal_category: String,
    pub slot_name: String,
    pub source_variable: String,
    pub family: SlotFamily,
}

/// Instances × features, stored column-major. `None` is MISSING.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    row_ids: Vec<String>,
    descriptors: Vec<FeatureDescriptor>,
    columns: Vec<Vec<Slot<T>>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(
        row_ids: Vec<String>,
        descriptors: Vec<FeatureDescriptor>,
        columns: Vec<Vec<Slot<T>>>,
    ) -> Result<Self, BuildError> {
        if columns.len() != descriptors.len() {
            return Err(BuildError::Shape(format!("{} columns for {} descriptors", columns.len(), descriptors.len())));
        }
        let mut index = BTreeMap::new();
        for (j, (d, col)) in descriptors.iter().zip(&columns).enumerate() {
            if col.len() != row_ids.len() {
                return Err(BuildError::Shape(d.feature_id.clone()));
            }
            if index.insert(d.feature_id.clone(), j).is_some() {
                return Err(BuildError::DuplicateFeature(d.feature_id.clone()));
            }
        }
        Ok(FeatureMatrix { row_ids, descriptors, columns, index })
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.descriptors.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// Patient id of a row, taken from its `patient_id:day_index` key.
    pub fn row_patient(&self, row: usize) -> &str {
        let id = &self.row_ids[row];
        id.rsplit_once(':').map_or(id.as_str(), |(p, _)| p)
    }

    pub fn descriptors(&self) -> &[FeatureDescriptor] {
        &self.descriptors
    }

    pub fn column(&self, j: usize) -> &[Slot<T>] {
        &self.columns[j]
    }

    pub fn column_index(&self, feature_id: &str) -> Option<usize> {
        self.index.get(feature_id).copied()
    }

    pub fn column_by_id(&self, feature_id: &str) -> Option<&[Slot<T>]> {
        self.column_index(feature_id).map(|j| self.column(j))
    }

    pub fn value(&self, row: usize, col: usize) -> Slot<T> {
        self.columns[col][row]
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        FeatureMatrix {
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
            descriptors: self.descriptors.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            index: self.index.clone(),
        }
    }

    /// Keeps the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let descriptors: Vec<_> = cols.iter().map(|&j| self.descriptors[j].clone()).collect();
        let columns = cols.iter().map(|&j| self.columns[j].clone()).collect();
        FeatureMatrix::new(self.row_ids.clone(), descriptors, columns).expect("column subset of a valid matrix")
    }
}

struct RecordIndex<'a> {
    record: &'a PatientRecord,
    labs: HashMap<&'a str, Vec<&'a LabEvent>>,
    meds: HashMap<&'a str, Vec<&'a MedStatusEvent>>,
    procs: HashMap<&'a str, Vec<&'a ProcedureEvent>>,
    devices: HashMap<&'a str, Vec<&'a DeviceInterval>>,
}

impl<'a> RecordIndex<'a> {
    fn new(record: &'a PatientRecord) -> Self {
        let mut idx = RecordIndex {
            record,
            labs: HashMap::new(),
            meds: HashMap::new(),
            procs: HashMap::new(),
            devices: HashMap::new(),
        };
        for e in &record.lab_events {
            idx.labs.entry(&e.lab_id).or_default().push(e);
        }
        for e in &record.med_status_events {
            idx.meds.entry(&e.med_id).or_default().push(e);
        }
        for e in &record.procedure_events {
            idx.procs.entry(&e.proc_id).or_default().push(e);
        }
        for e in &record.device_intervals {
            idx.devices.entry(&e.device_id).or_default().push(e);
        }
        idx
    }
}

fn row<T: Scalar>(
    plan: &[(SlotFamily, &str)],
    vocab: &Vocabulary,
    idx: &RecordIndex<'_>,
    inst: &PatientStateInstance,
    width: usize,
) -> Vec<Slot<T>> {
    let anchor = inst.anchor_time;
    let mut out = Vec::with_capacity(width);
    for &(fam, var) in plan {
        match fam {
            SlotFamily::Demographic => {
                out.extend(featurize_demographics::<T>(idx.record.demographics.as_ref()))
            }
            SlotFamily::ContinuousLab => {
                let events = idx.labs.get(var).map(Vec::as_slice).unwrap_or_default();
                let snap = ContinuousLabSnapshot::at(events.iter().copied(), anchor);
                out.extend(featurize_continuous_lab::<T>(&snap, anchor));
            }
            SlotFamily::CategoricalLab => {
                let events = idx.labs.get(var).map(Vec::as_slice).unwrap_or_default();
                let codes = vocab.categorical_codes.get(var).map(Vec::as_slice).unwrap_or_default();
                out.extend(featurize_categorical_lab::<T>(events.iter().copied(), anchor, codes));
            }
            SlotFamily::Medication => {
                let events = idx.meds.get(var).map(Vec::as_slice).unwrap_or_default();
                out.extend(featurize_medication::<T>(events.iter().copied(), anchor));
            }
            SlotFamily::Procedure => {
                let events = idx.procs.get(var).map(Vec::as_slice).unwrap_or_default();
                out.extend(featurize_procedure::<T>(events.iter().copied(), anchor));
            }
            SlotFamily::Device => {
                let events = idx.devices.get(var).map(Vec::as_slice).unwrap_or_default();
                out.extend(featurize_device::<T>(events.iter().copied(), anchor));
            }
        }
    }
    out
}

/// One row per instance (in input order) and one column per vocabulary slot.
pub fn build_matrix<T: Scalar>(
    records: &[PatientRecord],
    instances: &[PatientStateInstance],
    vocab: &Vocabulary,
) -> Result<FeatureMatrix<T>, BuildError> {
    for r in records {
        vocab.check(r)?;
    }
    let by_patient: HashMap<&str, RecordIndex<'_>> =
        records.iter().map(|r| (r.patient_id.as_str(), RecordIndex::new(r))).collect();
    let plan = vocab.plan();
    let descriptors = vocab.descriptors();
    let width = descriptors.len();

    let rows: Vec<Vec<Slot<T>>> = instances
        .par_iter()
        .map(|inst| {
            let idx = by_patient
                .get(inst.patient_id.as_str())
                .ok_or_else(|| BuildError::UnknownPatient(inst.patient_id.clone()))?;
            Ok(row(&plan, vocab, idx, inst, width))
        })
        .collect::<Result<_, BuildError>>()?;

    let mut columns: Vec<Vec<Slot<T>>> = (0..width).map(|_| Vec::with_capacity(rows.len())).collect();
    for r in &rows {
        for (c, v) in columns.iter_mut().zip(r) {
            c.push(*v);
        }
    }
    FeatureMatrix::new(instances.iter().map(|i| i.key()).collect(), descriptors, columns)
}

/// Sidecar document for a persisted matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub format_version: String,
    pub catalog_version: String,
    pub missing_token: String,
    pub descriptors: Vec<FeatureDescriptor>,
    pub vocabulary: Vocabulary,
}

impl MatrixMeta {
    pub fn new(descriptors: Vec<FeatureDescriptor>, vocabulary: Vocabulary) -> Self {
        MatrixMeta {
            format_version: MATRIX_FORMAT_VERSION.into(),
            catalog_version: CATALOG_VERSION.into(),
            missing_token: MISSING.into(),
            descriptors,
            vocabulary,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatrixFileError {
    #[error("matrix header does not match the metadata descriptors")]
    Header,
    #[error("unsupported matrix format version `{0}`")]
    Version(String),
    #[error("matrix line {line}: {message}")]
    Row { line: usize, message: String },
    #[error(transparent)]
    Build(#[from] BuildError),
}

pub fn write_matrix_tsv<T: Scalar>(m: &FeatureMatrix<T>) -> String {
    let mut out = String::from("instance_id");
    for d in &m.descriptors {
        out.push('\t');
        out.push_str(&d.feature_id);
    }
    out.push('\n');
    for (i, id) in m.row_ids.iter().enumerate() {
        out.push_str(id);
        for c in &m.columns {
            match c[i] {
                Some(v) => {
                    let _ = write!(out, "\t{v}");
                }
                None => {
                    out.push('\t');
                    out.push_str(MISSING);
                }
            }
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix_tsv<T: Scalar>(input: &str, meta: &MatrixMeta) -> Result<FeatureMatrix<T>, MatrixFileError> {
    if meta.format_version != MATRIX_FORMAT_VERSION {
        return Err(MatrixFileError::Version(meta.format_version.clone()));
    }
    let mut lines = input.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split('\t').collect();
    let expected = std::iter::once("instance_id").chain(meta.descriptors.iter().map(|d| d.feature_id.as_str()));
    if !header.iter().copied().eq(expected) {
        return Err(MatrixFileError::Header);
    }
    let width = meta.descriptors.len();
    let mut row_ids = Vec::new();
    let mut columns: Vec<Vec<Slot<T>>> = vec![Vec::new(); width];
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        if raw.is_empty() {
            continue;
        }
        let mut fields = raw.split('\t');
        row_ids.push(fields.next().unwrap_or_default().to_string());
        let mut n = 0;
        for (col, f) in columns.iter_mut().zip(fields.by_ref()) {
            let v = if f == MISSING {
                None
            } else {
                Some(f.parse::<T>().map_err(|_| MatrixFileError::Row {
                    line,
                    message: format!("`{f}` is not a number"),
                })?)
            };
            col.push(v);
            n += 1;
        }
        if n != width || fields.next().is_some() {
            return Err(MatrixFileError::Row { line, message: format!("expected {width} values") });
        }
    }
    Ok(FeatureMatrix::new(row_ids, meta.descriptors.clone(), columns)?)
}
