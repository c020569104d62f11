//! A feature matrix paired with the instances (and labels) of its rows.

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

use crate::catalog::SlotFamily;
use crate::decision::{DecisionId, DecisionKind};
use crate::featurizer::{build_matrix, BuildError, FeatureMatrix, Vocabulary};
use crate::record::PatientRecord;
use crate::scalar::Scalar;
use crate::segmentation::{build_instances, PatientStateInstance, Schedule};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("matrix row `{0}` has no matching instance")]
    MissingInstance(String),
    #[error("instance `{0}` appears more than once")]
    DuplicateInstance(String),
}

#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub matrix: FeatureMatrix<T>,
    /// Aligned with the matrix rows.
    pub instances: Vec<PatientStateInstance>,
}

impl<T: Scalar> Dataset<T> {
    /// Pairs rows with instances by `patient_id:day_index` key, reordering the
    /// instances to follow the matrix.
    pub fn new(matrix: FeatureMatrix<T>, instances: Vec<PatientStateInstance>) -> Result<Self, DatasetError> {
        let mut by_key: HashMap<String, PatientStateInstance> = HashMap::with_capacity(instances.len());
        for inst in instances {
            let key = inst.key();
            if by_key.insert(key.clone(), inst).is_some() {
                return Err(DatasetError::DuplicateInstance(key));
            }
        }
        let instances = matrix
            .row_ids()
            .iter()
            .map(|id| by_key.remove(id).ok_or_else(|| DatasetError::MissingInstance(id.clone())))
            .collect::<Result<_, _>>()?;
        Ok(Dataset { matrix, instances })
    }

    /// Segments every record, featurizes with the records' own vocabulary and
    /// pairs the result.
    pub fn from_records(records: &[PatientRecord], schedule: &Schedule) -> Result<Self, BuildError> {
        let instances: Vec<PatientStateInstance> = records.iter().flat_map(|r| build_instances(r, schedule)).collect();
        let vocab = Vocabulary::from_records(records)?;
        let matrix = build_matrix(records, &instances, &vocab)?;
        Ok(Dataset { matrix, instances })
    }

    pub fn labels(&self, decision: &DecisionId) -> Vec<bool> {
        self.instances.iter().map(|i| i.label(decision)).collect()
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.instances.len()).collect()
    }

    pub fn rows_for_patients(&self, patients: &BTreeSet<String>) -> Vec<usize> {
        (0..self.instances.len())
            .filter(|&i| patients.contains(&self.instances[i].patient_id))
            .collect()
    }

    /// Decisions for every lab (or medication) variable in the matrix.
    pub fn decisions(&self, kind: DecisionKind) -> Vec<DecisionId> {
        let vars: BTreeSet<&str> = self
            .matrix
            .descriptors()
            .iter()
            .filter(|d| match kind {
                DecisionKind::LabOrder => {
                    matches!(d.family, SlotFamily::ContinuousLab | SlotFamily::CategoricalLab)
                }
                DecisionKind::MedOrder => d.family == SlotFamily::Medication,
            })
            .map(|d| d.source_variable.as_str())
            .collect();
        vars.into_iter()
            .map(|v| DecisionId { kind, variable_id: v.to_string() })
            .collect()
    }

    /// Subset of `rows` at which the patient had never been on `med_id`.
    ///
    /// "Time since first on" (`M03`) is MISSING exactly when no `med_on` lies at
    /// or before the anchor, which is the commission condition.
    pub fn commission_rows(&self, med_id: &str, rows: &[usize]) -> Vec<usize> {
        match self.matrix.column_by_id(&format!("{med_id}.M03")) {
            Some(col) => rows.iter().copied().filter(|&i| col[i].is_none()).collect(),
            None => rows.to_vec(),
        }
    }
}
