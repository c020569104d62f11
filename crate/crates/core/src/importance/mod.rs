//! Univariate AUC ranking of features per decision and best-feature histograms.

mod auc;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{slot_by_id, ClinicalCategory};
use crate::dataset::Dataset;
use crate::decision::{DecisionId, DecisionKind};
use crate::featurizer::{FeatureDescriptor, FeatureMatrix};
use crate::scalar::Scalar;

pub use auc::{auc, auc_from_midranks, class_counts, effective, midranks, AucError};

/// Decisions with fewer positives or negatives than this are flagged low-support.
pub const DEFAULT_MIN_SUPPORT: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImportanceError {
    #[error("decision {decision}: {source}")]
    Auc { decision: DecisionId, source: AucError },
    #[error("decision {0}: no feature columns in scope")]
    EmptyScope(DecisionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AllFeatures,
    SameVariableOnly,
    OtherVariablesOnly,
}

impl Scope {
    pub fn code(self) -> &'static str {
        match self {
            Scope::AllFeatures => "all_features",
            Scope::SameVariableOnly => "same_variable_only",
            Scope::OtherVariablesOnly => "other_variables_only",
        }
    }

    /// Whether a column takes part in ranking for `decision` under this scope.
    /// Same/other compare source variables within the decision's clinical category.
    pub fn admits(self, decision: &DecisionId, d: &FeatureDescriptor) -> bool {
        let own = match decision.kind {
            DecisionKind::LabOrder => ClinicalCategory::Lab,
            DecisionKind::MedOrder => ClinicalCategory::Med,
        };
        let same_category = d.clinical_category == own;
        match self {
            Scope::AllFeatures => true,
            Scope::SameVariableOnly => same_category && d.source_variable == decision.variable_id,
            Scope::OtherVariablesOnly => same_category && d.source_variable != decision.variable_id,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all_features" | "all" => Ok(Scope::AllFeatures),
            "same_variable_only" => Ok(Scope::SameVariableOnly),
            "other_variables_only" => Ok(Scope::OtherVariablesOnly),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AucScore<T> {
    pub decision: DecisionId,
    pub feature_id: String,
    pub auc_raw: T,
    pub auc_effective: T,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Descending effective strength, then ascending feature id.
fn by_strength<T: Scalar>(a: &AucScore<T>, b: &AucScore<T>) -> Ordering {
    b.auc_effective
        .partial_cmp(&a.auc_effective)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.feature_id.cmp(&b.feature_id))
}

/// Midranks of every column over a fixed row subset, reused across decisions.
pub struct RankedColumns<'a, T> {
    matrix: &'a FeatureMatrix<T>,
    rows: Vec<usize>,
    ranks: Vec<Vec<T>>,
}

impl<'a, T: Scalar> RankedColumns<'a, T> {
    pub fn new(matrix: &'a FeatureMatrix<T>, rows: &[usize]) -> Self {
        let ranks = (0..matrix.n_cols())
            .into_par_iter()
            .map(|j| {
                let col = matrix.column(j);
                let vals: Vec<_> = rows.iter().map(|&i| col[i]).collect();
                midranks(&vals)
            })
            .collect();
        RankedColumns { matrix, rows: rows.to_vec(), ranks }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Ranks the in-scope columns. `labels` are indexed by matrix row.
    pub fn rank(&self, labels: &[bool], decision: &DecisionId, scope: Scope) -> Result<Vec<AucScore<T>>, ImportanceError> {
        let sub: Vec<bool> = self.rows.iter().map(|&i| labels[i]).collect();
        let (n_pos, n_neg) = class_counts(&sub);
        if n_pos == 0 || n_neg == 0 {
            return Err(ImportanceError::Auc {
                decision: decision.clone(),
                source: AucError::SingleClass { n_pos, n_neg },
            });
        }
        let descriptors = self.matrix.descriptors();
        let mut scores: Vec<AucScore<T>> = (0..descriptors.len())
            .into_par_iter()
            .filter(|&j| scope.admits(decision, &descriptors[j]))
            .map(|j| {
                let raw = auc_from_midranks(&self.ranks[j], &sub).map_err(|source| ImportanceError::Auc {
                    decision: decision.clone(),
                    source,
                })?;
                Ok(AucScore {
                    decision: decision.clone(),
                    feature_id: descriptors[j].feature_id.clone(),
                    auc_raw: raw,
                    auc_effective: effective(raw),
                    n_pos,
                    n_neg,
                })
            })
            .collect::<Result<_, ImportanceError>>()?;
        if scores.is_empty() {
            return Err(ImportanceError::EmptyScope(decision.clone()));
        }
        scores.sort_by(by_strength);
        Ok(scores)
    }
}

/// Ranks every in-scope feature of `matrix` for `decision` on the given rows.
pub fn rank_features<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    labels: &[bool],
    rows: &[usize],
    decision: &DecisionId,
    scope: Scope,
) -> Result<Vec<AucScore<T>>, ImportanceError> {
    RankedColumns::new(matrix, rows).rank(labels, decision, scope)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Clinical5,
    Temporal40,
}

impl FromStr for Grouping {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "clinical5" => Ok(Grouping::Clinical5),
            "temporal40" => Ok(Grouping::Temporal40),
            other => Err(format!("unknown grouping `{other}`")),
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::Clinical5 => "clinical5",
            Grouping::Temporal40 => "temporal40",
        })
    }
}

/// Which decisions and rows an analysis covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    LabOrder,
    /// Medication starts, restricted to instances before the first start.
    MedCommission,
    MedOrder,
}

impl AnalysisKind {
    pub fn decision_kind(self) -> DecisionKind {
        match self {
            AnalysisKind::LabOrder => DecisionKind::LabOrder,
            AnalysisKind::MedCommission | AnalysisKind::MedOrder => DecisionKind::MedOrder,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            AnalysisKind::LabOrder => "lab_order",
            AnalysisKind::MedCommission => "med_commission",
            AnalysisKind::MedOrder => "med_order",
        }
    }
}

impl fmt::Display for AnalysisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AnalysisKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lab_order" => Ok(AnalysisKind::LabOrder),
            "med_commission" => Ok(AnalysisKind::MedCommission),
            "med_order" => Ok(AnalysisKind::MedOrder),
            other => Err(format!("unknown decision kind `{other}`")),
        }
    }
}

/// Ranked list for one decision plus its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RankedList<T> {
    pub decision: DecisionId,
    pub kind: AnalysisKind,
    pub scope: Scope,
    pub n_pos: usize,
    pub n_neg: usize,
    pub low_support: bool,
    pub scores: Vec<AucScore<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub decision: DecisionId,
    pub reason: String,
}

/// Ranks each decision on `rows` (commission-filtered per medication when
/// `kind` is [`AnalysisKind::MedCommission`]). Single-class decisions are skipped.
pub fn rank_decisions<T: Scalar>(
    data: &Dataset<T>,
    rows: &[usize],
    decisions: &[DecisionId],
    kind: AnalysisKind,
    scope: Scope,
    min_support: usize,
) -> (Vec<RankedList<T>>, Vec<Skipped>) {
    let shared = (kind != AnalysisKind::MedCommission).then(|| RankedColumns::new(&data.matrix, rows));
    let mut lists = Vec::new();
    let mut skipped = Vec::new();
    for decision in decisions {
        let labels = data.labels(decision);
        let owned;
        let ranked = match &shared {
            Some(r) => r,
            None => {
                owned = RankedColumns::new(&data.matrix, &data.commission_rows(&decision.variable_id, rows));
                &owned
            }
        };
        match ranked.rank(&labels, decision, scope) {
            Ok(scores) => {
                let (n_pos, n_neg) = (scores[0].n_pos, scores[0].n_neg);
                lists.push(RankedList {
                    decision: decision.clone(),
                    kind,
                    scope,
                    n_pos,
                    n_neg,
                    low_support: n_pos < min_support || n_neg < min_support,
                    scores,
                });
            }
            Err(e) => skipped.push(Skipped { decision: decision.clone(), reason: e.to_string() }),
        }
    }
    (lists, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BestFeature<T> {
    pub decision: DecisionId,
    pub feature_id: String,
    pub category: String,
    pub auc_raw: T,
    pub auc_effective: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HistogramReport<T> {
    pub grouping: Grouping,
    pub scope: Scope,
    pub decision_kind: AnalysisKind,
    pub min_support: usize,
    /// Category → number of decisions whose best feature falls in it.
    pub counts: BTreeMap<String, usize>,
    pub best: Vec<BestFeature<T>>,
    pub skipped: Vec<Skipped>,
}

impl<T> HistogramReport<T> {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Categories by descending count, ties by name.
    pub fn ordered(&self) -> Vec<(&str, usize)> {
        let mut v: Vec<_> = self.counts.iter().map(|(k, c)| (k.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

fn category_of(d: &FeatureDescriptor, grouping: Grouping) -> String {
    match grouping {
        Grouping::Clinical5 => d.clinical_category.code().to_string(),
        Grouping::Temporal40 => d.temporal_category.clone(),
    }
}

/// Counts, per category, how many decisions have their rank-1 feature there.
/// Decisions that are single-class, out of scope or below `min_support` in
/// either class are listed as skipped and not counted.
pub fn best_feature_histogram<T: Scalar>(
    data: &Dataset<T>,
    rows: &[usize],
    decisions: &[DecisionId],
    grouping: Grouping,
    scope: Scope,
    kind: AnalysisKind,
    min_support: usize,
) -> HistogramReport<T> {
    let (lists, mut skipped) = rank_decisions(data, rows, decisions, kind, scope, min_support);
    let mut counts = BTreeMap::new();
    if grouping == Grouping::Clinical5 {
        for c in ClinicalCategory::ALL {
            counts.insert(c.code().to_string(), 0);
        }
    }
    let mut best = Vec::new();
    for list in lists {
        if list.low_support {
            skipped.push(Skipped {
                decision: list.decision.clone(),
                reason: format!("low support ({} positive, {} negative)", list.n_pos, list.n_neg),
            });
            continue;
        }
        let top = &list.scores[0];
        let j = data.matrix.column_index(&top.feature_id).expect("ranked feature exists");
        let category = category_of(&data.matrix.descriptors()[j], grouping);
        *counts.entry(category.clone()).or_insert(0) += 1;
        best.push(BestFeature {
            decision: list.decision,
            feature_id: top.feature_id.clone(),
            category,
            auc_raw: top.auc_raw,
            auc_effective: top.auc_effective,
        });
    }
    skipped.sort_by(|a, b| a.decision.cmp(&b.decision));
    HistogramReport { grouping, scope, decision_kind: kind, min_support, counts, best, skipped }
}

/// `rank  feature_id  auc_raw  auc_effective`, optionally truncated.
pub fn ranked_tsv<T: Scalar>(scores: &[AucScore<T>], top: Option<usize>) -> String {
    let mut out = String::from("rank\tfeature_id\tauc_raw\tauc_effective\n");
    for (i, s) in scores.iter().take(top.unwrap_or(usize::MAX)).enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, s.feature_id, s.auc_raw, s.auc_effective);
    }
    out
}

/// Long-form ranked table across decisions.
pub fn ranked_lists_tsv<T: Scalar>(lists: &[RankedList<T>], top: Option<usize>) -> String {
    let mut out = String::from("decision\tn_pos\tn_neg\tlow_support\trank\tfeature_id\tauc_raw\tauc_effective\n");
    for l in lists {
        for (i, s) in l.scores.iter().take(top.unwrap_or(usize::MAX)).enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                l.decision,
                l.n_pos,
                l.n_neg,
                u8::from(l.low_support),
                i + 1,
                s.feature_id,
                s.auc_raw,
                s.auc_effective
            );
        }
    }
    out
}

/// `category  label  count`, plot-ready.
pub fn histogram_tsv<T>(report: &HistogramReport<T>) -> String {
    let mut out = String::from("category\tlabel\tcount\n");
    for (cat, count) in report.ordered() {
        let label = match report.grouping {
            Grouping::Clinical5 => cat.to_lowercase(),
            Grouping::Temporal40 => slot_by_id(cat).map_or_else(|| cat.to_string(), |(_, s)| s.name.to_string()),
        };
        let _ = writeln!(out, "{cat}\t{label}\t{count}");
    }
    out
}

/// Copies of `lists` with scores truncated to the first `top` entries.
pub fn truncate_lists<T: Clone>(lists: &[RankedList<T>], top: Option<usize>) -> Vec<RankedList<T>> {
    lists
        .iter()
        .map(|l| RankedList { scores: l.scores.iter().take(top.unwrap_or(usize::MAX)).cloned().collect(), ..l.clone() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::SlotFamily;

    fn desc(id: &str, var: &str, cat: ClinicalCategory, slot: &str) -> FeatureDescriptor {
        FeatureDescriptor {
            feature_id: id.into(),
            clinical_category: cat,
            temporal_category: slot.into(),
            slot_name: String::new(),
            source_variable: var.into(),
            family: match cat {
                ClinicalCategory::Lab => SlotFamily::ContinuousLab,
                ClinicalCategory::Med => SlotFamily::Medication,
                ClinicalCategory::Procedure => SlotFamily::Procedure,
                ClinicalCategory::Device => SlotFamily::Device,
                ClinicalCategory::Demographic => SlotFamily::Demographic,
            },
        }
    }

    fn matrix(cols: Vec<(&str, &str, ClinicalCategory, &str, Vec<f64>)>) -> FeatureMatrix<f64> {
        let n = cols[0].4.len();
        let rows = (0..n).map(|i| format!("P{i}:1")).collect();
        let (descs, values): (Vec<_>, Vec<_>) = cols
            .into_iter()
            .map(|(id, var, cat, slot, v)| (desc(id, var, cat, slot), v.into_iter().map(Some).collect()))
            .unzip();
        FeatureMatrix::new(rows, descs, values).unwrap()
    }

    #[test]
    fn label_copy_ranks_first_and_ties_break_by_id() {
        let labels = [true, false, true, false, false, true];
        let lab: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
        let m = matrix(vec![
            ("Z.F01", "Z", ClinicalCategory::Lab, "F01", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            ("B.F02", "B", ClinicalCategory::Lab, "F02", lab.clone()),
            ("A.F02", "A", ClinicalCategory::Lab, "F02", lab),
        ]);
        let rows: Vec<usize> = (0..6).collect();
        let r = rank_features(&m, &labels, &rows, &DecisionId::lab("A"), Scope::AllFeatures).unwrap();
        assert_eq!(r[0].feature_id, "A.F02");
        assert_eq!(r[1].feature_id, "B.F02");
        assert_eq!(r[0].auc_effective, 1.0);
        assert_eq!((r[0].n_pos, r[0].n_neg), (3, 3));
    }

    #[test]
    fn inverted_feature_uses_effective_strength() {
        let labels = [true, true, false, false];
        let m = matrix(vec![
            ("A.F19", "A", ClinicalCategory::Lab, "F19", vec![1.0, 2.0, 3.0, 4.0]),
            ("A.F01", "A", ClinicalCategory::Lab, "F01", vec![3.0, 1.0, 2.0, 4.0]),
        ]);
        let r = rank_features(&m, &labels, &[0, 1, 2, 3], &DecisionId::lab("A"), Scope::AllFeatures).unwrap();
        assert_eq!(r[0].feature_id, "A.F19");
        assert_eq!(r[0].auc_raw, 0.0);
        assert_eq!(r[0].auc_effective, 1.0);
    }

    #[test]
    fn scopes_filter_columns() {
        let m = matrix(vec![
            ("A.F01", "A", ClinicalCategory::Lab, "F01", vec![1.0, 2.0]),
            ("B.F01", "B", ClinicalCategory::Lab, "F01", vec![1.0, 2.0]),
            ("X.P01", "X", ClinicalCategory::Procedure, "P01", vec![1.0, 2.0]),
        ]);
        let d = DecisionId::lab("A");
        let ids = |s: Scope| {
            rank_features(&m, &[true, false], &[0, 1], &d, s)
                .unwrap()
                .into_iter()
                .map(|x| x.feature_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(Scope::SameVariableOnly), vec!["A.F01"]);
        assert_eq!(ids(Scope::OtherVariablesOnly), vec!["B.F01"]);
        assert_eq!(ids(Scope::AllFeatures).len(), 3);
    }

    #[test]
    fn single_class_is_an_error() {
        let m = matrix(vec![("A.F01", "A", ClinicalCategory::Lab, "F01", vec![1.0, 2.0])]);
        let e = rank_features(&m, &[true, true], &[0, 1], &DecisionId::lab("A"), Scope::AllFeatures);
        assert!(matches!(e, Err(ImportanceError::Auc { source: AucError::SingleClass { .. }, .. })));
    }

    #[test]
    fn ranked_tsv_truncates() {
        let s: Vec<AucScore<f64>> = (0..5)
            .map(|i| AucScore {
                decision: DecisionId::lab("A"),
                feature_id: format!("A.F0{i}"),
                auc_raw: 0.5,
                auc_effective: 0.5,
                n_pos: 1,
                n_neg: 1,
            })
            .collect();
        assert_eq!(ranked_tsv(&s, Some(3)).lines().count(), 4);
        assert_eq!(ranked_tsv(&s, None).lines().count(), 6);
    }
}
