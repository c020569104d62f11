//! Top-k linear SVM protocol: patient-level split, greedy univariate feature
//! selection, standardized linear SVM training and test-set AUC.

mod solver;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::decision::DecisionId;
use crate::featurizer::FeatureMatrix;
use crate::importance::{auc, class_counts, AnalysisKind, AucError, AucScore, ImportanceError, RankedColumns, Scope};
use crate::scalar::Scalar;

pub use solver::{dot, solve_newton, solve_subgradient, Problem, SolverKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SvmError {
    #[error("need at least two patients to split, got {0}")]
    TooFewPatients(usize),
    #[error("train count {requested} must be between 1 and {available} (exclusive of all patients)")]
    TrainCount { requested: usize, available: usize },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    TrainFraction(String),
    #[error("decision {decision}: {source}")]
    Auc { decision: DecisionId, source: AucError },
    #[error(transparent)]
    Ranking(#[from] ImportanceError),
    #[error("feature `{0}` not in matrix")]
    UnknownFeature(String),
    #[error("model has {features} features but {weights} weights")]
    ModelShape { features: usize, weights: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainSize {
    Count(usize),
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_patient_ids: BTreeSet<String>,
    pub test_patient_ids: BTreeSet<String>,
    pub seed: u64,
}

/// Seeded uniform draw of training patients; the rest are test patients.
pub fn split_by_patient<'a>(
    patient_ids: impl IntoIterator<Item = &'a str>,
    size: TrainSize,
    seed: u64,
) -> Result<SplitSpec, SvmError> {
    let mut ids: Vec<&str> = patient_ids.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
    let total = ids.len();
    if total < 2 {
        return Err(SvmError::TooFewPatients(total));
    }
    let n_train = match size {
        TrainSize::Count(n) => {
            if n == 0 || n >= total {
                return Err(SvmError::TrainCount { requested: n, available: total });
            }
            n
        }
        TrainSize::Fraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(SvmError::TrainFraction(f.to_string()));
            }
            ((f * total as f64).round() as usize).clamp(1, total - 1)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train = ids[..n_train].iter().map(|s| s.to_string()).collect();
    let test = ids[n_train..].iter().map(|s| s.to_string()).collect();
    Ok(SplitSpec { train_patient_ids: train, test_patient_ids: test, seed })
}

/// First `k` features of the all-features ranking on the training rows.
pub fn select_top_k<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    labels: &[bool],
    train_rows: &[usize],
    decision: &DecisionId,
    k: usize,
) -> Result<Vec<String>, SvmError> {
    let ranked = RankedColumns::new(matrix, train_rows)
        .rank(labels, decision, Scope::AllFeatures)?;
    Ok(ranked.into_iter().take(k).map(|s| s.feature_id).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Hinge-loss weight.
    pub c: f64,
    pub solver: SolverKind,
    /// Epochs for the subgradient solver; iteration cap per smoothing stage for Newton.
    pub epochs: usize,
    pub seed: u64,
    /// Reweight classes so both carry equal total cost.
    pub balance: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, solver: SolverKind::Newton, epochs: 200, seed: 0, balance: false }
    }
}

/// Linear SVM over standardized, median-imputed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinearModel<T> {
    pub decision: DecisionId,
    pub kind: AnalysisKind,
    pub k: usize,
    /// Features used by the model, in selection order.
    pub selected_features: Vec<String>,
    /// Selected but dropped as constant (or entirely MISSING) on the training rows.
    pub dropped_features: Vec<String>,
    pub weights: Vec<T>,
    pub bias: T,
    pub means: Vec<T>,
    pub stds: Vec<T>,
    pub medians: Vec<T>,
    pub config: SvmConfig,
    pub split_seed: u64,
    pub train_objective: T,
    pub warnings: Vec<String>,
}

fn median<T: Scalar>(mut v: Vec<T>) -> Option<T> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / T::lit(2.0) })
}

impl<T: Scalar> LinearModel<T> {
    /// Standardized, imputed feature vectors for the given rows.
    pub fn design(&self, matrix: &FeatureMatrix<T>, rows: &[usize]) -> Result<Vec<Vec<T>>, SvmError> {
        let cols = self
            .selected_features
            .iter()
            .map(|f| matrix.column_by_id(f).ok_or_else(|| SvmError::UnknownFeature(f.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows
            .iter()
            .map(|&i| {
                cols.iter()
                    .enumerate()
                    .map(|(j, c)| (c[i].unwrap_or(self.medians[j]) - self.means[j]) / self.stds[j])
                    .collect()
            })
            .collect())
    }

    /// Decision values `w . x + b` for the given rows.
    pub fn scores(&self, matrix: &FeatureMatrix<T>, rows: &[usize]) -> Result<Vec<T>, SvmError> {
        if self.weights.len() != self.selected_features.len() {
            return Err(SvmError::ModelShape {
                features: self.selected_features.len(),
                weights: self.weights.len(),
            });
        }
        Ok(self
            .design(matrix, rows)?
            .iter()
            .map(|x| dot(&self.weights, x) + self.bias)
            .collect())
    }
}

/// Trains on `rows` using `features` (already selected). `labels` are indexed
/// by matrix row.
#[allow(clippy::too_many_arguments)]
pub fn train_linear_svm<T: Scalar>(
    matrix: &FeatureMatrix<T>,
    rows: &[usize],
    labels: &[bool],
    features: &[String],
    decision: &DecisionId,
    kind: AnalysisKind,
    k: usize,
    config: &SvmConfig,
    split_seed: u64,
) -> Result<LinearModel<T>, SvmError> {
    let y_bool: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();
    let (n_pos, n_neg) = class_counts(&y_bool);
    if n_pos == 0 || n_neg == 0 {
        return Err(SvmError::Auc { decision: decision.clone(), source: AucError::SingleClass { n_pos, n_neg } });
    }

    let mut model = LinearModel {
        decision: decision.clone(),
        kind,
        k,
        selected_features: Vec::new(),
        dropped_features: Vec::new(),
        weights: Vec::new(),
        bias: T::zero(),
        means: Vec::new(),
        stds: Vec::new(),
        medians: Vec::new(),
        config: config.clone(),
        split_seed,
        train_objective: T::zero(),
        warnings: Vec::new(),
    };
    let n = T::from_count(rows.len());
    for f in features {
        let col = matrix.column_by_id(f).ok_or_else(|| SvmError::UnknownFeature(f.clone()))?;
        let observed: Vec<T> = rows.iter().filter_map(|&i| col[i]).collect();
        let Some(med) = median(observed) else {
            model.dropped_features.push(f.clone());
            continue;
        };
        let vals: Vec<T> = rows.iter().map(|&i| col[i].unwrap_or(med)).collect();
        let mean = vals.iter().fold(T::zero(), |a, v| a + *v) / n;
        let var = vals.iter().fold(T::zero(), |a, v| a + (*v - mean) * (*v - mean)) / n;
        let std = var.sqrt();
        if std.is_nan() || std <= T::zero() {
            model.dropped_features.push(f.clone());
            continue;
        }
        model.selected_features.push(f.clone());
        model.medians.push(med);
        model.means.push(mean);
        model.stds.push(std);
    }

    let x = model.design(matrix, rows)?;
    let y: Vec<T> = y_bool.iter().map(|&b| if b { T::one() } else { -T::one() }).collect();
    let c = T::lit(config.c);
    let cost: Vec<T> = y_bool
        .iter()
        .map(|&b| {
            if config.balance {
                let share = if b { n_pos } else { n_neg };
                c * n / (T::lit(2.0) * T::from_count(share))
            } else {
                c
            }
        })
        .collect();
    let problem = Problem { x: &x, y: &y, cost: &cost };

    if model.selected_features.is_empty() {
        model.warnings.push("no non-constant features; constant model".into());
        model.bias = problem.best_bias(&[]);
        model.train_objective = problem.objective(&[], model.bias);
        return Ok(model);
    }
    let (w, b) = match config.solver {
        SolverKind::Newton => solve_newton(&problem, config.epochs.max(1)),
        SolverKind::Subgradient => solve_subgradient(&problem, config.epochs, config.seed),
    };
    model.train_objective = problem.objective(&w, b);
    model.weights = w;
    model.bias = b;
    Ok(model)
}

/// Test AUC of the model's decision values, using the shared AUC estimator.
pub fn evaluate<T: Scalar>(
    model: &LinearModel<T>,
    matrix: &FeatureMatrix<T>,
    rows: &[usize],
    labels: &[bool],
) -> Result<AucScore<T>, SvmError> {
    let scores: Vec<Option<T>> = model.scores(matrix, rows)?.into_iter().map(Some).collect();
    let y: Vec<bool> = rows.iter().map(|&i| labels[i]).collect();
    let (n_pos, n_neg) = class_counts(&y);
    let a = auc(&scores, &y).map_err(|source| SvmError::Auc { decision: model.decision.clone(), source })?;
    Ok(AucScore {
        decision: model.decision.clone(),
        feature_id: format!("svm_top{}", model.k),
        auc_raw: a,
        auc_effective: a,
        n_pos,
        n_neg,
    })
}

/// Outcome of the protocol for one (decision, k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Evaluation<T> {
    pub decision: DecisionId,
    pub kind: AnalysisKind,
    pub k: usize,
    pub test_auc: Option<T>,
    pub n_train: usize,
    pub n_test: usize,
    pub skipped: Option<String>,
}

/// A decision (or a single `k` of it) that produced no model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedModel {
    pub decision: DecisionId,
    /// `None` when every `k` was skipped.
    pub k: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub models: Vec<LinearModel<T>>,
    pub skipped: Vec<SkippedModel>,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutput<T> {
    pub models: Vec<LinearModel<T>>,
    pub evaluations: Vec<Evaluation<T>>,
}

fn protocol_rows<T: Scalar>(data: &Dataset<T>, split: &SplitSpec, decision: &DecisionId, kind: AnalysisKind) -> (Vec<usize>, Vec<usize>) {
    let train = data.rows_for_patients(&split.train_patient_ids);
    let test = data.rows_for_patients(&split.test_patient_ids);
    if kind == AnalysisKind::MedCommission {
        (data.commission_rows(&decision.variable_id, &train), data.commission_rows(&decision.variable_id, &test))
    } else {
        (train, test)
    }
}

/// Selects top-k features on the training rows and fits one model per
/// (decision, k). Decisions run in parallel; output follows `decisions` then `ks`.
pub fn train_models<T: Scalar>(
    data: &Dataset<T>,
    split: &SplitSpec,
    decisions: &[DecisionId],
    kind: AnalysisKind,
    ks: &[usize],
    config: &SvmConfig,
) -> TrainOutput<T> {
    let train_all = data.rows_for_patients(&split.train_patient_ids);
    let shared = (kind != AnalysisKind::MedCommission).then(|| RankedColumns::new(&data.matrix, &train_all));

    let per_decision: Vec<(Vec<LinearModel<T>>, Vec<SkippedModel>)> = decisions
        .par_iter()
        .map(|decision| {
            let labels = data.labels(decision);
            let (train, _) = protocol_rows(data, split, decision, kind);
            let owned;
            let ranked = match &shared {
                Some(r) => r,
                None => {
                    owned = RankedColumns::new(&data.matrix, &train);
                    &owned
                }
            };
            let ranking = match ranked.rank(&labels, decision, Scope::AllFeatures) {
                Ok(r) => r,
                Err(e) => {
                    let skip = SkippedModel { decision: decision.clone(), k: None, reason: format!("train: {e}") };
                    return (Vec::new(), vec![skip]);
                }
            };
            let mut models = Vec::new();
            let mut skipped = Vec::new();
            for &k in ks {
                let features: Vec<String> = ranking.iter().take(k).map(|s| s.feature_id.clone()).collect();
                match train_linear_svm(&data.matrix, &train, &labels, &features, decision, kind, k, config, split.seed) {
                    Ok(m) => models.push(m),
                    Err(e) => skipped.push(SkippedModel { decision: decision.clone(), k: Some(k), reason: e.to_string() }),
                }
            }
            (models, skipped)
        })
        .collect();

    let mut out = TrainOutput { models: Vec::new(), skipped: Vec::new() };
    for (m, s) in per_decision {
        out.models.extend(m);
        out.skipped.extend(s);
    }
    out
}

/// Test AUC for every model (all trained under `kind`), plus a skipped row for every (decision, k) in
/// `skipped`. Sorted by decision, then `k`.
pub fn evaluate_models<T: Scalar>(
    data: &Dataset<T>,
    split: &SplitSpec,
    kind: AnalysisKind,
    models: &[LinearModel<T>],
    skipped: &[SkippedModel],
    ks: &[usize],
) -> Result<Vec<Evaluation<T>>, SvmError> {
    let mut evals: Vec<Evaluation<T>> = models
        .par_iter()
        .map(|m| {
            let labels = data.labels(&m.decision);
            let (train, test) = protocol_rows(data, split, &m.decision, kind);
            let (tp, tn) = class_counts(&test.iter().map(|&i| labels[i]).collect::<Vec<_>>());
            let mut e = Evaluation {
                decision: m.decision.clone(),
                kind: m.kind,
                k: m.k,
                test_auc: None,
                n_train: train.len(),
                n_test: test.len(),
                skipped: None,
            };
            if tp == 0 || tn == 0 {
                e.skipped = Some(format!("test labels single class ({tp} positive, {tn} negative)"));
            } else {
                e.test_auc = Some(evaluate(m, &data.matrix, &test, &labels)?.auc_raw);
            }
            Ok(e)
        })
        .collect::<Result<_, SvmError>>()?;
    for s in skipped {
        let (train, test) = protocol_rows(data, split, &s.decision, kind);
        for &k in ks.iter().filter(|&&k| s.k.is_none_or(|sk| sk == k)) {
            evals.push(Evaluation {
                decision: s.decision.clone(),
                kind,
                k,
                test_auc: None,
                n_train: train.len(),
                n_test: test.len(),
                skipped: Some(s.reason.clone()),
            });
        }
    }
    evals.sort_by(|a, b| a.decision.cmp(&b.decision).then(a.k.cmp(&b.k)));
    Ok(evals)
}

/// Runs select → train → evaluate for every decision and every `k`.
pub fn run_protocol<T: Scalar>(
    data: &Dataset<T>,
    split: &SplitSpec,
    decisions: &[DecisionId],
    kind: AnalysisKind,
    ks: &[usize],
    config: &SvmConfig,
) -> Result<ProtocolOutput<T>, SvmError> {
    let trained = train_models(data, split, decisions, kind, ks, config);
    let evaluations = evaluate_models(data, split, kind, &trained.models, &trained.skipped, ks)?;
    Ok(ProtocolOutput { models: trained.models, evaluations })
}

/// Decisions as rows, one test-AUC column per `k` (`top1 top3 top30`).
pub fn evaluation_table_tsv<T: Scalar>(evals: &[Evaluation<T>], ks: &[usize]) -> String {
    let mut out = String::from("decision");
    for k in ks {
        let _ = write!(out, "\ttop{k}");
    }
    out.push('\n');
    let decisions: Vec<&DecisionId> = {
        let mut seen = Vec::new();
        for e in evals {
            if !seen.contains(&&e.decision) {
                seen.push(&e.decision);
            }
        }
        seen
    };
    for d in decisions {
        out.push_str(&d.to_string());
        for k in ks {
            let cell = evals
                .iter()
                .find(|e| &e.decision == d && e.k == *k)
                .and_then(|e| e.test_auc)
                .map_or_else(|| "NA".to_string(), |a| a.to_string());
            out.push('\t');
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_sized() {
        let ids: Vec<String> = (0..10).map(|i| format!("P{i:02}")).collect();
        let a = split_by_patient(ids.iter().map(String::as_str), TrainSize::Count(6), 7).unwrap();
        let b = split_by_patient(ids.iter().map(String::as_str), TrainSize::Count(6), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train_patient_ids.len(), a.test_patient_ids.len()), (6, 4));
        assert!(a.train_patient_ids.is_disjoint(&a.test_patient_ids));
        let c = split_by_patient(ids.iter().map(String::as_str), TrainSize::Count(6), 8).unwrap();
        assert_eq!(c.train_patient_ids.len(), 6);
    }

    #[test]
    fn split_errors_and_fraction() {
        let ids = ["a", "b", "c"];
        assert_eq!(
            split_by_patient(ids, TrainSize::Count(3), 1),
            Err(SvmError::TrainCount { requested: 3, available: 3 })
        );
        assert_eq!(split_by_patient(["a"], TrainSize::Count(1), 1), Err(SvmError::TooFewPatients(1)));
        assert!(split_by_patient(ids, TrainSize::Fraction(1.0), 1).is_err());
        let s = split_by_patient(ids, TrainSize::Fraction(0.65), 1).unwrap();
        assert_eq!(s.train_patient_ids.len(), 2);
    }

    #[test]
    fn full_cohort_split() {
        let ids: Vec<String> = (0..4486).map(|i| format!("P{i:05}")).collect();
        let s = split_by_patient(ids.iter().map(String::as_str), TrainSize::Count(2900), 42).unwrap();
        assert_eq!(s.train_patient_ids.len(), 2900);
        assert_eq!(s.test_patient_ids.len(), 1586);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median::<f64>(vec![]), None);
    }
}
