//! Synthetic cohorts with planted ordering rules and their expected best features.

mod generate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ClinicalCategory;
use crate::decision::DecisionId;
use crate::importance::{AnalysisKind, Scope};

pub use generate::generate;

#[derive(Debug, Error, PartialEq)]
#[error("invalid synth config `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn bad(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

/// Truncated geometric stay length in whole days: `P(min + k) ∝ (1 - p)^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StayConfig {
    pub min_days: u32,
    pub max_days: u32,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularySizes {
    pub continuous_labs: usize,
    pub categorical_labs: usize,
    pub medications: usize,
    pub procedures: usize,
    pub devices: usize,
}

impl VocabularySizes {
    pub fn continuous_lab_ids(&self) -> Vec<String> {
        ids("LAB", self.continuous_labs)
    }
    pub fn categorical_lab_ids(&self) -> Vec<String> {
        ids("CAT", self.categorical_labs)
    }
    pub fn medication_ids(&self) -> Vec<String> {
        ids("MED", self.medications)
    }
    pub fn procedure_ids(&self) -> Vec<String> {
        ids("PROC", self.procedures)
    }
    pub fn device_ids(&self) -> Vec<String> {
        ids("DEV", self.devices)
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i:03}")).collect()
}

/// Activity of variables not driven by any rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    /// Poisson rate of unruled lab orders, per lab per day.
    pub lab_orders_per_day: f64,
    /// Per-patient probability of starting each unruled medication.
    pub medication_prob: f64,
    /// Per-patient probability of each unruled procedure.
    pub procedure_prob: f64,
    pub device_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rule {
    /// Lab ordered within two hours of admission, then every `period_hours`,
    /// each scheduled order shifted uniformly by up to `jitter_hours`.
    RoutineLab {
        lab: String,
        period_hours: f64,
        #[serde(default)]
        jitter_hours: f64,
    },
    /// At each 08:00 round, if the latest known `source` value exceeds
    /// `threshold`, `target` is ordered after a delay drawn in hours.
    ValueTrigger {
        source: String,
        threshold: f64,
        target: String,
        delay_min_hours: f64,
        delay_max_hours: f64,
    },
    /// With `probability` the patient undergoes `procedure` one evening;
    /// `medication` starts after a delay drawn in hours.
    ProcedureTrigger {
        procedure: String,
        medication: String,
        probability: f64,
        delay_min_hours: f64,
        delay_max_hours: f64,
    },
    /// Once `first` is on, `second` starts with `probability` during the
    /// following day (1–12h after the next 08:00 round).
    MedPair { first: String, second: String, probability: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub stay: StayConfig,
    pub vocabulary: VocabularySizes,
    /// Probability that a rule-implied order is omitted.
    pub noise: f64,
    pub background: Background,
    pub rules: Vec<Rule>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let routine = |lab: &str, period_hours| Rule::RoutineLab { lab: lab.into(), period_hours, jitter_hours: 4.0 };
        let value = |source: &str, target: &str| Rule::ValueTrigger {
            source: source.into(),
            threshold: 10.0,
            target: target.into(),
            delay_min_hours: 1.0,
            delay_max_hours: 20.0,
        };
        let procedure = |procedure: &str, medication: &str| Rule::ProcedureTrigger {
            procedure: procedure.into(),
            medication: medication.into(),
            probability: 0.5,
            delay_min_hours: 14.0,
            delay_max_hours: 18.0,
        };
        SynthConfig {
            n_patients: 200,
            seed: 42,
            stay: StayConfig { min_days: 2, max_days: 14, p: 0.2 },
            vocabulary: VocabularySizes {
                continuous_labs: 12,
                categorical_labs: 3,
                medications: 8,
                procedures: 6,
                devices: 4,
            },
            noise: 0.05,
            background: Background {
                lab_orders_per_day: 0.5,
                medication_prob: 0.3,
                procedure_prob: 0.3,
                device_prob: 0.4,
            },
            rules: vec![
                routine("LAB001", 72.0),
                routine("LAB002", 96.0),
                routine("LAB003", 72.0),
                routine("LAB004", 96.0),
                routine("LAB005", 72.0),
                value("LAB001", "LAB006"),
                value("LAB002", "LAB007"),
                value("LAB003", "LAB008"),
                procedure("PROC001", "MED001"),
                procedure("PROC002", "MED002"),
                procedure("PROC003", "MED003"),
                procedure("PROC004", "MED004"),
                procedure("PROC005", "MED005"),
                Rule::MedPair { first: "MED001".into(), second: "MED006".into(), probability: 0.9 },
            ],
        }
    }
}

fn check_prob(field: &str, p: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(bad(field, format!("probability {p} outside [0, 1]")))
    }
}

fn check_delay(field: &str, lo: f64, hi: f64, max: f64) -> Result<(), ConfigError> {
    if lo > 0.0 && lo <= hi && hi <= max {
        Ok(())
    } else {
        Err(bad(field, format!("delay range [{lo}, {hi}] must satisfy 0 < min <= max <= {max}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_patients == 0 {
            return Err(bad("n_patients", "must be at least 1"));
        }
        let s = &self.stay;
        if s.min_days == 0 || s.min_days > s.max_days {
            return Err(bad("stay", format!("need 1 <= min_days <= max_days, got {}..{}", s.min_days, s.max_days)));
        }
        if !(s.p > 0.0 && s.p <= 1.0) {
            return Err(bad("stay.p", format!("{} outside (0, 1]", s.p)));
        }
        check_prob("noise", self.noise)?;
        check_prob("background.medication_prob", self.background.medication_prob)?;
        check_prob("background.procedure_prob", self.background.procedure_prob)?;
        check_prob("background.device_prob", self.background.device_prob)?;
        let rate = self.background.lab_orders_per_day;
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(bad("background.lab_orders_per_day", format!("{rate} must be finite and >= 0")));
        }

        let labs: BTreeSet<String> = self.vocabulary.continuous_lab_ids().into_iter().collect();
        let meds: BTreeSet<String> = self.vocabulary.medication_ids().into_iter().collect();
        let procs: BTreeSet<String> = self.vocabulary.procedure_ids().into_iter().collect();
        let mut ruled_labs = BTreeSet::new();
        let mut ruled_meds = BTreeSet::new();
        let mut ruled_procs = BTreeSet::new();
        for (i, rule) in self.rules.iter().enumerate() {
            let field = |name: &str| format!("rules[{i}].{name}");
            let known = |set: &BTreeSet<String>, name: &str, id: &str| {
                if set.contains(id) {
                    Ok(())
                } else {
                    Err(bad(field(name), format!("`{id}` is not in the vocabulary")))
                }
            };
            let claim = |set: &mut BTreeSet<String>, name: &str, id: &str| {
                if set.insert(id.to_string()) {
                    Ok(())
                } else {
                    Err(bad(field(name), format!("`{id}` is driven by more than one rule")))
                }
            };
            match rule {
                Rule::RoutineLab { lab, period_hours, jitter_hours } => {
                    known(&labs, "lab", lab)?;
                    if !(period_hours.is_finite() && *period_hours >= 1.0) {
                        return Err(bad(field("period_hours"), format!("{period_hours} must be >= 1")));
                    }
                    if !(*jitter_hours >= 0.0 && *jitter_hours < period_hours / 2.0) {
                        return Err(bad(field("jitter_hours"), format!("{jitter_hours} must lie in [0, period/2)")));
                    }
                    claim(&mut ruled_labs, "lab", lab)?;
                }
                Rule::ValueTrigger { source, threshold, target, delay_min_hours, delay_max_hours } => {
                    known(&labs, "source", source)?;
                    known(&labs, "target", target)?;
                    if source == target {
                        return Err(bad(field("target"), "source and target must differ"));
                    }
                    if !threshold.is_finite() {
                        return Err(bad(field("threshold"), "must be finite"));
                    }
                    check_delay(&field("delay"), *delay_min_hours, *delay_max_hours, 24.0)?;
                    claim(&mut ruled_labs, "target", target)?;
                }
                Rule::ProcedureTrigger { procedure, medication, probability, delay_min_hours, delay_max_hours } => {
                    known(&procs, "procedure", procedure)?;
                    known(&meds, "medication", medication)?;
                    check_prob(&field("probability"), *probability)?;
                    check_delay(&field("delay"), *delay_min_hours, *delay_max_hours, 24.0)?;
                    claim(&mut ruled_procs, "procedure", procedure)?;
                    claim(&mut ruled_meds, "medication", medication)?;
                }
                Rule::MedPair { first, second, probability } => {
                    known(&meds, "first", first)?;
                    known(&meds, "second", second)?;
                    if first == second {
                        return Err(bad(field("second"), "first and second must differ"));
                    }
                    check_prob(&field("probability"), *probability)?;
                    claim(&mut ruled_meds, "second", second)?;
                }
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        let cfg: SynthConfig = serde_json::from_str(s).map_err(|e| bad("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn patient_ids(&self) -> Vec<String> {
        let width = self.n_patients.to_string().len().max(4);
        (1..=self.n_patients).map(|i| format!("P{i:0width$}")).collect()
    }
}

/// Expected rank-1 feature for a ruled decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expectation {
    pub clinical_category: ClinicalCategory,
    /// Slot id, e.g. `F19`.
    pub temporal_category: String,
    pub source_variable: String,
    /// Feature scope under which the expectation holds.
    pub scope: Scope,
    pub kind: AnalysisKind,
}

impl Expectation {
    pub fn feature_id(&self) -> String {
        format!("{}.{}", self.source_variable, self.temporal_category)
    }
}

/// Expected best feature for every decision driven by a rule.
pub fn ground_truth(config: &SynthConfig) -> BTreeMap<DecisionId, Expectation> {
    let mut out = BTreeMap::new();
    for rule in &config.rules {
        let (decision, exp) = match rule {
            Rule::RoutineLab { lab, .. } => (
                DecisionId::lab(lab.clone()),
                Expectation {
                    clinical_category: ClinicalCategory::Lab,
                    temporal_category: "F19".into(),
                    source_variable: lab.clone(),
                    scope: Scope::SameVariableOnly,
                    kind: AnalysisKind::LabOrder,
                },
            ),
            Rule::ValueTrigger { source, target, .. } => (
                DecisionId::lab(target.clone()),
                Expectation {
                    clinical_category: ClinicalCategory::Lab,
                    temporal_category: "F01".into(),
                    source_variable: source.clone(),
                    scope: Scope::OtherVariablesOnly,
                    kind: AnalysisKind::LabOrder,
                },
            ),
            Rule::ProcedureTrigger { procedure, medication, .. } => (
                DecisionId::med(medication.clone()),
                Expectation {
                    clinical_category: ClinicalCategory::Procedure,
                    temporal_category: "P01".into(),
                    source_variable: procedure.clone(),
                    scope: Scope::AllFeatures,
                    kind: AnalysisKind::MedCommission,
                },
            ),
            Rule::MedPair { first, second, .. } => (
                DecisionId::med(second.clone()),
                Expectation {
                    clinical_category: ClinicalCategory::Med,
                    temporal_category: "M01".into(),
                    source_variable: first.clone(),
                    scope: Scope::AllFeatures,
                    kind: AnalysisKind::MedCommission,
                },
            ),
        };
        out.insert(decision, exp);
    }
    out
}

/// `ground_truth` as a JSON object keyed by decision id.
pub fn ground_truth_json(config: &SynthConfig) -> String {
    let mut s = serde_json::to_string_pretty(&ground_truth(config)).expect("ground truth serializes");
    s.push('\n');
    s
}
