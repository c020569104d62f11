//! Patient record data model and invariant checks.

mod events;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

pub use events::{parse_dataset, write_dataset, ParseError, EVENT_FORMAT_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Race {
    White,
    Black,
    Asian,
    Hispanic,
    Other,
    Unknown,
}

macro_rules! code_set {
    ($ty:ty, $($variant:ident => $code:literal),+ $(,)?) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$(<$ty>::$variant),+];

            pub fn code(self) -> &'static str {
                match self { $(<$ty>::$variant => $code),+ }
            }

            /// Position in the declared code set; used as the numeric feature value.
            pub fn ordinal(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).unwrap()
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($code => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown {} code `{}`", stringify!($ty), other)),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }
    };
}

code_set!(Sex, M => "M", F => "F", U => "U");
code_set!(Race,
    White => "WHITE",
    Black => "BLACK",
    Asian => "ASIAN",
    Hispanic => "HISPANIC",
    Other => "OTHER",
    Unknown => "UNKNOWN",
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: f64,
    pub sex: Sex,
    pub race: Race,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Continuous,
    Categorical,
}

impl ValueKind {
    pub fn code(self) -> &'static str {
        match self {
            ValueKind::Continuous => "continuous",
            ValueKind::Categorical => "categorical",
        }
    }
}

impl FromStr for ValueKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "continuous" => Ok(ValueKind::Continuous),
            "categorical" => Ok(ValueKind::Categorical),
            other => Err(format!("unknown value kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LabValue {
    Continuous(f64),
    Categorical(String),
}

impl LabValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            LabValue::Continuous(_) => ValueKind::Continuous,
            LabValue::Categorical(_) => ValueKind::Categorical,
        }
    }
}

/// One lab order and, once it arrives, its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabEvent {
    pub lab_id: String,
    pub order_time: Timestamp,
    pub result_time: Option<Timestamp>,
    pub value: Option<LabValue>,
    pub value_kind: ValueKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedStatus {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedStatusEvent {
    pub med_id: String,
    pub time: Timestamp,
    pub status: MedStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureEvent {
    pub proc_id: String,
    pub time: Timestamp,
}

/// `end == None` means the device is still in use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceInterval {
    pub device_id: String,
    pub start: Timestamp,
    pub end: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    /// Time the demographics line was recorded; treated as the admission event.
    pub admission_time: Option<Timestamp>,
    pub demographics: Option<Demographics>,
    pub lab_events: Vec<LabEvent>,
    pub med_status_events: Vec<MedStatusEvent>,
    pub procedure_events: Vec<ProcedureEvent>,
    pub device_intervals: Vec<DeviceInterval>,
    pub discharge_time: Option<Timestamp>,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>) -> Self {
        PatientRecord {
            patient_id: patient_id.into(),
            admission_time: None,
            demographics: None,
            lab_events: Vec::new(),
            med_status_events: Vec::new(),
            procedure_events: Vec::new(),
            device_intervals: Vec::new(),
            discharge_time: None,
        }
    }

    /// Every timestamp carried by the record, in no particular order.
    pub fn event_times(&self) -> impl Iterator<Item = Timestamp> + '_ {
        let labs = self
            .lab_events
            .iter()
            .flat_map(|e| std::iter::once(e.order_time).chain(e.result_time));
        let meds = self.med_status_events.iter().map(|e| e.time);
        let procs = self.procedure_events.iter().map(|e| e.time);
        let devs = self
            .device_intervals
            .iter()
            .flat_map(|d| std::iter::once(d.start).chain(d.end));
        self.admission_time
            .into_iter()
            .chain(labs)
            .chain(meds)
            .chain(procs)
            .chain(devs)
            .chain(self.discharge_time)
    }

    pub fn first_event_time(&self) -> Option<Timestamp> {
        self.event_times().min()
    }

    /// Segmentation horizon: the explicit discharge time, else the last event.
    pub fn end_time(&self) -> Option<Timestamp> {
        self.discharge_time.or_else(|| self.event_times().max())
    }

    /// Sorts every event list by timestamp. Stable, so equal times keep input order.
    pub fn sort_events(&mut self) {
        self.lab_events.sort_by_key(|e| e.order_time);
        self.med_status_events.sort_by_key(|e| e.time);
        self.procedure_events.sort_by_key(|e| e.time);
        self.device_intervals.sort_by_key(|d| d.start);
    }

    pub fn first_med_on(&self, med_id: &str) -> Option<Timestamp> {
        self.med_status_events
            .iter()
            .filter(|e| e.med_id == med_id && e.status == MedStatus::On)
            .map(|e| e.time)
            .min()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    EmptyPatientId,
    DuplicatePatientId(String),
    MissingDemographics,
    NegativeAge,
    Unsorted { list: &'static str },
    ResultPrecedesOrder { lab_id: String },
    ValuePresenceMismatch { lab_id: String },
    ValueKindMismatch { lab_id: String },
    MedAlternation { med_id: String },
    UnknownProcedure { proc_id: String },
    DeviceEndBeforeStart { device_id: String },
    DeviceOverlap { device_id: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPatientId => write!(f, "empty patient id"),
            Violation::DuplicatePatientId(id) => write!(f, "duplicate patient id {id}"),
            Violation::MissingDemographics => write!(f, "missing demographics"),
            Violation::NegativeAge => write!(f, "negative age"),
            Violation::Unsorted { list } => write!(f, "{list} not in chronological order"),
            Violation::ResultPrecedesOrder { lab_id } => {
                write!(f, "lab {lab_id}: result precedes order")
            }
            Violation::ValuePresenceMismatch { lab_id } => {
                write!(f, "lab {lab_id}: value present without result time or vice versa")
            }
            Violation::ValueKindMismatch { lab_id } => {
                write!(f, "lab {lab_id}: inconsistent value kind")
            }
            Violation::MedAlternation { med_id } => {
                write!(f, "med {med_id}: status events do not alternate starting with on")
            }
            Violation::UnknownProcedure { proc_id } => {
                write!(f, "procedure {proc_id} not in vocabulary")
            }
            Violation::DeviceEndBeforeStart { device_id } => {
                write!(f, "device {device_id}: interval ends before it starts")
            }
            Violation::DeviceOverlap { device_id } => {
                write!(f, "device {device_id}: overlapping intervals")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

fn is_sorted_by_key<T, K: PartialOrd>(items: &[T], key: impl Fn(&T) -> K) -> bool {
    items.windows(2).all(|w| key(&w[0]) <= key(&w[1]))
}

/// Checks every per-record invariant. Violations are data, not failures.
pub fn validate(record: &PatientRecord) -> ValidationReport {
    let mut out = BTreeSet::new();

    if record.patient_id.is_empty() {
        out.insert(Violation::EmptyPatientId);
    }
    match &record.demographics {
        None => {
            out.insert(Violation::MissingDemographics);
        }
        Some(d) if d.age.is_nan() || d.age < 0.0 => {
            out.insert(Violation::NegativeAge);
        }
        Some(_) => {}
    }

    if !is_sorted_by_key(&record.lab_events, |e| e.order_time) {
        out.insert(Violation::Unsorted { list: "lab events" });
    }
    if !is_sorted_by_key(&record.med_status_events, |e| e.time) {
        out.insert(Violation::Unsorted { list: "medication events" });
    }
    if !is_sorted_by_key(&record.procedure_events, |e| e.time) {
        out.insert(Violation::Unsorted { list: "procedure events" });
    }
    if !is_sorted_by_key(&record.device_intervals, |d| d.start) {
        out.insert(Violation::Unsorted { list: "device intervals" });
    }

    let mut kinds: BTreeMap<&str, ValueKind> = BTreeMap::new();
    for e in &record.lab_events {
        let lab_id = || e.lab_id.clone();
        if let Some(r) = e.result_time {
            if r < e.order_time {
                out.insert(Violation::ResultPrecedesOrder { lab_id: lab_id() });
            }
        }
        if e.result_time.is_some() != e.value.is_some() {
            out.insert(Violation::ValuePresenceMismatch { lab_id: lab_id() });
        }
        let kind_ok = e.value.as_ref().is_none_or(|v| v.kind() == e.value_kind)
            && *kinds.entry(&e.lab_id).or_insert(e.value_kind) == e.value_kind;
        if !kind_ok {
            out.insert(Violation::ValueKindMismatch { lab_id: lab_id() });
        }
    }

    let mut last_status: BTreeMap<&str, MedStatus> = BTreeMap::new();
    for e in &record.med_status_events {
        let ok = match (last_status.get(e.med_id.as_str()), e.status) {
            (None, MedStatus::On) => true,
            (Some(prev), s) => *prev != s,
            (None, MedStatus::Off) => false,
        };
        if !ok {
            out.insert(Violation::MedAlternation { med_id: e.med_id.clone() });
        }
        last_status.insert(&e.med_id, e.status);
    }

    let mut by_device: BTreeMap<&str, Vec<&DeviceInterval>> = BTreeMap::new();
    for d in &record.device_intervals {
        if d.end.is_some_and(|end| end < d.start) {
            out.insert(Violation::DeviceEndBeforeStart { device_id: d.device_id.clone() });
        }
        by_device.entry(&d.device_id).or_default().push(d);
    }
    for (device_id, mut intervals) in by_device {
        intervals.sort_by_key(|d| d.start);
        let overlaps = intervals.windows(2).any(|w| match w[0].end {
            None => true,
            Some(end) => end > w[1].start,
        });
        if overlaps {
            out.insert(Violation::DeviceOverlap { device_id: device_id.to_string() });
        }
    }

    ValidationReport { violations: out.into_iter().collect() }
}

/// Dataset-level checks on top of [`validate`]: unique ids and, when given,
/// membership of every procedure in the declared vocabulary.
pub fn validate_dataset(
    records: &[PatientRecord],
    procedure_vocabulary: Option<&BTreeSet<String>>,
) -> Vec<(String, Violation)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in records {
        if !seen.insert(r.patient_id.as_str()) {
            out.push((r.patient_id.clone(), Violation::DuplicatePatientId(r.patient_id.clone())));
        }
        for v in validate(r).violations {
            out.push((r.patient_id.clone(), v));
        }
        if let Some(vocab) = procedure_vocabulary {
            let unknown: BTreeSet<_> = r
                .procedure_events
                .iter()
                .filter(|p| !vocab.contains(&p.proc_id))
                .map(|p| p.proc_id.clone())
                .collect();
            for proc_id in unknown {
                out.push((r.patient_id.clone(), Violation::UnknownProcedure { proc_id }));
            }
        }
    }
    out
}
