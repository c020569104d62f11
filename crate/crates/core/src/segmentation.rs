//! Daily anchors and next-window decision labels.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{DecisionId, DecisionKind};
use crate::record::{MedStatus, PatientRecord};
use crate::time::{format_timestamp, parse_timestamp, Timestamp};

pub const INSTANCE_FORMAT_HEADER: &str = "#pstate-instances\tv1";

/// Anchor clock and period. The default is 08:00 every 24 hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub clock: NaiveTime,
    pub period_hours: u32,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { clock: NaiveTime::from_hms_opt(8, 0, 0).unwrap(), period_hours: 24 }
    }
}

impl Schedule {
    fn period(&self) -> chrono::Duration {
        chrono::Duration::hours(self.period_hours as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientStateInstance {
    pub patient_id: String,
    pub anchor_time: Timestamp,
    pub day_index: u32,
    pub lab_labels: BTreeMap<String, bool>,
    pub med_labels: BTreeMap<String, bool>,
}

impl PatientStateInstance {
    /// Row key used in matrix files: `patient_id:day_index`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.patient_id, self.day_index)
    }

    /// Absent entries are negative.
    pub fn label(&self, decision: &DecisionId) -> bool {
        let map = match decision.kind {
            DecisionKind::LabOrder => &self.lab_labels,
            DecisionKind::MedOrder => &self.med_labels,
        };
        map.get(&decision.variable_id).copied().unwrap_or(false)
    }
}

/// All clock ticks `t` with `first_event < t <= end_time`, ascending.
pub fn anchors_for(record: &PatientRecord, schedule: &Schedule) -> Vec<Timestamp> {
    let (Some(first), Some(end)) = (record.first_event_time(), record.end_time()) else {
        return Vec::new();
    };
    let mut t = first.date().and_time(schedule.clock);
    while t <= first {
        t += schedule.period();
    }
    let mut out = Vec::new();
    while t <= end {
        out.push(t);
        t += schedule.period();
    }
    out
}

/// On-intervals `[start, end)` per medication; `end == None` while still on.
fn med_intervals(record: &PatientRecord) -> BTreeMap<&str, Vec<(Timestamp, Option<Timestamp>)>> {
    let mut out: BTreeMap<&str, Vec<(Timestamp, Option<Timestamp>)>> = BTreeMap::new();
    for e in &record.med_status_events {
        let list = out.entry(&e.med_id).or_default();
        match e.status {
            MedStatus::On => list.push((e.time, None)),
            MedStatus::Off => {
                if let Some(last) = list.last_mut().filter(|iv| iv.1.is_none()) {
                    last.1 = Some(e.time);
                }
            }
        }
    }
    out
}

pub fn build_instances(record: &PatientRecord, schedule: &Schedule) -> Vec<PatientStateInstance> {
    let window = schedule.period();
    let meds = med_intervals(record);
    anchors_for(record, schedule)
        .into_iter()
        .enumerate()
        .map(|(i, anchor)| {
            let close = anchor + window;
            let mut lab_labels = BTreeMap::new();
            for e in &record.lab_events {
                let hit = e.order_time > anchor && e.order_time <= close;
                *lab_labels.entry(e.lab_id.clone()).or_insert(false) |= hit;
            }
            let med_labels = meds
                .iter()
                .map(|(med, intervals)| {
                    let given = intervals
                        .iter()
                        .any(|(start, end)| *start <= close && end.is_none_or(|e| e > anchor));
                    (med.to_string(), given)
                })
                .collect();
            PatientStateInstance {
                patient_id: record.patient_id.clone(),
                anchor_time: anchor,
                day_index: i as u32 + 1,
                lab_labels,
                med_labels,
            }
        })
        .collect()
}

/// Keeps instances at which the patient has not yet been on `med_id`
/// (no `med_on` at or before the anchor). Labels are untouched.
pub fn commission_instances(
    instances: &[PatientStateInstance],
    record: &PatientRecord,
    med_id: &str,
) -> Vec<PatientStateInstance> {
    let first_on = record.first_med_on(med_id);
    instances
        .iter()
        .filter(|i| first_on.is_none_or(|t| t > i.anchor_time))
        .cloned()
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceFileError {
    #[error("malformed instance file header `{0}`")]
    Header(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

pub fn write_instances(instances: &[PatientStateInstance]) -> String {
    let mut out = String::from(INSTANCE_FORMAT_HEADER);
    out.push('\n');
    for inst in instances {
        let _ = write!(
            out,
            "{}\t{}\t{}",
            inst.patient_id,
            format_timestamp(&inst.anchor_time),
            inst.day_index
        );
        for (lab, _) in inst.lab_labels.iter().filter(|(_, v)| **v) {
            let _ = write!(out, "\t{}=1", DecisionId::lab(lab.as_str()));
        }
        for (med, _) in inst.med_labels.iter().filter(|(_, v)| **v) {
            let _ = write!(out, "\t{}=1", DecisionId::med(med.as_str()));
        }
        out.push('\n');
    }
    out
}

/// Reads an instance file. Only positive labels are stored, so the label maps
/// of the returned instances contain `true` entries only.
pub fn parse_instances(input: &str) -> Result<Vec<PatientStateInstance>, InstanceFileError> {
    let mut lines = input.lines();
    let header = lines.next().unwrap_or("");
    if header.trim_end_matches('\r') != INSTANCE_FORMAT_HEADER {
        return Err(InstanceFileError::Header(header.to_string()));
    }
    let mut out = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let line = idx + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let err = |message: String| InstanceFileError::Line { line, message };
        let mut fields = raw.split('\t');
        let patient_id = fields.next().unwrap_or_default().to_string();
        let anchor_time = parse_timestamp(fields.next().unwrap_or_default())
            .map_err(|e| err(e.to_string()))?;
        let day_index = fields
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| err("day index is not an integer".into()))?;
        let mut inst = PatientStateInstance {
            patient_id,
            anchor_time,
            day_index,
            lab_labels: BTreeMap::new(),
            med_labels: BTreeMap::new(),
        };
        for f in fields {
            let decision: DecisionId = f
                .strip_suffix("=1")
                .ok_or_else(|| err(format!("label `{f}` is not `decision=1`")))?
                .parse()
                .map_err(err)?;
            let map = match decision.kind {
                DecisionKind::LabOrder => &mut inst.lab_labels,
                DecisionKind::MedOrder => &mut inst.med_labels,
            };
            map.insert(decision.variable_id, true);
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn is_on_clock(t: &Timestamp, schedule: &Schedule) -> bool {
    t.time().hour() == schedule.clock.hour() && t.time().minute() == schedule.clock.minute()
}
