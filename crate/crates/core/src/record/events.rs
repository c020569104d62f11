//! Tab-separated event file reader and writer.
//!
//! ```text
//! #pstate-events<TAB>v1
//! P0001<TAB>demo<TAB>2019-03-01T14:00<TAB>age=67<TAB>sex=M<TAB>race=WHITE
//! P0001<TAB>lab_order<TAB>2019-03-01T15:00<TAB>lab=GLU<TAB>order=o1<TAB>kind=continuous
//! P0001<TAB>lab_result<TAB>2019-03-01T16:10<TAB>lab=GLU<TAB>order=o1<TAB>value=5.4
//! P0001<TAB>med_on<TAB>2019-03-01T18:00<TAB>med=HEP
//! P0001<TAB>med_off<TAB>2019-03-02T18:00<TAB>med=HEP
//! P0001<TAB>proc<TAB>2019-03-01T12:00<TAB>proc=CABG
//! P0001<TAB>dev_on<TAB>2019-03-01T12:30<TAB>device=IABP
//! P0001<TAB>dev_off<TAB>2019-03-02T07:00<TAB>device=IABP
//! P0001<TAB>discharge<TAB>2019-03-05T11:00
//! ```
//!
//! Blank lines and lines starting with `#` after the header are ignored.
//! `order` keys are scoped to the patient and link a result to its order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{
    validate, Demographics, DeviceInterval, LabEvent, LabValue, MedStatus, MedStatusEvent,
    PatientRecord, ProcedureEvent, ValueKind, Violation,
};
use crate::time::{format_timestamp, parse_timestamp, Timestamp};

pub const EVENT_FORMAT_HEADER: &str = "#pstate-events\tv1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed header `{0}` (expected `{EVENT_FORMAT_HEADER}`)")]
    Header(String),
    #[error("unsupported event format version `{0}`")]
    Version(String),
    #[error("{} malformed line(s): {}", .0.len(), fmt_lines(.0))]
    Lines(Vec<LineError>),
    #[error("validation failed: {}", fmt_violations(.0))]
    Validation(Vec<(String, Violation)>),
}

fn fmt_lines(errs: &[LineError]) -> String {
    errs.iter()
        .map(|e| format!("line {}: {}", e.line, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn fmt_violations(v: &[(String, Violation)]) -> String {
    v.iter().map(|(p, v)| format!("{p}: {v}")).collect::<Vec<_>>().join("; ")
}

struct Line<'a> {
    number: usize,
    time: Timestamp,
    kind: &'a str,
    pairs: BTreeMap<&'a str, &'a str>,
}

impl<'a> Line<'a> {
    fn get(&self, key: &str) -> Result<&'a str, String> {
        self.pairs
            .get(key)
            .copied()
            .ok_or_else(|| format!("{} event missing `{key}=`", self.kind))
    }
}

#[derive(Default)]
struct PatientLines<'a> {
    lines: Vec<Line<'a>>,
}

pub(crate) fn check_header(line: Option<&str>) -> Result<(), ParseError> {
    let header = line.unwrap_or("").trim_end_matches('\r');
    let mut parts = header.split('\t');
    if parts.next() != Some("#pstate-events") {
        return Err(ParseError::Header(header.to_string()));
    }
    match parts.next() {
        Some("v1") if parts.next().is_none() => Ok(()),
        Some(v) => Err(ParseError::Version(v.to_string())),
        None => Err(ParseError::Header(header.to_string())),
    }
}

fn split_line(number: usize, raw: &str) -> Result<(&str, Line<'_>), String> {
    let mut fields = raw.split('\t');
    let patient = fields.next().filter(|s| !s.is_empty()).ok_or("missing patient id")?;
    let kind = fields.next().ok_or("missing event kind")?;
    let time = fields.next().ok_or("missing timestamp")?;
    let time = parse_timestamp(time).map_err(|e| e.to_string())?;
    let mut pairs = BTreeMap::new();
    for field in fields {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| format!("field `{field}` is not key=value"))?;
        if pairs.insert(k, v).is_some() {
            return Err(format!("key `{k}` repeated"));
        }
    }
    Ok((patient, Line { number, time, kind, pairs }))
}

/// Parses an event file into one record per patient, ordered by patient id.
///
/// Malformed lines are collected and reported together. Records that parse but
/// break a record invariant (e.g. a `med_off` before any `med_on`) are rejected
/// with the violations listed per patient.
pub fn parse_dataset(input: &str) -> Result<Vec<PatientRecord>, ParseError> {
    let mut lines = input.lines();
    check_header(lines.next())?;

    let mut errors = Vec::new();
    let mut by_patient: BTreeMap<&str, PatientLines<'_>> = BTreeMap::new();
    for (idx, raw) in lines.enumerate() {
        let number = idx + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        match split_line(number, raw) {
            Ok((patient, line)) => by_patient.entry(patient).or_default().lines.push(line),
            Err(message) => errors.push(LineError { line: number, message }),
        }
    }

    let mut records = Vec::with_capacity(by_patient.len());
    for (patient, plines) in by_patient {
        match build_record(patient, plines) {
            Ok(r) => records.push(r),
            Err(mut e) => errors.append(&mut e),
        }
    }
    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(ParseError::Lines(errors));
    }

    let violations: Vec<_> = records
        .iter()
        .flat_map(|r| validate(r).violations.into_iter().map(|v| (r.patient_id.clone(), v)))
        .collect();
    if !violations.is_empty() {
        return Err(ParseError::Validation(violations));
    }
    Ok(records)
}

fn build_record(patient: &str, plines: PatientLines<'_>) -> Result<PatientRecord, Vec<LineError>> {
    let mut record = PatientRecord::new(patient);
    let mut errors = Vec::new();
    let mut demo_line: Option<usize> = None;
    let mut discharge_line: Option<usize> = None;
    // order id -> (index into lab_events, line number)
    let mut orders: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut results: Vec<&Line<'_>> = Vec::new();
    let mut device_events: BTreeMap<&str, Vec<(&Line<'_>, bool)>> = BTreeMap::new();

    for line in &plines.lines {
        let res: Result<(), String> = (|| {
            match line.kind {
                "demo" => {
                    if let Some(prev) = demo_line {
                        return Err(format!("demographics conflict with line {prev}"));
                    }
                    let age: f64 = line
                        .get("age")?
                        .parse()
                        .map_err(|_| "age is not a number".to_string())?;
                    let sex = line.get("sex")?.parse()?;
                    let race = line.get("race")?.parse()?;
                    record.demographics = Some(Demographics { age, sex, race });
                    record.admission_time = Some(line.time);
                    demo_line = Some(line.number);
                }
                "lab_order" => {
                    let order_id = line.get("order")?;
                    if let Some((_, prev)) = orders.get(order_id) {
                        return Err(format!("order `{order_id}` already declared on line {prev}"));
                    }
                    let value_kind: ValueKind = line.get("kind")?.parse()?;
                    orders.insert(order_id, (record.lab_events.len(), line.number));
                    record.lab_events.push(LabEvent {
                        lab_id: line.get("lab")?.to_string(),
                        order_time: line.time,
                        result_time: None,
                        value: None,
                        value_kind,
                    });
                }
                "lab_result" => {
                    line.get("order")?;
                    line.get("lab")?;
                    line.get("value")?;
                    results.push(line);
                }
                "med_on" | "med_off" => {
                    record.med_status_events.push(MedStatusEvent {
                        med_id: line.get("med")?.to_string(),
                        time: line.time,
                        status: if line.kind == "med_on" { MedStatus::On } else { MedStatus::Off },
                    });
                }
                "proc" => record.procedure_events.push(ProcedureEvent {
                    proc_id: line.get("proc")?.to_string(),
                    time: line.time,
                }),
                "dev_on" | "dev_off" => {
                    device_events
                        .entry(line.get("device")?)
                        .or_default()
                        .push((line, line.kind == "dev_on"));
                }
                "discharge" => {
                    if let Some(prev) = discharge_line {
                        return Err(format!("discharge conflicts with line {prev}"));
                    }
                    record.discharge_time = Some(line.time);
                    discharge_line = Some(line.number);
                }
                other => return Err(format!("unknown event kind `{other}`")),
            }
            Ok(())
        })();
        if let Err(message) = res {
            errors.push(LineError { line: line.number, message });
        }
    }

    let mut result_lines: BTreeMap<&str, usize> = BTreeMap::new();
    for line in results {
        let order_id = line.pairs["order"];
        let Some(&(idx, order_line)) = orders.get(order_id) else {
            errors.push(LineError {
                line: line.number,
                message: format!("result for undeclared order `{order_id}`"),
            });
            continue;
        };
        if let Some(prev) = result_lines.insert(order_id, line.number) {
            errors.push(LineError {
                line: line.number,
                message: format!("second result for order `{order_id}` (first on line {prev})"),
            });
            continue;
        }
        let event = &mut record.lab_events[idx];
        if event.lab_id != line.pairs["lab"] {
            errors.push(LineError {
                line: line.number,
                message: format!(
                    "result lab `{}` does not match order on line {order_line} (`{}`)",
                    line.pairs["lab"], event.lab_id
                ),
            });
            continue;
        }
        let raw = line.pairs["value"];
        let value = match event.value_kind {
            ValueKind::Continuous => match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => LabValue::Continuous(v),
                _ => {
                    errors.push(LineError {
                        line: line.number,
                        message: format!("continuous value `{raw}` is not a finite number"),
                    });
                    continue;
                }
            },
            ValueKind::Categorical => LabValue::Categorical(raw.to_string()),
        };
        event.result_time = Some(line.time);
        event.value = Some(value);
    }

    for (device_id, mut events) in device_events {
        events.sort_by_key(|(l, _)| (l.time, l.number));
        let mut open: Option<&Line<'_>> = None;
        for (line, is_on) in events {
            match (open, is_on) {
                (None, true) => open = Some(line),
                (Some(start), false) => {
                    record.device_intervals.push(DeviceInterval {
                        device_id: device_id.to_string(),
                        start: start.time,
                        end: Some(line.time),
                    });
                    open = None;
                }
                (Some(start), true) => errors.push(LineError {
                    line: line.number,
                    message: format!(
                        "device {device_id} switched on while already on since line {}",
                        start.number
                    ),
                }),
                (None, false) => errors.push(LineError {
                    line: line.number,
                    message: format!("device {device_id} switched off while not on"),
                }),
            }
        }
        if let Some(start) = open {
            record.device_intervals.push(DeviceInterval {
                device_id: device_id.to_string(),
                start: start.time,
                end: None,
            });
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    record.sort_events();
    Ok(record)
}

/// Serializes records in the event file format. Parsing the output yields
/// records equal to the input (for records that satisfy the invariants).
pub fn write_dataset(records: &[PatientRecord]) -> String {
    let mut out = String::new();
    out.push_str(EVENT_FORMAT_HEADER);
    out.push('\n');
    for r in records {
        let p = &r.patient_id;
        if let Some(d) = &r.demographics {
            let t = r.admission_time.or_else(|| r.first_event_time()).expect("record has a time");
            let _ = writeln!(
                out,
                "{p}\tdemo\t{}\tage={}\tsex={}\trace={}",
                format_timestamp(&t),
                d.age,
                d.sex,
                d.race
            );
        }
        for (i, e) in r.lab_events.iter().enumerate() {
            let _ = writeln!(
                out,
                "{p}\tlab_order\t{}\tlab={}\torder=o{}\tkind={}",
                format_timestamp(&e.order_time),
                e.lab_id,
                i + 1,
                e.value_kind.code()
            );
            if let (Some(t), Some(v)) = (e.result_time, &e.value) {
                let value = match v {
                    LabValue::Continuous(x) => x.to_string(),
                    LabValue::Categorical(s) => s.clone(),
                };
                let _ = writeln!(
                    out,
                    "{p}\tlab_result\t{}\tlab={}\torder=o{}\tvalue={value}",
                    format_timestamp(&t),
                    e.lab_id,
                    i + 1
                );
            }
        }
        for e in &r.med_status_events {
            let kind = match e.status {
                MedStatus::On => "med_on",
                MedStatus::Off => "med_off",
            };
            let _ = writeln!(out, "{p}\t{kind}\t{}\tmed={}", format_timestamp(&e.time), e.med_id);
        }
        for e in &r.procedure_events {
            let _ = writeln!(out, "{p}\tproc\t{}\tproc={}", format_timestamp(&e.time), e.proc_id);
        }
        for d in &r.device_intervals {
            let _ = writeln!(out, "{p}\tdev_on\t{}\tdevice={}", format_timestamp(&d.start), d.device_id);
            if let Some(end) = d.end {
                let _ = writeln!(out, "{p}\tdev_off\t{}\tdevice={}", format_timestamp(&end), d.device_id);
            }
        }
        if let Some(t) = r.discharge_time {
            let _ = writeln!(out, "{p}\tdischarge\t{}", format_timestamp(&t));
        }
    }
    out
}
