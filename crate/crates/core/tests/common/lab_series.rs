use pstate::record::{LabEvent, LabValue, ValueKind};
use pstate::time::{add_hours, parse_timestamp, Timestamp};

pub fn anchor() -> Timestamp {
    parse_timestamp("2020-03-10T08:00").unwrap()
}

/// Five results (mean 10, population std 2) plus one order still pending at the anchor.
pub fn fixture_events() -> Vec<LabEvent> {
    let a = anchor();
    let done = |order: f64, value: f64| LabEvent {
        lab_id: "GLU".into(),
        order_time: add_hours(a, order),
        result_time: Some(add_hours(a, order + 1.0)),
        value: Some(LabValue::Continuous(value)),
        value_kind: ValueKind::Continuous,
    };
    vec![
        done(-51.0, 11.0),
        done(-37.0, 6.5),
        done(-21.0, 12.5),
        done(-10.5, 10.5),
        done(-3.0, 9.5),
        LabEvent {
            lab_id: "GLU".into(),
            order_time: add_hours(a, -0.5),
            result_time: Some(add_hours(a, 1.0)),
            value: Some(LabValue::Continuous(50.0)),
            value_kind: ValueKind::Continuous,
        },
    ]
}
