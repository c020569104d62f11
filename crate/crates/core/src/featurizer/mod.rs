//! Per-anchor feature slots for every clinical variable.
//!
//! Each featurizer takes the variable's full event history plus the anchor and
//! ignores everything after the anchor, so callers cannot leak future events.

mod matrix;

use crate::record::{Demographics, DeviceInterval, LabEvent, LabValue, MedStatus, MedStatusEvent, ProcedureEvent};
use crate::scalar::Scalar;
use crate::time::{hours_between, Timestamp};

pub use matrix::{
    build_matrix, parse_matrix_tsv, write_matrix_tsv, BuildError, FeatureDescriptor, FeatureMatrix,
    MatrixFileError, MatrixMeta, Vocabulary, MATRIX_FORMAT_VERSION,
};

/// Feature value; `None` is MISSING.
pub type Slot<T> = Option<T>;

/// Floor on the elapsed time used by the measurement-rate slot, in hours.
pub const RATE_MIN_HOURS: f64 = 1.0;

const WINDOW_HOURS: f64 = 24.0;

fn flag<T: Scalar>(b: bool) -> Slot<T> {
    Some(if b { T::one() } else { T::zero() })
}

fn ratio<T: Scalar>(num: T, den: T) -> Slot<T> {
    if den == T::zero() {
        None
    } else {
        Some(num / den)
    }
}

/// What is known about one continuous lab at an anchor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContinuousLabSnapshot {
    /// Results with `result_time <= anchor`, chronological.
    pub results: Vec<(Timestamp, f64)>,
    pub first_order_time: Option<Timestamp>,
    pub last_order_time: Option<Timestamp>,
    pub pending: bool,
}

impl ContinuousLabSnapshot {
    pub fn at<'a>(events: impl IntoIterator<Item = &'a LabEvent>, anchor: Timestamp) -> Self {
        let mut snap = ContinuousLabSnapshot::default();
        for e in events {
            if e.order_time > anchor {
                continue;
            }
            snap.first_order_time = Some(snap.first_order_time.map_or(e.order_time, |t| t.min(e.order_time)));
            snap.last_order_time = Some(snap.last_order_time.map_or(e.order_time, |t| t.max(e.order_time)));
            match (e.result_time, &e.value) {
                (Some(rt), Some(LabValue::Continuous(v))) if rt <= anchor => snap.results.push((rt, *v)),
                _ => snap.pending = true,
            }
        }
        snap.results.sort_by_key(|(t, _)| *t);
        snap
    }

    pub fn last(&self) -> Option<(Timestamp, f64)> {
        self.results.last().copied()
    }

    pub fn second_last(&self) -> Option<(Timestamp, f64)> {
        self.results.len().checked_sub(2).map(|i| self.results[i])
    }

    pub fn first(&self) -> Option<(Timestamp, f64)> {
        self.results.first().copied()
    }

    /// Minimum value; ties resolve to the most recent occurrence.
    pub fn nadir(&self) -> Option<(Timestamp, f64)> {
        self.results.iter().copied().reduce(|best, r| if r.1 <= best.1 { r } else { best })
    }

    /// Maximum value; ties resolve to the most recent occurrence.
    pub fn horizon(&self) -> Option<(Timestamp, f64)> {
        self.results.iter().copied().reduce(|best, r| if r.1 >= best.1 { r } else { best })
    }

    pub fn window(&self, anchor: Timestamp) -> &[(Timestamp, f64)] {
        let start = self
            .results
            .partition_point(|(t, _)| hours_between(*t, anchor) > WINDOW_HOURS);
        &self.results[start..]
    }
}

/// The 40 continuous-lab slots `F01..F40`, in catalog order.
pub fn featurize_continuous_lab<T: Scalar>(snap: &ContinuousLabSnapshot, anchor: Timestamp) -> [Slot<T>; 40] {
    let val = |p: Option<(Timestamp, f64)>| p.map(|(_, v)| T::lit(v));
    let since = |t: Timestamp| T::lit(hours_between(t, anchor));
    // (value difference, (t_other - t_last)) -> slope; MISSING on zero gap
    let slope = |num: T, other: Timestamp, last: Timestamp| ratio(num, T::lit(hours_between(last, other)));

    let last = snap.last();
    let prev = snap.second_last();
    let first = snap.first();
    let nadir = snap.nadir();
    let horizon = snap.horizon();
    let (a, b, f, d, h) = (val(last), val(prev), val(first), val(nadir), val(horizon));

    let mut s: [Slot<T>; 40] = [None; 40];
    s[0] = a;
    s[1] = b;
    s[2] = f;
    s[3] = d;
    s[4] = h;

    if let (Some((ta, av)), Some((tb, bv))) = (last, prev) {
        let (av, bv) = (T::lit(av), T::lit(bv));
        s[5] = Some(bv - av);
        s[6] = ratio(bv - av, bv);
        s[7] = slope(bv - av, tb, ta);
        s[25] = flag(av > bv);
        s[26] = flag(av < bv);
    }
    if let (Some((ta, av)), Some((tf, fv)), Some((td, dv)), Some((th, hv))) = (last, first, nadir, horizon) {
        let (av, fv, dv, hv) = (T::lit(av), T::lit(fv), T::lit(dv), T::lit(hv));
        s[8] = Some(fv - av);
        s[9] = ratio(fv - av, fv);
        s[10] = slope(fv - av, tf, ta);
        s[11] = Some(av - dv);
        s[12] = ratio(av - dv, dv);
        s[13] = slope(av - dv, ta, td);
        s[14] = Some(hv - av);
        s[15] = ratio(hv - av, hv);
        s[16] = slope(hv - av, th, ta);
        s[17] = Some(since(ta));
        s[20] = Some(since(td));
        s[21] = Some(since(th));
        s[37] = Some(hv - dv);
        s[38] = Some(since(tf));
    }
    s[18] = snap.last_order_time.map(since);
    s[19] = snap.first_order_time.map(since);
    s[22] = flag(snap.pending);
    s[23] = flag(!snap.results.is_empty());
    s[24] = flag(snap.results.len() >= 2);

    let window = snap.window(anchor);
    s[27] = Some(T::from_count(window.len()));
    if let (Some(&(t0, v0)), Some(&(t1, v1))) = (window.first(), window.last()) {
        let vals = window.iter().map(|(_, v)| T::lit(*v));
        let sum = vals.clone().fold(T::zero(), |acc, v| acc + v);
        let lo = vals.clone().fold(T::infinity(), T::min);
        let hi = vals.fold(T::neg_infinity(), T::max);
        s[28] = Some(sum / T::from_count(window.len()));
        s[29] = Some(lo);
        s[30] = Some(hi);
        s[31] = Some(hi - lo);
        s[32] = Some(T::lit(v1) - T::lit(v0));
        s[33] = slope(T::lit(v0) - T::lit(v1), t0, t1);
    }

    let n = snap.results.len();
    s[34] = Some(T::from_count(n));
    if n > 0 {
        let nt = T::from_count(n);
        let mean = snap.results.iter().fold(T::zero(), |acc, (_, v)| acc + T::lit(*v)) / nt;
        let ss = snap.results.iter().fold(T::zero(), |acc, (_, v)| {
            let dv = T::lit(*v) - mean;
            acc + dv * dv
        });
        s[35] = Some(mean);
        s[36] = Some((ss / nt).sqrt());
    }
    s[39] = s[38].map(|elapsed| {
        T::from_count(n) * T::lit(24.0) / elapsed.max(T::lit(RATE_MIN_HOURS))
    });
    s
}

/// The 7 categorical-lab slots `C01..C07`. Token slots hold the token's index in
/// `codes`; tokens absent from `codes` are MISSING.
pub fn featurize_categorical_lab<'a, T: Scalar>(
    events: impl IntoIterator<Item = &'a LabEvent>,
    anchor: Timestamp,
    codes: &[String],
) -> [Slot<T>; 7] {
    let mut results: Vec<(Timestamp, &str)> = Vec::new();
    let mut last_order: Option<Timestamp> = None;
    let mut pending = false;
    for e in events {
        if e.order_time > anchor {
            continue;
        }
        last_order = Some(last_order.map_or(e.order_time, |t| t.max(e.order_time)));
        match (e.result_time, &e.value) {
            (Some(rt), Some(LabValue::Categorical(tok))) if rt <= anchor => results.push((rt, tok)),
            _ => pending = true,
        }
    }
    results.sort_by_key(|(t, _)| *t);
    let code = |i: Option<usize>| {
        i.and_then(|i| results.get(i))
            .and_then(|(_, tok)| codes.iter().position(|c| c == tok))
            .map(T::from_count)
    };
    let n = results.len();
    [
        code(n.checked_sub(1)),
        code(n.checked_sub(2)),
        code((n > 0).then_some(0)),
        last_order.map(|t| T::lit(hours_between(t, anchor))),
        flag(pending),
        flag(n >= 1),
        flag(n >= 2),
    ]
}

/// `M01..M04` for one medication's status events.
pub fn featurize_medication<'a, T: Scalar>(
    events: impl IntoIterator<Item = &'a MedStatusEvent>,
    anchor: Timestamp,
) -> [Slot<T>; 4] {
    let mut seen: Vec<&MedStatusEvent> = events.into_iter().filter(|e| e.time <= anchor).collect();
    seen.sort_by_key(|e| e.time);
    let since = |t: Timestamp| T::lit(hours_between(t, anchor));
    let first_on = seen.iter().find(|e| e.status == MedStatus::On).map(|e| e.time);
    let last = seen.last();
    let on_now = last.is_some_and(|e| e.status == MedStatus::On);
    let since_on = if on_now {
        Some(T::zero())
    } else if first_on.is_some() {
        last.map(|e| since(e.time))
    } else {
        None
    };
    [flag(on_now), since_on, first_on.map(since), last.map(|e| since(e.time))]
}

/// `P01..P04` for one procedure.
pub fn featurize_procedure<'a, T: Scalar>(
    events: impl IntoIterator<Item = &'a ProcedureEvent>,
    anchor: Timestamp,
) -> [Slot<T>; 4] {
    let times: Vec<Timestamp> = events.into_iter().map(|e| e.time).filter(|t| *t <= anchor).collect();
    let last = times.iter().max().copied();
    let first = times.iter().min().copied();
    let since = |t: Timestamp| T::lit(hours_between(t, anchor));
    [
        last.map(since),
        first.map(since),
        flag(last.is_some_and(|t| hours_between(t, anchor) <= WINDOW_HOURS)),
        flag(last.is_some()),
    ]
}

/// `D01`: whether any interval covers the anchor.
pub fn featurize_device<'a, T: Scalar>(
    intervals: impl IntoIterator<Item = &'a DeviceInterval>,
    anchor: Timestamp,
) -> [Slot<T>; 1] {
    [flag(
        intervals
            .into_iter()
            .any(|d| d.start <= anchor && d.end.is_none_or(|e| e >= anchor)),
    )]
}

pub fn featurize_demographics<T: Scalar>(demo: Option<&Demographics>) -> [Slot<T>; 3] {
    match demo {
        Some(d) => [
            Some(T::lit(d.age)),
            Some(T::from_count(d.sex.ordinal())),
            Some(T::from_count(d.race.ordinal())),
        ],
        None => [None; 3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::ValueKind;
    use crate::time::{add_hours, parse_timestamp};

    fn base() -> Timestamp {
        parse_timestamp("2019-03-01T00:00").unwrap()
    }

    fn at(h: f64) -> Timestamp {
        add_hours(base(), h)
    }

    fn result(h: f64, v: f64) -> LabEvent {
        LabEvent {
            lab_id: "GLU".into(),
            order_time: at(h - 0.5),
            result_time: Some(at(h)),
            value: Some(LabValue::Continuous(v)),
            value_kind: ValueKind::Continuous,
        }
    }

    fn slots(events: &[LabEvent], anchor_h: f64) -> [Slot<f64>; 40] {
        let snap = ContinuousLabSnapshot::at(events, at(anchor_h));
        featurize_continuous_lab(&snap, at(anchor_h))
    }

    #[test]
    fn last_pair_formulas() {
        let s = slots(&[result(1.0, 5.0), result(3.0, 7.0)], 10.0);
        assert_eq!(s[0], Some(7.0));
        assert_eq!(s[1], Some(5.0));
        assert_eq!(s[5], Some(-2.0));
        assert_eq!(s[6], Some(-0.4));
        assert_eq!(s[7], Some(1.0));
        assert_eq!(s[25], Some(1.0));
        assert_eq!(s[26], Some(0.0));
    }

    #[test]
    fn nadir_and_horizon() {
        let s = slots(&[result(1.0, 5.0), result(2.0, 3.0), result(3.0, 8.0)], 10.0);
        assert_eq!(s[3], Some(3.0));
        assert_eq!(s[4], Some(8.0));
        assert_eq!(s[11], Some(5.0));
        assert!((s[12].unwrap() - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[14], Some(0.0));
        // horizon is the last result: zero time gap
        assert_eq!(s[16], None);
    }

    #[test]
    fn single_result() {
        let s = slots(&[result(1.0, 5.0)], 10.0);
        for i in [1, 5, 6, 7, 25, 26] {
            assert_eq!(s[i], None, "slot F{:02}", i + 1);
        }
        assert_eq!(s[24], Some(0.0));
        assert_eq!(s[23], Some(1.0));
        assert_eq!(s[10], None);
        assert_eq!(s[8], Some(0.0));
    }

    #[test]
    fn zero_denominators_are_missing() {
        let s = slots(&[result(1.0, 0.0), result(2.0, 0.0)], 10.0);
        assert_eq!(s[6], None);
        assert_eq!(s[9], None);
        assert_eq!(s[12], None);
        assert_eq!(s[15], None);
        let s = slots(&[result(2.0, 4.0), result(2.0, 6.0)], 10.0);
        assert_eq!(s[7], None);
        assert_eq!(s[5], Some(-2.0));
    }

    #[test]
    fn nadir_ties_pick_most_recent() {
        let s = slots(&[result(1.0, 3.0), result(2.0, 5.0), result(4.0, 3.0), result(5.0, 5.0)], 10.0);
        assert_eq!(s[20], Some(6.0));
        assert_eq!(s[21], Some(5.0));
    }

    #[test]
    fn no_results_only_counts_and_flags() {
        let s = slots(&[], 10.0);
        for (i, v) in s.iter().enumerate() {
            match i {
                22 | 23 | 24 | 27 | 34 => assert_eq!(*v, Some(0.0), "slot F{:02}", i + 1),
                _ => assert_eq!(*v, None, "slot F{:02}", i + 1),
            }
        }
    }

    #[test]
    fn pending_and_future_results() {
        let mut late = result(12.0, 9.0);
        late.order_time = at(8.0);
        let s = slots(&[result(1.0, 5.0), late], 10.0);
        assert_eq!(s[0], Some(5.0));
        assert_eq!(s[22], Some(1.0));
        assert_eq!(s[18], Some(2.0));
        assert_eq!(s[19], Some(9.5));
        assert_eq!(s[17], Some(9.0));
    }

    #[test]
    fn categorical_examples() {
        let cat = |h: f64, tok: &str| LabEvent {
            lab_id: "CULT".into(),
            order_time: at(h - 1.0),
            result_time: Some(at(h)),
            value: Some(LabValue::Categorical(tok.into())),
            value_kind: ValueKind::Categorical,
        };
        let codes = vec!["NEG".to_string(), "POS".to_string()];
        let ev = [cat(2.0, "NEG"), cat(5.0, "POS")];
        let s: [Slot<f64>; 7] = featurize_categorical_lab(&ev, at(10.0), &codes);
        assert_eq!(s, [Some(1.0), Some(0.0), Some(0.0), Some(6.0), Some(0.0), Some(1.0), Some(1.0)]);

        let s: [Slot<f64>; 7] = featurize_categorical_lab(&[], at(10.0), &codes);
        assert_eq!(s, [None, None, None, None, Some(0.0), Some(0.0), Some(0.0)]);

        let pending = LabEvent {
            lab_id: "CULT".into(),
            order_time: at(8.0),
            result_time: None,
            value: None,
            value_kind: ValueKind::Categorical,
        };
        let s: [Slot<f64>; 7] = featurize_categorical_lab([&pending], at(10.0), &codes);
        assert_eq!(s[4], Some(1.0));
        assert_eq!(s[3], Some(2.0));
    }

    fn med(h: f64, status: MedStatus) -> MedStatusEvent {
        MedStatusEvent { med_id: "HEP".into(), time: at(h), status }
    }

    #[test]
    fn medication_examples() {
        let ev = [med(8.0, MedStatus::On), med(32.0, MedStatus::Off)];
        let s: [Slot<f64>; 4] = featurize_medication(&ev, at(56.0));
        assert_eq!(s, [Some(0.0), Some(24.0), Some(48.0), Some(24.0)]);

        let ev = [med(7.0, MedStatus::On)];
        let s: [Slot<f64>; 4] = featurize_medication(&ev, at(10.0));
        assert_eq!(s, [Some(1.0), Some(0.0), Some(3.0), Some(3.0)]);

        let s: [Slot<f64>; 4] = featurize_medication(&[], at(10.0));
        assert_eq!(s, [Some(0.0), None, None, None]);
    }

    #[test]
    fn procedure_examples() {
        let p = |h: f64| ProcedureEvent { proc_id: "CABG".into(), time: at(h) };
        let s: [Slot<f64>; 4] = featurize_procedure(&[p(70.0)], at(100.0));
        assert_eq!(s, [Some(30.0), Some(30.0), Some(0.0), Some(1.0)]);
        let s: [Slot<f64>; 4] = featurize_procedure(&[p(70.0), p(90.0)], at(100.0));
        assert_eq!(s, [Some(10.0), Some(30.0), Some(1.0), Some(1.0)]);
        let s: [Slot<f64>; 4] = featurize_procedure(&[], at(100.0));
        assert_eq!(s, [None, None, Some(0.0), Some(0.0)]);
    }

    #[test]
    fn device_examples() {
        let d = |s: f64, e: Option<f64>| DeviceInterval { device_id: "ECMO".into(), start: at(s), end: e.map(at) };
        assert_eq!(featurize_device::<f64>(&[d(5.0, None)], at(10.0)), [Some(1.0)]);
        assert_eq!(featurize_device::<f64>(&[d(5.0, Some(9.0))], at(10.0)), [Some(0.0)]);
        assert_eq!(featurize_device::<f64>(&[], at(10.0)), [Some(0.0)]);
        assert_eq!(featurize_device::<f64>(&[d(11.0, None)], at(10.0)), [Some(0.0)]);
    }

    #[test]
    fn f32_path_agrees() {
        let ev = [result(1.0, 5.0), result(3.0, 7.0)];
        let snap = ContinuousLabSnapshot::at(&ev, at(10.0));
        let s: [Slot<f32>; 40] = featurize_continuous_lab(&snap, at(10.0));
        assert_eq!(s[5], Some(-2.0f32));
        assert_eq!(s[7], Some(1.0f32));
    }
}
