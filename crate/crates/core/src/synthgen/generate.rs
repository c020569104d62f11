use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;

use super::{ConfigError, Rule, SynthConfig};
use crate::record::{
    Demographics, DeviceInterval, LabEvent, LabValue, MedStatus, MedStatusEvent, PatientRecord, ProcedureEvent, Race,
    Sex, ValueKind,
};
use crate::time::Timestamp;

const DAY: i64 = 1440;
const ROUND: i64 = 8 * 60;
const VALUE_FLOOR: f64 = 0.1;
const CATEGORY_TOKENS: [&str; 3] = ["NEG", "TRACE", "POS"];

/// Generates `config.n_patients` records, ordered by patient id. Each patient
/// draws from its own stream of the seeded generator, so output does not
/// depend on thread count.
pub fn generate(config: &SynthConfig) -> Result<Vec<PatientRecord>, ConfigError> {
    config.validate()?;
    let ids = config.patient_ids();
    Ok(ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            Patient::simulate(config, id, &mut rng)
        })
        .collect())
}

/// Times are minutes from midnight of the admission day.
struct Patient<'a> {
    config: &'a SynthConfig,
    origin: Timestamp,
    admit: i64,
    discharge: i64,
}

struct Order {
    lab: String,
    time: i64,
    result: Option<(i64, LabValue)>,
}

fn uniform(rng: &mut ChaCha8Rng, lo: i64, hi: i64) -> i64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn hours(h: f64) -> i64 {
    (h * 60.0).round() as i64
}

impl<'a> Patient<'a> {
    fn at(&self, m: i64) -> Timestamp {
        self.origin + Duration::minutes(m)
    }

    fn rounds(&self) -> impl Iterator<Item = i64> + '_ {
        (0..)
            .map(|d| ROUND + d * DAY)
            .skip_while(|t| *t <= self.admit)
            .take_while(|t| *t <= self.discharge)
    }

    fn simulate(config: &'a SynthConfig, id: &str, rng: &mut ChaCha8Rng) -> PatientRecord {
        let origin = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
            + Duration::days(rng.random_range(0..366));
        let span = u64::from(config.stay.max_days - config.stay.min_days);
        let geo = Geometric::new(config.stay.p).expect("validated stay.p");
        let extra = loop {
            let k = geo.sample(rng);
            if k <= span {
                break k;
            }
        };
        let days = i64::from(config.stay.min_days) + extra as i64;
        let admit = uniform(rng, 9 * 60, 20 * 60);
        let discharge = days * DAY + uniform(rng, 10 * 60, 16 * 60);
        let p = Patient { config, origin, admit, discharge };

        let mut record = PatientRecord::new(id);
        record.admission_time = Some(p.at(admit));
        record.discharge_time = Some(p.at(discharge));
        record.demographics = Some(Demographics {
            age: rng.random_range(40..=90) as f64,
            sex: Sex::ALL[rng.random_range(0..2)],
            race: Race::ALL[rng.random_range(0..Race::ALL.len())],
        });

        let (orders, lab_kinds) = p.labs(rng);
        for o in orders {
            let (result_time, value) = match o.result {
                Some((t, v)) => (Some(p.at(t)), Some(v)),
                None => (None, None),
            };
            record.lab_events.push(LabEvent {
                value_kind: lab_kinds[&o.lab],
                lab_id: o.lab,
                order_time: p.at(o.time),
                result_time,
                value,
            });
        }

        let (procedures, med_starts) = p.procedures_and_meds(rng);
        record.procedure_events = procedures
            .into_iter()
            .map(|(proc_id, t)| ProcedureEvent { proc_id, time: p.at(t) })
            .collect();
        for (med, start) in med_starts {
            let end = start + uniform(rng, 48 * 60, 120 * 60);
            record.med_status_events.push(MedStatusEvent { med_id: med.clone(), time: p.at(start), status: MedStatus::On });
            if end < discharge {
                record.med_status_events.push(MedStatusEvent { med_id: med, time: p.at(end), status: MedStatus::Off });
            }
        }

        for dev in config.vocabulary.device_ids() {
            if rng.random::<f64>() < config.background.device_prob {
                let start = uniform(rng, admit + 1, discharge - 60);
                let end = (start + uniform(rng, 12 * 60, 120 * 60)).min(discharge);
                record.device_intervals.push(DeviceInterval { device_id: dev, start: p.at(start), end: Some(p.at(end)) });
            }
        }
        record.sort_events();
        record
    }

    /// Hourly random walk with a reflective floor, one per continuous lab.
    fn walk(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = (self.discharge / 60 + 2) as usize;
        let step = Normal::new(0.0, 0.3).unwrap();
        let mut v = rng.random_range(6.0..14.0);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(v);
            v += step.sample(rng);
            if v < VALUE_FLOOR {
                v = 2.0 * VALUE_FLOOR - v;
            }
        }
        out
    }

    fn result(&self, rng: &mut ChaCha8Rng, order: i64, value: impl FnOnce(i64, &mut ChaCha8Rng) -> LabValue) -> Option<(i64, LabValue)> {
        let t = order + uniform(rng, 30, 180);
        (t <= self.discharge).then(|| (t, value(t, rng)))
    }

    fn poisson_times(&self, rng: &mut ChaCha8Rng, per_day: f64) -> Vec<i64> {
        let mut out = Vec::new();
        if per_day <= 0.0 {
            return out;
        }
        let mut t = self.admit as f64;
        loop {
            t += -(1.0 - rng.random::<f64>()).ln() / per_day * DAY as f64;
            let m = t.round() as i64;
            if m >= self.discharge {
                return out;
            }
            if m > self.admit {
                out.push(m);
            }
        }
    }

    fn labs(&self, rng: &mut ChaCha8Rng) -> (Vec<Order>, BTreeMap<String, ValueKind>) {
        let cfg = self.config;
        let noise = cfg.noise;
        let continuous = cfg.vocabulary.continuous_lab_ids();
        let categorical = cfg.vocabulary.categorical_lab_ids();
        let mut kinds: BTreeMap<String, ValueKind> = BTreeMap::new();
        let walks: BTreeMap<String, Vec<f64>> = continuous
            .iter()
            .map(|lab| {
                kinds.insert(lab.clone(), ValueKind::Continuous);
                (lab.clone(), self.walk(rng))
            })
            .collect();
        for lab in &categorical {
            kinds.insert(lab.clone(), ValueKind::Categorical);
        }
        let reading = |lab: &str| {
            let w = &walks[lab];
            move |t: i64, _: &mut ChaCha8Rng| {
                let v = w[(t / 60) as usize];
                LabValue::Continuous(((v * 100.0).round() / 100.0).max(VALUE_FLOOR))
            }
        };

        let ruled: BTreeSet<&str> = cfg
            .rules
            .iter()
            .filter_map(|r| match r {
                Rule::RoutineLab { lab, .. } => Some(lab.as_str()),
                Rule::ValueTrigger { target, .. } => Some(target.as_str()),
                _ => None,
            })
            .collect();

        let mut orders: Vec<Order> = Vec::new();
        for rule in &cfg.rules {
            if let Rule::RoutineLab { lab, period_hours, jitter_hours } = rule {
                let period = hours(*period_hours);
                let jitter = hours(*jitter_hours);
                let first = self.admit + uniform(rng, 1, 120);
                let mut planned = first + period;
                let mut times = vec![first];
                while planned < self.discharge {
                    times.push(planned + uniform(rng, -jitter, jitter));
                    planned += period;
                }
                for t in times.into_iter().filter(|t| *t < self.discharge) {
                    if rng.random::<f64>() >= noise {
                        let result = self.result(rng, t, reading(lab));
                        orders.push(Order { lab: lab.clone(), time: t, result });
                    }
                }
            }
        }
        for lab in continuous.iter().filter(|l| !ruled.contains(l.as_str())) {
            for t in self.poisson_times(rng, cfg.background.lab_orders_per_day) {
                let result = self.result(rng, t, reading(lab));
                orders.push(Order { lab: lab.clone(), time: t, result });
            }
        }
        for lab in &categorical {
            let weights: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let total: f64 = weights.iter().sum();
            for t in self.poisson_times(rng, cfg.background.lab_orders_per_day) {
                let result = self.result(rng, t, |_, rng| {
                    let mut u = rng.random::<f64>() * total;
                    let mut k = 0;
                    while k + 1 < weights.len() && u >= weights[k] {
                        u -= weights[k];
                        k += 1;
                    }
                    LabValue::Categorical(CATEGORY_TOKENS[k].to_string())
                });
                orders.push(Order { lab: lab.clone(), time: t, result });
            }
        }

        for rule in &cfg.rules {
            if let Rule::ValueTrigger { source, threshold, target, delay_min_hours, delay_max_hours } = rule {
                let rounds: Vec<i64> = self.rounds().collect();
                for round in rounds {
                    let latest = orders
                        .iter()
                        .filter(|o| &o.lab == source)
                        .filter_map(|o| o.result.as_ref())
                        .filter(|(t, _)| *t <= round)
                        .max_by_key(|(t, _)| *t);
                    let above = matches!(latest, Some((_, LabValue::Continuous(v))) if v > threshold);
                    if !above {
                        continue;
                    }
                    let lo = round + hours(*delay_min_hours);
                    let hi = (round + hours(*delay_max_hours)).min(self.discharge - 1);
                    if lo > hi || rng.random::<f64>() < noise {
                        continue;
                    }
                    let t = uniform(rng, lo, hi);
                    let result = self.result(rng, t, reading(target));
                    orders.push(Order { lab: target.clone(), time: t, result });
                }
            }
        }
        orders.sort_by(|a, b| (a.time, &a.lab).cmp(&(b.time, &b.lab)));
        (orders, kinds)
    }

    /// Procedure events and the start minute of every medication given.
    fn procedures_and_meds(&self, rng: &mut ChaCha8Rng) -> (Vec<(String, i64)>, BTreeMap<String, i64>) {
        let cfg = self.config;
        let mut procedures = Vec::new();
        let mut starts: BTreeMap<String, i64> = BTreeMap::new();
        let mut ruled_procs = BTreeSet::new();
        let mut ruled_meds = BTreeSet::new();
        let last_day = self.discharge / DAY;

        for rule in &cfg.rules {
            match rule {
                Rule::ProcedureTrigger { procedure, medication, probability, delay_min_hours, delay_max_hours } => {
                    ruled_procs.insert(procedure.clone());
                    ruled_meds.insert(medication.clone());
                    if rng.random::<f64>() >= *probability {
                        continue;
                    }
                    // evenings 18:01-23:00, leaving the next day for the medication
                    let (eve_lo, eve_hi) = (18 * 60 + 1, 23 * 60);
                    let days: Vec<i64> = (0..=last_day - 2).filter(|d| d * DAY + eve_hi > self.admit).collect();
                    if days.is_empty() {
                        continue;
                    }
                    let d = days[rng.random_range(0..days.len())];
                    let t = d * DAY + uniform(rng, eve_lo.max(self.admit + 1 - d * DAY), eve_hi);
                    procedures.push((procedure.clone(), t));
                    let start = t + uniform(rng, hours(*delay_min_hours), hours(*delay_max_hours));
                    if rng.random::<f64>() >= cfg.noise && start < self.discharge {
                        starts.insert(medication.clone(), start);
                    }
                }
                Rule::MedPair { second, .. } => {
                    ruled_meds.insert(second.clone());
                }
                _ => {}
            }
        }

        for proc_id in cfg.vocabulary.procedure_ids() {
            if !ruled_procs.contains(&proc_id) && rng.random::<f64>() < cfg.background.procedure_prob {
                procedures.push((proc_id, uniform(rng, self.admit + 1, self.discharge - 1)));
            }
        }
        for med in cfg.vocabulary.medication_ids() {
            if !ruled_meds.contains(&med) && rng.random::<f64>() < cfg.background.medication_prob {
                starts.insert(med, uniform(rng, self.admit + 60, self.discharge - 60));
            }
        }
        for rule in &cfg.rules {
            if let Rule::MedPair { first, second, probability } = rule {
                let Some(&s) = starts.get(first) else { continue };
                if rng.random::<f64>() >= *probability || rng.random::<f64>() < cfg.noise {
                    continue;
                }
                let next_round = (s - ROUND).div_euclid(DAY) * DAY + ROUND + DAY;
                let start = next_round + uniform(rng, 60, 12 * 60);
                if start < self.discharge {
                    starts.entry(second.clone()).or_insert(start);
                }
            }
        }
        procedures.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
        (procedures, starts)
    }
}
