use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pstate::featurizer::{build_matrix, parse_matrix_tsv, write_matrix_tsv, MatrixMeta, Vocabulary};
use pstate::importance::{
    best_feature_histogram, histogram_tsv, rank_decisions, ranked_lists_tsv, truncate_lists, AnalysisKind,
};
use pstate::record::{parse_dataset, write_dataset, PatientRecord};
use pstate::segmentation::{build_instances, parse_instances, write_instances, Schedule};
use pstate::svm::{
    evaluate_models, evaluation_table_tsv, split_by_patient, train_models, SkippedModel, SplitSpec, SvmConfig,
    TrainSize,
};
use pstate::synthgen::{generate, ground_truth_json, SynthConfig};
use pstate::{Dataset, DecisionId, LinearModel};
use serde::{Deserialize, Serialize};

use crate::args::*;
use crate::manifest::{Inputs, Outputs};
use crate::report;

pub const MODEL_INDEX_VERSION: &str = "1";

/// Everything `evaluate` needs to score the models written by `train`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelIndex {
    pub format_version: String,
    pub kind: AnalysisKind,
    pub ks: Vec<usize>,
    pub split: SplitSpec,
    /// Model files, relative to the index.
    pub models: Vec<String>,
    pub skipped: Vec<SkippedModel>,
}

fn seeds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn parse_events(text: &str, path: &Path) -> Result<Vec<PatientRecord>> {
    parse_dataset(text).with_context(|| format!("invalid event file `{}`", path.display()))
}

pub fn resolve_synth_config(path: Option<&Path>, seed: Option<u64>, patients: Option<usize>, noise: Option<f64>, inputs: &mut Inputs) -> Result<SynthConfig> {
    let mut cfg = match path {
        Some(p) => SynthConfig::from_json(&inputs.read(p)?).with_context(|| format!("invalid synth config `{}`", p.display()))?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = patients {
        cfg.n_patients = n;
    }
    if let Some(x) = noise {
        cfg.noise = x;
    }
    cfg.validate().context("invalid synth config")?;
    Ok(cfg)
}

pub fn synth(a: &SynthArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(&a.out);
    let cfg = resolve_synth_config(a.synth_config.as_deref(), a.seed, a.patients, a.noise, &mut inputs)?;
    let records = generate(&cfg)?;
    let mut out = Outputs::new(&a.out)?;
    out.write("events.tsv", &write_dataset(&records))?;
    out.write("ground_truth.json", &ground_truth_json(&cfg))?;
    out.write_json("synth_config.json", &cfg)?;
    #[derive(Serialize)]
    struct Config<'a> {
        synth: &'a SynthConfig,
    }
    out.finish("synth", "synth", &Config { synth: &cfg }, seeds(&[("synth", cfg.seed)]), &inputs)
}

pub fn validate(a: &ValidateArgs) -> Result<()> {
    let mut inputs = Inputs::default();
    let records = parse_events(&inputs.read(&a.events)?, &a.events)?;
    let labs: usize = records.iter().map(|r| r.lab_events.len()).sum();
    let meds: usize = records.iter().map(|r| r.med_status_events.len()).sum();
    let procs: usize = records.iter().map(|r| r.procedure_events.len()).sum();
    let devices: usize = records.iter().map(|r| r.device_intervals.len()).sum();
    println!(
        "{}: valid; {} patients, {labs} lab events, {meds} medication events, {procs} procedures, {devices} device intervals",
        a.events.display(),
        records.len()
    );
    Ok(())
}

/// Normalizes an external event file into `events.tsv`.
pub fn ingest(events: &Path, dir: &Path) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(dir);
    let records = parse_events(&inputs.read(events)?, events)?;
    let mut out = Outputs::new(dir)?;
    out.write("events.tsv", &write_dataset(&records))?;
    out.finish("ingest", "pipeline", &serde_json::json!({}), BTreeMap::new(), &inputs)
}

pub fn segment(a: &SegmentArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(&a.out);
    let records = parse_events(&inputs.read(&a.events)?, &a.events)?;
    let schedule = Schedule::default();
    let instances: Vec<_> = records.iter().flat_map(|r| build_instances(r, &schedule)).collect();
    let mut out = Outputs::new(&a.out)?;
    out.write("instances.tsv", &write_instances(&instances))?;
    out.finish("segment", "segment", &serde_json::json!({ "schedule": schedule }), BTreeMap::new(), &inputs)
}

pub fn featurize(a: &FeaturizeArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(&a.out);
    let records = parse_events(&inputs.read(&a.events)?, &a.events)?;
    let instances = parse_instances(&inputs.read(&a.instances)?)
        .with_context(|| format!("invalid instance file `{}`", a.instances.display()))?;
    let vocab = Vocabulary::from_records(&records)?;
    let matrix = build_matrix::<f64>(&records, &instances, &vocab)?;
    let mut out = Outputs::new(&a.out)?;
    out.write("matrix.tsv", &write_matrix_tsv(&matrix))?;
    out.write_json("matrix.meta.json", &MatrixMeta::new(matrix.descriptors().to_vec(), vocab))?;
    out.finish("featurize", "featurize", &serde_json::json!({}), BTreeMap::new(), &inputs)
}

pub fn load_dataset(dir: &Path, inputs: &mut Inputs) -> Result<Dataset> {
    let meta_path = dir.join("matrix.meta.json");
    let meta: MatrixMeta =
        serde_json::from_str(&inputs.read(&meta_path)?).with_context(|| format!("invalid `{}`", meta_path.display()))?;
    let matrix_path = dir.join("matrix.tsv");
    let matrix = parse_matrix_tsv(&inputs.read(&matrix_path)?, &meta)
        .with_context(|| format!("invalid matrix `{}`", matrix_path.display()))?;
    let inst_path = dir.join("instances.tsv");
    let instances = parse_instances(&inputs.read(&inst_path)?)
        .with_context(|| format!("invalid instance file `{}`", inst_path.display()))?;
    Ok(Dataset::new(matrix, instances)?)
}

pub fn make_split(data: &Dataset, s: &SplitArgs) -> Result<SplitSpec> {
    let size = match s.train_count {
        Some(n) => TrainSize::Count(n),
        None => TrainSize::Fraction(s.train_fraction),
    };
    Ok(split_by_patient(data.instances.iter().map(|i| i.patient_id.as_str()), size, s.seed)?)
}

fn rows_for(data: &Dataset, rows: Rows, split: &SplitArgs) -> Result<Vec<usize>> {
    Ok(match rows {
        Rows::All => data.all_rows(),
        Rows::Train => data.rows_for_patients(&make_split(data, split)?.train_patient_ids),
    })
}

fn decisions_for(data: &Dataset, kind: AnalysisKind, wanted: &[DecisionId]) -> Result<Vec<DecisionId>> {
    let available = data.decisions(kind.decision_kind());
    if wanted.is_empty() {
        return Ok(available);
    }
    let known: BTreeSet<&DecisionId> = available.iter().collect();
    for d in wanted {
        if d.kind != kind.decision_kind() {
            bail!("decision `{d}` does not belong to analysis kind `{kind}`");
        }
        if !known.contains(d) {
            bail!("unknown decision `{d}`");
        }
    }
    Ok(wanted.to_vec())
}

fn emit(out_dir: Option<&Path>, name: &str, body: &str) -> Result<Option<Outputs>> {
    match out_dir {
        None => {
            print!("{body}");
            Ok(None)
        }
        Some(dir) => {
            let mut out = Outputs::new(dir)?;
            out.write(name, body)?;
            Ok(Some(out))
        }
    }
}

fn warn_skipped(skipped: &[(String, String)]) {
    for (d, reason) in skipped {
        eprintln!("skipped {d}: {reason}");
    }
}

fn split_seeds(rows: Rows, split: &SplitArgs) -> BTreeMap<String, u64> {
    match rows {
        Rows::Train => seeds(&[("split", split.seed)]),
        Rows::All => BTreeMap::new(),
    }
}

pub fn rank(a: &RankArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(a.out.as_deref().unwrap_or(Path::new(".")));
    let data = load_dataset(&a.input, &mut inputs)?;
    let rows = rows_for(&data, a.rows, &a.split)?;
    let decisions = decisions_for(&data, a.kind, &a.decision)?;
    let (lists, skipped) = rank_decisions(&data, &rows, &decisions, a.kind, a.scope, a.min_support);
    let lists = truncate_lists(&lists, a.top);
    let body = match a.format {
        Format::Tsv => {
            warn_skipped(&skipped.iter().map(|s| (s.decision.to_string(), s.reason.clone())).collect::<Vec<_>>());
            ranked_lists_tsv(&lists, None)
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&serde_json::json!({ "lists": lists, "skipped": skipped }))?;
            s.push('\n');
            s
        }
    };
    let tag = format!("rank_{}_{}", a.kind, a.scope);
    match emit(a.out.as_deref(), &format!("{tag}.{}", a.format.ext()), &body)? {
        None => Ok(Vec::new()),
        Some(out) => out.finish(&tag, "rank", a, split_seeds(a.rows, &a.split), &inputs),
    }
}

pub fn histogram(a: &HistogramArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(a.out.as_deref().unwrap_or(Path::new(".")));
    let data = load_dataset(&a.input, &mut inputs)?;
    let rows = rows_for(&data, a.rows, &a.split)?;
    let decisions = data.decisions(a.kind.decision_kind());
    let report = best_feature_histogram(&data, &rows, &decisions, a.grouping, a.scope, a.kind, a.min_support);
    let body = match a.format {
        Format::Tsv => {
            warn_skipped(&report.skipped.iter().map(|s| (s.decision.to_string(), s.reason.clone())).collect::<Vec<_>>());
            histogram_tsv(&report)
        }
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            s
        }
    };
    let tag = format!("histogram_{}_{}_{}", a.kind, a.grouping, a.scope);
    match emit(a.out.as_deref(), &format!("{tag}.{}", a.format.ext()), &body)? {
        None => Ok(Vec::new()),
        Some(out) => out.finish(&tag, "histogram", a, split_seeds(a.rows, &a.split), &inputs),
    }
}

fn svm_config(s: &SvmArgs, seed: u64) -> Result<SvmConfig> {
    if s.k.is_empty() || s.k.contains(&0) {
        bail!("--k needs positive feature counts");
    }
    if !(s.c > 0.0 && s.c.is_finite()) {
        bail!("--c must be positive, got {}", s.c);
    }
    Ok(SvmConfig { c: s.c, solver: s.solver, epochs: s.epochs, seed, balance: s.balance })
}

pub fn train(a: &TrainArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(&a.out);
    let data = load_dataset(&a.input, &mut inputs)?;
    let split = make_split(&data, &a.split)?;
    let decisions = decisions_for(&data, a.kind, &a.decision)?;
    let config = svm_config(&a.svm, a.split.seed)?;
    let trained = train_models(&data, &split, &decisions, a.kind, &a.svm.k, &config);

    let mut out = Outputs::new(&a.out)?;
    let mut files = Vec::new();
    for m in &trained.models {
        let name = format!("models/{}/{}.top{}.json", a.kind, m.decision.variable_id, m.k);
        out.write_json(&name, m)?;
        files.push(name);
    }
    for s in &trained.skipped {
        eprintln!("skipped {}{}: {}", s.decision, s.k.map_or(String::new(), |k| format!(" top{k}")), s.reason);
    }
    let index = ModelIndex {
        format_version: MODEL_INDEX_VERSION.into(),
        kind: a.kind,
        ks: a.svm.k.clone(),
        split,
        models: files,
        skipped: trained.skipped,
    };
    out.write_json(&format!("models_{}.json", a.kind), &index)?;
    let seeds = seeds(&[("split", a.split.seed), ("solver", a.split.seed)]);
    out.finish(&format!("train_{}", a.kind), "train", a, seeds, &inputs)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<Vec<String>> {
    let mut inputs = Inputs::relative_to(a.out.as_deref().unwrap_or(Path::new(".")));
    let index: ModelIndex = serde_json::from_str(&inputs.read(&a.models)?)
        .with_context(|| format!("invalid model index `{}`", a.models.display()))?;
    if index.format_version != MODEL_INDEX_VERSION {
        bail!(
            "model index `{}` has format version `{}`, expected `{MODEL_INDEX_VERSION}`",
            a.models.display(),
            index.format_version
        );
    }
    let base: PathBuf = a.models.parent().map(Path::to_path_buf).unwrap_or_default();
    let models = index
        .models
        .iter()
        .map(|f| {
            let p = base.join(f);
            let text = inputs.read(&p)?;
            serde_json::from_str::<LinearModel>(&text).with_context(|| format!("invalid model `{}`", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = load_dataset(&a.input, &mut inputs)?;
    let evals = evaluate_models(&data, &index.split, index.kind, &models, &index.skipped, &index.ks)?;
    let body = match a.format {
        Format::Tsv => evaluation_table_tsv(&evals, &index.ks),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&evals)?;
            s.push('\n');
            s
        }
    };
    let tag = format!("evaluation_{}", index.kind);
    match emit(a.out.as_deref(), &format!("{tag}.{}", a.format.ext()), &body)? {
        None => Ok(Vec::new()),
        Some(out) => out.finish(&tag, "evaluate", a, seeds(&[("split", index.split.seed)]), &inputs),
    }
}

pub fn report(a: &ReportArgs) -> Result<Vec<String>> {
    let dir = a.out.clone().unwrap_or_else(|| a.input.clone());
    let mut inputs = Inputs::relative_to(&dir);
    let summary = report::build(&a.input, &mut inputs)?;
    let mut out = Outputs::new(&dir)?;
    out.write_json("report.json", &summary)?;
    out.finish("report", "report", a, BTreeMap::new(), &inputs)
}

pub fn pipeline(a: &PipelineArgs) -> Result<Vec<String>> {
    let dir = &a.out;
    let mut inputs = Inputs::relative_to(dir);
    let mut files = Vec::new();
    let mut seeds = seeds(&[("split", a.seed)]);
    match &a.events {
        Some(events) => {
            inputs.read(events)?;
            files.extend(ingest(events, dir)?);
        }
        None => {
            let synth_args = SynthArgs {
                synth_config: a.synth_config.clone(),
                seed: Some(a.seed),
                patients: a.patients,
                noise: a.noise,
                out: dir.clone(),
            };
            if let Some(p) = &a.synth_config {
                inputs.read(p)?;
            }
            seeds.insert("synth".into(), a.seed);
            files.extend(synth(&synth_args)?);
        }
    }
    let events = dir.join("events.tsv");
    files.extend(segment(&SegmentArgs { events: events.clone(), out: dir.clone() })?);
    files.extend(featurize(&FeaturizeArgs { events, instances: dir.join("instances.tsv"), out: dir.clone() })?);

    let split = SplitArgs { train_count: a.train_count, train_fraction: a.train_fraction, seed: a.seed };
    let kinds = [AnalysisKind::LabOrder, a.med_kind];
    use pstate::importance::{Grouping, Scope};
    let scopes = [Scope::AllFeatures, Scope::SameVariableOnly, Scope::OtherVariablesOnly];
    for kind in kinds {
        for scope in scopes {
            files.extend(rank(&RankArgs {
                input: dir.clone(),
                kind,
                scope,
                decision: Vec::new(),
                top: a.top,
                min_support: a.min_support,
                rows: Rows::Train,
                split: split.clone(),
                format: a.format,
                out: Some(dir.clone()),
            })?);
            for grouping in [Grouping::Clinical5, Grouping::Temporal40] {
                files.extend(histogram(&HistogramArgs {
                    input: dir.clone(),
                    kind,
                    grouping,
                    scope,
                    min_support: a.min_support,
                    rows: Rows::Train,
                    split: split.clone(),
                    format: a.format,
                    out: Some(dir.clone()),
                })?);
            }
        }
        files.extend(train(&TrainArgs {
            input: dir.clone(),
            kind,
            decision: Vec::new(),
            split: split.clone(),
            svm: a.svm.clone(),
            out: dir.clone(),
        })?);
        files.extend(evaluate(&EvaluateArgs {
            input: dir.clone(),
            models: dir.join(format!("models_{kind}.json")),
            format: a.format,
            out: Some(dir.clone()),
        })?);
    }
    files.extend(report(&ReportArgs { input: dir.clone(), out: None })?);

    let mut out = Outputs::new(dir)?;
    for f in &files {
        out.record(f);
    }
    out.finish("pipeline", "pipeline", a, seeds, &inputs)
}
