use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pstate::featurizer::MatrixMeta;
use pstate::importance::AnalysisKind;
use pstate::synthgen::Expectation;
use pstate::{DecisionId, Evaluation, HistogramReport, RankedList};
use serde::{Deserialize, Serialize};

use crate::manifest::Inputs;

#[derive(Debug, Serialize)]
pub struct Report {
    pub dataset: DatasetSummary,
    /// Histogram file stem → categories by descending count.
    pub histograms: BTreeMap<String, Vec<CategoryCount>>,
    /// Evaluation file stem → `topK` → test-AUC summary.
    pub evaluations: BTreeMap<String, BTreeMap<String, AucSummary>>,
    pub ground_truth: Option<Recovery>,
}

#[derive(Debug, Serialize)]
pub struct DatasetSummary {
    pub patients: usize,
    pub instances: usize,
    pub features: usize,
}

#[derive(Debug, Serialize)]
pub struct CategoryCount {
    pub category: String,
    pub count: usize,
}

#[derive(Debug, Serialize)]
pub struct AucSummary {
    pub decisions: usize,
    pub skipped: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Recovery {
    pub decisions: usize,
    /// Decisions whose ranking file was present.
    pub ranked: usize,
    pub feature_hits: usize,
    pub category_hits: usize,
    pub rows: Vec<RecoveryRow>,
}

#[derive(Debug, Serialize)]
pub struct RecoveryRow {
    pub decision: DecisionId,
    pub ranking: String,
    pub expected_feature: String,
    pub expected_category: String,
    pub best_feature: Option<String>,
    pub feature_hit: bool,
    pub category_hit: bool,
}

fn stems(dir: &Path, prefix: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading `{}`", dir.display()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if !name.starts_with(prefix) {
            continue;
        }
        if let Some((stem, ext)) = name.rsplit_once('.') {
            if ext == "tsv" || ext == "json" {
                out.push((stem.to_string(), ext.to_string()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn tsv_rows(text: &str) -> Vec<Vec<&str>> {
    text.lines().skip(1).filter(|l| !l.is_empty()).map(|l| l.split('\t').collect()).collect()
}

fn histogram(text: &str, ext: &str) -> Result<Vec<CategoryCount>> {
    if ext == "json" {
        let r: HistogramReport = serde_json::from_str(text)?;
        return Ok(r.ordered().into_iter().map(|(c, n)| CategoryCount { category: c.to_string(), count: n }).collect());
    }
    tsv_rows(text)
        .into_iter()
        .map(|r| match r.as_slice() {
            [cat, _, count] => Ok(CategoryCount { category: cat.to_string(), count: count.parse()? }),
            _ => bail!("histogram row has {} columns", r.len()),
        })
        .collect()
}

fn summarize(values: Vec<Option<f64>>) -> AucSummary {
    let decisions = values.len();
    let mut v: Vec<f64> = values.into_iter().flatten().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
    };
    AucSummary {
        decisions,
        skipped: decisions - n,
        mean: (n > 0).then(|| v.iter().sum::<f64>() / n as f64),
        median,
        min: v.first().copied(),
        max: v.last().copied(),
    }
}

fn evaluation(text: &str, ext: &str) -> Result<BTreeMap<String, AucSummary>> {
    let mut cols: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    if ext == "json" {
        let evals: Vec<Evaluation> = serde_json::from_str(text)?;
        for e in evals {
            cols.entry(format!("top{}", e.k)).or_default().push(e.test_auc);
        }
    } else {
        let header: Vec<&str> = text.lines().next().unwrap_or("").split('\t').collect();
        for row in tsv_rows(text) {
            for (name, cell) in header.iter().zip(&row).skip(1) {
                let v = if *cell == "NA" { None } else { Some(cell.parse::<f64>()?) };
                cols.entry(name.to_string()).or_default().push(v);
            }
        }
    }
    Ok(cols.into_iter().map(|(k, v)| (k, summarize(v))).collect())
}

/// Decision → rank-1 feature.
fn best_features(text: &str, ext: &str) -> Result<BTreeMap<String, String>> {
    if ext == "json" {
        #[derive(Deserialize)]
        struct Lists {
            lists: Vec<RankedList>,
        }
        let l: Lists = serde_json::from_str(text)?;
        return Ok(l
            .lists
            .into_iter()
            .filter_map(|l| l.scores.first().map(|s| (l.decision.to_string(), s.feature_id.clone())))
            .collect());
    }
    Ok(tsv_rows(text)
        .into_iter()
        .filter(|r| r.len() >= 6 && r[4] == "1")
        .map(|r| (r[0].to_string(), r[5].to_string()))
        .collect())
}

fn expected_category(e: &Expectation) -> String {
    match e.kind {
        AnalysisKind::LabOrder => e.temporal_category.clone(),
        _ => e.clinical_category.code().to_string(),
    }
}

pub fn build(dir: &Path, inputs: &mut Inputs) -> Result<Report> {
    let meta: MatrixMeta = serde_json::from_str(&inputs.read(&dir.join("matrix.meta.json"))?)?;
    let instances = inputs.read(&dir.join("instances.tsv"))?;
    let instances = pstate::segmentation::parse_instances(&instances)?;
    let patients: std::collections::BTreeSet<&str> = instances.iter().map(|i| i.patient_id.as_str()).collect();
    let dataset = DatasetSummary { patients: patients.len(), instances: instances.len(), features: meta.descriptors.len() };

    let mut histograms = BTreeMap::new();
    for (stem, ext) in stems(dir, "histogram_")? {
        let text = inputs.read(&dir.join(format!("{stem}.{ext}")))?;
        histograms.insert(stem.clone(), histogram(&text, &ext).with_context(|| format!("parsing {stem}.{ext}"))?);
    }
    let mut evaluations = BTreeMap::new();
    for (stem, ext) in stems(dir, "evaluation_")? {
        let text = inputs.read(&dir.join(format!("{stem}.{ext}")))?;
        evaluations.insert(stem.clone(), evaluation(&text, &ext).with_context(|| format!("parsing {stem}.{ext}"))?);
    }

    let gt_path = dir.join("ground_truth.json");
    let ground_truth = if gt_path.is_file() {
        let truth: BTreeMap<DecisionId, Expectation> = serde_json::from_str(&inputs.read(&gt_path)?)?;
        let descriptors: BTreeMap<&str, _> = meta.descriptors.iter().map(|d| (d.feature_id.as_str(), d)).collect();
        let rankings: BTreeMap<String, (String, String)> =
            stems(dir, "rank_")?.into_iter().map(|(stem, ext)| (stem.clone(), (stem, ext))).collect();
        let mut cache: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut rows = Vec::new();
        for (decision, e) in &truth {
            let stem = format!("rank_{}_{}", e.kind, e.scope);
            if !cache.contains_key(&stem) {
                if let Some((s, ext)) = rankings.get(&stem) {
                    let text = inputs.read(&dir.join(format!("{s}.{ext}")))?;
                    cache.insert(stem.clone(), best_features(&text, ext)?);
                }
            }
            let best = cache.get(&stem).and_then(|m| m.get(&decision.to_string())).cloned();
            let want_cat = expected_category(e);
            let got_cat = best.as_deref().and_then(|f| descriptors.get(f)).map(|d| match e.kind {
                AnalysisKind::LabOrder => d.temporal_category.clone(),
                _ => d.clinical_category.code().to_string(),
            });
            rows.push(RecoveryRow {
                decision: decision.clone(),
                ranking: stem,
                expected_feature: e.feature_id(),
                feature_hit: best.as_deref() == Some(e.feature_id().as_str()),
                category_hit: got_cat.as_deref() == Some(want_cat.as_str()),
                expected_category: want_cat,
                best_feature: best,
            });
        }
        Some(Recovery {
            decisions: rows.len(),
            ranked: rows.iter().filter(|r| r.best_feature.is_some()).count(),
            feature_hits: rows.iter().filter(|r| r.feature_hit).count(),
            category_hits: rows.iter().filter(|r| r.category_hit).count(),
            rows,
        })
    } else {
        None
    };

    Ok(Report { dataset, histograms, evaluations, ground_truth })
}
