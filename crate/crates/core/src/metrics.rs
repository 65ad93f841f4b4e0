//! Performance and group-fairness metrics.
//!
//! * AUC is the Mann–Whitney statistic with ties counted as one half.
//! * ES-AUC is `overall / (1 + Σ_g |overall − auc_g|)`.
//! * EOD and SPD are the max − min gap of the per-group true-positive rate and
//!   positive-prediction rate at a fixed score threshold.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapter::FairLoraState;
use crate::data::{AttributeSchema, Sample};
use crate::model::{FrozenBackbone, GatePolicy, Prediction};
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const AVG_ROW: &str = "Avg.";

/// Area under the ROC curve via mid-ranks.
///
/// The numerator `R_pos − n_pos (n_pos + 1) / 2` is a multiple of one half
/// and is formed exactly, so the result equals pairwise counting bit for bit
/// at any realistic sample size.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes (got {n_pos} positive, {n_neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps everything integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_mid * pos_in_tie;
        i = j + 1;
    }
    let twice_u = twice_rank_sum - (n_pos as u128) * (n_pos as u128 + 1);
    Ok((twice_u as f64 * 0.5) / (n_pos as f64 * n_neg as f64))
}

/// Equity-scaled AUC.
pub fn es_auc(overall: f64, group_aucs: &[f64]) -> f64 {
    let disparity: f64 = group_aucs.iter().map(|g| (overall - g).abs()).sum();
    overall / (1.0 + disparity)
}

/// A max − min gap across groups together with the groups it covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGap {
    pub value: f64,
    pub groups: Vec<usize>,
    /// Groups present in the input but lacking what the rate needs.
    pub excluded: Vec<usize>,
}

fn gap(rates: &[(usize, f64)], excluded: Vec<usize>) -> GroupGap {
    let max = rates.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    GroupGap {
        value: max - min,
        groups: rates.iter().map(|r| r.0).collect(),
        excluded,
    }
}

fn groups_present(predictions: &[Prediction]) -> Vec<usize> {
    let mut groups: Vec<usize> = predictions.iter().map(|p| p.group).collect();
    groups.sort_unstable();
    groups.dedup();
    groups
}

/// Equal opportunity difference: spread of `P(score >= t | y = 1, g)`.
/// Groups without positives are excluded and listed.
pub fn eod(predictions: &[Prediction], threshold: f64) -> Result<GroupGap> {
    let mut rates = Vec::new();
    let mut excluded = Vec::new();
    for g in groups_present(predictions) {
        let positives: Vec<&Prediction> = predictions
            .iter()
            .filter(|p| p.group == g && p.label == 1)
            .collect();
        if positives.is_empty() {
            excluded.push(g);
            continue;
        }
        let hits = positives.iter().filter(|p| p.score >= threshold).count();
        rates.push((g, hits as f64 / positives.len() as f64));
    }
    if rates.is_empty() {
        return Err(Error::UndefinedMetric(
            "EOD: no group has a positive sample".into(),
        ));
    }
    Ok(gap(&rates, excluded))
}

/// Statistical parity difference: spread of `P(score >= t | g)`.
pub fn spd(predictions: &[Prediction], threshold: f64) -> Result<GroupGap> {
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("SPD: no predictions".into()));
    }
    let rates: Vec<(usize, f64)> = groups_present(predictions)
        .into_iter()
        .map(|g| {
            let members: Vec<&Prediction> = predictions.iter().filter(|p| p.group == g).collect();
            let hits = members.iter().filter(|p| p.score >= threshold).count();
            (g, hits as f64 / members.len() as f64)
        })
        .collect();
    Ok(gap(&rates, Vec::new()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub n: usize,
    pub n_per_group: Vec<usize>,
    pub overall_auc: Option<f64>,
    pub es_auc: Option<f64>,
    pub group_auc: Vec<Option<f64>>,
    pub eod: Option<f64>,
    pub spd: Option<f64>,
}

impl ReportRow {
    /// Max − min over the defined group AUCs.
    pub fn group_auc_spread(&self) -> Option<f64> {
        let defined: Vec<f64> = self.group_auc.iter().flatten().copied().collect();
        if defined.is_empty() {
            return None;
        }
        let max = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute: String,
    pub groups: Vec<String>,
    pub threshold: f64,
    /// Client rows in client order, then the pooled `Avg.` row.
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FairnessReport {
    pub fn avg(&self) -> &ReportRow {
        self.rows.last().expect("report always has an Avg. row")
    }

    pub fn client_rows(&self) -> &[ReportRow] {
        &self.rows[..self.rows.len() - 1]
    }

    /// Mean of a metric over client rows that define it.
    pub fn client_mean(&self, metric: impl Fn(&ReportRow) -> Option<f64>) -> Option<f64> {
        let values: Vec<f64> = self.client_rows().iter().filter_map(metric).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }
}

/// Metrics for one set of predictions. Undefined values become `None` with a
/// warning instead of an error.
pub fn report_row(
    label: &str,
    predictions: &[Prediction],
    schema: &AttributeSchema,
    threshold: f64,
    warnings: &mut Vec<String>,
) -> ReportRow {
    let num_groups = schema.num_groups();
    let mut n_per_group = vec![0usize; num_groups];
    for p in predictions {
        if p.group < num_groups {
            n_per_group[p.group] += 1;
        }
    }
    let mut note = |what: String| warnings.push(format!("{label}: {what}"));

    let scores: Vec<f64> = predictions.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
    let overall = match auc(&scores, &labels) {
        Ok(v) => Some(v),
        Err(e) => {
            note(format!("overall {e}"));
            None
        }
    };
    let group_auc: Vec<Option<f64>> = (0..num_groups)
        .map(|g| {
            let (s, y): (Vec<f64>, Vec<u8>) = predictions
                .iter()
                .filter(|p| p.group == g)
                .map(|p| (p.score, p.label))
                .unzip();
            match auc(&s, &y) {
                Ok(v) => Some(v),
                Err(e) => {
                    note(format!("group {} {e}", schema.groups[g]));
                    None
                }
            }
        })
        .collect();
    let es = overall.map(|o| {
        let defined: Vec<f64> = group_auc.iter().flatten().copied().collect();
        es_auc(o, &defined)
    });
    let eod_value = match eod(predictions, threshold) {
        Ok(gap) => {
            for g in &gap.excluded {
                note(format!(
                    "EOD excludes group {} (no positives)",
                    schema.groups[*g]
                ));
            }
            Some(gap.value)
        }
        Err(e) => {
            note(e.to_string());
            None
        }
    };
    let spd_value = match spd(predictions, threshold) {
        Ok(gap) => Some(gap.value),
        Err(e) => {
            note(e.to_string());
            None
        }
    };
    ReportRow {
        label: label.to_string(),
        n: predictions.len(),
        n_per_group,
        overall_auc: overall,
        es_auc: es,
        group_auc,
        eod: eod_value,
        spd: spd_value,
    }
}

/// Client rows from each labelled prediction set, plus an `Avg.` row over
/// their pooled union.
pub fn report_from_predictions(
    schema: &AttributeSchema,
    threshold: f64,
    clients: &[(String, Vec<Prediction>)],
) -> FairnessReport {
    let mut warnings = Vec::new();
    let mut rows: Vec<ReportRow> = clients
        .iter()
        .map(|(label, preds)| report_row(label, preds, schema, threshold, &mut warnings))
        .collect();
    let pooled: Vec<Prediction> = clients
        .iter()
        .flat_map(|(_, p)| p.iter().cloned())
        .collect();
    rows.push(report_row(
        AVG_ROW,
        &pooled,
        schema,
        threshold,
        &mut warnings,
    ));
    FairnessReport {
        attribute: schema.name.clone(),
        groups: schema.groups.clone(),
        threshold,
        rows,
        warnings,
    }
}

pub fn client_label(k: usize) -> String {
    format!("client {k}")
}

/// Predictions of one adapter on each client's test split.
pub fn predict_clients(
    backbone: &FrozenBackbone,
    adapter: &FairLoraState,
    per_client_test: &[(usize, &[Sample])],
    policy: &GatePolicy,
) -> Result<Vec<(String, Vec<Prediction>)>> {
    per_client_test
        .iter()
        .map(|(k, test)| Ok((client_label(*k), backbone.predict(adapter, test, policy)?)))
        .collect()
}

/// Evaluates `adapter` on every client's test split and on their union.
pub fn build_report(
    backbone: &FrozenBackbone,
    adapter: &FairLoraState,
    per_client_test: &[(usize, &[Sample])],
    policy: &GatePolicy,
    threshold: f64,
    schema: &AttributeSchema,
) -> Result<FairnessReport> {
    if per_client_test.is_empty() || per_client_test.iter().all(|(_, t)| t.is_empty()) {
        return Err(Error::InvalidArgument("no test samples to evaluate".into()));
    }
    let predictions = predict_clients(backbone, adapter, per_client_test, policy)?;
    Ok(report_from_predictions(schema, threshold, &predictions))
}

/// Share of each group among `samples`; the fallback gate when group
/// metadata is missing at inference.
pub fn population_proportions(samples: &[Sample], num_groups: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot take proportions of no samples".into(),
        ));
    }
    let mut counts = vec![0usize; num_groups];
    for s in samples {
        if s.group >= num_groups {
            return Err(Error::InvalidArgument(format!("unknown group {}", s.group)));
        }
        counts[s.group] += 1;
    }
    Ok(counts
        .iter()
        .map(|&c| c as f64 / samples.len() as f64)
        .collect())
}
