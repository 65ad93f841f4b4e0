//! Prediction dumps: CSV with columns `id,client,group,label,score`, where
//! `group` is the group label string and `score` the positive-class
//! probability.

use std::path::Path;

use fairfed_core::data::AttributeSchema;
use fairfed_core::metrics::client_label;
use fairfed_core::model::Prediction;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: String,
    client: String,
    group: String,
    label: u8,
    score: f64,
}

/// Writes `(client id, predictions)` sets in order.
pub fn write_predictions(
    path: &Path,
    schema: &AttributeSchema,
    sets: &[(usize, Vec<Prediction>)],
) -> Result<()> {
    let fail = |e: csv::Error| CliError::runtime(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for (client, preds) in sets {
        for p in preds {
            let group = schema.groups.get(p.group).ok_or_else(|| {
                CliError::runtime(format!(
                    "prediction {} has unknown group {}",
                    p.sample_id, p.group
                ))
            })?;
            w.serialize(Row {
                id: p.sample_id.clone(),
                client: client.to_string(),
                group: group.clone(),
                label: p.label,
                score: p.score,
            })
            .map_err(fail)?;
        }
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Reads a dump into per-client prediction sets, clients in order of first
/// appearance. Numeric client ids become `client <k>` row labels.
pub fn read_predictions(
    path: &Path,
    schema: &AttributeSchema,
) -> Result<Vec<(String, Vec<Prediction>)>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    parse_rows(&mut reader, &path.display().to_string(), schema)
}

pub fn parse_predictions(
    text: &str,
    source: &str,
    schema: &AttributeSchema,
) -> Result<Vec<(String, Vec<Prediction>)>> {
    parse_rows(
        &mut csv::Reader::from_reader(text.as_bytes()),
        source,
        schema,
    )
}

fn parse_rows<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    source: &str,
    schema: &AttributeSchema,
) -> Result<Vec<(String, Vec<Prediction>)>> {
    let mut sets: Vec<(String, Vec<Prediction>)> = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        // Line 1 is the header.
        let line = i + 2;
        let at = |what: String| CliError::config(format!("{source}:{line}: {what}"));
        let row = row.map_err(|e| at(e.to_string()))?;
        let group = schema
            .group_index(&row.group)
            .ok_or_else(|| at(format!("group {:?} is not in the schema", row.group)))?;
        if row.label > 1 {
            return Err(at(format!("label {} is not 0 or 1", row.label)));
        }
        if !(0.0..=1.0).contains(&row.score) {
            return Err(at(format!("score {} is not a probability", row.score)));
        }
        let label = match row.client.parse::<usize>() {
            Ok(k) => client_label(k),
            Err(_) => row.client.clone(),
        };
        let pred = Prediction {
            sample_id: row.id,
            group,
            label: row.label,
            score: row.score,
            logits: Vec::new(),
        };
        match sets.iter_mut().find(|(l, _)| *l == label) {
            Some((_, preds)) => preds.push(pred),
            None => sets.push((label, vec![pred])),
        }
    }
    if sets.is_empty() {
        return Err(CliError::config(format!("{source}: no prediction rows")));
    }
    Ok(sets)
}
