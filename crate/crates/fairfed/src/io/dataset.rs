//! JSONL datasets: a header record followed by one sample per line.
//!
//! ```text
//! {"type":"header","attribute":"race","groups":["Asian","Black","White"],"feature_dim":4}
//! {"id":"s0-00000","site":0,"group":2,"label":1,"features":[0.1,-0.3,1.2,0.0]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fairfed_core::data::{check_sample, AttributeSchema, Dataset, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(rename = "type")]
    kind: String,
    attribute: String,
    groups: Vec<String>,
    feature_dim: usize,
}

/// Groups may be written as an index or as the label string.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GroupRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    site: usize,
    group: GroupRef,
    label: u8,
    features: Vec<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    site: usize,
    group: usize,
    label: u8,
    features: &'a [f64],
}

pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_jsonl(dataset)).map_err(|e| CliError::write(path, e))
}

pub fn to_jsonl(dataset: &Dataset) -> String {
    let header = Header {
        kind: "header".into(),
        attribute: dataset.schema.name.clone(),
        groups: dataset.schema.groups.clone(),
        feature_dim: dataset.feature_dim,
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for s in &dataset.samples {
        let rec = RecordOut {
            id: &s.id,
            site: s.site,
            group: s.group,
            label: s.label,
            features: &s.features,
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| CliError::read(path, e))?;
    let name = path.display().to_string();
    parse_jsonl(BufReader::new(file), &name)
}

/// Parses a dataset; `source` prefixes error messages.
pub fn parse_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Dataset> {
    let at = |line: usize, what: String| CliError::config(format!("{source}:{line}: {what}"));
    let mut header: Option<(AttributeSchema, usize)> = None;
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| at(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((schema, feature_dim)) = &header else {
            let h: Header = serde_json::from_str(&line)
                .map_err(|e| at(lineno, format!("expected a header record: {e}")))?;
            if h.kind != "header" {
                return Err(at(
                    lineno,
                    format!("expected type \"header\", got {:?}", h.kind),
                ));
            }
            let schema = AttributeSchema {
                name: h.attribute,
                groups: h.groups,
            };
            schema.validate().map_err(|e| at(lineno, e.to_string()))?;
            header = Some((schema, h.feature_dim));
            continue;
        };
        let r: Record = serde_json::from_str(&line).map_err(|e| at(lineno, e.to_string()))?;
        let group = match r.group {
            GroupRef::Index(g) => g,
            GroupRef::Label(l) => schema
                .group_index(&l)
                .ok_or_else(|| at(lineno, format!("unknown group label {l:?}")))?,
        };
        let sample = Sample {
            id: r.id,
            site: r.site,
            group,
            label: r.label,
            features: r.features,
        };
        check_sample(&sample, schema, *feature_dim).map_err(|e| at(lineno, e.to_string()))?;
        samples.push(sample);
    }
    let (schema, feature_dim) =
        header.ok_or_else(|| CliError::config(format!("{source}: missing header record")))?;
    Dataset::new(schema, feature_dim, samples)
        .map_err(|e| CliError::config(format!("{source}: {e}")))
}
