//! The four subcommands. Each returns a value for tests and writes its
//! artifacts; `main` only maps errors to exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use fairfed_core::adapter::{SInit, Variant};
use fairfed_core::data::Dataset;
use fairfed_core::federation::ClientExecutor;
use fairfed_core::metrics::{report_from_predictions, FairnessReport, ReportRow};
use serde::Serialize;

use crate::config::{ExperimentConfig, GatePolicyKind, Mode};
use crate::error::{CliError, Result};
use crate::executor::ThreadExecutor;
use crate::io::report::{
    aggregate_reports, metric_cells, metric_columns, write_aggregate_csv, write_csv,
    write_report_csv, AggregateReport, MeanStd,
};
use crate::io::{checkpoint, dataset, predictions, write_json, write_jsonl};
use crate::runner::{evaluate_run, train_seed, RunAxes, Setup};

/// Removes the artifacts it tracks unless the run completes.
struct Artifacts {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            paths: Vec::new(),
            committed: false,
        }
    }

    /// Creates `dir` (and parents), remembering the outermost new directory.
    fn create_dir(&mut self, dir: &Path) -> Result<()> {
        let mut first_missing = None;
        for ancestor in dir.ancestors() {
            if ancestor.as_os_str().is_empty() || ancestor.exists() {
                break;
            }
            first_missing = Some(ancestor.to_path_buf());
        }
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
        if let Some(p) = first_missing {
            self.paths.push(p);
        }
        Ok(())
    }

    fn file(&mut self, path: PathBuf) -> PathBuf {
        self.paths.push(path.clone());
        path
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.paths.iter().rev() {
            if p.is_dir() {
                let _ = fs::remove_dir_all(p);
            } else {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Wall-clock details live here so every other artifact stays reproducible.
#[derive(Serialize)]
struct RunMetadata<'a> {
    command: &'a str,
    started_unix: u64,
    finished_unix: u64,
    threads: usize,
    version: &'a str,
    config: &'a ExperimentConfig,
}

fn write_metadata(
    path: &Path,
    command: &str,
    started: u64,
    threads: usize,
    cfg: &ExperimentConfig,
) -> Result<()> {
    write_json(
        path,
        &RunMetadata {
            command,
            started_unix: started,
            finished_unix: unix_seconds(),
            threads,
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupCount {
    pub group: String,
    pub n: usize,
    pub positives: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SiteSummary {
    pub site: usize,
    pub n: usize,
    pub groups: Vec<GroupCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub path: String,
    pub attribute: String,
    pub feature_dim: usize,
    pub n: usize,
    pub sites: Vec<SiteSummary>,
}

pub fn summarize(dataset: &Dataset, path: &Path) -> DatasetSummary {
    let sites = (0..dataset.num_sites())
        .map(|site| {
            let mut groups: Vec<GroupCount> = dataset
                .schema
                .groups
                .iter()
                .map(|g| GroupCount {
                    group: g.clone(),
                    n: 0,
                    positives: 0,
                })
                .collect();
            let mut n = 0;
            for s in dataset.site_samples(site) {
                n += 1;
                groups[s.group].n += 1;
                groups[s.group].positives += usize::from(s.label);
            }
            SiteSummary { site, n, groups }
        })
        .collect();
    DatasetSummary {
        path: path.display().to_string(),
        attribute: dataset.schema.name.clone(),
        feature_dim: dataset.feature_dim,
        n: dataset.samples.len(),
        sites,
    }
}

/// Writes the configured dataset as JSONL.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<DatasetSummary> {
    let data = crate::runner::load_dataset(cfg)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
    }
    dataset::save_jsonl(&data, out)?;
    Ok(summarize(&data, out))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub output_dir: PathBuf,
    pub reports: Vec<FairnessReport>,
    pub aggregate: AggregateReport,
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Trains every configured seed and writes per-seed and aggregate artifacts.
pub fn cmd_train(cfg: &ExperimentConfig, executor: &ThreadExecutor) -> Result<TrainOutcome> {
    let started = unix_seconds();
    let setup = Setup::new(cfg)?;
    let out = cfg.output_dir.clone();
    let mut artifacts = Artifacts::new();
    artifacts.create_dir(&out)?;
    let axes = RunAxes::from_config(cfg);

    let (outer, inner) = split_threads(executor.threads(), cfg.seeds.len());
    let jobs: Vec<usize> = (0..cfg.seeds.len()).collect();
    let runs = outer.map(&jobs, |i| {
        let run = train_seed(cfg, &setup, axes, cfg.seeds[i], &inner)?;
        let (report, preds) = evaluate_run(cfg, &setup, &run, cfg.metrics.gate_policy)?;
        Ok::<_, CliError>((run, report, preds))
    });

    let mut reports = Vec::with_capacity(runs.len());
    for (i, result) in runs.into_iter().enumerate() {
        let seed = cfg.seeds[i];
        let (run, report, preds) = result?;
        let dir = seed_dir(&out, seed);
        artifacts.create_dir(&dir)?;
        for (owner, adapter) in &run.adapters {
            let name = match owner {
                None => "adapter.ckpt".to_string(),
                Some(k) => format!("adapter-client{k}.ckpt"),
            };
            checkpoint::save(adapter, &artifacts.file(dir.join(name)))?;
        }
        write_jsonl(&artifacts.file(dir.join("rounds.jsonl")), &run.history)?;
        write_json(&artifacts.file(dir.join("report.json")), &report)?;
        write_report_csv(&report, &artifacts.file(dir.join("report.csv")))?;
        predictions::write_predictions(
            &artifacts.file(dir.join("predictions.csv")),
            &cfg.schema,
            &preds,
        )?;
        reports.push(report);
    }
    let aggregate = aggregate_reports(&cfg.seeds, &reports)?;
    write_json(&artifacts.file(out.join("aggregate.json")), &aggregate)?;
    write_aggregate_csv(&aggregate, &artifacts.file(out.join("aggregate.csv")))?;
    write_metadata(
        &artifacts.file(out.join("run_metadata.json")),
        "train",
        started,
        executor.threads(),
        cfg,
    )?;
    artifacts.commit();
    Ok(TrainOutcome {
        output_dir: out,
        reports,
        aggregate,
    })
}

/// Splits a thread budget between independent runs and the clients inside
/// each run.
fn split_threads(threads: usize, runs: usize) -> (ThreadExecutor, ThreadExecutor) {
    let outer = threads.min(runs.max(1));
    (
        ThreadExecutor::new(outer),
        ThreadExecutor::new((threads / outer.max(1)).max(1)),
    )
}

/// Metrics for an external prediction dump.
pub fn cmd_evaluate(cfg: &ExperimentConfig, predictions_path: &Path) -> Result<FairnessReport> {
    let sets = predictions::read_predictions(predictions_path, &cfg.schema)?;
    Ok(report_from_predictions(
        &cfg.schema,
        cfg.metrics.threshold,
        &sets,
    ))
}

/// Writes an evaluation report as JSON and CSV into `dir`.
pub fn write_evaluation(report: &FairnessReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    write_json(&dir.join("report.json"), report)?;
    write_report_csv(report, &dir.join("report.csv"))
}

/// Summary statistics of one configuration over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub variant: Variant,
    pub mode: Mode,
    pub s_init: SInit,
    pub gate_policy: GatePolicyKind,
    pub seeds: Vec<u64>,
    /// Metric cells of the pooled `Avg.` row, then `group_auc_spread` and
    /// `client_mean_auc` (mean overall AUC over client rows).
    pub metrics: BTreeMap<String, MeanStd>,
}

impl CompareRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).and_then(|m| m.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOutcome {
    pub attribute: String,
    pub groups: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<CompareRow>,
}

impl CompareOutcome {
    pub fn find(
        &self,
        variant: Variant,
        mode: Mode,
        gate_policy: GatePolicyKind,
    ) -> Option<&CompareRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.mode == mode && r.gate_policy == gate_policy)
    }
}

fn summary_cells(groups: &[String], report: &FairnessReport) -> Vec<(String, Option<f64>)> {
    let avg = report.avg();
    let mut cells = metric_cells(groups, avg);
    cells.push(("group_auc_spread".into(), avg.group_auc_spread()));
    cells.push((
        "client_mean_auc".into(),
        report.client_mean(|r: &ReportRow| r.overall_auc),
    ));
    cells
}

fn or_base<T: Copy>(list: &[T], base: T) -> Vec<T> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}

/// Runs every requested combination of variant, mode, singular-value init
/// and gate policy over all seeds. Gate policies only change inference, so
/// each trained adapter is evaluated under every requested policy.
pub fn cmd_compare(cfg: &ExperimentConfig, executor: &ThreadExecutor) -> Result<CompareOutcome> {
    let started = unix_seconds();
    let setup = Setup::new(cfg)?;
    let c = &cfg.compare;
    let variants = or_base(&c.variants, cfg.adapter.variant);
    let modes = or_base(&c.modes, Mode::Federated);
    let s_inits = or_base(&c.s_inits, cfg.adapter.s_init);
    let policies = or_base(&c.gate_policies, cfg.metrics.gate_policy);

    let mut trainings: Vec<RunAxes> = Vec::new();
    for &variant in &variants {
        for &mode in &modes {
            for &s_init in &s_inits {
                trainings.push(RunAxes {
                    variant,
                    s_init,
                    mode,
                });
            }
        }
    }
    let jobs: Vec<usize> = (0..trainings.len() * cfg.seeds.len()).collect();
    let (outer, inner) = split_threads(executor.threads(), jobs.len());
    let results = outer.map(&jobs, |j| {
        let axes = trainings[j / cfg.seeds.len()];
        let seed = cfg.seeds[j % cfg.seeds.len()];
        let run = train_seed(cfg, &setup, axes, seed, &inner)?;
        policies
            .iter()
            .map(|&p| evaluate_run(cfg, &setup, &run, p).map(|(report, _)| report))
            .collect::<Result<Vec<_>>>()
    });
    let results: Vec<Vec<FairnessReport>> = results.into_iter().collect::<Result<_>>()?;

    let groups = cfg.schema.groups.clone();
    let mut columns = metric_columns(&groups);
    columns.push("group_auc_spread".into());
    columns.push("client_mean_auc".into());
    let mut rows = Vec::new();
    for (t, axes) in trainings.iter().enumerate() {
        for (p, &gate_policy) in policies.iter().enumerate() {
            let per_seed: Vec<Vec<(String, Option<f64>)>> = (0..cfg.seeds.len())
                .map(|s| summary_cells(&groups, &results[t * cfg.seeds.len() + s][p]))
                .collect();
            let metrics = columns
                .iter()
                .enumerate()
                .map(|(i, name)| {
                    let values: Vec<Option<f64>> =
                        per_seed.iter().map(|cells| cells[i].1).collect();
                    (name.clone(), MeanStd::of(&values))
                })
                .collect();
            rows.push(CompareRow {
                variant: axes.variant,
                mode: axes.mode,
                s_init: axes.s_init,
                gate_policy,
                seeds: cfg.seeds.clone(),
                metrics,
            });
        }
    }
    let outcome = CompareOutcome {
        attribute: cfg.schema.name.clone(),
        groups,
        columns,
        rows,
    };

    let out = &cfg.output_dir;
    let mut artifacts = Artifacts::new();
    artifacts.create_dir(out)?;
    write_json(&artifacts.file(out.join("compare.json")), &outcome)?;
    let mut header: Vec<String> = ["variant", "mode", "s_init", "gate_policy", "seeds"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(outcome.columns.iter().cloned());
    let table: Vec<Vec<String>> = outcome
        .rows
        .iter()
        .map(|r| {
            let mut line = vec![
                r.variant.as_str().to_string(),
                r.mode.as_str().to_string(),
                r.s_init.as_str().to_string(),
                r.gate_policy.as_str().to_string(),
                r.seeds.len().to_string(),
            ];
            line.extend(
                outcome
                    .columns
                    .iter()
                    .map(|c| r.metrics[c].display_percent()),
            );
            line
        })
        .collect();
    write_csv(&artifacts.file(out.join("compare.csv")), &header, &table)?;
    write_metadata(
        &artifacts.file(out.join("run_metadata.json")),
        "compare",
        started,
        executor.threads(),
        cfg,
    )?;
    artifacts.commit();
    Ok(outcome)
}
