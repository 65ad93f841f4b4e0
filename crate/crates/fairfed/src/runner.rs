//! Turns a config into datasets, backbones and trained adapters.

use fairfed_core::adapter::{FairLoraState, SInit, Variant};
use fairfed_core::data::{generate_synthetic, split, Dataset, Sample};
use fairfed_core::federation::{
    clients_from_splits, run_federation, run_local_only, ClientExecutor, ClientState, EvalSettings,
    FederationConfig, RoundRecord,
};
use fairfed_core::metrics::{
    client_label, population_proportions, report_from_predictions, FairnessReport,
};
use fairfed_core::model::{build_backbone, FrozenBackbone, GatePolicy, Prediction};

use crate::config::{DataSource, ExperimentConfig, GatePolicyKind, Mode};
use crate::error::{CliError, Result};
use crate::io::dataset::load_jsonl;

/// Reads or generates the dataset and checks it against the config.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dataset = match &cfg.data {
        DataSource::Synthetic(spec) => generate_synthetic(spec, &cfg.schema)
            .map_err(|e| CliError::config(format!("data.synthetic: {e}")))?,
        DataSource::Path(path) => {
            let d = load_jsonl(path)?;
            if d.schema != cfg.schema {
                return Err(CliError::config(format!(
                    "schema: config declares {:?} {:?} but {} has {:?} {:?}",
                    cfg.schema.name,
                    cfg.schema.groups,
                    path.display(),
                    d.schema.name,
                    d.schema.groups
                )));
            }
            d
        }
    };
    cfg.check_feature_dim(dataset.feature_dim)?;
    Ok(dataset)
}

/// Everything shared by the runs of one config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub dataset: Dataset,
    pub backbone: FrozenBackbone,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dataset = load_dataset(cfg)?;
        if dataset.samples.is_empty() {
            return Err(CliError::config("data: the dataset has no samples"));
        }
        let b = &cfg.backbone;
        let backbone = build_backbone(b.m, dataset.feature_dim, b.tau, b.seed)
            .map_err(|e| CliError::config(format!("backbone: {e}")))?;
        Ok(Self { dataset, backbone })
    }

    /// Per-site train/val/test splits drawn with a run's master seed.
    pub fn clients(&self, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ClientState>> {
        let splits = split(&self.dataset, cfg.split, seed)
            .map_err(|e| CliError::config(format!("split: {e}")))?;
        Ok(clients_from_splits(splits))
    }
}

/// The knobs `compare` varies; `train` uses the config's own values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RunAxes {
    pub variant: Variant,
    pub s_init: SInit,
    pub mode: Mode,
}

impl RunAxes {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            variant: cfg.adapter.variant,
            s_init: cfg.adapter.s_init,
            mode: Mode::Federated,
        }
    }
}

/// Result of training one seed.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub mode: Mode,
    pub clients: Vec<ClientState>,
    /// Round log; local-only runs list each client's rounds in client order.
    pub history: Vec<RoundRecord>,
    /// The EMA global adapter, or one adapter per client for local-only runs.
    pub adapters: Vec<(Option<usize>, FairLoraState)>,
}

/// Gate used at inference. The population mixture uses group shares over
/// the pooled training splits.
pub fn resolve_policy(
    kind: GatePolicyKind,
    clients: &[ClientState],
    num_groups: usize,
) -> Result<GatePolicy> {
    Ok(match kind {
        GatePolicyKind::OracleGroup => GatePolicy::OracleGroup,
        GatePolicyKind::PopulationMixture => {
            let train: Vec<Sample> = clients
                .iter()
                .flat_map(|c| c.train.iter().cloned())
                .collect();
            GatePolicy::PopulationMixture(population_proportions(&train, num_groups)?)
        }
    })
}

pub fn train_seed<E: ClientExecutor>(
    cfg: &ExperimentConfig,
    setup: &Setup,
    axes: RunAxes,
    seed: u64,
    executor: &E,
) -> Result<TrainedRun> {
    let clients = setup.clients(cfg, seed)?;
    let mut adapter_cfg = cfg.adapter_config(setup.dataset.feature_dim);
    adapter_cfg.variant = axes.variant;
    adapter_cfg.s_init = axes.s_init;
    let fed_cfg = FederationConfig {
        seed,
        ..cfg.federation.clone()
    };
    let eval = EvalSettings {
        schema: cfg.schema.clone(),
        policy: resolve_policy(cfg.metrics.gate_policy, &clients, cfg.schema.num_groups())?,
        threshold: cfg.metrics.threshold,
    };
    let (history, adapters) = match axes.mode {
        Mode::Federated => {
            let out = run_federation(
                &fed_cfg,
                &clients,
                &setup.backbone,
                &adapter_cfg,
                &eval,
                executor,
            )?;
            (out.global.history, vec![(None, out.global.ema)])
        }
        Mode::LocalOnly => {
            let outs = run_local_only(
                &fed_cfg,
                &clients,
                &setup.backbone,
                &adapter_cfg,
                &eval,
                executor,
            )?;
            let mut history = Vec::new();
            let mut adapters = Vec::new();
            for o in outs {
                history.extend(o.history);
                adapters.push((Some(o.client), o.state));
            }
            (history, adapters)
        }
    };
    Ok(TrainedRun {
        seed,
        mode: axes.mode,
        clients,
        history,
        adapters,
    })
}

/// Test predictions keyed by client id.
pub type ClientPredictions = Vec<(usize, Vec<Prediction>)>;

/// Per-client test predictions and the report built from them. Federated
/// runs evaluate the global adapter on every client; local-only runs
/// evaluate each client's own adapter. The `Avg.` row pools all of them.
pub fn evaluate_run(
    cfg: &ExperimentConfig,
    setup: &Setup,
    run: &TrainedRun,
    policy: GatePolicyKind,
) -> Result<(FairnessReport, ClientPredictions)> {
    let gate = resolve_policy(policy, &run.clients, cfg.schema.num_groups())?;
    let mut sets = Vec::with_capacity(run.clients.len());
    for client in &run.clients {
        let adapter = run
            .adapters
            .iter()
            .find(|(owner, _)| owner.is_none() || *owner == Some(client.id))
            .map(|(_, a)| a)
            .ok_or_else(|| CliError::runtime(format!("no adapter for client {}", client.id)))?;
        let preds = setup.backbone.predict(adapter, &client.test, &gate)?;
        sets.push((client.id, preds));
    }
    let labelled: Vec<(String, Vec<Prediction>)> = sets
        .iter()
        .map(|(k, p)| (client_label(*k), p.clone()))
        .collect();
    let report = report_from_predictions(&cfg.schema, cfg.metrics.threshold, &labelled);
    Ok((report, sets))
}
