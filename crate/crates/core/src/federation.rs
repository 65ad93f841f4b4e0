//! Federated training: client sampling, local adapter SGD, weighted
//! aggregation of `(U, V, {S_g})` and EMA smoothing of the global adapter.
//!
//! Each round samples clients, starts every sampled client from the EMA
//! global adapter, runs `local_epochs` of mini-batch SGD, averages the
//! returned tensors with weights `α_k` renormalized over the sampled clients,
//! and blends the average into the EMA shadow. Every random draw comes from a
//! stream derived from `(master seed, purpose, client, round)`, so results do
//! not depend on the order in which clients run.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapter::{init_adapter, AdapterConfig, AdapterParams, FairLoraState};
use crate::data::{AttributeSchema, Sample, SiteSplit};
use crate::metrics::{self, FairnessReport};
use crate::model::{FrozenBackbone, GatePolicy};
use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

const STREAM_INIT: u64 = 1;
const STREAM_SAMPLING: u64 = 2;
const STREAM_LOCAL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    #[default]
    DataSize,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_factor: f64,
    /// The decay kicks in at round `ceil(decay_at_fraction * rounds)`.
    pub decay_at_fraction: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 0.001,
            decay_factor: 0.1,
            decay_at_fraction: 0.8,
        }
    }
}

impl LrSchedule {
    /// Learning rate for 1-based `round` out of `rounds`.
    pub fn lr_at(&self, round: usize, rounds: usize) -> f64 {
        let decay_round = libm::ceil(self.decay_at_fraction * rounds as f64) as usize;
        if round >= decay_round.max(1) {
            self.initial * self.decay_factor
        } else {
            self.initial
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub rounds: usize,
    pub client_fraction: f64,
    pub ema_decay: f64,
    pub alpha_mode: AlphaMode,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    /// Master seed of a run; supplied by the caller rather than a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            client_fraction: 2.0 / 3.0,
            ema_decay: 0.9,
            alpha_mode: AlphaMode::DataSize,
            local_epochs: 1,
            batch_size: 32,
            lr: LrSchedule::default(),
            seed: 0,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(String::from(what)));
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return bad("federation.client_fraction must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("federation.ema_decay must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("federation.batch_size must be positive");
        }
        if !(self.lr.initial.is_finite() && self.lr.initial > 0.0) {
            return bad("federation.lr.initial must be positive");
        }
        if !(self.lr.decay_factor.is_finite() && self.lr.decay_factor > 0.0) {
            return bad("federation.lr.decay_factor must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr.decay_at_fraction) {
            return bad("federation.lr.decay_at_fraction must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Share of the total training data held by this client.
    pub alpha: f64,
}

/// One client per site split, with `α_k = |train_k| / Σ_j |train_j|`.
pub fn clients_from_splits(splits: Vec<SiteSplit>) -> Vec<ClientState> {
    let total: usize = splits.iter().map(|s| s.train.len()).sum();
    splits
        .into_iter()
        .map(|s| ClientState {
            id: s.site,
            alpha: if total == 0 {
                0.0
            } else {
                s.train.len() as f64 / total as f64
            },
            train: s.train,
            val: s.val,
            test: s.test,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub params: AdapterParams,
    pub n_samples: usize,
    /// Sample-weighted mean loss of each local epoch, in order.
    pub epoch_losses: Vec<f64>,
}

impl ClientUpdate {
    pub fn mean_loss(&self) -> Option<f64> {
        if self.epoch_losses.is_empty() {
            None
        } else {
            Some(self.epoch_losses.iter().sum::<f64>() / self.epoch_losses.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected_clients: Vec<usize>,
    pub lr: f64,
    pub mean_local_loss: Option<f64>,
    /// AUC of the EMA adapter on the pooled validation splits.
    pub eval: Option<RoundEval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEval {
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub round: usize,
    /// Plain weighted average from the latest round (`Ū, V̄, {S̄_g}`).
    pub aggregate: FairLoraState,
    /// EMA shadow: what clients start from and what gets evaluated.
    pub ema: FairLoraState,
    pub history: Vec<RoundRecord>,
}

impl GlobalState {
    pub fn new(initial: FairLoraState) -> Self {
        Self {
            round: 0,
            aggregate: initial.clone(),
            ema: initial,
            history: Vec::new(),
        }
    }
}

/// Evaluation settings shared by federated and local-only runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub schema: AttributeSchema,
    pub policy: GatePolicy,
    pub threshold: f64,
}

/// Runs independent jobs, possibly concurrently. Implementations must return
/// outputs in job order.
pub trait ClientExecutor {
    fn map<T, F>(&self, jobs: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ClientExecutor for Sequential {
    fn map<T, F>(&self, jobs: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        jobs.iter().map(|&j| f(j)).collect()
    }
}

/// Uniform subset of `max(1, round(fraction · K))` client ids, ascending.
pub fn sample_clients(rng: &mut SeededRng, num_clients: usize, fraction: f64) -> Vec<usize> {
    let size = (libm::round(fraction * num_clients as f64) as usize)
        .max(1)
        .min(num_clients);
    let mut ids: Vec<usize> = (0..num_clients).collect();
    // Partial Fisher–Yates: the first `size` slots end up a uniform subset.
    for i in 0..size {
        let j = i + rng.below(num_clients - i);
        ids.swap(i, j);
    }
    let mut chosen = ids[..size].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Local training of one client starting from `start`.
#[allow(clippy::too_many_arguments)]
pub fn local_update(
    client: &ClientState,
    start: &FairLoraState,
    backbone: &FrozenBackbone,
    cfg: &FederationConfig,
    lr: f64,
    round: usize,
) -> Result<ClientUpdate> {
    if client.train.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "client {} has an empty training split",
            client.id
        )));
    }
    let mut state = start.clone();
    let mut rng = SeededRng::new(derive_seed(
        cfg.seed,
        &[STREAM_LOCAL, client.id as u64, round as u64],
    ));
    let mut order: Vec<usize> = (0..client.train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.local_epochs);
    for _ in 0..cfg.local_epochs {
        rng.shuffle(&mut order);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &client.train[i]).collect();
            let (loss, grads) = backbone.loss_and_grads(&state, &batch)?;
            state.sgd_step(&grads, lr)?;
            weighted += loss * chunk.len() as f64;
        }
        epoch_losses.push(weighted / client.train.len() as f64);
    }
    Ok(ClientUpdate {
        client: client.id,
        params: state.params,
        n_samples: client.train.len(),
        epoch_losses,
    })
}

/// Aggregation weights for the given updates.
pub fn alpha_weights(updates: &[ClientUpdate], mode: AlphaMode) -> Result<Vec<f64>> {
    if updates.is_empty() {
        return Err(Error::InvalidArgument(
            "no client updates to aggregate".into(),
        ));
    }
    Ok(match mode {
        AlphaMode::Uniform => alloc::vec![1.0 / updates.len() as f64; updates.len()],
        AlphaMode::DataSize => {
            let total: usize = updates.iter().map(|u| u.n_samples).sum();
            if total == 0 {
                return Err(Error::InvalidArgument(
                    "client updates carry no samples".into(),
                ));
            }
            updates
                .iter()
                .map(|u| u.n_samples as f64 / total as f64)
                .collect()
        }
    })
}

/// `Σ_k α_k θ_k` for every tensor.
///
/// Evaluated as `θ_0 + Σ_k α_k (θ_k − θ_0)`, which is the same weighted sum
/// when `Σα = 1` but returns `θ_0` bit-exactly when all clients agree. The
/// result is clipped to the clients' elementwise range, which only removes
/// rounding overshoot.
pub fn aggregate(updates: &[ClientUpdate], mode: AlphaMode) -> Result<AdapterParams> {
    let alpha = alpha_weights(updates, mode)?;
    weighted_average(
        &updates.iter().map(|u| &u.params).collect::<Vec<_>>(),
        &alpha,
    )
}

pub fn weighted_average(params: &[&AdapterParams], alpha: &[f64]) -> Result<AdapterParams> {
    let first = *params
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to average".into()))?;
    if params.len() != alpha.len() {
        return Err(Error::InvalidArgument(
            "one weight per update is required".into(),
        ));
    }
    if let Some(k) = params.iter().position(|p| !p.same_layout(first)) {
        return Err(Error::InvalidArgument(format!(
            "update {k} has a different tensor layout"
        )));
    }
    let mut out = first.clone();
    let views: Vec<Vec<(crate::adapter::TensorName, &[f64])>> =
        params.iter().map(|p| p.tensors()).collect();
    for (t, (_, dst)) in out.tensors_mut().into_iter().enumerate() {
        for (i, d) in dst.iter_mut().enumerate() {
            let base = views[0][t].1[i];
            let mut acc = base;
            let (mut lo, mut hi) = (base, base);
            for (k, view) in views.iter().enumerate().skip(1) {
                let x = view[t].1[i];
                acc += alpha[k] * (x - base);
                lo = lo.min(x);
                hi = hi.max(x);
            }
            *d = acc.clamp(lo, hi);
        }
    }
    Ok(out)
}

/// `ema ← β · ema + (1 − β) · fresh`, in the form `ema + (1 − β)(fresh − ema)`
/// so entries that already agree stay bit-identical. `β = 0` copies `fresh`.
pub fn ema_update(ema: &mut AdapterParams, fresh: &AdapterParams, beta: f64) -> Result<()> {
    if !ema.same_layout(fresh) {
        return Err(Error::InvalidArgument(
            "EMA shadow and aggregate differ in layout".into(),
        ));
    }
    if beta == 0.0 {
        *ema = fresh.clone();
        return Ok(());
    }
    let w = 1.0 - beta;
    for ((_, e), (_, f)) in ema.tensors_mut().into_iter().zip(fresh.tensors()) {
        for (a, b) in e.iter_mut().zip(f) {
            *a += w * (b - *a);
        }
    }
    Ok(())
}

fn check_clients(clients: &[ClientState]) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one client is required".into(),
        ));
    }
    if let Some(c) = clients.iter().find(|c| c.train.is_empty()) {
        return Err(Error::InvalidArgument(format!(
            "client {} has an empty training split",
            c.id
        )));
    }
    Ok(())
}

fn test_sets(clients: &[ClientState]) -> Vec<(usize, &[Sample])> {
    clients.iter().map(|c| (c.id, c.test.as_slice())).collect()
}

fn pooled_val_auc(
    backbone: &FrozenBackbone,
    adapter: &FairLoraState,
    clients: &[&ClientState],
    policy: &GatePolicy,
) -> Result<Option<RoundEval>> {
    let val: Vec<Sample> = clients.iter().flat_map(|c| c.val.iter().cloned()).collect();
    if val.is_empty() {
        return Ok(None);
    }
    let preds = backbone.predict(adapter, &val, policy)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    Ok(Some(RoundEval {
        val_auc: metrics::auc(&scores, &labels).ok(),
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationOutcome {
    pub global: GlobalState,
    pub report: FairnessReport,
}

/// The full round loop. The adapter is initialized from a stream derived from
/// `cfg.seed`; the report evaluates the EMA adapter on each client's test split.
pub fn run_federation<E: ClientExecutor>(
    cfg: &FederationConfig,
    clients: &[ClientState],
    backbone: &FrozenBackbone,
    adapter_cfg: &AdapterConfig,
    eval: &EvalSettings,
    executor: &E,
) -> Result<FederationOutcome> {
    cfg.validate()?;
    check_clients(clients)?;
    let initial = init_adapter(adapter_cfg, derive_seed(cfg.seed, &[STREAM_INIT]))?;
    let mut global = GlobalState::new(initial);
    let all: Vec<&ClientState> = clients.iter().collect();

    for round in 1..=cfg.rounds {
        let mut rng = SeededRng::new(derive_seed(cfg.seed, &[STREAM_SAMPLING, round as u64]));
        let selected = sample_clients(&mut rng, clients.len(), cfg.client_fraction);
        let lr = cfg.lr.lr_at(round, cfg.rounds);
        let start = &global.ema;
        let updates: Vec<ClientUpdate> = executor
            .map(&selected, |k| {
                local_update(&clients[k], start, backbone, cfg, lr, round)
            })
            .into_iter()
            .collect::<Result<_>>()?;
        let fresh = aggregate(&updates, cfg.alpha_mode)?;
        ema_update(&mut global.ema.params, &fresh, cfg.ema_decay)?;
        global.aggregate.params = fresh;
        global.round = round;

        let losses: Vec<f64> = updates.iter().filter_map(ClientUpdate::mean_loss).collect();
        let mean_local_loss = if losses.is_empty() {
            None
        } else {
            Some(losses.iter().sum::<f64>() / losses.len() as f64)
        };
        if let Some(loss) = mean_local_loss {
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "round {round}: mean local loss is {loss}"
                )));
            }
        }
        let eval_snapshot = pooled_val_auc(backbone, &global.ema, &all, &eval.policy)?;
        global.history.push(RoundRecord {
            round,
            selected_clients: selected.iter().map(|&k| clients[k].id).collect(),
            lr,
            mean_local_loss,
            eval: eval_snapshot,
        });
    }

    let report = metrics::build_report(
        backbone,
        &global.ema,
        &test_sets(clients),
        &eval.policy,
        eval.threshold,
        &eval.schema,
    )?;
    Ok(FederationOutcome { global, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub client: usize,
    pub state: FairLoraState,
    pub history: Vec<RoundRecord>,
    /// One client row plus an identical `Avg.` row, on the client's own test split.
    pub report: FairnessReport,
}

/// The no-communication ablation: every client trains its own adapter for
/// `rounds × local_epochs` epochs with the same schedule and random streams
/// it would see in a federation, and is evaluated on its own test split.
pub fn run_local_only<E: ClientExecutor>(
    cfg: &FederationConfig,
    clients: &[ClientState],
    backbone: &FrozenBackbone,
    adapter_cfg: &AdapterConfig,
    eval: &EvalSettings,
    executor: &E,
) -> Result<Vec<LocalOutcome>> {
    cfg.validate()?;
    check_clients(clients)?;
    let initial = init_adapter(adapter_cfg, derive_seed(cfg.seed, &[STREAM_INIT]))?;
    let jobs: Vec<usize> = (0..clients.len()).collect();
    executor
        .map(&jobs, |k| {
            let client = &clients[k];
            let mut state = initial.clone();
            let mut history = Vec::with_capacity(cfg.rounds);
            for round in 1..=cfg.rounds {
                let lr = cfg.lr.lr_at(round, cfg.rounds);
                let update = local_update(client, &state, backbone, cfg, lr, round)?;
                let mean_local_loss = update.mean_loss();
                state.params = update.params;
                history.push(RoundRecord {
                    round,
                    selected_clients: alloc::vec![client.id],
                    lr,
                    mean_local_loss,
                    eval: pooled_val_auc(backbone, &state, &[client], &eval.policy)?,
                });
            }
            let report = metrics::build_report(
                backbone,
                &state,
                &[(client.id, client.test.as_slice())],
                &eval.policy,
                eval.threshold,
                &eval.schema,
            )?;
            Ok(LocalOutcome {
                client: client.id,
                state,
                history,
                report,
            })
        })
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{SInit, Variant};
    use crate::linalg::Matrix;
    use alloc::vec;

    fn params(u: f64, v: f64, s: &[f64]) -> AdapterParams {
        AdapterParams::LowRank {
            u: Matrix::from_vec(1, 1, vec![u]).unwrap(),
            v: Matrix::from_vec(1, 1, vec![v]).unwrap(),
            s: s.iter().map(|x| vec![*x]).collect(),
        }
    }

    fn update(client: usize, p: AdapterParams, n: usize) -> ClientUpdate {
        ClientUpdate {
            client,
            params: p,
            n_samples: n,
            epoch_losses: vec![],
        }
    }

    #[test]
    fn sampling_two_of_three() {
        let mut rng = SeededRng::new(1);
        for _ in 0..100 {
            let s = sample_clients(&mut rng, 3, 2.0 / 3.0);
            assert_eq!(s.len(), 2);
            assert_ne!(s[0], s[1]);
        }
        assert_eq!(sample_clients(&mut rng, 5, 1.0), vec![0, 1, 2, 3, 4]);
        assert_eq!(sample_clients(&mut rng, 5, 0.01).len(), 1);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut counts = [0usize; 3];
        for round in 0..10_000u64 {
            let mut rng = SeededRng::new(derive_seed(99, &[STREAM_SAMPLING, round]));
            for k in sample_clients(&mut rng, 3, 2.0 / 3.0) {
                counts[k] += 1;
            }
        }
        for c in counts {
            assert!((6467..=6867).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn data_size_weights() {
        let ups = [
            update(0, params(0.0, 0.0, &[]), 300),
            update(1, params(0.0, 0.0, &[]), 100),
        ];
        assert_eq!(
            alpha_weights(&ups, AlphaMode::DataSize).unwrap(),
            vec![0.75, 0.25]
        );
        assert_eq!(
            alpha_weights(&ups, AlphaMode::Uniform).unwrap(),
            vec![0.5, 0.5]
        );
        assert!(alpha_weights(&[], AlphaMode::Uniform).is_err());
    }

    #[test]
    fn group_singular_values_average() {
        let ups = [
            update(0, params(1.0, 1.0, &[0.2]), 10),
            update(1, params(1.0, 1.0, &[0.4]), 10),
        ];
        let agg = aggregate(&ups, AlphaMode::Uniform).unwrap();
        let AdapterParams::LowRank { s, .. } = agg else {
            panic!()
        };
        assert!((s[0][0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn identical_updates_are_a_fixed_point() {
        let p = params(0.123, -7.5, &[0.31, 0.77]);
        let ups: Vec<ClientUpdate> = (0..3).map(|k| update(k, p.clone(), 10 + 7 * k)).collect();
        assert_eq!(aggregate(&ups, AlphaMode::DataSize).unwrap(), p);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let ups = [
            update(0, params(1.0, 1.0, &[0.2]), 1),
            update(1, params(1.0, 1.0, &[0.2, 0.1]), 1),
        ];
        assert!(aggregate(&ups, AlphaMode::Uniform).is_err());
    }

    #[test]
    fn ema_cases() {
        let mut ema = params(1.0, 2.0, &[0.5]);
        ema_update(&mut ema, &params(0.0, 0.0, &[0.0]), 0.9).unwrap();
        let AdapterParams::LowRank { u, .. } = &ema else {
            panic!()
        };
        assert!((u.get(0, 0) - 0.9).abs() < 1e-15);

        let fresh = params(3.0, -1.0, &[0.25]);
        let mut ema = params(1.0, 2.0, &[0.5]);
        ema_update(&mut ema, &fresh, 0.0).unwrap();
        assert_eq!(ema, fresh);

        let same = params(0.3, 1e-7, &[0.1]);
        let mut ema = same.clone();
        ema_update(&mut ema, &same, 0.37).unwrap();
        assert_eq!(ema, same);
    }

    #[test]
    fn lr_schedule_decays_at_eighty_percent() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(39, 50), 0.001);
        assert!((s.lr_at(40, 50) - 0.0001).abs() < 1e-18);
        assert!((s.lr_at(50, 50) - 0.0001).abs() < 1e-18);
        assert_eq!(s.lr_at(7, 10), 0.001);
        assert!((s.lr_at(8, 10) - 0.0001).abs() < 1e-18);
    }

    fn toy_client(id: usize, group: usize, n: usize, seed: u64) -> ClientState {
        let mut rng = SeededRng::new(seed);
        let train = (0..n)
            .map(|i| {
                let y = (i % 2) as u8;
                let sign = if y == 1 { 1.0 } else { -1.0 };
                let mut x = rng.normal_vec(4);
                x.iter_mut().for_each(|v| *v *= 0.3);
                x[0] += 2.0 * sign;
                Sample {
                    id: format!("c{id}-{i}"),
                    site: id,
                    group,
                    label: y,
                    features: x,
                }
            })
            .collect();
        ClientState {
            id,
            train,
            val: vec![],
            test: vec![],
            alpha: 1.0,
        }
    }

    fn adapter_cfg(groups: usize) -> AdapterConfig {
        AdapterConfig {
            variant: Variant::FairLora,
            rank: 2,
            lora_alpha: 2.0,
            out_dim: 5,
            in_dim: 4,
            num_groups: groups,
            s_init: SInit::HalfHalfCyclic,
        }
    }

    #[test]
    fn zero_epochs_return_the_start() {
        let backbone = crate::model::build_backbone(5, 4, 10.0, 1).unwrap();
        let start = init_adapter(&adapter_cfg(3), 2).unwrap();
        let cfg = FederationConfig {
            local_epochs: 0,
            ..Default::default()
        };
        let up = local_update(&toy_client(0, 1, 20, 1), &start, &backbone, &cfg, 0.1, 1).unwrap();
        assert_eq!(up.params, start.params);
        assert_eq!(up.mean_loss(), None);
    }

    #[test]
    fn single_group_client_keeps_other_groups() {
        let backbone = crate::model::build_backbone(5, 4, 10.0, 1).unwrap();
        let start = init_adapter(&adapter_cfg(3), 2).unwrap();
        let cfg = FederationConfig {
            local_epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        let up = local_update(&toy_client(0, 1, 40, 3), &start, &backbone, &cfg, 0.5, 1).unwrap();
        let (AdapterParams::LowRank { s, .. }, AdapterParams::LowRank { s: s0, .. }) =
            (&up.params, &start.params)
        else {
            panic!()
        };
        assert_eq!(s[0], s0[0]);
        assert_eq!(s[2], s0[2]);
        assert_ne!(s[1], s0[1]);
    }

    #[test]
    fn local_loss_decreases_on_separable_toy() {
        let backbone = crate::model::build_backbone(5, 4, 10.0, 4).unwrap();
        let start = init_adapter(&adapter_cfg(1), 5).unwrap();
        let cfg = FederationConfig {
            local_epochs: 8,
            batch_size: 8,
            ..Default::default()
        };
        let up = local_update(&toy_client(0, 0, 64, 6), &start, &backbone, &cfg, 0.5, 1).unwrap();
        for w in up.epoch_losses.windows(2) {
            assert!(w[1] < w[0], "{:?}", up.epoch_losses);
        }
    }

    #[test]
    fn empty_training_split_rejected() {
        let backbone = crate::model::build_backbone(5, 4, 10.0, 1).unwrap();
        let start = init_adapter(&adapter_cfg(1), 2).unwrap();
        let mut client = toy_client(0, 0, 4, 1);
        client.train.clear();
        assert!(local_update(
            &client,
            &start,
            &backbone,
            &FederationConfig::default(),
            0.1,
            1
        )
        .is_err());
    }
}
