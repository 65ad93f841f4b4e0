//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fairfed::commands::cmd_compare;
use fairfed::config::{GatePolicyKind, Mode};
use fairfed::executor::ThreadExecutor;
use fairfed::ExperimentConfig;
use fairfed_core::adapter::{
    init_adapter, AdapterConfig, AdapterParams, FairLoraState, SInit, Variant,
};
use fairfed_core::data::{AttributeSchema, Sample};
use fairfed_core::federation::{
    aggregate, alpha_weights, ema_update, local_update, run_federation, AlphaMode, ClientState,
    ClientUpdate, EvalSettings, FederationConfig, LrSchedule, Sequential,
};
use fairfed_core::linalg::{linspace, Matrix};
use fairfed_core::metrics::{auc, eod, es_auc, spd};
use fairfed_core::model::{build_backbone, FrozenBackbone, GatePolicy, Prediction};
use fairfed_core::rng::SeededRng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn benchmark_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json")
}

fn schema(groups: usize) -> AttributeSchema {
    AttributeSchema {
        name: "g".into(),
        groups: (0..groups).map(|g| format!("g{g}")).collect(),
    }
}

fn random_samples(rng: &mut SeededRng, count: usize, n: usize, groups: &[usize]) -> Vec<Sample> {
    (0..count)
        .map(|i| Sample {
            id: format!("x{i}"),
            site: 0,
            group: groups[rng.below(groups.len())],
            label: rng.below(2) as u8,
            features: rng.normal_vec(n),
        })
        .collect()
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * rng.standard_normal())
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// An adapter with every tensor randomized, so no gradient path is trivially zero.
fn random_adapter(rng: &mut SeededRng, cfg: &AdapterConfig) -> FairLoraState {
    let params = AdapterParams::LowRank {
        u: random_matrix(rng, cfg.out_dim, cfg.rank, 0.7),
        v: random_matrix(rng, cfg.rank, cfg.in_dim, 0.7),
        s: (0..cfg.s_slots())
            .map(|_| (0..cfg.rank).map(|_| 0.1 + rng.next_f64()).collect())
            .collect(),
    };
    FairLoraState::from_params(cfg.clone(), params).unwrap()
}

fn loss(backbone: &FrozenBackbone, state: &FairLoraState, batch: &[&Sample]) -> f64 {
    backbone.loss_and_grads(state, batch).unwrap().0
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xACCE_0001);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for instance in 0..100 {
        let m = 2 + rng.below(7);
        let n = 2 + rng.below(7);
        let rank = 1 + rng.below(4.min(m).min(n));
        let groups = 1 + rng.below(3);
        let cfg = AdapterConfig {
            variant: Variant::FairLora,
            rank,
            lora_alpha: 0.5 + 3.0 * rng.next_f64(),
            out_dim: m,
            in_dim: n,
            num_groups: groups,
            s_init: SInit::HalfHalfCyclic,
        };
        let backbone = build_backbone(m, n, 1.0 + 9.0 * rng.next_f64(), rng.next_u64()).unwrap();
        let state = random_adapter(&mut rng, &cfg);
        let all: Vec<usize> = (0..groups).collect();
        let count = 1 + rng.below(6);
        let samples = random_samples(&mut rng, count, n, &all);
        let batch: Vec<&Sample> = samples.iter().collect();
        let (_, grads) = backbone.loss_and_grads(&state, &batch).unwrap();
        let analytic: Vec<Vec<f64>> = grads.0.tensors().iter().map(|(_, v)| v.to_vec()).collect();

        let tensor_count = analytic.len();
        for t in 0..tensor_count {
            for i in 0..analytic[t].len() {
                let mut plus = state.clone();
                plus.params.tensors_mut()[t].1[i] += h;
                let mut minus = state.clone();
                minus.params.tensors_mut()[t].1[i] -= h;
                let fd =
                    (loss(&backbone, &plus, &batch) - loss(&backbone, &minus, &batch)) / (2.0 * h);
                let a = analytic[t][i];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                worst = worst.max(rel);
                checked += 1;
                ensure(rel < 1e-4, || {
                    format!("instance {instance}: tensor {t} entry {i}: analytic {a:e} vs numeric {fd:e} (rel {rel:e})")
                })?;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{checked} partials over 100 instances, worst rel err {worst:.1e}, {elapsed:.2?}"
    ))
}

fn criterion_2() -> Check {
    let mut rng = SeededRng::new(0xACCE_0002);
    for config in 0..20 {
        let m = 2 + rng.below(6);
        let n = 2 + rng.below(6);
        let groups = 2 + rng.below(3);
        let cfg = AdapterConfig {
            variant: Variant::FairLora,
            rank: 1 + rng.below(3.min(m).min(n)),
            lora_alpha: 2.0,
            out_dim: m,
            in_dim: n,
            num_groups: groups,
            s_init: [
                SInit::UniformLinspace,
                SInit::FullCyclic,
                SInit::HalfHalfCyclic,
            ][rng.below(3)],
        };
        let backbone = build_backbone(m, n, 10.0, rng.next_u64()).unwrap();
        let start = init_adapter(&cfg, rng.next_u64()).unwrap();
        let target = rng.below(groups);
        let client = ClientState {
            id: 0,
            train: {
                let count = 10 + rng.below(30);
                random_samples(&mut rng, count, n, &[target])
            },
            val: vec![],
            test: vec![],
            alpha: 1.0,
        };
        let fed = FederationConfig {
            local_epochs: 1 + rng.below(3),
            batch_size: 1 + rng.below(8),
            seed: rng.next_u64(),
            ..FederationConfig::default()
        };
        let update = local_update(&client, &start, &backbone, &fed, 0.5, 1).unwrap();
        let (AdapterParams::LowRank { s: before, .. }, AdapterParams::LowRank { s: after, .. }) =
            (&start.params, &update.params)
        else {
            return Err("unexpected dense parameters".into());
        };
        for g in 0..groups {
            let same = before[g]
                .iter()
                .zip(&after[g])
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if g == target {
                ensure(!same, || {
                    format!("config {config}: S[{g}] of the trained group did not move")
                })?;
            } else {
                ensure(same, || {
                    format!("config {config}: S[{g}] changed while training only group {target}")
                })?;
            }
        }
    }
    Ok("20 configurations, untouched groups bit-identical".into())
}

fn single_group_clients(rng: &mut SeededRng, n: usize) -> Vec<ClientState> {
    (0..3)
        .map(|k| ClientState {
            id: k,
            train: random_samples(rng, 30 + 10 * k, n, &[0]),
            val: random_samples(rng, 8, n, &[0]),
            test: random_samples(rng, 12, n, &[0]),
            alpha: 0.0,
        })
        .collect()
}

fn criterion_3() -> Check {
    let mut rng = SeededRng::new(0xACCE_0003);
    let (m, n, rank) = (6, 8, 4);
    let backbone = build_backbone(m, n, 10.0, 3).unwrap();
    let clients = single_group_clients(&mut rng, n);
    let eval = EvalSettings {
        schema: schema(1),
        policy: GatePolicy::OracleGroup,
        threshold: 0.5,
    };
    let adapter = |variant| AdapterConfig {
        variant,
        rank,
        lora_alpha: 2.0,
        out_dim: m,
        in_dim: n,
        num_groups: 1,
        s_init: SInit::HalfHalfCyclic,
    };
    // A constant learning rate makes an r-round run the exact prefix of a
    // longer one, so every intermediate state can be compared.
    let mut worst: f64 = 0.0;
    for rounds in 1..=10 {
        let cfg = FederationConfig {
            rounds,
            lr: LrSchedule {
                initial: 0.3,
                decay_factor: 1.0,
                decay_at_fraction: 0.8,
            },
            seed: 42,
            ..FederationConfig::default()
        };
        let fair = run_federation(
            &cfg,
            &clients,
            &backbone,
            &adapter(Variant::FairLora),
            &eval,
            &Sequential,
        )
        .map_err(|e| e.to_string())?;
        let svd = run_federation(
            &cfg,
            &clients,
            &backbone,
            &adapter(Variant::SvdLora),
            &eval,
            &Sequential,
        )
        .map_err(|e| e.to_string())?;
        for (a, b) in [
            (&fair.global.ema.params, &svd.global.ema.params),
            (&fair.global.aggregate.params, &svd.global.aggregate.params),
        ] {
            for ((name, x), (_, y)) in a.tensors().into_iter().zip(b.tensors()) {
                for (p, q) in x.iter().zip(y) {
                    let d = (p - q).abs();
                    worst = worst.max(d);
                    ensure(d <= 1e-12, || {
                        format!("round {rounds}: {name} differs by {d:e}")
                    })?;
                }
            }
        }
    }
    Ok(format!("10 rounds, max per-parameter difference {worst:e}"))
}

fn random_low_rank(
    rng: &mut SeededRng,
    m: usize,
    n: usize,
    r: usize,
    slots: usize,
) -> AdapterParams {
    AdapterParams::LowRank {
        u: random_matrix(rng, m, r, 1.0),
        v: random_matrix(rng, r, n, 1.0),
        s: (0..slots).map(|_| rng.normal_vec(r)).collect(),
    }
}

fn criterion_4() -> Check {
    let mut rng = SeededRng::new(0xACCE_0004);
    let mut worst: f64 = 0.0;
    for trial in 0..200 {
        let (m, n, r, slots) = (
            1 + rng.below(5),
            1 + rng.below(5),
            1 + rng.below(3),
            1 + rng.below(3),
        );
        let k = 1 + rng.below(5);
        let updates: Vec<ClientUpdate> = (0..k)
            .map(|c| ClientUpdate {
                client: c,
                params: random_low_rank(&mut rng, m, n, r, slots),
                n_samples: 1 + rng.below(500),
                epoch_losses: vec![],
            })
            .collect();
        let mode = if trial % 2 == 0 {
            AlphaMode::DataSize
        } else {
            AlphaMode::Uniform
        };
        let alpha = alpha_weights(&updates, mode).map_err(|e| e.to_string())?;
        let agg = aggregate(&updates, mode).map_err(|e| e.to_string())?;
        for (t, (name, values)) in agg.tensors().into_iter().enumerate() {
            for (i, v) in values.iter().enumerate() {
                let client_values: Vec<f64> =
                    updates.iter().map(|u| u.params.tensors()[t].1[i]).collect();
                let oracle: f64 = client_values.iter().zip(&alpha).map(|(x, a)| a * x).sum();
                let d = (v - oracle).abs();
                worst = worst.max(d);
                ensure(d <= 1e-12, || {
                    format!("trial {trial}: {name}[{i}] {v} vs weighted sum {oracle}")
                })?;
                let lo = client_values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = client_values
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                ensure(lo <= *v && *v <= hi, || {
                    format!("trial {trial}: {name}[{i}] = {v} outside [{lo}, {hi}]")
                })?;
            }
        }

        // Identical clients: the aggregate and the EMA stay put bit for bit.
        let global = random_low_rank(&mut rng, m, n, r, slots);
        let same: Vec<ClientUpdate> = (0..k)
            .map(|c| ClientUpdate {
                client: c,
                params: global.clone(),
                n_samples: 1 + rng.below(500),
                epoch_losses: vec![],
            })
            .collect();
        let fresh = aggregate(&same, mode).map_err(|e| e.to_string())?;
        ensure(fresh == global, || {
            format!("trial {trial}: identical clients moved the aggregate")
        })?;
        let mut ema = global.clone();
        ema_update(&mut ema, &fresh, rng.next_f64() * 0.999).map_err(|e| e.to_string())?;
        ensure(ema == global, || {
            format!("trial {trial}: fixed point not bit-exact")
        })?;
    }
    Ok(format!(
        "200 trials, max oracle difference {worst:.1e}, convexity and fixed point hold"
    ))
}

fn predictions(rng: &mut SeededRng, count: usize, groups: usize, levels: usize) -> Vec<Prediction> {
    (0..count)
        .map(|i| Prediction {
            sample_id: format!("p{i}"),
            group: rng.below(groups),
            label: rng.below(2) as u8,
            score: rng.below(levels + 1) as f64 / levels as f64,
            logits: vec![],
        })
        .collect()
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut rng = SeededRng::new(0xACCE_0005);
    let mut instances = 0;
    while instances < 50 {
        let (count, groups, levels) = (2 + rng.below(199), 1 + rng.below(4), 1 + rng.below(20));
        let preds = predictions(&mut rng, count, groups, levels);
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
        let Ok(value) = auc(&scores, &labels) else {
            continue;
        };
        let (mut wins, mut pos, mut neg) = (0.0, 0usize, 0usize);
        for p in preds.iter().filter(|p| p.label == 1) {
            pos += 1;
            for q in preds.iter().filter(|q| q.label == 0) {
                wins += if p.score > q.score {
                    1.0
                } else if p.score == q.score {
                    0.5
                } else {
                    0.0
                };
            }
        }
        neg += preds.len() - pos;
        let oracle = wins / (pos as f64 * neg as f64);
        ensure(value == oracle, || {
            format!("AUC {value} vs pair count {oracle}")
        })?;
        instances += 1;
    }

    for trial in 0..200 {
        let (count, groups) = (1 + rng.below(100), 1 + rng.below(4));
        let preds = predictions(&mut rng, count, groups, 10);
        let threshold = rng.below(11) as f64 / 10.0;
        let mut tpr = Vec::new();
        let mut ppr = Vec::new();
        for g in 0..4 {
            let (mut tp, mut fn_, mut fp, mut tn) = (0usize, 0usize, 0usize, 0usize);
            for p in preds.iter().filter(|p| p.group == g) {
                match (p.label, p.score >= threshold) {
                    (1, true) => tp += 1,
                    (1, false) => fn_ += 1,
                    (_, true) => fp += 1,
                    (_, false) => tn += 1,
                }
            }
            let total = tp + fn_ + fp + tn;
            if total > 0 {
                ppr.push((tp + fp) as f64 / total as f64);
            }
            if tp + fn_ > 0 {
                tpr.push(tp as f64 / (tp + fn_) as f64);
            }
        }
        let spread = |v: &[f64]| {
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - v.iter().copied().fold(f64::INFINITY, f64::min)
        };
        let spd_value = spd(&preds, threshold).map_err(|e| e.to_string())?.value;
        ensure(spd_value == spread(&ppr), || {
            format!("trial {trial}: SPD {spd_value} vs {}", spread(&ppr))
        })?;
        match eod(&preds, threshold) {
            Ok(gap) => ensure(gap.value == spread(&tpr), || {
                format!("trial {trial}: EOD {} vs {}", gap.value, spread(&tpr))
            })?,
            Err(_) => ensure(tpr.is_empty(), || {
                format!("trial {trial}: EOD undefined with positives present")
            })?,
        }
    }

    for trial in 0..1000 {
        let overall = 0.5 + 0.5 * rng.next_f64();
        let groups: Vec<f64> = (0..1 + rng.below(5)).map(|_| rng.next_f64()).collect();
        let widen = 1.0 + 2.0 * rng.next_f64();
        let wider: Vec<f64> = groups
            .iter()
            .map(|g| overall + widen * (g - overall))
            .collect();
        let (base, spread_out) = (es_auc(overall, &groups), es_auc(overall, &wider));
        ensure(spread_out <= base && base <= overall, || {
            format!("trial {trial}: ES-AUC not monotone ({overall}, {base}, {spread_out})")
        })?;
        ensure(
            es_auc(overall, &vec![overall; groups.len()]) == overall,
            || format!("trial {trial}: no disparity should leave AUC unchanged"),
        )?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "50 AUC, 200 EOD/SPD, 1000 ES-AUC checks in {elapsed:.2?}"
    ))
}

fn criterion_6() -> Check {
    let cfg = AdapterConfig {
        variant: Variant::FairLora,
        rank: 12,
        lora_alpha: 2.0,
        out_dim: 16,
        in_dim: 32,
        num_groups: 3,
        s_init: SInit::HalfHalfCyclic,
    };
    let state = init_adapter(&cfg, 1).map_err(|e| e.to_string())?;
    let AdapterParams::LowRank { s, .. } = &state.params else {
        return Err("expected low-rank parameters".into());
    };
    let base = linspace(0.5, 0.1, 12);
    for (g, sg) in s.iter().enumerate() {
        ensure(sg[..6] == base[..6], || {
            format!("group {g} first half {:?}", &sg[..6])
        })?;
    }
    let argmax: Vec<usize> = s
        .iter()
        .map(|sg| (6..12).max_by(|&a, &b| sg[a].total_cmp(&sg[b])).unwrap())
        .collect();
    let mut distinct = argmax.clone();
    distinct.sort_unstable();
    distinct.dedup();
    ensure(distinct.len() == 3, || {
        format!("second-half peaks {argmax:?}")
    })?;
    Ok(format!(
        "shared prefix equals the ramp, second-half peaks at ranks {argmax:?}"
    ))
}

fn train_with_threads(config: &Path, out: &Path, threads: &str) -> Result<(), String> {
    let res = Command::new(env!("CARGO_BIN_EXE_fairfed"))
        .args([
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .args(["--set", "seeds=[1,2]"])
        .env("FAIRFED_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(res.status.success(), || {
        String::from_utf8_lossy(&res.stderr).into_owned()
    })
}

fn criterion_7() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("t1"), dir.path().join("t8"));
    train_with_threads(&benchmark_path(), &a, "1")?;
    train_with_threads(&benchmark_path(), &b, "8")?;
    let mut compared = 0;
    for rel in [
        "aggregate.json",
        "aggregate.csv",
        "seed-1/report.json",
        "seed-2/report.json",
        "seed-1/rounds.jsonl",
        "seed-2/rounds.jsonl",
        "seed-1/adapter.ckpt",
        "seed-2/adapter.ckpt",
        "seed-1/predictions.csv",
    ] {
        let x = fs::read(a.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        let y = fs::read(b.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        ensure(x == y, || format!("{rel} differs between 1 and 8 threads"))?;
        compared += 1;
    }
    Ok(format!(
        "{compared} artifacts byte-identical with FAIRFED_THREADS=1 and 8"
    ))
}

struct Benchmark {
    fed_client_auc: f64,
    local_client_auc: f64,
    fair_es: f64,
    lora_es: f64,
    fair_spread: f64,
    lora_spread: f64,
    oracle_auc: f64,
    mixture_auc: f64,
    elapsed: Duration,
}

fn run_benchmark() -> Result<Benchmark, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::load(&benchmark_path(), &[]).map_err(|e| e.to_string())?;
    ensure(cfg.seeds.len() == 5, || {
        format!("benchmark has {} seeds", cfg.seeds.len())
    })?;
    cfg.output_dir = dir.path().to_path_buf();
    let out = cmd_compare(&cfg, &ThreadExecutor::from_env()).map_err(|e| e.to_string())?;
    let row = |variant, mode, policy| {
        out.find(variant, mode, policy)
            .ok_or_else(|| format!("no {variant} {} {} row", mode.as_str(), policy.as_str()))
    };
    let metric = |variant, mode, policy, name: &str| -> Result<f64, String> {
        row(variant, mode, policy)?
            .metric(name)
            .ok_or_else(|| format!("{variant} {} has no {name}", mode.as_str()))
    };
    use GatePolicyKind::{OracleGroup, PopulationMixture};
    use Mode::{Federated, LocalOnly};
    use Variant::{FairLora, Lora};
    Ok(Benchmark {
        fed_client_auc: metric(FairLora, Federated, OracleGroup, "client_mean_auc")?,
        local_client_auc: metric(FairLora, LocalOnly, OracleGroup, "client_mean_auc")?,
        fair_es: metric(FairLora, Federated, OracleGroup, "es_auc")?,
        lora_es: metric(Lora, Federated, OracleGroup, "es_auc")?,
        fair_spread: metric(FairLora, Federated, OracleGroup, "group_auc_spread")?,
        lora_spread: metric(Lora, Federated, OracleGroup, "group_auc_spread")?,
        oracle_auc: metric(FairLora, Federated, OracleGroup, "overall_auc")?,
        mixture_auc: metric(FairLora, Federated, PopulationMixture, "overall_auc")?,
        elapsed: start.elapsed(),
    })
}

fn criterion_8(b: &Benchmark) -> Check {
    let margin = b.fed_client_auc - b.local_client_auc;
    let detail = format!(
        "federated {:.4} vs local-only {:.4} mean client AUC, margin {margin:+.4}, benchmark took {:.1?}",
        b.fed_client_auc, b.local_client_auc, b.elapsed
    );
    ensure(b.elapsed < Duration::from_secs(300), || {
        format!("{detail}: over 5 minutes")
    })?;
    ensure(margin >= 0.0, || detail.clone())?;
    Ok(detail)
}

fn criterion_9(b: &Benchmark) -> Check {
    let detail = format!(
        "ES-AUC fairlora {:.4} vs lora {:.4} ({:+.4}); group-AUC spread fairlora {:.4} vs lora {:.4} ({:+.4})",
        b.fair_es,
        b.lora_es,
        b.fair_es - b.lora_es,
        b.fair_spread,
        b.lora_spread,
        b.fair_spread - b.lora_spread
    );
    ensure(
        b.fair_es >= b.lora_es - 0.02 && b.fair_spread <= b.lora_spread + 0.02,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn criterion_10(b: &Benchmark) -> Check {
    let gap = (b.oracle_auc - b.mixture_auc).abs();
    let detail = format!(
        "oracle-group {:.4} vs population-mixture {:.4} overall AUC, gap {gap:.4}",
        b.oracle_auc, b.mixture_auc
    );
    ensure(gap <= 0.03, || detail.clone())?;
    Ok(detail)
}

fn run(check: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(result) => result,
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let titles = [
        "gradient correctness",
        "gating exclusivity",
        "variant reduction",
        "aggregation contract",
        "metric oracles",
        "initialization shape",
        "determinism",
        "federated vs local-only",
        "fairness vs plain LoRA",
        "missing-metadata robustness",
    ];
    let mut results: Vec<Check> = vec![
        run(criterion_1),
        run(criterion_2),
        run(criterion_3),
        run(criterion_4),
        run(criterion_5),
        run(criterion_6),
        run(criterion_7),
    ];
    // Criteria 8 to 10 share one run of the benchmark grid.
    match run_benchmark() {
        Ok(b) => {
            results.push(run(|| criterion_8(&b)));
            results.push(run(|| criterion_9(&b)));
            results.push(run(|| criterion_10(&b)));
        }
        Err(e) => {
            for _ in 0..3 {
                results.push(Err(format!("benchmark run failed: {e}")));
            }
        }
    }

    let mut failed = 0;
    for (i, (title, result)) in titles.iter().zip(&results).enumerate() {
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {title}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {title}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
