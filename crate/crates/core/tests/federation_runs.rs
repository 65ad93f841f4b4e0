use fairfed_core::adapter::{AdapterConfig, SInit, Variant};
use fairfed_core::data::{generate_synthetic, split, AttributeSchema, SiteSpec, SyntheticSpec};
use fairfed_core::federation::{
    clients_from_splits, run_federation, run_local_only, ClientExecutor, ClientState, EvalSettings,
    FederationConfig, LrSchedule, Sequential,
};
use fairfed_core::model::{build_backbone, FrozenBackbone, GatePolicy};

/// Runs jobs back to front but hands results back in job order.
struct Reversed;

impl ClientExecutor for Reversed {
    fn map<T, F>(&self, jobs: &[usize], f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let mut out: Vec<(usize, T)> = jobs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, &j)| (i, f(j)))
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out.into_iter().map(|(_, t)| t).collect()
    }
}

fn schema() -> AttributeSchema {
    AttributeSchema {
        name: "race".into(),
        groups: vec!["a".into(), "b".into(), "c".into()],
    }
}

fn setup(sites: usize) -> (Vec<ClientState>, FrozenBackbone) {
    let spec = SyntheticSpec {
        feature_dim: 8,
        sites: (0..sites)
            .map(|k| SiteSpec {
                n_samples: 120,
                group_proportions: match k % 3 {
                    0 => vec![0.2, 0.2, 0.6],
                    1 => vec![0.1, 0.3, 0.6],
                    _ => vec![0.05, 0.15, 0.8],
                },
                positive_rate: 0.5,
                label_noise: 0.05,
            })
            .collect(),
        signal_strength: 1.0,
        group_shift_scale: 1.0,
        noise_sigma: 1.0,
        direction_sharing: 0.5,
        seed: 9,
    };
    let data = generate_synthetic(&spec, &schema()).unwrap();
    let clients = clients_from_splits(split(&data, [0.7, 0.1, 0.2], 4).unwrap());
    (clients, build_backbone(6, 8, 10.0, 2).unwrap())
}

fn adapter(variant: Variant) -> AdapterConfig {
    AdapterConfig {
        variant,
        rank: 3,
        lora_alpha: 2.0,
        out_dim: 6,
        in_dim: 8,
        num_groups: 3,
        s_init: SInit::HalfHalfCyclic,
    }
}

fn eval() -> EvalSettings {
    EvalSettings {
        schema: schema(),
        policy: GatePolicy::OracleGroup,
        threshold: 0.5,
    }
}

fn config(rounds: usize) -> FederationConfig {
    FederationConfig {
        rounds,
        lr: LrSchedule {
            initial: 0.5,
            ..LrSchedule::default()
        },
        seed: 17,
        ..FederationConfig::default()
    }
}

#[test]
fn execution_order_does_not_change_the_result() {
    let (clients, backbone) = setup(3);
    for variant in [
        Variant::Dense,
        Variant::Lora,
        Variant::SvdLora,
        Variant::FairLora,
    ] {
        let a = run_federation(
            &config(6),
            &clients,
            &backbone,
            &adapter(variant),
            &eval(),
            &Sequential,
        )
        .unwrap();
        let b = run_federation(
            &config(6),
            &clients,
            &backbone,
            &adapter(variant),
            &eval(),
            &Reversed,
        )
        .unwrap();
        assert_eq!(a, b, "{variant}");
    }
}

#[test]
fn history_has_one_record_per_round() {
    let (clients, backbone) = setup(3);
    let out = run_federation(
        &config(5),
        &clients,
        &backbone,
        &adapter(Variant::FairLora),
        &eval(),
        &Sequential,
    )
    .unwrap();
    assert_eq!(out.global.history.len(), 5);
    for (t, rec) in out.global.history.iter().enumerate() {
        assert_eq!(rec.round, t + 1);
        assert_eq!(rec.selected_clients.len(), 2);
        assert!(rec.mean_local_loss.unwrap().is_finite());
    }
    assert_eq!(out.report.rows.len(), 4);
}

#[test]
fn single_client_without_ema_matches_local_only() {
    let (clients, backbone) = setup(1);
    let cfg = FederationConfig {
        ema_decay: 0.0,
        client_fraction: 1.0,
        ..config(4)
    };
    let fed = run_federation(
        &cfg,
        &clients,
        &backbone,
        &adapter(Variant::FairLora),
        &eval(),
        &Sequential,
    )
    .unwrap();
    let local = run_local_only(
        &cfg,
        &clients,
        &backbone,
        &adapter(Variant::FairLora),
        &eval(),
        &Sequential,
    )
    .unwrap();
    assert_eq!(local.len(), 1);
    assert_eq!(fed.global.ema.params, local[0].state.params);
    assert_eq!(fed.report.rows[0], local[0].report.rows[0]);
}

#[test]
fn training_improves_on_the_untrained_adapter() {
    let (clients, backbone) = setup(3);
    let before = run_federation(
        &config(0),
        &clients,
        &backbone,
        &adapter(Variant::FairLora),
        &eval(),
        &Sequential,
    )
    .unwrap();
    let after = run_federation(
        &config(30),
        &clients,
        &backbone,
        &adapter(Variant::FairLora),
        &eval(),
        &Sequential,
    )
    .unwrap();
    let auc = |o: &fairfed_core::federation::FederationOutcome| o.report.avg().overall_auc.unwrap();
    assert!(
        auc(&after) > auc(&before),
        "{} vs {}",
        auc(&after),
        auc(&before)
    );
}
