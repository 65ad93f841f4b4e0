//! Frozen-backbone cosine classifier.
//!
//! A sample's features `x` are projected by `W0 + ΔW` and compared with fixed
//! unit-norm class prototypes:
//!
//! ```text
//! z        = (W0 + ΔW) · x
//! logit_c  = tau · cos(z, p_c)        (cos(0, p) := 0)
//! loss     = mean over the batch of −log softmax(logits)[y]
//! ```
//!
//! Only the adapter is trainable. `W0`, the prototypes and `tau` are fixed at
//! construction and fingerprinted so accidental mutation is detectable.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterGrads, FairLoraState, GroupGate, Variant};
use crate::data::Sample;
use crate::linalg::Matrix;
use crate::rng::SeededRng;
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 2;
pub const POSITIVE_CLASS: usize = 1;
pub const DEFAULT_TAU: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenBackbone {
    w0: Matrix,
    prototypes: Vec<Vec<f64>>,
    tau: f64,
    fingerprint: u64,
}

pub fn build_backbone(m: usize, n: usize, tau: f64, seed: u64) -> Result<FrozenBackbone> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "backbone dimensions must be positive".into(),
        ));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let w0 = Matrix::random_normal(&mut rng, m, n).scale(1.0 / libm::sqrt(n as f64));
    let prototypes = (0..NUM_CLASSES)
        .map(|_| loop {
            let p = rng.normal_vec(m);
            let norm = l2(&p);
            if norm > 1e-12 {
                break p.iter().map(|v| v / norm).collect::<Vec<_>>();
            }
        })
        .collect();
    let mut backbone = FrozenBackbone {
        w0,
        prototypes,
        tau,
        fingerprint: 0,
    };
    backbone.fingerprint = backbone.compute_fingerprint();
    Ok(backbone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub group: usize,
    pub label: u8,
    /// Positive-class probability.
    pub score: f64,
    /// Empty when the prediction came from an external dump.
    #[serde(default)]
    pub logits: Vec<f64>,
}

/// How the inference gate is chosen for each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicy {
    /// One-hot on the sample's recorded group.
    OracleGroup,
    /// The same population mixture for every sample, for when group metadata
    /// is missing at inference time.
    PopulationMixture(Vec<f64>),
}

fn l2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward values kept for the backward pass.
struct ForwardPass {
    z: Vec<f64>,
    norm: f64,
    dots: [f64; NUM_CLASSES],
    logits: [f64; NUM_CLASSES],
}

fn log_sum_exp(logits: &[f64; NUM_CLASSES]) -> f64 {
    let max = logits[0].max(logits[1]);
    max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>())
}

impl FrozenBackbone {
    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn out_dim(&self) -> usize {
        self.w0.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.w0.cols()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// FNV-1a over the bit patterns of every frozen value.
    fn compute_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let values = self
            .w0
            .as_slice()
            .iter()
            .chain(self.prototypes.iter().flatten())
            .chain(core::iter::once(&self.tau));
        for v in values {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    /// True while the frozen weights match the fingerprint taken at construction.
    pub fn verify_integrity(&self) -> bool {
        self.compute_fingerprint() == self.fingerprint
    }

    fn check_adapter(&self, adapter: &FairLoraState) -> Result<()> {
        let c = &adapter.config;
        if c.out_dim != self.out_dim() || c.in_dim != self.in_dim() {
            return Err(Error::InvalidArgument(format!(
                "adapter is {}x{} but the backbone projection is {}x{}",
                c.out_dim,
                c.in_dim,
                self.out_dim(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// `W0 + ΔW` for explicit slot weights.
    fn projection(&self, adapter: &FairLoraState, pi: &[f64]) -> Result<Matrix> {
        Matrix::axpy(1.0, &adapter.delta_weights_for(pi)?, &self.w0)
    }

    fn run(&self, projection: &Matrix, x: &[f64]) -> Result<ForwardPass> {
        let z = projection.apply(x)?;
        let norm = l2(&z);
        let mut dots = [0.0; NUM_CLASSES];
        let mut logits = [0.0; NUM_CLASSES];
        if norm > 0.0 {
            for c in 0..NUM_CLASSES {
                dots[c] = dot(&z, &self.prototypes[c]);
                logits[c] = self.tau * dots[c] / norm;
            }
        }
        Ok(ForwardPass {
            z,
            norm,
            dots,
            logits,
        })
    }

    pub fn forward(
        &self,
        adapter: &FairLoraState,
        gate: &GroupGate,
        x: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_adapter(adapter)?;
        let pi = adapter.slot_weights(gate)?;
        let projection = self.projection(adapter, &pi)?;
        Ok(self.run(&projection, x)?.logits.to_vec())
    }

    /// Mean cross-entropy over `batch` and its gradient with respect to the
    /// adapter. Each sample is gated one-hot on its own group.
    pub fn loss_and_grads(
        &self,
        adapter: &FairLoraState,
        batch: &[&Sample],
    ) -> Result<(f64, AdapterGrads)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        self.check_adapter(adapter)?;
        let slots = slot_count(adapter);
        let (m, n) = (self.out_dim(), self.in_dim());
        let mut projections: Vec<Option<Matrix>> = vec![None; slots];
        let mut upstream: Vec<Option<Matrix>> = vec![None; slots];
        let mut total_loss = 0.0;

        for sample in batch {
            let slot = slot_of(adapter, sample.group)?;
            if projections[slot].is_none() {
                projections[slot] = Some(self.projection(adapter, &slot_pi(adapter, slot))?);
            }
            let pass = self.run(projections[slot].as_ref().unwrap(), &sample.features)?;
            let lse = log_sum_exp(&pass.logits);
            let y = sample.label as usize;
            total_loss += lse - pass.logits[y];
            if pass.norm == 0.0 {
                // cos(0, p) is pinned to 0, so no gradient flows.
                continue;
            }
            // dL/dlogit_c = softmax_c − [c == y]
            // dlogit_c/dz = tau · (p_c / |z| − (z·p_c) z / |z|³)
            let mut dz = vec![0.0; m];
            for c in 0..NUM_CLASSES {
                let g = libm::exp(pass.logits[c] - lse) - if c == y { 1.0 } else { 0.0 };
                let a = self.tau * g / pass.norm;
                let b = self.tau * g * pass.dots[c] / (pass.norm * pass.norm * pass.norm);
                for ((d, p), zi) in dz.iter_mut().zip(&self.prototypes[c]).zip(&pass.z) {
                    *d += a * p - b * zi;
                }
            }
            let acc = upstream[slot].get_or_insert_with(|| Matrix::zeros(m, n));
            let data = acc.as_mut_slice();
            for (i, dzi) in dz.iter().enumerate() {
                if *dzi == 0.0 {
                    continue;
                }
                for (d, xl) in data[i * n..(i + 1) * n].iter_mut().zip(&sample.features) {
                    *d += dzi * xl;
                }
            }
        }

        let loss = total_loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("batch loss is {loss}")));
        }
        let mut grads = adapter.zero_grads();
        for (slot, up) in upstream.iter().enumerate() {
            if let Some(up) = up {
                adapter.accumulate_grads(&mut grads, &slot_pi(adapter, slot), up)?;
            }
        }
        grads.scale(1.0 / batch.len() as f64);
        Ok((loss, grads))
    }

    pub fn predict(
        &self,
        adapter: &FairLoraState,
        samples: &[Sample],
        policy: &GatePolicy,
    ) -> Result<Vec<Prediction>> {
        self.check_adapter(adapter)?;
        let num_groups = adapter.config.num_groups;
        let mixture = match policy {
            GatePolicy::PopulationMixture(pi) => {
                let slot_pi = adapter.slot_weights(&GroupGate::Mixture(pi.clone()))?;
                Some(self.projection(adapter, &slot_pi)?)
            }
            GatePolicy::OracleGroup => None,
        };
        let mut per_slot: Vec<Option<Matrix>> = vec![None; slot_count(adapter)];
        samples
            .iter()
            .map(|sample| {
                if sample.group >= num_groups {
                    return Err(Error::InvalidArgument(format!(
                        "sample {} has group {} but there are {num_groups} groups",
                        sample.id, sample.group
                    )));
                }
                let projection = match &mixture {
                    Some(p) => p,
                    None => {
                        let slot = slot_of(adapter, sample.group)?;
                        if per_slot[slot].is_none() {
                            per_slot[slot] =
                                Some(self.projection(adapter, &slot_pi(adapter, slot))?);
                        }
                        per_slot[slot].as_ref().unwrap()
                    }
                };
                let pass = self.run(projection, &sample.features)?;
                let lse = log_sum_exp(&pass.logits);
                Ok(Prediction {
                    sample_id: sample.id.clone(),
                    group: sample.group,
                    label: sample.label,
                    score: libm::exp(pass.logits[POSITIVE_CLASS] - lse),
                    logits: pass.logits.to_vec(),
                })
            })
            .collect()
    }
}

/// Gate slots that can produce different projections.
fn slot_count(adapter: &FairLoraState) -> usize {
    match adapter.config.variant {
        Variant::FairLora => adapter.config.num_groups,
        _ => 1,
    }
}

fn slot_of(adapter: &FairLoraState, group: usize) -> Result<usize> {
    if group >= adapter.config.num_groups {
        return Err(Error::InvalidArgument(format!(
            "group {group} out of range for {} groups",
            adapter.config.num_groups
        )));
    }
    Ok(match adapter.config.variant {
        Variant::FairLora => group,
        _ => 0,
    })
}

fn slot_pi(adapter: &FairLoraState, slot: usize) -> Vec<f64> {
    match adapter.config.variant {
        Variant::FairLora => {
            let mut pi = vec![0.0; adapter.config.num_groups];
            pi[slot] = 1.0;
            pi
        }
        _ => vec![1.0],
    }
}
