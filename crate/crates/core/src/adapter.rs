//! Low-rank adapters for a frozen `out_dim x in_dim` projection.
//!
//! Four variants share one parameter container:
//!
//! * `dense`: a full trainable `ΔW` (the fully fine-tuned baseline).
//! * `lora`: `ΔW = (alpha / r) · U · V`.
//! * `svd_lora`: `ΔW = (alpha / r) · U · diag(s) · V` with one shared `s`.
//! * `fairlora`: like `svd_lora` but with one singular-value vector `S_g` per
//!   demographic group. A gate `π` mixes them, `s = Σ_g π_g S_g`; during
//!   training `π` is one-hot on the sample's group so only that group's
//!   vector receives gradient while `U` and `V` stay shared.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{linspace, Matrix};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Endpoints of the singular-value initialization ramp.
pub const S_INIT_START: f64 = 0.5;
pub const S_INIT_END: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dense,
    Lora,
    SvdLora,
    #[serde(rename = "fairlora")]
    FairLora,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dense => "dense",
            Variant::Lora => "lora",
            Variant::SvdLora => "svd_lora",
            Variant::FairLora => "fairlora",
        }
    }

    /// Stable numeric code used by the checkpoint format.
    pub fn code(self) -> u32 {
        match self {
            Variant::Dense => 0,
            Variant::Lora => 1,
            Variant::SvdLora => 2,
            Variant::FairLora => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Variant::Dense,
            1 => Variant::Lora,
            2 => Variant::SvdLora,
            3 => Variant::FairLora,
            _ => return None,
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the per-group singular values start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SInit {
    /// Every group gets the plain ramp.
    UniformLinspace,
    /// Every group gets the ramp rotated by `g * floor(r / |G|)`.
    FullCyclic,
    /// First `ceil(r / 2)` ranks are the shared ramp; the rest of the ramp is
    /// rotated by `g * floor((r - h) / |G|)` so each group peaks at its own rank.
    #[default]
    HalfHalfCyclic,
}

impl SInit {
    pub fn as_str(self) -> &'static str {
        match self {
            SInit::UniformLinspace => "uniform_linspace",
            SInit::FullCyclic => "full_cyclic",
            SInit::HalfHalfCyclic => "half_half_cyclic",
        }
    }

    /// Singular values for group `g` of `num_groups` at rank `r`.
    pub fn values(self, r: usize, g: usize, num_groups: usize) -> Vec<f64> {
        let base = linspace(S_INIT_START, S_INIT_END, r);
        match self {
            SInit::UniformLinspace => base,
            SInit::FullCyclic => {
                let shift = g * (r / num_groups);
                (0..r).map(|j| base[(j + shift) % r]).collect()
            }
            SInit::HalfHalfCyclic => {
                let h = r.div_ceil(2);
                let tail = r - h;
                let shift = if tail == 0 {
                    0
                } else {
                    g * (tail / num_groups)
                };
                (0..r)
                    .map(|j| {
                        if j < h {
                            base[j]
                        } else {
                            base[h + (j - h + shift) % tail]
                        }
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for SInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub variant: Variant,
    pub rank: usize,
    pub lora_alpha: f64,
    pub out_dim: usize,
    pub in_dim: usize,
    pub num_groups: usize,
    #[serde(default)]
    pub s_init: SInit,
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 || self.in_dim == 0 {
            return Err(Error::InvalidConfig(
                "adapter dimensions must be positive".into(),
            ));
        }
        if self.num_groups == 0 {
            return Err(Error::InvalidConfig("num_groups must be at least 1".into()));
        }
        if !(self.lora_alpha.is_finite() && self.lora_alpha > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lora_alpha must be positive and finite, got {}",
                self.lora_alpha
            )));
        }
        if self.variant != Variant::Dense
            && (self.rank == 0 || self.rank > self.out_dim.min(self.in_dim))
        {
            return Err(Error::InvalidConfig(format!(
                "rank {} must be in 1..=min({}, {})",
                self.rank, self.out_dim, self.in_dim
            )));
        }
        Ok(())
    }

    /// Number of stored singular-value vectors.
    pub fn s_slots(&self) -> usize {
        match self.variant {
            Variant::FairLora => self.num_groups,
            Variant::SvdLora => 1,
            Variant::Lora | Variant::Dense => 0,
        }
    }

    /// The LoRA `alpha / r` factor.
    pub fn scaling(&self) -> f64 {
        self.lora_alpha / self.rank as f64
    }
}

/// Names a parameter tensor in errors and logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorName {
    U,
    V,
    S(usize),
    W,
}

impl fmt::Display for TensorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorName::U => f.write_str("U"),
            TensorName::V => f.write_str("V"),
            TensorName::S(g) => write!(f, "S[{g}]"),
            TensorName::W => f.write_str("W"),
        }
    }
}

/// Trainable tensors of an adapter. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdapterParams {
    Dense(Matrix),
    /// `s` is empty for plain LoRA, one vector for SVD-LoRA, `|G|` for FairLoRA.
    LowRank {
        u: Matrix,
        v: Matrix,
        s: Vec<Vec<f64>>,
    },
}

impl AdapterParams {
    pub fn zeros_like(&self) -> Self {
        match self {
            AdapterParams::Dense(w) => AdapterParams::Dense(Matrix::zeros(w.rows(), w.cols())),
            AdapterParams::LowRank { u, v, s } => AdapterParams::LowRank {
                u: Matrix::zeros(u.rows(), u.cols()),
                v: Matrix::zeros(v.rows(), v.cols()),
                s: s.iter().map(|sg| vec![0.0; sg.len()]).collect(),
            },
        }
    }

    pub fn tensors(&self) -> Vec<(TensorName, &[f64])> {
        match self {
            AdapterParams::Dense(w) => vec![(TensorName::W, w.as_slice())],
            AdapterParams::LowRank { u, v, s } => {
                let mut out = vec![(TensorName::U, u.as_slice()), (TensorName::V, v.as_slice())];
                out.extend(
                    s.iter()
                        .enumerate()
                        .map(|(g, sg)| (TensorName::S(g), sg.as_slice())),
                );
                out
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorName, &mut [f64])> {
        match self {
            AdapterParams::Dense(w) => vec![(TensorName::W, w.as_mut_slice())],
            AdapterParams::LowRank { u, v, s } => {
                let mut out = vec![
                    (TensorName::U, u.as_mut_slice()),
                    (TensorName::V, v.as_mut_slice()),
                ];
                out.extend(
                    s.iter_mut()
                        .enumerate()
                        .map(|(g, sg)| (TensorName::S(g), sg.as_mut_slice())),
                );
                out
            }
        }
    }

    /// True when both hold the same tensors with the same lengths.
    pub fn same_layout(&self, other: &Self) -> bool {
        match (self, other) {
            (AdapterParams::Dense(a), AdapterParams::Dense(b)) => a.shape() == b.shape(),
            (
                AdapterParams::LowRank {
                    u: ua,
                    v: va,
                    s: sa,
                },
                AdapterParams::LowRank {
                    u: ub,
                    v: vb,
                    s: sb,
                },
            ) => {
                ua.shape() == ub.shape()
                    && va.shape() == vb.shape()
                    && sa.len() == sb.len()
                    && sa.iter().zip(sb).all(|(x, y)| x.len() == y.len())
            }
            _ => false,
        }
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn first_non_finite(&self) -> Option<TensorName> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }
}

/// Gate selecting which group's singular values take part in a forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupGate {
    OneHot(usize),
    Mixture(Vec<f64>),
}

impl GroupGate {
    /// Expands the gate into explicit weights over `num_groups` groups.
    pub fn weights(&self, num_groups: usize) -> Result<Vec<f64>> {
        match self {
            GroupGate::OneHot(g) => {
                if *g >= num_groups {
                    return Err(Error::InvalidArgument(format!(
                        "one-hot gate on group {g} but the adapter has {num_groups} groups"
                    )));
                }
                let mut pi = vec![0.0; num_groups];
                pi[*g] = 1.0;
                Ok(pi)
            }
            GroupGate::Mixture(pi) => {
                validate_mixture(pi, num_groups)?;
                Ok(pi.clone())
            }
        }
    }
}

pub fn validate_mixture(pi: &[f64], num_groups: usize) -> Result<()> {
    if pi.len() != num_groups {
        return Err(Error::InvalidArgument(format!(
            "mixture has {} weights but the adapter has {num_groups} groups",
            pi.len()
        )));
    }
    if pi.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidArgument(
            "mixture weights must be finite and >= 0".into(),
        ));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "mixture weights sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Gradient of a scalar loss with respect to every adapter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads(pub AdapterParams);

impl AdapterGrads {
    pub fn du(&self) -> Option<&Matrix> {
        match &self.0 {
            AdapterParams::LowRank { u, .. } => Some(u),
            AdapterParams::Dense(_) => None,
        }
    }

    pub fn dv(&self) -> Option<&Matrix> {
        match &self.0 {
            AdapterParams::LowRank { v, .. } => Some(v),
            AdapterParams::Dense(_) => None,
        }
    }

    pub fn ds(&self) -> &[Vec<f64>] {
        match &self.0 {
            AdapterParams::LowRank { s, .. } => s,
            AdapterParams::Dense(_) => &[],
        }
    }

    pub fn dw(&self) -> Option<&Matrix> {
        match &self.0 {
            AdapterParams::Dense(w) => Some(w),
            AdapterParams::LowRank { .. } => None,
        }
    }

    /// Multiplies every entry by `factor` in place.
    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.0.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairLoraState {
    pub config: AdapterConfig,
    pub params: AdapterParams,
}

/// Fresh adapter: `U = 0`, `V ~ N(0, 1)` from `seed`, singular values per
/// `config.s_init`. The dense variant starts from an all-zero `ΔW`.
pub fn init_adapter(config: &AdapterConfig, seed: u64) -> Result<FairLoraState> {
    config.validate()?;
    let params = match config.variant {
        Variant::Dense => AdapterParams::Dense(Matrix::zeros(config.out_dim, config.in_dim)),
        _ => {
            let r = config.rank;
            let mut rng = SeededRng::new(seed);
            let v = Matrix::random_normal(&mut rng, r, config.in_dim);
            let slots = config.s_slots();
            let s = (0..slots)
                .map(|g| config.s_init.values(r, g, slots))
                .collect();
            AdapterParams::LowRank {
                u: Matrix::zeros(config.out_dim, r),
                v,
                s,
            }
        }
    };
    Ok(FairLoraState {
        config: config.clone(),
        params,
    })
}

impl FairLoraState {
    /// Builds a state from explicit tensors, checking them against `config`.
    pub fn from_params(config: AdapterConfig, params: AdapterParams) -> Result<Self> {
        config.validate()?;
        let template = init_adapter(&config, 0)?;
        if !template.params.same_layout(&params) {
            return Err(Error::InvalidArgument(format!(
                "tensor layout does not match {} adapter {}x{} rank {}",
                config.variant, config.out_dim, config.in_dim, config.rank
            )));
        }
        if let Some(name) = params.first_non_finite() {
            return Err(Error::Numeric(format!(
                "tensor {name} has non-finite entries"
            )));
        }
        Ok(Self { config, params })
    }

    /// Per-slot gate weights. Variants without per-group singular values
    /// ignore the gate entirely.
    pub fn slot_weights(&self, gate: &GroupGate) -> Result<Vec<f64>> {
        match self.config.variant {
            Variant::FairLora => gate.weights(self.config.num_groups),
            _ => Ok(vec![1.0]),
        }
    }

    /// `Σ_g π_g S_g`, accumulated in group order. Zero weights are skipped so a
    /// one-hot `π` returns the selected vector bit for bit.
    pub fn effective_s(&self, pi: &[f64]) -> Result<Vec<f64>> {
        let AdapterParams::LowRank { s, .. } = &self.params else {
            return Err(Error::InvalidArgument(format!(
                "{} adapter has no singular values",
                self.config.variant
            )));
        };
        if s.is_empty() {
            return Err(Error::InvalidArgument(
                "lora adapter has no singular values".into(),
            ));
        }
        if pi.len() != s.len() {
            return Err(Error::InvalidArgument(format!(
                "mixture has {} weights for {} singular-value vectors",
                pi.len(),
                s.len()
            )));
        }
        let mut out = vec![0.0; self.config.rank];
        for (w, sg) in pi.iter().zip(s) {
            if *w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(sg) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Diagonal used in the forward pass for already-expanded slot weights;
    /// `None` means identity (plain LoRA).
    fn diagonal(&self, pi: &[f64]) -> Result<Option<Vec<f64>>> {
        match &self.params {
            AdapterParams::LowRank { s, .. } if !s.is_empty() => self.effective_s(pi).map(Some),
            _ => Ok(None),
        }
    }

    pub fn delta_weights(&self, gate: &GroupGate) -> Result<Matrix> {
        let pi = self.slot_weights(gate)?;
        self.delta_weights_for(&pi)
    }

    /// [`Self::delta_weights`] for already-expanded slot weights.
    pub fn delta_weights_for(&self, pi: &[f64]) -> Result<Matrix> {
        match &self.params {
            AdapterParams::Dense(w) => Ok(w.clone()),
            AdapterParams::LowRank { u, v, .. } => {
                let k = self.config.scaling();
                let left = match self.diagonal(pi)? {
                    Some(d) => {
                        let kd: Vec<f64> = d.iter().map(|x| k * x).collect();
                        u.scale_columns(&kd)
                    }
                    None => u.scale(k),
                };
                left.matmul(v)
            }
        }
    }

    pub fn zero_grads(&self) -> AdapterGrads {
        AdapterGrads(self.params.zeros_like())
    }

    /// Gradients for `upstream = dL/dΔW` under `gate`.
    pub fn adapter_grads(&self, gate: &GroupGate, upstream: &Matrix) -> Result<AdapterGrads> {
        let pi = self.slot_weights(gate)?;
        let mut grads = self.zero_grads();
        self.accumulate_grads(&mut grads, &pi, upstream)?;
        Ok(grads)
    }

    /// Adds the chain-rule contribution of `upstream = dL/dΔW` (taken under
    /// slot weights `pi`) into `grads`. With `k = alpha / r` and `s = Σ π_g S_g`:
    ///
    /// ```text
    /// dU   += k · G · Vᵀ · diag(s)
    /// dV   += k · diag(s) · Uᵀ · G
    /// dS_g += π_g · k · diag(Uᵀ · G · Vᵀ)
    /// ```
    pub fn accumulate_grads(
        &self,
        grads: &mut AdapterGrads,
        pi: &[f64],
        upstream: &Matrix,
    ) -> Result<()> {
        let expected = (self.config.out_dim, self.config.in_dim);
        if upstream.shape() != expected {
            return Err(Error::InvalidArgument(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                expected.0,
                expected.1
            )));
        }
        let diag = self.diagonal(pi)?;
        match (&self.params, &mut grads.0) {
            (AdapterParams::Dense(_), AdapterParams::Dense(dw)) => {
                add_into(dw.as_mut_slice(), upstream.as_slice(), 1.0);
            }
            (
                AdapterParams::LowRank { u, v, .. },
                AdapterParams::LowRank {
                    u: du,
                    v: dv,
                    s: ds,
                },
            ) => {
                let k = self.config.scaling();
                // G·Vᵀ (m x r) and Uᵀ·G (r x n) feed all three partials.
                let g_vt = upstream.matmul(&v.transpose())?;
                let ut_g = u.transpose().matmul(upstream)?;
                match &diag {
                    Some(d) => {
                        let kd: Vec<f64> = d.iter().map(|x| k * x).collect();
                        add_into(du.as_mut_slice(), g_vt.scale_columns(&kd).as_slice(), 1.0);
                        add_into(dv.as_mut_slice(), ut_g.scale_rows(&kd).as_slice(), 1.0);
                        // diag(Uᵀ G Vᵀ)_j = Σ_i U_ij (G Vᵀ)_ij
                        let r = self.config.rank;
                        let mut core = vec![0.0; r];
                        for i in 0..u.rows() {
                            for (j, c) in core.iter_mut().enumerate() {
                                *c += u.get(i, j) * g_vt.get(i, j);
                            }
                        }
                        for (w, dsg) in pi.iter().zip(ds.iter_mut()) {
                            if *w == 0.0 {
                                continue;
                            }
                            for (o, c) in dsg.iter_mut().zip(&core) {
                                *o += w * k * c;
                            }
                        }
                    }
                    None => {
                        add_into(du.as_mut_slice(), g_vt.as_slice(), k);
                        add_into(dv.as_mut_slice(), ut_g.as_slice(), k);
                    }
                }
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "gradient buffer does not match the adapter variant".into(),
                ))
            }
        }
        Ok(())
    }

    /// One gradient-descent step, `p ← p − lr · dp`. Nothing is modified if
    /// any gradient entry or any updated value would be non-finite.
    pub fn sgd_step(&mut self, grads: &AdapterGrads, lr: f64) -> Result<()> {
        if !self.params.same_layout(&grads.0) {
            return Err(Error::InvalidArgument(
                "gradient layout does not match adapter".into(),
            ));
        }
        if let Some(name) = grads.0.first_non_finite() {
            return Err(Error::Numeric(format!("gradient for {name} is not finite")));
        }
        for ((name, p), (_, dp)) in self.params.tensors().into_iter().zip(grads.0.tensors()) {
            if p.iter().zip(dp).any(|(x, d)| !(x - lr * d).is_finite()) {
                return Err(Error::Numeric(format!("step would make {name} non-finite")));
            }
        }
        for ((_, p), (_, dp)) in self.params.tensors_mut().into_iter().zip(grads.0.tensors()) {
            for (x, d) in p.iter_mut().zip(dp) {
                *x -= lr * d;
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "{} {}x{} rank {} alpha {} groups {}",
            self.config.variant,
            self.config.out_dim,
            self.config.in_dim,
            self.config.rank,
            self.config.lora_alpha,
            self.config.num_groups
        )
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}
