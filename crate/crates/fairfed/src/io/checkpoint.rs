//! Binary adapter checkpoints.
//!
//! Little-endian layout:
//!
//! | field            | type        |
//! |------------------|-------------|
//! | magic `FFLA`     | 4 bytes     |
//! | version (1)      | u32         |
//! | variant code     | u32         |
//! | m, n, r, groups  | 4 × u32     |
//! | lora_alpha       | f64         |
//! | payload          | f64 values  |
//!
//! The payload is `U` (m × r) then `V` (r × n), row-major, then each stored
//! singular-value vector in group order: `groups` vectors for fairlora, one
//! for svd_lora, none for lora. A dense adapter stores only `W` (m × n).
//! The singular-value init scheme is not stored; it has no effect after
//! initialization.

use std::fs;
use std::path::Path;

use fairfed_core::adapter::{AdapterConfig, AdapterParams, FairLoraState, SInit, Variant};
use fairfed_core::linalg::Matrix;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"FFLA";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 6 + 8;

fn dim(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value)
        .map_err(|_| CliError::runtime(format!("{what} = {value} does not fit in u32")))
}

pub fn encode(state: &FairLoraState) -> Result<Vec<u8>> {
    let c = &state.config;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * state.params.num_values());
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        c.variant.code(),
        dim(c.out_dim, "m")?,
        dim(c.in_dim, "n")?,
        dim(c.rank, "r")?,
        dim(c.num_groups, "groups")?,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&c.lora_alpha.to_le_bytes());
    for (_, values) in state.params.tensors() {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| {
            CliError::config(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice has length N"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    fn values(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count).map(|_| self.f64()).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let data = self.values(rows * cols)?;
        Matrix::from_vec(rows, cols, data).map_err(|e| CliError::config(format!("checkpoint: {e}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<FairLoraState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take::<4>()? != MAGIC {
        return Err(CliError::config("not an adapter checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CliError::config(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let code = r.u32()?;
    let variant = Variant::from_code(code)
        .ok_or_else(|| CliError::config(format!("unknown variant code {code}")))?;
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let rank = r.u32()? as usize;
    let num_groups = r.u32()? as usize;
    let lora_alpha = r.f64()?;
    let config = AdapterConfig {
        variant,
        rank,
        lora_alpha,
        out_dim: m,
        in_dim: n,
        num_groups,
        s_init: SInit::default(),
    };
    config
        .validate()
        .map_err(|e| CliError::config(format!("checkpoint header: {e}")))?;
    let params = if variant == Variant::Dense {
        AdapterParams::Dense(r.matrix(m, n)?)
    } else {
        let u = r.matrix(m, rank)?;
        let v = r.matrix(rank, n)?;
        let s = (0..config.s_slots())
            .map(|_| r.values(rank))
            .collect::<Result<Vec<_>>>()?;
        AdapterParams::LowRank { u, v, s }
    };
    if r.pos != bytes.len() {
        return Err(CliError::config(format!(
            "checkpoint has {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    FairLoraState::from_params(config, params)
        .map_err(|e| CliError::config(format!("checkpoint: {e}")))
}

pub fn save(state: &FairLoraState, path: &Path) -> Result<()> {
    fs::write(path, encode(state)?).map_err(|e| CliError::write(path, e))
}

pub fn load(path: &Path) -> Result<FairLoraState> {
    let bytes = fs::read(path).map_err(|e| CliError::read(path, e))?;
    decode(&bytes)
}
