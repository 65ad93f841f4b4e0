//! Samples, synthetic multi-site data and stratified splitting.
//!
//! The synthetic generator draws, once per dataset, a unit label direction
//! `u_g` and a unit offset `c_g` for every group. A sample of group `g` with
//! clean label `y` at any site is then
//!
//! ```text
//! x = (2y − 1) · signal_strength · u_g + group_shift_scale · c_g + N(0, noise_sigma² I)
//! ```
//!
//! and its stored label is flipped with probability `label_noise`. Sites
//! differ through their group proportions and prevalence. Group and label
//! counts come from largest-remainder allocation, so they are exact rather
//! than sampled.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSchema {
    pub name: String,
    pub groups: Vec<String>,
}

impl AttributeSchema {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "attribute {:?} has no groups",
                self.name
            )));
        }
        for (i, g) in self.groups.iter().enumerate() {
            if self.groups[..i].contains(g) {
                return Err(Error::InvalidConfig(format!("duplicate group label {g:?}")));
            }
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub site: usize,
    pub group: usize,
    pub label: u8,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub feature_dim: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: AttributeSchema, feature_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        schema.validate()?;
        for s in &samples {
            check_sample(s, &schema, feature_dim)?;
        }
        Ok(Self {
            schema,
            feature_dim,
            samples,
        })
    }

    /// One past the largest site index present.
    pub fn num_sites(&self) -> usize {
        self.samples.iter().map(|s| s.site + 1).max().unwrap_or(0)
    }

    pub fn site_samples(&self, site: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.site == site)
    }
}

pub fn check_sample(s: &Sample, schema: &AttributeSchema, feature_dim: usize) -> Result<()> {
    if s.group >= schema.num_groups() {
        return Err(Error::InvalidArgument(format!(
            "sample {} has unknown group {} ({} groups)",
            s.id,
            s.group,
            schema.num_groups()
        )));
    }
    if s.label > 1 {
        return Err(Error::InvalidArgument(format!(
            "sample {} has label {}, expected 0 or 1",
            s.id, s.label
        )));
    }
    if s.features.len() != feature_dim {
        return Err(Error::InvalidArgument(format!(
            "sample {} has {} features, expected {feature_dim}",
            s.id,
            s.features.len()
        )));
    }
    if s.features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "sample {} has non-finite features",
            s.id
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub n_samples: usize,
    pub group_proportions: Vec<f64>,
    pub positive_rate: f64,
    #[serde(default)]
    pub label_noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub feature_dim: usize,
    pub sites: Vec<SiteSpec>,
    pub signal_strength: f64,
    pub group_shift_scale: f64,
    pub noise_sigma: f64,
    /// 0 gives every group its own label direction, 1 makes them identical.
    #[serde(default)]
    pub direction_sharing: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self, num_groups: usize) -> Result<()> {
        let bad = |field: String, why: &str| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if self.feature_dim == 0 {
            return bad("feature_dim".into(), "must be positive");
        }
        if self.sites.is_empty() {
            return bad("sites".into(), "at least one site is required");
        }
        if !(self.signal_strength.is_finite() && self.signal_strength > 0.0) {
            return bad("signal_strength".into(), "must be positive and finite");
        }
        if !(self.group_shift_scale.is_finite() && self.group_shift_scale >= 0.0) {
            return bad(
                "group_shift_scale".into(),
                "must be non-negative and finite",
            );
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return bad("noise_sigma".into(), "must be positive and finite");
        }
        if !(0.0..=1.0).contains(&self.direction_sharing) {
            return bad("direction_sharing".into(), "must be in [0, 1]");
        }
        for (i, site) in self.sites.iter().enumerate() {
            if site.n_samples == 0 {
                return bad(format!("sites[{i}].n_samples"), "must be positive");
            }
            if site.group_proportions.len() != num_groups {
                return bad(
                    format!("sites[{i}].group_proportions"),
                    "needs one entry per schema group",
                );
            }
            let total: f64 = site.group_proportions.iter().sum();
            if site
                .group_proportions
                .iter()
                .any(|p| !p.is_finite() || *p < 0.0)
                || (total - 1.0).abs() > 1e-9
            {
                return bad(
                    format!("sites[{i}].group_proportions"),
                    "must be non-negative and sum to 1",
                );
            }
            if !(site.positive_rate > 0.0 && site.positive_rate < 1.0) {
                return bad(format!("sites[{i}].positive_rate"), "must be in (0, 1)");
            }
            if !(0.0..0.5).contains(&site.label_noise) {
                return bad(format!("sites[{i}].label_noise"), "must be in [0, 0.5)");
            }
        }
        Ok(())
    }
}

/// Splits `total` into integer parts proportional to `weights` (which should
/// sum to 1). Floors first, then hands the leftover units to the largest
/// fractional parts, lower index first on ties.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .map(|q| libm::floor(q + 1e-9) as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    if assigned > total {
        // Only reachable with weights summing above 1; trim from the back.
        let mut excess = assigned - total;
        for c in counts.iter_mut().rev() {
            let cut = excess.min(*c);
            *c -= cut;
            excess -= cut;
        }
        return counts;
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = (quotas[a] - counts[a] as f64).max(0.0);
        let fb = (quotas[b] - counts[b] as f64).max(0.0);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total - assigned;
    let mut k = 0;
    while left > 0 && !order.is_empty() {
        counts[order[k % order.len()]] += 1;
        left -= 1;
        k += 1;
    }
    counts
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    if norm == 0.0 {
        return v;
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Per-group directions drawn at the start of generation.
#[derive(Debug, Clone)]
pub struct GroupGeometry {
    pub label_directions: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
}

fn draw_geometry(rng: &mut SeededRng, spec: &SyntheticSpec, num_groups: usize) -> GroupGeometry {
    let n = spec.feature_dim;
    let shared = unit(rng.normal_vec(n));
    let label_directions = (0..num_groups)
        .map(|_| {
            let own = unit(rng.normal_vec(n));
            if spec.direction_sharing >= 1.0 {
                shared.clone()
            } else {
                let a = spec.direction_sharing;
                unit(
                    shared
                        .iter()
                        .zip(&own)
                        .map(|(s, o)| a * s + (1.0 - a) * o)
                        .collect(),
                )
            }
        })
        .collect();
    let offsets = (0..num_groups).map(|_| unit(rng.normal_vec(n))).collect();
    GroupGeometry {
        label_directions,
        offsets,
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, schema: &AttributeSchema) -> Result<Dataset> {
    generate_with_geometry(spec, schema).map(|(d, _)| d)
}

/// [`generate_synthetic`] that also returns the drawn group geometry.
pub fn generate_with_geometry(
    spec: &SyntheticSpec,
    schema: &AttributeSchema,
) -> Result<(Dataset, GroupGeometry)> {
    schema.validate()?;
    let num_groups = schema.num_groups();
    spec.validate(num_groups)?;
    let mut rng = SeededRng::new(spec.seed);
    let geometry = draw_geometry(&mut rng, spec, num_groups);
    let mut samples = Vec::new();
    for (site, site_spec) in spec.sites.iter().enumerate() {
        let group_counts = largest_remainder(&site_spec.group_proportions, site_spec.n_samples);
        let rates = [1.0 - site_spec.positive_rate, site_spec.positive_rate];
        let mut slots = Vec::with_capacity(site_spec.n_samples);
        for (g, &count) in group_counts.iter().enumerate() {
            let labels = largest_remainder(&rates, count);
            slots.extend(core::iter::repeat_n((g, 0u8), labels[0]));
            slots.extend(core::iter::repeat_n((g, 1u8), labels[1]));
        }
        rng.shuffle(&mut slots);
        for (i, (g, y)) in slots.into_iter().enumerate() {
            let sign = if y == 1 { 1.0 } else { -1.0 };
            let u = &geometry.label_directions[g];
            let c = &geometry.offsets[g];
            let features: Vec<f64> = (0..spec.feature_dim)
                .map(|d| {
                    sign * spec.signal_strength * u[d]
                        + spec.group_shift_scale * c[d]
                        + spec.noise_sigma * rng.standard_normal()
                })
                .collect();
            let flip = rng.bernoulli(site_spec.label_noise);
            samples.push(Sample {
                id: format!("s{site}-{i:05}"),
                site,
                group: g,
                label: if flip { 1 - y } else { y },
                features,
            });
        }
    }
    Ok((
        Dataset::new(schema.clone(), spec.feature_dim, samples)?,
        geometry,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteSplit {
    pub site: usize,
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

/// Per-site train/val/test partition, stratified by (group, label).
///
/// Site-level counts are the largest-remainder rounding of `ratios`, and each
/// (group, label) cell is rounded so that both its own total and the site
/// totals come out exact. Within a split the original sample order is kept.
pub fn split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Vec<SiteSplit>> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0)
        || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidArgument(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut out = Vec::new();
    for site in 0..dataset.num_sites() {
        let members: Vec<usize> = (0..dataset.samples.len())
            .filter(|&i| dataset.samples[i].site == site)
            .collect();
        let targets = largest_remainder(&ratios, members.len());

        let mut cells: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
        for &i in &members {
            let s = &dataset.samples[i];
            cells.entry((s.group, s.label)).or_default().push(i);
        }
        let cell_sizes: Vec<usize> = cells.values().map(|v| v.len()).collect();
        let alloc = constrained_rounding(&cell_sizes, &ratios, &targets);

        let mut assignment = vec![usize::MAX; dataset.samples.len()];
        for (c, ((g, y), idx)) in cells.iter().enumerate() {
            let mut idx = idx.clone();
            let mut rng = SeededRng::new(derive_seed(seed, &[site as u64, *g as u64, *y as u64]));
            rng.shuffle(&mut idx);
            let mut cursor = 0;
            for (part, &count) in alloc[c].iter().enumerate() {
                for &i in &idx[cursor..cursor + count] {
                    assignment[i] = part;
                }
                cursor += count;
            }
        }
        let mut parts: [Vec<Sample>; 3] = Default::default();
        for &i in &members {
            parts[assignment[i]].push(dataset.samples[i].clone());
        }
        let [train, val, test] = parts;
        out.push(SiteSplit {
            site,
            train,
            val,
            test,
        });
    }
    Ok(out)
}

/// Integer matrix with row sums `sizes` and column sums `targets`, close to
/// `sizes[c] * ratios[s]`: floors, then largest fractional parts where both
/// the row and the column still need units, then any remaining pairing.
fn constrained_rounding(sizes: &[usize], ratios: &[f64; 3], targets: &[usize]) -> Vec<[usize; 3]> {
    let mut alloc: Vec<[usize; 3]> = Vec::with_capacity(sizes.len());
    let mut fracs = Vec::new();
    for (c, &n) in sizes.iter().enumerate() {
        let mut row = [0usize; 3];
        for s in 0..3 {
            let q = n as f64 * ratios[s];
            row[s] = libm::floor(q + 1e-9) as usize;
            fracs.push(((q - row[s] as f64).max(0.0), c, s));
        }
        // Guard against floors overshooting the row.
        while row.iter().sum::<usize>() > n {
            let s = (0..3).rev().find(|&s| row[s] > 0).unwrap();
            row[s] -= 1;
        }
        alloc.push(row);
    }
    let mut row_need: Vec<usize> = sizes
        .iter()
        .zip(&alloc)
        .map(|(n, row)| n - row.iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<isize> = (0..3)
        .map(|s| targets[s] as isize - alloc.iter().map(|r| r[s] as isize).sum::<isize>())
        .collect();
    fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, c, s) in &fracs {
        if row_need[c] > 0 && col_need[s] > 0 {
            alloc[c][s] += 1;
            row_need[c] -= 1;
            col_need[s] -= 1;
        }
    }
    for c in 0..sizes.len() {
        while row_need[c] > 0 {
            let s = (0..3)
                .max_by_key(|&s| (col_need[s], core::cmp::Reverse(s)))
                .unwrap();
            alloc[c][s] += 1;
            row_need[c] -= 1;
            col_need[s] -= 1;
        }
    }
    alloc
}
