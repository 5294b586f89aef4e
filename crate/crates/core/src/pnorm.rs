//! Perturbation normalization.
//!
//! A record's statistic is z-scored against the same statistic computed on
//! `k` copies of the record whose answer was shifted by small offsets. The
//! base record is not part of the reference set, and the spread is the
//! population (divide-by-`k`) standard deviation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::geostats::LayerStatProfile;
use crate::{Error, Result};

/// Spread below which the sibling set is treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// `(base - mean(siblings)) / std(siblings)`.
///
/// With a degenerate sibling set the result is 0 if the base sits on the
/// siblings' mean and an error otherwise.
pub fn perturbation_normalize(base: f64, siblings: &[f64]) -> Result<f64> {
    let k = siblings.len();
    if k < 2 {
        return Err(Error::InvalidSpec(format!("need at least 2 siblings, got {k}")));
    }
    if !base.is_finite() || siblings.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let kf = k as f64;
    let mean = siblings.iter().sum::<f64>() / kf;
    let var = siblings.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / kf;
    let sd = libm::sqrt(var);
    let dev = base - mean;
    if sd < DEGENERATE_TOL {
        return if dev.abs() < DEGENERATE_TOL {
            Ok(0.0)
        } else {
            Err(Error::DegenerateSiblings { deviation: dev })
        };
    }
    Ok(dev / sd)
}

/// A base profile with one sibling profile per perturbation offset.
#[derive(Debug, Clone)]
pub struct PerturbationGroup {
    pub base: LayerStatProfile,
    pub siblings: Vec<LayerStatProfile>,
    pub offsets: Vec<i64>,
}

impl PerturbationGroup {
    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Error::InvalidGroup(self.base.record_id.clone(), why);
        if self.siblings.len() < 2 {
            return Err(bad(format!("{} sibling(s), need at least 2", self.siblings.len())));
        }
        if self.siblings.len() != self.offsets.len() {
            return Err(bad(format!(
                "{} siblings but {} offsets",
                self.siblings.len(),
                self.offsets.len()
            )));
        }
        if self.base.statistic.is_normalized() {
            return Err(bad(format!("{} is already normalized", self.base.statistic)));
        }
        for s in &self.siblings {
            if s.statistic != self.base.statistic {
                return Err(bad(format!("sibling {} has statistic {}", s.record_id, s.statistic)));
            }
            if s.num_layers() != self.base.num_layers() {
                return Err(bad(format!(
                    "sibling {} has {} layers, base has {}",
                    s.record_id,
                    s.num_layers(),
                    self.base.num_layers()
                )));
            }
        }
        Ok(())
    }
}

/// Applies [`perturbation_normalize`] at every layer. The result carries the
/// `-Norm` statistic tag and the union of the base and sibling flags.
pub fn normalize_profile(group: &PerturbationGroup) -> Result<LayerStatProfile> {
    group.validate()?;
    let layers = group.base.num_layers();
    let mut values = Vec::with_capacity(layers);
    let mut flags = Vec::with_capacity(layers);
    let mut sib = Vec::with_capacity(group.siblings.len());
    for l in 0..layers {
        sib.clear();
        sib.extend(group.siblings.iter().map(|s| s.values[l]));
        let z = perturbation_normalize(group.base.values[l], &sib).map_err(|e| match e {
            Error::DegenerateSiblings { .. } => Error::DegenerateVariance {
                record: group.base.record_id.clone(),
                layer: l,
            },
            other => other.at_layer(l),
        })?;
        values.push(z);
        flags.push(
            group
                .siblings
                .iter()
                .fold(group.base.flags[l], |acc, s| acc.union(s.flags[l])),
        );
    }
    Ok(LayerStatProfile {
        record_id: group.base.record_id.clone(),
        statistic: group.base.statistic.normalized(),
        values,
        flags,
    })
}
