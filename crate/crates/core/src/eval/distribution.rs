use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::LabeledProfile;
use crate::corpus::HallType;
use crate::geostats::Statistic;
use crate::{Error, Result};

/// What the first component of a group key is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupBy {
    #[default]
    /// The dataset block (`math`, ..., `all`).
    Block,
    /// The QA pair's source domain, which splits the `all` block by domain.
    SourceDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub domain: String,
    pub hall_type: HallType,
    pub level: u8,
}

impl core::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(GroupBy::Block),
            "source-domain" => Ok(GroupBy::SourceDomain),
            other => Err(Error::InvalidSpec(format!(
                "unknown grouping {other:?}, expected block or source-domain"
            ))),
        }
    }
}

impl core::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}/{}/{}", self.domain, self.hall_type, self.level)
    }
}

/// Per-layer mean and population standard deviation of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub group: GroupKey,
    pub count: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Groups non-sibling profiles of `statistic` and summarizes each layer.
///
/// With `baseline_relative`, every value first has the per-layer mean of its
/// domain's baseline group subtracted, so the baseline band sits on zero.
pub fn distribution_summary(
    profiles: &[LabeledProfile],
    statistic: Statistic,
    group_by: GroupBy,
    baseline_relative: bool,
) -> Result<Vec<DistributionSummary>> {
    let mut groups: BTreeMap<GroupKey, Vec<&[f64]>> = BTreeMap::new();
    for p in profiles.iter().filter(|p| !p.is_sibling && p.profile.statistic == statistic) {
        let domain = match group_by {
            GroupBy::Block => String::from(p.block.as_str()),
            GroupBy::SourceDomain => String::from(p.source_domain.as_str()),
        };
        groups
            .entry(GroupKey {
                domain,
                hall_type: p.hall_type,
                level: p.level,
            })
            .or_default()
            .push(&p.profile.values);
    }

    let mut out: Vec<DistributionSummary> = Vec::with_capacity(groups.len());
    for (group, members) in &groups {
        let layers = members[0].len();
        if members.iter().any(|v| v.len() != layers) {
            return Err(Error::EmptyCondition(format!("{group}: inconsistent layer counts")));
        }
        let n = members.len() as f64;
        let mut mean = alloc::vec![0.0; layers];
        let mut std = alloc::vec![0.0; layers];
        for l in 0..layers {
            let mu = members.iter().map(|v| v[l]).sum::<f64>() / n;
            let var = members.iter().map(|v| (v[l] - mu) * (v[l] - mu)).sum::<f64>() / n;
            mean[l] = mu;
            std[l] = libm::sqrt(var);
        }
        out.push(DistributionSummary {
            group: group.clone(),
            count: members.len(),
            mean,
            std,
        });
    }

    if baseline_relative {
        let baselines: BTreeMap<String, Vec<f64>> = out
            .iter()
            .filter(|s| s.group.hall_type == HallType::Baseline)
            .map(|s| (s.group.domain.clone(), s.mean.clone()))
            .collect();
        for s in &mut out {
            let base = baselines.get(&s.group.domain).ok_or_else(|| {
                Error::EmptyCondition(format!("{}: no baseline group to normalize by", s.group))
            })?;
            if base.len() != s.mean.len() {
                return Err(Error::EmptyCondition(format!("{}: inconsistent layer counts", s.group)));
            }
            for (m, b) in s.mean.iter_mut().zip(base) {
                *m -= b;
            }
        }
    }
    Ok(out)
}
