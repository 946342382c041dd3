use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Share {
    pub facet: String,
    pub percent: Decimal,
    /// Affected attribute for this facet; the run's primary attribute when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl Share {
    pub fn new(facet: &str, percent: impl Into<Decimal>) -> Self {
        Share {
            facet: facet.to_string(),
            percent: percent.into(),
            attribute: None,
        }
    }

    pub fn on(mut self, attribute: &str) -> Self {
        self.attribute = Some(attribute.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Allocation {
    /// In priority order.
    pub shares: Vec<Share>,
    pub counts: Vec<u64>,
}

impl Allocation {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Largest-remainder apportionment of `n` positions over percentage
/// shares. Leftover seats go to the largest fractional parts, earlier
/// (higher-priority) shares winning ties.
pub fn priority_split(n: u64, shares: &[Share]) -> Result<Allocation> {
    if shares.iter().any(|s| s.percent < Decimal::ZERO) {
        return Err(Error::Param("share percentages must be non-negative".into()));
    }
    let sum: Decimal = shares.iter().map(|s| s.percent).sum();
    if sum != Decimal::ONE_HUNDRED {
        return Err(Error::Param(format!(
            "share percentages sum to {sum}, expected 100"
        )));
    }
    let counts = apportion(n, &shares.iter().map(|s| s.percent).collect::<Vec<_>>());
    Ok(Allocation {
        shares: shares.to_vec(),
        counts,
    })
}

/// Largest-remainder apportionment of `n` over non-negative weights;
/// earlier weights win ties. All-zero weights yield all-zero counts.
pub fn apportion(n: u64, weights: &[Decimal]) -> Vec<u64> {
    let total: Decimal = weights.iter().sum();
    if total <= Decimal::ZERO {
        return vec![0; weights.len()];
    }
    let quotas: Vec<Decimal> = weights.iter().map(|w| Decimal::from(n) * *w / total).collect();
    let mut counts: Vec<u64> = quotas
        .iter()
        .map(|q| q.floor().to_u64().expect("quota fits in u64"))
        .collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| quotas[b].fract().cmp(&quotas[a].fract()));
    for &i in order.iter().take(n.saturating_sub(assigned) as usize) {
        counts[i] += 1;
    }
    counts
}
