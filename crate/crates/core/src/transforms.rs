//! Output-space warping applied to objective values before surrogate fits.

use serde::{Deserialize, Serialize};

use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Log,
    Copula,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TransformError {
    #[error("cannot transform an empty target vector")]
    Empty,
    #[error("targets must be finite")]
    NonFinite,
}

/// Everything needed to map a transformed value back to the raw scale.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformState {
    Identity,
    /// `z = ln(y - min_y + delta)`.
    Log { min_y: f64, delta: f64 },
    /// Distinct raw values (ascending) with their gaussianized scores.
    Copula { sorted_pairs: Vec<(f64, f64)> },
}

impl TransformState {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformState::Identity => TransformKind::Identity,
            TransformState::Log { .. } => TransformKind::Log,
            TransformState::Copula { .. } => TransformKind::Copula,
        }
    }

    /// Maps a transformed value back to the raw objective scale.
    pub fn invert(&self, z: f64) -> f64 {
        match self {
            TransformState::Identity => z,
            TransformState::Log { min_y, delta } => z.exp() + min_y - delta,
            TransformState::Copula { sorted_pairs } => interpolate(sorted_pairs, z),
        }
    }
}

fn interpolate(pairs: &[(f64, f64)], z: f64) -> f64 {
    let (first, last) = (pairs[0], pairs[pairs.len() - 1]);
    if z <= first.1 {
        return first.0;
    }
    if z >= last.1 {
        return last.0;
    }
    // first index whose z exceeds the query; 1 <= hi < len
    let hi = pairs.partition_point(|&(_, pz)| pz <= z);
    let (y0, z0) = pairs[hi - 1];
    let (y1, z1) = pairs[hi];
    y0 + (y1 - y0) * (z - z0) / (z1 - z0)
}

/// 1-based ranks with ties receiving their average rank.
pub fn average_ranks(y: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut ranks = vec![0.0; y.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && y[order[end]] == y[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn apply(kind: TransformKind, y: &[f64]) -> Result<(Vec<f64>, TransformState), TransformError> {
    if y.is_empty() {
        return Err(TransformError::Empty);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(TransformError::NonFinite);
    }
    match kind {
        TransformKind::Identity => Ok((y.to_vec(), TransformState::Identity)),
        TransformKind::Log => {
            let min_y = y.iter().copied().fold(f64::INFINITY, f64::min);
            let max_y = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let delta = f64::max(1e-6, 1e-4 * (max_y - min_y));
            let z = y.iter().map(|v| (v - min_y + delta).ln()).collect();
            Ok((z, TransformState::Log { min_y, delta }))
        }
        TransformKind::Copula => {
            let n = y.len() as f64;
            let z: Vec<f64> = average_ranks(y)
                .into_iter()
                .map(|r| normal::quantile((r - 0.5) / n))
                .collect();
            let mut pairs: Vec<(f64, f64)> = y.iter().copied().zip(z.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            pairs.dedup_by(|a, b| a.0 == b.0);
            Ok((
                z,
                TransformState::Copula {
                    sorted_pairs: pairs,
                },
            ))
        }
    }
}
