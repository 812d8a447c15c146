use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shap::Explanation;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("no explanations to summarize")]
    Empty,
    #[error("{explanations} explanations but {sensitive} sensitive values")]
    LengthMismatch {
        explanations: usize,
        sensitive: usize,
    },
    #[error("explanations disagree on feature count")]
    RaggedExplanations,
    /// Group means need both groups; global impact is still returned.
    #[error("no explained rows in the {group} group; group difference undefined")]
    EmptyGroup {
        group: &'static str,
        global: GlobalImpact,
    },
}

/// Mean absolute attribution per feature and the induced ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImpact {
    pub global_impact: Vec<f64>,
    /// 1 = largest global impact; ties go to the lower feature index.
    pub rank: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub unprivileged: Vec<f64>,
    pub privileged: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceSummary {
    pub global_impact: Vec<f64>,
    pub rank: Vec<usize>,
    /// Mean attribution among unprivileged rows minus among privileged rows.
    /// Negative values favor the privileged group.
    pub group_diff: Vec<f64>,
    pub group_means: GroupMeans,
    /// Explained rows per group, `[unprivileged, privileged]`.
    pub group_counts: [usize; 2],
}

fn width(explanations: &[Explanation]) -> Result<usize, ImportanceError> {
    let m = explanations
        .first()
        .ok_or(ImportanceError::Empty)?
        .phi
        .len();
    if explanations.iter().any(|e| e.phi.len() != m) {
        return Err(ImportanceError::RaggedExplanations);
    }
    Ok(m)
}

pub fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut rank = vec![0; values.len()];
    for (pos, &j) in order.iter().enumerate() {
        rank[j] = pos + 1;
    }
    rank
}

pub fn global_impact(explanations: &[Explanation]) -> Result<GlobalImpact, ImportanceError> {
    let m = width(explanations)?;
    let n = explanations.len() as f64;
    let mut g = vec![0.0; m];
    for e in explanations {
        for (acc, p) in g.iter_mut().zip(&e.phi) {
            *acc += p.abs();
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    let rank = ranks(&g);
    Ok(GlobalImpact {
        global_impact: g,
        rank,
    })
}

pub fn importance_summary(
    explanations: &[Explanation],
    sensitive: &[u8],
) -> Result<ImportanceSummary, ImportanceError> {
    let m = width(explanations)?;
    if explanations.len() != sensitive.len() {
        return Err(ImportanceError::LengthMismatch {
            explanations: explanations.len(),
            sensitive: sensitive.len(),
        });
    }
    let global = global_impact(explanations)?;
    let mut sums = [vec![0.0; m], vec![0.0; m]];
    let mut counts = [0usize; 2];
    for (e, &a) in explanations.iter().zip(sensitive) {
        let g = usize::from(a == 1);
        counts[g] += 1;
        for (acc, p) in sums[g].iter_mut().zip(&e.phi) {
            *acc += p;
        }
    }
    for (g, name) in [(0, "unprivileged"), (1, "privileged")] {
        if counts[g] == 0 {
            return Err(ImportanceError::EmptyGroup {
                group: name,
                global,
            });
        }
    }
    let [unpriv, priv_] = sums;
    let unprivileged: Vec<f64> = unpriv.iter().map(|s| s / counts[0] as f64).collect();
    let privileged: Vec<f64> = priv_.iter().map(|s| s / counts[1] as f64).collect();
    let group_diff = unprivileged
        .iter()
        .zip(&privileged)
        .map(|(u, p)| u - p)
        .collect();
    Ok(ImportanceSummary {
        global_impact: global.global_impact,
        rank: global.rank,
        group_diff,
        group_means: GroupMeans {
            unprivileged,
            privileged,
        },
        group_counts: counts,
    })
}
