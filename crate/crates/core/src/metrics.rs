//! Ranking metrics for binary classification.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("ROC-AUC needs both classes; got {positives} positives and {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("PRC-AUC needs at least one positive label")]
    NoPositives,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(MetricError::NonFiniteScore(i)),
        None => Ok(()),
    }
}

/// Indices sorted by descending score, grouped into runs of equal scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (the normalized Mann–Whitney statistic).
///
/// ```
/// use chemberta_core::metrics::roc_auc;
/// let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
/// assert_eq!(auc, 0.75);
/// ```
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::DegenerateLabels { positives, negatives });
    }
    // Sweep from the highest score; each positive beats every negative seen
    // later, and splits credit with negatives in its own tie group.
    let mut wins = 0.0;
    let mut negatives_above = 0usize;
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i]).count();
        let neg = group.len() - pos;
        wins += pos as f64 * (negatives - negatives_above - neg) as f64 + 0.5 * (pos * neg) as f64;
        negatives_above += neg;
    }
    Ok(wins / (positives as f64 * negatives as f64))
}

/// Area under the precision-recall curve as average precision: the sum over
/// tie groups of (recall gained) × (precision after the group), with each
/// group of equal scores taken as one threshold.
///
/// ```
/// use chemberta_core::metrics::prc_auc;
/// let mut labels = vec![false; 10];
/// labels[0] = true;
/// let scores: Vec<f64> = (0..10).map(|i| 1.0 - i as f64 / 10.0).collect();
/// assert_eq!(prc_auc(&scores, &labels).unwrap(), 1.0);
/// ```
pub fn prc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check(scores, labels)?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricError::NoPositives);
    }
    let mut area = 0.0;
    let (mut tp, mut seen) = (0usize, 0usize);
    for group in tie_groups(scores) {
        let pos = group.iter().filter(|&&i| labels[i]).count();
        tp += pos;
        seen += group.len();
        if pos > 0 {
            area += (pos as f64 / positives as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(area)
}
