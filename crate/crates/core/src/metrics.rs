//! Ranking metrics for scored link candidates.

use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[bool], op: &'static str) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: format!("{} scores", scores.len()),
            rhs: format!("{} labels", labels.len()),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Eval(format!("{op}: scores contain NaN")));
    }
    Ok(())
}

/// Average precision: precision at each positive's rank, averaged over the
/// positives. Candidates are ranked by descending score with a stable sort,
/// so equal scores keep their input order.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels, "average_precision")?;
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(Error::Eval(
            "average_precision: no positive labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (k, idx) in order.iter().enumerate() {
        if labels[*idx] {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

/// Area under the ROC curve via the rank-sum formulation; ties contribute
/// half through midranks.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels, "auc_roc")?;
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Eval(
            "auc_roc: needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    // Midranks: every member of a tie group takes the group's average
    // 1-based rank.
    let mut rank = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            rank[order[k]] = mid;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = labels
        .iter()
        .zip(&rank)
        .filter(|(l, _)| **l)
        .map(|(_, r)| r)
        .sum();
    let p = positives as f64;
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}
