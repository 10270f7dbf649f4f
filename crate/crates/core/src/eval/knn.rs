use crate::error::{Error, Result};

/// Gallery indices ordered by (distance, index).
pub fn neighbor_order(dist_row: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..dist_row.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| dist_row[a as usize].total_cmp(&dist_row[b as usize]).then(a.cmp(&b)));
    order
}

/// Majority label among the `k` nearest gallery points.
///
/// Distance ties go to the lower gallery index. A vote tie goes to the tied
/// label whose voters have the smaller sum of neighbor ranks (0 = nearest),
/// then to the smaller label id. Only the order of `dist_row` matters, so the
/// prediction is unchanged by any strictly increasing transform of it.
pub fn knn_predict(dist_row: &[f64], gallery_labels: &[usize], k: usize) -> Result<usize> {
    if dist_row.len() != gallery_labels.len() {
        return Err(Error::DimensionMismatch { expected: gallery_labels.len(), found: dist_row.len() });
    }
    if k == 0 || k > dist_row.len() {
        return Err(Error::KOutOfRange { k, max: dist_row.len() });
    }
    let classes = gallery_labels.iter().max().map_or(0, |&m| m + 1);
    let order = neighbor_order(dist_row);
    Ok(predict_many(&order, gallery_labels, classes, &[k])[0])
}

/// Predictions for every `k` in `ks` (ascending) from one neighbor order.
pub(crate) fn predict_many(order: &[u32], labels: &[usize], classes: usize, ks: &[usize]) -> Vec<usize> {
    debug_assert!(ks.windows(2).all(|w| w[0] <= w[1]));
    let mut votes = vec![0usize; classes];
    let mut rank_sum = vec![0usize; classes];
    let mut out = Vec::with_capacity(ks.len());
    let mut taken = 0;
    for &k in ks {
        while taken < k {
            let label = labels[order[taken] as usize];
            votes[label] += 1;
            rank_sum[label] += taken;
            taken += 1;
        }
        let mut best = 0;
        for c in 1..classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && rank_sum[c] < rank_sum[best]) {
                best = c;
            }
        }
        out.push(best);
    }
    out
}
