use super::report::EvalReport;
use crate::error::{Error, Result};

/// Mean rank of each method over datasets. `scores[d][m]` is method `m`'s
/// accuracy on dataset `d`; higher is better, rank 1 is best and tied
/// methods share the average of the ranks they span.
pub fn mean_rank_table(scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = scores.first() else {
        return Err(Error::Empty);
    };
    let methods = first.len();
    let mut total = vec![0.0; methods];
    for row in scores {
        if row.len() != methods {
            return Err(Error::MismatchedReports(format!("{} scores where {methods} were expected", row.len())));
        }
        let mut order: Vec<usize> = (0..methods).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        let mut i = 0;
        while i < methods {
            let mut j = i + 1;
            while j < methods && row[order[j]] == row[order[i]] {
                j += 1;
            }
            // positions i..j hold ranks i+1..=j
            let shared = (i + 1 + j) as f64 / 2.0;
            for &m in &order[i..j] {
                total[m] += shared;
            }
            i = j;
        }
    }
    Ok(total.into_iter().map(|t| t / scores.len() as f64).collect())
}

/// Mean rank of every method at `k` across reports, one report per dataset.
/// Each report must cover the same set of methods at `k`.
pub fn mean_rank(reports: &[EvalReport], k: usize) -> Result<Vec<(String, f64)>> {
    let Some(first) = reports.first() else {
        return Err(Error::Empty);
    };
    let methods = first.methods();
    let mut scores = Vec::with_capacity(reports.len());
    for r in reports {
        let mut theirs = r.methods();
        let mut ours = methods.clone();
        theirs.sort();
        ours.sort();
        if theirs != ours {
            return Err(Error::MismatchedReports(format!("{} covers methods {theirs:?}", r.dataset())));
        }
        let row = methods
            .iter()
            .map(|m| {
                r.mean(m, k)
                    .ok_or_else(|| Error::MismatchedReports(format!("{} has no {m} result at k={k}", r.dataset())))
            })
            .collect::<Result<Vec<f64>>>()?;
        scores.push(row);
    }
    let ranks = mean_rank_table(&scores)?;
    Ok(methods.into_iter().zip(ranks).collect())
}
