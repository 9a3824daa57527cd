//! Evaluation statistics.

use crate::error::{Error, Result};

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Area under the ROC curve when higher scores mean "positive".
///
/// Equals the probability that a random positive outscores a random
/// negative, with ties counted as one half (Mann-Whitney U via midranks).
pub fn auroc(positive: &[f64], negative: &[f64]) -> Result<f64> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::invalid(
            "AUROC needs at least one score in each group",
        ));
    }
    if positive.iter().chain(negative).any(|s| s.is_nan()) {
        return Err(Error::invalid("AUROC scores contain NaN"));
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks are 1-based; a tie group shares its mean rank
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges. Bin `k` is `[edges[k], edges[k+1])`, the
    /// last bin is closed.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width bin edges spanning every finite value of all `groups`.
pub fn shared_edges(groups: &[&[f64]], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let finite = groups
        .iter()
        .flat_map(|g| g.iter())
        .filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let (lo, hi) = if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let w = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + k as f64 * w).collect();
    edges.push(hi);
    Ok(edges)
}

/// Counts `values` into the bins of `edges`. Values outside the range,
/// including infinities, are clamped into the first or last bin so the
/// counts always sum to `values.len()`.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2
        || edges
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::invalid(
            "histogram edges must be strictly ascending, at least two",
        ));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("histogram values contain NaN"));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &v in values {
        let k = edges[1..bins].partition_point(|&e| e <= v);
        counts[k] += 1;
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
    })
}

/// Value at fraction `q ∈ [0, 1]` of the sorted scores, by linear
/// interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("percentile needs values and q in [0, 1]"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairwise(p: &[f64], n: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in p {
            for b in n {
                s += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (p.len() * n.len()) as f64
    }

    #[test]
    fn auroc_matches_pairwise_count() {
        let p = [3.0, 1.0, 2.0, 2.0, 5.0];
        let n = [2.0, 0.0, 1.0, 4.0];
        assert!((auroc(&p, &n).unwrap() - pairwise(&p, &n)).abs() < 1e-15);
        assert_eq!(auroc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.0], &[1.0]).unwrap(), 0.0);
        assert_eq!(auroc(&[1.0, 1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(auroc(&[f64::NEG_INFINITY], &[-1e300]).unwrap(), 0.0);
        assert!(auroc(&[], &[1.0]).is_err());
    }

    #[test]
    fn histogram_conserves_counts() {
        let a = [-3.0, -1.0, 0.0, 0.5, 2.0];
        let b = [1.0, f64::NEG_INFINITY, 7.0];
        let e = shared_edges(&[&a, &b], 4).unwrap();
        assert_eq!(e.first(), Some(&-3.0));
        assert_eq!(e.last(), Some(&7.0));
        let h = histogram(&a, &e).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), a.len());
        let h = histogram(&b, &e).unwrap();
        assert_eq!(h.counts, vec![1, 1, 0, 1]);
        assert_eq!(shared_edges(&[&[2.0]], 2).unwrap(), vec![1.5, 2.0, 2.5]);
        assert!(histogram(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn accuracy_and_percentile() {
        assert_eq!(accuracy(&[1, 2, 3, 0], &[1, 2, 0, 0]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(percentile(&[0.0, 10.0], 0.05).unwrap(), 0.5);
    }
}
