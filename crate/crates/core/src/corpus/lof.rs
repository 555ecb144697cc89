//! Local outlier factor over 1-D values and the per-category length filter
//! built on it.
//!
//! Follows the k-distance / reachability-distance / local-reachability-density
//! formulation. Neighbor sets include every point tied at the k-distance.
//! Duplicate points make a reachability sum of zero; their density is treated
//! as infinite and a ratio of two infinite densities counts as 1.0.

use super::{clean_text, token_count, NewsArticle};
use crate::error::{Error, Result};
use crate::parallel;
use std::collections::HashSet;

/// LOF score per input point (input order), using the absolute-value metric.
///
/// The effective neighbor count is `min(k, n - 1)`. Requires at least two
/// points and `k >= 1`.
pub fn lof_scores(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 2 {
        return Err(Error::domain("lof_scores requires at least 2 points"));
    }
    if k == 0 {
        return Err(Error::domain("lof_scores requires k >= 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("lof_scores requires finite values"));
    }
    let k_eff = k.min(n - 1);

    // Work in sorted order; distances grow monotonically away from a point.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // Neighbor window per sorted position: grow toward the nearer side until
    // k neighbors are in, then absorb every tie at the k-distance.
    let windows: Vec<(usize, usize, f64)> = parallel::map_range(n, |p| {
        let (mut lo, mut hi) = (p, p);
        let mut kdist = 0.0f64;
        for _ in 0..k_eff {
            let left = if lo > 0 { sorted[p] - sorted[lo - 1] } else { f64::INFINITY };
            let right = if hi + 1 < n { sorted[hi + 1] - sorted[p] } else { f64::INFINITY };
            if left <= right {
                lo -= 1;
                kdist = kdist.max(left);
            } else {
                hi += 1;
                kdist = kdist.max(right);
            }
        }
        while lo > 0 && sorted[p] - sorted[lo - 1] <= kdist {
            lo -= 1;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[p] <= kdist {
            hi += 1;
        }
        (lo, hi, kdist)
    });

    let lrd: Vec<f64> = parallel::map_range(n, |p| {
        let (lo, hi, _) = windows[p];
        let mut reach_sum = 0.0;
        let mut count = 0usize;
        for o in lo..=hi {
            if o == p {
                continue;
            }
            let d = (sorted[p] - sorted[o]).abs();
            reach_sum += windows[o].2.max(d);
            count += 1;
        }
        if reach_sum == 0.0 {
            f64::INFINITY
        } else {
            count as f64 / reach_sum
        }
    });

    let lof_sorted: Vec<f64> = parallel::map_range(n, |p| {
        let (lo, hi, _) = windows[p];
        let mut ratio_sum = 0.0;
        let mut count = 0usize;
        for o in lo..=hi {
            if o == p {
                continue;
            }
            ratio_sum += density_ratio(lrd[o], lrd[p]);
            count += 1;
        }
        ratio_sum / count as f64
    });

    let mut scores = vec![0.0; n];
    for (p, &i) in order.iter().enumerate() {
        scores[i] = lof_sorted[p];
    }
    Ok(scores)
}

fn density_ratio(num: f64, den: f64) -> f64 {
    if num.is_infinite() && den.is_infinite() {
        1.0
    } else {
        num / den
    }
}

/// Removes, within each source-type group, articles whose cleaned-body token
/// count scores above `threshold` under LOF. Groups with fewer than two
/// articles pass through untouched, and a group is never emptied: if every
/// member would be removed the group is kept as-is.
pub fn filter_length_outliers(articles: &[NewsArticle], k: usize, threshold: f64) -> Vec<NewsArticle> {
    let token_counts: Vec<f64> =
        parallel::map_slice(articles, |a| token_count(&clean_text(&a.body)) as f64);

    let mut removed: HashSet<usize> = HashSet::new();
    for ty in super::SourceType::ALL {
        let member_indices: Vec<usize> = articles
            .iter()
            .enumerate()
            .filter(|(_, a)| a.source_type == ty)
            .map(|(i, _)| i)
            .collect();
        if member_indices.len() < 2 {
            continue;
        }
        let group_values: Vec<f64> = member_indices.iter().map(|&i| token_counts[i]).collect();
        let scores = lof_scores(&group_values, k).expect("group has >= 2 finite values");
        let flagged: Vec<usize> = member_indices
            .iter()
            .zip(&scores)
            .filter(|(_, &s)| s > threshold)
            .map(|(&i, _)| i)
            .collect();
        if flagged.len() < member_indices.len() {
            removed.extend(flagged);
        }
    }
    articles
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, a)| a.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SourceType;

    #[test]
    fn cluster_plus_outlier() {
        let scores = lof_scores(&[1.0, 1.1, 0.9, 10.0], 2).unwrap();
        assert!(scores[3] > 1.5, "outlier score {}", scores[3]);
        // Frozen from the brute-force oracle (see tests/lof_oracle.rs):
        // lrd = [5, 20/3, 20/3, 2/17.9] gives these exact ratios.
        let expected = [4.0 / 3.0, 0.875, 0.875, 52.208333333333333];
        for (s, e) in scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-9, "score {s} vs oracle {e}");
        }
    }

    #[test]
    fn identical_points_score_one() {
        let scores = lof_scores(&[5.0; 6], 3).unwrap();
        for s in scores {
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn two_points_score_one() {
        let scores = lof_scores(&[0.0, 1.0], 1).unwrap();
        assert_eq!(scores, vec![1.0, 1.0]);
    }

    #[test]
    fn fewer_than_two_points_is_domain_error() {
        assert!(lof_scores(&[1.0], 1).is_err());
        assert!(lof_scores(&[], 1).is_err());
        assert!(lof_scores(&[1.0, 2.0], 0).is_err());
    }

    fn sized_article(id: &str, ty: SourceType, body_tokens: usize) -> NewsArticle {
        let mut a = crate::testutil::article(id, "src.com", ty, "2018-01-01");
        a.body = (0..body_tokens).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        a
    }

    #[test]
    fn removes_giant_body_within_group() {
        let mut group: Vec<NewsArticle> = (0..30)
            .map(|i| sized_article(&format!("a{i}"), SourceType::Satire, 590 + (i % 7) * 3))
            .collect();
        group.push(sized_article("huge", SourceType::Satire, 50_000));
        let kept = filter_length_outliers(&group, 20, 1.5);
        assert!(kept.iter().all(|a| a.id != "huge"));
        assert_eq!(kept.len(), 30);
    }

    #[test]
    fn identical_lengths_nothing_removed() {
        let group: Vec<NewsArticle> = (0..10)
            .map(|i| sized_article(&format!("a{i}"), SourceType::Neutral, 100))
            .collect();
        let kept = filter_length_outliers(&group, 20, 1.5);
        assert_eq!(kept.len(), 10);
    }

    #[test]
    fn single_article_group_passes_through() {
        let group = vec![sized_article("only", SourceType::Conspiracy, 100)];
        let kept = filter_length_outliers(&group, 20, 1.5);
        assert_eq!(kept.len(), 1);
    }

    #[test]
    fn survivors_are_subset_in_order() {
        let mut articles: Vec<NewsArticle> = (0..20)
            .map(|i| sized_article(&format!("a{i}"), SourceType::Propaganda, 100 + i))
            .collect();
        articles.push(sized_article("big", SourceType::Propaganda, 9000));
        let kept = filter_length_outliers(&articles, 5, 1.5);
        let input_ids: Vec<&str> = articles.iter().map(|a| a.id.as_str()).collect();
        let mut cursor = 0;
        for a in &kept {
            let pos = input_ids[cursor..].iter().position(|&id| id == a.id).expect("subset");
            cursor += pos + 1;
        }
    }
}
