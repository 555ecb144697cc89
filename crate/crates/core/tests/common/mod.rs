//! Shared helpers for integration tests: reference implementations kept
//! deliberately naive so they can serve as oracles for the optimized code.

/// Brute-force local outlier factor, O(n^2), straight from the four
/// defining formulas: k-distance, ties-inclusive neighborhood,
/// reachability distance, local reachability density, and the mean of
/// density ratios. No shared code with the library implementation.
pub fn lof_brute_force(values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 2 && k >= 1);
    let k = k.min(n - 1);

    // k-distance of each point: the k-th smallest distance to another point.
    let kdist: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (values[i] - values[j]).abs())
                .collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();

    // Neighborhood: every other point within k-distance (ties included).
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && (values[i] - values[j]).abs() <= kdist[i])
                .collect()
        })
        .collect();

    // Local reachability density.
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let sum: f64 = neighbors[i]
                .iter()
                .map(|&j| kdist[j].max((values[i] - values[j]).abs()))
                .sum();
            if sum == 0.0 {
                f64::INFINITY
            } else {
                neighbors[i].len() as f64 / sum
            }
        })
        .collect();

    // LOF: mean of neighbor-to-self density ratios, with inf/inf := 1.
    (0..n)
        .map(|i| {
            let total: f64 = neighbors[i]
                .iter()
                .map(|&j| {
                    if lrd[j].is_infinite() && lrd[i].is_infinite() {
                        1.0
                    } else {
                        lrd[j] / lrd[i]
                    }
                })
                .sum();
            total / neighbors[i].len() as f64
        })
        .collect()
}

/// Compare two LOF score vectors entry-wise: equal if both infinite,
/// otherwise within `tol`.
pub fn lof_scores_match(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(&x, &y)| {
            (x.is_infinite() && y.is_infinite() && x.signum() == y.signum())
                || (x - y).abs() <= tol
        })
}
