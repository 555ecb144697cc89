//! Paired significance statistics with a self-contained Student-t CDF.
//!
//! The two-tailed p-value comes from the identity
//! `p = I_{ν/(ν+t²)}(ν/2, 1/2)` where `I` is the regularized incomplete
//! beta function, evaluated by a Lentz continued fraction with a Lanczos
//! log-gamma — no statistics dependency needed.

use crate::{Error, Result};

/// Result of a paired t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed p-value.
    pub p: f64,
}

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 over the
/// arguments used here.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued-fraction core of the incomplete beta function (modified
/// Lentz algorithm).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b) for a, b > 0 and
/// x ∈ [0, 1].
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // Use the expansion on whichever side converges fast.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-tailed Student-t p-value for statistic `t` with `df` degrees of
/// freedom.
pub fn t_two_tailed_p(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    regularized_incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t))
}

fn paired_differences(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::domain("paired test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::domain(
            "differences have zero variance; the paired test is degenerate",
        ));
    }
    Ok((d, mean, sd))
}

/// Paired t-test over aligned score vectors:
/// t = mean(a−b) / (sd(a−b)/√n), df = n−1, two-tailed p.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    let (d, mean, sd) = paired_differences(a, b)?;
    let n = d.len() as f64;
    let t = mean / (sd / n.sqrt());
    let df = d.len() - 1;
    Ok(TTest {
        t,
        df,
        p: t_two_tailed_p(t, df),
    })
}

/// Paired-design Cohen's d: mean(a−b) / sd(a−b), sd using n−1.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    let (_, mean, sd) = paired_differences(a, b)?;
    Ok(mean / sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [f64; 5] = [44.0, 45.0, 46.0, 47.0, 48.0];
    const B: [f64; 5] = [46.0, 47.0, 49.0, 48.0, 50.0];

    #[test]
    fn worked_example_t_and_p() {
        let r = paired_t_test(&A, &B).unwrap();
        assert!((r.t - -6.324555320336759).abs() < 1e-12, "t = {}", r.t);
        assert_eq!(r.df, 4);
        // Frozen from two independent numeric integrations of the t
        // density (Simpson on the tail and on the beta integrand),
        // which agree to 4e-14.
        assert!((r.p - 0.0031982021523354).abs() < 1e-10, "p = {}", r.p);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        assert!(matches!(paired_t_test(&A, &A), Err(Error::Domain(_))));
        assert!(matches!(cohens_d(&A, &A), Err(Error::Domain(_))));
    }

    #[test]
    fn swapping_sides_negates_t_keeps_p() {
        let ab = paired_t_test(&A, &B).unwrap();
        let ba = paired_t_test(&B, &A).unwrap();
        assert_eq!(ab.t, -ba.t);
        assert_eq!(ab.p, ba.p);
    }

    #[test]
    fn cohens_d_worked_example() {
        let d = cohens_d(&A, &B).unwrap();
        assert!((d - -2.8284271247461903).abs() < 1e-12, "d = {d}");
    }

    #[test]
    fn cohens_d_zero_mean() {
        // Differences [1, -1, 1, -1]: mean 0, sd 2/√3.
        let a = [1.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(cohens_d(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn t_equals_d_times_sqrt_n() {
        let r = paired_t_test(&A, &B).unwrap();
        let d = cohens_d(&A, &B).unwrap();
        assert!((r.t - d * 5.0f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn incomplete_beta_sanity() {
        // I_x(1, 1) = x.
        for &x in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            assert!((regularized_incomplete_beta(1.0, 1.0, x) - x).abs() < 1e-12);
        }
        // Symmetry point of the arcsine distribution.
        assert!((regularized_incomplete_beta(0.5, 0.5, 0.5) - 0.5).abs() < 1e-12);
        // Complement identity.
        let v = regularized_incomplete_beta(2.5, 1.5, 0.3);
        let w = regularized_incomplete_beta(1.5, 2.5, 0.7);
        assert!((v + w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn p_is_monotone_in_t_magnitude() {
        for &df in &[1usize, 2, 4, 10, 30] {
            let mut prev = t_two_tailed_p(0.0, df);
            assert!((prev - 1.0).abs() < 1e-12);
            for step in 1..=20 {
                let t = step as f64 * 0.25;
                let p = t_two_tailed_p(t, df);
                assert!(p < prev, "p not decreasing at t={t}, df={df}");
                prev = p;
            }
        }
    }

    #[test]
    fn p_symmetric_in_t_sign() {
        for &df in &[1usize, 4, 12] {
            for step in 0..10 {
                let t = step as f64 * 0.5;
                assert_eq!(t_two_tailed_p(t, df), t_two_tailed_p(-t, df));
            }
        }
    }
}
