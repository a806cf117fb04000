use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::AnalyticsError;

/// Threshold below which a correlation is reported as significant.
pub const SIGNIFICANCE_LEVEL: f64 = 0.005;

/// Largest sample for which exact permutation p-values are offered.
pub const MAX_PERMUTATION_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Two-sided, `t = rho * sqrt((n-2)/(1-rho^2))` against Student-t with
    /// `n-2` degrees of freedom.
    #[default]
    TDistribution,
    /// Two-sided exact test over all `n!` rank permutations.
    Permutation,
}

/// 1-based ranks with ties sharing the average of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

fn t_test_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Heap's algorithm over all orderings of `ys`, counting those at least as
/// extreme as `observed`.
fn permutation_p(x_ranks: &[f64], y_ranks: &[f64], observed: f64) -> f64 {
    let n = y_ranks.len();
    let mut perm = y_ranks.to_vec();
    let mut c = vec![0usize; n];
    let tol = 1e-12;
    let mut extreme = 0u64;
    let mut total = 0u64;
    let mut visit = |p: &[f64]| {
        total += 1;
        if pearson(x_ranks, p).abs() >= observed.abs() - tol {
            extreme += 1;
        }
    };
    visit(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Spearman's rank correlation with a t-distribution p-value.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<CorrelationResult, AnalyticsError> {
    spearman_with(xs, ys, PValueMethod::TDistribution)
}

pub fn spearman_with(
    xs: &[f64],
    ys: &[f64],
    method: PValueMethod,
) -> Result<CorrelationResult, AnalyticsError> {
    if xs.len() != ys.len() {
        return Err(AnalyticsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 3 {
        return Err(AnalyticsError::TooFew { n, min: 3 });
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(AnalyticsError::Undefined("input contains NaN".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(AnalyticsError::Undefined(
            "one input is constant, rank correlation is undefined".into(),
        ));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    // identical or mirrored rankings are exactly +-1; the general formula
    // can miss by an ulp
    let n1 = (n + 1) as f64;
    let rho = if rx == ry {
        1.0
    } else if rx.iter().zip(&ry).all(|(a, b)| *a == n1 - b) {
        -1.0
    } else {
        pearson(&rx, &ry)
    };
    let p_value = match method {
        PValueMethod::TDistribution => t_test_p(rho, n),
        PValueMethod::Permutation => {
            if n > MAX_PERMUTATION_N {
                return Err(AnalyticsError::PermutationTooLarge(n));
            }
            permutation_p(&rx, &ry, rho)
        }
    };
    Ok(CorrelationResult {
        rho,
        p_value,
        n,
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Classical formula, valid without ties.
    fn rank_diff_rho(xs: &[f64], ys: &[f64]) -> f64 {
        let rx = average_ranks(xs);
        let ry = average_ranks(ys);
        let n = xs.len() as f64;
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn monotone_gives_exact_unit_rho() {
        let xs = [1.0, 2.0, 5.0, 9.0, 10.0, 11.0];
        let up = [0.1, 0.2, 3.0, 4.0, 40.0, 41.0];
        let down = [9.0, 8.0, 7.0, 1.0, 0.0, -5.0];
        assert_eq!(spearman(&xs, &up).unwrap().rho, 1.0);
        assert_eq!(spearman(&xs, &down).unwrap().rho, -1.0);
        assert_eq!(spearman(&xs, &up).unwrap().p_value, 0.0);
    }

    #[test]
    fn textbook_example() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 3.0, 2.0, 5.0, 4.0];
        let r = spearman(&xs, &ys).unwrap();
        assert!((r.rho - 0.8).abs() < 1e-12);
        assert!((rank_diff_rho(&xs, &ys) - 0.8).abs() < 1e-12);
        // t = 0.8 * sqrt(3 / 0.36) = 2.3094; two-sided p for df=3
        assert!((r.p_value - 0.104088).abs() < 1e-5, "{}", r.p_value);
        assert!(!r.significant);
    }

    #[test]
    fn ties_use_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0, 20.0]), vec![1.5, 3.5, 1.5, 5.0, 3.5]);
        // Pearson on average ranks, computed by hand:
        // rx = [1.5, 1.5, 3, 4, 5], ry = [1, 2, 3, 4.5, 4.5]
        let xs = [1.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 2.0, 3.0, 4.0, 4.0];
        let (mx, my) = (3.0, 3.0);
        let rx = [1.5, 1.5, 3.0, 4.0, 5.0];
        let ry = [1.0, 2.0, 3.0, 4.5, 4.5];
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let syy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        let expect = sxy / (sxx * syy).sqrt();
        assert!((spearman(&xs, &ys).unwrap().rho - expect).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(AnalyticsError::Undefined(_))
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0, 2.0]),
            Err(AnalyticsError::TooFew { .. })
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(AnalyticsError::LengthMismatch(3, 2))
        ));
        let big: Vec<f64> = (0..11).map(f64::from).collect();
        assert!(matches!(
            spearman_with(&big, &big, PValueMethod::Permutation),
            Err(AnalyticsError::PermutationTooLarge(11))
        ));
    }

    #[test]
    fn exact_permutation_p_values() {
        // n = 4, perfect order: only the identity and its reverse reach |rho| = 1
        let xs = [1.0, 2.0, 3.0, 4.0];
        let r = spearman_with(&xs, &xs, PValueMethod::Permutation).unwrap();
        assert!((r.p_value - 2.0 / 24.0).abs() < 1e-15);
        // n = 5, rho = 0.8: sum d^2 = 4; permutations with sum d^2 <= 4 or >= 36
        let ys = [1.0, 3.0, 2.0, 5.0, 4.0];
        let r = spearman_with(&[1.0, 2.0, 3.0, 4.0, 5.0], &ys, PValueMethod::Permutation).unwrap();
        let oracle = {
            let mut extreme = 0;
            let mut total = 0;
            let base = [1.0, 2.0, 3.0, 4.0, 5.0];
            for a in 0..5 {
                for b in 0..5 {
                    for c in 0..5 {
                        for d in 0..5 {
                            for e in 0..5 {
                                let p = [a, b, c, d, e];
                                let mut seen = [false; 5];
                                if p.iter().any(|&v| std::mem::replace(&mut seen[v], true)) {
                                    continue;
                                }
                                total += 1;
                                let perm: Vec<f64> = p.iter().map(|&v| base[v]).collect();
                                if rank_diff_rho(&base, &perm).abs() >= 0.8 - 1e-12 {
                                    extreme += 1;
                                }
                            }
                        }
                    }
                }
            }
            extreme as f64 / total as f64
        };
        assert!((r.p_value - oracle).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_maps(
            pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let Ok(base) = spearman(&xs, &ys) else { return Ok(()) };
            // strictly increasing transforms of each input
            let fx: Vec<f64> = xs.iter().map(|&x| (x / 50.0).exp() * scale + shift).collect();
            let fy: Vec<f64> = ys.iter().map(|&y| y.powi(3) + y).collect();
            let mapped = spearman(&fx, &fy).unwrap();
            prop_assert_eq!(average_ranks(&xs), average_ranks(&fx));
            prop_assert!((base.rho - mapped.rho).abs() < 1e-12);
            prop_assert!(base.rho.abs() <= 1.0);
            prop_assert!((0.0..=1.0).contains(&base.p_value));
        }

        #[test]
        fn matches_rank_difference_formula_without_ties(
            perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let xs: Vec<f64> = (0..12).map(|v| v as f64).collect();
            let ys: Vec<f64> = perm.iter().map(|&v| v as f64).collect();
            if let Ok(r) = spearman(&xs, &ys) {
                prop_assert!((r.rho - rank_diff_rho(&xs, &ys)).abs() < 1e-12);
            }
        }
    }
}
