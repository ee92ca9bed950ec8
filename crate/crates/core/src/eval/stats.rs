//! One-sided rank-sum test and generation error.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::signal::{TokenMatrix, CHANNELS, MAX_LEVEL};

/// Largest combined sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 12;

/// Average ranks (1-based) of `values`, ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("rank-sum test needs two non-empty samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank-sum samples must be finite"));
    }
    Ok(())
}

fn rank_sum_x(x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let all: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&all);
    (ranks[..x.len()].iter().sum(), ranks)
}

/// `P(W ≥ w)` for the rank sum `W` of `n` items drawn from ranks `1..=total`.
fn exact_upper_tail(n: usize, total: usize, w: usize) -> f64 {
    let max_sum = total * (total + 1) / 2;
    // ways[k][s]: k-subsets of the ranks seen so far with sum s
    let mut ways = vec![vec![0u64; max_sum + 1]; n + 1];
    ways[0][0] = 1;
    for r in 1..=total {
        for k in (1..=n.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                ways[k][s] += ways[k - 1][s - r];
            }
        }
    }
    let all: u64 = ways[n].iter().sum();
    let upper: u64 = ways[n][w.min(max_sum + 1)..].iter().sum();
    upper as f64 / all as f64
}

/// Exact one-sided p-value by enumeration of the null distribution.
/// Requires tie-free samples with `|x| + |y| ≤ 12`.
pub fn wilcoxon_exact(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let total = x.len() + y.len();
    if total > EXACT_MAX_N {
        return Err(Error::invalid(format!("exact rank-sum enumeration is limited to {EXACT_MAX_N} values")));
    }
    let (w, ranks) = rank_sum_x(x, y);
    if ranks.iter().any(|r| r.fract() != 0.0) {
        return Err(Error::invalid("exact rank-sum test requires tie-free samples"));
    }
    Ok(exact_upper_tail(x.len(), total, w as usize))
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn wilcoxon_normal(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let (n, m) = (x.len() as f64, y.len() as f64);
    let total = n + m;
    let (w, ranks) = rank_sum_x(x, y);
    let u = w - n * (n + 1.0) / 2.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * m / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if !(var > 0.0) {
        // every value tied: no evidence either way
        return Ok(1.0);
    }
    let z = (u - n * m / 2.0 - 0.5) / var.sqrt();
    let p = Normal::new(0.0, 1.0).expect("unit normal").sf(z);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}

/// One-sided Wilcoxon rank-sum p-value for "values of `x` tend to be larger than `y`".
///
/// Exact enumeration for small tie-free samples, normal approximation otherwise.
pub fn wilcoxon_rank_sum_one_sided(x: &[f64], y: &[f64]) -> Result<f64> {
    check(x, y)?;
    let mut all: Vec<f64> = x.iter().chain(y).copied().collect();
    all.sort_by(f64::total_cmp);
    let ties = all.windows(2).any(|w| w[0] == w[1]);
    if all.len() <= EXACT_MAX_N && !ties {
        wilcoxon_exact(x, y)
    } else {
        wilcoxon_normal(x, y)
    }
}

/// Root mean squared error over rows `prompt_len..T` of all channels,
/// as a fraction of the level range.
pub fn nrmse(synthetic: &TokenMatrix, real: &TokenMatrix, prompt_len: usize) -> Result<f64> {
    if synthetic.rows() != real.rows() {
        return Err(Error::invalid(format!(
            "shape mismatch: {}×{CHANNELS} vs {}×{CHANNELS}",
            synthetic.rows(),
            real.rows()
        )));
    }
    if prompt_len >= real.rows() {
        return Err(Error::invalid(format!(
            "prompt length {prompt_len} leaves no generated rows in {} rows",
            real.rows()
        )));
    }
    let from = prompt_len * CHANNELS;
    let a = &synthetic.as_flat()[from..];
    let b = &real.as_flat()[from..];
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(&p, &q)| (f64::from(p) - f64::from(q)).powi(2))
        .sum();
    Ok((sq / a.len() as f64).sqrt() / f64::from(MAX_LEVEL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fraction of rank assignments whose x-rank-sum is at least the observed one.
    fn brute_force(x: &[f64], y: &[f64]) -> f64 {
        let all: Vec<f64> = x.iter().chain(y).copied().collect();
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = |v: f64| sorted.iter().position(|&s| s == v).unwrap() + 1;
        let w: usize = x.iter().map(|&v| rank(v)).sum();
        let mut hit = 0usize;
        let mut count = 0usize;
        for c in (1..=all.len()).combinations(x.len()) {
            count += 1;
            if c.iter().sum::<usize>() >= w {
                hit += 1;
            }
        }
        hit as f64 / count as f64
    }

    fn distinct_sample(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let mut pool: Vec<f64> = (0..200).map(f64::from).collect();
        pool.shuffle(rng);
        let shift = rng.gen_range(-30.0..30.0);
        let x = pool[..n].iter().map(|v| v + shift).collect();
        let y = pool[n..n + m].to_vec();
        (x, y)
    }

    #[test]
    fn exact_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let (x, y) = distinct_sample(&mut rng, n, m);
            assert_eq!(wilcoxon_rank_sum_one_sided(&x, &y).unwrap(), brute_force(&x, &y));
        }
    }

    #[test]
    fn extremes() {
        // x entirely larger: only one of C(6,3) assignments is as extreme
        let p = wilcoxon_rank_sum_one_sided(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((p - 0.05).abs() < 1e-15);
        let p = wilcoxon_rank_sum_one_sided(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(p, 1.0);
        assert!(wilcoxon_rank_sum_one_sided(&[0.7], &[0.7]).unwrap() >= 0.5);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(wilcoxon_rank_sum_one_sided(&[], &[1.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(wilcoxon_rank_sum_one_sided(&[1.0], &[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn approximation_tracks_exact_at_six_plus_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (x, y) = distinct_sample(&mut rng, 6, 6);
            let e = wilcoxon_exact(&x, &y).unwrap();
            let a = wilcoxon_normal(&x, &y).unwrap();
            assert!((e - a).abs() < 0.02, "exact {e} vs normal {a}");
        }
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn ties_use_the_normal_path() {
        // 15 vs 15 accuracies with ties, as in a scenario report
        let x: Vec<f64> = (0..15).map(|i| 0.8 + 0.01 * (i % 5) as f64).collect();
        let y: Vec<f64> = (0..15).map(|i| 0.78 + 0.01 * (i % 5) as f64).collect();
        let p = wilcoxon_rank_sum_one_sided(&x, &y).unwrap();
        assert!(p > 0.0 && p < 0.5);
        assert_eq!(p, wilcoxon_normal(&x, &y).unwrap());
    }

    proptest! {
        #[test]
        fn p_value_in_unit_interval(x in prop::collection::vec(0u8..20, 1..10), y in prop::collection::vec(0u8..20, 1..10)) {
            let x: Vec<f64> = x.into_iter().map(f64::from).collect();
            let y: Vec<f64> = y.into_iter().map(f64::from).collect();
            let p = wilcoxon_rank_sum_one_sided(&x, &y).unwrap();
            prop_assert!(p > 0.0 && p <= 1.0);
        }

        #[test]
        fn shifting_x_up_never_raises_p(x in prop::collection::vec(0u8..50, 1..8), y in prop::collection::vec(0u8..50, 1..8)) {
            let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
            let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
            let up: Vec<f64> = xf.iter().map(|v| v + 100.0).collect();
            prop_assert!(wilcoxon_normal(&up, &yf).unwrap() <= wilcoxon_normal(&xf, &yf).unwrap() + 1e-12);
        }
    }

    fn matrix(rows: usize, f: impl Fn(usize) -> u16) -> TokenMatrix {
        TokenMatrix::from_flat((0..rows * CHANNELS).map(f).collect()).unwrap()
    }

    #[test]
    fn nrmse_examples() {
        let real = matrix(256, |i| (i % 700) as u16);
        assert_eq!(nrmse(&real, &real, 150).unwrap(), 0.0);
        let shifted = TokenMatrix::from_flat(
            real.as_flat()
                .iter()
                .enumerate()
                .map(|(i, &v)| if i >= 150 * CHANNELS { v + 100 } else { v })
                .collect(),
        )
        .unwrap();
        assert!((nrmse(&shifted, &real, 150).unwrap() - 0.1).abs() <= 1e-12);
        // prompt rows do not count
        let prompt_only = matrix(256, |i| if i < 150 * CHANNELS { 999 } else { (i % 700) as u16 });
        assert_eq!(nrmse(&prompt_only, &real, 150).unwrap(), 0.0);
    }

    #[test]
    fn nrmse_rejects_shape_mismatch() {
        let a = matrix(10, |_| 0);
        let b = matrix(11, |_| 0);
        assert!(matches!(nrmse(&a, &b, 2), Err(Error::InvalidArgument(_))));
        assert!(matches!(nrmse(&a, &a, 10), Err(Error::InvalidArgument(_))));
    }
}
