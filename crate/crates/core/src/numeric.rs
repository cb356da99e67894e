//! Small numeric helpers shared across modules: pairwise (tree) reductions,
//! graded-lexicographic monomial enumeration, and seed mixing.

/// Pairwise (tree) summation. Bounds rounding error growth to O(log n) and is
/// independent of thread scheduling since each call is sequential.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise dot product, same reduction tree as [`pairwise_sum`].
pub fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const LEAF: usize = 64;
    if a.len() <= LEAF {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// Population mean and standard deviation in one stable two-pass sweep.
pub fn population_mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (mean, (pairwise_sum(&sq) / n).sqrt())
}

/// All exponent vectors over `n` variables with total degree at most `p_max`,
/// in graded lexicographic order: ascending total degree, and within a degree
/// the leading exponents descend, e.g. for n = 2:
/// `(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...`.
pub fn monomials_grlex(n: usize, p_max: u32) -> Vec<Vec<u32>> {
    fn fill(out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>, remaining: u32, slots: usize) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(out, prefix, remaining - e, slots - 1);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 0..=p_max {
        fill(&mut out, &mut Vec::with_capacity(n), degree, n);
    }
    out
}

/// SplitMix64 finalizer; decorrelates consecutive integers into seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit combination of a master seed with index coordinates, used to
/// derive independent per-trial RNG seeds.
pub fn mix_seed(master: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix64(master);
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p.wrapping_add(0x517c_c1b7_2722_0a95)));
    }
    acc
}

/// Least-squares slope of y against x (both already transformed, e.g. logs).
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Round to `digits` significant decimal digits. Loss values are compared
/// after this rounding so λ-ties resolve identically across platforms.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (x * factor).round() / factor
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-10);
    }

    #[test]
    fn grlex_order_for_two_variables() {
        let m = monomials_grlex(2, 2);
        let expect: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(m, expect);
    }

    #[test]
    fn grlex_count_matches_binomial() {
        // #monomials of total degree <= p in n variables is C(p + n, n).
        assert_eq!(monomials_grlex(3, 6).len(), 84);
        assert_eq!(monomials_grlex(2, 6).len(), 28);
        assert_eq!(monomials_grlex(1, 8).len(), 9);
    }

    #[test]
    fn mix_seed_differs_per_coordinate() {
        let a = mix_seed(1, &[0, 0, 0]);
        let b = mix_seed(1, &[0, 0, 1]);
        let c = mix_seed(2, &[0, 0, 0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, mix_seed(1, &[0, 0, 0]));
    }

    #[test]
    fn round_sig_stabilizes_near_ties() {
        assert_eq!(round_sig(0.123456789012345, 12), round_sig(0.123456789012349, 12));
        assert_eq!(round_sig(0.0, 12), 0.0);
    }
}
