//! Order-fixed summation.
//!
//! Every reduction in the crate goes through these helpers so that the
//! association order depends only on the shape of the data, never on how
//! work was scheduled across threads.

use num_complex::Complex64;

/// Pairwise (binary-tree) sum in index order.
pub fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    match xs.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn pairwise_sum_f64(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum_f64(a) + pairwise_sum_f64(b)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_association() {
        let xs: Vec<Complex64> = (0..7).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        // ((x0 + (x1 + x2)) + ((x3 + x4) + (x5 + x6)))
        let expected = (xs[0] + (xs[1] + xs[2])) + ((xs[3] + xs[4]) + (xs[5] + xs[6]));
        assert_eq!(pairwise_sum(&xs), expected);
        assert_eq!(pairwise_sum(&[]), Complex64::new(0.0, 0.0));
        assert_eq!(pairwise_sum_f64(&[1.0, 2.0, 3.0]), 6.0);
    }
}
