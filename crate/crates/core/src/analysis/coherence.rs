use crate::error::{param_err, Result};
use crate::sampler::PatternStack;

/// Worst-case normalized column correlation of an M×N² pattern matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceReport {
    pub mu: f64,
    pub welch_lower: f64,
    pub rows: usize,
    pub cols: usize,
    /// Column pair (i < j) attaining μ; the first in scan order.
    pub argmax: (usize, usize),
}

impl CoherenceReport {
    pub fn summary(&self) -> String {
        format!(
            "mu={} welch={} M={} cols={}",
            self.mu, self.welch_lower, self.rows, self.cols
        )
    }
}

/// `√((cols − rows) / (rows·(cols − 1)))`, zero once rows ≥ cols.
pub fn welch_bound(rows: usize, cols: usize) -> f64 {
    if rows >= cols || cols < 2 {
        return 0.0;
    }
    (((cols - rows) as f64) / ((rows * (cols - 1)) as f64)).sqrt()
}

/// Columns of the pattern matrix packed as bits (1 for +1), `words` u64 each.
fn pack_columns(stack: &PatternStack) -> (Vec<u64>, usize) {
    let (m, cols) = (stack.m(), stack.n() * stack.n());
    let words = m.div_ceil(64);
    let mut packed = vec![0u64; cols * words];
    for row in 0..m {
        let (w, bit) = (row / 64, row % 64);
        for (col, &e) in stack.pattern(row).iter().enumerate() {
            if e > 0 {
                packed[col * words + w] |= 1u64 << bit;
            }
        }
    }
    (packed, words)
}

/// Mutual coherence with unit-normalized columns.
///
/// For ±1 columns of length M, `⟨φᵢ, φⱼ⟩ / M = 1 − 2·hamming(i, j) / M`, so
/// every pair costs a handful of XOR/popcount word operations.
pub fn mutual_coherence(stack: &PatternStack) -> Result<CoherenceReport> {
    let (rows, cols) = (stack.m(), stack.n() * stack.n());
    if cols < 2 {
        return Err(param_err!("coherence needs at least two columns, got {cols}"));
    }
    let (packed, words) = pack_columns(stack);
    let mut best_dev = -1i64;
    let mut argmax = (0, 1);
    for i in 0..cols {
        let ci = &packed[i * words..(i + 1) * words];
        for j in i + 1..cols {
            let cj = &packed[j * words..(j + 1) * words];
            let ham: u32 = ci.iter().zip(cj).map(|(a, b)| (a ^ b).count_ones()).sum();
            let dev = (rows as i64 - 2 * ham as i64).abs();
            if dev > best_dev {
                best_dev = dev;
                argmax = (i, j);
                if dev == rows as i64 {
                    break;
                }
            }
        }
        if best_dev == rows as i64 {
            break;
        }
    }
    Ok(CoherenceReport {
        mu: best_dev as f64 / rows as f64,
        welch_lower: welch_bound(rows, cols),
        rows,
        cols,
        argmax,
    })
}

/// Mutual coherence of an arbitrary real `rows × cols` matrix (row-major).
pub fn matrix_coherence(rows: usize, cols: usize, data: &[f64]) -> Result<CoherenceReport> {
    if data.len() != rows * cols {
        return Err(crate::error::dim_err!(
            "{rows}×{cols} matrix needs {} values, got {}",
            rows * cols,
            data.len()
        ));
    }
    if cols < 2 {
        return Err(param_err!("coherence needs at least two columns, got {cols}"));
    }
    let mut unit = vec![0.0; rows * cols];
    for j in 0..cols {
        let norm = (0..rows).map(|r| data[r * cols + j].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(param_err!("column {j} is all zero"));
        }
        for r in 0..rows {
            unit[j * rows + r] = data[r * cols + j] / norm;
        }
    }
    let mut mu = -1.0;
    let mut argmax = (0, 1);
    for i in 0..cols {
        for j in i + 1..cols {
            let ip: f64 = unit[i * rows..(i + 1) * rows]
                .iter()
                .zip(&unit[j * rows..(j + 1) * rows])
                .map(|(a, b)| a * b)
                .sum();
            if ip.abs() > mu {
                mu = ip.abs();
                argmax = (i, j);
            }
        }
    }
    Ok(CoherenceReport {
        mu: mu.min(1.0),
        welch_lower: welch_bound(rows, cols),
        rows,
        cols,
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense floating-point oracle: normalize columns, take all inner products.
    fn dense_mu(stack: &PatternStack) -> f64 {
        let (m, cols) = (stack.m(), stack.n() * stack.n());
        let col = |j: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..m).map(|r| f64::from(stack.pattern(r)[j])).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        };
        let all: Vec<Vec<f64>> = (0..cols).map(col).collect();
        let mut mu: f64 = 0.0;
        for i in 0..cols {
            for j in i + 1..cols {
                mu = mu.max(all[i].iter().zip(&all[j]).map(|(a, b)| a * b).sum::<f64>().abs());
            }
        }
        mu
    }

    #[test]
    fn orthogonal_and_identical_columns() {
        // rows [1, 1] and [1, -1] as a 2×4 matrix whose first two columns are orthogonal
        let s = PatternStack::from_signs(2, 2, vec![1, 1, 1, 1, 1, -1, 1, -1]).unwrap();
        let r = mutual_coherence(&s).unwrap();
        assert_eq!(r.mu, 1.0);
        let hadamard =
            PatternStack::from_signs(4, 2, vec![1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, -1, 1]).unwrap();
        assert_eq!(mutual_coherence(&hadamard).unwrap().mu, 0.0);
        let single = PatternStack::from_signs(3, 1, vec![1, -1, 1]).unwrap();
        assert!(mutual_coherence(&single).is_err());
    }

    #[test]
    fn general_matrix_cases() {
        assert_eq!(matrix_coherence(2, 2, &[1.0, 1.0, 1.0, -1.0]).unwrap().mu, 0.0);
        let r = matrix_coherence(2, 3, &[1.0, 2.0, 1.0, 0.5, 3.0, 0.5]).unwrap();
        assert!((r.mu - 1.0).abs() < 1e-15);
        assert_eq!(r.argmax, (0, 2));
        assert!(matrix_coherence(2, 2, &[0.0, 1.0, 0.0, 1.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = PatternStack::random(12, 3, &mut rng);
        let dense: Vec<f64> = s.entries().iter().map(|&e| f64::from(e)).collect();
        assert!((matrix_coherence(12, 9, &dense).unwrap().mu - mutual_coherence(&s).unwrap().mu).abs() < 1e-12);
    }

    #[test]
    fn welch_value() {
        assert!((welch_bound(410, 4096) - 0.0469).abs() <= 1e-4);
        assert_eq!(welch_bound(10, 10), 0.0);
    }

    #[test]
    fn matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, n) in [(3, 4), (70, 5), (130, 3), (64, 6)] {
            let s = PatternStack::random(m, n, &mut rng);
            let r = mutual_coherence(&s).unwrap();
            assert!((r.mu - dense_mu(&s)).abs() <= 1e-12, "{m}×{n}");
            assert!(r.mu > r.welch_lower && r.mu <= 1.0);
        }
    }

    #[test]
    fn summary_line() {
        let s = PatternStack::from_signs(4, 2, vec![1, 1, 1, 1, 1, -1, 1, -1, 1, 1, -1, -1, 1, -1, -1, 1]).unwrap();
        assert_eq!(mutual_coherence(&s).unwrap().summary(), "mu=0 welch=0 M=4 cols=4");
    }

    proptest! {
        #[test]
        fn invariant_under_column_sign_flips_and_permutations(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, n) = (9, 4);
            let s = PatternStack::random(m, n, &mut rng);
            let cols = n * n;
            let flips: Vec<i8> = (0..cols).map(|_| if rng.gen() { 1 } else { -1 }).collect();
            let mut perm: Vec<usize> = (0..cols).collect();
            for i in (1..cols).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let mut entries = Vec::with_capacity(m * cols);
            for r in 0..m {
                let row = s.pattern(r);
                entries.extend(perm.iter().map(|&j| row[j] * flips[j]));
            }
            let t = PatternStack::from_signs(m, n, entries).unwrap();
            prop_assert_eq!(mutual_coherence(&s).unwrap().mu, mutual_coherence(&t).unwrap().mu);
        }
    }
}
