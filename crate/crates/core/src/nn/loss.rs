use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Row-wise softmax, shifted by the row max for stability.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Mean categorical cross-entropy and its gradient with respect to the
/// logits, `(softmax - onehot) / rows`.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), labels.len()));
    }
    if n == 0 {
        return Err(Error::Contract("cross-entropy of an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Contract(format!("label {bad} outside [0, {k})")));
    }
    let mut grad = softmax(logits);
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        grad[[i, y]] -= 1.0;
    }
    grad /= n as f64;
    Ok((loss / n as f64, grad))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let (loss, _) = cross_entropy(&Array2::zeros((4, 3)), &[0, 1, 2, 0]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_give_zero_loss() {
        let (loss, _) = cross_entropy(&array![[30.0, 0.0, 0.0], [0.0, 0.0, 30.0]], &[0, 2]).unwrap();
        assert!(loss < 1e-9);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Array2::from_shape_simple_fn((4, 3), || rng.random_range(-2.0..2.0));
        let labels = [2, 0, 1, 1];
        let (_, grad) = cross_entropy(&logits, &labels).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            for j in 0..3 {
                let mut up = logits.clone();
                up[[i, j]] += h;
                let mut down = logits.clone();
                down[[i, j]] -= h;
                let fd = (cross_entropy(&up, &labels).unwrap().0 - cross_entropy(&down, &labels).unwrap().0) / (2.0 * h);
                let rel = (fd - grad[[i, j]]).abs() / grad[[i, j]].abs().max(fd.abs()).max(1e-12);
                assert!(rel < 1e-4, "({i},{j}) fd {fd} vs {}", grad[[i, j]]);
            }
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(cross_entropy(&Array2::zeros((1, 3)), &[3]).is_err());
    }

    #[test]
    fn softmax_rows_are_probability_vectors() {
        let p = softmax(&array![[1000.0, -1000.0, 0.0], [0.1, 0.2, 0.3]]);
        for row in p.rows() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(array![0.2, 0.4, 0.4].view()), 1);
        assert_eq!(argmax(array![0.0, 0.0, 0.0].view()), 0);
    }
}
