use ndarray::Array2;

/// Row-wise softmax with the usual max-subtraction for stability.
pub fn softmax_rows(logits: &Array2<f32>) -> Array2<f32> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut z = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    p
}

/// Mean cross-entropy over the batch; returns (loss, dlogits).
pub fn cross_entropy(logits: &Array2<f32>, labels: &[u32]) -> (f64, Array2<f32>) {
    let (b, _k) = logits.dim();
    assert_eq!(b, labels.len());
    let mut d = softmax_rows(logits);
    let mut loss = 0.0f64;
    let inv_b = 1.0 / b as f32;
    for (i, &y) in labels.iter().enumerate() {
        let py = d[[i, y as usize]].max(1e-12);
        loss -= (py as f64).ln();
        d[[i, y as usize]] -= 1.0;
    }
    d.mapv_inplace(|v| v * inv_b);
    (loss / b as f64, d)
}

/// Number of rows whose argmax (ties to the lowest index) equals the label.
pub fn accuracy_count(logits: &Array2<f32>, labels: &[u32]) -> usize {
    let mut correct = 0;
    for (row, &y) in logits.rows().into_iter().zip(labels.iter()) {
        let mut best = f32::NEG_INFINITY;
        let mut arg = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > best {
                best = v;
                arg = j;
            }
        }
        if arg == y as usize {
            correct += 1;
        }
    }
    correct
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let logits = Array2::from_shape_vec((1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let (loss, d) = cross_entropy(&logits, &[2]);
        let p = softmax_rows(&logits);
        assert!((d[[0, 2]] - (p[[0, 2]] - 1.0)).abs() < 1e-6);
        assert!((d[[0, 0]] - p[[0, 0]]).abs() < 1e-6);
        assert!(loss > 0.0);
    }

    #[test]
    fn uniform_logits_loss_is_log_k() {
        let logits = Array2::zeros((4, 8));
        let (loss, _) = cross_entropy(&logits, &[0, 1, 2, 3]);
        assert!((loss - (8.0f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn accuracy_ties_break_to_lowest_index() {
        let logits = Array2::from_shape_vec((1, 3), vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(accuracy_count(&logits, &[0]), 1);
        assert_eq!(accuracy_count(&logits, &[1]), 0);
    }
}
