use super::tape::{log_softmax, softmax_into};
use super::ModelError;
use crate::tensor::Matrix;
use crate::Scalar;

/// Masked, length-normalized cross-entropy and its gradient with respect to `logits`.
///
/// `loss = −(1/N) Σ mᵢ · log softmax(logitsᵢ)[targetᵢ]` with `N = Σ mᵢ`.
pub fn xent_loss<T: Scalar>(logits: &Matrix<T>, targets: &[usize], mask: &[u8]) -> Result<(T, Matrix<T>), ModelError> {
    if targets.len() != logits.rows() || mask.len() != logits.rows() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} logit rows, {} targets, {} mask entries",
            logits.rows(),
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= logits.cols()) {
        return Err(ModelError::ShapeMismatch(format!("target {bad} outside {} classes", logits.cols())));
    }
    let n: usize = mask.iter().map(|&m| usize::from(m != 0)).sum();
    if n == 0 {
        return Err(ModelError::AllMasked);
    }
    let inv_n = T::one() / T::from_usize(n).expect("count fits");
    let mut loss = T::zero();
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (r, (&target, &m)) in targets.iter().zip(mask).enumerate() {
        if m == 0 {
            continue;
        }
        let row = logits.row(r);
        loss -= log_softmax(row)[target];
        let g = grad.row_mut(r);
        softmax_into(row, g);
        g[target] -= T::one();
        g.iter_mut().for_each(|x| *x *= inv_n);
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_vocab() {
        let (loss, _) = xent_loss(&Matrix::<f64>::zeros(1, 10), &[3], &[1]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_margin_gives_near_zero_loss() {
        let mut logits = Matrix::<f64>::zeros(1, 6);
        logits[(0, 2)] = 50.0;
        assert!(xent_loss(&logits, &[2], &[1]).unwrap().0 < 1e-6);
    }

    #[test]
    fn fully_masked_is_an_error() {
        assert_eq!(xent_loss(&Matrix::<f64>::zeros(2, 5), &[1, 1], &[0, 0]), Err(ModelError::AllMasked));
    }

    #[test]
    fn masked_rows_contribute_nothing() {
        let logits = Matrix::from_rows(&[vec![0.3, -1.0, 2.0], vec![5.0, 1.0, 0.0]]);
        let (loss, grad) = xent_loss(&logits, &[2, 1], &[1, 0]).unwrap();
        let (alone, _) = xent_loss(&Matrix::from_rows(&[vec![0.3, -1.0, 2.0]]), &[2], &[1]).unwrap();
        assert_eq!(loss, alone);
        assert!(grad.row(1).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = Matrix::from_rows(&[vec![0.3f64, -1.0, 2.0, 0.1], vec![1.0, 1.5, -0.5, 0.0], vec![0.0, 0.0, 0.2, 0.9]]);
        let targets = [2, 0, 3];
        let mask = [1, 1, 0];
        let (_, grad) = xent_loss(&logits, &targets, &mask).unwrap();
        let h = 1e-6;
        for k in 0..logits.as_slice().len() {
            let mut p = logits.clone();
            p.as_mut_slice()[k] += h;
            let mut m = logits.clone();
            m.as_mut_slice()[k] -= h;
            let fd = (xent_loss(&p, &targets, &mask).unwrap().0 - xent_loss(&m, &targets, &mask).unwrap().0) / (2.0 * h);
            assert!((fd - grad.as_slice()[k]).abs() < 1e-8);
        }
    }
}
