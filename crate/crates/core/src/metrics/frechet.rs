use super::MetricError;
use crate::linalg::sqrt_product_trace;
use crate::tensor::Matrix;
use crate::Scalar;

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats<T> {
    pub mean: Vec<T>,
    pub cov: Matrix<T>,
    pub n: usize,
}

impl<T: Scalar> GaussianStats<T> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Column means and the symmetrized `N − 1` sample covariance of an `N × D` feature matrix.
pub fn gaussian_stats<T: Scalar>(features: &Matrix<T>) -> Result<GaussianStats<T>, MetricError> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(MetricError::TooFewSamples(n));
    }
    let nf = T::from_usize(n).expect("row count fits");
    let mut mean = vec![T::zero(); d];
    for r in 0..n {
        for (m, &x) in mean.iter_mut().zip(features.row(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);

    let mut centered = features.clone();
    for r in 0..n {
        for (x, &m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    let cov = centered.matmul_tn(&centered).scale(T::one() / (nf - T::one())).symmetrized();
    Ok(GaussianStats { mean, cov, n })
}

/// `‖μa − μb‖² + Tr(Ca + Cb − 2 (Ca^½ Cb Ca^½)^½)`, clamped at zero.
pub fn frechet_distance<T: Scalar>(a: &GaussianStats<T>, b: &GaussianStats<T>) -> Result<T, MetricError> {
    if a.dim() != b.dim() {
        return Err(MetricError::DimensionMismatch(a.dim(), b.dim()));
    }
    if a.mean == b.mean && a.cov == b.cov {
        return Ok(T::zero());
    }
    let mean_term: T = a.mean.iter().zip(&b.mean).map(|(&x, &y)| (x - y) * (x - y)).sum();
    let cross = sqrt_product_trace(&a.cov, &b.cov);
    let d = mean_term + a.cov.trace() + b.cov.trace() - T::of(2.0) * cross;
    Ok(d.max(T::zero()))
}
