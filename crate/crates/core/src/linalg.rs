//! Symmetric eigendecomposition (cyclic Jacobi) and PSD matrix square roots.

use crate::tensor::Matrix;
use crate::Scalar;

const MAX_SWEEPS: usize = 64;

/// Eigenvalues below this are treated as zero when taking PSD square roots.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// Eigenpairs of a symmetric matrix: `a = vectors · diag(values) · vectorsᵀ`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// Column `i` is the unit eigenvector of `values[i]`.
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps over every off-diagonal pair `(p, q)` in row order, annihilating each with a
/// plane rotation, until the off-diagonal Frobenius mass falls below machine epsilon
/// relative to the whole matrix. Only the symmetric part of `a` is used.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> SymmetricEigen<T> {
    assert_eq!(a.rows(), a.cols(), "eigendecomposition needs a square matrix");
    let n = a.rows();
    let mut a = a.symmetrized();
    let mut v = Matrix::identity(n);
    let two = T::of(2.0);

    let frob = a.as_slice().iter().map(|&x| x * x).sum::<T>().sqrt();
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    off += a[(p, q)] * a[(p, q)];
                }
            }
        }
        if off.sqrt() <= T::epsilon() * frob {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    SymmetricEigen { values, vectors }
}

/// `V · diag(f(λ)) · Vᵀ` for a symmetric matrix.
pub fn spectral_map<T: Scalar>(a: &Matrix<T>, f: impl Fn(T) -> T) -> Matrix<T> {
    let eig = symmetric_eigen(a);
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        let w = f(lambda);
        if w == T::zero() {
            continue;
        }
        for i in 0..n {
            let vik = eig.vectors[(i, k)] * w;
            for j in 0..n {
                out[(i, j)] += vik * eig.vectors[(j, k)];
            }
        }
    }
    out.symmetrized()
}

fn clamped_sqrt<T: Scalar>(lambda: T) -> T {
    if lambda < T::of(EIGEN_CLAMP) {
        T::zero()
    } else {
        lambda.sqrt()
    }
}

/// Symmetric PSD square root; eigenvalues below [`EIGEN_CLAMP`] become zero.
pub fn psd_sqrt<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    spectral_map(a, clamped_sqrt)
}

/// `Tr((A^½ B A^½)^½)` for symmetric PSD `A`, `B`.
pub fn sqrt_product_trace<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let ra = psd_sqrt(a);
    let inner = ra.matmul(b).matmul(&ra).symmetrized();
    symmetric_eigen(&inner).values.into_iter().map(clamped_sqrt).sum()
}
