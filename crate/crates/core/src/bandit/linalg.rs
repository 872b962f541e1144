//! Dense Cholesky factorization for the small symmetric positive definite
//! Gram matrices kept per arm. Matrices are row-major `dim * dim` slices.

/// Lower-triangular factor `L` with `A = L Lᵀ`, or `None` if `A` is not
/// (numerically) positive definite.
pub(crate) fn cholesky(a: &[f64], dim: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if sum.is_nan() || sum <= 0.0 {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Some(l)
}

/// Solves `L y = v`.
pub(crate) fn forward_sub(l: &[f64], dim: usize, v: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; dim];
    for i in 0..dim {
        let mut sum = v[i];
        for k in 0..i {
            sum -= l[i * dim + k] * y[k];
        }
        y[i] = sum / l[i * dim + i];
    }
    y
}

/// Solves `Lᵀ z = y`.
pub(crate) fn backward_sub(l: &[f64], dim: usize, y: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; dim];
    for i in (0..dim).rev() {
        let mut sum = y[i];
        for k in (i + 1)..dim {
            sum -= l[k * dim + i] * z[k];
        }
        z[i] = sum / l[i * dim + i];
    }
    z
}

/// Solves `A z = v` given the factor of `A`.
pub(crate) fn solve(l: &[f64], dim: usize, v: &[f64]) -> Vec<f64> {
    backward_sub(l, dim, &forward_sub(l, dim, v))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
