//! Cyclic Jacobi eigendecomposition for dense symmetric matrices.

/// Eigenpairs sorted by descending eigenvalue. `vectors[i]` pairs with
/// `values[i]`; every vector has its first non-negligible coordinate
/// positive.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

const MAX_SWEEPS: usize = 100;
const TOLERANCE: f64 = 1e-10;
const SIGN_EPS: f64 = 1e-12;

/// Decomposes the symmetric `n x n` matrix given in row-major order.
///
/// Ties in eigenvalue keep the order of the index of each vector's first
/// non-negligible coordinate.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut a = matrix.to_vec();
    // v holds eigenvectors as columns
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = TOLERANCE * frob.max(1.0);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off < threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, n, p, q, c, s);
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|j| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + j]).collect();
            canonical_sign(&mut col);
            (a[j * n + j], col)
        })
        .collect();
    pairs.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then_with(|| first_significant(&x.1).cmp(&first_significant(&y.1)))
    });
    let (values, vectors) = pairs.into_iter().unzip();
    SymmetricEigen { values, vectors }
}

/// Applies the Jacobi rotation `J^T A J` in place for the pair `(p, q)`.
fn rotate(a: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = c * akp - s * akq;
        a[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = c * apk - s * aqk;
        a[q * n + k] = s * apk + c * aqk;
    }
}

pub(crate) fn first_significant(v: &[f64]) -> usize {
    v.iter().position(|x| x.abs() > SIGN_EPS).unwrap_or(v.len())
}

/// Flips `v` so that its first non-negligible coordinate is positive.
pub(crate) fn canonical_sign(v: &mut [f64]) {
    if let Some(i) = v.iter().position(|x| x.abs() > SIGN_EPS) {
        if v[i] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matvec(m: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| m[i * n + j] * x[j]).sum()).collect()
    }

    #[test]
    fn diagonal_matrix() {
        let m = [1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0];
        let e = symmetric_eigen(&m, 3);
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two_line_covariance() {
        // covariance of points on y = x
        let m = [2.0, 2.0, 2.0, 2.0];
        let e = symmetric_eigen(&m, 2);
        assert!((e.values[0] - 4.0).abs() < 1e-12);
        assert!(e.values[1].abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[0][0] - h).abs() < 1e-12 && (e.vectors[0][1] - h).abs() < 1e-12);
    }

    #[test]
    fn random_symmetric_residuals_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1usize, 2, 5, 12, 30] {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let x: f64 = rng.random_range(-3.0..3.0);
                    m[i * n + j] = x;
                    m[j * n + i] = x;
                }
            }
            let e = symmetric_eigen(&m, n);
            for (lambda, vec) in e.values.iter().zip(&e.vectors) {
                let mv = matvec(&m, n, vec);
                for k in 0..n {
                    assert!((mv[k] - lambda * vec[k]).abs() < 1e-8);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = e.vectors[i].iter().zip(&e.vectors[j]).map(|(a, b)| a * b).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
