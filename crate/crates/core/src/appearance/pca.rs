//! Principal component analysis used to shrink deep feature vectors.

use super::eigen::{canonical_sign, first_significant, symmetric_eigen};
use super::AppearanceError;

/// Mean plus `k` orthonormal principal directions, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component (zero for padded directions).
    pub variances: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Maps a reduced vector back into the input space.
    pub fn reconstruct(&self, projection: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, p) in self.components.iter().zip(projection) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += p * ci;
            }
        }
        out
    }
}

/// Target dimension `ceil(fraction * d)`, at least 1 and at most `d`.
pub fn reduced_dim(d: usize, fraction: f64) -> usize {
    // the epsilon keeps e.g. 0.1 * 250 from rounding up to 26
    let k = (fraction * d as f64 - 1e-9).ceil() as usize;
    k.clamp(1, d.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Route {
    /// Eigendecomposition of the `d x d` covariance.
    Covariance,
    /// Eigendecomposition of the `n x n` Gram matrix, for `n < d`.
    Gram,
}

/// Fits a basis with the top `ceil(fraction * d)` principal components.
///
/// When fewer directions carry variance than requested, the remaining
/// components are filled by Gram-Schmidt over the standard basis vectors
/// `e_0, e_1, ...` in order.
pub fn pca_fit(samples: &[Vec<f64>], fraction: f64) -> Result<PcaBasis, AppearanceError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AppearanceError::Fraction(fraction));
    }
    if samples.len() < 2 {
        return Err(AppearanceError::TooFewSamples(samples.len()));
    }
    let d = samples[0].len();
    let route = if samples.len() <= d {
        Route::Gram
    } else {
        Route::Covariance
    };
    fit_with(samples, reduced_dim(d, fraction), route)
}

pub(crate) fn fit_with(samples: &[Vec<f64>], k: usize, route: Route) -> Result<PcaBasis, AppearanceError> {
    let n = samples.len();
    if n < 2 {
        return Err(AppearanceError::TooFewSamples(n));
    }
    let d = samples[0].len();
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(AppearanceError::VectorDim(d, bad.len()));
    }
    if d == 0 {
        return Err(AppearanceError::VectorDim(0, 0));
    }

    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let denom = (n - 1) as f64;

    let mut pairs: Vec<(f64, Vec<f64>)> = match route {
        Route::Covariance => {
            let mut cov = vec![0.0; d * d];
            for row in &centered {
                for i in 0..d {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    for j in i..d {
                        cov[i * d + j] += ri * row[j];
                    }
                }
            }
            for i in 0..d {
                for j in i..d {
                    let v = cov[i * d + j] / denom;
                    cov[i * d + j] = v;
                    cov[j * d + i] = v;
                }
            }
            let e = symmetric_eigen(&cov, d);
            e.values.into_iter().zip(e.vectors).collect()
        }
        Route::Gram => {
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / denom;
                    gram[i * n + j] = v;
                    gram[j * n + i] = v;
                }
            }
            let e = symmetric_eigen(&gram, n);
            e.values
                .into_iter()
                .zip(e.vectors)
                .map(|(lambda, u)| {
                    // X^T u has norm sqrt(lambda * (n - 1))
                    let mut v = vec![0.0; d];
                    for (ui, row) in u.iter().zip(&centered) {
                        for (vj, xj) in v.iter_mut().zip(row) {
                            *vj += ui * xj;
                        }
                    }
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        v.iter_mut().for_each(|x| *x /= norm);
                    }
                    (lambda, v)
                })
                .collect()
        }
    };

    let max_var = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    let rank_tol = max_var * 1e-12;
    pairs.retain(|(lambda, _)| *lambda > rank_tol && *lambda > 0.0);
    pairs.truncate(k);
    for (_, v) in pairs.iter_mut() {
        canonical_sign(v);
    }
    pairs.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then_with(|| first_significant(&x.1).cmp(&first_significant(&y.1)))
    });

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for (lambda, v) in pairs {
        if let Some(u) = orthonormalize(&v, &components) {
            components.push(u);
            variances.push(lambda);
        }
    }
    // deterministic completion from the standard basis
    let mut axis = 0;
    while components.len() < k && axis < d {
        let mut e = vec![0.0; d];
        e[axis] = 1.0;
        axis += 1;
        if let Some(u) = orthonormalize(&e, &components) {
            components.push(u);
            variances.push(0.0);
        }
    }

    Ok(PcaBasis {
        mean,
        components,
        variances,
    })
}

/// Modified Gram-Schmidt step; `None` when `v` is (nearly) in the span.
fn orthonormalize(v: &[f64], basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut u = v.to_vec();
    let input_norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    // two passes keep the result orthogonal to working precision
    for _ in 0..2 {
        for b in basis {
            let dot: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
    }
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-8 * input_norm.max(f64::MIN_POSITIVE) {
        return None;
    }
    u.iter_mut().for_each(|x| *x /= norm);
    canonical_sign(&mut u);
    Some(u)
}

/// Coordinates of `v - mean` along each component.
pub fn pca_project(v: &[f64], basis: &PcaBasis) -> Result<Vec<f64>, AppearanceError> {
    if v.len() != basis.dim() {
        return Err(AppearanceError::VectorDim(v.len(), basis.dim()));
    }
    Ok(basis
        .components
        .iter()
        .map(|c| {
            c.iter()
                .zip(v.iter().zip(&basis.mean))
                .map(|(ci, (x, m))| ci * (x - m))
                .sum()
        })
        .collect())
}
