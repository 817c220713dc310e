use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHUNK_ROWS: usize = 4096;

/// Principal components of a data matrix (covariance, not correlation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    pub mean: Vec<f64>,
    /// Eigenvalues of the sample covariance, descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the `k`-th component.
    pub components: Array2<f64>,
    pub explained_variance_fraction: Vec<f64>,
}

impl PcaResult {
    /// Smallest number of leading components whose fractions reach `target`.
    pub fn components_for(&self, target: f64) -> usize {
        let mut acc = 0.0;
        for (i, f) in self.explained_variance_fraction.iter().enumerate() {
            acc += f;
            if acc >= target {
                return i + 1;
            }
        }
        self.explained_variance_fraction.len()
    }

    /// Coordinates of the centered rows in the component basis.
    pub fn scores(&self, matrix: ArrayView2<f64>) -> Array2<f64> {
        let mean = Array1::from(self.mean.clone());
        (&matrix - &mean).dot(&self.components)
    }
}

fn column_means(matrix: ArrayView2<f64>) -> Array1<f64> {
    let n = matrix.nrows() as f64;
    let sums = matrix
        .axis_chunks_iter(Axis(0), CHUNK_ROWS)
        .into_par_iter()
        .map(|chunk| chunk.sum_axis(Axis(0)))
        .reduce(|| Array1::zeros(matrix.ncols()), |a, b| a + b);
    sums / n
}

/// Sample covariance (`n - 1` denominator), accumulated over row chunks.
pub fn covariance(matrix: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (n, d) = matrix.dim();
    if n < 2 {
        return Err(Error::domain(format!("covariance needs at least 2 rows, got {n}")));
    }
    if let Some(((r, c), _)) = matrix.indexed_iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::data(format!("non-finite value at row {r}, column {c}")));
    }
    let mean = column_means(matrix);
    let scatter = matrix
        .axis_chunks_iter(Axis(0), CHUNK_ROWS)
        .into_par_iter()
        .map(|chunk| {
            let centered = &chunk - &mean;
            centered.t().dot(&centered)
        })
        .reduce(|| Array2::zeros((d, d)), |a, b| a + b);
    Ok((mean, scatter / (n - 1) as f64))
}

/// Eigendecomposition of the sample covariance. Components are ordered by
/// eigenvalue descending; each is signed so that its largest-magnitude
/// coordinate is positive.
pub fn pca(matrix: ArrayView2<f64>) -> Result<PcaResult> {
    let (mean, cov) = covariance(matrix)?;
    let d = cov.ncols();
    let sym = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(Error::numeric("PCA input has zero variance"));
    }
    let mut components = Array2::<f64>::zeros((d, d));
    for (dst, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = v.iter().copied().fold(0.0_f64, |best, x| {
            if x.abs() > best.abs() {
                x
            } else {
                best
            }
        });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components[[i, dst]] = sign * v[i];
        }
    }
    Ok(PcaResult {
        mean: mean.to_vec(),
        explained_variance_fraction: eigenvalues.iter().map(|l| l / total).collect(),
        eigenvalues,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn correlated_columns() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [5.0, 5.0]];
        let p = pca(x.view()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.components[[0, 0]] - h).abs() < 1e-12);
        assert!((p.components[[1, 0]] - h).abs() < 1e-12);
        assert!((p.explained_variance_fraction[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_simple_fn((60_000, 3), || StandardNormal.sample(&mut rng));
        let p = pca(x.view()).unwrap();
        for f in &p.explained_variance_fraction {
            assert!((f - 1.0 / 3.0).abs() < 0.01, "{f}");
        }
    }

    /// Eigenvalues of a symmetric 3x3 matrix from the trigonometric solution
    /// of its characteristic cubic.
    fn cubic_eigenvalues(a: [[f64; 3]; 3]) -> [f64; 3] {
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let mut b = a;
        for (i, row) in b.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
            - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
            + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        [l1, 3.0 * q - l1 - l3, l3]
    }

    #[test]
    fn matches_cubic_oracle() {
        let x = array![
            [2.0, 0.5, 1.0],
            [1.0, 1.5, -1.0],
            [0.0, 2.0, 0.5],
            [3.0, -1.0, 2.0],
            [1.5, 0.0, 0.0],
            [-1.0, 1.0, 1.0]
        ];
        let p = pca(x.view()).unwrap();
        let (_, cov) = covariance(x.view()).unwrap();
        let a = [
            [cov[[0, 0]], cov[[0, 1]], cov[[0, 2]]],
            [cov[[1, 0]], cov[[1, 1]], cov[[1, 2]]],
            [cov[[2, 0]], cov[[2, 1]], cov[[2, 2]]],
        ];
        let expect = cubic_eigenvalues(a);
        for (got, want) in p.eigenvalues.iter().zip(expect) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        // A v = lambda v for each component
        for k in 0..3 {
            let v = p.components.column(k);
            let av = cov.dot(&v);
            for i in 0..3 {
                assert!((av[i] - p.eigenvalues[k] * v[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(pca(array![[1.0, 2.0]].view()).is_err());
        assert!(pca(array![[1.0, 2.0], [1.0, 2.0]].view()).is_err());
        assert!(pca(array![[1.0, f64::NAN], [1.0, 2.0]].view()).is_err());
    }
}
