//! Fréchet distance between Gaussian fits of two feature sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::backends::BackendError;
use crate::imaging::RasterImage;

/// Diagonal regularization added to every covariance estimate.
pub const COVARIANCE_EPSILON: f64 = 1e-6;
/// Tolerance for the symmetry check and for clamping tiny negative
/// eigenvalues, relative to `max(1, scale)`.
pub const PSD_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix has a negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("a feature set needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("feature vectors must be non-empty and of equal length")]
    Ragged,
    #[error("feature set contains a non-finite value")]
    NonFinite,
}

/// `n` feature vectors of dimension `d`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    matrix: DMatrix<f64>,
}

impl FeatureSet {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        if rows.len() < 2 {
            return Err(LinalgError::TooFewVectors(rows.len()));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(LinalgError::Ragged);
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self {
            matrix: DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]),
        })
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.matrix.row_mean().transpose()
    }

    /// Sample covariance with `1/(n-1)` normalization plus `eps * I`.
    pub fn covariance(&self, eps: f64) -> DMatrix<f64> {
        let n = self.len() as f64;
        let mean = self.matrix.row_mean();
        let mut centered = self.matrix.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let mut cov = centered.transpose() * &centered / (n - 1.0);
        for i in 0..cov.nrows() {
            cov[(i, i)] += eps;
        }
        cov
    }
}

/// Square root of a symmetric positive semi-definite matrix via
/// eigendecomposition, `V sqrt(L) V^T`.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare(m.nrows(), m.ncols()));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > PSD_TOLERANCE * scale {
        return Err(LinalgError::Asymmetric(asym));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let tol = PSD_TOLERANCE * scale;
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -tol {
            return Err(LinalgError::NegativeEigenvalue(*v));
        }
        *v = v.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 sqrt(S_a^1/2 S_b S_a^1/2))`.
pub fn fid(a: &FeatureSet, b: &FeatureSet) -> Result<f64, LinalgError> {
    if a.dimension() != b.dimension() {
        return Err(LinalgError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let diff = a.mean() - b.mean();
    let cov_a = a.covariance(COVARIANCE_EPSILON);
    let cov_b = b.covariance(COVARIANCE_EPSILON);
    let root_a = matrix_sqrt_psd(&cov_a)?;
    let inner = &root_a * &cov_b * &root_a;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross = matrix_sqrt_psd(&inner)?;
    let value = diff.norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    Ok(value.max(0.0))
}

/// Maps an image to a fixed-length feature vector.
pub trait EmbedderBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, image: &RasterImage) -> Result<Vec<f64>, BackendError>;
}

/// Embeds every image and checks the declared dimension.
pub fn embed_all(
    embedder: &dyn EmbedderBackend,
    images: &[RasterImage],
) -> Result<Vec<Vec<f64>>, BackendError> {
    images
        .iter()
        .map(|img| {
            let v = embedder.embed(img)?;
            if v.len() != embedder.dimension() {
                return Err(BackendError::Protocol {
                    backend: embedder.name().to_string(),
                    message: format!("expected {} features, got {}", embedder.dimension(), v.len()),
                });
            }
            Ok(v)
        })
        .collect()
}
