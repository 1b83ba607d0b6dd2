//! Principal component compression of concatenated histogram features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PcaTarget {
    /// Smallest dimension whose cumulative explained variance reaches the
    /// fraction.
    Energy(f64),
    Dim(usize),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::Energy(0.99)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    mean: DVector<f64>,
    /// `retained_dim x input_dim`, orthonormal rows
    components: DMatrix<f64>,
    explained_variance_ratio: Vec<f64>,
    warning: Option<String>,
}

impl PcaBasis {
    pub fn from_parts(
        mean: DVector<f64>,
        components: DMatrix<f64>,
        explained_variance_ratio: Vec<f64>,
    ) -> Result<Self> {
        if components.ncols() != mean.len() || components.nrows() != explained_variance_ratio.len()
        {
            return Err(Error::DimensionMismatch(format!(
                "PCA mean {} / components {}x{} / ratios {}",
                mean.len(),
                components.nrows(),
                components.ncols(),
                explained_variance_ratio.len()
            )));
        }
        Ok(Self {
            mean,
            components,
            explained_variance_ratio,
            warning: None,
        })
    }

    pub fn with_warning(mut self, warning: String) -> Self {
        self.warning = Some(warning);
        self
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn retained_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}-dim feature for a {}-dim PCA basis",
                x.len(),
                self.input_dim()
            )));
        }
        let centered = DVector::from_column_slice(x) - &self.mean;
        Ok((&self.components * centered).as_slice().to_vec())
    }

    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let y = DVector::from_column_slice(y);
        (self.components.tr_mul(&y) + &self.mean)
            .as_slice()
            .to_vec()
    }
}

/// Fits on the rows of `features` (`samples x dim`).
pub fn fit_pca(features: &DMatrix<f64>, target: PcaTarget) -> Result<PcaBasis> {
    let (n, dim) = features.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA needs at least 2 samples, got {n}"
        )));
    }
    match target {
        PcaTarget::Energy(e) if !(e > 0.0 && e <= 1.0) => {
            return Err(Error::InvalidArgument(format!(
                "PCA energy must be in (0, 1], got {e}"
            )))
        }
        PcaTarget::Dim(0) => {
            return Err(Error::InvalidArgument("PCA dimension must be >= 1".into()))
        }
        _ => {}
    }
    let mean = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }

    // Eigenvectors of the scatter matrix, computed in whichever of the
    // sample or feature space is smaller.
    let (values, axes) = if dim <= n {
        let scatter = linalg::tr_mul(&centered, &centered);
        linalg::sorted_symmetric_eigen(&scatter)
    } else {
        let gram = linalg::mul_tr(&centered, &centered);
        let (values, vectors) = linalg::sorted_symmetric_eigen(&gram);
        let axes = linalg::tr_mul(&centered, &vectors);
        (values, axes)
    };
    let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let cap = (n - 1).min(dim);

    if !(total > 0.0) {
        let mut components = DMatrix::zeros(1, dim);
        components[(0, 0)] = 1.0;
        log::warn!("PCA input has zero variance; keeping one arbitrary axis");
        return Ok(PcaBasis {
            mean,
            components,
            explained_variance_ratio: vec![0.0],
            warning: Some("all training features are identical".into()),
        });
    }

    let ratios: Vec<f64> = values.iter().map(|v| v / total).collect();
    let retained = match target {
        PcaTarget::Dim(d) => d.min(cap),
        PcaTarget::Energy(e) => {
            let mut cumulative = 0.0;
            let mut d = cap;
            for (i, r) in ratios.iter().enumerate().take(cap) {
                cumulative += r;
                if cumulative >= e - 1e-12 {
                    d = i + 1;
                    break;
                }
            }
            d
        }
    }
    .max(1);

    let mut basis = DMatrix::zeros(dim, retained);
    for i in 0..retained {
        let col = axes.column(i);
        let norm = col.norm();
        if norm > 0.0 {
            basis.set_column(i, &(col / norm));
        }
    }
    // Re-orthonormalise; the gram route loses a little orthogonality.
    let qr = basis.clone().qr();
    let mut q = qr.q();
    for i in 0..retained {
        if q.column(i).dot(&basis.column(i)) < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    Ok(PcaBasis {
        mean,
        components: q.transpose(),
        explained_variance_ratio: ratios[..retained].to_vec(),
        warning: None,
    })
}
