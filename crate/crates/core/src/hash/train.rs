use log::debug;
use nalgebra::DMatrix;

use super::codes::encode_with;
use super::objective::{compute_q, loss_elementwise, LossTerms, PhaseObjective};
use super::stiefel::{armijo_search, barzilai_borwein, curve_direction, project_tangent};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lle::AffinityMatrix;
use crate::pdv::PdvMatrix;

/// Hyperparameters of the hashing objective and its optimiser.
#[derive(Debug, Clone, PartialEq)]
pub struct HashConfig {
    /// code length M
    pub code_bits: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// stop once the Riemannian gradient norm falls below this fraction of
    /// its initial value
    pub theta_rel: f64,
    pub max_outer: usize,
    /// descent steps per code update
    pub inner_steps: usize,
    /// LLE neighbour count K
    pub neighbors: usize,
    pub seed: u64,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self {
            code_bits: 16,
            lambda1: 10.0,
            lambda2: 1.0,
            lambda3: 1e3,
            theta_rel: 1e-4,
            max_outer: 100,
            inner_steps: 10,
            neighbors: 10,
            seed: 42,
        }
    }
}

impl HashConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.code_bits == 0 || self.code_bits > dim {
            return Err(Error::InvalidArgument(format!(
                "code length {} must be in 1..={dim}",
                self.code_bits
            )));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.theta_rel > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta_rel must be > 0, got {}",
                self.theta_rel
            )));
        }
        if self.inner_steps == 0 {
            return Err(Error::InvalidArgument("inner_steps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStats {
    /// Loss of the final projection with its own codes.
    pub final_loss: LossTerms,
    pub outer_iterations: usize,
    pub accepted_steps: usize,
    pub initial_grad_norm: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// `XXᵀ` had fewer than M nonzero eigenvalues; the initial projection
    /// was completed with null-space eigenvectors.
    pub rank_deficient: bool,
    /// Largest `‖WᵀW − I‖_F` observed at initialisation or after any step.
    pub max_orthogonality_residual: f64,
    /// Accepted steps that increased the fixed-code objective.
    pub monotonicity_violations: usize,
    /// Per code update: the fixed-code objective (constants included) at the
    /// start of the phase and after each accepted step.
    pub phase_objectives: Vec<Vec<f64>>,
}

/// Learned projection for one neighbourhood scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HashingModel {
    projection: DMatrix<f64>,
    scale: usize,
    config: HashConfig,
    stats: TrainStats,
}

impl HashingModel {
    pub fn from_parts(
        projection: DMatrix<f64>,
        scale: usize,
        config: HashConfig,
        stats: TrainStats,
    ) -> Result<Self> {
        if projection.nrows() != crate::pdv::pdv_dim(scale)
            || projection.ncols() != config.code_bits
        {
            return Err(Error::DimensionMismatch(format!(
                "projection {}x{} does not fit side {scale} with {} bits",
                projection.nrows(),
                projection.ncols(),
                config.code_bits
            )));
        }
        let residual = linalg::orthogonality_residual(&projection);
        if residual >= 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "projection is not orthonormal (residual {residual:e})"
            )));
        }
        Ok(Self {
            projection,
            scale,
            config,
            stats,
        })
    }

    /// `D x M`, orthonormal columns.
    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn code_bits(&self) -> usize {
        self.projection.ncols()
    }

    pub fn config(&self) -> &HashConfig {
        &self.config
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }
}

/// Top-M eigenvectors of `XXᵀ`; the flag reports a rank below M.
pub fn initial_projection(x: &DMatrix<f64>, bits: usize) -> (DMatrix<f64>, bool) {
    let gram = linalg::mul_tr(x, x);
    let (values, vectors) = linalg::sorted_symmetric_eigen(&gram);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank_deficient = values[bits - 1] <= 1e-12 * top || top == 0.0;
    (vectors.columns(0, bits).into_owned(), rank_deficient)
}

fn codes_matrix(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    encode_with(w, x).expect("shapes checked").to_matrix()
}

/// Alternates code updates `B = f_s(WᵀX)` with Armijo/Barzilai–Borwein
/// curvilinear descent of the fixed-code objective on the Stiefel manifold.
pub fn train_hashing(
    x: &PdvMatrix,
    a: &AffinityMatrix,
    config: &HashConfig,
) -> Result<HashingModel> {
    let xm = x.matrix();
    let n = xm.ncols();
    config.validate(x.dim())?;
    if a.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "affinity has N = {}, PDVs have {n}",
            a.n()
        )));
    }
    if n <= config.neighbors {
        return Err(Error::InvalidArgument(format!(
            "N = {n} must exceed K = {}",
            config.neighbors
        )));
    }

    let (mut w, rank_deficient) = initial_projection(xm, config.code_bits);
    if rank_deficient {
        debug!(
            "PDV matrix has rank below {}; initial projection completed from the null space",
            config.code_bits
        );
    }
    let q = compute_q(xm, a, config);

    let mut stats = TrainStats {
        rank_deficient,
        max_orthogonality_residual: linalg::orthogonality_residual(&w),
        ..TrainStats::default()
    };
    let mut tau = 1e-3;
    let mut threshold = None;
    let mut grad_norm = f64::INFINITY;

    for outer in 0..config.max_outer {
        let b = codes_matrix(&w, xm);
        let objective = PhaseObjective::new(&q, xm, &b, config);
        let mut value = objective.value(&w);
        let mut trace = vec![objective.value_with_constants(&w)];
        let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
        let mut long_bb = true;

        for _ in 0..config.inner_steps {
            let g = objective.gradient(&w);
            grad_norm = project_tangent(&w, &g).norm();
            let limit = *threshold.get_or_insert_with(|| {
                stats.initial_grad_norm = grad_norm;
                config.theta_rel * grad_norm
            });
            if grad_norm <= limit {
                break;
            }
            let dir = curve_direction(&w, &g);
            if let Some((w_prev, dir_prev)) = &prev {
                if let Some(bb) = barzilai_borwein(w_prev, &w, dir_prev, &dir, long_bb) {
                    tau = bb;
                }
                long_bb = !long_bb;
            }
            let Some(step) = armijo_search(|m| objective.value(m), &w, value, &g, tau) else {
                break;
            };
            if step.value > value {
                stats.monotonicity_violations += 1;
            }
            prev = Some((std::mem::replace(&mut w, step.w), dir));
            value = step.value;
            tau = step.tau;
            stats.accepted_steps += 1;
            stats.max_orthogonality_residual = stats
                .max_orthogonality_residual
                .max(linalg::orthogonality_residual(&w));
            trace.push(objective.value_with_constants(&w));
        }

        grad_norm = project_tangent(&w, &objective.gradient(&w)).norm();
        stats.phase_objectives.push(trace);
        stats.outer_iterations = outer + 1;
        let limit = *threshold.get_or_insert_with(|| {
            stats.initial_grad_norm = grad_norm;
            config.theta_rel * grad_norm
        });
        debug!("outer {outer}: objective {value:.6e}, riemannian gradient {grad_norm:.3e}");
        if grad_norm <= limit {
            stats.converged = true;
            break;
        }
    }
    stats.grad_norm = grad_norm;

    let b = codes_matrix(&w, xm);
    stats.final_loss = loss_elementwise(xm, &b, &w, a, config);
    HashingModel::from_parts(w, x.scale(), config.clone(), stats)
}
