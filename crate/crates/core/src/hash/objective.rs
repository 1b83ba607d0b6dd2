use nalgebra::{DMatrix, DVector};

use super::HashConfig;
use crate::linalg;
use crate::lle::AffinityMatrix;

/// Raw loss terms and their weighted total
/// `L = λ1·L1 + λ2·L2 + λ3·L3 + L4`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// quantisation residual
    pub l1: f64,
    /// bit imbalance
    pub l2: f64,
    /// negative bit variance
    pub l3: f64,
    /// neighbourhood reconstruction error
    pub l4: f64,
    pub total: f64,
}

impl LossTerms {
    fn weighted(l1: f64, l2: f64, l3: f64, l4: f64, cfg: &HashConfig) -> Self {
        Self {
            l1,
            l2,
            l3,
            l4,
            total: cfg.lambda1 * l1 + cfg.lambda2 * l2 + cfg.lambda3 * l3 + l4,
        }
    }
}

/// Sums the loss terms sample by sample and bit by bit. `b` may be binary or
/// any real `M x N` matrix.
pub fn loss_elementwise(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    a: &AffinityMatrix,
    cfg: &HashConfig,
) -> LossTerms {
    let (bits, n) = b.shape();
    let dim = x.nrows();
    assert_eq!(x.ncols(), n);
    assert_eq!(w.shape(), (dim, bits));
    assert_eq!(a.n(), n);

    let mut l1 = 0.0;
    for s in 0..n {
        for m in 0..bits {
            let proj: f64 = (0..dim).map(|d| w[(d, m)] * x[(d, s)]).sum();
            let r = b[(m, s)] - proj;
            l1 += r * r;
        }
    }

    let mut l2 = 0.0;
    let mut l3 = 0.0;
    for m in 0..bits {
        let imbalance: f64 = (0..n).map(|s| b[(m, s)] - 0.5).sum();
        l2 += imbalance * imbalance;
        let mean = (0..n).map(|s| b[(m, s)]).sum::<f64>() / n as f64;
        l3 -= (0..n).map(|s| (b[(m, s)] - mean).powi(2)).sum::<f64>();
    }

    let mut l4 = 0.0;
    for s in 0..n {
        let (rows, weights) = a.column(s);
        for m in 0..bits {
            let recon: f64 = rows.iter().zip(weights).map(|(&k, &v)| v * b[(m, k)]).sum();
            l4 += (b[(m, s)] - recon).powi(2);
        }
    }
    LossTerms::weighted(l1, l2, l3, l4, cfg)
}

/// Matrix form `λ1‖B − WᵀX‖² + λ2‖(B − ½)1_N‖² − λ3‖B − U‖² + ‖B − BA‖²`.
pub fn loss_matrix_form(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    a: &AffinityMatrix,
    cfg: &HashConfig,
) -> LossTerms {
    let n = b.ncols();
    let l1 = (b - linalg::tr_mul(w, x)).norm_squared();
    let row_sums = b.column_sum();
    let l2 = row_sums.map(|s| s - 0.5 * n as f64).norm_squared();
    let means = &row_sums / n as f64;
    let centered = DMatrix::from_fn(b.nrows(), n, |m, s| b[(m, s)] - means[m]);
    let l3 = -centered.norm_squared();
    let l4 = (b - a.right_mul(b)).norm_squared();
    LossTerms::weighted(l1, l2, l3, l4, cfg)
}

/// Unweighted `(L2, L3, L4)` for the relaxation `B ≈ WᵀX`, evaluated through
/// their trace expressions.
pub fn relaxed_trace_terms(
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    a: &AffinityMatrix,
) -> (f64, f64, f64) {
    let n = x.ncols() as f64;
    let bits = w.ncols() as f64;
    let sum = x.column_sum();
    let wt_sum = w.tr_mul(&sum);
    let l2 = wt_sum.norm_squared() - n * wt_sum.sum() + 0.25 * bits * n * n;

    let mean = &sum / n;
    let mut centered = x.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let proj_centered = linalg::tr_mul(w, &centered);
    let l3 = -proj_centered.norm_squared();

    let residual = x - a.right_mul(x);
    let l4 = linalg::tr_mul(w, &residual).norm_squared();
    (l2, l3, l4)
}

/// `Q = X(I−A)(I−A)ᵀXᵀ + λ1XXᵀ + λ2X1 1ᵀXᵀ − λ3(X−M̄)(X−M̄)ᵀ`, with `M̄` the
/// mean PDV replicated across columns. Independent of the binary codes.
pub fn compute_q(x: &DMatrix<f64>, a: &AffinityMatrix, cfg: &HashConfig) -> DMatrix<f64> {
    let n = x.ncols() as f64;
    let residual = x - a.right_mul(x);
    let locality = linalg::mul_tr(&residual, &residual);
    let gram = linalg::mul_tr(x, x);
    let sum = x.column_sum();
    let sum_outer = &sum * sum.transpose();
    let scatter = &gram - &sum_outer / n;

    let mut q = locality + &gram * cfg.lambda1 + &sum_outer * cfg.lambda2 - scatter * cfg.lambda3;
    for i in 0..q.nrows() {
        for j in 0..i {
            let v = 0.5 * (q[(i, j)] + q[(j, i)]);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    q
}

/// W-dependent part of the objective with the codes held fixed:
/// `tr(WᵀQW) − 2λ1·tr(BXᵀW) − λ2·N·1ᵀWᵀX1`.
#[derive(Debug, Clone)]
pub struct PhaseObjective<'a> {
    q: &'a DMatrix<f64>,
    x_bt: DMatrix<f64>,
    x_sum: DVector<f64>,
    lambda1: f64,
    lambda2: f64,
    n: f64,
    constant: f64,
}

impl<'a> PhaseObjective<'a> {
    pub fn new(q: &'a DMatrix<f64>, x: &DMatrix<f64>, b: &DMatrix<f64>, cfg: &HashConfig) -> Self {
        let n = x.ncols() as f64;
        let bits = b.nrows() as f64;
        Self {
            q,
            x_bt: linalg::mul_tr(x, b),
            x_sum: x.column_sum(),
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            n,
            constant: cfg.lambda1 * b.norm_squared() + cfg.lambda2 * 0.25 * bits * n * n,
        }
    }

    pub fn value(&self, w: &DMatrix<f64>) -> f64 {
        let qw = self.q * w;
        qw.dot(w)
            - 2.0 * self.lambda1 * self.x_bt.dot(w)
            - self.lambda2 * self.n * w.tr_mul(&self.x_sum).sum()
    }

    /// Value including the dropped constants `λ1·tr(BᵀB) + λ2·MN²/4`.
    pub fn value_with_constants(&self, w: &DMatrix<f64>) -> f64 {
        self.value(w) + self.constant
    }

    pub fn gradient(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = self.q * w * 2.0 - &self.x_bt * (2.0 * self.lambda1);
        let shift = &self.x_sum * (self.lambda2 * self.n);
        for mut c in g.column_iter_mut() {
            c -= &shift;
        }
        g
    }
}

/// `2QW − 2λ1·XBᵀ − λ2·N·X1_N 1_Mᵀ`
pub fn euclidean_gradient(
    q: &DMatrix<f64>,
    w: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DMatrix<f64>,
    cfg: &HashConfig,
) -> DMatrix<f64> {
    PhaseObjective::new(q, x, b, cfg).gradient(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lle::affinity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(l1: f64, l2: f64, l3: f64) -> HashConfig {
        HashConfig {
            lambda1: l1,
            lambda2: l2,
            lambda3: l3,
            ..HashConfig::default()
        }
    }

    fn instance(
        seed: u64,
        d: usize,
        n: usize,
        m: usize,
        k: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>, AffinityMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(d, n, |_, _| rng.random_range(-3.0..3.0));
        let w = DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let (_, a) = affinity(&x, k).unwrap();
        (x, w, a)
    }

    #[test]
    fn real_valued_codes_equal_projection_zero_quantisation() {
        let (x, w, a) = instance(1, 5, 20, 3, 3);
        let b = w.transpose() * &x;
        assert!(loss_elementwise(&x, &b, &w, &a, &cfg(10.0, 1.0, 1e3)).l1 < 1e-20);
    }

    #[test]
    fn balanced_bits_have_zero_imbalance() {
        let (x, w, a) = instance(2, 4, 20, 2, 2);
        let b = DMatrix::from_fn(2, 20, |m, n| ((n + m) % 2) as f64);
        assert_eq!(
            loss_elementwise(&x, &b, &w, &a, &cfg(1.0, 1.0, 1.0)).l2,
            0.0
        );
    }

    #[test]
    fn identical_columns_have_no_variance_and_reconstruct() {
        let (x, w, a) = instance(3, 4, 20, 3, 4);
        let b = DMatrix::from_fn(3, 20, |m, _| (m % 2) as f64);
        let l = loss_elementwise(&x, &b, &w, &a, &cfg(1.0, 1.0, 1.0));
        assert_eq!(l.l3, 0.0);
        assert!(l.l4 < 1e-24);
    }

    #[test]
    fn q_without_locality_and_weights_is_gram() {
        let (x, _, _) = instance(4, 4, 8, 2, 2);
        // all-zero affinity: one self-free entry with zero weight per column
        let zero = crate::lle::build_affinity(
            &vec![DVector::from_element(1, 0.0); 8],
            &crate::lle::knn(&x, 1).unwrap(),
            8,
        )
        .unwrap();
        let q = compute_q(&x, &zero, &cfg(0.0, 0.0, 0.0));
        assert!((q - &x * x.transpose()).norm() < 1e-10);
    }

    #[test]
    fn q_is_exactly_symmetric() {
        let (x, _, a) = instance(5, 9, 40, 3, 3);
        let q = compute_q(&x, &a, &cfg(10.0, 1.0, 1e3));
        assert_eq!((&q - q.transpose()).norm(), 0.0);
    }

    #[test]
    fn unit_q_gradient_is_twice_w() {
        let (x, w, _) = instance(6, 5, 10, 2, 2);
        let q = DMatrix::identity(5, 5);
        let b = DMatrix::from_element(2, 10, 1.0);
        let g = euclidean_gradient(&q, &w, &b, &x, &cfg(0.0, 0.0, 7.0));
        assert!((g - &w * 2.0).norm() < 1e-14);
    }

    #[test]
    fn zero_w_gradient_is_linear_term() {
        let (x, _, a) = instance(7, 5, 12, 3, 2);
        let c = cfg(10.0, 0.0, 1e3);
        let q = compute_q(&x, &a, &c);
        let b = DMatrix::from_fn(3, 12, |m, n| ((m * n) % 2) as f64);
        let g = euclidean_gradient(&q, &DMatrix::zeros(5, 3), &b, &x, &c);
        assert!((g + &x * b.transpose() * 20.0).norm() < 1e-10);
    }

    #[test]
    fn phase_objective_plus_constants_equals_relaxed_loss() {
        let (x, w, a) = instance(8, 6, 30, 3, 3);
        let c = cfg(10.0, 1.0, 1e3);
        let q = compute_q(&x, &a, &c);
        let b = encode_b(&w, &x);
        let obj = PhaseObjective::new(&q, &x, &b, &c);
        let (l2, l3, l4) = relaxed_trace_terms(&x, &w, &a);
        let l1 = (&b - w.transpose() * &x).norm_squared();
        let expected = c.lambda1 * l1 + c.lambda2 * l2 + c.lambda3 * l3 + l4;
        let got = obj.value_with_constants(&w);
        assert!(
            (got - expected).abs() <= 1e-9 * expected.abs(),
            "{got} vs {expected}"
        );
    }

    fn encode_b(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
        (w.transpose() * x).map(|v| if v >= 0.0 { 1.0 } else { 0.0 })
    }
}
