//! Cayley retraction and Armijo curvilinear search on `{W : WᵀW = I}`.

use nalgebra::DMatrix;

use crate::linalg;

pub const ARMIJO_C1: f64 = 1e-4;
pub const BACKTRACK_SHRINK: f64 = 0.5;
pub const MAX_BACKTRACKS: usize = 60;
pub const TAU_MIN: f64 = 1e-10;
pub const TAU_MAX: f64 = 1e2;
/// Largest `‖W(τ)ᵀW(τ) − I‖_F` a retraction may return; an ill-conditioned
/// low-rank solve beyond this is reported as a step that is too large.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

/// `G − W·sym(WᵀG)`
pub fn project_tangent(w: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let wtg = linalg::tr_mul(w, g);
    let sym = (&wtg + wtg.transpose()) * 0.5;
    g - w * sym
}

/// The `2M x 2M` system of the low-rank Cayley update was singular or too
/// ill-conditioned to keep the result on the manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepTooLarge;

/// The Cayley curve `W(τ) = (I + τ/2·S)⁻¹(I − τ/2·S)W` with
/// `S = GWᵀ − WGᵀ`.
///
/// `S = UVᵀ` with `U = [G, W]` and `V = [W, −G]`, so the Woodbury identity
/// gives `W(τ) = W − τU(I + τ/2·VᵀU)⁻¹VᵀW` and only a `2M x 2M` system is
/// solved per `τ`. `VᵀU` and `VᵀW` are formed once per curve.
#[derive(Debug, Clone)]
pub struct CayleyCurve {
    w: DMatrix<f64>,
    u: DMatrix<f64>,
    vtu: DMatrix<f64>,
    vtw: DMatrix<f64>,
}

impl CayleyCurve {
    pub fn new(w: &DMatrix<f64>, g: &DMatrix<f64>) -> Self {
        let (d, m) = w.shape();
        assert_eq!(g.shape(), (d, m), "gradient shape must match W");
        let mut u = DMatrix::zeros(d, 2 * m);
        u.view_mut((0, 0), (d, m)).copy_from(g);
        u.view_mut((0, m), (d, m)).copy_from(w);
        let mut v = DMatrix::zeros(d, 2 * m);
        v.view_mut((0, 0), (d, m)).copy_from(w);
        v.view_mut((0, m), (d, m)).copy_from(&(-g));
        Self {
            vtu: linalg::tr_mul(&v, &u),
            vtw: linalg::tr_mul(&v, w),
            w: w.clone(),
            u,
        }
    }

    pub fn at(&self, tau: f64) -> Result<DMatrix<f64>, StepTooLarge> {
        if tau == 0.0 {
            return Ok(self.w.clone());
        }
        let mut inner = &self.vtu * (0.5 * tau);
        for i in 0..inner.nrows() {
            inner[(i, i)] += 1.0;
        }
        let solved = inner.lu().solve(&self.vtw).ok_or(StepTooLarge)?;
        if solved.iter().any(|x| !x.is_finite()) {
            return Err(StepTooLarge);
        }
        let next = &self.w - linalg::mul(&self.u, &solved) * tau;
        if next.iter().any(|x| !x.is_finite())
            || linalg::orthogonality_residual(&next) > ORTHOGONALITY_TOLERANCE
        {
            return Err(StepTooLarge);
        }
        Ok(next)
    }
}

/// One point `W(τ)` of the [`CayleyCurve`] through `w` along `g`.
pub fn cayley_step(
    w: &DMatrix<f64>,
    g: &DMatrix<f64>,
    tau: f64,
) -> Result<DMatrix<f64>, StepTooLarge> {
    CayleyCurve::new(w, g).at(tau)
}

/// Slope of `τ ↦ f(W(τ))` at `τ = 0`: `−⟨G, SW⟩` with `SW = G − W(GᵀW)`.
pub fn curve_slope(w: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let gtw = linalg::tr_mul(g, w);
    let sw = g - linalg::mul(w, &gtw);
    -g.dot(&sw)
}

/// `SW`, the negated velocity of the Cayley curve at `τ = 0`.
pub fn curve_direction(w: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let gtw = linalg::tr_mul(g, w);
    g - linalg::mul(w, &gtw)
}

#[derive(Debug, Clone)]
pub struct AcceptedStep {
    pub w: DMatrix<f64>,
    pub value: f64,
    pub tau: f64,
    pub backtracks: usize,
}

/// Backtracks from `tau` until `f(W(τ)) ≤ f(W) + c1·τ·slope`. `None` when no
/// step passes (or the slope is not a descent slope).
pub fn armijo_search(
    f: impl Fn(&DMatrix<f64>) -> f64,
    w: &DMatrix<f64>,
    value: f64,
    g: &DMatrix<f64>,
    tau: f64,
) -> Option<AcceptedStep> {
    let slope = curve_slope(w, g);
    if !(slope < 0.0) {
        return None;
    }
    let curve = CayleyCurve::new(w, g);
    let mut tau = tau;
    for backtracks in 0..=MAX_BACKTRACKS {
        if let Ok(candidate) = curve.at(tau) {
            let next = f(&candidate);
            if next.is_finite() && next <= value + ARMIJO_C1 * tau * slope {
                return Some(AcceptedStep {
                    w: candidate,
                    value: next,
                    tau,
                    backtracks,
                });
            }
        }
        tau *= BACKTRACK_SHRINK;
    }
    None
}

/// Alternating Barzilai–Borwein step from consecutive iterates and curve
/// directions, clamped to `[TAU_MIN, TAU_MAX]`.
pub fn barzilai_borwein(
    w_prev: &DMatrix<f64>,
    w: &DMatrix<f64>,
    dir_prev: &DMatrix<f64>,
    dir: &DMatrix<f64>,
    long: bool,
) -> Option<f64> {
    let s = w - w_prev;
    let y = dir - dir_prev;
    let ss = s.norm_squared();
    let sy = s.dot(&y).abs();
    let yy = y.norm_squared();
    let tau = if long { ss / sy } else { sy / yy };
    tau.is_finite().then(|| tau.clamp(TAU_MIN, TAU_MAX))
}
