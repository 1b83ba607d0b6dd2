//! Fast invariant battery run by the `selftest` command.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codebook::fit_codebook_packed;
use crate::hash::stiefel::{cayley_step, project_tangent};
use crate::hash::{
    compute_q, encode_with, loss_elementwise, loss_matrix_form, relaxed_trace_terms, HashConfig,
    PhaseObjective,
};
use crate::linalg::orthogonality_residual;
use crate::lle::affinity;

#[derive(Debug, Clone, Copy, Default)]
pub struct SelftestOptions {
    /// Adds an error to the analytic gradient; the finite-difference check
    /// must then fail.
    pub perturb_gradient: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

struct Instance {
    x: DMatrix<f64>,
    w: DMatrix<f64>,
    b: DMatrix<f64>,
    a: crate::lle::AffinityMatrix,
    cfg: HashConfig,
}

fn instance(rng: &mut ChaCha8Rng, d: usize, n: usize, m: usize, k: usize) -> Instance {
    let x = DMatrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0));
    let w = DMatrix::from_fn(d, m, |_, _| rng.random_range(-1.0..1.0))
        .qr()
        .q();
    let b = encode_with(&w, &x).expect("shapes agree").to_matrix();
    let (_, a) = affinity(&x, k).expect("enough samples");
    let cfg = HashConfig {
        code_bits: m,
        neighbors: k,
        ..HashConfig::default()
    };
    Instance { x, w, b, a, cfg }
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

fn loss_forms(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let p = instance(rng, 8, 60, 4, 3);
        let e = loss_elementwise(&p.x, &p.b, &p.w, &p.a, &p.cfg);
        let m = loss_matrix_form(&p.x, &p.b, &p.w, &p.a, &p.cfg);
        for (u, v) in [
            (e.l1, m.l1),
            (e.l2, m.l2),
            (e.l3, m.l3),
            (e.l4, m.l4),
            (e.total, m.total),
        ] {
            worst = worst.max(rel(u, v));
        }
    }
    check(
        "loss forms agree",
        worst < 1e-10,
        format!("max relative difference {worst:.2e}"),
    )
}

fn relaxation(rng: &mut ChaCha8Rng) -> CheckResult {
    let p = instance(rng, 7, 50, 3, 4);
    let relaxed = p.w.transpose() * &p.x;
    let e = loss_elementwise(&p.x, &relaxed, &p.w, &p.a, &p.cfg);
    let (l2, l3, l4) = relaxed_trace_terms(&p.x, &p.w, &p.a);
    let worst = rel(e.l2, l2).max(rel(e.l3, l3)).max(rel(e.l4, l4));
    check(
        "relaxed trace terms",
        worst < 1e-9,
        format!("max relative difference {worst:.2e}"),
    )
}

fn gradient(rng: &mut ChaCha8Rng, perturb: bool) -> CheckResult {
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..5 {
        let p = instance(rng, 6, 40, 3, 3);
        let q = compute_q(&p.x, &p.a, &p.cfg);
        let f = PhaseObjective::new(&q, &p.x, &p.b, &p.cfg);
        let mut g = f.gradient(&p.w);
        if perturb {
            g[(0, 0)] += 0.1 * g.norm();
        }
        let fd = DMatrix::from_fn(6, 3, |i, j| {
            let mut plus = p.w.clone();
            plus[(i, j)] += h;
            let mut minus = p.w.clone();
            minus[(i, j)] -= h;
            (f.value(&plus) - f.value(&minus)) / (2.0 * h)
        });
        worst = worst.max((&g - &fd).norm() / fd.norm());
    }
    check(
        "gradient finite differences",
        worst < 1e-5,
        format!("max relative error {worst:.2e}"),
    )
}

fn cayley(rng: &mut ChaCha8Rng) -> (CheckResult, CheckResult) {
    let mut orth: f64 = 0.0;
    let mut smw: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..10 {
        let w = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let g = DMatrix::from_fn(12, 4, |_, _| rng.random_range(-1.0..1.0));
        let tau = rng.random_range(0.01..1.0);
        let Ok(next) = cayley_step(&w, &g, tau) else {
            failures += 1;
            continue;
        };
        orth = orth.max(orthogonality_residual(&next));
        let s = &g * w.transpose() - &w * g.transpose();
        let eye = DMatrix::<f64>::identity(12, 12);
        let direct = (&eye + &s * (tau / 2.0))
            .try_inverse()
            .expect("skew-symmetric shift is invertible")
            * (&eye - &s * (tau / 2.0))
            * &w;
        smw = smw.max((&next - &direct).norm() / direct.norm());
    }
    (
        check(
            "cayley step orthogonality",
            failures == 0 && orth < 1e-10,
            format!("max ||W'W - I|| {orth:.2e}, {failures} rejected"),
        ),
        check(
            "woodbury matches direct inverse",
            failures == 0 && smw < 1e-9,
            format!("max relative difference {smw:.2e}"),
        ),
    )
}

fn tangency(rng: &mut ChaCha8Rng) -> CheckResult {
    let w = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0))
        .qr()
        .q();
    let g = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
    let z = project_tangent(&w, &g);
    let wtz = w.transpose() * &z;
    let err = (&wtz + wtz.transpose()).norm();
    check(
        "tangent projection",
        err < 1e-12,
        format!("||W'Z + Z'W|| {err:.2e}"),
    )
}

fn lle_sums(rng: &mut ChaCha8Rng) -> CheckResult {
    let x = DMatrix::from_fn(6, 200, |_, _| rng.random_range(-1.0..1.0));
    let (_, a) = affinity(&x, 5).expect("enough samples");
    let err = a
        .column_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    check(
        "lle weights sum to one",
        err < 1e-10,
        format!("max |sum - 1| {err:.2e}"),
    )
}

fn sign_convention() -> CheckResult {
    let w = DMatrix::<f64>::identity(3, 2);
    let codes = encode_with(&w, &DMatrix::zeros(3, 1)).expect("shapes agree");
    let ok = codes.column(0) == [1, 1];
    check(
        "zero projection encodes as 1",
        ok,
        format!("codes {:?}", codes.column(0)),
    )
}

fn kmeans(rng: &mut ChaCha8Rng) -> CheckResult {
    let codes: Vec<u128> = (0..400).map(|_| rng.random_range(0..1u128 << 10)).collect();
    let result = fit_codebook_packed(&codes, 10, 3, 16, 5);
    match result {
        Ok(book) => {
            let h = &book.stats().inertia_history;
            let rises = h.windows(2).filter(|p| p[1] > p[0] * (1.0 + 1e-12)).count();
            check(
                "k-means inertia non-increasing",
                rises == 0,
                format!("{} iterations, {rises} increases", h.len()),
            )
        }
        Err(e) => check("k-means inertia non-increasing", false, e.to_string()),
    }
}

pub fn run_selftest(options: SelftestOptions) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let (orth, smw) = cayley(&mut rng);
    vec![
        loss_forms(&mut rng),
        relaxation(&mut rng),
        gradient(&mut rng, options.perturb_gradient),
        orth,
        smw,
        tangency(&mut rng),
        lle_sums(&mut rng),
        sign_convention(),
        kmeans(&mut rng),
    ]
}
