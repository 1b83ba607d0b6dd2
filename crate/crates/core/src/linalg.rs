//! Dense products on column-major `DMatrix` storage routed through
//! `matrixmultiply`, so transposed operands cost nothing.

use nalgebra::DMatrix;

#[derive(Clone, Copy)]
enum Op {
    N,
    T,
}

/// Logical `(rows, cols, row_stride, col_stride)` of `m` or `mᵀ`.
fn view(m: &DMatrix<f64>, op: Op) -> (usize, usize, isize, isize) {
    let (r, c) = m.shape();
    match op {
        Op::N => (r, c, 1, r as isize),
        Op::T => (c, r, r as isize, 1),
    }
}

fn gemm(a: &DMatrix<f64>, opa: Op, b: &DMatrix<f64>, opb: Op) -> DMatrix<f64> {
    let (m, k, rsa, csa) = view(a, opa);
    let (kb, n, rsb, csb) = view(b, opb);
    assert_eq!(k, kb, "inner dimensions differ");
    let mut c = DMatrix::<f64>::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: strides describe in-bounds column-major views of `a`, `b`, `c`,
    // and `c` does not alias either input.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            1,
            m as isize,
        );
    }
    c
}

/// `a * b`
pub fn mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    gemm(a, Op::N, b, Op::N)
}

/// `aᵀ * b`
pub fn tr_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    gemm(a, Op::T, b, Op::N)
}

/// `a * bᵀ`
pub fn mul_tr(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    gemm(a, Op::N, b, Op::T)
}

/// Dot products between columns `samples[rows]` and `samples[queries]`,
/// written column-major into `out` (`rows.len() x queries.len()`).
pub(crate) fn column_dots(
    samples: &DMatrix<f64>,
    rows: std::ops::Range<usize>,
    queries: std::ops::Range<usize>,
    out: &mut [f64],
) {
    let dim = samples.nrows();
    let (m, n) = (rows.len(), queries.len());
    assert!(rows.end <= samples.ncols() && queries.end <= samples.ncols());
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 || dim == 0 {
        out.fill(0.0);
        return;
    }
    // SAFETY: both column ranges lie inside `samples`, `out` holds `m * n`
    // values and does not alias `samples`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            dim,
            n,
            1.0,
            samples.as_ptr().add(rows.start * dim),
            dim as isize,
            1,
            samples.as_ptr().add(queries.start * dim),
            1,
            dim as isize,
            0.0,
            out.as_mut_ptr(),
            1,
            m as isize,
        );
    }
}

/// `‖aᵀa − I‖_F`
pub fn orthogonality_residual(a: &DMatrix<f64>) -> f64 {
    let mut g = tr_mul(a, a);
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue. Each
/// eigenvector's largest-magnitude entry is made positive so results do not
/// depend on the solver's sign choice.
pub fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let mut col = eig.eigenvectors.column(src).into_owned();
        let pivot = col.iter().copied().fold(
            0.0f64,
            |best, v| if v.abs() > best.abs() { v } else { best },
        );
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}
