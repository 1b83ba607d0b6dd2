//! Locality-preserving affinity: exact K-nearest neighbours and locally
//! linear reconstruction weights.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;

/// Regularisation used when the constrained least-squares system is singular
/// (duplicate neighbours, `K > D + 1`).
pub const WEIGHT_REGULARIZATION: f64 = 1e-3;

const QUERY_BLOCK: usize = 128;
const SAMPLE_TILE: usize = 1024;

/// K nearest neighbours of every sample, self excluded, sorted by
/// `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborSet {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, n: usize) -> &[usize] {
        &self.indices[n * self.k..(n + 1) * self.k]
    }

    pub fn distances(&self, n: usize) -> &[f64] {
        &self.distances[n * self.k..(n + 1) * self.k]
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Bounded list of the smallest `(key, index)` pairs seen so far.
struct TopK {
    cap: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.items.len() < self.cap {
            f64::INFINITY
        } else {
            self.items[self.cap - 1].0
        }
    }

    #[inline]
    fn push(&mut self, key: f64, index: usize) {
        if self.items.len() == self.cap {
            let last = self.items[self.cap - 1];
            if (key, index) >= last {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&(k, i)| (k, i) < (key, index));
        self.items.insert(pos, (key, index));
    }
}

/// Exact Euclidean K-NN over the columns of `samples`.
///
/// Candidates are screened with Gram-matrix distances and re-ranked exactly; a
/// query whose screening margin is too thin for the rounding bound falls back
/// to a full exact scan, so the result always equals brute force with ties
/// broken by the smaller index.
pub fn knn(samples: &DMatrix<f64>, k: usize) -> Result<NeighborSet> {
    let n = samples.ncols();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "K = {k} needs 1 <= K < N = {n}"
        )));
    }
    let dim = samples.nrows();
    let norms: Vec<f64> = samples.column_iter().map(|c| c.norm_squared()).collect();
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let shortlist = (k + k.max(8)).min(n - 1);
    let col = |j: usize| &samples.as_slice()[j * dim..(j + 1) * dim];

    let blocks: Vec<(usize, usize)> = (0..n)
        .step_by(QUERY_BLOCK)
        .map(|s| (s, (s + QUERY_BLOCK).min(n)))
        .collect();
    let per_block: Vec<Vec<(f64, usize)>> = blocks
        .par_iter()
        .map(|&(start, end)| {
            let b = end - start;
            let mut tops: Vec<TopK> = (0..b).map(|_| TopK::new(shortlist)).collect();
            let mut dots = vec![0.0; SAMPLE_TILE * b];
            for tile in (0..n).step_by(SAMPLE_TILE) {
                let rows = tile..(tile + SAMPLE_TILE).min(n);
                let len = rows.len();
                let dots = &mut dots[..len * b];
                linalg::column_dots(samples, rows, start..end, dots);
                for (qi, top) in tops.iter_mut().enumerate() {
                    let q = start + qi;
                    for (jj, &dot) in dots[qi * len..(qi + 1) * len].iter().enumerate() {
                        let j = tile + jj;
                        let approx = norms[q] + norms[j] - 2.0 * dot;
                        if approx <= top.worst() && j != q {
                            top.push(approx, j);
                        }
                    }
                }
            }
            let mut out = Vec::with_capacity(b * k);
            for (qi, top) in tops.into_iter().enumerate() {
                let q = start + qi;
                let screen_worst = top.worst();
                let mut exact: Vec<(f64, usize)> = top
                    .items
                    .iter()
                    .map(|&(_, j)| (squared_distance(col(q), col(j)), j))
                    .collect();
                exact.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
                let tol = 1e-11 * (norms[q] + max_norm) + f64::MIN_POSITIVE;
                let certified = shortlist == n - 1 || exact[k - 1].0 + 2.0 * tol < screen_worst;
                if !certified {
                    let mut full = TopK::new(k);
                    for j in (0..n).filter(|&j| j != q) {
                        full.push(squared_distance(col(q), col(j)), j);
                    }
                    exact = full.items;
                }
                out.extend(exact.into_iter().take(k));
            }
            out
        })
        .collect();

    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (d2, j) in per_block.into_iter().flatten() {
        indices.push(j);
        distances.push(d2.sqrt());
    }
    Ok(NeighborSet {
        k,
        indices,
        distances,
    })
}

/// Affine reconstruction weights of `x` from the columns of `neighbors`,
/// summing to one.
///
/// Solves `min ‖x − X_n a‖²` s.t. `1ᵀa = 1` through its KKT system, which
/// coincides with `G⁻¹1 / 1ᵀG⁻¹1` whenever the local Gram matrix `G` is
/// invertible and stays exact when `x` lies in the affine hull of its
/// neighbours. If the minimiser is not unique (`K > D + 1` or repeated
/// neighbours) the minimum-norm minimiser is returned, which is the limit of
/// the `ε·tr(G)/K` ridge solution as `ε → 0`; the ridge with
/// `WEIGHT_REGULARIZATION` is only used if that decomposition fails.
pub fn reconstruction_weights(x: &DVector<f64>, neighbors: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.len() != neighbors.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} entries, neighbours have {} rows",
            x.len(),
            neighbors.nrows()
        )));
    }
    let k = neighbors.ncols();
    if k == 0 {
        return Err(Error::InvalidArgument("no neighbours".into()));
    }
    if k == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let mut diff = neighbors.clone();
    for mut c in diff.column_iter_mut() {
        c.neg_mut();
        c += x;
    }
    let gram = diff.transpose() * &diff;
    Ok(solve_constrained(gram))
}

fn solve_constrained(gram: DMatrix<f64>) -> DVector<f64> {
    let k = gram.nrows();
    let trace = gram.trace();
    let g = if trace > 0.0 {
        gram / (trace / k as f64)
    } else {
        gram
    };

    let mut kkt = DMatrix::<f64>::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k)).copy_from(&g);
    for i in 0..k {
        kkt[(i, k)] = 1.0;
        kkt[(k, i)] = 1.0;
    }
    let lu = kkt.clone().full_piv_lu();
    let pivots = lu.u().diagonal();
    let (lo, hi) = pivots.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
        (lo.min(p.abs()), hi.max(p.abs()))
    });
    if lo > 1e-10 * hi {
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        if let Some(sol) = lu.solve(&rhs) {
            let a = sol.rows(0, k).into_owned();
            if a.iter().all(|v| v.is_finite()) {
                return a;
            }
        }
    }

    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    if let Ok(pinv) = kkt.pseudo_inverse(1e-10 * hi.max(1.0)) {
        let a = (pinv * rhs).rows(0, k).into_owned();
        if a.iter().all(|v| v.is_finite()) && (a.sum() - 1.0).abs() < 1e-10 {
            return a;
        }
    }

    let ridge = if trace > 0.0 {
        WEIGHT_REGULARIZATION * g.trace() / k as f64
    } else {
        WEIGHT_REGULARIZATION
    };
    let mut reg = g;
    for i in 0..k {
        reg[(i, i)] += ridge;
    }
    let ones = DVector::from_element(k, 1.0);
    let z = reg
        .clone()
        .cholesky()
        .map(|c| c.solve(&ones))
        .or_else(|| reg.lu().solve(&ones))
        .unwrap_or_else(|| ones.clone());
    let total = z.sum();
    z / total
}

/// Sparse `N x N` reconstruction matrix; column `n` holds sample `n`'s
/// weights at its neighbours' rows, so `B·A` reconstructs `b_n` in column `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    k: usize,
    rows: Vec<usize>,
    weights: Vec<f64>,
}

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `(row indices, weights)` of column `n`.
    pub fn column(&self, n: usize) -> (&[usize], &[f64]) {
        let r = n * self.k..(n + 1) * self.k;
        (&self.rows[r.clone()], &self.weights[r])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for col in 0..self.n {
            let (rows, w) = self.column(col);
            for (&r, &v) in rows.iter().zip(w) {
                a[(r, col)] += v;
            }
        }
        a
    }

    /// `m · A` for `m` with `N` columns.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(m.ncols(), self.n, "column count must equal N");
        let rows = m.nrows();
        let mut out = DMatrix::zeros(rows, self.n);
        for col in 0..self.n {
            let (idx, w) = self.column(col);
            let mut dst = out.column_mut(col);
            for (&j, &v) in idx.iter().zip(w) {
                dst.axpy(v, &m.column(j), 1.0);
            }
        }
        out
    }

    /// Sum of each column's weights.
    pub fn column_sums(&self) -> Vec<f64> {
        self.weights
            .chunks(self.k)
            .map(|c| c.iter().sum())
            .collect()
    }
}

pub fn build_affinity(
    weights: &[DVector<f64>],
    neighbors: &NeighborSet,
    n: usize,
) -> Result<AffinityMatrix> {
    if weights.len() != n || neighbors.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weight vectors and {} neighbour lists for N = {n}",
            weights.len(),
            neighbors.len()
        )));
    }
    let k = neighbors.k();
    let mut rows = Vec::with_capacity(n * k);
    let mut flat = Vec::with_capacity(n * k);
    for (i, w) in weights.iter().enumerate() {
        if w.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "sample {i} has {} weights, K = {k}",
                w.len()
            )));
        }
        rows.extend_from_slice(neighbors.indices(i));
        flat.extend(w.iter());
    }
    Ok(AffinityMatrix {
        n,
        k,
        rows,
        weights: flat,
    })
}

/// K-NN, per-sample weights and assembly in one pass.
pub fn affinity(samples: &DMatrix<f64>, k: usize) -> Result<(NeighborSet, AffinityMatrix)> {
    let neighbors = knn(samples, k)?;
    let n = samples.ncols();
    let weights: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx = neighbors.indices(i);
            let local = DMatrix::from_fn(samples.nrows(), idx.len(), |r, c| samples[(r, idx[c])]);
            reconstruction_weights(&samples.column(i).into_owned(), &local)
        })
        .collect::<Result<_>>()?;
    let a = build_affinity(&weights, &neighbors, n)?;
    Ok((neighbors, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(x: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
        (0..x.ncols())
            .map(|q| {
                let mut d: Vec<(f64, usize)> = (0..x.ncols())
                    .filter(|&j| j != q)
                    .map(|j| ((x.column(q) - x.column(j)).norm_squared(), j))
                    .collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d.into_iter().take(k).map(|p| p.1).collect()
            })
            .collect()
    }

    #[test]
    fn two_points_neighbour_each_other() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 4.0]);
        let nb = knn(&x, 1).unwrap();
        assert_eq!(nb.indices(0), &[1]);
        assert_eq!(nb.indices(1), &[0]);
        assert_eq!(nb.distances(0), &[4.0]);
    }

    #[test]
    fn collinear_points() {
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 3.0]);
        let nb = knn(&x, 1).unwrap();
        assert_eq!(
            [nb.indices(0)[0], nb.indices(1)[0], nb.indices(2)[0]],
            [1, 0, 1]
        );
    }

    #[test]
    fn ties_prefer_lower_index() {
        // points 1, 2 and 3 are duplicates at distance 1 from point 0
        let x = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let nb = knn(&x, 2).unwrap();
        assert_eq!(nb.indices(0), &[1, 2]);
        assert_eq!(nb.indices(3), &[1, 2]);
        assert_eq!(nb.indices(1), &[2, 3]);
    }

    #[test]
    fn k_must_be_below_n() {
        let x = DMatrix::<f64>::zeros(2, 3);
        assert!(knn(&x, 3).is_err());
        assert!(knn(&x, 0).is_err());
    }

    #[test]
    fn matches_brute_force_with_many_duplicates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // integer-valued samples with heavy duplication across 300 columns
        let x = DMatrix::from_fn(5, 300, |_, _| rng.random_range(-1..=1) as f64);
        let nb = knn(&x, 10).unwrap();
        let brute = brute_knn(&x, 10);
        for q in 0..300 {
            assert_eq!(nb.indices(q), brute[q].as_slice(), "query {q}");
        }
    }

    #[test]
    fn matches_brute_force_on_random_reals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(26, 400, |_, _| rng.random_range(-100.0..100.0));
        let nb = knn(&x, 7).unwrap();
        let brute = brute_knn(&x, 7);
        for q in 0..400 {
            assert_eq!(nb.indices(q), brute[q].as_slice());
        }
    }

    #[test]
    fn single_neighbour_weight_is_one() {
        let w = reconstruction_weights(
            &DVector::from_vec(vec![3.0, 1.0]),
            &DMatrix::from_row_slice(2, 1, &[3.0, 1.0]),
        )
        .unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn symmetric_neighbours_get_equal_weights() {
        let nb = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]);
        let w = reconstruction_weights(&DVector::from_vec(vec![0.0, 0.0]), &nb).unwrap();
        assert!(
            (w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12,
            "{w}"
        );
    }

    #[test]
    fn midpoint_reconstructs_exactly() {
        let nb = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let x = DVector::from_vec(vec![0.5, 0.0]);
        let w = reconstruction_weights(&x, &nb).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
        assert!((&nb * &w - &x).norm() < 1e-12);
    }

    #[test]
    fn asymmetric_affine_point_reconstructs_exactly() {
        let nb = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let x = DVector::from_vec(vec![0.25, 0.0]);
        let w = reconstruction_weights(&x, &nb).unwrap();
        assert!(
            (w[0] - 0.75).abs() < 1e-12 && (w[1] - 0.25).abs() < 1e-12,
            "{w}"
        );
    }

    #[test]
    fn duplicate_neighbours_fall_back_to_regularisation() {
        let nb = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let w = reconstruction_weights(&DVector::from_vec(vec![0.0, 0.0]), &nb).unwrap();
        assert!((w.sum() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-9));
        // all neighbours coincide with the sample
        let same = DMatrix::from_element(2, 3, 0.0);
        let w = reconstruction_weights(&DVector::zeros(2), &same).unwrap();
        assert!(w.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn two_sample_affinity_is_swap() {
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let (_, a) = affinity(&x, 1).unwrap();
        assert_eq!(
            a.to_dense(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
    }

    #[test]
    fn columns_sum_to_one_and_diagonal_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(3, 60, |_, _| rng.random_range(-1.0..1.0));
        let (_, a) = affinity(&x, 5).unwrap();
        assert!(a.column_sums().iter().all(|s| (s - 1.0).abs() < 1e-10));
        let dense = a.to_dense();
        assert!((0..60).all(|i| dense[(i, i)] == 0.0));
        assert!((0..60).all(|c| a.column(c).0.len() == 5));
    }

    #[test]
    fn matrix_and_elementwise_reconstruction_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let (nb, a) = affinity(&x, 2).unwrap();
        let b = DMatrix::from_fn(4, 6, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let matrix_form = (&b - a.right_mul(&b)).norm_squared();
        let dense_form = (&b - &b * a.to_dense()).norm_squared();
        let mut elementwise = 0.0;
        for n in 0..6 {
            let (idx, w) = a.column(n);
            assert_eq!(idx, nb.indices(n));
            let mut r = b.column(n).into_owned();
            for (&j, &v) in idx.iter().zip(w) {
                r -= b.column(j) * v;
            }
            elementwise += r.norm_squared();
        }
        assert!((matrix_form - elementwise).abs() < 1e-12);
        assert!((dense_form - elementwise).abs() < 1e-12);
    }
}
