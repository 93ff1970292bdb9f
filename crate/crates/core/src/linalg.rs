//! Small dense linear-algebra and RNG helpers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent RNG stream for (seed, stage); stages never share a stream.
pub fn stage_rng(seed: u64, stage: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Symmetric eigendecomposition with eigenvalues sorted in decreasing order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Vᵀ diag(w) V for an N×d matrix V.
pub fn weighted_gram(v: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = v.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let g = v.tr_mul(&scaled);
    symmetrize(&g)
}

/// qᵢ = vᵢᵀ M vᵢ for every row vᵢ of V.
pub fn quad_forms(v: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let vm = v * m;
    row_dots(&vm, v)
}

/// Row-wise inner products of two N×k matrices.
pub fn row_dots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut out = DVector::zeros(n);
    for j in 0..a.ncols() {
        let (ca, cb) = (a.column(j), b.column(j));
        for i in 0..n {
            out[i] += ca[i] * cb[i];
        }
    }
    out
}

/// Row-wise squared norms of an N×k matrix.
pub fn row_norms_sq(a: &DMatrix<f64>) -> DVector<f64> {
    row_dots(a, a)
}

/// Mean of the `k` smallest entries, by partial selection.
pub fn mean_of_smallest(values: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= values.len());
    let mut buf = values.to_vec();
    if k < buf.len() {
        buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
    }
    // Summing the selected prefix in sorted order keeps the result independent
    // of the selection algorithm's internal permutation.
    let mut head = buf[..k].to_vec();
    head.sort_by(|a, b| a.total_cmp(b));
    head.iter().sum::<f64>() / k as f64
}

/// exp(A) for symmetric A through its eigendecomposition.
pub fn sym_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_fn(a, f64::exp)
}

/// f(A) for symmetric A through its eigendecomposition.
pub fn sym_fn(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(a);
    let fv = vals.map(f);
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= fv[j];
    }
    symmetrize(&(scaled * vecs.transpose()))
}
