//! Dense symmetric numerics and the subspace-geometry primitives shared by the
//! whitening estimator and the diagnostics.
//!
//! Eigenvector columns follow one sign convention everywhere: the entry of
//! largest magnitude is positive, ties resolved toward the lowest row index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

/// A square symmetric matrix. The stored entries are exactly symmetric: on
/// construction the two triangles are averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Validation(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Validation("matrix dimension must be at least 1".into()));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("matrix has non-finite entries".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::Validation(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Averages the two triangles without checking. Used for products that are
    /// symmetric by construction.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        SymmetricMatrix { inner: m }
    }

    pub fn identity(p: usize) -> Self {
        SymmetricMatrix {
            inner: DMatrix::identity(p, p),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymmetricMatrix {
            inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.inner
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

/// Leading eigenpairs, values non-increasing, vectors as orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Flips each column so that its largest-magnitude entry is positive.
pub fn normalize_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Top-`k` eigenpairs of a symmetric matrix via a full dense decomposition.
pub fn sym_eigendecomp(a: &SymmetricMatrix, k: usize) -> Result<EigenPairs> {
    let p = a.dim();
    if k == 0 || k > p {
        return Err(Error::range("k", k, format!("1..={p}")));
    }
    let eig = a.inner.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    // Stable sort keeps the solver's order among exact ties.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(k, order.iter().take(k).map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    normalize_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

/// Top-`k` eigenpairs of `(1/n) XcᵀXc` computed through the `n x n` Gram matrix.
///
/// Rows of `xc` must already be centered. Eigenvectors belonging to (numerically)
/// zero eigenvalues are completed to an orthonormal set deterministically.
pub fn top_eigenpairs_gram(xc: &DMatrix<f64>, k: usize) -> Result<EigenPairs> {
    let (n, p) = xc.shape();
    let cap = n.min(p);
    if k == 0 || k > cap {
        return Err(Error::range("k", k, format!("1..={cap}")));
    }
    let gram = SymmetricMatrix::symmetrized((xc * xc.transpose()) / n as f64);
    let small = sym_eigendecomp(&gram, k)?;
    let top = small.values[0].max(0.0);
    let zero_tol = top * 1e-12 * n as f64;

    let mut values = small.values.clone();
    let filled = values.iter().take_while(|&&l| l > zero_tol).count();
    let mut vectors = DMatrix::zeros(p, k);
    if filled > 0 {
        let mut u = xc.tr_mul(&small.vectors.columns(0, filled));
        for c in 0..filled {
            u.column_mut(c).scale_mut(1.0 / (n as f64 * values[c]).sqrt());
        }
        reorthonormalize(&mut u);
        vectors.columns_mut(0, filled).copy_from(&u);
    }
    for c in filled..k {
        values[c] = values[c].max(0.0);
    }
    complete_basis(&mut vectors, filled);
    normalize_signs(&mut vectors);
    Ok(EigenPairs { values, vectors })
}

fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let g = u.tr_mul(u);
    let mut worst = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Replaces nearly orthonormal columns by their polar factor (Newton-Schulz),
/// falling back to a sign-preserving QR when they are far from orthonormal.
fn reorthonormalize(u: &mut DMatrix<f64>) {
    for _ in 0..4 {
        let defect = orthonormality_defect(u);
        if defect < 1e-14 {
            return;
        }
        if defect > 0.25 {
            break;
        }
        let k = u.ncols();
        let g = u.tr_mul(u);
        let correction = (DMatrix::identity(k, k) * 3.0 - g) * 0.5;
        *u = &*u * correction;
    }
    if orthonormality_defect(u) < 1e-12 {
        return;
    }
    let qr = u.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..q.ncols() {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    *u = q;
}

/// Fills columns `filled..` with standard basis vectors orthogonalized (two
/// passes) against all earlier columns, skipping numerically dependent ones.
fn complete_basis(m: &mut DMatrix<f64>, filled: usize) {
    let (p, k) = m.shape();
    let mut next_basis = 0;
    for c in filled..k {
        while next_basis < p {
            let mut e = DVector::zeros(p);
            e[next_basis] = 1.0;
            next_basis += 1;
            for _ in 0..2 {
                let prev = m.columns(0, c);
                let coef = prev.tr_mul(&e);
                e -= prev * coef;
            }
            let norm = e.norm();
            if norm > 1e-8 {
                m.set_column(c, &(e / norm));
                break;
            }
        }
    }
}

/// `sup_{‖x‖₂=1} ‖Mx‖_∞`, i.e. the largest row ℓ₂ norm.
pub fn two_to_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Largest singular value of an arbitrary matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    // The smaller Gram matrix is enough.
    let g = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Orthogonal `d x d` matrix `Ξ` minimizing `‖Û Ξ − U‖_F`, the polar factor of
/// `ÛᵀU`. Equivalently `Ξᵀ` is the closest orthogonal matrix to `UᵀÛ`, so
/// `Û ≈ U Ξᵀ`.
pub fn procrustes_align(uhat: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_same_shape(uhat, u)?;
    let d = u.ncols();
    let cross = uhat.transpose() * u;
    let svd = cross.svd(true, true);
    let smin = svd.singular_values.min();
    if d > 1 && smin <= 1e-12 {
        return Err(Error::DegenerateAlignment(smin));
    }
    let left = svd.u.expect("requested left singular vectors");
    let right_t = svd.v_t.expect("requested right singular vectors");
    let xi = left * right_t;
    if d == 1 && smin == 0.0 {
        return Ok(DMatrix::identity(1, 1));
    }
    Ok(xi)
}

/// Largest principal-angle sine between the column spaces: `‖(I − UUᵀ)Û‖₂`.
pub fn sin_theta_dist(uhat: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(uhat, u)?;
    let residual = uhat - u * (u.transpose() * uhat);
    Ok(spectral_norm(&residual).min(1.0))
}

/// `tr(A) / ‖A‖₂` for a positive semidefinite matrix.
pub fn effective_rank(a: &SymmetricMatrix) -> Result<f64> {
    let top = a.spectral_norm();
    if top <= 0.0 {
        return Err(Error::Domain("effective rank of the zero matrix".into()));
    }
    Ok(a.trace() / top)
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Validation(format!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 0);
        DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
    }

    fn random_symmetric(p: usize, seed: u64) -> SymmetricMatrix {
        let a = random_matrix(p, p, seed);
        SymmetricMatrix::new(&a + a.transpose()).unwrap()
    }

    fn orthonormal_error(v: &DMatrix<f64>) -> f64 {
        (v.transpose() * v - DMatrix::identity(v.ncols(), v.ncols())).amax()
    }

    #[test]
    fn rejects_asymmetric_and_bad_k() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(matches!(SymmetricMatrix::new(m), Err(Error::Validation(_))));
        let a = SymmetricMatrix::identity(3);
        assert!(matches!(sym_eigendecomp(&a, 4), Err(Error::Range { .. })));
        assert!(matches!(sym_eigendecomp(&a, 0), Err(Error::Range { .. })));
    }

    #[test]
    fn identity_spectrum() {
        let e = sym_eigendecomp(&SymmetricMatrix::identity(3), 2).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0]);
        assert!(orthonormal_error(&e.vectors) < 1e-12);
    }

    #[test]
    fn diagonal_top_vector() {
        let a = SymmetricMatrix::from_diagonal(&[5.0, 2.0, 1.0]);
        let e = sym_eigendecomp(&a, 1).unwrap();
        assert!((e.values[0] - 5.0).abs() < 1e-12);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equicorrelation_top_pair() {
        let rho = 0.5;
        let a = SymmetricMatrix::new(DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { rho })).unwrap();
        let e = sym_eigendecomp(&a, 1).unwrap();
        assert!((e.values[0] - (1.0 + 3.0 * rho)).abs() < 1e-12);
        for i in 0..4 {
            // Sign convention makes the vector positive.
            assert!((e.vectors[(i, 0)] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_residuals_random() {
        for (p, seed) in [(5, 1), (50, 2), (200, 3)] {
            let a = random_symmetric(p, seed);
            let norm = a.spectral_norm();
            let e = sym_eigendecomp(&a, p.min(10)).unwrap();
            for c in 0..e.len() {
                let v = e.vectors.column(c);
                let r = a.as_matrix() * v - v * e.values[c];
                assert!(r.norm() <= 1e-8 * norm, "p={p} pair {c}");
                if c > 0 {
                    assert!(e.values[c - 1] >= e.values[c]);
                }
            }
            assert!(orthonormal_error(&e.vectors) < 1e-10);
        }
    }

    #[test]
    fn gram_two_point_example() {
        let xc = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let e = top_eigenpairs_gram(&xc, 1).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.vectors[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(matches!(top_eigenpairs_gram(&xc, 3), Err(Error::Range { .. })));
    }

    #[test]
    fn gram_matches_dense_path() {
        for (n, p, seed) in [(10, 50, 11), (20, 100, 12)] {
            let xc = random_matrix(n, p, seed);
            let k = 5;
            let gram = top_eigenpairs_gram(&xc, k).unwrap();
            let dense_cov = SymmetricMatrix::symmetrized(xc.transpose() * &xc / n as f64);
            let dense = sym_eigendecomp(&dense_cov, k).unwrap();
            for c in 0..k {
                let rel = (gram.values[c] - dense.values[c]).abs() / dense.values[c];
                assert!(rel < 1e-6);
                let dot = gram.vectors.column(c).dot(&dense.vectors.column(c)).abs();
                assert!((dot - 1.0).abs() < 1e-6);
            }
            assert!(sin_theta_dist(&gram.vectors, &dense.vectors).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn gram_full_rank_request_is_psd_and_orthonormal() {
        let n = 6;
        let mut xc = random_matrix(n, 15, 21);
        // Center the rows so that the rank drops to n - 1.
        let mean = xc.row_mean();
        for mut r in xc.row_iter_mut() {
            r -= &mean;
        }
        let e = top_eigenpairs_gram(&xc, n).unwrap();
        assert!(e.values.iter().all(|&v| v >= 0.0));
        assert!(orthonormal_error(&e.vectors) < 1e-10);
    }

    #[test]
    fn two_to_inf_examples() {
        assert_eq!(two_to_inf_norm(&DMatrix::identity(3, 3)), 1.0);
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        assert_eq!(two_to_inf_norm(&m), 5.0);
    }

    #[test]
    fn two_to_inf_matches_sampled_supremum() {
        let m = random_matrix(20, 3, 31);
        let mut rng = stream_rng(32, 0);
        let mut best: f64 = 0.0;
        for _ in 0..100_000 {
            let x = DVector::<f64>::from_fn(3, |_, _| rng.sample(StandardNormal));
            let x = &x / x.norm();
            best = best.max((&m * x).amax());
        }
        let exact = two_to_inf_norm(&m);
        assert!(best <= exact + 1e-12);
        assert!((exact - best) / exact < 2e-2);
    }

    #[test]
    fn norm_ordering_random() {
        for seed in 0..100 {
            let m = random_matrix(7, 4, 100 + seed);
            let t = two_to_inf_norm(&m);
            let s = spectral_norm(&m);
            assert!(t <= s + 1e-12);
            assert!(s <= m.norm() + 1e-12);
        }
    }

    #[test]
    fn procrustes_examples() {
        let u = sym_eigendecomp(&random_symmetric(6, 41), 3).unwrap().vectors;
        let xi = procrustes_align(&u, &u).unwrap();
        assert!((xi - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);

        // Exact rotation recovery.
        let r = sym_eigendecomp(&random_symmetric(3, 42), 3).unwrap().vectors;
        let uhat = &u * &r;
        let xi = procrustes_align(&uhat, &u).unwrap();
        assert!((&uhat * &xi - &u).norm() < 1e-10);
        assert!(orthonormal_error(&xi) < 1e-10);

        let col = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        let xi = procrustes_align(&(-&col), &col).unwrap();
        assert!((xi[(0, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn procrustes_rank_deficient_errors() {
        let u = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let uhat = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            procrustes_align(&uhat, &u),
            Err(Error::DegenerateAlignment(_))
        ));
    }

    #[test]
    fn sin_theta_examples() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(sin_theta_dist(&u, &u).unwrap(), 0.0);
        let perp = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!((sin_theta_dist(&perp, &u).unwrap() - 1.0).abs() < 1e-15);
        for theta in [0.1_f64, 0.7, 1.3, 2.5] {
            let rot = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
            let d = sin_theta_dist(&rot, &u).unwrap();
            assert!((d - theta.sin().abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn effective_rank_examples() {
        assert!((effective_rank(&SymmetricMatrix::identity(5)).unwrap() - 5.0).abs() < 1e-12);
        assert!(
            (effective_rank(&SymmetricMatrix::from_diagonal(&[4.0, 0.0, 0.0])).unwrap() - 1.0).abs() < 1e-12
        );
        let zero = SymmetricMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert!(matches!(effective_rank(&zero), Err(Error::Domain(_))));
    }

    #[test]
    fn effective_rank_equicorrelation() {
        let (p, rho) = (800, 0.5);
        let a = SymmetricMatrix::new(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })).unwrap();
        let expected = p as f64 / (1.0 + (p as f64 - 1.0) * rho);
        assert!((effective_rank(&a).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 1.998).abs() < 1e-3);
    }

    proptest::proptest! {
        #[test]
        fn procrustes_recovers_any_rotation(seed in 0u64..1000, angle in -3.1f64..3.1) {
            let u = sym_eigendecomp(&random_symmetric(8, seed), 2).unwrap().vectors;
            let r = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
            let uhat = &u * &r;
            let xi = procrustes_align(&uhat, &u).unwrap();
            proptest::prop_assert!((&uhat * &xi - &u).norm() <= 1e-10);
        }
    }
}
