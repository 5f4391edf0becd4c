//! Eigenvalue and real Schur machinery.
//!
//! The real Schur factorization itself comes from `nalgebra`. Reordering of
//! the quasi-triangular factor is done here with orthogonal swaps of adjacent
//! 1x1/2x2 diagonal blocks, so that the block carrying the smallest-amplitude
//! eigenvalue ends up in trailing position.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Matrix;

const SCHUR_MAX_ITER: usize = 10_000;

/// Complex spectrum sorted by nonincreasing amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    /// `|lambda_d|`, the smallest eigenvalue amplitude.
    pub fn min_amplitude(&self) -> f64 {
        self.eigenvalues.last().map(|z| z.norm()).unwrap_or(0.0)
    }
}

/// One diagonal block of a quasi-triangular Schur factor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchurBlock {
    pub offset: usize,
    pub size: usize,
    pub eigenvalues: Vec<Complex64>,
}

impl SchurBlock {
    pub fn amplitude(&self) -> f64 {
        self.eigenvalues[0].norm()
    }
}

/// `A = Q U Q^T` with the smallest-amplitude block last.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub blocks: Vec<SchurBlock>,
    /// `||Q U Q^T - A||_F` recorded after every reordering swap.
    pub swap_residuals: Vec<f64>,
}

impl SchurForm {
    pub fn trailing_block(&self) -> &SchurBlock {
        self.blocks
            .last()
            .expect("Schur form has at least one block")
    }

    /// Trailing diagonal block of `U` as a dense matrix.
    pub fn trailing_matrix(&self) -> DMatrix<f64> {
        let b = self.trailing_block();
        self.u
            .view((b.offset, b.offset), (b.size, b.size))
            .into_owned()
    }

    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        (&self.q * &self.u * self.q.transpose() - a).norm()
    }
}

/// `B_k = P [[alpha, -beta], [beta, alpha]] P^{-1}` with `beta > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagonalization {
    pub p: Matrix2<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    pub amplitude: f64,
}

impl BlockDiagonalization {
    pub fn rotation_form(&self) -> Matrix2<f64> {
        Matrix2::new(self.alpha, -self.beta, self.beta, self.alpha)
    }

    pub fn reconstruct(&self) -> Matrix2<f64> {
        let p_inv = self
            .p
            .try_inverse()
            .expect("P is invertible by construction");
        self.p * self.rotation_form() * p_inv
    }
}

fn require_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Full complex spectrum, amplitude-sorted descending.
///
/// Ties are broken by real part, then imaginary part, both descending.
pub fn eigenvalues_sorted(a: &Matrix) -> Result<Spectrum> {
    let (_, _, blocks) = raw_schur(a.as_dmatrix())?;
    let mut eigenvalues: Vec<Complex64> = blocks.into_iter().flat_map(|b| b.eigenvalues).collect();
    sort_by_amplitude(&mut eigenvalues);
    Ok(Spectrum { eigenvalues })
}

fn sort_by_amplitude(values: &mut [Complex64]) {
    values.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then(y.re.total_cmp(&x.re))
            .then(y.im.total_cmp(&x.im))
    });
}

/// Real Schur form whose trailing block carries `lambda_d(A)`.
pub fn schur_sorted(a: &Matrix) -> Result<SchurForm> {
    let a = a.as_dmatrix();
    let (mut q, mut u, mut blocks) = raw_schur(a)?;
    let scale = 1.0 + a.norm();
    let tol = 1e-8 * scale;

    let residual = (&q * &u * q.transpose() - a).norm();
    if residual > tol {
        return Err(Error::Convergence { residual });
    }

    let min_amp = blocks
        .iter()
        .map(SchurBlock::amplitude)
        .fold(f64::INFINITY, f64::min);
    let max_amp = blocks.iter().map(SchurBlock::amplitude).fold(0.0, f64::max);
    let tie = min_amp + 1e-10 * max_amp.max(1.0);
    // Ties resolve to the block closest to the trailing position.
    let target = blocks
        .iter()
        .rposition(|b| b.amplitude() <= tie)
        .expect("at least one block");

    let mut swap_residuals = Vec::new();
    for k in target..blocks.len() - 1 {
        let offset = blocks[k].offset;
        let (p, qs) = (blocks[k].size, blocks[k + 1].size);
        swap_adjacent(&mut u, &mut q, offset, p, qs)?;
        let (first, second) = (blocks[k + 1].clone(), blocks[k].clone());
        blocks[k] = SchurBlock {
            offset,
            size: first.size,
            eigenvalues: block_eigenvalues(&u, offset, first.size),
        };
        blocks[k + 1] = SchurBlock {
            offset: offset + first.size,
            size: second.size,
            eigenvalues: block_eigenvalues(&u, offset + first.size, second.size),
        };
        let residual = (&q * &u * q.transpose() - a).norm();
        if residual > tol {
            return Err(Error::Convergence { residual });
        }
        swap_residuals.push(residual);
    }

    Ok(SchurForm {
        q,
        u,
        blocks,
        swap_residuals,
    })
}

/// Unsorted real Schur form with 2x2 blocks only for complex pairs.
fn raw_schur(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<SchurBlock>)> {
    require_square(a)?;
    let n = a.nrows();
    if n == 1 {
        let blocks = vec![SchurBlock {
            offset: 0,
            size: 1,
            eigenvalues: vec![Complex64::new(a[(0, 0)], 0.0)],
        }];
        return Ok((DMatrix::identity(1, 1), a.clone(), blocks));
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(
        Error::Convergence {
            residual: f64::INFINITY,
        },
    )?;
    let (mut q, mut u) = schur.unpack();

    for j in 0..n {
        for i in (j + 2)..n {
            u[(i, j)] = 0.0;
        }
    }

    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && u[(i + 1, i)] != 0.0 {
            if split_real_pair(&mut u, &mut q, i) {
                continue;
            }
            blocks.push(SchurBlock {
                offset: i,
                size: 2,
                eigenvalues: block_eigenvalues(&u, i, 2),
            });
            i += 2;
        } else {
            blocks.push(SchurBlock {
                offset: i,
                size: 1,
                eigenvalues: block_eigenvalues(&u, i, 1),
            });
            i += 1;
        }
    }
    Ok((q, u, blocks))
}

/// Triangularizes a 2x2 diagonal block with real eigenvalues in place.
/// Returns false when the block holds a complex pair.
fn split_real_pair(u: &mut DMatrix<f64>, q: &mut DMatrix<f64>, i: usize) -> bool {
    let (a, b, c, d) = (u[(i, i)], u[(i, i + 1)], u[(i + 1, i)], u[(i + 1, i + 1)]);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc < 0.0 {
        return false;
    }
    let root = disc.sqrt();
    let lambda = 0.5 * (a + d) + if half >= 0.0 { root } else { -root };
    let v1 = (lambda - d, c);
    let v2 = (b, lambda - a);
    let (x, y) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) {
        v1
    } else {
        v2
    };
    let r = x.hypot(y);
    let (cs, sn) = (x / r, y / r);
    let g = DMatrix::from_row_slice(2, 2, &[cs, -sn, sn, cs]);
    apply_local_similarity(u, q, i, &g);
    u[(i + 1, i)] = 0.0;
    true
}

/// `U <- G^T U G`, `Q <- Q G` where `G` acts on rows/cols `offset..offset+k`.
fn apply_local_similarity(
    u: &mut DMatrix<f64>,
    q: &mut DMatrix<f64>,
    offset: usize,
    g: &DMatrix<f64>,
) {
    let n = u.nrows();
    let k = g.nrows();
    let rows = g.transpose() * u.view((offset, 0), (k, n));
    u.view_mut((offset, 0), (k, n)).copy_from(&rows);
    let cols = u.view((0, offset), (n, k)) * g;
    u.view_mut((0, offset), (n, k)).copy_from(&cols);
    let qcols = q.view((0, offset), (n, k)) * g;
    q.view_mut((0, offset), (n, k)).copy_from(&qcols);
}

fn block_eigenvalues(u: &DMatrix<f64>, offset: usize, size: usize) -> Vec<Complex64> {
    if size == 1 {
        return vec![Complex64::new(u[(offset, offset)], 0.0)];
    }
    let (a, b, c, d) = (
        u[(offset, offset)],
        u[(offset, offset + 1)],
        u[(offset + 1, offset)],
        u[(offset + 1, offset + 1)],
    );
    let mid = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        vec![Complex64::new(mid + r, 0.0), Complex64::new(mid - r, 0.0)]
    } else {
        let im = (-disc).sqrt();
        vec![Complex64::new(mid, im), Complex64::new(mid, -im)]
    }
}

/// Swaps the adjacent diagonal blocks of sizes `p` and `q` starting at
/// `offset` by an orthogonal similarity.
///
/// Solves `A11 X - X A22 = A12`; the columns of `[-X; I]` span the invariant
/// subspace of `A22`, and the orthogonal factor of its QR moves that subspace
/// to the front.
fn swap_adjacent(
    u: &mut DMatrix<f64>,
    qmat: &mut DMatrix<f64>,
    offset: usize,
    p: usize,
    q: usize,
) -> Result<()> {
    let n = p + q;
    let a11 = u.view((offset, offset), (p, p)).into_owned();
    let a12 = u.view((offset, offset + p), (p, q)).into_owned();
    let a22 = u.view((offset + p, offset + p), (q, q)).into_owned();

    // (I_q kron A11 - A22^T kron I_p) vec(X) = vec(A12), column-major vec.
    let m = p * q;
    let mut kron = DMatrix::<f64>::zeros(m, m);
    for jc in 0..q {
        for ir in 0..p {
            let row = jc * p + ir;
            for kk in 0..p {
                kron[(row, jc * p + kk)] += a11[(ir, kk)];
            }
            for ll in 0..q {
                kron[(row, ll * p + ir)] -= a22[(ll, jc)];
            }
        }
    }
    let rhs = DVector::from_iterator(m, a12.iter().copied());
    let x = kron
        .lu()
        .solve(&rhs)
        .filter(|v| v.iter().all(|e| e.is_finite()))
        .ok_or_else(|| Error::Numerical("Schur block swap: blocks share an eigenvalue".into()))?;

    let mut basis = DMatrix::<f64>::zeros(n, q + n);
    for jc in 0..q {
        for ir in 0..p {
            basis[(ir, jc)] = -x[jc * p + ir];
        }
        basis[(p + jc, jc)] = 1.0;
    }
    for k in 0..n {
        basis[(k, q + k)] = 1.0;
    }
    let g = basis.qr().q();
    apply_local_similarity(u, qmat, offset, &g);

    let total = u.nrows();
    for j in offset..offset + q {
        for i in offset + q..total {
            u[(i, j)] = 0.0;
        }
    }
    for j in 0..total {
        for i in (j + 2)..total {
            u[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// `B = P [[alpha, -beta], [beta, alpha]] P^{-1}` for a 2x2 block with a
/// complex-conjugate pair `alpha +- i beta`.
///
/// `P = [v_re, v_im]` for an eigenvector `v` of `alpha - i beta`, scaled so
/// the first column has unit norm and a positive leading nonzero entry.
pub fn block_diagonalize(bk: &Matrix2<f64>) -> Result<BlockDiagonalization> {
    let (a, b, c, d) = (bk[(0, 0)], bk[(0, 1)], bk[(1, 0)], bk[(1, 1)]);
    let alpha = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc.is_nan() || disc >= 0.0 {
        return Err(Error::Precondition(
            "block has real eigenvalues; use the 1x1 path".into(),
        ));
    }
    let beta = (-disc).sqrt();

    // Null vector of B - (alpha - i beta) I.
    let (re, im) = if b.abs() >= c.abs() {
        ([b, alpha - a], [0.0, -beta])
    } else {
        ([alpha - d, c], [-beta, 0.0])
    };
    let norm = re[0].hypot(re[1]);
    let lead = if re[0] != 0.0 { re[0] } else { re[1] };
    let s = lead.signum() / norm;
    let p = Matrix2::new(s * re[0], s * im[0], s * re[1], s * im[1]);

    Ok(BlockDiagonalization {
        p,
        alpha,
        beta,
        theta: beta.atan2(alpha),
        amplitude: alpha.hypot(beta),
    })
}

fn symmetrized(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(s)?;
    let asym = (s - s.transpose()).norm();
    if asym > 1e-9 * s.norm() {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (||S - S^T||_F = {asym:e})"
        )));
    }
    Ok(0.5 * (s + s.transpose()))
}

fn symmetric_eigen(s: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "symmetric matrix has non-finite entries".into(),
        ));
    }
    let sym = symmetrized(s)?;
    let cap = 1000 * sym.nrows().max(1);
    SymmetricEigen::try_new(sym, f64::EPSILON, cap).ok_or(Error::Convergence {
        residual: f64::INFINITY,
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min_sym(s: &DMatrix<f64>) -> Result<f64> {
    Ok(min_eigenpair_sym(s)?.0)
}

/// Smallest eigenvalue of the symmetric 2x2 matrix `[[p, r], [r, q]]`.
///
/// Evaluated as `det / lambda_max` so small eigenvalues keep full relative
/// accuracy.
pub fn lambda_min_sym2(p: f64, q: f64, r: f64) -> f64 {
    let half_tr = 0.5 * (p + q);
    let radius = (0.5 * (p - q)).hypot(r);
    let lambda_max = half_tr + radius;
    if lambda_max <= 0.0 {
        return half_tr - radius;
    }
    (p * q - r * r) / lambda_max
}

/// Smallest eigenvalue of a symmetric matrix and a unit eigenvector for it.
pub fn min_eigenpair_sym(s: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let eig = symmetric_eigen(s)?;
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty matrix");
    let mut v = eig.eigenvectors.column(idx).into_owned();
    // Deterministic sign: largest-magnitude component positive.
    let lead = v
        .iter()
        .copied()
        .fold(0.0f64, |m, e| if e.abs() > m.abs() { e } else { m });
    if lead < 0.0 {
        v.neg_mut();
    }
    Ok((val, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rot(rho: f64, theta: f64) -> Matrix2<f64> {
        Matrix2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos()) * rho
    }

    fn dm(m: &Matrix2<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
    }

    fn check_form(a: &DMatrix<f64>, f: &SchurForm) {
        let d = a.nrows() as f64;
        let orth = (f.q.transpose() * &f.q - DMatrix::identity(a.nrows(), a.nrows())).norm();
        assert!(orth <= 1e-9 * d, "orthogonality {orth}");
        assert!(
            f.residual(a) <= 1e-8 * (1.0 + a.norm()),
            "residual {}",
            f.residual(a)
        );
        for b in &f.blocks {
            for j in b.offset..b.offset + b.size {
                for i in b.offset + b.size..a.nrows() {
                    assert!(f.u[(i, j)].abs() <= 1e-10, "U[{i},{j}]={}", f.u[(i, j)]);
                }
            }
        }
        let spec = eigenvalues_sorted(&Matrix::from_dmatrix(a.clone()).unwrap()).unwrap();
        assert!((f.trailing_block().amplitude() - spec.min_amplitude()).abs() <= 1e-9);
    }

    #[test]
    fn eigenvalues_examples() {
        let s = eigenvalues_sorted(&Matrix::diag(&[2.0, 0.5])).unwrap();
        assert_eq!(
            s.eigenvalues,
            vec![Complex64::new(2.0, 0.0), Complex64::new(0.5, 0.0)]
        );

        let r = Matrix::from_dmatrix(dm(&rot(0.9, PI / 3.0))).unwrap();
        let s = eigenvalues_sorted(&r).unwrap();
        let expect = Complex64::from_polar(0.9, PI / 3.0);
        assert!((s.eigenvalues[0] - expect).norm() < 1e-12);
        assert!((s.eigenvalues[1] - expect.conj()).norm() < 1e-12);

        let s = eigenvalues_sorted(&Matrix::identity(3)).unwrap();
        assert!(s.eigenvalues.iter().all(|z| (*z - 1.0).norm() < 1e-14));
    }

    #[test]
    fn eigenvalues_reject_rectangular() {
        let m = Matrix::from_row_major(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(eigenvalues_sorted(&m), Err(Error::Dimension(_))));
    }

    #[test]
    fn schur_diag_swaps_to_permutation() {
        let a = Matrix::diag(&[0.5, 2.0]);
        let f = schur_sorted(&a).unwrap();
        check_form(a.as_dmatrix(), &f);
        assert_relative_eq!(f.u[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.u[(1, 1)], 0.5, epsilon = 1e-12);
        assert!(f.u[(0, 1)].abs() < 1e-12);
        // Q is a signed permutation swapping the coordinates.
        assert!(f.q[(0, 0)].abs() < 1e-12 && f.q[(1, 1)].abs() < 1e-12);
        assert_relative_eq!(f.q[(0, 1)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn schur_moves_rotation_block_last() {
        let mut a = DMatrix::zeros(3, 3);
        a.view_mut((0, 0), (2, 2))
            .copy_from(&dm(&rot(0.9, PI / 4.0)));
        a[(2, 2)] = 2.0;
        let f = schur_sorted(&Matrix::from_dmatrix(a.clone()).unwrap()).unwrap();
        check_form(&a, &f);
        assert_eq!(f.trailing_block().size, 2);
        assert_relative_eq!(f.trailing_block().amplitude(), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn schur_already_sorted_upper_triangular() {
        let a = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.5]);
        let f = schur_sorted(&Matrix::from_dmatrix(a.clone()).unwrap()).unwrap();
        check_form(&a, &f);
        assert!(f.swap_residuals.is_empty());
    }

    #[test]
    fn schur_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let d = rng.random_range(1..=8);
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let f = schur_sorted(&Matrix::from_dmatrix(a.clone()).unwrap()).unwrap();
            check_form(&a, &f);
            let tol = 1e-8 * (1.0 + a.norm());
            assert!(f.swap_residuals.iter().all(|&r| r <= tol));

            let spec = eigenvalues_sorted(&Matrix::from_dmatrix(a.clone()).unwrap()).unwrap();
            let mut from_blocks: Vec<Complex64> = f
                .blocks
                .iter()
                .flat_map(|b| b.eigenvalues.clone())
                .collect();
            sort_by_amplitude(&mut from_blocks);
            for (x, y) in from_blocks.iter().zip(&spec.eigenvalues) {
                assert!((x - y).norm() <= 1e-7, "{x} vs {y}");
            }
            let prod: Complex64 = from_blocks.iter().product();
            let det = a.determinant();
            assert!(
                (prod.re - det).abs() <= 1e-6 * det.abs().max(1e-12) + 1e-12,
                "{prod} vs {det}"
            );
        }
    }

    #[test]
    fn schur_large_and_structured_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for d in [16, 32, 64] {
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let f = schur_sorted(&Matrix::from_dmatrix(a.clone()).unwrap()).unwrap();
            check_form(&a, &f);
        }
        // Jordan block: defective, single eigenvalue.
        let j = DMatrix::from_row_slice(3, 3, &[0.7, 1.0, 0.0, 0.0, 0.7, 1.0, 0.0, 0.0, 0.7]);
        check_form(
            &j,
            &schur_sorted(&Matrix::from_dmatrix(j.clone()).unwrap()).unwrap(),
        );
        // Equal amplitudes everywhere: no swaps needed.
        let mut o = DMatrix::zeros(4, 4);
        o.view_mut((0, 0), (2, 2)).copy_from(&dm(&rot(0.9, 0.4)));
        o.view_mut((2, 2), (2, 2)).copy_from(&dm(&rot(0.9, 1.1)));
        let f = schur_sorted(&Matrix::from_dmatrix(o.clone()).unwrap()).unwrap();
        check_form(&o, &f);
        assert!(f.swap_residuals.is_empty());
        let z = DMatrix::zeros(3, 3);
        check_form(
            &z,
            &schur_sorted(&Matrix::from_dmatrix(z.clone()).unwrap()).unwrap(),
        );
    }

    #[test]
    fn block_diagonalize_rotation_form() {
        let (alpha, beta) = (0.3, 0.8);
        let b = Matrix2::new(alpha, -beta, beta, alpha);
        let bd = block_diagonalize(&b).unwrap();
        assert_relative_eq!(bd.p, Matrix2::identity(), epsilon = 1e-12);
        assert_relative_eq!(bd.theta, beta.atan2(alpha), epsilon = 1e-12);
        assert_relative_eq!(bd.reconstruct(), b, epsilon = 1e-12);
    }

    #[test]
    fn block_diagonalize_pure_imaginary() {
        let b = Matrix2::new(0.0, -4.0, 1.0, 0.0);
        let bd = block_diagonalize(&b).unwrap();
        assert_relative_eq!(bd.amplitude, 2.0, epsilon = 1e-12);
        assert_relative_eq!(bd.alpha, 0.0, epsilon = 1e-12);
        assert_relative_eq!(bd.beta, 2.0, epsilon = 1e-12);
        assert!((bd.reconstruct() - b).norm() <= 1e-9 * b.norm());
    }

    #[test]
    fn block_diagonalize_conjugated_rotation() {
        let s = Matrix2::new(1.0, 1.0, 0.0, 1.0);
        let b = s * rot(0.5, 0.3) * s.try_inverse().unwrap();
        let bd = block_diagonalize(&b).unwrap();
        assert_relative_eq!(bd.amplitude, 0.5, epsilon = 1e-12);
        assert_relative_eq!(bd.theta, 0.3, epsilon = 1e-12);
        assert!((bd.reconstruct() - b).norm() <= 1e-9 * b.norm());
        assert_relative_eq!(bd.p.column(0).norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn block_diagonalize_rejects_real_eigenvalues() {
        let b = Matrix2::new(2.0, 1.0, 0.0, 0.5);
        assert!(matches!(block_diagonalize(&b), Err(Error::Precondition(_))));
    }

    #[test]
    fn block_diagonalize_random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut n = 0;
        while n < 500 {
            let b = Matrix2::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let Ok(bd) = block_diagonalize(&b) else {
                continue;
            };
            n += 1;
            assert!(bd.beta > 0.0);
            assert!((bd.reconstruct() - b).norm() <= 1e-9 * b.norm());
            assert_relative_eq!(bd.amplitude, bd.alpha.hypot(bd.beta), epsilon = 1e-15);
        }
    }

    #[test]
    fn lambda_min_examples() {
        assert_relative_eq!(
            lambda_min_sym(&DMatrix::identity(4, 4)).unwrap(),
            1.0,
            epsilon = 1e-14
        );
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        assert_relative_eq!(
            lambda_min_sym(&s).unwrap(),
            (3.0 - 5f64.sqrt()) / 2.0,
            max_relative = 1e-9
        );
        let s = DMatrix::from_diagonal(&DVector::from_row_slice(&[5.0, 3.0, 0.25]));
        assert_relative_eq!(lambda_min_sym(&s).unwrap(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn lambda_min_2x2_matches_general_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let (p, q, r) = (
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            );
            let s = DMatrix::from_row_slice(2, 2, &[p, r, r, q]);
            let general = lambda_min_sym(&s).unwrap();
            assert!((lambda_min_sym2(p, q, r) - general).abs() <= 1e-12 * (1.0 + s.norm()));
        }
        assert_relative_eq!(
            lambda_min_sym2(2.0, 1.0, 1.0),
            (3.0 - 5f64.sqrt()) / 2.0,
            max_relative = 1e-15
        );
        assert_eq!(lambda_min_sym2(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn lambda_min_rejects_asymmetric() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(lambda_min_sym(&s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn lambda_min_below_rayleigh_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let s = &g * g.transpose() - DMatrix::identity(5, 5) * 0.3;
        let lmin = lambda_min_sym(&s).unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
            let rq = (x.transpose() * &s * &x)[(0, 0)] / x.norm_squared();
            assert!(lmin <= rq + 1e-12);
        }
    }
}
