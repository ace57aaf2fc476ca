//! Small dense complex kernels: Hermitian eigendecomposition by cyclic
//! Jacobi rotations and a pivoted linear solve.
//!
//! Matrices here are at most a few dozen rows (the cumulant matrix is
//! `L²×L²`), so clarity wins over blocking.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Conjugate transpose.
pub fn adjoint(a: &ArrayView2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}

/// Sum of squared moduli of the off-diagonal entries.
pub fn off_diagonal_energy(a: &ArrayView2<Complex64>) -> f64 {
    a.indexed_iter()
        .filter(|((i, j), _)| i != j)
        .map(|(_, z)| z.norm_sqr())
        .sum()
}

pub fn frobenius_sq(a: &ArrayView2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Eigen-decomposition `A = U·diag(λ)·Uᴴ` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Real eigenvalues, ordered by descending magnitude.
    pub values: Array1<f64>,
    /// Unit eigenvectors as columns, in the same order as `values`.
    pub vectors: Array2<Complex64>,
}

/// Cyclic Jacobi eigen-solver for Hermitian matrices.
///
/// Each rotation first removes the phase of the pivot `a_pq`, then applies
/// the real symmetric Jacobi rotation. Eigenpairs are returned sorted by
/// `|λ|` descending; equal magnitudes keep their diagonal order.
pub fn hermitian_eigen(a: &ArrayView2<Complex64>) -> Result<HermitianEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    // Symmetrize so tiny asymmetries from accumulation do not leak in.
    let mut m = Array2::from_shape_fn((n, n), |(i, j)| 0.5 * (a[[i, j]] + a[[j, i]].conj()));
    let mut v = Array2::<Complex64>::eye(n);
    let total = frobenius_sq(&m.view()).max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_energy(&m.view()) <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = m[[p, q]];
                let gabs = g.norm();
                if gabs <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let phase = g / gabs;
                let theta = (aqq - app) / (2.0 * gabs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Columns p, q are mixed by G = diag(1, e^{-jα})·[[c, s], [-s, c]].
                let g_pp = Complex64::new(c, 0.0);
                let g_pq = Complex64::new(s, 0.0);
                let g_qp = -phase.conj() * s;
                let g_qq = phase.conj() * c;
                apply_right(&mut m, p, q, g_pp, g_pq, g_qp, g_qq);
                apply_left_adjoint(&mut m, p, q, g_pp, g_pq, g_qp, g_qq);
                apply_right(&mut v, p, q, g_pp, g_pq, g_qp, g_qq);
                m[[p, q]] = Complex64::new(0.0, 0.0);
                m[[q, p]] = Complex64::new(0.0, 0.0);
                m[[p, p]].im = 0.0;
                m[[q, q]].im = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order for ties.
    order.sort_by(|&i, &j| m[[j, j]].re.abs().total_cmp(&m[[i, i]].re.abs()));
    let values = order.iter().map(|&i| m[[i, i]].re).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    Ok(HermitianEigen { values, vectors })
}

/// `A ← A·G` where `G` is identity except on the `(p, q)` block.
pub(crate) fn apply_right(
    a: &mut Array2<Complex64>,
    p: usize,
    q: usize,
    g_pp: Complex64,
    g_pq: Complex64,
    g_qp: Complex64,
    g_qq: Complex64,
) {
    for r in 0..a.nrows() {
        let ap = a[[r, p]];
        let aq = a[[r, q]];
        a[[r, p]] = ap * g_pp + aq * g_qp;
        a[[r, q]] = ap * g_pq + aq * g_qq;
    }
}

/// `A ← Gᴴ·A` for the same block form as [`apply_right`].
pub(crate) fn apply_left_adjoint(
    a: &mut Array2<Complex64>,
    p: usize,
    q: usize,
    g_pp: Complex64,
    g_pq: Complex64,
    g_qp: Complex64,
    g_qq: Complex64,
) {
    for c in 0..a.ncols() {
        let ap = a[[p, c]];
        let aq = a[[q, c]];
        a[[p, c]] = g_pp.conj() * ap + g_qp.conj() * aq;
        a[[q, c]] = g_pq.conj() * ap + g_qq.conj() * aq;
    }
}

/// Solves `A·x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &ArrayView2<Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve needs square A and matching b, got {}x{} and {}",
            n,
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.to_owned();
    let mut rhs = b.to_vec();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].norm().total_cmp(&m[[j, col]].norm()))
            .unwrap();
        if m[[pivot, col]].norm() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateInput(format!(
                "singular system at column {col}"
            )));
        }
        if pivot != col {
            for c in 0..n {
                m.swap([pivot, c], [col, c]);
            }
            rhs.swap(pivot, col);
        }
        let d = m[[col, col]];
        for r in (col + 1)..n {
            let f = m[[r, col]] / d;
            if f.norm() == 0.0 {
                continue;
            }
            for c in col..n {
                let v = m[[col, c]];
                m[[r, c]] -= f * v;
            }
            let v = rhs[col];
            rhs[r] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in (r + 1)..n {
            acc -= m[[r, c]] * x[c];
        }
        x[r] = acc / m[[r, r]];
    }
    Ok(x)
}
