//! JADE blind source separation: whitening, fourth-order sample cumulants,
//! eigen-matrices of the cumulant tensor and their joint approximate
//! diagonalization by complex Givens rotations.
//!
//! For `Y = C·H + N` (`N×T` data, `L` sources) the separation is
//! `Ĥ = Vᴴ·W·Y`, with `W` the `L×N` whitener and `V` the unitary joint
//! diagonalizer of the cumulant eigen-matrices.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, apply_left_adjoint, apply_right, hermitian_eigen};

/// Output of [`estimate_whitener`].
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningResult {
    /// `W`, `L×N`.
    pub whitener: Array2<Complex64>,
    /// Mean of the `N−L` smallest covariance eigenvalues.
    pub noise_estimate: f64,
    /// `Z = W·Y`, `L×T`.
    pub whitened: Array2<Complex64>,
    /// Full covariance spectrum, descending.
    pub covariance_eigenvalues: Vec<f64>,
}

/// Noise-debiased whitening from the top-`L` eigenpairs of `(1/T)·Y·Yᴴ`.
pub fn estimate_whitener(y: &ArrayView2<Complex64>, sources: usize) -> Result<WhiteningResult> {
    let (n, t) = y.dim();
    if sources == 0 || sources >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= L < N, got L = {sources}, N = {n}"
        )));
    }
    if t < sources {
        return Err(Error::InvalidParameter(format!(
            "need at least L = {sources} samples, got {t}"
        )));
    }
    let cov = y.dot(&linalg::adjoint(y)) / Complex64::new(t as f64, 0.0);
    let eig = hermitian_eigen(&cov.view())?;
    let values = eig.values.to_vec();
    let noise = values[sources..].iter().sum::<f64>() / (n - sources) as f64;
    let floor = 1e-12 * values[0].abs().max(f64::MIN_POSITIVE);
    let mut whitener = Array2::zeros((sources, n));
    for l in 0..sources {
        let excess = values[l] - noise;
        if !(excess > floor) {
            return Err(Error::RankDeficient { index: l, excess });
        }
        let scale = 1.0 / excess.sqrt();
        for c in 0..n {
            whitener[[l, c]] = eig.vectors[[c, l]].conj() * scale;
        }
    }
    let whitened = whitener.dot(y);
    Ok(WhiteningResult {
        whitener,
        noise_estimate: noise,
        whitened,
        covariance_eigenvalues: values,
    })
}

fn bilinear(u: &ArrayView1<Complex64>, v: &ArrayView1<Complex64>) -> Complex64 {
    u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Fourth-order sample cumulant
/// `(1/T)·(a⊙b)ᵀ(c⊙d) − (1/T²)·(aᵀb·cᵀd + aᵀc·bᵀd + aᵀd·bᵀc)`.
///
/// No conjugation is applied; callers pass conjugated rows where needed.
pub fn sample_cumulant(
    a: &ArrayView1<Complex64>,
    b: &ArrayView1<Complex64>,
    c: &ArrayView1<Complex64>,
    d: &ArrayView1<Complex64>,
) -> Result<Complex64> {
    let t = a.len();
    if b.len() != t || c.len() != t || d.len() != t || t == 0 {
        return Err(Error::Shape(format!(
            "cumulant arguments must share a nonzero length, got {}, {}, {}, {}",
            t,
            b.len(),
            c.len(),
            d.len()
        )));
    }
    let tf = t as f64;
    let quad: Complex64 = (0..t).map(|i| a[i] * b[i] * c[i] * d[i]).sum();
    let pairs = bilinear(a, b) * bilinear(c, d)
        + bilinear(a, c) * bilinear(b, d)
        + bilinear(a, d) * bilinear(b, c);
    Ok(quad / tf - pairs / (tf * tf))
}

/// Index of entry `(a, b)` (0-based) in the packed cumulant matrix: `a + b·L`.
pub fn pack_index(a: usize, b: usize, sources: usize) -> usize {
    a + b * sources
}

/// The `L²×L²` cumulant matrix with
/// `Q[a + b·L, d + c·L] = Cum(z_a, z_b*, z_c, z_d*)`.
pub fn cumulant_matrix(z: &ArrayView2<Complex64>) -> Array2<Complex64> {
    let l = z.nrows();
    let zc = z.mapv(|v| v.conj());
    let t = z.ncols() as f64;
    // Moments shared by every entry.
    let mut herm = Array2::<Complex64>::zeros((l, l)); // z_iᵀ z_j*
    let mut pseudo = Array2::<Complex64>::zeros((l, l)); // z_iᵀ z_j
    for i in 0..l {
        for j in 0..l {
            herm[[i, j]] = bilinear(&z.row(i), &zc.row(j));
            pseudo[[i, j]] = bilinear(&z.row(i), &z.row(j));
        }
    }
    let mut q = Array2::<Complex64>::zeros((l * l, l * l));
    for a in 0..l {
        for b in 0..l {
            for c in 0..l {
                for d in 0..l {
                    let quad: Complex64 = (0..z.ncols())
                        .map(|i| z[[a, i]] * zc[[b, i]] * z[[c, i]] * zc[[d, i]])
                        .sum();
                    let pairs = herm[[a, b]] * herm[[c, d]]
                        + pseudo[[a, c]] * pseudo[[b, d]].conj()
                        + herm[[a, d]] * herm[[c, b]];
                    q[[pack_index(a, b, l), pack_index(d, c, l)]] = quad / t - pairs / (t * t);
                }
            }
        }
    }
    q
}

/// Eigen-scaled cumulant matrices to be jointly diagonalized.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantMatrixSet {
    /// `ϱ_l·R_l`, `L` matrices of size `L×L`.
    pub matrices: Vec<Array2<Complex64>>,
    /// `ϱ_l`, the `L` dominant eigenvalues (by magnitude) of the cumulant matrix.
    pub eigenvalues: Vec<f64>,
    /// All `L²` eigenvalues, so the discarded part can be inspected.
    pub spectrum: Vec<f64>,
}

pub fn cumulant_matrix_set(z: &ArrayView2<Complex64>) -> Result<CumulantMatrixSet> {
    let l = z.nrows();
    if l == 0 || z.ncols() == 0 {
        return Err(Error::Shape("whitened data is empty".into()));
    }
    let q = cumulant_matrix(z);
    let eig = hermitian_eigen(&q.view())?;
    let mut matrices = Vec::with_capacity(l);
    let mut eigenvalues = Vec::with_capacity(l);
    for idx in 0..l {
        let rho = eig.values[idx];
        let r = Array2::from_shape_fn((l, l), |(a, b)| eig.vectors[[pack_index(a, b, l), idx]] * rho);
        matrices.push(r);
        eigenvalues.push(rho);
    }
    Ok(CumulantMatrixSet {
        matrices,
        eigenvalues,
        spectrum: eig.values.to_vec(),
    })
}

/// Stopping rule for [`joint_diagonalize`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointDiagOptions {
    pub max_sweeps: usize,
    /// A sweep whose rotations all have `|β|` below this ends the iteration.
    pub angle_threshold: f64,
}

impl Default for JointDiagOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            angle_threshold: 1e-8,
        }
    }
}

/// Output of [`joint_diagonalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryDiagonalizer {
    /// `V`, the product of all applied Givens factors.
    pub rotation: Array2<Complex64>,
    /// Off-diagonal energy of `{Vᴴ·M_l·V}` at exit.
    pub off_diagonal_energy: f64,
    /// Energy before the first sweep and after each completed sweep.
    pub energy_history: Vec<f64>,
    pub sweeps: usize,
    /// The transformed set `Vᴴ·M_l·V`.
    pub diagonalized: Vec<Array2<Complex64>>,
}

fn total_off_diagonal(set: &[Array2<Complex64>]) -> f64 {
    set.iter().map(|m| linalg::off_diagonal_energy(&m.view())).sum()
}

/// Dominant unit eigenvector of a real symmetric 3×3 matrix, first entry >= 0.
fn dominant_direction(g: &[[f64; 3]; 3]) -> [f64; 3] {
    let m = Array2::from_shape_fn((3, 3), |(i, j)| Complex64::new(g[i][j], 0.0));
    // Real input keeps the Jacobi rotations real.
    let eig = hermitian_eigen(&m.view()).expect("3x3 is square");
    let mut best = 0;
    for i in 1..3 {
        if eig.values[i] > eig.values[best] {
            best = i;
        }
    }
    let mut v = [
        eig.vectors[[0, best]].re,
        eig.vectors[[1, best]].re,
        eig.vectors[[2, best]].re,
    ];
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    if v[0] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Jointly diagonalizes a set of square matrices with one unitary `V`.
///
/// Sweeps visit the pairs `(m, n)`, `m < n`, in lexicographic order. For
/// each pair the rotation is read off the dominant eigenvector `η` of
/// `Re(OᴴO)`, where row `l` of `O` is
/// `[M_mm − M_nn, M_mn + M_nm, j(M_nm − M_mn)]`, giving
/// `α = √((1+η₁)/2)` and `β = (η₂ − jη₃)/(2α)`.
pub fn joint_diagonalize(set: &[Array2<Complex64>], options: JointDiagOptions) -> Result<UnitaryDiagonalizer> {
    let l = match set.first() {
        Some(m) => m.nrows(),
        None => return Err(Error::Shape("empty matrix set".into())),
    };
    if set.iter().any(|m| m.nrows() != l || m.ncols() != l) {
        return Err(Error::Shape(
            "joint diagonalization needs square matrices of one size".into(),
        ));
    }
    let mut mats: Vec<Array2<Complex64>> = set.to_vec();
    let mut v = Array2::<Complex64>::eye(l);
    let mut history = vec![total_off_diagonal(&mats)];
    let mut sweeps = 0;
    let j = Complex64::i();

    while sweeps < options.max_sweeps {
        let mut rotated = false;
        for m in 0..l.saturating_sub(1) {
            for n in (m + 1)..l {
                let mut g = [[0.0; 3]; 3];
                for r in &mats {
                    let o = [
                        r[[m, m]] - r[[n, n]],
                        r[[m, n]] + r[[n, m]],
                        j * (r[[n, m]] - r[[m, n]]),
                    ];
                    for (a, row) in g.iter_mut().enumerate() {
                        for (b, cell) in row.iter_mut().enumerate() {
                            *cell += (o[a].conj() * o[b]).re;
                        }
                    }
                }
                let eta = dominant_direction(&g);
                let alpha = ((1.0 + eta[0]) / 2.0).sqrt();
                let beta = Complex64::new(eta[1], -eta[2]) / (2.0 * alpha);
                if beta.norm() < options.angle_threshold {
                    continue;
                }
                rotated = true;
                let a = Complex64::new(alpha, 0.0);
                let (g_mm, g_mn, g_nm, g_nn) = (a, -beta.conj(), beta, a);
                for r in mats.iter_mut() {
                    apply_left_adjoint(r, m, n, g_mm, g_mn, g_nm, g_nn);
                    apply_right(r, m, n, g_mm, g_mn, g_nm, g_nn);
                }
                apply_right(&mut v, m, n, g_mm, g_mn, g_nm, g_nn);
            }
        }
        sweeps += 1;
        history.push(total_off_diagonal(&mats));
        if !rotated {
            break;
        }
    }

    Ok(UnitaryDiagonalizer {
        rotation: v,
        off_diagonal_energy: *history.last().unwrap(),
        energy_history: history,
        sweeps,
        diagonalized: mats,
    })
}

/// Every intermediate of one JADE pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub whitening: WhiteningResult,
    pub cumulants: CumulantMatrixSet,
    pub diagonalizer: UnitaryDiagonalizer,
    /// `Ĥ = Vᴴ·W·Y`, `L×T`.
    pub separated: Array2<Complex64>,
}

pub fn jade_separate(y: &ArrayView2<Complex64>, sources: usize, options: JointDiagOptions) -> Result<SeparationResult> {
    let whitening = estimate_whitener(y, sources)?;
    let cumulants = cumulant_matrix_set(&whitening.whitened.view())?;
    let diagonalizer = joint_diagonalize(&cumulants.matrices, options)?;
    let separated = linalg::adjoint(&diagonalizer.rotation.view()).dot(&whitening.whitened);
    Ok(SeparationResult {
        whitening,
        cumulants,
        diagonalizer,
        separated,
    })
}

/// JADE contrast `Σ_{r,p,q} |Cum(s_r, s_r*, s_p, s_q*)|²` over the rows of `S`.
///
/// Without `include_diagonal_triples` the `L` terms with `r = p = q` are
/// skipped; those never vanish for constant-modulus rows.
pub fn jade_cost(s: &ArrayView2<Complex64>, include_diagonal_triples: bool) -> f64 {
    let l = s.nrows();
    let sc = s.mapv(|v| v.conj());
    let mut total = 0.0;
    for r in 0..l {
        for p in 0..l {
            for q in 0..l {
                if !include_diagonal_triples && r == p && p == q {
                    continue;
                }
                let cum = sample_cumulant(&s.row(r), &sc.row(r), &s.row(p), &sc.row(q))
                    .expect("rows share a length");
                total += cum.norm_sqr();
            }
        }
    }
    total
}

/// The same contrast through `R` and `R̃`, valid when every row of `S` has
/// constant modulus: `Σ |R̃_rp·R̃*_rq + R_rq·R_pr|²`.
pub fn jade_cost_from_covariances(
    covariance: &Array2<Complex64>,
    pseudo_covariance: &Array2<Complex64>,
    include_diagonal_triples: bool,
) -> f64 {
    let l = covariance.nrows();
    let mut total = 0.0;
    for r in 0..l {
        for p in 0..l {
            for q in 0..l {
                if !include_diagonal_triples && r == p && p == q {
                    continue;
                }
                let v = pseudo_covariance[[r, p]] * pseudo_covariance[[r, q]].conj()
                    + covariance[[r, q]] * covariance[[p, r]];
                total += v.norm_sqr();
            }
        }
    }
    total
}

/// Per-row normalized correlation `|⟨ĥ_l, h_l⟩|/(‖ĥ_l‖‖h_l‖)` after the
/// best row permutation of `estimate` against `truth`.
pub fn aligned_row_correlations(estimate: &ArrayView2<Complex64>, truth: &ArrayView2<Complex64>) -> Vec<f64> {
    let l = truth.nrows();
    let norm = |r: ArrayView1<Complex64>| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let corr = Array2::from_shape_fn((l, l), |(i, j)| {
        let ip: Complex64 = estimate
            .row(i)
            .iter()
            .zip(truth.row(j).iter())
            .map(|(a, b)| a * b.conj())
            .sum();
        let d = norm(estimate.row(i)) * norm(truth.row(j));
        if d > 0.0 {
            ip.norm() / d
        } else {
            0.0
        }
    });
    let perm = crate::estimators::best_assignment(l, |i, j| -corr[[i, j]]);
    (0..l).map(|j| corr[[perm[j], j]]).collect()
}

/// `(1/T)·Z·Zᴴ`.
pub fn sample_covariance(z: &ArrayView2<Complex64>) -> Array2<Complex64> {
    z.dot(&linalg::adjoint(z)) / Complex64::new(z.ncols() as f64, 0.0)
}

/// Slice helper for tests and diagnostics.
pub fn row(m: &Array2<Complex64>, i: usize) -> Array1<Complex64> {
    m.slice(s![i, ..]).to_owned()
}
