//! Direction estimation from separated sources.
//!
//! The phase of each separated entry estimates the inter-subarray phase
//! offset `φ_l,k`. Directions then follow from either a matched-filter grid
//! search per source (MF) or a nonlinear least-squares refinement (NLS) that
//! alternates Armijo gradient steps in the amplitudes and the directions.

use itertools::Itertools;
use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::array_model::{steering_vector_rad, ArrayGeometry};
use crate::error::{Error, Result};
use crate::linalg;

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

/// Unit-modulus phase offsets recovered from separated rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOffsetEstimate {
    /// `φ̂`, `L×K`.
    pub offsets: Array2<Complex64>,
    /// Entries whose magnitude fell below the threshold; their offset is 1.
    pub degenerate_flags: Array2<bool>,
}

impl PhaseOffsetEstimate {
    pub fn sources(&self) -> usize {
        self.offsets.nrows()
    }

    pub fn subarrays(&self) -> usize {
        self.offsets.ncols()
    }
}

/// `1e-12·max|Ŝ|`.
pub fn default_magnitude_threshold(s: &ArrayView2<Complex64>) -> f64 {
    1e-12 * s.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Entry-wise `Ŝ/|Ŝ|`. With `threshold = None` the default relative floor is used.
pub fn estimate_phase_offsets(s: &ArrayView2<Complex64>, threshold: Option<f64>) -> PhaseOffsetEstimate {
    let floor = threshold.unwrap_or_else(|| default_magnitude_threshold(s));
    let degenerate_flags = s.mapv(|z| !(z.norm() >= floor) || z.norm() == 0.0);
    let offsets = ndarray::Zip::from(s)
        .and(&degenerate_flags)
        .map_collect(|z, &bad| if bad { Complex64::new(1.0, 0.0) } else { z / z.norm() });
    PhaseOffsetEstimate {
        offsets,
        degenerate_flags,
    }
}

/// Uniform search grid in degrees, `start + i·step` for `i = 0, 1, …` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            start: -89.99,
            stop: 89.99,
            step: 0.01,
        }
    }
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let ok = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite();
        if !ok || self.step <= 0.0 || self.stop < self.start {
            return Err(Error::InvalidParameter(format!(
                "empty or malformed grid: start {}, stop {}, step {}",
                self.start, self.stop, self.step
            )));
        }
        if self.start <= -90.0 || self.stop >= 90.0 {
            return Err(Error::InvalidParameter(format!(
                "grid [{}, {}] must lie inside (-90, 90) degrees",
                self.start, self.stop
            )));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| self.start + i as f64 * self.step).collect())
    }
}

/// Output of [`bss_mf`] and [`bss_nls`].
#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    pub directions_deg: Vec<f64>,
    /// Least-squares amplitudes at the reported directions; empty if the fit was singular.
    pub amplitudes: Vec<Complex64>,
    /// MF only: `(grid, one spectrum per source)`.
    pub spectra: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    pub iterations: usize,
    pub final_cost: f64,
    /// NLS only: cost after initialization and after every outer iteration.
    pub cost_history: Vec<f64>,
}

fn check_dims(x: &ArrayView2<Complex64>, geometry: &ArrayGeometry, offsets: &PhaseOffsetEstimate) -> Result<()> {
    if x.nrows() != geometry.elements() || x.ncols() != geometry.subarrays() {
        return Err(Error::Shape(format!(
            "measurements are {}x{}, geometry expects {}x{}",
            x.nrows(),
            x.ncols(),
            geometry.elements(),
            geometry.subarrays()
        )));
    }
    if offsets.subarrays() != geometry.subarrays() {
        return Err(Error::Shape(format!(
            "offsets cover {} subarrays, geometry has {}",
            offsets.subarrays(),
            geometry.subarrays()
        )));
    }
    Ok(())
}

/// `y_l = Σ_k φ̂*_l,k·x_k`, one column per source.
fn offset_compensated(x: &ArrayView2<Complex64>, offsets: &PhaseOffsetEstimate) -> Array2<Complex64> {
    x.dot(&offsets.offsets.t().mapv(|z| z.conj()))
}

/// Conjugated steering vectors over a grid, one row per grid point.
///
/// Reusable across measurements that share a geometry and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringTable {
    thetas: Vec<f64>,
    /// Row `g` is `b̄(θ_g)ᴴ`.
    rows: Array2<Complex64>,
    elements: usize,
}

impl SteeringTable {
    pub fn new(geometry: &ArrayGeometry, grid: &Grid) -> Result<Self> {
        let thetas = grid.points()?;
        let mut rows = Array2::zeros((thetas.len(), geometry.elements()));
        for (g, &t) in thetas.iter().enumerate() {
            rows.row_mut(g).assign(&geometry.steering_vector(t).mapv(|z| z.conj()));
        }
        Ok(Self {
            thetas,
            rows,
            elements: geometry.elements(),
        })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }
}

/// Matched-filter search: `θ̂_l = argmax_θ |Σ_k x_kᴴ·b̄(θ)·φ̂_l,k|` for each source.
pub fn bss_mf(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    grid: &Grid,
) -> Result<DoaEstimate> {
    bss_mf_with_table(x, geometry, offsets, &SteeringTable::new(geometry, grid)?)
}

/// [`bss_mf`] with a precomputed grid.
pub fn bss_mf_with_table(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    table: &SteeringTable,
) -> Result<DoaEstimate> {
    check_dims(x, geometry, offsets)?;
    if table.elements != geometry.elements() {
        return Err(Error::Shape(format!(
            "steering table has {} elements, geometry {}",
            table.elements,
            geometry.elements()
        )));
    }
    let thetas = table.thetas.clone();
    // |yᴴb| = |bᴴy|, so one product gives every source's spectrum.
    let response = table.rows.dot(&offset_compensated(x, offsets));
    let mut directions = Vec::with_capacity(offsets.sources());
    let mut spectra = Vec::with_capacity(offsets.sources());
    for l in 0..offsets.sources() {
        let spectrum: Vec<f64> = response.column(l).iter().map(|z| z.norm()).collect();
        let mut best = 0;
        for (i, v) in spectrum.iter().enumerate() {
            if *v > spectrum[best] {
                best = i;
            }
        }
        directions.push(thetas[best]);
        spectra.push(spectrum);
    }
    let (amplitudes, final_cost) = match least_squares_amplitudes(x, geometry, offsets, &directions) {
        Ok(s) => {
            let cost = nls_cost(x, geometry, offsets, &directions, &s)?;
            (s, cost)
        }
        Err(_) => (Vec::new(), linalg::frobenius_sq(x)),
    };
    Ok(DoaEstimate {
        directions_deg: directions,
        amplitudes,
        spectra: Some((thetas, spectra)),
        iterations: 1,
        final_cost,
        cost_history: Vec::new(),
    })
}

/// Model columns `B̄(θ)·Φ̂_k·s`, all `K` at once (`M̄×K`).
fn model(geometry: &ArrayGeometry, offsets: &PhaseOffsetEstimate, theta_rad: &[f64], s: &[Complex64]) -> Array2<Complex64> {
    let mut b = Array2::zeros((geometry.elements(), theta_rad.len()));
    for (l, &t) in theta_rad.iter().enumerate() {
        b.column_mut(l)
            .assign(&steering_vector_rad(geometry.intra_displacements(), geometry.wavelength(), t));
    }
    let weights = Array2::from_shape_fn((theta_rad.len(), offsets.subarrays()), |(l, k)| offsets.offsets[[l, k]] * s[l]);
    b.dot(&weights)
}

fn residual(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    theta_rad: &[f64],
    s: &[Complex64],
) -> Array2<Complex64> {
    x - &model(geometry, offsets, theta_rad, s)
}

fn check_params(offsets: &PhaseOffsetEstimate, theta: &[f64], s: &[Complex64]) -> Result<()> {
    if theta.len() != offsets.sources() || s.len() != offsets.sources() {
        return Err(Error::Shape(format!(
            "{} directions and {} amplitudes for {} sources",
            theta.len(),
            s.len(),
            offsets.sources()
        )));
    }
    Ok(())
}

/// `C(θ, s) = Σ_k ‖x_k − B̄(θ)·Φ̂_k·s‖²` with `θ` in degrees.
pub fn nls_cost(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    theta_deg: &[f64],
    s: &[Complex64],
) -> Result<f64> {
    check_dims(x, geometry, offsets)?;
    check_params(offsets, theta_deg, s)?;
    let rad: Vec<f64> = theta_deg.iter().map(|t| t.to_radians()).collect();
    Ok(linalg::frobenius_sq(&residual(x, geometry, offsets, &rad, s).view()))
}

/// Gradients of the NLS cost.
#[derive(Debug, Clone, PartialEq)]
pub struct NlsGradient {
    /// `∂C/∂θ_l`, per radian.
    pub theta: Vec<f64>,
    /// `∂C/∂Re s_l + j·∂C/∂Im s_l`.
    pub amplitude: Vec<Complex64>,
}

fn gradients_rad(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    theta_rad: &[f64],
    s: &[Complex64],
) -> NlsGradient {
    let r = residual(x, geometry, offsets, theta_rad, s);
    let eta = geometry.intra_displacements();
    let kappa = 2.0 * std::f64::consts::PI / geometry.wavelength();
    let mut theta = Vec::with_capacity(s.len());
    let mut amplitude = Vec::with_capacity(s.len());
    for (l, &t) in theta_rad.iter().enumerate() {
        let b = steering_vector_rad(eta, geometry.wavelength(), t);
        let db: Array1<Complex64> = b
            .iter()
            .zip(eta)
            .map(|(bm, e)| Complex64::new(0.0, kappa * e * t.cos()) * bm)
            .collect();
        let mut z = Complex64::new(0.0, 0.0);
        let mut w = Complex64::new(0.0, 0.0);
        for k in 0..r.ncols() {
            let rk = r.column(k);
            let phi = offsets.offsets[[l, k]];
            let bh_r: Complex64 = b.iter().zip(rk.iter()).map(|(u, v)| u.conj() * v).sum();
            let rh_db: Complex64 = rk.iter().zip(db.iter()).map(|(u, v)| u.conj() * v).sum();
            z += phi.conj() * bh_r;
            w += rh_db * phi;
        }
        amplitude.push(-2.0 * z);
        theta.push(-2.0 * (w * s[l]).re);
    }
    NlsGradient { theta, amplitude }
}

/// Analytic gradients at `(θ, s)`, `θ` given in degrees.
pub fn nls_gradients(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    theta_deg: &[f64],
    s: &[Complex64],
) -> Result<NlsGradient> {
    check_dims(x, geometry, offsets)?;
    check_params(offsets, theta_deg, s)?;
    let rad: Vec<f64> = theta_deg.iter().map(|t| t.to_radians()).collect();
    Ok(gradients_rad(x, geometry, offsets, &rad, s))
}

/// Amplitudes minimizing the NLS cost for fixed directions (normal equations).
pub fn least_squares_amplitudes(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    theta_deg: &[f64],
) -> Result<Vec<Complex64>> {
    check_dims(x, geometry, offsets)?;
    let l = offsets.sources();
    if theta_deg.len() != l {
        return Err(Error::Shape(format!("{} directions for {l} sources", theta_deg.len())));
    }
    let b = geometry.steering_matrix(theta_deg);
    let mut gram = Array2::<Complex64>::zeros((l, l));
    let mut rhs = vec![Complex64::new(0.0, 0.0); l];
    for k in 0..x.ncols() {
        let a = Array2::from_shape_fn(b.dim(), |(m, i)| b[[m, i]] * offsets.offsets[[i, k]]);
        let ah = linalg::adjoint(&a.view());
        gram = gram + ah.dot(&a);
        let ahx = ah.dot(&x.column(k));
        for (acc, v) in rhs.iter_mut().zip(ahx.iter()) {
            *acc += v;
        }
    }
    linalg::solve(&gram.view(), &rhs)
}

/// Armijo and stopping parameters for [`bss_nls`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NlsOptions {
    pub initial_step: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub max_halvings: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for NlsOptions {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_halvings: 50,
            max_iterations: 500,
            tolerance: 1e-10,
        }
    }
}

/// Backtracking along `−grad`; returns the accepted point and cost, if any.
fn armijo<F>(current: &[f64], cost: f64, grad: &[f64], options: &NlsOptions, eval: F) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let gnorm: f64 = grad.iter().map(|g| g * g).sum();
    if gnorm == 0.0 {
        return None;
    }
    let mut step = options.initial_step;
    for _ in 0..=options.max_halvings {
        let trial: Vec<f64> = current.iter().zip(grad).map(|(x, g)| x - step * g).collect();
        if let Some(c) = eval(&trial) {
            if c <= cost - options.sufficient_decrease * step * gnorm {
                return Some((trial, c));
            }
        }
        step *= options.backtrack;
    }
    None
}

fn split(v: &[Complex64]) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn join(v: &[f64]) -> Vec<Complex64> {
    v.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Alternating Armijo descent on the amplitudes then the directions.
///
/// Directions start at `init_deg` and amplitudes at their least-squares fit.
pub fn bss_nls(
    x: &ArrayView2<Complex64>,
    geometry: &ArrayGeometry,
    offsets: &PhaseOffsetEstimate,
    init_deg: &[f64],
    options: &NlsOptions,
) -> Result<DoaEstimate> {
    check_dims(x, geometry, offsets)?;
    if let Some(bad) = init_deg.iter().find(|t| !(t.is_finite() && t.abs() < 90.0)) {
        return Err(Error::Domain(format!("initial direction {bad} outside (-90, 90) degrees")));
    }
    let mut s = least_squares_amplitudes(x, geometry, offsets, init_deg)?;
    let mut theta: Vec<f64> = init_deg.iter().map(|t| t.to_radians()).collect();
    let cost_at = |t: &[f64], a: &[Complex64]| linalg::frobenius_sq(&residual(x, geometry, offsets, t, a).view());
    let mut cost = cost_at(&theta, &s);
    let mut history = vec![cost];
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let start = cost;

        let g = gradients_rad(x, geometry, offsets, &theta, &s);
        let gs = split(&g.amplitude);
        if gs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite amplitude gradient".into()));
        }
        if let Some((next, c)) = armijo(&split(&s), cost, &gs, options, |p| Some(cost_at(&theta, &join(p)))) {
            s = join(&next);
            cost = c;
        }

        let g = gradients_rad(x, geometry, offsets, &theta, &s);
        if g.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite direction gradient".into()));
        }
        let inside = |p: &[f64]| p.iter().all(|t| t.abs() < HALF_PI);
        if let Some((next, c)) = armijo(&theta, cost, &g.theta, options, |p| {
            if inside(p) {
                Some(cost_at(p, &s))
            } else {
                None
            }
        }) {
            theta = next;
            cost = c;
        }

        history.push(cost);
        if start <= 0.0 || (start - cost) / start < options.tolerance {
            break;
        }
    }

    if !cost.is_finite() {
        return Err(Error::Domain("non-finite cost".into()));
    }
    Ok(DoaEstimate {
        directions_deg: theta.iter().map(|t| t.to_degrees()).collect(),
        amplitudes: s,
        spectra: None,
        iterations,
        final_cost: cost,
        cost_history: history,
    })
}

/// Permutation `p` minimizing `Σ_j cost(p[j], j)` over all `n!` orderings.
/// Ties go to the lexicographically smallest `p`.
pub fn best_assignment<F: Fn(usize, usize) -> f64>(n: usize, cost: F) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in (0..n).permutations(n) {
        let total: f64 = p.iter().enumerate().map(|(j, &i)| cost(i, j)).sum();
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, p));
        }
    }
    best.map(|(_, p)| p).unwrap_or_default()
}

/// Aligns estimates with truths: `estimates[p[j]]` pairs with `truths[j]`.
pub fn match_sources(estimates: &[f64], truths: &[f64]) -> Result<Vec<usize>> {
    if estimates.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.len() > 8 {
        return Err(Error::InvalidParameter(format!(
            "exhaustive matching supports at most 8 sources, got {}",
            estimates.len()
        )));
    }
    Ok(best_assignment(truths.len(), |i, j| (estimates[i] - truths[j]).powi(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{build_geometry, synthesize, GeometrySpec, Layout, SourceScenario};

    fn spec() -> GeometrySpec {
        GeometrySpec {
            layout: Layout::UniformRandom,
            subarrays: 6,
            elements: 5,
            spacing: 0.5,
            aperture: 60.0,
            wavelength: 1.0,
            seed: 11,
        }
    }

    fn exact_offsets(geometry: &ArrayGeometry, dirs: &[f64]) -> PhaseOffsetEstimate {
        let ones = vec![Complex64::new(1.0, 0.0); dirs.len()];
        let s = crate::array_model::SourceSignalMatrix::from_sources(geometry, dirs, &ones);
        estimate_phase_offsets(&s.data().view(), None)
    }

    #[test]
    fn normalization_and_flags() {
        let s = ndarray::array![[Complex64::from_polar(3.0, 0.4), Complex64::new(0.0, 0.0)]];
        let p = estimate_phase_offsets(&s.view(), None);
        assert!((p.offsets[[0, 0]] - Complex64::from_polar(1.0, 0.4)).norm() < 1e-15);
        assert_eq!(p.offsets[[0, 1]], Complex64::new(1.0, 0.0));
        assert_eq!(p.degenerate_flags, ndarray::array![[false, true]]);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let g = Grid { start: 1.0, stop: 0.0, step: 0.01 };
        assert!(matches!(g.points(), Err(Error::InvalidParameter(_))));
        let g = Grid { start: -90.0, stop: 0.0, step: 0.01 };
        assert!(g.points().is_err());
        let g = Grid { start: 0.0, stop: 1.0, step: 0.25 };
        assert_eq!(g.points().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn mf_hits_on_grid_truth() {
        let geometry = build_geometry(&spec()).unwrap();
        let scenario = SourceScenario::new(vec![12.5], vec![Complex64::new(0.7, -0.2)], 0.0, 1).unwrap();
        let (x, _) = synthesize(&geometry, &scenario).unwrap();
        let offsets = exact_offsets(&geometry, &[12.5]);
        let est = bss_mf(&x.data().view(), &geometry, &offsets, &Grid::default()).unwrap();
        assert!((est.directions_deg[0] - 12.5).abs() < 1e-9);
        assert!(est.final_cost < 1e-20);
    }

    #[test]
    fn nls_cost_examples() {
        let geometry = build_geometry(&spec()).unwrap();
        let dirs = [3.0, -20.0];
        let amps = [Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.8)];
        let scenario = SourceScenario::new(dirs.to_vec(), amps.to_vec(), 0.0, 1).unwrap();
        let (x, _) = synthesize(&geometry, &scenario).unwrap();
        let offsets = exact_offsets(&geometry, &dirs);
        let xv = x.data().view();
        assert!(nls_cost(&xv, &geometry, &offsets, &dirs, &amps).unwrap() < 1e-24);
        let zero = [Complex64::new(0.0, 0.0); 2];
        let energy = linalg::frobenius_sq(&xv);
        assert!((nls_cost(&xv, &geometry, &offsets, &dirs, &zero).unwrap() - energy).abs() < 1e-9 * energy);
        let s = least_squares_amplitudes(&xv, &geometry, &offsets, &dirs).unwrap();
        for (a, b) in s.iter().zip(&amps) {
            assert!((a - b).norm() < 1e-10);
        }
        let est = bss_nls(&xv, &geometry, &offsets, &dirs, &NlsOptions::default()).unwrap();
        for (a, b) in est.directions_deg.iter().zip(&dirs) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn nls_rejects_out_of_domain_start() {
        let geometry = build_geometry(&spec()).unwrap();
        let offsets = exact_offsets(&geometry, &[0.0]);
        let x = Array2::<Complex64>::zeros((5, 6));
        assert!(matches!(
            bss_nls(&x.view(), &geometry, &offsets, &[90.0], &NlsOptions::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn matching_examples() {
        assert_eq!(match_sources(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), vec![0, 1, 2]);
        assert_eq!(match_sources(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), vec![2, 1, 0]);
        assert!(matches!(match_sources(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        // Tie: both orderings cost the same, lexicographic order wins.
        assert_eq!(match_sources(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), vec![0, 1]);
    }
}
