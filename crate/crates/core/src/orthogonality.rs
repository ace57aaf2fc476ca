//! Cross-covariance of the source rows and the closed-form statistics that
//! describe how orthogonal they are for randomly placed subarrays.
//!
//! With `ρ = πD/λ·(sin θ_i − sin θ_j)` and `ξ_k ~ U[0, D]`:
//!
//! ```text
//! |E[R_ij]|   = |sin ρ / ρ|
//! E[|R_ij|²]  = 1/K + (1 − 1/K)·|sin ρ / ρ|²
//! ```
//!
//! and for the whole array the Dirichlet kernel of one subarray multiplies
//! both. Separations are reported as `(sin θ_i − sin θ_j)/Δ` with `Δ = λ/D`,
//! so `ρ = π·u` on that axis.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::array_model::{ArrayGeometry, GeometrySpec, SourceSignalMatrix};
use crate::error::{Error, Result};

const SERIES_CUTOFF: f64 = 1e-8;

/// `R = (1/K)·S·Sᴴ` and the pseudo-covariance `R̃ = (1/K)·S·Sᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceCrossCovariance {
    pub matrix: Array2<Complex64>,
    pub conjugate_matrix: Array2<Complex64>,
}

pub fn cross_covariance(s: &SourceSignalMatrix) -> SourceCrossCovariance {
    let s = s.data();
    let k = s.ncols() as f64;
    let sh = s.t().mapv(|z| z.conj());
    let matrix = s.dot(&sh) / Complex64::new(k, 0.0);
    let conjugate_matrix = s.dot(&s.t()) / Complex64::new(k, 0.0);
    SourceCrossCovariance {
        matrix,
        conjugate_matrix,
    }
}

/// Largest normalized inner product between two distinct source rows.
pub fn coherence(s: &SourceSignalMatrix) -> Result<f64> {
    let s = s.data();
    if s.nrows() < 2 {
        return Err(Error::InvalidParameter(
            "coherence needs at least two rows".into(),
        ));
    }
    let norms: Vec<f64> = s
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::DegenerateInput(format!("source row {i} is zero")));
    }
    let mut mu: f64 = 0.0;
    for i in 0..s.nrows() {
        for j in 0..s.nrows() {
            if i == j {
                continue;
            }
            let ip: Complex64 = s
                .row(j)
                .iter()
                .zip(s.row(i).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            mu = mu.max(ip.norm() / (norms[i] * norms[j]));
        }
    }
    Ok(mu.min(1.0))
}

/// `sin x / x` with the analytic limit at the origin.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `sin(M·φ) / (M·sin φ)`, continued through the zeros of `sin φ`.
pub fn dirichlet(m: usize, phi: f64) -> f64 {
    let m = m as f64;
    if phi.sin().abs() < SERIES_CUTOFF {
        (m * phi).cos() / phi.cos()
    } else {
        (m * phi).sin() / (m * phi.sin())
    }
}

/// `(|E[R]|, E[|R|²])` for `ξ_k ~ U[0, D]`.
pub fn expected_correlation(rho: f64, subarrays: usize) -> (f64, f64) {
    let k = subarrays.max(1) as f64;
    let mag = sinc(rho).abs();
    (mag, 1.0 / k + (1.0 - 1.0 / k) * mag * mag)
}

/// Closed-form statistics for one source pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationStatistics {
    /// `πD/λ·(sin θ_i − sin θ_j)`.
    pub rho: f64,
    /// `πd/λ·(sin θ_i − sin θ_j)`.
    pub varphi: f64,
    pub expected_magnitude: f64,
    pub expected_power: f64,
    /// `M_ij = sin(M̄φ)/(M̄ sin φ)`.
    pub dirichlet_factor: f64,
}

fn pair_phases(theta_i_deg: f64, theta_j_deg: f64, spec: &GeometrySpec) -> (f64, f64) {
    let diff = theta_i_deg.to_radians().sin() - theta_j_deg.to_radians().sin();
    (
        PI * spec.aperture / spec.wavelength * diff,
        PI * spec.spacing / spec.wavelength * diff,
    )
}

/// Statistics of the subarray cross-covariance `R_ij`.
pub fn correlation_statistics(theta_i_deg: f64, theta_j_deg: f64, spec: &GeometrySpec) -> CorrelationStatistics {
    let (rho, varphi) = pair_phases(theta_i_deg, theta_j_deg, spec);
    let (expected_magnitude, expected_power) = expected_correlation(rho, spec.subarrays);
    CorrelationStatistics {
        rho,
        varphi,
        expected_magnitude,
        expected_power,
        dirichlet_factor: dirichlet(spec.elements, varphi),
    }
}

/// Statistics of the whole-array angular correlation coefficient `G_ij`.
pub fn full_array_correlation(theta_i_deg: f64, theta_j_deg: f64, spec: &GeometrySpec) -> CorrelationStatistics {
    let base = correlation_statistics(theta_i_deg, theta_j_deg, spec);
    let m = base.dirichlet_factor;
    CorrelationStatistics {
        expected_magnitude: m.abs() * base.expected_magnitude,
        expected_power: m * m * base.expected_power,
        ..base
    }
}

/// `(1/K)·Σ_k exp(j·2π/λ·ξ_k·(sin θ_i − sin θ_j))` for unit-amplitude sources.
pub fn direct_correlation(geometry: &ArrayGeometry, theta_i_deg: f64, theta_j_deg: f64) -> Complex64 {
    let diff = theta_i_deg.to_radians().sin() - theta_j_deg.to_radians().sin();
    let c = 2.0 * PI / geometry.wavelength() * diff;
    let xi = geometry.inter_displacements();
    xi.iter()
        .map(|x| Complex64::from_polar(1.0, c * x))
        .sum::<Complex64>()
        / xi.len() as f64
}

/// `(sin θ_i − sin θ_j)/Δ`.
pub fn separation_over_delta(theta_i_deg: f64, theta_j_deg: f64, resolution: f64) -> f64 {
    (theta_i_deg.to_radians().sin() - theta_j_deg.to_radians().sin()) / resolution
}

/// Direction whose sine exceeds `sin θ_ref` by `separation·Δ`.
pub fn direction_at_separation(theta_ref_deg: f64, separation: f64, resolution: f64) -> Result<f64> {
    let s = theta_ref_deg.to_radians().sin() + separation * resolution;
    if !(s.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "separation {separation} from {theta_ref_deg} deg leaves the visible region"
        )));
    }
    Ok(s.asin().to_degrees())
}

/// One row of the expected-correlation curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedCurvePoint {
    pub separation_over_delta: f64,
    pub expected_magnitude: f64,
    pub expected_power: f64,
}

pub fn expected_curve(separations: &[f64], subarrays: usize) -> Vec<ExpectedCurvePoint> {
    separations
        .iter()
        .map(|&u| {
            let (m, p) = expected_correlation(PI * u, subarrays);
            ExpectedCurvePoint {
                separation_over_delta: u,
                expected_magnitude: m,
                expected_power: p,
            }
        })
        .collect()
}

/// Sample moments of `R_ij` and `G_ij` over random subarray placements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalCorrelation {
    pub draws: usize,
    pub mean_r: Complex64,
    pub mean_r_power: f64,
    /// Standard error of `mean_r_power`.
    pub r_power_std_err: f64,
    pub mean_g: Complex64,
    pub mean_g_power: f64,
    pub g_power_std_err: f64,
}

/// Monte-Carlo moments with every `ξ_k` (including the first) drawn
/// i.i.d. from `U[0, D]`, and `η̄_m = (m−1)·d`.
///
/// `G` is evaluated by direct summation over all `K·M̄` element positions.
pub fn empirical_correlation(
    sin_separation: f64,
    spec: &GeometrySpec,
    draws: usize,
    seed: u64,
) -> EmpiricalCorrelation {
    let c = 2.0 * PI / spec.wavelength * sin_separation;
    let k = spec.subarrays;
    let m = spec.elements;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xi = vec![0.0; k];
    let (mut sum_r, mut sum_g) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    let (mut sum_rp, mut sum_rp2, mut sum_gp, mut sum_gp2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        for x in xi.iter_mut() {
            *x = rng.random_range(0.0..=spec.aperture);
        }
        let r: Complex64 = xi.iter().map(|x| Complex64::from_polar(1.0, c * x)).sum::<Complex64>() / k as f64;
        let mut g = Complex64::new(0.0, 0.0);
        for x in &xi {
            for e in 0..m {
                g += Complex64::from_polar(1.0, c * (x + e as f64 * spec.spacing));
            }
        }
        g /= (k * m) as f64;
        let (rp, gp) = (r.norm_sqr(), g.norm_sqr());
        sum_r += r;
        sum_g += g;
        sum_rp += rp;
        sum_rp2 += rp * rp;
        sum_gp += gp;
        sum_gp2 += gp * gp;
    }
    let n = draws.max(1) as f64;
    let std_err = |s: f64, s2: f64| {
        let mean = s / n;
        ((s2 / n - mean * mean).max(0.0) / n).sqrt()
    };
    EmpiricalCorrelation {
        draws,
        mean_r: sum_r / n,
        mean_r_power: sum_rp / n,
        r_power_std_err: std_err(sum_rp, sum_rp2),
        mean_g: sum_g / n,
        mean_g_power: sum_gp / n,
        g_power_std_err: std_err(sum_gp, sum_gp2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{build_geometry, Layout};
    use ndarray::array;

    fn spec() -> GeometrySpec {
        GeometrySpec {
            layout: Layout::Equidistant,
            subarrays: 10,
            elements: 10,
            spacing: 0.5,
            aperture: 450.0,
            wavelength: 1.0,
            seed: 0,
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unit_rows_have_unit_diagonal() {
        let g = build_geometry(&spec()).unwrap();
        let s = SourceSignalMatrix::from_sources(&g, &[1.2, 14.2, -3.0], &[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0)]);
        let r = cross_covariance(&s);
        for i in 0..3 {
            assert!((r.matrix[[i, i]] - 1.0).norm() < 1e-12);
            for j in 0..3 {
                assert!((r.matrix[[i, j]] - r.matrix[[j, i]].conj()).norm() < 1e-12);
                assert!((r.conjugate_matrix[[i, j]] - r.conjugate_matrix[[j, i]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_column_is_fully_coherent() {
        let s = SourceSignalMatrix(array![[c(0.6, 0.8)], [c(0.0, -1.0)]]);
        let r = cross_covariance(&s);
        assert!((r.matrix[[1, 0]].norm() - 1.0).abs() < 1e-12);
        assert!((coherence(&s).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_extremes() {
        let n = 4;
        let dft = Array2::from_shape_fn((3, n), |(l, k)| {
            Complex64::from_polar(1.0, 2.0 * PI * (l * k) as f64 / n as f64)
        });
        assert!(coherence(&SourceSignalMatrix(dft)).unwrap() < 1e-12);
        let same = array![[c(1.0, 2.0), c(3.0, -1.0)], [c(1.0, 2.0), c(3.0, -1.0)]];
        assert!((coherence(&SourceSignalMatrix(same)).unwrap() - 1.0).abs() < 1e-12);
        let zero = array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        assert!(matches!(
            coherence(&SourceSignalMatrix(zero)),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn coherence_matches_scaled_cross_covariance() {
        let g = build_geometry(&spec()).unwrap();
        let amps = [Complex64::from_polar(1.0, PI / 5.0), Complex64::from_polar(3.0, 3.0 * PI / 5.0)];
        let s = SourceSignalMatrix::from_sources(&g, &[1.2, 1.4], &amps);
        let r = cross_covariance(&s);
        let expect = r.matrix[[0, 1]].norm() / (amps[0].norm() * amps[1].norm());
        assert!((coherence(&s).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn expected_correlation_examples() {
        let (m, p) = expected_correlation(0.0, 10);
        assert_eq!((m, p), (1.0, 1.0));
        let (m, p) = expected_correlation(1e-10, 10);
        assert!((m - 1.0).abs() < 1e-15 && (p - 1.0).abs() < 1e-15);
        let (m, p) = expected_correlation(PI, 10);
        assert!(m < 1e-15);
        assert!((p - 0.1).abs() < 1e-15);
        let (m, _) = expected_correlation(PI / 2.0, 10);
        assert!((m - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_limits() {
        assert_eq!(dirichlet(10, 0.0), 1.0);
        assert!((dirichlet(10, PI) - (10.0 * PI).cos() / PI.cos()).abs() < 1e-12);
        assert!(dirichlet(10, PI / 10.0).abs() < 1e-15);
        assert!((dirichlet(1, 0.7) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_array_zero_at_subarray_null() {
        let sp = spec();
        let stats = full_array_correlation(1.2, 1.2, &sp);
        assert_eq!(
            (stats.expected_magnitude, stats.expected_power, stats.dirichlet_factor),
            (1.0, 1.0, 1.0)
        );
        let t1 = 1.2f64;
        let t2 = direction_at_separation(t1, 1.0, sp.wavelength / (sp.elements as f64 * sp.spacing)).unwrap();
        let stats = full_array_correlation(t2, t1, &sp);
        assert!(stats.dirichlet_factor.abs() < 1e-12);
        assert!(stats.expected_magnitude < 1e-12);
    }

    #[test]
    fn full_array_with_one_element_is_the_subarray_statistic() {
        let sp = GeometrySpec { elements: 1, ..spec() };
        for (a, b) in [(1.2, 1.3), (0.0, 10.0), (-5.0, 40.0)] {
            let s = full_array_correlation(a, b, &sp);
            let (m, p) = expected_correlation(s.rho, sp.subarrays);
            assert_eq!(s.dirichlet_factor, 1.0);
            assert!((s.expected_magnitude - m).abs() < 1e-15);
            assert!((s.expected_power - p).abs() < 1e-15);
        }
    }

    #[test]
    fn direct_correlation_matches_cross_covariance() {
        let g = build_geometry(&spec()).unwrap();
        let s = SourceSignalMatrix::from_sources(&g, &[1.2, 14.2], &[c(1.0, 0.0), c(1.0, 0.0)]);
        let r = cross_covariance(&s);
        assert!((direct_correlation(&g, 14.2, 1.2) - r.matrix[[1, 0]]).norm() < 1e-12);
    }

    #[test]
    fn separation_axis_round_trip() {
        let delta = 1.0 / 450.0;
        let t2 = direction_at_separation(1.2, 2.5, delta).unwrap();
        assert!((separation_over_delta(t2, 1.2, delta) - 2.5).abs() < 1e-9);
        assert!(direction_at_separation(89.0, 1000.0, delta).is_err());
    }

    #[test]
    fn empirical_power_tracks_closed_form() {
        let sp = spec();
        for u in [0.3, 1.0, 2.5] {
            let e = empirical_correlation(u / sp.aperture, &sp, 20_000, 11);
            let (_, p) = expected_correlation(PI * u, sp.subarrays);
            assert!(
                (e.mean_r_power - p).abs() < 4.0 * e.r_power_std_err,
                "u = {u}: {} vs {p}",
                e.mean_r_power
            );
        }
    }
}
