//! Partly calibrated array geometry and single-snapshot synthesis.
//!
//! A partly calibrated array is `K` identical linear subarrays of `M̄`
//! elements. Element positions inside a subarray (`intra`) are known; the
//! subarray offsets (`inter`) are not. Stacking each subarray's snapshot as a
//! column gives the multiple-measurement model `X = B̄(θ)·S + N`, where row `l`
//! of `S` is `s_l·(φ_1(θ_l), …, φ_K(θ_l))`.
//!
//! Angles are degrees at every public entry point and radians internally.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How subarray reference positions are laid out over the aperture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `ξ_k = (k-1)·D/(K-1)`.
    Equidistant,
    /// `ξ_1 = 0`, the rest i.i.d. uniform on `[0, D]`.
    UniformRandom,
}

/// Parameters for [`build_geometry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub layout: Layout,
    /// Number of subarrays `K`.
    pub subarrays: usize,
    /// Elements per subarray `M̄`.
    pub elements: usize,
    /// Intra-subarray element spacing `d`.
    pub spacing: f64,
    /// Nominal whole-array aperture `D` (span of the subarray offsets).
    pub aperture: f64,
    pub wavelength: f64,
    /// Only consulted for [`Layout::UniformRandom`].
    #[serde(default)]
    pub seed: u64,
}

/// Geometry of a partly calibrated array with a shared intra-subarray layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    wavelength: f64,
    intra: Vec<f64>,
    inter: Vec<f64>,
    aperture: f64,
}

impl ArrayGeometry {
    /// Builds a geometry from explicit displacements.
    ///
    /// `aperture` is the nominal `D` used for the resolution `Δ = λ/D`.
    pub fn new(wavelength: f64, intra: Vec<f64>, inter: Vec<f64>, aperture: f64) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if intra.len() < 2 || inter.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 elements and 2 subarrays, got {} and {}",
                intra.len(),
                inter.len()
            )));
        }
        if intra[0] != 0.0 || inter[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "first intra and inter displacement must be 0".into(),
            ));
        }
        if intra.iter().chain(inter.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("displacements must be finite".into()));
        }
        if !(aperture.is_finite() && aperture > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "aperture must be positive, got {aperture}"
            )));
        }
        Ok(Self {
            wavelength,
            intra,
            inter,
            aperture,
        })
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Intra-subarray displacements `η̄_1..η̄_M̄`.
    pub fn intra_displacements(&self) -> &[f64] {
        &self.intra
    }

    /// Inter-subarray displacements `ξ_1..ξ_K`.
    pub fn inter_displacements(&self) -> &[f64] {
        &self.inter
    }

    pub fn elements(&self) -> usize {
        self.intra.len()
    }

    pub fn subarrays(&self) -> usize {
        self.inter.len()
    }

    /// Nominal aperture `D`.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// Absolute element positions `ζ = ξ_k + η̄_m`, subarray-major.
    pub fn element_positions(&self) -> Vec<f64> {
        self.inter
            .iter()
            .flat_map(|xi| self.intra.iter().map(move |eta| xi + eta))
            .collect()
    }

    /// `max ζ - min ζ`.
    pub fn span(&self) -> f64 {
        let zeta = self.element_positions();
        let max = zeta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = zeta.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Whole-array resolution `Δ = λ/D` in sine space.
    pub fn resolution(&self) -> f64 {
        self.wavelength / self.aperture
    }

    /// `b̄(θ)` for `theta_deg` in degrees.
    pub fn steering_vector(&self, theta_deg: f64) -> Array1<Complex64> {
        steering_vector_rad(&self.intra, self.wavelength, theta_deg.to_radians())
    }

    /// `B̄(θ)`: one steering vector per column.
    pub fn steering_matrix(&self, directions_deg: &[f64]) -> Array2<Complex64> {
        let mut b = Array2::zeros((self.elements(), directions_deg.len()));
        for (l, &theta) in directions_deg.iter().enumerate() {
            b.column_mut(l).assign(&self.steering_vector(theta));
        }
        b
    }
}

/// Builds a geometry from a layout description.
pub fn build_geometry(spec: &GeometrySpec) -> Result<ArrayGeometry> {
    if spec.subarrays < 2 || spec.elements < 2 {
        return Err(Error::InvalidParameter(format!(
            "need K >= 2 and M >= 2, got K = {} and M = {}",
            spec.subarrays, spec.elements
        )));
    }
    if !(spec.spacing.is_finite() && spec.spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "element spacing must be positive, got {}",
            spec.spacing
        )));
    }
    let subarray_length = (spec.elements - 1) as f64 * spec.spacing;
    if !(spec.aperture.is_finite() && spec.aperture > subarray_length) {
        return Err(Error::InvalidParameter(format!(
            "aperture {} must exceed the subarray length {subarray_length}",
            spec.aperture
        )));
    }
    let intra = (0..spec.elements).map(|m| m as f64 * spec.spacing).collect();
    let inter = match spec.layout {
        Layout::Equidistant => {
            let step = spec.aperture / (spec.subarrays - 1) as f64;
            (0..spec.subarrays).map(|k| k as f64 * step).collect()
        }
        Layout::UniformRandom => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            std::iter::once(0.0)
                .chain((1..spec.subarrays).map(|_| rng.random_range(0.0..=spec.aperture)))
                .collect()
        }
    };
    ArrayGeometry::new(spec.wavelength, intra, inter, spec.aperture)
}

pub(crate) fn steering_vector_rad(intra: &[f64], wavelength: f64, theta: f64) -> Array1<Complex64> {
    let k = 2.0 * PI / wavelength * theta.sin();
    intra
        .iter()
        .map(|eta| Complex64::from_polar(1.0, k * eta))
        .collect()
}

/// `φ_k(θ, ξ) = exp(j·2π/λ·ξ_k·sin θ)`.
pub fn phase_offset(xi: f64, theta_deg: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI / wavelength * xi * theta_deg.to_radians().sin())
}

/// Emitters seen by the array plus the noise level of one realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceScenario {
    directions_deg: Vec<f64>,
    amplitudes: Vec<Complex64>,
    noise_variance: f64,
    seed: u64,
}

impl SourceScenario {
    pub fn new(
        directions_deg: Vec<f64>,
        amplitudes: Vec<Complex64>,
        noise_variance: f64,
        seed: u64,
    ) -> Result<Self> {
        if directions_deg.is_empty() {
            return Err(Error::InvalidParameter("at least one source is required".into()));
        }
        if directions_deg.len() != amplitudes.len() {
            return Err(Error::Shape(format!(
                "{} directions but {} amplitudes",
                directions_deg.len(),
                amplitudes.len()
            )));
        }
        if let Some(bad) = directions_deg
            .iter()
            .find(|t| !(t.is_finite() && t.abs() < 90.0))
        {
            return Err(Error::InvalidParameter(format!(
                "direction {bad} deg is outside (-90, 90)"
            )));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be nonnegative, got {noise_variance}"
            )));
        }
        let scenario = Self {
            directions_deg,
            amplitudes,
            noise_variance,
            seed,
        };
        if scenario.has_mixed_signs() {
            log::warn!(
                "source directions {:?} straddle broadside; separation assumes one-sided directions",
                scenario.directions_deg
            );
        }
        Ok(scenario)
    }

    /// Noise variance from an SNR in dB, with `SNR = 1/σ²`.
    pub fn noise_variance_from_snr_db(snr_db: f64) -> f64 {
        10f64.powf(-snr_db / 10.0)
    }

    pub fn directions_deg(&self) -> &[f64] {
        &self.directions_deg
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sources(&self) -> usize {
        self.directions_deg.len()
    }

    pub fn has_mixed_signs(&self) -> bool {
        let pos = self.directions_deg.iter().any(|&t| t > 0.0);
        let neg = self.directions_deg.iter().any(|&t| t < 0.0);
        pos && neg
    }
}

/// The `M̄×K` data matrix; column `k` is subarray `k`'s snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix(pub Array2<Complex64>);

impl MeasurementMatrix {
    pub fn data(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn elements(&self) -> usize {
        self.0.nrows()
    }

    pub fn subarrays(&self) -> usize {
        self.0.ncols()
    }

    /// Checks the shape against a geometry.
    pub fn check_geometry(&self, geometry: &ArrayGeometry) -> Result<()> {
        if self.0.dim() != (geometry.elements(), geometry.subarrays()) {
            return Err(Error::Shape(format!(
                "measurement is {}x{} but geometry is {}x{}",
                self.0.nrows(),
                self.0.ncols(),
                geometry.elements(),
                geometry.subarrays()
            )));
        }
        Ok(())
    }
}

/// The `L×K` source matrix `S`, row `l` = `s_l·φ(θ_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSignalMatrix(pub Array2<Complex64>);

impl SourceSignalMatrix {
    pub fn data(&self) -> &Array2<Complex64> {
        &self.0
    }

    /// Exact source rows for a geometry and a set of sources.
    pub fn from_sources(
        geometry: &ArrayGeometry,
        directions_deg: &[f64],
        amplitudes: &[Complex64],
    ) -> Self {
        let xi = geometry.inter_displacements();
        let s = Array2::from_shape_fn((directions_deg.len(), xi.len()), |(l, k)| {
            amplitudes[l] * phase_offset(xi[k], directions_deg[l], geometry.wavelength())
        });
        Self(s)
    }
}

/// Synthesizes `X = B̄·S + N` and returns it with the noise-free `S`.
///
/// Noise entries are circular Gaussian with variance `σ²` per complex entry,
/// drawn column by column (real part, then imaginary part) from a ChaCha8
/// stream seeded with the scenario seed.
pub fn synthesize(
    geometry: &ArrayGeometry,
    scenario: &SourceScenario,
) -> Result<(MeasurementMatrix, SourceSignalMatrix)> {
    if scenario.sources() >= geometry.elements() {
        return Err(Error::Identifiability {
            sources: scenario.sources(),
            elements: geometry.elements(),
        });
    }
    let b = geometry.steering_matrix(scenario.directions_deg());
    let s = SourceSignalMatrix::from_sources(geometry, scenario.directions_deg(), scenario.amplitudes());
    let mut x = b.dot(s.data());
    if scenario.noise_variance() > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed());
        let scale = (scenario.noise_variance() / 2.0).sqrt();
        for k in 0..x.ncols() {
            for m in 0..x.nrows() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                x[[m, k]] += Complex64::new(re, im) * scale;
            }
        }
    }
    Ok((MeasurementMatrix(x), s))
}
