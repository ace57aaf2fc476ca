//! Seeded Monte-Carlo runner.
//!
//! Every trial draws its noise from a seed derived only from
//! `(base_seed, sweep_index, trial_index)`, so results do not depend on how
//! trials are scheduled across threads.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array_model::{build_geometry, synthesize, ArrayGeometry, GeometrySpec, SourceScenario};
use crate::error::{Error, Result};
use crate::estimators::{bss_mf_with_table, bss_nls, estimate_phase_offsets, match_sources, Grid, NlsOptions, SteeringTable};
use crate::jade::{jade_separate, JointDiagOptions};
use crate::orthogonality::{direct_correlation, direction_at_separation, separation_over_delta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mf,
    Nls,
}

/// What varies across sweep points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", content = "values")]
pub enum SweepAxis {
    #[default]
    None,
    /// SNR values in dB.
    Snr(Vec<f64>),
    /// Second-source offsets `v`: `sin θ₂ = sin θ₁ + v·Δ`.
    Separation(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialConfig {
    pub geometry: GeometrySpec,
    pub directions_deg: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    /// `f64::INFINITY` gives noise-free data.
    pub snr_db: f64,
    pub estimator: EstimatorKind,
    pub sweep: SweepAxis,
    pub trials: usize,
    pub base_seed: u64,
    pub grid: Grid,
    pub nls: NlsOptions,
    pub joint_diagonalization: JointDiagOptions,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("at least one trial is required".into()));
        }
        if self.directions_deg.len() != self.amplitudes.len() {
            return Err(Error::Shape(format!(
                "{} directions but {} amplitudes",
                self.directions_deg.len(),
                self.amplitudes.len()
            )));
        }
        let values = match &self.sweep {
            SweepAxis::None => &[][..],
            SweepAxis::Snr(v) | SweepAxis::Separation(v) => v.as_slice(),
        };
        if matches!(self.sweep, SweepAxis::Snr(_) | SweepAxis::Separation(_)) && values.is_empty() {
            return Err(Error::InvalidParameter("sweep has no values".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("sweep values must be finite and sorted".into()));
        }
        if matches!(self.sweep, SweepAxis::Separation(_)) && self.directions_deg.len() != 2 {
            return Err(Error::InvalidParameter(
                "a separation sweep needs exactly two sources".into(),
            ));
        }
        build_geometry(&self.geometry)?;
        Ok(())
    }

    /// Abscissa values; a single `NaN` point when nothing is swept.
    pub fn sweep_values(&self) -> Vec<f64> {
        match &self.sweep {
            SweepAxis::None => vec![f64::NAN],
            SweepAxis::Snr(v) | SweepAxis::Separation(v) => v.clone(),
        }
    }

    /// `(directions, snr_db)` at one sweep point.
    pub fn point(&self, geometry: &ArrayGeometry, sweep_index: usize) -> Result<(Vec<f64>, f64)> {
        match &self.sweep {
            SweepAxis::None => Ok((self.directions_deg.clone(), self.snr_db)),
            SweepAxis::Snr(v) => Ok((self.directions_deg.clone(), v[sweep_index])),
            SweepAxis::Separation(v) => {
                let second = direction_at_separation(self.directions_deg[0], v[sweep_index], geometry.resolution())?;
                Ok((vec![self.directions_deg[0], second], self.snr_db))
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(base) ^ sweep) ^ trial)`.
pub fn trial_seed(base_seed: u64, sweep_index: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ sweep_index) ^ trial_index)
}

/// Estimates of one trial, aligned to the truths with [`match_sources`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub truths_deg: Vec<f64>,
    pub mf: std::result::Result<Vec<f64>, String>,
    /// Present when the configured estimator is NLS.
    pub nls: Option<std::result::Result<Vec<f64>, String>>,
    /// Accepted NLS costs, empty otherwise.
    pub nls_cost_history: Vec<f64>,
}

impl TrialOutcome {
    pub fn estimates(&self, kind: EstimatorKind) -> Option<&std::result::Result<Vec<f64>, String>> {
        match kind {
            EstimatorKind::Mf => Some(&self.mf),
            EstimatorKind::Nls => self.nls.as_ref(),
        }
    }
}

fn aligned(estimates: &[f64], truths: &[f64]) -> Result<Vec<f64>> {
    let perm = match_sources(estimates, truths)?;
    Ok(perm.iter().map(|&i| estimates[i]).collect())
}

/// One synthesize → separate → offsets → estimate pass.
pub fn run_trial(config: &TrialConfig, sweep_index: usize, trial_index: usize) -> Result<TrialOutcome> {
    let geometry = build_geometry(&config.geometry)?;
    let table = SteeringTable::new(&geometry, &config.grid)?;
    run_trial_with(config, &geometry, &table, sweep_index, trial_index)
}

fn run_trial_with(
    config: &TrialConfig,
    geometry: &ArrayGeometry,
    table: &SteeringTable,
    sweep_index: usize,
    trial_index: usize,
) -> Result<TrialOutcome> {
    let (truths, snr_db) = config.point(geometry, sweep_index)?;
    let seed = trial_seed(config.base_seed, sweep_index as u64, trial_index as u64);
    let noise = SourceScenario::noise_variance_from_snr_db(snr_db);
    let scenario = SourceScenario::new(truths.clone(), config.amplitudes.clone(), noise, seed)?;
    let (x, _) = synthesize(geometry, &scenario)?;
    let xv = x.data().view();
    let sources = truths.len();

    let mf_raw = jade_separate(&xv, sources, config.joint_diagonalization).and_then(|sep| {
        let offsets = estimate_phase_offsets(&sep.separated.view(), None);
        let mf = bss_mf_with_table(&xv, geometry, &offsets, table)?;
        Ok((offsets, mf))
    });

    let (mf, nls, history) = match mf_raw {
        Err(e) => {
            let nls = (config.estimator == EstimatorKind::Nls).then(|| Err(e.to_string()));
            (Err(e.to_string()), nls, Vec::new())
        }
        Ok((offsets, mf_est)) => {
            let mf = aligned(&mf_est.directions_deg, &truths).map_err(|e| e.to_string());
            let (nls, history) = match config.estimator {
                EstimatorKind::Mf => (None, Vec::new()),
                EstimatorKind::Nls => match bss_nls(&xv, geometry, &offsets, &mf_est.directions_deg, &config.nls) {
                    Ok(est) => (
                        Some(aligned(&est.directions_deg, &truths).map_err(|e| e.to_string())),
                        est.cost_history,
                    ),
                    Err(e) => (Some(Err(e.to_string())), Vec::new()),
                },
            };
            (mf, nls, history)
        }
    };

    Ok(TrialOutcome {
        seed,
        truths_deg: truths,
        mf,
        nls,
        nls_cost_history: history,
    })
}

/// Summary of one estimator at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorStats {
    /// `√(mean ‖θ̂ − θ*‖²)` in degrees over successful trials; `None` if all failed.
    pub rmse_deg: Option<f64>,
    /// Fraction of all trials whose every source lies within `Δ/2` (sine space) of its truth.
    pub resolve_rate: f64,
    pub trials_ok: usize,
    pub failures: usize,
}

/// Aggregates aligned estimates (`None` marks a failed trial).
pub fn aggregate(truths_deg: &[f64], estimates: &[Option<Vec<f64>>], resolution: f64) -> EstimatorStats {
    let radius = resolution / 2.0;
    let mut sum_sq = 0.0;
    let mut ok = 0;
    let mut resolved = 0;
    for est in estimates.iter().flatten() {
        ok += 1;
        sum_sq += est.iter().zip(truths_deg).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let inside = est
            .iter()
            .zip(truths_deg)
            .all(|(a, b)| (a.to_radians().sin() - b.to_radians().sin()).abs() < radius);
        if inside {
            resolved += 1;
        }
    }
    let total = estimates.len();
    EstimatorStats {
        rmse_deg: (ok > 0).then(|| (sum_sq / ok as f64).sqrt()),
        resolve_rate: if total > 0 { resolved as f64 / total as f64 } else { 0.0 },
        trials_ok: ok,
        failures: total - ok,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    /// `NaN` when nothing is swept.
    pub sweep_value: f64,
    pub truths_deg: Vec<f64>,
    pub trials: Vec<TrialOutcome>,
    pub mf: EstimatorStats,
    pub nls: Option<EstimatorStats>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl PointReport {
    pub fn stats(&self, kind: EstimatorKind) -> Option<&EstimatorStats> {
        match kind {
            EstimatorKind::Mf => Some(&self.mf),
            EstimatorKind::Nls => self.nls.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub estimator: EstimatorKind,
    pub resolution: f64,
    pub points: Vec<PointReport>,
}

fn collect_stats(trials: &[TrialOutcome], kind: EstimatorKind, truths: &[f64], resolution: f64) -> Option<EstimatorStats> {
    let est: Option<Vec<Option<Vec<f64>>>> = trials
        .iter()
        .map(|t| t.estimates(kind).map(|r| r.as_ref().ok().cloned()))
        .collect();
    est.map(|e| aggregate(truths, &e, resolution))
}

/// Runs every trial of every sweep point in parallel and aggregates in index order.
pub fn monte_carlo(config: &TrialConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let geometry = build_geometry(&config.geometry)?;
    let table = SteeringTable::new(&geometry, &config.grid)?;
    let mut points = Vec::new();
    for (sweep_index, value) in config.sweep_values().into_iter().enumerate() {
        let started = Instant::now();
        let (truths, _) = config.point(&geometry, sweep_index)?;
        let trials = (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial_with(config, &geometry, &table, sweep_index, t))
            .collect::<Result<Vec<_>>>()?;
        let mf = collect_stats(&trials, EstimatorKind::Mf, &truths, geometry.resolution())
            .expect("MF runs in every trial");
        let nls = collect_stats(&trials, EstimatorKind::Nls, &truths, geometry.resolution());
        let elapsed = started.elapsed();
        log::info!(
            "sweep point {sweep_index} ({value}): {} trials in {:.3} s",
            config.trials,
            elapsed.as_secs_f64()
        );
        points.push(PointReport {
            sweep_value: value,
            truths_deg: truths,
            trials,
            mf,
            nls,
            elapsed,
        });
    }
    Ok(MonteCarloReport {
        estimator: config.estimator,
        resolution: geometry.resolution(),
        points,
    })
}

/// Setup for the two-source orthogonality curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthogonalityConfig {
    pub geometry: GeometrySpec,
    pub theta1_deg: f64,
    /// Values of `(sin θ₂ − sin θ₁)/Δ`.
    pub separations: Vec<f64>,
    pub snr_db: f64,
    pub base_seed: u64,
    pub joint_diagonalization: JointDiagOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthogonalityPoint {
    pub separation_over_delta: f64,
    /// `|R_2,1|` from the geometry.
    pub truth: f64,
    /// `|(1/K)·Σ_k φ̂_2,k·φ̂*_1,k|` from JADE; `None` if separation failed.
    pub estimate: Option<f64>,
}

/// True and JADE-estimated `|R_2,1|` along a sweep of the second direction.
pub fn orthogonality_experiment(config: &OrthogonalityConfig) -> Result<Vec<OrthogonalityPoint>> {
    let geometry = build_geometry(&config.geometry)?;
    let delta = geometry.resolution();
    let noise = SourceScenario::noise_variance_from_snr_db(config.snr_db);
    let ones = vec![Complex64::new(1.0, 0.0); 2];
    config
        .separations
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            let theta2 = direction_at_separation(config.theta1_deg, u, delta)?;
            let dirs = vec![config.theta1_deg, theta2];
            let truth = direct_correlation(&geometry, theta2, config.theta1_deg).norm();
            let scenario = SourceScenario::new(dirs, ones.clone(), noise, trial_seed(config.base_seed, i as u64, 0))?;
            let (x, _) = synthesize(&geometry, &scenario)?;
            let estimate = match jade_separate(&x.data().view(), 2, config.joint_diagonalization) {
                Ok(sep) => {
                    let phi = estimate_phase_offsets(&sep.separated.view(), None).offsets;
                    let k = phi.ncols();
                    let r: Complex64 = (0..k).map(|c| phi[[1, c]] * phi[[0, c]].conj()).sum::<Complex64>() / k as f64;
                    Some(r.norm())
                }
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            };
            Ok(OrthogonalityPoint {
                separation_over_delta: separation_over_delta(theta2, config.theta1_deg, delta),
                truth,
                estimate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::Layout;

    fn config() -> TrialConfig {
        TrialConfig {
            geometry: GeometrySpec {
                layout: Layout::UniformRandom,
                subarrays: 6,
                elements: 6,
                spacing: 0.5,
                aperture: 80.0,
                wavelength: 1.0,
                seed: 3,
            },
            directions_deg: vec![10.0],
            amplitudes: vec![Complex64::new(1.0, 0.0)],
            snr_db: f64::INFINITY,
            estimator: EstimatorKind::Nls,
            sweep: SweepAxis::None,
            trials: 3,
            base_seed: 5,
            grid: Grid::default(),
            nls: NlsOptions::default(),
            joint_diagonalization: JointDiagOptions::default(),
        }
    }

    #[test]
    fn noise_free_single_source_is_exact() {
        let out = run_trial(&config(), 0, 0).unwrap();
        let mf = out.mf.unwrap();
        assert!((mf[0] - 10.0).abs() <= 0.005 + 1e-9);
        assert!((out.nls.unwrap().unwrap()[0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn trials_are_reproducible() {
        let mut c = config();
        c.snr_db = 10.0;
        assert_eq!(run_trial(&c, 0, 2).unwrap(), run_trial(&c, 0, 2).unwrap());
        assert_ne!(trial_seed(1, 0, 0), trial_seed(1, 0, 1));
        assert_ne!(trial_seed(1, 0, 1), trial_seed(1, 1, 0));
    }

    #[test]
    fn hand_made_rmse() {
        let truths = [1.0, 2.0];
        let est = vec![Some(vec![1.1, 2.0]), Some(vec![1.0, 2.1])];
        let s = aggregate(&truths, &est, 1.0);
        assert!((s.rmse_deg.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(s.trials_ok, 2);
        let exact = aggregate(&truths, &[Some(truths.to_vec())], 1.0);
        assert_eq!(exact.rmse_deg, Some(0.0));
        assert_eq!(exact.resolve_rate, 1.0);
        let failed = aggregate(&truths, &[None], 1.0);
        assert_eq!(failed.rmse_deg, None);
        assert_eq!(failed.failures, 1);
    }

    #[test]
    fn validation() {
        let mut c = config();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = config();
        c.sweep = SweepAxis::Snr(vec![10.0, 0.0]);
        assert!(c.validate().is_err());
        let mut c = config();
        c.sweep = SweepAxis::Separation(vec![1.0]);
        assert!(c.validate().is_err());
    }
}
