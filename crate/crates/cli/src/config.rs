//! Scenario configuration files (TOML).

use std::path::Path;

use num_complex::Complex64;
use pcdf::harness::OrthogonalityConfig;
use pcdf::{EstimatorKind, GeometrySpec, Grid, JointDiagOptions, NlsOptions, SweepAxis, TrialConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const BUNDLED: &[(&str, &str)] = &[
    ("fig3", include_str!("../configs/fig3.toml")),
    ("fig4", include_str!("../configs/fig4.toml")),
    ("fig5a", include_str!("../configs/fig5a.toml")),
    ("fig5b", include_str!("../configs/fig5b.toml")),
    ("fig6a", include_str!("../configs/fig6a.toml")),
    ("fig6b", include_str!("../configs/fig6b.toml")),
    ("experiment", include_str!("../configs/experiment.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    pub magnitude: f64,
    pub phase_deg: f64,
}

impl Amplitude {
    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude, self.phase_deg.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sources {
    pub directions_deg: Vec<f64>,
    pub amplitudes: Vec<Amplitude>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// `inf` for noise-free data.
    pub snr_db: f64,
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Nls
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run {
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub sweep: SweepAxis,
    #[serde(default)]
    pub nls: NlsOptions,
    #[serde(default)]
    pub joint_diagonalization: JointDiagOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometrySpec,
    pub sources: Sources,
    pub noise: Noise,
    pub run: Run,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub snr_db: Option<f64>,
    pub estimator: Option<EstimatorKind>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a file, or a bundled config when `source` names one and no such file exists.
    pub fn load(source: &str) -> CliResult<Self> {
        let path = Path::new(source);
        if path.exists() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            return Self::parse(&text);
        }
        match bundled(source) {
            Some(text) => Self::parse(text),
            None => Err(CliError::Config(format!(
                "no config file '{source}' and no bundled config of that name (bundled: {})",
                bundled_names().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> CliResult<()> {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(t) = o.trials {
            self.run.trials = t;
        }
        if let Some(x) = o.snr_db {
            self.noise.snr_db = x;
        }
        if let Some(e) = o.estimator {
            self.run.estimator = e;
        }
        self.check()
    }

    fn check(&self) -> CliResult<()> {
        if self.sources.directions_deg.len() != self.sources.amplitudes.len() {
            return Err(CliError::Config(format!(
                "{} directions but {} amplitudes",
                self.sources.directions_deg.len(),
                self.sources.amplitudes.len()
            )));
        }
        if self.sources.directions_deg.is_empty() {
            return Err(CliError::Config("at least one source is required".into()));
        }
        if self.noise.snr_db.is_nan() {
            return Err(CliError::Config("snr_db must be a number".into()));
        }
        if self.run.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        pcdf::build_geometry(&self.geometry)?;
        self.run.grid.points()?;
        Ok(())
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.sources.amplitudes.iter().map(Amplitude::value).collect()
    }

    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            geometry: self.geometry.clone(),
            directions_deg: self.sources.directions_deg.clone(),
            amplitudes: self.amplitudes(),
            snr_db: self.noise.snr_db,
            estimator: self.run.estimator,
            sweep: self.run.sweep.clone(),
            trials: self.run.trials,
            base_seed: self.run.seed,
            grid: self.run.grid,
            nls: self.run.nls,
            joint_diagonalization: self.run.joint_diagonalization,
        }
    }

    pub fn orthogonality_config(&self) -> CliResult<OrthogonalityConfig> {
        let separations = match &self.run.sweep {
            SweepAxis::Separation(v) => v.clone(),
            _ => {
                return Err(CliError::Config(
                    "orthogonality needs run.sweep with axis = \"separation\"".into(),
                ))
            }
        };
        if self.sources.directions_deg.len() != 2 {
            return Err(CliError::Config("orthogonality needs exactly two sources".into()));
        }
        Ok(OrthogonalityConfig {
            geometry: self.geometry.clone(),
            theta1_deg: self.sources.directions_deg[0],
            separations,
            snr_db: self.noise.snr_db,
            base_seed: self.run.seed,
            joint_diagonalization: self.run.joint_diagonalization,
        })
    }
}
