//! Command-line front end: every subcommand reads one scenario config,
//! applies flag overrides and writes CSV tables with JSON sidecars.

pub mod config;
pub mod error;
pub mod output;
pub mod snapshot;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use pcdf::estimators::{bss_mf, bss_nls, estimate_phase_offsets, DoaEstimate};
use pcdf::harness::{monte_carlo, orthogonality_experiment, EstimatorStats, MonteCarloReport};
use pcdf::orthogonality::expected_curve;
use pcdf::{build_geometry, jade_separate, synthesize, ArrayGeometry, EstimatorKind, MeasurementMatrix, SourceScenario};
use serde_json::json;

use crate::config::{Overrides, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{num, OutputDir};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Mf,
    Nls,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Mf => EstimatorKind::Mf,
            EstimatorArg::Nls => EstimatorKind::Nls,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pcdf", version, about = "Single-snapshot direction finding with partly calibrated arrays")]
pub struct Cli {
    /// Scenario file, or a bundled name (fig3, fig4, fig5a, fig5b, fig6a, fig6b, experiment).
    #[arg(long, global = true, default_value = "fig5b")]
    pub config: String,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override the run seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the trial count
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Override the SNR in dB
    #[arg(long = "snr-db", global = true, allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
    /// Override the estimator
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one composite snapshot and write it as CSV.
    Synth,
    /// Synthesize one snapshot and estimate the directions.
    Estimate,
    /// True and JADE-estimated source correlation along a separation sweep.
    Orthogonality,
    /// Monte-Carlo RMSE of the configured estimator.
    Montecarlo,
    /// Monte-Carlo RMSE of both estimators.
    Sweep,
    /// Estimate directions from snapshot CSV files.
    Ingest {
        /// Snapshot file.
        input: PathBuf,
        /// Further snapshot files added element-wise to the first.
        #[arg(long)]
        add: Vec<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            snr_db: self.snr_db,
            estimator: self.estimator.map(Into::into),
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = ScenarioConfig::load(&cli.config)?;
    cfg.apply(&cli.overrides())?;
    let started = std::time::Instant::now();
    match &cli.command {
        Command::Synth => synth(&cfg, &OutputDir::create(&cli.out, "synth")?)?,
        Command::Estimate => estimate(&cfg, &OutputDir::create(&cli.out, "estimate")?)?,
        Command::Orthogonality => orthogonality(&cfg, &OutputDir::create(&cli.out, "orthogonality")?)?,
        Command::Montecarlo => {
            let out = OutputDir::create(&cli.out, "montecarlo")?;
            let report = monte_carlo(&cfg.trial_config())?;
            write_rmse(&out, &cfg, &report, cfg.run.estimator)?;
        }
        Command::Sweep => {
            let out = OutputDir::create(&cli.out, "sweep")?;
            let mut tc = cfg.trial_config();
            tc.estimator = EstimatorKind::Nls;
            let report = monte_carlo(&tc)?;
            write_rmse(&out, &cfg, &report, EstimatorKind::Mf)?;
            write_rmse(&out, &cfg, &report, EstimatorKind::Nls)?;
        }
        Command::Ingest { input, add } => ingest(&cfg, input, add, &OutputDir::create(&cli.out, "ingest")?)?,
    }
    log::info!("finished in {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn scenario(cfg: &ScenarioConfig) -> CliResult<SourceScenario> {
    Ok(SourceScenario::new(
        cfg.sources.directions_deg.clone(),
        cfg.amplitudes(),
        SourceScenario::noise_variance_from_snr_db(cfg.noise.snr_db),
        cfg.run.seed,
    )?)
}

fn synth(cfg: &ScenarioConfig, out: &OutputDir) -> CliResult<()> {
    let geometry = build_geometry(&cfg.geometry)?;
    let (x, _) = synthesize(&geometry, &scenario(cfg)?)?;
    let path = out.path("snapshot.csv");
    let file = std::fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    snapshot::write_snapshot(file, &x)?;
    out.sidecar(
        "snapshot.csv",
        cfg,
        json!({ "inter_displacements": geometry.inter_displacements() }),
    )?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn estimate(cfg: &ScenarioConfig, out: &OutputDir) -> CliResult<()> {
    let geometry = build_geometry(&cfg.geometry)?;
    let (x, _) = synthesize(&geometry, &scenario(cfg)?)?;
    estimate_and_write(cfg, &geometry, &x, out)
}

fn ingest(cfg: &ScenarioConfig, input: &Path, add: &[PathBuf], out: &OutputDir) -> CliResult<()> {
    let geometry = build_geometry(&cfg.geometry)?;
    let mut x = snapshot::read_snapshot_file(input, &geometry)?;
    for extra in add {
        let y = snapshot::read_snapshot_file(extra, &geometry)?;
        x.0 = &x.0 + y.data();
    }
    estimate_and_write(cfg, &geometry, &x, out)
}

fn estimate_and_write(cfg: &ScenarioConfig, geometry: &ArrayGeometry, x: &MeasurementMatrix, out: &OutputDir) -> CliResult<()> {
    x.check_geometry(geometry)?;
    let xv = x.data().view();
    let sources = cfg.sources.directions_deg.len();
    let sep = jade_separate(&xv, sources, cfg.run.joint_diagonalization)?;
    let offsets = estimate_phase_offsets(&sep.separated.view(), None);
    let flagged = offsets.degenerate_flags.iter().filter(|f| **f).count();
    if flagged > 0 {
        log::warn!("{flagged} phase-offset entries were degenerate and set to 1");
    }
    let mf = bss_mf(&xv, geometry, &offsets, &cfg.run.grid)?;
    let nls = match cfg.run.estimator {
        EstimatorKind::Nls => Some(bss_nls(&xv, geometry, &offsets, &mf.directions_deg, &cfg.run.nls)?),
        EstimatorKind::Mf => None,
    };

    let (grid, spectra) = mf.spectra.clone().expect("MF keeps its spectra");
    let rows = spectra
        .iter()
        .enumerate()
        .flat_map(|(l, s)| grid.iter().zip(s).map(move |(t, v)| vec![num(*t), l.to_string(), num(*v)]))
        .collect::<Vec<_>>();
    out.table("spectra.csv", &["theta_deg", "source_index", "value"], rows, cfg, json!({}))?;

    let mut rows = Vec::new();
    let mut details = Vec::new();
    let mut push = |name: &str, est: &DoaEstimate| {
        for (l, t) in est.directions_deg.iter().enumerate() {
            let a = est.amplitudes.get(l).copied().unwrap_or(num_complex::Complex64::new(f64::NAN, f64::NAN));
            rows.push(vec![name.to_string(), l.to_string(), num(*t), num(a.re), num(a.im)]);
        }
        details.push(json!({
            "estimator": name,
            "iterations": est.iterations,
            "final_cost": est.final_cost,
        }));
    };
    push("mf", &mf);
    if let Some(n) = &nls {
        push("nls", n);
    }
    out.table(
        "estimates.csv",
        &["estimator", "source_index", "theta_deg", "amplitude_re", "amplitude_im"],
        rows,
        cfg,
        json!({ "estimators": details, "degenerate_offsets": flagged }),
    )?;
    Ok(())
}

fn orthogonality(cfg: &ScenarioConfig, out: &OutputDir) -> CliResult<()> {
    let oc = cfg.orthogonality_config()?;
    let points = orthogonality_experiment(&oc)?;
    let failed = points.iter().filter(|p| p.estimate.is_none()).count();
    let rows = points
        .iter()
        .map(|p| vec![num(p.separation_over_delta), num(p.truth), num(p.estimate.unwrap_or(f64::NAN))])
        .collect::<Vec<_>>();
    out.table(
        "orthogonality.csv",
        &["separation_over_delta", "truth", "estimate"],
        rows,
        cfg,
        json!({ "failed_separations": failed }),
    )?;
    let rows = expected_curve(&oc.separations, cfg.geometry.subarrays)
        .iter()
        .map(|p| vec![num(p.separation_over_delta), num(p.expected_magnitude), num(p.expected_power)])
        .collect::<Vec<_>>();
    out.table(
        "expected.csv",
        &["separation_over_delta", "expected_magnitude", "expected_power"],
        rows,
        cfg,
        json!({ "layout_assumed": "uniform_random" }),
    )?;
    Ok(())
}

fn write_rmse(out: &OutputDir, cfg: &ScenarioConfig, report: &MonteCarloReport, kind: EstimatorKind) -> CliResult<()> {
    let name = match kind {
        EstimatorKind::Mf => "rmse_mf.csv",
        EstimatorKind::Nls => "rmse_nls.csv",
    };
    let stats: Vec<(f64, EstimatorStats)> = report
        .points
        .iter()
        .map(|p| (p.sweep_value, *p.stats(kind).expect("estimator was run")))
        .collect();
    for (v, s) in &stats {
        if s.rmse_deg.is_none() {
            log::warn!("all trials failed at sweep value {v}");
        }
    }
    let rows = stats
        .iter()
        .map(|(v, s)| {
            vec![
                num(*v),
                num(s.rmse_deg.unwrap_or(f64::NAN)),
                num(s.resolve_rate),
                s.trials_ok.to_string(),
            ]
        })
        .collect::<Vec<_>>();
    let failures: Vec<usize> = stats.iter().map(|(_, s)| s.failures).collect();
    out.table(
        name,
        &["sweep_value", "rmse_deg", "resolve_rate", "trials_ok"],
        rows,
        cfg,
        json!({ "estimator": kind, "failures_per_point": failures, "resolution": report.resolution }),
    )?;
    Ok(())
}
