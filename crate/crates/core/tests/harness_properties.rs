use num_complex::Complex64;
use pcdf::harness::{aggregate, monte_carlo, orthogonality_experiment, OrthogonalityConfig, TrialConfig};
use pcdf::{EstimatorKind, GeometrySpec, Grid, JointDiagOptions, Layout, NlsOptions, SweepAxis};

fn config() -> TrialConfig {
    TrialConfig {
        geometry: GeometrySpec {
            layout: Layout::Equidistant,
            subarrays: 8,
            elements: 6,
            spacing: 0.5,
            aperture: 100.0,
            wavelength: 1.0,
            seed: 0,
        },
        directions_deg: vec![5.0, 30.0],
        amplitudes: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 2.0)],
        snr_db: 25.0,
        estimator: EstimatorKind::Nls,
        sweep: SweepAxis::Snr(vec![10.0, 30.0]),
        trials: 12,
        base_seed: 99,
        grid: Grid { start: -60.0, stop: 60.0, step: 0.05 },
        nls: NlsOptions::default(),
        joint_diagonalization: JointDiagOptions::default(),
    }
}

#[test]
fn report_does_not_depend_on_thread_count() {
    let c = config();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let mut a = one.install(|| monte_carlo(&c)).unwrap();
    let mut b = four.install(|| monte_carlo(&c)).unwrap();
    for p in a.points.iter_mut().chain(b.points.iter_mut()) {
        p.elapsed = Default::default();
    }
    assert_eq!(a, b);
}

#[test]
fn aligned_rmse_beats_any_other_alignment() {
    let report = monte_carlo(&config()).unwrap();
    for point in &report.points {
        let truths = &point.truths_deg;
        for kind in [EstimatorKind::Mf, EstimatorKind::Nls] {
            let aligned: Vec<Option<Vec<f64>>> =
                point.trials.iter().map(|t| t.estimates(kind).unwrap().clone().ok()).collect();
            let swapped: Vec<Option<Vec<f64>>> = aligned
                .iter()
                .map(|e| e.as_ref().map(|v| v.iter().rev().copied().collect()))
                .collect();
            let a = aggregate(truths, &aligned, report.resolution).rmse_deg.unwrap();
            let s = aggregate(truths, &swapped, report.resolution).rmse_deg.unwrap();
            assert!(a <= s);
            assert_eq!(point.stats(kind).unwrap().rmse_deg, Some(a));
        }
    }
}

#[test]
fn separation_sweep_moves_the_second_source() {
    let mut c = config();
    c.sweep = SweepAxis::Separation(vec![2.0, 5.0]);
    c.trials = 2;
    let r = monte_carlo(&c).unwrap();
    for (p, v) in r.points.iter().zip([2.0, 5.0]) {
        let u = (p.truths_deg[1].to_radians().sin() - p.truths_deg[0].to_radians().sin()) / r.resolution;
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn orthogonality_truth_matches_direct_summation() {
    let spec = GeometrySpec {
        layout: Layout::UniformRandom,
        subarrays: 10,
        elements: 10,
        spacing: 0.5,
        aperture: 450.0,
        wavelength: 1.0,
        seed: 4,
    };
    let xi = pcdf::build_geometry(&spec).unwrap().inter_displacements().to_vec();
    let cfg = OrthogonalityConfig {
        geometry: spec,
        theta1_deg: 1.2,
        separations: vec![0.5, 1.0, 2.5],
        snr_db: 40.0,
        base_seed: 1,
        joint_diagonalization: JointDiagOptions::default(),
    };
    for p in orthogonality_experiment(&cfg).unwrap() {
        let dsin = p.separation_over_delta / 450.0;
        let (mut re, mut im) = (0.0, 0.0);
        for x in &xi {
            re += (2.0 * std::f64::consts::PI * x * dsin).cos();
            im += (2.0 * std::f64::consts::PI * x * dsin).sin();
        }
        let oracle = (re * re + im * im).sqrt() / xi.len() as f64;
        assert!((p.truth - oracle).abs() < 1e-9);
        assert!(p.estimate.is_some());
    }
}
