use itertools::Itertools;
use ndarray::Array2;
use num_complex::Complex64;
use pcdf::estimators::{
    bss_mf, bss_nls, estimate_phase_offsets, match_sources, nls_cost, nls_gradients, Grid, NlsOptions,
    PhaseOffsetEstimate,
};
use pcdf::{build_geometry, jade_separate, synthesize, ArrayGeometry, GeometrySpec, JointDiagOptions, Layout, SourceScenario};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn geometry(seed: u64) -> ArrayGeometry {
    build_geometry(&GeometrySpec {
        layout: Layout::UniformRandom,
        subarrays: 5,
        elements: 4,
        spacing: 0.5,
        aperture: 40.0,
        wavelength: 1.0,
        seed,
    })
    .unwrap()
}

fn random_unit(l: usize, k: usize, rng: &mut ChaCha8Rng) -> PhaseOffsetEstimate {
    let s = Array2::from_shape_fn((l, k), |_| Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>()));
    estimate_phase_offsets(&s.view(), None)
}

fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
}

#[test]
fn cost_matches_per_subarray_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = geometry(2);
    let offsets = random_unit(2, 5, &mut rng);
    let x = Array2::from_shape_fn((4, 5), |_| rand_c(&mut rng));
    let theta: [f64; 2] = [7.0, -31.0];
    let s = [rand_c(&mut rng), rand_c(&mut rng)];
    let mut naive = 0.0;
    for k in 0..5 {
        for m in 0..4 {
            let mut model = Complex64::new(0.0, 0.0);
            for l in 0..2 {
                let phase = 2.0 * PI * g.intra_displacements()[m] * theta[l].to_radians().sin();
                model += Complex64::from_polar(1.0, phase) * offsets.offsets[[l, k]] * s[l];
            }
            naive += (x[[m, k]] - model).norm_sqr();
        }
    }
    let got = nls_cost(&x.view(), &g, &offsets, &theta, &s).unwrap();
    assert!((got - naive).abs() < 1e-12 * (1.0 + naive));
}

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = geometry(4);
    for _ in 0..20 {
        let offsets = random_unit(2, 5, &mut rng);
        let x = Array2::from_shape_fn((4, 5), |_| rand_c(&mut rng));
        let theta = [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)];
        let s = [rand_c(&mut rng), rand_c(&mut rng)];
        let grad = nls_gradients(&x.view(), &g, &offsets, &theta, &s).unwrap();
        let cost = |t: &[f64], a: &[Complex64]| nls_cost(&x.view(), &g, &offsets, t, a).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-3);
        let h: f64 = 1e-6;
        for l in 0..2 {
            let (mut up, mut dn) = (theta, theta);
            up[l] += h.to_degrees();
            dn[l] -= h.to_degrees();
            let fd = (cost(&up, &s) - cost(&dn, &s)) / (2.0 * h);
            assert!(rel(fd, grad.theta[l]) < 1e-5, "theta {fd} vs {}", grad.theta[l]);
            for (dir, part) in [(Complex64::new(1.0, 0.0), 0), (Complex64::new(0.0, 1.0), 1)] {
                let (mut up, mut dn) = (s, s);
                up[l] += dir * h;
                dn[l] -= dir * h;
                let fd = (cost(&theta, &up) - cost(&theta, &dn)) / (2.0 * h);
                let an = if part == 0 { grad.amplitude[l].re } else { grad.amplitude[l].im };
                assert!(rel(fd, an) < 1e-5, "s {fd} vs {an}");
            }
        }
    }
}

#[test]
fn jade_offsets_match_truth_up_to_a_row_phase() {
    let g = geometry(9);
    let dirs = [-12.0, 25.0];
    let scenario = SourceScenario::new(dirs.to_vec(), vec![Complex64::new(1.0, 0.0); 2], 0.0, 0).unwrap();
    let (x, s) = synthesize(&g, &scenario).unwrap();
    let sep = jade_separate(&x.data().view(), 2, JointDiagOptions::default()).unwrap();
    let est = estimate_phase_offsets(&sep.separated.view(), None).offsets;
    let truth = estimate_phase_offsets(&s.data().view(), None).offsets;
    let coh = pcdf::orthogonality::coherence(&s).unwrap();
    let perm = pcdf::estimators::best_assignment(2, |i, j| {
        -(0..5).map(|k| est[[i, k]] * truth[[j, k]].conj()).sum::<Complex64>().norm()
    });
    for (j, &i) in perm.iter().enumerate() {
        let align = est[[i, 0]] * truth[[j, 0]].conj();
        let worst = (0..5).map(|k| (est[[i, k]] - align * truth[[j, k]]).norm()).fold(0.0, f64::max);
        // Exact only for orthogonal rows; residual scales with the coherence.
        assert!(worst < 4.0 * coh + 1e-9, "{worst} vs coherence {coh}");
    }
}

#[test]
fn nls_cost_never_increases() {
    let g = geometry(5);
    for seed in 0..10 {
        let scenario = SourceScenario::new(
            vec![3.0, 40.0],
            vec![Complex64::from_polar(1.0, 0.3), Complex64::from_polar(2.0, -1.0)],
            0.05,
            seed,
        )
        .unwrap();
        let (x, _) = synthesize(&g, &scenario).unwrap();
        let sep = jade_separate(&x.data().view(), 2, JointDiagOptions::default()).unwrap();
        let offsets = estimate_phase_offsets(&sep.separated.view(), None);
        let mf = bss_mf(&x.data().view(), &g, &offsets, &Grid::default()).unwrap();
        let nls = bss_nls(&x.data().view(), &g, &offsets, &mf.directions_deg, &NlsOptions::default()).unwrap();
        for w in nls.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(nls.final_cost <= mf.final_cost * (1.0 + 1e-12));
    }
}

fn brute_force(est: &[f64], truth: &[f64]) -> f64 {
    (0..est.len())
        .permutations(est.len())
        .map(|p| p.iter().enumerate().map(|(j, &i)| (est[i] - truth[j]).powi(2)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offsets_are_idempotent(seed in any::<u64>(), l in 1usize..4, k in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Array2::from_shape_fn((l, k), |_| rand_c(&mut rng));
        let once = estimate_phase_offsets(&s.view(), None);
        let twice = estimate_phase_offsets(&once.offsets.view(), None);
        for (a, b) in once.offsets.iter().zip(twice.offsets.iter()) {
            prop_assert!((a - b).norm() < 1e-12);
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mf_ignores_a_global_row_phase(seed in any::<u64>(), phase in 0.0f64..std::f64::consts::TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = geometry(seed);
        let offsets = random_unit(2, 5, &mut rng);
        let x = Array2::from_shape_fn((4, 5), |_| rand_c(&mut rng));
        let mut rotated = offsets.clone();
        rotated.offsets.row_mut(1).mapv_inplace(|z| z * Complex64::from_polar(1.0, phase));
        let grid = Grid { start: -60.0, stop: 60.0, step: 0.5 };
        let a = bss_mf(&x.view(), &g, &offsets, &grid).unwrap();
        let b = bss_mf(&x.view(), &g, &rotated, &grid).unwrap();
        prop_assert_eq!(&a.directions_deg, &b.directions_deg);
        let (sa, sb) = (a.spectra.unwrap().1, b.spectra.unwrap().1);
        for (u, v) in sa[1].iter().zip(&sb[1]) {
            prop_assert!((u - v).abs() <= 1e-10 * (1.0 + u));
        }
    }

    #[test]
    fn matching_is_optimal(truth in prop::collection::vec(-80.0f64..80.0, 1..6), noise in prop::collection::vec(-1.0f64..1.0, 6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut est: Vec<f64> = truth.iter().zip(&noise).map(|(t, n)| t + n).collect();
        for i in (1..est.len()).rev() {
            let j = rng.random_range(0..=i);
            est.swap(i, j);
        }
        let p = match_sources(&est, &truth).unwrap();
        let got: f64 = p.iter().enumerate().map(|(j, &i)| (est[i] - truth[j]).powi(2)).sum();
        prop_assert!((got - brute_force(&est, &truth)).abs() < 1e-9);
    }
}
