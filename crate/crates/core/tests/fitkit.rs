use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use spsim_core::fitkit::*;

fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + step * i as f64).collect()
}

fn noisy(mean: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    mean.iter()
        .map(|&m| if m > 0.0 { Poisson::new(m).unwrap().sample(&mut rng) } else { 0.0 })
        .collect()
}

fn fit(model: &ModelSpec, x: &[f64], y: &[f64], p0: &[f64], fixed: Vec<bool>) -> FitResult {
    lm_fit(model, x, y, &poisson_weights(y), p0, &FitOptions::default().with_fixed(fixed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reordering_the_data_changes_nothing(seed in any::<u64>()) {
        let x = grid(-1000.0, 20.0, 101);
        let truth = [400.0, 30.0, 200.0, 5.0];
        let y = noisy(&ModelSpec::Lorentzian.eval(&x, &truth), seed);
        let p0 = [300.0, 0.0, 150.0, 3.0];
        let a = fit(&ModelSpec::Lorentzian, &x, &y, &p0, vec![false; 4]);
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut Xoshiro256PlusPlus::seed_from_u64(seed ^ 1));
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let b = fit(&ModelSpec::Lorentzian, &xs, &ys, &p0, vec![false; 4]);
        prop_assert!((a.chi2 - b.chi2).abs() <= 1e-8 * a.chi2);
        for (pa, pb) in a.params.iter().zip(&b.params) {
            prop_assert!((pa - pb).abs() <= 1e-6 * (1.0 + pa.abs()));
        }
    }

    #[test]
    fn shifting_x_moves_the_centre(seed in any::<u64>(), shift in -500.0f64..500.0) {
        let x = grid(-1000.0, 20.0, 101);
        let truth = [400.0, 30.0, 200.0, 5.0];
        let y = noisy(&ModelSpec::Lorentzian.eval(&x, &truth), seed);
        let a = fit(&ModelSpec::Lorentzian, &x, &y, &[300.0, 0.0, 150.0, 3.0], vec![false; 4]);
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let b = fit(&ModelSpec::Lorentzian, &xs, &y, &[300.0, shift, 150.0, 3.0], vec![false; 4]);
        prop_assert!((a.chi2 - b.chi2).abs() <= 1e-8 * a.chi2, "{} {}", a.chi2, b.chi2);
        prop_assert!((b.params[1] - a.params[1] - shift).abs() < 1e-5);
        prop_assert!((b.params[2] - a.params[2]).abs() < 1e-5);
    }
}

#[test]
fn linear_heights_match_the_normal_equations() {
    let model = ModelSpec::ExpTrain(ExpTrain::symmetric(3, None));
    let x = grid(-45_000.0, 100.0, 901);
    let mut truth = vec![3.0, 12.0, 1725.0, 13_118.55];
    truth.extend([100.0, 95.0, 110.0, 4.7, 105.0, 90.0, 102.0]);
    let y = noisy(&model.eval(&x, &truth), 9);
    let w = poisson_weights(&y);
    let mut fixed = vec![false; truth.len()];
    fixed[ExpTrain::T0] = true;
    fixed[ExpTrain::TAU] = true;
    fixed[ExpTrain::PERIOD] = true;
    let mut p0 = truth.clone();
    for v in p0.iter_mut().skip(ExpTrain::FIRST_HEIGHT) {
        *v = 50.0;
    }
    p0[0] = 1.0;
    let lm = lm_fit(&model, &x, &y, &w, &p0, &FitOptions::default().with_fixed(fixed.clone())).unwrap();
    let free: Vec<bool> = fixed.iter().map(|f| !f).collect();
    let lin = linear_solve(&model, &x, &y, &w, &truth, &free).unwrap();
    for (a, b) in lm.params.iter().zip(&lin) {
        assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn errors_shrink_as_one_over_root_n() {
    let x = grid(50.0, 100.0, 120);
    let mean_error = |amplitude: f64| {
        let truth = [amplitude, 0.0, 2300.0, 0.02 * amplitude];
        let clean = ModelSpec::ExpDecay.eval(&x, &truth);
        let total: f64 = (0..10u64)
            .map(|s| {
                let y = noisy(&clean, 100 + s);
                fit(&ModelSpec::ExpDecay, &x, &y, &truth, vec![false, true, false, false]).std_errors[2]
            })
            .sum();
        total / 10.0
    };
    let ratio = mean_error(500.0) / mean_error(2000.0);
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "{ratio}");
}

#[test]
fn delta_kernel_is_identity() {
    let curve: Vec<f64> = (0..50).map(|i| ((i as f64) * 0.3).sin().abs()).collect();
    let out = convolve_with_irf(&curve, 10.0, &Irf::delta(10.0)).unwrap();
    assert_eq!(out, curve);
}

/// Two-sided exponential convolved with a unit Gaussian, in closed form.
fn emg(t: f64, tau: f64, sigma: f64) -> f64 {
    let s = std::f64::consts::SQRT_2;
    let pre = 0.5 * (sigma * sigma / (2.0 * tau * tau)).exp();
    pre * ((-t / tau).exp() * libm::erfc((sigma / tau - t / sigma) / s)
        + (t / tau).exp() * libm::erfc((sigma / tau + t / sigma) / s))
}

#[test]
fn gaussian_convolution_matches_closed_form() {
    let (w, tau, sigma) = (5.0, 1725.0, 212.0);
    let x = grid(-30_000.0, w, 12_001);
    let curve: Vec<f64> = x.iter().map(|t| (-t.abs() / tau).exp()).collect();
    let irf = Irf::gaussian(w, sigma, 8.0).unwrap();
    let out = convolve_with_irf(&curve, w, &irf).unwrap();
    let mut worst: f64 = 0.0;
    for (t, v) in x.iter().zip(&out) {
        if t.abs() <= 8000.0 {
            let exact = emg(*t, tau, sigma);
            worst = worst.max((v - exact).abs() / exact);
        }
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn convolution_preserves_peak_areas() {
    let model = ModelSpec::ExpTrain(ExpTrain::symmetric(2, None));
    let mut p = vec![0.0, 0.0, 1725.0, 13_118.55];
    p.extend([100.0, 80.0, 5.0, 120.0, 90.0]);
    let x = grid(-60_000.0, 100.0, 1201);
    let curve = model.eval(&x, &p);
    let irf = Irf::gaussian(100.0, 212.0, 6.0).unwrap();
    let out = convolve_with_irf(&curve, 100.0, &irf).unwrap();
    let (a, b): (f64, f64) = (curve.iter().sum(), out.iter().sum());
    assert!((a - b).abs() <= 1e-6 * a);
    let peak = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    assert!(peak(&out) < peak(&curve));
}
