use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use spsim_core::analysis::*;
use spsim_core::montecarlo::synthetic::{uniform_grid, LorentzianLine, PolarizationScan};
use spsim_core::montecarlo::*;
use spsim_core::optics::DetunedDecayModel;

const REP_KHZ: f64 = 76_227.93;

fn areas(central: f64, reference_sum: f64, n_reference: usize) -> PeakAreas {
    PeakAreas {
        central,
        reference_sum,
        n_reference,
    }
}

proptest! {
    #[test]
    fn equal_areas_give_zero_visibility(c in 1.0f64..1e6, s in 1.0f64..1e7, n in 1usize..10) {
        let a = areas(c, s, n);
        let (v, _) = visibility_from_areas(&a, &a).unwrap();
        prop_assert_eq!(v, 0.0);
    }

    #[test]
    fn empty_hh_peak_gives_unit_visibility(
        s_hh in 1.0f64..1e7,
        c_hv in 1.0f64..1e6,
        s_hv in 1.0f64..1e7,
        n in 1usize..10,
    ) {
        let (v, sigma) = visibility_from_areas(&areas(0.0, s_hh, n), &areas(c_hv, s_hv, n)).unwrap();
        prop_assert_eq!(v, 1.0);
        prop_assert!(sigma > 0.0);
    }

    #[test]
    fn budget_ignores_entry_order_and_splitting(
        entries in prop::collection::vec((0.05f64..1.0, 0.0f64..0.05), 1..6),
        shuffle_seed in any::<u64>(),
        split_at in 0usize..6,
        split in 0.1f64..0.9,
    ) {
        let table = |e: &[(f64, f64)]| BudgetTable {
            entries: e
                .iter()
                .enumerate()
                .map(|(i, &(v, err))| BudgetEntry { label: format!("stage {i}"), efficiency: v, abs_error: err })
                .collect(),
            ..BudgetTable::reference()
        };
        let base = brightness_budget(&table(&entries)).unwrap();

        let mut shuffled = entries.clone();
        rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut Xoshiro256PlusPlus::seed_from_u64(shuffle_seed));
        let perm = brightness_budget(&table(&shuffled)).unwrap();
        prop_assert!((perm.total_efficiency - base.total_efficiency).abs() <= 1e-15 * base.total_efficiency);
        prop_assert!((perm.total_error - base.total_error).abs() <= 1e-12);

        // e = e1·e2 with the relative error shared in quadrature.
        let k = split_at % entries.len();
        let (e, err) = entries[k];
        let e1 = e.powf(split);
        let e2 = e / e1;
        let rel = err / e;
        let mut parts = entries.clone();
        parts[k] = (e1, e1 * rel * split.sqrt());
        parts.insert(k + 1, (e2, e2 * rel * (1.0 - split).sqrt()));
        let splitted = brightness_budget(&table(&parts)).unwrap();
        prop_assert!((splitted.total_efficiency - base.total_efficiency).abs() <= 1e-14 * base.total_efficiency);
        prop_assert!((splitted.total_error - base.total_error).abs() <= 1e-12);
    }
}

#[test]
fn budget_reference_table() {
    let r = brightness_budget(&BudgetTable::reference()).unwrap();
    assert!((100.0 * r.total_efficiency - 2.17).abs() < 0.005);
    assert!((100.0 * r.total_error - 0.11).abs() < 0.005);
    assert!((100.0 * r.brightness - 65.3).abs() < 0.5);
    assert!((100.0 * r.brightness_error - 4.1).abs() < 0.3);
}

#[test]
fn g2_ignores_a_global_time_shift() {
    let train = PulseTrain::new(REP_KHZ, 300_000, 4);
    let chain = InstrumentChain {
        eta_first_lens: 0.65,
        eta_setup: 0.2,
        ..InstrumentChain::default()
    };
    let s = simulate_hbt(&EmitterModel::default(), &chain, &train, 0.1).unwrap().stream;
    let a = hbt_g2(&s, None, train.period_ps(), 4).unwrap();
    for offset in [1, 777, 5_000_000_000] {
        let b = hbt_g2(&s.shifted(offset), None, train.period_ps(), 4).unwrap();
        assert_eq!(a.histogram.counts, b.histogram.counts);
        assert_eq!(a.g2_zero, b.g2_zero);
        assert_eq!(a.g2_error, b.g2_error);
    }
}

#[test]
fn full_period_window_recovers_t2() {
    let emitter = EmitterModel::default();
    let train = PulseTrain::new(REP_KHZ, 10_000_000, 42);
    let chain = InstrumentChain::ideal();
    let hh = simulate_hom(&emitter, &chain, &train, &MziConfig::default()).unwrap();
    let hv_mzi = MziConfig {
        polarization_mode: PolarizationMode::HV,
        ..MziConfig::default()
    };
    let hv = simulate_hom(&emitter, &chain, &train, &hv_mzi).unwrap();
    let window = train.period_ps() / 1000.0;
    let r = hom_visibility(&hh.stream, &hv.stream, train.period_ps(), &[window]).unwrap();
    let est = dephasing_estimate(r.windows[0].visibility, emitter.t1_ns, TimescaleMode::Lifetime).unwrap();
    assert!((est.t2_ps / 45.0 - 1.0).abs() < 0.1, "{}", est.t2_ps);
}

#[test]
fn detuning_series_closed_loop() {
    let truth = DetunedDecayModel::new(1.0 / 2.3, 1.333, 0.492, 2.62).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let points = (-12..=12)
        .map(|i| {
            let d = i as f64;
            let tau = truth.lifetime_ns(d);
            DetuningPoint {
                detuning_mev: d,
                lifetime_ns: tau * (1.0 + noise.sample(&mut rng)),
                lifetime_error_ns: 0.03 * tau,
            }
        })
        .collect();
    let fit = lifetime_vs_detuning(&DetuningSeries { points }, 1.0 / 2.3).unwrap();
    let m = fit.model;
    assert!((m.f_res / truth.f_res - 1.0).abs() < 0.1, "{}", m.f_res);
    assert!((m.f_inh / truth.f_inh - 1.0).abs() < 0.1, "{}", m.f_inh);
    assert!((m.kappa_mev / truth.kappa_mev - 1.0).abs() < 0.1, "{}", m.kappa_mev);
    assert!(fit.warnings.is_empty(), "{:?}", fit.warnings);
}

#[test]
fn linewidth_closed_loop() {
    let line = LorentzianLine {
        center_ev: 1.5707,
        fwhm_ev: 200e-6,
        total_counts: 1e5,
        background_per_bin: 2.0,
    };
    let energies = uniform_grid(1.5707 - 2e-3, 20e-6, 201);
    for seed in 0..5 {
        let counts = line.sample(&energies, seed).unwrap();
        let r = linewidth(&energies, &counts).unwrap();
        assert!((r.fwhm_uev / 200.0 - 1.0).abs() < 0.05, "{}", r.fwhm_uev);
        assert!(!r.resolution_limited);
    }
}

#[test]
fn malus_scan_meets_the_quoted_precision() {
    let scan = PolarizationScan {
        peak_counts: 1e4,
        dop: 0.984,
        theta0_deg: 37.0,
        background: 0.0,
    };
    let angles = uniform_grid(0.0, 10.0, 19);
    for seed in 0..5 {
        let r = dop_fit(&angles, &scan.sample(&angles, seed).unwrap()).unwrap();
        assert!(r.rho_error <= 0.013, "{}", r.rho_error);
        assert!((r.rho - 0.984).abs() <= 0.013, "{}", r.rho);
        assert!((r.theta0_deg - 37.0).abs() < 1.0);
    }
}
