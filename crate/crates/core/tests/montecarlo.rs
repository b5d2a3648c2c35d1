use spsim_core::analysis::{deadtime_correct, hbt_g2, hom_visibility, visibility_closed_form};
use spsim_core::montecarlo::*;
use spsim_core::stream::TimeTagStream;

const REP_KHZ: f64 = 76_227.93;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn lossy_chain() -> InstrumentChain {
    InstrumentChain {
        eta_first_lens: 0.65,
        eta_setup: 0.3,
        dark_rate_hz: 5e4,
        ..InstrumentChain::default()
    }
}

#[test]
fn streams_do_not_depend_on_thread_count() {
    let emitter = EmitterModel {
        p_exc: 0.8,
        ..EmitterModel::default()
    };
    let train = PulseTrain::new(REP_KHZ, 300_000, 17);
    let chain = lossy_chain();
    let run = |threads| {
        in_pool(threads, || {
            (
                simulate_hbt(&emitter, &chain, &train, 0.1).unwrap().stream,
                simulate_hom(&emitter, &chain, &train, &MziConfig::default()).unwrap().stream,
                simulate_decay(&emitter, &chain, &train).unwrap().stream,
                simulate_coherent_hbt(2.0, 0.0, &chain, &train).unwrap().stream,
            )
        })
    };
    let one = run(1);
    for threads in [4, 8] {
        assert!(run(threads) == one);
    }
    let other_seed = PulseTrain { seed: 18, ..train };
    let s = simulate_hbt(&emitter, &chain, &other_seed, 0.1).unwrap().stream;
    assert!(s != one.0);
}

#[test]
fn outputs_are_valid_streams() {
    let emitter = EmitterModel::default();
    let train = PulseTrain::new(REP_KHZ, 100_000, 5);
    let chain = lossy_chain();
    let streams: Vec<TimeTagStream> = vec![
        simulate_hbt(&emitter, &chain, &train, 0.3).unwrap().stream,
        simulate_hom(&emitter, &chain, &train, &MziConfig::default()).unwrap().stream,
        simulate_decay(&emitter, &chain, &train).unwrap().stream,
        simulate_coherent_hbt(1.0, 1.0, &chain, &train).unwrap().stream,
    ];
    for s in streams {
        s.validate().unwrap();
        assert!(!s.is_empty());
    }
}

#[test]
fn click_rate_matches_emission_and_efficiency() {
    let emitter = EmitterModel {
        p_exc: 0.8,
        p_multi: 0.1,
        ..EmitterModel::default()
    };
    let chain = InstrumentChain {
        eta_first_lens: 0.5,
        eta_setup: 0.025,
        dark_rate_hz: 0.0,
        ..InstrumentChain::default()
    };
    let n = 4_000_000;
    let train = PulseTrain::new(REP_KHZ, n, 23);
    let out = simulate_decay(&emitter, &chain, &train).unwrap();
    let clicks = out.stream.count_on(1) as f64;
    let seconds = out.stream.duration_ps() as f64 * 1e-12;
    let measured_khz = clicks / seconds / 1e3;
    let true_khz = deadtime_correct(measured_khz, chain.dead_time_ns).unwrap();
    let expected_khz = REP_KHZ * emitter.p_exc * (1.0 + emitter.p_multi) * chain.eta_total();
    let expected_clicks = expected_khz * 1e3 * seconds;
    let sigma_khz = expected_khz / expected_clicks.sqrt();
    assert!(
        (true_khz - expected_khz).abs() < 3.0 * sigma_khz,
        "{true_khz} vs {expected_khz} ± {sigma_khz}"
    );
}

#[test]
fn hbt_closed_loop() {
    let train = PulseTrain::new(REP_KHZ, 2_000_000, 31);
    for target in [0.0, 0.05, 0.2, 0.5] {
        let out = simulate_hbt(&EmitterModel::default(), &InstrumentChain::ideal(), &train, target).unwrap();
        let r = hbt_g2(&out.stream, None, train.period_ps(), 4).unwrap();
        assert!(
            (r.g2_zero - target).abs() <= 3.0 * r.g2_error,
            "target {target}: {} ± {}",
            r.g2_zero,
            r.g2_error
        );
    }
}

/// `V(T)` by direct integration over both emission delays: midpoint rule in
/// the first delay, Simpson's rule on each side of the diagonal in the second.
fn visibility_by_quadrature(t1_ns: f64, t2_ps: f64, window_ns: f64) -> f64 {
    let g1 = 1.0 / t1_ns;
    let g_star = 1000.0 / t2_ps - 0.5 * g1;
    let half = 0.5 * window_ns;
    let simpson = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        let n = 400;
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
        }
        s * h / 3.0
    };
    let (steps, reach) = (4000, 30.0 * t1_ns);
    let h = reach / steps as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..steps {
        let a = (i as f64 + 0.5) * h;
        let pa = (-g1 * a).exp();
        let lo = (a - half).max(0.0);
        let hi = a + half;
        let overlap = |b: f64| (-g1 * b).exp() * (-2.0 * g_star * (a - b).abs()).exp();
        let density = |b: f64| (-g1 * b).exp();
        num += pa * (simpson(&overlap, lo, a) + simpson(&overlap, a, hi));
        den += pa * (simpson(&density, lo, a) + simpson(&density, a, hi));
    }
    num / den
}

#[test]
fn closed_form_visibility_matches_quadrature() {
    for window in [0.5, 1.1, 2.0, 3.0] {
        let cf = visibility_closed_form(1.725, 45.0, window).unwrap();
        let q = visibility_by_quadrature(1.725, 45.0, window);
        assert!((cf - q).abs() < 1e-3 * cf, "{window}: {cf} vs {q}");
    }
}

#[test]
fn hom_closed_loop() {
    let train = PulseTrain::new(REP_KHZ, 2_000_000, 37);
    let emitter = EmitterModel::default();
    let chain = InstrumentChain::ideal();
    let hh = simulate_hom(&emitter, &chain, &train, &MziConfig::default()).unwrap();
    let hv_mzi = MziConfig {
        polarization_mode: PolarizationMode::HV,
        ..MziConfig::default()
    };
    let hv = simulate_hom(&emitter, &chain, &train, &hv_mzi).unwrap();
    let windows = [3.0, 2.0, 1.1, 0.5];
    let r = hom_visibility(&hh.stream, &hv.stream, train.period_ps(), &windows).unwrap();
    for w in &r.windows {
        let cf = visibility_closed_form(1.725, 45.0, w.window_ns).unwrap();
        let se = (w.visibility * (1.0 - w.visibility) / w.area_hv).sqrt();
        assert!((w.visibility - cf).abs() <= 3.0 * se, "{}: {} vs {cf} (se {se})", w.window_ns, w.visibility);
    }
    for pair in r.windows.windows(2) {
        assert!(pair[1].visibility > pair[0].visibility);
    }
}
