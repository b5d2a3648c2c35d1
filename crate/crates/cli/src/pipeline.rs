//! Simulation and analysis steps shared by the subcommands.
//!
//! Every step returns its files in memory; the caller decides where they go.

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use spsim_core::analysis::{
    brightness_budget, dephasing_estimate, dop_fit, fit_lifetime, hbt_g2_with, hom_visibility_with,
    lifetime_vs_detuning, linewidth, measure_irf, rate_ratio, visibility_closed_form, DetuningPoint,
    DetuningSeries, HbtOptions, HomOptions, LifetimeOptions, LifetimeResult, TimescaleMode,
};
use spsim_core::fitkit::{FitResult, ModelSpec};
use spsim_core::montecarlo::synthetic::{uniform_grid, LorentzianLine, PolarizationScan};
use spsim_core::montecarlo::{
    simulate_coherent_hbt, simulate_decay, simulate_hbt, simulate_hom, EmitterModel, MziConfig,
    PolarizationMode, PulseTrain,
};
use spsim_core::optics::{
    cavity_mode_spectrum, dbr_reflectivity, default_overlap, gaussian_mode_volume, gaussian_waist,
    kappa_from_q, open_cavity_stack, purcell_factor, stopband, CavityGeometry, DetunedDecayModel,
    GoldTable, LayerStack,
};
use spsim_core::ptag;
use spsim_core::stream::TimeTagStream;

use crate::config::{Mode, RunConfig};
use crate::output::{FileDigest, Outputs};

/// Half-width of the histogram from which a laser IRF is cut, ps.
const IRF_HALF_RANGE_PS: f64 = 3000.0;

pub fn pulse_train(cfg: &RunConfig) -> PulseTrain {
    PulseTrain::new(cfg.train.rep_rate_khz, cfg.train.n_pulses, cfg.seed)
}

fn add_stream(out: &mut Outputs, name: &str, stream: &TimeTagStream) -> FileDigest {
    let bytes = ptag::encode(stream);
    let digest = FileDigest::of(name, &bytes);
    out.add(name, bytes);
    digest
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

fn fit_json(fit: &FitResult) -> Value {
    let params: serde_json::Map<String, Value> = fit
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            (
                n.clone(),
                json!({ "value": fit.params[i], "error": fit.std_errors[i], "fixed": fit.fixed[i] }),
            )
        })
        .collect();
    json!({
        "chi2": fit.chi2,
        "reduced_chi2": fit.reduced_chi2,
        "dof": fit.dof,
        "iterations": fit.n_iterations,
        "converged": fit.converged,
        "params": params,
    })
}

/// Streams produced by a simulation, by file name.
pub struct Simulated {
    pub outputs: Outputs,
    pub streams: Vec<(String, TimeTagStream)>,
    /// Two-column data for the count-level modes.
    pub table: Option<(Vec<f64>, Vec<f64>)>,
}

impl Simulated {
    fn new() -> Self {
        Self {
            outputs: Outputs::default(),
            streams: Vec::new(),
            table: None,
        }
    }

    fn push(&mut self, name: &str, stream: TimeTagStream, warnings: Vec<String>) {
        add_stream(&mut self.outputs, name, &stream);
        self.outputs.warnings.extend(warnings.into_iter().map(|w| format!("{name}: {w}")));
        self.streams.push((name.to_string(), stream));
    }

    pub fn stream(&self, name: &str) -> Option<&TimeTagStream> {
        self.streams.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn input_digests(&self, names: &[&str]) -> Vec<FileDigest> {
        names.iter().filter_map(|n| self.outputs.digest(n)).collect()
    }
}

fn decay_model(cfg: &RunConfig) -> Result<DetunedDecayModel> {
    let c = cfg.cavity_or_default();
    let kappa = kappa_from_q(cfg.emitter.energy_ev, c.q_factor)?;
    Ok(DetunedDecayModel::new(1.0 / c.free_lifetime_ns, c.f_res, c.f_inh, kappa)?)
}

fn detuning_file(i: usize) -> String {
    format!("decay_{i:02}.ptag")
}

pub fn simulate(cfg: &RunConfig, mode: Mode) -> Result<Simulated> {
    let train = pulse_train(cfg);
    let mut sim = Simulated::new();
    match mode {
        Mode::Hbt => {
            let out = simulate_hbt(&cfg.emitter, &cfg.chain, &train, cfg.analysis.g2_target)?;
            sim.push("hbt.ptag", out.stream, out.warnings);
            if cfg.analysis.irf {
                let laser = PulseTrain::new(cfg.train.rep_rate_khz, cfg.analysis.irf_pulses, cfg.seed);
                let out = simulate_coherent_hbt(cfg.analysis.irf_mean_photons, 0.0, &cfg.chain, &laser)?;
                sim.push("irf.ptag", out.stream, out.warnings);
            }
        }
        Mode::Hom => {
            for (name, pol) in [("hom_hh.ptag", PolarizationMode::HH), ("hom_hv.ptag", PolarizationMode::HV)] {
                let out = simulate_hom(&cfg.emitter, &cfg.chain, &train, &cfg.mzi_with(pol)?)?;
                sim.push(name, out.stream, out.warnings);
            }
        }
        Mode::Decay => {
            let out = simulate_decay(&cfg.emitter, &cfg.chain, &train)?;
            sim.push("decay.ptag", out.stream, out.warnings);
        }
        Mode::Detuning => {
            let model = decay_model(cfg)?;
            for (i, &d) in cfg.cavity_or_default().detunings_mev.iter().enumerate() {
                let emitter = EmitterModel {
                    t1_ns: model.lifetime_ns(d),
                    ..cfg.emitter
                };
                let t = PulseTrain {
                    seed: cfg.seed.wrapping_add(i as u64),
                    ..train
                };
                let out = simulate_decay(&emitter, &cfg.chain, &t)?;
                sim.push(&detuning_file(i), out.stream, out.warnings);
            }
        }
        Mode::Polarization => {
            let a = &cfg.analysis;
            let scan = PolarizationScan {
                peak_counts: a.scan_peak_counts,
                dop: cfg.emitter.dop,
                theta0_deg: cfg.emitter.pol_angle_deg,
                background: a.scan_background,
            };
            let angles = uniform_grid(0.0, a.scan_step_deg, a.scan_points);
            let counts = scan.sample(&angles, cfg.seed)?;
            sim.outputs.add("scan.csv", xy_csv("angle_deg,counts", &angles, &counts));
            sim.table = Some((angles, counts));
        }
        Mode::Spectrum => {
            let a = &cfg.analysis;
            let line = LorentzianLine {
                center_ev: cfg.emitter.energy_ev,
                fwhm_ev: a.spectrum_fwhm_uev * 1e-6,
                total_counts: a.spectrum_counts,
                background_per_bin: a.spectrum_background,
            };
            let bin = a.spectrum_bin_uev * 1e-6;
            let start = cfg.emitter.energy_ev - 0.5 * (a.spectrum_bins.saturating_sub(1)) as f64 * bin;
            let energies = uniform_grid(start, bin, a.spectrum_bins);
            let counts = line.sample(&energies, cfg.seed)?;
            sim.outputs.add("spectrum.csv", xy_csv("energy_ev,counts", &energies, &counts));
            sim.table = Some((energies, counts));
        }
        Mode::Cavity | Mode::Budget => bail!("{mode} mode has nothing to simulate; use `run` or `{mode}`"),
    }
    Ok(sim)
}

fn xy_csv(header: &str, x: &[f64], y: &[f64]) -> Vec<u8> {
    csv(header, x.iter().zip(y).map(|(a, b)| format!("{a},{b}")))
}

/// Reads a two-column numeric CSV; a non-numeric first line is a header.
pub fn read_xy_csv(name: &str, text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((a, b)) => {
                x.push(a);
                y.push(b);
            }
            None if i == 0 => continue,
            None => bail!("{name}: line {}: expected two numeric columns, found `{line}`", i + 1),
        }
    }
    Ok((x, y))
}

fn arm_delay_periods(mzi: &MziConfig, period_ps: f64) -> u64 {
    (mzi.arm_delay_ns * 1000.0 / period_ps).round() as u64
}

pub fn analyze_g2(
    cfg: &RunConfig,
    stream: &TimeTagStream,
    laser: Option<&TimeTagStream>,
    inputs: Vec<FileDigest>,
) -> Result<Outputs> {
    let a = &cfg.analysis;
    let period = pulse_train(cfg).period_ps();
    let irf = laser
        .map(|l| measure_irf(l, 0, 1, a.bin_width_ps, IRF_HALF_RANGE_PS))
        .transpose()
        .context("instrument response")?;
    let opts = HbtOptions {
        bin_width_ps: a.bin_width_ps,
        n_side_peaks: a.n_side_peaks,
        ..HbtOptions::default()
    };
    let r = hbt_g2_with(stream, irf.as_ref(), period, &opts)?;
    let mut out = Outputs::default();
    out.add_json(
        "g2.json",
        &json!({
            "measurement": "g2",
            "inputs": inputs,
            "period_ps": period,
            "bin_width_ps": a.bin_width_ps,
            "n_side_peaks": a.n_side_peaks,
            "irf_bins": irf.as_ref().map(|i| i.len()),
            "g2_zero": r.g2_zero,
            "g2_error": r.g2_error,
            "decay_time_ns": r.tau_fit_ns,
            "t0_ps": r.t0_ps,
            "fit": fit_json(&r.fit),
        }),
    )?;
    let h = &r.histogram;
    out.add(
        "g2_histogram.csv",
        csv(
            "delay_ps,counts,fit",
            h.counts
                .iter()
                .enumerate()
                .map(|(k, c)| format!("{},{},{}", h.bin_center(k), c, r.fit_curve[k])),
        ),
    );
    Ok(out)
}

pub fn analyze_hom(
    cfg: &RunConfig,
    hh: &TimeTagStream,
    hv: &TimeTagStream,
    inputs: Vec<FileDigest>,
) -> Result<Outputs> {
    let a = &cfg.analysis;
    let period = pulse_train(cfg).period_ps();
    let mzi = cfg.mzi.unwrap_or_default();
    let opts = HomOptions {
        bin_width_ps: a.hom_bin_width_ps,
        fit_bin_width_ps: a.bin_width_ps,
        arm_delay_periods: arm_delay_periods(&mzi, period),
        ..HomOptions::default()
    };
    let r = hom_visibility_with(hh, hv, period, &a.windows_ns, &opts)?;
    let e = &cfg.emitter;
    let mut windows = Vec::new();
    let mut rows = Vec::new();
    for w in &r.windows {
        let expected = visibility_closed_form(e.t1_ns, e.t2_ps, w.window_ns).ok();
        let dephasing = |timescale, mode| dephasing_estimate(w.visibility, timescale, mode).ok().map(|d| d.t2_ps);
        let t2_lifetime = dephasing(e.t1_ns, TimescaleMode::Lifetime);
        let t2_window = dephasing(w.window_ns, TimescaleMode::Window);
        windows.push(json!({
            "window_ns": w.window_ns,
            "area_hh": w.area_hh,
            "area_hv": w.area_hv,
            "g2_hh": w.g2_hh,
            "g2_hv": w.g2_hv,
            "visibility": w.visibility,
            "visibility_error": w.visibility_error,
            "ci_low": w.ci_low,
            "ci_high": w.ci_high,
            "closed_form": expected,
            "t2_ps_lifetime_mode": t2_lifetime,
            "t2_ps_window_mode": t2_window,
        }));
        rows.push(format!(
            "{},{},{},{},{},{}",
            w.window_ns,
            w.visibility,
            w.visibility_error,
            w.g2_hh,
            w.g2_hv,
            expected.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    let mut out = Outputs::default();
    out.add_json(
        "hom.json",
        &json!({
            "measurement": "hom",
            "inputs": inputs,
            "period_ps": period,
            "bin_width_ps": a.hom_bin_width_ps,
            "arm_delay_periods": opts.arm_delay_periods,
            "peak_offset_ps": r.offset_ps,
            "t1_ns": e.t1_ns,
            "t2_ps": e.t2_ps,
            "windows": windows,
        }),
    )?;
    out.add(
        "visibility.csv",
        csv("window_ns,visibility,visibility_error,g2_hh,g2_hv,closed_form", rows),
    );
    let (h1, h2) = (&r.histogram_hh, &r.histogram_hv);
    out.add(
        "hom_histograms.csv",
        csv(
            "delay_ps,hh,hv",
            (0..h1.n_bins()).map(|k| format!("{},{},{}", h1.bin_center(k), h1.counts[k], h2.counts[k])),
        ),
    );
    Ok(out)
}

fn lifetime_options(cfg: &RunConfig) -> LifetimeOptions {
    LifetimeOptions {
        bin_width_ps: cfg.analysis.bin_width_ps,
        skip_ps: cfg.analysis.lifetime_skip_ps,
        ..LifetimeOptions::default()
    }
}

fn lifetime_json(r: &LifetimeResult) -> Value {
    json!({
        "lifetime_ns": r.lifetime_ns,
        "lifetime_error_ns": r.lifetime_error_ns,
        "fit_from_ps": r.fit_from_ps,
        "fit": fit_json(&r.fit),
    })
}

fn lifetime_csv(r: &LifetimeResult) -> Vec<u8> {
    let h = &r.histogram;
    let x = h.bin_centers();
    let curve = ModelSpec::ExpDecay.eval(&x, &r.fit.params);
    csv(
        "time_ps,counts,fit",
        x.iter().enumerate().map(|(k, t)| {
            let fit = if *t >= r.fit_from_ps {
                curve[k].to_string()
            } else {
                String::new()
            };
            format!("{t},{},{fit}", h.counts[k])
        }),
    )
}

pub fn analyze_lifetime(cfg: &RunConfig, stream: &TimeTagStream, inputs: Vec<FileDigest>) -> Result<Outputs> {
    let period = pulse_train(cfg).period_ps();
    let r = fit_lifetime(stream, period, &lifetime_options(cfg))?;
    let mut out = Outputs::default();
    let mut v = lifetime_json(&r);
    v["measurement"] = json!("lifetime");
    v["inputs"] = json!(inputs);
    out.add_json("lifetime.json", &v)?;
    out.add("lifetime_histogram.csv", lifetime_csv(&r));
    Ok(out)
}

/// Lifetimes of a detuning series and the detuned-decay fit through them.
pub fn analyze_detuning(
    cfg: &RunConfig,
    streams: &[(f64, &TimeTagStream)],
    inputs: Vec<FileDigest>,
) -> Result<Outputs> {
    let period = pulse_train(cfg).period_ps();
    let opts = lifetime_options(cfg);
    let mut points = Vec::new();
    let mut per_point = Vec::new();
    for (d, s) in streams {
        let r = fit_lifetime(s, period, &opts).with_context(|| format!("lifetime at {d} meV"))?;
        points.push(DetuningPoint {
            detuning_mev: *d,
            lifetime_ns: r.lifetime_ns,
            lifetime_error_ns: r.lifetime_error_ns,
        });
        let mut v = lifetime_json(&r);
        v["detuning_mev"] = json!(d);
        per_point.push(v);
    }
    let c = cfg.cavity_or_default();
    let gamma_free = 1.0 / c.free_lifetime_ns;
    let fit = if points.len() >= 4 {
        let f = lifetime_vs_detuning(&DetuningSeries { points: points.clone() }, gamma_free)?;
        Some(json!({
            "f_res": f.model.f_res,
            "f_res_error": f.f_res_error,
            "f_inh": f.model.f_inh,
            "f_inh_error": f.f_inh_error,
            "kappa_mev": f.model.kappa_mev,
            "kappa_error_mev": f.kappa_error_mev,
            "warnings": f.warnings,
            "fit": fit_json(&f.fit),
        }))
    } else {
        None
    };
    let res = points.iter().min_by(|a, b| a.detuning_mev.abs().total_cmp(&b.detuning_mev.abs()));
    let far = points.iter().max_by(|a, b| a.detuning_mev.abs().total_cmp(&b.detuning_mev.abs()));
    let ratio = match (res, far) {
        (Some(r), Some(f)) if f.detuning_mev.abs() > r.detuning_mev.abs() => Some(rate_ratio(
            r.lifetime_ns,
            r.lifetime_error_ns,
            f.lifetime_ns,
            f.lifetime_error_ns,
        )?),
        _ => None,
    };
    let mut out = Outputs::default();
    out.add_json(
        "detuning.json",
        &json!({
            "measurement": "detuning",
            "inputs": inputs,
            "free_lifetime_ns": c.free_lifetime_ns,
            "points": per_point,
            "rate_ratio": ratio.map(|r| r.ratio),
            "rate_ratio_error": ratio.map(|r| r.error),
            "resonant_reduction": res.map(|r| 1.0 - r.lifetime_ns / c.free_lifetime_ns),
            "model_fit": fit,
        }),
    )?;
    out.add(
        "lifetimes.csv",
        csv(
            "detuning_mev,lifetime_ns,lifetime_error_ns",
            points
                .iter()
                .map(|p| format!("{},{},{}", p.detuning_mev, p.lifetime_ns, p.lifetime_error_ns)),
        ),
    );
    Ok(out)
}

pub fn analyze_dop(angles: &[f64], counts: &[f64], inputs: Vec<FileDigest>) -> Result<Outputs> {
    let r = dop_fit(angles, counts)?;
    let mut out = Outputs::default();
    out.add_json(
        "dop.json",
        &json!({
            "measurement": "dop",
            "inputs": inputs,
            "rho": r.rho,
            "rho_error": r.rho_error,
            "dop_pct": 100.0 * r.rho,
            "dop_error_pct": 100.0 * r.rho_error,
            "theta0_deg": if r.undefined_angle { None } else { Some(r.theta0_deg) },
            "theta0_error_deg": if r.undefined_angle { None } else { Some(r.theta0_error) },
            "undefined_angle": r.undefined_angle,
            "fit": fit_json(&r.fit),
        }),
    )?;
    Ok(out)
}

pub fn analyze_linewidth(energies: &[f64], counts: &[f64], inputs: Vec<FileDigest>) -> Result<Outputs> {
    let r = linewidth(energies, counts)?;
    let mut out = Outputs::default();
    out.add_json(
        "linewidth.json",
        &json!({
            "measurement": "linewidth",
            "inputs": inputs,
            "fwhm_uev": r.fwhm_uev,
            "fwhm_error_uev": r.fwhm_error_uev,
            "center_ev": r.center_ev,
            "center_error_uev": r.center_error_uev,
            "bin_uev": r.bin_uev,
            "resolution_limited": r.resolution_limited,
            "fit": fit_json(&r.fit),
        }),
    )?;
    Ok(out)
}

pub fn analyze_budget(cfg: &RunConfig) -> Result<Outputs> {
    let table = cfg.require_budget()?;
    let r = brightness_budget(&table)?;
    let mut out = Outputs::default();
    out.add_json(
        "budget.json",
        &json!({
            "measurement": "budget",
            "inputs": [],
            "entries": table.entries,
            "total_efficiency_pct": 100.0 * r.total_efficiency,
            "total_error_pct": 100.0 * r.total_error,
            "corrected_rate_per_pulse": r.corrected_rate_per_pulse,
            "first_lens_brightness_pct": 100.0 * r.brightness,
            "first_lens_brightness_error_pct": 100.0 * r.brightness_error,
        }),
    )?;
    Ok(out)
}

/// Stopband, mode spectrum, beam waist and detuned decay rate of the resonator.
pub fn cavity_report(cfg: &RunConfig) -> Result<Outputs> {
    let c = cfg.cavity_or_default();
    let geom = CavityGeometry::from_lens(c.length_um, c.lens_diameter_um, c.lens_depth_nm, c.wavelength_nm)?;
    let dbr = LayerStack::tio2_sio2_dbr();
    let band = stopband(&dbr, 600.0, 950.0, 0.1)?;
    let grid = uniform_grid(600.0, 0.5, 701);
    let spectrum = dbr_reflectivity(&dbr, &grid)?;
    let modes = cavity_mode_spectrum(&geom, (1.45, 1.75))?;
    let waist = gaussian_waist(&geom, c.wavelength_nm)?;
    let volume = gaussian_mode_volume(&geom, c.wavelength_nm)?;
    let overlap = default_overlap();
    let purcell = purcell_factor(c.wavelength_nm, 1.0, c.q_factor, volume, overlap);
    let gold = match &c.gold_table {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            GoldTable::parse(&text).with_context(|| p.display().to_string())?
        }
        None => GoldTable::bundled(),
    };
    let open = open_cavity_stack(c.length_um, gold.index_at(c.wavelength_nm)?)?;
    let open_r = dbr_reflectivity(&open, &[c.wavelength_nm])?[0];
    let model = decay_model(cfg)?;

    let mut scan_rows = Vec::new();
    let n_scan = ((c.scan_stop_um - c.scan_start_um) / c.scan_step_um).round() as usize + 1;
    for l in uniform_grid(c.scan_start_um, c.scan_step_um, n_scan) {
        let g = CavityGeometry::new(l, geom.radius_um, c.lens_diameter_um, c.lens_depth_nm, c.wavelength_nm)?;
        for m in cavity_mode_spectrum(&g, (1.50, 1.65))?.modes {
            scan_rows.push(format!("{l},{},{},{}", m.longitudinal_index, m.transverse_order, m.energy_ev));
        }
    }

    let mut out = Outputs::default();
    out.add_json(
        "cavity.json",
        &json!({
            "geometry": geom,
            "longitudinal_spacing_mev": geom.longitudinal_spacing_mev(),
            "transverse_spacing_mev": geom.transverse_spacing_mev(),
            "gouy_fraction": geom.gouy_fraction(),
            "waist_um": waist.waist_um,
            "mode_diameter_um": waist.mode_diameter_um,
            "mode_volume_um3": volume,
            "purcell_overlap": overlap,
            "purcell_estimate": purcell,
            "stopband": band,
            "open_cavity": {
                "wavelength_nm": c.wavelength_nm,
                "reflectivity": open_r.reflectivity,
                "transmission": open_r.transmission,
            },
            "modes": modes.modes,
            "decay_model": {
                "gamma_free_per_ns": model.gamma_free_per_ns,
                "f_res": model.f_res,
                "f_inh": model.f_inh,
                "kappa_mev": model.kappa_mev,
                "contrast": model.contrast(),
                "lifetime_on_resonance_ns": model.lifetime_ns(0.0),
            },
        }),
    )?;
    out.add(
        "dbr_reflectivity.csv",
        csv(
            "wavelength_nm,reflectivity,transmission",
            spectrum
                .iter()
                .map(|s| format!("{},{},{}", s.wavelength_nm, s.reflectivity, s.transmission)),
        ),
    );
    out.add(
        "modes.csv",
        csv("length_um,longitudinal_index,transverse_order,energy_ev", scan_rows),
    );
    out.add(
        "decay_rate.csv",
        csv(
            "detuning_mev,rate_per_ns,lifetime_ns",
            uniform_grid(-20.0, 0.1, 401)
                .into_iter()
                .map(|d| format!("{d},{},{}", model.decay_rate(d), model.lifetime_ns(d))),
        ),
    );
    Ok(out)
}

/// Simulation followed by the matching analysis, all in memory.
pub fn run(cfg: &RunConfig, mode: Mode) -> Result<Outputs> {
    match mode {
        Mode::Cavity => return cavity_report(cfg),
        Mode::Budget => return analyze_budget(cfg),
        _ => {}
    }
    let sim = simulate(cfg, mode)?;
    let stream = |name: &str| sim.stream(name).with_context(|| format!("{name} was not simulated"));
    let analysis = match mode {
        Mode::Hbt => {
            let laser = sim.stream("irf.ptag");
            let inputs = sim.input_digests(&["hbt.ptag", "irf.ptag"]);
            analyze_g2(cfg, stream("hbt.ptag")?, laser, inputs)?
        }
        Mode::Hom => analyze_hom(
            cfg,
            stream("hom_hh.ptag")?,
            stream("hom_hv.ptag")?,
            sim.input_digests(&["hom_hh.ptag", "hom_hv.ptag"]),
        )?,
        Mode::Decay => analyze_lifetime(cfg, stream("decay.ptag")?, sim.input_digests(&["decay.ptag"]))?,
        Mode::Detuning => {
            let detunings = cfg.cavity_or_default().detunings_mev;
            let names: Vec<String> = (0..detunings.len()).map(detuning_file).collect();
            let mut series = Vec::new();
            for (d, n) in detunings.iter().zip(&names) {
                series.push((*d, stream(n)?));
            }
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            analyze_detuning(cfg, &series, sim.input_digests(&refs))?
        }
        Mode::Polarization | Mode::Spectrum => {
            let (x, y) = sim.table.as_ref().context("no scan data")?;
            let name = if mode == Mode::Polarization { "scan.csv" } else { "spectrum.csv" };
            let inputs = sim.input_digests(&[name]);
            if mode == Mode::Polarization {
                analyze_dop(x, y, inputs)?
            } else {
                analyze_linewidth(x, y, inputs)?
            }
        }
        Mode::Cavity | Mode::Budget => unreachable!(),
    };
    let mut out = sim.outputs;
    out.extend(analysis);
    Ok(out)
}
