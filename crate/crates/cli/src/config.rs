//! INI-style run configuration.
//!
//! ```text
//! # comment
//! seed = 42
//! output = out/fig3a
//!
//! [chain]
//! eta_setup = 0.0217
//! ```
//!
//! Keys before the first section header are top-level. Every key is typed and
//! checked; unknown sections and keys are rejected with their line number.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use spsim_core::analysis::{BudgetEntry, BudgetTable};
use spsim_core::montecarlo::{EmitterModel, InstrumentChain, MziConfig, PolarizationMode, DEFAULT_REP_RATE_KHZ};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    At { line: usize, message: String },
    #[error("{0}")]
    General(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::At {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

const SECTIONS: [&str; 7] = ["emitter", "chain", "train", "cavity", "mzi", "budget", "analysis"];

fn parse_ini(text: &str) -> Result<(Vec<Entry>, Vec<Section>), ConfigError> {
    let mut top = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, format!("malformed section header `{content}`")))?
                .trim()
                .to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(at(line, format!("unknown section [{name}]")));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(at(line, format!("section [{name}] appears twice")));
            }
            sections.push(Section {
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(at(line, "empty key"));
        }
        let entries = match sections.last_mut() {
            Some(s) => &mut s.entries,
            None => &mut top,
        };
        if let Some(prev) = entries.iter().find(|e| e.key == key) {
            return Err(at(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        entries.push(Entry {
            key,
            value: value.trim().to_string(),
            line,
        });
    }
    Ok((top, sections))
}

/// Typed access to one section; keys are consumed as they are read.
struct Reader {
    section: String,
    entries: BTreeMap<String, Entry>,
}

impl Reader {
    fn new(section: &str, entries: Vec<Entry>) -> Self {
        Self {
            section: section.to_string(),
            entries: entries.into_iter().map(|e| (e.key.clone(), e)).collect(),
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.opt(key)?.unwrap_or(default))
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|err| at(e.line, format!("{}: bad value `{}`: {err}", self.key_name(key), e.value))),
        }
    }

    fn list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.entries.remove(key) {
            None => Ok(default.to_vec()),
            Some(e) => e
                .value
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|err| at(e.line, format!("{}: bad number `{}`: {err}", self.key_name(key), v.trim())))
                })
                .collect(),
        }
    }

    fn key_name(&self, key: &str) -> String {
        if self.section.is_empty() {
            key.to_string()
        } else {
            format!("[{}] {key}", self.section)
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    /// Remaining keys whose name starts with `prefix`.
    fn take_prefixed(&mut self, prefix: &str) -> Vec<Entry> {
        let keys: Vec<String> = self.entries.keys().filter(|k| k.starts_with(prefix)).cloned().collect();
        keys.into_iter().filter_map(|k| self.entries.remove(&k)).collect()
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.values().min_by_key(|e| e.line) {
            None => Ok(()),
            Some(e) => Err(at(e.line, format!("unknown key `{}`", self.key_name(&e.key)))),
        }
    }
}

/// What a run simulates and analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hbt,
    Hom,
    Decay,
    Detuning,
    Polarization,
    Spectrum,
    Cavity,
    Budget,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Hbt,
        Mode::Hom,
        Mode::Decay,
        Mode::Detuning,
        Mode::Polarization,
        Mode::Spectrum,
        Mode::Cavity,
        Mode::Budget,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Hbt => "hbt",
            Mode::Hom => "hom",
            Mode::Decay => "decay",
            Mode::Detuning => "detuning",
            Mode::Polarization => "polarization",
            Mode::Spectrum => "spectrum",
            Mode::Cavity => "cavity",
            Mode::Budget => "budget",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
                format!("expected one of {}", names.join(", "))
            })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub rep_rate_khz: f64,
    pub n_pulses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CavityConfig {
    pub length_um: f64,
    pub lens_diameter_um: f64,
    pub lens_depth_nm: f64,
    pub wavelength_nm: f64,
    pub q_factor: f64,
    pub free_lifetime_ns: f64,
    pub f_res: f64,
    pub f_inh: f64,
    pub detunings_mev: Vec<f64>,
    pub scan_start_um: f64,
    pub scan_stop_um: f64,
    pub scan_step_um: f64,
    pub gold_table: Option<PathBuf>,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            length_um: 5.5,
            lens_diameter_um: 5.0,
            lens_depth_nm: 300.0,
            wavelength_nm: 786.0,
            q_factor: 600.0,
            free_lifetime_ns: 2.3,
            f_res: 1.333,
            f_inh: 0.492,
            detunings_mev: vec![-50.0, -8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0, 50.0],
            scan_start_um: 4.5,
            scan_stop_um: 6.5,
            scan_step_um: 0.01,
            gold_table: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub label: String,
    pub value_pct: f64,
    pub error_pct: f64,
}

/// Budget as written in the config, in percent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetConfig {
    pub entries: Vec<BudgetRow>,
    pub measured_rate_khz: f64,
    pub measured_rate_error_khz: f64,
    pub rep_rate_khz: f64,
    pub rep_rate_error_khz: f64,
}

impl BudgetConfig {
    pub fn table(&self) -> BudgetTable {
        BudgetTable {
            entries: self
                .entries
                .iter()
                .map(|r| BudgetEntry::percent(&r.label, r.value_pct, r.error_pct))
                .collect(),
            measured_rate_khz: self.measured_rate_khz,
            measured_rate_error_khz: self.measured_rate_error_khz,
            rep_rate_khz: self.rep_rate_khz,
            rep_rate_error_khz: self.rep_rate_error_khz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub mode: Option<Mode>,
    pub g2_target: f64,
    pub irf: bool,
    pub irf_pulses: u64,
    pub irf_mean_photons: f64,
    pub bin_width_ps: u64,
    pub n_side_peaks: usize,
    pub windows_ns: Vec<f64>,
    pub hom_bin_width_ps: u64,
    pub lifetime_skip_ps: f64,
    pub scan_peak_counts: f64,
    pub scan_step_deg: f64,
    pub scan_points: usize,
    pub scan_background: f64,
    pub spectrum_fwhm_uev: f64,
    pub spectrum_counts: f64,
    pub spectrum_bin_uev: f64,
    pub spectrum_bins: usize,
    pub spectrum_background: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            mode: None,
            g2_target: 0.047,
            irf: true,
            irf_pulses: 1_000_000,
            irf_mean_photons: 20.0,
            bin_width_ps: 100,
            n_side_peaks: 4,
            windows_ns: vec![3.0, 2.0, 1.1],
            hom_bin_width_ps: 10,
            lifetime_skip_ps: 750.0,
            scan_peak_counts: 1e4,
            scan_step_deg: 10.0,
            scan_points: 19,
            scan_background: 0.0,
            spectrum_fwhm_uev: 200.0,
            spectrum_counts: 1e5,
            spectrum_bin_uev: 20.0,
            spectrum_bins: 201,
            spectrum_background: 2.0,
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; not part of the canonical form.
    #[serde(skip)]
    pub output: Option<PathBuf>,
    pub emitter: EmitterModel,
    pub chain: InstrumentChain,
    pub train: TrainConfig,
    pub mzi: Option<MziConfig>,
    pub cavity: Option<CavityConfig>,
    pub budget: Option<BudgetConfig>,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: None,
            emitter: EmitterModel::default(),
            chain: InstrumentChain::default(),
            train: TrainConfig {
                rep_rate_khz: DEFAULT_REP_RATE_KHZ,
                n_pulses: 1_000_000,
            },
            mzi: None,
            cavity: None,
            budget: None,
            analysis: AnalysisConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::General(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `text`; relative file paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let (top, sections) = parse_ini(text)?;
        let d = RunConfig::default();
        let mut cfg = RunConfig::default();

        let mut r = Reader::new("", top);
        cfg.seed = r.get("seed", d.seed)?;
        cfg.output = r.opt::<String>("output")?.map(|p| base_dir.join(p));
        r.finish()?;

        for s in sections {
            let mut r = Reader::new(&s.name, s.entries);
            match s.name.as_str() {
                "emitter" => {
                    let e = &mut cfg.emitter;
                    e.energy_ev = r.get("energy_ev", e.energy_ev)?;
                    e.t1_ns = r.get("t1_ns", e.t1_ns)?;
                    e.t2_ps = r.get("t2_ps", e.t2_ps)?;
                    e.p_exc = r.get("p_exc", e.p_exc)?;
                    e.p_multi = r.get("p_multi", e.p_multi)?;
                    e.dop = r.get("dop", e.dop)?;
                    e.pol_angle_deg = r.get("pol_angle_deg", e.pol_angle_deg)?;
                    e.validate().map_err(|err| at(s.line, format!("[emitter] {err}")))?;
                }
                "chain" => {
                    let c = &mut cfg.chain;
                    c.eta_first_lens = r.get("eta_first_lens", c.eta_first_lens)?;
                    c.eta_setup = r.get("eta_setup", c.eta_setup)?;
                    c.jitter_fwhm_ps = r.get("jitter_fwhm_ps", c.jitter_fwhm_ps)?;
                    c.dead_time_ns = r.get("dead_time_ns", c.dead_time_ns)?;
                    c.dark_rate_hz = r.get("dark_rate_hz", c.dark_rate_hz)?;
                    c.validate().map_err(|err| at(s.line, format!("[chain] {err}")))?;
                }
                "train" => {
                    let t = &mut cfg.train;
                    t.rep_rate_khz = r.get("rep_rate_khz", t.rep_rate_khz)?;
                    t.n_pulses = r.get("n_pulses", t.n_pulses)?;
                    if !(t.rep_rate_khz > 0.0 && t.rep_rate_khz.is_finite()) || t.n_pulses == 0 {
                        return Err(at(s.line, "[train] needs a positive rep_rate_khz and n_pulses"));
                    }
                }
                "mzi" => {
                    let mut m = MziConfig::default();
                    m.arm_delay_ns = r.get("arm_delay_ns", m.arm_delay_ns)?;
                    m.first_bs_ratio = r.get("first_bs_ratio", m.first_bs_ratio)?;
                    m.second_bs_ratio = r.get("second_bs_ratio", m.second_bs_ratio)?;
                    m.start_offset_ps = r.get("start_offset_ps", m.start_offset_ps)?;
                    m.validate().map_err(|err| at(s.line, format!("[mzi] {err}")))?;
                    cfg.mzi = Some(m);
                }
                "cavity" => {
                    let mut c = CavityConfig::default();
                    c.length_um = r.get("length_um", c.length_um)?;
                    c.lens_diameter_um = r.get("lens_diameter_um", c.lens_diameter_um)?;
                    c.lens_depth_nm = r.get("lens_depth_nm", c.lens_depth_nm)?;
                    c.wavelength_nm = r.get("wavelength_nm", c.wavelength_nm)?;
                    c.q_factor = r.get("q_factor", c.q_factor)?;
                    c.free_lifetime_ns = r.get("free_lifetime_ns", c.free_lifetime_ns)?;
                    c.f_res = r.get("f_res", c.f_res)?;
                    c.f_inh = r.get("f_inh", c.f_inh)?;
                    c.detunings_mev = r.list("detunings_mev", &c.detunings_mev)?;
                    c.scan_start_um = r.get("scan_start_um", c.scan_start_um)?;
                    c.scan_stop_um = r.get("scan_stop_um", c.scan_stop_um)?;
                    c.scan_step_um = r.get("scan_step_um", c.scan_step_um)?;
                    if let Some(line) = r.line_of("gold_table") {
                        let p = base_dir.join(r.opt::<String>("gold_table")?.unwrap_or_default());
                        if !p.is_file() {
                            return Err(at(line, format!("[cavity] gold_table: no such file {}", p.display())));
                        }
                        c.gold_table = Some(p);
                    }
                    if !(c.scan_step_um > 0.0 && c.scan_stop_um >= c.scan_start_um) {
                        return Err(at(s.line, "[cavity] length scan needs scan_step_um > 0 and stop ≥ start"));
                    }
                    cfg.cavity = Some(c);
                }
                "budget" => cfg.budget = Some(read_budget(&mut r, s.line)?),
                "analysis" => {
                    let a = &mut cfg.analysis;
                    a.mode = r.opt("mode")?;
                    a.g2_target = r.get("g2_target", a.g2_target)?;
                    if let Some(line) = r.line_of("irf") {
                        let v: String = r.get("irf", String::new())?;
                        a.irf = match v.as_str() {
                            "laser" => true,
                            "none" => false,
                            _ => return Err(at(line, format!("[analysis] irf: expected laser or none, found `{v}`"))),
                        };
                    }
                    a.irf_pulses = r.get("irf_pulses", a.irf_pulses)?;
                    a.irf_mean_photons = r.get("irf_mean_photons", a.irf_mean_photons)?;
                    a.bin_width_ps = r.get("bin_width_ps", a.bin_width_ps)?;
                    a.n_side_peaks = r.get("n_side_peaks", a.n_side_peaks)?;
                    a.windows_ns = r.list("windows_ns", &a.windows_ns)?;
                    a.hom_bin_width_ps = r.get("hom_bin_width_ps", a.hom_bin_width_ps)?;
                    a.lifetime_skip_ps = r.get("lifetime_skip_ps", a.lifetime_skip_ps)?;
                    a.scan_peak_counts = r.get("scan_peak_counts", a.scan_peak_counts)?;
                    a.scan_step_deg = r.get("scan_step_deg", a.scan_step_deg)?;
                    a.scan_points = r.get("scan_points", a.scan_points)?;
                    a.scan_background = r.get("scan_background", a.scan_background)?;
                    a.spectrum_fwhm_uev = r.get("spectrum_fwhm_uev", a.spectrum_fwhm_uev)?;
                    a.spectrum_counts = r.get("spectrum_counts", a.spectrum_counts)?;
                    a.spectrum_bin_uev = r.get("spectrum_bin_uev", a.spectrum_bin_uev)?;
                    a.spectrum_bins = r.get("spectrum_bins", a.spectrum_bins)?;
                    a.spectrum_background = r.get("spectrum_background", a.spectrum_background)?;
                    if a.bin_width_ps == 0 || a.hom_bin_width_ps == 0 {
                        return Err(at(s.line, "[analysis] bin widths must be positive"));
                    }
                }
                _ => unreachable!("section names are checked while parsing"),
            }
            r.finish()?;
        }
        Ok(cfg)
    }

    pub fn require_mzi(&self) -> Result<MziConfig, ConfigError> {
        self.mzi
            .ok_or_else(|| ConfigError::General("hom mode needs an [mzi] section".into()))
    }

    pub fn require_budget(&self) -> Result<BudgetTable, ConfigError> {
        self.budget
            .as_ref()
            .map(BudgetConfig::table)
            .ok_or_else(|| ConfigError::General("budget analysis needs a [budget] section".into()))
    }

    pub fn cavity_or_default(&self) -> CavityConfig {
        self.cavity.clone().unwrap_or_default()
    }

    /// The HV variant of the interferometer configuration.
    pub fn mzi_with(&self, mode: PolarizationMode) -> Result<MziConfig, ConfigError> {
        Ok(MziConfig {
            polarization_mode: mode,
            ..self.require_mzi()?
        })
    }

    /// Canonical text form: every resolved value, sections in fixed order.
    /// Parsing it back gives the same configuration.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let e = &self.emitter;
        let _ = write!(
            s,
            "\n[emitter]\nenergy_ev = {}\nt1_ns = {}\nt2_ps = {}\np_exc = {}\np_multi = {}\ndop = {}\npol_angle_deg = {}\n",
            e.energy_ev, e.t1_ns, e.t2_ps, e.p_exc, e.p_multi, e.dop, e.pol_angle_deg
        );
        let c = &self.chain;
        let _ = write!(
            s,
            "\n[chain]\neta_first_lens = {}\neta_setup = {}\njitter_fwhm_ps = {}\ndead_time_ns = {}\ndark_rate_hz = {}\n",
            c.eta_first_lens, c.eta_setup, c.jitter_fwhm_ps, c.dead_time_ns, c.dark_rate_hz
        );
        let _ = write!(
            s,
            "\n[train]\nrep_rate_khz = {}\nn_pulses = {}\n",
            self.train.rep_rate_khz, self.train.n_pulses
        );
        if let Some(m) = &self.mzi {
            let _ = write!(
                s,
                "\n[mzi]\narm_delay_ns = {}\nfirst_bs_ratio = {}\nsecond_bs_ratio = {}\nstart_offset_ps = {}\n",
                m.arm_delay_ns, m.first_bs_ratio, m.second_bs_ratio, m.start_offset_ps
            );
        }
        if let Some(c) = &self.cavity {
            let _ = write!(
                s,
                "\n[cavity]\nlength_um = {}\nlens_diameter_um = {}\nlens_depth_nm = {}\nwavelength_nm = {}\n\
                 q_factor = {}\nfree_lifetime_ns = {}\nf_res = {}\nf_inh = {}\ndetunings_mev = {}\n\
                 scan_start_um = {}\nscan_stop_um = {}\nscan_step_um = {}\n",
                c.length_um,
                c.lens_diameter_um,
                c.lens_depth_nm,
                c.wavelength_nm,
                c.q_factor,
                c.free_lifetime_ns,
                c.f_res,
                c.f_inh,
                join(&c.detunings_mev),
                c.scan_start_um,
                c.scan_stop_um,
                c.scan_step_um
            );
            if let Some(p) = &c.gold_table {
                let _ = writeln!(s, "gold_table = {}", p.display());
            }
        }
        if let Some(b) = &self.budget {
            let _ = write!(
                s,
                "\n[budget]\nmeasured_rate_khz = {}\nmeasured_rate_error_khz = {}\nrep_rate_khz = {}\nrep_rate_error_khz = {}\n",
                b.measured_rate_khz, b.measured_rate_error_khz, b.rep_rate_khz, b.rep_rate_error_khz
            );
            for (i, e) in b.entries.iter().enumerate() {
                let _ = write!(
                    s,
                    "entry.{n}.label = {}\nentry.{n}.value_pct = {}\nentry.{n}.error_pct = {}\n",
                    e.label,
                    e.value_pct,
                    e.error_pct,
                    n = i + 1
                );
            }
        }
        let a = &self.analysis;
        s.push_str("\n[analysis]\n");
        if let Some(m) = a.mode {
            let _ = writeln!(s, "mode = {m}");
        }
        let _ = write!(
            s,
            "g2_target = {}\nirf = {}\nirf_pulses = {}\nirf_mean_photons = {}\nbin_width_ps = {}\n\
             n_side_peaks = {}\nwindows_ns = {}\nhom_bin_width_ps = {}\nlifetime_skip_ps = {}\n\
             scan_peak_counts = {}\nscan_step_deg = {}\nscan_points = {}\nscan_background = {}\n\
             spectrum_fwhm_uev = {}\nspectrum_counts = {}\nspectrum_bin_uev = {}\nspectrum_bins = {}\n\
             spectrum_background = {}\n",
            a.g2_target,
            if a.irf { "laser" } else { "none" },
            a.irf_pulses,
            a.irf_mean_photons,
            a.bin_width_ps,
            a.n_side_peaks,
            join(&a.windows_ns),
            a.hom_bin_width_ps,
            a.lifetime_skip_ps,
            a.scan_peak_counts,
            a.scan_step_deg,
            a.scan_points,
            a.scan_background,
            a.spectrum_fwhm_uev,
            a.spectrum_counts,
            a.spectrum_bin_uev,
            a.spectrum_bins,
            a.spectrum_background
        );
        s
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// Fraction to percent, rounded to 1e-6 % so decimal inputs come back unchanged.
fn as_percent(fraction: f64) -> f64 {
    (fraction * 1e8).round() / 1e6
}

fn read_budget(r: &mut Reader, section_line: usize) -> Result<BudgetConfig, ConfigError> {
    let reference = BudgetTable::reference();
    let mut table = BudgetConfig {
        entries: Vec::new(),
        measured_rate_khz: r.get("measured_rate_khz", reference.measured_rate_khz)?,
        measured_rate_error_khz: r.get("measured_rate_error_khz", reference.measured_rate_error_khz)?,
        rep_rate_khz: r.get("rep_rate_khz", reference.rep_rate_khz)?,
        rep_rate_error_khz: r.get("rep_rate_error_khz", reference.rep_rate_error_khz)?,
    };
    // entry.N.field; entries are ordered by N.
    let mut by_index: BTreeMap<u32, (Option<String>, Option<f64>, Option<f64>, usize)> = BTreeMap::new();
    for e in r.take_prefixed("entry.") {
        let mut parts = e.key.splitn(3, '.').skip(1);
        let (n, field) = (parts.next(), parts.next());
        let n: u32 = n
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| at(e.line, format!("[budget] malformed key `{}`", e.key)))?;
        let slot = by_index.entry(n).or_insert((None, None, None, e.line));
        slot.3 = slot.3.min(e.line);
        let number = |v: &str| {
            v.parse::<f64>()
                .map_err(|err| at(e.line, format!("[budget] {}: bad value `{v}`: {err}", e.key)))
        };
        match field {
            Some("label") => slot.0 = Some(e.value.clone()),
            Some("value_pct") => slot.1 = Some(number(&e.value)?),
            Some("error_pct") => slot.2 = Some(number(&e.value)?),
            _ => return Err(at(e.line, format!("unknown key `[budget] {}`", e.key))),
        }
    }
    for (n, (label, value, error, line)) in by_index {
        let (Some(value), Some(error)) = (value, error) else {
            return Err(at(line, format!("[budget] entry.{n} needs value_pct and error_pct")));
        };
        table.entries.push(BudgetRow {
            label: label.unwrap_or_else(|| format!("entry {n}")),
            value_pct: value,
            error_pct: error,
        });
    }
    if table.entries.is_empty() {
        table.entries = reference
            .entries
            .iter()
            .map(|e| BudgetRow {
                label: e.label.clone(),
                value_pct: as_percent(e.efficiency),
                error_pct: as_percent(e.abs_error),
            })
            .collect();
    }
    if let Some(bad) = table.entries.iter().find(|e| !(e.value_pct > 0.0 && e.value_pct <= 100.0)) {
        return Err(at(
            section_line,
            format!("[budget] entry `{}` must lie in (0, 100] percent", bad.label),
        ));
    }
    Ok(table)
}
