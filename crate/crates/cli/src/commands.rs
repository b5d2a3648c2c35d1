//! The subcommands, callable without going through argument parsing.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use spsim_core::ptag;
use spsim_core::stream::TimeTagStream;

use crate::config::{Mode, RunConfig};
use crate::output::{FileDigest, Manifest, Outputs};
use crate::pipeline;
use crate::recipes;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measurement {
    G2,
    Hom,
    Lifetime,
    Dop,
    Budget,
    Linewidth,
}

impl Measurement {
    pub const ALL: [Measurement; 6] = [
        Measurement::G2,
        Measurement::Hom,
        Measurement::Lifetime,
        Measurement::Dop,
        Measurement::Budget,
        Measurement::Linewidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measurement::G2 => "g2",
            Measurement::Hom => "hom",
            Measurement::Lifetime => "lifetime",
            Measurement::Dop => "dop",
            Measurement::Budget => "budget",
            Measurement::Linewidth => "linewidth",
        }
    }
}

impl FromStr for Measurement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Measurement::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Measurement::ALL.iter().map(|m| m.name()).collect();
            format!("expected one of {}", names.join(", "))
        })
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Configuration from a file, a built-in recipe, or defaults, with the seed override applied.
pub fn load_config(path: Option<&Path>, recipe: Option<&str>, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = match (path, recipe) {
        (Some(_), Some(_)) => bail!("give either a recipe name or --config, not both"),
        (Some(p), None) => RunConfig::from_file(p).with_context(|| p.display().to_string())?,
        (None, Some(name)) => {
            let text = recipes::recipe(name).with_context(|| {
                format!("unknown recipe `{name}`; available: {}", recipes::names().join(", "))
            })?;
            RunConfig::parse(text, Path::new(".")).with_context(|| format!("recipe {name}"))?
        }
        (None, None) => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// `--out` wins over the config's `output` key.
pub fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .context("no output directory: pass --out or set `output` in the config")
}

fn manifest(cfg: &RunConfig, command: &str, mode: &str) -> Result<Manifest> {
    Ok(Manifest::new(
        command,
        mode,
        cfg.seed,
        cfg.to_ini(),
        serde_json::to_value(cfg)?,
    ))
}

pub fn read_ptag(path: &Path) -> Result<(TimeTagStream, FileDigest)> {
    let (digest, bytes) = FileDigest::of_path(path)?;
    let stream = ptag::decode(&bytes).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok((stream, digest))
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>, FileDigest)> {
    let (digest, bytes) = FileDigest::of_path(path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8 text", path.display()))?;
    let (x, y) = pipeline::read_xy_csv(&path.display().to_string(), &text)?;
    Ok((x, y, digest))
}

pub fn simulate(cfg: &RunConfig, mode: Mode, out: &Path) -> Result<Manifest> {
    let sim = pipeline::simulate(cfg, mode)?;
    sim.outputs.write(out, manifest(cfg, "simulate", mode.name())?)
}

pub fn cavity(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let files = pipeline::cavity_report(cfg)?;
    files.write(out, manifest(cfg, "cavity", "cavity")?)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let mode = cfg
        .analysis
        .mode
        .context("the config sets no [analysis] mode, so `run` does not know what to do")?;
    let files = pipeline::run(cfg, mode)?;
    files.write(out, manifest(cfg, "run", mode.name())?)
}

fn expect_inputs(m: Measurement, inputs: &[PathBuf], allowed: std::ops::RangeInclusive<usize>) -> Result<()> {
    if !allowed.contains(&inputs.len()) {
        let want = if allowed.start() == allowed.end() {
            allowed.start().to_string()
        } else {
            format!("{} or more", allowed.start())
        };
        bail!("{m} takes {want} --input file(s), got {}", inputs.len());
    }
    Ok(())
}

pub fn analyze(
    cfg: &RunConfig,
    measurement: Measurement,
    inputs: &[PathBuf],
    irf: Option<&Path>,
    out: &Path,
) -> Result<Manifest> {
    if irf.is_some() && measurement != Measurement::G2 {
        bail!("--irf only applies to g2");
    }
    let mut digests = Vec::new();
    let mut irf_digest = None;
    let files: Outputs = match measurement {
        Measurement::G2 => {
            expect_inputs(measurement, inputs, 1..=1)?;
            let (s, d) = read_ptag(&inputs[0])?;
            digests.push(d);
            let laser = irf.map(read_ptag).transpose()?;
            let mut all = digests.clone();
            if let Some((_, d)) = &laser {
                all.push(d.clone());
                irf_digest = Some(d.clone());
            }
            pipeline::analyze_g2(cfg, &s, laser.as_ref().map(|(l, _)| l), all)?
        }
        Measurement::Hom => {
            expect_inputs(measurement, inputs, 2..=2)?;
            let (hh, d1) = read_ptag(&inputs[0])?;
            let (hv, d2) = read_ptag(&inputs[1])?;
            digests = vec![d1, d2];
            pipeline::analyze_hom(cfg, &hh, &hv, digests.clone())?
        }
        Measurement::Lifetime if inputs.len() > 1 => {
            let detunings = cfg.cavity_or_default().detunings_mev;
            if detunings.len() != inputs.len() {
                bail!(
                    "{} decay files but {} detunings in [cavity] detunings_mev",
                    inputs.len(),
                    detunings.len()
                );
            }
            let mut streams = Vec::new();
            for p in inputs {
                let (s, d) = read_ptag(p)?;
                streams.push(s);
                digests.push(d);
            }
            let series: Vec<(f64, &TimeTagStream)> = detunings.iter().copied().zip(&streams).collect();
            pipeline::analyze_detuning(cfg, &series, digests.clone())?
        }
        Measurement::Lifetime => {
            expect_inputs(measurement, inputs, 1..=1)?;
            let (s, d) = read_ptag(&inputs[0])?;
            digests.push(d);
            pipeline::analyze_lifetime(cfg, &s, digests.clone())?
        }
        Measurement::Dop | Measurement::Linewidth => {
            expect_inputs(measurement, inputs, 1..=1)?;
            let (x, y, d) = read_table(&inputs[0])?;
            digests.push(d);
            if measurement == Measurement::Dop {
                pipeline::analyze_dop(&x, &y, digests.clone())?
            } else {
                pipeline::analyze_linewidth(&x, &y, digests.clone())?
            }
        }
        Measurement::Budget => {
            expect_inputs(measurement, inputs, 0..=0)?;
            pipeline::analyze_budget(cfg)?
        }
    };
    let mut m = manifest(cfg, "analyze", measurement.name())?;
    m.inputs = digests;
    m.irf = irf_digest;
    files.write(out, m)
}

/// Repeats the command recorded in a manifest and checks that every output
/// file comes out byte-identical.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<Manifest> {
    let recorded = Manifest::read(manifest_path)?;
    let cfg = RunConfig::parse(&recorded.config_text, Path::new("."))
        .context("configuration stored in the manifest")?;
    let produced = match recorded.command.as_str() {
        "simulate" => {
            let mode: Mode = recorded.mode.parse().map_err(anyhow::Error::msg)?;
            simulate(&cfg, mode, out)?
        }
        "run" => run(&cfg, out)?,
        "cavity" => cavity(&cfg, out)?,
        "analyze" => {
            let measurement: Measurement = recorded.mode.parse().map_err(anyhow::Error::msg)?;
            for d in recorded.inputs.iter().chain(&recorded.irf) {
                let (now, _) = FileDigest::of_path(Path::new(&d.file))?;
                if now.sha256 != d.sha256 {
                    bail!("input {} changed since the manifest was written", d.file);
                }
            }
            let signal: Vec<&FileDigest> = recorded
                .inputs
                .iter()
                .filter(|d| Some(*d) != recorded.irf.as_ref())
                .collect();
            let paths: Vec<PathBuf> = signal.iter().map(|d| PathBuf::from(&d.file)).collect();
            let irf = recorded.irf.as_ref().map(|d| PathBuf::from(&d.file));
            analyze(&cfg, measurement, &paths, irf.as_deref(), out)?
        }
        other => bail!("manifest names an unknown command `{other}`"),
    };
    recorded.compare_outputs(&produced)?;
    Ok(produced)
}
