//! CSV/JSON artifacts and the run manifest.
//!
//! Floats are written with 17 significant digits so values round-trip
//! exactly; lines end in `\n`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AmbiguitySurface, McReport};
use crate::freqops::SpectrumVector;
use crate::model::{ConfigFile, SystemConfig};
use crate::optimizer::{DesignResult, ParetoSweep};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes a header and rows of pre-formatted cells.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = Vec::new();
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    fs::write(path, out).map_err(io)?;
    Ok(path.to_path_buf())
}

/// `harmonic, freq_hz, re, im` per transmit harmonic.
pub fn write_spectrum(path: &Path, x: &SpectrumVector, config: &SystemConfig) -> Result<PathBuf> {
    let rows = x.iter().enumerate().map(|(p, c)| {
        let m = config.harmonic(p);
        vec![
            m.to_string(),
            fmt_f64(m as f64 * config.f0()),
            fmt_f64(c.re),
            fmt_f64(c.im),
        ]
    });
    write_csv(path, &["harmonic", "freq_hz", "re", "im"], rows)
}

/// `design.json`, `g.csv`, `h.csv` and `trace.csv` under `dir`.
pub fn write_design(dir: &Path, design: &DesignResult, config: &SystemConfig) -> Result<Vec<PathBuf>> {
    let trace = design
        .objective_trace
        .iter()
        .enumerate()
        .map(|(i, &v)| vec![i.to_string(), fmt_f64(v)]);
    Ok(vec![
        write_text(&dir.join("design.json"), &(design.to_json() + "\n"))?,
        write_spectrum(&dir.join("g.csv"), &design.g_opt, config)?,
        write_spectrum(&dir.join("h.csv"), &design.h_opt, config)?,
        write_csv(&dir.join("trace.csv"), &["step", "objective"], trace)?,
    ])
}

/// `pareto.csv` (one row per α) and the max-sum design under
/// `dir/alpha_star`; nothing is written for an empty sweep.
pub fn write_pareto(dir: &Path, sweep: &ParetoSweep, config: &SystemConfig) -> Result<Vec<PathBuf>> {
    if sweep.results.is_empty() {
        return Ok(Vec::new());
    }
    let rows = sweep.results.iter().map(|(alpha, r)| match r {
        Ok(d) => {
            let (ct, cn) = d.chi.unwrap_or((f64::NAN, f64::NAN));
            vec![
                fmt_f64(*alpha),
                fmt_f64(ct),
                fmt_f64(cn),
                fmt_f64(d.objective()),
                d.iterations.to_string(),
                d.converged.to_string(),
                "ok".to_string(),
            ]
        }
        Err(e) => vec![
            fmt_f64(*alpha),
            fmt_f64(f64::NAN),
            fmt_f64(f64::NAN),
            fmt_f64(f64::NAN),
            "0".into(),
            "false".into(),
            format!("\"{}\"", e.to_string().replace('"', "'")),
        ],
    });
    let mut files = vec![write_csv(
        &dir.join("pareto.csv"),
        &["alpha", "chi_tau_db", "chi_nu_db", "objective", "iterations", "converged", "status"],
        rows,
    )?];
    if let Some(best) = sweep.alpha_star() {
        files.extend(write_design(&dir.join("alpha_star"), best, config)?);
    }
    Ok(files)
}

/// `report.csv` with the six declared columns, plus the full report as JSON.
pub fn write_mc(dir: &Path, report: &McReport) -> Result<Vec<PathBuf>> {
    let rows = (0..report.psnr_grid.len()).map(|i| {
        vec![
            fmt_f64(report.psnr_grid[i]),
            fmt_f64(report.nmse_tau[i]),
            fmt_f64(report.nmse_nu[i]),
            fmt_f64(report.bcrlb_tau[i]),
            fmt_f64(report.bcrlb_nu[i]),
            report.failures[i].to_string(),
        ]
    });
    let csv = write_csv(
        &dir.join("report.csv"),
        &["psnr_dbhz", "nmse_tau", "nmse_nu", "bcrlb_tau_norm", "bcrlb_nu_norm", "failures"],
        rows,
    )?;
    let json = serde_json::to_string_pretty(report).expect("plain numbers serialize");
    Ok(vec![csv, write_text(&dir.join("report.json"), &(json + "\n"))?])
}

/// Gridded `tau_s, nu_hz, value`.
pub fn write_ambiguity(path: &Path, surface: &AmbiguitySurface) -> Result<PathBuf> {
    let rows = surface
        .rows()
        .map(|(t, n, v)| vec![fmt_f64(t), fmt_f64(n), fmt_f64(v)]);
    write_csv(path, &["tau_s", "nu_hz", "value"], rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    write_text(path, &(text + "\n"))
}

/// What was run and what it produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ConfigFile,
    pub command: Vec<String>,
    pub seed: u64,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub subnyq: String,
    pub manifest_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            subnyq: env!("CARGO_PKG_VERSION").to_string(),
            manifest_format: 1,
        }
    }
}

impl RunManifest {
    /// Writes `manifest.json` into `dir`; outputs are stored relative to it.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        write_json(&dir.join("manifest.json"), self)
    }
}

pub fn relative_names(dir: &Path, files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .map(|f| {
            f.strip_prefix(dir)
                .unwrap_or(f)
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect()
}
