//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage, configuration and I/O errors,
//! 3 for numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    ambiguity_surface, centered_grid, monte_carlo, psnr_grid, AmbiguityKind,
};
use crate::fim_exact::{bcrlb, efim};
use crate::freqops::{Operators, SpectrumVector};
use crate::model::{ConfigFile, Scenario, CONFIG_SCHEMA};
use crate::optimizer::{alpha_grid, optimize, pareto_sweep, reference_design, DesignResult, OptimizerSettings};
use crate::report::{
    relative_names, write_ambiguity, write_design, write_json, write_mc, write_pareto, write_spectrum,
    RunManifest, Versions,
};
use crate::waveforms::lfm_default;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "subnyq", version, about = "Transmit/receive filter design for sub-Nyquist delay-Doppler estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct Tuning {
    /// Random restarts per α on top of the default start.
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
}

#[derive(Args, Debug, Clone)]
struct DesignSource {
    /// Use a design.json written by `optimize` or `pareto`.
    #[arg(long, conflicts_with_all = ["alpha", "reference"])]
    design: Option<PathBuf>,
    /// Optimize at this α instead of sweeping for α★.
    #[arg(long)]
    alpha: Option<f64>,
    /// Use the reference pair (phase code + low-pass).
    #[arg(long, conflicts_with = "alpha")]
    reference: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize the filter pair for one α.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// α sweep with information gains over the reference.
    Pareto {
        #[command(flatten)]
        common: Common,
        /// Number of α values in [0, 1].
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Monte-Carlo NMSE of the MAP estimator against the BCRLB.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: DesignSource,
        #[arg(long, default_value_t = 40.0)]
        psnr_min: f64,
        #[arg(long, default_value_t = 110.0)]
        psnr_max: f64,
        #[arg(long, default_value_t = 5.0)]
        psnr_step: f64,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Classic and MAP ambiguity surfaces.
    Ambiguity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: DesignSource,
        #[arg(long, value_enum, default_value_t = KindArg::Both)]
        kind: KindArg,
        /// Grid points per axis.
        #[arg(long, default_value_t = 61)]
        points: usize,
        /// Half-width of the grid in prior standard deviations.
        #[arg(long, default_value_t = 4.0)]
        span: f64,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Reference waveforms and their exact EFIM.
    Reference {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum KindArg {
    Classic,
    Map,
    Both,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Optimize { common, .. }
            | Command::Pareto { common, .. }
            | Command::Simulate { common, .. }
            | Command::Ambiguity { common, .. }
            | Command::Reference { common } => common,
        }
    }
}

impl Tuning {
    fn settings(&self, seed: u64) -> OptimizerSettings {
        OptimizerSettings {
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            restarts: self.restarts,
            seed,
            ..OptimizerSettings::default()
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() || matches!(e, Error::Io { .. }) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERIC
    }
}

/// Caps the global worker pool from `SUBNYQ_THREADS` (0 or unset = auto).
fn configure_threads() {
    let n = std::env::var("SUBNYQ_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if n > 0 {
        // Already initialized when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let _ = e.print();
            eprintln!("\nconfiguration schema:\n{CONFIG_SCHEMA}");
            return EXIT_CONFIG;
        }
    };
    configure_threads();
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli.command, command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                eprintln!("\nconfiguration schema:\n{CONFIG_SCHEMA}");
            }
            exit_code(&e)
        }
    }
}

fn execute(command: &Command, argv: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let common = command.common();
    let file = ConfigFile::load(&common.config)?;
    let scenario = file.scenario()?;
    let ops = Operators::new(&scenario.system);
    let out = &common.out;
    let files = match command {
        Command::Optimize { alpha, tuning, .. } => {
            let design = optimize(&scenario, &ops, *alpha, &tuning.settings(common.seed))?;
            info!("alpha={alpha} chi={:?} iterations={}", design.chi, design.iterations);
            write_design(out, &design, &scenario.system)?
        }
        Command::Pareto { points, tuning, .. } => {
            let sweep = pareto_sweep(&alpha_grid_or_empty(*points), &scenario, &ops, &tuning.settings(common.seed));
            write_pareto(out, &sweep, &scenario.system)?
        }
        Command::Simulate {
            source,
            psnr_min,
            psnr_max,
            psnr_step,
            trials,
            tuning,
            ..
        } => {
            let grid = psnr_grid(*psnr_min, *psnr_max, *psnr_step)?;
            let (g, h, mut files) = resolve_design(source, &scenario, &ops, tuning, common.seed, out)?;
            let report = monte_carlo(&g, &h, &scenario, &ops, &grid, *trials, common.seed)?;
            files.extend(write_mc(out, &report)?);
            files
        }
        Command::Ambiguity {
            source,
            kind,
            points,
            span,
            tuning,
            ..
        } => {
            if *points < 2 || !(*span > 0.0) {
                return Err(Error::Config("ambiguity grid needs at least 2 points and a positive span".into()));
            }
            let (g, h, mut files) = resolve_design(source, &scenario, &ops, tuning, common.seed, out)?;
            let taus = centered_grid(span * scenario.prior.sigma_tau, *points);
            let nus = centered_grid(span * scenario.prior.sigma_nu, *points);
            let kinds: &[AmbiguityKind] = match kind {
                KindArg::Classic => &[AmbiguityKind::Classic],
                KindArg::Map => &[AmbiguityKind::Map],
                KindArg::Both => &[AmbiguityKind::Classic, AmbiguityKind::Map],
            };
            let mut meta = Vec::new();
            for &k in kinds {
                let s = ambiguity_surface(k, &g, &h, &scenario, &ops, &taus, &nus)?;
                let name = match k {
                    AmbiguityKind::Classic => "classic.csv",
                    AmbiguityKind::Map => "map.csv",
                };
                files.push(write_ambiguity(&out.join(name), &s)?);
                meta.push(SurfaceMeta {
                    kind: k,
                    file: name.to_string(),
                    offset: s.offset,
                    scale: s.scale,
                });
            }
            files.push(write_json(&out.join("ambiguity.json"), &meta)?);
            files
        }
        Command::Reference { .. } => reference_outputs(&scenario, &ops, out)?,
    };
    let manifest = RunManifest {
        config: file,
        command: argv,
        seed: common.seed,
        versions: Versions::default(),
        outputs: relative_names(out, &files),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    manifest.write(out)?;
    Ok(())
}

fn alpha_grid_or_empty(points: usize) -> Vec<f64> {
    if points == 0 {
        Vec::new()
    } else {
        alpha_grid(points)
    }
}

#[derive(Serialize)]
struct SurfaceMeta {
    kind: AmbiguityKind,
    file: String,
    offset: f64,
    scale: f64,
}

/// Filter pair for `simulate`/`ambiguity`; an optimized design is also
/// written under `out/design`.
fn resolve_design(
    source: &DesignSource,
    scenario: &Scenario,
    ops: &Operators,
    tuning: &Tuning,
    seed: u64,
    out: &Path,
) -> Result<(SpectrumVector, SpectrumVector, Vec<PathBuf>)> {
    if source.reference {
        let (g, h) = reference_design(scenario)?;
        return Ok((g, h, Vec::new()));
    }
    let design = if let Some(path) = &source.design {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let d = DesignResult::from_json(&text)?;
        if d.g_opt.len() != ops.k() || d.h_opt.len() != ops.k() {
            return Err(Error::LengthMismatch {
                expected: ops.k(),
                got: d.g_opt.len(),
            });
        }
        return Ok((d.g_opt, d.h_opt, Vec::new()));
    } else if let Some(alpha) = source.alpha {
        optimize(scenario, ops, alpha, &tuning.settings(seed))?
    } else {
        let sweep = pareto_sweep(&alpha_grid(21), scenario, ops, &tuning.settings(seed));
        sweep
            .alpha_star()
            .cloned()
            .ok_or_else(|| Error::Config("no α produced a valid design".into()))?
    };
    info!("design alpha={} chi={:?}", design.alpha, design.chi);
    let files = write_design(&out.join("design"), &design, &scenario.system)?;
    Ok((design.g_opt, design.h_opt, files))
}

#[derive(Serialize)]
struct ReferenceSummary {
    name: &'static str,
    j11: f64,
    j12: f64,
    j22: f64,
    bcrlb_tau: f64,
    bcrlb_nu: f64,
}

fn reference_outputs(scenario: &Scenario, ops: &Operators, out: &Path) -> Result<Vec<PathBuf>> {
    let sys = &scenario.system;
    let (rpc, lowpass) = reference_design(scenario)?;
    let lfm = lfm_default(sys).generate(sys)?;
    let mut summary = Vec::new();
    for (name, g) in [("rpc", &rpc), ("lfm", &lfm)] {
        let j = efim(g, &lowpass, &scenario.prior, ops, scenario.ghq_nodes)?.j;
        let (_, bound) = bcrlb(&j, &scenario.prior);
        summary.push(ReferenceSummary {
            name,
            j11: j[(0, 0)],
            j12: j[(0, 1)],
            j22: j[(1, 1)],
            bcrlb_tau: bound[(0, 0)],
            bcrlb_nu: bound[(1, 1)],
        });
    }
    Ok(vec![
        write_spectrum(&out.join("rpc.csv"), &rpc, sys)?,
        write_spectrum(&out.join("lfm.csv"), &lfm, sys)?,
        write_spectrum(&out.join("lowpass.csv"), &lowpass, sys)?,
        write_json(&out.join("reference.json"), &summary)?,
    ])
}
