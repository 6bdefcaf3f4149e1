//! `esfem`: command-line driver for the evolving-surface experiments.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for invalid input or
//! file problems, 4 for numerical failures. Failures print one line
//! `esfem-error: <category>: <message>` to stderr.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use esfem::geometry::SynthKind;
use esfem::io::MeshFormat;

use crate::config::RunConfig;
use crate::error::CliError;

/// Environment variable holding the default worker thread count.
const THREADS_ENV: &str = "ESFEM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "esfem", version, about = "Finite element experiments on evolving triangulated surfaces")]
struct Cli {
    /// TOML run configuration with [sequence], [diffusion], [frap], [rds],
    /// [output] and [solver] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs (overrides output.dir).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Sequence manifest (overrides sequence.manifest).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Random seed of the pattern run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time step of the selected run.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Number of frames: generated by `synth`, kept from a manifest otherwise.
    #[arg(long, global = true)]
    frames: Option<usize>,
    /// Worker threads for assembly (default: $ESFEM_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthChoice {
    StaticSphere,
    ExpandingSphere,
    OscillatingEllipsoid,
}

impl SynthChoice {
    fn kind(self) -> SynthKind {
        match self {
            SynthChoice::StaticSphere => SynthKind::StaticSphere { radius: 1.0 },
            SynthChoice::ExpandingSphere => SynthKind::ExpandingSphere {
                initial_radius: 1.0,
                rate: 0.1,
            },
            SynthChoice::OscillatingEllipsoid => SynthKind::OscillatingEllipsoid {
                amplitude: 0.25,
                period: 4.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatChoice {
    Off,
    Binary,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-frame statistics: vertices, triangles, Euler characteristic,
    /// largest element diameter and area.
    Info,
    /// Write a synthetic frame sequence and its manifest.
    Synth {
        #[arg(long, value_enum)]
        kind: Option<SynthChoice>,
        #[arg(long)]
        subdivisions: Option<u32>,
        #[arg(long)]
        frame_interval: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<FormatChoice>,
    },
    /// Scalar advection-diffusion run.
    Diffuse {
        #[arg(long)]
        diffusivity: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Photobleaching recovery simulation and fit.
    Frap {
        /// Diffusivity in square micrometres per second.
        #[arg(long)]
        diffusivity: Option<f64>,
        #[arg(long)]
        start_frame: Option<usize>,
        /// ROI ball centre as x,y,z in mesh units.
        #[arg(long, value_delimiter = ',')]
        roi_center: Option<Vec<f64>>,
        #[arg(long)]
        roi_radius: Option<f64>,
        #[arg(long)]
        fit_window: Option<f64>,
        /// Micrometres per mesh unit (overrides the manifest).
        #[arg(long)]
        unit_scale: Option<f64>,
    },
    /// Activator / substrate pattern formation run.
    Rds {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        snapshot_every: Option<f64>,
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Fit A (1 - exp(-t/B)) to an existing recovery CSV.
    Fit {
        csv: PathBuf,
        /// Only samples with t <= window are used.
        #[arg(long, default_value_t = 12.0)]
        window: f64,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output.dir = dir.clone();
    }
    if let Some(m) = &cli.manifest {
        cfg.sequence.manifest = Some(m.clone());
    }
    if let Some(n) = cli.frames {
        cfg.sequence.frames = Some(n);
    }
    if let Some(seed) = cli.seed {
        cfg.rds.seed = seed;
    }
    match &cli.command {
        Command::Info | Command::Fit { .. } => {}
        Command::Synth {
            kind,
            subdivisions,
            frame_interval,
            format,
        } => {
            if let Some(k) = kind {
                cfg.sequence.synth = k.kind();
            }
            if let Some(s) = subdivisions {
                cfg.sequence.subdivisions = *s;
            }
            if let Some(i) = frame_interval {
                cfg.sequence.frame_interval = *i;
            }
            if let Some(f) = format {
                cfg.output.format = match f {
                    FormatChoice::Off => MeshFormat::Off,
                    FormatChoice::Binary => MeshFormat::Binary,
                };
            }
        }
        Command::Diffuse { diffusivity, t_end } => {
            if let Some(d) = diffusivity {
                cfg.diffusion.diffusivity = *d;
            }
            if t_end.is_some() {
                cfg.diffusion.t_end = *t_end;
            }
            if let Some(dt) = cli.dt {
                cfg.diffusion.dt = dt;
            }
        }
        Command::Frap {
            diffusivity,
            start_frame,
            roi_center,
            roi_radius,
            fit_window,
            unit_scale,
        } => {
            let f = &mut cfg.frap;
            if let Some(d) = diffusivity {
                f.diffusivity = *d;
            }
            if let Some(s) = start_frame {
                f.start_frame = *s;
            }
            if let Some(c) = roi_center {
                let [x, y, z] = c[..] else {
                    return Err(CliError::Config(format!("--roi-center needs x,y,z, got {} values", c.len())));
                };
                f.roi_center = Some([x, y, z]);
            }
            if roi_radius.is_some() {
                f.roi_radius = *roi_radius;
            }
            if let Some(w) = fit_window {
                f.fit_window = *w;
            }
            if let Some(u) = unit_scale {
                f.unit_scale = *u;
            }
            if let Some(dt) = cli.dt {
                f.dt = dt;
            }
        }
        Command::Rds {
            t_end,
            snapshot_every,
            amplitude,
        } => {
            let r = &mut cfg.rds;
            if let Some(t) = t_end {
                r.t_end = *t;
            }
            if let Some(s) = snapshot_every {
                r.snapshot_every = *s;
            }
            if let Some(a) = amplitude {
                r.amplitude = *a;
            }
            if let Some(dt) = cli.dt {
                r.dt = dt;
            }
        }
    }
    Ok(cfg)
}

fn configure_threads(cli: &Cli) -> Result<(), CliError> {
    let threads = match cli.threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a thread count, got {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads(cli)?;
    let mut cfg = resolve(cli)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();

    if let Command::Fit { csv, window } = &cli.command {
        commands::echo_config(&cfg)?;
        return commands::fit(&cfg, csv, *window, &mut out);
    }

    let loaded = cfg.sequence.load()?;
    if let Command::Info = cli.command {
        return commands::info(&loaded.seq, &mut out);
    }
    let frap_scale_flag = matches!(cli.command, Command::Frap { unit_scale: Some(_), .. });
    if let (Some(scale), false) = (loaded.unit_scale, frap_scale_flag) {
        cfg.frap.unit_scale = scale;
    }
    commands::echo_config(&cfg)?;
    match &cli.command {
        Command::Synth { .. } => commands::synth(&cfg, &loaded.seq, &mut out),
        Command::Diffuse { .. } => commands::diffuse(&cfg, &loaded.seq, &mut out),
        Command::Frap { .. } => commands::frap(&cfg, &loaded.seq, &mut out),
        Command::Rds { .. } => commands::rds(&cfg, &loaded.seq, &mut out),
        Command::Info | Command::Fit { .. } => unreachable!("handled above"),
    }?;
    let _ = out.flush();
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("ESFEM_LOG")
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("esfem-error: {}: {e}", e.category().as_str());
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
