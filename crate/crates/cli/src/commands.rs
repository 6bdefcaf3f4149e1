//! One function per subcommand. Each takes the fully resolved
//! configuration and writes its outputs below `cfg.output.dir`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use esfem::fem::{run_diffusion, DiffusionOptions, NodalField};
use esfem::frap::{recovery_fit, run_frap, FrapResult, RecoveryFit};
use esfem::geometry::{validate_mesh, MeshSequence};
use esfem::io::{read_recovery_csv, write_json, write_recovery_csv, write_sequence, write_vtk_frame};
use esfem::pattern::{run_rds, FieldStats};
use serde::Serialize;
use serde_json::json;

use crate::config::{InitialCondition, RunConfig};
use crate::error::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Creates the output directory and writes `resolved_config.toml` into it.
pub fn echo_config(cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join("resolved_config.toml");
    fs::write(&path, cfg.to_toml()).map_err(|e| CliError::Io { path, source: e })
}

fn stdout_line(out: &mut impl Write, line: String) {
    // A closed stdout (for example `esfem info | head`) is not an error.
    let _ = writeln!(out, "{line}");
}

pub fn info(seq: &MeshSequence, out: &mut impl Write) -> Result<(), CliError> {
    stdout_line(out, format!("frames {}", seq.len()));
    stdout_line(out, "frame time V F chi h area".to_string());
    for (i, frame) in seq.frames().iter().enumerate() {
        let report = validate_mesh(frame);
        stdout_line(
            out,
            format!(
                "{i} {} {} {} {} {:.6e} {:.6e}",
                frame.frame_time(),
                frame.vertex_count(),
                frame.triangle_count(),
                report.euler_characteristic,
                frame.max_element_diameter(),
                frame.total_area()
            ),
        );
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, seq: &MeshSequence, out: &mut impl Write) -> Result<(), CliError> {
    let manifest = write_sequence(&cfg.output.dir, seq, cfg.output.format, 1.0)?;
    stdout_line(out, format!("wrote {} frames, manifest {}", seq.len(), manifest.display()));
    Ok(())
}

#[derive(Serialize)]
struct DiffusionSummary<'a> {
    diffusivity: f64,
    dt: f64,
    t_end: f64,
    steps: usize,
    max_relative_mass_drift: f64,
    vtk_files: Vec<PathBuf>,
    records: &'a [esfem::fem::StepRecord],
}

pub fn diffuse(cfg: &RunConfig, seq: &MeshSequence, out: &mut impl Write) -> Result<(), CliError> {
    let d = &cfg.diffusion;
    let first = seq.first();
    let values: Vec<f64> = match d.initial {
        InitialCondition::Constant { value } => vec![value; first.vertex_count()],
        InitialCondition::Coordinate { axis } if axis < 3 => first.vertices().iter().map(|p| p[axis]).collect(),
        InitialCondition::Coordinate { axis } => {
            return Err(CliError::Config(format!("coordinate axis must be 0, 1 or 2, got {axis}")))
        }
    };
    let u0 = NodalField::new(values, seq.start_time());
    let t_end = d.t_end.unwrap_or_else(|| {
        let end = seq.end_time();
        if end.is_finite() {
            end
        } else {
            seq.start_time() + 1.0
        }
    });
    let opts = DiffusionOptions {
        solver: cfg.solver,
        policy: d.policy,
        record_every: cfg.output.vtk_every.max(1),
    };
    let run = run_diffusion(seq, &u0, d.diffusivity, d.dt, t_end, &opts)?;

    let mut vtk_files = Vec::new();
    if cfg.output.vtk_every > 0 {
        for (k, field) in run.trajectory.iter().enumerate() {
            let name = PathBuf::from(format!("diffuse_{k:04}.vtk"));
            let mesh = seq.at(field.time())?;
            write_vtk_frame(
                &cfg.output.dir.join(&name),
                &mesh,
                &format!("diffusion t = {}", field.time()),
                &[("u", field.values())],
            )?;
            vtk_files.push(name);
        }
    }
    let summary = DiffusionSummary {
        diffusivity: d.diffusivity,
        dt: d.dt,
        t_end,
        steps: run.records.len() - 1,
        max_relative_mass_drift: run.max_relative_mass_drift(),
        vtk_files,
        records: &run.records,
    };
    write_json(&cfg.output.dir.join("diffusion.json"), &summary)?;
    let u = run.final_field();
    stdout_line(
        out,
        format!(
            "steps {} t_end {t_end} min {:.6} max {:.6} max_relative_mass_drift {:.3e}",
            summary.steps,
            u.min(),
            u.max(),
            summary.max_relative_mass_drift
        ),
    );
    Ok(())
}

fn print_fit(out: &mut impl Write, fit: &RecoveryFit) {
    stdout_line(out, format!("A {:.6} +- {:.2e}", fit.a, fit.std_a));
    stdout_line(out, format!("B {:.6} +- {:.2e}", fit.b, fit.std_b));
    stdout_line(out, format!("T_half {:.6}", fit.t_half));
    if fit.degenerate {
        stdout_line(out, "fit degenerate: parameters are not identifiable from this series".into());
    }
}

pub fn frap(cfg: &RunConfig, seq: &MeshSequence, out: &mut impl Write) -> Result<(), CliError> {
    let result: FrapResult = run_frap(seq, &cfg.frap, &cfg.solver)?;
    write_recovery_csv(&cfg.output.dir.join("recovery.csv"), &result.samples)?;
    let record = json!({
        "config": cfg.frap,
        "roi": result.roi,
        "roi_element_count": result.roi_element_count,
        "roi_fallback": result.roi_fallback,
        "bleached_area_fraction": result.bleached_area_fraction,
        "bleached_mass_fraction": result.bleached_mass_fraction,
        "max_mass_drift": result.max_mass_drift,
        "fit": result.fit,
        "fit_error": result.fit_error,
    });
    write_json(&cfg.output.dir.join("frap.json"), &record)?;
    stdout_line(
        out,
        format!(
            "samples {} bleached_area_fraction {:.4} roi_elements {}{}",
            result.samples.len(),
            result.bleached_area_fraction,
            result.roi_element_count,
            if result.roi_fallback { " (nearest-element fallback)" } else { "" }
        ),
    );
    match (&result.fit, &result.fit_error) {
        (Some(fit), _) => print_fit(out, fit),
        (None, Some(e)) => stdout_line(out, format!("fit failed: {e}")),
        (None, None) => {}
    }
    Ok(())
}

#[derive(Serialize)]
struct SnapshotEntry {
    step: usize,
    time: f64,
    file: PathBuf,
    u: FieldStats,
    w: FieldStats,
}

pub fn rds(cfg: &RunConfig, seq: &MeshSequence, out: &mut impl Write) -> Result<(), CliError> {
    let run = run_rds(seq, &cfg.rds, &cfg.solver)?;
    let mut entries = Vec::with_capacity(run.snapshots.len());
    for (k, s) in run.snapshots.iter().enumerate() {
        let file = PathBuf::from(format!("rds_{k:04}.vtk"));
        write_vtk_frame(
            &cfg.output.dir.join(&file),
            &s.mesh,
            &format!("reaction-diffusion t = {}", s.time),
            &[("u", s.u.values()), ("w", s.w.values())],
        )?;
        stdout_line(
            out,
            format!("t {:.4} u mean {:.6} std {:.6} min {:.6} max {:.6}", s.time, s.u_stats.mean, s.u_stats.std, s.u_stats.min, s.u_stats.max),
        );
        entries.push(SnapshotEntry {
            step: s.step,
            time: s.time,
            file,
            u: s.u_stats,
            w: s.w_stats,
        });
    }
    let record = json!({
        "config": cfg.rds,
        "seed": cfg.rds.seed,
        "steps": run.steps,
        "max_iterations": run.max_iterations,
        "min_value": run.min_value,
        "snapshots": entries,
    });
    write_json(&cfg.output.dir.join("rds.json"), &record)?;
    if run.min_value <= 0.0 {
        log::warn!("fields reached non-positive values (minimum {})", run.min_value);
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig, csv: &Path, window: f64, out: &mut impl Write) -> Result<(), CliError> {
    let samples = read_recovery_csv(csv)?;
    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let values: Vec<f64> = samples.iter().map(|s| s.mean_concentration).collect();
    let fit = recovery_fit(&times, &values, window)?;
    print_fit(out, &fit);
    write_json(
        &cfg.output.dir.join("fit.json"),
        &json!({ "input": csv, "window": window, "fit": fit }),
    )?;
    Ok(())
}
