//! The TOML run configuration. Every section is optional and every key has
//! a default; unknown keys are rejected.

use std::path::{Path, PathBuf};

use esfem::fem::SubstepPolicy;
use esfem::frap::FrapConfig;
use esfem::geometry::{icosphere, synth_sequence, MeshSequence, SynthKind};
use esfem::io::{load_sequence, MeshFormat};
use esfem::linalg::SolverOptions;
use esfem::pattern::RdsConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sequence: SequenceSection,
    pub diffusion: DiffusionSection,
    pub frap: FrapConfig,
    pub rds: RdsConfig,
    pub output: OutputSection,
    pub solver: SolverOptions,
}

/// Where the surfaces come from: a manifest on disk, or a synthetic
/// sequence when no manifest is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Keep only the first `frames` frames of a manifest sequence; for an
    /// evolving synthetic sequence, the number of frames generated. A
    /// static sphere is always a single frame.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    pub synth: SynthKind,
    pub subdivisions: u32,
    /// Seconds between synthetic frames.
    pub frame_interval: f64,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self {
            manifest: None,
            frames: None,
            synth: SynthKind::StaticSphere { radius: 1.0 },
            subdivisions: 3,
            frame_interval: 1.0,
        }
    }
}

const DEFAULT_SYNTH_FRAMES: usize = 11;

/// A loaded sequence and the micrometres-per-mesh-unit factor that goes
/// with it.
pub struct LoadedSequence {
    pub seq: MeshSequence,
    pub unit_scale: Option<f64>,
}

impl SequenceSection {
    pub fn load(&self) -> Result<LoadedSequence, CliError> {
        if let Some(path) = &self.manifest {
            let (seq, manifest) = load_sequence(path)?;
            let seq = match self.frames {
                Some(n) if n < seq.len() => {
                    if n == 0 {
                        return Err(CliError::Config("sequence.frames must be at least 1".into()));
                    }
                    MeshSequence::new(seq.frames()[..n].to_vec())?
                }
                _ => seq,
            };
            return Ok(LoadedSequence {
                seq,
                unit_scale: Some(manifest.unit_scale),
            });
        }
        if let SynthKind::StaticSphere { radius } = self.synth {
            let seq = MeshSequence::from_static(icosphere(self.subdivisions, radius))?;
            return Ok(LoadedSequence { seq, unit_scale: None });
        }
        let frames = self.frames.unwrap_or(DEFAULT_SYNTH_FRAMES);
        let seq = synth_sequence(self.synth, self.subdivisions, frames, self.frame_interval)?;
        Ok(LoadedSequence { seq, unit_scale: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant { value: f64 },
    /// The coordinate function `x_axis` of the first frame.
    Coordinate { axis: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    /// Diffusivity in mesh units² per second.
    pub diffusivity: f64,
    pub dt: f64,
    /// Defaults to the last frame time of the sequence, or one second on a
    /// static surface.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    pub initial: InitialCondition,
    pub policy: SubstepPolicy,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self {
            diffusivity: 0.05,
            dt: 0.04,
            t_end: None,
            initial: InitialCondition::Coordinate { axis: 0 },
            policy: SubstepPolicy::Interpolate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write a VTK frame every `vtk_every` steps of a diffusion run
    /// (0 disables them; the final step is always written otherwise).
    pub vtk_every: usize,
    /// Frame format used by `synth`.
    pub format: MeshFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("esfem-out"),
            vtk_every: 25,
            format: MeshFormat::Off,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serialises to TOML")
    }
}
