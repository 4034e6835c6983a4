//! Run configuration: a single TOML document, every field defaulted.

use std::path::{Path, PathBuf};

use hartree::evolution::{Controls, Direction};
use hartree::lab::{ConstantsTolerances, SeriesSettings, SpectrumSettings};
use hartree::linearized::SpectralOptions;
use hartree::{GridSpec, ModelParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub constants: ConstantsTolerances,
    pub spectral: SpectrumSettings,
    pub series: SeriesConfig,
    pub evolution: EvolutionConfig,
    pub convergence: ConvergenceConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub n: usize,
    pub lambda: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig { n: 6, lambda: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Number of radial unknowns.
    pub m: usize,
    /// Outer radius; 0 picks the preset for N.
    pub r_max: f64,
    /// Element layout: "sinh" or "geometric".
    pub map_kind: String,
    /// Polynomial degree per element; 0 picks the default.
    pub degree: usize,
    /// Layout length scale.
    pub scale: f64,
    /// Riesz kernel assembly: "spectral", "resolvent" or "nystrom".
    pub kernel: String,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { m: 512, r_max: 0.0, map_kind: "sinh".into(), degree: 0, scale: 8.0, kernel: "spectral".into() }
    }
}

impl GridConfig {
    pub fn spec(&self, n: usize) -> GridSpec {
        let preset = GridSpec::preset(n);
        GridSpec {
            dim: n,
            m: self.m,
            r_max: if self.r_max > 0.0 { self.r_max } else { preset.r_max },
            layout: self.map_kind.clone(),
            degree: self.degree,
            scale: self.scale,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesConfig {
    #[serde(flatten)]
    pub settings: SeriesSettings,
    /// Largest accepted relative deviation of a residual slope from -(j+1)e₀.
    pub slope_tolerance: f64,
    /// Largest accepted |E - E(W)|/E(W) of the special data.
    pub energy_tolerance: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { settings: SeriesSettings::default(), slope_tolerance: 0.05, energy_tolerance: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    #[serde(flatten)]
    pub controls: Controls,
    pub direction: Direction,
    /// "special" (from build-special in the output directory), "groundstate", or a field file.
    pub initial: String,
    /// Start time for initial data other than "special".
    pub t0: f64,
    /// Expected verdict; a mismatch is a tolerance failure. Empty accepts any.
    pub expect: String,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            controls: Controls::default(),
            direction: Direction::Forward,
            initial: "special".into(),
            t0: 0.0,
            expect: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    /// Grid sizes of the refinement ladder.
    pub ms: Vec<usize>,
    /// Largest accepted relative change of e₀ between the two finest grids.
    pub e0_tolerance: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig { ms: vec![128, 256, 512], e0_tolerance: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plots: bool,
    /// Keep assembled kernels in `<dir>/kernels`.
    pub kernel_cache: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("hartree-out"), plots: false, kernel_cache: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model()?;
        let s = &self.series.settings;
        if s.a != 1.0 && s.a != -1.0 {
            return Err(CliError::Config(format!("series.a must be 1 or -1, got {}", s.a)));
        }
        if !(s.decay > 0.0 && s.decay <= 0.05) {
            return Err(CliError::Config(format!("series.decay must lie in (0, 0.05], got {}", s.decay)));
        }
        let c = &self.evolution.controls;
        if !(c.dt_min > 0.0 && c.dt_min <= c.dt_max && c.duration > 0.0) {
            return Err(CliError::Config("evolution needs 0 < dt_min <= dt_max and duration > 0".into()));
        }
        if !self.evolution.expect.is_empty() {
            self.expected_verdict()?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.params.n, self.params.lambda)?)
    }

    pub fn grid_spec(&self) -> GridSpec {
        self.grid.spec(self.params.n)
    }

    pub fn spectral_options(&self) -> &SpectralOptions {
        &self.spectral.options
    }

    pub fn expected_verdict(&self) -> Result<Option<hartree::evolution::Verdict>, CliError> {
        if self.evolution.expect.is_empty() {
            return Ok(None);
        }
        serde_json::from_value(serde_json::Value::String(self.evolution.expect.clone()))
            .map(Some)
            .map_err(|_| {
                CliError::Config(format!(
                    "evolution.expect = {:?} is not one of scatter, converge_to_w, blowup_proxy, undecided",
                    self.evolution.expect
                ))
            })
    }
}
