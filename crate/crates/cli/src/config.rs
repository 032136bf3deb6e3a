//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 7
//! bands = "21band"
//! noise = 0.01
//!
//! [basis]
//! reflectance_rank = 6
//! spd_rank = 6
//!
//! [solver]
//! sigma1 = 0.125
//! max_iterations = 500
//!
//! [synthetic]
//! n_patches = 18
//! ```
//!
//! A `[files]` table replaces `[synthetic]` to run on measured data. Relative
//! paths are resolved against the directory holding the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use projspec::protocol::BandProtocol;
use projspec::solver::EstimationConfig;
use projspec::spectrum::WavelengthGrid;

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_bands")]
    pub bands: String,
    /// Capture noise as a fraction of the mean clean signal.
    #[serde(default)]
    pub noise: f64,
    /// Per-primary exponent applied by the simulated projector to its input gains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_distortion: Option<[f64; 3]>,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<FilesConfig>,
}

fn default_seed() -> u64 {
    1
}

fn default_bands() -> String {
    "21band".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    pub reflectance_rank: usize,
    pub spd_rank: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            reflectance_rank: 6,
            spd_rank: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub lambda_f: f64,
    /// Anchored illumination; absent means the band preset's default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_illumination: Option<usize>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub parallel: bool,
    pub line_search: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = EstimationConfig::default();
        Self {
            sigma1: d.sigma1,
            sigma2: d.sigma2,
            lambda_f: d.lambda_f,
            anchor_illumination: None,
            max_iterations: d.max_outer_iterations,
            tolerance: d.cost_tolerance,
            parallel: d.parallel,
            line_search: d.line_search,
        }
    }
}

impl SolverConfig {
    pub fn estimation(&self, protocol: BandProtocol) -> EstimationConfig {
        EstimationConfig {
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            lambda_f: self.lambda_f,
            anchor_illumination: Some(self.anchor_illumination.unwrap_or(protocol.anchor_illumination())),
            max_outer_iterations: self.max_iterations,
            cost_tolerance: self.tolerance,
            parallel: self.parallel,
            line_search: self.line_search,
            ..EstimationConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub grid_start_nm: f64,
    pub grid_step_nm: f64,
    pub grid_count: usize,
    pub n_patches: usize,
    pub n_reference_reflectances: usize,
    pub n_projectors: usize,
    pub projector: usize,
    pub camera_width_nm: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let g = WavelengthGrid::visible();
        let s = projspec::scene::SceneOptions::default();
        Self {
            grid_start_nm: g.start(),
            grid_step_nm: g.step(),
            grid_count: g.len(),
            n_patches: s.n_patches,
            n_reference_reflectances: s.n_reference_reflectances,
            n_projectors: s.n_projectors,
            projector: s.projector,
            camera_width_nm: s.camera_width_nm,
        }
    }
}

/// Measured or externally generated data, all on one wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesConfig {
    pub reflectance_database: PathBuf,
    pub spd_database_red: PathBuf,
    pub spd_database_green: PathBuf,
    pub spd_database_blue: PathBuf,
    /// Label left out of every SPD database before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude: Option<String>,
    /// Three columns: red, green, blue sensitivities.
    pub camera: PathBuf,
    pub truth_reflectances: PathBuf,
    /// Three columns: red, green, blue primary SPDs of the projector under test.
    pub true_primaries: PathBuf,
}

impl FilesConfig {
    pub fn paths(&self) -> [&Path; 7] {
        [
            &self.reflectance_database,
            &self.spd_database_red,
            &self.spd_database_green,
            &self.spd_database_blue,
            &self.camera,
            &self.truth_reflectances,
            &self.true_primaries,
        ]
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.reflectance_database,
            &mut self.spd_database_red,
            &mut self.spd_database_green,
            &mut self.spd_database_blue,
            &mut self.camera,
            &mut self.truth_reflectances,
            &mut self.true_primaries,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

impl PipelineConfig {
    pub fn protocol(&self) -> Result<BandProtocol> {
        self.bands.parse().map_err(|e: projspec::Error| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.protocol()?;
        if self.synthetic.is_some() && self.files.is_some() {
            return Err(CliError::Config("use either [synthetic] or [files], not both".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(CliError::Config(format!("noise {} must be finite and >= 0", self.noise)));
        }
        if self.basis.reflectance_rank == 0 || self.basis.spd_rank == 0 {
            return Err(CliError::Config("basis ranks must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(files) = &mut config.files {
            files.resolve(base);
        }
        config.validate()?;
        Ok(config)
    }

    /// Loads a TOML configuration, or the configuration recorded in a run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        if path.extension().is_some_and(|e| e == "json") {
            let manifest = RunManifest::read(path)?;
            let mut config: PipelineConfig = serde_json::from_value(manifest.parameters)?;
            let base = path.parent().unwrap_or(Path::new("."));
            if let Some(files) = &mut config.files {
                files.resolve(base);
            }
            config.validate()?;
            return Ok(config);
        }
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
            _ => CliError::io(format!("reading {}", path.display()), e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let base = std::fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
        Self::from_toml(&text, &base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_solver() {
        let c = PipelineConfig::from_toml("", Path::new("/")).unwrap();
        let e = c.solver.estimation(BandProtocol::TwentyOne);
        assert_eq!(e.sigma1, 0.125);
        assert_eq!(e.sigma2, 0.005);
        assert_eq!(e.lambda_f, 550.0);
        assert_eq!(e.anchor_illumination, Some(6));
        assert_eq!(c.solver.estimation(BandProtocol::Nine).anchor_illumination, Some(1));
    }

    #[test]
    fn unknown_keys_and_bad_bands_are_rejected() {
        assert!(PipelineConfig::from_toml("sead = 3", Path::new("/")).is_err());
        assert!(PipelineConfig::from_toml("bands = \"5band\"", Path::new("/")).is_err());
        assert!(PipelineConfig::from_toml("[synthetic]\n[files]\nreflectance_database='a'", Path::new("/")).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let text = r#"
            [files]
            reflectance_database = "r.csv"
            spd_database_red = "red.csv"
            spd_database_green = "/abs/green.csv"
            spd_database_blue = "blue.csv"
            camera = "cam.csv"
            truth_reflectances = "truth.csv"
            true_primaries = "prim.csv"
        "#;
        let c = PipelineConfig::from_toml(text, Path::new("/data")).unwrap();
        let f = c.files.unwrap();
        assert_eq!(f.reflectance_database, Path::new("/data/r.csv"));
        assert_eq!(f.spd_database_green, Path::new("/abs/green.csv"));
    }

    #[test]
    fn round_trips_through_json() {
        let c = PipelineConfig::from_toml("seed = 4\n[synthetic]\nn_patches = 5", Path::new("/")).unwrap();
        let v = serde_json::to_value(&c).unwrap();
        let back: PipelineConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, c);
    }
}
