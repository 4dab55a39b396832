//! Engine configuration file (TOML).
//!
//! Every section is optional; omitted keys take the defaults shown by
//! `EngineConfig::default()`. Relative paths are resolved against the
//! directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compose::SlotGeometry;
use crate::detect::{CascadeModel, DetectParams};
use crate::runtime::thermal::ThermalModel;
use crate::snow::SnowParams;
use crate::track::TrackerParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Kiosk: no mirroring, control API on.
    #[default]
    Exhibition,
    /// Preview: mirrored like a front camera, control API off.
    Home,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exhibition => "exhibition",
            Mode::Home => "home",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhibition" => Ok(Mode::Exhibition),
            "home" => Ok(Mode::Home),
            other => Err(format!("unknown mode {other:?} (expected exhibition or home)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub capture_width: u32,
    pub capture_height: u32,
    pub capture_fps: u32,
    pub output_width: u32,
    pub output_height: u32,
    pub output_hz: u32,
    /// Scale applied to the capture frame before detection.
    pub detect_downscale: f64,
    /// Detection runs per second.
    pub detect_cadence: u32,
    /// Defaults by mode when unset.
    pub mirror: Option<bool>,
    pub mode: Mode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            capture_width: 1920,
            capture_height: 1080,
            capture_fps: 30,
            output_width: 1280,
            output_height: 800,
            output_hz: 60,
            detect_downscale: 0.25,
            detect_cadence: 10,
            mirror: None,
            mode: Mode::Exhibition,
        }
    }
}

impl PipelineConfig {
    pub fn mirror(&self) -> bool {
        self.mirror.unwrap_or(self.mode == Mode::Home)
    }

    /// Size of the image the detector sees.
    pub fn detect_size(&self) -> (u32, u32) {
        let s = |v: u32| ((f64::from(v) * self.detect_downscale).round() as u32).max(1);
        (s(self.capture_width), s(self.capture_height))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    /// Directory of numbered PNG frames; a plain night gradient when unset.
    pub dir: Option<PathBuf>,
    pub fps: u32,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self { dir: None, fps: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpriteParams {
    /// Fraction of the face size added on each side.
    pub padding: f64,
    /// Soft edge width as a fraction of the ellipse radius.
    pub feather: f64,
}

impl Default for SpriteParams {
    fn default() -> Self {
        Self {
            padding: 0.25,
            feather: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Face patches planted into the synthetic test card.
    pub faces_dir: Option<PathBuf>,
    pub face_count: usize,
    pub seed: u64,
    /// Whether a directory source starts over after its last frame.
    pub loop_dir: bool,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            faces_dir: None,
            face_count: 2,
            seed: 7,
            loop_dir: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Defaults by mode when unset.
    pub enabled: Option<bool>,
    pub bind: String,
    pub port: u16,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            enabled: None,
            bind: "127.0.0.1".into(),
            port: 8787,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub cascade: PathBuf,
    pub pipeline: PipelineConfig,
    pub background: BackgroundConfig,
    pub source: SourceConfig,
    pub detector: DetectParams,
    pub tracker: TrackerParams,
    pub sprite: SpriteParams,
    pub slots: SlotGeometry,
    /// `width`/`height` are overwritten with the output size.
    pub snow: SnowParams,
    pub thermal: ThermalModel,
    pub control: ControlConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            cascade: PathBuf::from("data/cascades/haarcascade_frontalface_default.xml"),
            pipeline: PipelineConfig::default(),
            background: BackgroundConfig::default(),
            source: SourceConfig::default(),
            detector: DetectParams::default(),
            tracker: TrackerParams::default(),
            sprite: SpriteParams::default(),
            slots: SlotGeometry::default(),
            snow: SnowParams::default(),
            thermal: ThermalModel::default(),
            control: ControlConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl EngineConfig {
    /// Parses TOML; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: EngineConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.normalize();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.cascade);
        if let Some(d) = &mut self.background.dir {
            resolve(base, d);
        }
        if let Some(d) = &mut self.source.faces_dir {
            resolve(base, d);
        }
    }

    /// Ties derived fields to their owners. Call again after edits.
    pub fn normalize(&mut self) {
        self.snow.width = self.pipeline.output_width;
        self.snow.height = self.pipeline.output_height;
    }

    pub fn control_enabled(&self) -> bool {
        self.control
            .enabled
            .unwrap_or(self.pipeline.mode == Mode::Exhibition)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.pipeline;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if p.capture_width == 0 || p.capture_height == 0 || p.output_width == 0 || p.output_height == 0 {
            return invalid("pipeline resolutions must be non-zero".into());
        }
        if p.capture_fps == 0 || p.output_hz == 0 {
            return invalid("pipeline.capture_fps and pipeline.output_hz must be positive".into());
        }
        if p.detect_cadence == 0 || p.detect_cadence > p.capture_fps {
            return invalid(format!(
                "pipeline.detect_cadence must lie in 1..={} (capture fps), got {}",
                p.capture_fps, p.detect_cadence
            ));
        }
        if !(p.detect_downscale > 0.0 && p.detect_downscale <= 1.0) {
            return invalid("pipeline.detect_downscale must lie in (0, 1]".into());
        }
        if self.background.fps == 0 {
            return invalid("background.fps must be positive".into());
        }
        if !(self.sprite.padding >= 0.0) || !(0.0..=1.0).contains(&self.sprite.feather) {
            return invalid("sprite.padding must be >= 0 and sprite.feather in [0, 1]".into());
        }
        if self.source.face_count > 8 {
            return invalid("source.face_count must be at most 8".into());
        }
        self.detector
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.tracker.validate().map_err(ConfigError::Invalid)?;
        self.slots
            .validate(p.output_width, p.output_height)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.snow.validate().map_err(ConfigError::Invalid)?;
        self.thermal.validate().map_err(ConfigError::Invalid)?;
        if self.snow.width != p.output_width || self.snow.height != p.output_height {
            return invalid("snow bounds must equal the output size".into());
        }
        Ok(())
    }

    /// Checks that the downscaled capture frame can hold a detection window.
    pub fn validate_for_model(&self, model: &CascadeModel) -> Result<(), ConfigError> {
        let (w, h) = self.pipeline.detect_size();
        if w < model.window_width() || h < model.window_height() {
            return Err(ConfigError::Invalid(format!(
                "downscaled capture {w}x{h} is smaller than the {}x{} detector window",
                model.window_width(),
                model.window_height()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = EngineConfig::from_toml_str("", Path::new("/base")).unwrap();
        let mut expected = EngineConfig::default();
        expected.resolve_paths(Path::new("/base"));
        assert_eq!(cfg, expected);
        cfg.validate().unwrap();
        assert_eq!(cfg.pipeline.detect_size(), (480, 270));
    }

    #[test]
    fn mode_defaults() {
        let mut cfg = EngineConfig::default();
        assert!(!cfg.pipeline.mirror());
        assert!(cfg.control_enabled());
        cfg.pipeline.mode = Mode::Home;
        assert!(cfg.pipeline.mirror());
        assert!(!cfg.control_enabled());
        cfg.pipeline.mirror = Some(false);
        assert!(!cfg.pipeline.mirror());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let cfg = EngineConfig::from_toml_str(
            "cascade = \"c.xml\"\n[background]\ndir = \"/abs/bg\"\n",
            Path::new("/etc/snow"),
        )
        .unwrap();
        assert_eq!(cfg.cascade, PathBuf::from("/etc/snow/c.xml"));
        assert_eq!(cfg.background.dir, Some(PathBuf::from("/abs/bg")));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_cadence() {
        assert!(matches!(
            EngineConfig::from_toml_str("[pipeline]\nfps = 3\n", Path::new(".")),
            Err(ConfigError::Parse(_))
        ));
        let cfg =
            EngineConfig::from_toml_str("[pipeline]\ndetect_cadence = 31\n", Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn snow_follows_output_size() {
        let cfg = EngineConfig::from_toml_str(
            "[pipeline]\noutput_width = 640\noutput_height = 400\n[slots]\nregions = []\n",
            Path::new("."),
        );
        // slot geometry is a plain array, not a table
        assert!(cfg.is_err());
        let cfg = EngineConfig::from_toml_str(
            "[pipeline]\noutput_width = 640\noutput_height = 400\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!((cfg.snow.width, cfg.snow.height), (640, 400));
    }

    #[test]
    fn hash_tracks_content() {
        let a = EngineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.snow.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
