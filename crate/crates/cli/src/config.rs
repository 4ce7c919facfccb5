//! Run configuration: a plain-text sectioned `key = value` file.
//!
//! Sections and keys (with defaults):
//!
//! ```text
//! [source]                  # double-Gaussian state at its waist
//! sigma_plus_um   = 140.2   # sum-coordinate width (um)
//! sigma_minus_um  = 12.6    # difference-coordinate width (um)
//! lambda_nm       = 810     # wavelength (nm)
//!
//! [lens]                    # single-lens fold between source and camera
//! u_mm = 60                 # source-to-lens distance (mm)
//! f_mm = 40                 # focal length (mm)
//!
//! [camera]                  # binary photon-counting camera
//! width          = 64       # pixels per row
//! height         = 64       # pixel rows
//! pitch_um       = 16       # pixel size (um)
//! eta            = 0.6      # detection efficiency, (0, 1]
//! mu             = 8        # mean photon pairs per frame
//! bloom_prob     = 0        # chance a lit pixel spills into a neighbour
//! bloom_sigma_px = 1.9      # spill-offset spread (pixels)
//! bg_rate        = 2        # mean background counts per frame
//! seed           = 20260819 # RNG seed (frame k uses seed ^ k)
//!
//! [slit]                    # double-slit arm
//! d_um  = 400               # centre-to-centre slit separation (um)
//! a_um  = 150               # slit opening (um)
//! f3_mm = 125               # Fourier lens focal length (mm)
//! mag   = -2                # imaging magnification onto the slit plane
//!
//! [run]
//! frames  = 100000          # frames to render / reconstruct
//! roi     = 0               # centred square analysis region (0 = full frame)
//! out_dir = out             # output directory
//! ```
//!
//! `#` starts a full-line comment. Unknown sections or keys are hard errors
//! (they are almost always typos), as are duplicate keys.

use std::fmt::Write as _;
use std::path::Path;

use biphoton::camera::CameraModel;
use biphoton::dg::DGSource;
use biphoton::optics::SlitSpec;

use crate::errors::{CliError, CliResult};

/// Double-Gaussian source parameters (`[source]`).
#[derive(Debug, Clone)]
pub struct SourceConfig {
    /// Sum-coordinate width at the waist (um).
    pub sigma_plus_um: f64,
    /// Difference-coordinate width at the waist (um).
    pub sigma_minus_um: f64,
    /// Wavelength (nm).
    pub lambda_nm: f64,
}

/// Lens-fold parameters (`[lens]`).
#[derive(Debug, Clone)]
pub struct LensConfig {
    /// Source-to-lens distance (mm).
    pub u_mm: f64,
    /// Focal length (mm).
    pub f_mm: f64,
}

/// Camera parameters (`[camera]`).
#[derive(Debug, Clone)]
pub struct CameraConfig {
    /// Pixels per row.
    pub width: usize,
    /// Pixel rows.
    pub height: usize,
    /// Pixel size (um).
    pub pitch_um: f64,
    /// Detection efficiency, in (0, 1].
    pub eta: f64,
    /// Mean photon pairs per frame.
    pub mu: f64,
    /// Probability a lit pixel spills into one neighbour, in [0, 1).
    pub bloom_prob: f64,
    /// Spill-offset spread (pixels).
    pub bloom_sigma_px: f64,
    /// Mean background counts per frame.
    pub bg_rate: f64,
    /// Base RNG seed.
    pub seed: u64,
}

/// Double-slit parameters (`[slit]`).
#[derive(Debug, Clone)]
pub struct SlitConfig {
    /// Centre-to-centre separation (um).
    pub d_um: f64,
    /// Slit opening (um).
    pub a_um: f64,
    /// Fourier lens focal length (mm).
    pub f3_mm: f64,
    /// Magnification of the imaging stage that relays the state onto the
    /// slit plane (negative for an inverting telescope).
    pub mag: f64,
}

/// Run-level parameters (`[run]`).
#[derive(Debug, Clone)]
pub struct RunSection {
    /// Frames to render or reconstruct.
    pub frames: usize,
    /// Centred square analysis region in pixels; 0 means the full frame.
    pub roi: usize,
    /// Output directory.
    pub out_dir: String,
}

/// Full resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// `[source]` section.
    pub source: SourceConfig,
    /// `[lens]` section.
    pub lens: LensConfig,
    /// `[camera]` section.
    pub camera: CameraConfig,
    /// `[slit]` section.
    pub slit: SlitConfig,
    /// `[run]` section.
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            source: SourceConfig {
                sigma_plus_um: 140.2,
                sigma_minus_um: 12.6,
                lambda_nm: 810.0,
            },
            lens: LensConfig { u_mm: 60.0, f_mm: 40.0 },
            camera: CameraConfig {
                width: 64,
                height: 64,
                pitch_um: 16.0,
                eta: 0.6,
                mu: 8.0,
                bloom_prob: 0.0,
                bloom_sigma_px: 1.9,
                bg_rate: 2.0,
                seed: 20260819,
            },
            slit: SlitConfig { d_um: 400.0, a_um: 150.0, f3_mm: 125.0, mag: -2.0 },
            run: RunSection { frames: 100_000, roi: 0, out_dir: "out".into() },
        }
    }
}

impl RunConfig {
    /// Parse a config file, starting from the defaults.
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Parse config text, starting from the defaults. The error string names
    /// the offending line and `section.key`.
    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        let mut section: Option<&str> = None;
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or(format!("line {line_no}: unterminated section header `{line}`"))?
                    .trim();
                section = Some(match name {
                    "source" => "source",
                    "lens" => "lens",
                    "camera" => "camera",
                    "slit" => "slit",
                    "run" => "run",
                    other => return Err(format!("line {line_no}: unknown section [{other}]")),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(format!("line {line_no}: expected `key = value`, got `{line}`"))?;
            let (key, value) = (key.trim(), value.trim());
            let section = section
                .ok_or(format!("line {line_no}: `{key}` appears before any [section]"))?;
            let qualified = format!("{section}.{key}");
            if seen.contains(&qualified) {
                return Err(format!("line {line_no}: duplicate key {qualified}"));
            }
            cfg.assign(section, key, value)
                .map_err(|e| format!("line {line_no}: {qualified}: {e}"))?;
            seen.push(qualified);
        }
        Ok(cfg)
    }

    fn assign(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        fn num(value: &str) -> Result<f64, String> {
            value.parse::<f64>().map_err(|_| format!("invalid number `{value}`"))
        }
        fn int(value: &str) -> Result<usize, String> {
            value.parse::<usize>().map_err(|_| format!("invalid integer `{value}`"))
        }
        match (section, key) {
            ("source", "sigma_plus_um") => self.source.sigma_plus_um = num(value)?,
            ("source", "sigma_minus_um") => self.source.sigma_minus_um = num(value)?,
            ("source", "lambda_nm") => self.source.lambda_nm = num(value)?,
            ("lens", "u_mm") => self.lens.u_mm = num(value)?,
            ("lens", "f_mm") => self.lens.f_mm = num(value)?,
            ("camera", "width") => self.camera.width = int(value)?,
            ("camera", "height") => self.camera.height = int(value)?,
            ("camera", "pitch_um") => self.camera.pitch_um = num(value)?,
            ("camera", "eta") => self.camera.eta = num(value)?,
            ("camera", "mu") => self.camera.mu = num(value)?,
            ("camera", "bloom_prob") => self.camera.bloom_prob = num(value)?,
            ("camera", "bloom_sigma_px") => self.camera.bloom_sigma_px = num(value)?,
            ("camera", "bg_rate") => self.camera.bg_rate = num(value)?,
            ("camera", "seed") => {
                self.camera.seed =
                    value.parse::<u64>().map_err(|_| format!("invalid seed `{value}`"))?;
            }
            ("slit", "d_um") => self.slit.d_um = num(value)?,
            ("slit", "a_um") => self.slit.a_um = num(value)?,
            ("slit", "f3_mm") => self.slit.f3_mm = num(value)?,
            ("slit", "mag") => self.slit.mag = num(value)?,
            ("run", "frames") => self.run.frames = int(value)?,
            ("run", "roi") => self.run.roi = int(value)?,
            ("run", "out_dir") => {
                if value.is_empty() {
                    return Err("must not be empty".into());
                }
                self.run.out_dir = value.to_string();
            }
            _ => return Err(format!("unknown key {section}.{key}")),
        }
        Ok(())
    }

    /// Build the source model; failures are config errors naming `[source]`.
    pub fn source(&self) -> CliResult<DGSource> {
        DGSource::new(
            self.source.sigma_plus_um * 1e-6,
            self.source.sigma_minus_um * 1e-6,
            self.source.lambda_nm * 1e-9,
        )
        .map_err(|e| CliError::Config(format!("[source]: {e}")))
    }

    /// Build the camera model; failures are config errors naming `[camera]`.
    pub fn camera(&self) -> CliResult<CameraModel> {
        let mut camera =
            CameraModel::new(self.camera.width, self.camera.height, self.camera.pitch_um * 1e-6);
        camera.eta = self.camera.eta;
        camera.mu = self.camera.mu;
        camera.bloom_prob = self.camera.bloom_prob;
        camera.bloom_sigma = self.camera.bloom_sigma_px;
        camera.bg_rate = self.camera.bg_rate;
        camera.seed = self.camera.seed;
        camera.validate().map_err(|e| CliError::Config(format!("[camera]: {e}")))?;
        Ok(camera)
    }

    /// Build the slit specification; failures name `[slit]`.
    pub fn slit(&self) -> CliResult<SlitSpec> {
        SlitSpec::new(self.slit.d_um * 1e-6, self.slit.a_um * 1e-6)
            .map_err(|e| CliError::Config(format!("[slit]: {e}")))
    }

    /// Source-to-lens distance (m).
    pub fn lens_u(&self) -> f64 {
        self.lens.u_mm * 1e-3
    }

    /// Focal length (m).
    pub fn lens_f(&self) -> f64 {
        self.lens.f_mm * 1e-3
    }

    /// Wavelength (m).
    pub fn lambda(&self) -> f64 {
        self.source.lambda_nm * 1e-9
    }

    /// Fourier-lens focal length (m).
    pub fn slit_f3(&self) -> f64 {
        self.slit.f3_mm * 1e-3
    }

    /// Check every section once, so commands can assume a valid config.
    pub fn validate(&self) -> CliResult<()> {
        self.source()?;
        self.camera()?;
        self.slit()?;
        for (name, v) in [("lens.u_mm", self.lens.u_mm), ("lens.f_mm", self.lens.f_mm)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("[lens]: {name} must be positive, got {v}")));
            }
        }
        if !(self.slit.mag.is_finite() && self.slit.mag != 0.0) {
            return Err(CliError::Config(format!(
                "[slit]: mag must be finite and non-zero, got {}",
                self.slit.mag
            )));
        }
        if !(self.slit.f3_mm.is_finite() && self.slit.f3_mm > 0.0) {
            return Err(CliError::Config(format!(
                "[slit]: f3_mm must be positive, got {}",
                self.slit.f3_mm
            )));
        }
        if self.run.frames < 2 {
            return Err(CliError::Config(format!(
                "[run]: frames must be at least 2, got {}",
                self.run.frames
            )));
        }
        if self.run.roi != 0 && self.run.roi < 4 {
            return Err(CliError::Config(format!(
                "[run]: roi must be 0 (full frame) or at least 4 pixels, got {}",
                self.run.roi
            )));
        }
        Ok(())
    }

    /// Canonical rendering of the resolved configuration. Parsing it back
    /// yields the same configuration; its hash identifies the run.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[source]");
        let _ = writeln!(s, "sigma_plus_um = {}", self.source.sigma_plus_um);
        let _ = writeln!(s, "sigma_minus_um = {}", self.source.sigma_minus_um);
        let _ = writeln!(s, "lambda_nm = {}", self.source.lambda_nm);
        let _ = writeln!(s, "\n[lens]");
        let _ = writeln!(s, "u_mm = {}", self.lens.u_mm);
        let _ = writeln!(s, "f_mm = {}", self.lens.f_mm);
        let _ = writeln!(s, "\n[camera]");
        let _ = writeln!(s, "width = {}", self.camera.width);
        let _ = writeln!(s, "height = {}", self.camera.height);
        let _ = writeln!(s, "pitch_um = {}", self.camera.pitch_um);
        let _ = writeln!(s, "eta = {}", self.camera.eta);
        let _ = writeln!(s, "mu = {}", self.camera.mu);
        let _ = writeln!(s, "bloom_prob = {}", self.camera.bloom_prob);
        let _ = writeln!(s, "bloom_sigma_px = {}", self.camera.bloom_sigma_px);
        let _ = writeln!(s, "bg_rate = {}", self.camera.bg_rate);
        let _ = writeln!(s, "seed = {}", self.camera.seed);
        let _ = writeln!(s, "\n[slit]");
        let _ = writeln!(s, "d_um = {}", self.slit.d_um);
        let _ = writeln!(s, "a_um = {}", self.slit.a_um);
        let _ = writeln!(s, "f3_mm = {}", self.slit.f3_mm);
        let _ = writeln!(s, "mag = {}", self.slit.mag);
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "frames = {}", self.run.frames);
        let _ = writeln!(s, "roi = {}", self.run.roi);
        let _ = writeln!(s, "out_dir = {}", self.run.out_dir);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_render_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_text();
        let back = RunConfig::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn partial_file_overrides_only_named_keys() {
        let cfg = RunConfig::from_text("[camera]\nmu = 4\n\n[run]\nframes = 500\n").unwrap();
        assert_eq!(cfg.camera.mu, 4.0);
        assert_eq!(cfg.run.frames, 500);
        assert_eq!(cfg.camera.width, 64);
        assert_eq!(cfg.source.sigma_plus_um, 140.2);
    }

    #[test]
    fn unknown_key_names_section_and_line() {
        let err = RunConfig::from_text("[camera]\nqe = 0.5\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("camera.qe"), "{err}");
    }

    #[test]
    fn unknown_section_rejected() {
        let err = RunConfig::from_text("[detector]\nwidth = 3\n").unwrap_err();
        assert!(err.contains("unknown section [detector]"), "{err}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = RunConfig::from_text("[camera]\nmu = 4\nmu = 5\n").unwrap_err();
        assert!(err.contains("duplicate key camera.mu"), "{err}");
    }

    #[test]
    fn key_outside_section_rejected() {
        let err = RunConfig::from_text("mu = 4\n").unwrap_err();
        assert!(err.contains("before any [section]"), "{err}");
    }

    #[test]
    fn bad_number_reports_qualified_key() {
        let err = RunConfig::from_text("[source]\nlambda_nm = abc\n").unwrap_err();
        assert!(err.contains("source.lambda_nm"), "{err}");
        assert!(err.contains("invalid number"), "{err}");
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.camera.eta = 1.5;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("[camera]"), "{err}");

        let mut cfg = RunConfig::default();
        cfg.slit.mag = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.run.frames = 1;
        assert!(cfg.validate().is_err());
    }
}
