use std::path::{Path, PathBuf};

use memica_core::crossbar::CrossbarConfig;
use memica_core::device::{AlternatingSchedule, DeviceParams};
use memica_core::ica::{Algorithm, BackendKind, IcaConfig};
use memica_core::imaging::MixingMatrix;
use memica_core::metrics::MetricParams;
use memica_core::variability::VariationSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DESK_SIZE: usize = 64;
pub const PAPER_SIZE: usize = 512;
/// Trace subsampling used with `--paper-scale`.
pub const PAPER_TRACE_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceProfile {
    /// `r_on` = 40 kΩ.
    Demo,
    /// `r_on` = 150 kΩ, the Monte Carlo means.
    Montecarlo,
}

impl DeviceProfile {
    pub fn params(self) -> DeviceParams {
        match self {
            DeviceProfile::Demo => DeviceParams::demo(),
            DeviceProfile::Montecarlo => DeviceParams::montecarlo(),
        }
    }
}

/// Algorithm settings shared by both backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcaSettings {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub batch_size: usize,
    pub trace_every: usize,
}

impl Default for IcaSettings {
    fn default() -> Self {
        let d = IcaConfig::new(Algorithm::Acy, BackendKind::Ideal);
        IcaSettings {
            learning_rate: d.learning_rate,
            max_iters: d.max_iters,
            tol: d.tol,
            batch_size: d.batch_size,
            trace_every: d.trace_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device_profile: DeviceProfile,
    /// Replaces the profile's parameters entirely when present.
    pub device: Option<DeviceParams>,
    pub crossbar: CrossbarConfig,
    pub mixing: Vec<Vec<f64>>,
    pub acy: IcaSettings,
    pub fastica: IcaSettings,
    /// Original images; a synthetic pair is generated when absent.
    pub images: Option<[PathBuf; 2]>,
    /// Side length of the synthetic pair.
    pub image_size: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub variation: VariationSpec,
    pub metrics: MetricParams,
    pub demo: AlternatingSchedule,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            device_profile: DeviceProfile::Montecarlo,
            device: None,
            crossbar: CrossbarConfig::default(),
            mixing: MixingMatrix::default().rows(),
            acy: IcaSettings::default(),
            fastica: IcaSettings::default(),
            images: None,
            image_size: DESK_SIZE,
            out_dir: PathBuf::from("out"),
            seed: 0,
            variation: VariationSpec::default(),
            metrics: MetricParams::default(),
            demo: AlternatingSchedule::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn device_params(&self) -> DeviceParams {
        self.device.unwrap_or_else(|| self.device_profile.params())
    }

    pub fn mixing_matrix(&self) -> Result<MixingMatrix, CliError> {
        MixingMatrix::from_rows(&self.mixing).map_err(|e| CliError::Config(format!("mixing: {e}")))
    }

    pub fn ica(&self, algorithm: Algorithm, backend: BackendKind) -> IcaConfig {
        let s = match algorithm {
            Algorithm::Acy => &self.acy,
            Algorithm::FastIca => &self.fastica,
        };
        IcaConfig {
            algorithm,
            backend,
            learning_rate: s.learning_rate,
            max_iters: s.max_iters,
            tol: s.tol,
            seed: self.seed,
            batch_size: s.batch_size,
            trace_every: s.trace_every,
        }
    }

    pub fn paper_scale(&mut self) {
        self.image_size = PAPER_SIZE;
        for s in [&mut self.acy, &mut self.fastica] {
            s.trace_every = s.trace_every.max(PAPER_TRACE_EVERY);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: memica_core::Error| CliError::Config(e.to_string());
        self.device_params().validate().map_err(bad)?;
        self.mixing_matrix()?;
        for alg in [Algorithm::Acy, Algorithm::FastIca] {
            self.ica(alg, BackendKind::Ideal).validate().map_err(bad)?;
        }
        self.variation.validate().map_err(bad)?;
        if self.image_size < self.metrics.ssim_window.max(8) {
            return Err(CliError::Config(format!(
                "image_size {} is below the minimum {}",
                self.image_size,
                self.metrics.ssim_window.max(8)
            )));
        }
        if self.acy.trace_every == 0 || self.fastica.trace_every == 0 {
            return Err(CliError::Config("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.images = Some([PathBuf::from("a.pgm"), PathBuf::from("b.pgm")]);
        cfg.device = Some(DeviceParams::demo());
        cfg.variation.trials = 3;
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 5, "fastica": {"max_iters": 7}}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.fastica.max_iters, 7);
        assert_eq!(cfg.fastica.tol, IcaSettings::default().tol);
        assert_eq!(cfg.mixing, vec![vec![0.7, 0.3], vec![0.3, 0.7]]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 5}"#).is_err());
        let mut cfg = RunConfig::default();
        cfg.mixing = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.acy.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
