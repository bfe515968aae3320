//! Monte Carlo study of device-to-device variation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::ica::{BackendKind, IcaConfig};
use crate::metrics::{improvement_pct, Improvement, QualityReport};
use crate::pipeline::Experiment;

const MAX_REJECTIONS: usize = 1000;

/// Gaussian spread applied independently to `d`, `r_on` and `r_off` of every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationSpec {
    /// Standard deviation as a fraction of each parameter's mean.
    pub sigma_fraction: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for VariationSpec {
    fn default() -> Self {
        VariationSpec {
            sigma_fraction: 0.03,
            trials: 20,
            seed: 0,
        }
    }
}

impl VariationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.3).contains(&self.sigma_fraction) {
            return Err(Error::Variation(format!(
                "sigma_fraction = {} must lie in [0, 0.3)",
                self.sigma_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::Variation("trials must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws one perturbed parameter set, redrawing until it is physically valid.
pub fn sample_params(
    base: &DeviceParams,
    spec: &VariationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<DeviceParams> {
    spec.validate()?;
    if spec.sigma_fraction == 0.0 {
        return Ok(*base);
    }
    let normal = |mean: f64| {
        Normal::new(mean, spec.sigma_fraction * mean.abs())
            .map_err(|e| Error::Variation(e.to_string()))
    };
    let (nd, non, noff) = (normal(base.d)?, normal(base.r_on)?, normal(base.r_off)?);
    for _ in 0..MAX_REJECTIONS {
        let p = DeviceParams {
            d: nd.sample(rng),
            r_on: non.sample(rng),
            r_off: noff.sample(rng),
            ..*base
        };
        if p.validate().is_ok() {
            return Ok(p);
        }
    }
    Err(Error::Variation(format!(
        "{MAX_REJECTIONS} consecutive draws violated the device constraints"
    )))
}

/// Generator for one cell of one trial; distinct `(trial, cell)` pairs get disjoint streams.
pub fn cell_rng(seed: u64, trial: usize, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 32) | cell as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct McTrial {
    pub trial: usize,
    pub quality: Option<QualityReport>,
    /// Memristive versus software, or the reason the trial failed.
    pub outcome: std::result::Result<Improvement, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn stat(values: impl Iterator<Item = f64>) -> Option<Stat> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some(Stat {
        mean,
        std,
        count: v.len(),
    })
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub spec: VariationSpec,
    pub config: IcaConfig,
    pub software: QualityReport,
    pub nominal: Improvement,
    pub trials: Vec<McTrial>,
}

/// Metric order used by every per-metric array: SSIM, GSM, PSNR, MSE.
pub const METRIC_NAMES: [&str; 4] = ["ssim", "gsm", "psnr", "mse"];

impl McReport {
    /// Trial statistics of each improvement percentage.
    pub fn summary(&self) -> [Option<Stat>; 4] {
        std::array::from_fn(|k| {
            stat(
                self.trials
                    .iter()
                    .filter_map(|t| t.outcome.as_ref().ok())
                    .filter_map(|imp| imp.as_array()[k]),
            )
        })
    }

    /// Nominal improvement minus the trial mean; positive means variation made things worse.
    pub fn degradation(&self) -> [Option<f64>; 4] {
        let summary = self.summary();
        let nominal = self.nominal.as_array();
        std::array::from_fn(|k| Some(nominal[k]? - summary[k]?.mean))
    }

    pub fn failed_trials(&self) -> usize {
        self.trials.iter().filter(|t| t.outcome.is_err()).count()
    }
}

/// Runs the crossbar pipeline once per trial on an independently perturbed array.
///
/// The software reference and the unperturbed crossbar run are computed once.
/// Trials run in parallel; the report lists them in trial order.
pub fn run_mc(exp: &Experiment, cfg: &IcaConfig, spec: &VariationSpec) -> Result<McReport> {
    spec.validate()?;
    let software_cfg = IcaConfig {
        backend: BackendKind::Ideal,
        ..*cfg
    };
    let xbar_cfg = IcaConfig {
        backend: BackendKind::Crossbar,
        ..*cfg
    };
    let quality = |sep: crate::pipeline::Separation| sep.quality.expect("experiment has references");
    let software = quality(exp.run(&software_cfg)?);
    let nominal = improvement_pct(&quality(exp.run(&xbar_cfg)?), &software);
    let n = exp.sources.len();

    let trials = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let mut drawn = Vec::with_capacity(n * n);
            for cell in 0..n * n {
                let mut rng = cell_rng(spec.seed, trial, cell);
                match sample_params(&exp.device, spec, &mut rng) {
                    Ok(p) => drawn.push(p),
                    Err(e) => {
                        return McTrial {
                            trial,
                            quality: None,
                            outcome: Err(e.to_string()),
                        }
                    }
                }
            }
            let mut cells = |i: usize, j: usize| drawn[i * n + j];
            match exp.run_with_cells(&xbar_cfg, Some(&mut cells)) {
                Ok(sep) => {
                    let q = quality(sep);
                    McTrial {
                        trial,
                        outcome: Ok(improvement_pct(&q, &software)),
                        quality: Some(q),
                    }
                }
                Err(e) => {
                    log::warn!("Monte Carlo trial {trial} failed: {e}");
                    McTrial {
                        trial,
                        quality: None,
                        outcome: Err(e.to_string()),
                    }
                }
            }
        })
        .collect();

    Ok(McReport {
        spec: *spec,
        config: xbar_cfg,
        software,
        nominal,
        trials,
    })
}
