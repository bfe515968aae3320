//! End-to-end separation: mixtures in, aligned images and quality reports out.

use ndarray::Array2;

use crate::crossbar::{Crossbar, CrossbarConfig};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::ica::{
    run_acy, run_fastica, Algorithm, BackendKind, CrossbarBackend, IcaConfig, IcaOutcome,
    IdealBackend, SignalMatrix, SignalRole, WeightBackend,
};
use crate::imaging::{align_outputs, mix, stack, Alignment, GrayImage, MixingMatrix, Mixture};
use crate::metrics::{MetricParams, QualityReport};

/// Multiplier applied to weights before they are stored on the crossbar.
pub fn crossbar_scale(algorithm: Algorithm) -> f64 {
    match algorithm {
        Algorithm::FastIca => 100.0,
        Algorithm::Acy => 1.0,
    }
}

/// Everything a separation run depends on apart from the ICA settings.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sources: Vec<GrayImage>,
    pub mixing: MixingMatrix,
    pub device: DeviceParams,
    pub crossbar: CrossbarConfig,
    pub metrics: MetricParams,
}

#[derive(Debug, Clone)]
pub struct Separation {
    pub config: IcaConfig,
    pub outcome: IcaOutcome,
    /// Present when references were supplied.
    pub alignment: Option<Alignment>,
    /// Aligned to the references if any, otherwise stretched onto `[0, 255]`.
    pub images: Vec<GrayImage>,
    pub quality: Option<QualityReport>,
}

impl Separation {
    pub fn label(&self) -> String {
        pipeline_label(self.config.algorithm, self.config.backend)
    }
}

pub fn pipeline_label(algorithm: Algorithm, backend: BackendKind) -> String {
    format!("{}/{}", algorithm.name(), backend.name())
}

pub fn run_ica(x: &SignalMatrix, cfg: &IcaConfig, backend: &mut dyn WeightBackend) -> Result<IcaOutcome> {
    match cfg.algorithm {
        Algorithm::Acy => run_acy(x, cfg, backend),
        Algorithm::FastIca => run_fastica(x, cfg, backend),
    }
}

/// Runs ICA on `mixtures` with a backend of the configured kind.
///
/// `cell_params` overrides the physical parameters of each crossbar cell.
pub fn separate(
    mixtures: &[GrayImage],
    cfg: &IcaConfig,
    device: &DeviceParams,
    xbar_cfg: &CrossbarConfig,
    cell_params: Option<&mut dyn FnMut(usize, usize) -> DeviceParams>,
) -> Result<IcaOutcome> {
    let x = SignalMatrix::new(stack(mixtures)?, SignalRole::Mixtures)?;
    let n = x.channels();
    match cfg.backend {
        BackendKind::Ideal => run_ica(&x, cfg, &mut IdealBackend::new(n, n)),
        BackendKind::Crossbar => {
            let xbar = match cell_params {
                Some(f) => Crossbar::with_cell_params(n, n, *device, *xbar_cfg, f)?,
                None => Crossbar::new(n, n, *device, *xbar_cfg)?,
            };
            let mut backend = CrossbarBackend::new(xbar, crossbar_scale(cfg.algorithm))?;
            run_ica(&x, cfg, &mut backend)
        }
    }
}

fn stretch(values: &[f64], width: usize, height: usize) -> Result<GrayImage> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scaled: Vec<f64> = if span > 0.0 {
        values.iter().map(|v| (v - lo) / span * 255.0).collect()
    } else {
        vec![127.5; values.len()]
    };
    GrayImage::clamped(width, height, &scaled)
}

/// Turns ICA outputs into images, aligning and scoring them when references exist.
pub fn finish(
    cfg: &IcaConfig,
    outcome: IcaOutcome,
    width: usize,
    height: usize,
    references: Option<&[GrayImage]>,
    metrics: &MetricParams,
) -> Result<Separation> {
    let outputs: Vec<Vec<f64>> = outcome
        .outputs
        .data()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let (alignment, images, quality) = match references {
        Some(refs) => {
            let ref_signals: Vec<Vec<f64>> = refs.iter().map(|r| r.pixels().to_vec()).collect();
            let alignment = align_outputs(&outputs, &ref_signals)?;
            let images = alignment
                .outputs
                .iter()
                .map(|o| GrayImage::clamped(width, height, o))
                .collect::<Result<Vec<_>>>()?;
            let quality = QualityReport::new(pipeline_label(cfg.algorithm, cfg.backend), refs, &images, metrics)?;
            (Some(alignment), images, Some(quality))
        }
        None => {
            let images = outputs
                .iter()
                .map(|o| stretch(o, width, height))
                .collect::<Result<Vec<_>>>()?;
            (None, images, None)
        }
    };
    Ok(Separation {
        config: *cfg,
        outcome,
        alignment,
        images,
        quality,
    })
}

impl Experiment {
    pub fn new(sources: Vec<GrayImage>, mixing: MixingMatrix, device: DeviceParams) -> Result<Self> {
        if sources.len() != mixing.matrix().nrows() {
            return Err(Error::dims(
                format!("{} source images", mixing.matrix().nrows()),
                sources.len(),
            ));
        }
        stack(&sources)?;
        Ok(Experiment {
            sources,
            mixing,
            device,
            crossbar: CrossbarConfig::default(),
            metrics: MetricParams::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.sources[0].width()
    }

    pub fn height(&self) -> usize {
        self.sources[0].height()
    }

    pub fn mixture(&self) -> Result<Mixture> {
        mix(&self.sources, &self.mixing)
    }

    /// Mixes the sources, separates them and scores the result against the sources.
    pub fn run(&self, cfg: &IcaConfig) -> Result<Separation> {
        self.run_with_cells(cfg, None)
    }

    pub fn run_with_cells(
        &self,
        cfg: &IcaConfig,
        cell_params: Option<&mut dyn FnMut(usize, usize) -> DeviceParams>,
    ) -> Result<Separation> {
        let mixture = self.mixture()?;
        let outcome = separate(&mixture.images, cfg, &self.device, &self.crossbar, cell_params)?;
        finish(
            cfg,
            outcome,
            self.width(),
            self.height(),
            Some(&self.sources),
            &self.metrics,
        )
    }
}

/// Global transform `W A`; a scaled permutation when separation succeeded.
pub fn global_transform(unmixing: &Array2<f64>, mixing: &MixingMatrix) -> Array2<f64> {
    unmixing.dot(mixing.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{pearson, synthetic_pair};
    use crate::metrics::Psnr;

    fn experiment() -> Experiment {
        Experiment::new(
            synthetic_pair(32).unwrap().to_vec(),
            MixingMatrix::default(),
            DeviceParams::montecarlo(),
        )
        .unwrap()
    }

    #[test]
    fn fastica_ideal_recovers_sources() {
        let exp = experiment();
        let sep = exp.run(&IcaConfig::new(Algorithm::FastIca, BackendKind::Ideal)).unwrap();
        assert!(sep.outcome.converged);
        for (img, src) in sep.images.iter().zip(&exp.sources) {
            assert!(pearson(img.pixels(), src.pixels()) >= 0.95);
        }
        let q = sep.quality.unwrap();
        assert_eq!(q.images.len(), 2);
        assert!(q.images.iter().all(|i| matches!(i.psnr, Psnr::Db(_))));
    }

    #[test]
    fn crossbar_matches_ideal() {
        let exp = experiment();
        let ideal = exp.run(&IcaConfig::new(Algorithm::FastIca, BackendKind::Ideal)).unwrap();
        let xbar = exp.run(&IcaConfig::new(Algorithm::FastIca, BackendKind::Crossbar)).unwrap();
        for (a, b) in ideal.images.iter().zip(&xbar.images) {
            assert!(pearson(a.pixels(), b.pixels()).abs() >= 0.99);
        }
    }

    #[test]
    fn unreferenced_outputs_fill_pixel_range() {
        let exp = experiment();
        let mixture = exp.mixture().unwrap();
        let cfg = IcaConfig::new(Algorithm::FastIca, BackendKind::Ideal);
        let outcome = separate(&mixture.images, &cfg, &exp.device, &exp.crossbar, None).unwrap();
        let sep = finish(&cfg, outcome, 32, 32, None, &exp.metrics).unwrap();
        assert!(sep.alignment.is_none() && sep.quality.is_none());
        for img in &sep.images {
            let hi = img.pixels().iter().copied().fold(0.0, f64::max);
            let lo = img.pixels().iter().copied().fold(255.0, f64::min);
            assert_eq!((lo, hi), (0.0, 255.0));
        }
    }

    #[test]
    fn source_count_must_match_mixing() {
        let [a, _] = synthetic_pair(16).unwrap();
        assert!(Experiment::new(vec![a], MixingMatrix::default(), DeviceParams::demo()).is_err());
    }
}
