//! Image quality measures and the memristive-versus-software improvement table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

const PEAK: f64 = 255.0;

/// Parameters of the structural and gradient similarity measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub gsm_c: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_k1: 0.01,
            ssim_k2: 0.03,
            gsm_c: 170.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Psnr {
    Db(f64),
    /// The images are equal, so the ratio is unbounded.
    Identical,
}

impl Psnr {
    pub fn db(&self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(*v),
            Psnr::Identical => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v}"),
            Psnr::Identical => f.write_str("identical"),
        }
    }
}

fn same_size(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::dims(
            format!("{}x{} image", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    Ok(())
}

fn check_min_size(metric: &'static str, img: &GrayImage, min: usize) -> Result<()> {
    if img.width() < min || img.height() < min {
        return Err(Error::ImageTooSmall {
            metric,
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    same_size(a, b)?;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.pixels().len() as f64)
}

pub fn psnr_from_mse(mse: f64) -> Psnr {
    if mse == 0.0 {
        Psnr::Identical
    } else {
        Psnr::Db(10.0 * (PEAK * PEAK / mse).log10())
    }
}

pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<Psnr> {
    Ok(psnr_from_mse(mse(a, b)?))
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable weighted sums over every fully contained `k×k` window.
fn filter_valid(values: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let (ow, oh) = (width + 1 - k, height + 1 - k);
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..ow {
            horiz[y * ow + x] = kernel.iter().zip(&row[x..x + k]).map(|(w, v)| w * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * horiz[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    ssim_with(a, b, &MetricParams::default())
}

/// Mean of the local SSIM map over Gaussian windows lying entirely inside the image.
pub fn ssim_with(a: &GrayImage, b: &GrayImage, p: &MetricParams) -> Result<f64> {
    same_size(a, b)?;
    check_min_size("SSIM", a, p.ssim_window)?;
    let (w, h) = (a.width(), a.height());
    let kernel = gaussian_kernel(p.ssim_window, p.ssim_sigma);
    let c1 = (p.ssim_k1 * PEAK).powi(2);
    let c2 = (p.ssim_k2 * PEAK).powi(2);
    let (pa, pb) = (a.pixels(), b.pixels());
    let sq = |f: &dyn Fn(usize) -> f64| (0..pa.len()).map(f).collect::<Vec<f64>>();
    let mu_a = filter_valid(pa, w, h, &kernel);
    let mu_b = filter_valid(pb, w, h, &kernel);
    let aa = filter_valid(&sq(&|i| pa[i] * pa[i]), w, h, &kernel);
    let bb = filter_valid(&sq(&|i| pb[i] * pb[i]), w, h, &kernel);
    let ab = filter_valid(&sq(&|i| pa[i] * pb[i]), w, h, &kernel);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / n as f64)
}

/// Sobel gradient magnitude on interior pixels, row-major `(w-2)×(h-2)`.
pub fn sobel_magnitude(img: &GrayImage) -> Result<Vec<f64>> {
    check_min_size("Sobel gradient", img, 3)?;
    let (w, h) = (img.width(), img.height());
    let p = |x: usize, y: usize| img.get(x, y);
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1)
                - p(x - 1, y - 1)
                - 2.0 * p(x - 1, y)
                - p(x - 1, y + 1);
            let gy = p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1)
                - p(x - 1, y - 1)
                - 2.0 * p(x, y - 1)
                - p(x + 1, y - 1);
            out.push(gx.hypot(gy));
        }
    }
    Ok(out)
}

pub fn gsm(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    gsm_with(a, b, &MetricParams::default())
}

pub fn gsm_with(a: &GrayImage, b: &GrayImage, p: &MetricParams) -> Result<f64> {
    same_size(a, b)?;
    check_min_size("GSM", a, 3)?;
    let ga = sobel_magnitude(a)?;
    let gb = sobel_magnitude(b)?;
    let c = p.gsm_c;
    let total: f64 = ga
        .iter()
        .zip(&gb)
        .map(|(x, y)| (2.0 * x * y + c) / (x * x + y * y + c))
        .sum();
    Ok(total / ga.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageQuality {
    pub mse: f64,
    pub psnr: Psnr,
    pub ssim: f64,
    pub gsm: f64,
}

impl ImageQuality {
    pub fn measure(reference: &GrayImage, test: &GrayImage, p: &MetricParams) -> Result<Self> {
        let mse = mse(reference, test)?;
        Ok(ImageQuality {
            mse,
            psnr: psnr_from_mse(mse),
            ssim: ssim_with(reference, test, p)?,
            gsm: gsm_with(reference, test, p)?,
        })
    }
}

/// Per-image quality of one pipeline's outputs against the originals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub pipeline: String,
    pub images: Vec<ImageQuality>,
}

/// Image-averaged metrics. `psnr_db` is `None` when any image is identical to its reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanQuality {
    pub mse: f64,
    pub psnr_db: Option<f64>,
    pub ssim: f64,
    pub gsm: f64,
}

impl QualityReport {
    pub fn new(
        pipeline: impl Into<String>,
        references: &[GrayImage],
        outputs: &[GrayImage],
        p: &MetricParams,
    ) -> Result<Self> {
        if references.len() != outputs.len() {
            return Err(Error::dims(
                format!("{} output images", references.len()),
                outputs.len(),
            ));
        }
        let images = references
            .iter()
            .zip(outputs)
            .map(|(r, o)| ImageQuality::measure(r, o, p))
            .collect::<Result<_>>()?;
        Ok(QualityReport {
            pipeline: pipeline.into(),
            images,
        })
    }

    pub fn mean(&self) -> MeanQuality {
        let n = self.images.len() as f64;
        let avg = |f: &dyn Fn(&ImageQuality) -> f64| self.images.iter().map(f).sum::<f64>() / n;
        let psnr_db = self
            .images
            .iter()
            .map(|q| q.psnr.db())
            .sum::<Option<f64>>()
            .map(|s| s / n);
        MeanQuality {
            mse: avg(&|q| q.mse),
            psnr_db,
            ssim: avg(&|q| q.ssim),
            gsm: avg(&|q| q.gsm),
        }
    }
}

/// Percentages where positive means the memristive pipeline scored better.
///
/// `None` marks an undefined entry (zero or missing software-side value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub ssim: Option<f64>,
    pub gsm: Option<f64>,
    pub psnr: Option<f64>,
    pub mse: Option<f64>,
}

impl Improvement {
    pub fn as_array(&self) -> [Option<f64>; 4] {
        [self.ssim, self.gsm, self.psnr, self.mse]
    }
}

fn higher_better(mem: f64, sw: f64) -> Option<f64> {
    (sw != 0.0).then(|| 100.0 * (mem - sw) / sw.abs())
}

pub fn improvement_pct(memristive: &QualityReport, software: &QualityReport) -> Improvement {
    let (m, s) = (memristive.mean(), software.mean());
    Improvement {
        ssim: higher_better(m.ssim, s.ssim),
        gsm: higher_better(m.gsm, s.gsm),
        psnr: match (m.psnr_db, s.psnr_db) {
            (Some(a), Some(b)) => higher_better(a, b),
            _ => None,
        },
        mse: (s.mse != 0.0).then(|| 100.0 * (s.mse - m.mse) / s.mse.abs()),
    }
}
