//! Grayscale images: binary PGM I/O, signal reshaping, mixing, and output alignment.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const MAX_INTENSITY: f64 = 255.0;

/// Row-major grid of intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dims("non-empty image", format!("{width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::dims(
                format!("{} pixels", width * height),
                pixels.len(),
            ));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=MAX_INTENSITY).contains(*p)) {
            return Err(Error::OutOfRange {
                what: "pixel intensity",
                value: *bad,
                min: 0.0,
                max: MAX_INTENSITY,
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from arbitrary finite values, clamping into `[0, 255]`.
    pub fn clamped(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite pixel value".into()));
        }
        Self::new(
            width,
            height,
            values.iter().map(|v| v.clamp(0.0, MAX_INTENSITY)).collect(),
        )
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn same_size(&self, other: &GrayImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedImage {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a binary (P5) PGM with maxval 255.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pgm(&bytes, path)
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(malformed(path, "missing magic number"));
    }
    if bytes[1] != b'5' {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("P{} (only binary P5 is supported)", bytes[1] as char),
        });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed(path, "truncated or non-numeric header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| malformed(path, "header value too large"))?;
    }
    let [width, height, maxval] = fields;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed(path, "missing whitespace after maxval"));
    }
    pos += 1;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("maxval {maxval} (only 255 is supported)"),
        });
    }
    if width == 0 || height == 0 {
        return Err(malformed(path, "zero image dimension"));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| malformed(path, "image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(malformed(
            path,
            format!("payload has {} bytes, expected {n}", payload.len()),
        ));
    }
    GrayImage::new(width, height, payload[..n].iter().map(|&b| f64::from(b)).collect())
}

/// Encodes as P5; intensities are rounded to the nearest integer.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|p| p.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn save_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode_pgm(image)).map_err(io)?;
    Ok(())
}

/// Row-major 1 × (w·h) signal.
pub fn flatten(image: &GrayImage) -> Array1<f64> {
    Array1::from(image.pixels.clone())
}

pub fn unflatten(signal: &[f64], width: usize, height: usize) -> Result<GrayImage> {
    if signal.len() != width * height {
        return Err(Error::dims(
            format!("signal of length {}", width * height),
            signal.len(),
        ));
    }
    GrayImage::new(width, height, signal.to_vec())
}

/// Stacks equally sized images as the rows of a channels × pixels matrix.
pub fn stack(images: &[GrayImage]) -> Result<Array2<f64>> {
    let first = images
        .first()
        .ok_or_else(|| Error::dims("at least one image", 0))?;
    let n = first.pixels.len();
    let mut out = Array2::zeros((images.len(), n));
    for (k, img) in images.iter().enumerate() {
        if !img.same_size(first) {
            return Err(Error::dims(
                format!("{}x{} image", first.width, first.height),
                format!("{}x{}", img.width, img.height),
            ));
        }
        out.row_mut(k).assign(&Array1::from(img.pixels.clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    a: Array2<f64>,
}

impl MixingMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::dims(
                "non-empty square mixing matrix",
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        let n = a.nrows();
        let det = DMatrix::from_fn(n, n, |i, j| a[[i, j]]).determinant();
        if !(det.abs() > 1e-9) {
            return Err(Error::Degenerate(format!(
                "mixing matrix is singular (det = {det:e})"
            )));
        }
        Ok(MixingMatrix { a })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::dims("square mixing matrix", "ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(Array2::from_shape_vec((n, n), flat).map_err(|e| Error::dims("square", e))?)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.a.rows().into_iter().map(|r| r.to_vec()).collect()
    }
}

impl Default for MixingMatrix {
    fn default() -> Self {
        MixingMatrix::new(ndarray::array![[0.7, 0.3], [0.3, 0.7]]).expect("nonsingular")
    }
}

/// Affine map `stored = scale * raw + offset` applied to a raw mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rescale {
    pub scale: f64,
    pub offset: f64,
}

impl Rescale {
    pub const IDENTITY: Rescale = Rescale {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, raw: f64) -> f64 {
        self.scale * raw + self.offset
    }
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub images: Vec<GrayImage>,
    pub rescale: Vec<Rescale>,
}

/// `x_k = Σ_i a_ki s_i` pixelwise; a mixture that leaves `[0, 255]` is
/// stretched affinely onto that range.
pub fn mix(sources: &[GrayImage], a: &MixingMatrix) -> Result<Mixture> {
    if sources.len() != a.a.nrows() {
        return Err(Error::dims(
            format!("{} source images", a.a.nrows()),
            sources.len(),
        ));
    }
    let s = stack(sources)?;
    let x = a.a.dot(&s);
    let (w, h) = (sources[0].width, sources[0].height);
    let mut images = Vec::with_capacity(x.nrows());
    let mut rescale = Vec::with_capacity(x.nrows());
    for row in x.rows() {
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let r = if lo >= 0.0 && hi <= MAX_INTENSITY {
            Rescale::IDENTITY
        } else if hi > lo {
            let scale = MAX_INTENSITY / (hi - lo);
            Rescale {
                scale,
                offset: -lo * scale,
            }
        } else {
            Rescale {
                scale: 1.0,
                offset: MAX_INTENSITY / 2.0 - lo,
            }
        };
        let values: Vec<f64> = row.iter().map(|&v| r.apply(v)).collect();
        images.push(GrayImage::clamped(w, h, &values)?);
        rescale.push(r);
    }
    Ok(Mixture { images, rescale })
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedMatch {
    pub reference: usize,
    pub output: usize,
    /// +1 or -1.
    pub sign: f64,
    /// Least-squares fit `aligned = scale * output + offset` (scale includes the sign).
    pub scale: f64,
    pub offset: f64,
    pub corr_before: f64,
    pub corr_after: f64,
}

#[derive(Debug, Clone)]
pub struct Alignment {
    /// Aligned outputs, indexed by reference.
    pub outputs: Vec<Vec<f64>>,
    pub matches: Vec<AlignedMatch>,
}

impl Alignment {
    pub fn permutation(&self) -> Vec<usize> {
        self.matches.iter().map(|m| m.output).collect()
    }
}

/// Resolves ICA's permutation, sign and scale ambiguity against references.
///
/// Pairs are chosen greedily by largest |Pearson correlation|; each matched
/// output is sign-corrected and least-squares fitted to its reference.
pub fn align_outputs(outputs: &[Vec<f64>], references: &[Vec<f64>]) -> Result<Alignment> {
    let n = references.len();
    if outputs.len() != n || n == 0 {
        return Err(Error::dims(format!("{n} outputs"), outputs.len()));
    }
    let len = references[0].len();
    if outputs.iter().chain(references).any(|s| s.len() != len) {
        return Err(Error::dims(format!("signals of length {len}"), "ragged signals"));
    }
    for (k, out) in outputs.iter().enumerate() {
        let m = out.iter().sum::<f64>() / len as f64;
        if out.iter().all(|v| (v - m).abs() == 0.0) {
            return Err(Error::Alignment(format!("output {k} is constant")));
        }
    }

    let mut corr = vec![vec![0.0; n]; n];
    for (r, reference) in references.iter().enumerate() {
        for (o, out) in outputs.iter().enumerate() {
            corr[r][o] = pearson(out, reference);
            if !corr[r][o].is_finite() {
                return Err(Error::Alignment(format!(
                    "correlation of output {o} with reference {r} is undefined"
                )));
            }
        }
    }

    let mut ref_free = vec![true; n];
    let mut out_free = vec![true; n];
    let mut matches: Vec<Option<AlignedMatch>> = vec![None; n];
    for _ in 0..n {
        let mut best = (0, 0, -1.0);
        for r in (0..n).filter(|&r| ref_free[r]) {
            for o in (0..n).filter(|&o| out_free[o]) {
                if corr[r][o].abs() > best.2 {
                    best = (r, o, corr[r][o].abs());
                }
            }
        }
        let (r, o, _) = best;
        ref_free[r] = false;
        out_free[o] = false;

        let (out, reference) = (&outputs[o], &references[r]);
        let mo = out.iter().sum::<f64>() / len as f64;
        let mr = reference.iter().sum::<f64>() / len as f64;
        let mut sor = 0.0;
        let mut soo = 0.0;
        for (a, b) in out.iter().zip(reference) {
            sor += (a - mo) * (b - mr);
            soo += (a - mo) * (a - mo);
        }
        let scale = sor / soo;
        let offset = mr - scale * mo;
        let sign = if corr[r][o] < 0.0 { -1.0 } else { 1.0 };
        matches[r] = Some(AlignedMatch {
            reference: r,
            output: o,
            sign,
            scale,
            offset,
            corr_before: corr[r][o],
            corr_after: 0.0,
        });
    }

    let mut aligned = Vec::with_capacity(n);
    let matches: Vec<AlignedMatch> = matches
        .into_iter()
        .map(|m| {
            let mut m = m.expect("every reference matched");
            let values: Vec<f64> = outputs[m.output]
                .iter()
                .map(|v| m.scale * v + m.offset)
                .collect();
            m.corr_after = pearson(&values, &references[m.reference]);
            aligned.push(values);
            m
        })
        .collect();
    Ok(Alignment {
        outputs: aligned,
        matches,
    })
}

/// Deterministic pair of structured, nearly uncorrelated test images.
///
/// The first is a set of concentric rings, the second a band pattern along a
/// tilted axis with squared-off profile; both fill most of `[0, 255]`.
/// Intensities are integers, so the pair survives a PGM roundtrip exactly.
pub fn synthetic_pair(size: usize) -> Result<[GrayImage; 2]> {
    if size < 8 {
        return Err(Error::dims("synthetic image size >= 8", size));
    }
    let n = size as f64;
    let tau = std::f64::consts::TAU;
    let rings = GrayImage::from_fn(size, size, |x, y| {
        let r = (x as f64 - 0.45 * n).hypot(y as f64 - 0.55 * n);
        (128.0 + 90.0 * (r * tau / (n / 5.3)).sin()).round()
    })?;
    let bands = GrayImage::from_fn(size, size, |x, y| {
        let phase = (0.8 * x as f64 + 0.35 * y as f64) * tau / (n / 3.7);
        let s = phase.sin();
        (128.0 + 90.0 * s.signum() * s.abs().sqrt()).round()
    })?;
    Ok([rings, bands])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h).map(|_| f64::from(rng.random_range(0u8..=255))).collect();
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn pgm_roundtrip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = random_image(13, 7, 1);
        save_pgm(&img, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), img);

        let one = GrayImage::new(1, 1, vec![0.0]).unwrap();
        save_pgm(&one, &path).unwrap();
        assert_eq!(load_pgm(&path).unwrap(), one);
    }

    #[test]
    fn pgm_errors() {
        let p = Path::new("x.pgm");
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n0\n", p),
            Err(Error::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n65535\n\0\0", p),
            Err(Error::UnsupportedFormat { .. })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\x01\x02", p),
            Err(Error::MalformedImage { .. })
        ));
        assert!(matches!(decode_pgm(b"P5\n2", p), Err(Error::MalformedImage { .. })));
        assert!(matches!(decode_pgm(b"GIF89a", p), Err(Error::MalformedImage { .. })));
        let ok = decode_pgm(b"P5\n# comment\n2 1\n255\n\x05\xff", p).unwrap();
        assert_eq!(ok.pixels(), &[5.0, 255.0]);
        assert!(matches!(load_pgm("/nonexistent/q.pgm"), Err(Error::Io { .. })));
    }

    #[test]
    fn flatten_examples() {
        let img = GrayImage::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(flatten(&img).to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        let big = GrayImage::new(512, 512, vec![0.0; 512 * 512]).unwrap();
        assert_eq!(flatten(&big).len(), 262_144);
        let r = random_image(64, 64, 2);
        assert_eq!(unflatten(flatten(&r).as_slice().unwrap(), 64, 64).unwrap(), r);
        assert!(unflatten(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn mix_examples() {
        let s = [random_image(8, 8, 3), random_image(8, 8, 4)];
        let id = MixingMatrix::new(Array2::eye(2)).unwrap();
        let m = mix(&s, &id).unwrap();
        assert_eq!(m.images[0], s[0]);
        assert_eq!(m.images[1], s[1]);
        assert_eq!(m.rescale, vec![Rescale::IDENTITY; 2]);

        let c100 = GrayImage::new(4, 4, vec![100.0; 16]).unwrap();
        let c200 = GrayImage::new(4, 4, vec![200.0; 16]).unwrap();
        let m = mix(&[c100, c200], &MixingMatrix::default()).unwrap();
        assert!(m.images[0].pixels().iter().all(|&p| (p - 130.0).abs() < 1e-12));
        assert!(m.images[1].pixels().iter().all(|&p| (p - 170.0).abs() < 1e-12));

        assert!(matches!(
            MixingMatrix::new(array![[1.0, 1.0], [1.0, 1.0]]),
            Err(Error::Degenerate(_))
        ));
        assert!(MixingMatrix::new(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn mix_rescales_out_of_range() {
        let s = [random_image(8, 8, 5), random_image(8, 8, 6)];
        let a = MixingMatrix::new(array![[1.5, 0.8], [-0.4, 1.0]]).unwrap();
        let m = mix(&s, &a).unwrap();
        for (k, img) in m.images.iter().enumerate() {
            let lo = img.pixels().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = img.pixels().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo.abs() < 1e-9 && (hi - 255.0).abs() < 1e-9);
            // recorded parameters reproduce the stored image from the raw mix
            for p in 0..64 {
                let raw = a.matrix()[[k, 0]] * s[0].pixels()[p] + a.matrix()[[k, 1]] * s[1].pixels()[p];
                assert!((m.rescale[k].apply(raw) - img.pixels()[p]).abs() < 1e-9);
            }
        }
        assert!(mix(&[s[0].clone(), random_image(4, 4, 7)], &a).is_err());
    }

    #[test]
    fn align_identity_and_swap() {
        let refs = vec![
            flatten(&random_image(8, 8, 8)).to_vec(),
            flatten(&random_image(8, 8, 9)).to_vec(),
        ];
        let al = align_outputs(&refs, &refs).unwrap();
        assert_eq!(al.permutation(), vec![0, 1]);
        for m in &al.matches {
            assert!((m.corr_after - 1.0).abs() < 1e-12);
        }

        let swapped: Vec<Vec<f64>> = vec![
            refs[1].iter().map(|v| -v).collect(),
            refs[0].iter().map(|v| -0.5 * v + 3.0).collect(),
        ];
        let al = align_outputs(&swapped, &refs).unwrap();
        assert_eq!(al.permutation(), vec![1, 0]);
        for (k, m) in al.matches.iter().enumerate() {
            assert_eq!(m.sign, -1.0);
            assert!((m.corr_after - 1.0).abs() < 1e-12);
            for (a, b) in al.outputs[k].iter().zip(&refs[k]) {
                assert!((a - b).abs() < 1e-9);
            }
        }

        let constant = vec![vec![1.0; 64], refs[0].clone()];
        assert!(matches!(align_outputs(&constant, &refs), Err(Error::Alignment(_))));
    }

    #[test]
    fn synthetic_pair_is_nearly_uncorrelated() {
        let [a, b] = synthetic_pair(64).unwrap();
        let r = pearson(a.pixels(), b.pixels());
        assert!(r.abs() < 0.1, "r = {r}");
    }

    proptest! {
        #[test]
        fn alignment_is_a_permutation_and_never_lowers_correlation(
            seed in 0u64..1000,
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
        ) {
            prop_assume!((a * d - b * c).abs() > 0.1);
            let refs = vec![
                flatten(&random_image(6, 6, seed)).to_vec(),
                flatten(&random_image(6, 6, seed + 1)).to_vec(),
            ];
            let outs: Vec<Vec<f64>> = vec![
                refs[0].iter().zip(&refs[1]).map(|(x, y)| a * x + b * y).collect(),
                refs[0].iter().zip(&refs[1]).map(|(x, y)| c * x + d * y).collect(),
            ];
            let al = align_outputs(&outs, &refs).unwrap();
            let mut perm = al.permutation();
            perm.sort();
            prop_assert_eq!(perm, vec![0, 1]);
            for m in &al.matches {
                prop_assert!(m.corr_after >= m.corr_before - 1e-12);
                prop_assert!((m.corr_after - m.corr_before.abs()).abs() < 1e-9);
            }
        }
    }
}
