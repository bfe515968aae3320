use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::crossbar::Crossbar;
use crate::device::WEIGHT_LIMIT;
use crate::error::{Error, Result};

/// Storage and forward pass for an m×n unmixing matrix (`y = W c`).
pub trait WeightBackend {
    /// `(outputs, inputs)`.
    fn shape(&self) -> (usize, usize);

    fn store(&mut self, w: &Array2<f64>) -> Result<()>;

    fn store_row(&mut self, row: usize, w: ArrayView1<f64>) -> Result<()>;

    /// The weights as the backend actually holds them.
    fn load(&self) -> Array2<f64>;

    fn load_row(&self, row: usize) -> Array1<f64> {
        self.load().row(row).to_owned()
    }

    /// Output matrix for a channels × samples input block.
    fn forward(&self, data: ArrayView2<f64>) -> Result<Array2<f64>>;

    fn forward_row(&self, row: usize, data: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(data)?.row(row).to_owned())
    }

    /// Number of weight entries clipped to the device range so far.
    fn clip_events(&self) -> usize {
        0
    }
}

/// Stores `w` and evaluates the forward pass over `data`.
pub fn backend_forward(
    backend: &mut dyn WeightBackend,
    w: &Array2<f64>,
    data: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    backend.store(w)?;
    backend.forward(data)
}

fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::dims(
            format!("{}x{} weights", expected.0, expected.1),
            format!("{}x{}", got.0, got.1),
        ));
    }
    Ok(())
}

/// Plain floating-point weights.
#[derive(Debug, Clone)]
pub struct IdealBackend {
    w: Array2<f64>,
}

impl IdealBackend {
    pub fn new(outputs: usize, inputs: usize) -> Self {
        IdealBackend {
            w: Array2::zeros((outputs, inputs)),
        }
    }
}

impl WeightBackend for IdealBackend {
    fn shape(&self) -> (usize, usize) {
        self.w.dim()
    }

    fn store(&mut self, w: &Array2<f64>) -> Result<()> {
        check_shape(self.w.dim(), w.dim())?;
        self.w.assign(w);
        Ok(())
    }

    fn store_row(&mut self, row: usize, w: ArrayView1<f64>) -> Result<()> {
        check_shape((1, self.w.ncols()), (1, w.len()))?;
        self.w.row_mut(row).assign(&w);
        Ok(())
    }

    fn load(&self) -> Array2<f64> {
        self.w.clone()
    }

    fn forward(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_shape((self.w.ncols(), data.ncols()), (data.nrows(), data.ncols()))?;
        Ok(self.w.dot(&data))
    }

    fn forward_row(&self, row: usize, data: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_shape((self.w.ncols(), data.ncols()), (data.nrows(), data.ncols()))?;
        Ok(self.w.row(row).dot(&data))
    }
}

/// Weights held as memristor states; products computed from per-cell charges.
///
/// Weight `W[j][i]` lives in crossbar cell `(i, j)` multiplied by `scale`, so
/// the crossbar is `inputs × outputs`. Entries beyond the device range are
/// clipped. Signed inputs are shifted by a per-channel offset so every pulse
/// width is non-negative, and the offset's contribution is subtracted after
/// the read.
#[derive(Debug, Clone)]
pub struct CrossbarBackend {
    xbar: Crossbar,
    scale: f64,
    clipped: usize,
}

impl CrossbarBackend {
    pub fn new(xbar: Crossbar, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::OutOfRange {
                what: "weight scale",
                value: scale,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        Ok(CrossbarBackend {
            xbar,
            scale,
            clipped: 0,
        })
    }

    pub fn crossbar(&self) -> &Crossbar {
        &self.xbar
    }

    pub fn into_crossbar(self) -> Crossbar {
        self.xbar
    }

    fn program(&mut self, row: usize, col: usize, w: f64) -> Result<()> {
        let mut target = w * self.scale;
        if target.abs() > WEIGHT_LIMIT {
            self.clipped += 1;
            target = target.clamp(-WEIGHT_LIMIT, WEIGHT_LIMIT);
        }
        self.xbar.program_weight(col, row, target)?;
        Ok(())
    }

    fn offsets(data: ArrayView2<f64>) -> Array1<f64> {
        data.map_axis(Axis(1), |row| {
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            (-min).max(0.0)
        })
    }
}

impl WeightBackend for CrossbarBackend {
    fn shape(&self) -> (usize, usize) {
        (self.xbar.cols(), self.xbar.rows())
    }

    fn store(&mut self, w: &Array2<f64>) -> Result<()> {
        check_shape(self.shape(), w.dim())?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Convergence("non-finite weight".into()));
        }
        for ((r, c), &v) in w.indexed_iter() {
            self.program(r, c, v)?;
        }
        Ok(())
    }

    fn store_row(&mut self, row: usize, w: ArrayView1<f64>) -> Result<()> {
        check_shape((1, self.xbar.rows()), (1, w.len()))?;
        if row >= self.xbar.cols() {
            return Err(Error::IndexOutOfBounds {
                row,
                col: 0,
                rows: self.xbar.cols(),
                cols: self.xbar.rows(),
            });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Convergence("non-finite weight".into()));
        }
        for (c, &v) in w.iter().enumerate() {
            self.program(row, c, v)?;
        }
        Ok(())
    }

    fn load(&self) -> Array2<f64> {
        self.xbar.read_weights().reversed_axes() / self.scale
    }

    fn load_row(&self, row: usize) -> Array1<f64> {
        (0..self.xbar.rows())
            .map(|i| self.xbar.read_weight(i, row).expect("row in range") / self.scale)
            .collect()
    }

    fn forward(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (m, n) = self.shape();
        check_shape((n, data.ncols()), (data.nrows(), data.ncols()))?;
        let offsets = Self::offsets(data);
        let correction = self.load().dot(&offsets);
        let mut out = Array2::zeros((m, data.ncols()));
        let mut shifted = vec![0.0; n];
        for (t, sample) in data.axis_iter(Axis(1)).enumerate() {
            for (s, (&v, &b)) in shifted.iter_mut().zip(sample.iter().zip(&offsets)) {
                *s = v + b;
            }
            for j in 0..m {
                out[[j, t]] = self.xbar.read_output(j, &shifted)? / self.scale - correction[j];
            }
        }
        Ok(out)
    }

    fn forward_row(&self, row: usize, data: ArrayView2<f64>) -> Result<Array1<f64>> {
        let n = self.xbar.rows();
        check_shape((n, data.ncols()), (data.nrows(), data.ncols()))?;
        let offsets = Self::offsets(data);
        let correction = self.load_row(row).dot(&offsets);
        let mut shifted = vec![0.0; n];
        data.axis_iter(Axis(1))
            .map(|sample| {
                for (s, (&v, &b)) in shifted.iter_mut().zip(sample.iter().zip(&offsets)) {
                    *s = v + b;
                }
                Ok(self.xbar.read_output(row, &shifted)? / self.scale - correction)
            })
            .collect()
    }

    fn clip_events(&self) -> usize {
        self.clipped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::CrossbarConfig;
    use crate::device::DeviceParams;
    use ndarray::array;
    use proptest::prelude::*;

    fn xbar_backend(scale: f64) -> CrossbarBackend {
        let x = Crossbar::new(2, 2, DeviceParams::montecarlo(), CrossbarConfig::default()).unwrap();
        CrossbarBackend::new(x, scale).unwrap()
    }

    fn rel_close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300))
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let w = array![[0.4, -0.2], [0.9, 0.3]];
        let c = Array2::<f64>::zeros((2, 1));
        let mut ideal = IdealBackend::new(2, 2);
        let mut xb = xbar_backend(100.0);
        assert_eq!(backend_forward(&mut ideal, &w, c.view()).unwrap(), Array2::<f64>::zeros((2, 1)));
        let y = backend_forward(&mut xb, &w, c.view()).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn positive_and_signed_inputs_agree() {
        let w = array![[0.4, -0.2], [0.9, 0.3]];
        let pos = array![[1.0, 20.0, 255.0], [3.0, 0.5, 128.0]];
        let signed = array![[-1.5, 2.0, 0.25], [3.0, -0.5, -2.75]];
        for data in [pos, signed] {
            let mut ideal = IdealBackend::new(2, 2);
            let mut xb = xbar_backend(100.0);
            let a = backend_forward(&mut ideal, &w, data.view()).unwrap();
            let b = backend_forward(&mut xb, &w, data.view()).unwrap();
            assert!(rel_close(&a, &b, 1e-9), "{a} vs {b}");
            let row = xb.forward_row(1, data.view()).unwrap();
            assert!(row.iter().zip(b.row(1)).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1.0)));
        }
    }

    #[test]
    fn crossbar_clips_out_of_range_weights() {
        let mut xb = xbar_backend(1.0);
        xb.store(&array![[150.0, -20.0], [0.0, -300.0]]).unwrap();
        assert_eq!(xb.clip_events(), 2);
        let w = xb.load();
        assert!((w[[0, 0]] - 100.0).abs() < 1e-6 && (w[[1, 1]] + 100.0).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut ideal = IdealBackend::new(2, 2);
        assert!(ideal.store(&Array2::zeros((3, 2))).is_err());
        let mut xb = xbar_backend(1.0);
        assert!(xb.store(&Array2::zeros((2, 3))).is_err());
        assert!(xb.forward(Array2::zeros((3, 4)).view()).is_err());
    }

    proptest! {
        #[test]
        fn backends_agree(
            w in prop::collection::vec(-1.0f64..1.0, 4),
            data in prop::collection::vec(-5.0f64..5.0, 2 * 16),
        ) {
            let w = Array2::from_shape_vec((2, 2), w).unwrap();
            let data = Array2::from_shape_vec((2, 16), data).unwrap();
            let mut ideal = IdealBackend::new(2, 2);
            let mut xb = xbar_backend(100.0);
            let a = backend_forward(&mut ideal, &w, data.view()).unwrap();
            let b = backend_forward(&mut xb, &w, data.view()).unwrap();
            // relative to the magnitude of the terms being summed
            for j in 0..2 {
                for t in 0..16 {
                    let scale: f64 = (0..2).map(|i| (w[[j, i]] * data[[i, t]]).abs()).sum::<f64>() + 1e-6;
                    prop_assert!((a[[j, t]] - b[[j, t]]).abs() <= 1e-6 * scale);
                }
            }
        }
    }
}
