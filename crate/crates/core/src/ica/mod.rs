//! Independent component analysis on an ideal or crossbar-backed weight store.

mod acy;
mod activation;
mod backend;
mod fastica;

pub use acy::{acy_update, run_acy};
pub use activation::{acy_activation, fastica_g, fastica_gprime};
pub use backend::{backend_forward, CrossbarBackend, IdealBackend, WeightBackend};
pub use fastica::{decorrelate, fastica_step, fastica_update, run_fastica};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalRole {
    Sources,
    Mixtures,
    Whitened,
    Outputs,
}

/// Channels × samples real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    data: Array2<f64>,
    role: SignalRole,
}

impl SignalMatrix {
    pub fn new(data: Array2<f64>, role: SignalRole) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::dims(
                "at least one channel and one sample",
                format!("{}x{}", data.nrows(), data.ncols()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("signal contains non-finite values".into()));
        }
        Ok(SignalMatrix { data, role })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn role(&self) -> SignalRole {
        self.role
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Acy,
    FastIca,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Acy => "acy",
            Algorithm::FastIca => "fastica",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Ideal,
    Crossbar,
}

impl BackendKind {
    pub fn name(&self) -> &'static str {
        match self {
            BackendKind::Ideal => "ideal",
            BackendKind::Crossbar => "crossbar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaConfig {
    pub algorithm: Algorithm,
    pub backend: BackendKind,
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    /// Samples per ACY update; 0 uses the whole signal.
    pub batch_size: usize,
    /// Record every k-th iteration in the convergence trace (the last one is always kept).
    pub trace_every: usize,
}

impl IcaConfig {
    pub fn new(algorithm: Algorithm, backend: BackendKind) -> Self {
        IcaConfig {
            algorithm,
            backend,
            learning_rate: 0.02,
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
            batch_size: 0,
            trace_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::OutOfRange {
                what: "learning rate",
                value: self.learning_rate,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        if self.max_iters == 0 {
            return Err(Error::Convergence("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::OutOfRange {
                what: "tolerance",
                value: self.tol,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// One convergence-trace entry. `value` is ‖ΔW‖_F for ACY and |wᵀw_prev| for FastICA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub component: Option<usize>,
    pub iteration: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct IcaOutcome {
    /// Maps centered input samples to outputs: `y = unmixing · (x - mean)`.
    pub unmixing: Array2<f64>,
    /// Weights as held by the backend (in the algorithm's working coordinates).
    pub weights: Array2<f64>,
    pub outputs: SignalMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    /// Weight entries clipped to the device range while storing.
    pub clipped: usize,
}

/// Removes the per-channel mean; returns the centered signal and the means.
pub fn center(x: &SignalMatrix) -> Result<(SignalMatrix, Array1<f64>)> {
    if x.samples() < 2 {
        return Err(Error::Degenerate(format!(
            "centering needs at least 2 samples, got {}",
            x.samples()
        )));
    }
    let means = x.data.mean_axis(Axis(1)).expect("non-empty");
    let mut data = &x.data - &means.view().insert_axis(Axis(1));
    // second pass removes the residual left by rounding in the first
    let residual = data.mean_axis(Axis(1)).expect("non-empty");
    data -= &residual.view().insert_axis(Axis(1));
    Ok((SignalMatrix::new(data, x.role)?, means + residual))
}

/// Sample covariance `(1/N) X Xᵀ` of an already centered signal.
pub fn covariance(x: &Array2<f64>) -> Array2<f64> {
    x.dot(&x.t()) / x.ncols() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    /// `Λ^{-1/2} Eᵀ`, applied as `v = transform · x`.
    pub transform: Array2<f64>,
    /// Covariance eigenvalues, descending.
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Whitens a centered signal through the eigendecomposition of its covariance.
pub fn whiten(x: &SignalMatrix) -> Result<(SignalMatrix, Whitening)> {
    let n = x.channels();
    let cov = covariance(&x.data);
    let eig = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let bottom = eig.eigenvalues[order[n - 1]];
    if !(top > 0.0) || !(bottom > top * 1e-12) {
        return Err(Error::Degenerate(format!(
            "covariance is singular (eigenvalues {bottom:e} .. {top:e})"
        )));
    }

    let mut vectors = Array2::zeros((n, n));
    let mut values = Array1::zeros(n);
    for (k, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        // sign convention: largest-magnitude entry positive
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[[i, k]] = sign * col[i];
        }
        values[k] = eig.eigenvalues[src];
    }
    let transform = Array2::from_shape_fn((n, n), |(k, i)| vectors[[i, k]] / values[k].sqrt());
    let v = transform.dot(&x.data);
    Ok((
        SignalMatrix::new(v, SignalRole::Whitened)?,
        Whitening {
            transform,
            eigenvalues: values,
            eigenvectors: vectors,
        },
    ))
}

pub(crate) fn keep_trace(iteration: usize, every: usize, last: bool) -> bool {
    last || every <= 1 || iteration.is_multiple_of(every)
}
