use ndarray::{s, Array1, Array2, Axis};

use super::{
    acy_activation, center, keep_trace, IcaConfig, IcaOutcome, SignalMatrix, SignalRole,
    TracePoint, WeightBackend,
};
use crate::error::{Error, Result};

/// Initial ACY weights are this multiple of the identity.
const INITIAL_SCALE: f64 = 0.5;

/// Natural-gradient step `μ (I - E[g(y) yᵀ]) W` with the batch mean as expectation.
pub fn acy_update(w: &Array2<f64>, y: &Array2<f64>, mu: f64) -> Result<Array2<f64>> {
    let m = w.nrows();
    if y.nrows() != m || y.ncols() == 0 {
        return Err(Error::dims(
            format!("{m} output channels with samples"),
            format!("{}x{}", y.nrows(), y.ncols()),
        ));
    }
    let g = y.mapv(acy_activation);
    let moment = g.dot(&y.t()) / y.ncols() as f64;
    let step = Array2::<f64>::eye(m) - moment;
    Ok(step.dot(w) * mu)
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs the ACY rule on raw (centered, per-channel standardized) mixtures.
///
/// Each iteration reads `y` for the batch through the backend, computes the
/// update digitally and writes `W + ΔW` back. Stops when `‖ΔW‖_F < tol`.
pub fn run_acy(
    x: &SignalMatrix,
    cfg: &IcaConfig,
    backend: &mut dyn WeightBackend,
) -> Result<IcaOutcome> {
    cfg.validate()?;
    let n = x.channels();
    if backend.shape() != (n, n) {
        return Err(Error::dims(
            format!("{n}x{n} backend"),
            format!("{}x{}", backend.shape().0, backend.shape().1),
        ));
    }
    let (centered, _) = center(x)?;
    let std: Array1<f64> = centered
        .data()
        .map_axis(Axis(1), |r| (r.dot(&r) / r.len() as f64).sqrt());
    if std.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate("a mixture channel has zero variance".into()));
    }
    let scaled = centered.data() / &std.view().insert_axis(Axis(1));
    let samples = scaled.ncols();
    let batch = if cfg.batch_size == 0 {
        samples
    } else {
        cfg.batch_size.min(samples)
    };

    backend.store(&(Array2::<f64>::eye(n) * INITIAL_SCALE))?;
    let mut w = backend.load();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut cursor = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        let end = (cursor + batch).min(samples);
        let y = backend.forward(scaled.slice(s![.., cursor..end]))?;
        cursor = if end == samples { 0 } else { end };

        let delta = acy_update(&w, &y, cfg.learning_rate)?;
        let size = frobenius(&delta);
        if !size.is_finite() {
            return Err(Error::Convergence(format!(
                "ACY diverged at iteration {it}; lower the learning rate"
            )));
        }
        backend.store(&(&w + &delta))?;
        w = backend.load();
        converged = size < cfg.tol;
        if keep_trace(it, cfg.trace_every, converged || it == cfg.max_iters) {
            trace.push(TracePoint {
                component: None,
                iteration: it,
                value: size,
            });
        }
        if converged {
            break;
        }
    }
    if !converged {
        log::warn!("ACY did not converge in {} iterations", cfg.max_iters);
    }
    if backend.clip_events() > 0 {
        log::warn!("{} ACY weight writes were clipped to the device range", backend.clip_events());
    }

    let outputs = backend.forward(scaled.view())?;
    Ok(IcaOutcome {
        unmixing: &w / &std.view().insert_axis(Axis(0)),
        weights: w,
        outputs: SignalMatrix::new(outputs, SignalRole::Outputs)?,
        converged,
        iterations,
        trace,
        clipped: backend.clip_events(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ica::{acy_activation, Algorithm, BackendKind, IdealBackend};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    #[test]
    fn zero_rate_gives_zero_update() {
        let w = array![[1.0, 0.2], [0.1, 0.9]];
        let y = array![[0.3, -0.4, 1.2], [0.5, 0.1, -0.7]];
        let d = acy_update(&w, &y, 0.0).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_fixed_point_gives_zero() {
        // y with E[g(y) yᵀ] = I exactly: one sample per channel at c, with g(c) c = 2
        let c = {
            let (mut a, mut b) = (1.0f64, 2.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if acy_activation(mid) * mid < 2.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            0.5 * (a + b)
        };
        let y = array![[c, 0.0], [0.0, c]];
        let w = array![[0.3, -0.1], [0.2, 0.5]];
        let d = acy_update(&w, &y, 0.05).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12), "{d}");
    }

    #[test]
    fn single_sample_matches_hand_arithmetic() {
        let w = array![[1.0, 0.5], [-0.25, 2.0]];
        let y = array![[0.4], [-0.9]];
        let mu = 0.01;
        let g = [acy_activation(0.4), acy_activation(-0.9)];
        let yv = [0.4, -0.9];
        let mut expected = Array2::<f64>::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    let ident = if i == k { 1.0 } else { 0.0 };
                    acc += (ident - g[i] * yv[k]) * w[[k, j]];
                }
                expected[[i, j]] = mu * acc;
            }
        }
        let got = acy_update(&w, &y, mu).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
        assert!(acy_update(&w, &array![[0.1]], mu).is_err());
    }

    #[test]
    fn run_separates_uniform_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let s = Array2::from_shape_fn((2, 4000), |_| u.sample(&mut rng));
        let a = array![[0.7, 0.3], [0.3, 0.7]];
        let x = SignalMatrix::new(a.dot(&s), SignalRole::Mixtures).unwrap();
        let cfg = IcaConfig::new(Algorithm::Acy, BackendKind::Ideal);
        let out = run_acy(&x, &cfg, &mut IdealBackend::new(2, 2)).unwrap();
        assert!(out.converged, "{:?}", out.trace.last());
        let g = out.unmixing.dot(&a);
        for row in g.rows() {
            let big = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let small = row.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            assert!(small / big < 0.05, "{g}");
        }
    }
}
