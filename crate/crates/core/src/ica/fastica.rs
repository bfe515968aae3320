use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    center, keep_trace, whiten, fastica_g, fastica_gprime, IcaConfig, IcaOutcome, SignalMatrix,
    SignalRole, TracePoint, WeightBackend,
};
use crate::error::{Error, Result};

/// Fixed-point update from precomputed projections `y = wᵀv`:
/// `E{v g(y)} - E{g'(y)} w`, normalized to unit length.
pub fn fastica_update(w: ArrayView1<f64>, v: &SignalMatrix, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    let data = v.data();
    if w.len() != data.nrows() || y.len() != data.ncols() {
        return Err(Error::dims(
            format!("w of length {} and y of length {}", data.nrows(), data.ncols()),
            format!("{} and {}", w.len(), y.len()),
        ));
    }
    let n = data.ncols() as f64;
    let g = y.mapv(fastica_g);
    let mean_gprime = y.iter().map(|&t| fastica_gprime(t)).sum::<f64>() / n;
    let next = data.dot(&g) / n - &(&w * mean_gprime);
    let norm = next.dot(&next).sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Convergence(format!("FastICA update has norm {norm}")));
    }
    Ok(next / norm)
}

/// One FastICA iteration on whitened data.
pub fn fastica_step(w: ArrayView1<f64>, v: &SignalMatrix) -> Result<Array1<f64>> {
    if w.len() != v.channels() {
        return Err(Error::dims(format!("w of length {}", v.channels()), w.len()));
    }
    let y = w.dot(v.data());
    fastica_update(w, v, y.view())
}

/// Gram–Schmidt: removes from row `k` its projection on rows `0..k`, then normalizes it.
pub fn decorrelate(w: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
    if k >= w.nrows() {
        return Err(Error::dims(format!("row index < {}", w.nrows()), k));
    }
    let mut out = w.clone();
    let original = w.row(k).to_owned();
    let mut row = original.clone();
    for p in 0..k {
        let prev = w.row(p);
        row = &row - &(&prev * prev.dot(&row));
    }
    let before = original.dot(&original).sqrt();
    let norm = row.dot(&row).sqrt();
    if !(norm > 1e-10 * before) || !(norm > 0.0) {
        return Err(Error::Degenerate(format!(
            "row {k} lies in the span of the previous rows"
        )));
    }
    out.row_mut(k).assign(&(row / norm));
    Ok(out)
}

fn random_unit(n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let w: Array1<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = w.dot(&w).sqrt();
        if norm > 1e-6 {
            return w / norm;
        }
    }
}

/// Deflationary FastICA with each component's weight vector held by `backend`.
///
/// The input is centered and whitened digitally. Every cycle the current `w` is
/// written to the backend, read back, and the projections `wᵀv` come from the
/// backend's forward pass. The backend stores weights in whitened coordinates.
pub fn run_fastica(
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
    let (v, whitening) = whiten(&centered)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // digital copy of the converged directions, used for deflation
    let mut found = Array2::<f64>::zeros((n, n));
    let mut trace = Vec::new();
    let mut converged = true;
    let mut iterations = 0;

    for p in 0..n {
        found.row_mut(p).assign(&random_unit(n, &mut rng));
        found = decorrelate(&found, p)?;
        let mut current = found.row(p).to_owned();
        let mut done = false;
        for it in 1..=cfg.max_iters {
            iterations += 1;
            backend.store_row(p, current.view())?;
            let held = backend.load_row(p);
            let y = backend.forward_row(p, v.data().view())?;
            let next = fastica_update(held.view(), &v, y.view())?;
            found.row_mut(p).assign(&next);
            found = decorrelate(&found, p)?;
            let next = found.row(p).to_owned();
            let lim = next.dot(&current).abs();
            done = lim > 1.0 - cfg.tol;
            if keep_trace(it, cfg.trace_every, done || it == cfg.max_iters) {
                trace.push(TracePoint {
                    component: Some(p),
                    iteration: it,
                    value: lim,
                });
            }
            current = next;
            if done {
                break;
            }
        }
        if !done {
            log::warn!("FastICA component {p} did not converge in {} iterations", cfg.max_iters);
            converged = false;
        }
        backend.store_row(p, current.view())?;
    }

    let weights = backend.load();
    let outputs = backend.forward(v.data().view())?;
    Ok(IcaOutcome {
        unmixing: weights.dot(&whitening.transform),
        weights,
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
    use crate::ica::{Algorithm, BackendKind, IdealBackend};
    use approx::assert_relative_eq;
    use ndarray::array;
    use ndarray::Axis;
    use rand_distr::Uniform;

    fn row_norms(w: &Array2<f64>) -> Array1<f64> {
        w.map_axis(Axis(1), |r| r.dot(&r).sqrt())
    }

    fn uniform_sources(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-3f64.sqrt(), 3f64.sqrt()).unwrap();
        Array2::from_shape_fn((2, n), |_| u.sample(&mut rng))
    }

    #[test]
    fn step_output_is_unit() {
        let v = SignalMatrix::new(uniform_sources(500, 1), SignalRole::Whitened).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let w = random_unit(2, &mut rng);
            let next = fastica_step(w.view(), &v).unwrap();
            assert!((next.dot(&next).sqrt() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_sample_step_matches_hand_arithmetic() {
        let v = SignalMatrix::new(array![[0.8], [-1.1]], SignalRole::Whitened).unwrap();
        let w = array![0.6, 0.8];
        let y: f64 = 0.6 * 0.8 + 0.8 * -1.1;
        let g = y * (-y * y / 2.0).exp();
        let gp = (1.0 - y * y) * (-y * y / 2.0).exp();
        let raw = [0.8 * g - gp * 0.6, -1.1 * g - gp * 0.8];
        let norm = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        let next = fastica_step(w.view(), &v).unwrap();
        assert_relative_eq!(next[0], raw[0] / norm, max_relative = 1e-14);
        assert_relative_eq!(next[1], raw[1] / norm, max_relative = 1e-14);
    }

    #[test]
    fn step_converges_near_source_direction() {
        // independent unit-variance uniforms are already white
        let v = SignalMatrix::new(uniform_sources(20_000, 4), SignalRole::Whitened).unwrap();
        let mut w: Array1<f64> = array![0.95, 0.3];
        w /= w.dot(&w).sqrt();
        let mut lim = 0.0;
        for _ in 0..100 {
            let next = fastica_step(w.view(), &v).unwrap();
            lim = next.dot(&w).abs();
            w = next;
            if lim > 1.0 - 1e-10 {
                break;
            }
        }
        assert!(lim > 1.0 - 1e-10);
        assert!(w[0].abs() > 0.99);
    }

    #[test]
    fn fixed_point_is_stationary() {
        // a single whitened channel: w = ±1 is the only unit vector
        let v = SignalMatrix::new(uniform_sources(1000, 9).slice(ndarray::s![0..1, ..]).to_owned(), SignalRole::Whitened)
            .unwrap();
        let (v, _) = whiten(&center(&v).unwrap().0).unwrap();
        let next = fastica_step(array![1.0].view(), &v).unwrap();
        assert_relative_eq!(next[0].abs(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn decorrelate_examples() {
        let w = array![[3.0, 4.0], [1.0, 1.0]];
        let d = decorrelate(&w, 0).unwrap();
        assert_relative_eq!(d[[0, 0]], 0.6);
        assert_relative_eq!(d[[0, 1]], 0.8);
        assert_eq!(d.row(1), w.row(1));

        let parallel = array![[0.6, 0.8], [1.2, 1.6]];
        assert!(matches!(decorrelate(&parallel, 1), Err(Error::Degenerate(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let mut w = Array2::zeros((2, 2));
            w.row_mut(0).assign(&random_unit(2, &mut rng));
            w.row_mut(1).assign(&random_unit(2, &mut rng));
            let w = decorrelate(&w, 1).unwrap();
            let gram = w.dot(&w.t());
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[[i, j]] - expect).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn run_separates_uniform_mixture() {
        let s = uniform_sources(5000, 21);
        let a = array![[0.7, 0.3], [0.3, 0.7]];
        let x = SignalMatrix::new(a.dot(&s), SignalRole::Mixtures).unwrap();
        let cfg = IcaConfig::new(Algorithm::FastIca, BackendKind::Ideal);
        let mut backend = IdealBackend::new(2, 2);
        let out = run_fastica(&x, &cfg, &mut backend).unwrap();
        assert!(out.converged);
        let norms = row_norms(&out.weights);
        assert!(norms.iter().all(|n| (n - 1.0).abs() <= 1e-12));
        // the global transform should be a scaled permutation
        let g = out.unmixing.dot(&a);
        for row in g.rows() {
            let big = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let small = row.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            assert!(small / big < 0.05, "{g}");
        }
    }
}
