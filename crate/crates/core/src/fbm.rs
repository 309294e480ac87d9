//! Fractional Brownian motion: theoretical covariance, discrete 1-D paths from
//! the truncated moving-average representation, and isotropic 3-D fields by
//! spectral synthesis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{Dims4, Geometry, Volume4};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussians(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst index must lie in (0, 1), got {h}")))
    }
}

/// E[B_H(s) B_H(t)] = ½(|t|^{2h} + |s|^{2h} − |t−s|^{2h}).
pub fn fbm_covariance(s: f64, t: f64, h: f64) -> Result<f64> {
    check_hurst(h)?;
    let e = 2.0 * h;
    Ok(0.5 * (t.abs().powf(e) + s.abs().powf(e) - (t - s).abs().powf(e)))
}

/// Covariance of two lag-`l` increments whose start indices differ by `k`.
pub fn increment_covariance(l: f64, k: f64, h: f64, sigma: f64) -> Result<f64> {
    check_hurst(h)?;
    let e = 2.0 * h;
    Ok(0.5 * sigma * sigma * ((k - l).abs().powf(e) + (k + l).abs().powf(e) - 2.0 * k.abs().powf(e)))
}

/// Second-order variogram σ²|l|^{2h}.
pub fn increment_variance(l: f64, h: f64, sigma: f64) -> Result<f64> {
    increment_covariance(l, 0.0, h, sigma)
}

/// A sampled discrete fBm path anchored at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub h: f64,
    pub sigma: f64,
    pub samples: Vec<f64>,
    pub truncation_b: usize,
    pub seed: u64,
}

/// Discretized moving-average kernel. The singular cell at zero lag is
/// replaced by the kernel's mean over [0, 1], which is 1 when the exponent
/// vanishes, so the H = ½ path reduces to a plain random walk.
fn kernel(x: usize, alpha: f64) -> f64 {
    if x == 0 {
        1.0 / (alpha + 1.0)
    } else {
        (x as f64).powf(alpha)
    }
}

fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Path from explicit history (`b1`, length b + 1, b1[m] = B₁(−m)) and
/// innovation (`b2`, length n) noise.
pub(crate) fn fbm_from_noise(n: usize, h: f64, sigma: f64, b1: &[f64], b2: &[f64]) -> Vec<f64> {
    let b = b1.len() - 1;
    let alpha = h - 0.5;
    let g: Vec<f64> = (0..=n + b).map(|x| kernel(x, alpha)).collect();

    // Normalization: mean unit-increment variance of the unscaled process.
    let mut prefix = vec![0.0; n + b + 1];
    for j in 0..n + b {
        let dg = g[j + 1] - g[j];
        prefix[j + 1] = prefix[j] + dg * dg;
    }
    let g0sq = g[0] * g[0];
    let pairs = n.saturating_sub(1).max(1);
    let mean_var = (0..n.saturating_sub(1))
        .map(|i| prefix[i + b + 1] - prefix[i] + g0sq + prefix[i + 1])
        .sum::<f64>()
        / pairs as f64;
    let c_h = sigma / mean_var.sqrt();

    let len = next_pow2((n + b + 1).max(2 * n));
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let to_buf = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        for (dst, &src) in buf.iter_mut().zip(v) {
            dst.re = src;
        }
        buf
    };

    let mut gk = to_buf(&g);
    fwd.process(&mut gk);
    let mut gk_head = to_buf(&g[..n]);
    fwd.process(&mut gk_head);
    let mut n1 = to_buf(b1);
    fwd.process(&mut n1);
    let mut n2 = to_buf(b2);
    fwd.process(&mut n2);

    // history: Σ_m g(i+m) b1[m] (correlation); innovation: Σ_k g(i−k) b2[k].
    let mut acc: Vec<Complex<f64>> = (0..len)
        .map(|i| gk[i] * n1[i].conj() + gk_head[i] * n2[i])
        .collect();
    inv.process(&mut acc);
    let scale = c_h / len as f64;
    let x0 = acc[0].re;
    (0..n).map(|i| (acc[i].re - x0) * scale).collect()
}

/// Discrete fBm with `n` samples, history truncated at `b` steps.
pub fn synth_fbm_1d(n: usize, h: f64, b: usize, sigma: f64, seed: u64) -> Result<FbmPath> {
    check_hurst(h)?;
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let mut r = rng(seed);
    let b1 = gaussians(&mut r, b + 1);
    let b2 = gaussians(&mut r, n);
    Ok(FbmPath {
        h,
        sigma,
        samples: fbm_from_noise(n, h, sigma, &b1, &b2),
        truncation_b: b,
        seed,
    })
}

/// Default history length for `n` samples.
pub fn default_truncation(n: usize) -> usize {
    4 * n
}

fn fftfreq(i: usize, n: usize) -> f64 {
    if i <= (n - 1) / 2 {
        i as f64 / n as f64
    } else {
        (i as f64 - n as f64) / n as f64
    }
}

/// In-place 3-D FFT over an x-fastest buffer.
pub(crate) fn fft3(buf: &mut [Complex<f64>], dims: [usize; 3], dir: FftDirection) {
    let [nx, ny, nz] = dims;
    let mut planner = FftPlanner::<f64>::new();

    let fx = planner.plan_fft(nx, dir);
    for line in buf.chunks_exact_mut(nx) {
        fx.process(line);
    }

    let fy = planner.plan_fft(ny, dir);
    let mut line = vec![Complex::new(0.0, 0.0); ny];
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                line[y] = buf[x + nx * (y + ny * z)];
            }
            fy.process(&mut line);
            for y in 0..ny {
                buf[x + nx * (y + ny * z)] = line[y];
            }
        }
    }

    let fz = planner.plan_fft(nz, dir);
    let mut line = vec![Complex::new(0.0, 0.0); nz];
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                line[z] = buf[x + nx * (y + ny * z)];
            }
            fz.process(&mut line);
            for z in 0..nz {
                buf[x + nx * (y + ny * z)] = line[z];
            }
        }
    }
}

/// Gaussian field with amplitude spectrum (|k|² + k₀²)^{−(h + 3/2)/2}, zero
/// mean and unit variance. `k0 = 0` is the pure self-affine case; a positive
/// cutoff (cycles per voxel) decorrelates scales beyond ~1/k₀ while keeping
/// the short-lag scaling.
pub(crate) fn spectral_field(dims: [usize; 3], h: f64, k0: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    let mut buf: Vec<Complex<f64>> = gaussians(rng, n)
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    fft3(&mut buf, dims, FftDirection::Forward);

    let exponent = -(h + 1.5) / 2.0;
    let k0sq = k0 * k0;
    for z in 0..nz {
        let kz = fftfreq(z, nz);
        for y in 0..ny {
            let ky = fftfreq(y, ny);
            for x in 0..nx {
                let kx = fftfreq(x, nx);
                let k2 = kx * kx + ky * ky + kz * kz;
                let amp = if k2 > 0.0 { (k2 + k0sq).powf(exponent) } else { 0.0 };
                buf[x + nx * (y + ny * z)] *= amp;
            }
        }
    }
    fft3(&mut buf, dims, FftDirection::Inverse);

    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    standardize(&mut out);
    out
}

pub(crate) fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
}

/// Isotropic self-affine 3-D field with Hurst index `h`, normalized to zero
/// mean and unit variance, as a single-frame unit-spacing volume.
pub fn synth_fbm_field(dims: [usize; 3], h: f64, seed: u64) -> Result<Volume4> {
    check_hurst(h)?;
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::Domain(format!("field dims must be >= 2, got {dims:?}")));
    }
    let mut r = rng(seed);
    let field = spectral_field(dims, h, 0.0, &mut r);
    let geometry = Geometry::unit(Dims4::new(dims[0], dims[1], dims[2], 1))?;
    Volume4::new(geometry, field.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn covariance_reference_values() {
        assert_eq!(fbm_covariance(1.0, 1.0, 0.5).unwrap(), 1.0);
        assert!((fbm_covariance(1.0, 2.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(fbm_covariance(1.0, 2.0, 1.0).is_err());
        assert!(fbm_covariance(1.0, 2.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric(s in -50.0f64..50.0, t in -50.0f64..50.0, h in 0.01f64..0.99) {
            let a = fbm_covariance(s, t, h).unwrap();
            let b = fbm_covariance(t, s, h).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn covariance_diagonal_is_variance(t in -50.0f64..50.0, h in 0.01f64..0.99) {
            let c = fbm_covariance(t, t, h).unwrap();
            let v = t.abs().powf(2.0 * h);
            prop_assert!((c - v).abs() <= 1e-12 * (1.0 + v));
        }

        #[test]
        fn variogram_rescales_by_power_law(r in 0.1f64..20.0, l in 0.1f64..20.0, h in 0.01f64..0.99, sigma in 0.1f64..3.0) {
            let lhs = increment_variance(r * l, h, sigma).unwrap();
            let rhs = r.powf(2.0 * h) * increment_variance(l, h, sigma).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs);
        }
    }

    #[test]
    fn path_is_anchored_and_deterministic() {
        let a = synth_fbm_1d(256, 0.7, 1024, 1.0, 9).unwrap();
        let b = synth_fbm_1d(256, 0.7, 1024, 1.0, 9).unwrap();
        let c = synth_fbm_1d(256, 0.7, 1024, 1.0, 10).unwrap();
        assert_eq!(a.samples[0], 0.0);
        assert_eq!(a, b);
        assert_ne!(a.samples, c.samples);
        assert_eq!(a.samples.len(), 256);
    }

    #[test]
    fn half_hurst_is_a_scaled_random_walk() {
        for b in [0usize, 5, 300] {
            let n = 200;
            let sigma = 1.7;
            let mut r = rng(3);
            let b1 = gaussians(&mut r, b + 1);
            let b2 = gaussians(&mut r, n);
            let path = fbm_from_noise(n, 0.5, sigma, &b1, &b2);
            let mut walk = 0.0;
            for i in 1..n {
                walk += sigma * b2[i];
                assert!((path[i] - walk).abs() < 1e-9, "b={b} i={i}");
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(synth_fbm_1d(1, 0.5, 4, 1.0, 0).is_err());
        assert!(synth_fbm_1d(16, 1.0, 4, 1.0, 0).is_err());
        assert!(synth_fbm_1d(16, 0.5, 4, 0.0, 0).is_err());
        assert!(synth_fbm_field([1, 4, 4], 0.5, 0).is_err());
        assert!(synth_fbm_field([4, 4, 4], 0.0, 0).is_err());
    }

    #[test]
    fn unit_increment_scale_tracks_sigma() {
        let n = 8192;
        let sigma = 2.5;
        let mut acc = 0.0;
        let mut count = 0usize;
        for seed in 0..10 {
            let p = synth_fbm_1d(n, 0.3, 4 * n, sigma, seed).unwrap();
            for w in p.samples.windows(2) {
                acc += (w[1] - w[0]).powi(2);
                count += 1;
            }
        }
        let sd = (acc / count as f64).sqrt();
        assert!((sd - sigma).abs() < 0.05 * sigma, "sd = {sd}");
    }

    #[test]
    fn field_dims_determinism_and_normalization() {
        let a = synth_fbm_field([8, 6, 5], 0.6, 1).unwrap();
        let b = synth_fbm_field([8, 6, 5], 0.6, 1).unwrap();
        assert_eq!(a.dims(), Dims4::new(8, 6, 5, 1));
        assert_eq!(a, b);
        let n = a.data().len() as f64;
        let mean = a.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = a.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-5);
    }
}
