//! Five texture statistics of a local patch of the fractal-dimension map:
//! mean, variance, lacunarity, skewness and kurtosis. All moments use
//! population denominators.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fractal_map::FractalMap;
use crate::grid::pad_frame;

pub const N_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub fd_mean: f64,
    pub fd_var: f64,
    pub lacunarity: f64,
    pub skewness: f64,
    /// Pearson kurtosis (3 for a normal distribution).
    pub kurtosis: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [self.fd_mean, self.fd_var, self.lacunarity, self.skewness, self.kurtosis]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        Self {
            fd_mean: a[0],
            fd_var: a[1],
            lacunarity: a[2],
            skewness: a[3],
            kurtosis: a[4],
        }
    }
}

/// Second moment over squared first moment, E[F²] / E[F]².
pub fn lacunarity(patch: &[f64]) -> Result<f64> {
    Ok(patch_features(patch)?.lacunarity)
}

/// Statistics of an arbitrary multiset of map values. A patch whose values
/// are all equal has variance 0, skewness 0 and kurtosis 3.
pub fn patch_features(values: &[f64]) -> Result<FeatureVector> {
    let first = *values
        .first()
        .ok_or_else(|| Error::Domain("empty patch".into()))?;
    if values.iter().all(|&v| v == first) {
        if first == 0.0 {
            return Err(Error::Domain("lacunarity undefined for zero-mean patch".into()));
        }
        return Ok(FeatureVector {
            fd_mean: first,
            fd_var: 0.0,
            lacunarity: 1.0,
            skewness: 0.0,
            kurtosis: 3.0,
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Domain("lacunarity undefined for zero-mean patch".into()));
    }
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    Ok(FeatureVector {
        fd_mean: mean,
        fd_var: m2,
        // E[F²]/E[F]² = 1 + var/mean²
        lacunarity: 1.0 + m2 / (mean * mean),
        skewness: m3 / m2.powf(1.5),
        kurtosis: m4 / (m2 * m2),
    })
}

fn check_patch(patch: [usize; 3]) -> Result<()> {
    if patch.iter().any(|&p| p == 0 || p % 2 == 0) {
        return Err(Error::Config(format!("patch extents must be odd and positive, got {patch:?}")));
    }
    Ok(())
}

/// Features of the `patch`-sized block of frame `t` centered at `center`;
/// reads past the border follow the map's padding mode.
pub fn extract_features(
    map: &FractalMap,
    t: usize,
    center: [usize; 3],
    patch: [usize; 3],
) -> Result<FeatureVector> {
    check_patch(patch)?;
    let d = map.fd.dims();
    let n = d.spatial();
    let padding = map.config.padding;
    let frame = map.fd.frame(t);
    let mut values = Vec::with_capacity(patch.iter().product());
    for k in 0..patch[2] {
        let z = padding.fold(center[2] as isize + k as isize - (patch[2] / 2) as isize, n[2]);
        for j in 0..patch[1] {
            let y = padding.fold(center[1] as isize + j as isize - (patch[1] / 2) as isize, n[1]);
            for i in 0..patch[0] {
                let x = padding.fold(center[0] as isize + i as isize - (patch[0] / 2) as isize, n[0]);
                values.push(frame[x + n[0] * (y + n[1] * z)] as f64);
            }
        }
    }
    patch_features(&values)
}

/// Features for every voxel of frame `t`, x-fastest.
pub fn frame_features(map: &FractalMap, t: usize, patch: [usize; 3]) -> Result<Vec<FeatureVector>> {
    check_patch(patch)?;
    let d = map.fd.dims();
    let dims = d.spatial();
    let pad = [patch[0] / 2, patch[1] / 2, patch[2] / 2];
    let frame: Vec<f64> = map.fd.frame(t).iter().map(|&v| v as f64).collect();
    let (padded, pd) = pad_frame(&frame, dims, pad, map.config.padding);
    let plane = dims[0] * dims[1];
    let per_plane: Vec<Result<Vec<FeatureVector>>> = (0..dims[2])
        .into_par_iter()
        .map(|z| {
            let mut buf = Vec::with_capacity(patch.iter().product());
            let mut out = Vec::with_capacity(plane);
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    buf.clear();
                    for k in 0..patch[2] {
                        for j in 0..patch[1] {
                            let row = x + pd[0] * (y + j + pd[1] * (z + k));
                            buf.extend_from_slice(&padded[row..row + patch[0]]);
                        }
                    }
                    out.push(patch_features(&buf)?);
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(d.frame_len());
    for p in per_plane {
        all.extend(p?);
    }
    Ok(all)
}
