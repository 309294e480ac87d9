//! Per-voxel fractal-dimension maps.
//!
//! Every voxel of every frame gets the Hurst index of the cuboid window
//! centered on it, mapped to a fractal dimension `m + 1 − h`. The window
//! variogram at lag `s` along axis `a` is a box sum of `|v(p) − v(p + s·e_a)|`
//! over the pair origins that keep both ends inside the window, so each
//! (lag, axis) pair costs one difference volume and three separable box-sum
//! passes instead of a full window scan per voxel. Box sums are accumulated
//! directly (no prefix sums), so a voxel's value depends only on the samples
//! inside its window and is bit-identical under any partitioning.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{pad_frame, Padding};
use crate::hurst::{fit_log_log, HurstClamp, VariogramFit};
use crate::volume::{Label, Mask4, Volume4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractalMapConfig {
    /// Odd window extents along x, y, z.
    pub window: [usize; 3],
    /// Largest lag; lags run 1..=scales.
    pub scales: usize,
    pub padding: Padding,
    pub clamp: HurstClamp,
    /// Euclidean dimension used in `fd = m + 1 − h`.
    pub euclidean_m: u32,
}

impl Default for FractalMapConfig {
    fn default() -> Self {
        Self {
            window: [7, 9, 7],
            scales: 4,
            padding: Padding::Mirror,
            clamp: HurstClamp::default(),
            euclidean_m: 2,
        }
    }
}

impl FractalMapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.iter().any(|&w| w < 3 || w % 2 == 0) {
            return Err(Error::Config(format!(
                "window extents must be odd and >= 3, got {:?}",
                self.window
            )));
        }
        let min_extent = *self.window.iter().min().unwrap();
        if self.scales < 2 || self.scales >= min_extent {
            return Err(Error::Config(format!(
                "scales must be in 2..{min_extent} for window {:?}, got {}",
                self.window, self.scales
            )));
        }
        if !(1..=3).contains(&self.euclidean_m) {
            return Err(Error::Config(format!(
                "euclidean_m must be 1, 2 or 3, got {}",
                self.euclidean_m
            )));
        }
        HurstClamp::new(self.clamp.min, self.clamp.max)?;
        Ok(())
    }

    /// Canonical one-line description; models trained on one map
    /// configuration record it so mismatched maps are refused.
    pub fn fingerprint(&self) -> String {
        let [wx, wy, wz] = self.window;
        format!(
            "window={wx},{wy},{wz};scales={};pad={};h_clamp={},{};m={}",
            self.scales, self.padding, self.clamp.min, self.clamp.max, self.euclidean_m
        )
    }

    pub fn parse_fingerprint(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad map configuration `{s}`"));
        let mut cfg = FractalMapConfig::default();
        for part in s.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let nums = || -> Result<Vec<f64>> {
                v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect()
            };
            match k.trim() {
                "window" => {
                    let n = nums()?;
                    if n.len() != 3 {
                        return Err(bad());
                    }
                    cfg.window = [n[0] as usize, n[1] as usize, n[2] as usize];
                }
                "scales" => cfg.scales = v.trim().parse().map_err(|_| bad())?,
                "pad" => cfg.padding = v.trim().parse()?,
                "h_clamp" => {
                    let n = nums()?;
                    if n.len() != 2 {
                        return Err(bad());
                    }
                    cfg.clamp = HurstClamp::new(n[0], n[1])?;
                }
                "m" => cfg.euclidean_m = v.trim().parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fd_range(&self) -> (f64, f64) {
        let top = self.euclidean_m as f64 + 1.0;
        (top - self.clamp.max, top - self.clamp.min)
    }
}

/// Fractal-dimension volume and the per-voxel log-log residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct FractalMap {
    pub fd: Volume4,
    pub rss: Volume4,
    pub config: FractalMapConfig,
}

/// Sums `len`-long runs along `axis` ("valid" mode): the output is shorter
/// by `len − 1` along that axis.
fn box_pass(src: &[f64], dims: [usize; 3], axis: usize, len: usize) -> (Vec<f64>, [usize; 3]) {
    let mut od = dims;
    od[axis] = dims[axis] + 1 - len;
    let [nx, ny, _] = dims;
    let [ox, oy, oz] = od;
    let mut out = vec![0.0; ox * oy * oz];
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    out.par_chunks_mut(ox * oy).enumerate().for_each(|(z, plane)| {
        for y in 0..oy {
            for x in 0..ox {
                let base = x + nx * (y + ny * z);
                let mut acc = 0.0;
                for k in 0..len {
                    acc += src[base + k * stride];
                }
                plane[x + ox * y] = acc;
            }
        }
    });
    (out, od)
}

/// `|P(p) − P(p + s·e_axis)|` for every p where both ends exist.
fn abs_diff(src: &[f64], dims: [usize; 3], axis: usize, lag: usize) -> (Vec<f64>, [usize; 3]) {
    let mut od = dims;
    od[axis] = dims[axis] - lag;
    let [nx, ny, _] = dims;
    let [ox, oy, oz] = od;
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    } * lag;
    let mut out = vec![0.0; ox * oy * oz];
    out.par_chunks_mut(ox * oy).enumerate().for_each(|(z, plane)| {
        for y in 0..oy {
            for x in 0..ox {
                let i = x + nx * (y + ny * z);
                plane[x + ox * y] = (src[i + stride] - src[i]).abs();
            }
        }
    });
    (out, od)
}

/// Window mad for every voxel and lag: `mads[s - 1][voxel]`.
pub(crate) fn window_mads(frame: &[f32], dims: [usize; 3], cfg: &FractalMapConfig) -> Vec<Vec<f64>> {
    let w = cfg.window;
    let pad = [w[0] / 2, w[1] / 2, w[2] / 2];
    let as_f64: Vec<f64> = frame.iter().map(|&v| v as f64).collect();
    let (padded, pd) = pad_frame(&as_f64, dims, pad, cfg.padding);
    let n = dims.iter().product::<usize>();

    (1..=cfg.scales)
        .map(|s| {
            let mut total = vec![0.0; n];
            let mut count = 0usize;
            for axis in 0..3 {
                if w[axis] <= s {
                    continue;
                }
                let mut lens = w;
                lens[axis] -= s;
                count += lens.iter().product::<usize>();
                let (d, dd) = abs_diff(&padded, pd, axis, s);
                let (bx, bxd) = box_pass(&d, dd, 0, lens[0]);
                let (by, byd) = box_pass(&bx, bxd, 1, lens[1]);
                let (bz, bzd) = box_pass(&by, byd, 2, lens[2]);
                debug_assert_eq!(bzd, dims);
                total.par_iter_mut().zip(bz.par_iter()).for_each(|(t, b)| *t += b);
            }
            let inv = 1.0 / count as f64;
            total.par_iter_mut().for_each(|t| *t *= inv);
            total
        })
        .collect()
}

fn fit_voxel(ln_d: &[f64], mads: &[f64], cfg: &FractalMapConfig) -> VariogramFit {
    // A window with a single nonzero lag is as flat as the fit can tell.
    fit_log_log(ln_d, mads, cfg.clamp).unwrap_or_else(|_| VariogramFit::degenerate(cfg.clamp))
}

fn map_frame(frame: &[f32], dims: [usize; 3], cfg: &FractalMapConfig, fd: &mut [f32], rss: &mut [f32]) {
    let mads = window_mads(frame, dims, cfg);
    let ln_d: Vec<f64> = (1..=cfg.scales).map(|s| (s as f64).ln()).collect();
    let top = cfg.euclidean_m as f64 + 1.0;
    let plane = dims[0] * dims[1];
    fd.par_chunks_mut(plane)
        .zip(rss.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(z, (fd_plane, rss_plane))| {
            let mut buf = vec![0.0; cfg.scales];
            for i in 0..plane {
                let v = z * plane + i;
                for (b, m) in buf.iter_mut().zip(&mads) {
                    *b = m[v];
                }
                let fit = fit_voxel(&ln_d, &buf, cfg);
                fd_plane[i] = (top - fit.h) as f32;
                rss_plane[i] = fit.rss as f32;
            }
        });
}

/// Builds the fractal-dimension map of every frame of `vol`.
pub fn compute_fractal_map(vol: &Volume4, cfg: &FractalMapConfig) -> Result<FractalMap> {
    cfg.validate()?;
    let d = vol.dims();
    let dims = d.spatial();
    let n = d.frame_len();
    let mut fd = vec![0f32; d.len()];
    let mut rss = vec![0f32; d.len()];
    for t in 0..d.nt {
        map_frame(
            vol.frame(t),
            dims,
            cfg,
            &mut fd[t * n..(t + 1) * n],
            &mut rss[t * n..(t + 1) * n],
        );
    }
    Ok(FractalMap {
        fd: Volume4::new(*vol.geometry(), fd)?,
        rss: Volume4::new(*vol.geometry(), rss)?,
        config: *cfg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl MapStats {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let vals: Vec<f64> = values.into_iter().collect();
        if vals.is_empty() {
            return Err(Error::Domain("statistics of an empty region".into()));
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let variance = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let (min, max) = vals
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(Self {
            mean,
            variance,
            min,
            max,
            count: vals.len(),
        })
    }
}

/// fd statistics over voxels of `region` carrying `label`.
pub fn map_statistics(map: &FractalMap, region: &Mask4, label: Label) -> Result<MapStats> {
    if !map.fd.geometry().same_grid(region.geometry()) {
        return Err(Error::DimMismatch(format!(
            "map {:?} vs region {:?}",
            map.fd.dims(),
            region.dims()
        )));
    }
    let code = label.code();
    MapStats::of(
        map.fd
            .data()
            .iter()
            .zip(region.labels())
            .filter(|(_, &l)| l == code)
            .map(|(&v, _)| v as f64),
    )
}
