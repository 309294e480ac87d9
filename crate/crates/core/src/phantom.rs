//! Synthetic contracting-ventricle sequences with exact labels.
//!
//! The cavity is a half-ellipsoid standing on a flat base plane and opening
//! toward +z; the myocardium is a shell of constant thickness around it.
//! Each class gets a multiplicative speckle whose envelope is built from fBm
//! fields of the class's Hurst index.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{rng, spectral_field};
use crate::volume::{Dims4, Geometry, Label, Mask4, Volume4};

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomConfig {
    pub dims: Dims4,
    pub spacing_mm: [f64; 3],
    pub frame_interval_s: f64,
    /// End-diastolic cavity semi-axes (mm).
    pub endo_semi_axes_mm: [f64; 3],
    pub wall_thickness_mm: f64,
    /// z of the flat base plane (mm).
    pub base_z_mm: f64,
    /// Peak fractional shrink of the cavity semi-axes.
    pub contraction: f64,
    /// Hurst index of blood-pool and background texture.
    pub h_blood: f64,
    pub h_myo: f64,
    /// Mean intensities of background, blood pool and myocardium.
    pub means: [f64; 3],
    /// Nakagami shape m; the envelope sums 2m squared fields, m = 1 is Rayleigh.
    pub speckle_shape: u32,
    /// Spectral cutoff of the texture fields (cycles per voxel).
    pub texture_cutoff: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            dims: Dims4::new(96, 96, 96, 8),
            spacing_mm: [1.0; 3],
            frame_interval_s: 0.05,
            endo_semi_axes_mm: [25.0, 25.0, 45.0],
            wall_thickness_mm: 10.0,
            base_z_mm: 10.0,
            contraction: 0.26,
            h_blood: 0.9,
            h_myo: 0.2,
            means: [40.0, 50.0, 100.0],
            speckle_shape: 1,
            texture_cutoff: 0.06,
            seed: 42,
        }
    }
}

impl PhantomConfig {
    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.dims, self.spacing_mm, self.frame_interval_s)
    }

    fn center_mm(&self) -> [f64; 2] {
        [
            (self.dims.nx - 1) as f64 * self.spacing_mm[0] / 2.0,
            (self.dims.ny - 1) as f64 * self.spacing_mm[1] / 2.0,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.wall_thickness_mm > 0.0) {
            return bad(format!("wall thickness must be positive, got {}", self.wall_thickness_mm));
        }
        if !(0.0..1.0).contains(&self.contraction) {
            return bad(format!("contraction must lie in [0, 1), got {}", self.contraction));
        }
        for h in [self.h_blood, self.h_myo] {
            if !(h > 0.0 && h < 1.0) {
                return bad(format!("Hurst index must lie in (0, 1), got {h}"));
            }
        }
        if self.endo_semi_axes_mm.iter().any(|&a| !(a > 0.0)) {
            return bad("cavity semi-axes must be positive".into());
        }
        if self.means.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
            return bad("class means must be positive".into());
        }
        if self.speckle_shape == 0 {
            return bad("speckle shape must be at least 1".into());
        }
        if !(self.texture_cutoff >= 0.0) {
            return bad("texture cutoff must be nonnegative".into());
        }
        if self.dims.nx < 2 || self.dims.ny < 2 || self.dims.nz < 2 {
            return bad("phantom needs at least 2 voxels per axis".into());
        }
        let c = self.center_mm();
        let th = self.wall_thickness_mm;
        let a = self.endo_semi_axes_mm;
        let top = [
            (g.dims.nx - 1) as f64 * g.spacing_mm[0],
            (g.dims.ny - 1) as f64 * g.spacing_mm[1],
            (g.dims.nz - 1) as f64 * g.spacing_mm[2],
        ];
        if c[0] - a[0] - th < 0.0
            || c[0] + a[0] + th > top[0]
            || c[1] - a[1] - th < 0.0
            || c[1] + a[1] + th > top[1]
            || self.base_z_mm < 0.0
            || self.base_z_mm + a[2] + th > top[2]
        {
            return bad("ventricle plus wall does not fit inside the volume".into());
        }
        Ok(())
    }

    /// Cavity scale factor of frame `t`: 1 − contraction·sin²(πt/nt).
    pub fn scale(&self, t: usize) -> f64 {
        let s = (std::f64::consts::PI * t as f64 / self.dims.nt as f64).sin();
        1.0 - self.contraction * s * s
    }

    /// Cavity semi-axes of frame `t` (mm).
    pub fn endo_axes(&self, t: usize) -> [f64; 3] {
        self.endo_semi_axes_mm.map(|a| a * self.scale(t))
    }

    /// Closed-form cavity volume of frame `t`, ⅔π·a·b·c.
    pub fn analytic_cavity_volume(&self, t: usize) -> f64 {
        let [a, b, c] = self.endo_axes(t);
        2.0 / 3.0 * std::f64::consts::PI * a * b * c
    }
}

/// E[√χ²_{2m}] = √2 Γ(m + ½) / Γ(m).
fn envelope_mean(m: u32) -> f64 {
    let mut ratio = std::f64::consts::PI.sqrt() / 2.0;
    for k in 1..m {
        ratio *= (k as f64 + 0.5) / k as f64;
    }
    std::f64::consts::SQRT_2 * ratio
}

fn labels_for_frame(cfg: &PhantomConfig, t: usize) -> Vec<u8> {
    let d = cfg.dims;
    let [sx, sy, sz] = cfg.spacing_mm;
    let c = cfg.center_mm();
    let a = cfg.endo_axes(t);
    let th = cfg.wall_thickness_mm;
    let e = [a[0] + th, a[1] + th, a[2] + th];
    let mut out = Vec::with_capacity(d.frame_len());
    for z in 0..d.nz {
        let dz = z as f64 * sz - cfg.base_z_mm;
        for y in 0..d.ny {
            let dy = y as f64 * sy - c[1];
            for x in 0..d.nx {
                let dx = x as f64 * sx - c[0];
                let label = if dz < 0.0 {
                    Label::Background
                } else if (dx / a[0]).powi(2) + (dy / a[1]).powi(2) + (dz / a[2]).powi(2) <= 1.0 {
                    Label::BloodPool
                } else if (dx / e[0]).powi(2) + (dy / e[1]).powi(2) + (dz / e[2]).powi(2) <= 1.0 {
                    Label::Myocardium
                } else {
                    Label::Background
                };
                out.push(label.code());
            }
        }
    }
    out
}

fn envelope(dims: [usize; 3], h: f64, cfg: &PhantomConfig, r: &mut ChaCha8Rng) -> Vec<f64> {
    let mut sum = vec![0.0; dims.iter().product()];
    for _ in 0..2 * cfg.speckle_shape {
        let f = spectral_field(dims, h, cfg.texture_cutoff, r);
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v * v;
        }
    }
    let norm = envelope_mean(cfg.speckle_shape);
    sum.iter().map(|s| s.sqrt() / norm).collect()
}

fn frame(cfg: &PhantomConfig, t: usize) -> (Vec<f32>, Vec<u8>) {
    let labels = labels_for_frame(cfg, t);
    let dims = cfg.dims.spatial();
    let mut r = rng(cfg.seed);
    r.set_stream(t as u64);
    let smooth = envelope(dims, cfg.h_blood, cfg, &mut r);
    let rough = envelope(dims, cfg.h_myo, cfg, &mut r);
    let values = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let v = match Label::from_code(l).expect("generated label") {
                Label::Background => cfg.means[0] * smooth[i],
                Label::BloodPool => cfg.means[1] * smooth[i],
                Label::Myocardium => cfg.means[2] * rough[i],
            };
            v as f32
        })
        .collect();
    (values, labels)
}

/// Intensity sequence and exact label mask. Frames use independent random
/// streams derived from the seed, so the output does not depend on how many
/// threads generate them.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<(Volume4, Mask4)> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let frames: Vec<(Vec<f32>, Vec<u8>)> = (0..cfg.dims.nt).into_par_iter().map(|t| frame(cfg, t)).collect();
    let mut data = Vec::with_capacity(g.dims.len());
    let mut labels = Vec::with_capacity(g.dims.len());
    for (v, l) in frames {
        data.extend(v);
        labels.extend(l);
    }
    Ok((Volume4::new(g, data)?, Mask4::new(g, labels)?))
}

/// Exact label mask alone; cheap, since no texture is synthesized.
pub fn phantom_mask(cfg: &PhantomConfig) -> Result<Mask4> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let labels: Vec<u8> = (0..cfg.dims.nt).flat_map(|t| labels_for_frame(cfg, t)).collect();
    Mask4::new(g, labels)
}
