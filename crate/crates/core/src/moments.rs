//! Slice-wise second-order moments, moment-equivalent ellipses and
//! rectangles, and disc-stack volumes.

use crate::error::{Error, Result};
use crate::volume::{Label, Mask4};

/// Binary 2-D field, x-fastest. Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slice2 {
    nx: usize,
    ny: usize,
    data: Vec<bool>,
}

impl Slice2 {
    pub fn new(nx: usize, ny: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != nx * ny {
            return Err(Error::Size(format!("{}x{} slice needs {} pixels, got {}", nx, ny, nx * ny, data.len())));
        }
        Ok(Self { nx, ny, data })
    }

    pub fn empty(nx: usize, ny: usize) -> Self {
        Self { nx, ny, data: vec![false; nx * ny] }
    }

    pub fn from_fn(nx: usize, ny: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                data.push(f(x, y));
            }
        }
        Self { nx, ny, data }
    }

    /// Slice `z` of frame `t`, foreground where the label is in `codes`.
    pub fn from_mask(mask: &Mask4, t: usize, z: usize, codes: &[u8]) -> Self {
        let d = mask.dims();
        let plane = d.nx * d.ny;
        let frame = mask.frame(t);
        let data = frame[z * plane..(z + 1) * plane].iter().map(|c| codes.contains(c)).collect();
        Self { nx: d.nx, ny: d.ny, data }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[x + self.nx * y]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[x + self.nx * y] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    fn pixels(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % self.nx) as f64, (i / self.nx) as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    pub m00: f64,
    pub centroid: (f64, f64),
    /// Central second moments divided by the area.
    pub mu20: f64,
    pub mu11: f64,
    pub mu02: f64,
}

/// Area, centroid and normalized central moments of the foreground.
pub fn raw_moments(slice: &Slice2) -> Result<MomentSet> {
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for (x, y) in slice.pixels() {
        m00 += 1.0;
        m10 += x;
        m01 += y;
    }
    if m00 == 0.0 {
        return Err(Error::EmptyObject);
    }
    let (xc, yc) = (m10 / m00, m01 / m00);
    // Accumulate about the centroid so large offsets do not cancel.
    let (mut s20, mut s11, mut s02) = (0.0, 0.0, 0.0);
    for (x, y) in slice.pixels() {
        let (dx, dy) = (x - xc, y - yc);
        s20 += dx * dx;
        s11 += dx * dy;
        s02 += dy * dy;
    }
    Ok(MomentSet {
        m00,
        centroid: (xc, yc),
        mu20: s20 / m00,
        mu11: s11 / m00,
        mu02: s02 / m00,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseFit {
    pub centroid: (f64, f64),
    /// Major-axis orientation in (−π/2, π/2], measured from +x toward +y.
    pub theta: f64,
    /// Side lengths of the moment-equivalent uniform rectangle, l ≥ w.
    pub l: f64,
    pub w: f64,
}

impl EllipseFit {
    pub fn from_moments(m: &MomentSet) -> Self {
        let diff = m.mu20 - m.mu02;
        let theta = if diff == 0.0 && m.mu11 == 0.0 {
            0.0
        } else {
            0.5 * (2.0 * m.mu11).atan2(diff)
        };
        let root = (4.0 * m.mu11 * m.mu11 + diff * diff).sqrt();
        let sum = m.mu20 + m.mu02;
        let l = (6.0 * (sum + root)).sqrt();
        let w = (6.0 * (sum - root).max(0.0)).sqrt();
        Self { centroid: m.centroid, theta, l, w }
    }

    /// Semi-axes of the ellipse whose second moments equal the object's.
    pub fn semi_axes(&self) -> (f64, f64) {
        let k = 3f64.sqrt();
        (self.l / k, self.w / k)
    }

    pub fn area(&self) -> f64 {
        let (a, b) = self.semi_axes();
        std::f64::consts::PI * a * b
    }
}

pub fn fit_ellipse(slice: &Slice2) -> Result<EllipseFit> {
    let m = raw_moments(slice)?;
    if m.m00 < 3.0 {
        return Err(Error::Degenerate(format!("{} pixels; need at least 3", m.m00)));
    }
    Ok(EllipseFit::from_moments(&m))
}

/// Rectangle centered at `center` with half-extents `half_l` along the
/// direction `theta` and `half_w` across it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedRect {
    pub center: (f64, f64),
    pub theta: f64,
    pub half_l: f64,
    pub half_w: f64,
}

impl OrientedRect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        u.abs() <= self.half_l && v.abs() <= self.half_w
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_l * self.half_w
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let (cx, cy) = self.center;
        let pt = |u: f64, v: f64| (cx + u * c - v * s, cy + u * s + v * c);
        let (l, w) = (self.half_l, self.half_w);
        [pt(-l, -w), pt(l, -w), pt(l, w), pt(-l, w)]
    }

    /// Same rectangle grown by `margin` on every side.
    pub fn grown(&self, margin: f64) -> Self {
        Self { half_l: self.half_l + margin, half_w: self.half_w + margin, ..*self }
    }

    pub fn rasterize(&self, nx: usize, ny: usize) -> Slice2 {
        Slice2::from_fn(nx, ny, |x, y| self.contains(x as f64, y as f64))
    }
}

/// The enclosing element of sides (2l, 2w) aligned with the fit.
pub fn enclosing_rectangle(fit: &EllipseFit) -> OrientedRect {
    OrientedRect { center: fit.centroid, theta: fit.theta, half_l: fit.l, half_w: fit.w }
}

/// Moment-equivalent ellipse of `fit` on an `nx` × `ny` grid.
pub fn rasterize_ellipse(fit: &EllipseFit, nx: usize, ny: usize) -> Slice2 {
    let (a, b) = fit.semi_axes();
    if a <= 0.0 || b <= 0.0 {
        return Slice2::empty(nx, ny);
    }
    let (c, s) = (fit.theta.cos(), fit.theta.sin());
    Slice2::from_fn(nx, ny, |x, y| {
        let (dx, dy) = (x as f64 - fit.centroid.0, y as f64 - fit.centroid.1);
        let u = (dx * c + dy * s) / a;
        let v = (-dx * s + dy * c) / b;
        u * u + v * v <= 1.0
    })
}

/// Σ over slices of labeled pixel count × in-plane pixel area × slice height.
pub fn disc_stack_volume(mask: &Mask4, label: Label, t: usize) -> f64 {
    let d = mask.dims();
    let [sx, sy, sz] = mask.spacing_mm();
    let plane = d.nx * d.ny;
    mask.frame(t)
        .chunks(plane)
        .map(|slice| {
            let n = slice.iter().filter(|&&c| c == label.code()).count();
            n as f64 * sx * sy * sz
        })
        .sum()
}
