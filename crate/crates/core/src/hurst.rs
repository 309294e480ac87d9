//! Hurst index estimation from the mean-absolute-difference variogram.
//!
//! For an fBm sample, E|B(n+l) − B(n)| = c·|l|^H, so an ordinary least-squares
//! line through (ln l, ln mad(l)) has slope H and intercept ln c.

use crate::error::{Error, Result};
use crate::grid::Padding;
use crate::volume::Volume4;

/// Bounds applied to regression slopes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstClamp {
    pub min: f64,
    pub max: f64,
}

impl Default for HurstClamp {
    fn default() -> Self {
        Self { min: 0.01, max: 1.0 }
    }
}

impl HurstClamp {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min) || !(0.0..=1.0).contains(&max) || min > max {
            return Err(Error::Config(format!("invalid Hurst clamp [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }
}

/// A 3-D block of samples, x-fastest. 1-D series use dims `(n, 1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl Window {
    pub fn new(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) || dims.iter().product::<usize>() != values.len() {
            return Err(Error::Domain(format!(
                "window dims {dims:?} do not match {} values",
                values.len()
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn from_series(values: &[f64]) -> Self {
        Self {
            dims: [values.len(), 1, 1],
            values: values.to_vec(),
        }
    }

    /// The `extent`-sized block of frame `t` centered at `center`, with
    /// out-of-range reads resolved by `padding`.
    pub fn extract(
        vol: &Volume4,
        t: usize,
        center: [usize; 3],
        extent: [usize; 3],
        padding: Padding,
    ) -> Self {
        let d = vol.dims();
        let n = [d.nx, d.ny, d.nz];
        let frame = vol.frame(t);
        let mut values = Vec::with_capacity(extent.iter().product());
        for k in 0..extent[2] {
            let z = padding.fold(center[2] as isize + k as isize - (extent[2] / 2) as isize, n[2]);
            for j in 0..extent[1] {
                let y = padding.fold(center[1] as isize + j as isize - (extent[1] / 2) as isize, n[1]);
                for i in 0..extent[0] {
                    let x = padding.fold(center[0] as isize + i as isize - (extent[0] / 2) as isize, n[0]);
                    values.push(frame[x + n[0] * (y + n[1] * z)] as f64);
                }
            }
        }
        Self { dims: extent, values }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }
}

/// Mean absolute difference per lag.
#[derive(Debug, Clone, PartialEq)]
pub struct Variogram {
    /// `(distance, mad)` with strictly increasing positive distances.
    points: Vec<(f64, f64)>,
    n_pairs: Vec<usize>,
}

impl Variogram {
    pub fn new(points: Vec<(f64, f64)>, n_pairs: Vec<usize>) -> Result<Self> {
        if points.len() != n_pairs.len() {
            return Err(Error::Domain("points and pair counts differ in length".into()));
        }
        let mut prev = 0.0;
        for &(d, m) in &points {
            if !(d > prev) || !d.is_finite() {
                return Err(Error::Domain("distances must be positive and increasing".into()));
            }
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::Domain(format!("mad must be finite and >= 0, got {m}")));
            }
            prev = d;
        }
        Ok(Self { points, n_pairs })
    }

    /// Synthetic variogram without pair counts.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![0; n])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn n_pairs(&self) -> &[usize] {
        &self.n_pairs
    }
}

/// Variogram over lags 1..=scales using axis-aligned pairs inside `window`.
pub fn variogram(window: &Window, scales: usize) -> Result<Variogram> {
    let [nx, ny, nz] = window.dims;
    let longest = nx.max(ny).max(nz);
    if scales == 0 || scales >= longest {
        return Err(Error::Domain(format!(
            "scales {scales} need a window axis longer than {scales}, window is {:?}",
            window.dims
        )));
    }
    let mut points = Vec::with_capacity(scales);
    let mut n_pairs = Vec::with_capacity(scales);
    for s in 1..=scales {
        let mut sum = 0.0;
        let mut count = 0usize;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let v = window.at(x, y, z);
                    if x + s < nx {
                        sum += (window.at(x + s, y, z) - v).abs();
                        count += 1;
                    }
                    if y + s < ny {
                        sum += (window.at(x, y + s, z) - v).abs();
                        count += 1;
                    }
                    if z + s < nz {
                        sum += (window.at(x, y, z + s) - v).abs();
                        count += 1;
                    }
                }
            }
        }
        points.push((s as f64, sum / count as f64));
        n_pairs.push(count);
    }
    Variogram::new(points, n_pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramFit {
    /// Clamped slope.
    pub h: f64,
    /// Unclamped regression slope.
    pub slope: f64,
    pub log_c: f64,
    /// Residual sum of squares of the unclamped log-log fit.
    pub rss: f64,
    pub n_scales: usize,
}

impl VariogramFit {
    pub(crate) fn degenerate(clamp: HurstClamp) -> Self {
        Self {
            h: clamp.max,
            slope: clamp.max,
            log_c: f64::NEG_INFINITY,
            rss: 0.0,
            n_scales: 0,
        }
    }
}

/// Least squares of ln(mad) on `ln_d`, skipping zero-mad points.
pub(crate) fn fit_log_log(ln_d: &[f64], mads: &[f64], clamp: HurstClamp) -> Result<VariogramFit> {
    if mads.len() < 2 {
        return Err(Error::Fit(format!("need >= 2 variogram points, got {}", mads.len())));
    }
    let mut n = 0usize;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (&x, &m) in ln_d.iter().zip(mads) {
        if m > 0.0 {
            n += 1;
            sx += x;
            sy += m.ln();
        }
    }
    if n == 0 {
        return Ok(VariogramFit::degenerate(clamp));
    }
    if n < 2 {
        return Err(Error::Fit("only one variogram point with nonzero mad".into()));
    }
    let xm = sx / n as f64;
    let ym = sy / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &m) in ln_d.iter().zip(mads) {
        if m > 0.0 {
            let dx = x - xm;
            sxx += dx * dx;
            sxy += dx * (m.ln() - ym);
        }
    }
    if sxx <= 0.0 {
        return Err(Error::Fit("variogram distances are not distinct".into()));
    }
    let slope = sxy / sxx;
    let log_c = ym - slope * xm;
    let mut rss = 0.0;
    for (&x, &m) in ln_d.iter().zip(mads) {
        if m > 0.0 {
            let r = m.ln() - (log_c + slope * x);
            rss += r * r;
        }
    }
    Ok(VariogramFit {
        h: slope.clamp(clamp.min, clamp.max),
        slope,
        log_c,
        rss,
        n_scales: n,
    })
}

/// Fits H with the default clamp `[0.01, 1]`.
pub fn fit_hurst(vg: &Variogram) -> Result<VariogramFit> {
    fit_hurst_clamped(vg, HurstClamp::default())
}

pub fn fit_hurst_clamped(vg: &Variogram, clamp: HurstClamp) -> Result<VariogramFit> {
    let ln_d: Vec<f64> = vg.points.iter().map(|p| p.0.ln()).collect();
    let mads: Vec<f64> = vg.points.iter().map(|p| p.1).collect();
    fit_log_log(&ln_d, &mads, clamp)
}

/// Fractal dimension `m + 1 − h` of an m-dimensional fBm.
pub fn fd_from_h(h: f64, m: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::Domain(format!("h must lie in [0, 1], got {h}")));
    }
    if !(1..=3).contains(&m) {
        return Err(Error::Domain(format!("Euclidean dimension must be 1, 2 or 3, got {m}")));
    }
    Ok(m as f64 + 1.0 - h)
}

pub fn h_from_fd(fd: f64, m: u32) -> Result<f64> {
    if !(1..=3).contains(&m) {
        return Err(Error::Domain(format!("Euclidean dimension must be 1, 2 or 3, got {m}")));
    }
    let h = m as f64 + 1.0 - fd;
    if !(0.0..=1.0).contains(&h) {
        return Err(Error::Domain(format!("fd {fd} outside [{m}, {}]", m + 1)));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_window_has_zero_mad_and_smooth_fit() {
        let w = Window::new([5, 5, 5], vec![3.0; 125]).unwrap();
        let vg = variogram(&w, 3).unwrap();
        assert!(vg.points().iter().all(|p| p.1 == 0.0));
        let fit = fit_hurst(&vg).unwrap();
        assert_eq!(fit.h, 1.0);
        assert_eq!(fit.rss, 0.0);
        assert_eq!(fit.n_scales, 0);
    }

    #[test]
    fn ramp_mad_equals_lag() {
        let w = Window::from_series(&(0..10).map(|x| x as f64).collect::<Vec<_>>());
        let vg = variogram(&w, 3).unwrap();
        let mads: Vec<f64> = vg.points().iter().map(|p| p.1).collect();
        assert_eq!(mads, vec![1.0, 2.0, 3.0]);
        assert_eq!(vg.n_pairs(), &[9, 8, 7]);
    }

    #[test]
    fn checkerboard_mad() {
        let w = Window::from_series(&(0..9).map(|x| (x % 2) as f64).collect::<Vec<_>>());
        let vg = variogram(&w, 2).unwrap();
        assert_eq!(vg.points()[0].1, 1.0);
        assert_eq!(vg.points()[1].1, 0.0);
        // only one usable point remains
        assert!(matches!(fit_hurst(&vg), Err(Error::Fit(_))));
    }

    #[test]
    fn window_too_small_for_scales() {
        let w = Window::new([3, 3, 3], vec![0.0; 27]).unwrap();
        assert!(variogram(&w, 3).is_err());
        assert!(variogram(&w, 0).is_err());
        assert!(variogram(&w, 2).is_ok());
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts = (1..=6).map(|l| (l as f64, 2.0 * (l as f64).powf(0.7))).collect();
        let fit = fit_hurst(&Variogram::from_points(pts).unwrap()).unwrap();
        assert!((fit.h - 0.7).abs() < 1e-10);
        assert!((fit.log_c - 2f64.ln()).abs() < 1e-10);
        assert!(fit.rss <= 1e-18);
        assert_eq!(fit.n_scales, 6);
    }

    #[test]
    fn ramp_variogram_clamps_to_one() {
        let pts = vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)];
        let fit = fit_hurst(&Variogram::from_points(pts).unwrap()).unwrap();
        assert!((fit.h - 1.0).abs() < 1e-12 && fit.h <= 1.0);
        assert!(fit.rss <= 1e-18);
    }

    #[test]
    fn negative_slope_clamps_to_min() {
        let pts = vec![(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)];
        let fit = fit_hurst(&Variogram::from_points(pts).unwrap()).unwrap();
        assert_eq!(fit.h, 0.01);
        assert!(fit.slope < 0.0);
    }

    #[test]
    fn too_few_points_is_fit_error() {
        let vg = Variogram::from_points(vec![(1.0, 1.0)]).unwrap();
        assert!(matches!(fit_hurst(&vg), Err(Error::Fit(_))));
    }

    #[test]
    fn variogram_invariants_are_checked() {
        assert!(Variogram::from_points(vec![(2.0, 1.0), (1.0, 1.0)]).is_err());
        assert!(Variogram::from_points(vec![(0.0, 1.0)]).is_err());
        assert!(Variogram::from_points(vec![(1.0, -1.0)]).is_err());
    }

    #[test]
    fn fd_conversion() {
        assert_eq!(fd_from_h(0.5, 2).unwrap(), 2.5);
        assert_eq!(fd_from_h(1.0, 3).unwrap(), 3.0);
        assert!(fd_from_h(1.2, 2).is_err());
        assert!(fd_from_h(0.5, 4).is_err());
        assert!(h_from_fd(2.5, 2).unwrap() == 0.5);
    }

    #[test]
    fn extract_centers_and_pads() {
        use crate::volume::{Dims4, Geometry};
        let g = Geometry::unit(Dims4::new(4, 1, 1, 1)).unwrap();
        let v = Volume4::new(g, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let w = Window::extract(&v, 0, [0, 0, 0], [5, 1, 1], Padding::Mirror);
        assert_eq!(w.values(), &[1.0, 0.0, 0.0, 1.0, 2.0]);
        let w = Window::extract(&v, 0, [3, 0, 0], [3, 1, 1], Padding::ClampEdge);
        assert_eq!(w.values(), &[2.0, 3.0, 3.0]);
    }

    proptest! {
        #[test]
        fn affine_intensity_change_keeps_slope(
            vals in proptest::collection::vec(-100.0f64..100.0, 27),
            a in 0.01f64..50.0,
            beta in -1e3f64..1e3,
        ) {
            let w = Window::new([3, 3, 3], vals.clone()).unwrap();
            let w2 = Window::new([3, 3, 3], vals.iter().map(|v| a * v + beta).collect()).unwrap();
            let f1 = fit_hurst(&variogram(&w, 2).unwrap());
            let f2 = fit_hurst(&variogram(&w2, 2).unwrap());
            if let (Ok(f1), Ok(f2)) = (f1, f2) {
                prop_assert!((f1.slope - f2.slope).abs() < 1e-9);
            }
        }

        #[test]
        fn power_law_subsets_are_exact(
            h in 0.02f64..0.99,
            c in 0.01f64..100.0,
            mask in 3u32..(1 << 8),
        ) {
            let lags: Vec<f64> = (1..=8).filter(|l| mask & (1 << (l - 1)) != 0).map(|l| l as f64).collect();
            prop_assume!(lags.len() >= 2);
            let vg = Variogram::from_points(lags.iter().map(|&l| (l, c * l.powf(h))).collect()).unwrap();
            let fit = fit_hurst(&vg).unwrap();
            prop_assert!((fit.h - h).abs() < 1e-10);
            prop_assert!((fit.log_c - c.ln()).abs() < 1e-10);
            prop_assert!(fit.rss < 1e-18);
        }

        #[test]
        fn non_collinear_points_have_positive_rss(
            h in 0.1f64..0.9,
            bump in 0.05f64..1.0,
        ) {
            let pts = vec![(1.0, 1.0), (2.0, 2f64.powf(h) * (1.0 + bump)), (4.0, 4f64.powf(h))];
            let fit = fit_hurst(&Variogram::from_points(pts).unwrap()).unwrap();
            prop_assert!(fit.rss > 1e-18);
        }

        #[test]
        fn fd_h_identity(h in 0.0f64..=1.0, m in 1u32..=3) {
            let fd = fd_from_h(h, m).unwrap();
            prop_assert!((m as f64 + 1.0 - fd - h).abs() <= 1e-15);
        }
    }
}
