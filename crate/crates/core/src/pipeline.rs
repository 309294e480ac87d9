//! End-to-end segmentation: fractal map, voxel classification, mask cleanup,
//! slice-by-slice moment refinement with centroid tracking, volumes and
//! ejection fraction, and evaluation against a reference mask.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bayes::GaussianNBModel;
use crate::error::{Error, Result};
use crate::features::frame_features;
use crate::fractal_map::{compute_fractal_map, FractalMap, FractalMapConfig};
use crate::metrics;
use crate::moments::{disc_stack_volume, enclosing_rectangle, fit_ellipse, EllipseFit, OrientedRect, Slice2};
use crate::morphology::{closing, components_2d, fill_holes_per_slice, remove_small_components};
use crate::volume::{Label, Mask4, Volume4};

/// Passes of close / fill / prune before giving up on a fixed point.
const MAX_POSTPROCESS_PASSES: usize = 64;
/// The apex walk stops once a slice keeps less than this share of the base area.
const MIN_AREA_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Refine {
    None,
    #[default]
    Ellipse,
}

impl fmt::Display for Refine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Refine::None => "none",
            Refine::Ellipse => "ellipse",
        })
    }
}

impl FromStr for Refine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Refine::None),
            "ellipse" => Ok(Refine::Ellipse),
            other => Err(Error::Config(format!("unknown refinement `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaseSlice {
    #[default]
    Auto,
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub map: FractalMapConfig,
    pub min_component_voxels: usize,
    /// Ball radius of the closing, in voxels.
    pub closing_radius: usize,
    pub refine: Refine,
    pub base_slice: BaseSlice,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            map: FractalMapConfig::default(),
            min_component_voxels: 200,
            closing_radius: 2,
            refine: Refine::Ellipse,
            base_slice: BaseSlice::Auto,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        if self.min_component_voxels == 0 {
            return Err(Error::Config("min_component_voxels must be at least 1".into()));
        }
        Ok(())
    }
}

/// One close / fill / prune pass.
fn postprocess_pass(mask: &[bool], dims: [usize; 3], cfg: &PipelineConfig) -> Vec<bool> {
    let closed = closing(mask, dims, cfg.closing_radius);
    let filled = fill_holes_per_slice(&closed, dims);
    remove_small_components(&filled, dims, cfg.min_component_voxels)
}

/// Closing with a ball of `closing_radius`, per-slice hole filling, then
/// removal of 26-connected components below `min_component_voxels`. The
/// pass is repeated until the mask stops changing, so the result is a fixed
/// point and applying the function again leaves it unchanged.
pub fn postprocess(mask: &[bool], dims: [usize; 3], cfg: &PipelineConfig) -> Vec<bool> {
    let mut cur = postprocess_pass(mask, dims, cfg);
    for _ in 1..MAX_POSTPROCESS_PASSES {
        let next = postprocess_pass(&cur, dims, cfg);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceFit {
    pub z: usize,
    pub fit: EllipseFit,
    /// Pixels kept after refinement.
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    /// Cavity, labeled blood pool.
    pub endo: Mask4,
    /// Cavity (blood pool) plus wall (myocardium); foreground is any nonzero label.
    pub epi: Mask4,
    pub volumes_mm3: Vec<f64>,
    pub ejection_fraction: f64,
    pub endo_trace: Vec<Vec<SliceFit>>,
    pub epi_trace: Vec<Vec<SliceFit>>,
}

fn slice_of(mask: &[bool], nx: usize, ny: usize, z: usize) -> Slice2 {
    let plane = nx * ny;
    Slice2::new(nx, ny, mask[z * plane..(z + 1) * plane].to_vec()).expect("plane size")
}

fn touches_border(labels: &[u32], id: u32, nx: usize, ny: usize) -> bool {
    (0..nx).any(|x| labels[x] == id || labels[x + nx * (ny - 1)] == id)
        || (0..ny).any(|y| labels[nx * y] == id || labels[nx - 1 + nx * y] == id)
}

/// Largest component of a slice that does not touch the slice border.
fn largest_interior(slice: &Slice2) -> Option<Vec<bool>> {
    let (labels, sizes) = components_2d(slice);
    let (nx, ny) = (slice.nx(), slice.ny());
    let best = (1..=sizes.len() as u32)
        .filter(|&id| !touches_border(&labels, id, nx, ny))
        .max_by(|&a, &b| sizes[a as usize - 1].cmp(&sizes[b as usize - 1]).then(b.cmp(&a)))?;
    Some(labels.iter().map(|&l| l == best).collect())
}

/// Component of `slice` within `region` that holds the seed pixel, or the
/// largest one there if the seed is background.
fn tracked_component(slice: &Slice2, region: &OrientedRect, seed: (f64, f64)) -> Option<Vec<bool>> {
    let (nx, ny) = (slice.nx(), slice.ny());
    let inside = Slice2::from_fn(nx, ny, |x, y| slice.get(x, y) && region.contains(x as f64, y as f64));
    let (labels, sizes) = components_2d(&inside);
    if sizes.is_empty() {
        return None;
    }
    let (sx, sy) = (seed.0.round(), seed.1.round());
    let seeded = if sx >= 0.0 && sy >= 0.0 && (sx as usize) < nx && (sy as usize) < ny {
        labels[sx as usize + nx * sy as usize]
    } else {
        0
    };
    let id = if seeded != 0 {
        seeded
    } else {
        (1..=sizes.len() as u32)
            .max_by(|&a, &b| sizes[a as usize - 1].cmp(&sizes[b as usize - 1]).then(b.cmp(&a)))
            .expect("nonempty")
    };
    Some(labels.iter().map(|&l| l == id).collect())
}

fn refine_component(comp: Vec<bool>, nx: usize, ny: usize, refine: Refine) -> Option<(Vec<bool>, EllipseFit)> {
    let s = Slice2::new(nx, ny, comp).expect("plane size");
    let fit = fit_ellipse(&s).ok()?;
    let kept = match refine {
        Refine::None => s.data().to_vec(),
        Refine::Ellipse => {
            let rect = enclosing_rectangle(&fit);
            s.data()
                .iter()
                .enumerate()
                .map(|(i, &b)| b && rect.contains((i % nx) as f64, (i / nx) as f64))
                .collect()
        }
    };
    Some((kept, fit))
}

/// Base-slice detection, then a centroid-tracked walk toward both ends of the
/// stack. Returns the kept voxels and the per-slice fits in z order.
fn slice_walk(mask: &[bool], dims: [usize; 3], cfg: &PipelineConfig) -> (Vec<bool>, Vec<SliceFit>) {
    let [nx, ny, nz] = dims;
    let plane = nx * ny;
    let mut out = vec![false; mask.len()];
    let base = match cfg.base_slice {
        BaseSlice::Index(z) if z < nz => largest_interior(&slice_of(mask, nx, ny, z)).map(|c| (z, c)),
        BaseSlice::Index(_) => None,
        BaseSlice::Auto => (0..nz)
            .filter_map(|z| largest_interior(&slice_of(mask, nx, ny, z)).map(|c| (z, c)))
            .max_by(|a, b| {
                let ca = a.1.iter().filter(|&&v| v).count();
                let cb = b.1.iter().filter(|&&v| v).count();
                ca.cmp(&cb).then(b.0.cmp(&a.0))
            }),
    };
    let Some((z0, comp)) = base else {
        return (out, Vec::new());
    };
    let Some((kept, fit)) = refine_component(comp, nx, ny, cfg.refine) else {
        return (out, Vec::new());
    };
    let base_area = kept.iter().filter(|&&v| v).count() as f64;
    let mut trace = vec![SliceFit { z: z0, fit, area: base_area as usize }];
    out[z0 * plane..(z0 + 1) * plane].copy_from_slice(&kept);

    let margin = cfg.closing_radius as f64;
    for dir in [1isize, -1] {
        let mut prev = fit;
        let mut z = z0 as isize + dir;
        while z >= 0 && (z as usize) < nz {
            let s = slice_of(mask, nx, ny, z as usize);
            let region = enclosing_rectangle(&prev).grown(margin);
            let Some(comp) = tracked_component(&s, &region, prev.centroid) else { break };
            if (comp.iter().filter(|&&v| v).count() as f64) < MIN_AREA_FRACTION * base_area {
                break;
            }
            let Some((kept, fit)) = refine_component(comp, nx, ny, cfg.refine) else { break };
            let area = kept.iter().filter(|&&v| v).count();
            let zu = z as usize;
            out[zu * plane..(zu + 1) * plane].copy_from_slice(&kept);
            trace.push(SliceFit { z: zu, fit, area });
            prev = fit;
            z += dir;
        }
    }
    trace.sort_by_key(|s| s.z);
    (out, trace)
}

struct FrameResult {
    endo: Vec<bool>,
    epi: Vec<bool>,
    endo_trace: Vec<SliceFit>,
    epi_trace: Vec<SliceFit>,
}

/// Voxelwise classification of frame `t`; `true` marks myocardium.
pub fn classify_frame(map: &FractalMap, model: &GaussianNBModel, t: usize) -> Result<Vec<bool>> {
    let feats = frame_features(map, t, model.patch)?;
    Ok(feats.iter().map(|f| model.predict(f).label == Label::Myocardium).collect())
}

fn segment_frame(myo: &[bool], dims: [usize; 3], cfg: &PipelineConfig) -> FrameResult {
    // Filling the cleaned wall slice by slice gives the solid outer contour;
    // the cavity is the blood-classified part of it.
    let epi_solid = postprocess(myo, dims, cfg);
    let cavity_raw: Vec<bool> = myo.iter().zip(&epi_solid).map(|(&m, &e)| !m && e).collect();
    let cavity = postprocess(&cavity_raw, dims, cfg);
    let (endo, endo_trace) = slice_walk(&cavity, dims, cfg);
    let outer: Vec<bool> = epi_solid.iter().zip(&cavity).map(|(&a, &b)| a || b).collect();
    let (epi_walk, epi_trace) = slice_walk(&outer, dims, cfg);
    let epi = epi_walk.iter().zip(&endo).map(|(&a, &b)| a || b).collect();
    FrameResult { endo, epi, endo_trace, epi_trace }
}

/// Full segmentation of every frame of `vol`.
pub fn segment(vol: &Volume4, model: &GaussianNBModel, cfg: &PipelineConfig) -> Result<SegmentationResult> {
    cfg.validate()?;
    model.validate()?;
    if model.map_config != cfg.map.fingerprint() {
        return Err(Error::Config(format!(
            "model was trained with map config `{}` but the pipeline uses `{}`",
            model.map_config,
            cfg.map.fingerprint()
        )));
    }
    let map = compute_fractal_map(vol, &cfg.map)?;
    segment_map(&map, model, cfg)
}

/// Segmentation starting from a precomputed fractal map.
pub fn segment_map(map: &FractalMap, model: &GaussianNBModel, cfg: &PipelineConfig) -> Result<SegmentationResult> {
    cfg.validate()?;
    let g = *map.fd.geometry();
    let d = g.dims;
    let dims = d.spatial();
    let frames: Vec<Result<FrameResult>> = (0..d.nt)
        .into_par_iter()
        .map(|t| Ok(segment_frame(&classify_frame(map, model, t)?, dims, cfg)))
        .collect();
    let mut endo_labels = Vec::with_capacity(d.len());
    let mut epi_labels = Vec::with_capacity(d.len());
    let mut endo_trace = Vec::with_capacity(d.nt);
    let mut epi_trace = Vec::with_capacity(d.nt);
    for f in frames {
        let f = f?;
        endo_labels.extend(f.endo.iter().map(|&e| if e { Label::BloodPool.code() } else { 0 }));
        epi_labels.extend(f.epi.iter().zip(&f.endo).map(|(&o, &e)| match (o, e) {
            (_, true) => Label::BloodPool.code(),
            (true, false) => Label::Myocardium.code(),
            _ => 0,
        }));
        endo_trace.push(f.endo_trace);
        epi_trace.push(f.epi_trace);
    }
    if !endo_labels.iter().any(|&l| l != 0) {
        return Err(Error::Segmentation("no cavity component found in any frame".into()));
    }
    let endo = Mask4::new(g, endo_labels)?;
    let epi = Mask4::new(g, epi_labels)?;
    let volumes_mm3: Vec<f64> = (0..d.nt).map(|t| disc_stack_volume(&endo, Label::BloodPool, t)).collect();
    let ejection_fraction = ejection_fraction(&volumes_mm3);
    Ok(SegmentationResult { endo, epi, volumes_mm3, ejection_fraction, endo_trace, epi_trace })
}

/// (max − min) / max over the frame volumes; 0 when every volume is 0.
pub fn ejection_fraction(volumes: &[f64]) -> f64 {
    let max = volumes.iter().cloned().fold(0.0, f64::max);
    let min = volumes.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        (max - min) / max
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Endocardium,
    Epicardium,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Endocardium => "endo",
            Boundary::Epicardium => "epi",
        }
    }

    /// Label codes that count as foreground for this boundary.
    fn codes(self) -> &'static [u8] {
        match self {
            Boundary::Endocardium => &[1],
            Boundary::Epicardium => &[1, 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub frame: usize,
    pub boundary: Boundary,
    pub dice: f64,
    /// NaN when either boundary is empty.
    pub hd_mm: f64,
    pub mad_mm: f64,
    /// Dice of each z-slice.
    pub slice_dice: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn mean_dice(&self, b: Boundary) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.boundary == b).map(|r| r.dice).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn min_dice(&self, b: Boundary) -> f64 {
        self.rows.iter().filter(|r| r.boundary == b).map(|r| r.dice).fold(f64::INFINITY, f64::min)
    }

    /// One row per (frame, boundary): `frame boundary dice hd_mm mad_mm`.
    pub fn to_table(&self) -> String {
        let mut s = String::from("frame boundary dice hd_mm mad_mm\n");
        for r in &self.rows {
            let _ = writeln!(s, "{} {} {:.6} {:.6} {:.6}", r.frame, r.boundary.name(), r.dice, r.hd_mm, r.mad_mm);
        }
        s
    }
}

/// Scores a predicted label mask against the reference. In both masks the
/// endocardium is label 1 and the epicardium is labels 1 and 2 together.
pub fn evaluate_masks(pred: &Mask4, truth: &Mask4) -> Result<EvalReport> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimMismatch(format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
    }
    let d = truth.dims();
    let dims = d.spatial();
    let spacing = truth.spacing_mm();
    let plane = d.nx * d.ny;
    let jobs: Vec<(usize, Boundary)> = (0..d.nt)
        .flat_map(|t| [(t, Boundary::Endocardium), (t, Boundary::Epicardium)])
        .collect();
    let rows = jobs
        .into_par_iter()
        .map(|(t, b)| {
            let p = pred.frame_binary(t, b.codes());
            let q = truth.frame_binary(t, b.codes());
            let dice = metrics::dice(&p, &q)?;
            let (hd_mm, mad_mm) = match metrics::score(&p, &q, dims, spacing) {
                Ok(s) => (s.hausdorff_mm, s.mad_mm),
                Err(Error::EmptyObject) => (f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            let slice_dice = (0..d.nz)
                .map(|z| metrics::dice(&p[z * plane..(z + 1) * plane], &q[z * plane..(z + 1) * plane]))
                .collect::<Result<Vec<_>>>()?;
            Ok(ReportRow { frame: t, boundary: b, dice, hd_mm, mad_mm, slice_dice })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { rows })
}

pub fn evaluate(result: &SegmentationResult, truth: &Mask4) -> Result<EvalReport> {
    evaluate_masks(&result.epi, truth)
}
