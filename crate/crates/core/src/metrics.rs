//! Overlap and surface-distance measures between binary frames.

use crate::distance::edt_squared;
use crate::error::{Error, Result};

fn check(a: &[bool], b: &[bool], dims: [usize; 3]) -> Result<()> {
    let n = dims[0] * dims[1] * dims[2];
    if a.len() != n || b.len() != n {
        return Err(Error::DimMismatch(format!(
            "masks of {} and {} voxels on a {:?} grid",
            a.len(),
            b.len(),
            dims
        )));
    }
    Ok(())
}

/// 2|A∩B| / (|A|+|B|); 1 when both are empty.
pub fn dice(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch(format!("{} vs {} voxels", a.len(), b.len())));
    }
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Foreground voxels with at least one background 6-neighbor; neighbors
/// outside the grid count as background.
pub fn boundary(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut out = vec![false; mask.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !mask[i] {
                    continue;
                }
                out[i] = x == 0
                    || y == 0
                    || z == 0
                    || x + 1 == nx
                    || y + 1 == ny
                    || z + 1 == nz
                    || !mask[i - 1]
                    || !mask[i + 1]
                    || !mask[i - nx]
                    || !mask[i + nx]
                    || !mask[i - nx * ny]
                    || !mask[i + nx * ny];
            }
        }
    }
    out
}

/// Physical coordinates (mm) of the boundary voxels.
pub fn boundary_points(mask: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<[f64; 3]> {
    let [nx, ny, _] = dims;
    boundary(mask, dims)
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| {
            let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
            [p[0] as f64 * spacing[0], p[1] as f64 * spacing[1], p[2] as f64 * spacing[2]]
        })
        .collect()
}

/// Distances from each boundary voxel of `from` to the nearest boundary voxel
/// of `to`.
fn directed(from: &[bool], to: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let d2 = edt_squared(to, dims, spacing);
    from.iter().zip(&d2).filter(|(&f, _)| f).map(|(_, d)| d.sqrt()).collect()
}

fn both_directions(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Result<(Vec<f64>, Vec<f64>)> {
    check(a, b, dims)?;
    let (ba, bb) = (boundary(a, dims), boundary(b, dims));
    if !ba.contains(&true) || !bb.contains(&true) {
        return Err(Error::EmptyObject);
    }
    Ok((directed(&ba, &bb, dims, spacing), directed(&bb, &ba, dims, spacing)))
}

/// Symmetric Hausdorff distance between the boundaries, in mm.
pub fn hausdorff(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Result<f64> {
    let (ab, ba) = both_directions(a, b, dims, spacing)?;
    Ok(ab.iter().chain(&ba).fold(0.0, |m, &d| m.max(d)))
}

/// Mean of the two directed mean boundary distances, in mm.
pub fn mad(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Result<f64> {
    let (ab, ba) = both_directions(a, b, dims, spacing)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(&ab) + mean(&ba)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceScores {
    pub dice: f64,
    pub hausdorff_mm: f64,
    pub mad_mm: f64,
}

/// Dice, Hausdorff and MAD of one pair of frames.
pub fn score(a: &[bool], b: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Result<SurfaceScores> {
    let (ab, ba) = both_directions(a, b, dims, spacing)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(SurfaceScores {
        dice: dice(a, b)?,
        hausdorff_mm: ab.iter().chain(&ba).fold(0.0, |m, &d| m.max(d)),
        mad_mm: 0.5 * (mean(&ab) + mean(&ba)),
    })
}
