//! Binary morphology on single frames: ball closing, per-slice hole filling
//! and connected components.

use crate::distance::edt_squared;
use crate::moments::Slice2;

/// Dilation by a ball of radius `r` voxels (offsets with |d|² ≤ r²),
/// restricted to the frame.
pub fn dilate(mask: &[bool], dims: [usize; 3], r: usize) -> Vec<bool> {
    if r == 0 {
        return mask.to_vec();
    }
    let r2 = (r * r) as f64;
    edt_squared(mask, dims, [1.0; 3]).iter().map(|&d| d <= r2).collect()
}

/// Erosion by the same ball; voxels outside the frame count as background.
pub fn erode(mask: &[bool], dims: [usize; 3], r: usize) -> Vec<bool> {
    if r == 0 {
        return mask.to_vec();
    }
    let (padded, pd) = pad(mask, dims, r);
    let r2 = (r * r) as f64;
    let bg: Vec<bool> = padded.iter().map(|&b| !b).collect();
    let e: Vec<bool> = edt_squared(&bg, pd, [1.0; 3]).iter().map(|&d| d > r2).collect();
    crop(&e, pd, dims, r)
}

/// Closing computed on the frame embedded in an unbounded background, then
/// cropped back, so nothing grows toward the frame border.
pub fn closing(mask: &[bool], dims: [usize; 3], r: usize) -> Vec<bool> {
    if r == 0 {
        return mask.to_vec();
    }
    let (padded, pd) = pad(mask, dims, r);
    let r2 = (r * r) as f64;
    let dilated: Vec<bool> = edt_squared(&padded, pd, [1.0; 3]).iter().map(|&d| d <= r2).collect();
    let bg: Vec<bool> = dilated.iter().map(|&b| !b).collect();
    let closed: Vec<bool> = edt_squared(&bg, pd, [1.0; 3]).iter().map(|&d| d > r2).collect();
    crop(&closed, pd, dims, r)
}

fn pad(mask: &[bool], dims: [usize; 3], r: usize) -> (Vec<bool>, [usize; 3]) {
    let pd = dims.map(|n| n + 2 * r);
    let mut out = vec![false; pd[0] * pd[1] * pd[2]];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let src = dims[0] * (y + dims[1] * z);
            let dst = r + pd[0] * (y + r + pd[1] * (z + r));
            out[dst..dst + dims[0]].copy_from_slice(&mask[src..src + dims[0]]);
        }
    }
    (out, pd)
}

fn crop(padded: &[bool], pd: [usize; 3], dims: [usize; 3], r: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let src = r + pd[0] * (y + r + pd[1] * (z + r));
            out.extend_from_slice(&padded[src..src + dims[0]]);
        }
    }
    out
}

/// Labels 8-connected foreground components of a slice. Returns the label
/// image (0 = background, components numbered from 1 in scan order) and the
/// component sizes indexed by label − 1.
pub fn components_2d(slice: &Slice2) -> (Vec<u32>, Vec<usize>) {
    let (nx, ny) = (slice.nx(), slice.ny());
    let data = slice.data();
    let mut labels = vec![0u32; nx * ny];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i % nx) as isize, (i / nx) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (xx, yy) = (x + dx, y + dy);
                    if xx < 0 || yy < 0 || xx >= nx as isize || yy >= ny as isize {
                        continue;
                    }
                    let j = xx as usize + nx * yy as usize;
                    if data[j] && labels[j] == 0 {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Fills background regions of each z-slice that are not 4-connected to the
/// slice border.
pub fn fill_holes_per_slice(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let plane = nx * ny;
    let mut out = mask.to_vec();
    let mut outside = vec![false; plane];
    let mut stack = Vec::new();
    for z in 0..nz {
        let s = &mut out[z * plane..(z + 1) * plane];
        outside.iter_mut().for_each(|o| *o = false);
        for y in 0..ny {
            for x in 0..nx {
                if (x == 0 || y == 0 || x == nx - 1 || y == ny - 1) && !s[x + nx * y] && !outside[x + nx * y] {
                    outside[x + nx * y] = true;
                    stack.push(x + nx * y);
                }
            }
        }
        while let Some(i) = stack.pop() {
            let (x, y) = (i % nx, i / nx);
            let mut visit = |j: usize| {
                if !s[j] && !outside[j] {
                    outside[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < nx {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - nx);
            }
            if y + 1 < ny {
                visit(i + nx);
            }
        }
        for (v, o) in s.iter_mut().zip(&outside) {
            *v = !*o;
        }
    }
    out
}

/// Labels 26-connected foreground components of a frame; see [`components_2d`].
pub fn components_3d(mask: &[bool], dims: [usize; 3]) -> (Vec<u32>, Vec<usize>) {
    let [nx, ny, nz] = dims;
    let mut labels = vec![0u32; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y, z) = ((i % nx) as isize, ((i / nx) % ny) as isize, (i / (nx * ny)) as isize);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (xx, yy, zz) = (x + dx, y + dy, z + dz);
                        if xx < 0 || yy < 0 || zz < 0 || xx >= nx as isize || yy >= ny as isize || zz >= nz as isize {
                            continue;
                        }
                        let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                        if mask[j] && labels[j] == 0 {
                            labels[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Drops 26-connected components with fewer than `min_voxels` voxels.
pub fn remove_small_components(mask: &[bool], dims: [usize; 3], min_voxels: usize) -> Vec<bool> {
    let (labels, sizes) = components_3d(mask, dims);
    labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize - 1] >= min_voxels)
        .collect()
}

/// Largest component only (ties go to the earliest in scan order).
pub fn largest_component(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let (labels, sizes) = components_3d(mask, dims);
    let Some(best) = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) else {
        return vec![false; mask.len()];
    };
    labels.iter().map(|&l| l == best as u32 + 1).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ball_offsets(r: usize) -> Vec<[isize; 3]> {
        let r = r as isize;
        let mut v = Vec::new();
        for z in -r..=r {
            for y in -r..=r {
                for x in -r..=r {
                    if x * x + y * y + z * z <= r * r {
                        v.push([x, y, z]);
                    }
                }
            }
        }
        v
    }

    fn dilate_brute(m: &[bool], d: [usize; 3], r: usize) -> Vec<bool> {
        let off = ball_offsets(r);
        (0..m.len())
            .map(|i| {
                let p = [(i % d[0]) as isize, ((i / d[0]) % d[1]) as isize, (i / (d[0] * d[1])) as isize];
                off.iter().any(|o| {
                    let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                    (0..3).all(|a| q[a] >= 0 && q[a] < d[a] as isize)
                        && m[q[0] as usize + d[0] * (q[1] as usize + d[1] * q[2] as usize)]
                })
            })
            .collect()
    }

    #[test]
    fn square_hole_is_filled() {
        let dims = [12, 12, 1];
        let mut m: Vec<bool> = (0..144).map(|i| (1..11).contains(&(i % 12)) && (1..11).contains(&(i / 12))).collect();
        m[5 + 12 * 5] = false;
        let f = fill_holes_per_slice(&m, dims);
        assert!(f[5 + 12 * 5]);
        assert_eq!(f.iter().filter(|&&b| b).count(), 100);
    }

    #[test]
    fn border_touching_background_is_kept() {
        let dims = [5, 5, 1];
        let m: Vec<bool> = (0..25).map(|i| i % 5 != 2).collect();
        assert_eq!(fill_holes_per_slice(&m, dims), m);
    }

    #[test]
    fn isolated_voxel_is_removed() {
        let mut m = vec![false; 27];
        m[13] = true;
        assert!(remove_small_components(&m, [3, 3, 3], 2).iter().all(|&b| !b));
        assert_eq!(remove_small_components(&m, [3, 3, 3], 1), m);
    }

    #[test]
    fn diagonal_voxels_are_connected() {
        let mut m = vec![false; 27];
        m[0] = true;
        m[26] = true;
        m[13] = true;
        assert_eq!(components_3d(&m, [3, 3, 3]).1, vec![3]);
        let s = Slice2::from_fn(3, 3, |x, y| x == y);
        assert_eq!(components_2d(&s).1, vec![3]);
    }

    #[test]
    fn closing_bridges_small_gap() {
        let dims = [9, 7, 7];
        let inner = |i: usize| (1..6).contains(&((i / 9) % 7)) && (1..6).contains(&(i / 63));
        let m: Vec<bool> = (0..441).map(|i| inner(i) && i % 9 != 4).collect();
        let c = closing(&m, dims, 1);
        assert!(c[4 + 9 * (3 + 7 * 3)]);
        assert!(!c[4 + 9 * (1 + 7)]);
    }

    #[test]
    fn closing_does_not_grow_toward_border() {
        let dims = [10, 10, 6];
        let m: Vec<bool> = (0..600).map(|i| i / 100 >= 2 && (i % 10 == 2 || i % 10 == 7)).collect();
        let c = closing(&m, dims, 2);
        assert!(c[..200].iter().all(|&b| !b));
    }

    #[test]
    fn erosion_treats_outside_as_background() {
        let m = vec![true; 27];
        let e = erode(&m, [3, 3, 3], 1);
        assert_eq!(e.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn largest_component_picks_biggest() {
        let m: Vec<bool> = (0..10).map(|i| !(2..=4).contains(&i)).collect();
        let l = largest_component(&m, [10, 1, 1]);
        assert_eq!(l, (0..10).map(|i| i > 4).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dilation_matches_ball_offsets(bits in proptest::collection::vec(prop::bool::weighted(0.1), 6 * 7 * 5), r in 0usize..3) {
            prop_assert_eq!(dilate(&bits, [6, 7, 5], r), dilate_brute(&bits, [6, 7, 5], r));
        }

        #[test]
        fn closing_is_erosion_of_dilation(bits in proptest::collection::vec(prop::bool::weighted(0.3), 6 * 5 * 7), r in 1usize..3) {
            // the padded closing contains the in-frame composition
            let d = [6, 5, 7];
            let plain = erode(&dilate(&bits, d, r), d, r);
            let c = closing(&bits, d, r);
            prop_assert!(plain.iter().zip(&c).all(|(p, q)| !p || *q));
        }

        #[test]
        fn closing_is_extensive_and_idempotent(bits in proptest::collection::vec(prop::bool::weighted(0.4), 7 * 6 * 5), r in 0usize..3) {
            let d = [7, 6, 5];
            let c = closing(&bits, d, r);
            prop_assert!(bits.iter().zip(&c).all(|(a, b)| !a || *b));
            prop_assert_eq!(closing(&c, d, r), c);
        }

        #[test]
        fn hole_fill_is_idempotent(bits in proptest::collection::vec(any::<bool>(), 8 * 8 * 3)) {
            let f = fill_holes_per_slice(&bits, [8, 8, 3]);
            prop_assert_eq!(fill_holes_per_slice(&f, [8, 8, 3]), f);
        }
    }
}
