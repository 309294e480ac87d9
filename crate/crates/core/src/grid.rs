//! Border handling for windows that reach outside a frame.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Padding {
    /// Half-sample symmetric reflection: index −1 reads 0, −2 reads 1, …
    #[default]
    Mirror,
    /// Repeat the edge value.
    ClampEdge,
}

impl Padding {
    /// Maps a possibly out-of-range coordinate onto `0..n`.
    #[inline]
    pub fn fold(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            Padding::ClampEdge => i.clamp(0, n - 1) as usize,
            Padding::Mirror => {
                let period = 2 * n;
                let m = i.rem_euclid(period);
                (if m < n { m } else { period - 1 - m }) as usize
            }
        }
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Padding::Mirror => "mirror",
            Padding::ClampEdge => "clamp",
        })
    }
}

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mirror" => Ok(Padding::Mirror),
            "clamp" | "clamp-edge" => Ok(Padding::ClampEdge),
            other => Err(Error::Config(format!("unknown padding `{other}`"))),
        }
    }
}

/// Copies a frame into a buffer grown by `pad[a]` voxels on both sides of
/// each axis. Returns the padded buffer and its dims.
pub(crate) fn pad_frame<T: Copy>(
    frame: &[T],
    dims: [usize; 3],
    pad: [usize; 3],
    padding: Padding,
) -> (Vec<T>, [usize; 3]) {
    let [nx, ny, nz] = dims;
    let pd = [nx + 2 * pad[0], ny + 2 * pad[1], nz + 2 * pad[2]];
    let xs: Vec<usize> = (0..pd[0])
        .map(|i| padding.fold(i as isize - pad[0] as isize, nx))
        .collect();
    let mut out = Vec::with_capacity(pd[0] * pd[1] * pd[2]);
    for z in 0..pd[2] {
        let sz = padding.fold(z as isize - pad[2] as isize, nz);
        for y in 0..pd[1] {
            let sy = padding.fold(y as isize - pad[1] as isize, ny);
            let row = &frame[nx * (sy + ny * sz)..nx * (sy + ny * sz) + nx];
            out.extend(xs.iter().map(|&x| row[x]));
        }
    }
    (out, pd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_folds_symmetrically() {
        let got: Vec<usize> = (-4..8).map(|i| Padding::Mirror.fold(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(Padding::Mirror.fold(-3, 1), 0);
        assert_eq!(Padding::Mirror.fold(5, 1), 0);
    }

    #[test]
    fn clamp_repeats_edges() {
        let got: Vec<usize> = (-2..6).map(|i| Padding::ClampEdge.fold(i, 4)).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 2, 3, 3, 3]);
    }

    #[test]
    fn pad_frame_layout() {
        let frame: Vec<u32> = (0..6).collect(); // 3 x 2 x 1
        let (p, pd) = pad_frame(&frame, [3, 2, 1], [1, 0, 1], Padding::ClampEdge);
        assert_eq!(pd, [5, 2, 3]);
        assert_eq!(&p[0..5], &[0, 0, 1, 2, 2]);
        assert_eq!(&p[10..15], &[0, 0, 1, 2, 2]);
        assert_eq!(&p[15..20], &[3, 3, 4, 5, 5]);
    }

    #[test]
    fn parse_round_trip() {
        for p in [Padding::Mirror, Padding::ClampEdge] {
            assert_eq!(p.to_string().parse::<Padding>().unwrap(), p);
        }
        assert!("wrap".parse::<Padding>().is_err());
    }
}
