//! Exact squared Euclidean distance transform (lower envelope of parabolas,
//! one axis at a time) with per-axis spacing.

/// Squared distance from every voxel to the nearest `feature` voxel, in the
/// units of `spacing`. `f64::INFINITY` everywhere if there are no features.
pub fn edt_squared(features: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    assert_eq!(features.len(), nx * ny * nz, "feature grid does not match dims");
    let mut d: Vec<f64> = features.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let n_max = nx.max(ny).max(nz);
    let mut line = vec![0.0; n_max];
    let mut out = vec![0.0; n_max];
    let mut env = Envelope::new(n_max);
    let strides = [1, nx, nx * ny];
    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => ((ny, nx), (nz, nx * ny)),
            1 => ((nx, 1), (nz, nx * ny)),
            _ => ((nx, 1), (ny, nx)),
        };
        for a in 0..o1.0 {
            for b in 0..o2.0 {
                let base = a * o1.1 + b * o2.1;
                for i in 0..n {
                    line[i] = d[base + i * stride];
                }
                env.transform(&line[..n], spacing[axis], &mut out[..n]);
                for i in 0..n {
                    d[base + i * stride] = out[i];
                }
            }
        }
    }
    d
}

struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Self {
        Self { v: vec![0; n], z: vec![0.0; n + 1] }
    }

    fn transform(&mut self, f: &[f64], s: f64, out: &mut [f64]) {
        let n = f.len();
        let s2 = s * s;
        let mut k: isize = -1;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + s2 * (q * q) as f64;
            loop {
                if k < 0 {
                    k = 0;
                    self.v[0] = q;
                    self.z[0] = f64::NEG_INFINITY;
                    self.z[1] = f64::INFINITY;
                    break;
                }
                let p = self.v[k as usize];
                let fp = f[p] + s2 * (p * p) as f64;
                let x = (fq - fp) / (2.0 * s2 * (q - p) as f64);
                if x <= self.z[k as usize] {
                    k -= 1;
                } else {
                    k += 1;
                    self.v[k as usize] = q;
                    self.z[k as usize] = x;
                    self.z[k as usize + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        if k < 0 {
            out.iter_mut().for_each(|o| *o = f64::INFINITY);
            return;
        }
        let mut j = 0;
        for (q, o) in out.iter_mut().enumerate() {
            while self.z[j + 1] < q as f64 {
                j += 1;
            }
            let p = self.v[j];
            let dq = (q as f64 - p as f64) * s;
            *o = dq * dq + f[p];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(features: &[bool], dims: [usize; 3], s: [f64; 3]) -> Vec<f64> {
        let [nx, ny, _] = dims;
        let pts: Vec<[usize; 3]> = (0..features.len())
            .filter(|&i| features[i])
            .map(|i| [i % nx, (i / nx) % ny, i / (nx * ny)])
            .collect();
        (0..features.len())
            .map(|i| {
                let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
                pts.iter()
                    .map(|q| {
                        let d: Vec<f64> = (0..3).map(|a| (p[a] as f64 - q[a] as f64) * s[a]).collect();
                        (d[0] * d[0] + d[1] * d[1]) + d[2] * d[2]
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn no_features_is_infinite() {
        assert!(edt_squared(&[false; 8], [2, 2, 2], [1.0; 3]).iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn single_point() {
        let mut f = vec![false; 5 * 4 * 3];
        f[2 + 5 * (1 + 4)] = true;
        let d = edt_squared(&f, [5, 4, 3], [1.0; 3]);
        assert_eq!(d[0], 4.0 + 1.0 + 1.0);
        assert_eq!(d[4 + 5 * (3 + 4 * 2)], 4.0 + 4.0 + 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_brute_force_unit(bits in proptest::collection::vec(prop::bool::weighted(0.1), 7 * 5 * 6)) {
            let got = edt_squared(&bits, [7, 5, 6], [1.0; 3]);
            prop_assert_eq!(got, brute(&bits, [7, 5, 6], [1.0; 3]));
        }

        #[test]
        fn matches_brute_force_anisotropic(
            bits in proptest::collection::vec(prop::bool::weighted(0.08), 6 * 7 * 5),
            sx in 0.3f64..2.0, sy in 0.3f64..2.0, sz in 0.3f64..2.0,
        ) {
            let s = [sx, sy, sz];
            let got = edt_squared(&bits, [6, 7, 5], s);
            let want = brute(&bits, [6, 7, 5], s);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!(g == w || (g - w).abs() <= 1e-12 * w.max(1.0), "{} vs {}", g, w);
            }
        }
    }
}
