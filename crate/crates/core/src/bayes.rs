//! Two-class Gaussian naive Bayes over texture feature vectors, plus the
//! patch sampler that builds a training set from a labeled frame.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::features::{frame_features, FeatureVector, N_FEATURES};
use crate::fractal_map::{FractalMap, FractalMapConfig};
use crate::volume::{Label, Mask4};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Default voxel extents of a training patch.
pub const DEFAULT_TRAINING_PATCH: [usize; 3] = [7, 9, 7];
/// Default extents of the map neighborhood a feature vector summarizes.
pub const DEFAULT_FEATURE_PATCH: [usize; 3] = [5, 5, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub prior: f64,
    /// Mean and variance of each feature in normalized units.
    pub mean: [f64; N_FEATURES],
    pub var: [f64; N_FEATURES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNBModel {
    pub blood_pool: ClassStats,
    pub myocardium: ClassStats,
    pub feat_norm_mean: [f64; N_FEATURES],
    pub feat_norm_sigma: [f64; N_FEATURES],
    /// Feature patch extents the model was trained with.
    pub patch: [usize; 3],
    /// Fingerprint of the fractal-map configuration used for training.
    pub map_config: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Posterior probability of `label`.
    pub posterior: f64,
    pub p_blood_pool: f64,
    pub p_myocardium: f64,
}

/// Metadata stored alongside the fitted statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub patch: [usize; 3],
    pub map_config: FractalMapConfig,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            patch: DEFAULT_FEATURE_PATCH,
            map_config: FractalMapConfig::default(),
        }
    }
}

fn sorted_samples(samples: &[(FeatureVector, Label)]) -> Vec<([f64; N_FEATURES], Label)> {
    let mut s: Vec<_> = samples.iter().map(|(f, l)| (f.to_array(), *l)).collect();
    s.sort_by(|a, b| {
        a.1.code().cmp(&b.1.code()).then_with(|| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    s
}

fn mean_var(rows: &[[f64; N_FEATURES]]) -> ([f64; N_FEATURES], [f64; N_FEATURES]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; N_FEATURES];
    for r in rows {
        for k in 0..N_FEATURES {
            mean[k] += r[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; N_FEATURES];
    for r in rows {
        for k in 0..N_FEATURES {
            var[k] += (r[k] - mean[k]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Fits per-class priors and per-feature Gaussians. Statistics are computed
/// over the samples in a canonical sorted order, so the model does not depend
/// on the order the samples arrive in.
pub fn train(samples: &[(FeatureVector, Label)], meta: &TrainingMeta) -> Result<GaussianNBModel> {
    if let Some((_, l)) = samples.iter().find(|(_, l)| *l == Label::Background) {
        return Err(Error::Training(format!("sample labeled {l:?}; expected blood pool or myocardium")));
    }
    if let Some((f, _)) = samples.iter().find(|(f, _)| f.to_array().iter().any(|v| !v.is_finite())) {
        return Err(Error::Training(format!("non-finite feature vector {f:?}")));
    }
    let sorted = sorted_samples(samples);
    let rows = |label: Label| -> Vec<[f64; N_FEATURES]> {
        sorted.iter().filter(|(_, l)| *l == label).map(|(r, _)| *r).collect()
    };
    let blood = rows(Label::BloodPool);
    let myo = rows(Label::Myocardium);
    for (name, r) in [("blood_pool", &blood), ("myocardium", &myo)] {
        if r.len() < 2 {
            return Err(Error::Training(format!("class {name} has {} samples; need at least 2", r.len())));
        }
    }
    let all: Vec<[f64; N_FEATURES]> = sorted.iter().map(|(r, _)| *r).collect();
    let (norm_mean, norm_var) = mean_var(&all);
    let norm_sigma = norm_var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let normalize = |rows: &[[f64; N_FEATURES]]| -> Vec<[f64; N_FEATURES]> {
        rows.iter()
            .map(|r| std::array::from_fn(|k| (r[k] - norm_mean[k]) / norm_sigma[k]))
            .collect()
    };
    let total = (blood.len() + myo.len()) as f64;
    let stats = |rows: &[[f64; N_FEATURES]]| {
        let (mean, var) = mean_var(&normalize(rows));
        ClassStats {
            prior: rows.len() as f64 / total,
            mean,
            var: var.map(|v| v.max(VARIANCE_FLOOR)),
        }
    };
    Ok(GaussianNBModel {
        blood_pool: stats(&blood),
        myocardium: stats(&myo),
        feat_norm_mean: norm_mean,
        feat_norm_sigma: norm_sigma,
        patch: meta.patch,
        map_config: meta.map_config.fingerprint(),
    })
}

impl ClassStats {
    fn log_joint(&self, z: &[f64; N_FEATURES]) -> f64 {
        let mut acc = self.prior.ln();
        for k in 0..N_FEATURES {
            let v = self.var[k];
            acc -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (z[k] - self.mean[k]).powi(2) / v);
        }
        acc
    }
}

impl GaussianNBModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Format(format!("invalid model: {m}")));
        for c in [&self.blood_pool, &self.myocardium] {
            if !(c.prior > 0.0 && c.prior < 1.0) {
                return bad("prior outside (0,1)");
            }
            if c.var.iter().any(|&v| !(v >= VARIANCE_FLOOR) || !v.is_finite()) {
                return bad("variance below floor");
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return bad("non-finite mean");
            }
        }
        if (self.blood_pool.prior + self.myocardium.prior - 1.0).abs() > 1e-9 {
            return bad("priors do not sum to 1");
        }
        if self.feat_norm_sigma.iter().any(|&s| !(s > 0.0) || !s.is_finite())
            || self.feat_norm_mean.iter().any(|m| !m.is_finite())
        {
            return bad("bad normalization statistics");
        }
        if self.patch.iter().any(|&p| p == 0 || p % 2 == 0) {
            return bad("patch extents must be odd");
        }
        FractalMapConfig::parse_fingerprint(&self.map_config)?;
        Ok(())
    }

    pub fn normalize(&self, f: &FeatureVector) -> [f64; N_FEATURES] {
        let a = f.to_array();
        std::array::from_fn(|k| (a[k] - self.feat_norm_mean[k]) / self.feat_norm_sigma[k])
    }

    /// Log of prior times likelihood for (blood pool, myocardium).
    pub fn log_joint(&self, f: &FeatureVector) -> [f64; 2] {
        let z = self.normalize(f);
        [self.blood_pool.log_joint(&z), self.myocardium.log_joint(&z)]
    }

    pub fn predict(&self, f: &FeatureVector) -> Prediction {
        let [lb, lm] = self.log_joint(f);
        // Logistic form of the two-class softmax.
        let p_m = 1.0 / (1.0 + (lb - lm).exp());
        let p_b = 1.0 / (1.0 + (lm - lb).exp());
        if lm > lb {
            Prediction { label: Label::Myocardium, posterior: p_m, p_blood_pool: p_b, p_myocardium: p_m }
        } else {
            Prediction { label: Label::BloodPool, posterior: p_b, p_blood_pool: p_b, p_myocardium: p_m }
        }
    }

    pub fn map_config(&self) -> Result<FractalMapConfig> {
        FractalMapConfig::parse_fingerprint(&self.map_config)
    }

    pub fn to_text(&self) -> String {
        fn row(a: &[f64]) -> String {
            a.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
        }
        let mut s = String::new();
        let _ = writeln!(s, "classes: blood_pool myocardium");
        let _ = writeln!(s, "priors: {}", row(&[self.blood_pool.prior, self.myocardium.prior]));
        let _ = writeln!(s, "mean_blood_pool: {}", row(&self.blood_pool.mean));
        let _ = writeln!(s, "var_blood_pool: {}", row(&self.blood_pool.var));
        let _ = writeln!(s, "mean_myocardium: {}", row(&self.myocardium.mean));
        let _ = writeln!(s, "var_myocardium: {}", row(&self.myocardium.var));
        let _ = writeln!(s, "feat_norm_mean: {}", row(&self.feat_norm_mean));
        let _ = writeln!(s, "feat_norm_sigma: {}", row(&self.feat_norm_sigma));
        let _ = writeln!(s, "patch: {} {} {}", self.patch[0], self.patch[1], self.patch[2]);
        let _ = writeln!(s, "map_config: {}", self.map_config);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("malformed model line `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("model is missing `{k}`")))
        };
        let reals = |k: &str, n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = get(k)?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{t}` in `{k}`"))))
                .collect::<Result<_>>()?;
            if v.len() != n {
                return Err(Error::Format(format!("`{k}` needs {n} values, got {}", v.len())));
            }
            Ok(v)
        };
        let five = |k: &str| -> Result<[f64; N_FEATURES]> {
            Ok(reals(k, N_FEATURES)?.try_into().expect("length checked"))
        };
        if get("classes")?.split_whitespace().collect::<Vec<_>>() != ["blood_pool", "myocardium"] {
            return Err(Error::Format("classes must be `blood_pool myocardium`".into()));
        }
        let priors = reals("priors", 2)?;
        let patch: Vec<usize> = get("patch")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Format(format!("bad patch extent `{t}`"))))
            .collect::<Result<_>>()?;
        let patch: [usize; 3] = patch
            .try_into()
            .map_err(|_| Error::Format("patch needs 3 extents".into()))?;
        let model = GaussianNBModel {
            blood_pool: ClassStats { prior: priors[0], mean: five("mean_blood_pool")?, var: five("var_blood_pool")? },
            myocardium: ClassStats { prior: priors[1], mean: five("mean_myocardium")?, var: five("var_myocardium")? },
            feat_norm_mean: five("feat_norm_mean")?,
            feat_norm_sigma: five("feat_norm_sigma")?,
            patch,
            map_config: get("map_config")?.to_string(),
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &GaussianNBModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaussianNBModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GaussianNBModel::from_text(&text)
}

/// How a training set is drawn from a labeled frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSampling {
    /// Patches drawn per class.
    pub patches_per_class: usize,
    pub training_patch: [usize; 3],
    pub feature_patch: [usize; 3],
    pub frame: usize,
    pub seed: u64,
}

impl Default for PatchSampling {
    fn default() -> Self {
        Self {
            patches_per_class: 30,
            training_patch: DEFAULT_TRAINING_PATCH,
            feature_patch: DEFAULT_FEATURE_PATCH,
            frame: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub samples: Vec<(FeatureVector, Label)>,
    /// Distinct voxels covered by the patches.
    pub unique_voxels: usize,
    /// `unique_voxels` over all voxels of the sequence.
    pub fraction: f64,
}

/// Centers whose whole `patch` lies inside `label` within frame `t`.
fn patch_centers(truth: &Mask4, t: usize, label: Label, patch: [usize; 3]) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = truth.dims().spatial();
    let h = [patch[0] / 2, patch[1] / 2, patch[2] / 2];
    if nx < patch[0] || ny < patch[1] || nz < patch[2] {
        return Vec::new();
    }
    // Count of other-label voxels via a 3-D summed-area table.
    let frame = truth.frame(t);
    let (px, py) = (nx + 1, ny + 1);
    let mut sat = vec![0u32; px * py * (nz + 1)];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let bad = (frame[x + nx * (y + ny * z)] != label.code()) as u32;
                let i = |x: usize, y: usize, z: usize| x + px * (y + py * z);
                sat[i(x + 1, y + 1, z + 1)] = bad + sat[i(x, y + 1, z + 1)] + sat[i(x + 1, y, z + 1)]
                    + sat[i(x + 1, y + 1, z)]
                    + sat[i(x, y, z)]
                    - sat[i(x, y, z + 1)]
                    - sat[i(x, y + 1, z)]
                    - sat[i(x + 1, y, z)];
            }
        }
    }
    let box_sum = |x0: usize, y0: usize, z0: usize| {
        let (x1, y1, z1) = (x0 + patch[0], y0 + patch[1], z0 + patch[2]);
        let i = |x: usize, y: usize, z: usize| x + px * (y + py * z);
        sat[i(x1, y1, z1)] as i64 - sat[i(x0, y1, z1)] as i64 - sat[i(x1, y0, z1)] as i64
            - sat[i(x1, y1, z0)] as i64
            + sat[i(x0, y0, z1)] as i64
            + sat[i(x0, y1, z0)] as i64
            + sat[i(x1, y0, z0)] as i64
            - sat[i(x0, y0, z0)] as i64
    };
    let mut out = Vec::new();
    for z0 in 0..=nz - patch[2] {
        for y0 in 0..=ny - patch[1] {
            for x0 in 0..=nx - patch[0] {
                if box_sum(x0, y0, z0) == 0 {
                    out.push([x0 + h[0], y0 + h[1], z0 + h[2]]);
                }
            }
        }
    }
    out
}

/// Draws `patches_per_class` patches per class that lie entirely inside one
/// ground-truth label, and turns every voxel of each patch into a sample.
pub fn sample_training_set(map: &FractalMap, truth: &Mask4, cfg: &PatchSampling) -> Result<TrainingSet> {
    let d = map.fd.dims();
    if d.spatial() != truth.dims().spatial() || cfg.frame >= d.nt || cfg.frame >= truth.dims().nt {
        return Err(Error::DimMismatch("fractal map and label mask disagree".into()));
    }
    if cfg.training_patch.iter().any(|&p| p == 0 || p % 2 == 0) {
        return Err(Error::Config(format!("training patch must be odd, got {:?}", cfg.training_patch)));
    }
    let features = frame_features(map, cfg.frame, cfg.feature_patch)?;
    let mut rng = crate::fbm::rng(cfg.seed);
    let [nx, ny, _] = d.spatial();
    let mut covered = vec![false; d.frame_len()];
    let mut samples = Vec::new();
    for label in [Label::BloodPool, Label::Myocardium] {
        let centers = patch_centers(truth, cfg.frame, label, cfg.training_patch);
        if centers.len() < cfg.patches_per_class || cfg.patches_per_class == 0 {
            return Err(Error::Training(format!(
                "{} admissible {label:?} patches of size {:?}; requested {}",
                centers.len(),
                cfg.training_patch,
                cfg.patches_per_class
            )));
        }
        let mut picks = sample(&mut rng, centers.len(), cfg.patches_per_class).into_vec();
        picks.sort_unstable();
        let h = cfg.training_patch.map(|p| p / 2);
        for c in picks.into_iter().map(|i| centers[i]) {
            for z in c[2] - h[2]..=c[2] + h[2] {
                for y in c[1] - h[1]..=c[1] + h[1] {
                    for x in c[0] - h[0]..=c[0] + h[0] {
                        let i = x + nx * (y + ny * z);
                        covered[i] = true;
                        samples.push((features[i], label));
                    }
                }
            }
        }
    }
    let unique_voxels = covered.iter().filter(|&&c| c).count();
    Ok(TrainingSet {
        samples,
        unique_voxels,
        fraction: unique_voxels as f64 / d.len() as f64,
    })
}
