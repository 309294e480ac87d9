//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbmseg_core::bayes::{self, PatchSampling, TrainingMeta};
use fbmseg_core::fbm::{synth_fbm_1d, synth_fbm_field};
use fbmseg_core::features::lacunarity;
use fbmseg_core::fractal_map::{compute_fractal_map, FractalMapConfig};
use fbmseg_core::hurst::{fit_hurst, variogram, Variogram, Window};
use fbmseg_core::metrics::{dice, hausdorff, mad};
use fbmseg_core::moments::{fit_ellipse, OrientedRect, Slice2};
use fbmseg_core::parallel::with_threads;
use fbmseg_core::phantom::{generate_phantom, PhantomConfig};
use fbmseg_core::pipeline::{self, Boundary, PipelineConfig};
use fbmseg_core::Volume4;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn hurst_round_trip() -> Outcome {
    let start = Instant::now();
    let n = 8192;
    let mut lines = Vec::new();
    let mut ok = true;
    for target in [0.3, 0.5, 0.7] {
        let mut est = Vec::new();
        for seed in 0..20 {
            let path = synth_fbm_1d(n, target, 4 * n, 1.0, seed).map_err(err)?;
            let fit = fit_hurst(&variogram(&Window::from_series(&path.samples), 16).map_err(err)?).map_err(err)?;
            est.push(fit.h);
        }
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let worst = est.iter().map(|h| (h - target).abs()).fold(0.0, f64::max);
        ok &= (mean - target).abs() <= 0.05 && worst <= 0.12;
        lines.push(format!("H={target}: mean {mean:.4}, max dev {worst:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    check(ok, format!("{}; {secs:.1} s", lines.join("; ")))
}

fn exact_regression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = rng.random_range(0.01..0.99);
        let c: f64 = rng.random_range(0.01..100.0);
        let vg = Variogram::from_points((1..=16).map(|l| (l as f64, c * (l as f64).powf(h))).collect()).map_err(err)?;
        let fit = fit_hurst(&vg).map_err(err)?;
        worst = worst.max((fit.h - h).abs()).max((fit.log_c - c.ln()).abs());
    }
    check(worst <= 1e-10, format!("max error {worst:.2e}"))
}

fn quantized_field(seed: u64) -> Result<Volume4, String> {
    let v = synth_fbm_field([48, 48, 48], 0.6, seed).map_err(err)?;
    let q = 65536.0f32;
    v.map(|x| (x * q).round() / q).map_err(err)
}

fn affine_invariance() -> Outcome {
    let v = quantized_field(3)?;
    let w = v.map(|x| 2.0 * x + 10.0).map_err(err)?;
    let cfg = FractalMapConfig::default();
    let a = compute_fractal_map(&v, &cfg).map_err(err)?;
    let b = compute_fractal_map(&w, &cfg).map_err(err)?;
    let worst = a.fd.data().iter().zip(b.fd.data()).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max);
    check(worst <= 1e-9, format!("max |Δfd| {worst:.2e} over {} voxels", a.fd.data().len()))
}

fn calibration_config() -> FractalMapConfig {
    FractalMapConfig { window: [9, 9, 9], scales: 4, ..Default::default() }
}

fn calibration_maps() -> Result<Vec<Volume4>, String> {
    (0..5u64)
        .map(|seed| {
            let f = synth_fbm_field([64, 64, 64], 0.7, seed).map_err(err)?;
            Ok(compute_fractal_map(&f, &calibration_config()).map_err(err)?.fd)
        })
        .collect()
}

fn map_calibration() -> Outcome {
    let start = Instant::now();
    let maps = calibration_maps()?;
    let means: Vec<f64> =
        maps.iter().map(|m| m.data().iter().map(|&v| v as f64).sum::<f64>() / m.data().len() as f64).collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    check((mean - 2.3).abs() <= 0.15 && secs < 60.0, format!("mean fd {mean:.4} (per seed {means:.3?}); {secs:.1} s"))
}

fn lacunarity_checks() -> Outcome {
    let constant = lacunarity(&[2.4; 125]).map_err(err)?;
    let two = lacunarity(&[1.0, 3.0, 3.0, 1.0, 1.0, 3.0]).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut min = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..10.0)).collect();
        min = min.min(lacunarity(&v).map_err(err)?);
    }
    check(constant == 1.0 && two == 1.25 && min >= 1.0, format!("constant {constant}, {{1,3}} {two}, random min {min:.6}"))
}

fn ellipse_fit() -> Outcome {
    let rect = OrientedRect { center: (50.3, 49.6), theta: 30f64.to_radians(), half_l: 20.0, half_w: 10.0 };
    let s = Slice2::from_fn(100, 100, |x, y| {
        rect.contains(x as f64 + 1e-9, y as f64 + 1e-9) && rect.contains(x as f64 - 1e-9, y as f64 - 1e-9)
    });
    let f = fit_ellipse(&s).map_err(err)?;

    // Brute-force oracle: covariance of pixel coordinates, then its principal axes.
    let pts: Vec<(f64, f64)> =
        (0..100).flat_map(|y| (0..100).map(move |x| (x, y))).filter(|&(x, y)| s.get(x, y)).map(|(x, y)| (x as f64, y as f64)).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cxx = pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / n;
    let cyy = pts.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / n;
    let cxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / n;
    let oracle_theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    let root = ((cxx - cyy).powi(2) / 4.0 + cxy * cxy).sqrt();
    let oracle_l = (12.0 * ((cxx + cyy) / 2.0 + root)).sqrt();
    let oracle_w = (12.0 * ((cxx + cyy) / 2.0 - root)).sqrt();

    let deg = f.theta.to_degrees();
    let ok = (deg - 30.0).abs() <= 1.0
        && (f.l / 40.0 - 1.0).abs() <= 0.02
        && (f.w / 20.0 - 1.0).abs() <= 0.02
        && (f.theta - oracle_theta).abs() < 1e-9
        && (f.l - oracle_l).abs() < 1e-9
        && (f.w - oracle_w).abs() < 1e-9;
    check(ok, format!("theta {deg:.3}°, l {:.3}, w {:.3} (oracle {:.3}°, {oracle_l:.3}, {oracle_w:.3})", f.l, f.w, oracle_theta.to_degrees()))
}

fn random_blob_mask(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut m = vec![false; nx * ny * nz];
    for _ in 0..rng.random_range(1..4) {
        let c = [rng.random_range(0.0..nx as f64), rng.random_range(0.0..ny as f64), rng.random_range(0.0..nz as f64)];
        let r = [rng.random_range(2.0..8.0), rng.random_range(2.0..8.0), rng.random_range(2.0..6.0)];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let q = (x as f64 - c[0]) / r[0];
                    let p = (y as f64 - c[1]) / r[1];
                    let s = (z as f64 - c[2]) / r[2];
                    if q * q + p * p + s * s <= 1.0 {
                        m[(z * ny + y) * nx + x] = true;
                    }
                }
            }
        }
    }
    let flip = rng.random_range(0.0..0.1);
    for v in m.iter_mut() {
        if rng.random_bool(flip) {
            *v = !*v;
        }
    }
    m
}

fn metrics_sanity() -> Outcome {
    let dims = [24, 20, 16];
    let spacing = [0.8, 1.1, 1.5];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut self_ok = true;
    let mut order_ok = true;
    for _ in 0..100 {
        let a = random_blob_mask(&mut rng, dims);
        let b = random_blob_mask(&mut rng, dims);
        if !a.contains(&true) || !b.contains(&true) {
            continue;
        }
        self_ok &= dice(&a, &a).map_err(err)? == 1.0
            && hausdorff(&a, &a, dims, spacing).map_err(err)? == 0.0
            && mad(&a, &a, dims, spacing).map_err(err)? == 0.0;
        order_ok &= mad(&a, &b, dims, spacing).map_err(err)? <= hausdorff(&a, &b, dims, spacing).map_err(err)?;
    }

    let sd = [30, 12, 12];
    let cube = |x0: usize| -> Vec<bool> {
        let mut m = vec![false; 30 * 12 * 12];
        for z in 3..9 {
            for y in 3..9 {
                for x in x0..x0 + 10 {
                    m[(z * 12 + y) * 30 + x] = true;
                }
            }
        }
        m
    };
    let hd = hausdorff(&cube(5), &cube(8), sd, [0.7, 0.7, 0.7]).map_err(err)?;
    let shift_ok = (hd - 2.1).abs() <= 1e-12;
    check(self_ok && order_ok && shift_ok, format!("self-identity {self_ok}, mad ≤ hd {order_ok}, shifted HD {hd:?} mm"))
}

struct EndToEnd {
    endo: Vec<u8>,
    epi: Vec<u8>,
    report: String,
    fraction: f64,
    endo_min: f64,
    epi_min: f64,
    endo_mean: f64,
    epi_mean: f64,
    ef: f64,
    secs: f64,
}

fn end_to_end_run() -> Result<EndToEnd, String> {
    let start = Instant::now();
    let (vol, truth) = generate_phantom(&PhantomConfig::default()).map_err(err)?;
    let cfg = PipelineConfig::default();
    let map = compute_fractal_map(&vol, &cfg.map).map_err(err)?;
    let set = bayes::sample_training_set(&map, &truth, &PatchSampling::default()).map_err(err)?;
    let model = bayes::train(&set.samples, &TrainingMeta { patch: bayes::DEFAULT_FEATURE_PATCH, map_config: cfg.map })
        .map_err(err)?;
    let res = pipeline::segment_map(&map, &model, &cfg).map_err(err)?;
    let report = pipeline::evaluate(&res, &truth).map_err(err)?;
    Ok(EndToEnd {
        endo: res.endo.labels().to_vec(),
        epi: res.epi.labels().to_vec(),
        report: format!("{}{}\n", report.to_table(), model.to_text()),
        fraction: set.unique_voxels as f64 / vol.data().len() as f64,
        endo_min: report.min_dice(Boundary::Endocardium),
        epi_min: report.min_dice(Boundary::Epicardium),
        endo_mean: report.mean_dice(Boundary::Endocardium),
        epi_mean: report.mean_dice(Boundary::Epicardium),
        ef: res.ejection_fraction,
        secs: start.elapsed().as_secs_f64(),
    })
}

fn end_to_end(r: &EndToEnd) -> Outcome {
    let ok = r.fraction <= 0.005 && r.endo_min >= 0.85 && r.epi_min >= 0.85 && r.secs < 300.0;
    check(
        ok,
        format!(
            "training fraction {:.3}%, endo Dice mean {:.4} min {:.4}, epi Dice mean {:.4} min {:.4}, EF {:.3}; {:.1} s",
            100.0 * r.fraction,
            r.endo_mean,
            r.endo_min,
            r.epi_mean,
            r.epi_min,
            r.ef,
            r.secs
        ),
    )
}

fn bits(v: &[Volume4]) -> Vec<Vec<u32>> {
    v.iter().map(|m| m.data().iter().map(|x| x.to_bits()).collect()).collect()
}

fn determinism(e2e_eight: &EndToEnd) -> Outcome {
    let m1 = with_threads(Some(1), calibration_maps).map_err(err)??;
    let m8 = with_threads(Some(8), calibration_maps).map_err(err)??;
    let maps_same = bits(&m1) == bits(&m8);
    let one = with_threads(Some(1), end_to_end_run).map_err(err)??;
    let seg_same = one.endo == e2e_eight.endo && one.epi == e2e_eight.epi && one.report == e2e_eight.report;
    check(maps_same && seg_same, format!("calibration maps identical {maps_same}, masks and report identical {seg_same}"))
}

fn postprocess_idempotence() -> Outcome {
    let dims = [32, 28, 20];
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut fails = 0;
    let mut nonempty = 0;
    for _ in 0..100 {
        let m = random_blob_mask(&mut rng, dims);
        let once = pipeline::postprocess(&m, dims, &cfg);
        let twice = pipeline::postprocess(&once, dims, &cfg);
        if once != twice {
            fails += 1;
        }
        if once.contains(&true) {
            nonempty += 1;
        }
    }
    check(fails == 0, format!("{fails} of 100 masks changed on a second pass ({nonempty} non-empty)"))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        let (tag, detail) = match o {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n:>2} {tag} {name}: {detail}");
    };

    report(1, "hurst round-trip", hurst_round_trip());
    report(2, "exact regression", exact_regression());
    report(3, "affine invariance", affine_invariance());
    report(4, "map calibration", map_calibration());
    report(5, "lacunarity", lacunarity_checks());
    report(6, "ellipse fit", ellipse_fit());
    report(7, "metrics", metrics_sanity());
    let e2e = with_threads(Some(8), end_to_end_run).map_err(err).and_then(|r| r);
    match &e2e {
        Ok(r) => {
            report(8, "end-to-end phantom", end_to_end(r));
            report(9, "determinism", determinism(r));
        }
        Err(e) => {
            report(8, "end-to-end phantom", Err(e.clone()));
            report(9, "determinism", Err("end-to-end run failed".into()));
        }
    }
    report(10, "postprocess idempotence", postprocess_idempotence());

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
