use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fbmseg_core::bayes::{self, PatchSampling, TrainingMeta};
use fbmseg_core::fbm;
use fbmseg_core::fractal_map::{compute_fractal_map, FractalMapConfig, MapStats};
use fbmseg_core::grid::Padding;
use fbmseg_core::hurst::{fit_hurst_clamped, variogram, HurstClamp, Window};
use fbmseg_core::moments::{disc_stack_volume, fit_ellipse, Slice2};
use fbmseg_core::parallel::with_threads;
use fbmseg_core::phantom::{generate_phantom, PhantomConfig};
use fbmseg_core::pipeline::{self, BaseSlice, PipelineConfig, Refine};
use fbmseg_core::{load_mask, load_volume, save_mask, save_volume, Dims4, Error, Label, Result};

#[derive(Parser)]
#[command(name = "fbmseg", version, about = "fBm texture segmentation of 3-D + time volumes")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete fBm path from the truncated moving-average representation.
    #[command(name = "synth-1d")]
    Synth1d(Synth1dArgs),
    /// Isotropic 3-D fBm field.
    #[command(name = "synth-field")]
    SynthField(SynthFieldArgs),
    /// Hurst index of a series or a whole frame.
    Hurst(HurstArgs),
    /// Per-voxel fractal-dimension map.
    Map(MapArgs),
    /// Train the voxel classifier from a labeled volume.
    Train(TrainArgs),
    /// Segment cavity and wall in every frame.
    Segment(SegmentArgs),
    /// Score a predicted mask against a reference.
    Eval(EvalArgs),
    /// Per-slice equivalent ellipses and disc-stack volume of one label.
    Moments(MomentsArgs),
    /// Synthetic speckled ventricle sequence with ground truth.
    Phantom(PhantomArgs),
}

#[derive(Args)]
struct Synth1dArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    hurst: f64,
    /// Truncation of the moving-average history (default 4n).
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Text file receiving one sample per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthFieldArgs {
    /// nx,ny,nz
    #[arg(long, value_parser = parse_dims3, default_value = "64,64,64")]
    dims: [usize; 3],
    #[arg(long)]
    hurst: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HurstArgs {
    /// Volume header, or a text file with one sample per line.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 16)]
    scales: usize,
    /// Frame used when the input is a volume.
    #[arg(long, default_value_t = 0)]
    frame: usize,
}

#[derive(Args, Clone)]
struct MapFlags {
    /// Window extents wx,wy,wz (odd).
    #[arg(long, value_parser = parse_dims3, default_value = "7,9,7")]
    window: [usize; 3],
    #[arg(long, default_value_t = 4)]
    scales: usize,
    /// mirror or clamp
    #[arg(long, default_value = "mirror")]
    padding: Padding,
    #[arg(long, default_value_t = 0.01)]
    h_min: f64,
    #[arg(long, default_value_t = 1.0)]
    h_max: f64,
    #[arg(long, default_value_t = 2)]
    euclidean_m: u32,
}

impl MapFlags {
    fn config(&self) -> Result<FractalMapConfig> {
        let cfg = FractalMapConfig {
            window: self.window,
            scales: self.scales,
            padding: self.padding,
            clamp: HurstClamp::new(self.h_min, self.h_max)?,
            euclidean_m: self.euclidean_m,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct MapArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional volume receiving the per-voxel regression residual.
    #[arg(long)]
    rss_out: Option<PathBuf>,
    #[command(flatten)]
    map: MapFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Patches drawn per class.
    #[arg(long, default_value_t = 30)]
    patches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Frame the patches are drawn from.
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long, value_parser = parse_dims3, default_value = "7,9,7")]
    training_patch: [usize; 3],
    #[arg(long, value_parser = parse_dims3, default_value = "5,5,5")]
    feature_patch: [usize; 3],
    #[command(flatten)]
    map: MapFlags,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out_endo: PathBuf,
    #[arg(long)]
    out_epi: PathBuf,
    /// Per-frame volume table.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    min_component: usize,
    #[arg(long, default_value_t = 2)]
    closing: usize,
    /// ellipse or none
    #[arg(long, default_value = "ellipse")]
    refine: Refine,
    /// auto or a slice index
    #[arg(long, default_value = "auto", value_parser = parse_base_slice)]
    base_slice: BaseSlice,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Label code (1 blood pool, 2 myocardium).
    #[arg(long)]
    label: u8,
    #[arg(long, default_value_t = 0)]
    frame: usize,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    out_vol: PathBuf,
    #[arg(long)]
    out_mask: PathBuf,
    /// nx,ny,nz,nt
    #[arg(long, value_parser = parse_dims4, default_value = "96,96,96,8")]
    dims: Dims4,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.26)]
    contraction: f64,
    /// Cavity semi-axes in mm at end-diastole.
    #[arg(long, value_parser = parse_reals3, default_value = "25,25,45")]
    semi_axes: [f64; 3],
    #[arg(long, default_value_t = 10.0)]
    wall: f64,
    #[arg(long, default_value_t = 10.0)]
    base_z: f64,
    #[arg(long, default_value_t = 0.9)]
    h_blood: f64,
    #[arg(long, default_value_t = 0.2)]
    h_myo: f64,
    #[arg(long, default_value_t = 1)]
    speckle_shape: u32,
}

fn parse_usizes(s: &str, n: usize) -> std::result::Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated values, got {}", v.len()));
    }
    Ok(v)
}

fn parse_dims3(s: &str) -> std::result::Result<[usize; 3], String> {
    let v = parse_usizes(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_dims4(s: &str) -> std::result::Result<Dims4, String> {
    let v = parse_usizes(s, 4)?;
    Ok(Dims4::new(v[0], v[1], v[2], v[3]))
}

fn parse_reals3(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected 3 comma-separated values".to_string())
}

fn parse_base_slice(s: &str) -> std::result::Result<BaseSlice, String> {
    if s == "auto" {
        Ok(BaseSlice::Auto)
    } else {
        s.parse().map(BaseSlice::Index).map_err(|_| format!("expected `auto` or a slice index, got `{s}`"))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn synth_1d(a: &Synth1dArgs) -> Result<()> {
    let b = a.truncation.unwrap_or_else(|| fbm::default_truncation(a.n));
    let path = fbm::synth_fbm_1d(a.n, a.hurst, b, a.sigma, a.seed)?;
    if let Some(out) = &a.out {
        let mut text = String::with_capacity(path.samples.len() * 20);
        for v in &path.samples {
            let _ = writeln!(text, "{v:?}");
        }
        write_text(out, &text)?;
    }
    println!("n={}", a.n);
    println!("hurst={}", a.hurst);
    println!("truncation={b}");
    println!("sigma={}", a.sigma);
    println!("seed={}", a.seed);
    Ok(())
}

fn synth_field(a: &SynthFieldArgs) -> Result<()> {
    let vol = fbm::synth_fbm_field(a.dims, a.hurst, a.seed)?;
    save_volume(&vol, &a.out)?;
    println!("dims={},{},{}", a.dims[0], a.dims[1], a.dims[2]);
    println!("hurst={}", a.hurst);
    println!("seed={}", a.seed);
    Ok(())
}

fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| Error::Format(format!("bad sample `{t}`"))))
        .collect()
}

fn hurst(a: &HurstArgs) -> Result<()> {
    let window = match load_volume(&a.input) {
        Ok(vol) => {
            if a.frame >= vol.dims().nt {
                return Err(Error::Config(format!("frame {} out of range", a.frame)));
            }
            let values = vol.frame(a.frame).iter().map(|&v| v as f64).collect();
            Window::new(vol.dims().spatial(), values)?
        }
        Err(Error::Format(_)) => Window::from_series(&read_series(&a.input)?),
        Err(e) => return Err(e),
    };
    let fit = fit_hurst_clamped(&variogram(&window, a.scales)?, HurstClamp::default())?;
    println!("h={}", fit.h);
    println!("slope={}", fit.slope);
    println!("log_c={}", fit.log_c);
    println!("rss={}", fit.rss);
    println!("n_scales={}", fit.n_scales);
    Ok(())
}

fn map(a: &MapArgs) -> Result<()> {
    let cfg = a.map.config()?;
    let vol = load_volume(&a.input)?;
    let m = compute_fractal_map(&vol, &cfg)?;
    save_volume(&m.fd, &a.out)?;
    if let Some(p) = &a.rss_out {
        save_volume(&m.rss, p)?;
    }
    let s = MapStats::of(m.fd.data().iter().map(|&v| v as f64))?;
    println!("map_config={}", cfg.fingerprint());
    println!("fd_mean={}", s.mean);
    println!("fd_min={}", s.min);
    println!("fd_max={}", s.max);
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.map.config()?;
    let vol = load_volume(&a.input)?;
    let truth = load_mask(&a.labels)?;
    if !vol.geometry().same_grid(truth.geometry()) {
        return Err(Error::DimMismatch("volume and labels are on different grids".into()));
    }
    let d = vol.dims();
    if a.frame >= d.nt {
        return Err(Error::Config(format!("frame {} out of range", a.frame)));
    }
    // Only the training frame is needed.
    let g = fbmseg_core::Geometry::new(Dims4::new(d.nx, d.ny, d.nz, 1), vol.spacing_mm(), vol.geometry().frame_interval_s)?;
    let one = fbmseg_core::Volume4::new(g, vol.frame(a.frame).to_vec())?;
    let one_truth = fbmseg_core::Mask4::new(g, truth.frame(a.frame).to_vec())?;
    let map = compute_fractal_map(&one, &cfg)?;
    let sampling = PatchSampling {
        patches_per_class: a.patches,
        training_patch: a.training_patch,
        feature_patch: a.feature_patch,
        frame: 0,
        seed: a.seed,
    };
    let set = bayes::sample_training_set(&map, &one_truth, &sampling)?;
    let model = bayes::train(&set.samples, &TrainingMeta { patch: a.feature_patch, map_config: cfg })?;
    bayes::save_model(&model, &a.out)?;
    let fraction = set.unique_voxels as f64 / d.len() as f64;
    println!("samples={}", set.samples.len());
    println!("training_voxels={}", set.unique_voxels);
    println!("training_fraction={fraction}");
    println!("map_config={}", model.map_config);
    Ok(())
}

fn segment(a: &SegmentArgs) -> Result<()> {
    let model = bayes::load_model(&a.model)?;
    let cfg = PipelineConfig {
        map: model.map_config()?,
        min_component_voxels: a.min_component,
        closing_radius: a.closing,
        refine: a.refine,
        base_slice: a.base_slice,
    };
    let vol = load_volume(&a.input)?;
    let res = pipeline::segment(&vol, &model, &cfg)?;
    save_mask(&res.endo, &a.out_endo)?;
    save_mask(&res.epi, &a.out_epi)?;
    if let Some(p) = &a.report {
        let mut text = String::from("frame volume_mm3 endo_slices epi_slices\n");
        for (t, v) in res.volumes_mm3.iter().enumerate() {
            let _ = writeln!(text, "{t} {v:.3} {} {}", res.endo_trace[t].len(), res.epi_trace[t].len());
        }
        write_text(p, &text)?;
    }
    let vols: Vec<String> = res.volumes_mm3.iter().map(|v| format!("{v:.3}")).collect();
    println!("frames={}", res.volumes_mm3.len());
    println!("volumes_mm3={}", vols.join(","));
    println!("ejection_fraction={:.6}", res.ejection_fraction);
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let pred = load_mask(&a.pred)?;
    let truth = load_mask(&a.truth)?;
    let report = pipeline::evaluate_masks(&pred, &truth)?;
    write_text(&a.report, &report.to_table())?;
    for b in [pipeline::Boundary::Endocardium, pipeline::Boundary::Epicardium] {
        println!("{}_dice_mean={:.6}", b.name(), report.mean_dice(b));
        println!("{}_dice_min={:.6}", b.name(), report.min_dice(b));
    }
    Ok(())
}

fn moments(a: &MomentsArgs) -> Result<()> {
    let mask = load_mask(&a.input)?;
    let label = Label::from_code(a.label).ok_or_else(|| Error::Config(format!("unknown label {}", a.label)))?;
    if a.frame >= mask.dims().nt {
        return Err(Error::Config(format!("frame {} out of range", a.frame)));
    }
    println!("z xc yc theta_deg l w");
    for z in 0..mask.dims().nz {
        let s = Slice2::from_mask(&mask, a.frame, z, &[label.code()]);
        match fit_ellipse(&s) {
            Ok(f) => println!(
                "{z} {:.4} {:.4} {:.4} {:.4} {:.4}",
                f.centroid.0,
                f.centroid.1,
                f.theta.to_degrees(),
                f.l,
                f.w
            ),
            Err(Error::EmptyObject) | Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    println!("volume_mm3={:.3}", disc_stack_volume(&mask, label, a.frame));
    Ok(())
}

fn phantom(a: &PhantomArgs) -> Result<()> {
    let cfg = PhantomConfig {
        dims: a.dims,
        endo_semi_axes_mm: a.semi_axes,
        wall_thickness_mm: a.wall,
        base_z_mm: a.base_z,
        contraction: a.contraction,
        h_blood: a.h_blood,
        h_myo: a.h_myo,
        speckle_shape: a.speckle_shape,
        seed: a.seed,
        ..Default::default()
    };
    let (vol, mask) = generate_phantom(&cfg)?;
    save_volume(&vol, &a.out_vol)?;
    save_mask(&mask, &a.out_mask)?;
    let d = cfg.dims;
    println!("dims={},{},{},{}", d.nx, d.ny, d.nz, d.nt);
    println!("seed={}", cfg.seed);
    println!("contraction={}", cfg.contraction);
    println!("cavity_volume_ed_mm3={:.3}", cfg.analytic_cavity_volume(0));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    with_threads(cli.threads, || match &cli.command {
        Command::Synth1d(a) => synth_1d(a),
        Command::SynthField(a) => synth_field(a),
        Command::Hurst(a) => hurst(a),
        Command::Map(a) => map(a),
        Command::Train(a) => train(a),
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Moments(a) => moments(a),
        Command::Phantom(a) => phantom(a),
    })?
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fbmseg: {e}");
            ExitCode::from(1)
        }
    }
}
