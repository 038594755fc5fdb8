use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use dynsplat::error::Error;
use dynsplat::init::{combine_holistic, holistic_init, reproject_frames, write_ply, Aabb};
use dynsplat::raster;
use dynsplat::scene::{frame_times, generate_synthetic, load_scene, read_manifest, save_color_png, save_depth_png, MotionFamily, Scene, SyntheticSpec};
use dynsplat::train::{load_checkpoint, psnr, save_checkpoint, ssim, EvalReport, FrameMetrics, StepReport, Trainer};
use dynsplat::FrameRecord;
use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{BenchArgs, Cli, Command, EvalArgs, GlobalArgs, InitArgs, Motion, RenderArgs, Split, SynthArgs, TrainArgs};

pub const FINAL_CHECKPOINT: &str = "final.splf";
pub const WARMUP_CHECKPOINT: &str = "warmup.splf";
pub const FAILED_CHECKPOINT: &str = "failed.splf";

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting thread pool")?;
    }
    let config = load_config(&cli.global)?;
    match cli.command {
        Command::Synth(a) => synth(&a, cli.global.seed.unwrap_or(0)),
        Command::Init(a) => init(&a, &config),
        Command::Train(a) => train(&a, &config),
        Command::Render(a) => render(&a),
        Command::Eval(a) => eval(&a),
        Command::Bench(a) => bench(&a, &config),
    }
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    config.apply_flags(global.seed, global.deterministic);
    Ok(config)
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let spec = SyntheticSpec {
        gaussians: args.gaussians,
        width: args.width,
        height: args.height,
        frames: args.frames,
        motion: match args.motion {
            Motion::Rigid => MotionFamily::Rigid,
            Motion::Pulsation => MotionFamily::Pulsation,
        },
        amplitude: args.amplitude,
        seed,
        focal: args.focal,
        depth: args.depth,
        tool: args.tool,
    };
    let scene = generate_synthetic(&spec)?;
    let manifest = scene.write(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    std::fs::write(args.out.join("spec.json"), serde_json::to_string_pretty(&spec)?)?;
    info!(
        "wrote {} frames of {}x{} with {} Gaussians to {} (depth scale {:e})",
        manifest.frames.len(),
        spec.width,
        spec.height,
        spec.gaussians,
        args.out.display(),
        manifest.depth_scale
    );
    Ok(())
}

fn training_frames(scene: &Scene<f32>) -> Vec<FrameRecord<f32>> {
    scene.train.iter().map(|&i| scene.frames[i].clone()).collect()
}

fn init(args: &InitArgs, config: &RunConfig) -> Result<()> {
    config.init.validate()?;
    let scene = load_scene::<f32>(&args.scene)?;
    let frames = training_frames(&scene);
    let (clouds, skipped) = reproject_frames(&frames)?;
    ensure!(!clouds.is_empty(), "no training frame has kept pixels with positive depth");
    let total: usize = clouds.iter().map(|c| c.len()).sum();
    let points = combine_holistic(&clouds, config.init.keep_fraction, config.init.seed)?;
    write_ply(&args.out, &points)?;
    let bounds = Aabb::from_points(&points.positions).context("empty point cloud")?;
    println!("training frames   {}", frames.len());
    println!("skipped frames    {}", skipped.len());
    println!("reprojected       {total}");
    println!("kept              {} ({:.3}%)", points.len(), 100.0 * points.len() as f64 / total as f64);
    println!("bounds min        {:?}", bounds.min);
    println!("bounds max        {:?}", bounds.max);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: usize,
    gaussians: usize,
    seconds: f64,
    test: Option<EvalReport>,
    train_psnr: f64,
}

fn train(args: &TrainArgs, config: &RunConfig) -> Result<()> {
    let scene = load_scene::<f32>(&args.scene)?;
    let mut trainer = match &args.resume {
        Some(path) => {
            let t = load_checkpoint::<f32>(path, Some(&config.train))?;
            info!("resuming from {} at iteration {}", path.display(), t.iteration);
            Trainer { config: config.train.clone(), ..t }
        }
        None => {
            let cloud = holistic_init(&training_frames(&scene), &config.init)?;
            info!("initialized {} Gaussians", cloud.len());
            Trainer::new(config.train.clone(), cloud)?
        }
    };
    let out = &args.out;
    std::fs::create_dir_all(out.join("checkpoints"))?;
    std::fs::write(out.join("config.toml"), config.to_flat()?)?;
    let mut log = BufWriter::new(File::create(out.join("log.csv"))?);
    writeln!(log, "{}", StepReport::CSV_HEADER)?;
    let mut eval_log = BufWriter::new(File::create(out.join("eval.csv"))?);
    writeln!(eval_log, "iter,psnr,ssim")?;

    let start = Instant::now();
    let cfg = trainer.config.clone();
    while !trainer.is_done() {
        let f = trainer.next_frame(&scene.train);
        let report = match trainer.train_step(&scene.frames[f]) {
            Ok(r) => r,
            Err(e @ Error::NonFinite { .. }) => {
                log.flush()?;
                let dump = out.join(FAILED_CHECKPOINT);
                save_checkpoint(&trainer, &dump)?;
                return Err(e).context(format!("training diverged; state saved to {}", dump.display()));
            }
            Err(e) => return Err(e.into()),
        };
        writeln!(log, "{}", report.csv_row())?;
        let it = trainer.iteration;
        if it == cfg.warmup_iters {
            save_checkpoint(&trainer, &out.join(WARMUP_CHECKPOINT))?;
        }
        if cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 && it < cfg.total_iters {
            save_checkpoint(&trainer, &out.join("checkpoints").join(format!("iter_{it:06}.splf")))?;
        }
        if cfg.eval_interval > 0 && it % cfg.eval_interval == 0 && !scene.test.is_empty() {
            let r = trainer.evaluate(&scene.frames, &scene.test)?;
            writeln!(eval_log, "{it},{},{}", r.mean_psnr, r.mean_ssim)?;
            info!("iteration {it}: test PSNR {:.2} dB, SSIM {:.4}", r.mean_psnr, r.mean_ssim);
        } else if it % 100 == 0 {
            info!("iteration {it}: loss {:.5}", report.loss.total);
        }
    }
    log.flush()?;
    eval_log.flush()?;
    save_checkpoint(&trainer, &out.join(FINAL_CHECKPOINT))?;
    let test = if scene.test.is_empty() { None } else { Some(trainer.evaluate(&scene.frames, &scene.test)?) };
    let summary = TrainSummary {
        iterations: trainer.iteration,
        gaussians: trainer.cloud.len(),
        seconds: start.elapsed().as_secs_f64(),
        train_psnr: trainer.evaluate(&scene.frames, &scene.train)?.mean_psnr,
        test,
    };
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&summary)?)?;
    match &summary.test {
        Some(t) => info!("done in {:.1}s: test PSNR {:.2} dB, SSIM {:.4}", summary.seconds, t.mean_psnr, t.mean_ssim),
        None => info!("done in {:.1}s: train PSNR {:.2} dB", summary.seconds, summary.train_psnr),
    }
    Ok(())
}

fn depth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_depth.png"))
}

fn render(args: &RenderArgs) -> Result<()> {
    let trainer = load_checkpoint::<f32>(&args.checkpoint, None)?;
    let (_, manifest) = read_manifest(&args.scene)?;
    let (frame, time) = match (args.frame, args.time) {
        (Some(i), _) => {
            ensure!(i < manifest.frames.len(), "frame {i} out of range ({} frames)", manifest.frames.len());
            (i, frame_times(&manifest)?[i])
        }
        (None, Some(t)) => {
            ensure!((0.0..=1.0).contains(&t), "time {t} outside [0, 1]");
            (0, t)
        }
        (None, None) => bail!("pass --time or --frame"),
    };
    let camera = manifest.camera::<f32>(frame)?;
    let out = trainer.render(&camera, time as f32)?;
    save_color_png(&args.out, &out.color)?;
    let depth_out = args.depth_out.clone().unwrap_or_else(|| depth_path(&args.out));
    save_depth_png(&depth_out, &out.depth, manifest.depth_scale, frame)?;
    info!("rendered t = {time} to {} and {}", args.out.display(), depth_out.display());
    Ok(())
}

fn split_indices(scene: &Scene<f32>, split: Split) -> Vec<usize> {
    match split {
        Split::Train => scene.train.clone(),
        Split::Test => scene.test.clone(),
        Split::All => (0..scene.frames.len()).collect(),
    }
}

fn eval(args: &EvalArgs) -> Result<()> {
    let scene = load_scene::<f32>(&args.scene)?;
    let indices = split_indices(&scene, args.split);
    ensure!(!indices.is_empty(), "the selected split has no frames");
    let report = if let Some(path) = &args.checkpoint {
        load_checkpoint::<f32>(path, None)?.evaluate(&scene.frames, &indices)?
    } else if let Some(other) = &args.against {
        let other = load_scene::<f32>(other)?;
        ensure!(other.frames.len() == scene.frames.len(), "frame counts differ: {} vs {}", scene.frames.len(), other.frames.len());
        let mut frames = Vec::with_capacity(indices.len());
        for &i in &indices {
            let (a, b) = (&scene.frames[i], &other.frames[i]);
            ensure!(a.image.same_shape(&b.image), "frame {i}: image sizes differ");
            frames.push(FrameMetrics {
                index: i,
                time: a.time as f64,
                psnr: psnr(&b.image, &a.image, Some(&a.mask)),
                ssim: ssim(&b.image, &a.image, Some(&a.mask)),
                psnr_unmasked: psnr(&b.image, &a.image, None),
                ssim_unmasked: ssim(&b.image, &a.image, None),
            });
        }
        EvalReport::from_frames(frames)
    } else {
        bail!("pass --checkpoint or --against");
    };
    println!("{:>6} {:>8} {:>9} {:>8} {:>9} {:>8}", "frame", "time", "psnr", "ssim", "psnr_all", "ssim_all");
    for m in &report.frames {
        println!("{:>6} {:>8.4} {:>9.3} {:>8.5} {:>9.3} {:>8.5}", m.index, m.time, m.psnr, m.ssim, m.psnr_unmasked, m.ssim_unmasked);
    }
    println!(
        "{:>6} {:>8} {:>9.3} {:>8.5} {:>9.3} {:>8.5}",
        "mean", "", report.mean_psnr, report.mean_ssim, report.mean_psnr_unmasked, report.mean_ssim_unmasked
    );
    if let Some(out) = &args.out {
        std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn bench(args: &BenchArgs, config: &RunConfig) -> Result<()> {
    ensure!(args.repeats > 0, "--repeats must be positive");
    let spec = SyntheticSpec {
        gaussians: args.gaussians,
        width: args.width,
        height: args.height,
        frames: 1,
        amplitude: 0.0,
        ..Default::default()
    };
    let scene = generate_synthetic(&spec)?;
    let cloud = scene.cloud.cast::<f32>();
    let frame = scene.frames[0].cast::<f32>();
    let raster_cfg = config.train.raster_config();
    let (out, _) = raster::forward(&cloud, &frame.camera, &raster_cfg);
    let start = Instant::now();
    for _ in 0..args.repeats {
        std::hint::black_box(raster::forward(&cloud, &frame.camera, &raster_cfg));
    }
    let forward = start.elapsed().as_secs_f64() / args.repeats as f64;
    let threads = rayon::current_num_threads();
    println!("scene             {} Gaussians, {}x{}", spec.gaussians, spec.width, spec.height);
    println!("threads           {threads}");
    println!("mean contributors {:.1}", out.contributors.iter().map(|&c| c as f64).sum::<f64>() / out.contributors.len() as f64);
    println!("forward           {:.2} ms, {:.1} frames/s", forward * 1e3, 1.0 / forward);
    if args.backward {
        let grad_color = dynsplat::image::Image::filled(spec.width, spec.height, 3, 1e-3f32);
        let grad_depth = dynsplat::image::Image::filled(spec.width, spec.height, 1, 1e-3f32);
        let start = Instant::now();
        for _ in 0..args.repeats {
            let (_, state) = raster::forward(&cloud, &frame.camera, &raster_cfg);
            std::hint::black_box(raster::backward(&cloud, &frame.camera, &state, &grad_color, &grad_depth)?);
        }
        let both = start.elapsed().as_secs_f64() / args.repeats as f64;
        println!("forward+backward  {:.2} ms, {:.1} steps/s", both * 1e3, 1.0 / both);
    }
    Ok(())
}
