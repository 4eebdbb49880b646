mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use cseg::bench::{bench_inference, run_ablation_suite, BENCH_HEADER, CASCADE};
use cseg::data::{generate_dataset, netpbm, write_dataset, DatasetManifest, Sample, Split, MANIFEST_FILE};
use cseg::eval::{binarize, evaluate_cascade, report, roc_curve, threshold_counts, threshold_sweep, THRESHOLD};
use cseg::io::write_atomic;
use cseg::network::{load_model, save_model, ArchConfig, CascadeModel};
use cseg::tensor::Tensor;
use cseg::training::train_cascade;

use config::RunConfig;

/// Thresholds for the ROC and the threshold sweep.
const SWEEP_THRESHOLDS: usize = 256;

#[derive(Parser)]
#[command(name = "cseg", version, about = "Coarse-to-fine hand segmentation")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with its train/test manifest.
    Synth,
    /// Train both stages; writes the model and `train_log.csv`.
    Train,
    /// Segment one PPM image; writes coarse, fine, mask and composite images.
    Infer {
        image: PathBuf,
    },
    /// Evaluate on the test split; writes `metrics.csv`, `roc.dat`, `sweep.dat`.
    Eval,
    /// Time cascade inference on the test split; writes `bench.csv`.
    Bench,
    /// Train and benchmark every ablation variant; writes `ablation.csv`.
    Ablate,
    /// Print the effective configuration in config-file form.
    DumpConfig,
}

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn load_config(cli: &Cli) -> Res<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply_text(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    cfg.apply_env(std::env::vars())?;
    for s in &cli.set {
        let (k, v) = s.split_once('=').ok_or_else(|| format!("--set {s:?}: expected key=value"))?;
        cfg.set(k.trim(), v).map_err(|e| format!("--set {s:?}: {e}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_file(cfg: &RunConfig, name: &str) -> Res<PathBuf> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| format!("{}: {e}", cfg.out.display()))?;
    Ok(cfg.out.join(name))
}

fn write(path: &Path, text: &str) -> Res<()> {
    write_atomic(path, text.as_bytes()).map_err(|e| format!("{}: {e}", path.display()))
}

fn manifest(cfg: &RunConfig) -> Res<DatasetManifest> {
    DatasetManifest::load(&cfg.data.join(MANIFEST_FILE)).map_err(err)
}

fn split(cfg: &RunConfig, which: Split) -> Res<Vec<Sample>> {
    let samples = manifest(cfg)?.load_samples(which).map_err(err)?;
    if samples.is_empty() {
        return Err(format!("{}: empty {} split", cfg.data.display(), which.as_str()));
    }
    Ok(samples)
}

fn model(cfg: &RunConfig) -> Res<CascadeModel<f32>> {
    load_model(&cfg.model).map_err(|e| format!("{}: {e}", cfg.model.display()))
}

fn synth(cfg: &RunConfig) -> Res<()> {
    let samples = generate_dataset(&cfg.synth, cfg.seed).map_err(err)?;
    let m = write_dataset(&samples, &cfg.data, cfg.train_fraction, cfg.seed).map_err(err)?;
    println!(
        "wrote {} images to {} ({} train, {} test)",
        samples.len(),
        cfg.data.display(),
        m.count(Split::Train),
        m.count(Split::Test)
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Res<()> {
    let m = manifest(cfg)?;
    let train = m.load_samples(Split::Train).map_err(err)?;
    let test = m.load_samples(Split::Test).map_err(err)?;
    let (s1, s2) = cfg.stage_configs();
    let mut model = CascadeModel::init(cfg.seed, &ArchConfig::default()).map_err(err)?;
    let log = train_cascade(&mut model, &train, &test, &s1, &s2, |r| {
        eprintln!("stage {} epoch {} {}: loss {:.5} accuracy {:.4}", r.stage.number(), r.epoch, r.split.as_str(), r.loss, r.accuracy)
    })
    .map_err(err)?;
    let log_path = out_file(cfg, "train_log.csv")?;
    if let Some(dir) = cfg.model.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    save_model(&model, &cfg.model).map_err(|e| format!("{}: {e}", cfg.model.display()))?;
    write(&log_path, &log.to_csv())?;
    println!("wrote {} and {}", cfg.model.display(), log_path.display());
    Ok(())
}

fn composite(image: &Tensor<f32>, mask: &Tensor<f32>, color: [f64; 3]) -> Tensor<f32> {
    Tensor::from_fn(image.shape(), |c, y, x| if mask.get(0, y, x) > 0.0 { image.get(c, y, x) } else { color[c] as f32 })
}

fn infer(cfg: &RunConfig, image_path: &Path) -> Res<()> {
    let model = model(cfg)?;
    let image = netpbm::read_ppm(image_path).map_err(|e| format!("{}: {e}", image_path.display()))?;
    let (coarse, fine) = model.forward(&image).map_err(err)?;
    let mask = binarize(&fine, THRESHOLD);
    let stem = image_path.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
    let path = |suffix: &str| out_file(cfg, &format!("{stem}_{suffix}"));
    let io = |p: &Path, r: cseg::Result<()>| r.map_err(|e| format!("{}: {e}", p.display()));
    let p = path("coarse.pgm")?;
    io(&p, netpbm::write_pgm(&p, &coarse))?;
    let p = path("fine.pgm")?;
    io(&p, netpbm::write_pgm(&p, &fine))?;
    let p = path("mask.pgm")?;
    io(&p, netpbm::write_pgm(&p, &mask))?;
    let p = path("composite.ppm")?;
    io(&p, netpbm::write_ppm(&p, &composite(&image, &mask, cfg.composite_color)))?;
    println!("wrote {}/{stem}_{{coarse,fine,mask}}.pgm and {stem}_composite.ppm", cfg.out.display());
    Ok(())
}

fn eval(cfg: &RunConfig) -> Res<()> {
    let model = model(cfg)?;
    let test = split(cfg, Split::Test)?;
    let (outputs, scores) = evaluate_cascade(&model, &test).map_err(err)?;
    let fine: Vec<Tensor<f32>> = outputs.into_iter().map(|o| o.fine).collect();
    let masks: Vec<Tensor<f32>> = test.iter().map(|s| s.mask.clone()).collect();
    let counts = threshold_counts(&fine, &masks, SWEEP_THRESHOLDS).map_err(err)?;
    let roc = roc_curve(&fine, &masks, SWEEP_THRESHOLDS).map_err(err)?;
    let sweep = threshold_sweep(&fine, &masks, SWEEP_THRESHOLDS).map_err(err)?;
    write(&out_file(cfg, "metrics.csv")?, &report::metrics_csv(&counts))?;
    write(&out_file(cfg, "roc.dat")?, &report::roc_gnuplot(&roc))?;
    write(&out_file(cfg, "sweep.dat")?, &report::sweep_gnuplot(&sweep))?;
    println!("test images: {}", test.len());
    println!("coarse accuracy: {:.6}", scores.coarse_accuracy);
    println!("upscaled coarse accuracy: {:.6}", scores.upscaled_accuracy);
    println!("fine accuracy: {:.6}", scores.fine_accuracy());
    println!(
        "best threshold: {:.4} (accuracy {:.6}, plateau {:.4}..{:.4})",
        sweep.best_threshold, sweep.best_accuracy, sweep.plateau.0, sweep.plateau.1
    );
    Ok(())
}

fn bench(cfg: &RunConfig) -> Res<()> {
    let model = model(cfg)?;
    let test = split(cfg, Split::Test)?;
    let r = bench_inference(CASCADE, &model, &test, cfg.bench_reps, cfg.seed).map_err(err)?;
    let path = out_file(cfg, "bench.csv")?;
    write(&path, &format!("{BENCH_HEADER}\n{}\n", r.csv_fields()))?;
    println!("{BENCH_HEADER}\n{}", r.csv_fields());
    Ok(())
}

fn ablate(cfg: &RunConfig) -> Res<()> {
    let m = manifest(cfg)?;
    let train = m.load_samples(Split::Train).map_err(err)?;
    let test = split(cfg, Split::Test)?;
    let report = run_ablation_suite(&train, &test, &cfg.ablation(), |msg| eprintln!("{msg}")).map_err(err)?;
    let path = out_file(cfg, "ablation.csv")?;
    write(&path, &report.to_csv())?;
    print!("{}", report.to_csv());
    for (desc, ok) in &report.checks {
        println!("{}: {desc}", if *ok { "pass" } else { "fail" });
    }
    Ok(())
}

fn run(cli: &Cli) -> Res<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => synth(&cfg),
        Command::Train => train(&cfg),
        Command::Infer { image } => infer(&cfg, image),
        Command::Eval => eval(&cfg),
        Command::Bench => bench(&cfg),
        Command::Ablate => ablate(&cfg),
        Command::DumpConfig => {
            print!("{}", cfg.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let help = config::keys_help();
    let matches = Cli::command().after_long_help(help.clone()).after_help(help).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
