use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use preludenet::dataio::{self, load_checkpoint, load_dataset, read_sequence, write_pfm, write_ppm};
use preludenet::gradcheck::{run_suite, GradcheckConfig};
use preludenet::harness::{self, evaluate, invariance_sweep, line_chart, EvalConfig, Predictor, TrainConfig};
use preludenet::scenegen::{generate_split, LightingMode, SplitConfig, SplitKind};
use preludenet::tensor::BackwardFault;
use preludenet::{selftest, Error};

/// Predictive-coding next-frame and depth prediction on synthetic scenes.
#[derive(Parser, Debug)]
#[command(name = "preludenet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a train or test split of synthetic driving sequences.
    GenDataset(GenArgs),
    /// Train a network on a generated split.
    Train(TrainArgs),
    /// Score a checkpoint on a split and write report.csv.
    Eval(EvalArgs),
    /// Write predicted frames (PPM) and depth maps (PFM) for one sequence.
    Predict(PredictArgs),
    /// Evaluate per lighting level and write curve.csv and curve.ppm.
    Invariance(InvarianceArgs),
    /// Compare every backward rule against finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the fixed-answer metric, format and renderer checks.
    Selftest,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// illumination | shadows
    #[arg(long)]
    mode: LightingMode,
    /// train | test (test always renders all 10 lighting levels)
    #[arg(long)]
    split: SplitKind,
    /// Number of worlds [default: 60 train, 10 test]
    #[arg(long)]
    worlds: Option<usize>,
    /// Frames per sequence
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write into a non-empty output directory
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// key=value config file; keys are listed in the README
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set epochs=5 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for report.csv
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A sequence directory as written by gen-dataset
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct InvarianceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A test split covering lighting levels 1 to 10
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Column plotted in curve.ppm
    #[arg(long, default_value = "rmse_log")]
    metric: String,
    /// Skip curve.ppm
    #[arg(long)]
    no_plot: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Deliberately break a backward rule: relu | mul
    #[arg(long)]
    inject_fault: Option<String>,
}

enum Failure {
    Usage(String),
    Error(Error),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Invariance(a) => invariance(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Selftest => run_selftest(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
        Err(Failure::Checks(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(3)
        }
    }
}

fn print_config(command: &str, text: &str) {
    println!("# {command} resolved config");
    print!("{text}");
    println!("# end config");
}

/// Config file first, then `--set` overrides in order.
fn collect_overrides(config: &Option<PathBuf>, sets: &[String]) -> Result<BTreeMap<String, String>, Failure> {
    let mut map = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            dataio::parse_key_values(&text)?
        }
        None => BTreeMap::new(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {s:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn eval_config(config: &Option<PathBuf>, sets: &[String]) -> Result<EvalConfig, Failure> {
    let mut cfg = EvalConfig::default();
    cfg.apply(collect_overrides(config, sets)?)?;
    Ok(cfg)
}

fn create_dir(p: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(p).map_err(|e| Failure::Error(Error::io(p, e)))
}

fn gen_dataset(a: GenArgs) -> Outcome {
    let mut cfg = SplitConfig::new(a.split, a.mode, a.seed);
    if let Some(w) = a.worlds {
        cfg.worlds = w;
    }
    cfg.width = a.width;
    cfg.height = a.height;
    cfg.scene.frames = a.frames;
    let split = if a.split == SplitKind::Train { "train" } else { "test" };
    print_config(
        "gen-dataset",
        &format!(
            "mode={}\nsplit={split}\nworlds={}\nframes={}\nwidth={}\nheight={}\nseed={}\nout={}\n",
            cfg.mode,
            cfg.worlds,
            cfg.scene.frames,
            cfg.width,
            cfg.height,
            cfg.seed,
            a.out.display()
        ),
    );
    let names = generate_split(&cfg, &a.out, a.force)?;
    println!("wrote {} sequences to {}", names.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let mut cfg = TrainConfig::default();
    cfg.apply(collect_overrides(&a.config, &a.overrides)?)?;
    if let Some(d) = a.dataset {
        cfg.dataset = d;
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    print_config("train", &cfg.to_text());
    let outcome = harness::train(&cfg)?;
    if let Some(last) = outcome.log.last() {
        println!("final loss {:.5} depth_l1 {:.4}", last.loss, last.depth_l1);
    }
    println!("checkpoint written to {}", cfg.out_dir.join("checkpoint.pcn").display());
    Ok(())
}

fn eval(a: EvalArgs) -> Outcome {
    let cfg = eval_config(&a.config, &a.overrides)?;
    print_config(
        "eval",
        &format!(
            "{}checkpoint={}\ndataset={}\nout={}\n",
            cfg.to_text(),
            a.checkpoint.display(),
            a.dataset.display(),
            a.out.display()
        ),
    );
    let net = load_checkpoint(&a.checkpoint)?;
    let data = load_dataset(&a.dataset)?;
    let report = evaluate(&net, &data, &cfg)?;
    create_dir(&a.out)?;
    let path = a.out.join("report.csv");
    harness::write_text(&path, &report.to_csv())?;
    print_aggregate(&report.aggregate);
    println!("wrote {}", path.display());
    Ok(())
}

fn print_aggregate(r: &harness::ReportRow) {
    let f = &r.frame;
    println!(
        "frames: model_error {:.6} copy_error {:.6} improvement {:.4} ssim {:.4} psnr {:.3}",
        f.model_error, f.copy_error, f.improvement, f.ssim, f.psnr
    );
    if let Some(d) = &r.depth {
        println!(
            "depth: abs_rel {:.4} sq_rel {:.4} rmse {:.4} rmse_log {:.4} d1 {:.4} d2 {:.4} d3 {:.4}",
            d.abs_rel, d.sq_rel, d.rmse, d.rmse_log, d.delta1, d.delta2, d.delta3
        );
    }
}

fn predict(a: PredictArgs) -> Outcome {
    print_config(
        "predict",
        &format!(
            "checkpoint={}\nsequence={}\nout={}\n",
            a.checkpoint.display(),
            a.sequence.display(),
            a.out.display()
        ),
    );
    let net = load_checkpoint(&a.checkpoint)?;
    let seq = read_sequence(&a.sequence)?;
    let pred = net.predict(&seq.frames)?;
    create_dir(&a.out)?;
    for (t, f) in pred.frames.iter().enumerate() {
        write_ppm(&a.out.join(format!("pred_{:04}.ppm", pred.offset + t)), &f.map(|v| v.clamp(0.0, 1.0)))?;
    }
    let depths = pred.depths.as_deref().unwrap_or(&[]);
    for (t, d) in depths.iter().enumerate() {
        write_pfm(&a.out.join(format!("depth_{:04}.pfm", pred.offset + t)), d)?;
    }
    println!(
        "wrote {} frames and {} depth maps to {}",
        pred.frames.len(),
        depths.len(),
        a.out.display()
    );
    Ok(())
}

const METRIC_NAMES: [&str; 12] = [
    "abs_rel",
    "sq_rel",
    "rmse",
    "rmse_log",
    "delta1",
    "delta2",
    "delta3",
    "model_error",
    "improvement",
    "ssim",
    "psnr",
    "copy_error",
];

fn metric_value(r: &harness::ReportRow, name: &str) -> Option<f64> {
    let i = METRIC_NAMES.iter().position(|m| *m == name)?;
    let f = &r.frame;
    match i {
        0..=6 => r.depth.map(|d| d.values()[i]),
        7 => Some(f.model_error),
        8 => Some(f.improvement),
        9 => Some(f.ssim),
        10 => Some(f.psnr),
        _ => Some(f.copy_error),
    }
}

fn invariance(a: InvarianceArgs) -> Outcome {
    if !METRIC_NAMES.contains(&a.metric.as_str()) {
        return Err(Failure::Usage(format!(
            "unknown metric {:?}, expected one of {}",
            a.metric,
            METRIC_NAMES.join(",")
        )));
    }
    let cfg = eval_config(&a.config, &a.overrides)?;
    print_config(
        "invariance",
        &format!(
            "{}checkpoint={}\ndataset={}\nout={}\nmetric={}\n",
            cfg.to_text(),
            a.checkpoint.display(),
            a.dataset.display(),
            a.out.display(),
            a.metric
        ),
    );
    let net = load_checkpoint(&a.checkpoint)?;
    let data = load_dataset(&a.dataset)?;
    let report = invariance_sweep(&net, &data, &cfg)?;
    create_dir(&a.out)?;
    harness::write_text(&a.out.join("curve.csv"), &report.curve_csv())?;
    for r in &report.levels {
        println!(
            "level {:>2}  {} {:.4}",
            r.level.unwrap_or(0),
            a.metric,
            metric_value(r, &a.metric).unwrap_or(f64::NAN)
        );
    }
    if !a.no_plot {
        let points: Option<Vec<(f64, f64)>> = report
            .levels
            .iter()
            .map(|r| Some((r.level? as f64, metric_value(r, &a.metric)?)))
            .collect();
        match points {
            Some(p) => dataio::write_ppm(&a.out.join("curve.ppm"), &line_chart(&p, 320, 200)?)?,
            None => println!("{} unavailable for this model; curve.ppm skipped", a.metric),
        }
    }
    println!("wrote {}", a.out.join("curve.csv").display());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Outcome {
    let fault = match a.inject_fault.as_deref() {
        None => None,
        Some("relu") => Some(BackwardFault::ReluIgnoresMask),
        Some("mul") => Some(BackwardFault::MulUsesOwnOperand),
        Some(other) => return Err(Failure::Usage(format!("unknown fault {other:?} (relu|mul)"))),
    };
    let cfg = GradcheckConfig {
        seed: a.seed,
        fault,
        ..Default::default()
    };
    print_config(
        "gradcheck",
        &format!(
            "eps={}\ntolerance={}\nfloor={}\ntrials={}\nseed={}\ninject_fault={}\n",
            cfg.eps,
            cfg.tolerance,
            cfg.floor,
            cfg.trials,
            cfg.seed,
            a.inject_fault.as_deref().unwrap_or("none")
        ),
    );
    let start = std::time::Instant::now();
    let results = run_suite(&cfg)?;
    println!("{:<22} {:>12} {:>7} {:>10}  status", "check", "max_rel_err", "coords", "resampled");
    let mut failed = 0;
    for r in &results {
        println!(
            "{:<22} {:>12.3e} {:>7} {:>10}  {}",
            r.name,
            r.max_rel_error,
            r.coords,
            r.resampled,
            if r.passed { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!r.passed);
    }
    println!("{} checks in {:.1}s", results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

fn run_selftest() -> Outcome {
    print_config("selftest", "seed=fixed\n");
    let results = selftest::run()?;
    let mut failed = 0;
    for o in &results {
        println!("{}  {}  {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}
