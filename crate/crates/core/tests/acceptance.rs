//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Artifacts (reports, curves, logs) are
//! written under `$CARGO_TARGET_TMPDIR/acceptance`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use preludenet::dataio::{
    decode_checkpoint, decode_pfm, decode_ppm, encode_checkpoint, encode_pfm, encode_ppm, load_dataset, Sequence,
};
use preludenet::gradcheck::{run_suite, GradcheckConfig};
use preludenet::harness::{
    evaluate, invariance_sweep, line_chart, static_warmup_profile, train_on, write_text, EvalConfig, MeanDepthBaseline,
    MetricsReport, TrainConfig, Variant,
};
use preludenet::metrics::{depth_metrics, frame_metrics, psnr, raw_depth_metrics, DepthEvalOptions};
use preludenet::pcnet::{error_unit, PreludeNet};
use preludenet::scenegen::{
    self, generate_scene, generate_split, intersect_ground, render_frame, vec3, Camera, LightingMode, Pose,
    SceneConfig, SplitConfig, SplitKind,
};
use preludenet::tensor::{Graph, Tensor};

const IMPROVEMENT_GATE: f64 = 1.5;
const END_TO_END_BUDGET: Duration = Duration::from_secs(30 * 60);
const GRADCHECK_BUDGET: Duration = Duration::from_secs(120);
const DATA_SEED: u64 = 2024;
const TRAIN_SEED: u64 = 0;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn out_dir() -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn gradient_correctness() -> Verdict {
    let start = Instant::now();
    let results = match run_suite(&GradcheckConfig::default()) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("suite error: {e}")),
    };
    let elapsed = start.elapsed();
    let worst = results
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    let has_net = results.iter().any(|r| r.name == "preludenet_loss" && r.coords > 0);
    verdict(
        failed.is_empty() && has_net && elapsed < GRADCHECK_BUDGET,
        format!(
            "{} checks, worst {} at {:.2e} (< 1e-4), failed {:?}, {:.1}s",
            results.len(),
            worst.name,
            worst.max_rel_error,
            failed,
            elapsed.as_secs_f64()
        ),
    )
}

fn error_unit_algebra() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut bad = Vec::new();
    for trial in 0..1000 {
        let shape = [
            rng.gen_range(1..3),
            rng.gen_range(1..5),
            rng.gen_range(1..7),
            rng.gen_range(1..7),
        ];
        let n: usize = shape.iter().product();
        let a = Tensor::new(&shape, (0..n).map(|_| rng.gen_range(-3.0f32..3.0)).collect()).unwrap();
        let b = Tensor::new(&shape, (0..n).map(|_| rng.gen_range(-3.0f32..3.0)).collect()).unwrap();
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a), g.constant(b));
        let ab = error_unit(&mut g, va, vb).unwrap();
        let ba = error_unit(&mut g, vb, va).unwrap();
        let aa = error_unit(&mut g, va, va).unwrap();
        let c = shape[1];
        let (ab, ba) = (g.value(ab), g.value(ba));
        let ok = g.value(aa).data().iter().all(|v| *v == 0.0)
            && ab.data().iter().all(|v| *v >= 0.0)
            && ab.channels(0, c).unwrap() == ba.channels(c, c).unwrap()
            && ab.channels(c, c).unwrap() == ba.channels(0, c).unwrap();
        if !ok {
            bad.push(trial);
        }
    }
    verdict(bad.is_empty(), format!("1000 random trials, failing trials {bad:?}"))
}

/// `max(p,g)/min(p,g) < (5/4)^k` decided in exact integer arithmetic.
fn delta_brute_force(p: &[u64], g: &[u64]) -> [f64; 3] {
    let mut hits = [0usize; 3];
    for (&p, &g) in p.iter().zip(g) {
        let (hi, lo) = (p.max(g) as u128, p.min(g) as u128);
        for (k, h) in hits.iter_mut().enumerate() {
            let e = k as u32 + 1;
            *h += usize::from(4u128.pow(e) * hi < 5u128.pow(e) * lo);
        }
    }
    hits.map(|h| h as f64 / p.len() as f64)
}

fn metric_oracles() -> Verdict {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6;
    let mut notes = Vec::new();

    let p = Tensor::new(&[1, 1, 1, 2], vec![2.0f32, 4.0]).unwrap();
    let g = Tensor::new(&[1, 1, 1, 2], vec![1.0f32, 4.0]).unwrap();
    let opts = DepthEvalOptions {
        median_scaling: false,
        ..Default::default()
    };
    let m = depth_metrics(&p, &g, None, &opts).unwrap();
    // |2-1|/1 / 2, (1/1)/2, sqrt(1/2), ln2 / sqrt2, one of two pixels within 1.25^k.
    let want = [0.5, 0.5, 0.5f64.sqrt(), 2f64.ln() / 2f64.sqrt(), 0.5, 0.5, 0.5];
    let depth_ok = m.values().iter().zip(want).all(|(a, b)| close(*a, b));
    notes.push(format!("depth {}", if depth_ok { "ok" } else { "MISMATCH" }));

    let psnr_ok = close(psnr(0.01), 20.0);
    notes.push(format!("psnr(0.01)={:.9}", psnr(0.01)));

    // Constant 8x8 frames: actual 0 then 0.2, predicted 0.1 at the scored step.
    let c = |v: f32| Tensor::full(&[1, 3, 8, 8], v);
    let fm = frame_metrics(&[vec![c(0.0), c(0.1)]], &[vec![c(0.0), c(0.2)]], 1).unwrap();
    let ssim_want = (2.0 * 0.1 * 0.2 + 0.01f64.powi(2)) / (0.1f64.powi(2) + 0.2f64.powi(2) + 0.01f64.powi(2));
    // model and copy errors are mean absolute errors; psnr comes from the mse.
    let frame_ok = close(fm.model_error, 0.1)
        && close(fm.copy_error, 0.2)
        && close(fm.improvement, 2.0)
        && close(fm.psnr, 20.0)
        && close(fm.ssim, ssim_want);
    notes.push(format!("frame {}", if frame_ok { "ok" } else { "MISMATCH" }));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Exact boundaries (5/4, 25/16, 125/64) in both orientations, then random pairs.
    let mut pi: Vec<u64> = vec![5, 4, 25, 16, 125, 64, 10, 10];
    let mut gi: Vec<u64> = vec![4, 5, 16, 25, 64, 125, 10, 10];
    for _ in 0..5000 {
        pi.push(rng.gen_range(1..300));
        gi.push(rng.gen_range(1..300));
    }
    let as_f = |v: &[u64]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
    let rm = raw_depth_metrics(&as_f(&pi), &as_f(&gi));
    let delta_ok = [rm.delta1, rm.delta2, rm.delta3] == delta_brute_force(&pi, &gi);
    let boundary = raw_depth_metrics(&[5.0, 25.0, 125.0], &[4.0, 16.0, 64.0]);
    let boundary_ok = [boundary.delta1, boundary.delta2, boundary.delta3] == [0.0, 1.0 / 3.0, 2.0 / 3.0];
    notes.push(format!("deltas {}", if delta_ok && boundary_ok { "ok" } else { "MISMATCH" }));

    verdict(depth_ok && psnr_ok && frame_ok && delta_ok && boundary_ok, notes.join(", "))
}

fn renderer_separation() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let camera = Camera::new(64, 32).unwrap();
    let cfg = SceneConfig::default();
    let mut mismatches = 0;
    for _ in 0..20 {
        let scene = generate_scene(rng.gen_range(0..1_000_000), &cfg).unwrap();
        let pose = &scene.trajectory[rng.gen_range(0..scene.trajectory.len())];
        for mode in [LightingMode::Illumination, LightingMode::Shadows] {
            let lo = scenegen::lighting_from_level(mode, 1).unwrap();
            let hi = scenegen::lighting_from_level(mode, 10).unwrap();
            let a = render_frame(&scene, pose, &lo, &camera).unwrap();
            let b = render_frame(&scene, pose, &hi, &camera).unwrap();
            let same = a.depth.data().iter().zip(b.depth.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            mismatches += usize::from(!same || a.rgb == b.rgb);
        }
    }
    let down = Pose::new(vec3(0.0, 1.5, 0.0), vec3(0.0, -1.0, 0.0), vec3(0.0, 0.0, 1.0)).unwrap();
    let axis = camera.ray(&down, 32.0, 16.0);
    let center = intersect_ground(&axis, scenegen::FAR_PLANE).unwrap_or(f64::NAN);
    // Rendered pixels of the same camera over an empty world follow 1.5 / cos(angle off axis).
    let empty = scenegen::SceneSpec {
        seed: 0,
        objects: vec![],
        trajectory: vec![down],
    };
    let lit = scenegen::lighting_from_level(LightingMode::Illumination, 5).unwrap();
    let frame = render_frame(&empty, &down, &lit, &camera).unwrap();
    let mut worst = 0.0f64;
    for y in 0..32 {
        for x in 0..64 {
            let r = camera.ray(&down, x as f64 + 0.5, y as f64 + 0.5);
            let cos = -r.dir.y / r.dir.dot(r.dir).sqrt();
            let want = 1.5 / cos;
            worst = worst.max((frame.depth.data()[y * 64 + x] as f64 - want).abs() / want);
        }
    }
    verdict(
        mismatches == 0 && (center - 1.5).abs() <= 1e-5 && worst < 1e-6,
        format!("40 (world, pose, mode) triples, {mismatches} mismatched; centre depth {center:.7}, pixel depth rel err {worst:.1e}"),
    )
}

struct Trained {
    net: PreludeNet<f32>,
    report: MetricsReport,
    seed: u64,
    elapsed: Duration,
}

fn train_and_sweep(train: &[Sequence], test: &[Sequence], seed: u64, dir: &Path) -> preludenet::Result<Trained> {
    let start = Instant::now();
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    eprintln!("training standard model, seed {seed}, {} iterations", cfg.total_iterations());
    let outcome = train_on(&cfg, train, |row, _| {
        eprintln!(
            "  epoch {:>2} loss {:.4} e0 {:.5} depth_l1 {:.3} [{:.0}s]",
            row.epoch,
            row.loss,
            row.level_errors[0],
            row.depth_l1,
            start.elapsed().as_secs_f64()
        );
        Ok(())
    })?;
    let report = invariance_sweep(&outcome.net, test, &EvalConfig::default())?;
    let elapsed = start.elapsed();
    write_text(&dir.join(format!("config_seed{seed}.txt")), &cfg.to_text())?;
    write_text(&dir.join(format!("train_log_seed{seed}.csv")), &preludenet::harness::train_log_csv(&outcome.log))?;
    write_text(&dir.join(format!("report_seed{seed}.csv")), &report.to_csv())?;
    write_text(&dir.join(format!("curve_seed{seed}.csv")), &report.curve_csv())?;
    Ok(Trained {
        net: outcome.net,
        report,
        seed,
        elapsed,
    })
}

fn next_frame_gate(t: &Trained) -> Verdict {
    let f = &t.report.aggregate.frame;
    verdict(
        f.improvement >= IMPROVEMENT_GATE && t.elapsed < END_TO_END_BUDGET,
        format!(
            "improvement {:.3} (gate {IMPROVEMENT_GATE}), mean abs error {:.5} vs copy-last {:.5}, ssim {:.3}, train+eval {:.1} min",
            f.improvement,
            f.model_error,
            f.copy_error,
            f.ssim,
            t.elapsed.as_secs_f64() / 60.0
        ),
    )
}

fn depth_gate(t: &Trained, train: &[Sequence], test: &[Sequence]) -> Verdict {
    let base = MeanDepthBaseline::from_dataset(train)
        .and_then(|b| evaluate(&b, test, &EvalConfig::default()))
        .map(|r| r.aggregate.depth);
    let (Some(m), Ok(Some(b))) = (t.report.aggregate.depth, base) else {
        return verdict(false, "missing depth metrics");
    };
    verdict(
        m.abs_rel < b.abs_rel && m.rmse < b.rmse && m.delta1 > b.delta1,
        format!(
            "abs_rel {:.4} vs {:.4}, rmse {:.3} vs {:.3}, delta1 {:.4} vs {:.4} (model vs training-set mean)",
            m.abs_rel, b.abs_rel, m.rmse, b.rmse, m.delta1, b.delta1
        ),
    )
}

fn warmup_property(t: &Trained, test: &[Sequence]) -> Verdict {
    let profile = match static_warmup_profile(&t.net, test, 10) {
        Ok(p) => p,
        Err(e) => return verdict(false, e.to_string()),
    };
    // Mean over the blocks that carry an error unit.
    let mean: Vec<f64> = profile
        .iter()
        .map(|row| {
            let live: Vec<f64> = row.iter().copied().take(5).collect();
            live.iter().sum::<f64>() / live.len() as f64
        })
        .collect();
    let step2 = mean[1];
    let later = &mean[3..10];
    let ok = later.iter().all(|&v| v < step2);
    let fmt: Vec<String> = mean.iter().map(|v| format!("{v:.4}")).collect();
    verdict(ok, format!("mean block error by step 1..10: [{}]", fmt.join(", ")))
}

fn variant_plumbing(train: &[Sequence], test: &[Sequence], standard: &MetricsReport, dir: &Path) -> Verdict {
    let variants = [
        Variant::Standard,
        Variant::DepthDelayed,
        Variant::StaticFrames,
        Variant::Multiframe(2),
        Variant::Multiframe(3),
    ];
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for v in variants {
        let cfg = TrainConfig {
            variant: v,
            epochs: 4,
            iterations_per_epoch: 25,
            ..TrainConfig::default()
        };
        let eval = EvalConfig {
            depth_lag: usize::from(v == Variant::DepthDelayed),
            ..EvalConfig::default()
        };
        let start = Instant::now();
        let res = train_on(&cfg, train, |_, _| Ok(())).and_then(|o| evaluate(&o.net, test, &eval));
        match res {
            Ok(r) => {
                let name = format!("report_{}.csv", v.to_string().replace(':', ""));
                if let Err(e) = write_text(&dir.join(&name), &r.to_csv()) {
                    failures.push(format!("{v}: {e}"));
                }
                eprintln!("  variant {v} done in {:.0}s", start.elapsed().as_secs_f64());
                rows.push((v, r.aggregate));
            }
            Err(e) => failures.push(format!("{v}: {e}")),
        }
    }
    let mut obs = String::from("# variant observations (reduced schedule: 4 x 25 iterations)\n");
    obs.push_str("variant,abs_rel,rmse,rmse_log,delta1,improvement,ssim\n");
    for (v, a) in &rows {
        let d = a.depth.unwrap_or_default();
        writeln!(
            obs,
            "{v},{:.5},{:.4},{:.5},{:.5},{:.4},{:.4}",
            d.abs_rel, d.rmse, d.rmse_log, d.delta1, a.frame.improvement, a.frame.ssim
        )
        .unwrap();
    }
    if let Some(d) = standard.aggregate.depth {
        writeln!(
            obs,
            "standard_full_schedule,{:.5},{:.4},{:.5},{:.5},{:.4},{:.4}",
            d.abs_rel, d.rmse, d.rmse_log, d.delta1, standard.aggregate.frame.improvement, standard.aggregate.frame.ssim
        )
        .unwrap();
    }
    let base = rows.iter().find(|(v, _)| *v == Variant::Standard).and_then(|(_, a)| a.depth);
    if let Some(b) = base {
        for (v, a) in rows.iter().filter(|(v, _)| *v != Variant::Standard) {
            if let Some(d) = a.depth {
                writeln!(
                    obs,
                    "# {v}: abs_rel {:+.1}% and rmse_log {:+.1}% relative to standard",
                    100.0 * (d.abs_rel / b.abs_rel - 1.0),
                    100.0 * (d.rmse_log / b.rmse_log - 1.0)
                )
                .unwrap();
            }
        }
    }
    let written = write_text(&dir.join("variant_observations.csv"), &obs).is_ok();
    print!("{}", obs.lines().filter(|l| l.starts_with("# ") && l.contains('%')).fold(String::new(), |s, l| s + "    " + l + "\n"));
    verdict(
        failures.is_empty() && rows.len() == variants.len() && written,
        format!("{} variant reports written, failures {failures:?}", rows.len()),
    )
}

fn invariance_shape(report: &MetricsReport, dir: &Path, seed: u64) -> (bool, String) {
    let curve = report.curve_csv();
    let data_rows = curve.lines().filter(|l| !l.starts_with('#') && !l.starts_with("level")).count();
    let rl: Vec<f64> = report.levels.iter().map(|r| r.depth.map_or(f64::NAN, |d| d.rmse_log)).collect();
    if rl.len() != 10 {
        return (false, format!("{} levels", rl.len()));
    }
    let worst_extreme = rl[0].max(rl[9]);
    let ok = data_rows == 10 && rl[3..7].iter().all(|&v| v <= worst_extreme);
    let points: Vec<(f64, f64)> = rl.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect();
    if let Ok(img) = line_chart(&points, 320, 200) {
        let _ = preludenet::dataio::write_ppm(&dir.join(format!("curve_seed{seed}.ppm")), &img);
    }
    let fmt: Vec<String> = rl.iter().map(|v| format!("{v:.4}")).collect();
    (
        ok,
        format!("seed {seed}: {data_rows} rows, rmse_log by level [{}], levels 4-7 <= {worst_extreme:.4}", fmt.join(", ")),
    )
}

fn determinism_and_formats(dir: &Path) -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut split = SplitConfig::new(SplitKind::Test, LightingMode::Shadows, 77);
    split.worlds = 2;
    split.scene.frames = 10;
    let (a, b) = (dir.join("det_a"), dir.join("det_b"));
    let gen = |p: &Path| generate_split(&split, p, true).unwrap();
    gen(&a);
    gen(&b);
    let mut files = 0;
    let mut differing = 0;
    for entry in walk(&a) {
        let rel = entry.strip_prefix(&a).unwrap();
        files += 1;
        if std::fs::read(&entry).ok() != std::fs::read(b.join(rel)).ok() {
            differing += 1;
        }
    }
    ok &= differing == 0 && files > 0 && walk(&b).len() == files;
    notes.push(format!("dataset {files} files, {differing} differ"));

    let data = load_dataset(&a).unwrap();
    let tiny = TrainConfig {
        epochs: 1,
        iterations_per_epoch: 2,
        batch_size: 2,
        sequence_length: 4,
        widths: [2, 3, 4],
        seed: 5,
        ..TrainConfig::default()
    };
    let ckpt = |_: ()| encode_checkpoint(train_on(&tiny, &data, |_, _| Ok(())).unwrap().net.params()).unwrap();
    let (c1, c2) = (ckpt(()), ckpt(()));
    ok &= c1 == c2;
    notes.push(format!("checkpoints identical: {}", c1 == c2));

    let frame = &data[3].frames[4];
    let ppm = encode_ppm(frame).unwrap();
    let ppm_ok = decode_ppm(&ppm).map(|t| &t == frame && encode_ppm(&t).unwrap() == ppm).unwrap_or(false);
    let depth = &data[3].depths[4];
    let pfm = encode_pfm(depth).unwrap();
    let pfm_ok = decode_pfm(&pfm)
        .map(|t| t.data().iter().zip(depth.data()).all(|(x, y)| x.to_bits() == y.to_bits()) && encode_pfm(&t).unwrap() == pfm)
        .unwrap_or(false);
    let ckpt_ok = decode_checkpoint(&c1).map(|p| encode_checkpoint(&p).unwrap() == c1).unwrap_or(false);
    ok &= ppm_ok && pfm_ok && ckpt_ok;
    notes.push(format!("round trips ppm {ppm_ok} pfm {pfm_ok} checkpoint {ckpt_ok}"));

    let mut rejected = 0;
    let mut attempts = 0;
    for pos in [5, 13, c1.len() / 2, c1.len() - 20, c1.len() - 1] {
        let mut bad = c1.clone();
        bad[pos] ^= 0x01;
        attempts += 1;
        rejected += usize::from(decode_checkpoint(&bad).is_err());
    }
    attempts += 1;
    rejected += usize::from(decode_checkpoint(&c1[..c1.len() - 3]).is_err());
    ok &= rejected == attempts;
    notes.push(format!("corrupted checkpoints rejected {rejected}/{attempts}"));
    verdict(ok, notes.join(", "))
}

fn walk(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn report(n: usize, title: &str, v: &Verdict, all: &mut Vec<bool>) {
    println!("[{}] criterion {n:>2} {title}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
    all.push(v.passed);
}

fn main() {
    let dir = out_dir();
    let mut all = Vec::new();
    println!("acceptance artifacts in {}", dir.display());

    report(1, "gradient correctness", &gradient_correctness(), &mut all);
    report(2, "error-unit algebra", &error_unit_algebra(), &mut all);
    report(3, "metric oracles", &metric_oracles(), &mut all);
    report(4, "renderer geometry/lighting separation", &renderer_separation(), &mut all);

    let gen_start = Instant::now();
    let train_dir = dir.join("data/train");
    let test_dir = dir.join("data/test");
    let train_split = SplitConfig::new(SplitKind::Train, LightingMode::Illumination, DATA_SEED);
    let test_split = SplitConfig::new(SplitKind::Test, LightingMode::Illumination, DATA_SEED);
    scenegen::ensure_disjoint(&train_split, &test_split).unwrap();
    generate_split(&train_split, &train_dir, true).unwrap();
    generate_split(&test_split, &test_dir, true).unwrap();
    let train = load_dataset(&train_dir).unwrap();
    let test = load_dataset(&test_dir).unwrap();
    let gen_time = gen_start.elapsed();
    eprintln!(
        "generated {} train / {} test sequences in {:.1}s",
        train.len(),
        test.len(),
        gen_time.as_secs_f64()
    );

    match train_and_sweep(&train, &test, TRAIN_SEED, &dir) {
        Ok(mut trained) => {
            trained.elapsed += gen_time;
            report(5, "end-to-end next-frame gate", &next_frame_gate(&trained), &mut all);
            report(6, "end-to-end depth gate", &depth_gate(&trained, &train, &test), &mut all);
            report(7, "static warm-up", &warmup_property(&trained, &test), &mut all);
            report(8, "variant plumbing", &variant_plumbing(&train, &test, &trained.report, &dir), &mut all);
            let (mut ok, mut detail) = invariance_shape(&trained.report, &dir, trained.seed);
            if !ok {
                // One reseed on failure.
                eprintln!("invariance shape not met ({detail}); retraining with a new seed");
                match train_and_sweep(&train, &test, TRAIN_SEED + 1, &dir) {
                    Ok(retry) => {
                        let (ok2, d2) = invariance_shape(&retry.report, &dir, retry.seed);
                        ok = ok2;
                        detail = format!("{detail}; rerun {d2}");
                    }
                    Err(e) => detail = format!("{detail}; rerun failed: {e}"),
                }
            }
            report(9, "invariance sweep shape", &verdict(ok, detail), &mut all);
        }
        Err(e) => {
            for (n, t) in [
                (5, "end-to-end next-frame gate"),
                (6, "end-to-end depth gate"),
                (7, "static warm-up"),
                (8, "variant plumbing"),
                (9, "invariance sweep shape"),
            ] {
                report(n, t, &verdict(false, format!("training failed: {e}")), &mut all);
            }
        }
    }
    report(10, "determinism and formats", &determinism_and_formats(&dir), &mut all);

    let passed = all.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", all.len());
    if passed != all.len() {
        std::process::exit(1);
    }
}
