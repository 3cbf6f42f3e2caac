//! Training and evaluation orchestration.

mod eval;
mod plot;

pub use eval::{
    evaluate, invariance_sweep, static_warmup_profile, ConstantDepth, EvalConfig, MeanDepthBaseline, MetricsReport,
    Predictor, ReportRow, SequencePrediction, CURVE_SCHEMA, REPORT_SCHEMA,
};
pub use plot::line_chart;

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{self, Sequence};
use crate::error::{Error, Result};
use crate::losses::{align_depth_targets, training_loss, LossWeights};
use crate::pcnet::{NetConfig, NetMode, PreludeNet};
use crate::tensor::{Adam, AdamConfig, Graph, Tensor};

pub const TRAIN_LOG_SCHEMA: &str = "# preludenet train-log v1";
pub const DESK_WIDTHS: [usize; 3] = [8, 16, 32];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Standard,
    /// Depth targets lag the RGB frames by one step.
    DepthDelayed,
    /// Every window is its first frame repeated.
    StaticFrames,
    /// `F` consecutive frames packed along channels.
    Multiframe(usize),
}

impl Variant {
    pub fn frames(&self) -> usize {
        match self {
            Variant::Multiframe(f) => *f,
            _ => 1,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Standard => f.write_str("standard"),
            Variant::DepthDelayed => f.write_str("depth_delayed"),
            Variant::StaticFrames => f.write_str("static_frames"),
            Variant::Multiframe(n) => write!(f, "multiframe:{n}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "depth_delayed" => Ok(Variant::DepthDelayed),
            "static_frames" => Ok(Variant::StaticFrames),
            _ => s
                .strip_prefix("multiframe:")
                .and_then(|n| n.parse().ok())
                .map(Variant::Multiframe)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown variant {s:?} (standard|depth_delayed|static_frames|multiframe:F)"
                    ))
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub sequence_length: usize,
    pub batch_size: usize,
    pub variant: Variant,
    pub seed: u64,
    pub mode: NetMode,
    pub widths: [usize; 3],
    pub level_weights: Vec<f64>,
    pub depth_weight: f64,
    pub smoothness_weight: f64,
    pub adam: AdamConfig,
    /// Fraction of the run after which the learning rate is halved.
    pub lr_halve_at: f64,
    /// Write an intermediate checkpoint every this many epochs (0: never).
    pub checkpoint_every: usize,
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let w = LossWeights::standard(10);
        Self {
            epochs: 30,
            iterations_per_epoch: 50,
            sequence_length: 10,
            batch_size: 4,
            variant: Variant::Standard,
            seed: 0,
            mode: NetMode::PreludeNet,
            widths: DESK_WIDTHS,
            level_weights: w.levels,
            depth_weight: 0.005,
            smoothness_weight: 0.0025,
            adam: AdamConfig::default(),
            lr_halve_at: 0.75,
            checkpoint_every: 0,
            dataset: PathBuf::from("data/train"),
            out_dir: PathBuf::from("runs/train"),
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 16] = [
        "epochs",
        "iterations_per_epoch",
        "sequence_length",
        "batch_size",
        "variant",
        "seed",
        "mode",
        "widths",
        "level_weights",
        "depth_weight",
        "smoothness_weight",
        "lr",
        "lr_halve_at",
        "checkpoint_every",
        "dataset",
        "out_dir",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.sequence_length < 2 {
            return Err(Error::Config("sequence_length must be at least 2".into()));
        }
        if self.epochs == 0 || self.iterations_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs, iterations_per_epoch and batch_size must be positive".into()));
        }
        if let Variant::Multiframe(f) = self.variant {
            if !(2..=3).contains(&f) {
                return Err(Error::Config(format!("multiframe count must be 2 or 3, got {f}")));
            }
        }
        if !(self.adam.lr > 0.0) || !(0.0..=1.0).contains(&self.lr_halve_at) {
            return Err(Error::Config("lr must be positive and lr_halve_at within [0, 1]".into()));
        }
        self.net_config().validate()?;
        self.loss_weights().validate()
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            mode: self.mode,
            widths: self.widths,
            frames: self.variant.frames(),
            kernel: 3,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        let base = LossWeights::standard(self.sequence_length);
        let prelude = self.mode == NetMode::PreludeNet;
        LossWeights {
            levels: self.level_weights.clone(),
            timesteps: base.timesteps,
            depth: if prelude { self.depth_weight } else { 0.0 },
            smoothness: if prelude { self.smoothness_weight } else { 0.0 },
            depth_delay: self.variant == Variant::DepthDelayed,
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }

    /// Applies `key=value` overrides; unknown keys are rejected.
    pub fn apply(&mut self, mut map: BTreeMap<String, String>) -> Result<()> {
        use dataio::take_value as take;
        if let Some(k) = map.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown training key {k:?}")));
        }
        if let Some(v) = take(&mut map, "epochs")? {
            self.epochs = v;
        }
        if let Some(v) = take(&mut map, "iterations_per_epoch")? {
            self.iterations_per_epoch = v;
        }
        if let Some(v) = take(&mut map, "sequence_length")? {
            self.sequence_length = v;
        }
        if let Some(v) = take(&mut map, "batch_size")? {
            self.batch_size = v;
        }
        if let Some(v) = map.remove("variant") {
            self.variant = v.parse()?;
        }
        if let Some(v) = take(&mut map, "seed")? {
            self.seed = v;
        }
        if let Some(v) = map.remove("mode") {
            self.mode = v.parse()?;
        }
        if let Some(v) = map.remove("widths") {
            let w = parse_list::<usize>(&v, "widths")?;
            self.widths = w
                .try_into()
                .map_err(|_| Error::Config("widths needs exactly three values".into()))?;
        }
        if let Some(v) = map.remove("level_weights") {
            self.level_weights = parse_list(&v, "level_weights")?;
        }
        if let Some(v) = take(&mut map, "depth_weight")? {
            self.depth_weight = v;
        }
        if let Some(v) = take(&mut map, "smoothness_weight")? {
            self.smoothness_weight = v;
        }
        if let Some(v) = take(&mut map, "lr")? {
            self.adam.lr = v;
        }
        if let Some(v) = take(&mut map, "lr_halve_at")? {
            self.lr_halve_at = v;
        }
        if let Some(v) = take(&mut map, "checkpoint_every")? {
            self.checkpoint_every = v;
        }
        if let Some(v) = map.remove("dataset") {
            self.dataset = v.into();
        }
        if let Some(v) = map.remove("out_dir") {
            self.out_dir = v.into();
        }
        Ok(())
    }

    /// The resolved configuration in `key=value` form.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        writeln!(s, "epochs={}", self.epochs).unwrap();
        writeln!(s, "iterations_per_epoch={}", self.iterations_per_epoch).unwrap();
        writeln!(s, "sequence_length={}", self.sequence_length).unwrap();
        writeln!(s, "batch_size={}", self.batch_size).unwrap();
        writeln!(s, "variant={}", self.variant).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "mode={}", self.mode).unwrap();
        writeln!(s, "widths={},{},{}", self.widths[0], self.widths[1], self.widths[2]).unwrap();
        writeln!(s, "level_weights={}", join(&self.level_weights)).unwrap();
        writeln!(s, "depth_weight={}", self.depth_weight).unwrap();
        writeln!(s, "smoothness_weight={}", self.smoothness_weight).unwrap();
        writeln!(s, "lr={}", self.adam.lr).unwrap();
        writeln!(s, "lr_halve_at={}", self.lr_halve_at).unwrap();
        writeln!(s, "checkpoint_every={}", self.checkpoint_every).unwrap();
        writeln!(s, "dataset={}", self.dataset.display()).unwrap();
        writeln!(s, "out_dir={}", self.out_dir.display()).unwrap();
        s
    }
}

pub(crate) fn parse_list<V: FromStr>(s: &str, key: &str) -> Result<Vec<V>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {p:?}")))
        })
        .collect()
}

/// One training batch. `frames[t]` is `[N,3F,H,W]`, `depths[t]` the
/// frame-aligned ground truth `[N,F,H,W]`, `targets[t]` what step `t`'s
/// depth output is scored against.
#[derive(Clone, Debug)]
pub struct Batch {
    pub frames: Vec<Tensor<f32>>,
    pub depths: Vec<Tensor<f32>>,
    pub targets: Vec<Option<Tensor<f32>>>,
}

/// Packs single images `[1,C,H,W]` along channels and stacks samples.
fn pack(samples: &[Vec<&Tensor<f32>>]) -> Result<Tensor<f32>> {
    let mut data = Vec::new();
    let (_, c, h, w) = samples[0][0].dims4()?;
    for s in samples {
        for t in s {
            if t.shape() != [1, c, h, w] {
                return Err(Error::shape("pack", &[1, c, h, w], t.shape()));
            }
            data.extend_from_slice(t.data());
        }
    }
    Tensor::new(&[samples.len(), c * samples[0].len(), h, w], data)
}

/// Input windows of `frames` consecutive images for one sequence, one per
/// step: window `t` holds images `t..t + frames`.
pub fn pack_windows(images: &[Tensor<f32>], frames: usize) -> Result<Vec<Tensor<f32>>> {
    if images.len() < frames {
        return Err(Error::invalid("pack_windows", "sequence shorter than the frame window"));
    }
    (0..=images.len() - frames)
        .map(|t| pack(&[images[t..t + frames].iter().collect()]))
        .collect()
}

/// Draws `batch_size` windows uniformly over (sequence, start offset).
pub fn sample_batch(dataset: &[Sequence], cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Batch> {
    let f = cfg.variant.frames();
    let span = cfg.sequence_length + f - 1;
    if dataset.is_empty() || dataset.iter().any(|s| s.frames.len() < span) {
        return Err(Error::Dataset(format!(
            "every training sequence needs at least {span} frames"
        )));
    }
    let mut windows = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let s = &dataset[rng.gen_range(0..dataset.len())];
        let start = rng.gen_range(0..=s.frames.len() - span);
        let idx: Vec<usize> = match cfg.variant {
            Variant::StaticFrames => vec![start; span],
            _ => (start..start + span).collect(),
        };
        windows.push((s, idx));
    }
    let mut frames = Vec::with_capacity(cfg.sequence_length);
    let mut depths = Vec::with_capacity(cfg.sequence_length);
    for t in 0..cfg.sequence_length {
        let rgb: Vec<Vec<&Tensor<f32>>> = windows
            .iter()
            .map(|(s, idx)| idx[t..t + f].iter().map(|&i| &s.frames[i]).collect())
            .collect();
        let dep: Vec<Vec<&Tensor<f32>>> = windows
            .iter()
            .map(|(s, idx)| idx[t..t + f].iter().map(|&i| &s.depths[i]).collect())
            .collect();
        frames.push(pack(&rgb)?);
        depths.push(pack(&dep)?);
    }
    let targets = align_depth_targets(&depths, cfg.variant == Variant::DepthDelayed);
    Ok(Batch {
        frames,
        depths,
        targets,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    /// Mean error per block over weighted steps.
    pub level_errors: Vec<f64>,
    /// Mean `|D̂ - D|` of the newest frame over steps with a target.
    pub depth_l1: f64,
}

/// Forward, backward and one optimizer update on `batch`.
pub fn train_step(net: &mut PreludeNet<f32>, adam: &mut Adam<f32>, batch: &Batch, weights: &LossWeights) -> Result<StepStats> {
    let mut g = Graph::new();
    let (vars, outs) = net.run_sequence(&mut g, &batch.frames)?;
    let loss = training_loss(&mut g, &outs, &batch.frames, &batch.targets, weights)?;
    let value = g.value(loss).data()[0] as f64;
    let mut stats = StepStats {
        loss: value,
        level_errors: vec![0.0; outs[0].errors.len()],
        depth_l1: 0.0,
    };
    let (mut weighted, mut with_target) = (0usize, 0usize);
    for (t, o) in outs.iter().enumerate() {
        if weights.timesteps.get(t).copied().unwrap_or(0.0) == 0.0 {
            continue;
        }
        weighted += 1;
        for (acc, e) in stats.level_errors.iter_mut().zip(o.level_errors(&g)) {
            *acc += e;
        }
        if let (Some(d), Some(Some(tgt))) = (o.depth, batch.targets.get(t)) {
            let pred = g.value(d);
            let c = pred.shape()[1];
            let (p, q) = (pred.channels(c - 1, 1)?, tgt.channels(c - 1, 1)?);
            stats.depth_l1 += p
                .data()
                .iter()
                .zip(q.data())
                .map(|(a, b)| (a - b).abs() as f64)
                .sum::<f64>()
                / p.numel() as f64;
            with_target += 1;
        }
    }
    stats.level_errors.iter_mut().for_each(|e| *e /= weighted.max(1) as f64);
    stats.depth_l1 /= with_target.max(1) as f64;
    if !value.is_finite() {
        return Ok(stats);
    }
    let mut grads = g.backward(loss)?;
    let named: BTreeMap<String, Tensor<f32>> = vars
        .into_iter()
        .filter_map(|(name, v)| grads.take(v).map(|t| (name, t)))
        .collect();
    adam.step(net.params_mut(), &named)?;
    Ok(stats)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub level_errors: Vec<f64>,
    pub depth_l1: f64,
    pub lr: f64,
}

pub fn train_log_csv(log: &[EpochLog]) -> String {
    let levels = log.first().map_or(0, |r| r.level_errors.len());
    let mut s = format!("{TRAIN_LOG_SCHEMA}\nepoch,loss");
    for l in 0..levels {
        write!(s, ",e{l}").unwrap();
    }
    s.push_str(",depth_l1,lr\n");
    for r in log {
        write!(s, "{},{:.6e}", r.epoch, r.loss).unwrap();
        for e in &r.level_errors {
            write!(s, ",{e:.6e}").unwrap();
        }
        writeln!(s, ",{:.6e},{:e}", r.depth_l1, r.lr).unwrap();
    }
    s
}

pub struct TrainOutcome {
    pub net: PreludeNet<f32>,
    pub log: Vec<EpochLog>,
}

/// Trains on an in-memory dataset. `on_epoch` sees each log row as it is
/// produced along with the current network.
pub fn train_on(
    cfg: &TrainConfig,
    dataset: &[Sequence],
    mut on_epoch: impl FnMut(&EpochLog, &PreludeNet<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut net = PreludeNet::<f32>::new(cfg.net_config(), cfg.seed)?;
    let mut adam = Adam::new(cfg.adam);
    let weights = cfg.loss_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ba7c);
    let total = cfg.total_iterations();
    let halve_at = (cfg.lr_halve_at * total as f64).round() as usize;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut iteration = 0;
    for epoch in 0..cfg.epochs {
        let mut acc = StepStats::default();
        for _ in 0..cfg.iterations_per_epoch {
            if iteration == halve_at {
                adam.set_lr(cfg.adam.lr * 0.5);
            }
            let batch = sample_batch(dataset, cfg, &mut rng)?;
            let s = train_step(&mut net, &mut adam, &batch, &weights)?;
            if !s.loss.is_finite() {
                return Err(Error::Diverged { iteration, loss: s.loss });
            }
            acc.loss += s.loss;
            acc.depth_l1 += s.depth_l1;
            if acc.level_errors.is_empty() {
                acc.level_errors = vec![0.0; s.level_errors.len()];
            }
            for (a, e) in acc.level_errors.iter_mut().zip(&s.level_errors) {
                *a += e;
            }
            iteration += 1;
        }
        let n = cfg.iterations_per_epoch as f64;
        let row = EpochLog {
            epoch: epoch + 1,
            loss: acc.loss / n,
            level_errors: acc.level_errors.iter().map(|e| e / n).collect(),
            depth_l1: acc.depth_l1 / n,
            lr: if iteration > halve_at { cfg.adam.lr * 0.5 } else { cfg.adam.lr },
        };
        on_epoch(&row, &net)?;
        log.push(row);
    }
    Ok(TrainOutcome { net, log })
}

/// Full run from `cfg.dataset`: writes `config.txt`, `train_log.csv`,
/// periodic `checkpoint_epoch_NNNN.pcn` files and the final `checkpoint.pcn`
/// into `cfg.out_dir`.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dataset = dataio::load_dataset(&cfg.dataset)?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    let mut rows = Vec::new();
    let outcome = train_on(cfg, &dataset, |row, net| {
        rows.push(row.clone());
        write_text(&out.join("train_log.csv"), &train_log_csv(&rows))?;
        if cfg.checkpoint_every > 0 && row.epoch % cfg.checkpoint_every == 0 {
            dataio::save_checkpoint(net, &out.join(format!("checkpoint_epoch_{:04}.pcn", row.epoch)))?;
        }
        Ok(())
    })?;
    dataio::save_checkpoint(&outcome.net, &out.join("checkpoint.pcn"))?;
    Ok(outcome)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Manifest;
    use crate::scenegen::LightingMode;

    pub(crate) fn toy_dataset(n: usize, len: usize) -> Vec<Sequence> {
        (0..n)
            .map(|s| {
                let frames = (0..len)
                    .map(|t| Tensor::full(&[1, 3, 8, 8], ((s * len + t) % 10) as f32 / 10.0))
                    .collect();
                let depths = (0..len)
                    .map(|t| Tensor::full(&[1, 1, 8, 8], 1.0 + (s * len + t) as f32))
                    .collect();
                Sequence {
                    name: format!("s{s}"),
                    manifest: Manifest {
                        world_seed: s as u64,
                        lighting_mode: LightingMode::Illumination,
                        lighting_level: 5,
                        frame_count: len,
                        width: 8,
                        height: 8,
                        fps: 10,
                    },
                    frames,
                    depths,
                }
            })
            .collect()
    }

    fn cfg(variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            sequence_length: 4,
            batch_size: 2,
            ..Default::default()
        }
    }

    #[test]
    fn static_and_delayed_batches() {
        let ds = toy_dataset(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = sample_batch(&ds, &cfg(Variant::StaticFrames), &mut rng).unwrap();
        assert!(b.frames.iter().all(|f| *f == b.frames[0]));
        let b = sample_batch(&ds, &cfg(Variant::DepthDelayed), &mut rng).unwrap();
        assert!(b.targets[0].is_none());
        for t in 1..4 {
            assert_eq!(b.targets[t].as_ref().unwrap(), &b.depths[t - 1]);
        }
        let b = sample_batch(&ds, &cfg(Variant::Multiframe(3)), &mut rng).unwrap();
        assert_eq!(b.frames[0].shape(), &[2, 9, 8, 8]);
        assert_eq!(b.depths[0].shape(), &[2, 3, 8, 8]);
        // Window t + 1 starts where window t's second frame was.
        assert_eq!(b.frames[1].channels(0, 6).unwrap(), b.frames[0].channels(3, 6).unwrap());
    }

    #[test]
    fn sampling_is_seeded() {
        let ds = toy_dataset(4, 10);
        let c = cfg(Variant::Standard);
        let a = sample_batch(&ds, &c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_batch(&ds, &c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.frames, b.frames);
        assert!(sample_batch(&toy_dataset(1, 3), &c, &mut ChaCha8Rng::seed_from_u64(9)).is_err());
    }

    #[test]
    fn config_keys_roundtrip() {
        let mut c = TrainConfig {
            variant: Variant::Multiframe(2),
            widths: [4, 8, 12],
            ..Default::default()
        };
        c.depth_weight = 0.5;
        let mut back = TrainConfig::default();
        back.apply(dataio::parse_key_values(&c.to_text()).unwrap()).unwrap();
        assert_eq!(back, c);
        let mut bad = BTreeMap::new();
        bad.insert("epoch".to_string(), "3".to_string());
        assert!(TrainConfig::default().apply(bad).is_err());
        assert!(TrainConfig {
            variant: Variant::Multiframe(4),
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn variants_differ_only_in_their_field() {
        let base = TrainConfig::default();
        for v in [Variant::DepthDelayed, Variant::StaticFrames, Variant::Multiframe(2)] {
            let other = TrainConfig { variant: v, ..base.clone() };
            let diff: Vec<_> = base
                .to_text()
                .lines()
                .zip(other.to_text().lines())
                .filter(|(a, b)| a != b)
                .map(|(a, _)| a.split('=').next().unwrap().to_string())
                .collect();
            assert_eq!(diff, ["variant"]);
        }
    }
}
