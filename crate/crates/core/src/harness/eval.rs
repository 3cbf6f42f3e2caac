use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dataio::Sequence;
use crate::error::{Error, Result};
use crate::metrics::{depth_metrics, frame_metrics, DepthEvalOptions, DepthMetrics, FrameMetrics};
use crate::pcnet::PreludeNet;
use crate::scenegen::LEVELS;
use crate::tensor::{Graph, Tensor};

use super::pack_windows;

pub const REPORT_SCHEMA: &str = "# preludenet report v1";
pub const CURVE_SCHEMA: &str = "# preludenet curve v1";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Leading steps of each sequence left unscored (at least 1 is always
    /// dropped since the first prediction is made before any input).
    pub warmup_discard: usize,
    pub depth: DepthEvalOptions,
    /// Add one aggregate row per lighting level.
    pub group_by_level: bool,
    /// Steps by which depth predictions lag the frames they describe.
    pub depth_lag: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            warmup_discard: 3,
            depth: DepthEvalOptions::default(),
            group_by_level: false,
            depth_lag: 0,
        }
    }
}

impl EvalConfig {
    pub const KEYS: [&'static str; 6] = [
        "warmup_discard",
        "depth_lag",
        "group_by_level",
        "min_depth",
        "max_depth",
        "median_scaling",
    ];

    /// Applies `key=value` overrides; unknown keys are rejected.
    pub fn apply(&mut self, mut map: BTreeMap<String, String>) -> Result<()> {
        use crate::dataio::take_value as take;
        if let Some(k) = map.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown evaluation key {k:?}")));
        }
        if let Some(v) = take(&mut map, "warmup_discard")? {
            self.warmup_discard = v;
        }
        if let Some(v) = take(&mut map, "depth_lag")? {
            self.depth_lag = v;
        }
        if let Some(v) = take(&mut map, "group_by_level")? {
            self.group_by_level = v;
        }
        if let Some(v) = take(&mut map, "min_depth")? {
            self.depth.min_depth = v;
        }
        if let Some(v) = take(&mut map, "max_depth")? {
            self.depth.max_depth = v;
        }
        if let Some(v) = take(&mut map, "median_scaling")? {
            self.depth.median_scaling = v;
        }
        if !(self.depth.min_depth > 0.0 && self.depth.min_depth < self.depth.max_depth) {
            return Err(Error::Config("need 0 < min_depth < max_depth".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "warmup_discard={}\ndepth_lag={}\ngroup_by_level={}\nmin_depth={}\nmax_depth={}\nmedian_scaling={}\n",
            self.warmup_discard,
            self.depth_lag,
            self.group_by_level,
            self.depth.min_depth,
            self.depth.max_depth,
            self.depth.median_scaling
        )
    }
}

/// Outputs for one sequence. Step `t` predicts image `offset + t`.
#[derive(Clone, Debug)]
pub struct SequencePrediction {
    pub offset: usize,
    /// `[1,3,H,W]` per step.
    pub frames: Vec<Tensor<f32>>,
    /// `[1,1,H',W']` per step, if the model predicts depth.
    pub depths: Option<Vec<Tensor<f32>>>,
}

/// Anything that maps an RGB sequence to per-step predictions. Only images
/// are passed in, so ground-truth depth can never leak into a prediction.
pub trait Predictor {
    fn predict(&self, images: &[Tensor<f32>]) -> Result<SequencePrediction>;
}

impl Predictor for PreludeNet<f32> {
    fn predict(&self, images: &[Tensor<f32>]) -> Result<SequencePrediction> {
        let f = self.config().frames;
        let windows = pack_windows(images, f)?;
        let mut g = Graph::new();
        let (_, outs) = self.run_sequence(&mut g, &windows)?;
        let mut frames = Vec::with_capacity(outs.len());
        let mut depths = Vec::with_capacity(outs.len());
        for o in &outs {
            frames.push(g.value(o.frame).channels(3 * (f - 1), 3)?);
            if let Some(d) = o.depth {
                depths.push(g.value(d).channels(f - 1, 1)?);
            }
        }
        Ok(SequencePrediction {
            offset: f - 1,
            frames,
            depths: (!depths.is_empty()).then_some(depths),
        })
    }
}

fn copy_last(images: &[Tensor<f32>]) -> Vec<Tensor<f32>> {
    (0..images.len()).map(|t| images[t.saturating_sub(1)].clone()).collect()
}

/// Predicts the previous frame and a fixed depth map.
#[derive(Clone, Debug)]
pub struct MeanDepthBaseline {
    pub depth: Tensor<f32>,
}

impl MeanDepthBaseline {
    /// Per-pixel mean ground-truth depth over every frame of `train`.
    pub fn from_dataset(train: &[Sequence]) -> Result<Self> {
        let first = train
            .iter()
            .flat_map(|s| s.depths.first())
            .next()
            .ok_or_else(|| Error::Dataset("no depth maps to average".into()))?;
        let mut acc = vec![0.0f64; first.numel()];
        let mut n = 0usize;
        for d in train.iter().flat_map(|s| &s.depths) {
            if d.shape() != first.shape() {
                return Err(Error::shape("mean depth", first.shape(), d.shape()));
            }
            for (a, v) in acc.iter_mut().zip(d.data()) {
                *a += *v as f64;
            }
            n += 1;
        }
        let data = acc.iter().map(|a| (a / n as f64) as f32).collect();
        Ok(Self {
            depth: Tensor::new(first.shape(), data)?,
        })
    }
}

impl Predictor for MeanDepthBaseline {
    fn predict(&self, images: &[Tensor<f32>]) -> Result<SequencePrediction> {
        Ok(SequencePrediction {
            offset: 0,
            frames: copy_last(images),
            depths: Some(vec![self.depth.clone(); images.len()]),
        })
    }
}

/// Predicts the previous frame and the same depth everywhere.
#[derive(Clone, Copy, Debug)]
pub struct ConstantDepth(pub f32);

impl Predictor for ConstantDepth {
    fn predict(&self, images: &[Tensor<f32>]) -> Result<SequencePrediction> {
        let (_, _, h, w) = images
            .first()
            .ok_or_else(|| Error::invalid("predict", "empty sequence"))?
            .dims4()?;
        Ok(SequencePrediction {
            offset: 0,
            frames: copy_last(images),
            depths: Some(vec![Tensor::full(&[1, 1, h, w], self.0); images.len()]),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub level: Option<u32>,
    pub scored_steps: usize,
    pub depth: Option<DepthMetrics>,
    pub frame: FrameMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub sequences: Vec<ReportRow>,
    /// Filled when grouping by lighting level, in level order.
    pub levels: Vec<ReportRow>,
    pub aggregate: ReportRow,
}

const METRIC_COLUMNS: &str =
    "abs_rel,sq_rel,rmse,rmse_log,delta1,delta2,delta3,model_error,improvement,ssim,psnr,copy_error";

fn metric_fields(r: &ReportRow) -> String {
    let mut s = String::new();
    match &r.depth {
        Some(d) => {
            for v in d.values() {
                write!(s, "{v:.6},").unwrap();
            }
        }
        None => s.push_str(",,,,,,,"),
    }
    let f = &r.frame;
    write!(
        s,
        "{:.6},{:.6},{:.6},{:.6},{:.6}",
        f.model_error, f.improvement, f.ssim, f.psnr, f.copy_error
    )
    .unwrap();
    s
}

impl MetricsReport {
    /// One row per sequence, then per-level rows if grouped, then the
    /// aggregate.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_SCHEMA}\nsequence,level,scored_steps,{METRIC_COLUMNS}\n");
        for r in self.sequences.iter().chain(&self.levels).chain([&self.aggregate]) {
            let level = r.level.map(|l| l.to_string()).unwrap_or_default();
            writeln!(s, "{},{level},{},{}", r.name, r.scored_steps, metric_fields(r)).unwrap();
        }
        s
    }

    /// Per-level rows as the invariance curve table.
    pub fn curve_csv(&self) -> String {
        let mut s = format!("{CURVE_SCHEMA}\nlevel,{METRIC_COLUMNS}\n");
        for r in &self.levels {
            writeln!(s, "{},{}", r.level.unwrap_or(0), metric_fields(r)).unwrap();
        }
        s
    }
}

struct Scored {
    preds: Vec<Tensor<f32>>,
    actuals: Vec<Tensor<f32>>,
    depth: Vec<DepthMetrics>,
    has_depth: bool,
}

fn score_sequence(p: &dyn Predictor, seq: &Sequence, cfg: &EvalConfig) -> Result<Scored> {
    let skip = cfg.warmup_discard.max(1);
    let pred = p.predict(&seq.frames)?;
    let steps = pred.frames.len();
    if pred.offset + steps != seq.frames.len() {
        return Err(Error::invalid(
            "evaluate",
            format!("{steps} predictions at offset {} for {} frames", pred.offset, seq.frames.len()),
        ));
    }
    if steps < skip + 1 {
        return Err(Error::Dataset(format!(
            "{}: {steps} steps leave nothing to score after discarding {skip}",
            seq.name
        )));
    }
    // Step 0 is kept as the copy baseline's reference for step `skip`.
    let preds = pred.frames[skip - 1..].to_vec();
    let actuals = seq.frames[pred.offset + skip - 1..].to_vec();
    let mut depth = Vec::new();
    if let Some(ds) = &pred.depths {
        for t in skip..steps {
            let gt_index = (pred.offset + t)
                .checked_sub(cfg.depth_lag)
                .ok_or_else(|| Error::invalid("evaluate", "depth lag exceeds scored range"))?;
            depth.push(depth_metrics(&ds[t], &seq.depths[gt_index], None, &cfg.depth)?);
        }
    }
    Ok(Scored {
        preds,
        actuals,
        has_depth: pred.depths.is_some(),
        depth,
    })
}

fn summarize(name: String, level: Option<u32>, items: &[&Scored]) -> Result<ReportRow> {
    let preds: Vec<Vec<Tensor<f32>>> = items.iter().map(|s| s.preds.clone()).collect();
    let actuals: Vec<Vec<Tensor<f32>>> = items.iter().map(|s| s.actuals.clone()).collect();
    let frame = frame_metrics(&preds, &actuals, 1)?;
    let depth: Vec<DepthMetrics> = items.iter().flat_map(|s| s.depth.iter().copied()).collect();
    Ok(ReportRow {
        name,
        level,
        scored_steps: items.iter().map(|s| s.preds.len() - 1).sum(),
        depth: if items.iter().all(|s| s.has_depth) {
            DepthMetrics::mean(&depth)
        } else {
            None
        },
        frame,
    })
}

/// Runs every sequence, drops the warm-up steps and reports next-frame and
/// depth metrics per sequence and in aggregate. Depth metrics are computed
/// per frame and averaged; frame metrics pool pixels across sequences.
pub fn evaluate(p: &dyn Predictor, dataset: &[Sequence], cfg: &EvalConfig) -> Result<MetricsReport> {
    if dataset.is_empty() {
        return Err(Error::Dataset("nothing to evaluate".into()));
    }
    let scored: Vec<Scored> = dataset.iter().map(|s| score_sequence(p, s, cfg)).collect::<Result<_>>()?;
    let mut sequences = Vec::with_capacity(dataset.len());
    for (seq, sc) in dataset.iter().zip(&scored) {
        sequences.push(summarize(seq.name.clone(), Some(seq.manifest.lighting_level), &[sc])?);
    }
    let mut levels = Vec::new();
    if cfg.group_by_level {
        let mut groups: BTreeMap<u32, Vec<&Scored>> = BTreeMap::new();
        for (seq, sc) in dataset.iter().zip(&scored) {
            groups.entry(seq.manifest.lighting_level).or_default().push(sc);
        }
        for (level, items) in groups {
            levels.push(summarize(format!("level_{level:02}"), Some(level), &items)?);
        }
    }
    let all: Vec<&Scored> = scored.iter().collect();
    let aggregate = summarize("aggregate".into(), None, &all)?;
    Ok(MetricsReport {
        sequences,
        levels,
        aggregate,
    })
}

/// Evaluation grouped by lighting level; every level 1..=10 must be present.
pub fn invariance_sweep(p: &dyn Predictor, dataset: &[Sequence], cfg: &EvalConfig) -> Result<MetricsReport> {
    for level in LEVELS {
        if !dataset.iter().any(|s| s.manifest.lighting_level == level) {
            return Err(Error::Dataset(format!("no sequences labelled with lighting level {level}")));
        }
    }
    if let Some(s) = dataset.iter().find(|s| !LEVELS.contains(&s.manifest.lighting_level)) {
        return Err(Error::Dataset(format!(
            "{}: lighting level {} outside 1..=10",
            s.name, s.manifest.lighting_level
        )));
    }
    evaluate(
        p,
        dataset,
        &EvalConfig {
            group_by_level: true,
            ..cfg.clone()
        },
    )
}

/// Mean per-block error at each step when every sequence's first image is
/// shown `steps` times. Indexed `[step][block]`.
pub fn static_warmup_profile(net: &PreludeNet<f32>, dataset: &[Sequence], steps: usize) -> Result<Vec<Vec<f64>>> {
    let f = net.config().frames;
    let mut acc: Vec<Vec<f64>> = Vec::new();
    for seq in dataset {
        let first = seq
            .frames
            .first()
            .ok_or_else(|| Error::Dataset(format!("{} is empty", seq.name)))?;
        let images = vec![first.clone(); steps + f - 1];
        let mut g = Graph::new();
        let (_, outs) = net.run_sequence(&mut g, &pack_windows(&images, f)?)?;
        if acc.is_empty() {
            acc = vec![vec![0.0; outs[0].errors.len()]; outs.len()];
        }
        for (row, o) in acc.iter_mut().zip(&outs) {
            for (a, e) in row.iter_mut().zip(o.level_errors(&g)) {
                *a += e;
            }
        }
    }
    let n = dataset.len().max(1) as f64;
    Ok(acc
        .into_iter()
        .map(|r| r.into_iter().map(|v| v / n).collect())
        .collect())
}
