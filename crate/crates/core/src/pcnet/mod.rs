//! Predictive-coding network: three RGB-encoding blocks and, in the full
//! model, three depth-decoding blocks joined by lateral error connections.
//!
//! Every block owns a recurrent unit `R` (ConvLSTM), a prediction
//! convolution producing `Â` from `R`, and an error unit `E` comparing `Â`
//! with the block's input `A`. Per frame the recurrent units are updated
//! top-down first, then predictions and errors are computed bottom-up.
//!
//! Block layout (scale is the spatial divisor relative to the input):
//!
//! | block | scale | `R` channels | `A` channels     | `A` comes from                          |
//! |-------|-------|--------------|------------------|-----------------------------------------|
//! | enc0  | 1     | w0           | 3F (RGB frames)  | the input frame                         |
//! | enc1  | 2     | w1           | w1               | conv(maxpool(E0))                       |
//! | enc2  | 4     | w2           | w2               | conv(maxpool(E1))                       |
//! | dec3  | 4     | w2           | w2               | conv(E2)                                |
//! | dec4  | 2     | w1           | w1               | conv(concat(up(E3), lateral(E1)))       |
//! | dec5  | 1     | w0           | w0               | conv(concat(up(E4), lateral(E0)))       |
//!
//! dec5 never sees ground-truth depth, so it has no error unit: its
//! recurrent unit consumes the previous step's `A5` instead, and its
//! prediction is mapped to positive depth.

pub mod block;

pub use block::{convlstm_step, error_unit, ConvLstmState, ConvLstmWeights};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Scalar, Tensor, Var};

/// Channel widths of the three encoder levels used in the original
/// architecture.
pub const FULL_WIDTHS: [usize; 3] = [48, 96, 192];

/// Predicted depth is `DEPTH_SCALE * softplus(Â5) + DEPTH_FLOOR`.
pub const DEPTH_SCALE: f64 = 10.0;
pub const DEPTH_FLOOR: f64 = 0.01;

/// Inputs may exceed 1 by at most this much.
pub const INPUT_TOLERANCE: f64 = 1e-6;

const PIXEL_MAX: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetMode {
    /// Encoder stack only; next-frame prediction without depth.
    PredNetOnly,
    /// Encoder plus depth decoder.
    PreludeNet,
}

impl std::fmt::Display for NetMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetMode::PredNetOnly => "prednet_only",
            NetMode::PreludeNet => "preludenet",
        })
    }
}

impl std::str::FromStr for NetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prednet_only" => Ok(NetMode::PredNetOnly),
            "preludenet" => Ok(NetMode::PreludeNet),
            _ => Err(Error::Config(format!("unknown network mode {s:?} (preludenet|prednet_only)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub mode: NetMode,
    pub widths: [usize; 3],
    /// Frames packed into each input step (1 to 3).
    pub frames: usize,
    /// Odd convolution kernel size.
    pub kernel: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            mode: NetMode::PreludeNet,
            widths: FULL_WIDTHS,
            frames: 1,
            kernel: 3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.frames) {
            return Err(Error::invalid("net config", format!("frames must be 1..=3, got {}", self.frames)));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::invalid("net config", format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.widths.contains(&0) {
            return Err(Error::invalid("net config", "channel widths must be positive"));
        }
        Ok(())
    }

    /// Every wired connection shape-checks iff both extents divide by 4.
    pub fn validate_extent(&self, height: usize, width: usize) -> Result<()> {
        if height == 0 || width == 0 || !height.is_multiple_of(4) || !width.is_multiple_of(4) {
            return Err(Error::invalid(
                "net input",
                format!("spatial extents must be positive multiples of 4, got {height}x{width}"),
            ));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        3 * self.frames
    }

    pub fn blocks(&self) -> Vec<BlockSpec> {
        let [w0, w1, w2] = self.widths;
        let f = self.frames;
        let mut specs = vec![
            BlockSpec::new("enc0", 1, w0, 3 * f, 3 * f),
            BlockSpec::new("enc1", 2, w1, w1, w1),
            BlockSpec::new("enc2", 4, w2, w2, w2),
        ];
        if self.mode == NetMode::PreludeNet {
            specs.push(BlockSpec::new("dec3", 4, w2, w2, w2));
            specs.push(BlockSpec::new("dec4", 2, w1, w1, w1));
            let mut top = BlockSpec::new("dec5", 1, w0, w0, f);
            top.has_error = false;
            specs.push(top);
        }
        specs
    }

    /// Recovers the architecture from a set of trained tensors.
    pub fn infer<T: Scalar>(params: &ParamStore<T>) -> Result<Self> {
        let get = |name: &str| {
            params
                .get(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {name}")))
        };
        let mode = if params.get("dec3.lstm.bias").is_some() {
            NetMode::PreludeNet
        } else {
            NetMode::PredNetOnly
        };
        let mut widths = [0; 3];
        for (l, w) in widths.iter_mut().enumerate() {
            *w = get(&format!("enc{l}.lstm.bias"))?.numel() / 4;
        }
        let pred = get("enc0.pred.bias")?.numel();
        if pred % 3 != 0 {
            return Err(Error::CheckpointMismatch(format!("enc0.pred.bias has {pred} values")));
        }
        let kernel = get("enc0.lstm.weight")?.shape()[3];
        let cfg = Self {
            mode,
            widths,
            frames: pred / 3,
            kernel,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Static description of one block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub name: &'static str,
    pub scale: usize,
    pub r_channels: usize,
    pub a_channels: usize,
    /// Channels of `Â`; equals `a_channels` except for the depth head.
    pub pred_channels: usize,
    pub has_error: bool,
}

impl BlockSpec {
    fn new(name: &'static str, scale: usize, r: usize, a: usize, pred: usize) -> Self {
        Self {
            name,
            scale,
            r_channels: r,
            a_channels: a,
            pred_channels: pred,
            has_error: true,
        }
    }

    pub fn e_channels(&self) -> usize {
        2 * self.a_channels
    }

    /// Channels the recurrent unit receives from below.
    fn bottom_up_channels(&self) -> usize {
        if self.has_error {
            self.e_channels()
        } else {
            self.a_channels
        }
    }
}

/// Per-step outputs, as graph handles.
#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `Â0`: predicted frame(s), made before the frame was consumed.
    pub frame: Var,
    /// Predicted depth, one channel per packed frame.
    pub depth: Option<Var>,
    /// `E_l` per block, `None` where a block has no error unit.
    pub errors: Vec<Option<Var>>,
}

impl StepOutput {
    /// Mean magnitude of each block's error unit (0 for blocks without one).
    pub fn level_errors<T: Scalar>(&self, g: &Graph<T>) -> Vec<f64> {
        self.errors
            .iter()
            .map(|e| e.map_or(0.0, |e| g.value(e).mean().as_f64()))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct PreludeNet<T> {
    config: NetConfig,
    params: ParamStore<T>,
}

impl<T: Scalar> PreludeNet<T> {
    /// Fresh network with seeded fan-in-scaled uniform initialisation.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let shapes = Self::param_shapes(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // BTreeMap order: initialisation is independent of construction order.
        for (name, (wshape, bshape)) in &shapes {
            let fan_in: usize = wshape[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.insert(format!("{name}.weight"), Tensor::uniform(wshape, bound, &mut rng));
            params.insert(format!("{name}.bias"), Tensor::uniform(bshape, bound, &mut rng));
        }
        Ok(Self { config, params })
    }

    /// Network with a different number of packed input frames, otherwise
    /// the same architecture.
    pub fn build_multiframe(config: &NetConfig, frames: usize, seed: u64) -> Result<Self> {
        Self::new(NetConfig { frames, ..config.clone() }, seed)
    }

    pub fn from_params(config: NetConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let expected = Self::param_shapes(&config);
        let mut names = Vec::new();
        for (name, (ws, bs)) in &expected {
            for (suffix, shape) in [("weight", ws), ("bias", bs)] {
                let full = format!("{name}.{suffix}");
                let t = params
                    .get(&full)
                    .ok_or_else(|| Error::CheckpointMismatch(format!("missing tensor {full}")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::CheckpointMismatch(format!(
                        "{full}: expected shape {shape:?}, found {:?}",
                        t.shape()
                    )));
                }
                names.push(full);
            }
        }
        if let Some(extra) = params.names().find(|n| !names.iter().any(|m| m == n)) {
            return Err(Error::CheckpointMismatch(format!("unknown tensor {extra}")));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> PreludeNet<U> {
        PreludeNet {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// `(weight shape, bias shape)` for every convolution, keyed by prefix.
    fn param_shapes(config: &NetConfig) -> BTreeMap<String, (Vec<usize>, Vec<usize>)> {
        let k = config.kernel;
        let specs = config.blocks();
        let mut out = BTreeMap::new();
        let mut conv = |name: String, cout: usize, cin: usize| {
            out.insert(name, (vec![cout, cin, k, k], vec![cout]));
        };
        for (i, s) in specs.iter().enumerate() {
            let td = specs.get(i + 1).map_or(0, |a| a.r_channels);
            conv(
                format!("{}.lstm", s.name),
                4 * s.r_channels,
                s.bottom_up_channels() + td + s.r_channels,
            );
            conv(format!("{}.pred", s.name), s.pred_channels, s.r_channels);
            match s.name {
                "enc1" | "enc2" | "dec3" => {
                    conv(format!("{}.input", s.name), s.a_channels, specs[i - 1].e_channels());
                }
                "dec4" | "dec5" => {
                    let lateral = &specs[5 - i];
                    conv(format!("{}.lateral", s.name), s.a_channels, lateral.e_channels());
                    conv(
                        format!("{}.input", s.name),
                        s.a_channels,
                        specs[i - 1].e_channels() + s.a_channels,
                    );
                }
                _ => {}
            }
        }
        out
    }

    /// Binds parameters into `g` and returns a runner with zeroed state.
    pub fn begin(&self, g: &mut Graph<T>, batch: usize, height: usize, width: usize) -> Result<Unroll<'_, T>> {
        let vars = self.params.bind(g);
        self.begin_with(g, vars, batch, height, width)
    }

    /// Like [`begin`](Self::begin) with parameters already bound.
    pub fn begin_with(
        &self,
        g: &mut Graph<T>,
        vars: BTreeMap<String, Var>,
        batch: usize,
        height: usize,
        width: usize,
    ) -> Result<Unroll<'_, T>> {
        self.config.validate_extent(height, width)?;
        if batch == 0 {
            return Err(Error::invalid("net input", "batch must be positive"));
        }
        let specs = self.config.blocks();
        let mut states = Vec::with_capacity(specs.len());
        for s in &specs {
            let (h, w) = (height / s.scale, width / s.scale);
            let zeros = |c: usize| Tensor::zeros(&[batch, c, h, w]);
            states.push(BlockState {
                lstm: ConvLstmState {
                    h: g.constant(zeros(s.r_channels)),
                    c: g.constant(zeros(s.r_channels)),
                },
                bottom_up: g.constant(zeros(s.bottom_up_channels())),
            });
        }
        Ok(Unroll {
            net: self,
            specs,
            vars,
            states,
            batch,
            height,
            width,
        })
    }

    /// Runs a whole sequence from zero state, one output per frame.
    pub fn run_sequence(&self, g: &mut Graph<T>, frames: &[Tensor<T>]) -> Result<(BTreeMap<String, Var>, Vec<StepOutput>)> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("run_sequence", "empty sequence"))?;
        let (n, _, h, w) = first.dims4()?;
        let mut run = self.begin(g, n, h, w)?;
        let mut outs = Vec::with_capacity(frames.len());
        for f in frames {
            if f.shape() != first.shape() {
                return Err(Error::shape("run_sequence", first.shape(), f.shape()));
            }
            let v = g.constant(f.clone());
            outs.push(run.step(g, v)?);
        }
        Ok((run.vars, outs))
    }
}

#[derive(Clone, Copy, Debug)]
struct BlockState {
    lstm: ConvLstmState,
    /// `E_l` (or `A5` for the depth head) from the previous step.
    bottom_up: Var,
}

/// Recurrent state of one sequence being unrolled into a graph.
pub struct Unroll<'a, T> {
    net: &'a PreludeNet<T>,
    specs: Vec<BlockSpec>,
    vars: BTreeMap<String, Var>,
    states: Vec<BlockState>,
    batch: usize,
    height: usize,
    width: usize,
}

impl<T: Scalar> Unroll<'_, T> {
    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    fn conv(&self, g: &mut Graph<T>, prefix: &str, x: Var) -> Result<Var> {
        g.conv2d(x, self.var(&format!("{prefix}.weight")), self.var(&format!("{prefix}.bias")))
    }

    /// Brings `x` (at `from` scale) to `to` scale.
    fn rescale(g: &mut Graph<T>, x: Var, from: usize, to: usize) -> Result<Var> {
        match from.cmp(&to) {
            std::cmp::Ordering::Equal => Ok(x),
            std::cmp::Ordering::Greater => g.upsample2(x),
            std::cmp::Ordering::Less => g.downsample2(x),
        }
    }

    /// One frame: top-down recurrent update, then bottom-up predictions and
    /// errors. `frame` must be `[batch, 3F, H, W]` with values in `[0, 1]`.
    pub fn step(&mut self, g: &mut Graph<T>, frame: Var) -> Result<StepOutput> {
        let cfg = &self.net.config;
        let want = [self.batch, cfg.input_channels(), self.height, self.width];
        if g.shape(frame) != want {
            return Err(Error::shape("step", &want, g.shape(frame)));
        }
        let tol = T::from_f64_lossy(INPUT_TOLERANCE);
        if g
            .value(frame)
            .data()
            .iter()
            .any(|&v| !(v >= -tol && v <= T::one() + tol))
        {
            return Err(Error::invalid("step", "frame values must be normalised to [0, 1]"));
        }

        // Phase 1: recurrent units, top block first.
        let nb = self.specs.len();
        for i in (0..nb).rev() {
            let top_down = if i + 1 < nb {
                let above = self.states[i + 1].lstm.h;
                Some(Self::rescale(g, above, self.specs[i + 1].scale, self.specs[i].scale)?)
            } else {
                None
            };
            let name = self.specs[i].name;
            let w = ConvLstmWeights {
                weight: self.var(&format!("{name}.lstm.weight")),
                bias: self.var(&format!("{name}.lstm.bias")),
            };
            let st = self.states[i];
            self.states[i].lstm = convlstm_step(g, w, st.lstm, st.bottom_up, top_down)?;
        }

        // Phase 2: predictions and errors, bottom block first.
        let mut errors: Vec<Option<Var>> = Vec::with_capacity(nb);
        let mut frame_pred = None;
        let mut depth = None;
        let mut a = frame;
        for i in 0..nb {
            let spec = self.specs[i].clone();
            let h = self.states[i].lstm.h;
            if i > 0 {
                a = match spec.name {
                    "enc1" | "enc2" => {
                        let prev = errors[i - 1].expect("encoder blocks have errors");
                        let pooled = g.maxpool2(prev)?;
                        self.conv(g, &format!("{}.input", spec.name), pooled)?
                    }
                    "dec3" => {
                        let prev = errors[i - 1].expect("enc2 has an error unit");
                        self.conv(g, "dec3.input", prev)?
                    }
                    _ => {
                        let below = errors[i - 1].expect("dec3/dec4 have error units");
                        let below = g.upsample2(below)?;
                        let pair = errors[nb - 1 - i].expect("encoder blocks have errors");
                        let lateral = self.conv(g, &format!("{}.lateral", spec.name), pair)?;
                        let joined = g.concat_channels(&[below, lateral])?;
                        self.conv(g, &format!("{}.input", spec.name), joined)?
                    }
                };
            }
            let raw = self.conv(g, &format!("{}.pred", spec.name), h)?;
            if spec.has_error {
                let a_hat = if i == 0 {
                    let r = g.relu(raw)?;
                    let clamped = g.satlu(r, T::from_f64_lossy(PIXEL_MAX))?;
                    frame_pred = Some(clamped);
                    clamped
                } else {
                    raw
                };
                let e = error_unit(g, a, a_hat)?;
                self.states[i].bottom_up = e;
                errors.push(Some(e));
            } else {
                let sp = g.softplus(raw)?;
                let scaled = g.scale(sp, T::from_f64_lossy(DEPTH_SCALE));
                depth = Some(g.add_scalar(scaled, T::from_f64_lossy(DEPTH_FLOOR)));
                self.states[i].bottom_up = a;
                errors.push(None);
            }
        }

        Ok(StepOutput {
            frame: frame_pred.expect("enc0 always runs"),
            depth,
            errors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: NetMode, frames: usize) -> NetConfig {
        NetConfig {
            mode,
            widths: [3, 4, 5],
            frames,
            kernel: 3,
        }
    }

    fn ramp(shape: &[usize], phase: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| 0.5 + 0.4 * ((i as f64) * 0.37 + phase).sin()).collect()).unwrap()
    }

    #[test]
    fn full_width_shapes_at_every_scale() {
        let net = PreludeNet::<f32>::new(NetConfig::default(), 0).unwrap();
        let mut g = Graph::new();
        let mut run = net.begin(&mut g, 1, 64, 32).unwrap();
        let frame = g.constant(Tensor::full(&[1, 3, 64, 32], 0.5));
        let out = run.step(&mut g, frame).unwrap();
        assert_eq!(g.shape(out.frame), &[1, 3, 64, 32]);
        assert_eq!(g.shape(out.depth.unwrap()), &[1, 1, 64, 32]);
        let expected = [
            ("enc0", 48, 64, 32),
            ("enc1", 96, 32, 16),
            ("enc2", 192, 16, 8),
            ("dec3", 192, 16, 8),
            ("dec4", 96, 32, 16),
            ("dec5", 48, 64, 32),
        ];
        for (st, (name, c, h, w)) in run.states.iter().zip(expected) {
            assert_eq!(g.shape(st.lstm.h), &[1, c, h, w], "{name}");
        }
        assert_eq!(g.shape(out.errors[0].unwrap()), &[1, 6, 64, 32]);
        assert!(out.errors[5].is_none());
    }

    #[test]
    fn errors_nonnegative_and_depth_positive() {
        let net = PreludeNet::<f64>::new(small(NetMode::PreludeNet, 1), 7).unwrap();
        let mut g = Graph::new();
        let frames: Vec<_> = (0..3).map(|t| ramp(&[2, 3, 8, 8], t as f64)).collect();
        let (_, outs) = net.run_sequence(&mut g, &frames).unwrap();
        assert_eq!(outs.len(), 3);
        for o in &outs {
            for e in o.errors.iter().flatten() {
                assert!(g.value(*e).data().iter().all(|&v| v >= 0.0 && v.is_finite()));
            }
            assert!(g.value(o.depth.unwrap()).data().iter().all(|&v| v > 0.0));
            assert!(o.level_errors(&g).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = PreludeNet::<f64>::new(small(NetMode::PreludeNet, 1), 0).unwrap();
        let mut g = Graph::new();
        assert!(net.begin(&mut g, 1, 10, 8).is_err());
        let mut run = net.begin(&mut g, 1, 8, 8).unwrap();
        let bright = g.constant(Tensor::full(&[1, 3, 8, 8], 1.5));
        assert!(run.step(&mut g, bright).is_err());
        let wrong = g.constant(Tensor::full(&[1, 6, 8, 8], 0.5));
        assert!(run.step(&mut g, wrong).is_err());
        assert!(net.run_sequence(&mut g, &[]).is_err());
        assert!(PreludeNet::<f64>::new(small(NetMode::PreludeNet, 4), 0).is_err());
    }

    #[test]
    fn rerun_is_bitwise_identical() {
        let net = PreludeNet::<f32>::new(small(NetMode::PreludeNet, 1), 11).unwrap();
        let frames: Vec<_> = (0..4).map(|t| ramp(&[1, 3, 8, 8], t as f64).cast::<f32>()).collect();
        let run = || {
            let mut g = Graph::new();
            let (_, outs) = net.run_sequence(&mut g, &frames).unwrap();
            outs.iter()
                .map(|o| (g.value(o.frame).clone(), g.value(o.depth.unwrap()).clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn multiframe_channel_packing() {
        let base = small(NetMode::PreludeNet, 1);
        let one = PreludeNet::<f64>::build_multiframe(&base, 1, 5).unwrap();
        assert_eq!(one.params(), PreludeNet::<f64>::new(base.clone(), 5).unwrap().params());

        let two = PreludeNet::<f64>::build_multiframe(&base, 2, 5).unwrap();
        assert_eq!(two.config().input_channels(), 6);
        let three = PreludeNet::<f64>::build_multiframe(&base, 3, 5).unwrap();
        let mut g = Graph::new();
        let (_, outs) = three.run_sequence(&mut g, &[ramp(&[1, 9, 8, 8], 0.0)]).unwrap();
        assert_eq!(g.shape(outs[0].frame), &[1, 9, 8, 8]);
        assert_eq!(g.shape(outs[0].depth.unwrap()), &[1, 3, 8, 8]);
        assert!(PreludeNet::<f64>::build_multiframe(&base, 0, 5).is_err());
    }

    #[test]
    fn prednet_only_has_no_depth() {
        let net = PreludeNet::<f64>::new(small(NetMode::PredNetOnly, 1), 0).unwrap();
        assert!(net.params().get("dec3.lstm.weight").is_none());
        let mut g = Graph::new();
        let (_, outs) = net.run_sequence(&mut g, &[ramp(&[1, 3, 8, 8], 0.0)]).unwrap();
        assert!(outs[0].depth.is_none());
        assert_eq!(outs[0].errors.len(), 3);
    }

    #[test]
    fn config_inferred_from_params() {
        for cfg in [small(NetMode::PreludeNet, 2), small(NetMode::PredNetOnly, 1)] {
            let net = PreludeNet::<f32>::new(cfg.clone(), 0).unwrap();
            assert_eq!(NetConfig::infer(net.params()).unwrap(), cfg);
        }
    }

    #[test]
    fn from_params_reports_first_missing_name() {
        let prednet = PreludeNet::<f32>::new(small(NetMode::PredNetOnly, 1), 0).unwrap();
        let err = PreludeNet::from_params(small(NetMode::PreludeNet, 1), prednet.params().clone()).unwrap_err();
        assert!(err.to_string().contains("dec3.input.weight"), "{err}");
    }
}
