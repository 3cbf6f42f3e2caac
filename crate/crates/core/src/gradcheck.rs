//! Finite-difference verification of every backward rule, run in `f64`.
//!
//! Each check compares reverse-mode gradients against central differences.
//! A coordinate whose `±eps` stencil changes the graph's branch signature
//! (a ReLU mask, clamp, `abs` sign or max-pool winner) straddles a kink
//! where central differences are meaningless; such coordinates are
//! replaced by fresh random ones and counted.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{smoothness, training_loss, LossWeights};
use crate::pcnet::{block, NetConfig, NetMode, PreludeNet};
use crate::tensor::{BackwardFault, Graph, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub eps: f64,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub floor: f64,
    /// Coordinates checked per input tensor (all of them if fewer).
    pub coords_per_tensor: usize,
    /// Random problem instances per operation.
    pub trials: usize,
    pub seed: u64,
    pub fault: Option<BackwardFault>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            tolerance: 1e-4,
            floor: 1e-3,
            coords_per_tensor: 24,
            trials: 10,
            seed: 7,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub coords: usize,
    pub resampled: usize,
    pub passed: bool,
}

type Build<'a> = dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'a;

fn eval(build: &Build<'_>, inputs: &[Tensor<f64>]) -> Result<(f64, u64)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    Ok((g.value(loss).data()[0], g.branch_signature()))
}

/// Checks `build`, which maps leaf handles to a scalar, at `inputs`.
pub fn check(name: &str, inputs: &[Tensor<f64>], build: &Build<'_>, cfg: &GradcheckConfig, rng: &mut impl Rng) -> Result<CheckResult> {
    let mut g = Graph::new();
    if let Some(f) = cfg.fault {
        g.inject_fault(f);
    }
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let base_sig = g.branch_signature();
    let grads = g.backward(loss)?;
    let mut res = CheckResult {
        name: name.to_string(),
        max_rel_error: 0.0,
        coords: 0,
        resampled: 0,
        passed: true,
    };
    let mut probe = inputs.to_vec();
    for (j, v) in vars.iter().enumerate() {
        let n = inputs[j].numel();
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[j].shape()));
        let mut order: Vec<usize> = (0..n).collect();
        if n > cfg.coords_per_tensor {
            order.shuffle(rng);
        }
        let mut checked = 0;
        for &i in &order {
            if checked == cfg.coords_per_tensor {
                break;
            }
            let x = inputs[j].data()[i];
            probe[j].data_mut()[i] = x + cfg.eps;
            let (fp, sp) = eval(build, &probe)?;
            probe[j].data_mut()[i] = x - cfg.eps;
            let (fm, sm) = eval(build, &probe)?;
            probe[j].data_mut()[i] = x;
            if sp != base_sig || sm != base_sig {
                res.resampled += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * cfg.eps);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            res.max_rel_error = res.max_rel_error.max(rel);
            checked += 1;
        }
        res.coords += checked;
    }
    if !res.max_rel_error.is_finite() {
        return Err(Error::NonFinite {
            what: format!("gradient check {name}"),
        });
    }
    res.passed = res.max_rel_error < cfg.tolerance && res.coords > 0;
    Ok(res)
}

fn rand_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn rand_dims(rng: &mut impl Rng, even: bool) -> [usize; 4] {
    let mut ext = |lo: usize| {
        let v = rng.gen_range(lo..=6);
        if even {
            2 * v.div_ceil(2)
        } else {
            v
        }
    };
    [ext(1), ext(1), ext(1), ext(1)]
}

/// Sum of `out` weighted by a fixed random tensor, turning any output into
/// a scalar with a generic upstream gradient.
fn project(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_tensor(g.shape(out), -1.0, 1.0, &mut r);
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

struct OpCase {
    name: &'static str,
    /// Input shapes for one trial.
    shapes: fn(&mut ChaCha8Rng) -> Vec<Vec<usize>>,
    /// Value range of the inputs.
    range: (f64, f64),
    build: fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
}

fn same2(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let d = rand_dims(rng, false).to_vec();
    vec![d.clone(), d]
}

fn one(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    vec![rand_dims(rng, false).to_vec()]
}

fn one_even(rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    vec![rand_dims(rng, true).to_vec()]
}

fn op_cases() -> Vec<OpCase> {
    vec![
        OpCase { name: "add", shapes: same2, range: (-2.0, 2.0), build: |g, v| g.add(v[0], v[1]) },
        OpCase { name: "sub", shapes: same2, range: (-2.0, 2.0), build: |g, v| g.sub(v[0], v[1]) },
        OpCase { name: "mul", shapes: same2, range: (-2.0, 2.0), build: |g, v| g.mul(v[0], v[1]) },
        OpCase { name: "scale", shapes: one, range: (-2.0, 2.0), build: |g, v| Ok(g.scale(v[0], -1.7)) },
        OpCase { name: "add_scalar", shapes: one, range: (-2.0, 2.0), build: |g, v| Ok(g.add_scalar(v[0], 0.3)) },
        OpCase { name: "relu", shapes: one, range: (-2.0, 2.0), build: |g, v| g.relu(v[0]) },
        OpCase { name: "sigmoid", shapes: one, range: (-3.0, 3.0), build: |g, v| g.sigmoid(v[0]) },
        OpCase { name: "tanh", shapes: one, range: (-3.0, 3.0), build: |g, v| g.tanh(v[0]) },
        OpCase { name: "satlu", shapes: one, range: (-0.5, 1.5), build: |g, v| g.satlu(v[0], 1.0) },
        OpCase { name: "softplus", shapes: one, range: (-4.0, 4.0), build: |g, v| g.softplus(v[0]) },
        OpCase { name: "abs", shapes: one, range: (-2.0, 2.0), build: |g, v| g.abs(v[0]) },
        OpCase {
            name: "conv2d",
            shapes: |rng| {
                let [n, cin, h, w] = rand_dims(rng, false);
                let cout = rng.gen_range(1..=4);
                let k = [1, 3, 5][rng.gen_range(0..3)];
                vec![vec![n, cin, h, w], vec![cout, cin, k, k], vec![cout]]
            },
            range: (-1.0, 1.0),
            build: |g, v| g.conv2d(v[0], v[1], v[2]),
        },
        OpCase { name: "maxpool2", shapes: one_even, range: (-2.0, 2.0), build: |g, v| g.maxpool2(v[0]) },
        OpCase { name: "upsample2", shapes: one, range: (-2.0, 2.0), build: |g, v| g.upsample2(v[0]) },
        OpCase { name: "downsample2", shapes: one_even, range: (-2.0, 2.0), build: |g, v| g.downsample2(v[0]) },
        OpCase {
            name: "concat_channels",
            shapes: |rng| {
                let [n, c, h, w] = rand_dims(rng, false);
                vec![vec![n, c, h, w], vec![n, rng.gen_range(1..=4), h, w]]
            },
            range: (-2.0, 2.0),
            build: |g, v| g.concat_channels(&[v[0], v[1]]),
        },
        OpCase {
            name: "slice_channels",
            shapes: |rng| {
                let [n, _, h, w] = rand_dims(rng, false);
                vec![vec![n, rng.gen_range(2..=6), h, w]]
            },
            range: (-2.0, 2.0),
            build: |g, v| {
                let c = g.shape(v[0])[1];
                g.slice_channels(v[0], 1, c - 1)
            },
        },
        OpCase { name: "mean", shapes: one, range: (-2.0, 2.0), build: |g, v| Ok(g.mean(v[0])) },
        OpCase { name: "sum", shapes: one, range: (-2.0, 2.0), build: |g, v| Ok(g.sum(v[0])) },
        OpCase { name: "diff_x", shapes: one, range: (-2.0, 2.0), build: |g, v| g.diff(v[0], true) },
        OpCase { name: "diff_y", shapes: one, range: (-2.0, 2.0), build: |g, v| g.diff(v[0], false) },
        OpCase { name: "error_unit", shapes: same2, range: (-2.0, 2.0), build: |g, v| block::error_unit(g, v[0], v[1]) },
        OpCase {
            name: "convlstm_step",
            shapes: |rng| {
                let [n, _, h, w] = rand_dims(rng, false);
                let (cb, ct, ch) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
                vec![
                    vec![4 * ch, cb + ct + ch, 3, 3],
                    vec![4 * ch],
                    vec![n, ch, h, w],
                    vec![n, ch, h, w],
                    vec![n, cb, h, w],
                    vec![n, ct, h, w],
                ]
            },
            range: (-1.0, 1.0),
            build: |g, v| {
                let s = block::convlstm_step(
                    g,
                    block::ConvLstmWeights { weight: v[0], bias: v[1] },
                    block::ConvLstmState { h: v[2], c: v[3] },
                    v[4],
                    Some(v[5]),
                )?;
                g.concat_channels(&[s.h, s.c])
            },
        },
    ]
}

/// Scalar outputs are used directly; others are projected.
fn scalarize(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    if g.shape(out) == [1] {
        Ok(out)
    } else {
        project(g, out, seed)
    }
}

/// Every primitive on `cfg.trials` random instances with extents at most 6.
pub fn check_ops(cfg: &GradcheckConfig) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for case in op_cases() {
        let mut agg = CheckResult {
            name: case.name.to_string(),
            max_rel_error: 0.0,
            coords: 0,
            resampled: 0,
            passed: true,
        };
        for _ in 0..cfg.trials {
            let shapes = (case.shapes)(&mut rng);
            let inputs: Vec<Tensor<f64>> = shapes
                .iter()
                .map(|s| rand_tensor(s, case.range.0, case.range.1, &mut rng))
                .collect();
            let seed = rng.gen();
            let build = case.build;
            let f = move |g: &mut Graph<f64>, v: &[Var]| {
                let y = build(g, v)?;
                scalarize(g, y, seed)
            };
            let r = check(case.name, &inputs, &f, cfg, &mut rng)?;
            agg.max_rel_error = agg.max_rel_error.max(r.max_rel_error);
            agg.coords += r.coords;
            agg.resampled += r.resampled;
            agg.passed &= r.passed;
        }
        out.push(agg);
    }
    Ok(out)
}

/// Smoothness term gradient with respect to depth.
pub fn check_smoothness(cfg: &GradcheckConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 1);
    let d = rand_tensor(&[2, 1, 5, 6], 0.5, 4.0, &mut rng);
    let rgb = rand_tensor(&[2, 3, 5, 6], 0.0, 1.0, &mut rng);
    let f = |g: &mut Graph<f64>, v: &[Var]| smoothness(g, v[0], &rgb);
    check("smoothness", &[d], &f, cfg, &mut rng)
}

/// The complete training objective of a 6-block network on a 2-frame,
/// 8x16 (height x width) input, differentiated with respect to every
/// parameter tensor.
pub fn check_network(cfg: &GradcheckConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 2);
    let config = NetConfig {
        mode: NetMode::PreludeNet,
        widths: [2, 3, 4],
        frames: 1,
        kernel: 3,
    };
    let net = PreludeNet::<f64>::new(config, cfg.seed)?;
    let (n, h, w) = (1, 8, 16);
    let frames: Vec<Tensor<f64>> = (0..2).map(|_| rand_tensor(&[n, 3, h, w], 0.0, 1.0, &mut rng)).collect();
    let targets: Vec<Option<Tensor<f64>>> = (0..2)
        .map(|_| Some(rand_tensor(&[n, 1, h, w], 1.0, 20.0, &mut rng)))
        .collect();
    let mut weights = LossWeights::standard(2);
    weights.depth = 0.5;
    weights.smoothness = 0.5;
    let names: Vec<String> = net.params().names().map(str::to_string).collect();
    let inputs: Vec<Tensor<f64>> = net.params().iter().map(|(_, t)| t.clone()).collect();
    let f = |g: &mut Graph<f64>, v: &[Var]| {
        let vars = names.iter().cloned().zip(v.iter().copied()).collect();
        let mut run = net.begin_with(g, vars, n, h, w)?;
        let mut outs = Vec::new();
        for fr in &frames {
            let x = g.constant(fr.clone());
            outs.push(run.step(g, x)?);
        }
        training_loss(g, &outs, &frames, &targets, &weights)
    };
    let cfg = GradcheckConfig {
        coords_per_tensor: cfg.coords_per_tensor.min(6),
        ..cfg.clone()
    };
    check("preludenet_loss", &inputs, &f, &cfg, &mut rng)
}

/// Max-pool ties: at an exact tie the gradient goes to the first
/// occurrence; breaking the tie either way moves it to the larger element,
/// in agreement with finite differences.
pub fn check_maxpool_ties(cfg: &GradcheckConfig) -> Result<CheckResult> {
    let grad_of = |vals: [f64; 4]| -> Result<Vec<f64>> {
        let mut g = Graph::new();
        if let Some(f) = cfg.fault {
            g.inject_fault(f);
        }
        let x = g.param(Tensor::new(&[1, 1, 2, 2], vals.to_vec())?);
        let y = g.maxpool2(x)?;
        let s = g.sum(y);
        Ok(g.backward(s)?.get(x).unwrap().data().to_vec())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 3);
    let mut ok = grad_of([4.0, 4.0, 1.0, 2.0])? == [1.0, 0.0, 0.0, 0.0];
    let mut res = CheckResult {
        name: "maxpool2_ties".into(),
        max_rel_error: 0.0,
        coords: 0,
        resampled: 0,
        passed: true,
    };
    for vals in [[4.0 + 1e-2, 4.0, 1.0, 2.0], [4.0, 4.0 + 1e-2, 1.0, 2.0]] {
        let t = Tensor::new(&[1, 1, 2, 2], vals.to_vec())?;
        let f = |g: &mut Graph<f64>, v: &[Var]| {
            let y = g.maxpool2(v[0])?;
            Ok(g.sum(y))
        };
        let r = check("maxpool2_ties", &[t], &f, cfg, &mut rng)?;
        res.max_rel_error = res.max_rel_error.max(r.max_rel_error);
        res.coords += r.coords;
        res.resampled += r.resampled;
        ok &= r.passed;
    }
    res.passed = ok;
    Ok(res)
}

/// All checks: primitives, smoothness, max-pool ties and the full network.
pub fn run_suite(cfg: &GradcheckConfig) -> Result<Vec<CheckResult>> {
    let mut out = check_ops(cfg)?;
    out.push(check_smoothness(cfg)?);
    out.push(check_maxpool_ties(cfg)?);
    out.push(check_network(cfg)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_a_wrong_rule() {
        let cfg = GradcheckConfig {
            fault: Some(BackwardFault::ReluIgnoresMask),
            trials: 2,
            ..Default::default()
        };
        let relu = check_ops(&cfg).unwrap().into_iter().find(|r| r.name == "relu").unwrap();
        assert!(!relu.passed);
    }

    #[test]
    fn smoothness_and_ties_pass() {
        let cfg = GradcheckConfig::default();
        assert!(check_smoothness(&cfg).unwrap().passed);
        assert!(check_maxpool_ties(&cfg).unwrap().passed);
    }
}
