//! The two per-block computations: the rectified error unit and the
//! convolutional LSTM update.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Var};

/// `concat[relu(a - a_hat), relu(a_hat - a)]` along channels.
pub fn error_unit<T: Scalar>(g: &mut Graph<T>, a: Var, a_hat: Var) -> Result<Var> {
    if g.shape(a) != g.shape(a_hat) {
        return Err(Error::shape("error_unit", g.shape(a), g.shape(a_hat)));
    }
    let under = g.sub(a, a_hat)?;
    let over = g.sub(a_hat, a)?;
    let pos = g.relu(under)?;
    let neg = g.relu(over)?;
    g.concat_channels(&[pos, neg])
}

/// Hidden and cell state of one recurrent unit.
#[derive(Clone, Copy, Debug)]
pub struct ConvLstmState {
    pub h: Var,
    pub c: Var,
}

/// Gate weights of one recurrent unit: a single convolution producing the
/// input, forget, output and candidate pre-activations stacked along
/// channels in that order.
#[derive(Clone, Copy, Debug)]
pub struct ConvLstmWeights {
    pub weight: Var,
    pub bias: Var,
}

/// One ConvLSTM update over `concat(bottom_up, top_down?, h)`.
pub fn convlstm_step<T: Scalar>(
    g: &mut Graph<T>,
    weights: ConvLstmWeights,
    state: ConvLstmState,
    bottom_up: Var,
    top_down: Option<Var>,
) -> Result<ConvLstmState> {
    let hs = g.shape(state.h).to_vec();
    if g.shape(state.c) != hs.as_slice() {
        return Err(Error::shape("convlstm_step", &hs, g.shape(state.c)));
    }
    for (what, v) in [("bottom_up", Some(bottom_up)), ("top_down", top_down)] {
        if let Some(v) = v {
            let s = g.shape(v);
            if s.len() != 4 || s[0] != hs[0] || s[2..] != hs[2..] {
                return Err(Error::invalid(
                    "convlstm_step",
                    format!("{what} {s:?} does not match state resolution {hs:?}"),
                ));
            }
        }
    }
    let mut inputs = vec![bottom_up];
    inputs.extend(top_down);
    inputs.push(state.h);
    let x = g.concat_channels(&inputs)?;
    let gates = g.conv2d(x, weights.weight, weights.bias)?;
    let ch = hs[1];
    if g.shape(gates)[1] != 4 * ch {
        return Err(Error::invalid(
            "convlstm_step",
            format!("gate convolution yields {} channels, expected {}", g.shape(gates)[1], 4 * ch),
        ));
    }
    let i = g.slice_channels(gates, 0, ch)?;
    let f = g.slice_channels(gates, ch, ch)?;
    let o = g.slice_channels(gates, 2 * ch, ch)?;
    let cand = g.slice_channels(gates, 3 * ch, ch)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let o = g.sigmoid(o)?;
    let cand = g.tanh(cand)?;
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c)?;
    let h = g.mul(o, squashed)?;
    Ok(ConvLstmState { h, c })
}
