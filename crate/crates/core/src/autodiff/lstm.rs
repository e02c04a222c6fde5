use alloc::format;
use alloc::vec;

use rand::Rng;

use super::{ParamId, ParamStore, Tape, Tensor, Var};

/// Parameter handles of one LSTM direction. Gate columns are ordered
/// input, forget, candidate, output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmParams {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmParams {
    /// Registers `{prefix}.w_input` (`input × 4h`), `{prefix}.w_hidden`
    /// (`h × 4h`) and `{prefix}.bias` (`1 × 4h`). Weights and biases are
    /// uniform in ±`init`, except the forget-gate bias which starts at 1.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        init: f64,
        rng: &mut R,
    ) -> Self {
        let gates = 4 * hidden_size;
        let w_input = store.add(&format!("{prefix}.w_input"), Tensor::uniform(input_size, gates, init, rng));
        let w_hidden = store.add(&format!("{prefix}.w_hidden"), Tensor::uniform(hidden_size, gates, init, rng));
        let mut b = Tensor::uniform(1, gates, init, rng);
        for v in &mut b.data_mut()[hidden_size..2 * hidden_size] {
            *v = 1.0;
        }
        let bias = store.add(&format!("{prefix}.bias"), b);
        Self { w_input, w_hidden, bias, input_size, hidden_size }
    }

    /// Re-attaches to parameters already present in `store` under `prefix`.
    pub fn lookup(store: &ParamStore, prefix: &str) -> Option<Self> {
        let w_input = store.find(&format!("{prefix}.w_input"))?;
        let w_hidden = store.find(&format!("{prefix}.w_hidden"))?;
        let bias = store.find(&format!("{prefix}.bias"))?;
        let input_size = store.get(w_input).rows();
        let hidden_size = store.get(w_hidden).rows();
        let gates = 4 * hidden_size;
        let ok = store.get(w_input).cols() == gates
            && store.get(w_hidden).cols() == gates
            && store.get(bias).shape() == [1, gates];
        ok.then_some(Self { w_input, w_hidden, bias, input_size, hidden_size })
    }

    pub fn bind(&self, tape: &mut Tape<'_>) -> LstmWeights {
        LstmWeights {
            w_input: tape.param(self.w_input),
            w_hidden: tape.param(self.w_hidden),
            bias: tape.param(self.bias),
            input_size: self.input_size,
            hidden_size: self.hidden_size,
        }
    }
}

/// [`LstmParams`] bound to a tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
    pub input_size: usize,
    pub hidden_size: usize,
}

/// Hidden and cell state for a batch (`rows × hidden`).
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape<'_>, rows: usize, hidden: usize) -> Self {
        let h = tape.constant(Tensor::zeros(rows, hidden));
        let c = tape.constant(Tensor::zeros(rows, hidden));
        Self { h, c }
    }
}

/// One step of the gated update:
/// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
pub fn lstm_step(tape: &mut Tape<'_>, x: Var, prev: LstmState, w: &LstmWeights) -> LstmState {
    assert_eq!(tape.value(x).cols(), w.input_size, "lstm input size mismatch");
    let hs = w.hidden_size;
    let xi = tape.matmul(x, w.w_input);
    let hh = tape.matmul(prev.h, w.w_hidden);
    let z = tape.add(xi, hh);
    let z = tape.add_row(z, w.bias);
    let i = tape.slice(z, 0, hs);
    let i = tape.sigmoid(i);
    let f = tape.slice(z, hs, 2 * hs);
    let f = tape.sigmoid(f);
    let g = tape.slice(z, 2 * hs, 3 * hs);
    let g = tape.tanh(g);
    let o = tape.slice(z, 3 * hs, 4 * hs);
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, prev.c);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc);
    LstmState { h, c }
}

/// Runs `w` over `inputs` in the given order. Rows whose `active` flag is
/// false at a step carry their previous state through unchanged, which lets
/// padded sequences of different lengths share one batch. Returns the state
/// after every step, in input order.
pub fn run_masked(
    tape: &mut Tape<'_>,
    w: &LstmWeights,
    inputs: &[Var],
    active: &[vec::Vec<bool>],
    reverse: bool,
) -> vec::Vec<LstmState> {
    assert_eq!(inputs.len(), active.len());
    let rows = match inputs.first() {
        Some(x) => tape.value(*x).rows(),
        None => return vec::Vec::new(),
    };
    let mut state = LstmState::zeros(tape, rows, w.hidden_size);
    let mut out = vec![state; inputs.len()];
    let order: vec::Vec<usize> = if reverse { (0..inputs.len()).rev().collect() } else { (0..inputs.len()).collect() };
    for t in order {
        let next = lstm_step(tape, inputs[t], state, w);
        state = if active[t].iter().all(|a| *a) {
            next
        } else {
            LstmState {
                h: tape.select_rows(active[t].clone(), next.h, state.h),
                c: tape.select_rows(active[t].clone(), next.c, state.c),
            }
        };
        out[t] = state;
    }
    out
}
