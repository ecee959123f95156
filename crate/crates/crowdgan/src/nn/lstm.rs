//! Gated recurrent cell parameters and initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Parameter handles for one recurrent cell.
///
/// Weight layout matches [`Tape::lstm_step`]: `wx` is `[4H x input]`, `wh`
/// `[4H x H]`, `bias` `[4H]`, gate order `[input, forget, candidate, output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmParams {
    /// Register a cell with uniform `[-k, k]` weights, `k = 1/sqrt(fan_in)`,
    /// and forget-gate bias 1.0.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let kx = 1.0 / (input_size as f64).sqrt();
        let kh = 1.0 / (hidden_size as f64).sqrt();
        let wx = Tensor::matrix(
            4 * hidden_size,
            input_size,
            (0..4 * hidden_size * input_size)
                .map(|_| rng.gen_range(-kx..=kx))
                .collect(),
        );
        let wh = Tensor::matrix(
            4 * hidden_size,
            hidden_size,
            (0..4 * hidden_size * hidden_size)
                .map(|_| rng.gen_range(-kh..=kh))
                .collect(),
        );
        let mut bias = vec![0.0; 4 * hidden_size];
        for b in bias.iter_mut().skip(hidden_size).take(hidden_size) {
            *b = 1.0; // forget gate
        }
        LstmParams {
            wx: store.register(&format!("{prefix}.wx"), wx),
            wh: store.register(&format!("{prefix}.wh"), wh),
            bias: store.register(&format!("{prefix}.bias"), Tensor::vector(bias)),
            input_size,
            hidden_size,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.wx, self.wh, self.bias]
    }

    /// Zero `[h; c]` start state as a tape constant.
    pub fn zero_state(&self, tape: &mut Tape) -> NodeId {
        tape.constant(Tensor::zeros(vec![2 * self.hidden_size]))
    }

    /// Run one step, returning `(h', state')` where `state'` feeds the next step.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        state: NodeId,
    ) -> (NodeId, NodeId) {
        let wx = tape.param(store, self.wx);
        let wh = tape.param(store, self.wh);
        let bias = tape.param(store, self.bias);
        let out = tape.lstm_step(wx, wh, bias, x, state);
        let h = tape.slice(out, 0, self.hidden_size);
        (h, out)
    }

    /// Run the cell over a sequence of inputs from a zero state and collect
    /// the hidden state after each step.
    pub fn run_sequence(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &[NodeId],
    ) -> Vec<NodeId> {
        let mut state = self.zero_state(tape);
        let mut hiddens = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let (h, next) = self.step(tape, store, x, state);
            hiddens.push(h);
            state = next;
        }
        hiddens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tape::sigmoid;
    use crate::rng::rng_from_seed;

    /// Scalar gate-by-gate reference for a single step, independent of the
    /// fused tape op.
    fn reference_step(
        wx: &Tensor,
        wh: &Tensor,
        bias: &[f64],
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hs = h.len();
        let gate = |row: usize| -> f64 {
            let mut acc = bias[row];
            for (j, xj) in x.iter().enumerate() {
                acc += wx.row(row)[j] * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                acc += wh.row(row)[j] * hj;
            }
            acc
        };
        let mut h_new = vec![0.0; hs];
        let mut c_new = vec![0.0; hs];
        for k in 0..hs {
            let i = sigmoid(gate(k));
            let f = sigmoid(gate(hs + k));
            let cand = gate(2 * hs + k).tanh();
            let o = sigmoid(gate(3 * hs + k));
            c_new[k] = f * c[k] + i * cand;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn fused_step_matches_scalar_reference() {
        let mut rng = rng_from_seed(7);
        let mut store = ParamStore::new();
        let cell = LstmParams::init(&mut store, "cell", 3, 4, &mut rng);

        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let xn = tape.constant(Tensor::vector(x.clone()));
        let state = tape.constant(Tensor::vector(
            h0.iter().chain(&c0).copied().collect::<Vec<_>>(),
        ));
        let (h, full) = cell.step(&mut tape, &store, xn, state);

        let (h_ref, c_ref) = reference_step(
            store.get(cell.wx),
            store.get(cell.wh),
            store.get(cell.bias).data(),
            &x,
            &h0,
            &c0,
        );
        for (a, b) in tape.value(h).data().iter().zip(&h_ref) {
            assert!((a - b).abs() < 1e-12, "hidden mismatch: {a} vs {b}");
        }
        for (a, b) in tape.value(full).data()[4..].iter().zip(&c_ref) {
            assert!((a - b).abs() < 1e-12, "cell mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn identical_calls_are_identical() {
        let mut rng = rng_from_seed(3);
        let mut store = ParamStore::new();
        let cell = LstmParams::init(&mut store, "cell", 2, 3, &mut rng);
        let run = || {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::vector(vec![0.5, -0.25]));
            let s = cell.zero_state(&mut tape);
            let (h, _) = cell.step(&mut tape, &store, x, s);
            tape.value(h).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = rng_from_seed(1);
        let mut store = ParamStore::new();
        let cell = LstmParams::init(&mut store, "cell", 2, 3, &mut rng);
        let bias = store.get(cell.bias).data();
        assert!(bias[..3].iter().all(|b| *b == 0.0));
        assert!(bias[3..6].iter().all(|b| *b == 1.0));
        assert!(bias[6..].iter().all(|b| *b == 0.0));
    }
}
