//! Small layer library over the autodiff tape: dense layers, an LSTM cell
//! and strided convolutions, each holding parameter ids into a [`ParamSet`].

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{xavier_conv, xavier_init, NodeId, ParamId, ParamSet, Tape, Tensor};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Tanh,
    Sigmoid,
}

pub fn activate(tape: &mut Tape, x: NodeId, act: Activation) -> NodeId {
    match act {
        Activation::None => x,
        Activation::Relu => tape.relu(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Sigmoid => tape.sigmoid(x),
    }
}

/// Fully connected layer, Xavier weights and zero bias.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let w = params.register(format!("{prefix}.w"), xavier_init(in_dim, out_dim, rng)?)?;
        let b = params.register(format!("{prefix}.b"), Tensor::zeros(vec![1, out_dim]))?;
        Ok(Self { w, b, in_dim, out_dim })
    }

    /// `x` is `[rows, in_dim]`.
    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = params.leaf(tape, self.w);
        let b = params.leaf(tape, self.b);
        let z = tape.matmul(x, w)?;
        tape.add(z, b)
    }
}

/// Dense stack with per-layer activations.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<(Dense, Activation)>,
}

impl Mlp {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        dims: &[usize],
        acts: &[Activation],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        debug_assert_eq!(dims.len(), acts.len() + 1);
        let mut layers = Vec::with_capacity(acts.len());
        for (l, act) in acts.iter().enumerate() {
            layers.push((
                Dense::register(params, &format!("{prefix}.l{l}"), dims[l], dims[l + 1], rng)?,
                *act,
            ));
        }
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (dense, act) in &self.layers {
            h = dense.forward(tape, params, h)?;
            h = activate(tape, h, *act);
        }
        Ok(h)
    }
}

/// LSTM cell with four separately parameterized gates.
#[derive(Debug, Clone)]
pub struct LstmCell {
    gates: [(ParamId, ParamId, ParamId); 4], // (w_x, w_h, b) for i, f, g, o
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut gates = Vec::with_capacity(4);
        for gate in ["i", "f", "g", "o"] {
            let w_x =
                params.register(format!("{prefix}.wx_{gate}"), xavier_init(in_dim, hidden, rng)?)?;
            let w_h =
                params.register(format!("{prefix}.wh_{gate}"), xavier_init(hidden, hidden, rng)?)?;
            let b = params.register(format!("{prefix}.b_{gate}"), Tensor::zeros(vec![1, hidden]))?;
            gates.push((w_x, w_h, b));
        }
        Ok(Self { gates: [gates[0], gates[1], gates[2], gates[3]], in_dim, hidden })
    }

    fn gate(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        idx: usize,
        x: NodeId,
        h: NodeId,
    ) -> Result<NodeId> {
        let (w_x, w_h, b) = self.gates[idx];
        let wx = params.leaf(tape, w_x);
        let wh = params.leaf(tape, w_h);
        let bb = params.leaf(tape, b);
        let zx = tape.matmul(x, wx)?;
        let zh = tape.matmul(h, wh)?;
        let z = tape.add(zx, zh)?;
        tape.add(z, bb)
    }

    /// One step: `(h', c') = lstm(x, h, c)`, all `[1, hidden]`.
    pub fn step(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let zi = self.gate(tape, params, 0, x, h)?;
        let i = tape.sigmoid(zi);
        let zf = self.gate(tape, params, 1, x, h)?;
        let f = tape.sigmoid(zf);
        let zg = self.gate(tape, params, 2, x, h)?;
        let g = tape.tanh(zg);
        let zo = self.gate(tape, params, 3, x, h)?;
        let o = tape.sigmoid(zo);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }
}

/// Strided 3x3 convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2dLayer {
    pub fn register(
        params: &mut ParamSet,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let w = params.register(format!("{prefix}.w"), xavier_conv(out_ch, in_ch, kernel, rng)?)?;
        let b = params.register(format!("{prefix}.b"), Tensor::zeros(vec![out_ch]))?;
        Ok(Self { w, b, stride, pad })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = params.leaf(tape, self.w);
        let b = params.leaf(tape, self.b);
        tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn dense_shapes_and_determinism() {
        let mut params = ParamSet::new();
        let mut rng = derive_rng(1, "nn/dense");
        let dense = Dense::register(&mut params, "d", 4, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2, 4], vec![0.5; 8]).unwrap());
        let y = dense.forward(&mut tape, &params, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[2, 3]);
        // both rows identical input -> identical output
        let d = tape.value(y).data();
        assert_eq!(&d[..3], &d[3..]);
    }

    #[test]
    fn lstm_step_preserves_shapes() {
        let mut params = ParamSet::new();
        let mut rng = derive_rng(2, "nn/lstm");
        let cell = LstmCell::register(&mut params, "l", 5, 8, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![1, 5], vec![0.1; 5]).unwrap());
        let h = tape.constant(Tensor::zeros(vec![1, 8]));
        let c = tape.constant(Tensor::zeros(vec![1, 8]));
        let (h1, c1) = cell.step(&mut tape, &params, x, h, c).unwrap();
        assert_eq!(tape.value(h1).shape(), &[1, 8]);
        assert_eq!(tape.value(c1).shape(), &[1, 8]);
        // tanh(c') bounds h'
        assert!(tape.value(h1).data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn conv_layer_halves_spatial_dims() {
        let mut params = ParamSet::new();
        let mut rng = derive_rng(3, "nn/conv");
        let conv = Conv2dLayer::register(&mut params, "c", 3, 8, 3, 2, 1, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![3, 16, 16]));
        let y = conv.forward(&mut tape, &params, x).unwrap();
        assert_eq!(tape.value(y).shape(), &[8, 8, 8]);
    }
}
