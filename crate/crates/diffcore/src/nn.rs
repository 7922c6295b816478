//! Parameter containers and the dense layers built from them.

use std::sync::Arc;

use crate::error::Result;
use crate::rng::SplitRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A trainable tensor. Binding it onto a tape shares storage; updating it
/// copies only if a tape still holds the old value.
#[derive(Clone, Debug, PartialEq)]
pub struct Param(Arc<Tensor>);

impl Param {
    pub fn new(t: Tensor) -> Self {
        Self(Arc::new(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn make_mut(&mut self) -> &mut Tensor {
        Arc::make_mut(&mut self.0)
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Var {
        tape.leaf_shared(&self.0, trainable)
    }
}

/// Anything that owns an ordered list of parameters.
pub trait Parameters {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn num_values(&self) -> usize {
        self.params().iter().map(|p| p.tensor().len()).sum()
    }
}

/// Gradients for `vars`, zero-filled where nothing was accumulated.
pub fn collect_grads(tape: &Tape, vars: &[Var]) -> Vec<Vec<f64>> {
    vars.iter()
        .map(|&v| match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.value(v).len()],
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl Linear {
    /// Weights drawn from `N(0, (gain / sqrt(fan_in))²)`, zero bias.
    pub fn new(fan_in: usize, fan_out: usize, gain: f64, rng: &mut SplitRng) -> Self {
        let std = gain / (fan_in as f64).sqrt();
        let w: Vec<f64> = rng.normals(fan_in * fan_out).into_iter().map(|x| x * std).collect();
        Self {
            w: Param::new(Tensor::matrix(fan_in, fan_out, w).expect("dims")),
            b: Param::new(Tensor::zeros(&[1, fan_out])),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Param::new(Tensor::zeros(&[fan_in, fan_out])),
            b: Param::new(Tensor::zeros(&[1, fan_out])),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.tensor().rows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.tensor().cols()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundLinear {
        BoundLinear {
            w: self.w.bind(tape, trainable),
            b: self.b.bind(tape, trainable),
        }
    }
}

impl Parameters for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.matmul(x, self.w)?;
        tape.add_row(y, self.b)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![self.w, self.b]
    }
}

/// Stack of linear layers with `tanh` between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<BoundLinear>,
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`. The output layer uses `out_gain`
    /// (0 gives a zero-initialized head).
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut SplitRng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if i == last && out_gain == 0.0 {
                    Linear::zeros(w[0], w[1])
                } else {
                    Linear::new(w[0], w[1], if i == last { out_gain } else { 1.0 }, rng)
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape, trainable)).collect(),
        }
    }
}

impl Parameters for Mlp {
    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i + 1 < self.layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| l.vars()).collect()
    }
}
