//! Dense layers and multilayer perceptrons with a taped forward pass and a
//! tape-free inference pass. Both routes use the same matrix kernels.

use rand::Rng;

use crate::autodiff::matrix::{self, Matrix};
use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::tape::{Tape, Var};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Softplus,
    Abs,
}

impl Activation {
    fn apply_tape(self, t: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => t.relu(x),
            Activation::Sigmoid => t.sigmoid(x),
            Activation::Softplus => t.softplus(x),
            Activation::Abs => t.abs(x),
        }
    }

    fn apply(self, m: Matrix) -> Matrix {
        match self {
            Activation::Identity => m,
            Activation::Relu => m.map(matrix::relu),
            Activation::Sigmoid => m.map(matrix::sigmoid),
            Activation::Softplus => m.map(matrix::softplus),
            Activation::Abs => m.map(f64::abs),
        }
    }
}

/// Matrix with entries drawn from U(-bound, bound).
pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        // Weights and biases both start in ±1/sqrt(fan_in). Nonzero biases
        // keep the networks from being positively homogeneous.
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            uniform(fan_in, fan_out, bound, rng),
        );
        let bias = bias.then(|| store.add(format!("{name}.bias"), uniform(1, fan_out, bound, rng)));
        Linear {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, t: &mut Tape<'_>, x: Var) -> Result<Var> {
        let w = t.param(self.weight);
        let y = t.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = t.param(b);
                t.add_row(y, b)
            }
            None => Ok(y),
        }
    }

    pub fn infer(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let y = matrix::matmul(x, store.get(self.weight))?;
        match self.bias {
            Some(b) => matrix::add_row(&y, store.get(b)),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(Linear, Activation)>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`; every layer but the last uses `hidden`,
    /// the last uses `last`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let lin = Linear::new(
                    store,
                    &format!("{name}.{i}"),
                    dims[i],
                    dims[i + 1],
                    true,
                    rng,
                );
                (lin, if i + 1 == n { last } else { hidden })
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].0.fan_in
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("nonempty").0.fan_out
    }

    pub fn layers(&self) -> impl Iterator<Item = &Linear> {
        self.layers.iter().map(|(l, _)| l)
    }

    pub fn last_layer(&self) -> &Linear {
        &self.layers.last().expect("nonempty").0
    }

    pub fn forward(&self, t: &mut Tape<'_>, mut x: Var) -> Result<Var> {
        for (lin, act) in &self.layers {
            let y = lin.forward(t, x)?;
            x = act.apply_tape(t, y);
        }
        Ok(x)
    }

    pub fn infer(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        let mut cur = self.layers[0].0.infer(store, x)?;
        cur = self.layers[0].1.apply(cur);
        for (lin, act) in &self.layers[1..] {
            cur = act.apply(lin.infer(store, &cur)?);
        }
        Ok(cur)
    }
}
