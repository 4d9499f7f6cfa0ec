use ndarray::{Array1, Array2};
use rand::Rng;

use super::{ParamPairMut, ParamView};

/// Fully connected layer with bias: y = x W^T + b.
pub struct Linear {
    pub w: Array2<f32>, // (out, in)
    pub b: Array1<f32>,
    pub gw: Array2<f32>,
    pub gb: Array1<f32>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f32).sqrt();
        let mut w = Array2::zeros((out_dim, in_dim));
        for v in w.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        let mut b = Array1::zeros(out_dim);
        for v in b.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        Linear {
            gw: Array2::zeros(w.raw_dim()),
            gb: Array1::zeros(b.raw_dim()),
            w,
            b,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn params(&self) -> Vec<ParamView<'_>> {
        vec![self.w.view().into_dyn(), self.b.view().into_dyn()]
    }

    pub fn params_mut(&mut self) -> Vec<ParamPairMut<'_>> {
        vec![
            (self.w.view_mut().into_dyn(), self.gw.view_mut().into_dyn()),
            (self.b.view_mut().into_dyn(), self.gb.view_mut().into_dyn()),
        ]
    }

    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        y
    }

    pub fn backward(&mut self, x: &Array2<f32>, dy: &Array2<f32>, accumulate: bool) -> Array2<f32> {
        if accumulate {
            self.gw += &dy.t().dot(x);
            self.gb += &dy.sum_axis(ndarray::Axis(0));
        }
        dy.dot(&self.w)
    }
}
