use ndarray::{Array3, Array4};
use rand::Rng;

use super::{conv_out_len, he_uniform, ParamPairMut, ParamView};

/// Depthwise 2D convolution (one k x k filter per channel), bias-free.
pub struct DepthwiseConv2d {
    pub w: Array3<f32>, // (ch, k, k)
    pub g: Array3<f32>,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl DepthwiseConv2d {
    pub fn new(
        ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = he_uniform((ch, k, k), k * k, rng);
        let g = Array3::zeros(w.raw_dim());
        DepthwiseConv2d {
            w,
            g,
            stride,
            pad,
            dilation,
        }
    }

    pub fn channels(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.w.len()
    }

    pub fn params(&self) -> Vec<ParamView<'_>> {
        vec![self.w.view().into_dyn()]
    }

    pub fn params_mut(&mut self) -> Vec<ParamPairMut<'_>> {
        vec![(self.w.view_mut().into_dyn(), self.g.view_mut().into_dyn())]
    }

    pub fn forward(&self, x: &Array4<f32>) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        debug_assert_eq!(c, self.channels());
        let k = self.kernel();
        let (s, p, d) = (self.stride, self.pad, self.dilation);
        let ho = conv_out_len(h, k, s, p, d);
        let wo = conv_out_len(w, k, s, p, d);
        let mut y = Array4::zeros((b, c, ho, wo));
        let xs = x.as_slice().unwrap();
        let ys = y.as_slice_mut().unwrap();
        let ws = self.w.as_slice().unwrap();
        for bi in 0..b {
            for ci in 0..c {
                let xoff = (bi * c + ci) * h * w;
                let yoff = (bi * c + ci) * ho * wo;
                let woff = ci * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let wk = ws[woff + kh * k + kw];
                        if wk == 0.0 {
                            continue;
                        }
                        let (lo, hi) = valid_cols(kw, d, p, s, w, wo);
                        for oh in 0..ho {
                            let hi_in = (oh * s + kh * d) as isize - p as isize;
                            if hi_in < 0 || hi_in >= h as isize {
                                continue;
                            }
                            let xrow = xoff + hi_in as usize * w;
                            let yrow = yoff + oh * wo;
                            for ow in lo..hi {
                                let wi = ow * s + kw * d - p;
                                ys[yrow + ow] += wk * xs[xrow + wi];
                            }
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array4<f32>, dy: &Array4<f32>, accumulate: bool) -> Array4<f32> {
        let (b, c, h, w) = x.dim();
        let k = self.kernel();
        let (s, p, d) = (self.stride, self.pad, self.dilation);
        let (_, _, ho, wo) = dy.dim();
        let mut dx = Array4::zeros((b, c, h, w));
        let xs = x.as_slice().unwrap();
        let dys = dy.as_slice().unwrap();
        let dxs = dx.as_slice_mut().unwrap();
        let ws = self.w.as_slice().unwrap();
        let gs = self.g.as_slice_mut().unwrap();
        for bi in 0..b {
            for ci in 0..c {
                let xoff = (bi * c + ci) * h * w;
                let yoff = (bi * c + ci) * ho * wo;
                let woff = ci * k * k;
                for kh in 0..k {
                    for kw in 0..k {
                        let wk = ws[woff + kh * k + kw];
                        let mut gacc = 0.0f32;
                        let (lo, hi) = valid_cols(kw, d, p, s, w, wo);
                        for oh in 0..ho {
                            let hi_in = (oh * s + kh * d) as isize - p as isize;
                            if hi_in < 0 || hi_in >= h as isize {
                                continue;
                            }
                            let xrow = xoff + hi_in as usize * w;
                            let yrow = yoff + oh * wo;
                            for ow in lo..hi {
                                let wi = ow * s + kw * d - p;
                                let g = dys[yrow + ow];
                                dxs[xrow + wi] += wk * g;
                                gacc += g * xs[xrow + wi];
                            }
                        }
                        if accumulate {
                            gs[woff + kh * k + kw] += gacc;
                        }
                    }
                }
            }
        }
        dx
    }
}

fn valid_cols(kw: usize, d: usize, p: usize, s: usize, w: usize, wo: usize) -> (usize, usize) {
    let off = kw as isize * d as isize - p as isize;
    let lo = if off < 0 {
        ((-off) as usize).div_ceil(s)
    } else {
        0
    };
    let hi_inc = (w as isize - 1 - off) / s as isize;
    if hi_inc < 0 {
        return (0, 0);
    }
    (lo.min(wo), (hi_inc as usize + 1).min(wo))
}
