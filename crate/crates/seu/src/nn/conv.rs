use ndarray::{s, Array2, Array4, ArrayView2, ArrayView3, ArrayViewMut3};
use rand::Rng;

use super::{conv_out_len, he_uniform, ParamPairMut, ParamView};

/// Dense 2D convolution (groups = 1), bias-free.
///
/// The 1x1 case runs as a single GEMM over the whole batch; larger kernels
/// go through a per-sample im2col. Backward recomputes the column matrix
/// instead of caching it.
pub struct Conv2d {
    pub w: Array4<f32>, // (out, in, k, k)
    pub g: Array4<f32>,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        dilation: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = he_uniform((out_ch, in_ch, k, k), in_ch * k * k, rng);
        let g = Array4::zeros(w.raw_dim());
        Conv2d {
            w,
            g,
            stride,
            pad,
            dilation,
        }
    }

    pub fn out_ch(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.w.shape()[2]
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
        let (b, ci, h, w) = x.dim();
        debug_assert_eq!(ci, self.in_ch());
        let k = self.kernel();
        let ho = conv_out_len(h, k, self.stride, self.pad, self.dilation);
        let wo = conv_out_len(w, k, self.stride, self.pad, self.dilation);
        if k == 1 {
            return self.forward_1x1(x, ho, wo);
        }
        let co = self.out_ch();
        let w2 = self
            .w
            .view()
            .into_shape_with_order((co, ci * k * k))
            .unwrap();
        let mut y = Array4::zeros((b, co, ho, wo));
        let mut cols = Array2::zeros((ci * k * k, ho * wo));
        for bi in 0..b {
            self.im2col(x.slice(s![bi, .., .., ..]), ho, wo, &mut cols);
            let y_mat = w2.dot(&cols); // (co, ho*wo)
            y.slice_mut(s![bi, .., .., ..])
                .assign(&y_mat.into_shape_with_order((co, ho, wo)).unwrap());
        }
        y
    }

    /// Backward pass; returns dx and, when `accumulate` is set, adds the
    /// weight gradient into `self.g`. Frozen layers pass `accumulate = false`.
    pub fn backward(&mut self, x: &Array4<f32>, dy: &Array4<f32>, accumulate: bool) -> Array4<f32> {
        let (b, ci, h, w) = x.dim();
        let k = self.kernel();
        let co = self.out_ch();
        let (_, dco, ho, wo) = dy.dim();
        debug_assert_eq!(dco, co);
        if k == 1 {
            return self.backward_1x1(x, dy, accumulate);
        }
        let w2 = self
            .w
            .view()
            .into_shape_with_order((co, ci * k * k))
            .unwrap();
        let mut dx = Array4::zeros((b, ci, h, w));
        let mut cols = Array2::zeros((ci * k * k, ho * wo));
        for bi in 0..b {
            let dy_mat = dy
                .slice(s![bi, .., .., ..])
                .into_shape_with_order((co, ho * wo))
                .unwrap();
            if accumulate {
                self.im2col(x.slice(s![bi, .., .., ..]), ho, wo, &mut cols);
                let gw = dy_mat.dot(&cols.t()); // (co, ci*k*k)
                let mut g2 = self
                    .g
                    .view_mut()
                    .into_shape_with_order((co, ci * k * k))
                    .unwrap();
                g2 += &gw;
            }
            let dcols = w2.t().dot(&dy_mat); // (ci*k*k, ho*wo)
            self.col2im(&dcols, ho, wo, dx.slice_mut(s![bi, .., .., ..]));
        }
        dx
    }

    fn forward_1x1(&self, x: &Array4<f32>, ho: usize, wo: usize) -> Array4<f32> {
        debug_assert_eq!(self.pad, 0);
        let (b, _ci, _, _) = x.dim();
        let co = self.out_ch();
        let ci = self.in_ch();
        let s = self.stride;
        let xs = x.slice(s![.., .., ..;s, ..;s]);
        debug_assert_eq!(xs.dim().2, ho);
        // (b, ci, ho, wo) -> (b*ho*wo, ci), one GEMM, then back.
        let xp = xs.permuted_axes([0, 2, 3, 1]);
        let x2 = xp.as_standard_layout();
        let x2 = x2
            .view()
            .into_shape_with_order((b * ho * wo, ci))
            .unwrap()
            .to_owned();
        let w2 = self.w.view().into_shape_with_order((co, ci)).unwrap();
        let y2 = x2.dot(&w2.t()); // (b*ho*wo, co)
        let yp = y2.into_shape_with_order((b, ho, wo, co)).unwrap();
        let y = yp.permuted_axes([0, 3, 1, 2]);
        y.as_standard_layout().to_owned()
    }

    fn backward_1x1(&mut self, x: &Array4<f32>, dy: &Array4<f32>, accumulate: bool) -> Array4<f32> {
        let (b, ci, h, w) = x.dim();
        let co = self.out_ch();
        let (_, _, ho, wo) = dy.dim();
        let s = self.stride;
        let dyp = dy.view().permuted_axes([0, 2, 3, 1]);
        let dy2 = dyp.as_standard_layout();
        let dy2 = dy2
            .view()
            .into_shape_with_order((b * ho * wo, co))
            .unwrap()
            .to_owned();
        let w2 = self.w.view().into_shape_with_order((co, ci)).unwrap();
        if accumulate {
            let xs = x.slice(s![.., .., ..;s, ..;s]);
            let xp = xs.permuted_axes([0, 2, 3, 1]);
            let x2 = xp.as_standard_layout();
            let x2 = x2.view().into_shape_with_order((b * ho * wo, ci)).unwrap();
            let gw = dy2.t().dot(&x2); // (co, ci)
            let mut g2 = self.g.view_mut().into_shape_with_order((co, ci)).unwrap();
            g2 += &gw;
        }
        let dx2 = dy2.dot(&w2); // (b*ho*wo, ci)
        let dxp = dx2.into_shape_with_order((b, ho, wo, ci)).unwrap();
        let dxs = dxp.permuted_axes([0, 3, 1, 2]);
        let mut dx = Array4::zeros((b, ci, h, w));
        dx.slice_mut(s![.., .., ..;s, ..;s]).assign(&dxs);
        dx
    }

    fn im2col(&self, x: ArrayView3<'_, f32>, ho: usize, wo: usize, cols: &mut Array2<f32>) {
        cols.fill(0.0);
        let (ci, h, w) = x.dim();
        let k = self.kernel();
        let (s, p, d) = (self.stride, self.pad, self.dilation);
        let xs = x.as_slice().expect("conv input must be standard layout");
        let cslice = cols.as_slice_mut().unwrap();
        let row_len = ho * wo;
        for c in 0..ci {
            for kh in 0..k {
                for kw in 0..k {
                    let row = ((c * k + kh) * k + kw) * row_len;
                    let (wo_lo, wo_hi) = valid_range(kw, d, p, s, w, wo);
                    for oh in 0..ho {
                        let hi = (oh * s + kh * d) as isize - p as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        let xbase = (c * h + hi as usize) * w;
                        let obase = row + oh * wo;
                        for ow in wo_lo..wo_hi {
                            let wi = ow * s + kw * d - p;
                            cslice[obase + ow] = xs[xbase + wi];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, dcols: &Array2<f32>, ho: usize, wo: usize, mut dx: ArrayViewMut3<'_, f32>) {
        let (ci, h, w) = dx.dim();
        let k = self.kernel();
        let (s, p, d) = (self.stride, self.pad, self.dilation);
        let dslice = dcols.as_slice().unwrap();
        let xslice = dx.as_slice_mut().expect("dx must be standard layout");
        let row_len = ho * wo;
        for c in 0..ci {
            for kh in 0..k {
                for kw in 0..k {
                    let row = ((c * k + kh) * k + kw) * row_len;
                    let (wo_lo, wo_hi) = valid_range(kw, d, p, s, w, wo);
                    for oh in 0..ho {
                        let hi = (oh * s + kh * d) as isize - p as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        let xbase = (c * h + hi as usize) * w;
                        let obase = row + oh * wo;
                        for ow in wo_lo..wo_hi {
                            let wi = ow * s + kw * d - p;
                            xslice[xbase + wi] += dslice[obase + ow];
                        }
                    }
                }
            }
        }
    }
}

/// Output-column range [lo, hi) whose input column `ow*s + kw*d - p` is in
/// bounds.
fn valid_range(kw: usize, d: usize, p: usize, s: usize, w: usize, wo: usize) -> (usize, usize) {
    let off = kw as isize * d as isize - p as isize;
    let lo = if off < 0 {
        ((-off) as usize).div_ceil(s)
    } else {
        0
    };
    // ow*s + off <= w-1
    let hi_inc = (w as isize - 1 - off) / s as isize;
    if hi_inc < 0 {
        return (0, 0);
    }
    let hi = (hi_inc as usize + 1).min(wo);
    (lo.min(hi), hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Reference convolution by direct summation.
    fn conv_ref(x: &Array4<f32>, layer: &Conv2d) -> Array4<f32> {
        let (b, ci, h, w) = x.dim();
        let k = layer.kernel();
        let co = layer.out_ch();
        let (s, p, d) = (layer.stride, layer.pad, layer.dilation);
        let ho = conv_out_len(h, k, s, p, d);
        let wo = conv_out_len(w, k, s, p, d);
        let mut y = Array4::zeros((b, co, ho, wo));
        for bi in 0..b {
            for o in 0..co {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut acc = 0.0f32;
                        for c in 0..ci {
                            for kh in 0..k {
                                for kw in 0..k {
                                    let hi = (oh * s + kh * d) as isize - p as isize;
                                    let wi = (ow * s + kw * d) as isize - p as isize;
                                    if hi >= 0 && hi < h as isize && wi >= 0 && wi < w as isize {
                                        acc += layer.w[[o, c, kh, kw]]
                                            * x[[bi, c, hi as usize, wi as usize]];
                                    }
                                }
                            }
                        }
                        y[[bi, o, oh, ow]] = acc;
                    }
                }
            }
        }
        y
    }

    fn rand_input(b: usize, c: usize, h: usize, w: usize, seed: u64) -> Array4<f32> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut x = Array4::zeros((b, c, h, w));
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        x
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        for &(k, s, p, d) in &[(3, 1, 1, 1), (3, 2, 1, 1), (3, 1, 2, 2), (5, 2, 4, 2)] {
            let mut rng = ChaCha12Rng::seed_from_u64(7);
            let layer = Conv2d::new(3, 4, k, s, p, d, &mut rng);
            let x = rand_input(2, 3, 9, 9, 11);
            let y = layer.forward(&x);
            let y_ref = conv_ref(&x, &layer);
            for (a, b) in y.iter().zip(y_ref.iter()) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pointwise_matches_direct_convolution() {
        for &s in &[1usize, 2] {
            let mut rng = ChaCha12Rng::seed_from_u64(3);
            let layer = Conv2d::new(5, 2, 1, s, 0, 1, &mut rng);
            let x = rand_input(3, 5, 7, 7, 13);
            let y = layer.forward(&x);
            let y_ref = conv_ref(&x, &layer);
            for (a, b) in y.iter().zip(y_ref.iter()) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    /// Finite-difference check of dx and dw on a scalar loss sum(y^2)/2.
    #[test]
    fn gradients_match_finite_differences() {
        for &(k, s, p, d) in &[(1, 1, 0, 1), (1, 2, 0, 1), (3, 1, 1, 1), (3, 2, 2, 2)] {
            let mut rng = ChaCha12Rng::seed_from_u64(21);
            let mut layer = Conv2d::new(2, 3, k, s, p, d, &mut rng);
            let x = rand_input(2, 2, 6, 6, 17);
            let y = layer.forward(&x);
            let dy = y.clone(); // dL/dy for L = sum(y^2)/2
            let dx = layer.backward(&x, &dy, true);

            let eps = 1e-3f32;
            let loss = |l: &Conv2d, xv: &Array4<f32>| -> f64 {
                l.forward(xv).iter().map(|&v| 0.5 * (v as f64) * (v as f64)).sum()
            };
            // dx spot checks
            for &idx in &[[0, 0, 0, 0], [1, 1, 3, 2], [0, 1, 5, 5]] {
                let mut xp = x.clone();
                xp[idx] += eps;
                let mut xm = x.clone();
                xm[idx] -= eps;
                let num = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * eps as f64);
                let got = dx[idx] as f64;
                assert!(
                    (num - got).abs() < 2e-2 * (1.0 + num.abs()),
                    "dx k={k} s={s}: {num} vs {got}"
                );
            }
            // dw spot checks
            for &idx in &[[0usize, 0, 0, 0], [2, 1, k - 1, k - 1]] {
                let mut lp = Conv2d {
                    w: layer.w.clone(),
                    g: Array4::zeros(layer.w.raw_dim()),
                    stride: s,
                    pad: p,
                    dilation: d,
                };
                lp.w[idx] += eps;
                let mut lm = Conv2d {
                    w: layer.w.clone(),
                    g: Array4::zeros(layer.w.raw_dim()),
                    stride: s,
                    pad: p,
                    dilation: d,
                };
                lm.w[idx] -= eps;
                let num = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * eps as f64);
                let got = layer.g[idx] as f64;
                assert!(
                    (num - got).abs() < 2e-2 * (1.0 + num.abs()),
                    "dw k={k} s={s}: {num} vs {got}"
                );
            }
        }
    }
}
