use ndarray::{Array2, Array4};

use super::conv_out_len;

/// Backward bookkeeping for a pooling op: max pooling stores the flat input
/// index of each window's argmax, average pooling only needs shapes.
pub enum PoolTrace {
    Max { argmax: Vec<u32>, in_h: usize, in_w: usize },
    Avg { in_h: usize, in_w: usize },
}

/// k x k max pooling; out-of-bounds window cells are ignored.
pub struct MaxPool2d {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl MaxPool2d {
    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, PoolTrace) {
        let (b, c, h, w) = x.dim();
        let ho = conv_out_len(h, self.k, self.stride, self.pad, 1);
        let wo = conv_out_len(w, self.k, self.stride, self.pad, 1);
        let mut y = Array4::zeros((b, c, ho, wo));
        let mut argmax = vec![0u32; b * c * ho * wo];
        let xs = x.as_slice().unwrap();
        let ys = y.as_slice_mut().unwrap();
        for bc in 0..b * c {
            let xoff = bc * h * w;
            let yoff = bc * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for kh in 0..self.k {
                        let hi = (oh * self.stride + kh) as isize - self.pad as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        for kw in 0..self.k {
                            let wi = (ow * self.stride + kw) as isize - self.pad as isize;
                            if wi < 0 || wi >= w as isize {
                                continue;
                            }
                            let idx = hi as usize * w + wi as usize;
                            let v = xs[xoff + idx];
                            if v > best {
                                best = v;
                                best_idx = idx;
                            }
                        }
                    }
                    ys[yoff + oh * wo + ow] = best;
                    argmax[yoff + oh * wo + ow] = best_idx as u32;
                }
            }
        }
        (y, PoolTrace::Max { argmax, in_h: h, in_w: w })
    }

    pub fn backward(&self, trace: &PoolTrace, dy: &Array4<f32>) -> Array4<f32> {
        let (argmax, h, w) = match trace {
            PoolTrace::Max { argmax, in_h, in_w } => (argmax, *in_h, *in_w),
            _ => unreachable!("max pool backward needs a max trace"),
        };
        let (b, c, ho, wo) = dy.dim();
        let mut dx = Array4::zeros((b, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        let dys = dy.as_slice().unwrap();
        for bc in 0..b * c {
            let xoff = bc * h * w;
            let yoff = bc * ho * wo;
            for i in 0..ho * wo {
                dxs[xoff + argmax[yoff + i] as usize] += dys[yoff + i];
            }
        }
        dx
    }
}

/// k x k average pooling; the divisor is the count of in-bounds cells.
pub struct AvgPool2d {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl AvgPool2d {
    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, PoolTrace) {
        let (b, c, h, w) = x.dim();
        let ho = conv_out_len(h, self.k, self.stride, self.pad, 1);
        let wo = conv_out_len(w, self.k, self.stride, self.pad, 1);
        let mut y = Array4::zeros((b, c, ho, wo));
        let xs = x.as_slice().unwrap();
        let ys = y.as_slice_mut().unwrap();
        for bc in 0..b * c {
            let xoff = bc * h * w;
            let yoff = bc * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut acc = 0.0f32;
                    let mut n = 0u32;
                    for kh in 0..self.k {
                        let hi = (oh * self.stride + kh) as isize - self.pad as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        for kw in 0..self.k {
                            let wi = (ow * self.stride + kw) as isize - self.pad as isize;
                            if wi < 0 || wi >= w as isize {
                                continue;
                            }
                            acc += xs[xoff + hi as usize * w + wi as usize];
                            n += 1;
                        }
                    }
                    ys[yoff + oh * wo + ow] = acc / n as f32;
                }
            }
        }
        (y, PoolTrace::Avg { in_h: h, in_w: w })
    }

    pub fn backward(&self, trace: &PoolTrace, dy: &Array4<f32>) -> Array4<f32> {
        let (h, w) = match trace {
            PoolTrace::Avg { in_h, in_w } => (*in_h, *in_w),
            _ => unreachable!("avg pool backward needs an avg trace"),
        };
        let (b, c, ho, wo) = dy.dim();
        let mut dx = Array4::zeros((b, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        let dys = dy.as_slice().unwrap();
        for bc in 0..b * c {
            let xoff = bc * h * w;
            let yoff = bc * ho * wo;
            for oh in 0..ho {
                for ow in 0..wo {
                    // Recount the window to mirror forward's divisor.
                    let mut n = 0u32;
                    for kh in 0..self.k {
                        let hi = (oh * self.stride + kh) as isize - self.pad as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        for kw in 0..self.k {
                            let wi = (ow * self.stride + kw) as isize - self.pad as isize;
                            if wi >= 0 && wi < w as isize {
                                n += 1;
                            }
                        }
                    }
                    let g = dys[yoff + oh * wo + ow] / n as f32;
                    for kh in 0..self.k {
                        let hi = (oh * self.stride + kh) as isize - self.pad as isize;
                        if hi < 0 || hi >= h as isize {
                            continue;
                        }
                        for kw in 0..self.k {
                            let wi = (ow * self.stride + kw) as isize - self.pad as isize;
                            if wi >= 0 && wi < w as isize {
                                dxs[xoff + hi as usize * w + wi as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

/// (B, C, H, W) -> (B, C) spatial mean.
pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (b, c, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f32;
    let mut y = Array2::zeros((b, c));
    for bi in 0..b {
        for ci in 0..c {
            let mut acc = 0.0f32;
            for v in x.slice(ndarray::s![bi, ci, .., ..]).iter() {
                acc += v;
            }
            y[[bi, ci]] = acc * scale;
        }
    }
    y
}

pub fn global_avg_pool_backward(dy: &Array2<f32>, h: usize, w: usize) -> Array4<f32> {
    let (b, c) = dy.dim();
    let scale = 1.0 / (h * w) as f32;
    let mut dx = Array4::zeros((b, c, h, w));
    for bi in 0..b {
        for ci in 0..c {
            let g = dy[[bi, ci]] * scale;
            dx.slice_mut(ndarray::s![bi, ci, .., ..]).fill(g);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_picks_window_maximum_and_routes_gradient() {
        let mut x = Array4::zeros((1, 1, 4, 4));
        x[[0, 0, 1, 1]] = 5.0;
        x[[0, 0, 3, 3]] = 2.0;
        let pool = MaxPool2d { k: 3, stride: 2, pad: 1 };
        let (y, trace) = pool.forward(&x);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_eq!(y[[0, 0, 0, 0]], 5.0);
        assert_eq!(y[[0, 0, 1, 1]], 2.0);
        let mut dy = Array4::zeros((1, 1, 2, 2));
        dy[[0, 0, 0, 0]] = 1.0;
        let dx = pool.backward(&trace, &dy);
        assert_eq!(dx[[0, 0, 1, 1]], 1.0);
        assert_eq!(dx.sum(), 1.0);
    }

    #[test]
    fn avg_pool_divides_by_valid_count() {
        let x = Array4::from_elem((1, 1, 4, 4), 1.0);
        let pool = AvgPool2d { k: 3, stride: 2, pad: 1 };
        let (y, _) = pool.forward(&x);
        // Every window averages only in-bounds ones, so output is all ones.
        for v in y.iter() {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gap_mean_and_backward() {
        let mut x = Array4::zeros((1, 2, 2, 2));
        x.slice_mut(ndarray::s![0, 0, .., ..]).fill(2.0);
        let y = global_avg_pool(&x);
        assert_eq!(y[[0, 0]], 2.0);
        assert_eq!(y[[0, 1]], 0.0);
        let dx = global_avg_pool_backward(&y, 2, 2);
        assert_eq!(dx[[0, 0, 1, 1]], 0.5);
    }
}
