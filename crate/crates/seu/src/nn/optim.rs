use ndarray::ArrayD;

use super::ParamPairMut;

/// SGD with momentum and decoupled-from-nothing plain L2 weight decay:
/// v <- m*v + g + wd*w; w <- w - lr*v.
///
/// Velocity buffers align with the order parameters are passed to `step`,
/// so a given optimizer instance must always see the same parameter list.
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<ArrayD<f32>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, lr: f32, params: &mut [ParamPairMut<'_>]) {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|(w, _)| ArrayD::zeros(w.raw_dim())).collect();
        }
        assert_eq!(
            self.velocity.len(),
            params.len(),
            "optimizer reused with a different parameter list"
        );
        for (i, (w, g)) in params.iter_mut().enumerate() {
            let v = &mut self.velocity[i];
            debug_assert_eq!(v.shape(), w.shape());
            ndarray::Zip::from(v.view_mut())
                .and(w.view())
                .and(g.view())
                .for_each(|v, &w, &g| {
                    *v = self.momentum * *v + g + self.weight_decay * w;
                });
            ndarray::Zip::from(w.view_mut())
                .and(v.view())
                .for_each(|w, &v| {
                    *w -= lr * v;
                });
        }
    }
}

/// Cosine-annealed learning rate for epoch `t` of `total`: starts at
/// `lr_max` and decays toward zero (the final epoch still trains).
pub fn cosine_lr(lr_max: f64, t: usize, total: usize) -> f64 {
    assert!(total > 0);
    0.5 * lr_max * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn sgd_moves_against_gradient() {
        let mut w = ArrayD::from_elem(ndarray::IxDyn(&[2]), 1.0f32);
        let mut g = ArrayD::from_elem(ndarray::IxDyn(&[2]), 0.5f32);
        let mut opt = Sgd::new(0.0, 0.0);
        opt.step(0.1, &mut [(w.view_mut(), g.view_mut())]);
        assert!((w[[0]] - 0.95).abs() < 1e-6);
    }

    #[test]
    fn momentum_accumulates() {
        let mut w = ArrayD::from_elem(ndarray::IxDyn(&[1]), 0.0f32);
        let mut g = ArrayD::from_elem(ndarray::IxDyn(&[1]), 1.0f32);
        let mut opt = Sgd::new(0.9, 0.0);
        opt.step(1.0, &mut [(w.view_mut(), g.view_mut())]);
        assert!((w[[0]] + 1.0).abs() < 1e-6); // v=1
        opt.step(1.0, &mut [(w.view_mut(), g.view_mut())]);
        assert!((w[[0]] + 2.9).abs() < 1e-6); // v=1.9
    }

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0.025, 0, 50) - 0.025).abs() < 1e-12);
        let last = cosine_lr(0.025, 49, 50);
        assert!(last > 0.0 && last < 0.025 * 0.002);
    }
}
