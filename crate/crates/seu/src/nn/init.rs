use ndarray::{Array, Dimension, ShapeBuilder};
use rand::Rng;

/// He (Kaiming) uniform initialization: U(-b, b) with b = sqrt(6 / fan_in).
///
/// Fill order is the array's logical order, so identical seeds produce
/// bit-identical tensors.
pub fn he_uniform<D, Sh>(shape: Sh, fan_in: usize, rng: &mut impl Rng) -> Array<f32, D>
where
    D: Dimension,
    Sh: ShapeBuilder<Dim = D>,
{
    let bound = (6.0 / fan_in.max(1) as f32).sqrt();
    let mut a = Array::zeros(shape);
    for v in a.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    a
}
