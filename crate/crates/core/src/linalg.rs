//! Small dense helpers shared by the layers.

use ndarray::{Array, Array2, Array3, ArrayView1, Dimension};
use rand::Rng;
use rand_distr::Uniform;

pub fn relu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

/// `grad` masked to where `pre` is strictly positive.
pub fn relu_backward<D: Dimension>(pre: &Array<f64, D>, grad: &Array<f64, D>) -> Array<f64, D> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0
        }
    });
    out
}

/// Gain giving the bound `1/sqrt(fan_in)`.
pub const FAN_IN_GAIN: f64 = 0.577_350_269_189_625_8;
/// Gain for maps followed by a linear stage.
pub const LINEAR_GAIN: f64 = 1.0;
/// Gain for maps followed by a ReLU.
pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// Uniform initialisation with variance `gain^2 / fan_in`.
pub fn init_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, gain: f64) -> Array2<f64> {
    let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_fn((rows, cols), |_| rng.sample(dist))
}

pub fn flatten3(x: &Array3<f64>) -> Array2<f64> {
    let (a, b, c) = x.dim();
    x.as_standard_layout().into_owned().into_shape_with_order((a * b, c)).expect("contiguous")
}

pub fn unflatten3(x: Array2<f64>, a: usize, b: usize) -> Array3<f64> {
    let c = x.ncols();
    x.as_standard_layout().into_owned().into_shape_with_order((a, b, c)).expect("contiguous")
}

pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Cosine similarity; zero when either vector vanishes.
pub fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0)
    }
}
