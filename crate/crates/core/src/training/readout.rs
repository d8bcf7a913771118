//! Readout: pointwise convolution with ReLU, then a global max over the
//! remaining time and node cells.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::linalg::{flatten3, relu, relu_backward};

#[derive(Debug, Clone)]
pub struct ReadoutCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// Winning row of the flattened `T x N` grid for each output channel.
    argmax: Vec<usize>,
    pub embedding: Array1<f64>,
}

pub fn readout_forward(ne_hat: &Array3<f64>, weights: &Array2<f64>) -> Result<ReadoutCache> {
    let (t, n, c) = ne_hat.dim();
    if c != weights.nrows() {
        return Err(Error::Shape(format!("readout expects {} channels, got {c}", weights.nrows())));
    }
    if t * n == 0 {
        return Err(Error::Shape("readout over an empty grid".into()));
    }
    let input = flatten3(ne_hat);
    let pre = input.dot(weights);
    let act = relu(&pre);
    let d = weights.ncols();
    let mut argmax = vec![0usize; d];
    let mut embedding = Array1::zeros(d);
    for k in 0..d {
        let col = act.column(k);
        let mut best = 0;
        for (i, &v) in col.iter().enumerate() {
            if v > col[best] {
                best = i;
            }
        }
        argmax[k] = best;
        embedding[k] = col[best];
    }
    Ok(ReadoutCache { input, pre, argmax, embedding })
}

/// Returns the weight gradient and the gradient on the refined nodes.
pub fn readout_backward(cache: &ReadoutCache, weights: &Array2<f64>, d_embedding: &Array1<f64>, dims: (usize, usize)) -> (Array2<f64>, Array3<f64>) {
    let mut d_act = Array2::zeros(cache.pre.raw_dim());
    for (k, &row) in cache.argmax.iter().enumerate() {
        d_act[[row, k]] = d_embedding[k];
    }
    let d_pre = relu_backward(&cache.pre, &d_act);
    let d_w = cache.input.t().dot(&d_pre);
    let d_in = d_pre.dot(&weights.t());
    (d_w, crate::linalg::unflatten3(d_in, dims.0, dims.1))
}

/// Length-`D` graph embedding of refined nodes.
pub fn readout(ne_hat: &Array3<f64>, weights: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(readout_forward(ne_hat, weights)?.embedding)
}
