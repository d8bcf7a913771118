//! Depthwise message passing over the `T x N` node grid.
//!
//! Each layer applies, in order: a pointwise `C x C` mixing with ReLU, a
//! per-channel convolution along time, a per-channel convolution along
//! nodes, and a joint `w_T x w_N` max pool. The pool records, for every
//! pooled cell and channel, the flat index `t * N + n` of the winning input
//! cell. Ragged windows simply have fewer candidates, which is equivalent to
//! padding with negative infinity. Ties go to the lowest flat index.

use ndarray::{Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{flatten3, init_uniform, relu, relu_backward, unflatten3, LINEAR_GAIN, RELU_GAIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessagePassingShape {
    pub channels: usize,
    pub layers: usize,
    pub time_kernel: usize,
    pub node_kernel: usize,
    pub pool_time: usize,
    pub pool_nodes: usize,
}

impl Default for MessagePassingShape {
    fn default() -> Self {
        MessagePassingShape {
            channels: 32,
            layers: 3,
            time_kernel: 3,
            node_kernel: 3,
            pool_time: 2,
            pool_nodes: 2,
        }
    }
}

impl MessagePassingShape {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("message passing needs at least one layer".into()));
        }
        if self.time_kernel.is_multiple_of(2) || self.node_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel widths must be odd, got {} and {}",
                self.time_kernel, self.node_kernel
            )));
        }
        if self.pool_time == 0 || self.pool_nodes == 0 || self.channels == 0 {
            return Err(Error::Config("pool windows and channels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `C x C`, applied as `X W`.
    pub pointwise: Array2<f64>,
    /// `C x t_k`, one temporal kernel per channel.
    pub time_kernels: Array2<f64>,
    /// `C x n_k`, one node kernel per channel.
    pub node_kernels: Array2<f64>,
    pub pool: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessagePassingParams {
    pub layers: Vec<LayerParams>,
}

impl MessagePassingParams {
    pub fn init<R: Rng>(rng: &mut R, shape: MessagePassingShape) -> Result<Self> {
        shape.validate()?;
        let c = shape.channels;
        let layers = (0..shape.layers)
            .map(|_| LayerParams {
                pointwise: init_uniform(rng, c, c, c, RELU_GAIN),
                time_kernels: init_uniform(rng, c, shape.time_kernel, shape.time_kernel, LINEAR_GAIN),
                node_kernels: init_uniform(rng, c, shape.node_kernel, shape.node_kernel, LINEAR_GAIN),
                pool: (shape.pool_time, shape.pool_nodes),
            })
            .collect();
        Ok(MessagePassingParams { layers })
    }

    pub fn zeros_like(&self) -> Self {
        MessagePassingParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    pointwise: Array2::zeros(l.pointwise.raw_dim()),
                    time_kernels: Array2::zeros(l.time_kernels.raw_dim()),
                    node_kernels: Array2::zeros(l.node_kernels.raw_dim()),
                    pool: l.pool,
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("mp{i}.pointwise"), &l.pointwise),
                    (format!("mp{i}.time_kernels"), &l.time_kernels),
                    (format!("mp{i}.node_kernels"), &l.node_kernels),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.pointwise, &mut l.time_kernels, &mut l.node_kernels])
            .collect()
    }
}

/// Argmax record of one pooling stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolLayerTrace {
    pub input_shape: (usize, usize),
    pub pooled_shape: (usize, usize),
    /// `T' x N' x C` flat indices into the `input_shape` grid.
    pub argmax: Array3<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PoolTrace {
    pub layers: Vec<PoolLayerTrace>,
}

impl PoolTrace {
    /// Checks index ranges and shape monotonicity.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<(usize, usize)> = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let (t, n) = layer.input_shape;
            let (pt, pn) = layer.pooled_shape;
            if let Some(p) = prev {
                if p != layer.input_shape {
                    return Err(Error::Trace(format!(
                        "layer {l} input {:?} does not match previous output {p:?}",
                        layer.input_shape
                    )));
                }
            }
            if pt > t || pn > n || pt == 0 || pn == 0 {
                return Err(Error::Trace(format!("layer {l} pools {t}x{n} to {pt}x{pn}")));
            }
            let (at, an, _) = layer.argmax.dim();
            if (at, an) != (pt, pn) {
                return Err(Error::Trace(format!("layer {l} argmax grid {at}x{an} vs pooled {pt}x{pn}")));
            }
            if let Some(&bad) = layer.argmax.iter().find(|&&i| i >= t * n) {
                return Err(Error::Trace(format!("layer {l} index {bad} outside {t}x{n} grid")));
            }
            prev = Some(layer.pooled_shape);
        }
        Ok(())
    }

    /// The first `layers` stages.
    pub fn truncated(&self, layers: usize) -> PoolTrace {
        PoolTrace {
            layers: self.layers[..layers.min(self.layers.len())].to_vec(),
        }
    }
}

fn check_kernel(width: usize, extent: usize, axis: &str) -> Result<()> {
    if width.is_multiple_of(2) {
        return Err(Error::Config(format!("{axis} kernel width {width} is even")));
    }
    if width > extent {
        return Err(Error::Shape(format!("{axis} kernel width {width} exceeds {axis} extent {extent}")));
    }
    Ok(())
}

/// Per-channel "same" convolution along axis 0 (time) or 1 (nodes), zero
/// padded. Uses cross-correlation order: `out[i] = sum_j k[j] x[i + j - r]`.
fn depthwise_conv(x: &Array3<f64>, kernels: &Array2<f64>, axis: usize) -> Array3<f64> {
    let (t_len, n_len, c_len) = x.dim();
    let width = kernels.ncols();
    let r = (width / 2) as isize;
    let extent = if axis == 0 { t_len } else { n_len } as isize;
    let mut out = Array3::zeros(x.raw_dim());
    for t in 0..t_len {
        for n in 0..n_len {
            let pos = if axis == 0 { t } else { n } as isize;
            for j in 0..width {
                let src = pos + j as isize - r;
                if src < 0 || src >= extent {
                    continue;
                }
                let (st, sn) = if axis == 0 { (src as usize, n) } else { (t, src as usize) };
                for c in 0..c_len {
                    out[[t, n, c]] += kernels[[c, j]] * x[[st, sn, c]];
                }
            }
        }
    }
    out
}

/// Gradients of [`depthwise_conv`] with respect to its input and kernels.
fn depthwise_conv_backward(x: &Array3<f64>, kernels: &Array2<f64>, axis: usize, grad: &Array3<f64>) -> (Array3<f64>, Array2<f64>) {
    let (t_len, n_len, c_len) = x.dim();
    let width = kernels.ncols();
    let r = (width / 2) as isize;
    let extent = if axis == 0 { t_len } else { n_len } as isize;
    let mut dx = Array3::zeros(x.raw_dim());
    let mut dk = Array2::zeros(kernels.raw_dim());
    for t in 0..t_len {
        for n in 0..n_len {
            let pos = if axis == 0 { t } else { n } as isize;
            for j in 0..width {
                let src = pos + j as isize - r;
                if src < 0 || src >= extent {
                    continue;
                }
                let (st, sn) = if axis == 0 { (src as usize, n) } else { (t, src as usize) };
                for c in 0..c_len {
                    let g = grad[[t, n, c]];
                    dx[[st, sn, c]] += kernels[[c, j]] * g;
                    dk[[c, j]] += x[[st, sn, c]] * g;
                }
            }
        }
    }
    (dx, dk)
}

/// Convolves every channel along the time axis with its own kernel.
pub fn depthwise_time_conv(x: &Array3<f64>, kernels: &Array2<f64>) -> Result<Array3<f64>> {
    check_kernel(kernels.ncols(), x.dim().0, "time")?;
    check_channels(x, kernels)?;
    Ok(depthwise_conv(x, kernels, 0))
}

/// Convolves every channel along the node axis with its own kernel.
pub fn depthwise_node_conv(x: &Array3<f64>, kernels: &Array2<f64>) -> Result<Array3<f64>> {
    check_kernel(kernels.ncols(), x.dim().1, "node")?;
    check_channels(x, kernels)?;
    Ok(depthwise_conv(x, kernels, 1))
}

fn check_channels(x: &Array3<f64>, kernels: &Array2<f64>) -> Result<()> {
    if x.dim().2 != kernels.nrows() {
        return Err(Error::Shape(format!("{} channels against {} kernels", x.dim().2, kernels.nrows())));
    }
    Ok(())
}

/// Joint 2-D max pool over `(w_t, w_n)` windows, per channel.
pub fn max_pool(x: &Array3<f64>, window: (usize, usize)) -> (Array3<f64>, PoolLayerTrace) {
    let (t_len, n_len, c_len) = x.dim();
    let (wt, wn) = window;
    let (pt, pn) = (t_len.div_ceil(wt), n_len.div_ceil(wn));
    let mut out = Array3::zeros((pt, pn, c_len));
    let mut argmax = Array3::zeros((pt, pn, c_len));
    for i in 0..pt {
        for j in 0..pn {
            for c in 0..c_len {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for t in i * wt..((i + 1) * wt).min(t_len) {
                    for n in j * wn..((j + 1) * wn).min(n_len) {
                        let v = x[[t, n, c]];
                        if best_idx == usize::MAX || v > best {
                            best = v;
                            best_idx = t * n_len + n;
                        }
                    }
                }
                out[[i, j, c]] = best;
                argmax[[i, j, c]] = best_idx;
            }
        }
    }
    (
        out,
        PoolLayerTrace {
            input_shape: (t_len, n_len),
            pooled_shape: (pt, pn),
            argmax,
        },
    )
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array3<f64>,
    pre: Array3<f64>,
    mixed: Array3<f64>,
    after_time: Array3<f64>,
    after_nodes: Array3<f64>,
    trace: PoolLayerTrace,
}

/// Forward intermediates of every layer.
#[derive(Debug, Clone)]
pub struct MessagePassingCache {
    layers: Vec<LayerCache>,
    pub output: Array3<f64>,
}

impl MessagePassingCache {
    pub fn trace(&self) -> PoolTrace {
        PoolTrace {
            layers: self.layers.iter().map(|l| l.trace.clone()).collect(),
        }
    }
}

pub fn mp_forward_cached(ne: &Array3<f64>, params: &MessagePassingParams) -> Result<MessagePassingCache> {
    if params.layers.is_empty() {
        return Err(Error::Config("message passing needs at least one layer".into()));
    }
    let mut x = ne.clone();
    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, lp) in params.layers.iter().enumerate() {
        let (t_len, n_len, c_len) = x.dim();
        if c_len != lp.pointwise.nrows() {
            return Err(Error::Shape(format!(
                "layer {l}: {c_len} channels against a {}-row pointwise kernel",
                lp.pointwise.nrows()
            )));
        }
        for (width, extent, axis) in [(lp.time_kernels.ncols(), t_len, "time"), (lp.node_kernels.ncols(), n_len, "node")] {
            match check_kernel(width, extent, axis) {
                Err(Error::Shape(detail)) => return Err(Error::DimensionUnderflow { layer: l, detail }),
                other => other?,
            }
        }
        if lp.pool.0 == 0 || lp.pool.1 == 0 {
            return Err(Error::Config(format!("layer {l}: pool window must be positive")));
        }
        let pre = unflatten3(flatten3(&x).dot(&lp.pointwise), t_len, n_len);
        let mixed = relu(&pre);
        let after_time = depthwise_conv(&mixed, &lp.time_kernels, 0);
        let after_nodes = depthwise_conv(&after_time, &lp.node_kernels, 1);
        let (pooled, trace) = max_pool(&after_nodes, lp.pool);
        layers.push(LayerCache {
            input: x,
            pre,
            mixed,
            after_time,
            after_nodes,
            trace,
        });
        x = pooled;
    }
    Ok(MessagePassingCache { layers, output: x })
}

/// Runs all layers and returns the refined nodes with the pool trace.
pub fn mp_forward(ne: &Array3<f64>, params: &MessagePassingParams) -> Result<(Array3<f64>, PoolTrace)> {
    let cache = mp_forward_cached(ne, params)?;
    let trace = cache.trace();
    Ok((cache.output, trace))
}

/// Returns parameter gradients and the gradient on the input nodes.
pub fn mp_backward(cache: &MessagePassingCache, params: &MessagePassingParams, d_out: &Array3<f64>) -> (MessagePassingParams, Array3<f64>) {
    let mut grads = params.zeros_like();
    let mut g = d_out.clone();
    for (l, (lc, lp)) in cache.layers.iter().zip(&params.layers).enumerate().rev() {
        let (t_len, n_len, c_len) = lc.after_nodes.dim();
        let mut d_nodes = Array3::zeros((t_len, n_len, c_len));
        for ((i, j, c), &idx) in lc.trace.argmax.indexed_iter() {
            d_nodes[[idx / n_len, idx % n_len, c]] += g[[i, j, c]];
        }
        let (d_time, dk_node) = depthwise_conv_backward(&lc.after_time, &lp.node_kernels, 1, &d_nodes);
        let (d_mixed, dk_time) = depthwise_conv_backward(&lc.mixed, &lp.time_kernels, 0, &d_time);
        let d_pre = flatten3(&relu_backward(&lc.pre, &d_mixed));
        grads.layers[l].pointwise = flatten3(&lc.input).t().dot(&d_pre);
        grads.layers[l].time_kernels = dk_time;
        grads.layers[l].node_kernels = dk_node;
        g = unflatten3(d_pre.dot(&lp.pointwise.t()), t_len, n_len);
    }
    (grads, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn series(values: &[f64], along_time: bool) -> Array3<f64> {
        let k = values.len();
        let shape = if along_time { (k, 1, 1) } else { (1, k, 1) };
        Array3::from_shape_vec(shape, values.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernels_are_identity() {
        let x = Array3::from_shape_fn((4, 3, 2), |(t, n, c)| (t * 7 + n * 3 + c) as f64 - 5.0);
        let k = array![[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(depthwise_time_conv(&x, &k).unwrap(), x);
        assert_eq!(depthwise_node_conv(&x, &k).unwrap(), x);
    }

    #[test]
    fn hand_convolutions() {
        let ones = array![[1.0, 1.0, 1.0]];
        let y = depthwise_time_conv(&series(&[1.0, 2.0, 3.0], true), &ones).unwrap();
        assert_eq!(y.iter().copied().collect::<Vec<_>>(), vec![3.0, 6.0, 5.0]);
        let y = depthwise_node_conv(&series(&[4.0, 0.0, 1.0], false), &ones).unwrap();
        assert_eq!(y.iter().copied().collect::<Vec<_>>(), vec![4.0, 5.0, 1.0]);
    }

    #[test]
    fn zero_input_and_linearity() {
        let k = array![[0.3, -1.2, 0.7]];
        let zero = Array3::zeros((3, 4, 1));
        assert!(depthwise_time_conv(&zero, &k).unwrap().iter().all(|&v| v == 0.0));
        let x = Array3::from_shape_fn((3, 4, 1), |(t, n, _)| (t as f64).sin() + n as f64);
        let a = -2.5;
        let lhs = depthwise_node_conv(&(&x * a), &k).unwrap();
        let rhs = depthwise_node_conv(&x, &k).unwrap() * a;
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn even_kernel_is_rejected() {
        let x = Array3::zeros((4, 4, 1));
        assert!(matches!(depthwise_time_conv(&x, &array![[1.0, 1.0]]), Err(Error::Config(_))));
        assert!(matches!(depthwise_node_conv(&x, &array![[1.0, 1.0, 1.0, 1.0, 1.0]]), Err(Error::Shape(_))));
    }

    fn identity_layer(c: usize, pool: (usize, usize)) -> LayerParams {
        let mut k = Array2::zeros((c, 1));
        k.fill(1.0);
        LayerParams {
            pointwise: Array2::eye(c),
            time_kernels: k.clone(),
            node_kernels: k,
            pool,
        }
    }

    #[test]
    fn unit_pool_is_a_no_op() {
        let x = Array3::from_shape_fn((3, 2, 2), |(t, n, c)| (t + 2 * n + 3 * c) as f64);
        let params = MessagePassingParams {
            layers: vec![identity_layer(2, (1, 1))],
        };
        let (out, trace) = mp_forward(&x, &params).unwrap();
        assert_eq!(out, x);
        for ((t, n, _), &idx) in trace.layers[0].argmax.indexed_iter() {
            assert_eq!(idx, t * 2 + n);
        }
    }

    #[test]
    fn two_by_two_pool_picks_the_five() {
        let x = Array3::from_shape_vec((2, 2, 1), vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let params = MessagePassingParams {
            layers: vec![identity_layer(1, (2, 2))],
        };
        let (out, trace) = mp_forward(&x, &params).unwrap();
        assert_eq!(out[[0, 0, 0]], 5.0);
        assert_eq!(trace.layers[0].argmax[[0, 0, 0]], 1);
    }

    #[test]
    fn ties_go_to_lowest_flat_index() {
        let x = Array3::from_elem((3, 3, 1), 2.0);
        let (_, trace) = max_pool(&x, (2, 2));
        assert_eq!(trace.argmax.iter().copied().collect::<Vec<_>>(), vec![0, 2, 6, 8]);
    }

    #[test]
    fn ragged_tails_follow_ceil_shape_law() {
        let x = Array3::from_shape_fn((5, 7, 2), |(t, n, c)| -((t * 7 + n) as f64) - c as f64);
        let (out, trace) = max_pool(&x, (2, 3));
        assert_eq!(out.dim(), (3, 3, 2));
        assert_eq!(trace.pooled_shape, (3, 3));
        // bottom-right window holds only cell (4, 6)
        assert_eq!(trace.argmax[[2, 2, 0]], 4 * 7 + 6);
    }

    #[test]
    fn underflow_is_reported_with_layer() {
        let shape = MessagePassingShape {
            channels: 2,
            layers: 3,
            time_kernel: 3,
            node_kernel: 3,
            pool_time: 2,
            pool_nodes: 2,
        };
        let params = MessagePassingParams::init(&mut crate::rng::stream(1, &[]), shape).unwrap();
        let x = Array3::ones((12, 12, 2));
        assert!(mp_forward(&x, &params).is_ok());
        let x = Array3::ones((6, 8, 2));
        // 6 -> 3 -> 2: third layer sees T = 2 < 3
        match mp_forward(&x, &params) {
            Err(Error::DimensionUnderflow { layer: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_validation_rejects_out_of_range() {
        let x = Array3::from_shape_fn((2, 2, 1), |(t, n, _)| (t + n) as f64);
        let (_, mut layer) = max_pool(&x, (2, 2));
        let mut trace = PoolTrace { layers: vec![layer.clone()] };
        assert!(trace.validate().is_ok());
        layer.argmax[[0, 0, 0]] = 4;
        trace.layers[0] = layer;
        assert!(matches!(trace.validate(), Err(Error::Trace(_))));
    }
}
