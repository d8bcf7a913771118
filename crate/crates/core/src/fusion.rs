//! Cross-modal attention, baseline fusions and semantic node attention.
//!
//! All feature streams are time-major: a `T x C` matrix has one row per
//! time segment. Projections therefore multiply on the right, so a branch
//! computes
//!
//! ```text
//! alpha = ReLU((Mq Wq) (Mkv Wk)^T)          T x T
//! Z     = ReLU((alpha (Mkv Wv)) Wout)       T x C
//! ```
//!
//! Attention weights are not softmax-normalised. Row-sum normalisation of
//! `alpha` is available as an opt-in.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{flatten3, init_uniform, relu, relu_backward, unflatten3, FAN_IN_GAIN};

/// Added to alpha row sums when normalisation is enabled.
pub const ROW_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Sum,
    Multiply,
    #[default]
    Concat,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(FusionMode::Sum),
            "multiply" | "multi" => Ok(FusionMode::Multiply),
            "concat" => Ok(FusionMode::Concat),
            other => Err(Error::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// Projection matrices of one attention branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchParams {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub out: Array2<f64>,
}

impl BranchParams {
    /// `query_channels` is the width of the querying stream and
    /// `kv_channels` the width of the attended stream.
    pub fn init<R: Rng>(rng: &mut R, query_channels: usize, kv_channels: usize, proj: usize, out: usize) -> Self {
        BranchParams {
            query: init_uniform(rng, query_channels, proj, query_channels, FAN_IN_GAIN),
            key: init_uniform(rng, kv_channels, proj, kv_channels, FAN_IN_GAIN),
            value: init_uniform(rng, kv_channels, proj, kv_channels, FAN_IN_GAIN),
            out: init_uniform(rng, proj, out, proj, FAN_IN_GAIN),
        }
    }

    pub fn zeros_like(&self) -> Self {
        BranchParams {
            query: Array2::zeros(self.query.raw_dim()),
            key: Array2::zeros(self.key.raw_dim()),
            value: Array2::zeros(self.value.raw_dim()),
            out: Array2::zeros(self.out.raw_dim()),
        }
    }

    /// Identity projections, for square channel counts.
    pub fn identity(channels: usize) -> Self {
        let eye = Array2::eye(channels);
        BranchParams {
            query: eye.clone(),
            key: eye.clone(),
            value: eye.clone(),
            out: eye,
        }
    }
}

/// Widths of the attention stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionShape {
    pub video_channels: usize,
    pub audio_channels: usize,
    pub proj_channels: usize,
    pub channels: usize,
    pub word_channels: usize,
}

/// Every learned matrix of cross-modal and semantic attention.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// Video queries audio.
    pub branch1: BranchParams,
    /// Audio queries video.
    pub branch2: BranchParams,
    /// `2C x C`, used only by [`FusionMode::Concat`].
    pub concat_proj: Array2<f64>,
    /// `C_w x C`, maps word embeddings to the pipeline width.
    pub word_proj: Array2<f64>,
    /// `C x C`, projects the fused stream before scoring nodes.
    pub z_proj: Array2<f64>,
    pub mode: FusionMode,
    pub normalize_alpha: bool,
}

impl AttentionParams {
    pub fn init<R: Rng>(rng: &mut R, shape: AttentionShape, mode: FusionMode, normalize_alpha: bool) -> Self {
        let AttentionShape {
            video_channels: cv,
            audio_channels: ca,
            proj_channels: p,
            channels: c,
            word_channels: cw,
        } = shape;
        AttentionParams {
            branch1: BranchParams::init(rng, cv, ca, p, c),
            branch2: BranchParams::init(rng, ca, cv, p, c),
            concat_proj: init_uniform(rng, 2 * c, c, 2 * c, FAN_IN_GAIN),
            word_proj: init_uniform(rng, cw, c, cw, FAN_IN_GAIN),
            z_proj: init_uniform(rng, c, c, c, FAN_IN_GAIN),
            mode,
            normalize_alpha,
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttentionParams {
            branch1: self.branch1.zeros_like(),
            branch2: self.branch2.zeros_like(),
            concat_proj: Array2::zeros(self.concat_proj.raw_dim()),
            word_proj: Array2::zeros(self.word_proj.raw_dim()),
            z_proj: Array2::zeros(self.z_proj.raw_dim()),
            mode: self.mode,
            normalize_alpha: self.normalize_alpha,
        }
    }

    pub fn channels(&self) -> usize {
        self.branch1.out.ncols()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Array2<f64>)> {
        vec![
            ("attn.q1", &self.branch1.query),
            ("attn.k1", &self.branch1.key),
            ("attn.v1", &self.branch1.value),
            ("attn.out1", &self.branch1.out),
            ("attn.q2", &self.branch2.query),
            ("attn.k2", &self.branch2.key),
            ("attn.v2", &self.branch2.value),
            ("attn.out2", &self.branch2.out),
            ("attn.concat_proj", &self.concat_proj),
            ("attn.word_proj", &self.word_proj),
            ("attn.z_proj", &self.z_proj),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.branch1.query,
            &mut self.branch1.key,
            &mut self.branch1.value,
            &mut self.branch1.out,
            &mut self.branch2.query,
            &mut self.branch2.key,
            &mut self.branch2.value,
            &mut self.branch2.out,
            &mut self.concat_proj,
            &mut self.word_proj,
            &mut self.z_proj,
        ]
    }
}

fn check_segments(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("streams disagree on segment count: {a} vs {b}")));
    }
    Ok(())
}

fn check_matmul(what: &str, lhs_cols: usize, rhs_rows: usize) -> Result<()> {
    if lhs_cols != rhs_rows {
        return Err(Error::Shape(format!("{what}: {lhs_cols} channels against a {rhs_rows}-row projection")));
    }
    Ok(())
}

/// Intermediates of one branch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BranchCache {
    query_in: Array2<f64>,
    kv_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    scores: Array2<f64>,
    alpha_raw: Array2<f64>,
    row_sums: Option<ndarray::Array1<f64>>,
    pub alpha: Array2<f64>,
    hidden: Array2<f64>,
    pre_out: Array2<f64>,
    pub z: Array2<f64>,
}

pub struct BranchGrads {
    pub params: BranchParams,
    pub d_query: Array2<f64>,
    pub d_kv: Array2<f64>,
}

pub fn branch_forward(query: ArrayView2<f64>, kv: ArrayView2<f64>, p: &BranchParams, normalize_alpha: bool) -> Result<BranchCache> {
    check_segments(query.nrows(), kv.nrows())?;
    check_matmul("query stream", query.ncols(), p.query.nrows())?;
    check_matmul("key/value stream", kv.ncols(), p.key.nrows())?;
    let q = query.dot(&p.query);
    let k = kv.dot(&p.key);
    let v = kv.dot(&p.value);
    let scores = q.dot(&k.t());
    let alpha_raw = relu(&scores);
    let (alpha, row_sums) = if normalize_alpha {
        let sums = alpha_raw.sum_axis(Axis(1)) + ROW_NORM_EPS;
        let mut a = alpha_raw.clone();
        for (mut row, s) in a.rows_mut().into_iter().zip(sums.iter()) {
            row /= *s;
        }
        (a, Some(sums))
    } else {
        (alpha_raw.clone(), None)
    };
    let hidden = alpha.dot(&v);
    let pre_out = hidden.dot(&p.out);
    let z = relu(&pre_out);
    Ok(BranchCache {
        query_in: query.to_owned(),
        kv_in: kv.to_owned(),
        q,
        k,
        v,
        scores,
        alpha_raw,
        row_sums,
        alpha,
        hidden,
        pre_out,
        z,
    })
}

pub fn branch_backward(cache: &BranchCache, p: &BranchParams, dz: &Array2<f64>) -> BranchGrads {
    let d_pre_out = relu_backward(&cache.pre_out, dz);
    let d_out = cache.hidden.t().dot(&d_pre_out);
    let d_hidden = d_pre_out.dot(&p.out.t());
    let d_alpha = d_hidden.dot(&cache.v.t());
    let d_v = cache.alpha.t().dot(&d_hidden);
    let d_alpha_raw = match &cache.row_sums {
        None => d_alpha,
        Some(sums) => {
            let mut g = d_alpha.clone();
            for i in 0..g.nrows() {
                let r = sums[i];
                let inner: f64 = d_alpha.row(i).dot(&cache.alpha_raw.row(i));
                g.row_mut(i).mapv_inplace(|x| x / r - inner / (r * r));
            }
            g
        }
    };
    let d_scores = relu_backward(&cache.scores, &d_alpha_raw);
    let d_q = d_scores.dot(&cache.k);
    let d_k = d_scores.t().dot(&cache.q);
    let params = BranchParams {
        query: cache.query_in.t().dot(&d_q),
        key: cache.kv_in.t().dot(&d_k),
        value: cache.kv_in.t().dot(&d_v),
        out: d_out,
    };
    let d_query = d_q.dot(&p.query.t());
    let d_kv = d_k.dot(&p.key.t()) + d_v.dot(&p.value.t());
    BranchGrads { params, d_query, d_kv }
}

/// One attention branch: `query` attends to `key_value`. Returns the refined
/// stream and the `T x T` attention matrix.
pub fn one_branch_attention(
    query: ArrayView2<f64>,
    key_value: ArrayView2<f64>,
    params: &BranchParams,
    normalize_alpha: bool,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let c = branch_forward(query, key_value, params, normalize_alpha)?;
    Ok((c.z, c.alpha))
}

#[derive(Debug, Clone)]
pub struct CrossModalCache {
    pub b1: BranchCache,
    pub b2: BranchCache,
    stacked: Option<Array2<f64>>,
    pub z: Array2<f64>,
}

pub struct CrossModalGrads {
    pub branch1: BranchParams,
    pub branch2: BranchParams,
    pub concat_proj: Array2<f64>,
    pub d_m1: Array2<f64>,
    pub d_m2: Array2<f64>,
}

fn combine(mode: FusionMode, z1: &Array2<f64>, z2: &Array2<f64>, proj: &Array2<f64>) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    if z1.dim() != z2.dim() {
        return Err(Error::Shape(format!("fusion operands {:?} and {:?}", z1.dim(), z2.dim())));
    }
    Ok(match mode {
        FusionMode::Sum => (z1 + z2, None),
        FusionMode::Multiply => (z1 * z2, None),
        FusionMode::Concat => {
            let stacked = ndarray::concatenate(Axis(1), &[z1.view(), z2.view()]).expect("equal rows");
            check_matmul("concatenated stream", stacked.ncols(), proj.nrows())?;
            (stacked.dot(proj), Some(stacked))
        }
    })
}

pub fn cross_modal_forward(m1: ArrayView2<f64>, m2: ArrayView2<f64>, p: &AttentionParams) -> Result<CrossModalCache> {
    check_segments(m1.nrows(), m2.nrows())?;
    let b1 = branch_forward(m1, m2, &p.branch1, p.normalize_alpha)?;
    let b2 = branch_forward(m2, m1, &p.branch2, p.normalize_alpha)?;
    let (z, stacked) = combine(p.mode, &b1.z, &b2.z, &p.concat_proj)?;
    Ok(CrossModalCache { b1, b2, stacked, z })
}

/// Backward from gradients on the fused output and, optionally, directly
/// on the two branch outputs.
pub fn cross_modal_backward(
    cache: &CrossModalCache,
    p: &AttentionParams,
    dz: Option<&Array2<f64>>,
    extra_dz1: Option<&Array2<f64>>,
    extra_dz2: Option<&Array2<f64>>,
) -> CrossModalGrads {
    let shape = cache.b1.z.raw_dim();
    let mut dz1 = Array2::zeros(shape);
    let mut dz2 = Array2::zeros(shape);
    let mut d_concat = Array2::zeros(p.concat_proj.raw_dim());
    if let Some(dz) = dz {
        match p.mode {
            FusionMode::Sum => {
                dz1 += dz;
                dz2 += dz;
            }
            FusionMode::Multiply => {
                dz1 += &(dz * &cache.b2.z);
                dz2 += &(dz * &cache.b1.z);
            }
            FusionMode::Concat => {
                let stacked = cache.stacked.as_ref().expect("concat cache");
                d_concat = stacked.t().dot(dz);
                let d_stacked = dz.dot(&p.concat_proj.t());
                let c = dz1.ncols();
                dz1 += &d_stacked.slice(s![.., ..c]);
                dz2 += &d_stacked.slice(s![.., c..]);
            }
        }
    }
    if let Some(e) = extra_dz1 {
        dz1 += e;
    }
    if let Some(e) = extra_dz2 {
        dz2 += e;
    }
    let g1 = branch_backward(&cache.b1, &p.branch1, &dz1);
    let g2 = branch_backward(&cache.b2, &p.branch2, &dz2);
    CrossModalGrads {
        branch1: g1.params,
        branch2: g2.params,
        concat_proj: d_concat,
        d_m1: g1.d_query + g2.d_kv,
        d_m2: g1.d_kv + g2.d_query,
    }
}

/// Two-branch attention: `m1` attends to `m2` and vice versa; the refined
/// streams are merged according to `params.mode`.
pub fn cross_modal_attention(m1: ArrayView2<f64>, m2: ArrayView2<f64>, params: &AttentionParams) -> Result<Array2<f64>> {
    Ok(cross_modal_forward(m1, m2, params)?.z)
}

/// Attention-free fusion. `proj` (`(C1 + C2) x C`) is required for concat.
pub fn baseline_fusion(m1: ArrayView2<f64>, m2: ArrayView2<f64>, mode: FusionMode, proj: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    check_segments(m1.nrows(), m2.nrows())?;
    match mode {
        FusionMode::Sum | FusionMode::Multiply if m1.dim() != m2.dim() => {
            Err(Error::Shape(format!("element-wise fusion of {:?} and {:?}", m1.dim(), m2.dim())))
        }
        FusionMode::Sum => Ok(&m1 + &m2),
        FusionMode::Multiply => Ok(&m1 * &m2),
        FusionMode::Concat => {
            let stacked = concat_channels(m1, m2);
            match proj {
                Some(w) => {
                    check_matmul("concatenated stream", stacked.ncols(), w.nrows())?;
                    Ok(stacked.dot(w))
                }
                None => Err(Error::Config("concat fusion needs a projection matrix".into())),
            }
        }
    }
}

/// Channel-wise concatenation, before any projection.
pub fn concat_channels(m1: ArrayView2<f64>, m2: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[m1, m2]).expect("equal rows")
}

/// Intermediates of semantic attention.
#[derive(Debug, Clone)]
pub struct SemanticCache {
    nodes_flat: Array2<f64>,
    z: Array2<f64>,
    pn: Array3<f64>,
    pz: Array2<f64>,
    scores: Array2<f64>,
    pub alpha: Array2<f64>,
    pub ne: Array3<f64>,
}

pub struct SemanticGrads {
    pub word_proj: Array2<f64>,
    pub z_proj: Array2<f64>,
    pub d_z: Array2<f64>,
    pub d_nodes: Array3<f64>,
}

pub fn semantic_forward(nodes: &Array3<f64>, z: ArrayView2<f64>, word_proj: &Array2<f64>, z_proj: &Array2<f64>) -> Result<SemanticCache> {
    let (t_len, n_len, cw) = nodes.dim();
    check_segments(t_len, z.nrows())?;
    check_matmul("word embeddings", cw, word_proj.nrows())?;
    check_matmul("fused stream", z.ncols(), z_proj.nrows())?;
    if word_proj.ncols() != z_proj.ncols() {
        return Err(Error::Shape("word and stream projections disagree on width".into()));
    }
    let nodes_flat = flatten3(nodes);
    let pn = unflatten3(nodes_flat.dot(word_proj), t_len, n_len);
    let pz = z.dot(z_proj);
    let mut scores = Array2::zeros((t_len, n_len));
    for t in 0..t_len {
        let pzt = pz.row(t);
        for n in 0..n_len {
            scores[[t, n]] = pn.slice(s![t, n, ..]).dot(&pzt);
        }
    }
    let alpha = relu(&scores);
    let mut ne = pn.clone();
    for t in 0..t_len {
        for n in 0..n_len {
            let a = alpha[[t, n]];
            ne.slice_mut(s![t, n, ..]).mapv_inplace(|x| x * a);
        }
    }
    Ok(SemanticCache {
        nodes_flat,
        z: z.to_owned(),
        pn,
        pz,
        scores,
        alpha,
        ne,
    })
}

pub fn semantic_backward(cache: &SemanticCache, word_proj: &Array2<f64>, z_proj: &Array2<f64>, d_ne: &Array3<f64>) -> SemanticGrads {
    let (t_len, n_len, _) = cache.pn.dim();
    let mut d_pn = Array3::zeros(cache.pn.raw_dim());
    let mut d_pz = Array2::zeros(cache.pz.raw_dim());
    for t in 0..t_len {
        for n in 0..n_len {
            let g = d_ne.slice(s![t, n, ..]);
            let pn = cache.pn.slice(s![t, n, ..]);
            let a = cache.alpha[[t, n]];
            let mut dp = d_pn.slice_mut(s![t, n, ..]);
            dp.scaled_add(a, &g);
            if cache.scores[[t, n]] > 0.0 {
                let ds = g.dot(&pn);
                dp.scaled_add(ds, &cache.pz.row(t));
                d_pz.row_mut(t).scaled_add(ds, &pn);
            }
        }
    }
    let d_pn_flat = flatten3(&d_pn);
    SemanticGrads {
        word_proj: cache.nodes_flat.t().dot(&d_pn_flat),
        z_proj: cache.z.t().dot(&d_pz),
        d_z: d_pz.dot(&z_proj.t()),
        d_nodes: unflatten3(d_pn_flat.dot(&word_proj.t()), t_len, n_len),
    }
}

/// Re-weights each narration node by its ReLU-gated agreement with the
/// fused stream at the same segment.
pub fn semantic_attention(nodes: &Array3<f64>, z: ArrayView2<f64>, params: &AttentionParams) -> Result<Array3<f64>> {
    Ok(semantic_forward(nodes, z, &params.word_proj, &params.z_proj)?.ne)
}
