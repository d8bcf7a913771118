//! Self-supervised objectives and their gradients.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    TripletCosine,
    TripletAngular,
    Nce,
    CrossModalNce,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triplet_cosine" => Ok(LossKind::TripletCosine),
            "triplet_angular" => Ok(LossKind::TripletAngular),
            "nce" => Ok(LossKind::Nce),
            "cross_modal_nce" => Ok(LossKind::CrossModalNce),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("embedding widths differ: {a} vs {b}")));
    }
    Ok(())
}

/// Value and gradients of the margin triplet objective for one anchor.
#[derive(Debug, Clone)]
pub struct TripletGrad {
    pub loss: f64,
    pub d_anchor: Array1<f64>,
    pub d_positive: Array1<f64>,
    pub d_negative: Array1<f64>,
}

/// `-log(e^{s+} / (e^{s+} + e^{s-}))` with `s+ = f.f+ - m` and `s- = f.f-`.
pub fn triplet_loss(anchor: ArrayView1<f64>, positive: ArrayView1<f64>, negative: ArrayView1<f64>, margin: f64) -> Result<f64> {
    check_dims(anchor.len(), positive.len())?;
    check_dims(anchor.len(), negative.len())?;
    let s_pos = anchor.dot(&positive) - margin;
    let s_neg = anchor.dot(&negative);
    Ok(softplus(s_neg - s_pos))
}

pub fn triplet_loss_grad(anchor: ArrayView1<f64>, positive: ArrayView1<f64>, negative: ArrayView1<f64>, margin: f64) -> Result<TripletGrad> {
    let loss = triplet_loss(anchor, positive, negative, margin)?;
    let s_pos = anchor.dot(&positive) - margin;
    let s_neg = anchor.dot(&negative);
    let g = sigmoid(s_neg - s_pos);
    Ok(TripletGrad {
        loss,
        d_anchor: (&negative - &positive) * g,
        d_positive: &anchor * -g,
        d_negative: &anchor * g,
    })
}

/// Unit-normalised copy; zero stays zero.
pub fn normalize(v: ArrayView1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n > 0.0 {
        &v / n
    } else {
        v.to_owned()
    }
}

/// Pulls a gradient on `normalize(v)` back to `v`.
pub fn normalize_backward(v: ArrayView1<f64>, grad: &Array1<f64>) -> Array1<f64> {
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        return Array1::zeros(v.len());
    }
    let u = &v / n;
    (grad - &(&u * u.dot(grad))) / n
}

/// Triplet objective on unit-normalised embeddings.
pub fn triplet_angular_grad(anchor: ArrayView1<f64>, positive: ArrayView1<f64>, negative: ArrayView1<f64>, margin: f64) -> Result<TripletGrad> {
    let (a, p, n) = (normalize(anchor), normalize(positive), normalize(negative));
    let g = triplet_loss_grad(a.view(), p.view(), n.view(), margin)?;
    Ok(TripletGrad {
        loss: g.loss,
        d_anchor: normalize_backward(anchor, &g.d_anchor),
        d_positive: normalize_backward(positive, &g.d_positive),
        d_negative: normalize_backward(negative, &g.d_negative),
    })
}

fn stack(rows: &[ArrayView1<f64>]) -> Result<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    for r in rows {
        check_dims(d, r.len())?;
    }
    Ok(Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]))
}

#[derive(Debug, Clone)]
pub struct NceGrad {
    pub loss: f64,
    pub d_anchors: Vec<Array1<f64>>,
    pub d_positives: Vec<Array1<f64>>,
}

/// In-batch InfoNCE with dot-product similarity: each anchor's positive is
/// the same-index item, every other positive is a negative.
pub fn nce_loss_grad(anchors: &[ArrayView1<f64>], positives: &[ArrayView1<f64>]) -> Result<NceGrad> {
    if anchors.len() != positives.len() {
        return Err(Error::Shape(format!("{} anchors vs {} positives", anchors.len(), positives.len())));
    }
    let b = anchors.len();
    if b < 2 {
        return Err(Error::Config(format!("contrastive batch needs at least 2 items, got {b}")));
    }
    let a = stack(anchors)?;
    let p = stack(positives)?;
    check_dims(a.ncols(), p.ncols())?;
    let sims = a.dot(&p.t());
    let mut loss = 0.0;
    let mut g = Array2::zeros((b, b));
    for i in 0..b {
        let row = sims.row(i);
        let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        let z: f64 = row.iter().map(|&v| (v - m).exp()).sum();
        let lse = m + z.ln();
        loss += lse - row[i];
        for j in 0..b {
            g[[i, j]] = ((row[j] - lse).exp() - if i == j { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    let da = g.dot(&p);
    let dp = g.t().dot(&a);
    Ok(NceGrad {
        loss: loss / b as f64,
        d_anchors: da.rows().into_iter().map(|r| r.to_owned()).collect(),
        d_positives: dp.rows().into_iter().map(|r| r.to_owned()).collect(),
    })
}

pub fn nce_loss(anchors: &[ArrayView1<f64>], positives: &[ArrayView1<f64>]) -> Result<f64> {
    Ok(nce_loss_grad(anchors, positives)?.loss)
}

/// Symmetrised NCE between video+text and audio+text embeddings of the
/// same batch.
pub fn cross_modal_nce_grad(video_text: &[ArrayView1<f64>], audio_text: &[ArrayView1<f64>]) -> Result<NceGrad> {
    let fwd = nce_loss_grad(video_text, audio_text)?;
    let rev = nce_loss_grad(audio_text, video_text)?;
    Ok(NceGrad {
        loss: 0.5 * (fwd.loss + rev.loss),
        d_anchors: fwd.d_anchors.iter().zip(&rev.d_positives).map(|(x, y)| (x + y) * 0.5).collect(),
        d_positives: fwd.d_positives.iter().zip(&rev.d_anchors).map(|(x, y)| (x + y) * 0.5).collect(),
    })
}

pub fn cross_modal_nce(video_text: &[ArrayView1<f64>], audio_text: &[ArrayView1<f64>]) -> Result<f64> {
    Ok(cross_modal_nce_grad(video_text, audio_text)?.loss)
}
