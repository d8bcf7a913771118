//! Graph and embedding metrics: rouge-1 node overlap, task overlap
//! matrices, Precision@K retrieval, a linear probe, and the fusion ablation
//! grid built on that probe.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::fusion::{baseline_fusion, cross_modal_attention, one_branch_attention, AttentionParams, AttentionShape, FusionMode};
use crate::graph::SemanticGraph;
use crate::linalg::cosine;
use crate::par::ExecPolicy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeMode {
    /// `2|A ∩ B| / (|A| + |B|)`.
    #[default]
    F1,
    /// `|A ∩ B| / |B|`, with `b` as the reference.
    Recall,
}

impl std::str::FromStr for RougeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(RougeMode::F1),
            "recall" => Ok(RougeMode::Recall),
            other => Err(Error::Config(format!("unknown rouge mode {other:?}"))),
        }
    }
}

fn counts<S: AsRef<str>>(words: &[S]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for w in words {
        *m.entry(w.as_ref()).or_insert(0) += 1;
    }
    m
}

/// Unigram overlap of two word multisets. Empty against empty is 1.
pub fn rouge1_node_overlap<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T], mode: RougeMode) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let (ca, cb) = (counts(a), counts(b));
    let shared: usize = ca.iter().map(|(w, n)| (*n).min(cb.get(w).copied().unwrap_or(0))).sum();
    match mode {
        RougeMode::F1 => 2.0 * shared as f64 / (a.len() + b.len()) as f64,
        RougeMode::Recall if b.is_empty() => 0.0,
        RougeMode::Recall => shared as f64 / b.len() as f64,
    }
}

pub fn rouge1<S: AsRef<str>, T: AsRef<str>>(a: &[S], b: &[T]) -> f64 {
    rouge1_node_overlap(a, b, RougeMode::F1)
}

/// Task-by-task mean overlap. Cells without any pair are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub tasks: Vec<String>,
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Mean of the defined diagonal cells.
    pub same_task_mean: Option<f64>,
    /// Mean of the defined off-diagonal cells.
    pub diff_task_mean: Option<f64>,
}

/// Pairwise rouge-1 between graph vocabularies, averaged per task pair.
/// Self-pairs are excluded.
pub fn task_overlap_matrix(graphs: &[(String, SemanticGraph)], mode: RougeMode, policy: ExecPolicy) -> Result<OverlapReport> {
    let words: Vec<Vec<&str>> = graphs.iter().map(|(_, g)| g.words()).collect();
    let labels: Vec<&str> = graphs.iter().map(|(l, _)| l.as_str()).collect();
    overlap_from_words(&words, &labels, mode, policy)
}

/// Same as [`task_overlap_matrix`] on raw word multisets.
pub fn overlap_from_words<S: AsRef<str> + Sync>(words: &[Vec<S>], labels: &[&str], mode: RougeMode, policy: ExecPolicy) -> Result<OverlapReport> {
    if words.len() != labels.len() {
        return Err(Error::Shape(format!("{} word lists vs {} labels", words.len(), labels.len())));
    }
    if words.len() < 2 {
        return Err(Error::Config(format!("overlap needs at least 2 graphs, got {}", words.len())));
    }
    let tasks: Vec<String> = labels.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = tasks.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let pairs: Vec<(usize, usize)> = (0..words.len()).flat_map(|i| (i + 1..words.len()).map(move |j| (i, j))).collect();
    let scores = policy.map_slice(&pairs, |&(i, j)| {
        // recall is asymmetric; average both directions so the matrix stays symmetric
        0.5 * (rouge1_node_overlap(&words[i], &words[j], mode) + rouge1_node_overlap(&words[j], &words[i], mode))
    });
    let k = tasks.len();
    let mut sum = vec![vec![0.0; k]; k];
    let mut n = vec![vec![0usize; k]; k];
    for (&(i, j), s) in pairs.iter().zip(scores) {
        let (a, b) = (index[labels[i]], index[labels[j]]);
        sum[a][b] += s;
        n[a][b] += 1;
        if a != b {
            sum[b][a] += s;
            n[b][a] += 1;
        }
    }
    let matrix: Vec<Vec<Option<f64>>> = (0..k)
        .map(|a| (0..k).map(|b| (n[a][b] > 0).then(|| sum[a][b] / n[a][b] as f64)).collect())
        .collect();
    let mean = |cells: Vec<f64>| (!cells.is_empty()).then(|| cells.iter().sum::<f64>() / cells.len() as f64);
    let same = mean((0..k).filter_map(|a| matrix[a][a]).collect());
    let diff = mean(
        (0..k)
            .flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b)))
            .filter_map(|(a, b)| matrix[a][b])
            .collect(),
    );
    Ok(OverlapReport {
        tasks,
        matrix,
        same_task_mean: same,
        diff_task_mean: diff,
    })
}

/// Mean fraction of each item's `k` cosine-nearest neighbours (self
/// excluded, ties broken by index) that share its label.
pub fn precision_at_k<L: PartialEq>(embeddings: &[Array1<f64>], labels: &[L], k: usize) -> Result<f64> {
    let n = embeddings.len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings vs {} labels", labels.len())));
    }
    if k == 0 || k >= n {
        return Err(Error::Config(format!("k = {k} must be in 1..{n}")));
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (cosine(embeddings[i].view(), embeddings[j].view()), j))
            .collect();
        others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let hits = others[..k].iter().filter(|(_, j)| labels[*j] == labels[i]).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / n as f64)
}

/// Seeded stratified 80/20 split: every class keeps at least one item on
/// each side.
pub fn stratified_split<L: Ord + Clone>(labels: &[L], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.clone()).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::Config("probe needs at least 2 classes".into()));
    }
    let mut r = rng::stream(seed, &[0x73_706c_6974]);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        if idx.len() < 2 {
            return Err(Error::Config("every probe class needs at least 2 examples".into()));
        }
        idx.shuffle(&mut r);
        let n_test = ((idx.len() as f64 * 0.2).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

const PROBE_STEPS: usize = 500;
const PROBE_LR: f64 = 0.5;
const PROBE_L2: f64 = 1e-3;

/// Test accuracy of a multinomial logistic regression trained by full-batch
/// gradient descent on standardised features.
pub fn linear_probe_accuracy<L: Ord + Clone>(embeddings: &[Array1<f64>], labels: &[L], seed: u64) -> Result<f64> {
    let n = embeddings.len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} embeddings vs {} labels", labels.len())));
    }
    let (train, test) = stratified_split(labels, seed)?;
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(Error::Shape("embeddings differ in width".into()));
    }
    let classes: Vec<&L> = labels.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let class_of = |l: &L| classes.binary_search(&l).expect("known class");
    let rows = |idx: &[usize]| Array2::from_shape_fn((idx.len(), d), |(i, j)| embeddings[idx[i]][j]);
    let (mut xtr, mut xte) = (rows(&train), rows(&test));
    let mean = xtr.mean_axis(Axis(0)).expect("non-empty");
    let std = xtr.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    for x in [&mut xtr, &mut xte] {
        *x -= &mean;
        *x /= &std;
    }
    let k = classes.len();
    let ytr: Vec<usize> = train.iter().map(|&i| class_of(&labels[i])).collect();
    let mut w = Array2::<f64>::zeros((d, k));
    let mut b = Array1::<f64>::zeros(k);
    let m = train.len() as f64;
    for _ in 0..PROBE_STEPS {
        let mut p = xtr.dot(&w) + &b;
        for mut row in p.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - mx).exp());
            let s = row.sum();
            row /= s;
        }
        for (i, &y) in ytr.iter().enumerate() {
            p[[i, y]] -= 1.0;
        }
        let gw = xtr.t().dot(&p) / m + &w * PROBE_L2;
        let gb = p.sum_axis(Axis(0)) / m;
        w -= &(gw * PROBE_LR);
        b -= &(gb * PROBE_LR);
    }
    let scores = xte.dot(&w) + &b;
    let correct = test
        .iter()
        .zip(scores.rows())
        .filter(|(&i, row)| {
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc })
                .0;
            pred == class_of(&labels[i])
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Joint-embedding variants of the fusion ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionVariant {
    /// Element-wise fusion or projected concatenation of the raw streams.
    Plain(FusionMode),
    /// Video queries audio; only that branch's output is used.
    OneBranch,
    /// Both attention branches merged by the given mode.
    CrossModal(FusionMode),
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 7] = [
        FusionVariant::OneBranch,
        FusionVariant::Plain(FusionMode::Sum),
        FusionVariant::Plain(FusionMode::Multiply),
        FusionVariant::Plain(FusionMode::Concat),
        FusionVariant::CrossModal(FusionMode::Sum),
        FusionVariant::CrossModal(FusionMode::Multiply),
        FusionVariant::CrossModal(FusionMode::Concat),
    ];

    pub fn name(self) -> String {
        let mode = |m: FusionMode| match m {
            FusionMode::Sum => "sum",
            FusionMode::Multiply => "multi",
            FusionMode::Concat => "concat",
        };
        match self {
            FusionVariant::Plain(m) => mode(m).to_string(),
            FusionVariant::OneBranch => "one_branch".to_string(),
            FusionVariant::CrossModal(m) => format!("cross_modal_{}", mode(m)),
        }
    }

    /// Time-averaged joint embedding of one video.
    pub fn embed(self, video: ArrayView2<f64>, audio: ArrayView2<f64>, params: &AttentionParams) -> Result<Array1<f64>> {
        let joint = match self {
            FusionVariant::Plain(mode) => baseline_fusion(video, audio, mode, Some(&params.concat_proj))?,
            FusionVariant::OneBranch => one_branch_attention(video, audio, &params.branch1, params.normalize_alpha)?.0,
            FusionVariant::CrossModal(mode) => {
                let p = AttentionParams { mode, ..params.clone() };
                cross_modal_attention(video, audio, &p)?
            }
        };
        Ok(joint.mean_axis(Axis(0)).expect("at least one segment"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub accuracy: f64,
}

/// Probe accuracy of every fusion variant. All variants share one seeded
/// weight draw, so they differ only in how the streams are combined.
pub fn run_ablation(corpus: &Corpus, proj_channels: usize, seed: u64, policy: ExecPolicy) -> Result<Vec<AblationRow>> {
    let first = corpus.videos.first().ok_or_else(|| Error::Config("ablation needs a non-empty corpus".into()))?;
    let (cv, ca) = (first.video.channels(), first.audio.channels());
    if cv != ca {
        return Err(Error::Shape(format!("element-wise variants need equal stream widths, got {cv} and {ca}")));
    }
    let shape = AttentionShape {
        video_channels: cv,
        audio_channels: ca,
        proj_channels,
        channels: cv,
        word_channels: corpus.embeddings.dim(),
    };
    let params = AttentionParams::init(&mut rng::stream(seed, &[0x6162_6c61_7465]), shape, FusionMode::Concat, false);
    let streams: Vec<(Array2<f64>, Array2<f64>)> = corpus.videos.iter().map(|v| (v.video.to_f64(), v.audio.to_f64())).collect();
    let labels = corpus.labels();
    FusionVariant::ALL
        .iter()
        .map(|&variant| {
            let embeddings = policy
                .map_slice(&streams, |(v, a)| variant.embed(v.view(), a.view(), &params))
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow {
                variant: variant.name(),
                accuracy: linear_probe_accuracy(&embeddings, &labels, seed)?,
            })
        })
        .collect()
}

/// Markdown table of ablation rows.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("| variant | accuracy |\n|---|---|\n");
    for r in rows {
        out.push_str(&format!("| {} | {:.4} |\n", r.variant, r.accuracy));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn rouge_endpoints_and_hand_count() {
        assert_eq!(rouge1(&["a", "b"], &["a", "b"]), 1.0);
        assert_eq!(rouge1(&["a", "b"], &["c"]), 0.0);
        assert_eq!(rouge1(&["a", "b", "c", "d"], &["c", "d", "e", "f"]), 0.5);
        let empty: [&str; 0] = [];
        assert_eq!(rouge1(&empty, &empty), 1.0);
        assert_eq!(rouge1(&empty, &["a"]), 0.0);
        // multiset: shared count is min(2, 1)
        assert_eq!(rouge1(&["a", "a"], &["a"]), 2.0 / 3.0);
        assert_eq!(rouge1_node_overlap(&["a", "b"], &["a", "c", "d", "e"], RougeMode::Recall), 0.25);
    }

    fn graph(words: &[&str]) -> SemanticGraph {
        let nodes: Vec<crate::assignment::SelectedNode> = words
            .iter()
            .map(|w| crate::assignment::SelectedNode {
                word: w.to_string(),
                time_segment: None,
                feature: Array1::from(vec![1.0, 0.0]),
                activation: 1.0,
                count: 1,
            })
            .collect();
        crate::graph::build_undirected_graph(&nodes, &crate::graph::Lexicon::bundled(), &Default::default()).unwrap()
    }

    #[test]
    fn overlap_matrix_cells() {
        let g = vec![
            ("x".to_string(), graph(&["knife", "onion"])),
            ("x".to_string(), graph(&["knife", "onion"])),
            ("y".to_string(), graph(&["drill", "wall"])),
            ("y".to_string(), graph(&["drill", "screw"])),
        ];
        let r = task_overlap_matrix(&g, RougeMode::F1, ExecPolicy::Parallel).unwrap();
        assert_eq!(r.tasks, vec!["x", "y"]);
        assert_eq!(r.matrix[0][0], Some(1.0));
        assert_eq!(r.matrix[1][1], Some(0.5));
        assert_eq!(r.matrix[0][1], Some(0.0));
        assert_eq!(r.matrix[1][0], Some(0.0));
        assert_eq!(r.same_task_mean, Some(0.75));
        assert_eq!(r.diff_task_mean, Some(0.0));
        assert!(task_overlap_matrix(&g[..1], RougeMode::F1, ExecPolicy::Sequential).is_err());
        let single = task_overlap_matrix(&g[1..3], RougeMode::F1, ExecPolicy::Sequential).unwrap();
        assert_eq!(single.same_task_mean, None);
    }

    #[test]
    fn precision_on_orthogonal_clusters() {
        let e: Vec<Array1<f64>> = [[1.0, 0.0], [0.9, 0.1], [1.0, 0.05], [0.0, 1.0], [0.1, 0.9], [0.05, 1.0]]
            .iter()
            .map(|r| Array1::from(r.to_vec()))
            .collect();
        let labels = [0, 0, 0, 1, 1, 1];
        assert_eq!(precision_at_k(&e, &labels, 2).unwrap(), 1.0);
        assert_eq!(precision_at_k(&e, &[7; 6], 5).unwrap(), 1.0);
        assert!(precision_at_k(&e, &labels, 6).is_err());
        assert!(precision_at_k(&e, &labels, 0).is_err());
    }

    fn blobs(n_per: usize, sep: f64, seed: u64) -> (Vec<Array1<f64>>, Vec<u8>) {
        let mut r = rng::stream(seed, &[1]);
        let mut e = Vec::new();
        let mut l = Vec::new();
        for c in 0..2u8 {
            for _ in 0..n_per {
                let offset = if c == 0 { -sep } else { sep };
                e.push(Array1::from(vec![
                    offset + r.random_range(-0.5..0.5),
                    r.random_range(-1.0..1.0),
                    r.random_range(-1.0..1.0),
                ]));
                l.push(c);
            }
        }
        (e, l)
    }

    #[test]
    fn probe_separates_separable_data() {
        let (e, l) = blobs(20, 2.0, 3);
        assert_eq!(linear_probe_accuracy(&e, &l, 11).unwrap(), 1.0);
        assert_eq!(linear_probe_accuracy(&e, &l, 11).unwrap(), linear_probe_accuracy(&e, &l, 11).unwrap());
    }

    #[test]
    fn probe_on_shuffled_labels_is_near_chance() {
        let (e, mut l) = blobs(200, 2.0, 4);
        l.shuffle(&mut rng::stream(5, &[2]));
        let acc = linear_probe_accuracy(&e, &l, 13).unwrap();
        assert!((acc - 0.5).abs() <= 0.15, "{acc}");
    }

    #[test]
    fn probe_rejects_tiny_classes() {
        let (e, mut l) = blobs(3, 2.0, 3);
        l[0] = 9;
        assert!(linear_probe_accuracy(&e, &l, 1).is_err());
        assert!(linear_probe_accuracy(&e, &[0u8; 6], 1).is_err());
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 5) as u8).collect();
        let (tr, te) = stratified_split(&labels, 3).unwrap();
        assert_eq!(tr.len() + te.len(), 50);
        assert_eq!(te.len(), 10);
        assert_eq!(stratified_split(&labels, 3).unwrap(), (tr, te.clone()));
        assert_ne!(stratified_split(&labels, 4).unwrap().1, te);
    }
}
