//! Shared helpers for the integration suites: a central-difference gradient
//! checker, seeded instance builders and the invariant checks that both the
//! property tests and the acceptance runner execute.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::{Array, Array1, Array2, Array3, Dimension};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::Rng;

use semgraph::assignment::{aggregate_directed, aggregate_undirected, reverse_map, Importance, SelectedNode};
use semgraph::data::{load_features, load_token_timeline, save_features, save_token_timeline, EmbeddingTable, Modality, ModalityFeatures, TokenTimeline};
use semgraph::fusion::{cross_modal_forward, semantic_forward, AttentionParams, AttentionShape, FusionMode};
use semgraph::graph::{build_directed_graph, build_undirected_graph, load_graph_json, to_dot, to_json, GraphConfig, Lexicon, SemanticGraph};
use semgraph::linalg::{flatten3, relu, unflatten3};
use semgraph::message_passing::{depthwise_node_conv, depthwise_time_conv, max_pool, mp_forward, MessagePassingParams, MessagePassingShape};
use semgraph::pipeline::{Model, ModelConfig, StreamSource};
use semgraph::rng;
use semgraph::training::loss::triplet_loss_grad;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`
/// so entries that vanish on both routes count as agreement.
pub const FD_FLOOR: f64 = 1e-6;

/// Largest relative disagreement between `analytic` and central differences
/// of `f` around `x`.
pub fn fd_max_rel_error<D: Dimension>(x: &Array<f64, D>, analytic: &Array<f64, D>, f: impl Fn(&Array<f64, D>) -> f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let orig = x.as_slice_memory_order().expect("contiguous")[i];
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig + FD_STEP;
        let up = f(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig - FD_STEP;
        let down = f(&probe);
        probe.as_slice_memory_order_mut().expect("contiguous")[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        worst = worst.max(rel);
    }
    worst
}

pub fn uniform2(r: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-scale..scale))
}

pub fn uniform3(r: &mut impl Rng, a: usize, b: usize, c: usize, scale: f64) -> Array3<f64> {
    Array3::from_shape_fn((a, b, c), |_| r.random_range(-scale..scale))
}

/// One anchor/positive/negative input triple for the miniature pipeline.
pub struct Triple {
    pub streams: Vec<(Array2<f64>, Array2<f64>, Array3<f64>)>,
}

pub fn mini_config(mode: FusionMode, normalize_alpha: bool) -> ModelConfig {
    ModelConfig {
        video_channels: 3,
        audio_channels: 5,
        word_channels: 6,
        channels: 4,
        proj_channels: 4,
        embed_dim: 4,
        layers: 1,
        fusion_mode: mode,
        normalize_alpha,
        ..ModelConfig::default()
    }
}

pub fn mini_triple(config: &ModelConfig, seed: u64) -> Triple {
    let mut r = rng::stream(seed, &[0x6664]);
    let (t, n) = (4, 4);
    Triple {
        streams: (0..3)
            .map(|_| {
                (
                    uniform2(&mut r, t, config.video_channels, 3.0),
                    uniform2(&mut r, t, config.audio_channels, 3.0),
                    uniform3(&mut r, t, n, config.word_channels, 3.0),
                )
            })
            .collect(),
    }
}

pub fn triplet_of(model: &Model, x: &Triple, margin: f64) -> f64 {
    let e: Vec<_> = x.streams.iter().map(|(v, a, n)| model.embed(v.view(), a.view(), n).expect("forward")).collect();
    triplet_loss_grad(e[0].view(), e[1].view(), e[2].view(), margin).expect("loss").loss
}

/// Worst relative error over every parameter matrix of the full pipeline,
/// with the name of the worst tensor.
pub fn pipeline_gradient_check(config: ModelConfig, seed: u64) -> (f64, String) {
    let model = Model::init(config, seed).expect("init");
    let x = mini_triple(&config, seed);
    let margin = 0.2;
    let caches: Vec<_> = x
        .streams
        .iter()
        .map(|(v, a, n)| model.forward(v.view(), a.view(), n, StreamSource::Fused).expect("forward"))
        .collect();
    let g = triplet_loss_grad(caches[0].embedding().view(), caches[1].embedding().view(), caches[2].embedding().view(), margin).expect("loss");
    let mut total = model.zeros_like();
    for (c, d) in caches.iter().zip([&g.d_anchor, &g.d_positive, &g.d_negative]) {
        total.add_assign(&model.backward(c, d).0);
    }
    let analytic = total.tensors();
    let mut worst = (0.0, String::new());
    for (k, (name, w)) in model.tensors().into_iter().enumerate() {
        let err = fd_max_rel_error(w, analytic[k].1, |probe| {
            let mut m = model.clone();
            *m.tensors_mut()[k] = probe.clone();
            triplet_of(&m, &x, margin)
        });
        if err > worst.0 || worst.1.is_empty() {
            worst = (err, name);
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Attention

#[derive(Debug, Clone)]
pub struct AttentionCase {
    pub seed: u64,
    pub t: usize,
    pub n: usize,
    pub cv: usize,
    pub ca: usize,
    pub cw: usize,
    pub c: usize,
    pub mode: FusionMode,
    pub normalize: bool,
}

pub fn attention_case() -> impl Strategy<Value = AttentionCase> {
    (
        any::<u64>(),
        1usize..=8,
        1usize..=8,
        (1usize..=8, 1usize..=8, 1usize..=8, 1usize..=8),
        prop_oneof![Just(FusionMode::Sum), Just(FusionMode::Multiply), Just(FusionMode::Concat)],
        any::<bool>(),
    )
        .prop_map(|(seed, t, n, (cv, ca, cw, c), mode, normalize)| AttentionCase {
            seed,
            t,
            n,
            cv,
            ca,
            cw,
            c,
            mode,
            normalize,
        })
}

pub fn check_attention_nonnegative(case: &AttentionCase) -> Result<(), TestCaseError> {
    let mut r = rng::stream(case.seed, &[1]);
    let shape = AttentionShape {
        video_channels: case.cv,
        audio_channels: case.ca,
        proj_channels: case.c,
        channels: case.c,
        word_channels: case.cw,
    };
    let p = AttentionParams::init(&mut r, shape, case.mode, case.normalize);
    let m1 = uniform2(&mut r, case.t, case.cv, 2.0);
    let m2 = uniform2(&mut r, case.t, case.ca, 2.0);
    let nodes = uniform3(&mut r, case.t, case.n, case.cw, 2.0);
    let cross = cross_modal_forward(m1.view(), m2.view(), &p).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(cross.b1.alpha.iter().all(|&a| a >= 0.0));
    prop_assert!(cross.b2.alpha.iter().all(|&a| a >= 0.0));
    prop_assert_eq!(cross.z.dim(), (case.t, case.c));
    let sem = semantic_forward(&nodes, cross.z.view(), &p.word_proj, &p.z_proj).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(sem.alpha.iter().all(|&a| a >= 0.0));
    prop_assert_eq!(sem.ne.dim(), (case.t, case.n, case.c));
    Ok(())
}

// ---------------------------------------------------------------------------
// Message passing and pool traces

#[derive(Debug, Clone)]
pub struct PoolCase {
    pub seed: u64,
    pub t: usize,
    pub n: usize,
    pub c: usize,
    pub layers: usize,
    pub pool: (usize, usize),
    /// Round inputs to small integers so ties occur.
    pub ties: bool,
}

pub fn pool_case(max_t: usize, max_n: usize, max_layers: usize) -> impl Strategy<Value = PoolCase> {
    (
        any::<u64>(),
        1..=max_t,
        1..=max_n,
        1usize..=4,
        1..=max_layers,
        (1usize..=3, 1usize..=3),
        any::<bool>(),
    )
        .prop_map(|(seed, t, n, c, layers, pool, ties)| PoolCase {
            seed,
            t,
            n,
            c,
            layers,
            pool,
            ties,
        })
}

/// Grid extents seen by each layer.
pub fn layer_extents(case: &PoolCase) -> Vec<(usize, usize)> {
    let mut dims = vec![(case.t, case.n)];
    for _ in 1..case.layers {
        let (t, n) = *dims.last().unwrap();
        dims.push((t.div_ceil(case.pool.0), n.div_ceil(case.pool.1)));
    }
    dims
}

/// Seeded parameters and input; kernels are as wide as every layer allows
/// (3, else 1).
pub fn pool_instance(case: &PoolCase) -> (Array3<f64>, MessagePassingParams) {
    let dims = layer_extents(case);
    let fits = |w: usize, axis: usize| dims.iter().all(|d| if axis == 0 { d.0 >= w } else { d.1 >= w });
    let shape = MessagePassingShape {
        channels: case.c,
        layers: case.layers,
        time_kernel: if fits(3, 0) { 3 } else { 1 },
        node_kernel: if fits(3, 1) { 3 } else { 1 },
        pool_time: case.pool.0,
        pool_nodes: case.pool.1,
    };
    let mut r = rng::stream(case.seed, &[2]);
    let mut params = MessagePassingParams::init(&mut r, shape).expect("valid shape");
    let mut x = uniform3(&mut r, case.t, case.n, case.c, 2.0);
    if case.ties {
        x.mapv_inplace(|v| v.round());
        for lp in &mut params.layers {
            lp.pointwise.mapv_inplace(|v| v.round());
            lp.time_kernels.mapv_inplace(|v| v.round());
            lp.node_kernels.mapv_inplace(|v| v.round());
        }
    }
    (x, params)
}

/// Layer `l`'s convolutions applied to its input, through the public ops.
pub fn layer_convolved(x: &Array3<f64>, params: &MessagePassingParams, l: usize) -> Array3<f64> {
    let lp = &params.layers[l];
    let (t, n, _) = x.dim();
    let mixed = relu(&unflatten3(flatten3(x).dot(&lp.pointwise), t, n));
    let after_time = depthwise_time_conv(&mixed, &lp.time_kernels).expect("time conv");
    depthwise_node_conv(&after_time, &lp.node_kernels).expect("node conv")
}

pub fn check_pool_trace(case: &PoolCase) -> Result<(), TestCaseError> {
    let (x, params) = pool_instance(case);
    let (out, trace) = mp_forward(&x, &params).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(trace.validate().is_ok());
    prop_assert_eq!(trace.layers.len(), case.layers);

    // shape law and exact replay, one layer at a time
    let mut input = x.clone();
    for (l, layer) in trace.layers.iter().enumerate() {
        let (t, n, c) = input.dim();
        prop_assert_eq!(layer.input_shape, (t, n));
        prop_assert_eq!(layer.pooled_shape, (t.div_ceil(case.pool.0), n.div_ceil(case.pool.1)));
        let conv = layer_convolved(&input, &params, l);
        let (pooled, _) = max_pool(&conv, case.pool);
        for ((i, j, ch), &idx) in layer.argmax.indexed_iter() {
            prop_assert!(idx < t * n);
            let (st, sn) = (idx / n, idx % n);
            prop_assert!(st / case.pool.0 == i && sn / case.pool.1 == j, "index leaves its window");
            prop_assert_eq!(pooled[[i, j, ch]], conv[[st, sn, ch]]);
        }
        prop_assert!(c == case.c);
        input = pooled;
    }
    prop_assert_eq!(&input, &out);

    // nesting under truncation
    for l in 1..case.layers {
        let deeper = reverse_map(&trace.truncated(l + 1)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let shallower = reverse_map(&trace.truncated(l)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(deeper.is_subset(&shallower));
    }

    // tie-break determinism
    let (_, again) = mp_forward(&x, &params).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(again, trace);
    Ok(())
}

/// Independent replay: loops for every op, and the origin cell of every
/// value carried alongside it through each pooling window.
pub fn brute_force_cells(x: &Array3<f64>, params: &MessagePassingParams) -> BTreeSet<(usize, usize)> {
    let (t0, n0, c_len) = x.dim();
    let mut cur = x.clone();
    let mut origin: Vec<Vec<Vec<(usize, usize)>>> = (0..t0).map(|t| (0..n0).map(|n| vec![(t, n); c_len]).collect()).collect();
    for lp in &params.layers {
        let (t_len, n_len, _) = cur.dim();
        let mut mixed = Array3::<f64>::zeros((t_len, n_len, c_len));
        for t in 0..t_len {
            for n in 0..n_len {
                for o in 0..c_len {
                    let mut acc = 0.0;
                    for i in 0..c_len {
                        acc += cur[[t, n, i]] * lp.pointwise[[i, o]];
                    }
                    mixed[[t, n, o]] = acc.max(0.0);
                }
            }
        }
        let conv_axis = |src: &Array3<f64>, k: &Array2<f64>, along_time: bool| {
            let r = (k.ncols() / 2) as isize;
            let mut out = Array3::<f64>::zeros(src.raw_dim());
            for t in 0..t_len as isize {
                for n in 0..n_len as isize {
                    for c in 0..c_len {
                        let mut acc = 0.0;
                        for j in 0..k.ncols() as isize {
                            let (st, sn) = if along_time { (t + j - r, n) } else { (t, n + j - r) };
                            if st >= 0 && sn >= 0 && (st as usize) < t_len && (sn as usize) < n_len {
                                acc += k[[c, j as usize]] * src[[st as usize, sn as usize, c]];
                            }
                        }
                        out[[t as usize, n as usize, c]] = acc;
                    }
                }
            }
            out
        };
        let conv = conv_axis(&conv_axis(&mixed, &lp.time_kernels, true), &lp.node_kernels, false);
        let (wt, wn) = lp.pool;
        let (pt, pn) = (t_len.div_ceil(wt), n_len.div_ceil(wn));
        let mut next = Array3::<f64>::zeros((pt, pn, c_len));
        let mut next_origin = vec![vec![vec![(0, 0); c_len]; pn]; pt];
        for i in 0..pt {
            for j in 0..pn {
                for c in 0..c_len {
                    let mut best: Option<(f64, usize, usize)> = None;
                    for t in i * wt..((i + 1) * wt).min(t_len) {
                        for n in j * wn..((j + 1) * wn).min(n_len) {
                            let v = conv[[t, n, c]];
                            if best.is_none_or(|(b, _, _)| v > b) {
                                best = Some((v, t, n));
                            }
                        }
                    }
                    let (v, t, n) = best.expect("non-empty window");
                    next[[i, j, c]] = v;
                    next_origin[i][j][c] = origin[t][n][c];
                }
            }
        }
        cur = next;
        origin = next_origin;
    }
    origin.into_iter().flatten().flatten().collect()
}

// ---------------------------------------------------------------------------
// Aggregation and graphs

pub const VOCAB: [&str; 8] = ["onion", "knife", "cut", "pan", "stir", "heat", "board", "oil"];

/// Seeded selection records with time segments, as produced by word
/// selection (count 1 each).
pub fn random_selection(seed: u64, len: usize, dim: usize) -> Vec<SelectedNode> {
    let mut r = rng::stream(seed, &[3]);
    (0..len)
        .map(|_| {
            let feature: Array1<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
            SelectedNode {
                word: VOCAB[r.random_range(0..VOCAB.len())].to_string(),
                time_segment: Some(r.random_range(0..4)),
                activation: Importance::L2Norm.of(&feature),
                feature,
                count: 1,
            }
        })
        .collect()
}

/// Occurrence-count-weighted average of directed records per word.
pub fn weighted_directed_means(directed: &[SelectedNode]) -> Vec<(String, Array1<f64>, usize)> {
    let mut words: Vec<&str> = directed.iter().map(|d| d.word.as_str()).collect();
    words.sort_unstable();
    words.dedup();
    words
        .into_iter()
        .map(|w| {
            let recs: Vec<&SelectedNode> = directed.iter().filter(|d| d.word == w).collect();
            let count: usize = recs.iter().map(|d| d.count).sum();
            // directed records hold sums: mean feature / count, weight count
            let mut acc = Array1::zeros(recs[0].feature.len());
            for d in &recs {
                acc.scaled_add(d.count as f64, &(&d.feature / d.count as f64));
            }
            (w.to_string(), acc / count as f64, count)
        })
        .collect()
}

/// Largest deviation between the two routes to per-word means.
pub fn count_weighted_deviation(selected: &[SelectedNode]) -> f64 {
    let directed = aggregate_directed(selected).expect("time segments present");
    let expected = weighted_directed_means(&directed);
    let undirected = aggregate_undirected(selected, Importance::L2Norm);
    assert_eq!(undirected.len(), expected.len());
    let mut worst = 0.0f64;
    for (u, (w, mean, count)) in undirected.iter().zip(&expected) {
        assert_eq!(&u.word, w);
        assert_eq!(u.count, *count);
        for (a, b) in u.feature.iter().zip(mean) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

pub fn check_aggregation(seed: u64, len: usize) -> Result<(), TestCaseError> {
    let selected = random_selection(seed, len, 3);
    let directed = aggregate_directed(&selected).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let before: f64 = selected.iter().map(|s| s.activation).sum();
    let after: f64 = directed.iter().map(|s| s.activation).sum();
    prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0));
    prop_assert_eq!(directed.iter().map(|d| d.count).sum::<usize>(), selected.len());

    let mut shuffled = selected.clone();
    shuffled.shuffle(&mut rng::stream(seed, &[4]));
    let close = |a: &[SelectedNode], b: &[SelectedNode]| {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.word == y.word
                    && x.time_segment == y.time_segment
                    && x.count == y.count
                    && x.feature.iter().zip(&y.feature).all(|(p, q)| (p - q).abs() < 1e-12)
            })
    };
    prop_assert!(close(&directed, &aggregate_directed(&shuffled).unwrap()));
    prop_assert!(close(
        &aggregate_undirected(&selected, Importance::L2Norm),
        &aggregate_undirected(&shuffled, Importance::L2Norm)
    ));
    if !selected.is_empty() {
        prop_assert!(count_weighted_deviation(&selected) < 1e-9);
    }
    Ok(())
}

fn edge_set(g: &SemanticGraph) -> BTreeSet<(String, Option<usize>, String, Option<usize>)> {
    g.edges
        .iter()
        .map(|e| {
            let (a, b) = (&g.nodes[e.src], &g.nodes[e.dst]);
            (a.word.clone(), a.time_segment, b.word.clone(), b.time_segment)
        })
        .collect()
}

pub fn check_threshold_monotone(seed: u64, len: usize, tau_lo: f64, tau_hi: f64) -> Result<(), TestCaseError> {
    let (lo, hi) = if tau_lo <= tau_hi { (tau_lo, tau_hi) } else { (tau_hi, tau_lo) };
    let selected = random_selection(seed, len, 4);
    let lex = Lexicon::bundled();
    let directed = aggregate_directed(&selected).unwrap();
    let undirected = aggregate_undirected(&selected, Importance::L2Norm);
    let cfg = |tau| GraphConfig { tau, window: 2 };
    let build = |tau: f64| -> Result<(SemanticGraph, SemanticGraph), TestCaseError> {
        Ok((
            build_directed_graph(&directed, &lex, &cfg(tau)).map_err(|e| TestCaseError::fail(e.to_string()))?,
            build_undirected_graph(&undirected, &lex, &cfg(tau)).map_err(|e| TestCaseError::fail(e.to_string()))?,
        ))
    };
    let (d_lo, u_lo) = build(lo)?;
    let (d_hi, u_hi) = build(hi)?;
    prop_assert!(edge_set(&d_hi).is_subset(&edge_set(&d_lo)));
    prop_assert!(edge_set(&u_hi).is_subset(&edge_set(&u_lo)));
    for e in &u_lo.edges {
        let back = u_lo.edge(e.dst, e.src);
        prop_assert!(back.is_some_and(|b| b.weight == e.weight), "undirected edge lacks its mirror");
    }
    Ok(())
}

pub fn vocab_word() -> impl Strategy<Value = String> {
    prop::sample::select(&VOCAB[..]).prop_map(String::from)
}

/// Finite floats including the extremes a text or binary codec may mangle.
pub fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        -1e30f32..1e30,
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::MAX),
        Just(1e-45f32),
    ]
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// `values` must hold at least 36 entries; a `rows x cols` block is read
/// from a 6-wide layout.
pub fn check_feature_round_trip(rows: usize, cols: usize, values: &[f32], video: bool) -> Result<(), TestCaseError> {
    let data = Array2::from_shape_fn((rows, cols), |(i, j)| values[i * 6 + j]);
    let modality = if video { Modality::Video } else { Modality::Audio };
    let f = ModalityFeatures::new(modality, data, 0.5).map_err(fail)?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let path = dir.path().join("x.bin");
    save_features(&f, &path).map_err(fail)?;
    let back = load_features(&path).map_err(fail)?;
    let bits = |m: &ModalityFeatures| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    prop_assert_eq!(bits(&back), bits(&f));
    prop_assert_eq!(back, f);
    Ok(())
}

pub fn check_timeline_round_trip(segments: &[Vec<String>], max_nodes: usize) -> Result<(), TestCaseError> {
    let tl = TokenTimeline::new(segments, max_nodes).map_err(fail)?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let path = dir.path().join("t.jsonl");
    save_token_timeline(&tl, &path).map_err(fail)?;
    prop_assert_eq!(load_token_timeline(&path, Some(segments.len()), max_nodes).map_err(fail)?, tl);
    Ok(())
}

/// `values` holds three entries per [`VOCAB`] word.
pub fn check_embedding_round_trip(values: &[f32]) -> Result<(), TestCaseError> {
    let mut table = EmbeddingTable::new(3).map_err(fail)?;
    for (i, w) in VOCAB.iter().enumerate() {
        table.insert(w, values[3 * i..3 * i + 3].to_vec()).map_err(fail)?;
    }
    let dir = tempfile::tempdir().map_err(fail)?;
    let path = dir.path().join("e.txt");
    table.save(&path).map_err(fail)?;
    prop_assert_eq!(EmbeddingTable::load(&path).map_err(fail)?, table);
    Ok(())
}

pub fn check_graph_round_trip(seed: u64, directed: bool) -> Result<(), TestCaseError> {
    let lex = Lexicon::bundled();
    let sel = random_selection(seed, 12, 4);
    let g = if directed {
        build_directed_graph(&aggregate_directed(&sel).map_err(fail)?, &lex, &GraphConfig::default())
    } else {
        build_undirected_graph(&aggregate_undirected(&sel, Importance::L2Norm), &lex, &GraphConfig::default())
    }
    .map_err(fail)?;
    let dir = tempfile::tempdir().map_err(fail)?;
    let path = dir.path().join("g.json");
    std::fs::write(&path, to_json(&g)).map_err(fail)?;
    prop_assert_eq!(load_graph_json(&path).map_err(fail)?, g.clone());
    prop_assert_eq!(to_dot(&g), to_dot(&g.clone()));
    Ok(())
}
