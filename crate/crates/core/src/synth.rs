//! Deterministic synthetic corpus of narrated instructional "videos".
//!
//! Each task is a script of sub-activities, each with an action word, a few
//! object words and a duration in segments. Video features at segment `t`
//! are the task prototype plus the active sub-activity prototype plus noise;
//! audio uses the same prototype sum scaled by a positive gain, with its own
//! noise. Narration draws from the active sub-activity, the rest of the
//! task, other tasks' words and a global filler list.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Video};
use crate::data::{EmbeddingTable, Modality, ModalityFeatures, TokenTimeline};
use crate::error::{Error, Result};
use crate::graph::{Lexicon, Role, ACTIONS, FILLERS, OBJECTS};
use crate::par::ExecPolicy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub segments: usize,
    pub max_nodes: usize,
    /// Width of both the video and the audio stream.
    pub channels: usize,
    pub word_channels: usize,
    pub sub_activities: usize,
    pub objects_per_activity: usize,
    /// Shortest allowed sub-activity.
    pub min_activity_segments: usize,
    /// Expected norm of each prototype vector.
    pub prototype_scale: f64,
    /// Norm of every word vector in the embedding table.
    pub word_norm: f64,
    pub noise_sigma: f64,
    pub audio_gain: f64,
    /// Probability that a narration slot holds a filler word.
    pub filler_rate: f64,
    /// Probability that a non-filler slot borrows a word from another task.
    pub cross_task_overlap: f64,
    /// Probability that a non-filler, non-borrowed slot names the active
    /// sub-activity rather than another step of the same task.
    pub within_task_overlap: f64,
    pub min_words: usize,
    pub max_words: usize,
    /// Weight of the shared task direction in word vectors.
    pub word_task_weight: f64,
    pub segment_duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            segments: 16,
            max_nodes: 15,
            channels: 32,
            word_channels: 32,
            sub_activities: 4,
            objects_per_activity: 2,
            min_activity_segments: 2,
            prototype_scale: 8.0,
            word_norm: 8.0,
            noise_sigma: 0.05,
            audio_gain: 0.8,
            filler_rate: 0.3,
            cross_task_overlap: 0.05,
            within_task_overlap: 0.85,
            min_words: 4,
            max_words: 18,
            word_task_weight: 0.6,
            segment_duration_s: 8.0 / 15.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 || self.max_nodes == 0 || self.channels == 0 || self.word_channels == 0 {
            return Err(Error::Config("segments, max_nodes and channel widths must be positive".into()));
        }
        if self.sub_activities == 0 || self.min_activity_segments == 0 {
            return Err(Error::Config("need at least one sub-activity of at least one segment".into()));
        }
        let needed = self.sub_activities * self.min_activity_segments;
        if self.segments < needed {
            return Err(Error::Config(format!(
                "{} segments cannot hold {} sub-activities of {} segments",
                self.segments, self.sub_activities, self.min_activity_segments
            )));
        }
        for (name, p) in [
            ("filler_rate", self.filler_rate),
            ("cross_task_overlap", self.cross_task_overlap),
            ("within_task_overlap", self.within_task_overlap),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.within_task_overlap <= self.cross_task_overlap {
            return Err(Error::Config(format!(
                "within-task overlap {} must exceed cross-task overlap {}",
                self.within_task_overlap, self.cross_task_overlap
            )));
        }
        if self.min_words > self.max_words {
            return Err(Error::Config("min_words exceeds max_words".into()));
        }
        let positive = |v: f64| v > 0.0;
        if self.noise_sigma.is_nan()
            || self.noise_sigma < 0.0
            || ![self.prototype_scale, self.word_norm, self.audio_gain, self.segment_duration_s]
                .into_iter()
                .all(positive)
        {
            return Err(Error::Config("noise must be non-negative, gain and duration positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubActivity {
    pub action_word: String,
    pub object_words: Vec<String>,
    pub duration_segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScript {
    pub task_id: String,
    pub sub_activities: Vec<SubActivity>,
    /// Action and object words of this task.
    pub vocabulary: BTreeSet<String>,
    /// Words of other tasks that narration may borrow.
    pub borrowed: Vec<String>,
    pub task_prototype: Vec<f64>,
    pub sub_prototypes: Vec<Vec<f64>>,
}

impl TaskScript {
    pub fn total_segments(&self) -> usize {
        self.sub_activities.iter().map(|s| s.duration_segments).sum()
    }

    /// Index of the sub-activity active at each segment.
    pub fn schedule(&self) -> Vec<usize> {
        self.sub_activities
            .iter()
            .enumerate()
            .flat_map(|(k, s)| std::iter::repeat_n(k, s.duration_segments))
            .collect()
    }

    fn activity_words(&self, k: usize) -> Vec<&str> {
        let s = &self.sub_activities[k];
        std::iter::once(s.action_word.as_str())
            .chain(s.object_words.iter().map(String::as_str))
            .collect()
    }
}

/// Pronounceable stand-in for word pools that run dry: `q` followed by the
/// index in base 26.
fn spare_word(mut i: usize, suffix: &str) -> String {
    let mut s = String::from("q");
    loop {
        s.push((b'a' + (i % 26) as u8) as char);
        i /= 26;
        if i == 0 {
            break;
        }
    }
    s.push_str(suffix);
    s
}

fn word_pools() -> (Vec<String>, Vec<String>) {
    let lex = Lexicon::bundled();
    let objects: BTreeSet<&str> = OBJECTS.iter().copied().filter(|w| lex.classify(w) == Role::Object).collect();
    let actions: Vec<String> = ACTIONS
        .iter()
        .filter(|w| !objects.contains(*w) && lex.classify(w) == Role::ActionState)
        .map(|w| w.to_string())
        .collect();
    (actions, objects.into_iter().map(String::from).collect())
}

fn gaussian_vec<R: Rng>(r: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

/// Gaussian vector with expected squared norm `scale^2`.
fn prototype<R: Rng>(r: &mut R, n: usize, scale: f64) -> Vec<f64> {
    let s = scale / (n as f64).sqrt();
    gaussian_vec(r, n).into_iter().map(|v| v * s).collect()
}

fn durations(config: &SynthConfig) -> Vec<usize> {
    let k = config.sub_activities;
    (0..k).map(|i| config.segments / k + usize::from(i < config.segments % k)).collect()
}

/// Task scripts with disjoint vocabularies and seeded prototypes.
pub fn generate_scripts(num_tasks: usize, seed: u64, config: &SynthConfig) -> Result<Vec<TaskScript>> {
    config.validate()?;
    if num_tasks == 0 {
        return Err(Error::Config("need at least one task".into()));
    }
    let (mut actions, mut objects) = word_pools();
    let mut r = rng::stream(seed, &[0x7363_7269_7074]);
    actions.shuffle(&mut r);
    objects.shuffle(&mut r);
    let per_task_actions = config.sub_activities;
    let per_task_objects = config.sub_activities * config.objects_per_activity;
    let mut action_iter = actions.into_iter().chain((0..).map(|i| spare_word(i, "ing")));
    let mut object_iter = objects.into_iter().chain((0..).map(|i| spare_word(i, "o")));
    let durs = durations(config);
    let mut scripts: Vec<TaskScript> = (0..num_tasks)
        .map(|ti| {
            let acts: Vec<String> = action_iter.by_ref().take(per_task_actions).collect();
            let objs: Vec<String> = object_iter.by_ref().take(per_task_objects).collect();
            let sub_activities: Vec<SubActivity> = (0..config.sub_activities)
                .map(|k| SubActivity {
                    action_word: acts[k].clone(),
                    object_words: objs[k * config.objects_per_activity..(k + 1) * config.objects_per_activity].to_vec(),
                    duration_segments: durs[k],
                })
                .collect();
            let vocabulary = acts.iter().chain(&objs).cloned().collect();
            let mut pr = rng::stream(seed, &[0x7072_6f74, ti as u64]);
            let task_prototype = prototype(&mut pr, config.channels, config.prototype_scale);
            let sub_prototypes = (0..config.sub_activities)
                .map(|_| prototype(&mut pr, config.channels, config.prototype_scale))
                .collect();
            TaskScript {
                task_id: format!("task{ti:02}"),
                sub_activities,
                vocabulary,
                borrowed: Vec::new(),
                task_prototype,
                sub_prototypes,
            }
        })
        .collect();
    let all: Vec<BTreeSet<String>> = scripts.iter().map(|s| s.vocabulary.clone()).collect();
    for (i, s) in scripts.iter_mut().enumerate() {
        s.borrowed = all.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, v)| v.iter().cloned()).collect();
    }
    Ok(scripts)
}

/// Features and narration of one video of `script`.
pub fn render_video(script: &TaskScript, seed: u64, config: &SynthConfig) -> Result<(ModalityFeatures, ModalityFeatures, TokenTimeline)> {
    config.validate()?;
    if script.total_segments() != config.segments {
        return Err(Error::Config(format!(
            "script {} spans {} segments, configuration has {}",
            script.task_id,
            script.total_segments(),
            config.segments
        )));
    }
    let schedule = script.schedule();
    let c = config.channels;
    let task = Array1::from(script.task_prototype.clone());
    let mut video = Array2::zeros((config.segments, c));
    let mut audio = Array2::zeros((config.segments, c));
    let mut fr = rng::stream(seed, &[0x6665_6174]);
    let noise = Normal::new(0.0, config.noise_sigma).expect("valid sigma");
    for (t, &k) in schedule.iter().enumerate() {
        let proto = &task + &Array1::from(script.sub_prototypes[k].clone());
        for j in 0..c {
            video[[t, j]] = proto[j] + if config.noise_sigma > 0.0 { noise.sample(&mut fr) } else { 0.0 };
        }
        for j in 0..c {
            audio[[t, j]] = config.audio_gain * proto[j] + if config.noise_sigma > 0.0 { noise.sample(&mut fr) } else { 0.0 };
        }
    }
    let mut wr = rng::stream(seed, &[0x776f_7264]);
    let task_words: Vec<&str> = script.vocabulary.iter().map(String::as_str).collect();
    let segments: Vec<Vec<String>> = schedule
        .iter()
        .map(|&k| {
            let active = script.activity_words(k);
            let count = wr.random_range(config.min_words..=config.max_words);
            (0..count)
                .map(|_| {
                    let pick = |r: &mut rand_chacha::ChaCha8Rng, pool: &[&str]| pool[r.random_range(0..pool.len())].to_string();
                    if wr.random::<f64>() < config.filler_rate {
                        return pick(&mut wr, FILLERS);
                    }
                    if !script.borrowed.is_empty() && wr.random::<f64>() < config.cross_task_overlap {
                        return script.borrowed[wr.random_range(0..script.borrowed.len())].clone();
                    }
                    if wr.random::<f64>() < config.within_task_overlap {
                        pick(&mut wr, &active)
                    } else {
                        pick(&mut wr, &task_words)
                    }
                })
                .collect()
        })
        .collect();
    Ok((
        ModalityFeatures::from_f64(Modality::Video, &video, config.segment_duration_s)?,
        ModalityFeatures::from_f64(Modality::Audio, &audio, config.segment_duration_s)?,
        TokenTimeline::new(&segments, config.max_nodes)?,
    ))
}

/// Word vectors: task words lean toward a shared per-task direction,
/// fillers are isotropic.
fn embedding_table(scripts: &[TaskScript], seed: u64, config: &SynthConfig) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(config.word_channels)?;
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(move |x| x / n)
    };
    for (ti, s) in scripts.iter().enumerate() {
        let mut r = rng::stream(seed, &[0x656d_6264, ti as u64]);
        let dir: Vec<f64> = unit(gaussian_vec(&mut r, config.word_channels)).collect();
        for w in &s.vocabulary {
            let noise: Vec<f64> = unit(gaussian_vec(&mut r, config.word_channels)).collect();
            let mixed: Vec<f64> = dir
                .iter()
                .zip(&noise)
                .map(|(d, e)| config.word_task_weight * d + (1.0 - config.word_task_weight * config.word_task_weight).sqrt() * e)
                .collect();
            table.insert(w, unit(mixed).map(|x| (x * config.word_norm) as f32).collect())?;
        }
    }
    let mut r = rng::stream(seed, &[0x6669_6c6c]);
    for w in FILLERS {
        table.insert(
            w,
            unit(gaussian_vec(&mut r, config.word_channels))
                .map(|x| (x * config.word_norm) as f32)
                .collect(),
        )?;
    }
    Ok(table)
}

/// `num_tasks * videos_per_task` videos; every draw derives from `seed`.
pub fn generate_corpus(num_tasks: usize, videos_per_task: usize, seed: u64, config: &SynthConfig, policy: ExecPolicy) -> Result<Corpus> {
    if videos_per_task == 0 {
        return Err(Error::Config("need at least one video per task".into()));
    }
    let scripts = generate_scripts(num_tasks, seed, config)?;
    let table = embedding_table(&scripts, seed, config)?;
    let jobs: Vec<(usize, usize)> = (0..num_tasks).flat_map(|t| (0..videos_per_task).map(move |v| (t, v))).collect();
    let videos = policy
        .map_slice(&jobs, |&(ti, vi)| {
            let script = &scripts[ti];
            let (video, audio, timeline) = render_video(script, rng::derive(seed, &[0x0076_6964, ti as u64, vi as u64]), config)?;
            Ok(Video {
                video_id: format!("{}_v{vi:02}", script.task_id),
                task_label: script.task_id.clone(),
                video,
                audio,
                timeline,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(videos, table)
}
