//! A set of videos with narration and the word table they share, plus the
//! `corpus.json` directory layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_features, load_token_timeline, save_features, save_token_timeline, EmbeddingTable, ModalityFeatures, TokenTimeline};
use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub video_id: String,
    pub task_label: String,
    pub video: ModalityFeatures,
    pub audio: ModalityFeatures,
    pub timeline: TokenTimeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub videos: Vec<Video>,
    pub embeddings: EmbeddingTable,
}

impl Corpus {
    pub fn new(videos: Vec<Video>, embeddings: EmbeddingTable) -> Result<Self> {
        let c = Corpus { videos, embeddings };
        c.validate()?;
        Ok(c)
    }

    /// Every video shares `T`, `N` and channel widths; labels are non-empty.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.videos.first() else {
            return Ok(());
        };
        let shape = |v: &Video| (v.video.segments(), v.video.channels(), v.audio.channels(), v.timeline.max_nodes());
        let reference = shape(first);
        for v in &self.videos {
            if v.task_label.is_empty() {
                return Err(Error::Config(format!("video {} has an empty task label", v.video_id)));
            }
            if shape(v) != reference || v.audio.segments() != reference.0 || v.timeline.segments() != reference.0 {
                return Err(Error::Shape(format!("video {} does not match the corpus configuration", v.video_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn segments(&self) -> usize {
        self.videos.first().map_or(0, |v| v.video.segments())
    }

    pub fn max_nodes(&self) -> usize {
        self.videos.first().map_or(0, |v| v.timeline.max_nodes())
    }

    pub fn video(&self, id: &str) -> Option<&Video> {
        self.videos.iter().find(|v| v.video_id == id)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.videos.iter().map(|v| v.task_label.as_str()).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join("videos")).map_err(|e| Error::io(dir, e))?;
        self.embeddings.save(&dir.join("embeddings.txt"))?;
        let mut entries = Vec::with_capacity(self.videos.len());
        for v in &self.videos {
            let video = format!("videos/{}.video", v.video_id);
            let audio = format!("videos/{}.audio", v.video_id);
            let timeline = format!("videos/{}.timeline.jsonl", v.video_id);
            save_features(&v.video, &dir.join(&video))?;
            save_features(&v.audio, &dir.join(&audio))?;
            save_token_timeline(&v.timeline, &dir.join(&timeline))?;
            entries.push(IndexEntry {
                video_id: v.video_id.clone(),
                task_label: v.task_label.clone(),
                video,
                audio,
                timeline,
            });
        }
        let index = CorpusIndex {
            segments: self.segments(),
            max_nodes: self.max_nodes(),
            embeddings: "embeddings.txt".into(),
            videos: entries,
        };
        let mut json = serde_json::to_string_pretty(&index).expect("index serializes");
        json.push('\n');
        fsutil::write_atomic(&dir.join("corpus.json"), json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join("corpus.json");
        let text = fsutil::read_to_string(&index_path)?;
        let index: CorpusIndex = serde_json::from_str(&text).map_err(|e| Error::format("corpus index", &index_path, e.to_string()))?;
        let embeddings = EmbeddingTable::load(&dir.join(&index.embeddings))?;
        let resolve = |p: &str| -> PathBuf { dir.join(p) };
        let videos = index
            .videos
            .iter()
            .map(|e| {
                Ok(Video {
                    video_id: e.video_id.clone(),
                    task_label: e.task_label.clone(),
                    video: load_features(&resolve(&e.video))?,
                    audio: load_features(&resolve(&e.audio))?,
                    timeline: load_token_timeline(&resolve(&e.timeline), Some(index.segments), index.max_nodes)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(videos, embeddings)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    video_id: String,
    task_label: String,
    video: String,
    audio: String,
    timeline: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusIndex {
    segments: usize,
    max_nodes: usize,
    embeddings: String,
    videos: Vec<IndexEntry>,
}
