use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::timeline::{TokenTimeline, PAD};
use crate::error::{Error, Result};
use crate::{fsutil, rng};

/// Word vectors in the usual `word v1 ... vC` text layout.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Inserts or replaces a word vector.
    pub fn insert(&mut self, word: &str, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {word:?} has length {}, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vector for {word:?}")));
        }
        match self.index.get(word) {
            Some(&i) => self.vectors[i] = vector,
            None => {
                self.index.insert(word.to_string(), self.words.len());
                self.words.push(word.to_string());
                self.vectors.push(vector);
            }
        }
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Table vector, the zero vector for [`PAD`], or the deterministic
    /// fallback for unknown words.
    pub fn lookup(&self, word: &str) -> Array1<f64> {
        if word == PAD {
            return Array1::zeros(self.dim);
        }
        match self.get(word) {
            Some(v) => v.iter().map(|&x| f64::from(x)).collect(),
            None => oov_vector(word, self.dim),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let mut table: Option<EmbeddingTable> = None;
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            // word2vec files may open with a "<count> <dim>" header
            if lineno == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                continue;
            }
            let vector = rest
                .iter()
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<Vec<f32>, _>>()
                .map_err(|e| Error::format("embedding line", path, format!("line {}: {e}", lineno + 1)))?;
            if vector.is_empty() {
                return Err(Error::format("embedding line", path, format!("line {}: no vector values", lineno + 1)));
            }
            let t = match table.as_mut() {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(vector.len())?),
            };
            t.insert(word, vector)
                .map_err(|e| Error::format("embedding line", path, format!("line {}: {e}", lineno + 1)))?;
        }
        table.ok_or_else(|| Error::format("embedding table", path, "no entries"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (w, v) in self.words.iter().zip(&self.vectors) {
            out.push_str(w);
            for x in v {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        fsutil::write_atomic(path, out.as_bytes())
    }
}

/// Unit vector seeded by the stable hash of `word`.
pub fn oov_vector(word: &str, dim: usize) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng::stable_hash(word));
    let mut v: Array1<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

/// Word embeddings laid out on the `T x N` narration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTensor {
    pub data: Array3<f64>,
    words: Vec<String>,
}

impl NodeTensor {
    pub fn new(data: Array3<f64>, words: Vec<String>) -> Result<Self> {
        let (t, n, _) = data.dim();
        if words.len() != t * n {
            return Err(Error::Shape(format!("word index has {} entries for a {t}x{n} grid", words.len())));
        }
        Ok(NodeTensor { data, words })
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn word(&self, t: usize, n: usize) -> &str {
        &self.words[t * self.data.dim().1 + n]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn with_data(&self, data: Array3<f64>) -> Result<Self> {
        NodeTensor::new(data, self.words.clone())
    }
}

/// Looks every timeline word up in `table`; output channels equal the table
/// dimension.
pub fn embed_tokens(timeline: &TokenTimeline, table: &EmbeddingTable) -> NodeTensor {
    let (t_len, n_len, c) = (timeline.segments(), timeline.max_nodes(), table.dim());
    let mut data = Array3::zeros((t_len, n_len, c));
    let mut words = Vec::with_capacity(t_len * n_len);
    for t in 0..t_len {
        for n in 0..n_len {
            let w = timeline.word(t, n);
            data.slice_mut(ndarray::s![t, n, ..]).assign(&table.lookup(w));
            words.push(w.to_string());
        }
    }
    NodeTensor { data, words }
}
