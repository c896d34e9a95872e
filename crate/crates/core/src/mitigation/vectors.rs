//! Sentence vectors for exemplar selection.

use std::collections::{BTreeMap, HashMap};

use super::MitigationError;

/// Sparse unit vector, entries sorted by dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SentenceVector {
    entries: Vec<(u32, f64)>,
}

impl SentenceVector {
    fn normalized(mut entries: Vec<(u32, f64)>) -> Self {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(i, _)| i);
        let norm = entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in entries.iter_mut() {
                e.1 /= norm;
            }
        }
        SentenceVector { entries }
    }

    /// True when none of the text's tokens were known to the source.
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Cosine similarity; zero vectors are orthogonal to everything.
    pub fn cosine(&self, other: &SentenceVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        dot
    }
}

pub trait VectorSource {
    fn vector(&self, text: &str) -> SentenceVector;
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // kana
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xF900..=0xFAFF
        | 0x20000..=0x2A6DF)
}

/// Lower-cased word tokens; CJK ideographs and kana become one token each.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// TF-IDF with raw term counts and smoothed idf `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdf {
    index: HashMap<String, u32>,
    idf: Vec<f64>,
}

impl TfIdf {
    pub fn fit<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        let mut n = 0u64;
        for doc in docs {
            n += 1;
            let mut tokens = tokenize(doc);
            tokens.sort();
            tokens.dedup();
            for t in tokens {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut index = HashMap::with_capacity(df.len());
        let mut idf = Vec::with_capacity(df.len());
        for (i, (token, count)) in df.into_iter().enumerate() {
            index.insert(token, i as u32);
            idf.push(((1 + n) as f64 / (1 + count) as f64).ln() + 1.0);
        }
        TfIdf { index, idf }
    }

    pub fn vocabulary_size(&self) -> usize {
        self.idf.len()
    }
}

impl VectorSource for TfIdf {
    fn vector(&self, text: &str) -> SentenceVector {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for t in tokenize(text) {
            if let Some(&i) = self.index.get(&t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        SentenceVector::normalized(
            tf.into_iter()
                .map(|(i, c)| (i, c * self.idf[i as usize]))
                .collect(),
        )
    }
}

/// Averaged token embeddings from an external table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<(), MitigationError> {
        if vector.len() != self.dim {
            return Err(MitigationError::Dimension {
                expected: self.dim,
                got: vector.len(),
            });
        }
        self.vectors.insert(token.to_lowercase(), vector);
        Ok(())
    }

    /// Parses whitespace-separated `token v1 v2 ...` lines.
    pub fn parse(text: &str) -> Result<Self, MitigationError> {
        let mut table: Option<EmbeddingTable> = None;
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| MitigationError::Malformed(format!("line {}: {e}", n + 1)))?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            t.insert(token, values)?;
        }
        table.ok_or_else(|| MitigationError::Malformed("empty embedding table".into()))
    }
}

impl VectorSource for EmbeddingTable {
    fn vector(&self, text: &str) -> SentenceVector {
        let mut sum = vec![0.0; self.dim];
        for t in tokenize(text) {
            if let Some(v) = self.vectors.get(&t) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
            }
        }
        // averaging does not change the direction
        SentenceVector::normalized(sum.into_iter().enumerate().map(|(i, v)| (i as u32, v)).collect())
    }
}

/// Unit vector for `text`, rejecting blank input.
pub fn sentence_vector(text: &str, source: &dyn VectorSource) -> Result<SentenceVector, MitigationError> {
    if text.trim().is_empty() {
        return Err(MitigationError::EmptyText);
    }
    Ok(source.vector(text))
}
