//! In-memory word embedding table and similarity queries.

use alloc::borrow::Cow;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// On-disk text layout the table was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingFormat {
    /// `count dim` header line followed by `word f1 .. fd` rows.
    Word2vecText,
    /// Headerless `word f1 .. fd` rows.
    GloveText,
}

/// Immutable word -> vector map. Vectors are stored as `f32` (the precision
/// of every published text embedding) and widened to `f64` for arithmetic.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dimension: usize,
    index: BTreeMap<String, usize>,
    data: Vec<f32>,
    case_fold: bool,
    duplicates: usize,
    source_path: String,
    format: EmbeddingFormat,
}

/// Accumulates rows before freezing them into an [`EmbeddingTable`].
#[derive(Debug)]
pub struct EmbeddingTableBuilder {
    dimension: usize,
    index: BTreeMap<String, usize>,
    data: Vec<f32>,
    case_fold: bool,
    duplicates: usize,
}

impl EmbeddingTableBuilder {
    pub fn new(dimension: usize, case_fold: bool) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Validation("embedding dimension must be positive".to_string()));
        }
        Ok(Self {
            dimension,
            index: BTreeMap::new(),
            data: Vec::new(),
            case_fold,
            duplicates: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Adds a row. Returns `Ok(false)` when the (folded) word was already
    /// present; the first occurrence is kept.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        let key = fold(word, self.case_fold).into_owned();
        if self.index.contains_key(&key) {
            self.duplicates += 1;
            return Ok(false);
        }
        let row = self.index.len();
        self.index.insert(key, row);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn build(self, source_path: impl Into<String>, format: EmbeddingFormat) -> EmbeddingTable {
        EmbeddingTable {
            dimension: self.dimension,
            index: self.index,
            data: self.data,
            case_fold: self.case_fold,
            duplicates: self.duplicates,
            source_path: source_path.into(),
            format,
        }
    }
}

fn fold(word: &str, case_fold: bool) -> Cow<'_, str> {
    if case_fold && word.chars().any(char::is_uppercase) {
        Cow::Owned(word.to_lowercase())
    } else {
        Cow::Borrowed(word)
    }
}

impl EmbeddingTable {
    /// Convenience constructor for small in-memory tables.
    pub fn from_rows<'a, I>(rows: I, case_fold: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f32])>,
    {
        let mut rows = rows.into_iter().peekable();
        let dimension = match rows.peek() {
            Some((_, v)) => v.len(),
            None => return Err(Error::Degenerate("embedding table has no rows".to_string())),
        };
        let mut builder = EmbeddingTableBuilder::new(dimension, case_fold)?;
        for (word, vector) in rows {
            builder.insert(word, vector)?;
        }
        Ok(builder.build("<memory>", EmbeddingFormat::GloveText))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Number of rows dropped because their word was already present.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn format(&self) -> EmbeddingFormat {
        self.format
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        let row = *self.index.get(fold(word, self.case_fold).as_ref())?;
        let start = row * self.dimension;
        Some(&self.data[start..start + self.dimension])
    }

    pub fn get_f64(&self, word: &str) -> Option<Vec<f64>> {
        self.get(word).map(|v| v.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (a, b) in u.iter().zip(v) {
        acc.add(a * b);
    }
    acc.value()
}

fn norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Degenerate("cosine of a zero-norm vector".to_string()));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unit-norm mean of the vectors of every word that resolves.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedVector {
    pub vector: Vec<f64>,
    pub resolved: Vec<String>,
    pub oov: Vec<String>,
}

pub fn combine_vectors<S: AsRef<str>>(table: &EmbeddingTable, words: &[S]) -> Result<CombinedVector> {
    let mut resolved = Vec::new();
    let mut oov = Vec::new();
    let mut sums: Vec<CompensatedSum> = (0..table.dimension()).map(|_| CompensatedSum::new()).collect();
    for word in words {
        let word = word.as_ref();
        match table.get(word) {
            Some(v) => {
                for (acc, &x) in sums.iter_mut().zip(v) {
                    acc.add(f64::from(x));
                }
                resolved.push(word.to_string());
            }
            None => oov.push(word.to_string()),
        }
    }
    if resolved.is_empty() {
        return Err(Error::Oov { words: oov });
    }
    let n = resolved.len() as f64;
    let mean: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();
    let length = norm(&mean);
    if length == 0.0 || !length.is_finite() {
        return Err(Error::Degenerate(format!("combined vector of {resolved:?} has zero norm")));
    }
    Ok(CombinedVector {
        vector: mean.iter().map(|x| x / length).collect(),
        resolved,
        oov,
    })
}

/// Outcome of a similarity query between two word groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityResult {
    /// Cosine clamped to `[0, 1]`; 0 when either side did not resolve.
    pub value: f64,
    pub raw_cosine: f64,
    /// Every queried word missing from the table, left side first.
    pub oov_terms: Vec<String>,
    /// Set when both sides resolved but a combined vector had zero norm.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub degenerate: bool,
}

impl SimilarityResult {
    fn unresolved(oov_terms: Vec<String>, degenerate: bool) -> Self {
        Self {
            value: 0.0,
            raw_cosine: 0.0,
            oov_terms,
            degenerate,
        }
    }
}

/// Similarity between two word groups. Missing words never fail the query:
/// a side with no resolvable word yields `value == 0`, i.e. no update.
pub fn similarity<L: AsRef<str>, R: AsRef<str>>(table: &EmbeddingTable, left: &[L], right: &[R]) -> SimilarityResult {
    let lhs = combine_vectors(table, left);
    let rhs = combine_vectors(table, right);
    let mut oov_terms = Vec::new();
    let mut degenerate = false;
    for side in [&lhs, &rhs] {
        match side {
            Ok(c) => oov_terms.extend(c.oov.iter().cloned()),
            Err(Error::Oov { words }) => oov_terms.extend(words.iter().cloned()),
            Err(_) => degenerate = true,
        }
    }
    match (lhs, rhs) {
        (Ok(a), Ok(b)) => match cosine(&a.vector, &b.vector) {
            Ok(raw) => SimilarityResult {
                value: raw.clamp(0.0, 1.0),
                raw_cosine: raw,
                oov_terms,
                degenerate: false,
            },
            Err(_) => SimilarityResult::unresolved(oov_terms, true),
        },
        _ => SimilarityResult::unresolved(oov_terms, degenerate),
    }
}
