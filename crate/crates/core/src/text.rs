//! TF-IDF featurization over word unigrams, word bigrams and character
//! trigrams.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseRowMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorizerConfig {
    pub max_word_unigrams: usize,
    pub max_word_bigrams: usize,
    pub max_char_trigrams: usize,
    pub sublinear_tf: bool,
    pub lowercase: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        VectorizerConfig {
            max_word_unigrams: 10_000,
            max_word_bigrams: 30_000,
            max_char_trigrams: 2_000,
            sublinear_tf: false,
            lowercase: true,
        }
    }
}

impl VectorizerConfig {
    pub fn unigrams_only(cap: usize) -> Self {
        VectorizerConfig {
            max_word_unigrams: cap,
            max_word_bigrams: 0,
            max_char_trigrams: 0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_word_unigrams + self.max_word_bigrams + self.max_char_trigrams == 0 {
            return Err(Error::invalid(
                "vectorizer needs at least one n-gram family",
            ));
        }
        Ok(())
    }

    fn cap(&self, family: Family) -> usize {
        match family {
            Family::WordUnigram => self.max_word_unigrams,
            Family::WordBigram => self.max_word_bigrams,
            Family::CharTrigram => self.max_char_trigrams,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    WordUnigram,
    WordBigram,
    CharTrigram,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::WordUnigram, Family::WordBigram, Family::CharTrigram];
}

/// Lowercases (optionally) and splits on whitespace, trimming non-alphanumeric
/// characters from both ends of each token.
pub fn tokenize(doc: &str, lowercase: bool) -> Vec<String> {
    doc.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(|t| {
            if lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Every term of `family` occurring in `doc`, with multiplicity.
fn family_terms(doc: &str, family: Family, lowercase: bool) -> Vec<String> {
    match family {
        Family::WordUnigram => tokenize(doc, lowercase),
        Family::WordBigram => {
            let toks = tokenize(doc, lowercase);
            toks.windows(2)
                .map(|w| format!("{} {}", w[0], w[1]))
                .collect()
        }
        Family::CharTrigram => {
            let text = if lowercase {
                doc.to_lowercase()
            } else {
                doc.to_string()
            };
            let chars: Vec<char> = text.chars().collect();
            chars.windows(3).map(|w| w.iter().collect()).collect()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FamilyVocab {
    family: Family,
    offset: usize,
    terms: Vec<String>,
}

/// Fitted vocabulary and inverse document frequencies.
///
/// Columns are laid out family by family (unigrams, bigrams, trigrams); within
/// a family terms are ordered by descending document frequency, ties broken
/// lexicographically.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TfidfModel {
    config: VectorizerConfig,
    doc_count: usize,
    families: Vec<FamilyVocab>,
    idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<(Family, String), u32>,
}

impl TfidfModel {
    pub fn fit<S: AsRef<str>>(corpus: &[S], config: &VectorizerConfig) -> Result<TfidfModel> {
        config.validate()?;
        if corpus.is_empty() {
            return Err(Error::invalid("cannot fit a vectorizer on an empty corpus"));
        }
        let n = corpus.len();
        let mut families = Vec::new();
        let mut idf = Vec::new();
        let mut offset = 0;
        for family in Family::ALL {
            let cap = config.cap(family);
            if cap == 0 {
                continue;
            }
            let mut df: HashMap<String, usize> = HashMap::new();
            for doc in corpus {
                let mut terms = family_terms(doc.as_ref(), family, config.lowercase);
                terms.sort_unstable();
                terms.dedup();
                for t in terms {
                    *df.entry(t).or_insert(0) += 1;
                }
            }
            let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
            ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(cap);
            for (_, d) in &ranked {
                idf.push(((n as f64 + 1.0) / (*d as f64 + 1.0)).ln() + 1.0);
            }
            let terms: Vec<String> = ranked.into_iter().map(|(t, _)| t).collect();
            let len = terms.len();
            families.push(FamilyVocab {
                family,
                offset,
                terms,
            });
            offset += len;
        }
        let mut model = TfidfModel {
            config: config.clone(),
            doc_count: n,
            families,
            idf,
            index: HashMap::new(),
        };
        model.rebuild_index();
        Ok(model)
    }

    fn rebuild_index(&mut self) {
        self.index.clear();
        for fv in &self.families {
            for (k, t) in fv.terms.iter().enumerate() {
                self.index
                    .insert((fv.family, t.clone()), (fv.offset + k) as u32);
            }
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.idf.len()
    }

    pub fn family_size(&self, family: Family) -> usize {
        self.families
            .iter()
            .find(|f| f.family == family)
            .map_or(0, |f| f.terms.len())
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn config(&self) -> &VectorizerConfig {
        &self.config
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    /// Column of `term` in `family`, if retained.
    pub fn column(&self, family: Family, term: &str) -> Option<usize> {
        self.index
            .get(&(family, term.to_string()))
            .map(|&c| c as usize)
    }

    /// Unit-norm TF-IDF row for one document, sorted by column. Documents
    /// without in-vocabulary terms map to an empty row.
    pub fn transform(&self, doc: &str) -> Vec<(u32, f64)> {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for fv in &self.families {
            for t in family_terms(doc, fv.family, self.config.lowercase) {
                if let Some(&c) = self.index.get(&(fv.family, t)) {
                    *counts.entry(c).or_insert(0) += 1;
                }
            }
        }
        let mut row: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(c, k)| {
                let tf = if self.config.sublinear_tf {
                    1.0 + (k as f64).ln()
                } else {
                    k as f64
                };
                (c, tf * self.idf[c as usize])
            })
            .collect();
        row.sort_unstable_by_key(|&(c, _)| c);
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|(_, v)| *v /= norm);
        }
        row
    }

    pub fn transform_corpus<S: AsRef<str>>(&self, corpus: &[S]) -> SparseRowMatrix {
        let rows = corpus.iter().map(|d| self.transform(d.as_ref()));
        SparseRowMatrix::from_rows(self.vocab_size(), rows)
            .expect("transform emits in-range columns")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<TfidfModel> {
        let mut m: TfidfModel = serde_json::from_str(s)?;
        m.rebuild_index();
        Ok(m)
    }
}

/// `n × n` identity, the featureless stand-in for TF-IDF rows.
pub fn identity_features(n: usize) -> Result<SparseRowMatrix> {
    if n == 0 {
        return Err(Error::invalid("identity features need n >= 1"));
    }
    Ok(SparseRowMatrix::identity(n))
}
