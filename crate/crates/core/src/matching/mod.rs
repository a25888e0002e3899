//! Query-to-caption scoring. A query matches a caption through two
//! complementary signals: a token-level fuzzy score that rewards exact and
//! near-exact word overlap, and an embedding cosine that captures bag-level
//! similarity. The combined score is a weighted sum of the two.

pub mod embed;
pub mod gestalt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embed::{
    cosine_raw, EmbeddingVector, OfflineEncoder, RemoteEncoder, TextEncoder, DEFAULT_EMBED_DIM,
    DEFAULT_HASH_SEED,
};
pub use gestalt::ratcliff_obershelp;

/// Lowercase the text and split it on runs of non-alphanumeric characters.
/// Stop words are kept; the fuzzy score benefits from them matching and the
/// hashed encoder treats them as ordinary tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(|s| s.to_string())
        .collect()
}

/// Sum over query words of the best gestalt similarity against any caption
/// word. Ranges over [0, m] for a query of m words. An empty query is a
/// caller error; a caption with no tokens scores 0 against any query.
pub fn fuzzy_score(query_words: &[String], caption: &str) -> Result<f64> {
    if query_words.is_empty() {
        return Err(Error::Invalid("fuzzy score needs a non-empty query".into()));
    }
    let caption_words = tokenize(caption);
    if caption_words.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for q in query_words {
        let mut best = 0.0f64;
        for c in &caption_words {
            let s = ratcliff_obershelp(q, c);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    Ok(total)
}

/// Weights for combining the two signals. `normalize_fuzzy` divides the raw
/// fuzzy sum by the query word count so both signals live on [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub embed: f64,
    pub fuzzy: f64,
    pub normalize_fuzzy: bool,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            embed: 1.0,
            fuzzy: 1.0,
            normalize_fuzzy: false,
        }
    }
}

/// Score breakdown for one query/caption pair. `s_fuzzy` is stored exactly as
/// it entered the sum, post-normalization when that is enabled, so
/// `s_total == embed_weight * s_embed + fuzzy_weight * s_fuzzy` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub s_fuzzy: f64,
    pub s_embed: f64,
    pub s_total: f64,
    pub query_words: usize,
}

/// Combine the fuzzy and embedding signals for one query/caption pair.
pub fn total_score(
    query: &str,
    caption: &str,
    encoder: &dyn TextEncoder,
    weights: &Weights,
) -> Result<MatchScore> {
    let query_words = tokenize(query);
    if query_words.is_empty() {
        return Err(Error::Invalid(format!(
            "query has no tokens: {query:?}"
        )));
    }
    let raw_fuzzy = fuzzy_score(&query_words, caption)?;
    let s_fuzzy = if weights.normalize_fuzzy {
        raw_fuzzy / query_words.len() as f64
    } else {
        raw_fuzzy
    };
    let s_embed = if weights.embed != 0.0 {
        let qv = encoder.embed(query)?;
        match encoder.embed(caption) {
            Ok(cv) => qv.cosine(&cv),
            // A blank caption carries no signal in either channel.
            Err(_) if tokenize(caption).is_empty() => 0.0,
            Err(e) => return Err(e),
        }
    } else {
        0.0
    };
    let s_total = weights.embed * s_embed + weights.fuzzy * s_fuzzy;
    Ok(MatchScore {
        s_fuzzy,
        s_embed,
        s_total,
        query_words: query_words.len(),
    })
}
