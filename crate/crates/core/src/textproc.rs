//! Tokenization, vocabulary and n-gram extraction shared by the metrics and the model.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Spellings of the four reserved ids, in id order.
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Highest n-gram order used by any metric.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary must start with the reserved symbols {RESERVED:?}")]
    MissingReserved,
    #[error("duplicate vocabulary entry {0:?}")]
    Duplicate(String),
    #[error("invalid vocabulary json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Lowercase, replace every character outside `[a-z0-9 ]` with a space and split on whitespace.
pub fn normalize(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_ascii_lowercase() || c.is_ascii_digit() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Which of the two output tasks a caption belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// What happened and why ("action; cause").
    Description,
    /// The preventive measure.
    Avoidance,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Description => "description",
            Role::Avoidance => "avoidance",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "description" => Ok(Role::Description),
            "avoidance" => Ok(Role::Avoidance),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// A caption together with its normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption {
    pub raw: String,
    pub tokens: Vec<String>,
    pub role: Role,
}

impl Caption {
    pub fn new(raw: impl Into<String>, role: Role) -> Self {
        let raw = raw.into();
        let tokens = normalize(&raw);
        Self { raw, tokens, role }
    }
}

/// Token alphabet with dense ids; ids `0..4` are the reserved symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    min_count: usize,
}

impl Vocab {
    /// Every token seen at least `min_count` times, by descending count then lexicographically.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a Caption>, min_count: usize) -> Self {
        let min_count = min_count.max(1);
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for caption in corpus {
            for t in &caption.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_owned()))
            .collect();
        Self::from_tokens_unchecked(tokens, min_count)
    }

    /// Rebuilds a vocabulary from its serialized token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        if tokens.len() < RESERVED.len() || tokens.iter().zip(RESERVED).any(|(t, r)| t != r) {
            return Err(VocabError::MissingReserved);
        }
        let mut seen = HashMap::new();
        for t in &tokens {
            if seen.insert(t.as_str(), ()).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Self::from_tokens_unchecked(tokens, 1))
    }

    fn from_tokens_unchecked(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index, min_count }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// `[BOS, t.., EOS, PAD..]` cut or padded to `max_len`, with its non-PAD mask.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> (Vec<usize>, Vec<u8>) {
        assert!(max_len >= 2, "max_len must leave room for BOS and EOS");
        let mut ids = Vec::with_capacity(max_len);
        ids.push(BOS);
        ids.extend(tokens.iter().map(|t| self.id(t).unwrap_or(UNK)));
        ids.push(EOS);
        ids.resize(max_len, PAD);
        let mask = ids.iter().map(|&i| u8::from(i != PAD)).collect();
        (ids, mask)
    }

    /// Token strings for `ids`, skipping PAD/BOS/EOS and stopping at the first EOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_owned())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.tokens).expect("string list serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, VocabError> {
        Self::from_tokens(serde_json::from_str(json)?)
    }
}

/// An n-gram: a contiguous run of tokens.
pub type Gram = Vec<String>;

/// N-gram multisets for orders `1..=max_n`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NGramCounts {
    orders: Vec<BTreeMap<Gram, usize>>,
}

impl NGramCounts {
    /// Counts for order `n` (1-based); empty when `n` exceeds the extracted range.
    pub fn order(&self, n: usize) -> &BTreeMap<Gram, usize> {
        static EMPTY: BTreeMap<Gram, usize> = BTreeMap::new();
        n.checked_sub(1).and_then(|i| self.orders.get(i)).unwrap_or(&EMPTY)
    }

    pub fn max_n(&self) -> usize {
        self.orders.len()
    }

    pub fn total(&self, n: usize) -> usize {
        self.order(n).values().sum()
    }
}

/// Counts every contiguous n-gram of `tokens` for `n = 1..=max_n`.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], max_n: usize) -> NGramCounts {
    assert!(max_n >= 1, "max_n must be at least 1");
    let orders = (1..=max_n)
        .map(|n| {
            let mut m = BTreeMap::new();
            if tokens.len() >= n {
                for w in tokens.windows(n) {
                    let gram: Gram = w.iter().map(|t| t.as_ref().to_owned()).collect();
                    *m.entry(gram).or_default() += 1;
                }
            }
            m
        })
        .collect();
    NGramCounts { orders }
}
