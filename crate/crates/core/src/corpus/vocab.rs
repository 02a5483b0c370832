use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

/// Token ↔ id bijection. Ids are contiguous from zero; the four special
/// tokens occupy ids 0..4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    min_count: usize,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const BOS: usize = 2;
    pub const EOS: usize = 3;
    pub const NUM_SPECIAL: usize = 4;

    /// Vocabulary from an ordered token list (specials are prepended).
    pub fn from_tokens<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>, min_count: usize) -> Self {
        let mut id_to_token: Vec<String> = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for t in tokens {
            let t = t.as_ref();
            if !id_to_token.iter().any(|x| x == t) {
                id_to_token.push(t.to_owned());
            }
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            token_to_id,
            id_to_token,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Non-special tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.id_to_token[Self::NUM_SPECIAL..]
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// File form: `#min_count=<n>` header, then one token per line in id
    /// order.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "#min_count={}", self.min_count).unwrap();
        for t in &self.id_to_token {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Schema("vocabulary file is empty".into()))?;
        let min_count = header
            .strip_prefix("#min_count=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Schema(format!("bad vocabulary header {header:?}")))?;
        let tokens: Vec<&str> = lines.collect();
        let specials = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN];
        if tokens.len() < specials.len() || tokens[..4] != specials {
            return Err(Error::Schema(
                "vocabulary must start with <pad> <unk> <bos> <eos>".into(),
            ));
        }
        let vocab = Self::from_tokens(&tokens[4..], min_count);
        if vocab.len() != tokens.len() {
            return Err(Error::Schema("duplicate tokens in vocabulary file".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// SHA-256 of the file form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }
}

/// Keeps exactly the tokens seen at least `min_count` times, ordered by
/// descending count with ties broken lexicographically.
pub fn build_vocabulary<I, S, T>(token_streams: I, min_count: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: IntoIterator<Item = T>,
    T: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut total = 0usize;
    for stream in token_streams {
        for tok in stream {
            total += 1;
            *counts.entry(tok.as_ref().to_owned()).or_default() += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let specials = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN];
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !specials.contains(&t.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_tokens(
        kept.into_iter().map(|(t, _)| t),
        min_count,
    ))
}
