use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BYTE_BOS: u32 = 256;
pub const BYTE_EOS: u32 = 257;
pub const BYTE_PAD: u32 = 258;
const BYTE_VOCAB_MIN: usize = 259;

/// Token table stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tokenizer {
    /// Raw bytes 0..=255 plus BOS/EOS/PAD. Ids past PAD are never produced.
    Bytes { vocab_size: usize },
    /// Explicit string table, encoded by greedy longest match.
    Table { tokens: Vec<String>, bos: u32, eos: u32 },
}

impl Tokenizer {
    /// Byte-level when the vocabulary can hold it, a small character table otherwise.
    pub fn default_for_vocab(vocab_size: usize) -> Self {
        if vocab_size >= BYTE_VOCAB_MIN {
            return Tokenizer::Bytes { vocab_size };
        }
        const CHARS: &str = " etaoinshrdlcumwfgypbvkjxqz.,\n";
        let mut tokens = vec!["<s>".to_string(), "</s>".to_string()];
        let mut chars = CHARS.chars();
        while tokens.len() < vocab_size {
            match chars.next() {
                Some(c) => tokens.push(c.to_string()),
                None => tokens.push(format!("<t{}>", tokens.len())),
            }
        }
        tokens.truncate(vocab_size);
        let last = vocab_size.saturating_sub(1) as u32;
        Tokenizer::Table {
            tokens,
            bos: 0,
            eos: 1.min(last),
        }
    }

    pub fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Bytes { vocab_size } => *vocab_size,
            Tokenizer::Table { tokens, .. } => tokens.len(),
        }
    }

    pub fn bos(&self) -> u32 {
        match self {
            Tokenizer::Bytes { .. } => BYTE_BOS,
            Tokenizer::Table { bos, .. } => *bos,
        }
    }

    pub fn eos(&self) -> u32 {
        match self {
            Tokenizer::Bytes { .. } => BYTE_EOS,
            Tokenizer::Table { eos, .. } => *eos,
        }
    }

    /// Padding id; only byte-level tables define one.
    pub fn pad(&self) -> Option<u32> {
        match self {
            Tokenizer::Bytes { .. } => Some(BYTE_PAD),
            Tokenizer::Table { .. } => None,
        }
    }

    pub(crate) fn validate(&self, vocab_size: usize) -> Result<()> {
        match self {
            Tokenizer::Bytes { vocab_size: v } => {
                if *v != vocab_size || vocab_size < BYTE_VOCAB_MIN {
                    return Err(Error::InvalidConfig(format!(
                        "byte tokenizer needs vocab_size >= {BYTE_VOCAB_MIN} matching the model, got {v} vs {vocab_size}"
                    )));
                }
            }
            Tokenizer::Table { tokens, bos, eos } => {
                if tokens.len() != vocab_size {
                    return Err(Error::InvalidConfig(format!(
                        "token table has {} entries, model vocab is {vocab_size}",
                        tokens.len()
                    )));
                }
                if *bos as usize >= vocab_size || *eos as usize >= vocab_size {
                    return Err(Error::InvalidConfig("special token id out of range".into()));
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        match self {
            Tokenizer::Bytes { .. } => Ok(text.bytes().map(u32::from).collect()),
            Tokenizer::Table { tokens, bos, eos } => {
                let mut out = Vec::new();
                let mut rest = text;
                while !rest.is_empty() {
                    let best = tokens
                        .iter()
                        .enumerate()
                        .filter(|(id, t)| {
                            *id as u32 != *bos && *id as u32 != *eos && !t.is_empty() && rest.starts_with(t.as_str())
                        })
                        .max_by_key(|(id, t)| (t.len(), std::cmp::Reverse(*id)));
                    match best {
                        Some((id, t)) => {
                            out.push(id as u32);
                            rest = &rest[t.len()..];
                        }
                        None => {
                            let c = rest.chars().next().unwrap_or_default();
                            return Err(Error::Tokenize(format!("no token covers {c:?}")));
                        }
                    }
                }
                Ok(out)
            }
        }
    }

    /// Specials are dropped; invalid UTF-8 is replaced.
    pub fn decode(&self, ids: &[u32]) -> String {
        match self {
            Tokenizer::Bytes { .. } => {
                let bytes: Vec<u8> = ids.iter().filter(|&&id| id < 256).map(|&id| id as u8).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            }
            Tokenizer::Table { tokens, bos, eos } => ids
                .iter()
                .filter(|&&id| id != *bos && id != *eos)
                .filter_map(|&id| tokens.get(id as usize).map(String::as_str))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip() {
        let tok = Tokenizer::default_for_vocab(260);
        let ids = tok.encode("héllo").unwrap();
        assert_eq!(tok.decode(&ids), "héllo");
        assert_eq!(tok.bos(), 256);
    }

    #[test]
    fn small_table_longest_match() {
        let tok = Tokenizer::Table {
            tokens: vec!["<s>".into(), "</s>".into(), "a".into(), "ab".into(), "b".into()],
            bos: 0,
            eos: 1,
        };
        assert_eq!(tok.encode("abab").unwrap(), vec![3, 3]);
        assert_eq!(tok.encode("ba").unwrap(), vec![4, 2]);
        assert!(matches!(tok.encode("c"), Err(Error::Tokenize(_))));
    }

    #[test]
    fn small_vocab_table_sized() {
        for v in [1, 2, 4, 64] {
            let tok = Tokenizer::default_for_vocab(v);
            assert_eq!(tok.vocab_size(), v);
            tok.validate(v).unwrap();
        }
    }
}
