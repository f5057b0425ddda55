use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Tokenizer;
use crate::session::{DecodeMode, GenerationRequest};
use crate::sampling::SamplingParams;

/// Generation settings shared by every request of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestDefaults {
    pub max_new_tokens: usize,
    pub mode: DecodeMode,
    pub temperature: f64,
    pub top_p: f64,
    /// Request `i` of a file gets seed `seed + i`.
    pub seed: u64,
    /// Stop at the tokenizer's end-of-sequence id.
    pub stop_at_eos: bool,
    /// Prepend the tokenizer's begin-of-sequence id.
    pub add_bos: bool,
}

impl Default for RequestDefaults {
    fn default() -> Self {
        RequestDefaults {
            max_new_tokens: 64,
            mode: DecodeMode::Greedy,
            temperature: 1.0,
            top_p: 1.0,
            seed: 0,
            stop_at_eos: false,
            add_bos: true,
        }
    }
}

/// Substitutes `{prompt}` in `template`.
pub fn apply_template(template: &str, prompt: &str) -> String {
    template.replace("{prompt}", prompt)
}

/// Templates, tokenizes and wraps one prompt; `index` offsets the seed.
pub fn build_request(
    prompt: &str,
    template: &str,
    tokenizer: &Tokenizer,
    defaults: &RequestDefaults,
    index: usize,
) -> Result<GenerationRequest> {
    let mut tokens = Vec::new();
    if defaults.add_bos {
        tokens.push(tokenizer.bos());
    }
    tokens.extend(tokenizer.encode(&apply_template(template, prompt))?);
    if tokens.is_empty() {
        return Err(Error::Tokenize("empty prompt".into()));
    }
    Ok(GenerationRequest {
        prompt: tokens,
        max_new_tokens: defaults.max_new_tokens,
        mode: defaults.mode,
        sampling: SamplingParams {
            temperature: defaults.temperature,
            top_p: defaults.top_p,
        },
        stop_tokens: if defaults.stop_at_eos { vec![tokenizer.eos()] } else { Vec::new() },
        seed: defaults.seed.wrapping_add(index as u64),
    })
}

/// One request per non-blank line, in file order. Each line is a JSON object
/// with a string `"prompt"`; other fields are ignored.
pub fn ingest_jsonl(
    path: impl AsRef<Path>,
    template: &str,
    tokenizer: &Tokenizer,
    defaults: &RequestDefaults,
) -> Result<Vec<GenerationRequest>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |line: usize, reason: String| Error::MalformedRecord {
        path: PathBuf::from(path),
        line,
        reason,
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| malformed(line_no, e.to_string()))?;
        let prompt = value
            .get("prompt")
            .ok_or_else(|| malformed(line_no, "missing \"prompt\"".into()))?
            .as_str()
            .ok_or_else(|| malformed(line_no, "\"prompt\" is not a string".into()))?;
        let req = build_request(prompt, template, tokenizer, defaults, out.len())
            .map_err(|e| malformed(line_no, e.to_string()))?;
        out.push(req);
    }
    Ok(out)
}
