use crate::error::{Error, Result};
use crate::model::{ModelBundle, Tensor};
use crate::transformer::attention::AttentionMaskSpec;
use crate::transformer::cache::KvCache;
use crate::transformer::mask::LayerMask;

const ROPE_BASE: f64 = 10_000.0;

/// Logits for each input position, row-major `[rows x vocab]`.
#[derive(Debug, Clone)]
pub struct LogitsBlock {
    pub vocab: usize,
    pub data: Vec<f32>,
}

impl LogitsBlock {
    pub fn rows(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.vocab..(i + 1) * self.vocab]
    }

    /// Bitwise row comparison.
    pub fn row_bits_eq(&self, i: usize, other: &[f32]) -> bool {
        let r = self.row(i);
        r.len() == other.len() && r.iter().zip(other).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Runs the model over `tokens`, skipping the sublayers set in `mask`.
///
/// Every position is computed independently with a fixed operation order, so
/// a position's logits depend only on what it can see: identical inputs give
/// bit-identical outputs whether processed alone, in a causal batch, or as a
/// node of a token tree. New rows are appended to the cache as tentative rows;
/// with `commit` (causal input only, no tentative rows present) they become
/// committed.
pub fn forward(
    bundle: &ModelBundle,
    cache: &mut KvCache,
    tokens: &[u32],
    mask: &LayerMask,
    attn: &AttentionMaskSpec,
    commit: bool,
) -> Result<LogitsBlock> {
    let cfg = &bundle.config;
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if mask.len() != cfg.sublayers() {
        return Err(Error::MaskLengthMismatch {
            expected: cfg.sublayers(),
            got: mask.len(),
        });
    }
    if cache.n_layers() != cfg.n_blocks || cache.d_model() != cfg.d_model {
        return Err(Error::InvalidConfig("cache was built for a different architecture".into()));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::BadToken {
            token: t,
            vocab: cfg.vocab_size,
        });
    }
    let n = tokens.len();
    let chained = matches!(attn, AttentionMaskSpec::Causal);
    if commit && !(chained && cache.len() == cache.committed_len() && cache.chain_len() == cache.len()) {
        return Err(Error::InvalidCommit(
            "only a causal batch directly after the committed prefix can be committed".into(),
        ));
    }
    let vis = attn.resolve(n, cache.chain_len())?;
    let positions: Vec<usize> = vis.iter().map(|v| v.position).collect();
    let max_pos = positions.iter().copied().max().unwrap_or(0);
    if max_pos >= cfg.max_seq {
        return Err(Error::CacheOverflow {
            needed: max_pos + 1,
            capacity: cfg.max_seq,
        });
    }
    if cache.len() + n > cache.capacity() {
        return Err(Error::CacheOverflow {
            needed: cache.len() + n,
            capacity: cache.capacity(),
        });
    }

    let d = cfg.d_model;
    let hd = cfg.head_dim();
    let w = &bundle.weights;
    let base = cache.append_rows(&positions, chained, commit);

    let mut x = vec![0.0f32; n * d];
    for (i, &t) in tokens.iter().enumerate() {
        x[i * d..(i + 1) * d].copy_from_slice(w.tok_embeddings.row(t as usize));
    }

    let mut h = vec![0.0f32; d];
    let mut q = vec![0.0f32; n * d];
    let mut kbuf = vec![0.0f32; d];
    let mut vbuf = vec![0.0f32; d];
    let mut att = vec![0.0f32; d];
    let mut out = vec![0.0f32; d];
    let mut up = vec![0.0f32; cfg.d_ff];
    let mut scores: Vec<f32> = Vec::new();
    let mut keys: Vec<usize> = Vec::new();
    let scale = 1.0 / (hd as f32).sqrt();

    for (b, blk) in w.blocks.iter().enumerate() {
        let attn_skipped = mask.is_skipped(2 * b);
        {
            let layer = &mut cache.layers_mut()[b];
            for i in 0..n {
                layer.valid[base + i] = !attn_skipped;
            }
        }
        if !attn_skipped {
            for i in 0..n {
                rms_norm(&x[i * d..(i + 1) * d], &blk.attn_norm.data, cfg.norm_eps, &mut h);
                matvec(&blk.wq, &h, &mut q[i * d..(i + 1) * d]);
                matvec(&blk.wk, &h, &mut kbuf);
                matvec(&blk.wv, &h, &mut vbuf);
                apply_rope(&mut q[i * d..(i + 1) * d], cfg.n_heads, positions[i]);
                apply_rope(&mut kbuf, cfg.n_heads, positions[i]);
                let layer = &mut cache.layers_mut()[b];
                let slot = base + i;
                layer.k[slot * d..(slot + 1) * d].copy_from_slice(&kbuf);
                layer.v[slot * d..(slot + 1) * d].copy_from_slice(&vbuf);
            }
            for i in 0..n {
                keys.clear();
                keys.extend((0..vis[i].prefix_len).filter(|&r| cache.is_valid(b, r)));
                keys.extend(vis[i].ancestors.iter().map(|&a| base + a));
                keys.push(base + i);
                for head in 0..cfg.n_heads {
                    let lo = head * hd;
                    let qh = &q[i * d + lo..i * d + lo + hd];
                    scores.clear();
                    scores.extend(keys.iter().map(|&r| dot(qh, &cache.key(b, r)[lo..lo + hd]) * scale));
                    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                    let mut sum = 0.0f32;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        sum += *s;
                    }
                    let ah = &mut att[lo..lo + hd];
                    ah.fill(0.0);
                    for (&r, &s) in keys.iter().zip(&scores) {
                        let wgt = s / sum;
                        for (a, &v) in ah.iter_mut().zip(&cache.value(b, r)[lo..lo + hd]) {
                            *a += wgt * v;
                        }
                    }
                }
                matvec(&blk.wo, &att, &mut out);
                add_into(&mut x[i * d..(i + 1) * d], &out);
            }
        }
        if !mask.is_skipped(2 * b + 1) {
            for i in 0..n {
                rms_norm(&x[i * d..(i + 1) * d], &blk.mlp_norm.data, cfg.norm_eps, &mut h);
                matvec(&blk.w_up, &h, &mut up);
                up.iter_mut().for_each(|u| *u = silu(*u));
                matvec(&blk.w_down, &up, &mut out);
                add_into(&mut x[i * d..(i + 1) * d], &out);
            }
        }
    }

    let vocab = cfg.vocab_size;
    let mut logits = vec![0.0f32; n * vocab];
    for i in 0..n {
        rms_norm(&x[i * d..(i + 1) * d], &w.final_norm.data, cfg.norm_eps, &mut h);
        matvec(&w.lm_head, &h, &mut logits[i * vocab..(i + 1) * vocab]);
    }
    Ok(LogitsBlock { vocab, data: logits })
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0f32, |acc, (x, y)| acc + x * y)
}

fn matvec(w: &Tensor, x: &[f32], out: &mut [f32]) {
    let cols = w.shape[1];
    for (o, row) in out.iter_mut().zip(w.data.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

fn add_into(x: &mut [f32], y: &[f32]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

fn rms_norm(x: &[f32], weight: &[f32], eps: f32, out: &mut [f32]) {
    let ms = x.iter().fold(0.0f32, |acc, v| acc + v * v) / x.len() as f32;
    let inv = 1.0 / (ms + eps).sqrt();
    for ((o, &v), &g) in out.iter_mut().zip(x).zip(weight) {
        *o = v * inv * g;
    }
}

fn silu(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

/// Rotary embedding on each head, pairing dimension `j` with `j + head_dim/2`.
fn apply_rope(x: &mut [f32], n_heads: usize, position: usize) {
    let hd = x.len() / n_heads;
    let half = hd / 2;
    for head in x.chunks_exact_mut(hd) {
        for j in 0..half {
            let freq = ROPE_BASE.powf(-2.0 * j as f64 / hd as f64);
            let angle = position as f64 * freq;
            let (s, c) = (angle.sin() as f32, angle.cos() as f32);
            let (a, b) = (head[j], head[j + half]);
            head[j] = a * c - b * s;
            head[j + half] = a * s + b * c;
        }
    }
}

/// Temperature softmax with max subtraction, evaluated in f64.
pub fn softmax_row(logits: &[f32], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::OutOfRange(temperature));
    }
    if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut p: Vec<f64> = logits.iter().map(|&l| ((l as f64 - max) / temperature).exp()).collect();
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= sum);
    Ok(p)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest values, descending, ties broken by index.
pub fn top_k(values: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
