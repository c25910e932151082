//! Encoder-decoder transformer over location and angle tokens.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    add_norm_cached, causal_mask, feed_forward_backward, feed_forward_cached, layer_norm_backward, layer_norm_cached,
    multi_head_backward, multi_head_cached, AttentionWeights, FfnCache, FfnWeights, HeadWeights, MhaCache, NormAxis,
    NormCache, NormWeights, DEFAULT_LN_EPS,
};
use super::tensor::Mat;
use super::vocab::{TokenVocab, ANGLE_SLOTS, BEGIN};
use crate::error::{Error, Result};

/// Longest token sequence either stack accepts.
pub const MAX_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    /// Blocks in the encoder and, separately, in the decoder.
    pub layers: usize,
    pub heads: usize,
    pub d_e: usize,
    pub d_k: usize,
    pub ffn_width: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub ln_eps: f64,
    /// Adds a fixed sinusoidal encoding of the bin centre to coordinate
    /// token embeddings, so nearby locations start out with similar vectors.
    pub location_features: bool,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            layers: 6,
            heads: 8,
            d_e: 64,
            d_k: 8,
            ffn_width: 64,
            lr: 0.1,
            epochs: 100,
            batch_size: 64,
            ln_eps: DEFAULT_LN_EPS,
            location_features: true,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.d_e == 0 || self.d_k == 0 || self.ffn_width == 0 {
            return Err(Error::Domain("transformer widths and counts must be positive".into()));
        }
        if !(self.lr > 0.0) || self.batch_size == 0 || !(self.ln_eps > 0.0) {
            return Err(Error::Domain("learning rate, batch size and eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub attn: AttentionWeights,
    pub norm1: NormWeights,
    pub ffn: FfnWeights,
    pub norm2: NormWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderLayer {
    pub self_attn: AttentionWeights,
    pub norm1: NormWeights,
    pub cross_attn: AttentionWeights,
    pub norm2: NormWeights,
    pub ffn: FfnWeights,
    pub norm3: NormWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerWeights {
    /// One row per vocabulary entry.
    pub embedding: Mat,
    /// Learned per-position embeddings, shared by encoder and decoder.
    pub positions: Mat,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub final_norm: NormWeights,
    /// `d_e × output_size`
    pub w_out: Mat,
    pub b_out: Mat,
}

/// Uniform walk over every trainable tensor in a fixed order.
pub(crate) trait Params {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>);
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>);
    fn names(&self, prefix: &str, out: &mut Vec<String>);
}

impl Params for HeadWeights {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        out.extend([&self.w_q, &self.w_k, &self.w_v]);
    }
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        out.extend([&mut self.w_q, &mut self.w_k, &mut self.w_v]);
    }
    fn names(&self, prefix: &str, out: &mut Vec<String>) {
        out.extend(["w_q", "w_k", "w_v"].map(|n| format!("{prefix}.{n}")));
    }
}

impl Params for AttentionWeights {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        self.heads.iter().for_each(|h| h.collect(out));
        out.push(&self.w_mul);
    }
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        self.heads.iter_mut().for_each(|h| h.collect_mut(out));
        out.push(&mut self.w_mul);
    }
    fn names(&self, prefix: &str, out: &mut Vec<String>) {
        for (i, h) in self.heads.iter().enumerate() {
            h.names(&format!("{prefix}.head{i}"), out);
        }
        out.push(format!("{prefix}.w_mul"));
    }
}

impl Params for NormWeights {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        out.extend([&self.gain, &self.offset]);
    }
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        out.extend([&mut self.gain, &mut self.offset]);
    }
    fn names(&self, prefix: &str, out: &mut Vec<String>) {
        out.extend(["gain", "offset"].map(|n| format!("{prefix}.{n}")));
    }
}

impl Params for FfnWeights {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        out.extend([&self.w1, &self.b1, &self.w2, &self.b2]);
    }
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
    }
    fn names(&self, prefix: &str, out: &mut Vec<String>) {
        out.extend(["w1", "b1", "w2", "b2"].map(|n| format!("{prefix}.{n}")));
    }
}

impl Params for EncoderLayer {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        self.attn.collect(out);
        self.norm1.collect(out);
        self.ffn.collect(out);
        self.norm2.collect(out);
    }
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        self.attn.collect_mut(out);
        self.norm1.collect_mut(out);
        self.ffn.collect_mut(out);
        self.norm2.collect_mut(out);
    }
    fn names(&self, prefix: &str, out: &mut Vec<String>) {
        self.attn.names(&format!("{prefix}.attn"), out);
        self.norm1.names(&format!("{prefix}.norm1"), out);
        self.ffn.names(&format!("{prefix}.ffn"), out);
        self.norm2.names(&format!("{prefix}.norm2"), out);
    }
}

impl Params for DecoderLayer {
    fn collect<'a>(&'a self, out: &mut Vec<&'a Mat>) {
        self.self_attn.collect(out);
        self.norm1.collect(out);
        self.cross_attn.collect(out);
        self.norm2.collect(out);
        self.ffn.collect(out);
        self.norm3.collect(out);
    }
    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Mat>) {
        self.self_attn.collect_mut(out);
        self.norm1.collect_mut(out);
        self.cross_attn.collect_mut(out);
        self.norm2.collect_mut(out);
        self.ffn.collect_mut(out);
        self.norm3.collect_mut(out);
    }
    fn names(&self, prefix: &str, out: &mut Vec<String>) {
        self.self_attn.names(&format!("{prefix}.self_attn"), out);
        self.norm1.names(&format!("{prefix}.norm1"), out);
        self.cross_attn.names(&format!("{prefix}.cross_attn"), out);
        self.norm2.names(&format!("{prefix}.norm2"), out);
        self.ffn.names(&format!("{prefix}.ffn"), out);
        self.norm3.names(&format!("{prefix}.norm3"), out);
    }
}

fn init_attention(cfg: &TransformerConfig, rng: &mut impl Rng) -> AttentionWeights {
    let d = cfg.d_e;
    AttentionWeights {
        heads: (0..cfg.heads)
            .map(|_| HeadWeights {
                w_q: Mat::uniform(d, cfg.d_k, d, rng),
                w_k: Mat::uniform(d, cfg.d_k, d, rng),
                w_v: Mat::uniform(d, d, d, rng),
            })
            .collect(),
        w_mul: Mat::uniform(cfg.heads * d, d, cfg.heads * d, rng),
    }
}

fn init_ffn(cfg: &TransformerConfig, rng: &mut impl Rng) -> FfnWeights {
    let (d, f) = (cfg.d_e, cfg.ffn_width);
    FfnWeights {
        w1: Mat::uniform(d, f, d, rng),
        b1: Mat::uniform(1, f, d, rng),
        w2: Mat::uniform(f, d, f, rng),
        b2: Mat::uniform(1, d, f, rng),
    }
}

impl TransformerWeights {
    /// Uniform `±1/√fan_in` initialisation; layer norms start at unit gain.
    pub fn init(cfg: &TransformerConfig, vocab: &TokenVocab, rng: &mut impl Rng) -> Self {
        let d = cfg.d_e;
        Self {
            embedding: Mat::uniform(vocab.size(), d, d, rng),
            positions: Mat::uniform(MAX_LEN, d, d, rng),
            encoder: (0..cfg.layers)
                .map(|_| EncoderLayer {
                    attn: init_attention(cfg, rng),
                    norm1: NormWeights::unit(d),
                    ffn: init_ffn(cfg, rng),
                    norm2: NormWeights::unit(d),
                })
                .collect(),
            decoder: (0..cfg.layers)
                .map(|_| DecoderLayer {
                    self_attn: init_attention(cfg, rng),
                    norm1: NormWeights::unit(d),
                    cross_attn: init_attention(cfg, rng),
                    norm2: NormWeights::unit(d),
                    ffn: init_ffn(cfg, rng),
                    norm3: NormWeights::unit(d),
                })
                .collect(),
            final_norm: NormWeights::unit(d),
            w_out: Mat::uniform(d, vocab.output_size(), d, rng),
            b_out: Mat::zeros(1, vocab.output_size()),
        }
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        let mut out = vec![&self.embedding, &self.positions];
        self.encoder.iter().for_each(|l| l.collect(&mut out));
        self.decoder.iter().for_each(|l| l.collect(&mut out));
        self.final_norm.collect(&mut out);
        out.extend([&self.w_out, &self.b_out]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut out = vec![&mut self.embedding, &mut self.positions];
        self.encoder.iter_mut().for_each(|l| l.collect_mut(&mut out));
        self.decoder.iter_mut().for_each(|l| l.collect_mut(&mut out));
        self.final_norm.collect_mut(&mut out);
        out.extend([&mut self.w_out, &mut self.b_out]);
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut out = vec!["embedding".to_string(), "positions".to_string()];
        for (i, l) in self.encoder.iter().enumerate() {
            l.names(&format!("encoder{i}"), &mut out);
        }
        for (i, l) in self.decoder.iter().enumerate() {
            l.names(&format!("decoder{i}"), &mut out);
        }
        self.final_norm.names("final_norm", &mut out);
        out.extend(["w_out".to_string(), "b_out".to_string()]);
        out
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.as_mut_slice().fill(0.0));
        z
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.as_slice().len()).sum()
    }

    /// Checks every shape against the configuration and vocabulary.
    pub fn check_shapes(&self, cfg: &TransformerConfig, vocab: &TokenVocab) -> Result<()> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let reference = Self::init(cfg, vocab, &mut rng);
        let same = self.tensors().len() == reference.tensors().len()
            && self.tensors().iter().zip(reference.tensors()).all(|(a, b)| a.shape() == b.shape())
            && self.tensors().iter().all(|t| t.as_slice().len() == t.rows() * t.cols());
        if same {
            Ok(())
        } else {
            Err(Error::Compatibility("weight shapes do not match the transformer configuration".into()))
        }
    }
}

/// Fixed sinusoidal code of a normalised coordinate `u ∈ (0, 1)`, with
/// frequencies spread geometrically from π to 64π.
fn location_code(u: f64, width: usize) -> Vec<f64> {
    let pairs = (width / 2).max(1);
    (0..width)
        .map(|j| {
            let k = (j / 2) as f64 / (pairs.max(2) - 1) as f64;
            let omega = PI * 64f64.powf(k);
            if j % 2 == 0 {
                (omega * u).sin()
            } else {
                (omega * u).cos()
            }
        })
        .collect()
}

fn embed(tokens: &[usize], w: &TransformerWeights, cfg: &TransformerConfig, vocab: &TokenVocab) -> Result<Mat> {
    if tokens.len() > MAX_LEN {
        return Err(Error::Contract(format!("sequence of {} tokens exceeds {MAX_LEN}", tokens.len())));
    }
    let d = cfg.d_e;
    let mut x = Mat::zeros(tokens.len(), d);
    for (i, &t) in tokens.iter().enumerate() {
        if t >= vocab.size() {
            return Err(Error::Vocabulary(t));
        }
        let row = x.row_mut(i);
        for ((r, e), p) in row.iter_mut().zip(w.embedding.row(t)).zip(w.positions.row(i)) {
            *r = e + p;
        }
        if cfg.location_features {
            if let Some(u) = vocab.coordinate_position(t) {
                for (r, c) in row.iter_mut().zip(location_code(u, d)) {
                    *r += c;
                }
            }
        }
    }
    Ok(x)
}

fn embed_backward(tokens: &[usize], dx: &Mat, g: &mut TransformerWeights) {
    for (i, &t) in tokens.iter().enumerate() {
        for (e, d) in g.embedding.row_mut(t).iter_mut().zip(dx.row(i)) {
            *e += d;
        }
        for (p, d) in g.positions.row_mut(i).iter_mut().zip(dx.row(i)) {
            *p += d;
        }
    }
}

struct EncoderCache {
    inputs: Vec<Mat>,
    attn: Vec<MhaCache>,
    norm1: Vec<NormCache>,
    mids: Vec<Mat>,
    ffn: Vec<FfnCache>,
    norm2: Vec<NormCache>,
}

fn encode_cached(tokens: &[usize], w: &TransformerWeights, cfg: &TransformerConfig, vocab: &TokenVocab) -> Result<(Mat, EncoderCache)> {
    let mut x = embed(tokens, w, cfg, vocab)?;
    let mut c = EncoderCache { inputs: vec![], attn: vec![], norm1: vec![], mids: vec![], ffn: vec![], norm2: vec![] };
    for layer in &w.encoder {
        let (a, ac) = multi_head_cached(&x, &x, &layer.attn, cfg.d_k, None);
        let (x1, n1) = add_norm_cached(&x, &a, &layer.norm1, cfg.ln_eps);
        let (f, fc) = feed_forward_cached(&x1, &layer.ffn);
        let (x2, n2) = add_norm_cached(&x1, &f, &layer.norm2, cfg.ln_eps);
        c.inputs.push(std::mem::replace(&mut x, x2));
        c.attn.push(ac);
        c.norm1.push(n1);
        c.mids.push(x1);
        c.ffn.push(fc);
        c.norm2.push(n2);
    }
    Ok((x, c))
}

/// Encoder stack over the embedded source tokens; returns `C`.
pub fn encode(tokens: &[usize], w: &TransformerWeights, cfg: &TransformerConfig, vocab: &TokenVocab) -> Result<Mat> {
    Ok(encode_cached(tokens, w, cfg, vocab)?.0)
}

fn encode_backward(
    tokens: &[usize],
    dc: Mat,
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    cache: &EncoderCache,
    g: &mut TransformerWeights,
) {
    let mut dx = dc;
    for l in (0..w.encoder.len()).rev() {
        let (layer, gl) = (&w.encoder[l], &mut g.encoder[l]);
        // x2 = x1 + LN2(ffn(x1))
        let df = layer_norm_backward(&dx, &layer.norm2, &cache.norm2[l], &mut gl.norm2);
        let mut dx1 = dx;
        dx1.add_assign(&feed_forward_backward(&df, &cache.mids[l], &layer.ffn, &cache.ffn[l], &mut gl.ffn));
        // x1 = x + LN1(mha(x, x))
        let da = layer_norm_backward(&dx1, &layer.norm1, &cache.norm1[l], &mut gl.norm1);
        let x = &cache.inputs[l];
        let (dq, dkv) = multi_head_backward(&da, x, x, &layer.attn, &cache.attn[l], cfg.d_k, &mut gl.attn);
        dx1.add_assign(&dq);
        dx1.add_assign(&dkv);
        dx = dx1;
    }
    embed_backward(tokens, &dx, g);
}

struct DecoderCache {
    inputs: Vec<Mat>,
    self_attn: Vec<MhaCache>,
    norm1: Vec<NormCache>,
    after_self: Vec<Mat>,
    cross: Vec<MhaCache>,
    norm2: Vec<NormCache>,
    after_cross: Vec<Mat>,
    ffn: Vec<FfnCache>,
    norm3: Vec<NormCache>,
    final_norm: NormCache,
    normed: Mat,
}

fn decode_cached(
    prefix: &[usize],
    c: &Mat,
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
) -> Result<(Mat, DecoderCache)> {
    let mut y = embed(prefix, w, cfg, vocab)?;
    let mask = causal_mask(prefix.len());
    let mut inputs = vec![];
    let (mut self_attn, mut norm1, mut after_self, mut cross, mut norm2, mut after_cross, mut ffn, mut norm3) =
        (vec![], vec![], vec![], vec![], vec![], vec![], vec![], vec![]);
    for layer in &w.decoder {
        let (s, sc) = multi_head_cached(&y, &y, &layer.self_attn, cfg.d_k, Some(&mask));
        let (y1, n1) = add_norm_cached(&y, &s, &layer.norm1, cfg.ln_eps);
        let (r, rc) = multi_head_cached(&y1, c, &layer.cross_attn, cfg.d_k, None);
        let (y2, n2) = add_norm_cached(&y1, &r, &layer.norm2, cfg.ln_eps);
        let (f, fc) = feed_forward_cached(&y2, &layer.ffn);
        let (y3, n3) = add_norm_cached(&y2, &f, &layer.norm3, cfg.ln_eps);
        inputs.push(std::mem::replace(&mut y, y3));
        self_attn.push(sc);
        norm1.push(n1);
        after_self.push(y1);
        cross.push(rc);
        norm2.push(n2);
        after_cross.push(y2);
        ffn.push(fc);
        norm3.push(n3);
    }
    let (normed, final_norm) = layer_norm_cached(&y, &w.final_norm, cfg.ln_eps, NormAxis::Features);
    let logits = normed.matmul(&w.w_out).add_row(&w.b_out);
    let cache = DecoderCache {
        inputs,
        self_attn,
        norm1,
        after_self,
        cross,
        norm2,
        after_cross,
        ffn,
        norm3,
        final_norm,
        normed,
    };
    Ok((logits, cache))
}

/// Returns `∂C` and accumulates decoder gradients.
fn decode_backward(
    prefix: &[usize],
    dlogits: &Mat,
    c: &Mat,
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    cache: &DecoderCache,
    g: &mut TransformerWeights,
) -> Mat {
    cache.normed.t_matmul_into(dlogits, &mut g.w_out);
    dlogits.col_sums_into(&mut g.b_out);
    let dnormed = dlogits.matmul_t(&w.w_out);
    let mut dy = layer_norm_backward(&dnormed, &w.final_norm, &cache.final_norm, &mut g.final_norm);
    let mut dc = c.zeros_like();
    for l in (0..w.decoder.len()).rev() {
        let (layer, gl) = (&w.decoder[l], &mut g.decoder[l]);
        let df = layer_norm_backward(&dy, &layer.norm3, &cache.norm3[l], &mut gl.norm3);
        let mut dy2 = dy;
        dy2.add_assign(&feed_forward_backward(&df, &cache.after_cross[l], &layer.ffn, &cache.ffn[l], &mut gl.ffn));
        let dr = layer_norm_backward(&dy2, &layer.norm2, &cache.norm2[l], &mut gl.norm2);
        let (dq, dkv) =
            multi_head_backward(&dr, &cache.after_self[l], c, &layer.cross_attn, &cache.cross[l], cfg.d_k, &mut gl.cross_attn);
        dc.add_assign(&dkv);
        let mut dy1 = dy2;
        dy1.add_assign(&dq);
        let ds = layer_norm_backward(&dy1, &layer.norm1, &cache.norm1[l], &mut gl.norm1);
        let y = &cache.inputs[l];
        let (dq, dkv) = multi_head_backward(&ds, y, y, &layer.self_attn, &cache.self_attn[l], cfg.d_k, &mut gl.self_attn);
        dy1.add_assign(&dq);
        dy1.add_assign(&dkv);
        dy = dy1;
    }
    embed_backward(prefix, &dy, g);
    dc
}

/// Next-token logits (length `output_size`) after `prefix`.
pub fn decode_step(
    prefix: &[usize],
    c: &Mat,
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
) -> Result<Vec<f64>> {
    if prefix.first() != Some(&BEGIN) {
        return Err(Error::Contract("decoder prefix must start with the begin token".into()));
    }
    let (logits, _) = decode_cached(prefix, c, w, cfg, vocab)?;
    Ok(logits.row(logits.rows() - 1).to_vec())
}

/// Logits at every decoder position for a teacher-forced input.
pub fn teacher_forced_logits(
    source: &[usize],
    decoder_input: &[usize],
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
) -> Result<Mat> {
    let c = encode(source, w, cfg, vocab)?;
    Ok(decode_cached(decoder_input, &c, w, cfg, vocab)?.0)
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Per-sequence teacher-forcing outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceLoss {
    /// Summed cross-entropy over the target positions.
    pub loss: f64,
    /// Positions whose argmax equals the target.
    pub correct: usize,
    pub tokens: usize,
}

/// Cross-entropy of `target[1..]` given `[source]` and `target[..len−1]`,
/// adding `scale ×` its gradient into `grads` when provided.
pub fn sequence_loss(
    source: &[usize],
    target: &[usize],
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    grads: Option<(&mut TransformerWeights, f64)>,
) -> Result<SequenceLoss> {
    if target.len() < 2 || target[0] != BEGIN {
        return Err(Error::Contract("target must start with begin and hold at least one token".into()));
    }
    let (input, labels) = (&target[..target.len() - 1], &target[1..]);
    let (c, enc_cache) = encode_cached(source, w, cfg, vocab)?;
    let (logits, dec_cache) = decode_cached(input, &c, w, cfg, vocab)?;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut dlogits = Mat::zeros(logits.rows(), logits.cols());
    for (i, &label) in labels.iter().enumerate() {
        if label >= vocab.output_size() {
            return Err(Error::Vocabulary(label));
        }
        let row = logits.row(i);
        let lp = log_softmax(row);
        loss -= lp[label];
        let argmax = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
        correct += usize::from(argmax == label);
        for (d, l) in dlogits.row_mut(i).iter_mut().zip(&lp) {
            *d = l.exp();
        }
        dlogits[(i, label)] -= 1.0;
    }
    if let Some((g, scale)) = grads {
        let dlogits = dlogits.scale(scale);
        let dc = decode_backward(input, &dlogits, &c, w, cfg, &dec_cache, g);
        encode_backward(source, dc, w, cfg, &enc_cache, g);
    }
    Ok(SequenceLoss { loss, correct, tokens: labels.len() })
}

/// Greedy decoding: the argmax azimuth bin on even slots, elevation bin on
/// odd slots, then the sequence must close with the end token.
pub fn greedy_decode(source: &[usize], w: &TransformerWeights, cfg: &TransformerConfig, vocab: &TokenVocab) -> Result<Vec<usize>> {
    let c = encode(source, w, cfg, vocab)?;
    let mut seq = vec![BEGIN];
    for slot in 0..ANGLE_SLOTS {
        let logits = decode_step(&seq, &c, w, cfg, vocab)?;
        let range = vocab.slot_range(slot);
        let best = range.clone().fold(range.start, |b, j| if logits[j] > logits[b] { j } else { b });
        seq.push(best);
    }
    let logits = decode_step(&seq, &c, w, cfg, vocab)?;
    let last = (0..logits.len()).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
    if last != super::vocab::END {
        return Err(Error::Truncation(seq.len()));
    }
    Ok(seq[1..].to_vec())
}
