//! Mini-batch SGD with deterministic parallel gradient reduction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{sequence_loss, TransformerConfig, TransformerWeights};
use super::vocab::{TokenVocab, ANGLE_SLOTS};
use crate::dataset::{AngleRecord, Region};
use crate::error::{Error, Result};

/// Sequences per gradient work unit. Fixed so the reduction order, and
/// hence the trained weights, do not depend on the worker count.
const CHUNK: usize = 8;

/// One tokenized training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub source: [usize; 2],
    pub target: [usize; ANGLE_SLOTS + 2],
}

impl Example {
    pub fn from_record(record: &AngleRecord, vocab: &TokenVocab, region: &Region) -> Result<Self> {
        Ok(Self {
            source: vocab.tokenize_location(record.ue_xy, region)?,
            target: vocab.tokenize_angles(&record.target_angles),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Summed loss statistics over a set of sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTotals {
    pub loss: f64,
    pub correct: usize,
    pub tokens: usize,
}

impl LossTotals {
    pub fn mean(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.loss / self.tokens as f64
        }
    }

    pub fn token_accuracy(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.correct as f64 / self.tokens as f64
        }
    }

    fn add(mut self, other: LossTotals) -> Self {
        self.loss += other.loss;
        self.correct += other.correct;
        self.tokens += other.tokens;
        self
    }
}

/// Teacher-forced loss over `examples`, evaluated in parallel chunks and
/// summed in chunk order.
pub fn evaluate_loss(
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    examples: &[Example],
) -> Result<LossTotals> {
    let parts: Vec<Result<LossTotals>> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut t = LossTotals::default();
            for ex in chunk {
                let s = sequence_loss(&ex.source, &ex.target, w, cfg, vocab, None)?;
                t = t.add(LossTotals { loss: s.loss, correct: s.correct, tokens: s.tokens });
            }
            Ok(t)
        })
        .collect();
    parts.into_iter().try_fold(LossTotals::default(), |acc, p| Ok(acc.add(p?)))
}

/// Summed gradient of the batch cross-entropy and its loss totals.
pub fn batch_gradient(
    w: &TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    batch: &[&Example],
) -> Result<(TransformerWeights, LossTotals)> {
    let parts: Vec<Result<(TransformerWeights, LossTotals)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = w.zeros_like();
            let mut t = LossTotals::default();
            for ex in chunk {
                let s = sequence_loss(&ex.source, &ex.target, w, cfg, vocab, Some((&mut g, 1.0)))?;
                t = t.add(LossTotals { loss: s.loss, correct: s.correct, tokens: s.tokens });
            }
            Ok((g, t))
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut grad, mut totals) = iter.next().ok_or_else(|| Error::Contract("empty batch".into()))??;
    for part in iter {
        let (g, t) = part?;
        grad.add_assign(&g);
        totals = totals.add(t);
    }
    Ok((grad, totals))
}

/// Plain SGD step on the token-mean loss.
fn apply_update(w: &mut TransformerWeights, grad: &TransformerWeights, lr: f64, tokens: usize) {
    let step = -lr / tokens as f64;
    for (p, g) in w.tensors_mut().into_iter().zip(grad.tensors()) {
        p.axpy(step, g);
    }
}

/// Runs one epoch over `train` in a seeded order; returns the mean
/// training loss seen during the epoch.
pub fn train_epoch(
    w: &mut TransformerWeights,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    train: &[Example],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut order: Vec<&Example> = train.iter().collect();
    order.shuffle(rng);
    let mut totals = LossTotals::default();
    for batch in order.chunks(cfg.batch_size) {
        let (grad, t) = batch_gradient(w, cfg, vocab, batch)?;
        apply_update(w, &grad, cfg.lr, t.tokens);
        totals = totals.add(t);
    }
    if !w.is_finite() {
        return Err(Error::Domain("training diverged to non-finite weights".into()));
    }
    Ok(totals.mean())
}

/// Trains one transformer from a seeded initialisation.
pub fn train_transformer(
    train: &[Example],
    validation: &[Example],
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    seed: u64,
) -> Result<(TransformerWeights, Vec<EpochLoss>)> {
    let mut trainer = Trainer::new(cfg, vocab, seed)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        history.push(trainer.epoch(train, validation)?);
    }
    Ok((trainer.weights, history))
}

/// Single owner of a transformer's weights during training.
pub struct Trainer {
    pub weights: TransformerWeights,
    cfg: TransformerConfig,
    vocab: TokenVocab,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: &TransformerConfig, vocab: &TokenVocab, seed: u64) -> Result<Self> {
        cfg.validate()?;
        vocab.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = TransformerWeights::init(cfg, vocab, &mut rng);
        Ok(Self { weights, cfg: *cfg, vocab: *vocab, rng, epoch: 0 })
    }

    pub fn epoch(&mut self, train: &[Example], validation: &[Example]) -> Result<EpochLoss> {
        if train.is_empty() {
            return Err(Error::Contract("training split is empty".into()));
        }
        let train_loss = train_epoch(&mut self.weights, &self.cfg, &self.vocab, train, &mut self.rng)?;
        let val_loss = evaluate_loss(&self.weights, &self.cfg, &self.vocab, validation)?.mean();
        let out = EpochLoss { epoch: self.epoch, train_loss, val_loss };
        self.epoch += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anglemap::model::{greedy_decode, teacher_forced_logits};
    use crate::dataset::SyntheticScene;

    fn tiny() -> TransformerConfig {
        TransformerConfig { layers: 2, heads: 2, d_e: 8, d_k: 4, ffn_width: 8, epochs: 100, batch_size: 4, ..Default::default() }
    }

    fn small_vocab() -> TokenVocab {
        TokenVocab { coord_bins_x: 16, coord_bins_y: 16, azimuth_bins: 32, elevation_bins: 8 }
    }

    fn examples(n: usize, seed: u64, vocab: &TokenVocab) -> Vec<Example> {
        let s = SyntheticScene::default();
        let g = s.generate(n, 1.0, seed).unwrap();
        g.records.iter().map(|r| Example::from_record(r, vocab, &s.region()).unwrap()).collect()
    }

    #[test]
    fn initial_loss_near_uniform_entropy() {
        let vocab = TokenVocab::default();
        let cfg = TransformerConfig { layers: 2, heads: 4, d_e: 32, d_k: 8, ffn_width: 64, ..Default::default() };
        let t = Trainer::new(&cfg, &vocab, 1).unwrap();
        let ex = examples(64, 2, &vocab);
        let loss = evaluate_loss(&t.weights, &cfg, &vocab, &ex).unwrap().mean();
        let uniform = (vocab.output_size() as f64).ln();
        assert!((loss - uniform).abs() < 0.5, "initial loss {loss} vs ln V {uniform}");
    }

    #[test]
    fn single_example_memorised() {
        let vocab = TokenVocab::default();
        // at lr 0.1 the loss overshoots for a few epochs before settling
        let cfg = TransformerConfig { layers: 1, heads: 4, d_e: 16, d_k: 4, ffn_width: 16, batch_size: 1, lr: 0.04, ..tiny() };
        let ex = examples(1, 3, &vocab);
        let mut trainer = Trainer::new(&cfg, &vocab, 4).unwrap();
        let mut losses = vec![];
        for _ in 0..100 {
            losses.push(trainer.epoch(&ex, &ex).unwrap().val_loss);
        }
        assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12), "losses not monotone: {losses:?}");
        assert!(*losses.last().unwrap() < 0.05, "final loss {}", losses.last().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let vocab = small_vocab();
        let cfg = TransformerConfig { epochs: 2, batch_size: 8, ..tiny() };
        let ex = examples(40, 5, &vocab);
        let (a, ha) = train_transformer(&ex, &ex[..8], &cfg, &vocab, 9).unwrap();
        let (b, hb) = train_transformer(&ex, &ex[..8], &cfg, &vocab, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let (c, _) = pool.install(|| train_transformer(&ex, &ex[..8], &cfg, &vocab, 9).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn overfits_small_set() {
        let vocab = small_vocab();
        let cfg = TransformerConfig { epochs: 200, ..tiny() };
        let ex = examples(12, 6, &vocab);
        let (w, history) = train_transformer(&ex, &ex, &cfg, &vocab, 7).unwrap();
        assert_eq!(history.len(), cfg.epochs);
        assert!(history.last().unwrap().train_loss < history[0].train_loss);
        for e in &ex {
            assert_eq!(greedy_decode(&e.source, &w, &cfg, &vocab).unwrap(), e.target[1..5].to_vec());
        }
        let logits = teacher_forced_logits(&ex[0].source, &ex[0].target[..5], &w, &cfg, &vocab).unwrap();
        assert_eq!(logits.shape(), (5, vocab.output_size()));
    }
}
