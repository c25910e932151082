//! The angle map: a blockage classifier routing each UE location to one of
//! two encoder-decoder transformers that emit beam-alignment angle tokens.

pub mod classifier;
pub mod layers;
pub mod model;
pub mod tensor;
pub mod train;
pub mod vocab;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{split, AngleRecord, DatasetSplit, Region};
use crate::error::{Error, Result};
use crate::geometry::{BlockageFlag, Direction};
use classifier::BlockageClassifier;
use model::{greedy_decode, TransformerConfig, TransformerWeights};
use train::{EpochLoss, Example, Trainer};
use vocab::TokenVocab;

pub const CHECKPOINT_SCHEMA: &str = "ris-anglemap/checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleMapModel {
    pub config: TransformerConfig,
    pub vocab: TokenVocab,
    pub region: Region,
    pub classifier: BlockageClassifier,
    pub los_transformer: TransformerWeights,
    pub nlos_transformer: TransformerWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub blockage: BlockageFlag,
    /// The four angle tokens.
    pub tokens: Vec<usize>,
    /// Bin-centre directions: `(aod, aoa)` for LoS, `(ris_aod, ue_aoa)` for NLoS.
    pub angles: [Direction; 2],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AngleMapModel,
    pub history: Vec<EpochLoss>,
}

fn examples(records: &[AngleRecord], flag: BlockageFlag, vocab: &TokenVocab, region: &Region) -> Result<Vec<Example>> {
    records.iter().filter(|r| r.blockage == flag).map(|r| Example::from_record(r, vocab, region)).collect()
}

fn weighted(a: f64, na: usize, b: f64, nb: usize) -> f64 {
    if na + nb == 0 {
        0.0
    } else {
        (a * na as f64 + b * nb as f64) / (na + nb) as f64
    }
}

/// Splits 3:1:1 and trains on the training part.
pub fn train(
    records: &[AngleRecord],
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    region: &Region,
    seed: u64,
) -> Result<TrainOutcome> {
    train_on_split(&split(records, seed)?, cfg, vocab, region, seed)
}

/// Fits the classifier and both transformers; the loss history combines
/// the two transformers weighted by their sequence counts.
pub fn train_on_split(
    data: &DatasetSplit,
    cfg: &TransformerConfig,
    vocab: &TokenVocab,
    region: &Region,
    seed: u64,
) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Contract("training split is empty".into()));
    }
    let points: Vec<[f64; 2]> = data.train.iter().map(|r| r.ue_xy).collect();
    let labels: Vec<BlockageFlag> = data.train.iter().map(|r| r.blockage).collect();
    let classifier = BlockageClassifier::fit(&points, &labels)?;

    let los_train = examples(&data.train, BlockageFlag::Los, vocab, region)?;
    let nlos_train = examples(&data.train, BlockageFlag::Nlos, vocab, region)?;
    let los_val = examples(&data.validation, BlockageFlag::Los, vocab, region)?;
    let nlos_val = examples(&data.validation, BlockageFlag::Nlos, vocab, region)?;
    if los_train.is_empty() || nlos_train.is_empty() {
        return Err(Error::Contract("training split needs both LoS and NLoS records".into()));
    }

    let mut los = Trainer::new(cfg, vocab, seed.wrapping_mul(2).wrapping_add(1))?;
    let mut nlos = Trainer::new(cfg, vocab, seed.wrapping_mul(2).wrapping_add(2))?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let a = los.epoch(&los_train, &los_val)?;
        let b = nlos.epoch(&nlos_train, &nlos_val)?;
        let row = EpochLoss {
            epoch,
            train_loss: weighted(a.train_loss, los_train.len(), b.train_loss, nlos_train.len()),
            val_loss: weighted(a.val_loss, los_val.len(), b.val_loss, nlos_val.len()),
        };
        log::info!("epoch {epoch}: train {:.5} val {:.5}", row.train_loss, row.val_loss);
        history.push(row);
    }
    let model = AngleMapModel {
        config: *cfg,
        vocab: *vocab,
        region: *region,
        classifier,
        los_transformer: los.weights,
        nlos_transformer: nlos.weights,
    };
    Ok(TrainOutcome { model, history })
}

impl AngleMapModel {
    pub fn transformer(&self, flag: BlockageFlag) -> &TransformerWeights {
        match flag {
            BlockageFlag::Los => &self.los_transformer,
            BlockageFlag::Nlos => &self.nlos_transformer,
        }
    }

    /// Routes through the classifier, then greedily decodes four angle tokens.
    pub fn predict_one(&self, xy: [f64; 2]) -> Result<Prediction> {
        let source = self.vocab.tokenize_location(xy, &self.region)?;
        let blockage = self.classifier.classify(xy);
        let tokens = greedy_decode(&source, self.transformer(blockage), &self.config, &self.vocab)?;
        let angles = self.vocab.detokenize_angles(&tokens)?;
        Ok(Prediction { blockage, tokens, angles })
    }

    /// One prediction per location, in input order.
    pub fn predict(&self, locations: &[[f64; 2]]) -> Result<Vec<Prediction>> {
        locations.par_iter().map(|&xy| self.predict_one(xy)).collect()
    }

    /// Teacher-forced mean token loss of `records`, each scored by the
    /// transformer of its true class. Computed exactly as the validation
    /// column of the training history.
    pub fn mean_loss(&self, records: &[AngleRecord]) -> Result<f64> {
        let mut parts = [(0.0, 0usize); 2];
        for (part, flag) in parts.iter_mut().zip([BlockageFlag::Los, BlockageFlag::Nlos]) {
            let ex = examples(records, flag, &self.vocab, &self.region)?;
            *part = (train::evaluate_loss(self.transformer(flag), &self.config, &self.vocab, &ex)?.mean(), ex.len());
        }
        Ok(weighted(parts[0].0, parts[0].1, parts[1].0, parts[1].1))
    }

    /// Teacher-forced token accuracy of `records` under their true class.
    pub fn token_accuracy(&self, records: &[AngleRecord]) -> Result<f64> {
        let mut total = train::LossTotals::default();
        for flag in [BlockageFlag::Los, BlockageFlag::Nlos] {
            let ex = examples(records, flag, &self.vocab, &self.region)?;
            let t = train::evaluate_loss(self.transformer(flag), &self.config, &self.vocab, &ex)?;
            total.correct += t.correct;
            total.tokens += t.tokens;
        }
        Ok(total.token_accuracy())
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        self.vocab.validate()?;
        self.los_transformer.check_shapes(&self.config, &self.vocab)?;
        self.nlos_transformer.check_shapes(&self.config, &self.vocab)?;
        if !(self.los_transformer.is_finite() && self.nlos_transformer.is_finite()) {
            return Err(Error::Compatibility("checkpoint holds non-finite weights".into()));
        }
        Ok(())
    }

    /// Serialises config, vocabulary and all weights as one JSON document.
    /// Floats round-trip exactly, so save → load → save is byte-identical.
    pub fn to_checkpoint(&self, config_hash: &str) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            schema: &'a str,
            config_hash: &'a str,
            model: &'a AngleMapModel,
        }
        Ok(serde_json::to_string(&Out { schema: CHECKPOINT_SCHEMA, config_hash, model: self })?)
    }

    /// Returns the model and the config hash recorded at save time.
    pub fn from_checkpoint(text: &str) -> Result<(Self, String)> {
        #[derive(Deserialize)]
        struct In {
            schema: String,
            config_hash: String,
            model: AngleMapModel,
        }
        let parsed: In = serde_json::from_str(text)?;
        if parsed.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Compatibility(format!("unsupported checkpoint schema {}", parsed.schema)));
        }
        parsed.model.check()?;
        Ok((parsed.model, parsed.config_hash))
    }
}
