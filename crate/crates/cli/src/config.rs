use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ris_anglemap::anglemap::model::TransformerConfig;
use ris_anglemap::anglemap::vocab::TokenVocab;
use ris_anglemap::arrays::{wavelength_for, UpaConfig};
use ris_anglemap::channel::ArraySet;
use ris_anglemap::dataset::{short_hash, SyntheticScene};
use ris_anglemap::experiment::{CodebookSize, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    /// UE placement jitter.
    pub data: u64,
    /// Split, initialisation and batch order.
    pub train: u64,
    /// Held-out evaluation set of `compare`.
    pub eval: u64,
    /// Channel phases and UE grouping.
    pub channel: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scene: SyntheticScene,
    /// JSON file holding a scene; replaces `scene` when set.
    pub scene_file: Option<PathBuf>,
    pub carrier_hz: f64,
    /// `[n_x, n_z]` of each array.
    pub mbs_array: [usize; 2],
    pub ue_array: [usize; 2],
    pub ris_array: [usize; 2],
    /// Element spacing of every array, in wavelengths.
    pub element_spacing_wavelengths: f64,
    pub total_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub group_size: usize,
    pub dense_codebook: CodebookSize,
    pub coarse_codebook: CodebookSize,
    pub refine: usize,
    pub transformer: TransformerConfig,
    pub vocab: TokenVocab,
    pub dataset_size: usize,
    /// Placement jitter in half-cells; 0 puts every UE on its cell centre.
    pub jitter: f64,
    pub eval_size: usize,
    /// Dataset sizes swept by `compare`.
    pub sizes: Vec<usize>,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        let system = SystemConfig::default();
        Self {
            scene: SyntheticScene::default(),
            scene_file: None,
            carrier_hz: 28e9,
            mbs_array: [4, 4],
            ue_array: [2, 2],
            ris_array: [4, 4],
            element_spacing_wavelengths: 0.5,
            total_power_dbm: system.total_power_dbm,
            noise_power_dbm: system.noise_power_dbm,
            group_size: system.group_size,
            dense_codebook: system.dense_codebook,
            coarse_codebook: system.coarse_codebook,
            refine: system.refine,
            transformer: TransformerConfig::default(),
            vocab: TokenVocab::default(),
            dataset_size: 2000,
            jitter: 1.0,
            eval_size: 400,
            sizes: vec![2000, 5000, 10000, 20000],
            seeds: Seeds { data: 1, train: 2, eval: 3, channel: 4 },
        }
    }
}

/// Deep-merges `patch` into `base`, rejecting keys `base` does not have.
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => bail!("unknown config key `{key}`"),
                }
            }
        }
        (slot, v) => *slot = v,
    }
    Ok(())
}

fn snake(flag: &str) -> String {
    flag.replace('-', "_")
}

impl RunConfig {
    pub fn system(&self) -> SystemConfig {
        let wl = wavelength_for(self.carrier_hz);
        let spacing = self.element_spacing_wavelengths * wl;
        let upa = |a: [usize; 2]| UpaConfig { n_x: a[0], n_z: a[1], element_spacing: spacing, wavelength: wl };
        SystemConfig {
            arrays: ArraySet { mbs: upa(self.mbs_array), ue: upa(self.ue_array), ris: upa(self.ris_array) },
            total_power_dbm: self.total_power_dbm,
            noise_power_dbm: self.noise_power_dbm,
            group_size: self.group_size,
            dense_codebook: self.dense_codebook,
            coarse_codebook: self.coarse_codebook,
            refine: self.refine,
            seed: self.seeds.channel,
        }
    }

    /// Hash of the effective configuration, written into every output.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_string(self).expect("config serialises"))
    }

    /// Defaults, then the optional JSON file, then `--kebab-case` overrides
    /// whose dotted paths mirror the config keys.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            merge(&mut value, serde_json::from_str(&text).context("parsing config JSON")?, "")?;
        }
        for (flag, raw) in overrides {
            let mut patch: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            for key in flag.rsplit('.') {
                patch = Value::Object([(snake(key), patch)].into_iter().collect());
            }
            merge(&mut value, patch, "")?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value).context("invalid configuration")?;
        if let Some(path) = &cfg.scene_file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
            cfg.scene = serde_json::from_str(&text).context("parsing scene JSON")?;
        }
        cfg.transformer.validate()?;
        cfg.vocab.validate()?;
        cfg.system().validate()?;
        Ok(cfg)
    }

    /// True when `--flag` names a config key.
    pub fn is_key(flag: &str) -> bool {
        let mut value = serde_json::to_value(RunConfig::default()).expect("config serialises");
        for key in flag.split('.') {
            match value.get_mut(snake(key)) {
                Some(v) => value = v.take(),
                None => return false,
            }
        }
        true
    }
}
