//! `key = value` run configuration with `#` comments. Every key is known in
//! advance; anything else is an error.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use dpnmt::corpus::GeneratorConfig;
use dpnmt::data::SourceView;
use dpnmt::decoding::RerankConfig;
use dpnmt::dp::AuxTrainConfig;
use dpnmt::nmt::{AttentionVariant, ModelConfig, ReconstructorMode};
use dpnmt::training::TrainingConfig;
use dpnmt::{Error, Result};

/// Everything a command may consume, with defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub generator: GeneratorConfig,
    /// Architecture; vocabulary sizes are filled in from the data.
    pub model: ModelConfig,
    pub source_view: SourceView,
    pub vocab_size: usize,
    pub training: TrainingConfig,
    pub aux: AuxTrainConfig,
    pub beam: usize,
    pub rerank: RerankConfig,
    pub tune_lambda: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            generator: GeneratorConfig::default(),
            model: ModelConfig::default(),
            source_view: SourceView::DpMarkers,
            vocab_size: 128,
            training: TrainingConfig::default(),
            aux: AuxTrainConfig::default(),
            beam: 10,
            rerank: RerankConfig::default(),
            tune_lambda: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// All accepted keys, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "gen.nouns",
    "gen.transitive_verbs",
    "gen.intransitive_verbs",
    "gen.adjectives",
    "gen.min_len",
    "gen.max_len",
    "gen.p_drop",
    "gen.train_size",
    "gen.dev_size",
    "gen.test_size",
    "model.emb",
    "model.hidden",
    "model.mode",
    "model.attention",
    "model.joint_prediction",
    "model.init_scale",
    "model.source_view",
    "model.vocab_size",
    "train.lr",
    "train.batch_size",
    "train.max_epochs",
    "train.max_steps",
    "train.clip_norm",
    "train.checkpoint_every",
    "train.patience",
    "train.eval_every",
    "aux.emb",
    "aux.hidden",
    "aux.epochs",
    "aux.batch_size",
    "aux.lr",
    "decode.beam",
    "decode.lambda",
    "decode.mu",
    "decode.normalize_reconstruction",
    "decode.tune_lambda",
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let g = &mut self.generator;
        let m = &mut self.model;
        let t = &mut self.training;
        let a = &mut self.aux;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "gen.nouns" => g.nouns = parse(key, v)?,
            "gen.transitive_verbs" => g.transitive_verbs = parse(key, v)?,
            "gen.intransitive_verbs" => g.intransitive_verbs = parse(key, v)?,
            "gen.adjectives" => g.adjectives = parse(key, v)?,
            "gen.min_len" => g.min_len = parse(key, v)?,
            "gen.max_len" => g.max_len = parse(key, v)?,
            "gen.p_drop" => g.p_drop = parse(key, v)?,
            "gen.train_size" => g.train_size = parse(key, v)?,
            "gen.dev_size" => g.dev_size = parse(key, v)?,
            "gen.test_size" => g.test_size = parse(key, v)?,
            "model.emb" => m.emb = parse(key, v)?,
            "model.hidden" => m.hidden = parse(key, v)?,
            "model.mode" => m.mode = v.parse()?,
            "model.attention" => m.attention = v.parse()?,
            "model.joint_prediction" => m.joint_prediction = parse_bool(key, v)?,
            "model.init_scale" => m.init_scale = parse(key, v)?,
            "model.source_view" => self.source_view = SourceView::parse(v)?,
            "model.vocab_size" => self.vocab_size = parse(key, v)?,
            "train.lr" => t.lr = parse(key, v)?,
            "train.batch_size" => t.batch_size = parse(key, v)?,
            "train.max_epochs" => t.max_epochs = parse(key, v)?,
            "train.max_steps" => t.max_steps = parse(key, v)?,
            "train.clip_norm" => t.clip_norm = parse(key, v)?,
            "train.checkpoint_every" => t.checkpoint_every = parse(key, v)?,
            "train.patience" => t.patience = parse(key, v)?,
            "train.eval_every" => t.eval_every = parse(key, v)?,
            "aux.emb" => a.emb = parse(key, v)?,
            "aux.hidden" => a.hidden = parse(key, v)?,
            "aux.epochs" => a.epochs = parse(key, v)?,
            "aux.batch_size" => a.batch_size = parse(key, v)?,
            "aux.lr" => a.lr = parse(key, v)?,
            "decode.beam" => self.beam = parse(key, v)?,
            "decode.lambda" => self.rerank.lambda = parse(key, v)?,
            "decode.mu" => self.rerank.mu = parse(key, v)?,
            "decode.normalize_reconstruction" => self.rerank.normalize_reconstruction = parse_bool(key, v)?,
            "decode.tune_lambda" => self.tune_lambda = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let g = &self.generator;
        let m = &self.model;
        let t = &self.training;
        let a = &self.aux;
        match key {
            "seed" => self.seed.to_string(),
            "gen.nouns" => g.nouns.to_string(),
            "gen.transitive_verbs" => g.transitive_verbs.to_string(),
            "gen.intransitive_verbs" => g.intransitive_verbs.to_string(),
            "gen.adjectives" => g.adjectives.to_string(),
            "gen.min_len" => g.min_len.to_string(),
            "gen.max_len" => g.max_len.to_string(),
            "gen.p_drop" => g.p_drop.to_string(),
            "gen.train_size" => g.train_size.to_string(),
            "gen.dev_size" => g.dev_size.to_string(),
            "gen.test_size" => g.test_size.to_string(),
            "model.emb" => m.emb.to_string(),
            "model.hidden" => m.hidden.to_string(),
            "model.mode" => m.mode.to_string(),
            "model.attention" => m.attention.to_string(),
            "model.joint_prediction" => m.joint_prediction.to_string(),
            "model.init_scale" => m.init_scale.to_string(),
            "model.source_view" => self.source_view.as_str().to_string(),
            "model.vocab_size" => self.vocab_size.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.max_epochs" => t.max_epochs.to_string(),
            "train.max_steps" => t.max_steps.to_string(),
            "train.clip_norm" => t.clip_norm.to_string(),
            "train.checkpoint_every" => t.checkpoint_every.to_string(),
            "train.patience" => t.patience.to_string(),
            "train.eval_every" => t.eval_every.to_string(),
            "aux.emb" => a.emb.to_string(),
            "aux.hidden" => a.hidden.to_string(),
            "aux.epochs" => a.epochs.to_string(),
            "aux.batch_size" => a.batch_size.to_string(),
            "aux.lr" => a.lr.to_string(),
            "decode.beam" => self.beam.to_string(),
            "decode.lambda" => self.rerank.lambda.to_string(),
            "decode.mu" => self.rerank.mu.to_string(),
            "decode.normalize_reconstruction" => self.rerank.normalize_reconstruction.to_string(),
            "decode.tune_lambda" => self.tune_lambda.to_string(),
            _ => unreachable!("KEYS lists every key"),
        }
    }

    /// Applies `key = value` lines. Duplicate keys within one text are errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            // Config errors (not parse errors) so they map to the usage exit code.
            let err = |message: String| Error::Config(format!("{origin}:{}: {message}", n + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), n + 1) {
                return Err(err(format!("{key} already set on line {first}")));
            }
            self.set(key, value).map_err(|e| match e {
                Error::Config(m) => err(m),
                other => err(other.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut c = RunConfig::default();
        c.apply_text(&text, &path.display().to_string())?;
        Ok(c)
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Every key, one `key = value` line each; `apply_text` reads it back.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.training.validate()?;
        let probe = ModelConfig {
            src_vocab: 1,
            tgt_vocab: 1,
            pronoun_vocab: 1,
            ..self.model.clone()
        };
        probe.validate()?;
        if self.vocab_size < 6 {
            return Err(Error::Config("model.vocab_size must be at least 6".into()));
        }
        if self.beam == 0 {
            return Err(Error::Config("decode.beam must be positive".into()));
        }
        if !(self.rerank.lambda >= 0.0 && self.rerank.mu >= 0.0) {
            return Err(Error::Config("decode.lambda and decode.mu must be non-negative".into()));
        }
        if self.aux.emb == 0 || self.aux.hidden == 0 || self.aux.epochs == 0 || self.aux.batch_size == 0 {
            return Err(Error::Config("aux sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn mode(&self) -> ReconstructorMode {
        self.model.mode
    }

    pub fn attention(&self) -> AttentionVariant {
        self.model.attention
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nmodel.mode = shared  # trailing\nmodel.attention=enc_to_dec\n\nseed = 9\n", "t")
            .unwrap();
        assert_eq!(c.model.mode, ReconstructorMode::Shared);
        assert_eq!(c.seed, 9);
        c.apply_overrides(&["train.lr=0.01", "model.joint_prediction = true"]).unwrap();
        assert_eq!(c.training.lr, 0.01);
        assert!(c.model.joint_prediction);
        c.validate().unwrap();

        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), "t").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let mut c = RunConfig::default();
        let e = c.apply_text("model.hiden = 3\n", "cfg").unwrap_err().to_string();
        assert!(e.contains("cfg") && e.contains("hiden"), "{e}");
        assert!(c.apply_text("seed = 1\nseed = 2\n", "cfg").is_err());
        assert!(c.apply_text("seed 1\n", "cfg").is_err());
        assert!(c.apply_text("seed = x\n", "cfg").is_err());
        assert!(c.apply_overrides(&["nokey"]).is_err());
        let mut bad = RunConfig::default();
        bad.apply_text("model.joint_prediction = true\n", "cfg").unwrap();
        assert!(bad.validate().is_err());
    }
}
