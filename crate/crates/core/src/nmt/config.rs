use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which reconstructor, if any, sits on top of the encoder–decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReconstructorMode {
    None,
    /// One reconstructor per state sequence, each with its own parameters.
    Separate,
    /// One reconstructor attending to encoder and decoder states at once.
    Shared,
}

/// How the two attention models of the shared reconstructor interact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionVariant {
    Independent,
    /// The encoder-side context feeds the decoder-side attention.
    EncToDec,
    /// The decoder-side context feeds the encoder-side attention.
    DecToEnc,
}

macro_rules! string_enum {
    ($ty:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $s),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}; expected one of {}"),
                        s,
                        [$($s),+].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(ReconstructorMode { None => "none", Separate => "separate", Shared => "shared" });
string_enum!(AttentionVariant {
    Independent => "independent",
    EncToDec => "enc_to_dec",
    DecToEnc => "dec_to_enc",
});

pub const MAX_SENTENCE_LEN: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub emb: usize,
    pub hidden: usize,
    pub mode: ReconstructorMode,
    pub attention: AttentionVariant,
    pub joint_prediction: bool,
    /// Size of the dropped-pronoun word vocabulary, `<unk>` included.
    pub pronoun_vocab: usize,
    /// Half-width of the uniform initializer.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            src_vocab: 128,
            tgt_vocab: 128,
            emb: 64,
            hidden: 64,
            mode: ReconstructorMode::None,
            attention: AttentionVariant::Independent,
            joint_prediction: false,
            pronoun_vocab: 8,
            init_scale: 0.08,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("src_vocab", self.src_vocab),
            ("tgt_vocab", self.tgt_vocab),
            ("emb", self.emb),
            ("hidden", self.hidden),
            ("pronoun_vocab", self.pronoun_vocab),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model: {name} must be positive")));
        }
        if self.mode != ReconstructorMode::Shared {
            if self.attention != AttentionVariant::Independent {
                return Err(Error::Config(
                    "model: attention variants other than independent require mode=shared".into(),
                ));
            }
            if self.joint_prediction {
                return Err(Error::Config("model: joint_prediction requires mode=shared".into()));
            }
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config("model: init_scale must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` lines; the checkpoint digest is taken over these.
    pub fn canonical(&self) -> String {
        format!(
            "src_vocab={}\ntgt_vocab={}\nemb={}\nhidden={}\nmode={}\nattention={}\njoint_prediction={}\npronoun_vocab={}\n",
            self.src_vocab,
            self.tgt_vocab,
            self.emb,
            self.hidden,
            self.mode,
            self.attention,
            self.joint_prediction,
            self.pronoun_vocab
        )
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    pub fn reconstructs(&self) -> bool {
        self.mode != ReconstructorMode::None
    }

    pub fn with_mode(&self, mode: ReconstructorMode, attention: AttentionVariant, joint: bool) -> Self {
        ModelConfig {
            mode,
            attention,
            joint_prediction: joint,
            ..self.clone()
        }
    }
}
