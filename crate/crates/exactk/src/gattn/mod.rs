//! The GAttN policy: input embedding, multi-head self-attention
//! encoder, and a recurrent pointer decoder with glimpse, feasibility
//! masking, sampling, and beam search.

mod decoder;
mod encoder;
mod model;

pub use decoder::{
    advance_state, beam_search, card_log_probs, decode_step, sample_card, DecodeState, MASK_LOGIT,
};
pub(crate) use decoder::sample_card_on;
pub use encoder::{embed_input, encode, encode_sample, AttentionRecord};
pub use model::{FeatureTable, PolicyModel};

use crate::error::{Error, Result};
use crate::num::Manifest;

/// How raw item/user feature vectors are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMode {
    /// Trainable id-embedding tables inside the model.
    Ids {
        n_items: usize,
        n_users: usize,
        embed_dim: usize,
    },
    /// Fixed dense feature vectors supplied per sample (oracle data).
    Dense { d_item: usize, d_user: usize },
}

impl FeatureMode {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMode::Ids { embed_dim, .. } => 2 * embed_dim,
            FeatureMode::Dense { d_item, d_user } => d_item + d_user,
        }
    }

    pub fn item_dim(&self) -> usize {
        match self {
            FeatureMode::Ids { embed_dim, .. } => *embed_dim,
            FeatureMode::Dense { d_item, .. } => *d_item,
        }
    }

    pub fn user_dim(&self) -> usize {
        match self {
            FeatureMode::Ids { embed_dim, .. } => *embed_dim,
            FeatureMode::Dense { d_user, .. } => *d_user,
        }
    }
}

/// Policy hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Node input representation dim (output of the input projection).
    pub d_x: usize,
    /// Node embedding dim through the encoder.
    pub d_h: usize,
    /// Per-head attention dim.
    pub d_k: usize,
    /// Attention head count M.
    pub heads: usize,
    /// Encoder self-attention layers and decoder recurrent layers L.
    pub layers: usize,
    /// Card size.
    pub k: usize,
    /// Candidate count.
    pub n: usize,
    pub beam_size: usize,
    pub rnn_units: usize,
    pub features: FeatureMode,
}

impl ModelConfig {
    /// Defaults matching the reference hyperparameters: two 2-head
    /// attention layers, 32-unit recurrent cells, beam size 3.
    pub fn defaults(k: usize, n: usize, features: FeatureMode) -> Self {
        ModelConfig {
            d_x: 32,
            d_h: 32,
            d_k: 16,
            heads: 2,
            layers: 2,
            k,
            n,
            beam_size: 3,
            rnn_units: 32,
            features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_x", self.d_x),
            ("d_h", self.d_h),
            ("d_k", self.d_k),
            ("heads", self.heads),
            ("layers", self.layers),
            ("k", self.k),
            ("n", self.n),
            ("beam_size", self.beam_size),
            ("rnn_units", self.rnn_units),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model config {name} must be positive")));
            }
        }
        if self.k > self.n {
            return Err(Error::Config(format!(
                "K={} must not exceed N={}",
                self.k, self.n
            )));
        }
        Ok(())
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = vec![
            ("d_x".into(), self.d_x.to_string()),
            ("d_h".into(), self.d_h.to_string()),
            ("d_k".into(), self.d_k.to_string()),
            ("heads".into(), self.heads.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("k".into(), self.k.to_string()),
            ("n".into(), self.n.to_string()),
            ("beam_size".into(), self.beam_size.to_string()),
            ("rnn_units".into(), self.rnn_units.to_string()),
        ];
        match &self.features {
            FeatureMode::Ids { n_items, n_users, embed_dim } => {
                m.push(("features".into(), "ids".into()));
                m.push(("n_items".into(), n_items.to_string()));
                m.push(("n_users".into(), n_users.to_string()));
                m.push(("embed_dim".into(), embed_dim.to_string()));
            }
            FeatureMode::Dense { d_item, d_user } => {
                m.push(("features".into(), "dense".into()));
                m.push(("d_item".into(), d_item.to_string()));
                m.push(("d_user".into(), d_user.to_string()));
            }
        }
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let get = |key: &str| -> Result<usize> {
            crate::num::manifest_get(m, key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("manifest missing {key}")))
        };
        let features = match crate::num::manifest_get(m, "features") {
            Some("ids") => FeatureMode::Ids {
                n_items: get("n_items")?,
                n_users: get("n_users")?,
                embed_dim: get("embed_dim")?,
            },
            Some("dense") => FeatureMode::Dense {
                d_item: get("d_item")?,
                d_user: get("d_user")?,
            },
            other => {
                return Err(Error::Checkpoint(format!(
                    "bad feature mode {other:?} in manifest"
                )))
            }
        };
        let config = ModelConfig {
            d_x: get("d_x")?,
            d_h: get("d_h")?,
            d_k: get("d_k")?,
            heads: get("heads")?,
            layers: get("layers")?,
            k: get("k")?,
            n: get("n")?,
            beam_size: get("beam_size")?,
            rnn_units: get("rnn_units")?,
            features,
        };
        config.validate()?;
        Ok(config)
    }
}
