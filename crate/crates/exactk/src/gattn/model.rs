use std::collections::BTreeMap;
use std::path::Path;

use crate::data::OracleWorld;
use crate::error::{Error, Result};
use crate::num::{read_checkpoint, write_checkpoint, ParamId};
use crate::rng::Rng;
use crate::{ParamStore, Tensor};

use super::{FeatureMode, ModelConfig};

/// Dense per-id feature vectors for the policy and reward models when
/// the data carries real-valued features instead of bare ids.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub items: BTreeMap<u32, Vec<f64>>,
    pub users: BTreeMap<u32, Vec<f64>>,
    pub d_item: usize,
    pub d_user: usize,
}

impl FeatureTable {
    /// Item features are the world's latent item vectors; user features are
    /// observed in their own basis, rotated 45 degrees in each consecutive
    /// coordinate plane relative to the item basis. The rotation is linear
    /// and fixed, so any model with a full input projection can align the
    /// two bases, while models restricted to componentwise interactions
    /// cannot.
    pub fn from_world(world: &OracleWorld) -> Self {
        let rotate = |v: &Vec<f64>| -> Vec<f64> {
            let c = std::f64::consts::FRAC_1_SQRT_2;
            let mut out = v.clone();
            for pair in out.chunks_mut(2) {
                if let [a, b] = pair {
                    let (x, y) = (*a, *b);
                    *a = c * (x - y);
                    *b = c * (x + y);
                }
            }
            out
        };
        FeatureTable {
            items: world
                .item_vecs
                .iter()
                .enumerate()
                .map(|(i, v)| (i as u32, v.clone()))
                .collect(),
            users: world
                .user_vecs
                .iter()
                .enumerate()
                .map(|(i, v)| (i as u32, rotate(v)))
                .collect(),
            d_item: world.dim,
            d_user: world.dim,
        }
    }

    pub fn item(&self, id: u32) -> &[f64] {
        self.items
            .get(&id)
            .unwrap_or_else(|| panic!("no feature vector for item {id}"))
    }

    pub fn user(&self, id: u32) -> &[f64] {
        self.users
            .get(&id)
            .unwrap_or_else(|| panic!("no feature vector for user {id}"))
    }
}

/// All encoder/decoder parameters plus hyperparameters.
pub struct PolicyModel {
    pub config: ModelConfig,
    pub store: ParamStore,
}

impl PolicyModel {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let d_in = config.features.input_dim();
        let (d_x, d_h, d_k, ru) = (config.d_x, config.d_h, config.d_k, config.rnn_units);

        if let FeatureMode::Ids { n_items, n_users, embed_dim } = config.features {
            store.add_glorot("item_emb", &[n_items, embed_dim], rng);
            store.add_glorot("user_emb", &[n_users, embed_dim], rng);
        }
        store.add_glorot("input.w", &[d_in, d_x], rng);
        store.add_zeros("input.b", &[d_x]);
        store.add_glorot("enc.w", &[d_x, d_h], rng);
        store.add_zeros("enc.b", &[d_h]);
        for l in 0..config.layers {
            for m in 0..config.heads {
                store.add_glorot(&format!("enc{l}.head{m}.w"), &[d_h, d_k], rng);
            }
            store.add_glorot(&format!("enc{l}.wo"), &[config.heads * d_k, d_h], rng);
            store.add_const(&format!("enc{l}.ln1.g"), &[d_h], 1.0);
            store.add_zeros(&format!("enc{l}.ln1.b"), &[d_h]);
            store.add_glorot(&format!("enc{l}.ff.w1"), &[d_h, d_h], rng);
            store.add_zeros(&format!("enc{l}.ff.b1"), &[d_h]);
            store.add_glorot(&format!("enc{l}.ff.w2"), &[d_h, d_h], rng);
            store.add_zeros(&format!("enc{l}.ff.b2"), &[d_h]);
            store.add_const(&format!("enc{l}.ln2.g"), &[d_h], 1.0);
            store.add_zeros(&format!("enc{l}.ln2.b"), &[d_h]);
        }
        for l in 0..config.layers {
            let in_dim = if l == 0 { d_h } else { ru };
            store.add_glorot(&format!("dec{l}.w_ih"), &[in_dim, 4 * ru], rng);
            store.add_glorot(&format!("dec{l}.w_hh"), &[ru, 4 * ru], rng);
            store.add_zeros(&format!("dec{l}.b"), &[4 * ru]);
        }
        // attention dims for glimpse and pointer follow the recurrent width
        store.add_glorot("glimpse.w_d", &[ru, ru], rng);
        store.add_glorot("glimpse.w_h", &[d_h, ru], rng);
        store.add_glorot("glimpse.v", &[ru], rng);
        store.add_glorot("pointer.w_d", &[ru + d_h, ru], rng);
        store.add_glorot("pointer.w_h", &[d_h, ru], rng);
        store.add_glorot("pointer.v", &[ru], rng);

        Ok(PolicyModel { config, store })
    }

    pub(crate) fn p(&self, name: &str) -> ParamId {
        self.store
            .id(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
    }

    /// Fill every parameter with a constant; test helper for uniform-
    /// distribution edge cases.
    pub fn set_all(&mut self, v: f64) {
        for id in self.store.ids().collect::<Vec<_>>() {
            self.store.value_mut(id).fill(v);
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut manifest = self.config.to_manifest();
        manifest.insert(0, ("kind".into(), "policy".into()));
        write_checkpoint(path, &self.store, &manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (records, manifest) = read_checkpoint::<f64>(path)?;
        if crate::num::manifest_get(&manifest, "kind") != Some("policy") {
            return Err(Error::Checkpoint(format!(
                "{} is not a policy checkpoint",
                path.display()
            )));
        }
        let config = ModelConfig::from_manifest(&manifest)?;
        let mut model = PolicyModel::new(config, &mut crate::rng::seeded(0))?;
        model.store.load_values(&records)?;
        Ok(model)
    }

    /// Raw item feature vector as a tape constant or embedding row.
    pub(crate) fn item_features(
        &self,
        tape: &mut crate::Tape,
        features: Option<&FeatureTable>,
        item_id: u32,
    ) -> crate::num::Var {
        match &self.config.features {
            FeatureMode::Ids { .. } => {
                let table = tape.param(&self.store, self.p("item_emb"));
                tape.row(table, item_id as usize)
            }
            FeatureMode::Dense { d_item, .. } => {
                let f = features.expect("dense feature mode requires a feature table");
                let v = f.item(item_id);
                assert_eq!(v.len(), *d_item, "item feature dim mismatch");
                tape.constant(Tensor::vector(v.to_vec()))
            }
        }
    }

    pub(crate) fn user_features(
        &self,
        tape: &mut crate::Tape,
        features: Option<&FeatureTable>,
        user_id: u32,
    ) -> crate::num::Var {
        match &self.config.features {
            FeatureMode::Ids { .. } => {
                let table = tape.param(&self.store, self.p("user_emb"));
                tape.row(table, user_id as usize)
            }
            FeatureMode::Dense { d_user, .. } => {
                let f = features.expect("dense feature mode requires a feature table");
                let v = f.user(user_id);
                assert_eq!(v.len(), *d_user, "user feature dim mismatch");
                tape.constant(Tensor::vector(v.to_vec()))
            }
        }
    }
}
