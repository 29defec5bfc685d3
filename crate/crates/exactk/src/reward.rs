//! Card-level CTR reward estimator with feature crosses, its supervised
//! training, and the rescaled reward value.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::gattn::{FeatureMode, FeatureTable};
use crate::num::{manifest_get, read_checkpoint, write_checkpoint, Manifest, Var};
use crate::rng::Rng;
use crate::{AdamState, ParamStore, Tape, Tensor};

/// Interpretation of the cross term between item and user features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossKind {
    /// Elementwise product vector per item slot (default).
    Elementwise,
    /// Single inner-product scalar per item slot.
    Scalar,
}

#[derive(Debug, Clone)]
pub struct RewardConfig {
    pub k: usize,
    pub hidden: usize,
    pub cross: CrossKind,
    /// Share item-slot weights so the score is card-permutation invariant.
    pub tied_slots: bool,
    pub features: FeatureMode,
}

impl RewardConfig {
    pub fn defaults(k: usize, features: FeatureMode) -> Self {
        RewardConfig {
            k,
            hidden: 128,
            cross: CrossKind::Elementwise,
            tied_slots: true,
            features,
        }
    }

    fn cross_dim(&self) -> usize {
        match self.cross {
            CrossKind::Elementwise => self.features.item_dim(),
            CrossKind::Scalar => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.hidden == 0 {
            return Err(Error::Config("reward config dims must be positive".into()));
        }
        if self.cross == CrossKind::Elementwise
            && self.features.item_dim() != self.features.user_dim()
        {
            return Err(Error::Config(
                "elementwise cross requires equal item and user feature dims".into(),
            ));
        }
        Ok(())
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = vec![
            ("k".into(), self.k.to_string()),
            ("hidden".into(), self.hidden.to_string()),
            (
                "cross".into(),
                match self.cross {
                    CrossKind::Elementwise => "elementwise".into(),
                    CrossKind::Scalar => "scalar".into(),
                },
            ),
            ("tied_slots".into(), self.tied_slots.to_string()),
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
            manifest_get(m, key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("manifest missing {key}")))
        };
        let features = match manifest_get(m, "features") {
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
        let cross = match manifest_get(m, "cross") {
            Some("elementwise") => CrossKind::Elementwise,
            Some("scalar") => CrossKind::Scalar,
            other => return Err(Error::Checkpoint(format!("bad cross kind {other:?}"))),
        };
        let config = RewardConfig {
            k: get("k")?,
            hidden: get("hidden")?,
            cross,
            tied_slots: manifest_get(m, "tied_slots") == Some("true"),
            features,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Reward-estimator parameters phi and the card scoring function.
pub struct RewardModel {
    pub config: RewardConfig,
    pub store: ParamStore,
}

impl RewardModel {
    pub fn new(config: RewardConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let d_item = config.features.item_dim();
        let d_user = config.features.user_dim();
        let cd = config.cross_dim();
        let h = config.hidden;
        if let FeatureMode::Ids { n_items, n_users, embed_dim } = config.features {
            store.add_glorot("item_emb", &[n_items, embed_dim], rng);
            store.add_glorot("user_emb", &[n_users, embed_dim], rng);
        }
        if config.tied_slots {
            store.add_glorot("cross.w", &[cd, h], rng);
            store.add_glorot("item.w", &[d_item, h], rng);
        } else {
            for i in 0..config.k {
                store.add_glorot(&format!("cross{i}.w"), &[cd, h], rng);
                store.add_glorot(&format!("item{i}.w"), &[d_item, h], rng);
            }
        }
        store.add_glorot("user.w", &[d_user, h], rng);
        store.add_zeros("b1", &[h]);
        store.add_glorot("w2", &[h], rng);
        store.add_zeros("b2", &[1]);
        Ok(RewardModel { config, store })
    }

    fn p(&self, name: &str) -> crate::num::ParamId {
        self.store
            .id(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
    }

    pub fn set_all(&mut self, v: f64) {
        for id in self.store.ids().collect::<Vec<_>>() {
            self.store.value_mut(id).fill(v);
        }
    }

    fn item_vec(&self, tape: &mut Tape, features: Option<&FeatureTable>, id: u32) -> Var {
        match &self.config.features {
            FeatureMode::Ids { .. } => {
                let t = tape.param(&self.store, self.p("item_emb"));
                tape.row(t, id as usize)
            }
            FeatureMode::Dense { .. } => {
                let f = features.expect("dense feature mode requires a feature table");
                tape.constant(Tensor::vector(f.item(id).to_vec()))
            }
        }
    }

    fn user_vec(&self, tape: &mut Tape, features: Option<&FeatureTable>, id: u32) -> Var {
        match &self.config.features {
            FeatureMode::Ids { .. } => {
                let t = tape.param(&self.store, self.p("user_emb"));
                tape.row(t, id as usize)
            }
            FeatureMode::Dense { .. } => {
                let f = features.expect("dense feature mode requires a feature table");
                tape.constant(Tensor::vector(f.user(id).to_vec()))
            }
        }
    }

    /// P(r=1 | A, u): sigmoid over a two-layer network whose input is
    /// the concatenation of K item-user crosses, K item vectors, and the
    /// user vector. Tied slot weights realize that block-structure as a
    /// sum over slots, making the score card-permutation invariant.
    pub fn score_card(
        &self,
        tape: &mut Tape,
        features: Option<&FeatureTable>,
        card: &[u32],
        user: u32,
    ) -> Var {
        assert_eq!(
            card.len(),
            self.config.k,
            "score_card: card has {} items, expected K={}",
            card.len(),
            self.config.k
        );
        let x_u = self.user_vec(tape, features, user);
        let crosses: Vec<Var> = card
            .iter()
            .map(|&a| {
                let x_a = self.item_vec(tape, features, a);
                match self.config.cross {
                    CrossKind::Elementwise => tape.mul(x_a, x_u),
                    CrossKind::Scalar => tape.matmul(x_a, x_u),
                }
            })
            .collect();
        let items: Vec<Var> = card
            .iter()
            .map(|&a| self.item_vec(tape, features, a))
            .collect();

        let b1 = tape.param(&self.store, self.p("b1"));
        let u_w = tape.param(&self.store, self.p("user.w"));
        let user_part = tape.matmul(x_u, u_w);
        let mut pre = tape.add(user_part, b1);
        for (i, (&cr, &it)) in crosses.iter().zip(&items).enumerate() {
            let (cw, iw) = if self.config.tied_slots {
                (self.p("cross.w"), self.p("item.w"))
            } else {
                (self.p(&format!("cross{i}.w")), self.p(&format!("item{i}.w")))
            };
            let cw = tape.param(&self.store, cw);
            let iw = tape.param(&self.store, iw);
            let c_part = tape.matmul(cr, cw);
            let i_part = tape.matmul(it, iw);
            pre = tape.add(pre, c_part);
            pre = tape.add(pre, i_part);
        }
        let h = tape.relu(pre);
        let w2 = tape.param(&self.store, self.p("w2"));
        let b2 = tape.param(&self.store, self.p("b2"));
        let out = tape.matmul(h, w2);
        let out = tape.add(out, b2);
        tape.sigmoid(out)
    }

    /// Score as a plain value, outside any training tape.
    pub fn score_card_value(
        &self,
        features: Option<&FeatureTable>,
        card: &[u32],
        user: u32,
    ) -> f64 {
        let mut tape = Tape::new();
        let s = self.score_card(&mut tape, features, card, user);
        tape.value(s).item()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut manifest = self.config.to_manifest();
        manifest.insert(0, ("kind".into(), "reward".into()));
        write_checkpoint(path, &self.store, &manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (records, manifest) = read_checkpoint::<f64>(path)?;
        if manifest_get(&manifest, "kind") != Some("reward") {
            return Err(Error::Checkpoint(format!(
                "{} is not a reward checkpoint",
                path.display()
            )));
        }
        let config = RewardConfig::from_manifest(&manifest)?;
        let mut model = RewardModel::new(config, &mut crate::rng::seeded(0))?;
        model.store.load_values(&records)?;
        Ok(model)
    }
}

/// R(A, u) = 2 (P(r=1|A,u) - 0.5), rescaling the score into [-1, 1].
pub fn reward_value(score: f64) -> f64 {
    2.0 * (score - 0.5)
}

pub struct RewardTrainOutput {
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// True when the training data carried only one label value.
    pub single_class: bool,
}

/// Phase-1 training: minimize binary cross-entropy of the card CTR over
/// the labeled cards with mini-batch Adam.
pub fn train_reward(
    model: &mut RewardModel,
    samples: &[Sample],
    features: Option<&FeatureTable>,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<RewardTrainOutput> {
    if samples.is_empty() {
        return Err(Error::Data("reward training set is empty".into()));
    }
    let single_class = samples.iter().all(|s| s.label == samples[0].label);
    if single_class {
        eprintln!("warning: reward training data has a single class");
    }
    let mut adam = AdamState::new(&model.store, learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let mut batch_loss = 0.0;
            for &si in batch {
                let s = &samples[si];
                let mut tape = Tape::new();
                let p = model.score_card(&mut tape, features, &s.card, s.user_id);
                // BCE: -[r ln p + (1-r) ln(1-p)], scaled by 1/batch
                let lp = tape.log(p);
                let one = tape.scalar(1.0);
                let neg_p = tape.neg(p);
                let one_m_p = tape.add(one, neg_p);
                let lq = tape.log(one_m_p);
                let loss = if s.label == 1 {
                    tape.neg(lp)
                } else {
                    tape.neg(lq)
                };
                batch_loss += tape.value(loss).item();
                let scaled = tape.scale(loss, 1.0 / batch.len() as f64);
                tape.backward(scaled, &mut model.store);
            }
            adam.step(&mut model.store);
            epoch_loss += batch_loss;
        }
        losses.push(epoch_loss / samples.len() as f64);
    }
    Ok(RewardTrainOutput { losses, single_class })
}
