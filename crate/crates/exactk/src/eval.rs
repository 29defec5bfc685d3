//! Set-level metrics and the head-to-head evaluation harness comparing
//! the learned policy, a greedy node-weight baseline, and the exhaustive
//! oracle.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use crate::data::{OracleWorld, Sample};
use crate::error::{Error, Result};
use crate::gattn::{beam_search, FeatureMode, FeatureTable, PolicyModel};
use crate::graph::{brute_force_best_card, build_graph, greedy_node_weight, Constraint};
use crate::num::Var;
use crate::reward::{reward_value, RewardModel};
use crate::rng::Rng;
use crate::{AdamState, ParamStore, Tape, Tensor};

/// HR@K = (sum_i |A_i ∩ A*_i| / K) / n over item-id sets.
pub fn hr_at_k(predicted: &[Vec<u32>], truth: &[Vec<u32>], k: usize) -> f64 {
    assert_eq!(predicted.len(), truth.len(), "hr_at_k: list length mismatch");
    assert!(k > 0 && !predicted.is_empty(), "hr_at_k: empty input");
    let mut acc = 0.0;
    for (a, t) in predicted.iter().zip(truth) {
        assert_eq!(a.len(), k, "hr_at_k: predicted card size != K");
        assert_eq!(t.len(), k, "hr_at_k: ground-truth card size != K");
        let a: BTreeSet<u32> = a.iter().copied().collect();
        let overlap = t.iter().filter(|x| a.contains(x)).count();
        acc += overlap as f64 / k as f64;
    }
    acc / predicted.len() as f64
}

/// P@K = (sum_i 1[a*_i in A_i]) / n; samples with no positive item are
/// excluded and their count returned.
pub fn p_at_k(predicted: &[Vec<u32>], positives: &[Option<u32>]) -> (f64, usize) {
    assert_eq!(predicted.len(), positives.len(), "p_at_k: list length mismatch");
    let mut hits = 0usize;
    let mut n = 0usize;
    let mut excluded = 0usize;
    for (a, pos) in predicted.iter().zip(positives) {
        match pos {
            Some(p) => {
                n += 1;
                if a.contains(p) {
                    hits += 1;
                }
            }
            None => excluded += 1,
        }
    }
    let value = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    (value, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    PolicyBeam,
    GreedyBaseline,
    BruteForceOracle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::PolicyBeam => "policy_beam",
            Method::GreedyBaseline => "greedy_baseline",
            Method::BruteForceOracle => "brute_force_oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "policy_beam" => Ok(Method::PolicyBeam),
            "greedy_baseline" => Ok(Method::GreedyBaseline),
            "brute_force_oracle" => Ok(Method::BruteForceOracle),
            _ => Err(Error::Config(format!(
                "unknown method {s:?}; valid: policy_beam, greedy_baseline, brute_force_oracle"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: String,
    /// Label-1 samples that produced a feasible card.
    pub n: usize,
    pub p_at_k: f64,
    pub hr_at_k: f64,
    /// Mean estimated reward of the produced cards, when an estimator is given.
    pub mean_reward: Option<f64>,
    /// mean(utility of produced / utility of exhaustive optimum); oracle datasets only.
    pub oracle_ratio: Option<f64>,
    pub infeasible_count: usize,
    /// Samples dropped from P@K for lacking a positive item.
    pub missing_positive: usize,
}

impl EvalReport {
    pub fn csv_header() -> &'static str {
        "method,n,p_at_k,hr_at_k,mean_reward,oracle_ratio,infeasible_count"
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.n,
            self.p_at_k,
            self.hr_at_k,
            opt(self.mean_reward),
            opt(self.oracle_ratio),
            self.infeasible_count
        )
    }

    pub fn table(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        format!(
            "method              {}\n\
             samples             {}\n\
             P@K                 {:.4}\n\
             HR@K                {:.4}\n\
             mean reward         {}\n\
             oracle ratio        {}\n\
             infeasible decodes  {}\n",
            self.method,
            self.n,
            self.p_at_k,
            self.hr_at_k,
            opt(self.mean_reward),
            opt(self.oracle_ratio),
            self.infeasible_count
        )
    }
}

pub fn write_reports_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{}", EvalReport::csv_header())?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Pointwise CTR head sigma(w . (x_item ⊙ x_user) + b) supplying node
/// weights for the greedy baseline.
pub struct PointwiseScorer {
    pub features: FeatureMode,
    pub store: ParamStore,
}

impl PointwiseScorer {
    pub fn new(features: FeatureMode, rng: &mut Rng) -> Result<Self> {
        if features.item_dim() != features.user_dim() {
            return Err(Error::Config(
                "pointwise scorer requires equal item and user feature dims".into(),
            ));
        }
        let mut store = ParamStore::new();
        if let FeatureMode::Ids { n_items, n_users, embed_dim } = features {
            store.add_glorot("item_emb", &[n_items, embed_dim], rng);
            store.add_glorot("user_emb", &[n_users, embed_dim], rng);
        }
        store.add_glorot("w", &[features.item_dim()], rng);
        store.add_zeros("b", &[1]);
        Ok(PointwiseScorer { features, store })
    }

    fn vecs(
        &self,
        tape: &mut Tape,
        features: Option<&FeatureTable>,
        item: u32,
        user: u32,
    ) -> (Var, Var) {
        match &self.features {
            FeatureMode::Ids { .. } => {
                let it = tape.param(&self.store, self.store.id("item_emb").unwrap());
                let ut = tape.param(&self.store, self.store.id("user_emb").unwrap());
                (tape.row(it, item as usize), tape.row(ut, user as usize))
            }
            FeatureMode::Dense { .. } => {
                let f = features.expect("dense scorer requires a feature table");
                (
                    tape.constant(Tensor::vector(f.item(item).to_vec())),
                    tape.constant(Tensor::vector(f.user(user).to_vec())),
                )
            }
        }
    }

    pub fn score_on(
        &self,
        tape: &mut Tape,
        features: Option<&FeatureTable>,
        item: u32,
        user: u32,
    ) -> Var {
        let (x_i, x_u) = self.vecs(tape, features, item, user);
        let cross = tape.mul(x_i, x_u);
        let w = tape.param(&self.store, self.store.id("w").unwrap());
        let b = tape.param(&self.store, self.store.id("b").unwrap());
        let z = tape.matmul(cross, w);
        let z = tape.add(z, b);
        tape.sigmoid(z)
    }

    pub fn score(&self, features: Option<&FeatureTable>, item: u32, user: u32) -> f64 {
        let mut tape = Tape::new();
        let s = self.score_on(&mut tape, features, item, user);
        tape.value(s).item()
    }
}

/// Train the pointwise scorer with per-item binary cross-entropy: on each
/// label-1 sample the positive item is the 1 label and every other
/// candidate a 0.
pub fn train_pointwise(
    scorer: &mut PointwiseScorer,
    samples: &[Sample],
    features: Option<&FeatureTable>,
    epochs: usize,
    learning_rate: f64,
    rng: &mut Rng,
) -> Result<()> {
    use rand::seq::SliceRandom;
    let mut pairs: Vec<(u32, u32, bool)> = Vec::new(); // (item, user, clicked)
    for s in samples {
        let Some(pos) = s.positive_item else { continue };
        if s.label != 1 {
            continue;
        }
        for &c in &s.candidates {
            pairs.push((c, s.user_id, c == pos));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Data("no labeled items for the pointwise scorer".into()));
    }
    let mut adam = AdamState::new(&scorer.store, learning_rate);
    for _ in 0..epochs {
        pairs.shuffle(rng);
        for chunk in pairs.chunks(32) {
            for &(item, user, clicked) in chunk {
                let mut tape = Tape::new();
                let p = scorer.score_on(&mut tape, features, item, user);
                let loss = if clicked {
                    let lp = tape.log(p);
                    tape.neg(lp)
                } else {
                    let one = tape.scalar(1.0);
                    let np = tape.neg(p);
                    let q = tape.add(one, np);
                    let lq = tape.log(q);
                    tape.neg(lq)
                };
                let scaled = tape.scale(loss, 1.0 / chunk.len() as f64);
                tape.backward(scaled, &mut scorer.store);
            }
            adam.step(&mut scorer.store);
        }
    }
    Ok(())
}

/// Everything a method might need; unused pieces may be None.
pub struct EvalContext<'a> {
    pub policy: Option<&'a PolicyModel>,
    pub reward: Option<&'a RewardModel>,
    pub scorer: Option<&'a PointwiseScorer>,
    pub world: Option<&'a OracleWorld>,
    pub features: Option<&'a FeatureTable>,
    pub constraint: Constraint,
}

/// Produce an EvalReport for one method over the label-1 test samples.
/// Infeasible decodes are counted and excluded from metric denominators.
pub fn evaluate(method: Method, samples: &[Sample], ctx: &EvalContext) -> Result<EvalReport> {
    match method {
        Method::PolicyBeam if ctx.policy.is_none() => {
            return Err(Error::Config("policy_beam requires a policy checkpoint".into()))
        }
        Method::GreedyBaseline if ctx.scorer.is_none() => {
            return Err(Error::Config("greedy_baseline requires a pointwise scorer".into()))
        }
        Method::BruteForceOracle if ctx.world.is_none() => {
            return Err(Error::Config(
                "brute_force_oracle requires an oracle dataset with its world archive".into(),
            ))
        }
        _ => {}
    }

    let mut predicted: Vec<Vec<u32>> = Vec::new();
    let mut truth: Vec<Vec<u32>> = Vec::new();
    let mut positives: Vec<Option<u32>> = Vec::new();
    let mut users: Vec<u32> = Vec::new();
    let mut cands: Vec<&Sample> = Vec::new();
    let mut infeasible = 0usize;
    let mut k = 0usize;

    for sample in samples.iter().filter(|s| s.label == 1) {
        k = sample.card.len();
        let graph = build_graph(&sample.candidates, None, &ctx.constraint)?;
        let card_idx = match method {
            Method::PolicyBeam => {
                match beam_search(ctx.policy.unwrap(), ctx.features, sample, &graph) {
                    Ok(c) => c,
                    Err(Error::Infeasible(_)) => {
                        infeasible += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            Method::GreedyBaseline => {
                let scorer = ctx.scorer.unwrap();
                let weights: Vec<f64> = sample
                    .candidates
                    .iter()
                    .map(|&c| scorer.score(ctx.features, c, sample.user_id))
                    .collect();
                match greedy_node_weight(&graph, &weights, k) {
                    Ok(c) => c,
                    Err(Error::Infeasible(_)) => {
                        infeasible += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            Method::BruteForceOracle => {
                let world = ctx.world.unwrap();
                let score = |c: &[usize]| {
                    let ids: Vec<u32> = c.iter().map(|&i| sample.candidates[i]).collect();
                    world.utility(sample.user_id, &ids)
                };
                match brute_force_best_card(&graph, score, k) {
                    Ok(c) => c,
                    Err(Error::Infeasible(_)) => {
                        infeasible += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        predicted.push(card_idx.iter().map(|&j| sample.candidates[j]).collect());
        truth.push(sample.card.clone());
        positives.push(sample.positive_item);
        users.push(sample.user_id);
        cands.push(sample);
    }

    if predicted.is_empty() {
        return Err(Error::Data(
            "no label-1 sample produced a feasible card".into(),
        ));
    }

    let (p, missing_positive) = p_at_k(&predicted, &positives);
    let hr = hr_at_k(&predicted, &truth, k);

    let mean_reward = ctx.reward.map(|rm| {
        let total: f64 = predicted
            .iter()
            .zip(&users)
            .map(|(card, &u)| reward_value(rm.score_card_value(ctx.features, card, u)))
            .sum();
        total / predicted.len() as f64
    });

    let oracle_ratio = ctx.world.map(|world| {
        let total: f64 = predicted
            .iter()
            .zip(&cands)
            .map(|(card, s)| {
                let got = world.utility(s.user_id, card);
                let best = world.optimal_utility(s.user_id, &s.candidates, k);
                got / best
            })
            .sum();
        total / predicted.len() as f64
    });

    Ok(EvalReport {
        method: method.name().into(),
        n: predicted.len(),
        p_at_k: p,
        hr_at_k: hr,
        mean_reward,
        oracle_ratio,
        infeasible_count: infeasible,
        missing_positive,
    })
}
