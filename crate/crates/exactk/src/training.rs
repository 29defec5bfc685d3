//! Two-phase training orchestration: supervised cross-entropy (optionally
//! with policy-sampling), REINFORCE with optional hill-climbing, and their
//! alpha-weighted combination.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::eval::{hr_at_k, p_at_k};
use crate::gattn::{
    advance_state, beam_search, decode_step, encode_sample, sample_card_on, DecodeState,
    FeatureTable, ModelConfig, PolicyModel,
};
use crate::graph::{build_graph, Constraint, ConstraintGraph};
use crate::num::Var;
use crate::reward::{reward_value, train_reward, RewardModel};
use crate::rng::Rng;
use crate::{AdamState, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlMode {
    TeacherForced,
    PolicySampled,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight on the supervised loss: L = alpha * L_S + (1 - alpha) * L_R.
    pub alpha: f64,
    /// Hill-climb buffer size.
    pub m: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub policy_sampling: bool,
    pub hill_climbing: bool,
    /// Feed the argmax instead of a sample when policy-sampling.
    pub greedy_feed: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            m: 5,
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
            policy_sampling: false,
            hill_climbing: false,
            greedy_feed: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0,1], got {}", self.alpha)));
        }
        if self.m < 1 {
            return Err(Error::Config("m must be >= 1".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn sl_mode(&self) -> SlMode {
        if self.policy_sampling {
            SlMode::PolicySampled
        } else {
            SlMode::TeacherForced
        }
    }
}

/// Parse a flat key=value config file. Blank lines and #-comments allowed.
pub fn parse_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut kv = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            msg: "expected key=value".into(),
        })?;
        kv.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(kv)
}

/// Apply key=value overrides to the train and model configs; unknown keys
/// are configuration errors.
pub fn apply_config_kv(
    train: &mut TrainConfig,
    model: &mut ModelConfig,
    kv: &[(String, String)],
) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| Error::Config(format!("bad value {value:?} for key {key:?}")))
    }
    fn flag(key: &str, value: &str) -> Result<bool> {
        match value {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(Error::Config(format!("bad flag value {value:?} for key {key:?}"))),
        }
    }
    for (key, value) in kv {
        match key.as_str() {
            "alpha" => train.alpha = num(key, value)?,
            "m" => train.m = num(key, value)?,
            "epochs" => train.epochs = num(key, value)?,
            "batch_size" => train.batch_size = num(key, value)?,
            "learning_rate" => train.learning_rate = num(key, value)?,
            "seed" => train.seed = num(key, value)?,
            "policy_sampling" => train.policy_sampling = flag(key, value)?,
            "hill_climbing" => train.hill_climbing = flag(key, value)?,
            "greedy_feed" => train.greedy_feed = flag(key, value)?,
            "d_x" => model.d_x = num(key, value)?,
            "d_h" => model.d_h = num(key, value)?,
            "d_k" => model.d_k = num(key, value)?,
            "heads" => model.heads = num(key, value)?,
            "layers" => model.layers = num(key, value)?,
            "k" => model.k = num(key, value)?,
            "n" => model.n = num(key, value)?,
            "beam_size" => model.beam_size = num(key, value)?,
            "rnn_units" => model.rnn_units = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
    }
    train.validate()?;
    model.validate()
}

fn card_as_indices(sample: &Sample) -> Result<Vec<usize>> {
    let idx = sample.card_indices();
    if idx.len() != sample.card.len() {
        return Err(Error::Data(format!(
            "user {}: card contains items outside the candidate set",
            sample.user_id
        )));
    }
    Ok(idx)
}

/// Supervised loss for one demonstration, recorded on `tape`:
/// mean over the K steps of -log p(a*_t | state_t). With teacher forcing
/// the state advances on the demonstrated item; with policy-sampling it
/// advances on the policy's own draw. The demonstrated card is a set, so a
/// draw that hits a not-yet-consumed demonstrated item consumes it as this
/// step's target; any other draw is restricted to choices that keep every
/// remaining demonstrated item feasible, and the head of the remaining
/// list is credited. Either way the credited item is unmasked, so its
/// probability is never zero.
#[allow(clippy::too_many_arguments)]
pub fn sl_loss_on(
    tape: &mut Tape,
    model: &PolicyModel,
    graph: &ConstraintGraph,
    h_enc: Var,
    sample: &Sample,
    mode: SlMode,
    greedy_feed: bool,
    rng: &mut Rng,
) -> Result<Var> {
    if sample.label != 1 {
        return Err(Error::Data(format!(
            "user {}: supervised loss needs a label-1 demonstration",
            sample.user_id
        )));
    }
    let card = card_as_indices(sample)?;
    if !graph.is_clique(&card) {
        return Err(Error::Data(format!(
            "user {}: demonstrated card violates the constraint graph",
            sample.user_id
        )));
    }
    let k = card.len();
    let mut state = DecodeState::initial(tape, model, graph.n());
    let mut terms = Vec::with_capacity(k);
    let mut remaining: Vec<usize> = card.clone();
    for t in 0..k {
        let probs = decode_step(tape, model, &state, h_enc)?;
        if remaining.iter().any(|&r| state.mask[r]) {
            return Err(Error::Data(format!(
                "user {}: demonstration infeasible at step {t}",
                sample.user_id
            )));
        }
        let (target, feed) = match mode {
            SlMode::TeacherForced => {
                let target = remaining.remove(0);
                (target, target)
            }
            SlMode::PolicySampled => {
                let pv = tape.value(probs).data().to_vec();
                // a draw may consume any remaining demonstrated item; any
                // other node must keep every remaining demonstrated item
                // unmasked, so the set is never empty
                let safe: Vec<usize> = (0..graph.n())
                    .filter(|&j| {
                        !state.mask[j]
                            && (remaining.contains(&j)
                                || remaining.iter().all(|&r| j != r && graph.adjacent(j, r)))
                    })
                    .collect();
                debug_assert!(remaining.iter().all(|r| safe.contains(r)));
                let pick = if greedy_feed {
                    safe.iter()
                        .copied()
                        .max_by(|&a, &b| pv[a].partial_cmp(&pv[b]).unwrap())
                        .unwrap()
                } else {
                    let total: f64 = safe.iter().map(|&j| pv[j]).sum();
                    let mut r = rng.gen::<f64>() * total;
                    let mut pick = *safe.last().unwrap();
                    for &j in &safe {
                        r -= pv[j];
                        if r <= 0.0 {
                            pick = j;
                            break;
                        }
                    }
                    pick
                };
                let target = if let Some(pos) = remaining.iter().position(|&r| r == pick) {
                    remaining.remove(pos)
                } else {
                    remaining.remove(0)
                };
                (target, pick)
            }
        };
        let p = tape.get(probs, target);
        let lp = tape.log(p);
        terms.push(lp);
        let lp_value = tape.value(lp).item();
        state = advance_state(tape, model, &state, feed, graph, h_enc, lp_value);
    }
    let mut sum = terms[0];
    for &t in &terms[1..] {
        sum = tape.add(sum, t);
    }
    Ok(tape.scale(sum, -1.0 / k as f64))
}

#[derive(Debug, Clone)]
pub struct RlDiagnostics {
    /// Reward of the card the loss was taken on.
    pub reward: f64,
    /// Rewards of every buffer member (length m with hill-climbing, else 1).
    pub buffer_rewards: Vec<f64>,
}

/// REINFORCE loss for one sample, recorded on `tape`:
/// -R(A,u) * sum_t log p(a_t | state_t) with R held constant. With
/// hill-climbing, m cards are drawn and the loss is taken on the
/// highest-reward one.
#[allow(clippy::too_many_arguments)]
pub fn rl_loss_on(
    tape: &mut Tape,
    model: &PolicyModel,
    graph: &ConstraintGraph,
    h_enc: Var,
    sample: &Sample,
    reward_model: &RewardModel,
    features: Option<&FeatureTable>,
    hill_climbing: bool,
    m: usize,
    rng: &mut Rng,
) -> Result<(Var, RlDiagnostics)> {
    let draws = if hill_climbing { m } else { 1 };
    let mut buffer: Vec<(Vec<usize>, f64)> = Vec::with_capacity(draws);
    for _ in 0..draws {
        // sampling runs on a scratch tape: no gradients flow through it
        let mut scratch = Tape::new();
        let h_scratch = encode_sample(&mut scratch, model, features, sample, None)?;
        let (card, _) = sample_card_on(&mut scratch, model, graph, h_scratch, model.config.k, rng)?;
        let ids: Vec<u32> = card.iter().map(|&j| sample.candidates[j]).collect();
        let score = reward_model.score_card_value(features, &ids, sample.user_id);
        buffer.push((card, reward_value(score)));
    }
    let best = buffer
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let reward = buffer[best].1;
    debug_assert!(buffer.iter().all(|(_, r)| *r <= reward));
    let card = buffer[best].0.clone();
    let buffer_rewards = buffer.into_iter().map(|(_, r)| r).collect();

    // differentiable pass over the selected card on the main tape
    let mut state = DecodeState::initial(tape, model, graph.n());
    let mut sum: Option<Var> = None;
    for &a in &card {
        let probs = decode_step(tape, model, &state, h_enc)?;
        let p = tape.get(probs, a);
        let lp = tape.log(p);
        sum = Some(match sum {
            Some(s) => tape.add(s, lp),
            None => lp,
        });
        let lp_value = tape.value(lp).item();
        state = advance_state(tape, model, &state, a, graph, h_enc, lp_value);
    }
    let loss = tape.scale(sum.unwrap(), -reward);
    Ok((loss, RlDiagnostics { reward, buffer_rewards }))
}

#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub loss_sl: f64,
    pub loss_rl: f64,
    pub loss_total: f64,
    pub mean_reward: f64,
    /// Samples whose REINFORCE rollout dead-ended and were skipped.
    pub infeasible_samples: usize,
    /// Per-sample hill-climb buffers, for stability checks.
    pub buffers: Vec<RlDiagnostics>,
}

/// One optimizer step over a batch: per-sample losses are averaged, the
/// alpha-combination is formed, and Adam updates the policy. The SL and RL
/// branches consume independent RNG streams drawn up-front, so the loss
/// surface is linear in alpha on a frozen batch.
#[allow(clippy::too_many_arguments)]
pub fn combined_step(
    model: &mut PolicyModel,
    batch: &[Sample],
    constraint: &Constraint,
    reward_model: Option<&RewardModel>,
    features: Option<&FeatureTable>,
    config: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut Rng,
) -> Result<StepStats> {
    config.validate()?;
    if config.alpha < 1.0 && reward_model.is_none() {
        return Err(Error::Config(
            "alpha < 1 requires a trained reward model".into(),
        ));
    }
    let mut sl_rng = crate::rng::seeded(rng.gen());
    let mut rl_rng = crate::rng::seeded(rng.gen());

    let mut stats = StepStats::default();
    let mut used = 0usize;
    let inv = 1.0 / batch.len() as f64;
    for sample in batch {
        let graph = build_graph(&sample.candidates, None, constraint)?;
        let mut tape = Tape::new();
        let h_enc = encode_sample(&mut tape, model, features, sample, None)?;

        let sl = if config.alpha > 0.0 {
            Some(sl_loss_on(
                &mut tape,
                model,
                &graph,
                h_enc,
                sample,
                config.sl_mode(),
                config.greedy_feed,
                &mut sl_rng,
            )?)
        } else {
            None
        };
        let rl = if config.alpha < 1.0 {
            match rl_loss_on(
                &mut tape,
                model,
                &graph,
                h_enc,
                sample,
                reward_model.unwrap(),
                features,
                config.hill_climbing,
                config.m,
                &mut rl_rng,
            ) {
                Ok((loss, diag)) => Some((loss, diag)),
                Err(Error::Infeasible(_)) => {
                    stats.infeasible_samples += 1;
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let mut total: Option<Var> = None;
        if let Some(sl) = sl {
            stats.loss_sl += tape.value(sl).item();
            let part = tape.scale(sl, config.alpha);
            total = Some(part);
        }
        if let Some((rl, diag)) = rl {
            stats.loss_rl += tape.value(rl).item();
            stats.mean_reward += diag.reward;
            stats.buffers.push(diag);
            let part = tape.scale(rl, 1.0 - config.alpha);
            total = Some(match total {
                Some(t) => tape.add(t, part),
                None => part,
            });
        }
        if let Some(total) = total {
            stats.loss_total += tape.value(total).item();
            let scaled = tape.scale(total, inv);
            tape.backward(scaled, &mut model.store);
        }
        used += 1;
    }
    adam.step(&mut model.store);

    let n = batch.len() as f64;
    stats.loss_sl /= n;
    stats.loss_rl /= n;
    stats.loss_total /= n;
    let rl_n = stats.buffers.len().max(1) as f64;
    stats.mean_reward /= rl_n;
    let _ = used;
    Ok(stats)
}

/// One row of the training-curve CSV.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub iter: usize,
    pub loss_sl: f64,
    pub loss_rl: f64,
    pub loss_total: f64,
    pub mean_reward: f64,
    pub p_at_k: f64,
    pub hr_at_k: f64,
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iter,loss_sl,loss_rl,loss_total,mean_reward,p_at_k,hr_at_k")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter, r.loss_sl, r.loss_rl, r.loss_total, r.mean_reward, r.p_at_k, r.hr_at_k
        )?;
    }
    Ok(())
}

pub struct TrainSummary {
    pub rows: Vec<CurveRow>,
    /// Phase-1 per-epoch reward-estimator losses (empty when skipped).
    pub reward_losses: Vec<f64>,
    /// Mean training reward per optimizer step, for stability checks.
    pub step_rewards: Vec<f64>,
    pub infeasible_samples: usize,
    pub total_samples: usize,
}

/// Phase 1 (reward-estimator training on the labeled cards) followed by
/// Phase 2 (policy training with the estimator frozen). Metrics are
/// computed each epoch on a held-out slice (10% of the demonstrations,
/// fixed by seed) and written into every iteration row of that epoch.
pub fn run_training(
    policy: &mut PolicyModel,
    reward_model: Option<&mut RewardModel>,
    train_samples: &[Sample],
    constraint: &Constraint,
    features: Option<&FeatureTable>,
    config: &TrainConfig,
) -> Result<TrainSummary> {
    config.validate()?;
    if config.alpha < 1.0 && reward_model.is_none() {
        return Err(Error::Config(
            "alpha < 1 requires a reward model for Phase 1".into(),
        ));
    }
    let mut rng = crate::rng::seeded(config.seed);

    // Phase 1: reward estimator, skipped entirely at alpha = 1
    let mut reward_losses = Vec::new();
    let reward_ref: Option<&RewardModel> = match reward_model {
        Some(rm) if config.alpha < 1.0 => {
            let out = train_reward(
                rm,
                train_samples,
                features,
                config.epochs,
                config.batch_size,
                config.learning_rate,
                &mut rng,
            )?;
            reward_losses = out.losses;
            Some(rm)
        }
        Some(rm) => Some(rm),
        None => None,
    };
    let reward_ref = if config.alpha < 1.0 { reward_ref } else { None };

    // Phase 2 trains on demonstrations; 10% held out for curve metrics
    let mut demos: Vec<&Sample> = train_samples.iter().filter(|s| s.label == 1).collect();
    if demos.is_empty() {
        return Err(Error::Data("no label-1 demonstrations to train on".into()));
    }
    demos.shuffle(&mut rng);
    let held = (demos.len() / 10).max(1).min(demos.len() - 1);
    let (eval_slice, train_slice) = demos.split_at(held);

    let mut adam = AdamState::new(&policy.store, config.learning_rate);
    let mut rows = Vec::new();
    let mut step_rewards = Vec::new();
    let mut infeasible = 0usize;
    let mut total = 0usize;
    let mut iter = 0usize;
    let mut order: Vec<usize> = (0..train_slice.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_stats: Vec<StepStats> = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_slice[i].clone()).collect();
            let stats = combined_step(
                policy,
                &batch,
                constraint,
                reward_ref,
                features,
                config,
                &mut adam,
                &mut rng,
            )?;
            // the estimator is frozen in Phase 2: no gradient ever lands on it
            if let Some(rm) = reward_ref {
                debug_assert!(rm
                    .store
                    .ids()
                    .all(|id| rm.store.grad(id).data().iter().all(|&g| g == 0.0)));
            }
            infeasible += stats.infeasible_samples;
            total += batch.len();
            if config.alpha < 1.0 {
                step_rewards.push(stats.mean_reward);
            }
            epoch_stats.push(stats);
        }
        let (p, hr) = slice_metrics(policy, eval_slice, constraint, features)?;
        for stats in epoch_stats {
            iter += 1;
            rows.push(CurveRow {
                iter,
                loss_sl: stats.loss_sl,
                loss_rl: stats.loss_rl,
                loss_total: stats.loss_total,
                mean_reward: stats.mean_reward,
                p_at_k: p,
                hr_at_k: hr,
            });
        }
    }
    Ok(TrainSummary {
        rows,
        reward_losses,
        step_rewards,
        infeasible_samples: infeasible,
        total_samples: total,
    })
}

/// P@K and HR@K of beam-search decodes over a sample slice.
fn slice_metrics(
    policy: &PolicyModel,
    slice: &[&Sample],
    constraint: &Constraint,
    features: Option<&FeatureTable>,
) -> Result<(f64, f64)> {
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    let mut positives = Vec::new();
    for sample in slice {
        let graph = build_graph(&sample.candidates, None, constraint)?;
        let card = match beam_search(policy, features, sample, &graph) {
            Ok(c) => c,
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        predicted.push(card.iter().map(|&j| sample.candidates[j]).collect());
        truth.push(sample.card.clone());
        positives.push(sample.positive_item);
    }
    if predicted.is_empty() {
        return Ok((0.0, 0.0));
    }
    let k = truth[0].len();
    let (p, _) = p_at_k(&predicted, &positives);
    Ok((p, hr_at_k(&predicted, &truth, k)))
}
