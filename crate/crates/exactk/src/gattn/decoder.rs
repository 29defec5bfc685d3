use rand::Rng as _;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::graph::ConstraintGraph;
use crate::num::Var;
use crate::rng::Rng;
use crate::{Tape, Tensor};

use super::encoder::encode_sample;
use super::model::{FeatureTable, PolicyModel};

/// Sentinel logit for masked nodes; drives softmax mass below 1e-300
/// without producing NaN the way a literal -inf would.
pub const MASK_LOGIT: f64 = -1e9;

/// Decoder state at one time-step: stacked recurrent states, the chosen
/// prefix, the feasibility mask, and the accumulated log-probability.
#[derive(Clone)]
pub struct DecodeState {
    /// (hidden, cell) per recurrent layer, recorded on the tape.
    lstm: Vec<(Var, Var)>,
    pub prefix: Vec<usize>,
    /// true = node may not be pointed at.
    pub mask: Vec<bool>,
    pub log_prob: f64,
}

impl DecodeState {
    /// d_1 = g(0, 0): one recurrent step from zero state and zero input.
    pub fn initial(tape: &mut Tape, model: &PolicyModel, n: usize) -> Self {
        let ru = model.config.rnn_units;
        let zero_states: Vec<(Var, Var)> = (0..model.config.layers)
            .map(|_| {
                (
                    tape.constant(Tensor::zeros(&[ru])),
                    tape.constant(Tensor::zeros(&[ru])),
                )
            })
            .collect();
        let zero_input = tape.constant(Tensor::zeros(&[model.config.d_h]));
        let lstm = lstm_forward(tape, model, &zero_states, zero_input);
        DecodeState {
            lstm,
            prefix: Vec::new(),
            mask: vec![false; n],
            log_prob: 0.0,
        }
    }

    /// Top-layer hidden state d_t.
    pub fn hidden(&self) -> Var {
        self.lstm.last().expect("at least one recurrent layer").0
    }

    pub fn feasible_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }
}

/// One step of the stacked gated recurrent cells.
fn lstm_forward(
    tape: &mut Tape,
    model: &PolicyModel,
    states: &[(Var, Var)],
    input: Var,
) -> Vec<(Var, Var)> {
    let ru = model.config.rnn_units;
    let mut x = input;
    let mut out = Vec::with_capacity(states.len());
    for (l, &(h, c)) in states.iter().enumerate() {
        let w_ih = tape.param(&model.store, model.p(&format!("dec{l}.w_ih")));
        let w_hh = tape.param(&model.store, model.p(&format!("dec{l}.w_hh")));
        let b = tape.param(&model.store, model.p(&format!("dec{l}.b")));
        let gi = tape.matmul(x, w_ih);
        let gh = tape.matmul(h, w_hh);
        let sum = tape.add(gi, gh);
        let gates = tape.add(sum, b);
        let i_g = tape.slice1d(gates, 0, ru);
        let f_g = tape.slice1d(gates, ru, ru);
        let g_g = tape.slice1d(gates, 2 * ru, ru);
        let o_g = tape.slice1d(gates, 3 * ru, ru);
        let i = tape.sigmoid(i_g);
        let f = tape.sigmoid(f_g);
        let g = tape.tanh(g_g);
        let o = tape.sigmoid(o_g);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let c_act = tape.tanh(c_next);
        let h_next = tape.mul(o, c_act);
        out.push((h_next, c_next));
        x = h_next;
    }
    out
}

/// Pointing distribution over the N nodes: glimpse over the encoder
/// outputs, then masked pointer logits through a softmax.
pub fn decode_step(
    tape: &mut Tape,
    model: &PolicyModel,
    state: &DecodeState,
    h_enc: Var,
) -> Result<Var> {
    if state.feasible_count() == 0 {
        return Err(Error::Infeasible(format!(
            "no feasible node after prefix {:?}",
            state.prefix
        )));
    }
    let d_t = state.hidden();

    // glimpse: e_tj = softmax(v1 . tanh(W1 d_t + W2 h_j)), c_t = sum e_tj h_j
    let w_d = tape.param(&model.store, model.p("glimpse.w_d"));
    let w_h = tape.param(&model.store, model.p("glimpse.w_h"));
    let v1 = tape.param(&model.store, model.p("glimpse.v"));
    let dd = tape.matmul(d_t, w_d);
    let hh = tape.matmul(h_enc, w_h);
    let pre = tape.add(hh, dd);
    let act = tape.tanh(pre);
    let scores = tape.matmul(act, v1);
    let e = tape.softmax_lastdim(scores);
    let c_t = tape.matmul(e, h_enc);
    let d_hat = tape.concat1d(&[d_t, c_t]);

    // pointer: u_tj = v2 . tanh(W3 d_hat + W4 h_j), masked to -1e9
    let w_d3 = tape.param(&model.store, model.p("pointer.w_d"));
    let w_h4 = tape.param(&model.store, model.p("pointer.w_h"));
    let v2 = tape.param(&model.store, model.p("pointer.v"));
    let dd3 = tape.matmul(d_hat, w_d3);
    let hh4 = tape.matmul(h_enc, w_h4);
    let pre2 = tape.add(hh4, dd3);
    let act2 = tape.tanh(pre2);
    let logits = tape.matmul(act2, v2);
    let mask_vec: Vec<f64> = state
        .mask
        .iter()
        .map(|&m| if m { MASK_LOGIT } else { 0.0 })
        .collect();
    let mask = tape.constant(Tensor::vector(mask_vec));
    let masked = tape.add(logits, mask);
    Ok(tape.softmax_lastdim(masked))
}

/// Advance on chosen node `a`: recurrent update on the node's encoder
/// embedding, then mask `a` plus every node that would break the clique.
pub fn advance_state(
    tape: &mut Tape,
    model: &PolicyModel,
    state: &DecodeState,
    a: usize,
    graph: &ConstraintGraph,
    h_enc: Var,
    step_log_prob: f64,
) -> DecodeState {
    assert!(!state.mask[a], "advance_state: node {a} is masked");
    let input = tape.row(h_enc, a);
    let lstm = lstm_forward(tape, model, &state.lstm, input);
    let mut prefix = state.prefix.clone();
    prefix.push(a);
    let mask: Vec<bool> = (0..state.mask.len())
        .map(|j| prefix.contains(&j) || !prefix.iter().all(|&c| graph.adjacent(c, j)))
        .collect();
    DecodeState {
        lstm,
        prefix,
        mask,
        log_prob: state.log_prob + step_log_prob,
    }
}

/// Teacher-forced per-step log-probabilities of a fixed card, recorded
/// differentiably on the tape. This is the chain-rule decomposition of
/// log P(A | S, u).
pub fn card_log_probs(
    tape: &mut Tape,
    model: &PolicyModel,
    graph: &ConstraintGraph,
    h_enc: Var,
    card: &[usize],
) -> Result<Vec<Var>> {
    let n = graph.n();
    let mut state = DecodeState::initial(tape, model, n);
    let mut terms = Vec::with_capacity(card.len());
    for &a in card {
        let probs = decode_step(tape, model, &state, h_enc)?;
        if state.mask[a] {
            return Err(Error::Infeasible(format!(
                "card node {a} is masked after prefix {:?}",
                state.prefix
            )));
        }
        let p = tape.get(probs, a);
        let lp = tape.log(p);
        let lp_value = tape.value(lp).item();
        terms.push(lp);
        state = advance_state(tape, model, &state, a, graph, h_enc, lp_value);
    }
    Ok(terms)
}

/// Width-limited search over decode steps scored by summed
/// log-probability; ties break on the lexicographically smaller prefix.
pub fn beam_search(
    model: &PolicyModel,
    features: Option<&FeatureTable>,
    sample: &Sample,
    graph: &ConstraintGraph,
) -> Result<Vec<usize>> {
    let mut tape = Tape::new();
    let h_enc = encode_sample(&mut tape, model, features, sample, None)?;
    beam_search_on(&mut tape, model, graph, h_enc, model.config.k, model.config.beam_size)
}

/// Beam search against an already-encoded candidate set.
pub(crate) fn beam_search_on(
    tape: &mut Tape,
    model: &PolicyModel,
    graph: &ConstraintGraph,
    h_enc: Var,
    k: usize,
    beam_size: usize,
) -> Result<Vec<usize>> {
    assert!(beam_size >= 1, "beam size must be positive");
    let n = graph.n();
    let mut beams = vec![DecodeState::initial(tape, model, n)];
    for _ in 0..k {
        let mut expansions: Vec<(f64, usize, usize)> = Vec::new(); // (total_lp, beam, node)
        for (bi, state) in beams.iter().enumerate() {
            let probs = match decode_step(tape, model, state, h_enc) {
                Ok(p) => p,
                Err(Error::Infeasible(_)) => continue, // beam dies
                Err(e) => return Err(e),
            };
            let pv = tape.value(probs).data().to_vec();
            #[allow(clippy::needless_range_loop)]
            for j in 0..n {
                if !state.mask[j] {
                    expansions.push((state.log_prob + pv[j].ln(), bi, j));
                }
            }
        }
        if expansions.is_empty() {
            return Err(Error::Infeasible(
                "all beams died: no feasible extension anywhere".into(),
            ));
        }
        expansions.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| prefix_key(&beams[a.1], a.2).cmp(&prefix_key(&beams[b.1], b.2)))
        });
        expansions.truncate(beam_size);
        beams = expansions
            .into_iter()
            .map(|(lp, bi, j)| {
                let step_lp = lp - beams[bi].log_prob;
                advance_state(tape, model, &beams[bi], j, graph, h_enc, step_lp)
            })
            .collect();
    }
    let best = beams
        .into_iter()
        .max_by(|a, b| {
            a.log_prob
                .partial_cmp(&b.log_prob)
                .unwrap()
                .then_with(|| b.prefix.cmp(&a.prefix))
        })
        .expect("at least one completed beam");
    Ok(best.prefix)
}

fn prefix_key(state: &DecodeState, next: usize) -> Vec<usize> {
    let mut k = state.prefix.clone();
    k.push(next);
    k
}

/// Ancestral sample of one card with its per-step log-probabilities.
/// Dead-ends retry from scratch up to 10 times.
pub fn sample_card(
    model: &PolicyModel,
    features: Option<&FeatureTable>,
    sample: &Sample,
    graph: &ConstraintGraph,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut tape = Tape::new();
    let h_enc = encode_sample(&mut tape, model, features, sample, None)?;
    sample_card_on(&mut tape, model, graph, h_enc, model.config.k, rng)
}

pub(crate) fn sample_card_on(
    tape: &mut Tape,
    model: &PolicyModel,
    graph: &ConstraintGraph,
    h_enc: Var,
    k: usize,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<f64>)> {
    const ATTEMPTS: usize = 10;
    let n = graph.n();
    let mut last_err = None;
    for _ in 0..ATTEMPTS {
        let mut state = DecodeState::initial(tape, model, n);
        let mut log_probs = Vec::with_capacity(k);
        let mut ok = true;
        for _ in 0..k {
            let probs = match decode_step(tape, model, &state, h_enc) {
                Ok(p) => p,
                Err(e @ Error::Infeasible(_)) => {
                    last_err = Some(e);
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            };
            let pv = tape.value(probs).data();
            let j = draw_categorical(pv, &state.mask, rng);
            log_probs.push(pv[j].ln());
            state = advance_state(tape, model, &state, j, graph, h_enc, pv[j].ln());
        }
        if ok {
            return Ok((state.prefix, log_probs));
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Infeasible("sampling dead-ended".into())))
}

/// Draw an unmasked index proportional to `probs`.
pub(crate) fn draw_categorical(probs: &[f64], mask: &[bool], rng: &mut Rng) -> usize {
    let total: f64 = probs
        .iter()
        .zip(mask)
        .filter(|(_, &m)| !m)
        .map(|(&p, _)| p)
        .sum();
    let mut r = rng.gen::<f64>() * total;
    let mut last_unmasked = 0;
    for (j, (&p, &m)) in probs.iter().zip(mask).enumerate() {
        if m {
            continue;
        }
        last_unmasked = j;
        r -= p;
        if r <= 0.0 {
            return j;
        }
    }
    last_unmasked // floating slack lands on the final unmasked node
}
