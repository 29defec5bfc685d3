use crate::data::Sample;
use crate::error::Result;
use crate::num::Var;
use crate::{Tape, Tensor};

use super::model::{FeatureTable, PolicyModel};

/// Attention weights of one encoder head, captured during a forward pass.
pub struct AttentionRecord {
    pub layer: usize,
    pub head: usize,
    /// Row-stochastic N x N matrix.
    pub weights: Tensor,
}

/// x_i = ReLU(W_I [x_item; x_user] + b_I).
pub fn embed_input(
    tape: &mut Tape,
    model: &PolicyModel,
    features: Option<&FeatureTable>,
    item_id: u32,
    user_id: u32,
) -> Var {
    let x_item = model.item_features(tape, features, item_id);
    let x_user = model.user_features(tape, features, user_id);
    let joint = tape.concat1d(&[x_item, x_user]);
    let w = tape.param(&model.store, model.p("input.w"));
    let b = tape.param(&model.store, model.p("input.b"));
    let proj = tape.matmul(joint, w);
    let proj = tape.add(proj, b);
    tape.relu(proj)
}

fn layer_norm_affine(tape: &mut Tape, model: &PolicyModel, x: Var, gain: &str, bias: &str) -> Var {
    let normed = tape.layer_norm(x);
    let g = tape.param(&model.store, model.p(gain));
    let b = tape.param(&model.store, model.p(bias));
    let scaled = tape.mul(normed, g);
    tape.add(scaled, b)
}

/// Multi-head self-attention encoder over the node inputs: an initial
/// linear projection followed by L layers of [MHSA, FF], each sub-layer
/// wrapped in a skip-connection and layer normalization.
pub fn encode(
    tape: &mut Tape,
    model: &PolicyModel,
    inputs: &[Var],
    mut capture: Option<&mut Vec<AttentionRecord>>,
) -> Var {
    let cfg = &model.config;
    let x = tape.stack_rows(inputs);
    let w_e = tape.param(&model.store, model.p("enc.w"));
    let b_e = tape.param(&model.store, model.p("enc.b"));
    let h0 = tape.matmul(x, w_e);
    let mut h = tape.add(h0, b_e);

    for l in 0..cfg.layers {
        // MHSA sub-layer
        let mut heads = Vec::with_capacity(cfg.heads);
        for m in 0..cfg.heads {
            let w = tape.param(&model.store, model.p(&format!("enc{l}.head{m}.w")));
            let e = tape.matmul(h, w);
            let scores = tape.matmul_nt(e, e);
            let scaled = tape.scale(scores, 1.0 / (cfg.d_k as f64).sqrt());
            let attn = tape.softmax_lastdim(scaled);
            if let Some(records) = capture.as_deref_mut() {
                records.push(AttentionRecord {
                    layer: l,
                    head: m,
                    weights: tape.value(attn).clone(),
                });
            }
            heads.push(tape.matmul(attn, e));
        }
        let concat = tape.concat_cols(&heads);
        let w_o = tape.param(&model.store, model.p(&format!("enc{l}.wo")));
        let mhsa = tape.matmul(concat, w_o);
        let skip = tape.add(h, mhsa);
        let h1 = layer_norm_affine(tape, model, skip, &format!("enc{l}.ln1.g"), &format!("enc{l}.ln1.b"));

        // FF sub-layer
        let w1 = tape.param(&model.store, model.p(&format!("enc{l}.ff.w1")));
        let b1 = tape.param(&model.store, model.p(&format!("enc{l}.ff.b1")));
        let w2 = tape.param(&model.store, model.p(&format!("enc{l}.ff.w2")));
        let b2 = tape.param(&model.store, model.p(&format!("enc{l}.ff.b2")));
        let f = tape.matmul(h1, w1);
        let f = tape.add(f, b1);
        let f = tape.relu(f);
        let f = tape.matmul(f, w2);
        let ff = tape.add(f, b2);
        let skip2 = tape.add(h1, ff);
        h = layer_norm_affine(tape, model, skip2, &format!("enc{l}.ln2.g"), &format!("enc{l}.ln2.b"));
    }
    h
}

/// Embed and encode one sample's candidate set; returns H^(L).
pub fn encode_sample(
    tape: &mut Tape,
    model: &PolicyModel,
    features: Option<&FeatureTable>,
    sample: &Sample,
    capture: Option<&mut Vec<AttentionRecord>>,
) -> Result<Var> {
    let inputs: Vec<Var> = sample
        .candidates
        .iter()
        .map(|&item| embed_input(tape, model, features, item, sample.user_id))
        .collect();
    Ok(encode(tape, model, &inputs, capture))
}
