//! Acceptance gate: ten verifiable criteria covering gradients,
//! equivariance, feasibility, search optimality, metrics, reward shaping,
//! training effectiveness, stability, loss linearity, and reproducibility.
//! Each criterion prints a single PASS line (or panics with its failure).

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;

use exactk::data::{generate_oracle_dataset, DatasetSpec, OracleWorld, Sample};
use exactk::eval::{
    evaluate, hr_at_k, p_at_k, train_pointwise, EvalContext, Method, PointwiseScorer,
};
use exactk::gattn::{
    beam_search, card_log_probs, decode_step, encode_sample, sample_card, DecodeState,
    FeatureMode, FeatureTable, ModelConfig, PolicyModel,
};
use exactk::graph::{build_graph, Constraint, ConstraintGraph};
use exactk::num::Var;
use exactk::reward::{reward_value, train_reward, RewardConfig, RewardModel};
use exactk::rng::{seeded, Rng};
use exactk::training::{combined_step, TrainConfig};
use exactk::{AdamState, ParamStore, Tape, Tensor};

// ---------------------------------------------------------------------------
// shared helpers

fn dense(d: usize) -> FeatureMode {
    FeatureMode::Dense { d_item: d, d_user: d }
}

fn toy_features(n_items: u32, n_users: u32, d: usize, rng: &mut Rng) -> FeatureTable {
    let mut items = BTreeMap::new();
    let mut users = BTreeMap::new();
    for i in 0..n_items {
        items.insert(i, (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    for u in 0..n_users {
        users.insert(u, (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    FeatureTable { items, users, d_item: d, d_user: d }
}

fn toy_sample(candidates: Vec<u32>, k: usize, user: u32) -> Sample {
    Sample {
        user_id: user,
        card: candidates[..k].to_vec(),
        candidates,
        label: 1,
        positive_item: None,
    }
}

fn toy_model(k: usize, n: usize, d: usize, seed: u64) -> PolicyModel {
    let config = ModelConfig {
        d_x: 6,
        d_h: 4,
        d_k: 2,
        heads: 2,
        layers: 1,
        k,
        n,
        beam_size: 3,
        rnn_units: 4,
        features: dense(d),
    };
    PolicyModel::new(config, &mut seeded(seed)).unwrap()
}

/// Central-finite-difference check of every parameter element against the
/// gradients accumulated by `backward`.
fn fd_check(
    store: &mut ParamStore,
    build: &dyn Fn(&mut Tape, &ParamStore) -> Var,
    h: f64,
    tol: f64,
    what: &str,
) {
    let loss_of = |store: &ParamStore| {
        let mut tape = Tape::new();
        let loss = build(&mut tape, store);
        tape.value(loss).item()
    };
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, store);
    tape.backward(loss, store);
    for id in store.ids().collect::<Vec<_>>() {
        let analytic = store.grad(id).data().to_vec();
        #[allow(clippy::needless_range_loop)]
        for e in 0..analytic.len() {
            let orig = store.value(id).data()[e];
            store.value_mut(id).data_mut()[e] = orig + h;
            let up = loss_of(store);
            store.value_mut(id).data_mut()[e] = orig - h;
            let down = loss_of(store);
            store.value_mut(id).data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[e].abs().max(numeric.abs()).max(1.0);
            assert!(
                (analytic[e] - numeric).abs() / denom < tol,
                "{what}: param {} elem {e}: analytic {} vs numeric {}",
                store.name(id),
                analytic[e],
                numeric
            );
        }
    }
}

fn rand_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n)
            .map(|_| {
                let v: f64 = rng.gen_range(0.3..1.0);
                if rng.gen_bool(0.5) {
                    -v
                } else {
                    v
                }
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// criterion 1: gradient integrity

#[test]
fn criterion_1_gradient_integrity() {
    let start = Instant::now();
    let mut rng = seeded(101);

    // every primitive, exercised in small compositions
    type Build = Box<dyn Fn(&mut Tape, &ParamStore) -> Var>;
    let id0 = |s: &ParamStore| s.id("p0").unwrap();
    let id1 = |s: &ParamStore| s.id("p1").unwrap();
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        ("matmul 2d*2d + add bias + relu + sum", vec![vec![3, 4], vec![4, 2]], Box::new(move |t, s| {
            let a = t.param(s, id0(s));
            let b = t.param(s, id1(s));
            let m = t.matmul(a, b);
            let r = t.relu(m);
            t.sum(r)
        })),
        ("matmul 1d*2d / 2d*1d / 1d*1d", vec![vec![3], vec![3, 4]], Box::new(move |t, s| {
            let v = t.param(s, id0(s));
            let m = t.param(s, id1(s));
            let row = t.matmul(v, m); // [4]
            let col = t.matmul(m, row); // [3]
            let dot = t.matmul(col, v); // [1]
            t.sum(dot)
        })),
        ("matmul_nt + softmax + mul + mean", vec![vec![4, 3], vec![5, 3]], Box::new(move |t, s| {
            let a = t.param(s, id0(s));
            let b = t.param(s, id1(s));
            let m = t.matmul_nt(a, b);
            let sm = t.softmax_lastdim(m);
            let x = t.mul(sm, m);
            t.mean(x)
        })),
        ("add/mul with row broadcast", vec![vec![3, 4], vec![4]], Box::new(move |t, s| {
            let a = t.param(s, id0(s));
            let b = t.param(s, id1(s));
            let x = t.add(a, b);
            let y = t.mul(x, b);
            let z = t.mul(y, y);
            t.sum(z)
        })),
        ("concat1d/slice1d/stack_rows/concat_cols/row/get", vec![vec![3], vec![4]], Box::new(move |t, s| {
            let a = t.param(s, id0(s));
            let b = t.param(s, id1(s));
            let cat = t.concat1d(&[a, b]);
            let sl = t.slice1d(cat, 2, 3);
            let rows = t.stack_rows(&[sl, a]);
            let wide = t.concat_cols(&[rows, rows]);
            let r = t.row(wide, 1);
            let g = t.get(r, 4);
            let total = t.sum(wide);
            let prod = t.mul(g, total);
            t.sum(prod)
        })),
        ("tanh/sigmoid/log/scale/layer_norm", vec![vec![2, 5]], Box::new(move |t, s| {
            let a = t.param(s, id0(s));
            let ln = t.layer_norm(a);
            let th = t.tanh(ln);
            let sg = t.sigmoid(th);
            let lg = t.log(sg);
            let sc = t.scale(lg, -1.7);
            t.mean(sc)
        })),
    ];
    for (what, shapes, build) in &cases {
        let mut store = ParamStore::new();
        for (i, shape) in shapes.iter().enumerate() {
            store.add(&format!("p{i}"), rand_tensor(shape, &mut rng));
        }
        fd_check(&mut store, build.as_ref(), 1e-6, 1e-4, what);
    }

    // end-to-end policy log-probability (d_h = 4, N = 5, K = 2)
    let features = toy_features(10, 2, 3, &mut rng);
    let sample = toy_sample((0..5).collect(), 2, 1);
    let graph = ConstraintGraph::complete(sample.candidates.clone());
    let mut policy = toy_model(2, 5, 3, 102);
    let card = vec![4usize, 2];
    {
        let build = |t: &mut Tape, s: &ParamStore| {
            let model = PolicyModel { config: policy.config.clone(), store: s.clone() };
            let h = encode_sample(t, &model, Some(&features), &sample, None).unwrap();
            let terms = card_log_probs(t, &model, &graph, h, &card).unwrap();
            let mut sum = terms[0];
            for &x in &terms[1..] {
                sum = t.add(sum, x);
            }
            t.scale(sum, -0.5)
        };
        fd_check(&mut policy.store, &build, 1e-5, 1e-3, "policy log-prob");
    }

    // end-to-end reward-estimator score
    let mut reward =
        RewardModel::new(RewardConfig::defaults(2, dense(3)), &mut seeded(103)).unwrap();
    {
        let cfg = reward.config.clone();
        let features = features.clone();
        let build = move |t: &mut Tape, s: &ParamStore| {
            let model = RewardModel { config: cfg.clone(), store: s.clone() };
            model.score_card(t, Some(&features), &[4, 2], 1)
        };
        fd_check(&mut reward.store, &build, 1e-5, 1e-3, "reward score");
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 1 min");
    println!("criterion 1 (gradient integrity): PASS ({elapsed:?})");
}

// ---------------------------------------------------------------------------
// criterion 2: permutation equivariance

#[test]
fn criterion_2_permutation_equivariance() {
    let mut rng = seeded(201);
    let d = 3;
    let features = toy_features(40, 6, d, &mut rng);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let model = toy_model(2, 7, d, 2000 + trial);
        let mut cands: Vec<u32> = (0..40).collect();
        cands.shuffle(&mut rng);
        cands.truncate(7);
        let s1 = toy_sample(cands.clone(), 2, trial as u32 % 6);
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut rng);
        let s2 = toy_sample(perm.iter().map(|&i| cands[i]).collect(), 2, trial as u32 % 6);

        let mut t1 = Tape::new();
        let h1 = encode_sample(&mut t1, &model, Some(&features), &s1, None).unwrap();
        let mut t2 = Tape::new();
        let h2 = encode_sample(&mut t2, &model, Some(&features), &s2, None).unwrap();
        for (out_row, &in_row) in perm.iter().enumerate() {
            for (a, b) in t1
                .value(h1)
                .row_slice(in_row)
                .iter()
                .zip(t2.value(h2).row_slice(out_row))
            {
                worst = worst.max((a - b).abs());
            }
        }
    }
    assert!(worst < 1e-9, "max deviation {worst}");
    println!("criterion 2 (permutation equivariance): PASS (max dev {worst:.2e})");
}

// ---------------------------------------------------------------------------
// criterion 3: feasibility

fn random_titles(n: usize, rng: &mut Rng) -> Vec<String> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=10);
            (0..len)
                .map(|_| (b'a' + rng.gen_range(0..6)) as char)
                .collect()
        })
        .collect()
}

#[test]
fn criterion_3_feasibility() {
    let mut rng = seeded(301);
    let d = 3;
    let features = toy_features(60, 6, d, &mut rng);
    let (n, k) = (9, 3);
    let mut decoded = 0usize;
    let mut trial = 0u64;
    while decoded < 1000 {
        trial += 1;
        let model = toy_model(k, n, d, 3000 + trial);
        let mut cands: Vec<u32> = (0..60).collect();
        cands.shuffle(&mut rng);
        cands.truncate(n);
        let sample = toy_sample(cands.clone(), k, (trial % 6) as u32);
        // alternate complete graphs and min-ned constraint graphs
        let graph = if trial.is_multiple_of(2) {
            build_graph(&cands, None, &Constraint::None).unwrap()
        } else {
            let titles = random_titles(n, &mut rng);
            build_graph(&cands, Some(&titles), &Constraint::MinNed { tau: 0.5 }).unwrap()
        };
        let mut cards = Vec::new();
        if let Ok(c) = beam_search(&model, Some(&features), &sample, &graph) {
            cards.push(c);
        }
        for _ in 0..4 {
            if let Ok((c, _)) = sample_card(&model, Some(&features), &sample, &graph, &mut rng) {
                cards.push(c);
            }
        }
        for card in cards {
            assert_eq!(card.len(), k);
            let mut dedup = card.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(dedup.len(), k, "duplicate items in {card:?}");
            assert!(graph.is_clique(&card), "clique violation in {card:?}");
            decoded += 1;
        }
    }

    // beam_size = 1 decode equals greedy argmax decode exactly
    for t in 0..25u64 {
        let mut model = toy_model(k, n, d, 3500 + t);
        model.config.beam_size = 1;
        let cands: Vec<u32> = (0..n as u32).collect();
        let sample = toy_sample(cands.clone(), k, (t % 6) as u32);
        let graph = ConstraintGraph::complete(cands);
        let beam = beam_search(&model, Some(&features), &sample, &graph).unwrap();

        let mut tape = Tape::new();
        let h = encode_sample(&mut tape, &model, Some(&features), &sample, None).unwrap();
        let mut state = DecodeState::initial(&mut tape, &model, n);
        for _ in 0..k {
            let probs = decode_step(&mut tape, &model, &state, h).unwrap();
            let pv = tape.value(probs).data().to_vec();
            let a = (0..n)
                .filter(|&j| !state.mask[j])
                .max_by(|&x, &y| pv[x].partial_cmp(&pv[y]).unwrap().then_with(|| y.cmp(&x)))
                .unwrap();
            state = exactk::gattn::advance_state(&mut tape, &model, &state, a, &graph, h, pv[a].ln());
        }
        assert_eq!(beam, state.prefix, "beam-1 != greedy at trial {t}");
    }
    println!("criterion 3 (feasibility): PASS ({decoded} cards checked)");
}

// ---------------------------------------------------------------------------
// criterion 4: oracle equivalence of beam search at small scale

#[test]
fn criterion_4_beam_search_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = seeded(401);
    let d = 3;
    let features = toy_features(20, 5, d, &mut rng);
    for trial in 0..50u64 {
        let n = rng.gen_range(5..=8usize);
        let k = rng.gen_range(2..=3usize);
        let mut model = toy_model(k, n, d, 4000 + trial);
        model.config.beam_size = 512; // exhaustive: >= C(N,K) and every prefix
        let cands: Vec<u32> = (0..n as u32).collect();
        let sample = toy_sample(cands.clone(), k, (trial % 5) as u32);
        let graph = ConstraintGraph::complete(cands);

        let beam = beam_search(&model, Some(&features), &sample, &graph).unwrap();

        // exhaustive enumeration of every ordered K-sequence
        let mut tape = Tape::new();
        let h = encode_sample(&mut tape, &model, Some(&features), &sample, None).unwrap();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut seq = Vec::with_capacity(k);
        enumerate_sequences(&mut seq, n, k, &mut |seq| {
            let terms = card_log_probs(&mut tape, &model, &graph, h, seq).unwrap();
            let lp: f64 = terms.iter().map(|&t| tape.value(t).item()).sum();
            let better = match &best {
                None => true,
                Some((b, bseq)) => lp > *b || (lp == *b && *seq < bseq[..]),
            };
            if better {
                best = Some((lp, seq.to_vec()));
            }
        });
        let (best_lp, best_seq) = best.unwrap();

        let beam_terms = {
            let mut t2 = Tape::new();
            let h2 = encode_sample(&mut t2, &model, Some(&features), &sample, None).unwrap();
            let terms = card_log_probs(&mut t2, &model, &graph, h2, &beam).unwrap();
            terms.iter().map(|&x| t2.value(x).item()).sum::<f64>()
        };
        assert!(
            (beam_terms - best_lp).abs() < 1e-9,
            "trial {trial}: beam {beam:?} lp {beam_terms} vs optimum {best_seq:?} lp {best_lp}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    println!("criterion 4 (beam-search oracle equivalence): PASS ({elapsed:?})");
}

fn enumerate_sequences(seq: &mut Vec<usize>, n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    if seq.len() == k {
        f(seq);
        return;
    }
    for j in 0..n {
        if !seq.contains(&j) {
            seq.push(j);
            enumerate_sequences(seq, n, k, f);
            seq.pop();
        }
    }
}

// ---------------------------------------------------------------------------
// criterion 5: metric exactness

#[test]
fn criterion_5_metric_exactness() {
    // ten hand-computed fixtures: (predicted, truth, positive, hr, p-hit)
    #[allow(clippy::type_complexity)]
    let fix: Vec<(Vec<u32>, Vec<u32>, Option<u32>, f64, Option<bool>)> = vec![
        (vec![1, 2, 3, 4], vec![1, 2, 3, 4], Some(1), 1.0, Some(true)),
        (vec![1, 2, 3, 4], vec![5, 6, 7, 8], Some(5), 0.0, Some(false)),
        (vec![1, 2, 3, 4], vec![1, 2, 7, 8], Some(2), 0.5, Some(true)),
        (vec![1, 2, 3, 4], vec![4, 9, 10, 11], Some(9), 0.25, Some(false)),
        (vec![4, 3, 2, 1], vec![1, 2, 3, 4], Some(4), 1.0, Some(true)),
        (vec![1, 2, 3, 4], vec![2, 3, 4, 5], Some(5), 0.75, Some(false)),
        (vec![10, 20, 30, 40], vec![40, 50, 60, 20], Some(20), 0.5, Some(true)),
        (vec![1, 2, 3, 4], vec![1, 5, 6, 7], None, 0.25, None),
        (vec![7, 8, 9, 11], vec![11, 9, 8, 7], Some(11), 1.0, Some(true)),
        (vec![1, 2, 3, 4], vec![9, 2, 11, 12], Some(12), 0.25, Some(false)),
    ];
    for (i, (pred, truth, pos, hr, hit)) in fix.iter().enumerate() {
        let h = hr_at_k(std::slice::from_ref(pred), std::slice::from_ref(truth), 4);
        assert_eq!(h, *hr, "fixture {i} hr");
        let (p, excl) = p_at_k(std::slice::from_ref(pred), &[*pos]);
        match hit {
            Some(true) => assert_eq!((p, excl), (1.0, 0), "fixture {i} p"),
            Some(false) => assert_eq!((p, excl), (0.0, 0), "fixture {i} p"),
            None => assert_eq!(excl, 1, "fixture {i} exclusion"),
        }
    }
    // aggregate over the full table
    let preds: Vec<Vec<u32>> = fix.iter().map(|f| f.0.clone()).collect();
    let truths: Vec<Vec<u32>> = fix.iter().map(|f| f.1.clone()).collect();
    let poss: Vec<Option<u32>> = fix.iter().map(|f| f.2).collect();
    let hr_total: f64 = fix.iter().map(|f| f.3).sum::<f64>() / fix.len() as f64;
    assert_eq!(hr_at_k(&preds, &truths, 4), hr_total);
    let hits = fix.iter().filter(|f| f.4 == Some(true)).count();
    let counted = fix.iter().filter(|f| f.4.is_some()).count();
    let (p, excl) = p_at_k(&preds, &poss);
    assert_eq!(p, hits as f64 / counted as f64);
    assert_eq!(excl, 1);
    println!("criterion 5 (metric exactness): PASS (10 fixtures)");
}

// ---------------------------------------------------------------------------
// criterion 6: reward rescale

#[test]
fn criterion_6_reward_rescale() {
    for &(score, expect) in &[(0.0, -1.0), (0.25, -0.5), (0.5, 0.0), (0.75, 0.5), (1.0, 1.0)] {
        assert_eq!(reward_value(score), expect);
    }
    println!("criterion 6 (reward rescale): PASS");
}

// ---------------------------------------------------------------------------
// criteria 7 + 8: training effectiveness and hill-climbing stability
// (one expensive oracle-benchmark run shared between both)

struct BenchOutcome {
    p_policy: f64,
    ratio_policy: f64,
    reward_policy: f64,
    p_greedy: f64,
    ratio_greedy: f64,
    /// mean training reward per optimizer step (full setting only)
    step_rewards: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn phase2_and_eval(
    seed: u64,
    policy_sampling: bool,
    hill_climbing: bool,
    train: &[Sample],
    test: &[Sample],
    reward: &RewardModel,
    scorer: &PointwiseScorer,
    world: &OracleWorld,
    features: &FeatureTable,
) -> BenchOutcome {
    let config = TrainConfig {
        alpha: 0.5,
        m: 5,
        epochs: 30,
        batch_size: 32,
        learning_rate: 0.005,
        seed,
        policy_sampling,
        hill_climbing,
        greedy_feed: false,
    };
    let model_cfg = ModelConfig::defaults(3, 10, dense(world.dim));
    let mut policy = PolicyModel::new(model_cfg, &mut seeded(9000 + seed)).unwrap();
    let mut adam = AdamState::new(&policy.store, config.learning_rate);
    let mut rng = seeded(9100 + seed);
    let demos: Vec<Sample> = train.iter().filter(|s| s.label == 1).cloned().collect();
    let mut order: Vec<usize> = (0..demos.len()).collect();
    let mut step_rewards = Vec::new();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| demos[i].clone()).collect();
            let stats = combined_step(
                &mut policy,
                &batch,
                &Constraint::None,
                Some(reward),
                Some(features),
                &config,
                &mut adam,
                &mut rng,
            )
            .unwrap();
            // criterion 8, first half: hill-climb dominance at every step
            for diag in &stats.buffers {
                let max = diag.buffer_rewards.iter().cloned().fold(f64::MIN, f64::max);
                assert!(diag.reward >= max, "selected {} < buffer max {max}", diag.reward);
            }
            step_rewards.push(stats.mean_reward);
        }
    }

    let ctx = EvalContext {
        policy: Some(&policy),
        reward: Some(reward),
        scorer: Some(scorer),
        world: Some(world),
        features: Some(features),
        constraint: Constraint::None,
    };
    let rp = evaluate(Method::PolicyBeam, test, &ctx).unwrap();
    let rg = evaluate(Method::GreedyBaseline, test, &ctx).unwrap();
    BenchOutcome {
        p_policy: rp.p_at_k,
        ratio_policy: rp.oracle_ratio.unwrap(),
        reward_policy: rp.mean_reward.unwrap(),
        p_greedy: rg.p_at_k,
        ratio_greedy: rg.oracle_ratio.unwrap(),
        step_rewards,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_err(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

#[test]
fn criteria_7_and_8_training_effectiveness_and_stability() {
    let start = Instant::now();
    let seeds = [1u64, 2, 3];
    let mut full = Vec::new(); // (p_policy, ratio_policy, reward)
    let mut abl_no_hc = Vec::new(); // hill-climbing off
    let mut abl_no_ps = Vec::new(); // policy-sampling off
    let mut greedy = Vec::new(); // (p, ratio)
    let mut first_seed_steps = Vec::new();

    for &seed in &seeds {
        let mut rng = seeded(7000 + seed);
        let world = OracleWorld::random(1250, 60, 4, 1.0, &mut rng);
        let spec = DatasetSpec::new(3, 10, seed).unwrap();
        let samples = generate_oracle_dataset(&world, &spec, 1250, &mut rng).unwrap();
        let (train, test) = exactk::data::split(samples, 0.8, &mut rng).unwrap();
        assert_eq!(train.len(), 2000);
        assert_eq!(test.len(), 500);
        let features = FeatureTable::from_world(&world);

        // shared per-seed reward estimator (Phase 1) and greedy scorer
        let mut reward =
            RewardModel::new(RewardConfig::defaults(3, dense(4)), &mut seeded(7100 + seed))
                .unwrap();
        train_reward(&mut reward, &train, Some(&features), 10, 32, 0.001, &mut seeded(7200 + seed))
            .unwrap();
        let mut scorer = PointwiseScorer::new(dense(4), &mut seeded(7300 + seed)).unwrap();
        train_pointwise(&mut scorer, &train, Some(&features), 10, 0.01, &mut seeded(7400 + seed))
            .unwrap();

        let run = |ps: bool, hc: bool| {
            phase2_and_eval(seed, ps, hc, &train, &test, &reward, &scorer, &world, &features)
        };
        let f = run(true, true);
        let a = run(true, false);
        let b = run(false, true);
        eprintln!(
            "seed {seed}: full P@K {:.4} ratio {:.4} reward {:.4} | no-hc reward {:.4} | \
             no-ps reward {:.4} | greedy P@K {:.4} ratio {:.4}",
            f.p_policy, f.ratio_policy, f.reward_policy, a.reward_policy, b.reward_policy,
            f.p_greedy, f.ratio_greedy
        );
        greedy.push((f.p_greedy, f.ratio_greedy));
        if seed == seeds[0] {
            first_seed_steps = f.step_rewards.clone();
        }
        full.push((f.p_policy, f.ratio_policy, f.reward_policy));
        abl_no_hc.push(a.reward_policy);
        abl_no_ps.push(b.reward_policy);
    }

    // (a) full setting strictly beats the greedy baseline, seed-averaged
    let p_full = mean(&full.iter().map(|x| x.0).collect::<Vec<_>>());
    let r_full = mean(&full.iter().map(|x| x.1).collect::<Vec<_>>());
    let p_greedy = mean(&greedy.iter().map(|x| x.0).collect::<Vec<_>>());
    let r_greedy = mean(&greedy.iter().map(|x| x.1).collect::<Vec<_>>());
    assert!(
        p_full > p_greedy,
        "P@K: policy {p_full:.4} must exceed greedy {p_greedy:.4}"
    );
    assert!(
        r_full > r_greedy,
        "oracle ratio: policy {r_full:.4} must exceed greedy {r_greedy:.4}"
    );

    // (b) full setting's mean reward >= each single ablation within 1 SE
    let rew_full: Vec<f64> = full.iter().map(|x| x.2).collect();
    for (name, abl) in [("no hill-climbing", &abl_no_hc), ("no policy-sampling", &abl_no_ps)] {
        let diffs: Vec<f64> = rew_full.iter().zip(abl.iter()).map(|(f, a)| f - a).collect();
        let (m, se) = (mean(&diffs), std_err(&diffs));
        assert!(
            m >= -se,
            "mean reward vs {name}: diff {m:.4} below -1 SE ({se:.4})"
        );
    }
    println!(
        "criterion 7 (training effectiveness): PASS (P@K {p_full:.4} vs greedy {p_greedy:.4}, \
         ratio {r_full:.4} vs {r_greedy:.4})"
    );

    // criterion 8, second half: training reward trends upward
    assert!(
        first_seed_steps.len() >= 100,
        "need >= 100 steps for the moving-average check"
    );
    let first50 = mean(&first_seed_steps[..50]);
    let last50 = mean(&first_seed_steps[first_seed_steps.len() - 50..]);
    assert!(
        last50 > first50,
        "training reward did not improve: first-50 avg {first50:.4}, last-50 avg {last50:.4}"
    );
    println!(
        "criterion 8 (hill-climbing stability): PASS (reward {first50:.4} -> {last50:.4})"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 1800, "took {elapsed:?}, budget 30 min");
    eprintln!("criteria 7+8 runtime: {elapsed:?}");
}

// ---------------------------------------------------------------------------
// criterion 9: combined-loss linearity

#[test]
fn criterion_9_combined_loss_linearity() {
    let mut rng = seeded(901);
    let world = OracleWorld::random(40, 30, 4, 0.4, &mut rng);
    let spec = DatasetSpec::new(3, 8, 9).unwrap();
    let samples = generate_oracle_dataset(&world, &spec, 40, &mut rng).unwrap();
    let features = FeatureTable::from_world(&world);
    let batch: Vec<Sample> = samples.iter().filter(|s| s.label == 1).take(6).cloned().collect();
    let reward =
        RewardModel::new(RewardConfig::defaults(3, dense(4)), &mut seeded(902)).unwrap();

    let loss_at = |alpha: f64| {
        let mut policy = PolicyModel::new(
            ModelConfig::defaults(3, 8, dense(4)),
            &mut seeded(903),
        )
        .unwrap();
        let config = TrainConfig {
            alpha,
            policy_sampling: true,
            hill_climbing: true,
            ..TrainConfig::default()
        };
        let mut adam = AdamState::new(&policy.store, config.learning_rate);
        combined_step(
            &mut policy,
            &batch,
            &Constraint::None,
            Some(&reward),
            Some(&features),
            &config,
            &mut adam,
            &mut seeded(904), // frozen RNG across the three alpha values
        )
        .unwrap()
        .loss_total
    };
    let (l0, l_half, l1) = (loss_at(0.0), loss_at(0.5), loss_at(1.0));
    let gap = (l_half - 0.5 * (l0 + l1)).abs();
    assert!(gap < 1e-9, "L(0.5)={l_half} vs 0.5(L(0)+L(1))={}", 0.5 * (l0 + l1));
    println!("criterion 9 (combined-loss linearity): PASS (gap {gap:.2e})");
}

// ---------------------------------------------------------------------------
// criterion 10: CLI reproducibility

#[test]
fn criterion_10_cli_reproducibility() {
    let bin = env!("CARGO_BIN_EXE_exactk");
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    for round in ["a", "b"] {
        let data = dir.path().join(format!("data_{round}"));
        let model = dir.path().join(format!("model_{round}"));
        run(&[
            "gen-data", "--mode", "oracle", "--k", "2", "--n", "6", "--users", "40",
            "--items", "30", "--seed", "11", "--out", data.to_str().unwrap(),
        ]);
        run(&[
            "train", "--data", data.to_str().unwrap(), "--epochs", "1", "--seed", "11",
            "--out", model.to_str().unwrap(),
        ]);
        run(&[
            "eval", "--data", data.to_str().unwrap(), "--method", "policy_beam",
            "--policy", model.join("policy.ckpt").to_str().unwrap(),
            "--reward", model.join("reward.ckpt").to_str().unwrap(),
            "--seed", "11",
            "--report", dir.path().join(format!("report_{round}.csv")).to_str().unwrap(),
        ]);
        run(&[
            "eval", "--data", data.to_str().unwrap(), "--method", "greedy_baseline",
            "--seed", "11",
            "--report", dir.path().join(format!("greedy_{round}.csv")).to_str().unwrap(),
        ]);
    }

    let cmp = |a: &str, b: &str| {
        let x = std::fs::read(dir.path().join(a)).unwrap();
        let y = std::fs::read(dir.path().join(b)).unwrap();
        assert_eq!(x, y, "{a} and {b} differ");
    };
    cmp("data_a/train.tsv", "data_b/train.tsv");
    cmp("data_a/test.tsv", "data_b/test.tsv");
    cmp("data_a/world.ckpt", "data_b/world.ckpt");
    cmp("model_a/curve.csv", "model_b/curve.csv");
    cmp("model_a/policy.ckpt", "model_b/policy.ckpt");
    cmp("report_a.csv", "report_b.csv");
    cmp("greedy_a.csv", "greedy_b.csv");
    println!("criterion 10 (CLI reproducibility): PASS");
}
