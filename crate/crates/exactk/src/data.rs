//! Dataset construction, storage, splitting, and loading: the
//! implicit-feedback card construction, a synthetic oracle generator
//! with enumerable ground truth, and the sample TSV format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::num::{manifest_get, read_checkpoint, write_checkpoint, ParamStore, TensorData};
use crate::rng::Rng;

/// One training/evaluation record: a user, a candidate set of N items,
/// a card of K items, the card's click label, and the clicked item for
/// positive cards.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub user_id: u32,
    pub card: Vec<u32>,
    pub candidates: Vec<u32>,
    pub label: u8,
    pub positive_item: Option<u32>,
}

impl Sample {
    /// Check every Sample invariant against the dataset shape.
    pub fn validate(&self, k: usize, n: usize) -> std::result::Result<(), String> {
        if self.card.len() != k {
            return Err(format!("card has {} items, expected K={k}", self.card.len()));
        }
        if self.candidates.len() != n {
            return Err(format!(
                "candidate set has {} items, expected N={n}",
                self.candidates.len()
            ));
        }
        let card_set: BTreeSet<u32> = self.card.iter().copied().collect();
        if card_set.len() != k {
            return Err("card items are not distinct".into());
        }
        let cand_set: BTreeSet<u32> = self.candidates.iter().copied().collect();
        if cand_set.len() != n {
            return Err("candidate items are not distinct".into());
        }
        if !card_set.is_subset(&cand_set) {
            return Err("card is not a subset of candidates".into());
        }
        match (self.label, self.positive_item) {
            (1, Some(p)) if !card_set.contains(&p) => {
                Err(format!("positive item {p} is not in the card"))
            }
            (1, None) => Err("label 1 sample lacks a positive item".into()),
            (0, Some(_)) => Err("label 0 sample carries a positive item".into()),
            (l, _) if l > 1 => Err(format!("label must be 0 or 1, got {l}")),
            _ => Ok(()),
        }
    }

    /// Candidate index of each card item.
    pub fn card_indices(&self) -> Vec<usize> {
        self.card
            .iter()
            .map(|id| {
                self.candidates
                    .iter()
                    .position(|c| c == id)
                    .expect("card item missing from candidates")
            })
            .collect()
    }
}

/// Dataset shape: card size K, candidate count N, train fraction, seed.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub k: usize,
    pub n: usize,
    pub split_ratio: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(k: usize, n: usize, seed: u64) -> Result<Self> {
        let spec = DatasetSpec { k, n, split_ratio: 0.8, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || self.k >= self.n {
            return Err(Error::Config(format!(
                "K must be < N and both positive, got K={} N={}",
                self.k, self.n
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio must be in (0,1), got {}",
                self.split_ratio
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Synthetic oracle world

/// Latent ground truth for the synthetic benchmark. Card utility is
/// U(A,u) = sum_i <z_u, z_ai> + beta * sum_{i<j} <z_ai, z_aj>, so the
/// exact optimum per sample is computable by enumeration.
#[derive(Debug, Clone)]
pub struct OracleWorld {
    pub dim: usize,
    pub user_vecs: Vec<Vec<f64>>,
    pub item_vecs: Vec<Vec<f64>>,
    pub beta: f64,
    pub temperature: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl OracleWorld {
    pub fn random(n_users: usize, n_items: usize, dim: usize, beta: f64, rng: &mut Rng) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let mut vecs = |count: usize| -> Vec<Vec<f64>> {
            (0..count)
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0) * scale).collect())
                .collect()
        };
        let user_vecs = vecs(n_users);
        let item_vecs = vecs(n_items);
        OracleWorld { dim, user_vecs, item_vecs, beta, temperature: 0.0 }
    }

    pub fn affinity(&self, user: u32, item: u32) -> f64 {
        dot(&self.user_vecs[user as usize], &self.item_vecs[item as usize])
    }

    pub fn utility(&self, user: u32, card: &[u32]) -> f64 {
        let mut u: f64 = card.iter().map(|&a| self.affinity(user, a)).sum();
        for (i, &a) in card.iter().enumerate() {
            for &b in &card[i + 1..] {
                u += self.beta * dot(&self.item_vecs[a as usize], &self.item_vecs[b as usize]);
            }
        }
        u
    }

    /// Exhaustive optimum utility over all K-subsets of the candidates.
    pub fn optimal_utility(&self, user: u32, candidates: &[u32], k: usize) -> f64 {
        let graph = crate::graph::ConstraintGraph::complete(candidates.to_vec());
        let best = crate::graph::brute_force_best_card(
            &graph,
            |c| {
                let card: Vec<u32> = c.iter().map(|&i| candidates[i]).collect();
                self.utility(user, &card)
            },
            k,
        )
        .expect("complete graph always has a K-clique");
        let card: Vec<u32> = best.iter().map(|&i| candidates[i]).collect();
        self.utility(user, &card)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut store: ParamStore<f64> = ParamStore::new();
        store.add(
            "user_vecs",
            TensorData::matrix(
                self.user_vecs.len(),
                self.dim,
                self.user_vecs.concat(),
            ),
        );
        store.add(
            "item_vecs",
            TensorData::matrix(
                self.item_vecs.len(),
                self.dim,
                self.item_vecs.concat(),
            ),
        );
        let manifest = vec![
            ("kind".to_string(), "oracle_world".to_string()),
            ("dim".to_string(), self.dim.to_string()),
            ("beta".to_string(), format!("{:?}", self.beta)),
            ("temperature".to_string(), format!("{:?}", self.temperature)),
        ];
        write_checkpoint(path, &store, &manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (records, manifest) = read_checkpoint::<f64>(path)?;
        let get = |name: &str| -> Result<&TensorData<f64>> {
            records
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Checkpoint(format!("missing record {name:?}")))
        };
        let dim: usize = manifest_get(&manifest, "dim")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing dim".into()))?;
        let beta: f64 = manifest_get(&manifest, "beta")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Checkpoint("missing beta".into()))?;
        let temperature: f64 = manifest_get(&manifest, "temperature")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        let to_rows = |t: &TensorData<f64>| -> Vec<Vec<f64>> {
            let (rows, _) = t.as_2d();
            (0..rows).map(|r| t.row_slice(r).to_vec()).collect()
        };
        Ok(OracleWorld {
            dim,
            user_vecs: to_rows(get("user_vecs")?),
            item_vecs: to_rows(get("item_vecs")?),
            beta,
            temperature,
        })
    }
}

/// Number of random K-subsets drawn per user by the click simulation.
const CLICK_DRAWS: usize = 200;

/// Generate 2 samples (one clicked, one not) per user from the oracle
/// world. The clicked card is the best of 200 random K-subsets by utility,
/// the non-clicked card the 90th-percentile draw (a strong card the user
/// skipped); the positive item is the card member with the highest user
/// affinity, ties broken by lowest item id.
pub fn generate_oracle_dataset(
    world: &OracleWorld,
    spec: &DatasetSpec,
    n_users: usize,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    spec.validate()?;
    if n_users > world.user_vecs.len() {
        return Err(Error::Config(format!(
            "requested {n_users} users but world has {}",
            world.user_vecs.len()
        )));
    }
    if spec.n > world.item_vecs.len() {
        return Err(Error::Config(format!(
            "N={} exceeds world item count {}",
            spec.n,
            world.item_vecs.len()
        )));
    }
    let all_items: Vec<u32> = (0..world.item_vecs.len() as u32).collect();
    let mut samples = Vec::with_capacity(2 * n_users);
    for user in 0..n_users as u32 {
        let candidates: Vec<u32> = all_items
            .choose_multiple(rng, spec.n)
            .copied()
            .collect();
        let noisy = |world: &OracleWorld, card: &[u32], rng: &mut Rng| -> f64 {
            let mut u = world.utility(user, card);
            if world.temperature > 0.0 {
                u += world.temperature * rng.gen_range(-1.0..1.0);
            }
            u
        };
        let draws: Vec<(Vec<u32>, f64)> = (0..CLICK_DRAWS)
            .map(|_| {
                let card: Vec<u32> = candidates
                    .choose_multiple(rng, spec.k)
                    .copied()
                    .collect();
                let u = noisy(world, &card, rng);
                (card, u)
            })
            .collect();
        let best = draws
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap()
            .0
            .clone();
        // The skipped (label-0) card is a strong-but-not-best draw: ranking
        // all draws by utility and taking the 90th percentile yields a hard
        // negative, which forces the click model to discriminate near the
        // top of the utility range rather than saturating on easy contrasts.
        let mut ranked: Vec<&(Vec<u32>, f64)> = draws.iter().collect();
        ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let negative = ranked[ranked.len() * 9 / 10].0.clone();
        let positive = *best
            .iter()
            .min_by(|&&a, &&b| {
                world
                    .affinity(user, b)
                    .partial_cmp(&world.affinity(user, a))
                    .unwrap()
                    .then(a.cmp(&b))
            })
            .unwrap();
        samples.push(Sample {
            user_id: user,
            card: best,
            candidates: candidates.clone(),
            label: 1,
            positive_item: Some(positive),
        });
        samples.push(Sample {
            user_id: user,
            card: negative,
            candidates,
            label: 0,
            positive_item: None,
        });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// Implicit-feedback construction

/// Explicit rating triple, e.g. parsed from MovieLens.
#[derive(Debug, Clone, Copy)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
}

/// Output of [`build_from_implicit_feedback`].
pub struct BuiltDataset {
    pub samples: Vec<Sample>,
    /// Users dropped for having too few distinct rated items.
    pub skipped_users: usize,
}

/// Card construction from implicit feedback: 5-star ratings become
/// positive feedback, every other entry is unknown. Each positive
/// (user, item) event yields a positive card containing the item plus
/// K-1 non-positive items, and one negative card of K non-positive
/// items; candidates fill to N from the user's rated items.
pub fn build_from_implicit_feedback(
    ratings: &[Rating],
    spec: &DatasetSpec,
    rng: &mut Rng,
) -> Result<BuiltDataset> {
    spec.validate()?;
    if ratings.is_empty() {
        return Err(Error::Data("no ratings supplied".into()));
    }
    let mut by_user: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
    for r in ratings {
        let best = by_user.entry(r.user).or_default().entry(r.item).or_insert(r.rating);
        if r.rating > *best {
            *best = r.rating;
        }
    }

    let mut samples = Vec::new();
    let mut skipped_users = 0usize;
    for (&user, items) in &by_user {
        let known: Vec<u32> = items.keys().copied().collect();
        let positives: Vec<u32> = items
            .iter()
            .filter(|(_, &r)| r >= 5.0)
            .map(|(&i, _)| i)
            .collect();
        let non_positives: Vec<u32> = known
            .iter()
            .copied()
            .filter(|i| !positives.contains(i))
            .collect();
        if positives.is_empty() {
            continue;
        }
        if known.len() < spec.n || non_positives.len() < spec.k {
            skipped_users += 1;
            continue;
        }
        for &pos in &positives {
            // positive card: the clicked item plus K-1 non-positive items
            let mut card: Vec<u32> = non_positives
                .choose_multiple(rng, spec.k - 1)
                .copied()
                .collect();
            card.push(pos);
            card.shuffle(rng);
            samples.push(make_sample(user, card, Some(pos), &known, spec, rng));

            // negative card: K non-positive items
            let neg_card: Vec<u32> = non_positives
                .choose_multiple(rng, spec.k)
                .copied()
                .collect();
            samples.push(make_sample(user, neg_card, None, &known, spec, rng));
        }
    }
    if samples.is_empty() {
        return Err(Error::Data(
            "no user had enough rated items to build any card".into(),
        ));
    }
    Ok(BuiltDataset { samples, skipped_users })
}

fn make_sample(
    user: u32,
    card: Vec<u32>,
    positive: Option<u32>,
    known: &[u32],
    spec: &DatasetSpec,
    rng: &mut Rng,
) -> Sample {
    let fill_pool: Vec<u32> = known
        .iter()
        .copied()
        .filter(|i| !card.contains(i))
        .collect();
    let mut candidates = card.clone();
    candidates.extend(fill_pool.choose_multiple(rng, spec.n - card.len()).copied());
    candidates.shuffle(rng);
    Sample {
        user_id: user,
        card,
        candidates,
        label: u8::from(positive.is_some()),
        positive_item: positive,
    }
}

/// Parse whitespace/tab separated (user, item, rating) triples.
pub fn read_ratings(path: &Path) -> Result<Vec<Rating>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let parse = |f: Option<&str>, what: &str| -> Result<f64> {
            f.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("bad {what}"),
            })
        };
        let user = parse(fields.next(), "user id")? as u32;
        let item = parse(fields.next(), "item id")? as u32;
        let rating = parse(fields.next(), "rating")?;
        out.push(Rating { user, item, rating });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Split

/// Deterministic random split; train size is floor(len * ratio), the
/// remainder goes to test.
pub fn split(samples: Vec<Sample>, ratio: f64, rng: &mut Rng) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if samples.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must be in (0,1), got {ratio}")));
    }
    let n_train = ((samples.len() as f64) * ratio).floor() as usize;
    let mut samples = samples;
    samples.shuffle(rng);
    let test = samples.split_off(n_train);
    Ok((samples, test))
}

// ---------------------------------------------------------------------------
// TSV format

const HEADER: &str = "user\tcard\tcandidates\tlabel\tpositive";

fn join_ids(ids: &[u32]) -> String {
    ids.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// UTF-8, tab-separated, comma-joined id lists, "-" for an absent
/// positive item, one header line.
pub fn write_samples(samples: &[Sample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            s.user_id,
            join_ids(&s.card),
            join_ids(&s.candidates),
            s.label,
            s.positive_item
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".to_string())
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let err = |lineno: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line: lineno + 1,
        msg,
    };
    let mut shape: Option<(usize, usize)> = None;
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line != HEADER {
                return Err(err(0, format!("bad header, expected {HEADER:?}")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(lineno, format!("expected 5 columns, got {}", fields.len())));
        }
        let parse_id = |s: &str| -> std::result::Result<u32, String> {
            s.parse().map_err(|_| format!("non-integer id {s:?}"))
        };
        let parse_ids = |s: &str| -> std::result::Result<Vec<u32>, String> {
            s.split(',').map(parse_id).collect()
        };
        let user_id = parse_id(fields[0]).map_err(|m| err(lineno, m))?;
        let card = parse_ids(fields[1]).map_err(|m| err(lineno, m))?;
        let candidates = parse_ids(fields[2]).map_err(|m| err(lineno, m))?;
        let label: u8 = fields[3]
            .parse()
            .map_err(|_| err(lineno, format!("bad label {:?}", fields[3])))?;
        let positive_item = match fields[4] {
            "-" => None,
            s => Some(parse_id(s).map_err(|m| err(lineno, m))?),
        };
        let sample = Sample { user_id, card, candidates, label, positive_item };
        let (k, n) = *shape.get_or_insert((sample.card.len(), sample.candidates.len()));
        sample.validate(k, n).map_err(|m| err(lineno, m))?;
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn spec(k: usize, n: usize) -> DatasetSpec {
        DatasetSpec::new(k, n, 7).unwrap()
    }

    #[test]
    fn oracle_sample_counts_and_invariants() {
        let mut rng = seeded(3);
        let world = OracleWorld::random(100, 60, 8, 0.3, &mut rng);
        let samples = generate_oracle_dataset(&world, &spec(3, 10), 100, &mut rng).unwrap();
        assert_eq!(samples.len(), 200);
        for s in &samples {
            s.validate(3, 10).unwrap();
        }
    }

    #[test]
    fn oracle_clicked_beats_nonclicked() {
        let mut rng = seeded(4);
        let world = OracleWorld::random(1, 20, 6, 0.2, &mut rng);
        let samples = generate_oracle_dataset(&world, &spec(2, 6), 1, &mut rng).unwrap();
        let pos = &samples[0];
        let neg = &samples[1];
        assert!(world.utility(0, &pos.card) >= world.utility(0, &neg.card));
        // enumeration oracle over all C(6,2)=15 cards bounds the best draw
        let opt = world.optimal_utility(0, &pos.candidates, 2);
        assert!(world.utility(0, &pos.card) <= opt + 1e-12);
    }

    #[test]
    fn oracle_identical_items_tie_break_lowest_id() {
        let mut rng = seeded(5);
        let mut world = OracleWorld::random(1, 10, 4, 0.0, &mut rng);
        let v = vec![0.25; 4];
        world.item_vecs = vec![v; 10];
        let samples = generate_oracle_dataset(&world, &spec(2, 6), 1, &mut rng).unwrap();
        let s = &samples[0];
        assert_eq!(s.positive_item, Some(*s.card.iter().min().unwrap()));
    }

    #[test]
    fn oracle_monotone_under_affinity_shift() {
        // adding a common constant to every user-item affinity shifts all
        // K-subset utilities equally, so the argmax card is unchanged
        let mut rng = seeded(6);
        let world = OracleWorld::random(1, 8, 4, 0.4, &mut rng);
        let candidates: Vec<u32> = (0..8).collect();
        let score = |c: &[u32], shift: f64| world.utility(0, c) + shift * c.len() as f64;
        let g = crate::graph::ConstraintGraph::complete(candidates.clone());
        for shift in [0.0, 1.5, -2.0] {
            let best = crate::graph::brute_force_best_card(
                &g,
                |c| {
                    let card: Vec<u32> = c.iter().map(|&i| candidates[i]).collect();
                    score(&card, shift)
                },
                3,
            )
            .unwrap();
            let base = crate::graph::brute_force_best_card(
                &g,
                |c| {
                    let card: Vec<u32> = c.iter().map(|&i| candidates[i]).collect();
                    score(&card, 0.0)
                },
                3,
            )
            .unwrap();
            assert_eq!(best, base, "shift {shift}");
        }
    }

    #[test]
    fn split_floor_and_determinism() {
        let make = || -> Vec<Sample> {
            (0..10)
                .map(|i| Sample {
                    user_id: i,
                    card: vec![i * 10, i * 10 + 1],
                    candidates: vec![i * 10, i * 10 + 1, i * 10 + 2, i * 10 + 3],
                    label: 1,
                    positive_item: Some(i * 10),
                })
                .collect()
        };
        let (tr1, te1) = split(make(), 0.8, &mut seeded(9)).unwrap();
        assert_eq!((tr1.len(), te1.len()), (8, 2));
        let (tr2, te2) = split(make(), 0.8, &mut seeded(9)).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(split(make(), 0.5, &mut seeded(1)).unwrap().0.len(), 5);
    }

    #[test]
    fn split_sizes_match_paper_shape() {
        // 40036 samples at 4:1 -> 32028 train (floor), 8008 test
        let n = 40036usize;
        let n_train = ((n as f64) * 0.8).floor() as usize;
        assert_eq!(n_train, 32028);
        assert_eq!(n - n_train, 8008);
    }

    #[test]
    fn split_empty_is_error() {
        assert!(split(Vec::new(), 0.8, &mut seeded(1)).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let mut rng = seeded(12);
        let world = OracleWorld::random(500, 80, 6, 0.1, &mut rng);
        let samples = generate_oracle_dataset(&world, &spec(4, 20), 500, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.tsv");
        write_samples(&samples, &path).unwrap();
        let back = read_samples(&path).unwrap();
        assert_eq!(samples, back);
    }

    #[test]
    fn tsv_parses_spec_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let candidates = (1..=20).map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        std::fs::write(
            &path,
            format!("{HEADER}\n1\t1,2,3,4\t{candidates}\t1\t2\n1\t1,4,5,6\t{candidates}\t0\t-\n"),
        )
        .unwrap();
        let samples = read_samples(&path).unwrap();
        assert_eq!(samples[0].user_id, 1);
        assert_eq!(samples[0].card, vec![1, 2, 3, 4]);
        assert_eq!(samples[0].label, 1);
        assert_eq!(samples[0].positive_item, Some(2));
        assert_eq!(samples[1].positive_item, None);
        assert_eq!(samples[1].label, 0);
    }

    #[test]
    fn tsv_rejects_bad_rows_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        // card item 9 is not among the candidates
        std::fs::write(&path, format!("{HEADER}\n1\t1,9\t1,2,3,4\t1\t1\n")).unwrap();
        match read_samples(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn implicit_feedback_construction() {
        let mut ratings = Vec::new();
        // user 1: one 5-star item (100) plus 24 mediocre items
        ratings.push(Rating { user: 1, item: 100, rating: 5.0 });
        for i in 0..24 {
            ratings.push(Rating { user: 1, item: 200 + i, rating: 3.0 });
        }
        // user 2: too few items, must be skipped
        ratings.push(Rating { user: 2, item: 1, rating: 5.0 });
        // user 3: a 4-star rating is unknown feedback, no positive card
        for i in 0..25 {
            ratings.push(Rating { user: 3, item: 300 + i, rating: 4.0 });
        }
        let mut rng = seeded(2);
        let built = build_from_implicit_feedback(&ratings, &spec(4, 20), &mut rng).unwrap();
        assert_eq!(built.skipped_users, 1);
        let user1: Vec<&Sample> = built.samples.iter().filter(|s| s.user_id == 1).collect();
        assert_eq!(user1.len(), 2);
        let pos = user1.iter().find(|s| s.label == 1).unwrap();
        assert_eq!(pos.positive_item, Some(100));
        assert!(pos.card.contains(&100));
        assert!(built.samples.iter().all(|s| s.user_id != 3));
        for s in &built.samples {
            s.validate(4, 20).unwrap();
        }
    }

    #[test]
    fn world_archive_round_trip() {
        let mut rng = seeded(8);
        let world = OracleWorld::random(5, 7, 3, 0.25, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.ckpt");
        world.save(&path).unwrap();
        let back = OracleWorld::load(&path).unwrap();
        assert_eq!(world.dim, back.dim);
        assert_eq!(world.beta, back.beta);
        assert_eq!(world.user_vecs, back.user_vecs);
        assert_eq!(world.item_vecs, back.item_vecs);
    }
}
