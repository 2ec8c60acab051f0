//! Acceptance criteria. Runs without the libtest harness so each criterion
//! prints one `PASS`/`FAIL`/`SKIP` line in ordinary `cargo test` output.
//!
//! Optional real-data checks read `COMMITGEN_DATASET_DIR`, expected to hold
//! `train.diff`/`train.msg` and `test.diff`/`test.msg` of the original corpus.

mod common;

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use commitgen::corpus::{
    build_vocabulary, load_prefix, Commit, CorpusSplit, FileType, LoadOptions, Scenario, Side, Vocabulary,
};
use commitgen::eval::corpus_bleu;
use commitgen::nmt::{
    encode_example, encode_source, gradient_check, init_model, train, Hyperparameters, Model, ModelConfig,
    TrainOptions, EncodedExample,
};
use commitgen::nngen::BowIndex;
use commitgen::pipeline::{predict_routed, EnsembleSpec, ModelDescriptor, RouteKey, Translator};
use commitgen::sketch::{decode_sketch, encode_sketch, example_seed};
use commitgen::tokenize::{bpe_preset, decode_bpe, BpeModel};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Option<Outcome> {
    Some(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn dataset_dir() -> Option<PathBuf> {
    std::env::var_os("COMMITGEN_DATASET_DIR").map(PathBuf::from)
}

// Sketch round trip: 1,000 synthetic Java diffs, full dictionary, < 5 s.
fn sketch_round_trip() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let start = Instant::now();
    let (mut restored, mut total, mut injective, mut covered) = (0usize, 0usize, 0usize, 0usize);
    for id in 0..1000 {
        let (commit, ids) = java_commit(&mut rng, id, 24);
        let ex = encode_sketch(&commit);
        let back = decode_sketch(&ex.sketched_msg, &ex.dictionary, &ex.diff_names, example_seed(0, id));
        for (orig, got) in commit.msg_tokens.iter().zip(&back) {
            if ids.contains(orig) {
                total += 1;
                restored += usize::from(orig == got);
            }
        }
        let values: BTreeSet<&String> = ex.dictionary.entries.values().collect();
        injective += usize::from(values.len() == ex.dictionary.len() && back == commit.msg_tokens);
        covered += usize::from(ids.iter().all(|i| values.contains(i)));
    }
    let t = start.elapsed();
    outcome(
        restored == total && injective == 1000 && covered == 1000 && t < Duration::from_secs(5),
        format!(
            "{restored}/{total} identifier tokens restored, {injective}/1000 injective exact round trips, {covered}/1000 identifier sets covered, {}",
            secs(t)
        ),
    )
}

fn diff_vocab_sizes(commits: &[Commit]) -> (usize, usize) {
    let raw: BTreeSet<&String> = commits.iter().flat_map(|c| &c.diff_tokens).collect();
    let sketched: BTreeSet<String> = commits.iter().flat_map(|c| encode_sketch(c).sketched_diff).collect();
    (raw.len(), sketched.len())
}

// Vocabulary shrinkage on the Java subset of the released corpus.
fn sketch_shrinkage_real() -> Option<Outcome> {
    let dir = dataset_dir()?;
    let split = match load_prefix(&dir.join("train"), LoadOptions { skip_empty: true }) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("cannot load {}: {e}", dir.display())),
    };
    let java: Vec<Commit> = split.commits.into_iter().filter(|c| c.file_type == FileType::Java).collect();
    let (raw, sk) = diff_vocab_sizes(&java);
    outcome(
        sk < raw,
        format!("{} Java examples, diff vocabulary {raw} -> {sk} (ratio {:.3})", java.len(), sk as f64 / raw as f64),
    )
}

// Same measurement on a synthetic stand-in of the same size.
fn sketch_shrinkage_synthetic() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let java: Vec<Commit> = (0..4186).map(|i| java_commit(&mut rng, i, 24).0).collect();
    let (raw, sk) = diff_vocab_sizes(&java);
    outcome(
        sk < raw,
        format!("4186 synthetic Java examples, diff vocabulary {raw} -> {sk} (ratio {:.3})", sk as f64 / raw as f64),
    )
}

/// Exhaustive two-stage scan: exact integer cosine ranking of every
/// training diff, top k, then BLEU of the query against each candidate diff.
fn brute_force_nngen(train: &CorpusSplit, query: &[String], k: usize) -> usize {
    fn counts(toks: &[String]) -> HashMap<&str, u64> {
        let mut m: HashMap<&str, u64> = HashMap::new();
        for t in toks {
            *m.entry(t.as_str()).or_default() += 1;
        }
        m
    }
    let q = counts(query);
    let qq: u64 = q.values().map(|v| v * v).sum();
    let mut scored: Vec<(usize, u64, u64)> = Vec::new();
    for (i, c) in train.commits.iter().enumerate() {
        let d = counts(&c.diff_tokens);
        let dot: u64 = q.iter().map(|(t, v)| v * d.get(t).copied().unwrap_or(0)).sum();
        if dot > 0 {
            scored.push((i, dot, d.values().map(|v| v * v).sum()));
        }
    }
    if scored.is_empty() || qq == 0 {
        return 0;
    }
    // cos_a > cos_b  <=>  dot_a^2 * norm_b^2 > dot_b^2 * norm_a^2
    scored.sort_by(|a, b| {
        let l = (a.1 as u128).pow(2) * b.2 as u128;
        let r = (b.1 as u128).pow(2) * a.2 as u128;
        r.cmp(&l).then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    let mut best: Option<(usize, f64)> = None;
    for (i, _, _) in scored {
        let b = oracle_bleu(&[query.to_vec()], &[train.commits[i].diff_tokens.clone()]);
        // Candidates arrive in cosine order, so the first of equal BLEU wins.
        if best.is_none_or(|(_, bb)| b > bb + 1e-9) {
            best = Some((i, b));
        }
    }
    best.unwrap().0
}

// NNGen against the brute-force scan on 50 queries over 200 examples, < 10 s.
fn nngen_oracle() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let commits: Vec<Commit> = (0..200)
        .map(|i| {
            let d = random_sentence(&mut rng, 40, 5..30);
            Commit::new(i, d, random_sentence(&mut rng, 40, 2..8))
        })
        .collect();
    let train_split = CorpusSplit::new("train", commits);
    let start = Instant::now();
    let index = BowIndex::build(&train_split).ok()?;
    let mut agree = 0;
    for qi in 0..50 {
        let query = if qi % 2 == 0 {
            train_split.commits[rng.gen_range(0..200)].diff_tokens.clone()
        } else {
            let mut q = train_split.commits[rng.gen_range(0..200)].diff_tokens.clone();
            for t in q.iter_mut() {
                if rng.gen_bool(0.3) {
                    *t = format!("w{}", rng.gen_range(0..60));
                }
            }
            q
        };
        let got = index.generate(&query, 5).ok()?;
        let want = brute_force_nngen(&train_split, &query, 5);
        agree += usize::from(got.train_id == want && got.message == train_split.commits[want].msg_tokens);
    }
    let t = start.elapsed();
    outcome(agree == 50 && t < Duration::from_secs(10), format!("{agree}/50 queries agree, {}", secs(t)))
}

// Optional: NNGen on the released split scores 38.55 +- 1.0.
fn nngen_real() -> Option<Outcome> {
    let dir = dataset_dir()?;
    let load = |n: &str| load_prefix(&dir.join(n), LoadOptions { skip_empty: true });
    let (train_split, test) = match (load("train"), load("test")) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("cannot load {}: {e}", dir.display())),
    };
    let index = BowIndex::build(&train_split).ok()?;
    let hyps: Vec<Vec<String>> = test.commits.iter().map(|c| index.generate(&c.diff_tokens, 5).unwrap().message).collect();
    let refs: Vec<Vec<String>> = test.commits.iter().map(|c| c.msg_tokens.clone()).collect();
    let b = corpus_bleu(&hyps, &refs).ok()?.corpus_bleu;
    outcome((b - 38.55).abs() <= 1.0, format!("corpus BLEU-4 {b:.2} (target 38.55 +- 1.0)"))
}

// Optional: share of the named types in the released training split.
fn coverage_real() -> Option<Outcome> {
    let dir = dataset_dir()?;
    let split = match load_prefix(&dir.join("train"), LoadOptions { skip_empty: true }) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("cannot load {}: {e}", dir.display())),
    };
    let share = |s: Scenario| {
        100.0 * split.commits.iter().filter(|c| s.keeps(c.file_type)).count() as f64 / split.len() as f64
    };
    let (t5, t9) = (share(Scenario::Top5), share(Scenario::Top9));
    outcome(
        (t5 - 50.17).abs() <= 0.01 && (t9 - 63.48).abs() <= 0.01,
        format!("top5 {t5:.2}% (target 50.17), top9 {t9:.2}% (target 63.48)"),
    )
}

// corpus_bleu against the reference scorer on 100 random corpora.
fn bleu_oracle() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..20);
        let refs: Vec<Vec<String>> = (0..n).map(|_| random_sentence(&mut rng, 12, 1..15)).collect();
        let hyps: Vec<Vec<String>> = refs
            .iter()
            .map(|r| {
                let mut h: Vec<String> = r.iter().filter(|_| rng.gen_bool(0.8)).cloned().collect();
                h.extend(random_sentence(&mut rng, 12, 0..4));
                h
            })
            .collect();
        let got = corpus_bleu(&hyps, &refs).ok()?.corpus_bleu;
        worst = worst.max((got - oracle_bleu(&hyps, &refs)).abs());
    }
    let refs: Vec<Vec<String>> = (0..10).map(|_| random_sentence(&mut rng, 12, 4..15)).collect();
    let self_score = corpus_bleu(&refs, &refs).ok()?.corpus_bleu;
    let disjoint: Vec<Vec<String>> = refs.iter().map(|r| r.iter().map(|t| format!("x{t}")).collect()).collect();
    let zero = corpus_bleu(&disjoint, &refs).ok()?.corpus_bleu;
    outcome(
        worst <= 0.1 && self_score == 100.0 && zero == 0.0,
        format!("max deviation {worst:.2e}, self-score {self_score}, zero-overlap {zero}"),
    )
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_counts((0..n).map(|i| (format!("w{i}"), 1)))
}

fn toy_config(layers: usize, dim: usize, residual: bool, copy: bool, tgt_words: usize, max_tgt: usize, seed: u64) -> ModelConfig {
    Hyperparameters {
        enc_layers: layers,
        dec_layers: layers,
        embedding_dim: dim,
        hidden_dim: dim,
        residual,
        copy_enabled: copy,
        bidirectional: false,
        max_src_len: 20,
        max_tgt_len: max_tgt,
        seed,
    }
    .with_vocabularies(vocab(8), vocab(tgt_words))
}

// Finite-difference gradient checks on {1+1, 2+2 residual} x {copy off, on}, < 60 s.
fn gradient_checks() -> Option<Outcome> {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    for (layers, residual) in [(1, false), (2, true)] {
        for copy in [false, true] {
            let ck = init_model(toy_config(layers, 5, residual, copy, 6, 10, 21)).ok()?;
            let ex = encode_example(&ck.model.config, &toks("w0 w7 oov w3 w1"), &toks("w4 oov w1"));
            let gc = gradient_check(&ck.model, &ex, 1e-5);
            if gc.max_relative_error >= worst.0 {
                worst = (gc.max_relative_error, format!("{layers}+{layers} copy={copy} at {}", gc.worst_parameter));
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst.0 < 1e-4 && t < Duration::from_secs(60),
        format!("max relative error {:.2e} ({}), {}", worst.0, worst.1, secs(t)),
    )
}

/// Highest-scoring output under the beam's objective, by enumerating every
/// sequence of non-special tokens up to `max_len` and scoring it with the
/// teacher-forced forward pass.
fn exhaustive_best(model: &Model, src: &[String], lp: f64) -> Vec<usize> {
    let cfg = &model.config;
    // Every token the decoder may emit except EOS: `<unk>` and the words.
    let words: Vec<usize> = (commitgen::corpus::UNK_ID..cfg.tgt_vocab.len()).collect();
    let base = encode_source(cfg, src);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for len in 0..=cfg.max_tgt_len {
        for seq in &frontier {
            let mut ex: EncodedExample = base.clone();
            ex.tgt = seq.clone();
            ex.tgt.push(commitgen::corpus::EOS_ID);
            let out = model.forward(&ex);
            let prefix: f64 = seq.iter().enumerate().map(|(t, &w)| out.distributions[t][w].ln()).sum();
            let mut consider = |lp_sum: f64, n: usize| {
                let score = if lp == 0.0 { lp_sum } else { lp_sum / (n.max(1) as f64).powf(lp) };
                let better = match &best {
                    None => true,
                    Some((b, s)) => score > *b || (score == *b && (seq.len(), seq) < (s.len(), s)),
                };
                if better {
                    best = Some((score, seq.clone()));
                }
            };
            if len < cfg.max_tgt_len {
                consider(prefix + out.distributions[len][commitgen::corpus::EOS_ID].ln(), len + 1);
            } else {
                consider(prefix, len);
            }
        }
        frontier = frontier
            .iter()
            .flat_map(|s| words.iter().map(move |&w| [s.as_slice(), &[w]].concat()))
            .collect();
    }
    best.unwrap().1
}

// Width 1 equals greedy on 100 inputs; a saturating beam equals exhaustive search on 20 toys.
fn beam_checks() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let model = init_model(toy_config(2, 8, true, false, 10, 8, 31)).ok()?.model;
    let mut same = 0;
    for _ in 0..100 {
        let src = random_sentence(&mut rng, 8, 1..10);
        same += usize::from(model.greedy_decode(&src) == model.beam_decode(&src, 1, 0.0));
    }
    let mut optimal = 0;
    for i in 0..20 {
        // 2 words + 4 specials = 6 target tokens, outputs up to 4 tokens long.
        let mut m = init_model(toy_config(1, 6, false, false, 2, 4, 100 + i)).ok()?.model;
        // Sharpen the output layer so hypotheses differ clearly.
        m.param_mut("out.w")?.iter_mut().for_each(|w| *w *= 40.0);
        let src = random_sentence(&mut rng, 8, 1..6);
        let lp = if i % 2 == 0 { 0.0 } else { 1.0 };
        let scorer = commitgen::nmt::ModelScorer::from_tokens(&m, &src);
        let beam = commitgen::nmt::beam_search(&scorer, 1000, lp, 4).tokens;
        optimal += usize::from(beam == exhaustive_best(&m, &src, lp));
    }
    outcome(
        same == 100 && optimal == 20,
        format!("greedy agreement {same}/100, exhaustive agreement {optimal}/20"),
    )
}

// 2+2 residual, dims 64, 2,000 steps on 500 copy pairs: BLEU-4 >= 90 on 100 held-out pairs, < 10 min.
fn toy_translation() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let train_pairs: Vec<Vec<String>> = (0..500).map(|_| random_sentence(&mut rng, 26, 3..9)).collect();
    let test_pairs: Vec<Vec<String>> = (0..100).map(|_| random_sentence(&mut rng, 26, 3..9)).collect();
    let split = CorpusSplit::new(
        "toy",
        train_pairs.iter().enumerate().map(|(i, s)| Commit::new(i, s.clone(), s.clone())).collect(),
    );
    let src = build_vocabulary(&split, Side::Diff, 1, None).ok()?;
    let tgt = build_vocabulary(&split, Side::Msg, 1, None).ok()?;
    let hp = Hyperparameters {
        seed: 1,
        ..Hyperparameters::preset("nmt4")?
    };
    let ck = init_model(hp.with_vocabularies(src, tgt)).ok()?;
    let enc = |v: &[Vec<String>]| -> Vec<EncodedExample> { v.iter().map(|s| encode_example(&ck.model.config, s, s)).collect() };
    let start = Instant::now();
    let opts = TrainOptions {
        steps: 2000,
        batch_size: 32,
        lr: 3e-3,
        eval_every: 250,
        patience: 100,
        ..Default::default()
    };
    let rep = train(&ck, &enc(&train_pairs), &enc(&train_pairs[..50]), &opts).ok()?;
    let hyps: Vec<Vec<String>> = test_pairs.iter().map(|s| rep.checkpoint.model.greedy_decode(s)).collect();
    let b = corpus_bleu(&hyps, &test_pairs).ok()?.corpus_bleu;
    let t = start.elapsed();
    outcome(
        b >= 90.0 && t < Duration::from_secs(600),
        format!("held-out BLEU-4 {b:.2} after {} steps, {}", rep.steps_run, secs(t)),
    )
}

// Routing partition on 1,000 mixed examples.
fn routing_partition() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let test = CorpusSplit::new("mixed", (0..1000).map(|i| mixed_commit(&mut rng, i)).collect());
    let sketched: Vec<Commit> = test.commits.iter().map(|c| {
        let sk = encode_sketch(c);
        Commit::new(c.id, sk.sketched_diff, sk.sketched_msg)
    }).collect();
    let all = CorpusSplit::new("vocab", test.commits.iter().cloned().chain(sketched).collect());
    let src = build_vocabulary(&all, Side::Diff, 1, None).ok()?;
    let tgt = build_vocabulary(&all, Side::Msg, 1, None).ok()?;
    let model = |seed: u64, layers: usize| {
        let mut hp = Hyperparameters::preset(if layers == 1 { "nmt2" } else { "nmt4" }).unwrap();
        hp.embedding_dim = 8;
        hp.hidden_dim = 8;
        hp.max_tgt_len = 6;
        hp.seed = seed;
        init_model(hp.with_vocabularies(src.clone(), tgt.clone())).unwrap().model
    };
    let (java, xml, others) = (model(1, 2), model(2, 2), model(3, 1));
    let mut spec = EnsembleSpec::single(ModelDescriptor { beam: 3, ..ModelDescriptor::new("others") });
    spec.routes.insert(FileType::Java, ModelDescriptor { uses_sketch: true, beam: 3, ..ModelDescriptor::new("java") });
    spec.routes.insert(FileType::Xml, ModelDescriptor { beam: 3, ..ModelDescriptor::new("xml") });
    let models: HashMap<RouteKey, &dyn Translator> = [
        (RouteKey::Type(FileType::Java), &java as &dyn Translator),
        (RouteKey::Type(FileType::Xml), &xml),
        (RouteKey::Fallback, &others),
    ]
    .into_iter()
    .collect();
    let seed = 5;
    let out = predict_routed(&spec, &test, seed, &models).ok()?;
    let total: usize = out.route_counts.values().sum();

    // Each model run on its own subset, then re-interleaved by id.
    let mut expected: Vec<Option<Vec<String>>> = vec![None; test.len()];
    for c in test.commits.iter().filter(|c| c.file_type == FileType::Java) {
        let sk = encode_sketch(c);
        let p = java.beam_decode(&sk.sketched_diff, 3, 1.0);
        expected[c.id] = Some(decode_sketch(&p, &sk.dictionary, &sk.diff_names, example_seed(seed, c.id)));
    }
    for c in test.commits.iter().filter(|c| c.file_type == FileType::Xml) {
        expected[c.id] = Some(xml.beam_decode(&c.diff_tokens, 3, 1.0));
    }
    for c in test.commits.iter().filter(|c| !matches!(c.file_type, FileType::Java | FileType::Xml)) {
        expected[c.id] = Some(others.beam_decode(&c.diff_tokens, 3, 1.0));
    }
    let equal = expected.iter().zip(&out.predictions).filter(|(e, p)| e.as_ref() == Some(*p)).count();
    outcome(
        total == 1000 && equal == 1000,
        format!(
            "route counts {:?} sum to {total}, {equal}/1000 outputs equal per-subset runs",
            out.route_counts.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>()
        ),
    )
}

// decode_bpe . apply is the identity on 10,000 sequences at three merge-table sizes.
fn bpe_round_trip() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let letters: Vec<char> = "abcdefghijklmnopqrstuvwxyz_ABCDEF0123456789".chars().collect();
    let rand_word = |rng: &mut ChaCha8Rng, max: usize| -> String {
        (0..rng.gen_range(1..=max)).map(|_| letters[rng.gen_range(0..letters.len())]).collect()
    };
    // Reduced corpus: 20,000 distinct words, each seen at least twice, plus
    // Zipf-like repeats. Enough distinct pairs for a 32,000-symbol inventory.
    let lexicon: Vec<String> = (0..20_000).map(|_| rand_word(&mut rng, 14)).collect();
    let mut corpus: Vec<Vec<String>> = lexicon.chunks(10).flat_map(|c| [c.to_vec(), c.to_vec()]).collect();
    corpus.extend((0..4000).map(|_| {
        (0..rng.gen_range(5..25))
            .map(|_| {
                let r: f64 = rng.gen();
                lexicon[((r * r * r) * lexicon.len() as f64) as usize].clone()
            })
            .collect::<Vec<String>>()
    }));
    let seqs: Vec<Vec<String>> = (0..10_000)
        .map(|_| {
            (0..rng.gen_range(0..12))
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        lexicon[rng.gen_range(0..lexicon.len())].clone()
                    } else {
                        rand_word(&mut rng, 14) + ["", "é", "<nl>", "."][rng.gen_range(0..4)]
                    }
                })
                .collect()
        })
        .collect();
    let chars = corpus.iter().flatten().flat_map(|w| w.chars()).collect::<BTreeSet<char>>().len();
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for preset in ["bpe1", "bpe2", "bpe3"] {
        let size = bpe_preset(preset)?.vocab_size;
        let model = BpeModel::learn(&corpus, size).ok()?;
        let exact = seqs.iter().filter(|s| decode_bpe(&model.apply(s)).tokens == **s).count();
        let inventory = chars + model.merges().len();
        ok &= exact == seqs.len() && inventory == size;
        details.push(format!("{preset} ({inventory}/{size} symbols) {exact}/10000"));
    }
    outcome(ok, format!("{}, {}", details.join("; "), secs(start.elapsed())))
}

fn main() {
    let criteria: [(&str, fn() -> Option<Outcome>); 13] = [
        ("sketch round trip", sketch_round_trip),
        ("sketch vocabulary shrinkage (released Java subset)", sketch_shrinkage_real),
        ("sketch vocabulary shrinkage (synthetic stand-in)", sketch_shrinkage_synthetic),
        ("nngen oracle equivalence", nngen_oracle),
        ("nngen on released data", nngen_real),
        ("file-type coverage on released data", coverage_real),
        ("bleu correctness", bleu_oracle),
        ("gradient checks", gradient_checks),
        ("beam degeneracy and optimality", beam_checks),
        ("toy translation", toy_translation),
        ("routing partition", routing_partition),
        ("bpe round trip", bpe_round_trip),
        ("checkpoint determinism", checkpoint_determinism),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = Vec::new();
    for (name, f) in criteria {
        if filter.as_ref().is_some_and(|s| !name.contains(s.as_str())) {
            continue;
        }
        match f() {
            Some(o) if o.pass => println!("PASS {name}: {}", o.detail),
            Some(o) => {
                println!("FAIL {name}: {}", o.detail);
                failed.push(name);
            }
            None => println!("SKIP {name}: COMMITGEN_DATASET_DIR not set"),
        }
    }
    if !failed.is_empty() {
        eprintln!("{} acceptance criteria failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}

// Two end-to-end runs with the same seed give identical predictions.
fn checkpoint_determinism() -> Option<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let test = CorpusSplit::new("d", (0..50).map(|i| typed_commit(&mut rng, i, FileType::Java)).collect());
    let dir = tempfile::tempdir().ok()?;
    let src = build_vocabulary(&test, Side::Diff, 1, None).ok()?;
    let tgt = build_vocabulary(&test, Side::Msg, 1, None).ok()?;
    let mut hp = Hyperparameters::preset("nmt2")?;
    hp.embedding_dim = 8;
    hp.hidden_dim = 8;
    let ck = init_model(hp.with_vocabularies(src, tgt)).ok()?;
    let path = dir.path().join("m.ckpt");
    ck.save(&path).ok()?;
    let mut spec = EnsembleSpec::single(ModelDescriptor::new(&path));
    spec.routes.insert(FileType::Java, ModelDescriptor { uses_sketch: true, ..ModelDescriptor::new(&path) });
    let a = commitgen::pipeline::predict_ensemble(&spec, &test, 7).ok()?;
    let b = commitgen::pipeline::predict_ensemble(&spec, &test, 7).ok()?;
    outcome(a == b, format!("{} predictions identical across runs", a.len()))
}
