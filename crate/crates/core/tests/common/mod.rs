//! Independent oracles shared by the integration tests and the acceptance
//! suite. Each check returns an [`Outcome`] instead of panicking so the
//! acceptance runner can report every criterion before failing.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dysasr::architectures::{build, ArchConfig, ArchKind, InputLayout, Bottleneck};
use dysasr::corpus::noise::{measured_snr_db, mix_components, NoiseAugment, NoiseKind};
use dysasr::decode::decoder::{acoustic_scores, viterbi_decode, DecodeLexicon, DecoderConfig};
use dysasr::decode::lm::{LmConfig, NGramLm};
use dysasr::decode::wer::wer;
use dysasr::nn::gradcheck::grad_check;
use dysasr::nn::{Branch, ConvSpec, Geometry, LayerSpec, NetworkSpec};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------- decoder

/// Exhaustive search over every word string and every frame-level state
/// path, scored with the same conventions as the decoder: the first frame
/// enters the first state of a word, every later frame either loops, moves
/// to the next state, or (from a final state) enters the first state of any
/// word; word entries and the sentence end are scored by the trigram LM.
pub struct BruteForce<'a> {
    ac: &'a [Vec<f64>],
    lex: &'a DecodeLexicon,
    lm: &'a NGramLm,
    lm_weight: f64,
    ln_loop: f64,
    ln_next: f64,
    /// Weighted LM log-probabilities keyed by the last two words (the
    /// lexicon size stands for a missing word) and the predicted token.
    lm_cache: BTreeMap<(usize, usize, usize), f64>,
    pub best: f64,
    pub best_words: Vec<Vec<usize>>,
    pub paths: u64,
}

impl<'a> BruteForce<'a> {
    pub fn run(ac: &'a [Vec<f64>], lex: &'a DecodeLexicon, lm: &'a NGramLm, cfg: &DecoderConfig) -> Self {
        let mut bf = Self {
            ac,
            lex,
            lm,
            lm_weight: cfg.lm_weight,
            ln_loop: cfg.self_loop.ln(),
            ln_next: (1.0 - cfg.self_loop).ln(),
            lm_cache: BTreeMap::new(),
            best: f64::NEG_INFINITY,
            best_words: Vec::new(),
            paths: 0,
        };
        let mut words = Vec::new();
        for w in 0..lex.words.len() {
            words.push(w);
            let s = bf.lm_term(&[], w) + ac[0][lex.states[w][0]];
            bf.walk(0, &mut words, 0, s);
            words.pop();
        }
        bf
    }

    /// `next` is a word index, or the lexicon size for the sentence end.
    fn lm_term(&mut self, history: &[usize], next: usize) -> f64 {
        let n = self.lex.words.len();
        let tail = &history[history.len().saturating_sub(2)..];
        let key = (
            if tail.len() == 2 { tail[0] } else { n },
            tail.last().copied().unwrap_or(n),
            next,
        );
        if let Some(&v) = self.lm_cache.get(&key) {
            return v;
        }
        let hist: Vec<&str> = tail.iter().map(|&h| self.lex.words[h].as_str()).collect();
        let word = if next == n { dysasr::decode::lm::EOS } else { self.lex.words[next].as_str() };
        let v = self.lm_weight * self.lm.prob(&hist, word).ln();
        self.lm_cache.insert(key, v);
        v
    }

    fn walk(&mut self, t: usize, words: &mut Vec<usize>, j: usize, score: f64) {
        let v = *words.last().unwrap();
        let lex = self.lex;
        let states = &lex.states[v];
        let last = j + 1 == states.len();
        if t + 1 == self.ac.len() {
            if last {
                self.paths += 1;
                let total = score + self.lm_term(words, self.lex.words.len());
                if total > self.best {
                    self.best = total;
                    self.best_words = vec![words.clone()];
                } else if total == self.best && !self.best_words.contains(words) {
                    self.best_words.push(words.clone());
                }
            }
            return;
        }
        let frame = &self.ac[t + 1];
        self.walk(t + 1, words, j, score + self.ln_loop + frame[states[j]]);
        if !last {
            let s = score + self.ln_next + frame[states[j + 1]];
            self.walk(t + 1, words, j + 1, s);
        } else {
            for w in 0..lex.words.len() {
                let s = score + self.ln_next + self.lm_term(words, w) + frame[lex.states[w][0]];
                words.push(w);
                self.walk(t + 1, words, 0, s);
                words.pop();
            }
        }
    }
}

/// One random decoding problem: lexicon of 1..=3 words with 2..=4 states
/// each, 1..=20 frames, LM trained on random sentences.
pub struct DecodeInstance {
    pub ac: Vec<Vec<f64>>,
    pub lex: DecodeLexicon,
    pub lm: NGramLm,
    pub cfg: DecoderConfig,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> DecodeInstance {
    let n_labels = 6;
    let n_words = rng.gen_range(1..=3);
    let mut states: Vec<Vec<usize>> = Vec::new();
    while states.len() < n_words {
        let len = rng.gen_range(2..=4);
        let s: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n_labels)).collect();
        if !states.contains(&s) {
            states.push(s);
        }
    }
    let words: Vec<String> = (0..n_words).map(|i| format!("w{i}")).collect();
    let min_frames = states.iter().map(Vec::len).min().unwrap();
    let frames = rng.gen_range(min_frames..=20);
    let sentences: Vec<Vec<String>> = (0..rng.gen_range(1..=6))
        .map(|_| (0..rng.gen_range(1..=3)).map(|_| words[rng.gen_range(0..n_words)].clone()).collect())
        .collect();
    let lm = NGramLm::train(&sentences, LmConfig::default()).unwrap();
    let post = Array2::from_shape_fn((frames, n_labels), |_| rng.gen_range(0.01f32..1.0));
    let post = &post / &post.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
    let mut priors: Vec<f64> = (0..n_labels).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = priors.iter().sum();
    priors.iter_mut().for_each(|p| *p /= total);
    let ac = acoustic_scores(post.view(), &priors, 1e-30).unwrap();
    let cfg = DecoderConfig {
        self_loop: rng.gen_range(0.3..0.8),
        lm_weight: rng.gen_range(0.5..2.0),
        ..DecoderConfig::default()
    };
    DecodeInstance {
        ac,
        lex: DecodeLexicon { words, states },
        lm,
        cfg,
    }
}

/// Infinite-beam Viterbi against exhaustive enumeration on `n` instances.
pub fn decoder_oracle(n: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths = 0u64;
    let mut failures = Vec::new();
    for k in 0..n {
        let inst = random_instance(&mut rng);
        let bf = BruteForce::run(&inst.ac, &inst.lex, &inst.lm, &inst.cfg);
        paths += bf.paths;
        let got = match viterbi_decode(&inst.ac, &inst.lex, &inst.lm, &inst.cfg) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("#{k}: decoder error {e}"));
                continue;
            }
        };
        let ids: Vec<usize> = got
            .words
            .iter()
            .map(|w| inst.lex.words.iter().position(|x| x == w).unwrap())
            .collect();
        if got.score != bf.best || !bf.best_words.contains(&ids) {
            failures.push(format!(
                "#{k}: decoder {:?} {:.12} vs exhaustive {:?} {:.12}",
                ids, got.score, bf.best_words, bf.best
            ));
        }
        if got.state_path.len() != inst.ac.len() {
            failures.push(format!("#{k}: path length {} for {} frames", got.state_path.len(), inst.ac.len()));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} instances, {paths} state paths enumerated, {} mismatches{}",
            n,
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- WER

/// Levenshtein distance by memoized recursion over suffixes.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut BTreeMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            1 + go(a, b, i + 1, j + 1, memo)
                .min(go(a, b, i + 1, j, memo))
                .min(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut BTreeMap::new())
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn wer_oracle(pairs: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ["a", "b", "c", "d", "e"];
    let mut bad = Vec::new();
    for k in 0..pairs {
        let r: Vec<String> = (0..rng.gen_range(1..=12)).map(|_| vocab[rng.gen_range(0..5)].to_string()).collect();
        let h: Vec<String> = (0..rng.gen_range(0..=12)).map(|_| vocab[rng.gen_range(0..5)].to_string()).collect();
        let rep = wer(&r, &h).unwrap();
        let d = edit_distance(&r, &h);
        let consistent = rep.ref_words == r.len() && r.len() + rep.insertions - rep.deletions == h.len();
        if rep.errors() != d || !consistent {
            bad.push(format!("#{k}: {r:?} / {h:?} gave {rep:?}, distance {d}"));
        }
    }
    let mut examples = Vec::new();
    let same = wer(&words("a b c"), &words("a b c")).unwrap();
    examples.push(same.errors() == 0 && same.wer() == 0.0);
    let sub = wer(&words("a b c"), &words("a x c")).unwrap();
    examples.push(
        (sub.substitutions, sub.deletions, sub.insertions) == (1, 0, 0) && format!("{:.2}", sub.wer()) == "33.33",
    );
    let del = wer(&words("a b c"), &[] as &[String]).unwrap();
    examples.push(del.deletions == 3 && del.wer() == 100.0);
    let held = examples.iter().filter(|&&e| e).count();
    Outcome::new(
        bad.is_empty() && held == 3,
        format!(
            "{pairs} random pairs, {} mismatches; worked examples {held}/3{}",
            bad.len(),
            bad.first().map(|b| format!(" (first: {b})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- SNR

/// Requested vs measured SNR over `draws` random mixes, plus the range
/// checks of the multi-condition configuration.
pub fn snr_oracle(draws: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aug = NoiseAugment::default();
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let len = rng.gen_range(400..4000);
        let f0 = rng.gen_range(80.0..400.0);
        let amp = rng.gen_range(0.01..0.9);
        let clean: Vec<f32> = (0..len)
            .map(|n| (amp * (2.0 * std::f64::consts::PI * f0 * n as f64 / 16000.0).sin() + rng.gen_range(-0.01..0.01)) as f32)
            .collect();
        let kind = NoiseKind::ALL[rng.gen_range(0..3)];
        let snr = rng.gen_range(aug.snr_min_db..=aug.snr_max_db);
        let mix = mix_components(&clean, kind, snr, rng.gen()).unwrap();
        worst = worst.max((measured_snr_db(&mix.clean, &mix.noise) - snr).abs());
    }
    let range_ok = aug.snr_min_db == 10.0 && aug.snr_max_db == 80.0 && aug.validate().is_ok();
    let rejects = [(-1.0, 80.0), (10.0, 101.0), (50.0, 20.0)]
        .iter()
        .all(|&(lo, hi)| NoiseAugment { snr_min_db: lo, snr_max_db: hi, ..NoiseAugment::default() }.validate().is_err())
        && mix_components(&[0.5, -0.5], NoiseKind::White, 120.0, 0).is_err()
        && mix_components(&[0.5, -0.5], NoiseKind::White, -3.0, 0).is_err();
    Outcome::new(
        worst <= 0.01 && range_ok && rejects,
        format!(
            "{draws} mixes, worst |measured - requested| = {worst:.2e} dB; default range 10-80 dB {}; out-of-range configs {}",
            if range_ok { "valid" } else { "INVALID" },
            if rejects { "rejected" } else { "ACCEPTED" }
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        hidden_layers: 2,
        hidden_units: 5,
        freq_filters: 3,
        freq_span: 3,
        freq_pool: 2,
        time_filters: 2,
        time_span: 2,
        time_pool: 2,
        tv_filters: 2,
        tv_span: 2,
        tv_pool: 2,
    }
}

/// Named gradient-check cases: every layer type on its own and the four
/// acoustic architectures (with and without a bottleneck) at toy size.
pub fn gradient_cases() -> Vec<(String, NetworkSpec)> {
    let g = Geometry::new(7, 5, 2);
    let conv = |n, span, pool| ConvSpec { geometry: g, n_filters: n, span, pool };
    let fusion = LayerSpec::Fusion {
        input: g.dim() + 4,
        branches: vec![
            Branch { offset: 0, layer: LayerSpec::FreqConv(conv(2, 3, 3)) },
            Branch { offset: 0, layer: LayerSpec::TimeConv(conv(2, 3, 1)) },
            Branch { offset: g.dim(), layer: LayerSpec::FullSigmoid { input: 4, output: 3 } },
        ],
    };
    let bodies = [
        ("full_sigmoid", LayerSpec::FullSigmoid { input: 6, output: 5 }),
        ("freq_conv", LayerSpec::FreqConv(conv(3, 3, 2))),
        ("time_conv", LayerSpec::TimeConv(conv(3, 2, 2))),
        ("fusion", fusion),
    ];
    let mut out: Vec<(String, NetworkSpec)> = bodies
        .into_iter()
        .map(|(name, body)| {
            let d = body.output_dim();
            let spec = NetworkSpec::new(vec![body, LayerSpec::Softmax { input: d, output: 4 }]).unwrap();
            (format!("{name}+softmax"), spec)
        })
        .collect();
    out.push((
        "linear (mse)".to_string(),
        NetworkSpec::new(vec![
            LayerSpec::FullSigmoid { input: 6, output: 5 },
            LayerSpec::Linear { input: 5, output: 3 },
        ])
        .unwrap(),
    ));
    let cfg = tiny_arch();
    let acoustic = Geometry::new(6, 5, 2);
    for arch in ArchKind::ALL {
        let layout = InputLayout {
            acoustic,
            tv: arch.needs_tv().then(|| Geometry::new(3, 5, 1)),
        };
        for bn in [None, Some(Bottleneck { dim: 3, layer: 2 })] {
            let name = format!("{arch}{}", if bn.is_some() { "+bottleneck" } else { "" });
            out.push((name, build(arch, &cfg, &layout, 4, bn).unwrap()));
        }
    }
    out
}

pub fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failed = Vec::new();
    for (k, (name, spec)) in gradient_cases().into_iter().enumerate() {
        match grad_check(&spec, 1e-4, 100 + k as u64) {
            Ok(r) => {
                if r.max_rel_error > worst.0 {
                    worst = (r.max_rel_error, name.clone());
                }
                if !r.passed || r.n_checked == 0 {
                    failed.push(format!("{name}: {r:?}"));
                }
            }
            Err(e) => failed.push(format!("{name}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        failed.is_empty() && secs < 60.0,
        format!(
            "{} cases, max relative error {:.2e} ({}), {:.1} s{}",
            gradient_cases().len(),
            worst.0,
            worst.1,
            secs,
            failed.first().map(|f| format!("; failed {f}")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- CLI

pub fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dysasr"))
}

/// Runs the CLI in `dir`; returns stdout or a description of the failure.
pub fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = cli().current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Every file below `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub const CLI_PLAN: &str = r#"{
  "name": "cli",
  "normal": {"type": "synth", "utterances": 40, "seed": 5},
  "dysarthric": {"type": "synth", "utterances": 20, "seed": 6},
  "train": {"max_epochs": 2},
  "adapt": {"min_epochs": 1, "max_epochs": 2},
  "systems": [
    {"type": "acoustic", "arch": "dnn", "train_on": "normal", "adapt": true},
    {"type": "bottleneck", "strategy": "C", "bn_arch": "dnn", "am_arch": "dnn", "adapt_bn": true}
  ]
}"#;

/// The whole command-line workflow, run from an empty directory.
pub fn cli_workflow(dir: &Path) -> Result<(), String> {
    std::fs::write(dir.join("plan.json"), CLI_PLAN).map_err(|e| e.to_string())?;
    let steps: &[&[&str]] = &[
        &["synth-corpus", "--out", "nor", "--utterances", "40", "--seed", "3"],
        &["synth-corpus", "--out", "dys", "--utterances", "20", "--seed", "4", "--dysarthric"],
        &["featurize", "--manifest", "nor/test.tsv", "--kind", "mfb", "--deltas", "--context", "2", "--out", "mfb.farc"],
        &["featurize", "--manifest", "nor/test.tsv", "--kind", "gfb", "--out", "gfb.farc"],
        &["featurize", "--manifest", "nor/test.tsv", "--kind", "nmc", "--out", "nmc.farc"],
        &["train-inversion", "--manifest", "nor/manifest.tsv", "--out", "inv.ck", "--max-epochs", "1", "--report", "inv.json"],
        &["estimate-tvs", "--model", "inv.ck", "--manifest", "dys/test.tsv", "--out-dir", "tvs"],
        &["train-am", "--train", "nor/train.tsv", "--cv", "nor/cv.tsv", "--arch", "dnn", "--out", "am.ck", "--max-epochs", "2"],
        &["train-bn", "--train", "nor/train.tsv", "--cv", "nor/cv.tsv", "--arch", "dnn", "--out", "bn.ck", "--max-epochs", "2"],
        &["extract-bn", "--model", "bn.ck", "--manifest", "dys/test.tsv", "--out", "bn.farc"],
        &["adapt", "--model", "am.ck", "--train", "dys/train.tsv", "--cv", "dys/cv.tsv", "--out", "am_adapted.ck", "--min-epochs", "1", "--max-epochs", "2"],
        &["decode", "--model", "am_adapted.ck", "--manifest", "dys/test.tsv", "--lm-text", "nor/train.tsv", "--out", "hyp.tsv"],
        &["score", "--reference", "dys/test.tsv", "--hyp", "hyp.tsv", "--out", "score.json"],
        &["experiment", "run", "plan.json", "--out", "report"],
    ];
    for args in steps {
        run_cli(dir, args)?;
    }
    Ok(())
}

/// Runs the workflow twice in separate directories and compares every
/// artifact byte for byte; also checks the machine-readable error path.
pub fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = cli_workflow(a.path()).and_then(|_| cli_workflow(b.path())) {
        return Outcome::new(false, format!("workflow failed: {e}"));
    }
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    let differing: Vec<_> = sa
        .keys()
        .chain(sb.keys())
        .filter(|k| sa.get(*k) != sb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let expected = ["mfb.farc", "am.ck", "bn.ck", "inv.ck", "am_adapted.ck", "report/report.tsv", "score.json"];
    let missing: Vec<_> = expected.iter().filter(|f| !sa.contains_key(Path::new(f))).collect();

    let err = cli()
        .current_dir(a.path())
        .args(["featurize", "--manifest", "absent.tsv", "--out", "x.farc"])
        .output()
        .unwrap();
    let json: Option<serde_json::Value> = serde_json::from_slice(&err.stderr).ok();
    let error_ok = !err.status.success() && json.as_ref().is_some_and(|j| j["error"].is_string() && j["message"].is_string());

    Outcome::new(
        differing.is_empty() && missing.is_empty() && error_ok,
        format!(
            "{} artifacts compared, {} differ{}; missing {:?}; error JSON {}",
            sa.len(),
            differing.len(),
            differing.first().map(|d| format!(" (first: {d})")).unwrap_or_default(),
            missing,
            if error_ok { "ok" } else { "MALFORMED" }
        ),
    )
}
