//! Command-line front end. Every subcommand exits 0 on success; failures
//! print `{"error": <code>, "message": <text>}` on stderr and exit nonzero.

use clap::{Args, Parser, Subcommand};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dysasr::architectures::{ArchKind, InversionArch, SizeClass};
use dysasr::corpus::io::{write_manifest, write_tv_file};
use dysasr::corpus::lexicon::WORDS;
use dysasr::corpus::{generate_corpus, load_manifest, load_utterances, split_corpus, write_corpus, DysarthriaProfile, Utterance};
use dysasr::decode::{wer, DecodeLexicon, DecoderConfig, LmConfig, WerReport};
use dysasr::frontend::{add_deltas, extract, splice, write_archive, BaseKind, FrontendConfig};
use dysasr::inversion::{train_inversion, InversionConfig, InversionModel};
use dysasr::nn::{Checkpoint, TrainConfig};
use dysasr::pipelines::{
    adapt, decode_set, extract_bn, run_plan, tandem_features, train_am, train_bn_extractor, train_task_lm, AcousticModel,
    AdaptConfig, BnContext, ExperimentPlan, FeatureSet, Featurizer, LmTrainSet, ModelInput, RetrainLayers, TvSource,
};
use dysasr::{Error, Result};

#[derive(Parser)]
#[command(name = "dysasr", version, about = "Dysarthric speech recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a toy corpus: WAV, alignment and TV files plus manifests.
    SynthCorpus(SynthArgs),
    /// Extract base features of a manifest into a FARC1 archive.
    Featurize(FeaturizeArgs),
    /// Train an acoustic-to-TV inversion network.
    TrainInversion(TrainInversionArgs),
    /// Estimate TV trajectories with a trained inversion model.
    EstimateTvs(EstimateTvsArgs),
    /// Train a frame classifier (DNN, CNN, TFCNN or fCNN).
    TrainAm(TrainAmArgs),
    /// Train a classifier with a 60-dimensional bottleneck layer.
    TrainBn(TrainAmArgs),
    /// Write raw bottleneck features of a manifest to a FARC1 archive.
    ExtractBn(ExtractBnArgs),
    /// Adapt a trained model to new data.
    Adapt(AdaptArgs),
    /// Decode a manifest into a hypothesis TSV.
    Decode(DecodeArgs),
    /// Score hypotheses against manifest transcriptions.
    Score(ScoreArgs),
    /// Declarative experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Execute an ExperimentPlan JSON file and write its report.
    Run {
        plan: PathBuf,
        /// Output directory for report.tsv, report.md and provenance.json.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    utterances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Apply the default dysarthria profile.
    #[arg(long)]
    dysarthric: bool,
    /// Comma-separated vocabulary (default: the whole toy lexicon).
    #[arg(long, value_delimiter = ',')]
    vocab: Vec<String>,
    /// Train,cv,test fractions for train.tsv, cv.tsv and test.tsv.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    split: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// mfb, gfb or nmc.
    #[arg(long, default_value = "mfb")]
    kind: String,
    /// Append deltas and delta-deltas.
    #[arg(long)]
    deltas: bool,
    /// Splice this many frames on each side.
    #[arg(long, default_value_t = 0)]
    context: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainInversionArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// desk or full.
    #[arg(long, default_value = "desk")]
    arch: String,
    #[arg(long, default_value_t = 30)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train on clean data only (no noise-mixed copies).
    #[arg(long)]
    clean_only: bool,
    /// Also write the held-out correlation report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateTvsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Directory for `<id>.tv` files and a manifest pointing at them.
    #[arg(long)]
    out_dir: PathBuf,
    /// Skip Kalman smoothing.
    #[arg(long)]
    no_smooth: bool,
}

#[derive(Args)]
struct TrainAmArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    cv: PathBuf,
    /// dnn, cnn, tfcnn or fcnn.
    #[arg(long)]
    arch: ArchKind,
    #[arg(long)]
    out: PathBuf,
    /// mfb or gfb.
    #[arg(long, default_value = "mfb")]
    base: String,
    /// desk, small or large.
    #[arg(long, default_value = "desk")]
    size: SizeClass,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    max_epochs: usize,
    #[arg(long, default_value_t = 0.008)]
    lr0: f64,
    /// Train on the bottleneck features of this extractor checkpoint.
    #[arg(long)]
    extractor: Option<PathBuf>,
    /// Inversion checkpoint supplying fCNN TVs (default: manifest TVs).
    #[arg(long)]
    tv_model: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractBnArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    cv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    lr0: f64,
    #[arg(long, default_value_t = 3)]
    min_epochs: usize,
    #[arg(long, default_value_t = 10)]
    max_epochs: usize,
    /// `all` or the number of top layers to retrain.
    #[arg(long, default_value = "all")]
    retrain: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extractor feeding a bottleneck-feature model.
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[arg(long)]
    tv_model: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Manifest whose transcriptions train the LM.
    #[arg(long)]
    lm_text: PathBuf,
    /// `train` uses --lm-text; `test-transcripts` uses the decoded manifest.
    #[arg(long, default_value = "train")]
    lm_train_set: LmTrainSet,
    #[arg(long)]
    extractor: Option<PathBuf>,
    #[arg(long)]
    tv_model: Option<PathBuf>,
    /// Pruning beam in log units (default: no pruning).
    #[arg(long)]
    beam: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lm_weight: f64,
    /// Hypothesis TSV: `<id>\t<words>`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Manifest with reference transcriptions.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn utterances(manifest: &Path) -> Result<Vec<Utterance>> {
    load_utterances(&load_manifest(manifest)?)
}

fn parse_base(s: &str) -> Result<BaseKind> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Error::Validation(format!("unknown feature kind `{s}`")))
}

fn load_am(path: &Path) -> Result<AcousticModel> {
    AcousticModel::from_checkpoint(Checkpoint::load(path)?)
}

fn load_inversion(path: Option<&PathBuf>) -> Result<Option<InversionModel>> {
    path.map(|p| InversionModel::from_checkpoint(Checkpoint::load(p)?)).transpose()
}

fn tv_source(model: &Option<InversionModel>) -> TvSource<'_> {
    model.as_ref().map_or(TvSource::Truth, TvSource::Inverted)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// AM inputs for `utts`, through the extractor when the model reads BN features.
fn model_inputs(
    am: &AcousticModel,
    extractor: Option<&AcousticModel>,
    utts: &[Utterance],
    tv: TvSource,
) -> Result<FeatureSet> {
    match (&am.input, extractor) {
        (ModelInput::Acoustic(f), None) => FeatureSet::featurize(utts, f, f.uses_tv().then_some(tv)),
        (ModelInput::Bottleneck(_), Some(ex)) => tandem_features(ex, am, utts),
        (ModelInput::Bottleneck(_), None) => Err(Error::Missing("model reads BN features; pass --extractor".into())),
        (ModelInput::Acoustic(_), Some(_)) => {
            Err(Error::Validation("--extractor given but the model reads acoustic features".into()))
        }
    }
}

fn synth_corpus(a: SynthArgs) -> Result<()> {
    let vocab: Vec<String> = if a.vocab.is_empty() {
        WORDS.iter().map(|w| w.to_string()).collect()
    } else {
        a.vocab
    };
    let profile = DysarthriaProfile::default();
    let utts = generate_corpus(a.utterances, &vocab, a.dysarthric.then_some(&profile), a.seed)?;
    let manifest = write_corpus(&a.out, &utts)?;
    let all = load_manifest(&manifest)?.entries;
    let (train, cv, test) = split_corpus(&all, (a.split[0], a.split[1], a.split[2]), a.split_seed)?;
    for (name, part) in [("train", train), ("cv", cv), ("test", test)] {
        write_manifest(&a.out.join(format!("{name}.tsv")), &part)?;
    }
    writeln!(std::io::stdout().lock(), "{}", manifest.display())?;
    Ok(())
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    let base = parse_base(&a.kind)?;
    let cfg = FrontendConfig::default();
    let mut records = Vec::new();
    for u in utterances(&a.manifest)? {
        let mut fm = extract(&u.samples, base, &cfg)?;
        if a.deltas {
            fm = add_deltas(&fm, cfg.delta_window)?;
        }
        if a.context > 0 {
            fm = splice(&fm, a.context, a.context);
        }
        records.push((u.id, fm));
    }
    records.sort_by(|x, y| x.0.cmp(&y.0));
    write_archive(BufWriter::new(fs::File::create(&a.out)?), &records)
}

fn train_inversion_cmd(a: TrainInversionArgs) -> Result<()> {
    let arch = match a.arch.as_str() {
        "desk" => InversionArch::DESK,
        "full" => InversionArch::FULL,
        other => return Err(Error::Validation(format!("unknown inversion arch `{other}`"))),
    };
    let mut cfg = InversionConfig::for_arch(arch);
    cfg.train.max_epochs = a.max_epochs;
    cfg.train.seed = a.seed;
    if a.clean_only {
        cfg.noise = None;
    }
    let run = train_inversion(&utterances(&a.manifest)?, &cfg)?;
    run.model.to_checkpoint()?.save(&a.out)?;
    if let Some(p) = a.report {
        fs::write(p, serde_json::to_string_pretty(&run.report)? + "\n")?;
    }
    print_json(&run.report)
}

fn estimate_tvs(a: EstimateTvsArgs) -> Result<()> {
    let model = InversionModel::from_checkpoint(Checkpoint::load(&a.model)?)?;
    let mut entries = load_manifest(&a.manifest)?.entries;
    fs::create_dir_all(&a.out_dir)?;
    for e in &mut entries {
        let (samples, _) = dysasr::corpus::read_wav(&e.audio)?;
        let tv = model.estimate_with(&samples, !a.no_smooth)?;
        let path = a.out_dir.join(format!("{}.tv", e.id));
        write_tv_file(&path, &tv)?;
        e.tv = Some(path);
    }
    write_manifest(&a.out_dir.join("manifest.tsv"), &entries)
}

fn train_am_cmd(a: TrainAmArgs, bottleneck: bool) -> Result<()> {
    let train = utterances(&a.train)?;
    let cv = utterances(&a.cv)?;
    let size = a.size.config();
    let tc = TrainConfig {
        seed: a.seed,
        max_epochs: a.max_epochs,
        lr0: a.lr0,
        ..TrainConfig::default()
    };
    let inv = load_inversion(a.tv_model.as_ref())?;
    let tv = tv_source(&inv);
    let (model, log) = if let Some(ex_path) = &a.extractor {
        if bottleneck {
            return Err(Error::Validation("train-bn takes acoustic features; drop --extractor".into()));
        }
        let ex = load_am(ex_path)?;
        let ModelInput::Acoustic(f) = &ex.input else {
            return Err(Error::Validation("extractor must read acoustic features".into()));
        };
        let raw = |utts: &[Utterance]| -> Result<(FeatureSet, Vec<_>)> {
            let set = FeatureSet::featurize(utts, f, None)?;
            let bn = set.inputs.iter().map(|m| extract_bn(&ex, m)).collect::<Result<Vec<_>>>()?;
            Ok((set, bn))
        };
        let (train_ac, train_bn) = raw(&train)?;
        let (cv_ac, cv_bn) = raw(&cv)?;
        let ctx = BnContext::fit(&train_bn)?;
        let tr = dysasr::pipelines::bn_feature_set(&train_bn, &ctx, &train_ac)?;
        let cvs = dysasr::pipelines::bn_feature_set(&cv_bn, &ctx, &cv_ac)?;
        train_am(a.arch, &size, ModelInput::Bottleneck(ctx), &tr, &cvs, &tc, None)?
    } else {
        let base = parse_base(&a.base)?;
        let tv = a.arch.needs_tv().then_some(tv);
        let f = Featurizer::fit(&train, base, &FrontendConfig::default(), tv)?;
        let tr = FeatureSet::featurize(&train, &f, tv)?;
        let cvs = FeatureSet::featurize(&cv, &f, tv)?;
        if bottleneck {
            train_bn_extractor(a.arch, &size, f, &tr, &cvs, &tc)?
        } else {
            train_am(a.arch, &size, ModelInput::Acoustic(f), &tr, &cvs, &tc, None)?
        }
    };
    model.to_checkpoint()?.save(&a.out)?;
    print_json(&log)
}

fn extract_bn_cmd(a: ExtractBnArgs) -> Result<()> {
    let ex = load_am(&a.model)?;
    let ModelInput::Acoustic(f) = &ex.input else {
        return Err(Error::Validation("extractor must read acoustic features".into()));
    };
    let set = FeatureSet::featurize(&utterances(&a.manifest)?, f, None)?;
    let records = set
        .ids
        .iter()
        .zip(&set.inputs)
        .map(|(id, m)| Ok((id.clone(), extract_bn(&ex, m)?)))
        .collect::<Result<Vec<_>>>()?;
    write_archive(BufWriter::new(fs::File::create(&a.out)?), &records)
}

fn adapt_cmd(a: AdaptArgs) -> Result<()> {
    let model = load_am(&a.model)?;
    let extractor = a.extractor.as_deref().map(load_am).transpose()?;
    let inv = load_inversion(a.tv_model.as_ref())?;
    let tv = tv_source(&inv);
    let retrain = match a.retrain.as_str() {
        "all" => RetrainLayers::All,
        n => RetrainLayers::Top(
            n.parse()
                .map_err(|_| Error::Validation(format!("--retrain must be `all` or a count, got `{n}`")))?,
        ),
    };
    let cfg = AdaptConfig {
        lr0: a.lr0,
        min_epochs: a.min_epochs,
        max_epochs: a.max_epochs,
        retrain,
        seed: a.seed,
        ..AdaptConfig::default()
    };
    let train = model_inputs(&model, extractor.as_ref(), &utterances(&a.train)?, tv)?;
    let cv = model_inputs(&model, extractor.as_ref(), &utterances(&a.cv)?, tv)?;
    let (adapted, log) = adapt(&model, &train, &cv, &cfg)?;
    adapted.to_checkpoint()?.save(&a.out)?;
    print_json(&log)
}

fn decode_cmd(a: DecodeArgs) -> Result<()> {
    let model = load_am(&a.model)?;
    let extractor = a.extractor.as_deref().map(load_am).transpose()?;
    let inv = load_inversion(a.tv_model.as_ref())?;
    let test = utterances(&a.manifest)?;
    let lm_text: Vec<Utterance> = load_manifest(&a.lm_text)?
        .entries
        .into_iter()
        .map(|e| Utterance {
            id: e.id,
            samples: Vec::new(),
            transcription: e.transcription,
            frame_labels: None,
            tv_truth: None,
        })
        .collect();
    let lm = train_task_lm(&lm_text, &test, a.lm_train_set, LmConfig::default())?;
    let mut vocab: Vec<String> = lm_text
        .iter()
        .chain(&test)
        .flat_map(|u| u.transcription.iter().cloned())
        .collect();
    vocab.sort();
    vocab.dedup();
    let lexicon = DecodeLexicon::from_vocab(&vocab)?;
    let cfg = DecoderConfig {
        beam: a.beam.unwrap_or(f64::INFINITY),
        lm_weight: a.lm_weight,
        ..DecoderConfig::default()
    };
    let set = model_inputs(&model, extractor.as_ref(), &test, tv_source(&inv))?;
    let dec = decode_set(&model, &set, &lexicon, &lm, &cfg)?;
    let mut w = BufWriter::new(fs::File::create(&a.out)?);
    for (id, r) in dec.ids.iter().zip(&dec.results) {
        writeln!(w, "{id}\t{}", r.words.join(" "))?;
    }
    w.flush()?;
    print_json(&serde_json::json!({ "utterances": dec.ids.len(), "wer": dec.wer(), "counts": dec.total }))
}

fn score_cmd(a: ScoreArgs) -> Result<()> {
    let refs = load_manifest(&a.reference)?.entries;
    let text = fs::read_to_string(&a.hyp).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(a.hyp.clone()),
        _ => Error::Io(e),
    })?;
    let mut hyps = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, words) = line.split_once('\t').unwrap_or((line, ""));
        if hyps.insert(id.to_string(), words.split_whitespace().collect::<Vec<_>>()).is_some() {
            return Err(Error::Parse {
                path: a.hyp.display().to_string(),
                line: i + 1,
                msg: format!("duplicate id `{id}`"),
            });
        }
    }
    let mut total = WerReport::default();
    for e in &refs {
        let hyp = hyps
            .get(&e.id)
            .ok_or_else(|| Error::Missing(format!("no hypothesis for `{}`", e.id)))?;
        let reference: Vec<&str> = e.transcription.iter().map(String::as_str).collect();
        total.accumulate(&wer(&reference, hyp)?);
    }
    let out = serde_json::json!({
        "substitutions": total.substitutions,
        "deletions": total.deletions,
        "insertions": total.insertions,
        "ref_words": total.ref_words,
        "wer": total.wer(),
    });
    match a.out {
        Some(p) => fs::write(p, serde_json::to_string_pretty(&out)? + "\n").map_err(Error::from),
        None => print_json(&out),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthCorpus(a) => synth_corpus(a),
        Command::Featurize(a) => featurize(a),
        Command::TrainInversion(a) => train_inversion_cmd(a),
        Command::EstimateTvs(a) => estimate_tvs(a),
        Command::TrainAm(a) => train_am_cmd(a, false),
        Command::TrainBn(a) => train_am_cmd(a, true),
        Command::ExtractBn(a) => extract_bn_cmd(a),
        Command::Adapt(a) => adapt_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Score(a) => score_cmd(a),
        Command::Experiment(ExperimentCommand::Run { plan, out }) => {
            let report = run_plan(&ExperimentPlan::load(&plan)?)?;
            report.write(&out)?;
            write!(std::io::stdout().lock(), "{}", dysasr::decode::render_tsv(&report.results))?;
            Ok(())
        }
    }
}

fn fail(code: &str, message: &str, status: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": code, "message": message }));
    ExitCode::from(status)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string(), 1),
    }
}
