use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;

use dsvr::io::DatasetManifest;
use dsvr::metrics::{
    classify_clusters, cluster_purity, davies_bouldin, export_mix_samples, phone_purity, pnmi, write_mix_samples,
    ClusterKind, JointCountTable, MetricReport, DEFAULT_MIX_SAMPLES,
};
use dsvr::model::{
    load_model, predict, save_model, train, write_history, Decoder, DvrModel, ModelConfig, ModelInput, TrainConfig,
    TrainSample, Variant,
};
use dsvr::quantizer::{
    balanced_subsample, quantize as quantize_seq, read_codes, train_codebook as kmeans, write_codes, CodeSequence,
    KmeansParams, SubsampleSpec, DEFAULT_K, DEFAULT_MAX_ITERS, DEFAULT_PER_LABEL_CAP, DEFAULT_TOL,
};
use dsvr::synth::{write_fixture, CorpusSpec};
use dsvr::text::{normalize_transcript, read_transcripts, write_transcripts, VerbatimTranscript, Vocabulary};
use dsvr::{Codebook32, Error, Matrix, Result};

pub enum CliError {
    Clap(clap::Error),
    Dsvr(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Dsvr(e)
    }
}

pub type CmdResult = std::result::Result<(), CliError>;

fn load_manifests(paths: &[PathBuf]) -> Result<Vec<DatasetManifest>> {
    if paths.is_empty() {
        return Err(Error::Validation("at least one --manifest is required".into()));
    }
    paths.iter().map(DatasetManifest::load).collect()
}

fn load_vocab(path: Option<&Path>) -> Result<Vocabulary> {
    path.map_or_else(|| Ok(Vocabulary::default()), Vocabulary::load)
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn to_json<S: serde::Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Format(format!("JSON encoding: {e}")))
}

fn quantize_all(manifests: &[DatasetManifest], cb: &Codebook32) -> Result<Vec<CodeSequence>> {
    let entries: Vec<(&DatasetManifest, &dsvr::io::ManifestEntry)> =
        manifests.iter().flat_map(|m| m.entries.iter().map(move |e| (m, e))).collect();
    entries
        .par_iter()
        .map(|(m, e)| quantize_seq(&m.load_embeddings(e)?, cb))
        .collect()
}

#[derive(Debug, Args)]
pub struct TrainCodebookArgs {
    /// Manifest(s) with labelled frames; repeat to pool corpora.
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    /// Number of codes.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Most frames drawn for any one label.
    #[arg(long, default_value_t = DEFAULT_PER_LABEL_CAP)]
    per_label_cap: usize,
    /// Restrict sampling to these labels (comma separated).
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Split each label's cap across manifests by these weights.
    #[arg(long, value_delimiter = ',')]
    manifest_weights: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Relative inertia change that stops Lloyd iterations.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Output codebook file.
    #[arg(long)]
    out: PathBuf,
}

pub fn train_codebook(a: TrainCodebookArgs) -> CmdResult {
    let params = KmeansParams {
        k: a.k,
        seed: a.seed,
        max_iters: a.max_iters,
        tol: a.tol,
    };
    if a.k < 2 {
        return Err(Error::Validation(format!("--k must be at least 2, got {}", a.k)).into());
    }
    let manifests = load_manifests(&a.manifest)?;
    let spec = SubsampleSpec {
        per_label_cap: a.per_label_cap,
        label_set: a.labels.into_iter().collect::<BTreeSet<_>>(),
        seed: a.seed,
        manifest_weights: a.manifest_weights,
    };
    let sample = balanced_subsample(&manifests, &spec)?;
    log::info!("training k={} on {} sampled frames", a.k, sample.frames.rows());
    let cb = kmeans(&sample.frames, &params)?;
    cb.save(&a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    codebook: PathBuf,
    /// Output codes TSV: utt_id, then space-separated code ids.
    #[arg(long)]
    out: PathBuf,
}

pub fn quantize(a: QuantizeArgs) -> CmdResult {
    let manifests = load_manifests(&a.manifest)?;
    let cb = Codebook32::load(&a.codebook)?;
    write_codes(&quantize_all(&manifests, &cb)?, &a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalCodebookArgs {
    /// Manifest(s) with frame labels.
    #[arg(long, required = true)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    codebook: PathBuf,
    /// JSON report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write frames of Mix clusters to this TSV.
    #[arg(long)]
    mix_samples: Option<PathBuf>,
    /// Frames per Mix cluster in the sample file.
    #[arg(long, default_value_t = DEFAULT_MIX_SAMPLES)]
    mix_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn eval_codebook(a: EvalCodebookArgs) -> CmdResult {
    let manifests = load_manifests(&a.manifest)?;
    let cb = Codebook32::load(&a.codebook)?;
    let mut table = JointCountTable::new(cb.k());
    let mut frames = Vec::new();
    let mut all_codes = Vec::new();
    let mut rows = 0;
    let mut by_utt = HashMap::new();
    for m in &manifests {
        for e in &m.entries {
            let emb = m.load_embeddings(e)?;
            let codes = quantize_seq(&emb, &cb)?;
            let labels = m.load_labels(e, emb.len())?;
            table.accumulate(&labels.sequence, &codes)?;
            frames.extend_from_slice(emb.frames.as_slice());
            rows += emb.len();
            all_codes.extend_from_slice(&codes.codes);
            by_utt.insert(e.utt_id.clone(), codes);
        }
    }
    let frames = Matrix::from_vec(rows, cb.dim(), frames)?;
    let verdicts = classify_clusters(&table)?;
    let report = MetricReport {
        k: cb.k(),
        db_index: davies_bouldin(&frames, &all_codes, cb.k())?,
        phone_purity: phone_purity(&table)?,
        cluster_purity: cluster_purity(&table)?,
        pnmi: pnmi(&table)?,
        n_frames: table.total(),
        n_clean: verdicts.iter().filter(|v| v.kind == ClusterKind::Clean).count(),
        n_mix: verdicts.iter().filter(|v| v.kind == ClusterKind::Mix).count(),
    };
    if let Some(path) = &a.mix_samples {
        let samples = export_mix_samples(&verdicts, &manifests, &by_utt, a.mix_n, a.seed)?;
        write_mix_samples(&samples, path)?;
    }
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Raw transcripts TSV: utt_id, text.
    #[arg(long = "in")]
    input: PathBuf,
    /// Normalised transcripts TSV.
    #[arg(long)]
    out: PathBuf,
}

pub fn normalize(a: NormalizeArgs) -> CmdResult {
    let raw = read_transcripts(&a.input)?;
    let norm = raw
        .iter()
        .map(|t| normalize_transcript(&t.utt_id, &t.text))
        .collect::<Result<Vec<_>>>()?;
    write_transcripts(&norm, &a.out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Baseline,
    Discrete,
    Joint,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::Discrete => Variant::Discrete,
            VariantArg::Joint => Variant::Joint,
        }
    }
}

/// Where code ids come from: a codebook, or TSV files from `quantize`.
#[derive(Debug, Args)]
pub struct CodeSource {
    /// Codebook used to quantize embeddings on the fly.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Codes TSV file(s) written by `quantize`; used when no codebook is given.
    #[arg(long)]
    codes: Vec<PathBuf>,
}

enum Codes {
    None,
    Book(Codebook32),
    Table(HashMap<String, Vec<usize>>),
}

impl CodeSource {
    fn open(&self, variant: Variant) -> Result<Codes> {
        if !variant.uses_codes() {
            return Ok(Codes::None);
        }
        if let Some(p) = &self.codebook {
            return Ok(Codes::Book(Codebook32::load(p)?));
        }
        if self.codes.is_empty() {
            return Err(Error::Validation(format!("the {variant:?} variant needs --codebook or --codes")));
        }
        let mut table = HashMap::new();
        for p in &self.codes {
            for s in read_codes(p)? {
                table.insert(s.utt_id, s.codes);
            }
        }
        Ok(Codes::Table(table))
    }
}

impl Codes {
    fn k(&self) -> Option<usize> {
        match self {
            Codes::Book(cb) => Some(cb.k()),
            _ => None,
        }
    }

    fn lookup(&self, emb: &dsvr::io::EmbeddingSequence) -> Result<Option<Vec<usize>>> {
        match self {
            Codes::None => Ok(None),
            Codes::Book(cb) => Ok(Some(quantize_seq(emb, cb)?.codes)),
            Codes::Table(t) => {
                let codes = t
                    .get(&emb.utt_id)
                    .ok_or_else(|| Error::Validation(format!("no codes for utterance {:?}", emb.utt_id)))?;
                if codes.len() != emb.len() {
                    return Err(Error::Validation(format!(
                        "{}: {} codes for {} frames",
                        emb.utt_id,
                        codes.len(),
                        emb.len()
                    )));
                }
                Ok(Some(codes.clone()))
            }
        }
    }
}

/// Loads model inputs and encoded targets for every manifest entry.
fn load_samples(
    manifest: &DatasetManifest,
    variant: Variant,
    codes: &Codes,
    vocab: &Vocabulary,
    transcripts: &HashMap<String, String>,
) -> Result<Vec<TrainSample<f32>>> {
    manifest
        .entries
        .par_iter()
        .map(|e| {
            let emb = manifest.load_embeddings(e)?;
            let text = transcripts.get(&e.utt_id).unwrap_or(&e.transcript);
            Ok(TrainSample {
                utt_id: e.utt_id.clone(),
                codes: codes.lookup(&emb)?,
                target: vocab.encode_lenient(text)?,
                embeddings: variant.uses_embeddings().then_some(emb.frames),
            })
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct TrainDvrArgs {
    /// Training manifest; transcripts come from its `transcript` field.
    #[arg(long)]
    train: PathBuf,
    /// Dev manifest for early stopping; the training set is monitored when absent.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// TSV of normalised transcripts overriding the manifest field.
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "discrete")]
    variant: VariantArg,
    #[command(flatten)]
    source: CodeSource,
    /// Codebook size when codes come from TSV files.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    /// Vocabulary file; the built-in 39-symbol set when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Token embedding width; the joint model is twice as wide.
    #[arg(long, default_value_t = ModelConfig::default().d_ff)]
    d_ff: usize,
    #[arg(long, default_value_t = ModelConfig::default().n_layers)]
    n_layers: usize,
    #[arg(long, default_value_t = ModelConfig::default().n_heads)]
    n_heads: usize,
    #[arg(long, default_value_t = ModelConfig::default().dropout)]
    dropout: f64,
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    max_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().early_stop_patience)]
    early_stop_patience: usize,
    /// Clip the global gradient norm to this value.
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch losses and dev CER as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

pub fn train_dvr(a: TrainDvrArgs) -> CmdResult {
    let variant = Variant::from(a.variant);
    let vocab = load_vocab(a.vocab.as_deref())?;
    let codes = a.source.open(variant)?;
    let transcripts: HashMap<String, String> = match &a.transcripts {
        Some(p) => read_transcripts(p)?.into_iter().map(|t| (t.utt_id, t.text)).collect(),
        None => HashMap::new(),
    };
    let train_m = DatasetManifest::load(&a.train)?;
    let dev_m = a.dev.as_ref().map(DatasetManifest::load).transpose()?;
    let train_set = load_samples(&train_m, variant, &codes, &vocab, &transcripts)?;
    let dev_set = match &dev_m {
        Some(m) => load_samples(m, variant, &codes, &vocab, &transcripts)?,
        None => Vec::new(),
    };
    let d_in = train_m
        .entries
        .first()
        .map(|e| dsvr::io::read_embedding_header(train_m.resolve(&e.embedding_path)).map(|h| h.dim))
        .transpose()?
        .ok_or_else(|| Error::EmptyTraining("training manifest has no entries".into()))?;
    let config = ModelConfig {
        variant,
        k: codes.k().unwrap_or(a.k),
        d_in,
        d_ff: a.d_ff,
        n_layers: a.n_layers,
        n_heads: a.n_heads,
        vocab_size: vocab.len(),
        dropout: a.dropout,
    };
    let tc = TrainConfig {
        lr: a.lr,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        early_stop_patience: a.early_stop_patience,
        seed: a.seed,
        grad_clip: a.grad_clip,
    };
    let model = DvrModel::<f32>::new(config, a.seed)?;
    log::info!("{variant:?} model with {} parameters", model.count_parameters());
    let outcome = train(model, &train_set, &dev_set, &tc)?;
    log::info!("best epoch {}", outcome.best_epoch);
    save_model(&outcome.model, &a.out)?;
    if let Some(p) = &a.history {
        write_history(&outcome.history, p)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DecoderArg {
    Greedy,
    Beam,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: CodeSource,
    /// Vocabulary the model was trained with; the built-in set when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "greedy")]
    decoder: DecoderArg,
    #[arg(long, default_value_t = 8)]
    beam_width: usize,
    /// Hypotheses TSV: utt_id, text.
    #[arg(long)]
    out: PathBuf,
}

pub fn decode(a: DecodeArgs) -> CmdResult {
    let model = load_model::<f32>(&a.model)?;
    let variant = model.config().variant;
    let vocab = load_vocab(a.vocab.as_deref())?;
    let codes = a.source.open(variant)?;
    if let Some(k) = codes.k() {
        if k != model.config().k {
            return Err(Error::Validation(format!("codebook has {k} codes, model expects {}", model.config().k)).into());
        }
    }
    let decoder = match a.decoder {
        DecoderArg::Greedy => Decoder::Greedy,
        DecoderArg::Beam => Decoder::Beam(a.beam_width),
    };
    let manifest = DatasetManifest::load(&a.manifest)?;
    let hyps = manifest
        .entries
        .par_iter()
        .map(|e| {
            let emb = manifest.load_embeddings(e)?;
            let c = codes.lookup(&emb)?;
            let input = match (&c, variant) {
                (Some(c), Variant::Joint) => ModelInput::joint(c, &emb.frames),
                (Some(c), _) => ModelInput::codes(c),
                (None, _) => ModelInput::embeddings(&emb.frames),
            };
            Ok(VerbatimTranscript::new(e.utt_id.clone(), predict(&model, &input, decoder, &vocab)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_transcripts(&hyps, &a.out)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Reference transcripts TSV.
    #[arg(long)]
    refs: PathBuf,
    /// Hypothesis transcripts TSV.
    #[arg(long)]
    hyps: PathBuf,
    /// Remove short vowels from both sides before scoring.
    #[arg(long)]
    strip_vowels: bool,
    /// TSV mapping utt_id to a group name for per-group rates.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// JSON report; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-group CSV table.
    #[arg(long)]
    group_csv: Option<PathBuf>,
}

pub fn score(a: ScoreArgs) -> CmdResult {
    let vocab = load_vocab(a.vocab.as_deref())?;
    let refs = read_transcripts(&a.refs)?;
    let hyps = read_transcripts(&a.hyps)?;
    let groups = a.groups.as_ref().map(dsvr::eval::read_groups).transpose()?;
    let report = dsvr::eval::score_manifest(&refs, &hyps, groups.as_ref(), a.strip_vowels, &vocab)?;
    if let Some(p) = &a.group_csv {
        dsvr::eval::write_group_csv(&report, p)?;
    }
    emit(a.out.as_deref(), &to_json(&report)?)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenFixtureArgs {
    /// Directory receiving train/ and dev/ data, manifests and reference TSVs.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = CorpusSpec::default().n_classes)]
    n_classes: usize,
    /// Gaussian modes per class.
    #[arg(long, default_value_t = CorpusSpec::default().modes_per_class)]
    modes_per_class: usize,
    #[arg(long, default_value_t = CorpusSpec::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = CorpusSpec::default().n_utterances)]
    n_train: usize,
    #[arg(long, default_value_t = 10)]
    n_dev: usize,
    /// Within-class standard deviation.
    #[arg(long, default_value_t = CorpusSpec::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn gen_fixture(a: GenFixtureArgs) -> CmdResult {
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let spec = CorpusSpec {
        n_classes: a.n_classes,
        modes_per_class: a.modes_per_class,
        dim: a.dim,
        n_utterances: a.n_train,
        noise: a.noise,
        seed: a.seed,
        ..CorpusSpec::default()
    };
    let paths = write_fixture(&a.out_dir, &spec, a.n_dev)?;
    println!("{}\n{}", paths.train.display(), paths.dev.display());
    Ok(())
}
