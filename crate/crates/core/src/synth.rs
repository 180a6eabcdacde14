//! Synthetic corpora with known structure, for tests and demos.
//!
//! Frames are drawn from isotropic Gaussians. Each latent phone class owns
//! one or more modes, and every letter segment picks one mode at random.
//! Classes are written as Arabic letters; a silence class separates words,
//! is left unlabelled in the frame-label files and reads as a space in the
//! transcript.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::{
    write_embeddings, write_frame_labels, DatasetManifest, EmbeddingSequence, FrameLabelSequence, ManifestEntry,
    DEFAULT_FRAME_SHIFT_MS, UNKNOWN_LABEL,
};
use crate::matrix::Matrix;
use crate::text::{write_transcripts, VerbatimTranscript};

/// Letters used for the latent classes, in order.
pub const CLASS_LETTERS: &str = "بتجدرسشعفقكلمنهوصطزح";

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_classes: usize,
    /// Gaussian modes per class.
    pub modes_per_class: usize,
    pub dim: usize,
    pub n_utterances: usize,
    pub words_per_utt: (usize, usize),
    pub letters_per_word: (usize, usize),
    /// Frames per letter, inclusive range.
    pub frames_per_letter: (usize, usize),
    /// Frames per inter-word silence, inclusive range.
    pub frames_per_gap: (usize, usize),
    /// Standard deviation of the class means around the origin.
    pub spread: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_classes: 12,
            modes_per_class: 1,
            dim: 16,
            n_utterances: 40,
            words_per_utt: (2, 4),
            letters_per_word: (2, 4),
            frames_per_letter: (2, 4),
            frames_per_gap: (1, 3),
            spread: 1.0,
            noise: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub utt_id: String,
    pub frames: Matrix<f32>,
    /// Latent class per frame; `None` for silence.
    pub classes: Vec<Option<usize>>,
    pub labels: Vec<String>,
    pub transcript: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub symbols: Vec<char>,
    /// Mode means, `modes_per_class` consecutive rows per class; the last
    /// row is silence.
    pub means: Matrix<f64>,
    pub utterances: Vec<SynthUtterance>,
}

fn range(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi)
}

/// Draws a corpus from `spec`. Identical specs give identical corpora.
pub fn gaussian_corpus(spec: &CorpusSpec, id_prefix: &str) -> Result<Corpus> {
    let letters: Vec<char> = CLASS_LETTERS.chars().collect();
    if spec.n_classes < 2 || spec.n_classes > letters.len() {
        return Err(Error::Validation(format!(
            "n_classes must lie in 2..={}, got {}",
            letters.len(),
            spec.n_classes
        )));
    }
    if spec.dim == 0 || spec.n_utterances == 0 || spec.modes_per_class == 0 {
        return Err(Error::Validation("dim, modes_per_class and n_utterances must be positive".into()));
    }
    for (lo, hi) in [spec.words_per_utt, spec.letters_per_word, spec.frames_per_letter, spec.frames_per_gap] {
        if lo == 0 || lo > hi {
            return Err(Error::Validation(format!("bad range {lo}..={hi}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n_means = spec.n_classes * spec.modes_per_class + 1;
    let means = Matrix::from_vec(
        n_means,
        spec.dim,
        (0..n_means * spec.dim).map(|_| spec.spread * unit.sample(&mut rng)).collect(),
    )?;
    let silence = n_means - 1;
    let symbols: Vec<char> = letters[..spec.n_classes].to_vec();
    let mut utterances = Vec::with_capacity(spec.n_utterances);
    for u in 0..spec.n_utterances {
        let mut classes: Vec<Option<usize>> = Vec::new();
        let mut modes: Vec<usize> = Vec::new();
        let mut transcript = String::new();
        let words = range(&mut rng, spec.words_per_utt);
        for w in 0..words {
            if w > 0 {
                transcript.push(' ');
                for _ in 0..range(&mut rng, spec.frames_per_gap) {
                    classes.push(None);
                    modes.push(silence);
                }
            }
            let mut prev = None;
            for _ in 0..range(&mut rng, spec.letters_per_word) {
                // adjacent letters differ so each one survives CTC collapsing
                let mut c = rng.random_range(0..spec.n_classes);
                while Some(c) == prev {
                    c = rng.random_range(0..spec.n_classes);
                }
                prev = Some(c);
                transcript.push(symbols[c]);
                let mode = c * spec.modes_per_class + rng.random_range(0..spec.modes_per_class);
                for _ in 0..range(&mut rng, spec.frames_per_letter) {
                    classes.push(Some(c));
                    modes.push(mode);
                }
            }
        }
        let mut data = Vec::with_capacity(classes.len() * spec.dim);
        for &m in &modes {
            let mean = means.row(m);
            data.extend(mean.iter().map(|m| (m + spec.noise * unit.sample(&mut rng)) as f32));
        }
        let labels = classes
            .iter()
            .map(|c| c.map_or(UNKNOWN_LABEL.to_string(), |c| symbols[c].to_string()))
            .collect();
        utterances.push(SynthUtterance {
            utt_id: format!("{id_prefix}{u:04}"),
            frames: Matrix::from_vec(classes.len(), spec.dim, data)?,
            classes,
            labels,
            transcript,
        });
    }
    Ok(Corpus {
        symbols,
        means,
        utterances,
    })
}

/// Writes embeddings, frame labels and a manifest for `corpus` under `dir`.
/// Returns the manifest path.
pub fn write_corpus(corpus: &Corpus, dir: &Path, name: &str) -> Result<PathBuf> {
    let data_dir = dir.join(name);
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
    let mut entries = Vec::with_capacity(corpus.utterances.len());
    for u in &corpus.utterances {
        let emb = format!("{name}/{}.dsvr", u.utt_id);
        let lab = format!("{name}/{}.tsv", u.utt_id);
        write_embeddings(
            &EmbeddingSequence::new(u.utt_id.clone(), u.frames.clone(), DEFAULT_FRAME_SHIFT_MS)?,
            dir.join(&emb),
        )?;
        write_frame_labels(
            &FrameLabelSequence {
                utt_id: u.utt_id.clone(),
                labels: u.labels.clone(),
            },
            dir.join(&lab),
        )?;
        entries.push(ManifestEntry {
            utt_id: u.utt_id.clone(),
            embedding_path: emb,
            transcript: u.transcript.clone(),
            label_path: Some(lab),
        });
    }
    let manifest = DatasetManifest {
        entries,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join(format!("{name}.jsonl"));
    manifest.write(&path)?;
    let refs: Vec<VerbatimTranscript> = corpus
        .utterances
        .iter()
        .map(|u| VerbatimTranscript::new(u.utt_id.clone(), u.transcript.clone()))
        .collect();
    write_transcripts(&refs, dir.join(format!("{name}.refs.tsv")))?;
    Ok(path)
}

/// Paths written by [`write_fixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixturePaths {
    pub train: PathBuf,
    pub dev: PathBuf,
}

/// Writes a train and a dev split drawn from the same class means.
pub fn write_fixture(dir: &Path, spec: &CorpusSpec, n_dev: usize) -> Result<FixturePaths> {
    let both = CorpusSpec {
        n_utterances: spec.n_utterances + n_dev,
        ..spec.clone()
    };
    let corpus = gaussian_corpus(&both, "utt")?;
    let (train, dev) = corpus.utterances.split_at(spec.n_utterances);
    let split = |u: &[SynthUtterance]| Corpus {
        symbols: corpus.symbols.clone(),
        means: corpus.means.clone(),
        utterances: u.to_vec(),
    };
    Ok(FixturePaths {
        train: write_corpus(&split(train), dir, "train")?,
        dev: write_corpus(&split(dev), dir, "dev")?,
    })
}

/// Code sequence paired with the label ids it spells out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedUtterance {
    pub codes: Vec<usize>,
    pub target: Vec<usize>,
}

/// Random code sequences with a fixed code-to-label map. Codes below
/// `n_silent` map to the blank; the rest map to labels `1..vocab_size`.
/// Each code is held for one to three frames, and runs of silent codes are
/// inserted between symbols at random.
pub fn coded_corpus(
    n: usize,
    len: (usize, usize),
    k: usize,
    n_silent: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<Vec<CodedUtterance>> {
    if n_silent == 0 || n_silent >= k || vocab_size < 2 || len.0 == 0 || len.0 > len.1 {
        return Err(Error::Validation("coded corpus needs 0 < n_silent < k, vocab_size >= 2, a valid length range".into()));
    }
    let label_of = |c: usize| if c < n_silent { 0 } else { 1 + (c - n_silent) % (vocab_size - 1) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let frames = rng.random_range(len.0..=len.1);
        let mut codes = Vec::with_capacity(frames);
        while codes.len() < frames {
            let c = if rng.random::<f64>() < 0.25 {
                rng.random_range(0..n_silent)
            } else {
                rng.random_range(n_silent..k)
            };
            for _ in 0..rng.random_range(1..=3) {
                codes.push(c);
            }
        }
        codes.truncate(frames);
        let path: Vec<usize> = codes.iter().map(|&c| label_of(c)).collect();
        out.push(CodedUtterance {
            target: crate::ctc::collapse(&path, 0),
            codes,
        });
    }
    Ok(out)
}
