//! Codebook training by k-means and nearest-centroid quantization.
//!
//! Training frames are put into a canonical (lexicographic) order before
//! k-means++ seeding, so the learned centroid set depends on the *set* of
//! frames and the seed, not on the order the frames were gathered in.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{DatasetManifest, EmbeddingSequence, UNKNOWN_LABEL};
use crate::matrix::{sq_dist, Matrix};
use crate::scalar::Scalar;

pub const CODEBOOK_MAGIC: &[u8; 4] = b"DSCB";
pub const CODEBOOK_VERSION: u32 = 1;
const CODEBOOK_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 4 + 8 + 8;

pub const DEFAULT_K: usize = 256;
pub const K_GRID: [usize; 3] = [128, 256, 512];
pub const DEFAULT_MAX_ITERS: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_PER_LABEL_CAP: usize = 10_000;

/// Learned quantizer state: `k` centroids of dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    pub centroids: Matrix<T>,
    pub training_inertia: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl<T: Scalar> Codebook<T> {
    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Index of the nearest centroid; ties go to the smallest index.
    pub fn nearest(&self, x: &[T]) -> (usize, T) {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (i, c) in self.centroids.iter_rows().enumerate() {
            let d = sq_dist(x, c);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        (best, best_d)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CODEBOOK_HEADER_LEN + 4 * self.k() * self.dim());
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.max_iters as u32).to_le_bytes());
        out.extend_from_slice(&self.tol.to_le_bytes());
        out.extend_from_slice(&self.training_inertia.to_le_bytes());
        for x in self.centroids.as_slice() {
            out.extend_from_slice(&x.as_f32().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.starts_with(CODEBOOK_MAGIC) {
            return Err(Error::Format("not a codebook file".into()));
        }
        if bytes.len() < CODEBOOK_HEADER_LEN {
            return Err(Error::Corrupt("codebook header truncated".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let f64_at = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != CODEBOOK_VERSION {
            return Err(Error::Format(format!("unsupported codebook version {version}")));
        }
        let k = u32_at(8) as usize;
        let d = u32_at(12) as usize;
        let seed = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let max_iters = u32_at(24) as usize;
        let tol = f64_at(28);
        let training_inertia = f64_at(36);
        let payload = &bytes[CODEBOOK_HEADER_LEN..];
        if payload.len() != 4 * k * d {
            return Err(Error::Corrupt(format!(
                "codebook declares {k}x{d} but carries {} payload bytes",
                payload.len()
            )));
        }
        let data: Vec<T> = payload
            .chunks_exact(4)
            .map(|c| T::of_f32(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let centroids = Matrix::from_vec(k, d, data)?;
        if k < 1 || d < 1 || !centroids.all_finite() {
            return Err(Error::Validation("codebook centroids must be finite and non-empty".into()));
        }
        Ok(Self {
            centroids,
            training_inertia,
            seed,
            max_iters,
            tol,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 0,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

/// Inertia after every assignment step; the first entry is the seeding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KmeansTrace {
    pub inertia: Vec<f64>,
    pub empty_repairs: usize,
}

pub fn train_codebook<T: Scalar>(frames: &Matrix<T>, params: &KmeansParams) -> Result<Codebook<T>> {
    train_codebook_traced(frames, params).map(|(cb, _)| cb)
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn train_codebook_traced<T: Scalar>(
    frames: &Matrix<T>,
    params: &KmeansParams,
) -> Result<(Codebook<T>, KmeansTrace)> {
    let k = params.k;
    if k < 2 {
        return Err(Error::Validation(format!("codebook size must be at least 2, got {k}")));
    }
    if params.max_iters == 0 {
        return Err(Error::Validation("max_iters must be at least 1".into()));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::Validation(format!("tolerance must be non-negative, got {}", params.tol)));
    }
    let n = frames.rows();
    if n < k {
        return Err(Error::InsufficientData(format!("{n} frames cannot train {k} centroids")));
    }
    if !frames.all_finite() {
        return Err(Error::Validation("training frames contain non-finite values".into()));
    }

    let data = canonical_order(frames);
    let distinct = 1 + (1..n).filter(|&i| data.row(i) != data.row(i - 1)).count();
    if distinct == 1 {
        return Err(Error::DegenerateData("all training frames are identical".into()));
    }
    if distinct < k {
        return Err(Error::DegenerateData(format!(
            "{distinct} distinct frames cannot form {k} distinct centroids"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_pp(&data, k, &mut rng);
    let mut trace = KmeansTrace::default();

    let (mut assign, mut inertia) = assign_all(&data, &centroids);
    trace.inertia.push(inertia);
    for _ in 0..params.max_iters {
        if inertia == 0.0 {
            break;
        }
        trace.empty_repairs += update_centroids(&data, &assign, &mut centroids);
        let (next, next_inertia) = assign_all(&data, &centroids);
        trace.inertia.push(next_inertia);
        let unchanged = next == assign;
        let improvement = (inertia - next_inertia) / inertia;
        assign = next;
        inertia = next_inertia;
        if unchanged || improvement < params.tol {
            break;
        }
    }

    Ok((
        Codebook {
            centroids,
            training_inertia: inertia,
            seed: params.seed,
            max_iters: params.max_iters,
            tol: params.tol,
        },
        trace,
    ))
}

fn canonical_order<T: Scalar>(frames: &Matrix<T>) -> Matrix<T> {
    let mut idx: Vec<usize> = (0..frames.rows()).collect();
    idx.sort_by(|&a, &b| {
        frames
            .row(a)
            .iter()
            .zip(frames.row(b))
            .map(|(x, y)| x.as_f64().total_cmp(&y.as_f64()))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    frames.select_rows(&idx)
}

fn kmeans_pp<T: Scalar>(data: &Matrix<T>, k: usize, rng: &mut impl Rng) -> Matrix<T> {
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(first)).as_f64())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        // `distinct >= k` guarantees some point is still uncovered
        let pick = pick.expect("some frame lies away from every chosen centroid");
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, w) in d2.iter_mut().enumerate() {
            let d = sq_dist(data.row(i), data.row(pick)).as_f64();
            if d < *w {
                *w = d;
            }
        }
    }
    centroids
}

fn assign_all<T: Scalar>(data: &Matrix<T>, centroids: &Matrix<T>) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = (0..data.rows())
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            let mut best = 0;
            let mut best_d = T::infinity();
            for (j, c) in centroids.iter_rows().enumerate() {
                let d = sq_dist(x, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            (best, best_d.as_f64())
        })
        .collect();
    // index-ordered reduction keeps the sum independent of thread count
    let inertia = pairs.iter().map(|p| p.1).sum();
    (pairs.into_iter().map(|p| p.0).collect(), inertia)
}

/// Replaces centroids by cluster means; returns the number of empty clusters
/// that had to be reseeded.
fn update_centroids<T: Scalar>(data: &Matrix<T>, assign: &[usize], centroids: &mut Matrix<T>) -> usize {
    let (k, d) = (centroids.rows(), centroids.cols());
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(data.row(i)) {
            *s += x.as_f64();
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *dst = T::of(s / inv);
            }
        }
    }

    let mut membership = assign.to_vec();
    let mut repaired = 0;
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let largest = (0..k).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
        let far = (0..data.rows())
            .filter(|&i| membership[i] == largest)
            .map(|i| (i, sq_dist(data.row(i), centroids.row(largest)).as_f64()))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        if let Some((i, _)) = far {
            let point = data.row(i).to_vec();
            centroids.row_mut(c).copy_from_slice(&point);
            membership[i] = c;
            counts[largest] -= 1;
            counts[c] += 1;
            repaired += 1;
        }
    }
    repaired
}

/// Per-utterance sequence of code ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSequence {
    pub utt_id: String,
    pub codes: Vec<usize>,
}

impl CodeSequence {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Assigns every frame to its nearest centroid.
pub fn quantize<T: Scalar>(seq: &EmbeddingSequence, cb: &Codebook<T>) -> Result<CodeSequence> {
    if seq.dim() != cb.dim() {
        return Err(Error::Validation(format!(
            "{}: embedding dimension {} does not match codebook dimension {}",
            seq.utt_id,
            seq.dim(),
            cb.dim()
        )));
    }
    let codes = (0..seq.len())
        .into_par_iter()
        .map_init(
            || vec![T::zero(); seq.dim()],
            |buf, t| {
                for (b, &x) in buf.iter_mut().zip(seq.frames.row(t)) {
                    *b = T::of_f32(x);
                }
                cb.nearest(buf).0
            },
        )
        .collect();
    Ok(CodeSequence {
        utt_id: seq.utt_id.clone(),
        codes,
    })
}

/// Codes file: one `utt_id<TAB>space-separated codes` line per utterance.
pub fn write_codes(seqs: &[CodeSequence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in seqs {
        let codes: Vec<String> = s.codes.iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}\t{}", s.utt_id, codes.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_codes(path: impl AsRef<Path>) -> Result<Vec<CodeSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (utt, rest) = line.split_once('\t').ok_or_else(|| {
            Error::Validation(format!("{}:{}: expected utt_id<TAB>codes", path.display(), i + 1))
        })?;
        let codes = rest
            .split_whitespace()
            .map(|c| c.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if !seen.insert(utt.to_string()) {
            return Err(Error::Validation(format!("{}: duplicate utt_id {utt:?}", path.display())));
        }
        out.push(CodeSequence {
            utt_id: utt.to_string(),
            codes,
        });
    }
    Ok(out)
}

/// Which frames feed codebook training.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleSpec {
    pub per_label_cap: usize,
    /// Labels to draw from; empty means every known label.
    pub label_set: BTreeSet<String>,
    pub seed: u64,
    /// Optional per-manifest weights. When set, each label's cap is split
    /// across manifests in proportion to the weights instead of pooling.
    pub manifest_weights: Option<Vec<f64>>,
}

impl Default for SubsampleSpec {
    fn default() -> Self {
        Self {
            per_label_cap: DEFAULT_PER_LABEL_CAP,
            label_set: BTreeSet::new(),
            seed: 0,
            manifest_weights: None,
        }
    }
}

/// Location of a frame: (manifest, entry, frame).
pub type FrameRef = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub frames: Matrix<f32>,
    pub labels: Vec<String>,
    pub sources: Vec<FrameRef>,
}

/// Draws at most `per_label_cap` frames per label, uniformly at random.
pub fn balanced_subsample(manifests: &[DatasetManifest], spec: &SubsampleSpec) -> Result<Subsample> {
    if spec.per_label_cap == 0 {
        return Err(Error::Validation("per-label cap must be at least 1".into()));
    }
    if let Some(w) = &spec.manifest_weights {
        if w.len() != manifests.len() || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Validation(
                "manifest weights must be one non-negative value per manifest with a positive sum".into(),
            ));
        }
    }

    let mut pools: BTreeMap<String, Vec<FrameRef>> = BTreeMap::new();
    let mut dim = None;
    let (mut gap_frames, mut gap_utts) = (0usize, 0usize);
    for (mi, m) in manifests.iter().enumerate() {
        for (ei, entry) in m.entries.iter().enumerate() {
            let header = crate::io::read_embedding_header(m.resolve(&entry.embedding_path))?;
            match dim {
                None => dim = Some(header.dim),
                Some(d) if d != header.dim => {
                    return Err(Error::Validation(format!(
                        "{}: dimension {} differs from {d}",
                        entry.utt_id, header.dim
                    )))
                }
                Some(_) => {}
            }
            let labels = m.load_labels(entry, header.frames)?;
            if labels.gap_frames > 0 {
                log::debug!("{}: {} frames without alignment", entry.utt_id, labels.gap_frames);
                gap_frames += labels.gap_frames;
                gap_utts += 1;
            }
            for (t, l) in labels.sequence.labels.iter().enumerate() {
                if l == UNKNOWN_LABEL || !(spec.label_set.is_empty() || spec.label_set.contains(l)) {
                    continue;
                }
                pools.entry(l.clone()).or_default().push((mi, ei, t));
            }
        }
    }
    if gap_frames > 0 {
        log::info!("{gap_frames} frames in {gap_utts} utterances carry no label and are not sampled");
    }
    if pools.is_empty() {
        return Err(Error::EmptySelection("no labelled frames to sample from".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picks: Vec<(String, FrameRef)> = Vec::new();
    for (label, pool) in &pools {
        let caps: Vec<(usize, Vec<FrameRef>)> = match &spec.manifest_weights {
            None => vec![(spec.per_label_cap, pool.clone())],
            Some(w) => {
                let total: f64 = w.iter().sum();
                (0..manifests.len())
                    .map(|mi| {
                        let cap = (spec.per_label_cap as f64 * w[mi] / total).round() as usize;
                        (cap, pool.iter().copied().filter(|r| r.0 == mi).collect())
                    })
                    .collect()
            }
        };
        for (cap, group) in caps {
            let amount = cap.min(group.len());
            if amount == 0 {
                continue;
            }
            let mut chosen = index::sample(&mut rng, group.len(), amount).into_vec();
            chosen.sort_unstable();
            picks.extend(chosen.into_iter().map(|i| (label.clone(), group[i])));
        }
    }
    if picks.is_empty() {
        return Err(Error::EmptySelection("the weighting selected no frames".into()));
    }

    let d = dim.expect("at least one utterance was read");
    let mut frames = Matrix::zeros(picks.len(), d);
    let mut order: Vec<usize> = (0..picks.len()).collect();
    order.sort_by_key(|&i| picks[i].1);
    let mut loaded: Option<((usize, usize), EmbeddingSequence)> = None;
    for i in order {
        let (mi, ei, t) = picks[i].1;
        if loaded.as_ref().map(|l| l.0) != Some((mi, ei)) {
            let m = &manifests[mi];
            loaded = Some(((mi, ei), m.load_embeddings(&m.entries[ei])?));
        }
        let seq = &loaded.as_ref().unwrap().1;
        frames.row_mut(i).copy_from_slice(seq.frames.row(t));
    }
    let (labels, sources) = picks.into_iter().unzip();
    Ok(Subsample {
        frames,
        labels,
        sources,
    })
}
