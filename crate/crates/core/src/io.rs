//! On-disk formats shared by every pipeline stage: embedding files, frame
//! label files and JSON-lines dataset manifests.
//!
//! Embedding files are little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DSVR"
//! 4       4     u32 version (1)
//! 8       4     u32 T (frames)
//! 12      4     u32 d (dimension)
//! 16      4     f32 frame_shift_ms
//! 20      4*T*d f32 payload, row-major
//! ```
//!
//! A 2-D little-endian `f4` `.npy` array is accepted on input as well.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"DSVR";
pub const EMBEDDING_VERSION: u32 = 1;
pub const DEFAULT_FRAME_SHIFT_MS: f32 = 20.0;
const EMBEDDING_HEADER_LEN: usize = 20;
const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

/// Marker for frames without an aligned symbol.
pub const UNKNOWN_LABEL: &str = "<unk>";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub utt_id: String,
    pub frames: Matrix<f32>,
    pub frame_shift_ms: f32,
}

impl EmbeddingSequence {
    pub fn new(utt_id: impl Into<String>, frames: Matrix<f32>, frame_shift_ms: f32) -> Result<Self> {
        let seq = Self {
            utt_id: utt_id.into(),
            frames,
            frame_shift_ms,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.rows() == 0 || self.frames.cols() == 0 {
            return Err(Error::Validation(format!(
                "{}: embedding matrix must be non-empty, got {}x{}",
                self.utt_id,
                self.frames.rows(),
                self.frames.cols()
            )));
        }
        if !(self.frame_shift_ms > 0.0 && self.frame_shift_ms.is_finite()) {
            return Err(Error::Validation(format!(
                "{}: frame shift must be positive, got {}",
                self.utt_id, self.frame_shift_ms
            )));
        }
        if let Some(pos) = self.frames.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "{}: non-finite value at frame {}, dim {}",
                self.utt_id,
                pos / self.frames.cols(),
                pos % self.frames.cols()
            )));
        }
        Ok(())
    }
}

/// Header of an embedding file, readable without the payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingHeader {
    pub frames: usize,
    pub dim: usize,
    pub frame_shift_ms: f32,
}

fn utt_id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Reads an embedding file. The utterance id is taken from the file stem.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes, utt_id_from_path(path))
        .map_err(|e| annotate(e, path))
}

fn annotate(err: Error, path: &Path) -> Error {
    let p = path.display();
    match err {
        Error::Format(m) => Error::Format(format!("{p}: {m}")),
        Error::Corrupt(m) => Error::Corrupt(format!("{p}: {m}")),
        other => other,
    }
}

/// Decodes an embedding file already in memory.
pub fn decode_embeddings(bytes: &[u8], utt_id: String) -> Result<EmbeddingSequence> {
    let (header, payload) = if bytes.starts_with(EMBEDDING_MAGIC) {
        split_dsvr(bytes)?
    } else if bytes.starts_with(NPY_MAGIC) {
        split_npy(bytes)?
    } else {
        return Err(Error::Format("unrecognised magic header".into()));
    };
    let n = header.frames * header.dim;
    let mut data = Vec::with_capacity(n);
    data.extend(
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
    );
    let frames = Matrix::from_vec(header.frames, header.dim, data)?;
    EmbeddingSequence::new(utt_id, frames, header.frame_shift_ms)
}

fn split_dsvr(bytes: &[u8]) -> Result<(EmbeddingHeader, &[u8])> {
    if bytes.len() < EMBEDDING_HEADER_LEN {
        return Err(Error::Corrupt(format!(
            "header truncated ({} bytes)",
            bytes.len()
        )));
    }
    let version = le_u32(bytes, 4);
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header = EmbeddingHeader {
        frames: le_u32(bytes, 8) as usize,
        dim: le_u32(bytes, 12) as usize,
        frame_shift_ms: f32::from_le_bytes(bytes[16..20].try_into().unwrap()),
    };
    let payload = &bytes[EMBEDDING_HEADER_LEN..];
    check_payload(&header, payload.len())?;
    Ok((header, payload))
}

fn check_payload(header: &EmbeddingHeader, len: usize) -> Result<()> {
    let want = header
        .frames
        .checked_mul(header.dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Corrupt("declared shape overflows".into()))?;
    if len != want {
        return Err(Error::Corrupt(format!(
            "declared {}x{} needs {} payload bytes, found {}",
            header.frames, header.dim, want, len
        )));
    }
    Ok(())
}

fn split_npy(bytes: &[u8]) -> Result<(EmbeddingHeader, &[u8])> {
    if bytes.len() < 10 {
        return Err(Error::Corrupt("npy header truncated".into()));
    }
    let major = bytes[6];
    let (header_len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Corrupt("npy header truncated".into()));
            }
            (le_u32(bytes, 8) as usize, 12)
        }
        v => return Err(Error::Format(format!("unsupported npy version {v}"))),
    };
    let end = start + header_len;
    if bytes.len() < end {
        return Err(Error::Corrupt("npy header truncated".into()));
    }
    let dict = std::str::from_utf8(&bytes[start..end])
        .map_err(|_| Error::Format("npy header is not text".into()))?;
    let descr = npy_field(dict, "descr")
        .ok_or_else(|| Error::Format("npy header lacks descr".into()))?;
    let descr = descr.split(',').next().unwrap_or("").trim();
    if descr.trim_matches(|c| c == '\'' || c == '"') != "<f4" {
        return Err(Error::Format(format!("npy dtype {descr} is not little-endian f4")));
    }
    if npy_field(dict, "fortran_order").is_some_and(|v| v.starts_with("True")) {
        return Err(Error::Format("fortran-ordered npy arrays are not supported".into()));
    }
    let shape = npy_shape(dict)?;
    let [frames, dim] = shape[..] else {
        return Err(Error::Format(format!(
            "npy array must be 2-D, has {} dims",
            shape.len()
        )));
    };
    let header = EmbeddingHeader {
        frames,
        dim,
        frame_shift_ms: DEFAULT_FRAME_SHIFT_MS,
    };
    let payload = &bytes[end..];
    check_payload(&header, payload.len())?;
    Ok((header, payload))
}

fn npy_field<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let at = dict.find(&format!("'{key}'"))?;
    let rest = &dict[at + key.len() + 2..];
    let colon = rest.find(':')?;
    Some(rest[colon + 1..].trim_start())
}

fn npy_shape(dict: &str) -> Result<Vec<usize>> {
    let bad = || Error::Format("npy header has malformed shape".into());
    let rest = npy_field(dict, "shape").ok_or_else(bad)?;
    let open = rest.find('(').ok_or_else(bad)?;
    let close = rest.find(')').ok_or_else(bad)?;
    rest[open + 1..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad()))
        .collect()
}

/// Reads only the header of an embedding file.
pub fn read_embedding_header(path: impl AsRef<Path>) -> Result<EmbeddingHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = vec![0u8; 1024];
    let mut filled = 0;
    while filled < head.len() {
        let n = file.read(&mut head[filled..]).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    head.truncate(filled);
    let total = file
        .metadata()
        .map_err(|e| Error::io(path, e))?
        .len() as usize;
    let header = if head.starts_with(EMBEDDING_MAGIC) {
        if head.len() < EMBEDDING_HEADER_LEN {
            return Err(annotate(Error::Corrupt("header truncated".into()), path));
        }
        let h = EmbeddingHeader {
            frames: le_u32(&head, 8) as usize,
            dim: le_u32(&head, 12) as usize,
            frame_shift_ms: f32::from_le_bytes(head[16..20].try_into().unwrap()),
        };
        check_payload(&h, total - EMBEDDING_HEADER_LEN).map_err(|e| annotate(e, path))?;
        h
    } else {
        // npy headers can be long; fall back to a full read
        let seq = read_embeddings(path)?;
        EmbeddingHeader {
            frames: seq.len(),
            dim: seq.dim(),
            frame_shift_ms: seq.frame_shift_ms,
        }
    };
    Ok(header)
}

pub fn encode_embeddings(seq: &EmbeddingSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(EMBEDDING_HEADER_LEN + 4 * seq.frames.as_slice().len());
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    out.extend_from_slice(&seq.frame_shift_ms.to_le_bytes());
    for x in seq.frames.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn write_embeddings(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    seq.validate()?;
    let path = path.as_ref();
    fs::write(path, encode_embeddings(seq)).map_err(|e| Error::io(path, e))
}

/// Per-frame symbols aligned index-for-index with an [`EmbeddingSequence`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabelSequence {
    pub utt_id: String,
    pub labels: Vec<String>,
}

impl FrameLabelSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_known(&self, t: usize) -> bool {
        self.labels[t] != UNKNOWN_LABEL
    }
}

/// Result of [`read_frame_labels`]: the expanded labels plus the number of
/// frames that no interval covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameLabels {
    pub sequence: FrameLabelSequence,
    pub gap_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Interval {
    start: usize,
    end: usize,
    symbol: String,
    line: usize,
}

/// Reads a frame-label TSV (`utt_id, start_frame, end_frame, symbol`) and
/// expands its half-open intervals to `expected_frames` labels. Uncovered
/// frames get [`UNKNOWN_LABEL`].
pub fn read_frame_labels(path: impl AsRef<Path>, expected_frames: usize) -> Result<FrameLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frame_labels(&text, expected_frames)
        .map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
}

pub fn parse_frame_labels(text: &str, expected_frames: usize) -> Result<FrameLabels> {
    let mut utt_id: Option<String> = None;
    let mut intervals = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Validation(format!(
                "line {line_no}: expected 4 tab-separated columns, found {}",
                cols.len()
            )));
        }
        let (Ok(start), Ok(end)) = (cols[1].trim().parse::<usize>(), cols[2].trim().parse::<usize>())
        else {
            if line_no == 1 && intervals.is_empty() {
                // header row
                continue;
            }
            return Err(Error::Validation(format!(
                "line {line_no}: frame indices must be non-negative integers"
            )));
        };
        match &utt_id {
            None => utt_id = Some(cols[0].to_string()),
            Some(u) if u != cols[0] => {
                return Err(Error::Validation(format!(
                    "line {line_no}: utterance {:?} differs from {u:?}",
                    cols[0]
                )))
            }
            Some(_) => {}
        }
        if start > end {
            return Err(Error::Validation(format!(
                "line {line_no}: interval [{start}, {end}) is reversed"
            )));
        }
        if end > expected_frames {
            return Err(Error::Validation(format!(
                "line {line_no}: interval ends at {end} beyond {expected_frames} frames"
            )));
        }
        let symbol = cols[3].trim_end_matches('\r').to_string();
        if symbol.is_empty() {
            return Err(Error::Validation(format!("line {line_no}: empty symbol")));
        }
        intervals.push(Interval {
            start,
            end,
            symbol,
            line: line_no,
        });
    }
    intervals.sort_by_key(|iv| (iv.start, iv.end));
    let mut labels = vec![UNKNOWN_LABEL.to_string(); expected_frames];
    let mut covered = 0;
    let mut prev: Option<&Interval> = None;
    for iv in &intervals {
        if let Some(p) = prev {
            if iv.start < p.end {
                return Err(Error::Validation(format!(
                    "interval on line {} overlaps interval on line {}",
                    iv.line, p.line
                )));
            }
        }
        for slot in &mut labels[iv.start..iv.end] {
            slot.clone_from(&iv.symbol);
        }
        covered += iv.end - iv.start;
        if iv.end > iv.start {
            prev = Some(iv);
        }
    }
    Ok(FrameLabels {
        sequence: FrameLabelSequence {
            utt_id: utt_id.unwrap_or_default(),
            labels,
        },
        gap_frames: expected_frames - covered,
    })
}

/// Writes labels as run-length intervals.
pub fn write_frame_labels(seq: &FrameLabelSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut t = 0;
    while t < seq.labels.len() {
        let mut end = t + 1;
        while end < seq.labels.len() && seq.labels[end] == seq.labels[t] {
            end += 1;
        }
        if seq.labels[t] != UNKNOWN_LABEL {
            writeln!(w, "{}\t{}\t{}\t{}", seq.utt_id, t, end, seq.labels[t])
                .map_err(|e| Error::io(path, e))?;
        }
        t = end;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub embedding_path: String,
    #[serde(default)]
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<String>,
}

/// JSON-lines list of utterances. Relative paths resolve against the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
                Error::Validation(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        let manifest = Self { entries, base_dir };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Checks utterance ids are unique and referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.utt_id.as_str()) {
                return Err(Error::Validation(format!("duplicate utt_id {:?}", e.utt_id)));
            }
            let emb = self.resolve(&e.embedding_path);
            if !emb.is_file() {
                return Err(Error::Validation(format!(
                    "{}: embedding file {} does not exist",
                    e.utt_id,
                    emb.display()
                )));
            }
            if let Some(lp) = &e.label_path {
                let lp = self.resolve(lp);
                if !lp.is_file() {
                    return Err(Error::Validation(format!(
                        "{}: label file {} does not exist",
                        e.utt_id,
                        lp.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads the embeddings of one entry; the entry's utt_id wins over the
    /// file stem.
    pub fn load_embeddings(&self, entry: &ManifestEntry) -> Result<EmbeddingSequence> {
        let mut seq = read_embeddings(self.resolve(&entry.embedding_path))?;
        seq.utt_id.clone_from(&entry.utt_id);
        Ok(seq)
    }

    /// Loads the frame labels of one entry, expanded to `frames` labels.
    pub fn load_labels(&self, entry: &ManifestEntry, frames: usize) -> Result<FrameLabels> {
        let lp = entry.label_path.as_ref().ok_or_else(|| {
            Error::Validation(format!("{}: manifest entry has no label_path", entry.utt_id))
        })?;
        let mut labels = read_frame_labels(self.resolve(lp), frames)?;
        labels.sequence.utt_id.clone_from(&entry.utt_id);
        Ok(labels)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            let line = serde_json::to_string(e).expect("manifest entries serialise");
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: usize, cols: usize, data: Vec<f32>) -> EmbeddingSequence {
        EmbeddingSequence::new("u", Matrix::from_vec(rows, cols, data).unwrap(), 20.0).unwrap()
    }

    fn dsvr_bytes(t: u32, d: u32, payload: &[f32]) -> Vec<u8> {
        let mut b = EMBEDDING_MAGIC.to_vec();
        b.extend_from_slice(&1u32.to_le_bytes());
        b.extend_from_slice(&t.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        b.extend_from_slice(&20.0f32.to_le_bytes());
        for x in payload {
            b.extend_from_slice(&x.to_le_bytes());
        }
        b
    }

    #[test]
    fn zero_payload_reads_as_zero_matrix() {
        let s = decode_embeddings(&dsvr_bytes(1, 2, &[0.0, 0.0]), "u".into()).unwrap();
        assert_eq!(s.frames, Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap());
    }

    #[test]
    fn truncated_payload_is_corruption() {
        let bytes = dsvr_bytes(3, 4, &[1.0; 10]);
        assert!(matches!(decode_embeddings(&bytes, "u".into()), Err(Error::Corrupt(_))));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = dsvr_bytes(1, 1, &[1.0]);
        bytes[0] = b'X';
        assert!(matches!(decode_embeddings(&bytes, "u".into()), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_values_rejected() {
        let bytes = dsvr_bytes(1, 2, &[1.0, f32::NAN]);
        assert!(matches!(decode_embeddings(&bytes, "u".into()), Err(Error::Validation(_))));
    }

    #[test]
    fn smallest_file_is_header_plus_four_bytes() {
        let s = seq(1, 1, vec![42.0]);
        let bytes = encode_embeddings(&s);
        assert_eq!(bytes.len(), EMBEDDING_HEADER_LEN + 4);
        let back = decode_embeddings(&bytes, "u".into()).unwrap();
        assert_eq!(back.frame_shift_ms, 20.0);
        assert_eq!(back.frames.get(0, 0), 42.0);
    }

    #[test]
    fn npy_input_accepted() {
        let header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }";
        let mut padded = header.to_string();
        while !(10 + padded.len() + 1).is_multiple_of(64) {
            padded.push(' ');
        }
        padded.push('\n');
        let mut bytes = NPY_MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(padded.len() as u16).to_le_bytes());
        bytes.extend_from_slice(padded.as_bytes());
        for i in 0..6 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        let s = decode_embeddings(&bytes, "n".into()).unwrap();
        assert_eq!((s.len(), s.dim()), (2, 3));
        assert_eq!(s.frames.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(s.frame_shift_ms, DEFAULT_FRAME_SHIFT_MS);
    }

    #[test]
    fn labels_tile_exactly() {
        let l = parse_frame_labels("u\t0\t3\tت\nu\t3\t5\tا\n", 5).unwrap();
        assert_eq!(l.sequence.labels, vec!["ت", "ت", "ت", "ا", "ا"]);
        assert_eq!(l.gap_frames, 0);
    }

    #[test]
    fn label_gaps_become_unknown() {
        let l = parse_frame_labels("u\t0\t2\tب\n", 4).unwrap();
        assert_eq!(l.sequence.labels, vec!["ب", "ب", UNKNOWN_LABEL, UNKNOWN_LABEL]);
        assert_eq!(l.gap_frames, 2);
    }

    #[test]
    fn overlapping_labels_rejected() {
        let r = parse_frame_labels("u\t0\t3\tت\nu\t2\t5\tا\n", 5);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn header_row_is_skipped() {
        let l = parse_frame_labels("utt_id\tstart_frame\tend_frame\tsymbol\nu\t0\t1\tب\n", 1).unwrap();
        assert_eq!(l.sequence.labels, vec!["ب"]);
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        write_embeddings(&seq(1, 1, vec![1.0]), dir.path().join("a.bin")).unwrap();
        let line = r#"{"utt_id":"a","embedding_path":"a.bin","transcript":""}"#;
        let mpath = dir.path().join("m.jsonl");
        fs::write(&mpath, format!("{line}\n{line}\n")).unwrap();
        assert!(matches!(DatasetManifest::load(&mpath), Err(Error::Validation(_))));
    }

    #[test]
    fn manifest_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::new();
        for id in ["z", "a", "m"] {
            write_embeddings(&seq(1, 1, vec![1.0]), dir.path().join(format!("{id}.bin"))).unwrap();
            text.push_str(&format!(
                "{{\"utt_id\":\"{id}\",\"embedding_path\":\"{id}.bin\",\"transcript\":\"\"}}\n"
            ));
        }
        let mpath = dir.path().join("m.jsonl");
        fs::write(&mpath, text).unwrap();
        let m = DatasetManifest::load(&mpath).unwrap();
        let ids: Vec<_> = m.entries.iter().map(|e| e.utt_id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "m"]);
    }

    #[test]
    fn header_read_matches_full_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_embeddings(&seq(3, 2, vec![1.0; 6]), &p).unwrap();
        let h = read_embedding_header(&p).unwrap();
        assert_eq!((h.frames, h.dim), (3, 2));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn embedding_round_trip_is_bit_exact(
                rows in 1usize..8,
                cols in 1usize..17,
                seed in any::<u64>(),
                shift in 1.0f32..40.0,
            ) {
                let mut state = seed;
                let data: Vec<f32> = (0..rows * cols)
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        ((state >> 33) as f32 / (1u64 << 31) as f32) * 200.0 - 100.0
                    })
                    .collect();
                let s = EmbeddingSequence::new("p", Matrix::from_vec(rows, cols, data).unwrap(), shift).unwrap();
                let bytes = encode_embeddings(&s);
                let back = decode_embeddings(&bytes, "p".into()).unwrap();
                prop_assert_eq!(&back, &s);
                prop_assert_eq!(encode_embeddings(&back), bytes);
            }

            #[test]
            fn label_expansion_conserves_length(
                cuts in proptest::collection::btree_set(0usize..60, 0..12),
                drop_mask in any::<u16>(),
            ) {
                let total = 60usize;
                let mut bounds: Vec<usize> = cuts.into_iter().collect();
                bounds.insert(0, 0);
                bounds.push(total);
                bounds.dedup();
                let mut text = String::new();
                let mut covered = 0;
                for (i, w) in bounds.windows(2).enumerate() {
                    if drop_mask & (1 << (i % 16)) != 0 {
                        continue;
                    }
                    text.push_str(&format!("u\t{}\t{}\ts{}\n", w[0], w[1], i));
                    covered += w[1] - w[0];
                }
                let l = parse_frame_labels(&text, total).unwrap();
                prop_assert_eq!(l.sequence.len(), total);
                prop_assert_eq!(covered + l.gap_frames, total);
            }
        }
    }
}
