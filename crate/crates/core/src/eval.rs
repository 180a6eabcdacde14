//! Character error rate scoring.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{strip_diacritics, VerbatimTranscript, Vocabulary};

/// Group name used for utterances missing from the group map.
pub const UNGROUPED: &str = "<ungrouped>";

/// Levenshtein distance with unit costs.
pub fn edit_distance<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    if a.len() < b.len() {
        return edit_distance(b, a);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance over characters divided by the reference length. Spaces
/// count as characters.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(Error::UndefinedMetric("CER of an empty reference".into()));
    }
    let h: Vec<char> = hypothesis.chars().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    WithVowels,
    VowelStripped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCer {
    pub cer: f64,
    pub n_utts: usize,
    pub n_ref_chars: usize,
    pub edits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CerReport {
    pub mode: ScoreMode,
    pub overall: f64,
    pub n_utts: usize,
    pub n_ref_chars: usize,
    pub edits: usize,
    pub per_group: BTreeMap<String, GroupCer>,
}

#[derive(Default)]
struct Tally {
    edits: usize,
    chars: usize,
    utts: usize,
}

impl Tally {
    fn rate(&self, what: &str) -> Result<f64> {
        if self.chars == 0 {
            return Err(Error::UndefinedMetric(format!("{what} has no reference characters")));
        }
        Ok(self.edits as f64 / self.chars as f64)
    }
}

/// Micro-averaged CER of `hyps` against `refs`.
///
/// Texts are compared as vocabulary symbols; diacritic marks the vocabulary
/// lacks are dropped from both sides first. With `strip_vowels`, both sides
/// pass through [`strip_diacritics`] as well.
pub fn score_manifest(
    refs: &[VerbatimTranscript],
    hyps: &[VerbatimTranscript],
    groups: Option<&HashMap<String, String>>,
    strip_vowels: bool,
    vocab: &Vocabulary,
) -> Result<CerReport> {
    let by_id: HashMap<&str, &str> = refs.iter().map(|r| (r.utt_id.as_str(), r.text.as_str())).collect();
    let missing: Vec<&str> = hyps
        .iter()
        .map(|h| h.utt_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!("no reference for {}", missing.join(", "))));
    }
    if refs.len() > hyps.len() {
        log::warn!("{} references have no hypothesis and are not scored", refs.len() - hyps.len());
    }
    let prepare = |text: &str, what: &str, id: &str| -> Result<Vec<usize>> {
        let text = if strip_vowels {
            strip_diacritics(text)
        } else {
            text.to_string()
        };
        vocab.encode_lenient(&text).map_err(|e| Error::Validation(format!("{what} {id}: {e}")))
    };
    let mut overall = Tally::default();
    let mut per_group: BTreeMap<String, Tally> = BTreeMap::new();
    for h in hyps {
        let r = prepare(by_id[h.utt_id.as_str()], "reference", &h.utt_id)?;
        let y = prepare(&h.text, "hypothesis", &h.utt_id)?;
        let d = edit_distance(&r, &y);
        overall.edits += d;
        overall.chars += r.len();
        overall.utts += 1;
        if let Some(groups) = groups {
            let g = groups.get(&h.utt_id).map_or(UNGROUPED, String::as_str);
            let t = per_group.entry(g.to_string()).or_default();
            t.edits += d;
            t.chars += r.len();
            t.utts += 1;
        }
    }
    let per_group = per_group
        .into_iter()
        .map(|(g, t)| {
            let cer = t.rate(&format!("group {g}"))?;
            Ok((
                g,
                GroupCer {
                    cer,
                    n_utts: t.utts,
                    n_ref_chars: t.chars,
                    edits: t.edits,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(CerReport {
        mode: if strip_vowels {
            ScoreMode::VowelStripped
        } else {
            ScoreMode::WithVowels
        },
        overall: overall.rate("the scored set")?,
        n_utts: overall.utts,
        n_ref_chars: overall.chars,
        edits: overall.edits,
        per_group,
    })
}

/// Reads `utt_id<TAB>group` lines.
pub fn read_groups(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, group) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("{}:{}: expected utt_id<TAB>group", path.display(), no + 1)))?;
        out.insert(id.to_string(), group.trim().to_string());
    }
    Ok(out)
}

/// One row per group: group, cer, n_utts, n_ref_chars, edits.
pub fn write_group_csv(report: &CerReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "group,cer,n_utts,n_ref_chars,edits").map_err(io)?;
    for (g, r) in &report.per_group {
        writeln!(w, "{g},{},{},{},{}", r.cer, r.n_utts, r.n_ref_chars, r.edits).map_err(io)?;
    }
    w.flush().map_err(io)
}
