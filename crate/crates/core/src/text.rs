//! Verbatim Arabic text: the letter-to-sound normalisation cascade, the
//! output vocabulary and diacritic stripping.
//!
//! Normalisation runs seven ordered rules over a whole transcript line:
//!
//! 1. a non-initial alif followed by two consonants is deleted,
//! 2. a definite-article alif before a moon letter becomes hamza + fatha,
//! 3. the article lam before a sun letter is deleted,
//! 4. alif madda becomes hamza + alif,
//! 5. hamza seats collapse to bare hamza,
//! 6. alif maqsura becomes alif,
//! 7. tanwin becomes a short vowel at a word end and vowel + noon elsewhere.
//!
//! The cascade is repeated until the text stops changing, so normalising
//! normalised text is the identity.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const BLANK_NAME: &str = "<blank>";

const ALIF: char = '\u{0627}';
const ALIF_MADDA: char = '\u{0622}';
const ALIF_MAQSURA: char = '\u{0649}';
const ALIF_WASLA: char = '\u{0671}';
const HAMZA: char = '\u{0621}';
const LAM: char = '\u{0644}';
const NOON: char = '\u{0646}';
const TATWEEL: char = '\u{0640}';

const FATHATAN: char = '\u{064B}';
const DAMMATAN: char = '\u{064C}';
const KASRATAN: char = '\u{064D}';
const FATHA: char = '\u{064E}';
const DAMMA: char = '\u{064F}';
const KASRA: char = '\u{0650}';
const SHADDA: char = '\u{0651}';
const SUKUN: char = '\u{0652}';
const MADDA_ABOVE: char = '\u{0653}';
const HAMZA_ABOVE: char = '\u{0654}';
const HAMZA_BELOW: char = '\u{0655}';
const DAGGER_ALIF: char = '\u{0670}';

const HAMZA_SEATS: [char; 4] = ['\u{0623}', '\u{0624}', '\u{0625}', '\u{0626}'];
const SUN_LETTERS: [char; 14] = [
    'ت', 'ث', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ل', 'ن',
];
/// Borrowed and dialectal letters.
pub const SPECIAL_LETTERS: [char; 5] = ['چ', 'ڤ', 'پ', 'گ', 'ڟ'];
const PUNCTUATION: [char; 12] = ['،', '؛', '؟', '.', ',', '!', '?', ':', ';', '"', '«', '»'];

/// Default output inventory after the blank: space, 28 letters, ة, ء, four
/// borrowed letters and the three short vowels.
const DEFAULT_SYMBOLS: &str = " ابتثجحخدذرزسشصضطظعغفقكلمنهوية\u{0621}چڤپگ\u{064E}\u{064F}\u{0650}";

fn is_base_letter(c: char) -> bool {
    matches!(c, '\u{0621}'..='\u{063A}' | '\u{0641}'..='\u{064A}') || SPECIAL_LETTERS.contains(&c)
}

fn is_mark(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{0652}')
}

fn is_consonant(c: char) -> bool {
    is_base_letter(c) && !matches!(c, ALIF | ALIF_MAQSURA | ALIF_MADDA)
}

/// Ordered symbol inventory with the CTC blank at id 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    blank: String,
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new(BLANK_NAME, DEFAULT_SYMBOLS.chars().collect()).expect("default inventory is valid")
    }
}

impl Vocabulary {
    /// `symbols` excludes the blank; symbol `i` gets id `i + 1`.
    pub fn new(blank: &str, symbols: Vec<char>) -> Result<Self> {
        if blank.chars().count() == 1 && blank.chars().all(is_base_letter) {
            return Err(Error::Validation(format!("blank name {blank:?} is an Arabic letter")));
        }
        if blank.is_empty() || blank.contains(char::is_whitespace) {
            return Err(Error::Validation("blank name must be a non-empty token".into()));
        }
        let mut index = HashMap::new();
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i + 1).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary symbol {c:?}")));
            }
        }
        if symbols.is_empty() {
            return Err(Error::Validation("vocabulary needs at least one symbol besides blank".into()));
        }
        Ok(Self {
            blank: blank.to_string(),
            symbols,
            index,
        })
    }

    /// One symbol per line, the first line naming the blank. A line holding a
    /// single space is the space symbol.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let blank = lines
            .next()
            .map(str::trim)
            .ok_or_else(|| Error::Format("vocabulary file is empty".into()))?;
        let mut symbols = Vec::new();
        for (no, line) in lines.enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                (None, _) => {}
                _ => {
                    return Err(Error::Format(format!(
                        "vocabulary line {}: {line:?} is not a single character",
                        no + 2
                    )))
                }
            }
        }
        Self::new(blank, symbols)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("{}\n", self.blank);
        for c in &self.symbols {
            s.push(*c);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    /// Number of output classes, blank included.
    pub fn len(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn blank_id(&self) -> usize {
        0
    }

    pub fn blank_name(&self) -> &str {
        &self.blank
    }

    /// Symbol for a non-blank id.
    pub fn symbol(&self, id: usize) -> Option<char> {
        id.checked_sub(1).and_then(|i| self.symbols.get(i).copied())
    }

    pub fn id_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .enumerate()
            .map(|(position, c)| {
                self.id_of(c).ok_or_else(|| Error::OutOfVocabulary {
                    symbol: c.to_string(),
                    position,
                })
            })
            .collect()
    }

    /// Like [`encode`](Self::encode), but diacritic marks missing from the
    /// inventory (shadda, sukun by default) are dropped instead of rejected.
    pub fn encode_lenient(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = Vec::with_capacity(text.len());
        for (position, c) in text.chars().enumerate() {
            match self.id_of(c) {
                Some(id) => ids.push(id),
                None if is_mark(c) => {}
                None => {
                    return Err(Error::OutOfVocabulary {
                        symbol: c.to_string(),
                        position,
                    })
                }
            }
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        ids.iter()
            .enumerate()
            .map(|(position, &id)| {
                self.symbol(id).ok_or_else(|| {
                    Error::Validation(if id == self.blank_id() {
                        format!("blank id at position {position} cannot be decoded")
                    } else {
                        format!("id {id} at position {position} is outside the vocabulary of {}", self.len())
                    })
                })
            })
            .collect()
    }
}

/// Transcript after normalisation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbatimTranscript {
    pub utt_id: String,
    pub text: String,
}

impl VerbatimTranscript {
    pub fn new(utt_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            utt_id: utt_id.into(),
            text: text.into(),
        }
    }
}

/// Maps presentation variants, drops punctuation and validates the alphabet.
fn clean(raw: &str) -> Result<Vec<char>> {
    let mut out: Vec<char> = Vec::with_capacity(raw.len());
    let mut bad_pos = Vec::new();
    let mut bad_chars = Vec::new();
    let mut space = true;
    for (i, c) in raw.chars().enumerate() {
        let c = match c {
            ALIF_WASLA | DAGGER_ALIF => ALIF,
            TATWEEL | '\u{200C}' | '\u{200D}' => continue,
            MADDA_ABOVE if out.last() == Some(&ALIF) => {
                out.pop();
                ALIF_MADDA
            }
            HAMZA_ABOVE | HAMZA_BELOW
                if matches!(out.last(), Some(&(ALIF | ALIF_MAQSURA | 'و' | 'ي'))) =>
            {
                out.pop();
                HAMZA
            }
            c if c.is_whitespace() || PUNCTUATION.contains(&c) => {
                if !space {
                    out.push(' ');
                    space = true;
                }
                continue;
            }
            c if is_base_letter(c) || is_mark(c) => c,
            c => {
                bad_pos.push(i);
                bad_chars.push(c);
                continue;
            }
        };
        out.push(c);
        space = false;
    }
    if !bad_pos.is_empty() {
        return Err(Error::UnmappedCharacters {
            positions: bad_pos,
            chars: bad_chars,
        });
    }
    if out.last() == Some(&' ') {
        out.pop();
    }
    Ok(out)
}

fn word_start(s: &[char], i: usize) -> bool {
    i == 0 || s[i - 1] == ' '
}

/// Index of the first character at or after `i` that is not a sukun.
fn skip_sukun(s: &[char], mut i: usize) -> usize {
    while s.get(i) == Some(&SUKUN) {
        i += 1;
    }
    i
}

fn two_consonants_follow(s: &[char], mut i: usize) -> bool {
    let mut seen = 0;
    while let Some(&c) = s.get(i) {
        match c {
            ' ' | SUKUN => {}
            SHADDA if seen > 0 => seen += 1,
            c if is_consonant(c) => seen += 1,
            _ => return false,
        }
        if seen >= 2 {
            return true;
        }
        i += 1;
    }
    false
}

/// Rule 1, also flagging the lam of every definite article.
fn delete_medial_alif(s: &[char]) -> (Vec<char>, Vec<bool>) {
    let mut out = Vec::with_capacity(s.len());
    let mut article_lam = Vec::with_capacity(s.len());
    let mut lam_pending = false;
    let mut i = 0;
    while i < s.len() {
        let c = s[i];
        if c == ALIF {
            let article = word_start(s, i) && s.get(i + 1) == Some(&LAM);
            // an alif after hamza is the long vowel of an expanded madda
            if i > 0 && s[i - 1] != HAMZA && two_consonants_follow(s, i + 1) {
                lam_pending = article;
                i = skip_sukun(s, i + 1);
                continue;
            }
            out.push(c);
            article_lam.push(false);
            lam_pending = article;
            i += 1;
            continue;
        }
        out.push(c);
        article_lam.push(lam_pending && c == LAM);
        lam_pending = false;
        i += 1;
    }
    (out, article_lam)
}

/// Rules 2 and 3.
fn rewrite_article(s: &[char], article_lam: &[bool]) -> Vec<char> {
    let mut out = Vec::with_capacity(s.len() + 4);
    let mut i = 0;
    while i < s.len() {
        let c = s[i];
        let next_letter = |lam: usize| s.get(skip_sukun(s, lam + 1)).copied();
        if c == ALIF
            && article_lam.get(i + 1) == Some(&true)
            && next_letter(i + 1).is_some_and(|n| is_base_letter(n) && !SUN_LETTERS.contains(&n))
        {
            out.extend([HAMZA, FATHA]);
            i += 1;
            continue;
        }
        if c == LAM && article_lam[i] && next_letter(i).is_some_and(|n| SUN_LETTERS.contains(&n)) {
            i = skip_sukun(s, i + 1);
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

/// Rules 4 to 6.
fn rewrite_letters(s: Vec<char>) -> Vec<char> {
    let mut out = Vec::with_capacity(s.len() + 4);
    for c in s {
        match c {
            ALIF_MADDA => out.extend([HAMZA, ALIF]),
            c if HAMZA_SEATS.contains(&c) => out.push(HAMZA),
            ALIF_MAQSURA => out.push(ALIF),
            c => out.push(c),
        }
    }
    out
}

/// Rule 7. A silent seat alif after the tanwin does not stop it from being
/// word-final.
fn rewrite_tanwin(s: Vec<char>) -> Vec<char> {
    let mut out = Vec::with_capacity(s.len() + 4);
    for (i, &c) in s.iter().enumerate() {
        let vowel = match c {
            FATHATAN => FATHA,
            DAMMATAN => DAMMA,
            KASRATAN => KASRA,
            _ => {
                out.push(c);
                continue;
            }
        };
        let mut j = i + 1;
        let seat = if out.last() == Some(&ALIF) {
            out.pop()
        } else if s.get(j) == Some(&ALIF) {
            j += 1;
            None
        } else {
            None
        };
        out.push(vowel);
        if !matches!(s.get(j), None | Some(' ')) {
            out.push(NOON);
        }
        out.extend(seat);
    }
    out
}

fn cascade(s: &[char]) -> Vec<char> {
    let (s, article_lam) = delete_medial_alif(s);
    let s = rewrite_article(&s, &article_lam);
    let mut s = rewrite_tanwin(rewrite_letters(s));
    // a deleted one-letter word leaves two spaces behind
    s.dedup_by(|a, b| *a == ' ' && *b == ' ');
    if s.first() == Some(&' ') {
        s.remove(0);
    }
    if s.last() == Some(&' ') {
        s.pop();
    }
    s
}

/// Applies the normalisation cascade to raw transcript text.
///
/// Punctuation separates words and is dropped; runs of whitespace collapse
/// to single spaces. Digits, Latin letters and other symbols are rejected.
pub fn normalize_verbatim(raw: &str) -> Result<String> {
    let mut s = clean(raw)?;
    // Each pass after the first only deletes letters, so this terminates.
    loop {
        let next = cascade(&s);
        if next == s {
            break;
        }
        s = next;
    }
    Ok(s.into_iter().collect())
}

pub fn normalize_transcript(utt_id: &str, raw: &str) -> Result<VerbatimTranscript> {
    Ok(VerbatimTranscript::new(utt_id, normalize_verbatim(raw)?))
}

/// Removes fatha, damma, kasra, sukun and shadda.
pub fn strip_diacritics(text: &str) -> String {
    text.chars()
        .filter(|c| !matches!(*c, FATHA | DAMMA | KASRA | SUKUN | SHADDA))
        .collect()
}

/// Reads `utt_id<TAB>text` lines. A leading `utt_id<TAB>text` header is
/// skipped.
pub fn parse_transcripts(text: &str) -> Result<Vec<VerbatimTranscript>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, body)) = line.split_once('\t') else {
            return Err(Error::Format(format!("transcript line {}: missing tab", no + 1)));
        };
        if no == 0 && id == "utt_id" {
            continue;
        }
        if id.is_empty() {
            return Err(Error::Format(format!("transcript line {}: empty utt_id", no + 1)));
        }
        out.push(VerbatimTranscript::new(id, body));
    }
    Ok(out)
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<VerbatimTranscript>> {
    let path = path.as_ref();
    parse_transcripts(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_transcripts(items: &[VerbatimTranscript], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in items {
        writeln!(w, "{}\t{}", t.utt_id, t.text).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
