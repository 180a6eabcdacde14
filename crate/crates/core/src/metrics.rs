//! Codebook quality measures: purities, phone-normalised mutual information,
//! the Davies–Bouldin index and Clean/Mix cluster verdicts.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DatasetManifest, FrameLabelSequence, UNKNOWN_LABEL};
use crate::matrix::Matrix;
use crate::quantizer::CodeSequence;
use crate::scalar::Scalar;

/// A code is Clean when its top symbol holds at least this share of frames.
pub const CLEAN_THRESHOLD: f64 = 0.80;
/// Symbols below this share are ignored when listing Mix contenders.
pub const CONTENDER_THRESHOLD: f64 = 0.20;
pub const DEFAULT_MIX_SAMPLES: usize = 52;

/// Co-occurrence counts of (symbol, code) over aligned frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointCountTable {
    phones: Vec<String>,
    index: HashMap<String, usize>,
    k: usize,
    counts: Vec<Vec<u64>>,
}

impl JointCountTable {
    pub fn new(k: usize) -> Self {
        Self {
            phones: Vec::new(),
            index: HashMap::new(),
            k,
            counts: Vec::new(),
        }
    }

    /// Builds a table from a dense `[phone][code]` matrix.
    pub fn from_counts(phones: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.first().map_or(0, Vec::len);
        if phones.len() != counts.len() || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Validation("count matrix shape does not match phone list".into()));
        }
        let mut index = HashMap::new();
        for (i, p) in phones.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate phone {p:?}")));
            }
        }
        Ok(Self {
            phones,
            index,
            k,
            counts,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn phones(&self) -> &[String] {
        &self.phones
    }

    pub fn count(&self, phone: usize, code: usize) -> u64 {
        self.counts[phone][code]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn phone_id(&mut self, phone: &str) -> usize {
        if let Some(&i) = self.index.get(phone) {
            return i;
        }
        let i = self.phones.len();
        self.phones.push(phone.to_string());
        self.index.insert(phone.to_string(), i);
        self.counts.push(vec![0; self.k]);
        i
    }

    pub fn add(&mut self, phone: &str, code: usize, n: u64) {
        let p = self.phone_id(phone);
        self.counts[p][code] += n;
    }

    /// Adds the frames of one utterance; unknown-labelled frames are skipped.
    pub fn accumulate(&mut self, labels: &FrameLabelSequence, codes: &CodeSequence) -> Result<()> {
        if labels.len() != codes.len() {
            return Err(Error::Validation(format!(
                "{}: {} labels against {} codes",
                labels.utt_id,
                labels.len(),
                codes.len()
            )));
        }
        if let Some(&c) = codes.codes.iter().find(|&&c| c >= self.k) {
            return Err(Error::Validation(format!("code {c} is outside [0, {})", self.k)));
        }
        for (l, &c) in labels.labels.iter().zip(&codes.codes) {
            if l != UNKNOWN_LABEL {
                self.add(l, c, 1);
            }
        }
        Ok(())
    }

    /// Element-wise sum with another table over the same codebook.
    pub fn merge(&mut self, other: &JointCountTable) -> Result<()> {
        if other.k != self.k {
            return Err(Error::Validation(format!("cannot merge k={} into k={}", other.k, self.k)));
        }
        for (p, row) in other.phones.iter().zip(&other.counts) {
            let i = self.phone_id(p);
            for (dst, &src) in self.counts[i].iter_mut().zip(row) {
                *dst += src;
            }
        }
        Ok(())
    }

    fn code_mass(&self, code: usize) -> u64 {
        self.counts.iter().map(|r| r[code]).sum()
    }

    fn require_mass(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::UndefinedMetric("joint count table is empty".into())),
            n => Ok(n as f64),
        }
    }
}

/// Share of frames labelled correctly when every code maps to its most
/// frequent symbol.
pub fn phone_purity(table: &JointCountTable) -> Result<f64> {
    let total = table.require_mass()?;
    let hits: u64 = (0..table.k)
        .map(|c| table.counts.iter().map(|r| r[c]).max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / total)
}

/// Share of frames captured when every symbol maps to its most frequent code.
pub fn cluster_purity(table: &JointCountTable) -> Result<f64> {
    let total = table.require_mass()?;
    let hits: u64 = table
        .counts
        .iter()
        .map(|r| r.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / total)
}

/// Mutual information between symbol and code, normalised by the symbol
/// entropy. Uses maximum-likelihood probabilities with `0 ln 0 = 0`.
pub fn pnmi(table: &JointCountTable) -> Result<f64> {
    let total = table.require_mass()?;
    let p_phone: Vec<f64> = table
        .counts
        .iter()
        .map(|r| r.iter().sum::<u64>() as f64 / total)
        .collect();
    let p_code: Vec<f64> = (0..table.k).map(|c| table.code_mass(c) as f64 / total).collect();
    let h_phone: f64 = -p_phone.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
    if h_phone <= 0.0 {
        return Err(Error::UndefinedMetric("symbol entropy is zero".into()));
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let p = n as f64 / total;
            mi += p * (p / (p_phone[i] * p_code[c])).ln();
        }
    }
    Ok((mi / h_phone).clamp(0.0, 1.0))
}

/// Davies–Bouldin index over the clusters induced by `codes`.
///
/// Cluster means are recomputed from the assignment; codes that never occur
/// are left out. Scatter is the mean Euclidean distance to the cluster mean.
pub fn davies_bouldin<T: Scalar>(frames: &Matrix<T>, codes: &[usize], k: usize) -> Result<f64> {
    if frames.rows() != codes.len() {
        return Err(Error::Validation(format!(
            "{} frames against {} codes",
            frames.rows(),
            codes.len()
        )));
    }
    let d = frames.cols();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (t, &c) in codes.iter().enumerate() {
        if c >= k {
            return Err(Error::Validation(format!("code {c} is outside [0, {k})")));
        }
        counts[c] += 1;
        for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(frames.row(t)) {
            *s += x.as_f64();
        }
    }
    let live: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    if live.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "Davies-Bouldin needs two non-empty clusters, found {}",
            live.len()
        )));
    }
    let means: Vec<Vec<f64>> = live
        .iter()
        .map(|&c| sums[c * d..(c + 1) * d].iter().map(|s| s / counts[c] as f64).collect())
        .collect();
    let slot: HashMap<usize, usize> = live.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut scatter = vec![0.0f64; live.len()];
    for (t, &c) in codes.iter().enumerate() {
        let i = slot[&c];
        let dist: f64 = frames
            .row(t)
            .iter()
            .zip(&means[i])
            .map(|(x, m)| (x.as_f64() - m).powi(2))
            .sum::<f64>()
            .sqrt();
        scatter[i] += dist;
    }
    for (s, &c) in scatter.iter_mut().zip(&live) {
        *s /= counts[c] as f64;
    }
    let mut total = 0.0;
    for i in 0..live.len() {
        let mut worst = 0.0f64;
        for j in 0..live.len() {
            if i == j {
                continue;
            }
            let sep: f64 = means[i]
                .iter()
                .zip(&means[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let ratio = if sep > 0.0 {
                (scatter[i] + scatter[j]) / sep
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    Ok(total / live.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusterKind {
    Clean,
    Mix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterVerdict {
    pub code_id: usize,
    pub kind: ClusterKind,
    pub dominant: String,
    pub dominant_share: f64,
    /// Symbols holding at least [`CONTENDER_THRESHOLD`] of the code's frames,
    /// most frequent first.
    pub contenders: Vec<String>,
}

/// Labels every code with mass as Clean or Mix.
pub fn classify_clusters(table: &JointCountTable) -> Result<Vec<ClusterVerdict>> {
    table.require_mass()?;
    let mut out = Vec::new();
    for code in 0..table.k {
        let mass = table.code_mass(code);
        if mass == 0 {
            continue;
        }
        let mut column: Vec<(usize, u64)> = (0..table.phones.len())
            .map(|p| (p, table.counts[p][code]))
            .filter(|&(_, n)| n > 0)
            .collect();
        // most frequent first, earlier phones win ties
        column.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let share = |n: u64| n as f64 / mass as f64;
        let (top, top_n) = column[0];
        let contenders = column
            .iter()
            .filter(|&&(_, n)| share(n) >= CONTENDER_THRESHOLD)
            .map(|&(p, _)| table.phones[p].clone())
            .collect();
        out.push(ClusterVerdict {
            code_id: code,
            kind: if share(top_n) >= CLEAN_THRESHOLD {
                ClusterKind::Clean
            } else {
                ClusterKind::Mix
            },
            dominant: table.phones[top].clone(),
            dominant_share: share(top_n),
            contenders,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixSample {
    pub code_id: usize,
    pub utt_id: String,
    pub frame_index: usize,
    pub dominant: String,
    pub contenders: Vec<String>,
}

/// Draws up to `n` frames per Mix cluster for an external listening test.
///
/// Frames are enumerated in manifest order, then by frame index; `codes`
/// maps utterance ids to their code sequences.
pub fn export_mix_samples(
    verdicts: &[ClusterVerdict],
    manifests: &[DatasetManifest],
    codes: &HashMap<String, CodeSequence>,
    n: usize,
    seed: u64,
) -> Result<Vec<MixSample>> {
    if n == 0 {
        return Err(Error::Validation("sample count must be at least 1".into()));
    }
    let mut population: HashMap<usize, Vec<(&str, usize)>> = HashMap::new();
    let mixed: Vec<&ClusterVerdict> = verdicts.iter().filter(|v| v.kind == ClusterKind::Mix).collect();
    for v in &mixed {
        population.insert(v.code_id, Vec::new());
    }
    for m in manifests {
        for e in &m.entries {
            let Some(seq) = codes.get(&e.utt_id) else {
                continue;
            };
            for (t, c) in seq.codes.iter().enumerate() {
                if let Some(pop) = population.get_mut(c) {
                    pop.push((e.utt_id.as_str(), t));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut ordered = mixed;
    ordered.sort_by_key(|v| v.code_id);
    for v in ordered {
        let pop = &population[&v.code_id];
        if pop.is_empty() {
            log::warn!("mix cluster {} has no frames in the given utterances", v.code_id);
            continue;
        }
        let mut picks = index::sample(&mut rng, pop.len(), n.min(pop.len())).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| MixSample {
            code_id: v.code_id,
            utt_id: pop[i].0.to_string(),
            frame_index: pop[i].1,
            dominant: v.dominant.clone(),
            contenders: v.contenders.clone(),
        }));
    }
    Ok(out)
}

/// TSV with columns code_id, utt_id, frame_index, dominant, contenders.
pub fn write_mix_samples(samples: &[MixSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "code_id\tutt_id\tframe_index\tdominant\tcontenders").map_err(io)?;
    for s in samples {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            s.code_id,
            s.utt_id,
            s.frame_index,
            s.dominant,
            s.contenders.join(",")
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// JSON summary written by `eval-codebook`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub k: usize,
    pub db_index: f64,
    pub phone_purity: f64,
    pub cluster_purity: f64,
    pub pnmi: f64,
    pub n_frames: u64,
    pub n_clean: usize,
    pub n_mix: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[u64]]) -> JointCountTable {
        let phones = (0..rows.len()).map(|i| format!("p{i}")).collect();
        JointCountTable::from_counts(phones, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// Entropy-based oracle computed straight from a flat distribution.
    fn pnmi_oracle(rows: &[&[u64]]) -> f64 {
        let total: f64 = rows.iter().flat_map(|r| r.iter()).sum::<u64>() as f64;
        let h = |ps: Vec<f64>| -ps.into_iter().filter(|p| *p > 0.0).map(|p| p * p.log2()).sum::<f64>();
        let hp = h(rows.iter().map(|r| r.iter().sum::<u64>() as f64 / total).collect());
        let k = rows[0].len();
        let hc = h((0..k).map(|c| rows.iter().map(|r| r[c]).sum::<u64>() as f64 / total).collect());
        let hj = h(rows.iter().flat_map(|r| r.iter()).map(|&n| n as f64 / total).collect());
        // I = H(P) + H(C) - H(P, C)
        (hp + hc - hj) / hp
    }

    #[test]
    fn accumulate_single_cell() {
        let mut t = JointCountTable::new(4);
        let labels = FrameLabelSequence {
            utt_id: "u".into(),
            labels: vec!["a".into(), "a".into()],
        };
        let codes = CodeSequence {
            utt_id: "u".into(),
            codes: vec![3, 3],
        };
        t.accumulate(&labels, &codes).unwrap();
        assert_eq!(t.count(0, 3), 2);
        assert_eq!(t.total(), 2);
    }

    #[test]
    fn unknown_frames_skipped_and_lengths_checked() {
        let mut t = JointCountTable::new(2);
        let labels = FrameLabelSequence {
            utt_id: "u".into(),
            labels: vec![UNKNOWN_LABEL.into()],
        };
        let codes = CodeSequence {
            utt_id: "u".into(),
            codes: vec![1],
        };
        t.accumulate(&labels, &codes).unwrap();
        assert_eq!(t.total(), 0);
        let short = CodeSequence {
            utt_id: "u".into(),
            codes: vec![],
        };
        assert!(matches!(t.accumulate(&labels, &short), Err(Error::Validation(_))));
    }

    #[test]
    fn accumulation_is_additive() {
        let a = FrameLabelSequence { utt_id: "a".into(), labels: vec!["x".into(), "y".into()] };
        let ca = CodeSequence { utt_id: "a".into(), codes: vec![0, 1] };
        let b = FrameLabelSequence { utt_id: "b".into(), labels: vec!["y".into(), "y".into(), "x".into()] };
        let cb = CodeSequence { utt_id: "b".into(), codes: vec![1, 0, 0] };
        let mut split = JointCountTable::new(2);
        split.accumulate(&a, &ca).unwrap();
        split.accumulate(&b, &cb).unwrap();
        let mut joined_labels = a.labels.clone();
        joined_labels.extend(b.labels.clone());
        let mut joined_codes = ca.codes.clone();
        joined_codes.extend(cb.codes.clone());
        let mut whole = JointCountTable::new(2);
        whole
            .accumulate(
                &FrameLabelSequence { utt_id: "ab".into(), labels: joined_labels },
                &CodeSequence { utt_id: "ab".into(), codes: joined_codes },
            )
            .unwrap();
        assert_eq!(split, whole);
    }

    #[test]
    fn purity_goldens() {
        let diag = table(&[&[5, 0, 0], &[0, 2, 0], &[0, 0, 7]]);
        assert_eq!(phone_purity(&diag).unwrap(), 1.0);
        assert_eq!(cluster_purity(&diag).unwrap(), 1.0);
        let mixed = table(&[&[3, 1], &[1, 3]]);
        assert_eq!(phone_purity(&mixed).unwrap(), 0.75);
        assert_eq!(cluster_purity(&mixed).unwrap(), 0.75);
        assert_eq!(phone_purity(&table(&[&[2, 2], &[2, 2]])).unwrap(), 0.5);
        assert_eq!(cluster_purity(&table(&[&[1, 1, 1, 1]])).unwrap(), 0.25);
    }

    #[test]
    fn empty_table_is_undefined() {
        let t = JointCountTable::new(3);
        assert!(matches!(phone_purity(&t), Err(Error::UndefinedMetric(_))));
        assert!(matches!(cluster_purity(&t), Err(Error::UndefinedMetric(_))));
        assert!(matches!(pnmi(&t), Err(Error::UndefinedMetric(_))));
        assert!(matches!(classify_clusters(&t), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn pnmi_goldens() {
        assert!((pnmi(&table(&[&[4, 0], &[0, 9]])).unwrap() - 1.0).abs() < 1e-12);
        // outer product of margins (1, 2) x (3, 1)
        assert!(pnmi(&table(&[&[3, 1], &[6, 2]])).unwrap().abs() < 1e-12);
        let rows: &[&[u64]] = &[&[3, 1], &[1, 3]];
        let want = pnmi_oracle(rows);
        assert!((pnmi(&table(rows)).unwrap() - want).abs() < 1e-12);
        assert!(want > 0.18 && want < 0.19);
    }

    #[test]
    fn pnmi_needs_two_phones() {
        assert!(matches!(pnmi(&table(&[&[3, 4]])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn davies_bouldin_goldens() {
        let two = Matrix::from_vec(2, 1, vec![0.0f64, 5.0]).unwrap();
        assert_eq!(davies_bouldin(&two, &[0, 1], 2).unwrap(), 0.0);
        let pts = Matrix::from_vec(4, 1, vec![-1.0f64, 1.0, 9.0, 11.0]).unwrap();
        let db = davies_bouldin(&pts, &[0, 0, 1, 1], 2).unwrap();
        assert!((db - 0.2).abs() < 1e-12);
        let shifted = pts.map(|x| x + 123.25);
        assert!((davies_bouldin(&shifted, &[0, 0, 1, 1], 2).unwrap() - db).abs() < 1e-12);
        assert!(matches!(
            davies_bouldin(&pts, &[1, 1, 1, 1], 3),
            Err(Error::UndefinedMetric(_))
        ));
    }

    fn column(shares: &[(&str, u64)]) -> JointCountTable {
        let phones = shares.iter().map(|s| s.0.to_string()).collect();
        JointCountTable::from_counts(phones, shares.iter().map(|s| vec![s.1]).collect()).unwrap()
    }

    #[test]
    fn cluster_verdicts() {
        let v = classify_clusters(&column(&[("ت", 9), ("ه", 1)])).unwrap();
        assert_eq!(v[0].kind, ClusterKind::Clean);
        assert_eq!(v[0].dominant, "ت");

        let v = classify_clusters(&column(&[("ز", 55), ("ذ", 45)])).unwrap();
        assert_eq!(v[0].kind, ClusterKind::Mix);
        assert_eq!(v[0].contenders, vec!["ز", "ذ"]);

        let v = classify_clusters(&column(&[("a", 70), ("b", 15), ("c", 15)])).unwrap();
        assert_eq!(v[0].kind, ClusterKind::Mix);
        assert_eq!(v[0].contenders, vec!["a"]);
    }

    #[test]
    fn zero_mass_codes_are_omitted() {
        let v = classify_clusters(&table(&[&[3, 0, 1]])).unwrap();
        let ids: Vec<usize> = v.iter().map(|x| x.code_id).collect();
        assert_eq!(ids, vec![0, 2]);
    }

    fn mix_fixture(frames: usize) -> (Vec<ClusterVerdict>, Vec<DatasetManifest>, HashMap<String, CodeSequence>) {
        let verdicts = vec![ClusterVerdict {
            code_id: 1,
            kind: ClusterKind::Mix,
            dominant: "ز".into(),
            dominant_share: 0.5,
            contenders: vec!["ز".into(), "ذ".into()],
        }];
        let mut entries = Vec::new();
        let mut codes = HashMap::new();
        for u in 0..4 {
            let id = format!("u{u}");
            entries.push(crate::io::ManifestEntry {
                utt_id: id.clone(),
                embedding_path: String::new(),
                transcript: String::new(),
                label_path: None,
            });
            let mut c = vec![0; frames];
            for (t, slot) in c.iter_mut().enumerate() {
                if (t + u) % 4 == 0 {
                    *slot = 1;
                }
            }
            codes.insert(id.clone(), CodeSequence { utt_id: id, codes: c });
        }
        let manifest = DatasetManifest {
            entries,
            base_dir: Default::default(),
        };
        (verdicts, vec![manifest], codes)
    }

    #[test]
    fn mix_samples_request_is_honoured() {
        let (v, m, c) = mix_fixture(1000);
        let s = export_mix_samples(&v, &m, &c, DEFAULT_MIX_SAMPLES, 3).unwrap();
        assert_eq!(s.len(), 52);
        assert!(s.iter().all(|x| c[&x.utt_id].codes[x.frame_index] == 1));
        assert_eq!(s, export_mix_samples(&v, &m, &c, 52, 3).unwrap());

        let (v, m, c) = mix_fixture(3);
        // one frame per utterance except u2 lands on code 1 within 3 frames
        let pop: usize = c.values().map(|s| s.codes.iter().filter(|&&x| x == 1).count()).sum();
        assert_eq!(pop, 3);
        assert_eq!(export_mix_samples(&v, &m, &c, 52, 3).unwrap().len(), 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn counts() -> impl Strategy<Value = Vec<Vec<u64>>> {
            (2usize..5, 2usize..6).prop_flat_map(|(p, k)| {
                proptest::collection::vec(proptest::collection::vec(0u64..20, k), p)
            })
        }

        proptest! {
            #[test]
            fn doubling_a_table_keeps_every_ratio(rows in counts()) {
                let phones: Vec<String> = (0..rows.len()).map(|i| format!("p{i}")).collect();
                let t = JointCountTable::from_counts(phones, rows).unwrap();
                prop_assume!(t.total() > 0);
                let mut doubled = t.clone();
                doubled.merge(&t).unwrap();
                prop_assert_eq!(phone_purity(&t).unwrap(), phone_purity(&doubled).unwrap());
                prop_assert_eq!(cluster_purity(&t).unwrap(), cluster_purity(&doubled).unwrap());
                if let Ok(a) = pnmi(&t) {
                    let b = pnmi(&doubled).unwrap();
                    prop_assert!((a - b).abs() < 1e-12);
                    prop_assert!((0.0..=1.0).contains(&a));
                }
                let pp = phone_purity(&t).unwrap();
                prop_assert!(pp > 0.0 && pp <= 1.0);
            }

            #[test]
            fn verdicts_partition_live_codes(rows in counts()) {
                let phones: Vec<String> = (0..rows.len()).map(|i| format!("p{i}")).collect();
                let t = JointCountTable::from_counts(phones, rows).unwrap();
                prop_assume!(t.total() > 0);
                let v = classify_clusters(&t).unwrap();
                let live = (0..t.k()).filter(|&c| t.code_mass(c) > 0).count();
                prop_assert_eq!(v.len(), live);
                for x in &v {
                    match x.kind {
                        ClusterKind::Clean => prop_assert!(x.dominant_share >= CLEAN_THRESHOLD),
                        ClusterKind::Mix => prop_assert!(x.dominant_share < CLEAN_THRESHOLD),
                    }
                }
            }
        }
    }
}
