//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dsvr::ctc::{ctc_loss, LogProbLattice};
use dsvr::eval::{cer, score_manifest};
use dsvr::io::UNKNOWN_LABEL;
use dsvr::metrics::{davies_bouldin, phone_purity, pnmi, JointCountTable};
use dsvr::model::{train, DvrModel, ModelConfig, ModelInput, TrainConfig, TrainSample, Variant};
use dsvr::quantizer::{train_codebook, train_codebook_traced, KmeansParams};
use dsvr::synth::{coded_corpus, gaussian_corpus, CorpusSpec};
use dsvr::text::{normalize_verbatim, VerbatimTranscript, Vocabulary};
use dsvr::Matrix;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- oracles

fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &p in path {
        if p != prev && p != 0 {
            out.push(p);
        }
        prev = p;
    }
    out
}

fn levenshtein<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut d: Vec<Vec<usize>> = (0..=a.len()).map(|i| vec![i; b.len() + 1]).collect();
    d[0] = (0..=b.len()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn softmax_rows(logits: &[Vec<f64>]) -> Vec<Vec<f64>> {
    logits
        .iter()
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = r.iter().map(|x| (x - m).exp()).sum();
            r.iter().map(|x| (x - m).exp() / z).collect()
        })
        .collect()
}

/// Probability of `target` by summing over every frame-level path.
fn brute_force(probs: &[Vec<f64>], target: &[usize]) -> f64 {
    let (t_len, v) = (probs.len(), probs[0].len());
    let mut total = 0.0;
    let mut path = vec![0usize; t_len];
    loop {
        if collapse(&path) == target {
            total += path.iter().enumerate().map(|(t, &k)| probs[t][k]).product::<f64>();
        }
        let mut i = 0;
        loop {
            if i == t_len {
                return total;
            }
            path[i] += 1;
            if path[i] < v {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

fn lattice(logits: &[Vec<f64>]) -> LogProbLattice<f64> {
    let m = Matrix::from_rows(logits).unwrap();
    LogProbLattice::from_logits(&m, 0).unwrap()
}

fn random_logits(rng: &mut ChaCha8Rng, t: usize, v: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..t).map(|_| (0..v).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

fn random_target(rng: &mut ChaCha8Rng, max_len: usize, v: usize) -> Vec<usize> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| rng.random_range(1..v)).collect()
}

// --------------------------------------------------------------- criteria

fn ctc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut zero = 0;
    for case in 0..200 {
        let t = rng.random_range(1..=6);
        let v = rng.random_range(2..=4);
        let logits = random_logits(&mut rng, t, v, 3.0);
        let target = random_target(&mut rng, t, v);
        let expect = brute_force(&softmax_rows(&logits), &target);
        let got = (-ctc_loss(&lattice(&logits), &target).map_err(|e| e.to_string())?.loss).exp();
        if expect == 0.0 {
            ensure(got == 0.0, || format!("case {case}: oracle 0, got {got}"))?;
            zero += 1;
            continue;
        }
        let rel = (got - expect).abs() / expect;
        worst = worst.max(rel);
        ensure(rel <= 1e-8, || format!("case {case} T={t} V={v} {target:?}: {got} vs {expect}"))?;
    }
    Ok(format!("200 lattices, {zero} unalignable, worst rel err {worst:.1e}"))
}

fn ctc_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let eps = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for case in 0..50 {
        let t = rng.random_range(2..=8);
        let v = rng.random_range(2..=5);
        let logits = random_logits(&mut rng, t, v, 2.0);
        let mut target = random_target(&mut rng, t / 2, v);
        target.dedup();
        let r = ctc_loss(&lattice(&logits), &target).map_err(|e| e.to_string())?;
        ensure(!r.infinite, || format!("case {case} unexpectedly unalignable"))?;
        for ti in 0..t {
            for k in 0..v {
                let at = |d: f64| {
                    let mut l = logits.clone();
                    l[ti][k] += d;
                    ctc_loss(&lattice(&l), &target).unwrap().loss
                };
                let fd = (at(eps) - at(-eps)) / (2.0 * eps);
                let an = r.grad_logits.get(ti, k);
                let scale = fd.abs().max(an.abs());
                let err = (fd - an).abs();
                ensure(err <= 1e-4 * scale + 1e-9, || {
                    format!("case {case} [{ti},{k}]: analytic {an}, numeric {fd}")
                })?;
                if scale > 1e-6 {
                    worst = worst.max(err / scale);
                }
                checked += 1;
            }
        }
    }
    Ok(format!("50 instances, {checked} entries, worst rel err {worst:.1e}"))
}

fn model_gradient() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let eps = 1e-5;
    for variant in [Variant::Baseline, Variant::Discrete, Variant::Joint] {
        for dropout_seed in [None, Some(5u64)] {
            let cfg = ModelConfig {
                variant,
                k: 6,
                d_in: 5,
                d_ff: 8,
                n_layers: 1,
                n_heads: 2,
                vocab_size: 5,
                dropout: 0.1,
            };
            let model = DvrModel::<f64>::new(cfg, 11).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            let codes: Vec<usize> = (0..4).map(|_| rng.random_range(0..6)).collect();
            let emb = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let input = match variant {
                Variant::Baseline => ModelInput::embeddings(&emb),
                Variant::Discrete => ModelInput::codes(&codes),
                Variant::Joint => ModelInput::joint(&codes, &emb),
            };
            let target = [2, 4];
            let loss_of = |m: &DvrModel<f64>| {
                let lat = match dropout_seed {
                    Some(s) => m.forward_train(&input, &mut ChaCha8Rng::seed_from_u64(s)).unwrap(),
                    None => m.forward(&input).unwrap(),
                };
                ctc_loss(&lat, &target).unwrap().loss
            };
            let mut grads = model.params().zeros_like();
            let mut drng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
            model
                .loss_and_grad(&input, &target, 1.0, drng.as_mut(), &mut grads)
                .map_err(|e| e.to_string())?;
            for t in model.params().tensors() {
                for i in 0..t.data.len() {
                    let at = |d: f64| {
                        let mut m = model.clone();
                        m.params_mut().get_mut(&t.name)[i] += d;
                        loss_of(&m)
                    };
                    let fd = (at(eps) - at(-eps)) / (2.0 * eps);
                    let an = grads.get(&t.name)[i];
                    let scale = fd.abs().max(an.abs());
                    if scale < 1e-9 {
                        continue;
                    }
                    let rel = (fd - an).abs() / scale.max(1e-6);
                    ensure(rel <= 1e-3, || {
                        format!("{variant} dropout={dropout_seed:?} {}[{i}]: analytic {an}, numeric {fd}", t.name)
                    })?;
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("3 variants x dropout on/off, {checked} entries, worst rel err {worst:.1e}"))
}

fn kmeans() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..100 {
        let n = rng.random_range(20..200);
        let d = rng.random_range(1..=5);
        let k = rng.random_range(2..=8);
        let data = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
        let params = KmeansParams {
            k,
            seed: case,
            ..KmeansParams::default()
        };
        let (_, trace) = train_codebook_traced::<f64>(&data, &params).map_err(|e| e.to_string())?;
        for w in trace.inertia.windows(2) {
            ensure(w[1] <= w[0], || format!("dataset {case}: inertia rose {} -> {}", w[0], w[1]))?;
        }
    }

    let tiny = Matrix::from_vec(4, 1, vec![0.0, 1.0, 10.0, 11.0]).unwrap();
    let cb = train_codebook::<f64>(&tiny, &KmeansParams { k: 2, ..KmeansParams::default() }).map_err(|e| e.to_string())?;
    let mut c: Vec<f64> = cb.centroids.as_slice().to_vec();
    c.sort_by(f64::total_cmp);
    ensure(c == [0.5, 10.5], || format!("centroids {c:?}"))?;

    let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    for _ in 0..300 {
        let l = rng.random_range(0..3);
        for x in centers[l] {
            frames.push(x + rand_distr::Distribution::sample(&normal, &mut rng));
        }
        labels.push(l);
    }
    let data = Matrix::from_vec(300, 2, frames).unwrap();
    let cb = train_codebook::<f64>(&data, &KmeansParams { k: 3, seed: 1, ..KmeansParams::default() })
        .map_err(|e| e.to_string())?;
    let mut counts = [[0usize; 3]; 3];
    for (row, &l) in data.iter_rows().zip(&labels) {
        counts[cb.nearest(row).0][l] += 1;
    }
    let purity = counts.iter().map(|r| *r.iter().max().unwrap()).sum::<usize>() as f64 / 300.0;
    ensure(purity >= 0.95, || format!("3-Gaussian purity {purity}"))?;
    Ok(format!("100 monotone traces, exact 1-D centroids, 3-Gaussian purity {purity:.3}"))
}

fn table(rows: &[&[u64]]) -> JointCountTable {
    let phones = (0..rows.len()).map(|i| format!("p{i}")).collect();
    JointCountTable::from_counts(phones, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn metric_goldens() -> Outcome {
    let pp = phone_purity(&table(&[&[3, 1], &[1, 3]])).map_err(|e| e.to_string())?;
    ensure(pp == 0.75, || format!("phone purity {pp}"))?;
    let diag = pnmi(&table(&[&[5, 0, 0], &[0, 3, 0], &[0, 0, 2]])).map_err(|e| e.to_string())?;
    ensure((diag - 1.0).abs() <= 1e-12, || format!("diagonal pnmi {diag}"))?;
    // rows proportional to each other: symbol and code independent
    let prod = pnmi(&table(&[&[1, 2, 3], &[2, 4, 6]])).map_err(|e| e.to_string())?;
    ensure(prod.abs() <= 1e-12, || format!("product pnmi {prod}"))?;

    // clusters {0, 2} and {10, 12}: scatter 1 each, centroid distance 10
    let hand = Matrix::from_vec(4, 1, vec![0.0, 2.0, 10.0, 12.0]).unwrap();
    let db = davies_bouldin::<f64>(&hand, &[0, 0, 1, 1], 2).map_err(|e| e.to_string())?;
    ensure((db - 0.2).abs() <= 1e-12, || format!("hand DB {db}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let (n, d, k) = (60, 3, 4);
        let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let codes: Vec<usize> = (0..n).map(|i| i % k).collect();
        let x = Matrix::from_vec(n, d, x).unwrap();
        let base = davies_bouldin::<f64>(&x, &codes, k).map_err(|e| e.to_string())?;
        let rot = random_rotation(&mut rng, d);
        let s = rng.random_range(0.1..10.0);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mut y = Vec::with_capacity(n * d);
        for row in x.iter_rows() {
            for i in 0..d {
                y.push(s * (0..d).map(|j| rot[i][j] * row[j]).sum::<f64>() + shift[i]);
            }
        }
        let moved =
            davies_bouldin::<f64>(&Matrix::from_vec(n, d, y).unwrap(), &codes, k).map_err(|e| e.to_string())?;
        ensure((moved - base).abs() <= 1e-9, || format!("trial {trial}: DB {base} became {moved}"))?;
        worst = worst.max((moved - base).abs());
    }
    Ok(format!("purity 0.75, pnmi 1/0, hand DB 0.2, similarity drift {worst:.1e}"))
}

fn random_rotation(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

fn normalization() -> Outcome {
    for (raw, want) in [("كتب الكتاب", "كتب لكتاب"), ("المعلم", "ءَلمعلم"), ("الرحمان", "ارحمان")] {
        let got = normalize_verbatim(raw).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("{raw} -> {got}, expected {want}"))?;
    }
    let alphabet: Vec<char> = "البتثجحخدذرزسشصضطظعغفقكلمنهويىآأؤإئءةچڤپگ  ،"
        .chars()
        .chain(['\u{064B}', '\u{064C}', '\u{064D}', '\u{064E}', '\u{064F}', '\u{0650}', '\u{0651}', '\u{0652}'])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for i in 0..1000 {
        let len = rng.random_range(0..40);
        let s: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        let once = normalize_verbatim(&s).map_err(|e| format!("fuzz {i} {s:?}: {e}"))?;
        let twice = normalize_verbatim(&once).map_err(|e| e.to_string())?;
        ensure(once == twice, || format!("fuzz {i}: {s:?} -> {once:?} -> {twice:?}"))?;
    }
    Ok("3 goldens byte-exact, 1000 fuzz strings idempotent".into())
}

fn cer_goldens() -> Outcome {
    let c = cer("قلم", "كلم").map_err(|e| e.to_string())?;
    ensure(c == 1.0 / 3.0, || format!("قلم/كلم = {c}"))?;
    ensure(cer("قلم", "قلم").map_err(|e| e.to_string())? == 0.0, || "identity".into())?;
    ensure(cer("قلم", "").map_err(|e| e.to_string())? == 1.0, || "empty hypothesis".into())?;

    let vocab = Vocabulary::default();
    let letters: Vec<char> = "بتجدرسشعفقكلمن ".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for batch in 0..50 {
        let n = rng.random_range(1..20);
        let mut refs = Vec::new();
        let mut hyps = Vec::new();
        let (mut edits, mut chars) = (0usize, 0usize);
        let mut weighted = 0.0;
        let text = |len: usize, rng: &mut ChaCha8Rng| -> String {
            (0..len).map(|_| letters[rng.random_range(0..letters.len())]).collect()
        };
        for u in 0..n {
            let r = text(rng.random_range(1..15), &mut rng);
            let h = text(rng.random_range(0..15), &mut rng);
            let (rc, hc): (Vec<char>, Vec<char>) = (r.chars().collect(), h.chars().collect());
            let e = levenshtein(&rc, &hc);
            edits += e;
            chars += rc.len();
            weighted += cer(&r, &h).map_err(|e| e.to_string())? * rc.len() as f64;
            refs.push(VerbatimTranscript::new(format!("u{u}"), r));
            hyps.push(VerbatimTranscript::new(format!("u{u}"), h));
        }
        let report = score_manifest(&refs, &hyps, None, false, &vocab).map_err(|e| e.to_string())?;
        let micro = edits as f64 / chars as f64;
        ensure((report.overall - micro).abs() <= 1e-12, || {
            format!("batch {batch}: overall {} vs micro {micro}", report.overall)
        })?;
        ensure((weighted / chars as f64 - micro).abs() <= 1e-12, || "length-weighted mean".into())?;
        ensure(report.edits == edits && report.n_ref_chars == chars, || format!("batch {batch}: tallies"))?;
    }
    Ok("1/3, 0, 1.0 exact; 50 random batches match the micro average".into())
}

fn overfit() -> Outcome {
    let k = 32;
    let data = coded_corpus(50, (40, 80), k, 4, 39, 7).map_err(|e| e.to_string())?;
    let samples: Vec<TrainSample<f32>> = data
        .iter()
        .enumerate()
        .map(|(i, u)| TrainSample {
            utt_id: format!("u{i}"),
            codes: Some(u.codes.clone()),
            embeddings: None,
            target: u.target.clone(),
        })
        .collect();
    let config = ModelConfig {
        variant: Variant::Discrete,
        k,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        lr: 1e-4,
        batch_size: 16,
        max_epochs: 20,
        ..TrainConfig::default()
    };
    let model = DvrModel::<f32>::new(config, 0).map_err(|e| e.to_string())?;
    let out = train(model, &samples, &[], &tc).map_err(|e| e.to_string())?;
    let (mut edits, mut chars) = (0, 0);
    for s in &samples {
        let lat = out.model.forward(&s.input()).map_err(|e| e.to_string())?;
        let best: Vec<usize> = lat
            .values()
            .iter_rows()
            .map(|r| (0..r.len()).max_by(|&a, &b| r[a].total_cmp(&r[b]).then(b.cmp(&a))).unwrap())
            .collect();
        edits += levenshtein(&s.target, &collapse(&best));
        chars += s.target.len();
    }
    let train_cer = edits as f64 / chars as f64;
    ensure(train_cer <= 0.02, || format!("training CER {train_cer:.4} after {} epochs", out.history.len()))?;
    Ok(format!("k={k}, {} epochs, training CER {train_cer:.4}", out.history.len()))
}

fn trend() -> Outcome {
    // several modes per class, so finer codebooks can resolve them
    let spec = CorpusSpec {
        n_classes: 12,
        modes_per_class: 4,
        dim: 8,
        n_utterances: 200,
        noise: 0.6,
        seed: 9,
        ..CorpusSpec::default()
    };
    let corpus = gaussian_corpus(&spec, "t").map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for u in &corpus.utterances {
        for (t, l) in u.labels.iter().enumerate() {
            if l != UNKNOWN_LABEL {
                rows.extend_from_slice(u.frames.row(t));
                labels.push(l.clone());
            }
        }
    }
    let frames = Matrix::from_vec(labels.len(), spec.dim, rows).unwrap();
    let mut pp = Vec::new();
    let mut mi = Vec::new();
    for k in [16, 32, 64] {
        let cb = train_codebook::<f32>(&frames, &KmeansParams { k, seed: 3, ..KmeansParams::default() })
            .map_err(|e| e.to_string())?;
        let mut t = JointCountTable::new(k);
        for (row, l) in frames.iter_rows().zip(&labels) {
            t.add(l, cb.nearest(row).0, 1);
        }
        pp.push(phone_purity(&t).map_err(|e| e.to_string())?);
        mi.push(pnmi(&t).map_err(|e| e.to_string())?);
    }
    for (name, series) in [("phone purity", &pp), ("PNMI", &mi)] {
        let dips: Vec<f64> = series.windows(2).map(|w| w[0] - w[1]).filter(|&d| d > 0.0).collect();
        ensure(dips.len() <= 1 && dips.iter().all(|&d| d <= 0.01), || format!("{name} over k=16,32,64: {series:?}"))?;
    }
    Ok(format!(
        "{} frames; phone purity {:.3}/{:.3}/{:.3}, PNMI {:.3}/{:.3}/{:.3}",
        labels.len(),
        pp[0],
        pp[1],
        pp[2],
        mi[0],
        mi[1],
        mi[2]
    ))
}

fn dsvr(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dsvr"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`dsvr {}` exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr))
    })
}

fn json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn number(v: &serde_json::Value, key: &str) -> Result<f64, String> {
    v.get(key).and_then(|x| x.as_f64()).filter(|x| x.is_finite()).ok_or_else(|| format!("report lacks numeric {key:?}"))
}

fn pipeline() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    dsvr(d, &["gen-fixture", "--out-dir", "fx", "--seed", "3"])?;
    dsvr(d, &["train-codebook", "--manifest", "fx/train.jsonl", "--k", "32", "--seed", "7", "--out", "cb.bin"])?;
    dsvr(d, &["quantize", "--manifest", "fx/train.jsonl", "--manifest", "fx/dev.jsonl", "--codebook", "cb.bin", "--out", "codes.tsv"])?;
    dsvr(d, &["eval-codebook", "--manifest", "fx/train.jsonl", "--codebook", "cb.bin", "--out", "metrics.json", "--mix-samples", "mix.tsv"])?;
    let m = json(&d.join("metrics.json"))?;
    for key in ["db_index", "phone_purity", "cluster_purity", "pnmi"] {
        number(&m, key)?;
    }
    ensure(m["k"] == 32, || "metrics report k".into())?;
    dsvr(
        d,
        &[
            "train-dvr", "--train", "fx/train.jsonl", "--dev", "fx/dev.jsonl", "--codes", "codes.tsv", "--k", "32",
            "--d-ff", "64", "--n-layers", "1", "--n-heads", "2", "--lr", "1e-3", "--max-epochs", "40", "--seed", "1",
            "--out", "model.bin", "--history", "history.csv",
        ],
    )?;
    dsvr(d, &["decode", "--manifest", "fx/dev.jsonl", "--model", "model.bin", "--codebook", "cb.bin", "--out", "hyp.tsv"])?;
    dsvr(d, &["score", "--refs", "fx/dev.refs.tsv", "--hyps", "hyp.tsv", "--out", "cer.json"])?;
    let s = json(&d.join("cer.json"))?;
    let overall = number(&s, "overall")?;
    ensure(s["mode"] == "with-vowels" && s["n_utts"] == 10, || format!("score report {s}"))?;
    ensure(s["per_group"].is_object(), || "score report per_group".into())?;
    Ok(format!("6 stages exit 0; metrics {m}; dev CER {overall:.3}"))
}

// ----------------------------------------------------------------- runner

fn main() {
    let criteria: [Criterion; 10] = [
        ("ctc-oracle-equivalence", Duration::from_secs(10), ctc_oracle),
        ("ctc-gradient", Duration::from_secs(30), ctc_gradient),
        ("model-gradient-check", Duration::from_secs(120), model_gradient),
        ("kmeans", Duration::from_secs(60), kmeans),
        ("metric-goldens", Duration::from_secs(60), metric_goldens),
        ("normalization-goldens", Duration::from_secs(60), normalization),
        ("cer-goldens", Duration::from_secs(60), cer_goldens),
        ("overfit-run", Duration::from_secs(300), overfit),
        ("codebook-size-trend", Duration::from_secs(120), trend),
        ("full-pipeline-smoke", Duration::from_secs(600), pipeline),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let result = result.and_then(|detail| {
            if start.elapsed() <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {secs:.1}s, budget {}s", budget.as_secs()))
            }
        });
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
