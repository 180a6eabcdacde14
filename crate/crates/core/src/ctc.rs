//! Connectionist temporal classification: loss, gradient and decoding.
//!
//! All recursions run in log space in `f64` regardless of the lattice type.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// `T x V` matrix of per-frame log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbLattice<T> {
    values: Matrix<T>,
    blank_id: usize,
}

/// Stable `ln(e^a + e^b)`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + xs.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

impl<T: Scalar> LogProbLattice<T> {
    /// Wraps log-probabilities, checking that every row is normalised.
    pub fn new(values: Matrix<T>, blank_id: usize) -> Result<Self> {
        if values.rows() == 0 {
            return Err(Error::Validation("lattice needs at least one frame".into()));
        }
        if blank_id >= values.cols() {
            return Err(Error::Validation(format!(
                "blank id {blank_id} outside {} classes",
                values.cols()
            )));
        }
        let tol = (64.0 * T::epsilon().as_f64()).max(1e-6);
        for (t, row) in values.iter_rows().enumerate() {
            let z = log_sum_exp(row.iter().map(|x| x.as_f64()));
            if !(z.abs() <= tol) {
                return Err(Error::Validation(format!("lattice row {t} sums to e^{z}, not 1")));
            }
        }
        Ok(Self { values, blank_id })
    }

    /// Applies a row-wise log-softmax to unnormalised scores.
    pub fn from_logits(logits: &Matrix<T>, blank_id: usize) -> Result<Self> {
        let mut values = logits.clone();
        for t in 0..values.rows() {
            let row = values.row_mut(t);
            let z = T::of(log_sum_exp(row.iter().map(|x| x.as_f64())));
            row.iter_mut().for_each(|x| *x -= z);
        }
        Self::new(values, blank_id)
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn classes(&self) -> usize {
        self.values.cols()
    }

    pub fn blank_id(&self) -> usize {
        self.blank_id
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    #[inline]
    fn lp(&self, t: usize, k: usize) -> f64 {
        self.values.get(t, k).as_f64()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtcResult<T> {
    /// Negative log-likelihood of the target; `+inf` when no alignment fits.
    pub loss: f64,
    /// Derivative of the loss with respect to each log-probability entry.
    pub grad: Matrix<T>,
    /// Derivative with respect to pre-softmax scores, `softmax - posterior`.
    pub grad_logits: Matrix<T>,
    pub infinite: bool,
}

impl<T: Scalar> CtcResult<T> {
    fn infinite(frames: usize, classes: usize) -> Self {
        Self {
            loss: f64::INFINITY,
            grad: Matrix::zeros(frames, classes),
            grad_logits: Matrix::zeros(frames, classes),
            infinite: true,
        }
    }
}

/// Minimum frames needed to emit `target`: one per label plus a blank
/// between each adjacent repeat.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_target<T: Scalar>(lattice: &LogProbLattice<T>, target: &[usize]) -> Result<()> {
    for (i, &k) in target.iter().enumerate() {
        if k == lattice.blank_id {
            return Err(Error::Validation(format!("target position {i} is the blank")));
        }
        if k >= lattice.classes() {
            return Err(Error::Validation(format!(
                "target id {k} at position {i} outside {} classes",
                lattice.classes()
            )));
        }
    }
    Ok(())
}

/// CTC loss and gradient by the forward-backward recursions.
pub fn ctc_loss<T: Scalar>(lattice: &LogProbLattice<T>, target: &[usize]) -> Result<CtcResult<T>> {
    check_target(lattice, target)?;
    let (n_t, n_v) = (lattice.frames(), lattice.classes());
    if min_frames(target) > n_t {
        return Ok(CtcResult::infinite(n_t, n_v));
    }
    let blank = lattice.blank_id;
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&k| [k, blank]))
        .collect();
    let s_len = ext.len();
    let skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let neg = f64::NEG_INFINITY;

    let mut alpha = vec![neg; n_t * s_len];
    alpha[0] = lattice.lp(0, blank);
    if s_len > 1 {
        alpha[1] = lattice.lp(0, ext[1]);
    }
    for t in 1..n_t {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = a + lattice.lp(t, ext[s]);
        }
    }
    let last = (n_t - 1) * s_len;
    let log_z = if s_len > 1 {
        log_add(alpha[last + s_len - 1], alpha[last + s_len - 2])
    } else {
        alpha[last]
    };
    if log_z == neg {
        return Ok(CtcResult::infinite(n_t, n_v));
    }

    let mut beta = vec![neg; n_t * s_len];
    beta[last + s_len - 1] = lattice.lp(n_t - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[last + s_len - 2] = lattice.lp(n_t - 1, ext[s_len - 2]);
    }
    for t in (0..n_t - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        for s in 0..s_len {
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            cur[s] = b + lattice.lp(t, ext[s]);
        }
    }

    let mut grad = Matrix::zeros(n_t, n_v);
    let mut grad_logits = Matrix::zeros(n_t, n_v);
    let mut occupancy = vec![0.0f64; n_v];
    for t in 0..n_t {
        occupancy.iter_mut().for_each(|g| *g = 0.0);
        for s in 0..s_len {
            let (a, b) = (alpha[t * s_len + s], beta[t * s_len + s]);
            if a == neg || b == neg {
                continue;
            }
            // alpha and beta both include the emission at (t, s)
            occupancy[ext[s]] += (a + b - lattice.lp(t, ext[s]) - log_z).exp();
        }
        for k in 0..n_v {
            grad.set(t, k, T::of(-occupancy[k]));
            grad_logits.set(t, k, T::of(lattice.lp(t, k).exp() - occupancy[k]));
        }
    }
    Ok(CtcResult {
        loss: -log_z,
        grad,
        grad_logits,
        infinite: false,
    })
}

fn argmax(row: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, x) in row.enumerate() {
        if x > best.1 {
            best = (k, x);
        }
    }
    best.0
}

/// Collapses a frame path: merges adjacent repeats, then drops blanks.
pub fn collapse(path: &[usize], blank_id: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank_id {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Best-path decoding; ties pick the lower class id.
pub fn ctc_greedy_decode<T: Scalar>(lattice: &LogProbLattice<T>) -> Vec<usize> {
    let path: Vec<usize> = lattice
        .values
        .iter_rows()
        .map(|r| argmax(r.iter().map(|x| x.as_f64())))
        .collect();
    collapse(&path, lattice.blank_id)
}

#[derive(Debug, Clone, Copy)]
struct PrefixScore {
    blank: f64,
    label: f64,
}

impl PrefixScore {
    const EMPTY: Self = Self {
        blank: f64::NEG_INFINITY,
        label: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// Prefix beam search returning the surviving hypotheses with their log
/// scores, best first. Prefixes reached by different paths are merged.
pub fn ctc_beam_search<T: Scalar>(lattice: &LogProbLattice<T>, beam: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    if beam < 1 {
        return Err(Error::Validation("beam width must be at least 1".into()));
    }
    let blank = lattice.blank_id;
    let mut hyps: Vec<(Vec<usize>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            label: f64::NEG_INFINITY,
        },
    )];
    for t in 0..lattice.frames() {
        let mut next: HashMap<Vec<usize>, PrefixScore> = HashMap::new();
        for (prefix, score) in &hyps {
            let total = score.total();
            let stay = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
            stay.blank = log_add(stay.blank, total + lattice.lp(t, blank));
            if let Some(&last) = prefix.last() {
                stay.label = log_add(stay.label, score.label + lattice.lp(t, last));
            }
            for k in 0..lattice.classes() {
                if k == blank {
                    continue;
                }
                // a repeat only extends the prefix after a blank
                let from = if prefix.last() == Some(&k) { score.blank } else { total };
                let mut grown = prefix.clone();
                grown.push(k);
                let entry = next.entry(grown).or_insert(PrefixScore::EMPTY);
                entry.label = log_add(entry.label, from + lattice.lp(t, k));
            }
        }
        let mut ranked: Vec<(Vec<usize>, PrefixScore)> = next.into_iter().collect();
        ranked.sort_by(|a, b| b.1.total().total_cmp(&a.1.total()).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(beam);
        hyps = ranked;
    }
    Ok(hyps.into_iter().map(|(p, s)| (p, s.total())).collect())
}

/// Most probable collapsed sequence found by prefix beam search.
pub fn ctc_beam_decode<T: Scalar>(lattice: &LogProbLattice<T>, beam: usize) -> Result<Vec<usize>> {
    Ok(ctc_beam_search(lattice, beam)?
        .into_iter()
        .next()
        .map(|(p, _)| p)
        .unwrap_or_default())
}
