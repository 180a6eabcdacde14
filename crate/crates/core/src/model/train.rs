use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::TrainConfig;
use super::network::{DvrModel, ModelInput};
use super::params::ParamStore;
use crate::ctc::{ctc_greedy_decode, ctc_loss, min_frames};
use crate::error::{Error, Result};
use crate::eval::edit_distance;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// One training or evaluation utterance with its encoded target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T> {
    pub utt_id: String,
    pub codes: Option<Vec<usize>>,
    pub embeddings: Option<Matrix<T>>,
    pub target: Vec<usize>,
}

impl<T: Scalar> TrainSample<T> {
    pub fn input(&self) -> ModelInput<'_, T> {
        ModelInput {
            codes: self.codes.as_deref(),
            embeddings: self.embeddings.as_ref(),
        }
    }

    pub fn frames(&self) -> usize {
        self.codes
            .as_ref()
            .map(Vec::len)
            .or(self.embeddings.as_ref().map(Matrix::rows))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_cer: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the lowest dev loss.
    pub model: DvrModel<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Utterances dropped for violating the CTC length precondition.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub cer: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, epoch: usize, item: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ epoch as u64) ^ item as u64)
}

fn alignable<T: Scalar>(samples: &[TrainSample<T>], what: &str, skipped: &mut Vec<String>) -> Vec<usize> {
    let mut keep = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if min_frames(&s.target) > s.frames() {
            log::warn!(
                "skipping {what} utterance {}: {} frames cannot carry {} labels",
                s.utt_id,
                s.frames(),
                s.target.len()
            );
            skipped.push(s.utt_id.clone());
        } else {
            keep.push(i);
        }
    }
    keep
}

/// Mean CTC loss and micro-averaged greedy CER in evaluation mode.
pub fn evaluate<T: Scalar>(model: &DvrModel<T>, samples: &[TrainSample<T>]) -> Result<Evaluation> {
    let per: Vec<(f64, usize, usize)> = samples
        .par_iter()
        .map(|s| {
            let lattice = model.forward(&s.input())?;
            let loss = ctc_loss(&lattice, &s.target)?.loss;
            let hyp = ctc_greedy_decode(&lattice);
            Ok((loss, edit_distance(&s.target, &hyp), s.target.len()))
        })
        .collect::<Result<_>>()?;
    let finite: Vec<f64> = per.iter().map(|p| p.0).filter(|l| l.is_finite()).collect();
    let loss = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let edits: usize = per.iter().map(|p| p.1).sum();
    let chars: usize = per.iter().map(|p| p.2).sum();
    Ok(Evaluation {
        loss,
        cer: if chars == 0 { f64::NAN } else { edits as f64 / chars as f64 },
    })
}

/// Mean loss of a batch and its gradient, reduced in item order so the
/// result does not depend on the thread count.
fn batch_gradient<T: Scalar>(
    model: &DvrModel<T>,
    batch: &[(usize, &TrainSample<T>)],
    seed: u64,
    epoch: usize,
    grads: &mut ParamStore<T>,
    scratch: &mut Vec<ParamStore<T>>,
) -> Result<Option<f64>> {
    grads.fill_zero();
    let lanes = rayon::current_num_threads().max(1);
    while scratch.len() < lanes.min(batch.len()) {
        scratch.push(model.params().zeros_like());
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in batch.chunks(lanes) {
        let losses: Vec<Result<Option<f64>>> = scratch[..chunk.len()]
            .par_iter_mut()
            .zip(chunk.par_iter())
            .map(|(g, &(idx, s))| {
                g.fill_zero();
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch, idx));
                model.loss_and_grad(&s.input(), &s.target, T::one(), Some(&mut rng), g)
            })
            .collect();
        for (g, loss) in scratch.iter().zip(losses) {
            match loss? {
                Some(l) => {
                    grads.add_assign(g);
                    total += l;
                    n += 1;
                }
                None => log::warn!("utterance with no finite alignment left out of the batch"),
            }
        }
    }
    if n == 0 {
        return Ok(None);
    }
    grads.scale(T::of(1.0 / n as f64));
    Ok(Some(total / n as f64))
}

/// Adam on the mean per-utterance CTC loss with early stopping on the dev
/// loss. Without a dev set the training set is evaluated instead.
pub fn train<T: Scalar>(
    mut model: DvrModel<T>,
    train_set: &[TrainSample<T>],
    dev_set: &[TrainSample<T>],
    tc: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    tc.validate()?;
    let mut skipped = Vec::new();
    let train_idx = alignable(train_set, "training", &mut skipped);
    if train_idx.is_empty() {
        return Err(Error::EmptyTraining(format!(
            "all {} training utterances were skipped",
            train_set.len()
        )));
    }
    let dev_idx = alignable(dev_set, "dev", &mut skipped);
    let monitor: Vec<TrainSample<T>> = if dev_idx.is_empty() {
        if !dev_set.is_empty() {
            log::warn!("no usable dev utterances; monitoring the training set");
        }
        train_idx.iter().map(|&i| train_set[i].clone()).collect()
    } else {
        dev_idx.iter().map(|&i| dev_set[i].clone()).collect()
    };

    let mut adam = Adam::new(model.params());
    let mut grads = model.params().zeros_like();
    let mut scratch = Vec::new();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut stale = 0;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(splitmix(tc.seed));

    for epoch in 1..=tc.max_epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_items = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let items: Vec<(usize, &TrainSample<T>)> = batch.iter().map(|&i| (i, &train_set[i])).collect();
            let Some(loss) = batch_gradient(&model, &items, tc.seed, epoch, &mut grads, &mut scratch)? else {
                continue;
            };
            epoch_loss += loss * items.len() as f64;
            epoch_items += items.len();
            if let Some(clip) = tc.grad_clip {
                let norm = grads.norm();
                if norm > clip {
                    grads.scale(T::of(clip / norm));
                }
            }
            adam.step(model.params_mut(), &grads, tc.lr);
        }
        if !model.params().all_finite() {
            return Err(Error::DegenerateData(format!("parameters diverged in epoch {epoch}")));
        }
        let eval = evaluate(&model, &monitor)?;
        let record = EpochRecord {
            epoch,
            train_loss: if epoch_items == 0 { f64::NAN } else { epoch_loss / epoch_items as f64 },
            dev_loss: eval.loss,
            dev_cer: eval.cer,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, dev loss {:.4}, dev CER {:.4}",
            record.train_loss,
            record.dev_loss,
            record.dev_cer
        );
        history.push(record);
        if eval.loss < best.0 {
            best = (eval.loss, epoch, model.params().clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= tc.early_stop_patience {
                log::info!("no dev improvement for {stale} epochs; stopping");
                break;
            }
        }
    }
    let (_, best_epoch, params) = best;
    let model = if best_epoch == 0 {
        model
    } else {
        DvrModel::from_parts(model.config().clone(), params)?
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        skipped,
    })
}

/// CSV with columns epoch, train_loss, dev_loss, dev_cer.
pub fn write_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,train_loss,dev_loss,dev_cer").map_err(io)?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.dev_loss, r.dev_cer).map_err(io)?;
    }
    w.flush().map_err(io)
}
