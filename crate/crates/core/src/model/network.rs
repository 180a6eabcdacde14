use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::{ModelConfig, LAYER_NORM_EPS};
use super::layers::{self, AttentionCache, NormCache};
use super::params::ParamStore;
use crate::ctc::{ctc_loss, LogProbLattice};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Inputs for one utterance; which fields are needed depends on the variant.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelInput<'a, T> {
    pub codes: Option<&'a [usize]>,
    pub embeddings: Option<&'a Matrix<T>>,
}

impl<'a, T> ModelInput<'a, T> {
    pub fn codes(codes: &'a [usize]) -> Self {
        Self {
            codes: Some(codes),
            embeddings: None,
        }
    }

    pub fn embeddings(embeddings: &'a Matrix<T>) -> Self {
        Self {
            codes: None,
            embeddings: Some(embeddings),
        }
    }

    pub fn joint(codes: &'a [usize], embeddings: &'a Matrix<T>) -> Self {
        Self {
            codes: Some(codes),
            embeddings: Some(embeddings),
        }
    }
}

/// Transformer encoder with a CTC output head.
#[derive(Debug, Clone, PartialEq)]
pub struct DvrModel<T> {
    config: ModelConfig,
    params: ParamStore<T>,
}

struct LayerCache<T> {
    ln1: NormCache<T>,
    h1: Vec<T>,
    attn: AttentionCache<T>,
    attn_out: Vec<T>,
    drop1: Option<Vec<T>>,
    ln2: NormCache<T>,
    h2: Vec<T>,
    pre_act: Vec<T>,
    act: Vec<T>,
    drop2: Option<Vec<T>>,
}

struct ForwardCache<T> {
    rows: usize,
    drop0: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    final_ln: NormCache<T>,
    top: Vec<T>,
}

fn dropout_mask<T: Scalar>(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, &s)| *v *= s);
    }
}

impl<T: Scalar> DvrModel<T> {
    /// Fresh model: Xavier-uniform weights, unit-normal code embeddings,
    /// zero biases, unit norm gains.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let shapes = config.parameter_shapes();
        let mut params = ParamStore::zeros(&shapes);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in params.tensors_mut() {
            if t.name.ends_with(".gamma") {
                t.data.iter_mut().for_each(|x| *x = T::one());
            } else if t.name == "code_embedding" {
                let normal = Normal::new(0.0, 1.0).expect("unit normal");
                t.data.iter_mut().for_each(|x| *x = T::of(normal.sample(&mut rng)));
            } else if t.shape.len() == 2 {
                let bound = (6.0 / (t.shape[0] + t.shape[1]) as f64).sqrt();
                let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                t.data.iter_mut().for_each(|x| *x = T::of(u.sample(&mut rng)));
            }
        }
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let want = config.parameter_shapes();
        if want.len() != params.tensors().len() {
            return Err(Error::Validation(format!(
                "config expects {} tensors, got {}",
                want.len(),
                params.tensors().len()
            )));
        }
        for (name, shape) in &want {
            match params.tensor(name) {
                Some(t) if &t.shape == shape => {}
                Some(t) => {
                    return Err(Error::Validation(format!(
                        "tensor {name} has shape {:?}, config expects {shape:?}",
                        t.shape
                    )))
                }
                None => return Err(Error::Validation(format!("missing tensor {name}"))),
            }
        }
        if !params.all_finite() {
            return Err(Error::Validation("model parameters contain non-finite values".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn count_parameters(&self) -> usize {
        self.params.count()
    }

    /// Checks the inputs and returns the frame count.
    fn frames(&self, input: &ModelInput<'_, T>) -> Result<usize> {
        let c = &self.config;
        let codes = match (c.variant.uses_codes(), input.codes) {
            (true, None) => return Err(Error::Validation(format!("{} model needs code ids", c.variant))),
            (true, Some(codes)) => {
                if let Some(&bad) = codes.iter().find(|&&x| x >= c.k) {
                    return Err(Error::Validation(format!("code {bad} outside codebook of {}", c.k)));
                }
                Some(codes.len())
            }
            (false, _) => None,
        };
        let emb = match (c.variant.uses_embeddings(), input.embeddings) {
            (true, None) => return Err(Error::Validation(format!("{} model needs embeddings", c.variant))),
            (true, Some(e)) => {
                if e.cols() != c.d_in {
                    return Err(Error::Validation(format!(
                        "embeddings have dimension {}, model expects {}",
                        e.cols(),
                        c.d_in
                    )));
                }
                if !e.all_finite() {
                    return Err(Error::Validation("embeddings contain non-finite values".into()));
                }
                Some(e.rows())
            }
            // a discrete model ignores any embeddings it is given
            (false, _) => None,
        };
        let rows = match (codes, emb) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Validation(format!("{a} codes against {b} embedding frames")))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!("every variant uses some input"),
        };
        if rows == 0 {
            return Err(Error::Validation("input has no frames".into()));
        }
        Ok(rows)
    }

    fn embed(&self, input: &ModelInput<'_, T>, rows: usize) -> Vec<T> {
        let c = &self.config;
        let d = c.d_model();
        let mut x = vec![T::zero(); rows * d];
        let mut col = 0;
        if let Some(codes) = input.codes.filter(|_| c.variant.uses_codes()) {
            let table = self.params.get("code_embedding");
            let block: Vec<T> = codes
                .iter()
                .flat_map(|&code| table[code * c.d_ff..(code + 1) * c.d_ff].iter().copied())
                .collect();
            layers::put_cols(&mut x, d, 0, c.d_ff, &block);
            col = c.d_ff;
        }
        if let Some(e) = input.embeddings.filter(|_| c.variant.uses_embeddings()) {
            let proj = layers::linear(
                e.as_slice(),
                rows,
                self.params.get("input_proj.weight"),
                self.params.get("input_proj.bias"),
                c.d_in,
                c.d_ff,
            );
            layers::put_cols(&mut x, d, col, c.d_ff, &proj);
        }
        let pe = layers::positional_encoding::<T>(rows, d);
        x.iter_mut().zip(&pe).for_each(|(v, &p)| *v += p);
        x
    }

    fn forward_cached(&self, input: &ModelInput<'_, T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Vec<T>, ForwardCache<T>)> {
        let rows = self.frames(input)?;
        let c = &self.config;
        let (d, f, heads) = (c.d_model(), c.ffn_dim(), c.n_heads);
        let p = &self.params;
        let mut mask = |n: usize| -> Option<Vec<T>> {
            match rng.as_deref_mut() {
                Some(r) if c.dropout > 0.0 => Some(dropout_mask(n, c.dropout, r)),
                _ => None,
            }
        };
        let mut x = self.embed(input, rows);
        let drop0 = mask(x.len());
        apply_mask(&mut x, &drop0);

        let mut caches = Vec::with_capacity(c.n_layers);
        for l in 0..c.n_layers {
            let name = |s: &str| format!("layers.{l}.{s}");
            let (h1, ln1) = layers::layer_norm(&x, d, p.get(&name("ln1.gamma")), p.get(&name("ln1.beta")), LAYER_NORM_EPS);
            let proj = |m: &str| layers::linear(&h1, rows, p.get(&name(&format!("attn.w{m}"))), p.get(&name(&format!("attn.b{m}"))), d, d);
            let (ctx, attn) = layers::attention(proj("q"), proj("k"), proj("v"), rows, d, heads);
            let mut a = layers::linear(&ctx, rows, p.get(&name("attn.wo")), p.get(&name("attn.bo")), d, d);
            let drop1 = mask(a.len());
            apply_mask(&mut a, &drop1);
            x.iter_mut().zip(&a).for_each(|(v, &u)| *v += u);

            let (h2, ln2) = layers::layer_norm(&x, d, p.get(&name("ln2.gamma")), p.get(&name("ln2.beta")), LAYER_NORM_EPS);
            let pre_act = layers::linear(&h2, rows, p.get(&name("ffn.w1")), p.get(&name("ffn.b1")), d, f);
            let act: Vec<T> = pre_act.iter().map(|&v| layers::gelu(v)).collect();
            let mut out = layers::linear(&act, rows, p.get(&name("ffn.w2")), p.get(&name("ffn.b2")), f, d);
            let drop2 = mask(out.len());
            apply_mask(&mut out, &drop2);
            x.iter_mut().zip(&out).for_each(|(v, &u)| *v += u);

            caches.push(LayerCache {
                ln1,
                h1,
                attn,
                attn_out: ctx,
                drop1,
                ln2,
                h2,
                pre_act,
                act,
                drop2,
            });
        }
        let (top, final_ln) = layers::layer_norm(&x, d, p.get("final_ln.gamma"), p.get("final_ln.beta"), LAYER_NORM_EPS);
        let mut out = layers::linear(&top, rows, p.get("head.weight"), p.get("head.bias"), d, c.vocab_size);
        layers::log_softmax_rows(&mut out, c.vocab_size);
        Ok((
            out,
            ForwardCache {
                rows,
                drop0,
                layers: caches,
                final_ln,
                top,
            },
        ))
    }

    /// Evaluation-mode forward pass: dropout off, one log-probability row
    /// per input frame.
    pub fn forward(&self, input: &ModelInput<'_, T>) -> Result<LogProbLattice<T>> {
        let (out, cache) = self.forward_cached(input, None)?;
        LogProbLattice::new(Matrix::from_vec(cache.rows, self.config.vocab_size, out)?, 0)
    }

    /// Training-mode forward pass with dropout masks drawn from `rng`.
    pub fn forward_train(&self, input: &ModelInput<'_, T>, rng: &mut ChaCha8Rng) -> Result<LogProbLattice<T>> {
        let (out, cache) = self.forward_cached(input, Some(rng))?;
        LogProbLattice::new(Matrix::from_vec(cache.rows, self.config.vocab_size, out)?, 0)
    }

    /// CTC loss of one utterance and its gradient, added to `grads` after
    /// multiplying by `weight`. Returns `None` without touching `grads` when
    /// the target cannot be aligned.
    ///
    /// With `rng` the pass runs in training mode.
    pub fn loss_and_grad(
        &self,
        input: &ModelInput<'_, T>,
        target: &[usize],
        weight: T,
        rng: Option<&mut ChaCha8Rng>,
        grads: &mut ParamStore<T>,
    ) -> Result<Option<f64>> {
        let (out, cache) = self.forward_cached(input, rng)?;
        let c = &self.config;
        let lattice = LogProbLattice::new(Matrix::from_vec(cache.rows, c.vocab_size, out)?, 0)?;
        let res = ctc_loss(&lattice, target)?;
        if res.infinite {
            return Ok(None);
        }
        let mut dlogits = res.grad_logits.into_vec();
        dlogits.iter_mut().for_each(|g| *g *= weight);
        self.backward(input, &cache, &dlogits, grads);
        Ok(Some(res.loss))
    }

    fn backward(&self, input: &ModelInput<'_, T>, cache: &ForwardCache<T>, dlogits: &[T], g: &mut ParamStore<T>) {
        let c = &self.config;
        let (rows, d, f, heads) = (cache.rows, c.d_model(), c.ffn_dim(), c.n_heads);
        let p = &self.params;

        let dtop = linear_grads(g, p, "head.weight", "head.bias", &cache.top, dlogits, rows, d, c.vocab_size);

        let mut dx = norm_backward(g, p, "final_ln", &dtop, d, &cache.final_ln);

        for l in (0..c.n_layers).rev() {
            let lc = &cache.layers[l];
            let name = |s: &str| format!("layers.{l}.{s}");

            // feedforward branch
            let mut dout = dx.clone();
            apply_mask(&mut dout, &lc.drop2);
            let mut dact = linear_grads(g, p, &name("ffn.w2"), &name("ffn.b2"), &lc.act, &dout, rows, f, d);
            dact.iter_mut().zip(&lc.pre_act).for_each(|(gr, &v)| *gr *= layers::gelu_grad(v));
            let dh2 = linear_grads(g, p, &name("ffn.w1"), &name("ffn.b1"), &lc.h2, &dact, rows, d, f);
            let dres = norm_backward(g, p, &name("ln2"), &dh2, d, &lc.ln2);
            dx.iter_mut().zip(&dres).for_each(|(a, &b)| *a += b);

            // attention branch
            let mut da = dx.clone();
            apply_mask(&mut da, &lc.drop1);
            let dctx = linear_grads(g, p, &name("attn.wo"), &name("attn.bo"), &lc.attn_out, &da, rows, d, d);
            let (dq, dk, dv) = layers::attention_backward(&dctx, &lc.attn, rows, d, heads);
            let mut dh1 = vec![T::zero(); rows * d];
            for (m, dm) in [("q", &dq), ("k", &dk), ("v", &dv)] {
                let part = linear_grads(g, p, &name(&format!("attn.w{m}")), &name(&format!("attn.b{m}")), &lc.h1, dm, rows, d, d);
                dh1.iter_mut().zip(&part).for_each(|(a, &b)| *a += b);
            }
            let dres = norm_backward(g, p, &name("ln1"), &dh1, d, &lc.ln1);
            dx.iter_mut().zip(&dres).for_each(|(a, &b)| *a += b);
        }

        apply_mask(&mut dx, &cache.drop0);
        let mut col = 0;
        if let Some(codes) = input.codes.filter(|_| c.variant.uses_codes()) {
            let table = g.get_mut("code_embedding");
            for (t, &code) in codes.iter().enumerate() {
                let src = &dx[t * d..t * d + c.d_ff];
                for (a, &b) in table[code * c.d_ff..(code + 1) * c.d_ff].iter_mut().zip(src) {
                    *a += b;
                }
            }
            col = c.d_ff;
        }
        if let Some(e) = input.embeddings.filter(|_| c.variant.uses_embeddings()) {
            let dproj = layers::take_cols(&dx, d, col, c.d_ff);
            let (dw, db) = g.pair_mut("input_proj.weight", "input_proj.bias");
            layers::linear_backward(e.as_slice(), &dproj, p.get("input_proj.weight"), rows, c.d_in, c.d_ff, dw, db, false);
        }
    }
}

/// Runs [`layers::linear_backward`] against named parameter and gradient
/// tensors and returns the input gradient.
#[allow(clippy::too_many_arguments)]
fn linear_grads<T: Scalar>(
    g: &mut ParamStore<T>,
    p: &ParamStore<T>,
    w: &str,
    b: &str,
    x: &[T],
    dy: &[T],
    rows: usize,
    n_in: usize,
    n_out: usize,
) -> Vec<T> {
    let (dw, db) = g.pair_mut(w, b);
    layers::linear_backward(x, dy, p.get(w), rows, n_in, n_out, dw, db, true).expect("input gradient requested")
}

fn norm_backward<T: Scalar>(g: &mut ParamStore<T>, p: &ParamStore<T>, prefix: &str, dy: &[T], d: usize, cache: &NormCache<T>) -> Vec<T> {
    let gamma_name = format!("{prefix}.gamma");
    let beta_name = format!("{prefix}.beta");
    let (dgamma, dbeta) = g.pair_mut(&gamma_name, &beta_name);
    layers::layer_norm_backward(dy, d, p.get(&gamma_name), cache, dgamma, dbeta)
}
