use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feedforward width inside each encoder layer, as a multiple of the model
/// dimension.
pub const FFN_MULT: usize = 4;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Continuous embeddings only.
    Baseline,
    /// Codebook ids only.
    Discrete,
    /// Code embedding concatenated with the projected continuous embedding.
    Joint,
}

impl Variant {
    pub fn uses_codes(self) -> bool {
        matches!(self, Variant::Discrete | Variant::Joint)
    }

    pub fn uses_embeddings(self) -> bool {
        matches!(self, Variant::Baseline | Variant::Joint)
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Variant::Baseline => 0,
            Variant::Discrete => 1,
            Variant::Joint => 2,
        }
    }

    pub(crate) fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(Variant::Baseline),
            1 => Some(Variant::Discrete),
            2 => Some(Variant::Joint),
            _ => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "discrete" => Ok(Variant::Discrete),
            "joint" => Ok(Variant::Joint),
            _ => Err(Error::Validation(format!(
                "unknown variant {s:?}; expected baseline, discrete or joint"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Discrete => "discrete",
            Variant::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Codebook size.
    pub k: usize,
    /// Continuous embedding dimension.
    pub d_in: usize,
    /// Width of the code embedding and of the input projection.
    pub d_ff: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Discrete,
            k: 256,
            d_in: 1024,
            d_ff: 512,
            n_layers: 2,
            n_heads: 8,
            vocab_size: 39,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// Encoder width: `d_ff`, or `2 * d_ff` for the joint variant.
    pub fn d_model(&self) -> usize {
        match self.variant {
            Variant::Joint => 2 * self.d_ff,
            _ => self.d_ff,
        }
    }

    pub fn ffn_dim(&self) -> usize {
        FFN_MULT * self.d_model()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size must be at least 2, got {}", self.vocab_size));
        }
        if self.d_ff == 0 || self.n_heads == 0 || self.n_layers == 0 {
            return bad("d_ff, n_heads and n_layers must be positive".into());
        }
        if !self.d_model().is_multiple_of(self.n_heads) {
            return bad(format!(
                "model dimension {} is not divisible by {} heads",
                self.d_model(),
                self.n_heads
            ));
        }
        if self.variant.uses_codes() && self.k < 2 {
            return bad(format!("codebook size must be at least 2, got {}", self.k));
        }
        if self.variant.uses_embeddings() && self.d_in == 0 {
            return bad("d_in must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Names and shapes of every trainable tensor, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model();
        let f = self.ffn_dim();
        let mut out = Vec::new();
        let mut push = |name: String, shape: &[usize]| out.push((name, shape.to_vec()));
        if self.variant.uses_codes() {
            push("code_embedding".into(), &[self.k, self.d_ff]);
        }
        if self.variant.uses_embeddings() {
            push("input_proj.weight".into(), &[self.d_in, self.d_ff]);
            push("input_proj.bias".into(), &[self.d_ff]);
        }
        for l in 0..self.n_layers {
            let p = format!("layers.{l}");
            push(format!("{p}.ln1.gamma"), &[d]);
            push(format!("{p}.ln1.beta"), &[d]);
            for m in ["q", "k", "v", "o"] {
                push(format!("{p}.attn.w{m}"), &[d, d]);
                push(format!("{p}.attn.b{m}"), &[d]);
            }
            push(format!("{p}.ln2.gamma"), &[d]);
            push(format!("{p}.ln2.beta"), &[d]);
            push(format!("{p}.ffn.w1"), &[d, f]);
            push(format!("{p}.ffn.b1"), &[f]);
            push(format!("{p}.ffn.w2"), &[f, d]);
            push(format!("{p}.ffn.b2"), &[d]);
        }
        push("final_ln.gamma".into(), &[d]);
        push("final_ln.beta".into(), &[d]);
        push("head.weight".into(), &[d, self.vocab_size]);
        push("head.bias".into(), &[self.vocab_size]);
        out
    }

    /// Trainable scalar count, without allocating the model.
    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev-loss improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Global gradient-norm bound.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 16,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Validation(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::Validation("early_stop_patience must be at least 1".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::Validation(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_counts() {
        let discrete = ModelConfig::default();
        assert_eq!(discrete.d_model(), 512);
        assert_eq!(discrete.parameter_count(), 6_456_871);
        let joint = ModelConfig {
            variant: Variant::Joint,
            ..ModelConfig::default()
        };
        assert_eq!(joint.d_model(), 1024);
        assert_eq!(joint.parameter_count(), 25_890_343);
        let baseline = ModelConfig {
            variant: Variant::Baseline,
            ..ModelConfig::default()
        };
        assert_eq!(baseline.parameter_count(), 6_850_599);
    }

    #[test]
    fn more_layers_more_parameters() {
        for variant in [Variant::Baseline, Variant::Discrete, Variant::Joint] {
            let a = ModelConfig {
                variant,
                ..ModelConfig::default()
            };
            let b = ModelConfig {
                n_layers: a.n_layers * 2,
                ..a.clone()
            };
            assert!(b.parameter_count() > a.parameter_count());
        }
    }

    #[test]
    fn validation() {
        let ok = ModelConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ModelConfig { n_heads: 7, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { vocab_size: 1, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { k: 1, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!("JOINT".parse::<Variant>().is_ok());
        assert!("hybrid".parse::<Variant>().is_err());
    }
}
